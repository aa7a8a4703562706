//! TD3: twin critics, clipped target smoothing, delayed actor updates.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::buffers::{ReplayBuffer, Transition};
use super::env::{EnvSpec, Policy};
use super::mlp::Mlp;
use super::noise::{ActionNoise, NoiseType};
use super::RlError;
use crate::model::CaseLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Td3Hyper {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub train_freq: usize,
    pub gradient_steps: usize,
    pub noise_type: NoiseType,
    pub noise_std: f64,
    pub policy_delay: u64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub polyak: f64,
    pub learning_starts: usize,
    pub hidden: usize,
}

impl Td3Hyper {
    pub fn for_case(case: CaseLabel) -> Self {
        let base = Self {
            gamma: 0.9,
            learning_rate: 1e-3,
            batch_size: 100,
            buffer_size: 100_000,
            train_freq: 1,
            gradient_steps: 1,
            noise_type: NoiseType::Normal,
            noise_std: 0.1,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            polyak: 0.995,
            learning_starts: 100,
            hidden: 64,
        };
        match case {
            CaseLabel::Simple => Self {
                learning_rate: 7.551e-5,
                batch_size: 24,
                train_freq: 96,
                gradient_steps: 100,
                noise_type: NoiseType::OrnsteinUhlenbeck,
                noise_std: 0.337,
                ..base
            },
            CaseLabel::Complex => Self {
                learning_rate: 3.833e-4,
                batch_size: 100,
                train_freq: 2000,
                gradient_steps: 2000,
                noise_type: NoiseType::Normal,
                noise_std: 0.329,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let checks = [
            ("gamma", self.gamma > 0.0 && self.gamma <= 1.0),
            ("learning_rate", self.learning_rate > 0.0),
            ("batch_size", self.batch_size >= 1),
            ("buffer_size", self.buffer_size >= 1),
            ("train_freq", self.train_freq >= 1),
            ("policy_delay", self.policy_delay >= 1),
            ("polyak", (0.0..=1.0).contains(&self.polyak)),
            ("noise_std", self.noise_std >= 0.0),
            ("target_noise", self.target_noise >= 0.0),
            ("target_noise_clip", self.target_noise_clip >= 0.0),
            ("hidden", self.hidden >= 1),
        ];
        super::first_violation("TD3", &checks)
    }
}

/// Bellman target with the smaller of the two target critics.
pub fn td3_target(r: &[f64], done: &[bool], q1: &[f64], q2: &[f64], gamma: f64) -> Vec<f64> {
    (0..r.len())
        .map(|i| {
            let not_done = if done[i] { 0.0 } else { 1.0 };
            r[i] + gamma * not_done * q1[i].min(q2[i])
        })
        .collect()
}

/// Target-policy smoothing of one action component.
pub fn smoothed_action(mu: f64, eps: f64, clip: f64) -> f64 {
    (mu + eps.clamp(-clip, clip)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub hyper: Td3Hyper,
    pub spec: EnvSpec,
    pub actor: Mlp,
    pub actor_targ: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_targ: Mlp,
    pub q2_targ: Mlp,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    pub noise: ActionNoise,
    rng: ChaCha8Rng,
    pub critic_updates: u64,
    pub policy_updates: u64,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((flat.len() / width, width), flat).expect("rows have equal width")
}

impl Td3Agent {
    pub fn new(spec: EnvSpec, hyper: Td3Hyper, seed: u64) -> Result<Self, RlError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (o, a, h) = (spec.obs_dim(), spec.action_dim(), hyper.hidden);
        let actor = Mlp::new(&[o, h, h, a], 1.0, &mut rng);
        let q1 = Mlp::new(&[o + a, h, h, 1], 1.0, &mut rng);
        let q2 = Mlp::new(&[o + a, h, h, 1], 1.0, &mut rng);
        Ok(Self::assemble(spec, hyper, actor, q1, q2, rng))
    }

    pub fn from_parts(spec: EnvSpec, hyper: Td3Hyper, actor: Mlp, q1: Mlp, q2: Mlp, seed: u64) -> Self {
        Self::assemble(spec, hyper, actor, q1, q2, ChaCha8Rng::seed_from_u64(seed))
    }

    fn assemble(spec: EnvSpec, hyper: Td3Hyper, actor: Mlp, q1: Mlp, q2: Mlp, rng: ChaCha8Rng) -> Self {
        let lr = hyper.learning_rate;
        Self {
            noise: ActionNoise::new(hyper.noise_type, hyper.noise_std, spec.action_dim()),
            opt_actor: Adam::new(actor.num_params(), lr),
            opt_q1: Adam::new(q1.num_params(), lr),
            opt_q2: Adam::new(q2.num_params(), lr),
            actor_targ: actor.clone(),
            q1_targ: q1.clone(),
            q2_targ: q2.clone(),
            actor,
            q1,
            q2,
            hyper,
            spec,
            rng,
            critic_updates: 0,
            policy_updates: 0,
        }
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(self.actor.forward_one(obs)?.into_iter().map(f64::tanh).collect())
    }

    /// Deterministic action plus exploration noise, clipped to the box.
    pub fn act_explore(&mut self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        let mu = self.act_deterministic(obs)?;
        let eps = self.noise.sample(mu.len(), &mut self.rng);
        Ok(mu.iter().zip(eps).map(|(m, e)| (m + e).clamp(-1.0, 1.0)).collect())
    }

    pub fn act_uniform(&mut self) -> Vec<f64> {
        (0..self.spec.action_dim()).map(|_| self.rng.gen_range(-1.0..=1.0)).collect()
    }

    /// Runs `steps` critic updates on batches drawn from `rb`. Rewards in
    /// the buffer are multiplied by `reward_scale`.
    pub fn update(&mut self, rb: &ReplayBuffer, steps: usize, reward_scale: f64) -> Result<(), RlError> {
        if rb.is_empty() {
            return Err(RlError::Protocol("update with an empty replay buffer".into()));
        }
        for _ in 0..steps {
            let batch: Vec<Transition> = rb.sample(self.hyper.batch_size, &mut self.rng).into_iter().cloned().collect();
            self.update_batch(&batch, reward_scale)?;
        }
        Ok(())
    }

    /// One critic step and, every `policy_delay` critic steps, one actor
    /// step followed by the target updates.
    pub fn update_batch(&mut self, batch: &[Transition], reward_scale: f64) -> Result<(), RlError> {
        let (od, ad) = (self.spec.obs_dim(), self.spec.action_dim());
        let n = batch.len();
        let s = stack(batch.iter().map(|t| t.s.clone()), od);
        let s2 = stack(batch.iter().map(|t| t.s2.clone()), od);
        let sa = stack(batch.iter().map(|t| t.s.iter().chain(&t.a).copied().collect()), od + ad);
        let r: Vec<f64> = batch.iter().map(|t| t.r * reward_scale).collect();
        let d: Vec<bool> = batch.iter().map(|t| t.done).collect();

        let mu2 = self.actor_targ.forward(s2.view())?;
        let smooth = Normal::new(0.0, self.hyper.target_noise).map_err(|e| RlError::Config(e.to_string()))?;
        let mut s2a2 = Array2::zeros((n, od + ad));
        s2a2.slice_mut(s![.., ..od]).assign(&s2);
        for i in 0..n {
            for j in 0..ad {
                let eps = smooth.sample(&mut self.rng);
                s2a2[[i, od + j]] = smoothed_action(mu2[[i, j]].tanh(), eps, self.hyper.target_noise_clip);
            }
        }
        let q1t = self.q1_targ.forward(s2a2.view())?.column(0).to_vec();
        let q2t = self.q2_targ.forward(s2a2.view())?.column(0).to_vec();
        let y = td3_target(&r, &d, &q1t, &q2t, self.hyper.gamma);

        for (q, opt) in [(&mut self.q1, &mut self.opt_q1), (&mut self.q2, &mut self.opt_q2)] {
            let cache = q.forward_cached(sa.view())?;
            let out = cache.output();
            let mut dq = Array2::zeros((n, 1));
            let mut loss = 0.0;
            for i in 0..n {
                let e = out[[i, 0]] - y[i];
                loss += e * e / n as f64;
                dq[[i, 0]] = 2.0 * e / n as f64;
            }
            if !loss.is_finite() {
                return Err(RlError::Numerical(format!("critic loss is {loss}")));
            }
            let (g, _) = q.backward(&cache, dq.view())?;
            opt.step(q.params_mut(), g.iter());
        }
        self.critic_updates += 1;

        if self.critic_updates % self.hyper.policy_delay == 0 {
            let acache = self.actor.forward_cached(s.view())?;
            let mu = acache.output().mapv(f64::tanh);
            let mut x = Array2::zeros((n, od + ad));
            x.slice_mut(s![.., ..od]).assign(&s);
            x.slice_mut(s![.., od..]).assign(&mu);
            let qcache = self.q1.forward_cached(x.view())?;
            // ascend mean Q: upstream of the loss -mean(Q)
            let up = Array2::from_elem((n, 1), -1.0 / n as f64);
            let (_, dx) = self.q1.backward(&qcache, up.view())?;
            let dout = &dx.slice(s![.., od..]) * &mu.mapv(|m| 1.0 - m * m);
            let (g, _) = self.actor.backward(&acache, dout.view())?;
            self.opt_actor.step(self.actor.params_mut(), g.iter());
            let rho = self.hyper.polyak;
            self.actor_targ.polyak_from(&self.actor, rho);
            self.q1_targ.polyak_from(&self.q1, rho);
            self.q2_targ.polyak_from(&self.q2, rho);
            self.policy_updates += 1;
        }
        Ok(())
    }
}

impl Policy for Td3Agent {
    fn act_eval(&mut self, obs: &[f64]) -> Vec<f64> {
        self.act_deterministic(obs).expect("observation width matches the actor")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scenario;
    use crate::model::MesConfig;
    use proptest::prelude::{prop_assert, proptest};

    fn agent(seed: u64) -> Td3Agent {
        let cfg = MesConfig::preset("case1").unwrap();
        let data = Scenario::synthetic(&cfg, 1);
        let spec = EnvSpec::new(&cfg, &data, super::super::env::ActionMode::Continuous);
        let mut h = Td3Hyper::for_case(CaseLabel::Simple);
        h.hidden = 8;
        h.batch_size = 4;
        Td3Agent::new(spec, h, seed).unwrap()
    }

    fn buffer(n: usize, seed: u64) -> ReplayBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rb = ReplayBuffer::new(64);
        for i in 0..n {
            rb.push(Transition {
                s: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                a: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                r: rng.gen_range(-1.0..0.0),
                s2: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                done: i % 5 == 4,
            });
        }
        rb
    }

    #[test]
    fn target_matches_a_direct_evaluation_bit_for_bit() {
        let r = [-0.5, -1.25, 0.0, -0.1];
        let d = [false, true, false, false];
        let q1 = [2.0, 7.0, -3.5, 0.3];
        let q2 = [1.5, -9.0, -3.25, 0.30000000000000004];
        let y = td3_target(&r, &d, &q1, &q2, 0.9);
        let expect: [f64; 4] = [-0.5 + 0.9 * 1.5, -1.25, 0.9 * -3.5, -0.1 + 0.9 * 0.3];
        for (a, b) in y.iter().zip(expect) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn policy_updates_follow_the_delay() {
        let mut a = agent(1);
        let rb = buffer(20, 2);
        a.update(&rb, 4, 1.0).unwrap();
        assert_eq!((a.critic_updates, a.policy_updates), (4, 2));
        a.update(&rb, 3, 1.0).unwrap();
        assert_eq!((a.critic_updates, a.policy_updates), (7, 3));
    }

    #[test]
    fn targets_are_untouched_between_delayed_updates() {
        let mut a = agent(3);
        let rb = buffer(20, 4);
        let before = a.q1_targ.snapshot();
        a.update(&rb, 1, 1.0).unwrap();
        assert_eq!(a.q1_targ.snapshot(), before);
        a.update(&rb, 1, 1.0).unwrap();
        assert_ne!(a.q1_targ.snapshot(), before);
    }

    #[test]
    fn polyak_one_freezes_targets() {
        let mut a = agent(5);
        a.hyper.polyak = 1.0;
        let rb = buffer(20, 6);
        let before = (a.actor_targ.snapshot(), a.q2_targ.snapshot());
        a.update(&rb, 6, 1.0).unwrap();
        assert_eq!((a.actor_targ.snapshot(), a.q2_targ.snapshot()), before);
    }

    #[test]
    fn critic_regresses_toward_fixed_targets() {
        let mut a = agent(7);
        a.hyper.gamma = 1e-12;
        a.hyper.learning_rate = 1e-2;
        a.opt_q1 = Adam::new(a.q1.num_params(), 1e-2);
        let rb = buffer(8, 8);
        let mse = |a: &Td3Agent| {
            rb.iter()
                .map(|t| {
                    let x: Vec<f64> = t.s.iter().chain(&t.a).copied().collect();
                    (a.q1.forward_one(&x).unwrap()[0] - t.r).powi(2)
                })
                .sum::<f64>()
        };
        let before = mse(&a);
        a.hyper.batch_size = 8;
        a.update(&rb, 300, 1.0).unwrap();
        assert!(mse(&a) < 0.2 * before, "{} -> {}", before, mse(&a));
    }

    #[test]
    fn exploration_stays_in_the_box() {
        let mut a = agent(9);
        a.noise = ActionNoise::Normal { sigma: 5.0 };
        for _ in 0..50 {
            assert!(a.act_explore(&[0.0; 6]).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    proptest! {
        #[test]
        fn smoothing_stays_within_clip_and_box(mu in -1.0f64..1.0, eps in -10.0f64..10.0, c in 0.0f64..1.0) {
            let v = smoothed_action(mu, eps, c);
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert!((v - mu).abs() <= c + 1e-15);
        }

        #[test]
        fn target_is_at_most_the_larger_critic(r in -5.0f64..5.0, q1 in -5.0f64..5.0, q2 in -5.0f64..5.0, g in 0.0f64..1.0) {
            let y = td3_target(&[r], &[false], &[q1], &[q2], g)[0];
            prop_assert!(y <= r + g * q1.max(q2) + 1e-12);
        }
    }
}
