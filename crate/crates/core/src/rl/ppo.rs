//! PPO-clip with a diagonal Gaussian (box actions) or independent
//! categoricals (multi-discrete actions) and a separate value network.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::buffers::RolloutBuffer;
use super::env::{ActionMode, EnvSpec, Policy};
use super::gae::gae;
use super::mlp::Mlp;
use super::{first_violation, RlError};
use crate::model::CaseLabel;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoHyper {
    pub gamma: f64,
    pub learning_rate: f64,
    pub nminibatches: usize,
    pub n_steps: usize,
    pub ent_coef: f64,
    pub cliprange: f64,
    pub noptepochs: usize,
    pub lambda: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
}

impl PpoHyper {
    pub fn for_case(case: CaseLabel) -> Self {
        match case {
            CaseLabel::Simple => Self {
                gamma: 0.95,
                learning_rate: 7.410e-4,
                nminibatches: 2,
                n_steps: 672,
                ent_coef: 3.141e-3,
                cliprange: 0.3,
                noptepochs: 5,
                lambda: 0.95,
                ..Self::base()
            },
            CaseLabel::Complex => Self {
                gamma: 0.9,
                learning_rate: 3.843e-4,
                nminibatches: 2,
                n_steps: 256,
                ent_coef: 1.226e-6,
                cliprange: 0.3,
                noptepochs: 10,
                lambda: 0.8,
                ..Self::base()
            },
        }
    }

    fn base() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 3e-4,
            nminibatches: 4,
            n_steps: 128,
            ent_coef: 0.0,
            cliprange: 0.2,
            noptepochs: 4,
            lambda: 0.95,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let checks = [
            ("gamma", self.gamma > 0.0 && self.gamma <= 1.0),
            ("lambda", (0.0..=1.0).contains(&self.lambda)),
            ("cliprange", self.cliprange > 0.0),
            ("learning_rate", self.learning_rate > 0.0),
            ("nminibatches", self.nminibatches >= 1),
            ("n_steps", self.n_steps >= self.nminibatches),
            ("noptepochs", self.noptepochs >= 1),
            ("hidden", self.hidden >= 1),
        ];
        first_violation("PPO", &checks)
    }
}

/// A minibatch prepared for the surrogate.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub obs: Array2<f64>,
    pub actions: Vec<Vec<f64>>,
    pub old_logp: Vec<f64>,
    pub adv: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PpoStats {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub hyper: PpoHyper,
    pub spec: EnvSpec,
    pub policy: Mlp,
    /// Continuous mode only.
    pub log_std: Vec<f64>,
    pub value: Mlp,
    opt: Adam,
    rng: ChaCha8Rng,
}

/// Surrogate terms of one batch.
struct PolicyTerms {
    surrogate: f64,
    entropy: f64,
    clip_fraction: f64,
    /// d(surrogate + ent_coef * entropy) / d(policy output)
    d_out: Array2<f64>,
    d_log_std: Vec<f64>,
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

impl PpoAgent {
    pub fn new(spec: EnvSpec, hyper: PpoHyper, seed: u64) -> Result<Self, RlError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = match spec.mode {
            ActionMode::Continuous => spec.action_dim(),
            ActionMode::Discrete { tau } => spec.action_dim() * tau,
        };
        let h = hyper.hidden;
        let policy = Mlp::new(&[spec.obs_dim(), h, h, out], 0.01, &mut rng);
        let value = Mlp::new(&[spec.obs_dim(), h, h, 1], 1.0, &mut rng);
        let log_std = match spec.mode {
            ActionMode::Continuous => vec![0.0; spec.action_dim()],
            ActionMode::Discrete { .. } => Vec::new(),
        };
        let n = policy.num_params() + log_std.len() + value.num_params();
        Ok(Self { opt: Adam::new(n, hyper.learning_rate), hyper, spec, policy, log_std, value, rng })
    }

    pub fn from_parts(spec: EnvSpec, hyper: PpoHyper, policy: Mlp, log_std: Vec<f64>, value: Mlp, seed: u64) -> Self {
        let n = policy.num_params() + log_std.len() + value.num_params();
        Self { opt: Adam::new(n, hyper.learning_rate), hyper, spec, policy, log_std, value, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, RlError> {
        Ok(self.value.forward_one(obs)?[0])
    }

    /// Log-probability of `action` under the policy output `out` (one row).
    fn logp(&self, out: &[f64], action: &[f64]) -> f64 {
        match self.spec.mode {
            ActionMode::Continuous => out
                .iter()
                .zip(action)
                .zip(&self.log_std)
                .map(|((mu, a), ls)| {
                    let z = (a - mu) / ls.exp();
                    -0.5 * z * z - ls - 0.5 * LN_2PI
                })
                .sum(),
            ActionMode::Discrete { tau } => {
                out.chunks(tau).zip(action).map(|(logits, a)| log_softmax(logits)[*a as usize]).sum()
            }
        }
    }

    /// Stochastic action with its log-probability and the state value.
    pub fn act(&mut self, obs: &[f64]) -> Result<(Vec<f64>, f64, f64), RlError> {
        let out = self.policy.forward_one(obs)?;
        let action: Vec<f64> = match self.spec.mode {
            ActionMode::Continuous => out
                .iter()
                .zip(&self.log_std)
                .map(|(mu, ls)| {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    mu + ls.exp() * z
                })
                .collect(),
            ActionMode::Discrete { tau } => out
                .chunks(tau)
                .map(|logits| {
                    let lp = log_softmax(logits);
                    let u: f64 = self.rng.gen();
                    let mut acc = 0.0;
                    let mut pick = tau - 1;
                    for (k, l) in lp.iter().enumerate() {
                        acc += l.exp();
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    pick as f64
                })
                .collect(),
        };
        let logp = self.logp(&out, &action);
        Ok((action, logp, self.value_of(obs)?))
    }

    /// Log-probability of `action` under the current policy at `obs`.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64, RlError> {
        let out = self.policy.forward_one(obs)?;
        Ok(self.logp(&out, action))
    }

    /// Mean action (box) or most likely level per dimension.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        let out = self.policy.forward_one(obs)?;
        Ok(match self.spec.mode {
            ActionMode::Continuous => out,
            ActionMode::Discrete { tau } => out
                .chunks(tau)
                .map(|l| l.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, v)| if *v > b.1 { (k, *v) } else { b }).0 as f64)
                .collect(),
        })
    }

    fn policy_terms(&self, out: &Array2<f64>, batch: &PpoBatch) -> PolicyTerms {
        let n = batch.adv.len() as f64;
        let eps = self.hyper.cliprange;
        let ent = self.hyper.ent_coef;
        let mut d_out = Array2::zeros(out.dim());
        let mut d_log_std = vec![0.0; self.log_std.len()];
        let mut surrogate = 0.0;
        let mut entropy = 0.0;
        let mut clipped = 0usize;
        for (i, row) in out.axis_iter(Axis(0)).enumerate() {
            let row = row.to_vec();
            let a = &batch.actions[i];
            let adv = batch.adv[i];
            let ratio = (self.logp(&row, a) - batch.old_logp[i]).exp();
            let clip_r = ratio.clamp(1.0 - eps, 1.0 + eps);
            surrogate += (ratio * adv).min(clip_r * adv) / n;
            // the clipped branch is selected and flat: no gradient through this sample
            let flat = (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
            if flat {
                clipped += 1;
            }
            let g = if flat { 0.0 } else { ratio * adv / n };
            match self.spec.mode {
                ActionMode::Continuous => {
                    for (d, (mu, ls)) in row.iter().zip(&self.log_std).enumerate() {
                        let var = (2.0 * ls).exp();
                        let diff = a[d] - mu;
                        d_out[[i, d]] = g * diff / var;
                        d_log_std[d] += g * (diff * diff / var - 1.0);
                    }
                }
                ActionMode::Discrete { tau } => {
                    for (d, logits) in row.chunks(tau).enumerate() {
                        let lp = log_softmax(logits);
                        let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                        entropy += h / n;
                        for k in 0..tau {
                            let p = lp[k].exp();
                            let hit = if k == a[d] as usize { 1.0 } else { 0.0 };
                            d_out[[i, d * tau + k]] = g * (hit - p) + ent / n * (-p * (lp[k] + h));
                        }
                    }
                }
            }
        }
        if self.spec.mode == ActionMode::Continuous {
            entropy = self.log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum();
            for d in d_log_std.iter_mut() {
                *d += ent;
            }
        }
        PolicyTerms { surrogate, entropy, clip_fraction: clipped as f64 / n, d_out, d_log_std }
    }

    /// Clipped surrogate plus entropy bonus, the quantity PPO ascends.
    pub fn objective(&self, batch: &PpoBatch) -> Result<f64, RlError> {
        let out = self.policy.forward(batch.obs.view())?;
        let t = self.policy_terms(&out, batch);
        Ok(t.surrogate + self.hyper.ent_coef * t.entropy)
    }

    /// Gradient of [`Self::objective`] w.r.t. policy parameters then log-std.
    pub fn objective_grad(&self, batch: &PpoBatch) -> Result<Vec<f64>, RlError> {
        let cache = self.policy.forward_cached(batch.obs.view())?;
        let t = self.policy_terms(cache.output(), batch);
        let (g, _) = self.policy.backward(&cache, t.d_out.view())?;
        Ok(g.iter().chain(t.d_log_std.iter().copied()).collect())
    }

    /// One gradient step on a minibatch.
    pub fn train_minibatch(&mut self, batch: &PpoBatch) -> Result<PpoStats, RlError> {
        let cache = self.policy.forward_cached(batch.obs.view())?;
        let t = self.policy_terms(cache.output(), batch);
        let (mut gp, _) = self.policy.backward(&cache, (-&t.d_out).view())?;
        let mut gls: Vec<f64> = t.d_log_std.iter().map(|g| -g).collect();

        let vcache = self.value.forward_cached(batch.obs.view())?;
        let n = batch.returns.len() as f64;
        let v = vcache.output();
        let mut dv = Array2::zeros(v.dim());
        let mut value_loss = 0.0;
        for i in 0..batch.returns.len() {
            let e = v[[i, 0]] - batch.returns[i];
            value_loss += e * e / n;
            dv[[i, 0]] = self.hyper.vf_coef * 2.0 * e / n;
        }
        let (mut gv, _) = self.value.backward(&vcache, dv.view())?;

        let loss = -t.surrogate - self.hyper.ent_coef * t.entropy + self.hyper.vf_coef * value_loss;
        if !loss.is_finite() {
            return Err(RlError::Numerical(format!("PPO loss is {loss}")));
        }
        let norm = (gp.norm_sq() + gls.iter().map(|g| g * g).sum::<f64>() + gv.norm_sq()).sqrt();
        if norm > self.hyper.max_grad_norm {
            let k = self.hyper.max_grad_norm / norm;
            gp.scale(k);
            gv.scale(k);
            gls.iter_mut().for_each(|g| *g *= k);
        }
        let grads: Vec<f64> = gp.iter().chain(gls.iter().copied()).chain(gv.iter()).collect();
        let Self { policy, log_std, value, opt, .. } = self;
        opt.step(policy.params_mut().chain(log_std.iter_mut()).chain(value.params_mut()), grads.into_iter());
        Ok(PpoStats { surrogate: t.surrogate, value_loss, entropy: t.entropy, clip_fraction: t.clip_fraction })
    }

    /// Full PPO update over a filled rollout buffer. Rewards in the buffer
    /// are already scaled.
    pub fn update(&mut self, buf: &RolloutBuffer, bootstrap: f64) -> Result<PpoStats, RlError> {
        let n = buf.len();
        if n == 0 {
            return Err(RlError::Protocol("empty rollout".into()));
        }
        let (adv, ret) = gae(&buf.rewards, &buf.values, &buf.dones, bootstrap, self.hyper.gamma, self.hyper.lambda);
        let mut idx: Vec<usize> = (0..n).collect();
        let mb = n.div_ceil(self.hyper.nminibatches);
        let mut last = PpoStats::default();
        for _ in 0..self.hyper.noptepochs {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(mb) {
                let batch = make_batch(buf, chunk, &adv, &ret, true);
                last = self.train_minibatch(&batch)?;
            }
        }
        Ok(last)
    }
}

/// Gathers rows of a rollout; optionally normalises advantages to mean 0, std 1.
pub fn make_batch(buf: &RolloutBuffer, rows: &[usize], adv: &[f64], ret: &[f64], normalize: bool) -> PpoBatch {
    let d = buf.obs[0].len();
    let mut obs = Array2::zeros((rows.len(), d));
    for (r, &i) in rows.iter().enumerate() {
        for (c, v) in buf.obs[i].iter().enumerate() {
            obs[[r, c]] = *v;
        }
    }
    let mut a: Vec<f64> = rows.iter().map(|&i| adv[i]).collect();
    if normalize && a.len() > 1 {
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        a.iter_mut().for_each(|x| *x = (*x - mean) / (std + 1e-8));
    }
    PpoBatch {
        obs,
        actions: rows.iter().map(|&i| buf.actions[i].clone()).collect(),
        old_logp: rows.iter().map(|&i| buf.logprobs[i]).collect(),
        adv: a,
        returns: rows.iter().map(|&i| ret[i]).collect(),
    }
}

impl Policy for PpoAgent {
    fn act_eval(&mut self, obs: &[f64]) -> Vec<f64> {
        self.act_deterministic(obs).expect("observation width matches the policy")
    }
}
