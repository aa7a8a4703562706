//! Episodic reset/step adapter over the plant simulator.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RlError;
use crate::data::Scenario;
use crate::model::{project_action, reward, Carrier, ControlAction, MesConfig, Observation, RewardWeights, SystemState};
use crate::plant::{observe, step, Controller, ExoSource, StepResult};

/// One week of 15-minute steps.
pub const EPISODE_LEN: usize = 672;
/// Action levels per dimension of the multi-discrete space.
pub const DEFAULT_TAU: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Continuous,
    Discrete { tau: usize },
}

/// Frozen min-max bounds for the six observation components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsBounds {
    pub lo: [f64; 6],
    pub hi: [f64; 6],
}

impl ObsBounds {
    pub fn from_scenario(cfg: &MesConfig, data: &Scenario, episode_len: usize) -> Self {
        let range = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        let (th_lo, th_hi) = range(&data.e_th);
        let (el_lo, el_hi) = range(&data.e_el);
        let (x_lo, x_hi) = range(&data.x_el);
        let cap = |kind: crate::model::AssetKind| -> f64 {
            cfg.assets.iter().filter(|a| a.kind == kind).map(|a| a.outputs[0].p_nom).sum()
        };
        let wind = cap(crate::model::AssetKind::Wind);
        let pv = cap(crate::model::AssetKind::Pv);
        // Loose bound on accumulated cost over one episode: buying the peak
        // electric load plus every electric consumer at the highest price and
        // running every gas-fired unit flat out; exporting all production.
        let mut el_consumers = el_hi;
        let mut gas_in = 0.0;
        let mut el_prod = wind + pv;
        for a in &cfg.assets {
            if a.is_storage() && a.outputs[0].carrier == Carrier::Electricity {
                el_consumers += a.p_rate();
                el_prod += a.p_rate();
            } else if a.is_converter() {
                let fuel: f64 = a.outputs.iter().enumerate().map(|(k, o)| o.p_nom / a.eta_nominal(k)).sum();
                match a.inputs[0] {
                    Carrier::NaturalGas => gas_in += fuel,
                    Carrier::Electricity => el_consumers += fuel,
                    Carrier::Heat => {}
                }
                el_prod += a.outputs.iter().filter(|o| o.carrier == Carrier::Electricity).map(|o| o.p_nom).sum::<f64>();
            }
        }
        let hours = episode_len as f64 * cfg.grid.dt_h();
        let c_hi = hours * (x_hi * el_consumers + cfg.gas_price * gas_in);
        let c_lo = -hours * x_hi * el_prod;
        Self {
            lo: [th_lo, el_lo, 0.0, 0.0, c_lo, x_lo],
            hi: [th_hi, el_hi, wind.max(1.0), pv.max(1.0), c_hi, x_hi],
        }
    }

    /// Maps each component to [-1, 1], clipping outside the frozen bounds.
    pub fn normalize(&self, obs: &Observation) -> Vec<f64> {
        obs.to_array()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let span = self.hi[i] - self.lo[i];
                if span > 0.0 {
                    (2.0 * (v - self.lo[i]) / span - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub bounds: ObsBounds,
    pub mode: ActionMode,
    pub episode_len: usize,
    pub reward_weights: RewardWeights,
    /// Agents multiply rewards by this before learning.
    pub reward_scale: f64,
    pub keys: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub p_min: Vec<f64>,
    pub storage: Vec<bool>,
}

impl EnvSpec {
    pub fn new(cfg: &MesConfig, data: &Scenario, mode: ActionMode) -> Self {
        let layout = cfg.action_layout();
        let w = cfg.reward_weights;
        Self {
            bounds: ObsBounds::from_scenario(cfg, data, EPISODE_LEN),
            mode,
            episode_len: EPISODE_LEN,
            reward_weights: w,
            // one step of a full heat-capacity deficit maps to -1
            reward_scale: 1.0 / (w.b * cfg.heat_capacity().max(1.0) * cfg.grid.dt_h()),
            keys: layout.iter().map(|d| d.key.clone()).collect(),
            lo: layout.iter().map(|d| d.lo()).collect(),
            hi: layout.iter().map(|d| d.p_nom).collect(),
            p_min: layout.iter().map(|d| d.p_min).collect(),
            storage: layout.iter().map(|d| d.storage).collect(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        6
    }

    pub fn action_dim(&self) -> usize {
        self.keys.len()
    }

    pub fn tau(&self) -> usize {
        match self.mode {
            ActionMode::Discrete { tau } => tau,
            ActionMode::Continuous => 0,
        }
    }

    /// Setpoint levels (W) of one discrete dimension: storages span
    /// [-rate, rate] evenly; converters get 0 plus τ-1 points from p_min to p_nom.
    pub fn levels(&self, d: usize) -> Vec<f64> {
        let tau = self.tau().max(2);
        let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                vec![b]
            } else {
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            }
        };
        if self.storage[d] {
            lin(self.lo[d], self.hi[d], tau)
        } else {
            let n = tau - 1;
            let first = if self.p_min[d] > 0.0 { self.p_min[d] } else { self.hi[d] / n as f64 };
            let mut v = vec![0.0];
            v.extend(lin(first, self.hi[d], n));
            v
        }
    }

    /// Raw agent output to setpoints: box actions in [-1, 1] are scaled to
    /// each dimension's range; discrete actions are level indices.
    pub fn to_control(&self, raw: &[f64]) -> Result<ControlAction, RlError> {
        if raw.len() != self.action_dim() {
            return Err(RlError::Shape(format!("action has {} entries, expected {}", raw.len(), self.action_dim())));
        }
        let mut a = ControlAction::default();
        for (d, key) in self.keys.iter().enumerate() {
            let v = match self.mode {
                ActionMode::Continuous => {
                    let u = if raw[d].is_finite() { raw[d].clamp(-1.0, 1.0) } else { 0.0 };
                    self.lo[d] + 0.5 * (u + 1.0) * (self.hi[d] - self.lo[d])
                }
                ActionMode::Discrete { .. } => {
                    let levels = self.levels(d);
                    let i = raw[d].round();
                    if !(i >= 0.0 && (i as usize) < levels.len()) {
                        return Err(RlError::Shape(format!("level {} out of range for `{key}`", raw[d])));
                    }
                    levels[i as usize]
                }
            };
            a.setpoints.insert(key.clone(), v);
        }
        Ok(a)
    }
}

#[derive(Debug, Clone)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub result: StepResult,
}

pub struct MesEnv {
    cfg: MesConfig,
    data: Arc<Scenario>,
    pub spec: EnvSpec,
    rng: ChaCha8Rng,
    state: Option<SystemState>,
    t: usize,
}

impl MesEnv {
    pub fn new(cfg: MesConfig, data: Arc<Scenario>, spec: EnvSpec, seed: u64) -> Self {
        Self { cfg, data, spec, rng: ChaCha8Rng::seed_from_u64(seed), state: None, t: 0 }
    }

    pub fn config(&self) -> &MesConfig {
        &self.cfg
    }

    pub fn data(&self) -> &Scenario {
        &self.data
    }

    /// Random week inside the training weeks, random SoC in [0.2, 0.8].
    pub fn reset(&mut self) -> Vec<f64> {
        let last = self.data.train_steps().saturating_sub(self.spec.episode_len).max(1);
        let start = self.rng.gen_range(0..last);
        let mut state = SystemState::initial(&self.cfg, start, 0.0);
        for s in self.cfg.storages() {
            let f: f64 = self.rng.gen_range(0.2..=0.8);
            state.soc.insert(s.id.clone(), f * s.e_nom);
        }
        self.begin(state)
    }

    pub fn reset_seeded(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset()
    }

    pub fn reset_at(&mut self, start: usize, soc_frac: f64) -> Vec<f64> {
        self.begin(SystemState::initial(&self.cfg, start, soc_frac))
    }

    fn begin(&mut self, mut state: SystemState) -> Vec<f64> {
        let exo = self.data.frame(state.cursor);
        observe(&mut state, &exo, &self.cfg);
        let obs = self.spec.bounds.normalize(&state.obs);
        self.state = Some(state);
        self.t = 0;
        obs
    }

    pub fn state(&self) -> Option<&SystemState> {
        self.state.as_ref()
    }

    pub fn step(&mut self, raw: &[f64]) -> Result<EnvStep, RlError> {
        let state = self.state.as_ref().ok_or_else(|| RlError::Protocol("step before reset".into()))?;
        if self.t >= self.spec.episode_len {
            return Err(RlError::Protocol("step after episode end".into()));
        }
        let exo = self.data.frame(state.cursor);
        let action = project_action(&self.spec.to_control(raw)?, &self.cfg).map_err(|e| RlError::Shape(e.to_string()))?;
        let result = step(state, &action, &exo, &self.cfg).map_err(|e| RlError::Protocol(e.to_string()))?;
        let r = reward(&result.loss, &self.cfg.reward_weights);
        let mut next = result.next.clone();
        if next.cursor < self.data.len() {
            let exo = self.data.frame(next.cursor);
            observe(&mut next, &exo, &self.cfg);
        }
        let obs = self.spec.bounds.normalize(&next.obs);
        self.state = Some(next);
        self.t += 1;
        Ok(EnvStep { obs, reward: r, done: self.t >= self.spec.episode_len, result })
    }
}

/// Anything that maps a normalised observation to a raw action.
pub trait Policy {
    fn act_eval(&mut self, obs: &[f64]) -> Vec<f64>;
}

/// Drives the plant from a policy, for use with `run_episode`.
pub struct PolicyController<'a, P: Policy + ?Sized> {
    pub spec: &'a EnvSpec,
    pub policy: &'a mut P,
}

impl<P: Policy + ?Sized> Controller for PolicyController<'_, P> {
    fn act(&mut self, state: &SystemState) -> ControlAction {
        let obs = self.spec.bounds.normalize(&state.obs);
        let raw = self.policy.act_eval(&obs);
        self.spec.to_control(&raw).expect("policy output matches the action layout")
    }
}

/// Uniform over the continuous action box.
pub struct RandomPolicy {
    pub dim: usize,
    pub rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act_eval(&mut self, _obs: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::stage_objective;

    fn setup(case: &str, mode: ActionMode) -> MesEnv {
        let cfg = MesConfig::preset(case).unwrap();
        let data = Arc::new(Scenario::synthetic(&cfg, 1));
        let spec = EnvSpec::new(&cfg, &data, mode);
        MesEnv::new(cfg, data, spec, 42)
    }

    #[test]
    fn action_dimensions_follow_the_case() {
        assert_eq!(setup("case1", ActionMode::Continuous).spec.action_dim(), 3);
        assert_eq!(setup("case2", ActionMode::Discrete { tau: 5 }).spec.action_dim(), 6);
    }

    #[test]
    fn same_seed_same_reset() {
        let mut a = setup("case2", ActionMode::Continuous);
        let mut b = setup("case2", ActionMode::Continuous);
        assert_eq!(a.reset_seeded(9), b.reset_seeded(9));
        assert_eq!(a.state(), b.state());
        let soc = &a.state().unwrap().soc;
        let cfg = a.config().clone();
        for s in cfg.storages() {
            let f = soc[&s.id] / s.e_nom;
            assert!((0.2..=0.8).contains(&f));
        }
    }

    #[test]
    fn step_before_reset_is_a_protocol_error() {
        let mut e = setup("case1", ActionMode::Continuous);
        assert!(matches!(e.step(&[0.0, 0.0, 0.0]), Err(RlError::Protocol(_))));
    }

    #[test]
    fn reward_is_the_negated_stage_objective() {
        let mut e = setup("case2", ActionMode::Continuous);
        e.reset_seeded(3);
        for _ in 0..20 {
            let s = e.step(&[0.3, -0.2, 0.9, 0.0, -1.0, 1.0]).unwrap();
            assert_eq!(s.reward, -stage_objective(&s.result.loss, &e.spec.reward_weights));
        }
    }

    #[test]
    fn doing_nothing_in_a_heated_week_always_costs() {
        let mut e = setup("case2", ActionMode::Discrete { tau: 5 });
        // week 2 is mid-winter; level 0 is "off" for converters, level 2 idles storages
        e.reset_at(2 * 672, 0.5);
        let idle = [0.0, 0.0, 0.0, 0.0, 2.0, 2.0];
        let mut done = false;
        while !done {
            let s = e.step(&idle).unwrap();
            assert!(s.reward < 0.0);
            done = s.done;
        }
        assert!(matches!(e.step(&idle), Err(RlError::Protocol(_))));
    }

    #[test]
    fn observations_are_normalised() {
        let mut e = setup("case1", ActionMode::Continuous);
        let mut obs = e.reset_seeded(1);
        for _ in 0..100 {
            assert!(obs.iter().all(|v| (-1.0..=1.0).contains(v)));
            obs = e.step(&[1.0, 1.0, -1.0]).unwrap().obs;
        }
    }

    #[test]
    fn discrete_levels() {
        let e = setup("case2", ActionMode::Discrete { tau: 5 });
        let spec = &e.spec;
        let boiler = spec.keys.iter().position(|k| k == "boiler").unwrap();
        assert_eq!(spec.levels(boiler), vec![0.0, 0.2e6, 0.8e6, 1.4e6, 2.0e6]);
        let bess = spec.keys.iter().position(|k| k == "bess").unwrap();
        assert_eq!(spec.levels(bess), vec![-0.5e6, -0.25e6, 0.0, 0.25e6, 0.5e6]);
        let two = EnvSpec { mode: ActionMode::Discrete { tau: 2 }, ..spec.clone() };
        assert_eq!(two.levels(boiler), vec![0.0, 2.0e6]);
    }
}
