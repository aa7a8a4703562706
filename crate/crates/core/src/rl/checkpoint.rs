//! Agent wrapper and versioned JSON checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::env::{ActionMode, EnvSpec, Policy, DEFAULT_TAU};
use super::mlp::{Mlp, MlpSnapshot};
use super::ppo::{PpoAgent, PpoHyper};
use super::td3::{Td3Agent, Td3Hyper};
use super::RlError;
use crate::model::CaseLabel;

pub const CHECKPOINT_FORMAT: &str = "mesbench-agent";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Ppo,
    Td3,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Td3 => "td3",
        }
    }

    /// PPO acts on a multi-discrete grid for the complex case; everything
    /// else uses the continuous box.
    pub fn action_mode(self, case: CaseLabel) -> ActionMode {
        match (self, case) {
            (Algo::Ppo, CaseLabel::Complex) => ActionMode::Discrete { tau: DEFAULT_TAU },
            _ => ActionMode::Continuous,
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = RlError;
    fn from_str(s: &str) -> Result<Self, RlError> {
        match s {
            "ppo" => Ok(Algo::Ppo),
            "td3" => Ok(Algo::Td3),
            other => Err(RlError::Config(format!("unknown algorithm `{other}` (expected ppo or td3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum AgentHyper {
    Ppo(PpoHyper),
    Td3(Td3Hyper),
}

impl AgentHyper {
    pub fn default_for(algo: Algo, case: CaseLabel) -> Self {
        match algo {
            Algo::Ppo => AgentHyper::Ppo(PpoHyper::for_case(case)),
            Algo::Td3 => AgentHyper::Td3(Td3Hyper::for_case(case)),
        }
    }

    pub fn algo(&self) -> Algo {
        match self {
            AgentHyper::Ppo(_) => Algo::Ppo,
            AgentHyper::Td3(_) => Algo::Td3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Agent {
    Ppo(PpoAgent),
    Td3(Td3Agent),
}

impl Agent {
    pub fn new(spec: EnvSpec, hyper: AgentHyper, seed: u64) -> Result<Self, RlError> {
        Ok(match hyper {
            AgentHyper::Ppo(h) => Agent::Ppo(PpoAgent::new(spec, h, seed)?),
            AgentHyper::Td3(h) => Agent::Td3(Td3Agent::new(spec, h, seed)?),
        })
    }

    pub fn algo(&self) -> Algo {
        match self {
            Agent::Ppo(_) => Algo::Ppo,
            Agent::Td3(_) => Algo::Td3,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Agent::Ppo(a) => &a.spec,
            Agent::Td3(a) => &a.spec,
        }
    }

    pub fn hyper(&self) -> AgentHyper {
        match self {
            Agent::Ppo(a) => AgentHyper::Ppo(a.hyper),
            Agent::Td3(a) => AgentHyper::Td3(a.hyper),
        }
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        match self {
            Agent::Ppo(a) => a.act_deterministic(obs),
            Agent::Td3(a) => a.act_deterministic(obs),
        }
    }

    pub fn to_checkpoint(&self, seed: u64, steps_trained: usize) -> Checkpoint {
        let mut nets = BTreeMap::new();
        let mut log_std = Vec::new();
        match self {
            Agent::Ppo(a) => {
                nets.insert("policy".to_string(), a.policy.snapshot());
                nets.insert("value".to_string(), a.value.snapshot());
                log_std = a.log_std.clone();
            }
            Agent::Td3(a) => {
                nets.insert("actor".to_string(), a.actor.snapshot());
                nets.insert("q1".to_string(), a.q1.snapshot());
                nets.insert("q2".to_string(), a.q2.snapshot());
            }
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            hyper: self.hyper(),
            spec: self.spec().clone(),
            seed,
            steps_trained,
            nets,
            log_std,
        }
    }

    /// Rebuilds an agent for evaluation or continued training. Optimiser
    /// moments and target networks are not stored; targets restart as copies.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, RlError> {
        let net = |name: &str| -> Result<Mlp, RlError> {
            let s = c.nets.get(name).ok_or_else(|| RlError::Checkpoint(format!("missing network `{name}`")))?;
            Mlp::from_snapshot(s)
        };
        let spec = c.spec.clone();
        let agent = match c.hyper {
            AgentHyper::Ppo(h) => {
                let a = PpoAgent::from_parts(spec, h, net("policy")?, c.log_std.clone(), net("value")?, c.seed);
                let out = match a.spec.mode {
                    ActionMode::Continuous => a.spec.action_dim(),
                    ActionMode::Discrete { tau } => a.spec.action_dim() * tau,
                };
                let expect_std = if a.spec.mode == ActionMode::Continuous { a.spec.action_dim() } else { 0 };
                if a.policy.output_size() != out || a.log_std.len() != expect_std {
                    return Err(RlError::Checkpoint("policy shape does not match the action layout".into()));
                }
                Agent::Ppo(a)
            }
            AgentHyper::Td3(h) => {
                let a = Td3Agent::from_parts(spec, h, net("actor")?, net("q1")?, net("q2")?, c.seed);
                if a.actor.output_size() != a.spec.action_dim() {
                    return Err(RlError::Checkpoint("actor shape does not match the action layout".into()));
                }
                Agent::Td3(a)
            }
        };
        if agent.spec().obs_dim() != 6 {
            return Err(RlError::Checkpoint("observation layout mismatch".into()));
        }
        Ok(agent)
    }
}

impl Policy for Agent {
    fn act_eval(&mut self, obs: &[f64]) -> Vec<f64> {
        match self {
            Agent::Ppo(a) => a.act_eval(obs),
            Agent::Td3(a) => a.act_eval(obs),
        }
    }
}

/// Hyper-parameters, frozen normalisation bounds and network weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub hyper: AgentHyper,
    pub spec: EnvSpec,
    pub seed: u64,
    pub steps_trained: usize,
    pub nets: BTreeMap<String, MlpSnapshot>,
    pub log_std: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, RlError> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| RlError::Checkpoint(e.to_string()))?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            _ => return Err(RlError::Checkpoint("not a mesbench agent checkpoint".into())),
        }
        match v.get("version").and_then(|f| f.as_u64()) {
            Some(n) if n == CHECKPOINT_VERSION as u64 => {}
            other => return Err(RlError::Checkpoint(format!("unsupported checkpoint version {other:?}"))),
        }
        serde_json::from_value(v).map_err(|e| RlError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        std::fs::write(path, self.to_json()).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let s = std::fs::read_to_string(path).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scenario;
    use crate::model::MesConfig;

    fn agent(algo: Algo, case: &str) -> Agent {
        let cfg = MesConfig::preset(case).unwrap();
        let data = Scenario::synthetic(&cfg, 1);
        let spec = EnvSpec::new(&cfg, &data, algo.action_mode(cfg.case_label));
        let mut hyper = AgentHyper::default_for(algo, cfg.case_label);
        match &mut hyper {
            AgentHyper::Ppo(h) => h.hidden = 8,
            AgentHyper::Td3(h) => h.hidden = 8,
        }
        Agent::new(spec, hyper, 11).unwrap()
    }

    #[test]
    fn round_trip_preserves_actions() {
        for (algo, case) in [(Algo::Ppo, "case1"), (Algo::Ppo, "case2"), (Algo::Td3, "case2")] {
            let a = agent(algo, case);
            let c = a.to_checkpoint(11, 500);
            let back = Agent::from_checkpoint(&Checkpoint::from_json(&c.to_json()).unwrap()).unwrap();
            let obs = [0.3, -0.2, 0.9, -1.0, 0.0, 0.5];
            assert_eq!(a.act_deterministic(&obs).unwrap(), back.act_deterministic(&obs).unwrap());
            assert_eq!(back.to_checkpoint(11, 500), c);
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let c = agent(Algo::Td3, "case1").to_checkpoint(1, 0);
        let s = c.to_json().replacen("\"version\": 1", "\"version\": 99", 1);
        assert!(matches!(Checkpoint::from_json(&s), Err(RlError::Checkpoint(_))));
        assert!(matches!(Checkpoint::from_json("{}"), Err(RlError::Checkpoint(_))));
    }

    #[test]
    fn missing_network_is_rejected() {
        let mut c = agent(Algo::Ppo, "case1").to_checkpoint(1, 0);
        c.nets.remove("value");
        assert!(matches!(Agent::from_checkpoint(&c), Err(RlError::Checkpoint(_))));
    }

    #[test]
    fn algo_names_parse() {
        assert_eq!("ppo".parse::<Algo>().unwrap(), Algo::Ppo);
        assert!("sac".parse::<Algo>().is_err());
    }
}
