//! Reinforcement-learning agents over the plant simulator: a small MLP
//! with hand-written backprop, an episodic environment, PPO and TD3.

pub mod adam;
pub mod buffers;
pub mod checkpoint;
pub mod env;
pub mod gae;
pub mod mlp;
pub mod noise;
pub mod ppo;
pub mod td3;
pub mod train;

pub use checkpoint::{Agent, AgentHyper, Algo, Checkpoint};
pub use env::{ActionMode, EnvSpec, MesEnv, Policy, PolicyController, RandomPolicy};
pub use ppo::{PpoAgent, PpoHyper};
pub use td3::{Td3Agent, Td3Hyper};
pub use train::{evaluate, train, LearningCurve, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

fn first_violation(algo: &str, checks: &[(&str, bool)]) -> Result<(), RlError> {
    match checks.iter().find(|(_, ok)| !ok) {
        Some((name, _)) => Err(RlError::Config(format!("{algo} hyper-parameter `{name}` out of range"))),
        None => Ok(()),
    }
}
