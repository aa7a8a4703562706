use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseType {
    Normal,
    OrnsteinUhlenbeck,
}

pub const OU_THETA: f64 = 0.15;
/// Matches the stable-baselines default step, so the noise drifts over
/// hundreds of steps instead of flipping between box edges.
pub const OU_DT: f64 = 0.01;

/// Exploration noise in normalised action units.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionNoise {
    Normal { sigma: f64 },
    Ou { sigma: f64, state: Vec<f64> },
}

impl ActionNoise {
    pub fn new(kind: NoiseType, sigma: f64, dim: usize) -> Self {
        match kind {
            NoiseType::Normal => ActionNoise::Normal { sigma },
            NoiseType::OrnsteinUhlenbeck => ActionNoise::Ou { sigma, state: vec![0.0; dim] },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, dim: usize, rng: &mut R) -> Vec<f64> {
        match self {
            ActionNoise::Normal { sigma } => (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    *sigma * z
                })
                .collect(),
            ActionNoise::Ou { sigma, state } => {
                for x in state.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += OU_THETA * (0.0 - *x) * OU_DT + *sigma * OU_DT.sqrt() * z;
                }
                state.clone()
            }
        }
    }

    /// Called at episode boundaries.
    pub fn reset(&mut self) {
        if let ActionNoise::Ou { state, .. } = self {
            state.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}
