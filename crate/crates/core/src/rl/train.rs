//! Training loops with periodic held-out evaluation.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use super::buffers::{ReplayBuffer, RolloutBuffer, Transition};
use super::checkpoint::{Agent, AgentHyper};
use super::env::{EnvSpec, MesEnv, Policy};
use super::RlError;
use crate::data::Scenario;
use crate::model::MesConfig;
use crate::plant::ExoSource;

const ENV_SEED_OFFSET: u64 = 0x5EED_0E57;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn initial(&self) -> Option<f64> {
        self.points.first().map(|p| p.mean_return)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean_return)
    }

    pub fn best(&self) -> Option<f64> {
        self.points.iter().map(|p| p.mean_return).reduce(f64::max)
    }

    /// First step whose return has closed `frac` of the gap between the
    /// initial and the best return. Returns are negative costs, so the gap
    /// is measured from the untrained policy rather than from zero.
    pub fn first_step_reaching(&self, frac: f64) -> Option<usize> {
        let (r0, best) = (self.initial()?, self.best()?);
        if best <= r0 {
            return Some(0);
        }
        let level = r0 + frac * (best - r0);
        self.points.iter().find(|p| p.mean_return >= level).map(|p| p.step)
    }
}

pub fn write_learning_curve_csv<W: Write>(w: W, curve: &LearningCurve) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "mean_return"])?;
    for p in &curve.points {
        wr.write_record([p.step.to_string(), format!("{:e}", p.mean_return)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean undiscounted, unscaled return of a frozen policy over fixed weeks,
/// each starting at half-full storage.
pub fn evaluate(policy: &mut dyn Policy, cfg: &MesConfig, data: &Arc<Scenario>, spec: &EnvSpec, starts: &[usize]) -> Result<f64, RlError> {
    if starts.is_empty() {
        return Err(RlError::Config("no evaluation weeks".into()));
    }
    let mut env = MesEnv::new(cfg.clone(), data.clone(), spec.clone(), 0);
    let mut total = 0.0;
    for &start in starts {
        if start + spec.episode_len > data.len() {
            return Err(RlError::Config(format!("evaluation week at {start} runs past the data")));
        }
        let mut obs = env.reset_at(start, 0.5);
        loop {
            let st = env.step(&policy.act_eval(&obs))?;
            total += st.reward;
            if st.done {
                break;
            }
            obs = st.obs;
        }
    }
    Ok(total / starts.len() as f64)
}

struct Evaluator<'a> {
    cfg: &'a MesConfig,
    data: &'a Arc<Scenario>,
    starts: Vec<usize>,
    every: usize,
    curve: LearningCurve,
}

impl Evaluator<'_> {
    fn record(&mut self, step: usize, agent: &mut Agent) -> Result<(), RlError> {
        let spec = agent.spec().clone();
        let r = evaluate(agent, self.cfg, self.data, &spec, &self.starts)?;
        self.curve.points.push(CurvePoint { step, mean_return: r });
        Ok(())
    }

    fn after_step(&mut self, done_steps: usize, agent: &mut Agent) -> Result<(), RlError> {
        if done_steps % self.every == 0 {
            self.record(done_steps, agent)?;
        }
        Ok(())
    }
}

/// Trains a fresh agent for `tc.total_steps` environment steps. The curve
/// has one point at step 0 and one every `eval_every` steps.
pub fn train(cfg: &MesConfig, data: Arc<Scenario>, hyper: AgentHyper, tc: &TrainConfig) -> Result<(Agent, LearningCurve), RlError> {
    if tc.eval_every == 0 {
        return Err(RlError::Config("eval_every must be positive".into()));
    }
    let spec = EnvSpec::new(cfg, &data, hyper.algo().action_mode(cfg.case_label));
    let mut agent = Agent::new(spec.clone(), hyper, tc.seed)?;
    let mut env = MesEnv::new(cfg.clone(), data.clone(), spec.clone(), tc.seed.wrapping_add(ENV_SEED_OFFSET));
    let mut ev = Evaluator { cfg, data: &data, starts: data.curve_eval_starts(), every: tc.eval_every, curve: LearningCurve::default() };
    ev.record(0, &mut agent)?;
    let scale = spec.reward_scale;
    let mut obs = env.reset();
    match hyper {
        AgentHyper::Ppo(h) => {
            let mut buf = RolloutBuffer::new(h.n_steps);
            for t in 0..tc.total_steps {
                let Agent::Ppo(a) = &mut agent else { unreachable!() };
                let (act, logp, v) = a.act(&obs)?;
                let st = env.step(&act)?;
                buf.push(obs, act, logp, st.reward * scale, v, st.done);
                obs = if st.done { env.reset() } else { st.obs };
                if buf.is_full() {
                    let boot = a.value_of(&obs)?;
                    a.update(&buf, boot)?;
                    buf.clear();
                }
                ev.after_step(t + 1, &mut agent)?;
            }
        }
        AgentHyper::Td3(h) => {
            let mut rb = ReplayBuffer::new(h.buffer_size);
            for t in 0..tc.total_steps {
                let Agent::Td3(a) = &mut agent else { unreachable!() };
                let act = if t < h.learning_starts { a.act_uniform() } else { a.act_explore(&obs)? };
                let st = env.step(&act)?;
                rb.push(Transition { s: obs, a: act, r: st.reward, s2: st.obs.clone(), done: st.done });
                obs = if st.done {
                    a.noise.reset();
                    env.reset()
                } else {
                    st.obs
                };
                let n = t + 1;
                if n % h.train_freq == 0 && n >= h.learning_starts && rb.len() >= h.batch_size {
                    a.update(&rb, h.gradient_steps, scale)?;
                }
                ev.after_step(n, &mut agent)?;
            }
        }
    }
    Ok((agent, ev.curve))
}
