//! Experiment orchestration: controller comparison, learning curves,
//! run-time statistics and random hyper-parameter search.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataError, ForecastSet, Scenario};
use crate::model::{ControlAction, MesConfig, SystemState};
use crate::mpc::{receding_horizon_run, Foresight, MpcConfig, MpcError};
use crate::plant::{run_episode, Controller, PlantError};
use crate::rl::noise::NoiseType;
use crate::rl::{train, Agent, AgentHyper, Algo, EnvSpec, LearningCurve, Policy, RandomPolicy, RlError, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no samples")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// `100 * j_ref / j`; above 100 means better than the reference.
pub fn relative_performance(j_ref: f64, j: f64) -> Result<f64, BenchError> {
    if !(j_ref > 0.0 && j > 0.0) {
        return Err(BenchError::Domain(format!("objectives must be positive, got j_ref={j_ref}, j={j}")));
    }
    Ok(100.0 * j_ref / j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub min: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub total: f64,
    pub samples: usize,
}

pub fn runtime_stats(samples: &[f64]) -> Result<RuntimeStats, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::Empty);
    }
    let n = samples.len() as f64;
    let total: f64 = samples.iter().sum();
    let mean = total / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(RuntimeStats {
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        mean,
        std: var.sqrt(),
        max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        total,
        samples: samples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    PerfectMpc,
    RealisticMpc,
    Ppo,
    Td3,
    Random,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] =
        [ControllerKind::PerfectMpc, ControllerKind::RealisticMpc, ControllerKind::Ppo, ControllerKind::Td3, ControllerKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::PerfectMpc => "lmpc_perfect",
            ControllerKind::RealisticMpc => "lmpc_realistic",
            ControllerKind::Ppo => "ppo",
            ControllerKind::Td3 => "td3",
            ControllerKind::Random => "random",
        }
    }

    pub fn algo(self) -> Option<Algo> {
        match self {
            ControllerKind::Ppo => Some(Algo::Ppo),
            ControllerKind::Td3 => Some(Algo::Td3),
            _ => None,
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown controller `{s}`")))
    }
}

/// Where exogenous data comes from: a synthetic year per seed, or one
/// directory of CSVs shared by all seeds.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Dir(PathBuf),
}

impl DataSource {
    pub fn scenario(&self, cfg: &MesConfig, seed: u64) -> Result<Scenario, BenchError> {
        Ok(match self {
            DataSource::Synthetic => Scenario::synthetic(cfg, seed),
            DataSource::Dir(d) => Scenario::load_dir(d, cfg.grid)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub weeks: usize,
    /// Evaluate from the first step of the year over the whole data instead
    /// of the held-out weeks.
    pub full_year: bool,
    pub seeds: Vec<u64>,
    pub controllers: Vec<ControllerKind>,
    pub train_steps: usize,
    pub eval_every: usize,
    pub mpc: MpcConfig,
    pub jobs: usize,
    pub data: DataSource,
    /// Per-algorithm overrides of the default hyper-parameters.
    pub hyper: BTreeMap<Algo, AgentHyper>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            weeks: 4,
            full_year: false,
            seeds: vec![0, 1, 2],
            controllers: ControllerKind::ALL.to_vec(),
            train_steps: 50_000,
            eval_every: 2_500,
            mpc: MpcConfig::default(),
            jobs: 1,
            data: DataSource::Synthetic,
            hyper: BTreeMap::new(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("at least one seed is required".into()));
        }
        if self.weeks == 0 && !self.full_year {
            return Err(BenchError::Config("evaluation window must be at least one week".into()));
        }
        if self.eval_every == 0 {
            return Err(BenchError::Config("eval_every must be positive".into()));
        }
        self.mpc.validate().map_err(MpcError::from)?;
        Ok(())
    }

    /// Start and length of the evaluation window. MPC needs N steps of data
    /// beyond the window.
    pub fn window(&self, data: &Scenario) -> Result<(usize, usize), BenchError> {
        use crate::plant::ExoSource;
        let (start, len) = if self.full_year {
            (0, data.len().saturating_sub(self.mpc.n_steps))
        } else {
            (data.eval_start(), self.weeks * data.steps_per_week())
        };
        if len == 0 || start + len + self.mpc.n_steps > data.len() {
            return Err(BenchError::Config(format!("evaluation window [{start}, {}) does not fit the data", start + len)));
        }
        Ok((start, len))
    }

    fn hyper_for(&self, algo: Algo, cfg: &MesConfig) -> AgentHyper {
        self.hyper.get(&algo).copied().unwrap_or_else(|| AgentHyper::default_for(algo, cfg.case_label))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub agent: Agent,
    pub curve: LearningCurve,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct PoolKey {
    config: String,
    data: String,
    hyper: String,
    seed: u64,
    steps: usize,
    eval_every: usize,
}

type Slot = Arc<OnceLock<Result<Arc<TrainedAgent>, String>>>;

/// Memoises trained agents so several reports (or tests) can share one
/// training run per (config, data, hyper, seed, budget).
#[derive(Default)]
pub struct AgentPool {
    slots: Mutex<HashMap<PoolKey, Slot>>,
}

impl AgentPool {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn get_or_train(
        &self,
        cfg: &MesConfig,
        source: &DataSource,
        data: &Arc<Scenario>,
        hyper: AgentHyper,
        seed: u64,
        steps: usize,
        eval_every: usize,
    ) -> Result<Arc<TrainedAgent>, BenchError> {
        let key = PoolKey {
            config: cfg.to_toml_string(),
            data: format!("{source:?}"),
            hyper: serde_json::to_string(&hyper).expect("hyper serialises"),
            seed,
            steps,
            eval_every,
        };
        let slot = self.slots.lock().expect("pool lock").entry(key).or_default().clone();
        slot.get_or_init(|| {
            let tc = TrainConfig { total_steps: steps, eval_every, seed };
            train(cfg, data.clone(), hyper, &tc).map(|(agent, curve)| Arc::new(TrainedAgent { agent, curve })).map_err(|e| e.to_string())
        })
        .clone()
        .map_err(BenchError::Training)
    }
}

/// Times every decision of the wrapped controller.
struct Timed<'a> {
    inner: &'a mut dyn Controller,
    samples: Vec<f64>,
}

impl Controller for Timed<'_> {
    fn act(&mut self, state: &SystemState) -> ControlAction {
        let t = Instant::now();
        let a = self.inner.act(state);
        self.samples.push(t.elapsed().as_secs_f64());
        a
    }
}

struct SpecPolicy<'a, P: Policy> {
    spec: &'a EnvSpec,
    policy: P,
}

impl<P: Policy> Controller for SpecPolicy<'_, P> {
    fn act(&mut self, state: &SystemState) -> ControlAction {
        let obs = self.spec.bounds.normalize(&state.obs);
        let raw = self.policy.act_eval(&obs);
        self.spec.to_control(&raw).expect("policy output matches the action layout")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub controller: ControllerKind,
    pub objective: f64,
    pub cost: f64,
    pub comfort_wh: f64,
    /// Per-step decision wall time, s. Receding-horizon solves are spread
    /// evenly over the steps they cover.
    #[serde(skip)]
    pub step_wall_s: Vec<f64>,
    pub error: Option<String>,
}

impl SeedOutcome {
    fn failed(seed: u64, controller: ControllerKind, e: impl ToString) -> Self {
        Self { seed, controller, objective: f64::NAN, cost: f64::NAN, comfort_wh: f64::NAN, step_wall_s: Vec::new(), error: Some(e.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub controller: ControllerKind,
    pub objective: f64,
    pub cost: f64,
    pub comfort_wh: f64,
    pub relative_performance: Option<f64>,
    pub seeds: usize,
    pub failed_seeds: usize,
    pub runtime: Option<RuntimeStats>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub case: String,
    pub window: (usize, usize),
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<SeedOutcome>,
    pub curves: BTreeMap<(Algo, u64), LearningCurve>,
}

impl BenchmarkReport {
    pub fn outcome(&self, seed: u64, c: ControllerKind) -> Option<&SeedOutcome> {
        self.outcomes.iter().find(|o| o.seed == seed && o.controller == c)
    }

    pub fn row(&self, c: ControllerKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.controller == c)
    }

    /// Aggregate table; objectives are seed means in currency units.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["controller", "objective", "cost", "comfort_wh", "relative_performance_pct", "seeds", "failed_seeds"])?;
        for r in &self.rows {
            wr.write_record([
                r.controller.name().to_string(),
                num(r.objective),
                num(r.cost),
                num(r.comfort_wh),
                r.relative_performance.map(num).unwrap_or_default(),
                r.seeds.to_string(),
                r.failed_seeds.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_seed_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["seed", "controller", "objective", "cost", "comfort_wh", "relative_performance_pct", "status"])?;
        for o in &self.outcomes {
            let rel = self
                .outcome(o.seed, ControllerKind::PerfectMpc)
                .and_then(|r| relative_performance(r.objective, o.objective).ok())
                .map(num)
                .unwrap_or_default();
            let (seed, name) = (o.seed.to_string(), o.controller.name().to_string());
            match &o.error {
                None => wr.write_record([seed, name, num(o.objective), num(o.cost), num(o.comfort_wh), rel, "ok".into()])?,
                Some(e) => wr.write_record([seed, name, String::new(), String::new(), String::new(), String::new(), format!("failed: {e}")])?,
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Per-seed curves in long form plus the across-seed mean and std.
    pub fn write_curves_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["algo", "seed", "step", "mean_return"])?;
        let mut by_algo: BTreeMap<Algo, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for ((algo, seed), c) in &self.curves {
            for p in &c.points {
                wr.write_record([algo.name().to_string(), seed.to_string(), p.step.to_string(), num(p.mean_return)])?;
                by_algo.entry(*algo).or_default().entry(p.step).or_default().push(p.mean_return);
            }
        }
        for (algo, steps) in by_algo {
            for (step, v) in steps {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                wr.write_record([algo.name().to_string(), "mean".into(), step.to_string(), num(mean)])?;
                wr.write_record([algo.name().to_string(), "std".into(), step.to_string(), num(std)])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Wall-clock statistics per controller; not reproducible across runs,
    /// so kept out of the CSV outputs.
    pub fn runtime_json(&self) -> String {
        let m: BTreeMap<&str, Option<RuntimeStats>> = self.rows.iter().map(|r| (r.controller.name(), r.runtime)).collect();
        serde_json::to_string_pretty(&m).expect("runtime stats serialise")
    }

    pub fn text_table(&self) -> String {
        let mut s = format!(
            "case {}  window [{}, {})  seeds {:?}\n{:<16}{:>16}{:>14}{:>14}{:>10}{:>14}\n",
            self.case,
            self.window.0,
            self.window.0 + self.window.1,
            self.seeds,
            "controller",
            "objective",
            "cost",
            "comfort MWh",
            "rel %",
            "mean step s"
        );
        for r in &self.rows {
            let rel = r.relative_performance.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
            let rt = r.runtime.map(|t| format!("{:.2e}", t.mean)).unwrap_or_else(|| "-".into());
            let obj = if r.seeds > r.failed_seeds { format!("{:.2}", r.objective) } else { "failed".into() };
            s += &format!(
                "{:<16}{:>16}{:>14.2}{:>14.3}{:>10}{:>14}\n",
                r.controller.name(),
                obj,
                r.cost,
                r.comfort_wh / 1e6,
                rel,
                rt
            );
        }
        s
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

fn run_one(
    cfg: &MesConfig,
    bc: &BenchConfig,
    pool: &AgentPool,
    kind: ControllerKind,
    seed: u64,
    data: &Arc<Scenario>,
    window: (usize, usize),
) -> Result<(SeedOutcome, Option<LearningCurve>), BenchError> {
    let (start, len) = window;
    let done = |traj: crate::plant::Trajectory, samples: Vec<f64>| SeedOutcome {
        seed,
        controller: kind,
        objective: traj.objective,
        cost: traj.cost,
        comfort_wh: traj.comfort,
        step_wall_s: samples,
        error: None,
    };
    match kind {
        ControllerKind::PerfectMpc | ControllerKind::RealisticMpc => {
            let mut mpc = bc.mpc.clone();
            mpc.foresight = if kind == ControllerKind::PerfectMpc {
                Foresight::Perfect
            } else {
                Foresight::Realistic(ForecastSet::calibrated(data, cfg.case_label, seed)?)
            };
            let run = receding_horizon_run(cfg, &mpc, data, start, len, 0.5)?;
            let mut samples = Vec::with_capacity(len);
            for s in &run.solves {
                samples.extend(std::iter::repeat(s.wall_s / s.c as f64).take(s.c));
            }
            samples.truncate(len);
            Ok((done(run.trajectory, samples), None))
        }
        ControllerKind::Random => {
            let spec = EnvSpec::new(cfg, data, crate::rl::ActionMode::Continuous);
            let mut ctl = SpecPolicy { spec: &spec, policy: RandomPolicy::new(spec.action_dim(), seed) };
            let mut timed = Timed { inner: &mut ctl, samples: Vec::new() };
            let traj = run_episode(&mut timed, SystemState::initial(cfg, start, 0.5), len, data.as_ref(), cfg)?;
            let samples = std::mem::take(&mut timed.samples);
            Ok((done(traj, samples), None))
        }
        ControllerKind::Ppo | ControllerKind::Td3 => {
            let algo = kind.algo().expect("RL controller");
            let trained = pool.get_or_train(cfg, &bc.data, data, bc.hyper_for(algo, cfg), seed, bc.train_steps, bc.eval_every)?;
            let spec = trained.agent.spec().clone();
            let mut ctl = SpecPolicy { spec: &spec, policy: trained.agent.clone() };
            let mut timed = Timed { inner: &mut ctl, samples: Vec::new() };
            let traj = run_episode(&mut timed, SystemState::initial(cfg, start, 0.5), len, data.as_ref(), cfg)?;
            let samples = std::mem::take(&mut timed.samples);
            Ok((done(traj, samples), Some(trained.curve.clone())))
        }
    }
}

/// Runs every requested controller on every seed. Within a seed all
/// controllers share the exogenous data and initial state. The perfect
/// LMPC reference and the random agent are always included.
pub fn run_benchmark(cfg: &MesConfig, bc: &BenchConfig, pool: &AgentPool) -> Result<BenchmarkReport, BenchError> {
    bc.validate()?;
    let mut kinds: Vec<ControllerKind> = bc.controllers.clone();
    kinds.push(ControllerKind::PerfectMpc);
    kinds.push(ControllerKind::Random);
    kinds.sort();
    kinds.dedup();

    let per_seed = |seed: u64| -> Result<(Vec<SeedOutcome>, Vec<((Algo, u64), LearningCurve)>, (usize, usize)), BenchError> {
        let data = Arc::new(bc.data.scenario(cfg, seed)?);
        let window = bc.window(&data)?;
        let mut outs = Vec::new();
        let mut curves = Vec::new();
        for &k in &kinds {
            match run_one(cfg, bc, pool, k, seed, &data, window) {
                Ok((o, c)) => {
                    outs.push(o);
                    if let (Some(c), Some(a)) = (c, k.algo()) {
                        curves.push(((a, seed), c));
                    }
                }
                Err(e) => outs.push(SeedOutcome::failed(seed, k, e)),
            }
        }
        Ok((outs, curves, window))
    };

    let jobs = bc.jobs.max(1);
    let mut results = Vec::new();
    for chunk in bc.seeds.chunks(jobs) {
        let part: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || per_seed(seed))).collect();
            handles.into_iter().map(|h| h.join().expect("benchmark worker panicked")).collect()
        });
        results.extend(part);
    }

    let mut outcomes = Vec::new();
    let mut curves = BTreeMap::new();
    let mut window = (0, 0);
    for r in results {
        let (o, c, w) = r?;
        outcomes.extend(o);
        curves.extend(c);
        window = w;
    }

    let mut rows = Vec::new();
    for &k in &kinds {
        let mine: Vec<&SeedOutcome> = outcomes.iter().filter(|o| o.controller == k).collect();
        let ok: Vec<&&SeedOutcome> = mine.iter().filter(|o| o.error.is_none()).collect();
        let mean = |f: fn(&SeedOutcome) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64 };
        let samples: Vec<f64> = ok.iter().flat_map(|o| o.step_wall_s.iter().copied()).collect();
        rows.push(ReportRow {
            controller: k,
            objective: mean(|o| o.objective),
            cost: mean(|o| o.cost),
            comfort_wh: mean(|o| o.comfort_wh),
            relative_performance: None,
            seeds: mine.len(),
            failed_seeds: mine.len() - ok.len(),
            runtime: runtime_stats(&samples).ok(),
        });
    }
    let j_ref = rows.iter().find(|r| r.controller == ControllerKind::PerfectMpc).map(|r| r.objective).unwrap_or(f64::NAN);
    for r in rows.iter_mut() {
        r.relative_performance = relative_performance(j_ref, r.objective).ok();
    }
    Ok(BenchmarkReport { case: cfg.case_label.to_string(), window, seeds: bc.seeds.clone(), rows, outcomes, curves })
}

/// One searchable dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Range {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Categorical { values: Vec<f64> },
}

impl Range {
    fn validate(&self, name: &str) -> Result<(), BenchError> {
        let ok = match self {
            Range::LogUniform { lo, hi } => *lo > 0.0 && lo <= hi,
            Range::Uniform { lo, hi } => lo <= hi,
            Range::Categorical { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(BenchError::Config(format!("empty or invalid range for `{name}`")))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Range::LogUniform { lo, hi } => (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp(),
            Range::Uniform { lo, hi } => lo + rng.gen::<f64>() * (hi - lo),
            Range::Categorical { values } => values[rng.gen_range(0..values.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub algo: Algo,
    pub params: BTreeMap<String, Range>,
}

fn cat(v: &[f64]) -> Range {
    Range::Categorical { values: v.to_vec() }
}

impl HyperSpace {
    /// Broad default ranges for each algorithm.
    pub fn default_for(algo: Algo) -> Self {
        let mut p = BTreeMap::new();
        p.insert("gamma".into(), cat(&[0.9, 0.95, 0.98, 0.99, 0.995, 0.999]));
        p.insert("learning_rate".into(), Range::LogUniform { lo: 1e-5, hi: 1e-2 });
        match algo {
            Algo::Ppo => {
                p.insert("n_steps".into(), cat(&[64.0, 128.0, 256.0, 512.0, 672.0, 1024.0]));
                p.insert("nminibatches".into(), cat(&[1.0, 2.0, 4.0, 8.0]));
                p.insert("ent_coef".into(), Range::LogUniform { lo: 1e-8, hi: 1e-1 });
                p.insert("cliprange".into(), cat(&[0.1, 0.2, 0.3, 0.4]));
                p.insert("noptepochs".into(), cat(&[1.0, 5.0, 10.0, 20.0]));
                p.insert("lambda".into(), cat(&[0.8, 0.9, 0.92, 0.95, 0.98, 0.99, 1.0]));
            }
            Algo::Td3 => {
                p.insert("batch_size".into(), cat(&[16.0, 24.0, 32.0, 64.0, 100.0, 128.0]));
                p.insert("buffer_size".into(), cat(&[1e4, 1e5, 1e6]));
                p.insert("train_freq".into(), cat(&[1.0, 16.0, 96.0, 100.0, 1000.0, 2000.0]));
                p.insert("gradient_steps".into(), cat(&[1.0, 16.0, 100.0, 1000.0, 2000.0]));
                p.insert("noise_type".into(), cat(&[0.0, 1.0]));
                p.insert("noise_std".into(), Range::Uniform { lo: 0.0, hi: 1.0 });
            }
        }
        Self { algo, params: p }
    }

    /// A space whose only point is `hyper`.
    pub fn collapsed(hyper: AgentHyper) -> Self {
        let mut p = BTreeMap::new();
        match hyper {
            AgentHyper::Ppo(h) => {
                for (k, v) in [
                    ("gamma", h.gamma),
                    ("learning_rate", h.learning_rate),
                    ("n_steps", h.n_steps as f64),
                    ("nminibatches", h.nminibatches as f64),
                    ("ent_coef", h.ent_coef),
                    ("cliprange", h.cliprange),
                    ("noptepochs", h.noptepochs as f64),
                    ("lambda", h.lambda),
                ] {
                    p.insert(k.to_string(), cat(&[v]));
                }
            }
            AgentHyper::Td3(h) => {
                for (k, v) in [
                    ("gamma", h.gamma),
                    ("learning_rate", h.learning_rate),
                    ("batch_size", h.batch_size as f64),
                    ("buffer_size", h.buffer_size as f64),
                    ("train_freq", h.train_freq as f64),
                    ("gradient_steps", h.gradient_steps as f64),
                    ("noise_type", if h.noise_type == NoiseType::Normal { 0.0 } else { 1.0 }),
                    ("noise_std", h.noise_std),
                ] {
                    p.insert(k.to_string(), cat(&[v]));
                }
            }
        }
        Self { algo: hyper.algo(), params: p }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.params.is_empty() {
            return Err(BenchError::Config("empty search space".into()));
        }
        self.params.iter().try_for_each(|(k, r)| r.validate(k))
    }
}

/// Writes one named value into a hyper-parameter set.
pub fn apply_param(h: &mut AgentHyper, name: &str, v: f64) -> Result<(), BenchError> {
    let int = |v: f64| v.round().max(1.0) as usize;
    match h {
        AgentHyper::Ppo(p) => match name {
            "gamma" => p.gamma = v,
            "learning_rate" => p.learning_rate = v,
            "n_steps" => p.n_steps = int(v),
            "nminibatches" => p.nminibatches = int(v),
            "ent_coef" => p.ent_coef = v,
            "cliprange" => p.cliprange = v,
            "noptepochs" => p.noptepochs = int(v),
            "lambda" => p.lambda = v,
            _ => return Err(BenchError::Config(format!("PPO has no hyper-parameter `{name}`"))),
        },
        AgentHyper::Td3(t) => match name {
            "gamma" => t.gamma = v,
            "learning_rate" => t.learning_rate = v,
            "batch_size" => t.batch_size = int(v),
            "buffer_size" => t.buffer_size = int(v),
            "train_freq" => t.train_freq = int(v),
            "gradient_steps" => t.gradient_steps = int(v),
            "noise_type" => t.noise_type = if v < 0.5 { NoiseType::Normal } else { NoiseType::OrnsteinUhlenbeck },
            "noise_std" => t.noise_std = v,
            _ => return Err(BenchError::Config(format!("TD3 has no hyper-parameter `{name}`"))),
        },
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    /// Final held-out evaluation return; `None` if the trial failed.
    pub score: Option<f64>,
    pub best_so_far: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Option<AgentHyper>,
    pub best_score: Option<f64>,
    pub trials: Vec<Trial>,
}

impl SearchResult {
    pub fn write_history_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let names: Vec<String> = self.trials.first().map(|t| t.params.keys().cloned().collect()).unwrap_or_default();
        let mut header = vec!["trial".to_string(), "score".into(), "best_so_far".into(), "status".into()];
        header.extend(names.iter().cloned());
        wr.write_record(&header)?;
        for t in &self.trials {
            let mut rec = vec![
                t.index.to_string(),
                t.score.map(num).unwrap_or_default(),
                t.best_so_far.map(num).unwrap_or_default(),
                t.error.as_ref().map(|e| format!("failed: {e}")).unwrap_or_else(|| "ok".into()),
            ];
            rec.extend(names.iter().map(|n| num(t.params[n])));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn improves(best: Option<f64>, s: f64) -> bool {
    best.map_or(true, |b| s > b)
}

/// Seeded i.i.d. search: each trial trains from scratch for `budget` steps
/// on `data` and is scored by its final held-out evaluation return.
pub fn random_search(
    cfg: &MesConfig,
    data: Arc<Scenario>,
    space: &HyperSpace,
    trials: usize,
    budget: usize,
    seed: u64,
) -> Result<SearchResult, BenchError> {
    space.validate()?;
    if trials == 0 {
        return Err(BenchError::Config("at least one trial is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SearchResult { best: None, best_score: None, trials: Vec::new() };
    for index in 0..trials {
        let params: BTreeMap<String, f64> = space.params.iter().map(|(k, r)| (k.clone(), r.draw(&mut rng))).collect();
        let mut hyper = AgentHyper::default_for(space.algo, cfg.case_label);
        let scored = params
            .iter()
            .try_for_each(|(k, v)| apply_param(&mut hyper, k, *v))
            .and_then(|_| {
                let every = budget.max(1);
                let tc = TrainConfig { total_steps: budget, eval_every: every, seed: seed.wrapping_add(index as u64) };
                let (_, curve) = train(cfg, data.clone(), hyper, &tc)?;
                curve.last().filter(|r| r.is_finite()).ok_or_else(|| BenchError::Rl(RlError::Numerical("non-finite evaluation return".into())))
            });
        let (score, error) = match scored {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(s) = score {
            if improves(out.best_score, s) {
                out.best_score = Some(s);
                out.best = Some(hyper);
            }
        }
        out.trials.push(Trial { index, params, score, best_so_far: out.best_score, error });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CaseLabel;
    use crate::rl::PpoHyper;
    use proptest::prelude::*;

    #[test]
    fn relative_performance_hand_cases() {
        assert_eq!(relative_performance(3.0, 3.0).unwrap(), 100.0);
        assert_eq!(relative_performance(3.0, 6.0).unwrap(), 50.0);
        assert!(matches!(relative_performance(0.0, 1.0), Err(BenchError::Domain(_))));
        assert!(matches!(relative_performance(1.0, -1.0), Err(BenchError::Domain(_))));
    }

    #[test]
    fn runtime_stats_hand_cases() {
        let s = runtime_stats(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((s.min, s.mean, s.std, s.max, s.total), (2.0, 2.0, 0.0, 2.0, 6.0));
        let s = runtime_stats(&[5.0]).unwrap();
        assert_eq!((s.min, s.mean, s.std, s.max, s.total), (5.0, 5.0, 0.0, 5.0, 5.0));
        let s = runtime_stats(&[1.0, 3.0]).unwrap();
        assert_eq!(s.std, 1.0);
        assert!(matches!(runtime_stats(&[]), Err(BenchError::Empty)));
    }

    #[test]
    fn controller_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
    }

    fn tiny_bench() -> (MesConfig, BenchConfig) {
        let cfg = MesConfig::preset("case1").unwrap();
        let bc = BenchConfig {
            weeks: 1,
            seeds: vec![4],
            controllers: vec![ControllerKind::PerfectMpc, ControllerKind::Random],
            mpc: MpcConfig { n_steps: 48, c_steps: 24, ..MpcConfig::default() },
            ..BenchConfig::default()
        };
        (cfg, bc)
    }

    #[test]
    fn reference_scores_one_hundred_percent_and_random_is_worse() {
        let (cfg, bc) = tiny_bench();
        let r = run_benchmark(&cfg, &bc, &AgentPool::new()).unwrap();
        let p = r.row(ControllerKind::PerfectMpc).unwrap();
        assert_eq!(p.relative_performance, Some(100.0));
        let rnd = r.row(ControllerKind::Random).unwrap();
        assert!(rnd.objective > p.objective);
        assert!(rnd.runtime.unwrap().mean < p.runtime.unwrap().mean);
        let mut a = Vec::new();
        r.write_csv(&mut a).unwrap();
        let mut b = Vec::new();
        run_benchmark(&cfg, &bc, &AgentPool::new()).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failing_controller_is_reported() {
        let (cfg, mut bc) = tiny_bench();
        bc.controllers = vec![ControllerKind::Td3];
        bc.hyper.insert(Algo::Td3, AgentHyper::Td3(crate::rl::Td3Hyper { gamma: 0.0, ..crate::rl::Td3Hyper::for_case(CaseLabel::Simple) }));
        let r = run_benchmark(&cfg, &bc, &AgentPool::new()).unwrap();
        let row = r.row(ControllerKind::Td3).unwrap();
        assert_eq!((row.seeds, row.failed_seeds), (1, 1));
        assert!(r.outcome(4, ControllerKind::Td3).unwrap().error.is_some());
        let mut out = Vec::new();
        r.write_seed_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("4,td3,,,,,failed: training failed: invalid configuration: TD3 hyper-parameter `gamma` out of range"), "{text}");
    }

    #[test]
    fn collapsed_space_returns_its_only_point() {
        let cfg = MesConfig::preset("case2").unwrap();
        let data = Arc::new(Scenario::synthetic(&cfg, 0));
        let target = AgentHyper::Ppo(PpoHyper::for_case(CaseLabel::Complex));
        let r = random_search(&cfg, data, &HyperSpace::collapsed(target), 1, 300, 3).unwrap();
        assert_eq!(r.best, Some(target));
        assert_eq!(r.trials.len(), 1);
    }

    #[test]
    fn failed_trials_do_not_stop_the_search() {
        let cfg = MesConfig::preset("case2").unwrap();
        let data = Arc::new(Scenario::synthetic(&cfg, 0));
        let mut space = HyperSpace::collapsed(AgentHyper::Ppo(PpoHyper::for_case(CaseLabel::Complex)));
        space.params.insert("gamma".into(), Range::Categorical { values: vec![0.9, 7.0] });
        space.params.insert("n_steps".into(), Range::Categorical { values: vec![32.0] });
        let r = random_search(&cfg, data, &space, 6, 64, 1).unwrap();
        assert!(r.trials.iter().any(|t| t.error.is_some()));
        assert!(r.trials.iter().any(|t| t.score.is_some()));
        let mut out = Vec::new();
        r.write_history_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn draws_stay_in_range(seed in 0u64..1000) {
            let space = HyperSpace::default_for(Algo::Ppo);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (name, r) in &space.params {
                let v = r.draw(&mut rng);
                match r {
                    Range::LogUniform { lo, hi } | Range::Uniform { lo, hi } => prop_assert!(v >= *lo && v <= *hi * (1.0 + 1e-12), "{name}"),
                    Range::Categorical { values } => prop_assert!(values.contains(&v)),
                }
            }
        }

        #[test]
        fn best_so_far_is_monotone(scores in proptest::collection::vec(proptest::option::of(-1e5f64..0.0), 1..20)) {
            let mut best: Option<f64> = None;
            let mut prev: Option<f64> = None;
            for s in scores.into_iter().flatten() {
                if improves(best, s) {
                    best = Some(s);
                }
                if let (Some(p), Some(b)) = (prev, best) { prop_assert!(b >= p); }
                prev = best;
            }
        }

        #[test]
        fn runtime_std_is_bounded_by_the_range(v in proptest::collection::vec(0.0f64..10.0, 1..50)) {
            let s = runtime_stats(&v).unwrap();
            prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
            prop_assert!(s.std <= (s.max - s.min) + 1e-12);
        }
    }
}
