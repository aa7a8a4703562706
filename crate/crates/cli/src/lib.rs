//! `mesbench` command line: data generation, single runs, training,
//! benchmarking, hyper-parameter search and plotting.

mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mesbench_core::bench::{random_search, run_benchmark, AgentPool, BenchConfig, ControllerKind, DataSource, HyperSpace};
use mesbench_core::data::{ForecastSet, Scenario};
use mesbench_core::model::{MesConfig, SystemState};
use mesbench_core::mpc::{receding_horizon_run, write_solve_log, Foresight, MpcConfig};
use mesbench_core::plant::{run_episode, write_trajectory_csv, ExoSource, Trajectory};
use mesbench_core::rl::train::write_learning_curve_csv;
use mesbench_core::rl::{train, Agent, AgentHyper, Algo, Checkpoint, EnvSpec, PolicyController, RandomPolicy, TrainConfig};
use mesbench_milp::MilpLimits;

pub use manifest::{sha256_file, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const DATA_DIR_ENV: &str = "MESBENCH_DATA_DIR";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "mesbench", version, about = "Multi-energy system control benchmark: LMPC versus PPO and TD3")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Bundled case preset (case1 or case2).
    #[arg(long, default_value = "case1")]
    case: String,
    /// System config file (TOML); replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of exogenous CSVs; defaults to $MESBENCH_DATA_DIR, else synthetic data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; nothing is written outside it.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the cost weight a of the stage objective.
    #[arg(long)]
    reward_a: Option<f64>,
    /// Overrides the comfort weight b, currency per Wh.
    #[arg(long)]
    reward_b: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct MpcArgs {
    /// Prediction horizon N, steps.
    #[arg(long, default_value_t = 288)]
    horizon: usize,
    /// Control horizon C, steps.
    #[arg(long, default_value_t = 96)]
    control: usize,
    #[arg(long, default_value_t = 1000)]
    max_nodes: usize,
    /// Relative MIP gap at which branch and bound stops.
    #[arg(long, default_value_t = 1e-3)]
    gap: f64,
}

impl MpcArgs {
    fn config(&self, foresight: Foresight, model_equals_plant: bool) -> MpcConfig {
        MpcConfig {
            n_steps: self.horizon,
            c_steps: self.control,
            foresight,
            limits: MilpLimits { max_nodes: self.max_nodes, gap_tol: self.gap },
            model_equals_plant,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum AlgoArg {
    Ppo,
    Td3,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Ppo => Algo::Ppo,
            AlgoArg::Td3 => Algo::Td3,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ForesightArg {
    Perfect,
    Realistic,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum PlotKind {
    LearningCurve,
    Dispatch,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a synthetic year of exogenous series as CSVs.
    DataGen {
        #[command(flatten)]
        common: Common,
    },
    /// Run one controller over one window.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// random, ppo, td3, lmpc_perfect or lmpc_realistic
        #[arg(long, default_value = "random")]
        controller: String,
        /// Agent checkpoint for ppo and td3.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// First step; defaults to the start of the held-out weeks.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long, default_value_t = 672)]
        steps: usize,
        #[command(flatten)]
        mpc: MpcArgs,
    },
    /// Closed-loop receding-horizon LMPC run with its solve log.
    MpcRun {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        start: Option<usize>,
        #[arg(long, default_value_t = 672)]
        steps: usize,
        #[arg(long, value_enum, default_value = "perfect")]
        foresight: ForesightArg,
        /// Simulate the plant with the linear model the optimiser uses.
        #[arg(long)]
        model_equals_plant: bool,
        #[command(flatten)]
        mpc: MpcArgs,
    },
    /// Train an agent and write its learning curve and checkpoint.
    Train {
        #[arg(value_enum)]
        algo: AlgoArg,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50_000)]
        steps: usize,
        #[arg(long, default_value_t = 2_500)]
        eval_every: usize,
        /// JSON hyper-parameters replacing the case defaults.
        #[arg(long)]
        hyper: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the held-out weeks.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4)]
        weeks: usize,
    },
    /// Compare all controllers over several seeds.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        weeks: usize,
        /// Number of seeds, counted up from --seed.
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long, default_value_t = 50_000)]
        train_steps: usize,
        #[arg(long, default_value_t = 2_500)]
        eval_every: usize,
        /// Comma-separated subset; the reference LMPC and the random agent are always run.
        #[arg(long, value_delimiter = ',')]
        controllers: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Evaluate over the whole year instead of the held-out weeks.
        #[arg(long)]
        full_year: bool,
        #[command(flatten)]
        mpc: MpcArgs,
    },
    /// Random hyper-parameter search.
    Hpo {
        #[arg(value_enum)]
        algo: AlgoArg,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Training steps per trial.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        /// JSON search space replacing the default one.
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Render a learning-curve or dispatch CSV as SVG.
    Plot {
        #[arg(value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.cmd, args) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}\n\nRun `mesbench --help` for the synopsis.");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}

struct Ctx {
    cfg: MesConfig,
    source: DataSource,
    config_paths: Vec<String>,
}

impl Common {
    /// Everything that can be checked before any output is written.
    fn resolve(&self) -> Result<Ctx, CliError> {
        let mut cfg = match &self.config {
            Some(p) => MesConfig::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => MesConfig::preset(&self.case).map_err(usage)?,
        };
        if let Some(a) = self.reward_a {
            cfg.reward_weights.a = a;
        }
        if let Some(b) = self.reward_b {
            cfg.reward_weights.b = b;
        }
        if !(cfg.reward_weights.a >= 0.0 && cfg.reward_weights.b >= 0.0) {
            return Err(usage("reward weights must be non-negative"));
        }
        let dir = self.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        let source = match dir {
            Some(d) if d.is_dir() => DataSource::Dir(d),
            Some(d) => return Err(usage(format!("data directory {} does not exist", d.display()))),
            None => DataSource::Synthetic,
        };
        let mut config_paths: Vec<String> = self.config.iter().map(|p| p.display().to_string()).collect();
        if let DataSource::Dir(d) = &source {
            config_paths.push(d.display().to_string());
        }
        Ok(Ctx { cfg, source, config_paths })
    }

    fn scenario(&self, ctx: &Ctx) -> Result<Arc<Scenario>, CliError> {
        ctx.source.scenario(&ctx.cfg, self.seed).map(Arc::new).map_err(runtime)
    }
}

/// Collects written files and finishes with a manifest.
struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.dir.join(name);
        let f = File::create(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
        self.files.push(PathBuf::from(name));
        Ok(BufWriter::new(f))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        use std::io::Write;
        let mut f = self.file(name)?;
        f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(runtime)
    }

    fn finish(self, command: &str, args: Vec<String>, config_paths: Vec<String>, seeds: Vec<u64>, t0: Instant) -> Result<(), CliError> {
        let m = RunManifest::build(command, args, config_paths, seeds, &self.dir, &self.files, t0.elapsed().as_secs_f64()).map_err(runtime)?;
        let body = serde_json::to_string_pretty(&m).map_err(runtime)?;
        std::fs::write(self.dir.join("manifest.json"), body + "\n").map_err(runtime)?;
        for f in &self.files {
            println!("{}", self.dir.join(f).display());
        }
        Ok(())
    }
}

fn write_summary(out: &mut Output, traj: &Trajectory, extra: &[(&str, String)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out.file("summary.csv")?);
    let mut h = vec!["objective", "cost", "comfort_wh", "steps"];
    h.extend(extra.iter().map(|(k, _)| *k));
    w.write_record(&h).map_err(runtime)?;
    let mut r = vec![format!("{:e}", traj.objective), format!("{:e}", traj.cost), format!("{:e}", traj.comfort), traj.steps.len().to_string()];
    r.extend(extra.iter().map(|(_, v)| v.clone()));
    w.write_record(&r).map_err(runtime)?;
    w.flush().map_err(runtime)
}

fn check_window(data: &Scenario, start: usize, steps: usize, lookahead: usize) -> Result<(), CliError> {
    if steps == 0 {
        return Err(usage("--steps must be positive"));
    }
    if start + steps + lookahead > data.len() {
        return Err(usage(format!("window [{start}, {}) plus {lookahead} lookahead steps exceeds the {} data steps", start + steps, data.len())));
    }
    Ok(())
}

fn load_checkpoint(path: &Path, cfg: &MesConfig) -> Result<Agent, CliError> {
    let c = Checkpoint::load(path).map_err(usage)?;
    let agent = Agent::from_checkpoint(&c).map_err(usage)?;
    let keys: Vec<String> = cfg.action_layout().into_iter().map(|d| d.key).collect();
    if agent.spec().keys != keys {
        return Err(usage(format!("checkpoint actions {:?} do not match the config's {:?}", agent.spec().keys, keys)));
    }
    Ok(agent)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let s = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn execute(cmd: Cmd, args: Vec<String>) -> Result<(), CliError> {
    let t0 = Instant::now();
    match cmd {
        Cmd::DataGen { common } => {
            let ctx = common.resolve()?;
            let data = common.scenario(&ctx)?;
            let mut out = Output::create(&common.out)?;
            let written = data.save_dir(&common.out).map_err(runtime)?;
            out.files.extend(written.iter().filter_map(|p| p.file_name().map(PathBuf::from)));
            out.finish("data-gen", args, ctx.config_paths, vec![common.seed], t0)
        }
        Cmd::Simulate { common, controller, checkpoint, start, steps, mpc } => {
            let ctx = common.resolve()?;
            let kind: ControllerKind = controller.parse().map_err(usage)?;
            let agent = match (kind.algo(), &checkpoint) {
                (Some(_), Some(p)) => Some(load_checkpoint(p, &ctx.cfg)?),
                (Some(_), None) => return Err(usage(format!("--checkpoint is required for `{controller}`"))),
                _ => None,
            };
            if let Some(a) = &agent {
                if Some(a.algo()) != kind.algo() {
                    return Err(usage(format!("checkpoint holds a {} agent", a.algo().name())));
                }
            }
            let data = common.scenario(&ctx)?;
            let start = start.unwrap_or_else(|| data.eval_start());
            let is_mpc = matches!(kind, ControllerKind::PerfectMpc | ControllerKind::RealisticMpc);
            check_window(&data, start, steps, if is_mpc { mpc.horizon } else { 0 })?;
            let cfg = &ctx.cfg;
            let traj = match kind {
                ControllerKind::PerfectMpc | ControllerKind::RealisticMpc => {
                    let f = if kind == ControllerKind::PerfectMpc {
                        Foresight::Perfect
                    } else {
                        Foresight::Realistic(ForecastSet::calibrated(&data, cfg.case_label, common.seed).map_err(runtime)?)
                    };
                    let mc = mpc.config(f, false);
                    mc.validate().map_err(usage)?;
                    receding_horizon_run(cfg, &mc, &data, start, steps, 0.5).map_err(runtime)?.trajectory
                }
                ControllerKind::Random => {
                    let spec = EnvSpec::new(cfg, &data, mesbench_core::rl::ActionMode::Continuous);
                    let mut policy = RandomPolicy::new(spec.action_dim(), common.seed);
                    let mut ctl = PolicyController { spec: &spec, policy: &mut policy };
                    run_episode(&mut ctl, SystemState::initial(cfg, start, 0.5), steps, data.as_ref(), cfg).map_err(runtime)?
                }
                ControllerKind::Ppo | ControllerKind::Td3 => {
                    let mut agent = agent.expect("checked above");
                    let spec = agent.spec().clone();
                    let mut ctl = PolicyController { spec: &spec, policy: &mut agent };
                    run_episode(&mut ctl, SystemState::initial(cfg, start, 0.5), steps, data.as_ref(), cfg).map_err(runtime)?
                }
            };
            let mut out = Output::create(&common.out)?;
            write_trajectory_csv(out.file("trajectory.csv")?, &traj, cfg).map_err(runtime)?;
            write_summary(&mut out, &traj, &[("controller", kind.name().to_string()), ("start", start.to_string())])?;
            out.finish("simulate", args, ctx.config_paths, vec![common.seed], t0)
        }
        Cmd::MpcRun { common, start, steps, foresight, model_equals_plant, mpc } => {
            let ctx = common.resolve()?;
            let probe = mpc.config(Foresight::Perfect, model_equals_plant);
            probe.validate().map_err(usage)?;
            let data = common.scenario(&ctx)?;
            let start = start.unwrap_or_else(|| data.eval_start());
            check_window(&data, start, steps, mpc.horizon)?;
            let f = match foresight {
                ForesightArg::Perfect => Foresight::Perfect,
                ForesightArg::Realistic => Foresight::Realistic(ForecastSet::calibrated(&data, ctx.cfg.case_label, common.seed).map_err(runtime)?),
            };
            let run = receding_horizon_run(&ctx.cfg, &mpc.config(f, model_equals_plant), &data, start, steps, 0.5).map_err(runtime)?;
            let mut out = Output::create(&common.out)?;
            let plant_cfg = if model_equals_plant { mesbench_core::mpc::linearized(&ctx.cfg) } else { ctx.cfg.clone() };
            write_trajectory_csv(out.file("trajectory.csv")?, &run.trajectory, &plant_cfg).map_err(runtime)?;
            write_solve_log(out.file("solve_log.csv")?, &run.solves).map_err(runtime)?;
            let first = run.solves.first().map(|s| format!("{:e}", s.objective)).unwrap_or_default();
            write_summary(&mut out, &run.trajectory, &[("solves", run.solves.len().to_string()), ("first_solve_objective", first)])?;
            let timing: Vec<serde_json::Value> = run.solves.iter().map(|s| serde_json::json!({ "t": s.t, "wall_s": s.wall_s })).collect();
            out.text("solve_timing.json", &(serde_json::to_string_pretty(&timing).map_err(runtime)? + "\n"))?;
            out.finish("mpc-run", args, ctx.config_paths, vec![common.seed], t0)
        }
        Cmd::Train { algo, common, steps, eval_every, hyper } => {
            let ctx = common.resolve()?;
            let algo: Algo = algo.into();
            if eval_every == 0 {
                return Err(usage("--eval-every must be positive"));
            }
            let hyper: AgentHyper = match &hyper {
                Some(p) => read_json(p)?,
                None => AgentHyper::default_for(algo, ctx.cfg.case_label),
            };
            if hyper.algo() != algo {
                return Err(usage(format!("hyper-parameter file is for {}", hyper.algo().name())));
            }
            let data = common.scenario(&ctx)?;
            let tc = TrainConfig { total_steps: steps, eval_every, seed: common.seed };
            let (agent, curve) = train(&ctx.cfg, data, hyper, &tc).map_err(runtime)?;
            let mut out = Output::create(&common.out)?;
            write_learning_curve_csv(out.file("learning_curve.csv")?, &curve).map_err(runtime)?;
            out.text("agent.json", &(agent.to_checkpoint(common.seed, steps).to_json() + "\n"))?;
            out.finish("train", args, ctx.config_paths, vec![common.seed], t0)
        }
        Cmd::Evaluate { common, checkpoint, weeks } => {
            let ctx = common.resolve()?;
            let mut agent = load_checkpoint(&checkpoint, &ctx.cfg)?;
            let data = common.scenario(&ctx)?;
            let spw = data.steps_per_week();
            check_window(&data, data.eval_start(), weeks * spw, 0)?;
            let cfg = &ctx.cfg;
            let spec = agent.spec().clone();
            let mut windows = vec![("held_out".to_string(), data.eval_start(), weeks * spw)];
            windows.extend(data.curve_eval_starts().into_iter().map(|s| (format!("curve_week_{}", s / spw), s, spw)));
            let mut rows = Vec::new();
            let mut held_out = None;
            for (name, start, len) in windows {
                let mut ctl = PolicyController { spec: &spec, policy: &mut agent };
                let traj = run_episode(&mut ctl, SystemState::initial(cfg, start, 0.5), len, data.as_ref(), cfg).map_err(runtime)?;
                rows.push([name, start.to_string(), len.to_string(), format!("{:e}", traj.objective), format!("{:e}", traj.cost), format!("{:e}", traj.comfort)]);
                held_out.get_or_insert(traj);
            }
            let mut out = Output::create(&common.out)?;
            let mut w = csv::Writer::from_writer(out.file("evaluation.csv")?);
            w.write_record(["window", "start", "steps", "objective", "cost", "comfort_wh"]).map_err(runtime)?;
            for r in rows {
                w.write_record(&r).map_err(runtime)?;
            }
            w.flush().map_err(runtime)?;
            drop(w);
            write_trajectory_csv(out.file("trajectory.csv")?, &held_out.expect("one window"), cfg).map_err(runtime)?;
            out.finish("evaluate", args, ctx.config_paths, vec![common.seed], t0)
        }
        Cmd::Benchmark { common, weeks, seeds, train_steps, eval_every, controllers, jobs, full_year, mpc } => {
            let ctx = common.resolve()?;
            let controllers = if controllers.is_empty() {
                ControllerKind::ALL.to_vec()
            } else {
                controllers.iter().map(|c| c.parse()).collect::<Result<Vec<ControllerKind>, _>>().map_err(usage)?
            };
            let bc = BenchConfig {
                weeks,
                full_year,
                seeds: (0..seeds as u64).map(|i| common.seed + i).collect(),
                controllers,
                train_steps,
                eval_every,
                mpc: mpc.config(Foresight::Perfect, false),
                jobs,
                data: ctx.source.clone(),
                ..BenchConfig::default()
            };
            bc.validate().map_err(usage)?;
            let report = run_benchmark(&ctx.cfg, &bc, &AgentPool::new()).map_err(runtime)?;
            let mut out = Output::create(&common.out)?;
            report.write_csv(out.file("report.csv")?).map_err(runtime)?;
            report.write_seed_csv(out.file("per_seed.csv")?).map_err(runtime)?;
            report.write_curves_csv(out.file("learning_curves.csv")?).map_err(runtime)?;
            let table = report.text_table();
            print!("{table}");
            out.text("report.txt", &table)?;
            out.text("runtime.json", &(report.runtime_json() + "\n"))?;
            out.finish("benchmark", args, ctx.config_paths, bc.seeds.clone(), t0)
        }
        Cmd::Hpo { algo, common, trials, budget, space } => {
            let ctx = common.resolve()?;
            let algo: Algo = algo.into();
            let space: HyperSpace = match &space {
                Some(p) => read_json(p)?,
                None => HyperSpace::default_for(algo),
            };
            if space.algo != algo {
                return Err(usage(format!("search space is for {}", space.algo.name())));
            }
            space.validate().map_err(usage)?;
            if trials == 0 {
                return Err(usage("--trials must be at least 1"));
            }
            let data = common.scenario(&ctx)?;
            let res = random_search(&ctx.cfg, data, &space, trials, budget, common.seed).map_err(runtime)?;
            let mut out = Output::create(&common.out)?;
            res.write_history_csv(out.file("history.csv")?).map_err(runtime)?;
            out.text("best.json", &(serde_json::to_string_pretty(&res.best).map_err(runtime)? + "\n"))?;
            out.finish("hpo", args, ctx.config_paths, vec![common.seed], t0)
        }
        Cmd::Plot { kind, input, out } => {
            if !input.is_file() {
                return Err(usage(format!("{} is not a file", input.display())));
            }
            let svg = match kind {
                PlotKind::LearningCurve => plot::learning_curve_svg(&input),
                PlotKind::Dispatch => plot::dispatch_svg(&input),
            }
            .map_err(runtime)?;
            let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
            let mut o = Output::create(&out)?;
            o.text(&format!("{stem}.svg"), &svg)?;
            o.finish("plot", args, vec![input.display().to_string()], vec![], t0)
        }
    }
}
