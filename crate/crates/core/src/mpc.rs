//! Receding-horizon linear MPC on top of the in-house MILP solver.
//!
//! The optimisation model uses nominal (part-load independent) efficiencies
//! and ignores storage derating, so by default it differs from the plant it
//! controls. Quantities inside the MILP are in MW and MWh.

use std::io::Write;
use std::time::Instant;

use mesbench_milp::{solve_milp, LpProblem, MilpError, MilpLimits, MilpProblem, RowSense, Status};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, ForecastSet, Scenario};
use crate::model::{project_action, AssetKind, Carrier, ConfigError, ControlAction, MesConfig, SystemState, J_PER_WH};
use crate::plant::{observe, pv_power, step, wind_power, ExoSource, ExogenousFrame, PlantError, Trajectory};

const MW: f64 = 1e6;
/// Heat-balance slack price on retry, as a multiple of the comfort weight.
pub const SLACK_PRICE_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure at step {t}: {reason}")]
    Solver { t: usize, reason: String },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Foresight {
    Perfect,
    Realistic(ForecastSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Prediction horizon N, steps.
    pub n_steps: usize,
    /// Control horizon C, steps.
    pub c_steps: usize,
    pub foresight: Foresight,
    pub limits: MilpLimits,
    /// Run against a plant with κ = 0 and no derating.
    pub model_equals_plant: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            n_steps: 288,
            c_steps: 96,
            foresight: Foresight::Perfect,
            limits: MilpLimits { max_nodes: 1_000, gap_tol: 1e-3 },
            model_equals_plant: false,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.c_steps == 0 || self.c_steps > self.n_steps {
            return Err(ConfigError { violations: vec![format!("need 1 <= C ({}) <= N ({})", self.c_steps, self.n_steps)] });
        }
        Ok(())
    }
}

/// Copy of `cfg` whose plant behaves exactly like the MPC model.
pub fn linearized(cfg: &MesConfig) -> MesConfig {
    let mut c = cfg.clone();
    for a in &mut c.assets {
        a.eta.kappa = 0.0;
        a.eta.derate_band = 0.0;
    }
    c
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepVars {
    /// (asset index, output index, column)
    pub outputs: Vec<(usize, usize, usize)>,
    /// (asset index, binary column)
    pub on: Vec<(usize, usize)>,
    /// (asset index, charge, discharge, SoC at end of step)
    pub storage: Vec<(usize, usize, usize, usize)>,
    pub gas: Option<usize>,
    pub import: Option<usize>,
    pub export: Option<usize>,
    /// (surplus, deficit) heat slack columns, present only when softened.
    pub heat_slack: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub steps: Vec<StepVars>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub wall_s: f64,
    pub nodes: usize,
    pub gap: f64,
    pub softened: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub actions: Vec<ControlAction>,
    /// currency
    pub objective: f64,
    pub stats: SolveStats,
}

fn single_setpoint_scale(a: &crate::model::AssetSpec, k: usize) -> f64 {
    a.outputs[k].p_nom / a.outputs[0].p_nom
}

/// Builds the N-step MILP from `x0` over the given forecast frames.
pub fn build_problem(
    cfg: &MesConfig,
    forecasts: &[ExogenousFrame],
    x0: &SystemState,
    n: usize,
    soften_heat: bool,
) -> Result<(MilpProblem, VarMap), ConfigError> {
    if forecasts.len() < n {
        return Err(ConfigError { violations: vec![format!("forecast covers {} of {n} steps", forecasts.len())] });
    }
    for a in &cfg.assets {
        if !a.controllable && (a.outputs.len() != 1 || a.outputs[0].carrier != Carrier::Heat) {
            return Err(ConfigError { violations: vec![format!("{}: unsupported non-controllable converter", a.id)] });
        }
    }
    let dt_h = cfg.grid.dt_h();
    let w = cfg.reward_weights;
    let has_grid_el = cfg.assets.iter().any(|a| a.kind == AssetKind::GridElectric);
    let has_gas = cfg.assets.iter().any(|a| a.inputs.contains(&Carrier::NaturalGas));
    let touches = |c: Carrier| cfg.assets.iter().any(|a| a.outputs.iter().any(|o| o.carrier == c) || a.inputs.contains(&c));

    let mut p = MilpProblem::new(LpProblem::new());
    let mut steps = Vec::with_capacity(n);
    let mut prev_soc: Vec<(usize, usize)> = Vec::new();

    for (k, f) in forecasts.iter().take(n).enumerate() {
        let mut sv = StepVars::default();
        let mut el_terms: Vec<(usize, f64)> = Vec::new();
        let mut th_terms: Vec<(usize, f64)> = Vec::new();
        let mut gas_terms: Vec<(usize, f64)> = Vec::new();
        let mut renewables = 0.0;

        let gas = if has_gas {
            let price = w.a * dt_h * cfg.gas_price * MW;
            let g = p.base.add_named_var(format!("gas_{k}"), price, 0.0, f64::INFINITY);
            sv.gas = Some(g);
            gas_terms.push((g, 1.0));
            Some(g)
        } else {
            None
        };

        for (ai, a) in cfg.assets.iter().enumerate() {
            match a.kind {
                AssetKind::Wind => renewables += wind_power(f.wind_speed, a) / MW,
                AssetKind::Pv => renewables += pv_power(f.irradiance, a) / MW,
                AssetKind::GridElectric => {
                    let price = w.a * dt_h * f.x_el * MW;
                    let imp = p.base.add_named_var(format!("imp_{k}"), price, 0.0, f64::INFINITY);
                    let exp = p.base.add_named_var(format!("exp_{k}"), -price, 0.0, f64::INFINITY);
                    el_terms.push((imp, 1.0));
                    el_terms.push((exp, -1.0));
                    sv.import = Some(imp);
                    sv.export = Some(exp);
                }
                AssetKind::GridGas => {}
                _ if a.is_storage() => {
                    let rate = a.p_rate() / MW;
                    let e_max = a.e_nom / J_PER_WH / MW;
                    let ch = p.base.add_named_var(format!("{}_ch_{k}", a.id), 0.0, 0.0, rate);
                    let dis = p.base.add_named_var(format!("{}_dis_{k}", a.id), 0.0, 0.0, rate);
                    let soc = p.base.add_named_var(format!("{}_soc_{k}", a.id), 0.0, 0.0, e_max);
                    // soc_k - soc_{k-1} - eta_c ch dt + dis dt / eta_d = 0 (soc_{-1} = x0)
                    let mut row = vec![(soc, 1.0), (ch, -a.eta.charge * dt_h), (dis, dt_h / a.eta.discharge)];
                    let rhs = match prev_soc.iter().find(|(i, _)| *i == ai) {
                        Some(&(_, col)) => {
                            row.push((col, -1.0));
                            0.0
                        }
                        None => x0.soc.get(&a.id).copied().unwrap_or(0.0) / J_PER_WH / MW,
                    };
                    p.base.add_row(row, RowSense::Eq, rhs);
                    let terms = if a.outputs[0].carrier == Carrier::Heat { &mut th_terms } else { &mut el_terms };
                    terms.push((dis, 1.0));
                    terms.push((ch, -1.0));
                    sv.storage.push((ai, ch, dis, soc));
                }
                _ if a.is_converter() => {
                    let semi = a.p_min_frac > 0.0;
                    let on = semi.then(|| {
                        let d = p.add_named_binary(format!("{}_on_{k}", a.id), 0.0);
                        sv.on.push((ai, d));
                        d
                    });
                    let free = a.dual_setpoint || a.outputs.len() == 1;
                    let mut cols = Vec::new();
                    if free {
                        for (oi, o) in a.outputs.iter().enumerate() {
                            let c = p.base.add_named_var(format!("{}_{}_{k}", a.id, o.carrier.short()), 0.0, 0.0, o.p_nom / MW);
                            cols.push((oi, c, 1.0));
                        }
                    } else {
                        let o = &a.outputs[0];
                        let c = p.base.add_named_var(format!("{}_{}_{k}", a.id, o.carrier.short()), 0.0, 0.0, o.p_nom / MW);
                        for oi in 0..a.outputs.len() {
                            cols.push((oi, c, single_setpoint_scale(a, oi)));
                        }
                    }
                    let mut seen = Vec::new();
                    for &(oi, c, scale) in &cols {
                        let o = &a.outputs[oi];
                        match o.carrier {
                            Carrier::Heat => th_terms.push((c, scale)),
                            Carrier::Electricity => el_terms.push((c, scale)),
                            Carrier::NaturalGas => gas_terms.push((c, -scale)),
                        }
                        let eta = a.eta_nominal(oi);
                        match a.inputs[0] {
                            Carrier::NaturalGas => gas_terms.push((c, -scale / eta)),
                            Carrier::Electricity => el_terms.push((c, -scale / eta)),
                            Carrier::Heat => th_terms.push((c, -scale / eta)),
                        }
                        if !seen.contains(&c) {
                            seen.push(c);
                            sv.outputs.push((ai, oi, c));
                            if let Some(d) = on {
                                let (pmin, pn) = (a.p_min(oi) / MW, o.p_nom / MW);
                                p.base.add_row([(c, 1.0), (d, -pn)], RowSense::Le, 0.0);
                                p.base.add_row([(c, 1.0), (d, -pmin)], RowSense::Ge, 0.0);
                            }
                        }
                    }
                    if a.kind == AssetKind::Chp && free {
                        let ie = a.output_index(Carrier::Electricity).unwrap();
                        let ih = a.output_index(Carrier::Heat).unwrap();
                        let (pc, qc) = (cols[ie].1, cols[ih].1);
                        let (pn, qn) = (a.outputs[ie].p_nom / MW, a.outputs[ih].p_nom / MW);
                        let back = crate::plant::CHP_BACKPRESSURE * qn;
                        // Q <= Qn/Pn P + 0.2 Qn (δ), the back-pressure line
                        match on {
                            Some(d) => p.base.add_row([(qc, 1.0), (pc, -qn / pn), (d, -back)], RowSense::Le, 0.0),
                            None => p.base.add_row([(qc, 1.0), (pc, -qn / pn)], RowSense::Le, back),
                        };
                    }
                }
                _ => {}
            }
        }

        if soften_heat {
            let price = SLACK_PRICE_FACTOR * w.b * dt_h * MW;
            let sp = p.base.add_named_var(format!("heat_surplus_{k}"), price, 0.0, f64::INFINITY);
            let sm = p.base.add_named_var(format!("heat_deficit_{k}"), price, 0.0, f64::INFINITY);
            th_terms.push((sp, -1.0));
            th_terms.push((sm, 1.0));
            sv.heat_slack = Some((sp, sm));
        }
        if touches(Carrier::Electricity) || f.e_el_demand != 0.0 {
            p.base.add_row(el_terms, RowSense::Eq, f.e_el_demand / MW - renewables);
        }
        if touches(Carrier::Heat) || f.e_th_demand != 0.0 {
            p.base.add_row(th_terms, RowSense::Eq, f.e_th_demand / MW);
        }
        if gas.is_some() {
            p.base.add_row(gas_terms, RowSense::Eq, 0.0);
        }
        if !has_grid_el {
            sv.import = None;
        }
        prev_soc = sv.storage.iter().map(|&(ai, _, _, soc)| (ai, soc)).collect();
        steps.push(sv);
    }
    Ok((p, VarMap { steps }))
}

/// Reads the per-step actions out of a MILP solution. Values are cleaned so
/// that they are fixed points of `project_action`.
pub fn extract_actions(cfg: &MesConfig, map: &VarMap, x: &[f64]) -> Vec<ControlAction> {
    map.steps
        .iter()
        .map(|sv| {
            let mut act = ControlAction::zeros(cfg);
            for &(ai, oi, col) in &sv.outputs {
                let a = &cfg.assets[ai];
                if !a.controllable {
                    continue;
                }
                let on = sv.on.iter().find(|(i, _)| *i == ai).map_or(true, |&(_, d)| x[d] > 0.5);
                let pn = a.outputs[oi].p_nom;
                let v = if on { (x[col] * MW).clamp(a.p_min(oi), pn) } else { 0.0 };
                let key = if a.dual_setpoint { format!("{}:{}", a.id, a.outputs[oi].carrier.short()) } else { a.id.clone() };
                act.setpoints.insert(key, v);
            }
            for &(ai, ch, dis, _) in &sv.storage {
                let a = &cfg.assets[ai];
                let rate = a.p_rate();
                act.setpoints.insert(a.id.clone(), ((x[dis] - x[ch]) * MW).clamp(-rate, rate));
            }
            act
        })
        .collect()
}

/// Solves one horizon; retries once with softened heat balances.
pub fn plan(
    cfg: &MesConfig,
    forecasts: &[ExogenousFrame],
    x0: &SystemState,
    n: usize,
    limits: &MilpLimits,
) -> Result<MpcPlan, MpcError> {
    let started = Instant::now();
    let mut nodes = 0;
    for soften in [false, true] {
        let (prob, map) = build_problem(cfg, forecasts, x0, n, soften)?;
        match solve_milp(&prob, limits) {
            Ok(sol) if matches!(sol.status, Status::Optimal | Status::GapLimit) => {
                nodes += sol.node_count;
                return Ok(MpcPlan {
                    actions: extract_actions(cfg, &map, &sol.x),
                    objective: sol.objective,
                    stats: SolveStats { wall_s: started.elapsed().as_secs_f64(), nodes, gap: sol.gap, softened: soften },
                });
            }
            Ok(sol) if sol.status == Status::Infeasible && !soften => nodes += sol.node_count,
            Ok(sol) => return Err(MpcError::Solver { t: x0.cursor, reason: format!("status {:?}", sol.status) }),
            Err(MilpError::NoIncumbent) if !soften => {}
            Err(e) => return Err(MpcError::Solver { t: x0.cursor, reason: e.to_string() }),
        }
    }
    unreachable!("the softened problem is always retried")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub t: usize,
    pub n: usize,
    pub c: usize,
    pub nodes: usize,
    pub objective: f64,
    pub softened: bool,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct MpcRun {
    pub trajectory: Trajectory,
    pub solves: Vec<SolveRecord>,
}

impl MpcRun {
    pub fn objective(&self) -> f64 {
        self.trajectory.objective
    }

    pub fn mean_step_wall_s(&self) -> f64 {
        let steps = self.trajectory.steps.len().max(1);
        self.solves.iter().map(|s| s.wall_s).sum::<f64>() / steps as f64
    }
}

/// Closed-loop receding-horizon run over `[start, start + len)`: measure the
/// plant state, solve over N forecast steps, apply the first C actions to
/// the plant, repeat.
pub fn receding_horizon_run(
    cfg: &MesConfig,
    mpc: &MpcConfig,
    data: &Scenario,
    start: usize,
    len: usize,
    soc_frac: f64,
) -> Result<MpcRun, MpcError> {
    mpc.validate()?;
    let plant_cfg = if mpc.model_equals_plant { linearized(cfg) } else { cfg.clone() };
    let mut state = SystemState::initial(&plant_cfg, start, soc_frac);
    let mut trajectory = Trajectory::default();
    let mut solves = Vec::new();
    while trajectory.steps.len() < len {
        let t = state.cursor;
        if t + mpc.n_steps > data.len() {
            return Err(DataError::Range { start: t, end: t + mpc.n_steps, len: data.len() }.into());
        }
        let frames = match &mpc.foresight {
            Foresight::Perfect => (t..t + mpc.n_steps).map(|i| data.frame(i)).collect(),
            Foresight::Realistic(set) => set.frames(data, t, mpc.n_steps)?,
        };
        observe(&mut state, &data.frame(t), &plant_cfg);
        let p = plan(cfg, &frames, &state, mpc.n_steps, &mpc.limits)?;
        let apply = mpc.c_steps.min(len - trajectory.steps.len());
        for action in p.actions.into_iter().take(apply) {
            let at = state.cursor;
            let exo = data.frame(at);
            observe(&mut state, &exo, &plant_cfg);
            let action = project_action(&action, &plant_cfg).map_err(PlantError::from)?;
            let r = step(&state, &action, &exo, &plant_cfg)?;
            trajectory.push(&plant_cfg, at, exo, action, &r);
            state = r.next;
        }
        solves.push(SolveRecord {
            t: t - start,
            n: mpc.n_steps,
            c: mpc.c_steps,
            nodes: p.stats.nodes,
            objective: p.objective,
            softened: p.stats.softened,
            wall_s: p.stats.wall_s,
        });
    }
    Ok(MpcRun { trajectory, solves })
}

/// Per-solve log without timings, so reruns are byte-identical.
pub fn write_solve_log<W: Write>(out: W, solves: &[SolveRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "n", "c", "node_count", "objective", "softened"])?;
    for s in solves {
        w.write_record([
            s.t.to_string(),
            s.n.to_string(),
            s.c.to_string(),
            s.nodes.to_string(),
            format!("{:.9}", s.objective),
            s.softened.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_solve_timing<W: Write>(out: W, solves: &[SolveRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "wall_s"])?;
    for s in solves {
        w.write_record([s.t.to_string(), format!("{:.6}", s.wall_s)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MesConfig;

    fn boiler_only() -> MesConfig {
        MesConfig::from_toml_str(
            r#"
case_label = "simple"
gas_price = 2.0e-5
grid = { start_epoch = 0, step_s = 1800, n_steps = 2 }
reward_weights = { a = 1.0, b = 2.4e-4 }

[[assets]]
id = "grid_el"
kind = "grid_electric"
outputs = [{ carrier = "electricity", p_nom = inf }]

[[assets]]
id = "grid_gas"
kind = "grid_gas"
outputs = [{ carrier = "natural_gas", p_nom = inf }]

[[assets]]
id = "boiler"
kind = "boiler"
outputs = [{ carrier = "heat", p_nom = 4.0e6 }]
inputs = ["natural_gas"]
p_min_frac = 0.1
eta = { nominal = [0.92], kappa = 0.1 }
"#,
        )
        .unwrap()
    }

    fn heat_frames(demand_mw: &[f64]) -> Vec<ExogenousFrame> {
        demand_mw
            .iter()
            .map(|d| ExogenousFrame { wind_speed: 0.0, irradiance: 0.0, e_th_demand: d * 1e6, e_el_demand: 0.0, x_el: 1e-4 })
            .collect()
    }

    #[test]
    fn boiler_only_two_steps() {
        let cfg = boiler_only();
        let x0 = SystemState::initial(&cfg, 0, 0.5);
        let (p, map) = build_problem(&cfg, &heat_frames(&[1.0, 2.0]), &x0, 2, false).unwrap();
        assert_eq!(p.int_vars.len(), 2);
        let outputs: Vec<usize> = map.steps.iter().flat_map(|s| s.outputs.iter().map(|o| o.2)).collect();
        assert_eq!(outputs.len(), 2);
        assert!(outputs.iter().all(|j| !p.int_vars.contains(j)));
        let gas: Vec<usize> = map.steps.iter().map(|s| s.gas.unwrap()).collect();
        let eq_rows_with = |j: usize| p.base.rows.iter().filter(|r| r.sense == RowSense::Eq && r.coefs.iter().any(|c| c.0 == j)).count();
        for (&q, &g) in outputs.iter().zip(&gas) {
            // heat balance and gas link
            assert_eq!(eq_rows_with(q), 2);
            assert_eq!(eq_rows_with(g), 1);
        }
        let heat_rows: Vec<f64> = p.base.rows.iter().filter(|r| r.coefs.len() == 1 && r.sense == RowSense::Eq).map(|r| r.rhs).collect();
        assert_eq!(heat_rows, vec![1.0, 2.0]);

        let plan = plan(&cfg, &heat_frames(&[1.0, 2.0]), &x0, 2, &MilpLimits::default()).unwrap();
        let expected = (1.0 + 2.0) / 0.92 * 0.5 * 2.0e-5 * 1e6;
        assert!((plan.objective - expected).abs() < 1e-9 * expected, "{} vs {expected}", plan.objective);
        assert!((plan.actions[0].get("boiler") - 1e6).abs() < 1e-3);
        assert!((plan.actions[1].get("boiler") - 2e6).abs() < 1e-3);
    }

    #[test]
    fn zero_demand_switches_everything_off() {
        let cfg = boiler_only();
        let x0 = SystemState::initial(&cfg, 0, 0.5);
        let plan = plan(&cfg, &heat_frames(&[0.0, 0.0]), &x0, 2, &MilpLimits::default()).unwrap();
        assert_eq!(plan.objective, 0.0);
        assert!(plan.actions.iter().all(|a| a.get("boiler") == 0.0));
    }

    #[test]
    fn initial_soc_enters_only_the_first_link() {
        let cfg = MesConfig::preset("case2").unwrap();
        let x0 = SystemState::initial(&cfg, 0, 0.3);
        let data = Scenario::synthetic(&cfg, 1);
        let frames: Vec<ExogenousFrame> = (0..4).map(|i| data.frame(i)).collect();
        let (p, map) = build_problem(&cfg, &frames, &x0, 4, false).unwrap();
        for s in cfg.storages() {
            let ai = cfg.assets.iter().position(|a| a.id == s.id).unwrap();
            let x0_mwh = 0.3 * s.e_nom / J_PER_WH / MW;
            for (k, sv) in map.steps.iter().enumerate() {
                let soc = sv.storage.iter().find(|t| t.0 == ai).unwrap().3;
                let ch = sv.storage.iter().find(|t| t.0 == ai).unwrap().1;
                let link = p.base.rows.iter().find(|r| r.coefs.contains(&(soc, 1.0)) && r.coefs.iter().any(|c| c.0 == ch)).unwrap();
                if k == 0 {
                    assert_eq!(link.rhs, x0_mwh);
                    assert_eq!(link.coefs.len(), 3);
                } else {
                    assert_eq!(link.rhs, 0.0);
                    assert_eq!(link.coefs.len(), 4);
                }
            }
        }
    }

    #[test]
    fn plan_actions_are_projection_fixed_points() {
        for case in ["case1", "case2"] {
            let cfg = MesConfig::preset(case).unwrap();
            let data = Scenario::synthetic(&cfg, 2);
            let x0 = SystemState::initial(&cfg, 0, 0.5);
            let frames: Vec<ExogenousFrame> = (0..24).map(|i| data.frame(i)).collect();
            let plan = plan(&cfg, &frames, &x0, 24, &MpcConfig::default().limits).unwrap();
            for a in &plan.actions {
                assert_eq!(&project_action(a, &cfg).unwrap(), a, "{case}");
            }
        }
    }

    #[test]
    fn open_loop_equals_closed_loop_when_model_is_exact() {
        let cfg = MesConfig::preset("case2").unwrap();
        let data = Scenario::synthetic(&cfg, 3);
        let n = 48;
        let mpc = MpcConfig { n_steps: n, c_steps: n, model_equals_plant: true, ..MpcConfig::default() };
        let run = receding_horizon_run(&cfg, &mpc, &data, 100, n, 0.5).unwrap();
        assert_eq!(run.solves.len(), 1);
        let open = run.solves[0].objective;
        let closed = run.objective();
        assert!(((closed - open) / open.abs()).abs() < 1e-5, "closed {closed} open {open}");
    }

    #[test]
    fn rejects_bad_horizons() {
        let mpc = MpcConfig { n_steps: 4, c_steps: 5, ..MpcConfig::default() };
        assert!(mpc.validate().is_err());
        let mpc = MpcConfig { n_steps: 4, c_steps: 0, ..MpcConfig::default() };
        assert!(mpc.validate().is_err());
    }

    #[test]
    fn solve_log_has_no_timing_column() {
        let rec = SolveRecord { t: 0, n: 4, c: 2, nodes: 3, objective: 1.5, softened: false, wall_s: 0.25 };
        let mut buf = Vec::new();
        write_solve_log(&mut buf, &[rec.clone()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,n,c,node_count,objective,softened\n0,4,2,3,1.500000000,false\n");
        let mut buf = Vec::new();
        write_solve_timing(&mut buf, &[rec]).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("0.250000"));
    }

    /// Myopic baseline: a one-step MILP every step.
    fn greedy(mpc: &MpcConfig) -> MpcConfig {
        MpcConfig { n_steps: 1, c_steps: 1, ..mpc.clone() }
    }

    #[test]
    fn lookahead_beats_myopic_dispatch() {
        let cfg = MesConfig::preset("case1").unwrap();
        for seed in [1, 2] {
            let data = Scenario::synthetic(&cfg, seed);
            let mpc = MpcConfig { n_steps: 96, c_steps: 24, model_equals_plant: true, ..MpcConfig::default() };
            let start = 96 * (30 + 40 * seed as usize);
            let long = receding_horizon_run(&cfg, &mpc, &data, start, 96, 0.5).unwrap();
            let short = receding_horizon_run(&cfg, &greedy(&mpc), &data, start, 96, 0.5).unwrap();
            assert!(long.objective() <= short.objective() * (1.0 + 1e-3), "seed {seed}: {} vs {}", long.objective(), short.objective());
        }
    }
}
