//! Discrete-time plant: asset dynamics, carrier balances, cost and comfort
//! accounting, and episode execution.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    project_action, snap_semicontinuous, stage_objective, AssetKind, AssetSpec, Carrier, ControlAction, LossTerms,
    MesConfig, ModelError, SystemState, J_PER_WH,
};

pub const WIND_CUT_IN: f64 = 3.0;
pub const WIND_RATED: f64 = 12.0;
pub const WIND_CUT_OUT: f64 = 25.0;
/// Irradiance at which PV reaches its rating, W/m².
pub const PV_RATING: f64 = 1000.0;
/// SoC slack tolerated on entry to [`step`], J.
const SOC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("state error: {0}")]
    State(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("exogenous data ends at {len}, step {at} requested")]
    Data { at: usize, len: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ExogenousFrame {
    /// m/s
    pub wind_speed: f64,
    /// W/m²
    pub irradiance: f64,
    pub e_th_demand: f64,
    pub e_el_demand: f64,
    /// currency/Wh
    pub x_el: f64,
}

pub trait ExoSource {
    fn len(&self) -> usize;
    fn frame(&self, i: usize) -> ExogenousFrame;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ExoSource for [ExogenousFrame] {
    fn len(&self) -> usize {
        <[ExogenousFrame]>::len(self)
    }

    fn frame(&self, i: usize) -> ExogenousFrame {
        self[i]
    }
}

pub fn wind_power(speed: f64, spec: &AssetSpec) -> f64 {
    let p_nom = spec.outputs[0].p_nom;
    if !(speed > WIND_CUT_IN && speed <= WIND_CUT_OUT) {
        0.0
    } else if speed >= WIND_RATED {
        p_nom
    } else {
        p_nom * (speed.powi(3) - WIND_CUT_IN.powi(3)) / (WIND_RATED.powi(3) - WIND_CUT_IN.powi(3))
    }
}

pub fn pv_power(irradiance: f64, spec: &AssetSpec) -> f64 {
    let p_nom = spec.outputs[0].p_nom;
    (p_nom * irradiance.max(0.0) / PV_RATING).min(p_nom)
}

pub fn part_load_eta(nominal: f64, kappa: f64, load: f64) -> f64 {
    let l = load.clamp(0.0, 1.0);
    nominal * (1.0 - kappa * (1.0 - l) * (1.0 - l))
}

/// Realised flows of one asset over a step, W. Storages and the electricity
/// grid report signed outputs (positive = delivered to the site).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssetFlow {
    pub inputs: Vec<(Carrier, f64)>,
    pub outputs: Vec<(Carrier, f64)>,
}

impl AssetFlow {
    pub fn output(&self, c: Carrier) -> f64 {
        self.outputs.iter().filter(|(k, _)| *k == c).map(|(_, v)| v).sum()
    }

    pub fn input(&self, c: Carrier) -> f64 {
        self.inputs.iter().filter(|(k, _)| *k == c).map(|(_, v)| v).sum()
    }
}

fn closest_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return a;
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (a.0 + t * dx, a.1 + t * dy)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Back-pressure slack of the extraction CHP, as a fraction of rated heat.
pub const CHP_BACKPRESSURE: f64 = 0.2;

/// Orthogonal projection of an electrical/thermal request onto the CHP
/// operating region {0} ∪ {p_min ≤ P ≤ P_n, 0 ≤ Q ≤ min(Q_n, Q_n P / P_n + 0.2 Q_n)}.
pub fn chp_project(p: f64, q: f64, spec: &AssetSpec) -> (f64, f64) {
    let ie = spec.output_index(Carrier::Electricity).expect("chp electricity output");
    let ih = spec.output_index(Carrier::Heat).expect("chp heat output");
    let (pn, qn) = (spec.outputs[ie].p_nom, spec.outputs[ih].p_nom);
    let pmin = spec.p_min(ie);
    let ceiling = |pp: f64| (qn * pp / pn + CHP_BACKPRESSURE * qn).min(qn);
    let eps = 1e-9 * (pn + qn);
    let inside = p >= pmin - eps && p <= pn + eps && q >= -eps && q <= ceiling(p) + eps;
    if (p == 0.0 && q == 0.0) || inside {
        return (p, q);
    }
    let knee = (1.0 - CHP_BACKPRESSURE) * pn;
    let mut verts = vec![(pmin, 0.0), (pn, 0.0), (pn, qn)];
    if knee > pmin {
        verts.push((knee, qn));
    }
    verts.push((pmin, ceiling(pmin)));
    let target = (p, q);
    let mut best = verts[0];
    let mut best_d = f64::INFINITY;
    for k in 0..verts.len() {
        let c = closest_on_segment(target, verts[k], verts[(k + 1) % verts.len()]);
        let d = dist2(target, c);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    if dist2(target, (0.0, 0.0)) < best_d {
        (0.0, 0.0)
    } else {
        best
    }
}

/// Applies per-output setpoints (W, same order as `spec.outputs`) to a
/// converter and returns realised outputs and the fuel or electricity drawn.
pub fn converter_step(setpoints: &[f64], spec: &AssetSpec) -> AssetFlow {
    let mut out: Vec<f64> =
        spec.outputs.iter().zip(setpoints).map(|(o, &s)| if s.is_finite() { s.clamp(0.0, o.p_nom) } else { 0.0 }).collect();
    if spec.kind == AssetKind::Chp {
        let ie = spec.output_index(Carrier::Electricity).expect("chp electricity output");
        let ih = spec.output_index(Carrier::Heat).expect("chp heat output");
        let (p, q) = chp_project(out[ie], out[ih], spec);
        out[ie] = p;
        out[ih] = q;
    }
    let mut input = 0.0;
    for (k, o) in spec.outputs.iter().enumerate() {
        if out[k] > 0.0 {
            input += out[k] / part_load_eta(spec.eta_nominal(k), spec.eta.kappa, out[k] / o.p_nom);
        }
    }
    AssetFlow {
        inputs: vec![(spec.inputs[0], input)],
        outputs: spec.outputs.iter().zip(out).map(|(o, v)| (o.carrier, v)).collect(),
    }
}

/// Advances one storage by `dt` seconds. `power` is signed (positive
/// discharges). Returns the new SoC (J) and the realised power (W).
pub fn storage_step(soc: f64, power: f64, dt: f64, spec: &AssetSpec) -> (f64, f64) {
    let e_nom = spec.e_nom;
    let rate = spec.p_rate();
    let band = spec.eta.derate_band;
    let frac = (soc / e_nom).clamp(0.0, 1.0);
    let (eta_c, eta_d) = (spec.eta.charge, spec.eta.discharge);
    if power > 0.0 {
        let derate = if band > 0.0 { (frac / band).min(1.0) } else { 1.0 };
        let energy_cap = soc.max(0.0) * eta_d / dt;
        let p = power.min(rate * derate).min(energy_cap);
        ((soc - p * dt / eta_d).clamp(0.0, e_nom), p)
    } else if power < 0.0 {
        let derate = if band > 0.0 { ((1.0 - frac) / band).min(1.0) } else { 1.0 };
        let room = (e_nom - soc).max(0.0) / (eta_c * dt);
        let p = (-power).min(rate * derate).min(room);
        ((soc + p * eta_c * dt).clamp(0.0, e_nom), -p)
    } else {
        (soc, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub next: SystemState,
    pub loss: LossTerms,
    pub dispatch: BTreeMap<String, AssetFlow>,
    /// Signed: negative means export, W.
    pub grid_import_el: f64,
    pub gas_consumed: f64,
}

/// Refreshes the exogenous part of the observation from a data frame.
pub fn observe(state: &mut SystemState, exo: &ExogenousFrame, cfg: &MesConfig) {
    let mut p_wind = 0.0;
    let mut p_solar = 0.0;
    for a in &cfg.assets {
        match a.kind {
            AssetKind::Wind => p_wind += wind_power(exo.wind_speed, a),
            AssetKind::Pv => p_solar += pv_power(exo.irradiance, a),
            _ => {}
        }
    }
    state.obs.e_th = exo.e_th_demand;
    state.obs.e_el = exo.e_el_demand;
    state.obs.p_wind = p_wind;
    state.obs.p_solar = p_solar;
    state.obs.x_el = exo.x_el;
}

fn converter_setpoints(a: &AssetSpec, action: &ControlAction) -> Vec<f64> {
    if a.dual_setpoint {
        a.outputs.iter().map(|o| action.get(&format!("{}:{}", a.id, o.carrier.short()))).collect()
    } else {
        let s0 = action.get(&a.id);
        let p0 = a.outputs[0].p_nom;
        a.outputs.iter().map(|o| s0 * o.p_nom / p0).collect()
    }
}

/// One plant step. `action` must already be projected.
pub fn step(
    state: &SystemState,
    action: &ControlAction,
    exo: &ExogenousFrame,
    cfg: &MesConfig,
) -> Result<StepResult, PlantError> {
    for s in cfg.storages() {
        let soc = *state.soc.get(&s.id).ok_or_else(|| PlantError::State(format!("no SoC for `{}`", s.id)))?;
        if !(soc >= -SOC_TOL && soc <= s.e_nom + SOC_TOL) {
            return Err(PlantError::State(format!("SoC of `{}` is {soc} J, outside [0, {}]", s.id, s.e_nom)));
        }
    }
    let dt = cfg.grid.dt_s();
    let mut dispatch = BTreeMap::new();
    let mut next_soc = state.soc.clone();

    // renewables and controllable converters
    for a in &cfg.assets {
        let flow = match a.kind {
            AssetKind::Wind => AssetFlow { inputs: vec![], outputs: vec![(Carrier::Electricity, wind_power(exo.wind_speed, a))] },
            AssetKind::Pv => AssetFlow { inputs: vec![], outputs: vec![(Carrier::Electricity, pv_power(exo.irradiance, a))] },
            _ if a.is_converter() && a.controllable => converter_step(&converter_setpoints(a, action), a),
            _ => continue,
        };
        dispatch.insert(a.id.clone(), flow);
    }
    // residual-heat boiler
    for a in cfg.assets.iter().filter(|a| a.is_converter() && !a.controllable) {
        let q_other: f64 = dispatch.values().map(|f| f.output(Carrier::Heat)).sum();
        let pn = a.outputs[0].p_nom;
        let sp = snap_semicontinuous((exo.e_th_demand - q_other).clamp(0.0, pn), a.p_min(0), pn);
        dispatch.insert(a.id.clone(), converter_step(&[sp], a));
    }
    for s in cfg.storages() {
        let (soc, p) = storage_step(state.soc[&s.id], action.get(&s.id), dt, s);
        next_soc.insert(s.id.clone(), soc);
        let c = s.outputs[0].carrier;
        let flow = if p < 0.0 {
            AssetFlow { inputs: vec![(c, -p)], outputs: vec![(c, p)] }
        } else {
            AssetFlow { inputs: vec![(c, 0.0)], outputs: vec![(c, p)] }
        };
        dispatch.insert(s.id.clone(), flow);
    }

    // storages report signed outputs; their inputs column is informational
    let net = |c: Carrier| -> f64 {
        let mut sum = 0.0;
        for a in &cfg.assets {
            if let Some(f) = dispatch.get(&a.id) {
                sum += f.output(c);
                if !a.is_storage() {
                    sum -= f.input(c);
                }
            }
        }
        sum
    };
    let grid_import = exo.e_el_demand - net(Carrier::Electricity);
    let gas = -net(Carrier::NaturalGas);
    let q_total = net(Carrier::Heat);
    for a in &cfg.assets {
        match a.kind {
            AssetKind::GridElectric => {
                dispatch.insert(a.id.clone(), AssetFlow { inputs: vec![], outputs: vec![(Carrier::Electricity, grid_import)] });
            }
            AssetKind::GridGas => {
                dispatch.insert(a.id.clone(), AssetFlow { inputs: vec![], outputs: vec![(Carrier::NaturalGas, gas)] });
            }
            _ => {}
        }
    }

    let dt_h = cfg.grid.dt_h();
    let loss = LossTerms {
        l_cost: (grid_import * exo.x_el + gas * cfg.gas_price) * dt_h,
        l_comfort: (exo.e_th_demand - q_total).abs() * dt_h,
        q_produced: q_total,
    };
    let mut next = state.clone();
    next.t_index += 1;
    next.cursor += 1;
    next.soc = next_soc;
    next.obs.c_e += loss.l_cost;
    Ok(StepResult { next, loss, dispatch, grid_import_el: grid_import, gas_consumed: gas })
}

/// Supply minus demand of one carrier over a step's dispatch, W.
pub fn balance_residual(dispatch: &BTreeMap<String, AssetFlow>, cfg: &MesConfig, c: Carrier, demand: f64) -> f64 {
    let mut r = -demand;
    for a in &cfg.assets {
        if let Some(f) = dispatch.get(&a.id) {
            r += f.output(c);
            if !a.is_storage() {
                r -= f.input(c);
            }
        }
    }
    r
}

pub trait Controller {
    fn act(&mut self, state: &SystemState) -> ControlAction;
}

impl<F: FnMut(&SystemState) -> ControlAction> Controller for F {
    fn act(&mut self, state: &SystemState) -> ControlAction {
        self(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub cursor: usize,
    pub exo: ExogenousFrame,
    pub action: ControlAction,
    pub loss: LossTerms,
    pub dispatch: BTreeMap<String, AssetFlow>,
    pub grid_import_el: f64,
    pub gas_consumed: f64,
    /// SoC after the step, J.
    pub soc: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// Sum of `a * l_cost + b * l_comfort`.
    pub objective: f64,
    pub cost: f64,
    /// Wh
    pub comfort: f64,
}

impl Trajectory {
    pub fn push(&mut self, cfg: &MesConfig, cursor: usize, exo: ExogenousFrame, action: ControlAction, r: &StepResult) {
        self.objective += stage_objective(&r.loss, &cfg.reward_weights);
        self.cost += r.loss.l_cost;
        self.comfort += r.loss.l_comfort;
        self.steps.push(TrajectoryStep {
            cursor,
            exo,
            action,
            loss: r.loss,
            dispatch: r.dispatch.clone(),
            grid_import_el: r.grid_import_el,
            gas_consumed: r.gas_consumed,
            soc: r.next.soc.clone(),
        });
    }
}

/// Runs `n` steps from `start`, projecting every controller action first.
pub fn run_episode<D: ExoSource + ?Sized>(
    controller: &mut dyn Controller,
    start: SystemState,
    n: usize,
    data: &D,
    cfg: &MesConfig,
) -> Result<Trajectory, PlantError> {
    let mut traj = Trajectory::default();
    let mut state = start;
    for _ in 0..n {
        let at = state.cursor;
        if at >= data.len() {
            return Err(PlantError::Data { at, len: data.len() });
        }
        let exo = data.frame(at);
        observe(&mut state, &exo, cfg);
        let action = project_action(&controller.act(&state), cfg)?;
        let r = step(&state, &action, &exo, cfg)?;
        traj.push(cfg, at, exo, action, &r);
        state = r.next;
    }
    Ok(traj)
}

/// Writes one CSV row per step: powers in MW, energies in MWh, prices per MWh.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, cfg: &MesConfig) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string(), "step".to_string()];
    for a in &cfg.assets {
        for o in &a.outputs {
            header.push(format!("{}_{}_mw", a.id, o.carrier.short()));
        }
        if a.is_converter() {
            header.push(format!("{}_in_{}_mw", a.id, a.inputs[0].short()));
        }
    }
    for s in cfg.storages() {
        header.push(format!("{}_soc_mwh", s.id));
    }
    header.extend(
        ["e_th_mw", "e_el_mw", "x_el_per_mwh", "grid_import_el_mw", "gas_mw", "l_cost", "l_comfort_mwh"].map(String::from),
    );
    w.write_record(&header)?;
    for st in &traj.steps {
        let mut rec = vec![iso_timestamp(cfg.grid.timestamp(st.cursor)), st.cursor.to_string()];
        for a in &cfg.assets {
            let f = st.dispatch.get(&a.id).cloned().unwrap_or_default();
            for o in &a.outputs {
                rec.push(fmt_num(f.output(o.carrier) / 1e6));
            }
            if a.is_converter() {
                rec.push(fmt_num(f.input(a.inputs[0]) / 1e6));
            }
        }
        for s in cfg.storages() {
            rec.push(fmt_num(st.soc.get(&s.id).copied().unwrap_or(0.0) / J_PER_WH / 1e6));
        }
        rec.push(fmt_num(st.exo.e_th_demand / 1e6));
        rec.push(fmt_num(st.exo.e_el_demand / 1e6));
        rec.push(fmt_num(st.exo.x_el * 1e6));
        rec.push(fmt_num(st.grid_import_el / 1e6));
        rec.push(fmt_num(st.gas_consumed / 1e6));
        rec.push(fmt_num(st.loss.l_cost));
        rec.push(fmt_num(st.loss.l_comfort / 1e6));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt_num(v: f64) -> String {
    // fixed precision keeps files stable and diff-friendly
    let s = format!("{v:.9}");
    if s == "-0.000000000" {
        "0.000000000".to_string()
    } else {
        s
    }
}

pub fn iso_timestamp(epoch: i64) -> String {
    chrono::DateTime::from_timestamp(epoch, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| epoch.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MesConfig;
    use proptest::prelude::*;

    const MW: f64 = 1e6;
    const MWH: f64 = 3.6e9;

    fn case1() -> MesConfig {
        MesConfig::preset("case1").unwrap()
    }

    fn case2() -> MesConfig {
        MesConfig::preset("case2").unwrap()
    }

    fn flat(mut a: AssetSpec) -> AssetSpec {
        a.eta.kappa = 0.0;
        a
    }

    #[test]
    fn wind_curve() {
        let cfg = case1();
        let w = cfg.asset("wind").unwrap();
        assert_eq!(wind_power(0.0, w), 0.0);
        assert_eq!(wind_power(12.0, w), 5.0 * MW);
        assert_eq!(wind_power(26.0, w), 0.0);
        let expected = 5.0e6 * (216.0 - 27.0) / (1728.0 - 27.0);
        assert!((wind_power(6.0, w) - expected).abs() < 1e-6);
        assert!((wind_power(6.0, w) - 555_555.5).abs() < 1.0);
    }

    #[test]
    fn pv_curve() {
        let cfg = case1();
        let pv = cfg.asset("pv").unwrap();
        assert_eq!(pv_power(0.0, pv), 0.0);
        assert_eq!(pv_power(1000.0, pv), 3.0 * MW);
        assert_eq!(pv_power(500.0, pv), 1.5 * MW);
        assert_eq!(pv_power(1300.0, pv), 3.0 * MW);
    }

    #[test]
    fn converter_examples() {
        let cfg = case1();
        let chp = flat(cfg.asset("chp").unwrap().clone());
        let off = converter_step(&[0.0, 0.0], &chp);
        assert_eq!(off.input(Carrier::NaturalGas), 0.0);
        let full = converter_step(&[6.0 * MW, 6.0 * MW], &chp);
        let expected = 6.0 / 0.38 + 6.0 / 0.45;
        assert!((full.input(Carrier::NaturalGas) / MW - expected).abs() < 1e-9);
        assert!((full.input(Carrier::NaturalGas) / MW - 29.12).abs() < 0.01);
        let boiler = flat(cfg.asset("boiler").unwrap().clone());
        let b = converter_step(&[8.0 * MW], &boiler);
        assert!((b.input(Carrier::NaturalGas) / MW - 8.0 / 0.92).abs() < 1e-9);
    }

    #[test]
    fn part_load_reduces_efficiency() {
        let cfg = case2();
        let hp = cfg.asset("hp").unwrap();
        let half = converter_step(&[0.5 * MW], hp);
        let cop = part_load_eta(3.5, 0.1, 0.5);
        assert!((cop - 3.5 * (1.0 - 0.1 * 0.25)).abs() < 1e-12);
        assert!((half.input(Carrier::Electricity) - 0.5 * MW / cop).abs() < 1e-6);
    }

    #[test]
    fn chp_requests_are_projected_onto_the_polygon() {
        let cfg = case1();
        let chp = cfg.asset("chp").unwrap();
        // heat without power: nearer to the origin than to the polygon
        assert_eq!(chp_project(0.1 * MW, 1.0 * MW, chp), (0.0, 0.0));
        // heat above the back-pressure line moves onto it
        let (p, q) = chp_project(2.0 * MW, 6.0 * MW, chp);
        assert!(q <= 6.0 * MW * p / (6.0 * MW) + 1.2 * MW + 1e-6);
        assert!(p >= 1.5 * MW - 1e-9);
        // feasible points are untouched
        assert_eq!(chp_project(3.0 * MW, 2.0 * MW, chp), (3.0 * MW, 2.0 * MW));
    }

    #[test]
    fn full_storage_refuses_charge() {
        let cfg = case1();
        let bess = cfg.asset("bess").unwrap();
        let (soc, p) = storage_step(bess.e_nom, -2.5 * MW, 900.0, bess);
        assert_eq!(p, 0.0);
        assert_eq!(soc, bess.e_nom);
    }

    #[test]
    fn charge_applies_efficiency() {
        let cfg = case1();
        let bess = cfg.asset("bess").unwrap();
        let (soc, p) = storage_step(5.0 * MWH, -2.5 * MW, 900.0, bess);
        assert_eq!(p, -2.5 * MW);
        let expected = 2.5e6 * 900.0 * 0.9_f64.sqrt();
        assert!((soc - 5.0 * MWH - expected).abs() < 1e-3);
        assert!((expected - 2.1345e9).abs() < 1e6);
    }

    #[test]
    fn derating_midpoint_of_top_band() {
        let cfg = case1();
        let bess = cfg.asset("bess").unwrap();
        let (_, p) = storage_step(0.95 * bess.e_nom, -2.5 * MW, 1.0, bess);
        assert!((p + 1.25 * MW).abs() < 1e-6);
    }

    fn zero_frame() -> ExogenousFrame {
        ExogenousFrame { x_el: 40e-6, ..Default::default() }
    }

    #[test]
    fn null_step_costs_nothing() {
        let cfg = case2();
        let s = SystemState::initial(&cfg, 0, 0.5);
        let r = step(&s, &ControlAction::zeros(&cfg), &zero_frame(), &cfg).unwrap();
        assert_eq!(r.loss.l_cost, 0.0);
        assert_eq!(r.loss.l_comfort, 0.0);
    }

    #[test]
    fn residual_boiler_covers_heat() {
        let mut cfg = case1();
        for a in cfg.assets.iter_mut() {
            a.eta.kappa = 0.0;
        }
        let s = SystemState::initial(&cfg, 0, 0.5);
        let exo = ExogenousFrame { e_th_demand: 4.0 * MW, ..zero_frame() };
        let a = ControlAction::from_pairs([("chp:el", 3.0 * MW), ("chp:th", 1.5 * MW), ("bess", 0.0)]);
        let r = step(&s, &a, &exo, &cfg).unwrap();
        assert!((r.dispatch["boiler"].output(Carrier::Heat) - 2.5 * MW).abs() < 1e-6);
        assert_eq!(r.loss.l_comfort, 0.0);
    }

    #[test]
    fn unheated_step_loses_comfort() {
        let cfg = case2();
        let s = SystemState::initial(&cfg, 0, 0.5);
        let exo = ExogenousFrame { e_th_demand: 1.0 * MW, ..zero_frame() };
        let r = step(&s, &ControlAction::zeros(&cfg), &exo, &cfg).unwrap();
        assert!((r.loss.l_comfort - 250_000.0).abs() < 1e-9);
    }

    #[test]
    fn soc_out_of_bounds_is_rejected() {
        let cfg = case2();
        let mut s = SystemState::initial(&cfg, 0, 0.5);
        s.soc.insert("bess".into(), -1.0);
        assert!(matches!(step(&s, &ControlAction::zeros(&cfg), &zero_frame(), &cfg), Err(PlantError::State(_))));
    }

    #[test]
    fn empty_episode() {
        let cfg = case2();
        let frames = vec![zero_frame(); 4];
        let mut c = |_: &SystemState| ControlAction::zeros(&cfg);
        let t = run_episode(&mut c, SystemState::initial(&cfg, 0, 0.5), 0, frames.as_slice(), &cfg).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.objective, 0.0);
    }

    #[test]
    fn idle_controller_pays_for_heat_demand() {
        let cfg = case2();
        let frames: Vec<_> = (0..96).map(|k| ExogenousFrame { e_th_demand: (0.2 + 0.01 * k as f64) * MW, ..zero_frame() }).collect();
        let mut c = |_: &SystemState| ControlAction::zeros(&cfg);
        let t = run_episode(&mut c, SystemState::initial(&cfg, 0, 0.5), 96, frames.as_slice(), &cfg).unwrap();
        assert!(t.objective > 0.0);
        assert!(t.steps.iter().all(|s| s.loss.l_comfort > 0.0));
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let cfg = case1();
        let frames = vec![zero_frame(); 3];
        let mut c = |_: &SystemState| ControlAction::zeros(&cfg);
        let t = run_episode(&mut c, SystemState::initial(&cfg, 0, 0.5), 3, frames.as_slice(), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t, &cfg).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("timestamp,step,grid_el_el_mw"));
        assert!(text.lines().nth(1).unwrap().starts_with("2019-01-01T00:00:00Z,0,"));
    }

    proptest! {
        #[test]
        fn storage_stays_within_capacity(soc_frac in 0.0f64..=1.0, p in -3.0e6f64..3.0e6, dt in 1.0f64..3600.0) {
            let cfg = case1();
            let bess = cfg.asset("bess").unwrap();
            let (soc, realised) = storage_step(soc_frac * bess.e_nom, p, dt, bess);
            prop_assert!((0.0..=bess.e_nom).contains(&soc));
            prop_assert!(realised.abs() <= p.abs() + 1e-9);
            prop_assert!(realised * p >= 0.0);
        }

        #[test]
        fn chp_projection_lands_in_region(p in -1e6f64..8e6, q in -1e6f64..8e6) {
            let cfg = case1();
            let chp = cfg.asset("chp").unwrap();
            let (pp, qq) = chp_project(p, q, chp);
            let on = pp >= 1.5e6 - 1e-6 && pp <= 6e6 + 1e-6 && qq >= -1e-6
                && qq <= (pp + 1.2e6).min(6e6) + 1e-6;
            prop_assert!((pp == 0.0 && qq == 0.0) || on);
            prop_assert_eq!(chp_project(pp, qq, chp), (pp, qq));
        }

        #[test]
        fn balances_close_every_step(
            raw in prop::collection::vec(-2.0e6f64..2.0e6, 6),
            soc in 0.0f64..=1.0,
            e_th in 0.0f64..3.0e6,
            e_el in 0.0f64..3.0e6,
            wind in 0.0f64..30.0,
            irr in 0.0f64..1100.0,
        ) {
            let cfg = case2();
            let layout = cfg.action_layout();
            let a = ControlAction::from_pairs(layout.iter().zip(&raw).map(|(d, v)| (d.key.clone(), *v)));
            let a = project_action(&a, &cfg).unwrap();
            let s = SystemState::initial(&cfg, 0, soc);
            let exo = ExogenousFrame { wind_speed: wind, irradiance: irr, e_th_demand: e_th, e_el_demand: e_el, x_el: 5e-5 };
            let r = step(&s, &a, &exo, &cfg).unwrap();
            let tol = 1e-6 * cfg.total_p_nom();
            prop_assert!(balance_residual(&r.dispatch, &cfg, Carrier::Electricity, e_el).abs() < tol);
            prop_assert!(balance_residual(&r.dispatch, &cfg, Carrier::NaturalGas, 0.0).abs() < tol);
            let heat = balance_residual(&r.dispatch, &cfg, Carrier::Heat, e_th);
            prop_assert!((r.loss.l_comfort - heat.abs() * cfg.grid.dt_h()).abs() < 1e-9);
            prop_assert!(r.loss.l_comfort >= 0.0);
        }
    }
}
