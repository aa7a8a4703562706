//! Domain types shared by the plant, the controllers and the benchmark.
//!
//! Everything is SI internally: W, J, seconds, currency/Wh.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const J_PER_WH: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_epoch: i64,
    #[serde(default = "default_step")]
    pub step_s: u32,
    pub n_steps: usize,
}

fn default_step() -> u32 {
    900
}

impl TimeGrid {
    pub fn dt_s(&self) -> f64 {
        self.step_s as f64
    }

    pub fn dt_h(&self) -> f64 {
        self.step_s as f64 / 3600.0
    }

    pub fn timestamp(&self, i: usize) -> i64 {
        self.start_epoch + i as i64 * self.step_s as i64
    }

    pub fn steps_per_day(&self) -> usize {
        (86_400 / self.step_s) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Carrier {
    Electricity,
    Heat,
    NaturalGas,
}

impl Carrier {
    pub fn short(self) -> &'static str {
        match self {
            Carrier::Electricity => "el",
            Carrier::Heat => "th",
            Carrier::NaturalGas => "gas",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Wind,
    Pv,
    Boiler,
    HeatPump,
    Chp,
    Genset,
    Bess,
    Tess,
    GridElectric,
    GridGas,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub carrier: Carrier,
    /// Nominal power, W. Grid connections use `inf`.
    pub p_nom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// Nominal efficiency per output, same order as `AssetSpec::outputs`
    /// (coefficient of performance for heat pumps).
    #[serde(default)]
    pub nominal: Vec<f64>,
    /// Part-load curvature: eta(load) = eta_nom * (1 - kappa * (1 - load)^2).
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "one")]
    pub charge: f64,
    #[serde(default = "one")]
    pub discharge: f64,
    /// Fraction of capacity at each end of the SoC range over which storage
    /// power derates linearly to zero.
    #[serde(default)]
    pub derate_band: f64,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for Efficiency {
    fn default() -> Self {
        Self { nominal: Vec::new(), kappa: 0.0, charge: 1.0, discharge: 1.0, derate_band: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub id: String,
    pub kind: AssetKind,
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub inputs: Vec<Carrier>,
    #[serde(default)]
    pub p_min_frac: f64,
    /// Storage capacity, J.
    #[serde(default)]
    pub e_nom: f64,
    #[serde(default)]
    pub eta: Efficiency,
    /// A boiler with `controllable = false` follows the residual heat demand.
    #[serde(default = "yes")]
    pub controllable: bool,
    /// Multi-output converters only: one setpoint per output instead of a
    /// single setpoint on the first output with the others in fixed ratio.
    #[serde(default)]
    pub dual_setpoint: bool,
}

impl AssetSpec {
    pub fn is_storage(&self) -> bool {
        matches!(self.kind, AssetKind::Bess | AssetKind::Tess)
    }

    pub fn is_converter(&self) -> bool {
        matches!(self.kind, AssetKind::Boiler | AssetKind::HeatPump | AssetKind::Chp | AssetKind::Genset)
    }

    pub fn is_renewable(&self) -> bool {
        matches!(self.kind, AssetKind::Wind | AssetKind::Pv)
    }

    pub fn p_min(&self, output: usize) -> f64 {
        self.p_min_frac * self.outputs[output].p_nom
    }

    /// Storage power rating, W.
    pub fn p_rate(&self) -> f64 {
        self.outputs.first().map_or(0.0, |o| o.p_nom)
    }

    pub fn output_index(&self, c: Carrier) -> Option<usize> {
        self.outputs.iter().position(|o| o.carrier == c)
    }

    pub fn eta_nominal(&self, output: usize) -> f64 {
        self.eta.nominal.get(output).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    Simple,
    Complex,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseLabel::Simple => "simple",
            CaseLabel::Complex => "complex",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub a: f64,
    /// Comfort weight, currency/Wh.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesConfig {
    pub case_label: CaseLabel,
    /// currency/Wh of gas
    pub gas_price: f64,
    pub grid: TimeGrid,
    pub reward_weights: RewardWeights,
    pub assets: Vec<AssetSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {}", violations.join("; "))]
pub struct ConfigError {
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("missing setpoint for `{0}`")]
    MissingSetpoint(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read config: {0}")]
    Io(String),
}

/// How one action dimension is interpreted.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDim {
    pub key: String,
    pub asset: usize,
    pub output: usize,
    pub p_min: f64,
    pub p_nom: f64,
    pub storage: bool,
}

impl ActionDim {
    /// Lowest admissible setpoint, W.
    pub fn lo(&self) -> f64 {
        if self.storage {
            -self.p_nom
        } else {
            0.0
        }
    }
}

const PRESET_CASE1: &str = include_str!("../presets/case1.cfg");
const PRESET_CASE2: &str = include_str!("../presets/case2.cfg");

impl MesConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ModelError> {
        let cfg: MesConfig = toml::from_str(s).map_err(|e| ModelError::Io(e.to_string()))?;
        Ok(validate_config(cfg)?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Bundled presets: `case1` (simple) and `case2` (complex).
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        match name {
            "case1" | "simple" => Self::from_toml_str(PRESET_CASE1),
            "case2" | "complex" => Self::from_toml_str(PRESET_CASE2),
            other => Err(ModelError::Io(format!("no preset named `{other}`"))),
        }
    }

    pub fn asset(&self, id: &str) -> Option<&AssetSpec> {
        self.assets.iter().find(|a| a.id == id)
    }

    pub fn storages(&self) -> impl Iterator<Item = &AssetSpec> {
        self.assets.iter().filter(|a| a.is_storage())
    }

    /// Installed heat production capacity (converters only), W.
    pub fn heat_capacity(&self) -> f64 {
        self.producer_capacity(Carrier::Heat)
    }

    /// Installed electricity production capacity (converters and renewables), W.
    pub fn elec_capacity(&self) -> f64 {
        self.producer_capacity(Carrier::Electricity)
    }

    fn producer_capacity(&self, c: Carrier) -> f64 {
        self.assets
            .iter()
            .filter(|a| a.is_converter() || a.is_renewable())
            .flat_map(|a| a.outputs.iter())
            .filter(|o| o.carrier == c)
            .map(|o| o.p_nom)
            .sum()
    }

    /// Sum of finite nominal powers over all outputs, W.
    pub fn total_p_nom(&self) -> f64 {
        self.assets.iter().flat_map(|a| a.outputs.iter()).map(|o| o.p_nom).filter(|p| p.is_finite()).sum()
    }

    /// The controllable setpoints in config order.
    pub fn action_layout(&self) -> Vec<ActionDim> {
        let mut dims = Vec::new();
        for (ai, a) in self.assets.iter().enumerate() {
            if a.is_storage() {
                dims.push(ActionDim { key: a.id.clone(), asset: ai, output: 0, p_min: 0.0, p_nom: a.p_rate(), storage: true });
            } else if a.is_converter() && a.controllable {
                if a.dual_setpoint {
                    for (k, o) in a.outputs.iter().enumerate() {
                        dims.push(ActionDim {
                            key: format!("{}:{}", a.id, o.carrier.short()),
                            asset: ai,
                            output: k,
                            p_min: a.p_min(k),
                            p_nom: o.p_nom,
                            storage: false,
                        });
                    }
                } else {
                    dims.push(ActionDim {
                        key: a.id.clone(),
                        asset: ai,
                        output: 0,
                        p_min: a.p_min(0),
                        p_nom: a.outputs[0].p_nom,
                        storage: false,
                    });
                }
            }
        }
        dims
    }
}

/// Setpoints in W keyed by action-dimension key. Storage setpoints are signed:
/// positive discharges, negative charges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub setpoints: BTreeMap<String, f64>,
}

impl ControlAction {
    pub fn zeros(cfg: &MesConfig) -> Self {
        Self { setpoints: cfg.action_layout().into_iter().map(|d| (d.key, 0.0)).collect() }
    }

    pub fn from_pairs<I: IntoIterator<Item = (K, f64)>, K: Into<String>>(pairs: I) -> Self {
        Self { setpoints: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.setpoints.get(key).copied().unwrap_or(0.0)
    }
}

/// Semi-continuous snap onto {0} ∪ [p_min, p_nom].
pub fn snap_semicontinuous(v: f64, p_min: f64, p_nom: f64) -> f64 {
    if !v.is_finite() {
        return if v == f64::INFINITY { p_nom } else { 0.0 };
    }
    if v > p_nom {
        p_nom
    } else if v < p_min * 0.5 || v <= 0.0 {
        0.0
    } else if v < p_min {
        p_min
    } else {
        v
    }
}

pub fn project_action(raw: &ControlAction, cfg: &MesConfig) -> Result<ControlAction, ModelError> {
    let layout = cfg.action_layout();
    if let Some(k) = raw.setpoints.keys().find(|k| !layout.iter().any(|d| &d.key == *k)) {
        return Err(ModelError::UnknownAsset(k.clone()));
    }
    let mut out = BTreeMap::new();
    for d in &layout {
        let v = *raw.setpoints.get(&d.key).ok_or_else(|| ModelError::MissingSetpoint(d.key.clone()))?;
        let p = if d.storage {
            if v.is_nan() {
                0.0
            } else {
                v.clamp(-d.p_nom, d.p_nom)
            }
        } else {
            snap_semicontinuous(v, d.p_min, d.p_nom)
        };
        out.insert(d.key.clone(), p);
    }
    Ok(ControlAction { setpoints: out })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub e_th: f64,
    pub e_el: f64,
    pub p_wind: f64,
    pub p_solar: f64,
    /// Energy cost accumulated since episode start, currency.
    pub c_e: f64,
    /// Day-ahead price, currency/Wh.
    pub x_el: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; 6] {
        [self.e_th, self.e_el, self.p_wind, self.p_solar, self.c_e, self.x_el]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t_index: usize,
    pub obs: Observation,
    /// Stored energy per storage id, J.
    pub soc: BTreeMap<String, f64>,
    /// Index of the current frame in the exogenous data.
    pub cursor: usize,
}

impl SystemState {
    /// Fresh episode state at `cursor` with every storage at `soc_frac` of capacity.
    pub fn initial(cfg: &MesConfig, cursor: usize, soc_frac: f64) -> Self {
        Self {
            t_index: 0,
            obs: Observation::default(),
            soc: cfg.storages().map(|s| (s.id.clone(), soc_frac * s.e_nom)).collect(),
            cursor,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// currency
    pub l_cost: f64,
    /// Wh of unmet or surplus heat
    pub l_comfort: f64,
    /// thermal production, W
    pub q_produced: f64,
}

/// Larger is better.
pub fn reward(loss: &LossTerms, w: &RewardWeights) -> f64 {
    -(w.a * loss.l_cost + w.b * loss.l_comfort)
}

/// Stage cost `a * l_cost + b * l_comfort`.
pub fn stage_objective(loss: &LossTerms, w: &RewardWeights) -> f64 {
    w.a * loss.l_cost + w.b * loss.l_comfort
}

fn expected_ports(kind: AssetKind) -> Option<(&'static [Carrier], &'static [Carrier])> {
    use Carrier::*;
    Some(match kind {
        AssetKind::Wind | AssetKind::Pv => (&[Electricity], &[]),
        AssetKind::Boiler => (&[Heat], &[NaturalGas]),
        AssetKind::HeatPump => (&[Heat], &[Electricity]),
        AssetKind::Chp => (&[Heat, Electricity], &[NaturalGas]),
        AssetKind::Genset => (&[Electricity], &[NaturalGas]),
        AssetKind::Bess => (&[Electricity], &[Electricity]),
        AssetKind::Tess => (&[Heat], &[Heat]),
        AssetKind::GridElectric => (&[Electricity], &[]),
        AssetKind::GridGas => (&[NaturalGas], &[]),
    })
}

pub fn validate_config(cfg: MesConfig) -> Result<MesConfig, ConfigError> {
    let mut v = Vec::new();
    if cfg.grid.step_s == 0 {
        v.push("grid.step_s must be positive".to_string());
    }
    if cfg.grid.n_steps == 0 {
        v.push("grid.n_steps must be at least 1".to_string());
    }
    if !(cfg.gas_price.is_finite() && cfg.gas_price >= 0.0) {
        v.push(format!("gas_price {} must be finite and non-negative", cfg.gas_price));
    }
    let w = cfg.reward_weights;
    if !(w.a > 0.0 && w.a.is_finite()) {
        v.push(format!("reward_weights.a = {} must be positive", w.a));
    }
    if !(w.b > 0.0 && w.b.is_finite()) {
        v.push(format!("reward_weights.b = {} must be positive", w.b));
    }

    let mut ids = HashSet::new();
    let mut grid_el = 0;
    let mut grid_gas = 0;
    for a in &cfg.assets {
        let id = &a.id;
        if !ids.insert(id.as_str()) {
            v.push(format!("duplicate asset id `{id}`"));
        }
        if id.is_empty() || id.contains([':', ',', ' ']) {
            v.push(format!("asset id `{id}` must be non-empty without ':', ',' or spaces"));
        }
        match a.kind {
            AssetKind::GridElectric => grid_el += 1,
            AssetKind::GridGas => grid_gas += 1,
            _ => {}
        }
        if !(0.0..=1.0).contains(&a.p_min_frac) {
            v.push(format!("{id}: p_min_frac {} outside [0, 1]", a.p_min_frac));
        }
        if a.is_storage() {
            if !(a.e_nom > 0.0 && a.e_nom.is_finite()) {
                v.push(format!("{id}: storage needs e_nom > 0"));
            }
            for (name, e) in [("charge", a.eta.charge), ("discharge", a.eta.discharge)] {
                if !(e > 0.0 && e <= 1.0) {
                    v.push(format!("{id}: {name} efficiency {e} outside (0, 1]"));
                }
            }
            if !(0.0..0.5).contains(&a.eta.derate_band) {
                v.push(format!("{id}: derate_band {} outside [0, 0.5)", a.eta.derate_band));
            }
        } else if a.e_nom != 0.0 {
            v.push(format!("{id}: e_nom is only allowed on storages"));
        }
        if a.outputs.is_empty() {
            v.push(format!("{id}: no outputs"));
        }
        for o in &a.outputs {
            if !(o.p_nom > 0.0) {
                v.push(format!("{id}: p_nom {} must be positive", o.p_nom));
            }
            let grid = matches!(a.kind, AssetKind::GridElectric | AssetKind::GridGas);
            if o.p_nom.is_infinite() && !grid {
                v.push(format!("{id}: only grid connections may have unbounded p_nom"));
            }
        }
        if let Some((outs, ins)) = expected_ports(a.kind) {
            let mut got: Vec<Carrier> = a.outputs.iter().map(|o| o.carrier).collect();
            got.sort();
            let mut want = outs.to_vec();
            want.sort();
            if got != want {
                v.push(format!("{id}: {:?} expects outputs {:?}", a.kind, outs));
            }
            if a.inputs.as_slice() != ins {
                v.push(format!("{id}: {:?} expects inputs {:?}", a.kind, ins));
            }
        }
        if a.is_converter() {
            if a.eta.nominal.len() != a.outputs.len() {
                v.push(format!("{id}: needs one nominal efficiency per output"));
            }
            if a.eta.nominal.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                v.push(format!("{id}: nominal efficiencies must be positive"));
            }
            if !(0.0..1.0).contains(&a.eta.kappa) {
                v.push(format!("{id}: kappa {} outside [0, 1)", a.eta.kappa));
            }
        }
        if !a.controllable && a.kind != AssetKind::Boiler {
            v.push(format!("{id}: only boilers may be non-controllable"));
        }
        if a.dual_setpoint && a.kind != AssetKind::Chp {
            v.push(format!("{id}: dual_setpoint is only meaningful for a chp"));
        }
    }
    if grid_el != 1 {
        v.push(format!("expected exactly one grid_electric asset, found {grid_el}"));
    }
    if grid_gas != 1 {
        v.push(format!("expected exactly one grid_gas asset, found {grid_gas}"));
    }
    if cfg.assets.iter().filter(|a| !a.controllable).count() > 1 {
        v.push("at most one boiler may follow the residual heat demand".to_string());
    }

    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { violations: v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MW: f64 = 1e6;

    fn case1() -> MesConfig {
        MesConfig::preset("case1").unwrap()
    }

    #[test]
    fn case1_preset_matches_table() {
        let cfg = case1();
        let p = |id: &str, c: Carrier| {
            let a = cfg.asset(id).unwrap();
            a.outputs[a.output_index(c).unwrap()].p_nom
        };
        assert_eq!(p("wind", Carrier::Electricity), 5.0 * MW);
        assert_eq!(p("pv", Carrier::Electricity), 3.0 * MW);
        assert_eq!(p("boiler", Carrier::Heat), 8.0 * MW);
        assert_eq!(p("chp", Carrier::Heat), 6.0 * MW);
        assert_eq!(p("chp", Carrier::Electricity), 6.0 * MW);
        assert_eq!(cfg.asset("chp").unwrap().p_min_frac, 0.25);
        assert_eq!(cfg.asset("bess").unwrap().p_rate(), 2.5 * MW);
        assert_eq!(cfg.asset("bess").unwrap().e_nom, 10.0 * MW * J_PER_WH);
        assert_eq!(cfg.action_layout().len(), 3);
    }

    #[test]
    fn case2_preset_matches_table() {
        let cfg = MesConfig::preset("case2").unwrap();
        let expect = [
            ("wind", 0.8, 0.015),
            ("pv", 1.0, 0.0),
            ("boiler", 2.0, 0.10),
            ("hp", 1.0, 0.25),
            ("chp", 1.0, 0.50),
            ("gen", 0.5, 0.50),
            ("tess", 0.5, 0.0),
            ("bess", 0.5, 0.0),
        ];
        for (id, p, f) in expect {
            let a = cfg.asset(id).unwrap();
            assert_eq!(a.outputs[0].p_nom, p * MW, "{id}");
            assert_eq!(a.p_min_frac, f, "{id}");
        }
        let chp = cfg.asset("chp").unwrap();
        assert_eq!(chp.outputs[chp.output_index(Carrier::Electricity).unwrap()].p_nom, 0.8 * MW);
        assert_eq!(cfg.asset("tess").unwrap().e_nom, 3.5 * MW * J_PER_WH);
        assert_eq!(cfg.asset("bess").unwrap().e_nom, 2.0 * MW * J_PER_WH);
        let keys: Vec<String> = cfg.action_layout().into_iter().map(|d| d.key).collect();
        assert_eq!(keys, ["boiler", "hp", "chp", "gen", "tess", "bess"]);
    }

    #[test]
    fn zero_storage_capacity_is_rejected() {
        let mut cfg = case1();
        cfg.assets.iter_mut().find(|a| a.id == "bess").unwrap().e_nom = 0.0;
        let err = validate_config(cfg).unwrap_err();
        assert!(err.violations.iter().any(|v| v.contains("e_nom")));
    }

    #[test]
    fn second_grid_connection_is_rejected() {
        let mut cfg = case1();
        let mut g = cfg.assets.iter().find(|a| a.kind == AssetKind::GridElectric).unwrap().clone();
        g.id = "grid2".into();
        cfg.assets.push(g);
        let err = validate_config(cfg).unwrap_err();
        assert!(err.violations.iter().any(|v| v.contains("grid_electric")));
    }

    #[test]
    fn every_violation_is_listed() {
        let mut cfg = case1();
        cfg.reward_weights.a = 0.0;
        cfg.assets[0].p_min_frac = 2.0;
        let err = validate_config(cfg).unwrap_err();
        assert_eq!(err.violations.len(), 2, "{:?}", err.violations);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = MesConfig::preset("case2").unwrap();
        let again = MesConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    fn action(chp_el: f64, chp_th: f64, bess: f64) -> ControlAction {
        ControlAction::from_pairs([("chp:el", chp_el), ("chp:th", chp_th), ("bess", bess)])
    }

    #[test]
    fn projection_examples() {
        let cfg = case1();
        let p = project_action(&action(0.4 * MW, 0.0, 0.0), &cfg).unwrap();
        assert_eq!(p.get("chp:el"), 0.0);
        let p = project_action(&action(1.0 * MW, 0.0, 0.0), &cfg).unwrap();
        assert_eq!(p.get("chp:el"), 1.5 * MW);
        let p = project_action(&action(0.0, 0.0, -4.0 * MW), &cfg).unwrap();
        assert_eq!(p.get("bess"), -2.5 * MW);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut a = action(0.0, 0.0, 0.0);
        a.setpoints.insert("nuclear".into(), 1.0);
        assert_eq!(project_action(&a, &case1()), Err(ModelError::UnknownAsset("nuclear".into())));
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights { a: 1.0, b: 0.2 / 1000.0 };
        assert_eq!(reward(&LossTerms::default(), &w), 0.0);
        let l = LossTerms { l_cost: 10.0, l_comfort: 50_000.0, q_produced: 0.0 };
        assert!((reward(&l, &w) + 20.0).abs() < 1e-12);
        let l = LossTerms { l_cost: -5.0, ..Default::default() };
        assert_eq!(reward(&l, &RewardWeights { a: 1.0, b: 1.0 }), 5.0);
    }

    fn feasible(a: &ControlAction, cfg: &MesConfig) -> bool {
        cfg.action_layout().iter().all(|d| {
            let v = a.get(&d.key);
            if d.storage {
                (-d.p_nom..=d.p_nom).contains(&v)
            } else {
                v == 0.0 || (d.p_min..=d.p_nom).contains(&v)
            }
        })
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_feasible(
            case in prop::bool::ANY,
            raw in prop::collection::vec(-3.0e7f64..3.0e7, 6),
        ) {
            let cfg = MesConfig::preset(if case { "case1" } else { "case2" }).unwrap();
            let layout = cfg.action_layout();
            let a = ControlAction::from_pairs(layout.iter().zip(&raw).map(|(d, v)| (d.key.clone(), *v)));
            let once = project_action(&a, &cfg).unwrap();
            let twice = project_action(&once, &cfg).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(feasible(&once, &cfg));
        }

        #[test]
        fn reward_is_monotone(c1 in -1e3f64..1e3, c2 in -1e3f64..1e3, q1 in 0f64..1e6, q2 in 0f64..1e6) {
            let w = RewardWeights { a: 1.0, b: 1e-4 };
            let r = |c, q| reward(&LossTerms { l_cost: c, l_comfort: q, q_produced: 0.0 }, &w);
            prop_assert!(r(c1.max(c2), q1) <= r(c1.min(c2), q1));
            prop_assert!(r(c1, q1.max(q2)) <= r(c1, q1.min(q2)));
        }
    }
}
