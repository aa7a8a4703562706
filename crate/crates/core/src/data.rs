//! Exogenous data: CSV ingestion, synthetic profiles, forecast noise and
//! accuracy metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CaseLabel, MesConfig, RewardWeights, TimeGrid};
use crate::plant::{iso_timestamp, ExoSource, ExogenousFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("gap of {gap_s} s in source data before {at}")]
    Gap { at: String, gap_s: i64 },
    #[error("unit mismatch: expected `{expected}`, found `{found}`")]
    Unit { expected: String, found: String },
    #[error("series is constant")]
    Degenerate,
    #[error("noise calibration did not converge (target {target}, best {achieved})")]
    NoConvergence { target: f64, achieved: f64 },
    #[error("range [{start}, {end}) outside series of length {len}")]
    Range { start: usize, end: usize, len: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub unit: String,
}

/// Names and units of the five exogenous series.
pub const SERIES: [(&str, &str); 5] = [
    ("e_th", "W"),
    ("e_el", "W"),
    ("x_el", "currency/Wh"),
    ("irradiance", "W/m2"),
    ("wind_speed", "m/s"),
];

fn parse_time(s: &str, line: usize) -> Result<i64, DataError> {
    chrono::DateTime::parse_from_rfc3339(s.trim())
        .map(|d| d.timestamp())
        .map_err(|e| DataError::Parse { line, msg: format!("bad timestamp `{s}`: {e}") })
}

/// Reads a two-column `timestamp,<unit>` CSV and resamples it onto `grid` by
/// linear interpolation. Grid points up to one source interval beyond either
/// end hold the end value.
pub fn load_timeseries_csv(path: &Path, expected_unit: &str, grid: TimeGrid) -> Result<TimeSeries, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    read_timeseries_csv(file, expected_unit, grid)
}

pub fn read_timeseries_csv<R: std::io::Read>(input: R, expected_unit: &str, grid: TimeGrid) -> Result<TimeSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| DataError::Parse { line: 1, msg: e.to_string() })?.clone();
    if headers.len() != 2 {
        return Err(DataError::Parse { line: 1, msg: format!("expected 2 columns, found {}", headers.len()) });
    }
    if &headers[1] != expected_unit {
        return Err(DataError::Unit { expected: expected_unit.to_string(), found: headers[1].to_string() });
    }
    let mut pts: Vec<(i64, f64)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| DataError::Parse { line, msg: e.to_string() })?;
        if rec.len() != 2 {
            return Err(DataError::Parse { line, msg: "expected 2 fields".into() });
        }
        let t = parse_time(&rec[0], line)?;
        let v: f64 = rec[1].parse().map_err(|_| DataError::Parse { line, msg: format!("bad value `{}`", &rec[1]) })?;
        if !v.is_finite() {
            return Err(DataError::Parse { line, msg: "non-finite value".into() });
        }
        if let Some(&(prev, _)) = pts.last() {
            if t <= prev {
                return Err(DataError::Parse { line, msg: "timestamps must increase".into() });
            }
        }
        pts.push((t, v));
    }
    if pts.is_empty() {
        return Err(DataError::Parse { line: 2, msg: "no data rows".into() });
    }
    let interval = if pts.len() >= 2 {
        let mut d: Vec<i64> = pts.windows(2).map(|w| w[1].0 - w[0].0).collect();
        d.sort_unstable();
        d[d.len() / 2]
    } else {
        grid.step_s as i64
    };
    for w in pts.windows(2) {
        let gap = w[1].0 - w[0].0;
        if gap > 2 * interval {
            return Err(DataError::Gap { at: iso_timestamp(w[1].0), gap_s: gap });
        }
    }
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    let mut values = Vec::with_capacity(grid.n_steps);
    let mut j = 0;
    for i in 0..grid.n_steps {
        let t = grid.timestamp(i);
        if t < first - interval || t > last + interval {
            return Err(DataError::Gap { at: iso_timestamp(t), gap_s: if t < first { first - t } else { t - last } });
        }
        let v = if t <= first {
            pts[0].1
        } else if t >= last {
            pts[pts.len() - 1].1
        } else {
            while pts[j + 1].0 < t {
                j += 1;
            }
            let (t0, v0) = pts[j];
            let (t1, v1) = pts[j + 1];
            if t == t1 {
                v1
            } else {
                v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
            }
        };
        values.push(v);
    }
    Ok(TimeSeries { grid, values, unit: expected_unit.to_string() })
}

pub fn write_timeseries_csv<W: Write>(out: W, ts: &TimeSeries) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", ts.unit.as_str()])?;
    for (i, v) in ts.values.iter().enumerate() {
        w.write_record([iso_timestamp(ts.grid.timestamp(i)), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn r2_score(y: &[f64], y_hat: &[f64]) -> Result<f64, DataError> {
    if y.len() != y_hat.len() {
        return Err(DataError::Length(y.len(), y_hat.len()));
    }
    if y.len() < 2 {
        return Err(DataError::Degenerate);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(DataError::Degenerate);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mape(y: &[f64], y_hat: &[f64], eps: f64) -> f64 {
    let n = y.len().min(y_hat.len());
    if n == 0 {
        return 0.0;
    }
    y.iter().zip(y_hat).map(|(a, b)| (a - b).abs() / eps.max(a.abs())).sum::<f64>() / n as f64
}

/// MAPE over the points whose truth is at least `frac` of the series maximum.
pub fn mape_excluding_small(y: &[f64], y_hat: &[f64], frac: f64) -> f64 {
    let max = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = frac * max;
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in y.iter().zip(y_hat) {
        if a.abs() >= cut && a.abs() > 0.0 {
            sum += (a - b).abs() / a.abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Truth points below this fraction of the maximum are excluded from the
/// MAPE of intermittent series (irradiance, wind speed).
pub const NEAR_ZERO_FRAC: f64 = 0.01;
pub const MAPE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastSpec {
    pub r2_target: f64,
    pub mape_target: f64,
    /// Noise standard deviation relative to the series' mean absolute value.
    pub sigma: f64,
    pub seed: u64,
    /// Exclude near-zero truth points from the MAPE.
    pub exclude_near_zero: bool,
}

impl ForecastSpec {
    pub fn perfect() -> Self {
        Self { r2_target: 1.0, mape_target: 0.0, sigma: 0.0, seed: 0, exclude_near_zero: false }
    }

    pub fn metric(&self, y: &[f64], y_hat: &[f64]) -> f64 {
        if self.exclude_near_zero {
            mape_excluding_small(y, y_hat, NEAR_ZERO_FRAC)
        } else {
            mape(y, y_hat, MAPE_EPS)
        }
    }
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }
}

/// Standard-normal draws for the window starting at `t0`.
fn noise_draws(seed: u64, t0: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t0 as u64);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn apply_noise(truth: &[f64], draws: &[f64], amplitude: f64) -> Vec<f64> {
    truth.iter().zip(draws).map(|(v, z)| (v + amplitude * z).max(0.0)).collect()
}

/// Noisy (or, with `sigma = 0`, exact) forecast of `series[t0..t0 + n]`.
/// All five exogenous quantities are non-negative, so noisy values clip at 0.
pub fn make_forecast(series: &[f64], spec: &ForecastSpec, t0: usize, n: usize) -> Result<Vec<f64>, DataError> {
    if t0 + n > series.len() {
        return Err(DataError::Range { start: t0, end: t0 + n, len: series.len() });
    }
    let truth = &series[t0..t0 + n];
    if spec.sigma == 0.0 {
        return Ok(truth.to_vec());
    }
    let amp = spec.sigma * mean_abs(series);
    Ok(apply_noise(truth, &noise_draws(spec.seed, t0, n), amp))
}

const CALIBRATION_DRAWS: u64 = 16;
const CALIBRATION_TOL: f64 = 0.005;

/// Bisection on the relative noise level so that the mean MAPE over 16
/// seeded full-length forecasts hits `mape_target`.
pub fn calibrate_noise_sigma(series: &[f64], mape_target: f64, seed: u64, exclude_near_zero: bool) -> Result<f64, DataError> {
    if mape_target <= 0.0 {
        return Ok(0.0);
    }
    let m = mean_abs(series);
    if m == 0.0 {
        return Err(DataError::Degenerate);
    }
    let draws: Vec<Vec<f64>> = (0..CALIBRATION_DRAWS)
        .map(|k| noise_draws(seed.wrapping_add(k), 0, series.len()))
        .collect();
    let probe = ForecastSpec { r2_target: 1.0, mape_target, sigma: 0.0, seed, exclude_near_zero };
    let achieved = |sigma: f64| -> f64 {
        draws.iter().map(|d| probe.metric(series, &apply_noise(series, d, sigma * m))).sum::<f64>() / draws.len() as f64
    };
    let mut lo = 0.0;
    let mut hi = mape_target.max(0.01);
    let mut at_hi = achieved(hi);
    let mut doublings = 0;
    while at_hi < mape_target {
        lo = hi;
        hi *= 2.0;
        at_hi = achieved(hi);
        doublings += 1;
        if doublings > 64 {
            return Err(DataError::NoConvergence { target: mape_target, achieved: at_hi });
        }
    }
    let mut best = (hi, at_hi);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        let a = achieved(mid);
        if (a - mape_target).abs() < (best.1 - mape_target).abs() {
            best = (mid, a);
        }
        if (a - mape_target).abs() <= CALIBRATION_TOL * 0.1 {
            return Ok(mid);
        }
        if a < mape_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - mape_target).abs() <= CALIBRATION_TOL {
        Ok(best.0)
    } else {
        Err(DataError::NoConvergence { target: mape_target, achieved: best.1 })
    }
}

/// (series, R², MAPE) accuracy the imperfect forecasts are calibrated to.
pub fn prediction_targets(case: CaseLabel) -> [(&'static str, f64, f64); 5] {
    match case {
        CaseLabel::Simple => [
            ("e_el", 0.95, 0.04),
            ("e_th", 0.94, 0.09),
            ("x_el", 0.86, 0.06),
            ("irradiance", 0.69, 0.37),
            ("wind_speed", 0.78, 0.25),
        ],
        CaseLabel::Complex => [
            ("e_el", 0.95, 0.12),
            ("e_th", 0.95, 0.08),
            ("x_el", 0.85, 0.08),
            ("irradiance", 0.70, 0.37),
            ("wind_speed", 0.70, 0.36),
        ],
    }
}

fn excludes_near_zero(name: &str) -> bool {
    matches!(name, "irradiance" | "wind_speed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub specs: BTreeMap<String, ForecastSpec>,
}

impl ForecastSet {
    pub fn perfect() -> Self {
        Self { specs: SERIES.iter().map(|(n, _)| (n.to_string(), ForecastSpec::perfect())).collect() }
    }

    /// Calibrates one noise level per series against the case's targets.
    pub fn calibrated(scenario: &Scenario, case: CaseLabel, seed: u64) -> Result<Self, DataError> {
        let mut specs = BTreeMap::new();
        for (k, (name, r2, target)) in prediction_targets(case).into_iter().enumerate() {
            let exclude = excludes_near_zero(name);
            let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1000 * (k as u64 + 1));
            let sigma = calibrate_noise_sigma(scenario.series(name), target, s, exclude)?;
            specs.insert(
                name.to_string(),
                ForecastSpec { r2_target: r2, mape_target: target, sigma, seed: s, exclude_near_zero: exclude },
            );
        }
        Ok(Self { specs })
    }

    pub fn is_perfect(&self) -> bool {
        self.specs.values().all(|s| s.sigma == 0.0)
    }

    /// Forecast frames for `[t0, t0 + n)`.
    pub fn frames(&self, scenario: &Scenario, t0: usize, n: usize) -> Result<Vec<ExogenousFrame>, DataError> {
        let get = |name: &str| -> Result<Vec<f64>, DataError> {
            let spec = self.specs.get(name).copied().unwrap_or_else(ForecastSpec::perfect);
            make_forecast(scenario.series(name), &spec, t0, n)
        };
        let (th, el, x, irr, wind) = (get("e_th")?, get("e_el")?, get("x_el")?, get("irradiance")?, get("wind_speed")?);
        Ok((0..n)
            .map(|k| ExogenousFrame {
                wind_speed: wind[k],
                irradiance: irr[k],
                e_th_demand: th[k],
                e_el_demand: el[k],
                x_el: x[k],
            })
            .collect())
    }
}

/// Synthetic price ceiling, currency/MWh.
pub const PRICE_MAX_PER_MWH: f64 = 120.0;
const PRICE_MIN_PER_MWH: f64 = 5.0;
/// Peak demands are this fraction of installed production capacity.
pub const PEAK_DEMAND_FRAC: f64 = 0.6;

/// One year (or whatever the grid spans) of aligned exogenous data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub e_th: Vec<f64>,
    pub e_el: Vec<f64>,
    pub x_el: Vec<f64>,
    pub irradiance: Vec<f64>,
    pub wind_speed: Vec<f64>,
}

impl ExoSource for Scenario {
    fn len(&self) -> usize {
        self.e_th.len()
    }

    fn frame(&self, i: usize) -> ExogenousFrame {
        ExogenousFrame {
            wind_speed: self.wind_speed[i],
            irradiance: self.irradiance[i],
            e_th_demand: self.e_th[i],
            e_el_demand: self.e_el[i],
            x_el: self.x_el[i],
        }
    }
}

/// Training data covers the first 44 weeks; evaluation uses the tail.
pub const TRAIN_WEEKS: usize = 44;
/// Held-out weeks used for learning-curve evaluation.
pub const CURVE_EVAL_WEEKS: [usize; 3] = [48, 49, 50];

impl Scenario {
    pub fn synthetic(cfg: &MesConfig, seed: u64) -> Self {
        Self::from_profiles(synth_profiles(seed, cfg)).expect("synthetic profiles are complete")
    }

    pub fn from_profiles(mut p: BTreeMap<String, TimeSeries>) -> Result<Self, DataError> {
        let mut take = |name: &str| p.remove(name).ok_or_else(|| DataError::Io(format!("missing series `{name}`")));
        let e_th = take("e_th")?;
        let grid = e_th.grid;
        let s = Self {
            grid,
            e_th: e_th.values,
            e_el: take("e_el")?.values,
            x_el: take("x_el")?.values,
            irradiance: take("irradiance")?.values,
            wind_speed: take("wind_speed")?.values,
        };
        let n = s.e_th.len();
        for name in ["e_el", "x_el", "irradiance", "wind_speed"] {
            if s.series(name).len() != n {
                return Err(DataError::Length(n, s.series(name).len()));
            }
        }
        Ok(s)
    }

    pub fn series(&self, name: &str) -> &[f64] {
        match name {
            "e_th" => &self.e_th,
            "e_el" => &self.e_el,
            "x_el" => &self.x_el,
            "irradiance" => &self.irradiance,
            "wind_speed" => &self.wind_speed,
            other => panic!("unknown series `{other}`"),
        }
    }

    pub fn to_profiles(&self) -> BTreeMap<String, TimeSeries> {
        SERIES
            .iter()
            .map(|(n, u)| (n.to_string(), TimeSeries { grid: self.grid, values: self.series(n).to_vec(), unit: u.to_string() }))
            .collect()
    }

    /// Loads `<name>.csv` for each series from `dir`.
    pub fn load_dir(dir: &Path, grid: TimeGrid) -> Result<Self, DataError> {
        let mut p = BTreeMap::new();
        for (n, u) in SERIES {
            p.insert(n.to_string(), load_timeseries_csv(&dir.join(format!("{n}.csv")), u, grid)?);
        }
        Self::from_profiles(p)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, DataError> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::Io(e.to_string()))?;
        let mut written = Vec::new();
        for (n, ts) in self.to_profiles() {
            let path = dir.join(format!("{n}.csv"));
            let f = std::fs::File::create(&path).map_err(|e| DataError::Io(e.to_string()))?;
            write_timeseries_csv(std::io::BufWriter::new(f), &ts).map_err(|e| DataError::Io(e.to_string()))?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn max_price(&self) -> f64 {
        self.x_el.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// a = 1 and b = twice the highest price in the data.
    pub fn default_weights(&self) -> RewardWeights {
        RewardWeights { a: 1.0, b: 2.0 * self.max_price() }
    }

    pub fn steps_per_week(&self) -> usize {
        7 * self.grid.steps_per_day()
    }

    /// Step range episodes may start in so that a full week fits in the training weeks.
    pub fn train_steps(&self) -> usize {
        (TRAIN_WEEKS * self.steps_per_week()).min(self.len())
    }

    pub fn eval_start(&self) -> usize {
        self.train_steps()
    }

    pub fn curve_eval_starts(&self) -> Vec<usize> {
        CURVE_EVAL_WEEKS.iter().map(|w| w * self.steps_per_week()).collect()
    }
}

struct Clock {
    hour: f64,
    /// +1 at midwinter, -1 at midsummer
    winter: f64,
    /// day-of-year measured from the summer solstice, radians
    summer_phase: f64,
    weekend: bool,
}

fn clock(epoch: i64) -> Clock {
    let days = epoch.div_euclid(86_400);
    let hour = epoch.rem_euclid(86_400) as f64 / 3600.0;
    // 1970-01-01 was a Thursday; Monday = 0
    let weekday = (days + 3).rem_euclid(7);
    let frac_days = epoch as f64 / 86_400.0;
    // winter solstice ~ Dec 21 = day 354 of the year
    let year_phase = 2.0 * PI * (frac_days - 354.0) / 365.2422;
    Clock { hour, winter: year_phase.cos(), summer_phase: year_phase - PI, weekend: weekday >= 5 }
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-((h - centre) / width).powi(2)).exp()
}

struct Ar1 {
    phi: f64,
    state: f64,
}

impl Ar1 {
    fn new(phi: f64) -> Self {
        Self { phi, state: 0.0 }
    }

    /// Unit stationary variance.
    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.state = self.phi * self.state + (1.0 - self.phi * self.phi).sqrt() * z;
        self.state
    }
}

fn rescale_to_peak(v: &mut [f64], peak: f64) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(*x));
    if max > 0.0 {
        for x in v.iter_mut() {
            *x *= peak / max;
        }
    }
}

/// Deterministic synthetic year for `cfg.grid`: demands scaled so their peaks
/// are 60% of the installed heat and electricity production capacity, a
/// double-peaked day-ahead price, and seasonal/diurnal weather.
pub fn synth_profiles(seed: u64, cfg: &MesConfig) -> BTreeMap<String, TimeSeries> {
    let grid = cfg.grid;
    let n = grid.n_steps;
    let rng_for = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    };
    let (mut r_th, mut r_el, mut r_px, mut r_cloud, mut r_wind) = (rng_for(1), rng_for(2), rng_for(3), rng_for(4), rng_for(5));
    let (mut a_th, mut a_el, mut a_px, mut a_cloud, mut a_wind) =
        (Ar1::new(0.97), Ar1::new(0.95), Ar1::new(0.92), Ar1::new(0.995), Ar1::new(0.985));

    let mut e_th = Vec::with_capacity(n);
    let mut e_el = Vec::with_capacity(n);
    let mut x_el = Vec::with_capacity(n);
    let mut irr = Vec::with_capacity(n);
    let mut wind = Vec::with_capacity(n);
    for i in 0..n {
        let c = clock(grid.timestamp(i));
        let h = c.hour;
        let weekend = if c.weekend { 1.0 } else { 0.0 };

        let heating = 0.5 + 0.5 * c.winter;
        let daily_th = 1.0 + 0.25 * bump(h, 7.0, 2.0) + 0.2 * bump(h, 19.0, 2.5) - 0.2 * bump(h, 3.0, 2.5);
        let th = (0.15 + 0.85 * heating) * daily_th * (1.0 + 0.06 * a_th.next(&mut r_th));
        e_th.push(th.max(0.02));

        let daily_el = 0.55 + 0.25 * bump(h, 8.0, 2.5) + 0.35 * bump(h, 19.0, 2.5) - 0.1 * bump(h, 3.0, 2.5);
        let el = daily_el * (1.0 - 0.15 * weekend) * (1.0 + 0.1 * c.winter) * (1.0 + 0.05 * a_el.next(&mut r_el));
        e_el.push(el.max(0.02));

        let summer = 0.5 - 0.5 * c.winter;
        let px = 40.0 + 8.0 * c.winter + 15.0 * bump(h, 8.0, 2.0) + 22.0 * bump(h, 19.0, 2.0)
            - 10.0 * summer * bump(h, 13.0, 2.5)
            - 8.0 * weekend
            + 7.0 * a_px.next(&mut r_px);
        x_el.push(px);

        let day_len = 12.0 + 4.0 * c.summer_phase.cos();
        let rise = 12.0 - day_len / 2.0;
        let sun = if h > rise && h < rise + day_len { (PI * (h - rise) / day_len).sin() } else { 0.0 };
        let cloud = 1.0 / (1.0 + (-1.5 * a_cloud.next(&mut r_cloud) - 0.8).exp());
        let peak = 1000.0 * (0.6 + 0.35 * summer);
        irr.push(peak * sun.powf(1.3) * (0.15 + 0.85 * cloud));

        let mean_wind = 6.5 + 1.5 * c.winter + 0.5 * bump(h, 15.0, 4.0);
        wind.push((mean_wind * (0.45 * a_wind.next(&mut r_wind) - 0.1).exp()).max(0.0));
    }
    rescale_to_peak(&mut e_th, PEAK_DEMAND_FRAC * cfg.heat_capacity());
    rescale_to_peak(&mut e_el, PEAK_DEMAND_FRAC * cfg.elec_capacity());
    let (lo, hi) = x_el.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let x_el: Vec<f64> = x_el
        .iter()
        .map(|v| {
            let unit = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
            (PRICE_MIN_PER_MWH + unit * (PRICE_MAX_PER_MWH - PRICE_MIN_PER_MWH)) / 1e6
        })
        .collect();

    let mut out = BTreeMap::new();
    for (name, values) in [("e_th", e_th), ("e_el", e_el), ("x_el", x_el), ("irradiance", irr), ("wind_speed", wind)] {
        let unit = SERIES.iter().find(|(n, _)| *n == name).unwrap().1;
        out.insert(name.to_string(), TimeSeries { grid, values, unit: unit.to_string() });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid { start_epoch: 1_546_300_800, step_s: 900, n_steps: n }
    }

    #[test]
    fn hourly_file_interpolates_onto_quarter_hours() {
        let mut csv = String::from("timestamp,W\n");
        for h in 0..24 {
            csv.push_str(&format!("2019-01-01T{h:02}:00:00Z,{}\n", h * 4));
        }
        let ts = read_timeseries_csv(csv.as_bytes(), "W", grid(96)).unwrap();
        assert_eq!(ts.values.len(), 96);
        for i in 0..93 {
            assert!((ts.values[i] - i as f64).abs() < 1e-12, "{i}");
        }
        assert_eq!(ts.values[95], 92.0);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(read_timeseries_csv("".as_bytes(), "W", grid(4)), Err(DataError::Parse { .. })));
        assert!(matches!(read_timeseries_csv("timestamp,W\n".as_bytes(), "W", grid(4)), Err(DataError::Parse { .. })));
    }

    #[test]
    fn three_hour_gap_is_rejected() {
        let csv = "timestamp,W\n2019-01-01T00:00:00Z,1\n2019-01-01T01:00:00Z,1\n2019-01-01T04:00:00Z,1\n2019-01-01T05:00:00Z,1\n";
        assert!(matches!(read_timeseries_csv(csv.as_bytes(), "W", grid(8)), Err(DataError::Gap { .. })));
    }

    #[test]
    fn wrong_unit_is_rejected() {
        let csv = "timestamp,kW\n2019-01-01T00:00:00Z,1\n";
        assert!(matches!(read_timeseries_csv(csv.as_bytes(), "W", grid(1)), Err(DataError::Unit { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = MesConfig::preset("case2").unwrap();
        let mut cfg = cfg;
        cfg.grid.n_steps = 200;
        let p = synth_profiles(3, &cfg);
        for (name, ts) in &p {
            let mut buf = Vec::new();
            write_timeseries_csv(&mut buf, ts).unwrap();
            let back = read_timeseries_csv(buf.as_slice(), &ts.unit, ts.grid).unwrap();
            assert_eq!(&back.values, &ts.values, "{name}");
        }
    }

    fn year(case: &str) -> MesConfig {
        MesConfig::preset(case).unwrap()
    }

    #[test]
    fn synthetic_profiles_are_deterministic() {
        let mut cfg = year("case1");
        cfg.grid.n_steps = 2000;
        assert_eq!(synth_profiles(1, &cfg), synth_profiles(1, &cfg));
        assert_ne!(synth_profiles(1, &cfg)["e_th"], synth_profiles(2, &cfg)["e_th"]);
    }

    #[test]
    fn synthetic_peaks_and_shapes() {
        let cfg = year("case1");
        let p = synth_profiles(1, &cfg);
        let peak = p["e_th"].values.iter().fold(0.0_f64, |m, v| m.max(*v));
        assert!(peak <= 0.6 * (8.0e6 + 6.0e6) * (1.0 + 1e-12));
        let spd = cfg.grid.steps_per_day();
        for d in 0..365 {
            assert_eq!(p["irradiance"].values[d * spd], 0.0, "midnight of day {d}");
        }
        for (name, ts) in &p {
            assert!(ts.values.iter().all(|v| *v >= 0.0 && v.is_finite()), "{name}");
        }
        let max_px = p["x_el"].values.iter().fold(0.0_f64, |m, v| m.max(*v));
        assert!((max_px - 120e-6).abs() < 1e-15);
        assert!(p["x_el"].values.iter().all(|v| *v >= 5e-6 - 1e-18));
    }

    #[test]
    fn default_weights_follow_peak_price() {
        let s = Scenario::synthetic(&year("case2"), 4);
        let w = s.default_weights();
        assert_eq!(w.a, 1.0);
        assert!((w.b - 2.4e-4).abs() < 1e-15);
        assert_eq!(w, year("case2").reward_weights);
    }

    #[test]
    fn r2_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
        assert_eq!(r2_score(&y, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r2_score(&y, &[1.0, 2.0, 4.0]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r2_score(&[1.0, 1.0], &[1.0, 1.0]), Err(DataError::Degenerate));
    }

    #[test]
    fn mape_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(mape(&y, &y, MAPE_EPS), 0.0);
        assert!((mape(&y, &[1.0, 2.0, 4.0], MAPE_EPS) - 1.0 / 9.0).abs() < 1e-12);
        assert!((mape(&[0.0], &[1.0], 1e-9) - 1e9).abs() < 1e-3);
    }

    #[test]
    fn zero_target_needs_no_noise() {
        assert_eq!(calibrate_noise_sigma(&[1.0, 2.0], 0.0, 1, false).unwrap(), 0.0);
    }

    #[test]
    fn calibrated_thermal_noise_hits_target() {
        let s = Scenario::synthetic(&year("case1"), 1);
        let sigma = calibrate_noise_sigma(&s.e_th, 0.09, 11, false).unwrap();
        let spec = ForecastSpec { r2_target: 0.94, mape_target: 0.09, sigma, seed: 99, exclude_near_zero: false };
        let f = make_forecast(&s.e_th, &spec, 0, s.e_th.len()).unwrap();
        let got = spec.metric(&s.e_th, &f);
        assert!((0.085..=0.095).contains(&got), "{got}");
    }

    #[test]
    fn calibrated_irradiance_excluding_zeros() {
        let s = Scenario::synthetic(&year("case1"), 1);
        let sigma = calibrate_noise_sigma(&s.irradiance, 0.37, 5, true).unwrap();
        let spec = ForecastSpec { r2_target: 0.69, mape_target: 0.37, sigma, seed: 6, exclude_near_zero: true };
        let f = make_forecast(&s.irradiance, &spec, 0, s.irradiance.len()).unwrap();
        let got = spec.metric(&s.irradiance, &f);
        assert!((got - 0.37).abs() <= 0.02, "{got}");
    }

    #[test]
    fn forecast_contract() {
        let s = Scenario::synthetic(&year("case2"), 2);
        let perfect = make_forecast(&s.e_el, &ForecastSpec::perfect(), 100, 50).unwrap();
        assert_eq!(perfect, &s.e_el[100..150]);
        let spec = ForecastSpec { r2_target: 0.9, mape_target: 0.1, sigma: 0.1, seed: 3, exclude_near_zero: false };
        let a = make_forecast(&s.e_el, &spec, 100, 50).unwrap();
        let b = make_forecast(&s.e_el, &spec, 100, 50).unwrap();
        assert_eq!(a, b);
        assert!(r2_score(&s.e_el[100..150], &a).unwrap() < 1.0);
        assert!(mape(&s.e_el[100..150], &a, MAPE_EPS) > 0.0);
        assert!(matches!(make_forecast(&s.e_el, &spec, s.e_el.len() - 10, 50), Err(DataError::Range { .. })));
    }

    proptest! {
        #[test]
        fn metric_bounds(y in prop::collection::vec(0.0f64..100.0, 2..50), noise in prop::collection::vec(-10.0f64..10.0, 50)) {
            let y_hat: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
            if let Ok(r2) = r2_score(&y, &y_hat) {
                prop_assert!(r2 <= 1.0);
            }
            prop_assert!(mape(&y, &y_hat, MAPE_EPS) >= 0.0);
        }

        #[test]
        fn noisy_forecasts_stay_non_negative(seed in any::<u64>(), sigma in 0.0f64..3.0, t0 in 0usize..100) {
            let y: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.1).sin().max(0.0)).collect();
            let spec = ForecastSpec { r2_target: 0.5, mape_target: 0.5, sigma, seed, exclude_near_zero: true };
            let f = make_forecast(&y, &spec, t0, 100).unwrap();
            prop_assert!(f.iter().all(|v| *v >= 0.0));
        }
    }
}
