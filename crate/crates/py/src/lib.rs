//! Python module `mesbench`: the gym-style environment, presets and a few
//! benchmark helpers.

use std::sync::Arc;

use mesbench_core::bench::relative_performance as rel_perf;
use mesbench_core::data::{mape as mape_eps, Scenario, MAPE_EPS};
use mesbench_core::model::MesConfig;
use mesbench_core::mpc::{receding_horizon_run, MpcConfig};
use mesbench_core::plant::ExoSource;
use mesbench_core::rl::{ActionMode, EnvSpec, MesEnv};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// TOML text of a built-in preset ("case1" or "case2").
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    Ok(MesConfig::preset(name).map_err(value_err)?.to_toml_string())
}

/// 100 * j_ref / j.
#[pyfunction]
fn relative_performance(j_ref: f64, j: f64) -> PyResult<f64> {
    rel_perf(j_ref, j).map_err(value_err)
}

#[pyfunction]
fn mape(y: Vec<f64>, y_hat: Vec<f64>) -> PyResult<f64> {
    if y.len() != y_hat.len() {
        return Err(value_err(format!("length mismatch: {} vs {}", y.len(), y_hat.len())));
    }
    Ok(mape_eps(&y, &y_hat, MAPE_EPS))
}

/// One synthetic exogenous series ("e_th", "e_el", "x_el", "irradiance",
/// "wind_speed") in SI units.
#[pyfunction]
#[pyo3(signature = (case, series, seed=0))]
fn synthetic_series(case: &str, series: &str, seed: u64) -> PyResult<Vec<f64>> {
    let cfg = MesConfig::preset(case).map_err(value_err)?;
    if !["e_th", "e_el", "x_el", "irradiance", "wind_speed"].contains(&series) {
        return Err(value_err(format!("unknown series `{series}`")));
    }
    Ok(Scenario::synthetic(&cfg, seed).series(series).to_vec())
}

/// Closed-loop perfect-foresight LMPC objective over `steps` steps from `start`.
#[pyfunction]
#[pyo3(signature = (case, start, steps, horizon=288, control=96, seed=0))]
fn mpc_objective(case: &str, start: usize, steps: usize, horizon: usize, control: usize, seed: u64) -> PyResult<f64> {
    let cfg = MesConfig::preset(case).map_err(value_err)?;
    let data = Scenario::synthetic(&cfg, seed);
    let mpc = MpcConfig { n_steps: horizon, c_steps: control, ..MpcConfig::default() };
    let run = receding_horizon_run(&cfg, &mpc, &data, start, steps, 0.5).map_err(runtime_err)?;
    Ok(run.objective())
}

/// Episodic environment over a synthetic year. Actions are raw policy
/// outputs: values in [-1, 1] per dimension, or level indices when
/// `levels` is given.
#[pyclass(module = "mesbench")]
struct Env {
    inner: MesEnv,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (case="case1", seed=0, levels=None))]
    fn new(case: &str, seed: u64, levels: Option<usize>) -> PyResult<Self> {
        let cfg = MesConfig::preset(case).map_err(value_err)?;
        let data = Arc::new(Scenario::synthetic(&cfg, seed));
        let mode = match levels {
            None => ActionMode::Continuous,
            Some(tau) if tau >= 2 => ActionMode::Discrete { tau },
            Some(tau) => return Err(value_err(format!("need at least 2 levels, got {tau}"))),
        };
        let spec = EnvSpec::new(&cfg, &data, mode);
        Ok(Self { inner: MesEnv::new(cfg, data, spec, seed) })
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.spec.obs_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.spec.action_dim()
    }

    #[getter]
    fn episode_len(&self) -> usize {
        self.inner.spec.episode_len
    }

    #[getter]
    fn len(&self) -> usize {
        self.inner.data().len()
    }

    /// Random training week when `start` is None, else that step with every
    /// storage at `soc` of capacity.
    #[pyo3(signature = (start=None, soc=0.5))]
    fn reset(&mut self, start: Option<usize>, soc: f64) -> PyResult<Vec<f64>> {
        match start {
            None => Ok(self.inner.reset()),
            Some(s) if s < self.inner.data().len() && (0.0..=1.0).contains(&soc) => Ok(self.inner.reset_at(s, soc)),
            Some(s) => Err(value_err(format!("start {s} or soc {soc} out of range"))),
        }
    }

    /// Returns `(obs, reward, done, cost, comfort_wh)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, f64, f64)> {
        let s = self.inner.step(&action).map_err(value_err)?;
        Ok((s.obs, s.reward, s.done, s.result.loss.l_cost, s.result.loss.l_comfort))
    }
}

#[pymodule]
fn mesbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(relative_performance, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_series, m)?)?;
    m.add_function(wrap_pyfunction!(mpc_objective, m)?)?;
    m.add_class::<Env>()?;
    Ok(())
}
