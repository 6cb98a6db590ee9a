//! Python bindings: the main types and operations of the diskill crate.
//!
//! Build with `cargo build -p diskill-py --release` and import the produced
//! cdylib as `diskill_py` (see `python/smoke_test.py`, which handles the
//! `libdiskill_py.so` -> `diskill_py.so` rename).

use ndarray::Array1;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diskill::envs::{sample_contexts, Environment, EpisodeResult};
use diskill::primitives::{basis_matrix, generate_trajectory, BasisConfig, MpParams};
use diskill::report;
use diskill::trainer::{self, TrainConfig};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Mean of the middle 50% of the values (needs at least 4).
#[pyfunction]
fn iqm(values: Vec<f64>) -> PyResult<f64> {
    diskill::stats::iqm(&values).map_err(err)
}

/// Per-iteration IQM confidence intervals from per-seed metric rows.
#[pyfunction]
#[pyo3(signature = (runs, n_boot=2000, level=0.95, seed=0))]
fn stratified_bootstrap_ci(
    runs: Vec<Vec<f64>>,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    diskill::stats::stratified_bootstrap_ci(&runs, n_boot, level, &mut rng).map_err(err)
}

/// Normalized RBF basis matrix of shape `steps x n_basis` (nested lists).
#[pyfunction]
#[pyo3(signature = (n_basis, steps, dt=0.05, bandwidth=1.0))]
fn rbf_basis(n_basis: usize, steps: usize, dt: f64, bandwidth: f64) -> PyResult<Vec<Vec<f64>>> {
    let cfg = BasisConfig::new(n_basis, steps, dt, bandwidth, 1).map_err(err)?;
    let phi = basis_matrix(&cfg).map_err(err)?;
    Ok(phi.outer_iter().map(|row| row.to_vec()).collect())
}

/// Desired positions and velocities for an MP weight vector.
#[pyfunction]
#[pyo3(signature = (weights, n_basis, steps, dt, q0, bandwidth=1.0, duration_scale=None))]
#[allow(clippy::too_many_arguments)]
fn mp_trajectory(
    weights: Vec<f64>,
    n_basis: usize,
    steps: usize,
    dt: f64,
    q0: Vec<f64>,
    bandwidth: f64,
    duration_scale: Option<f64>,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n_joints = q0.len();
    let cfg = BasisConfig::new(n_basis, steps, dt, bandwidth, n_joints).map_err(err)?;
    let theta = match duration_scale {
        Some(s) => MpParams::with_duration(Array1::from_vec(weights), s),
        None => MpParams::new(Array1::from_vec(weights)),
    };
    let traj = generate_trajectory(&theta, &cfg, Array1::from_vec(q0).view()).map_err(err)?;
    let q = traj.positions.outer_iter().map(|r| r.to_vec()).collect();
    let dq = traj.velocities.outer_iter().map(|r| r.to_vec()).collect();
    Ok((q, dq))
}

/// Tip position of a planar chain with cumulative joint angles.
#[pyfunction]
fn forward_kinematics(n_links: usize, link_length: f64, q: Vec<f64>) -> PyResult<(f64, f64)> {
    if q.len() != n_links {
        return Err(PyValueError::new_err("q length must equal n_links"));
    }
    let tip =
        diskill::envs::reacher_forward_kinematics(n_links, link_length, Array1::from_vec(q).view());
    Ok((tip[0], tip[1]))
}

fn result_dict<'py>(py: Python<'py>, r: &EpisodeResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("episodic_return", r.episodic_return)?;
    d.set_item("success", r.success)?;
    d.set_item("final_distance", r.final_distance)?;
    d.set_item("torque_cost", r.torque_cost)?;
    d.set_item("terminal_speed_sq", r.terminal_speed_sq)?;
    d.set_item("collision", r.collision)?;
    d.set_item("final_joints", r.final_joints.clone())?;
    Ok(d)
}

/// An environment built from a config file's `[env]` section (or one of the
/// presets via `Env.desk_reacher()` / `Env.desk_gate()`).
#[pyclass(name = "Env")]
struct PyEnv {
    env: Box<dyn Environment>,
}

#[pymethods]
impl PyEnv {
    #[staticmethod]
    fn desk_reacher() -> PyResult<Self> {
        let cfg = TrainConfig::desk_reacher();
        Ok(Self { env: cfg.env.build().map_err(err)? })
    }

    #[staticmethod]
    fn desk_gate() -> PyResult<Self> {
        let cfg = TrainConfig::desk_gate();
        Ok(Self { env: cfg.env.build().map_err(err)? })
    }

    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        let cfg = TrainConfig::parse(text).map_err(err)?;
        Ok(Self { env: cfg.env.build().map_err(err)? })
    }

    #[getter]
    fn context_dim(&self) -> usize {
        self.env.context_dim()
    }

    #[getter]
    fn param_dim(&self) -> usize {
        self.env.param_dim()
    }

    /// Draws `n` valid contexts from the environment distribution.
    fn sample_contexts(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = sample_contexts(self.env.as_ref(), n, &mut rng).map_err(err)?;
        Ok(out.into_iter().map(|c| c.to_vec()).collect())
    }

    /// Runs one episode; pure in `(context, theta)`.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        context: Vec<f64>,
        theta: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = self
            .env
            .evaluate(Array1::from_vec(context).view(), Array1::from_vec(theta).view())
            .map_err(err)?;
        result_dict(py, &r)
    }
}

/// A trained mixture policy loaded from a checkpoint.
#[pyclass(name = "Policy")]
struct PyPolicy {
    policy: diskill::policy::MixturePolicy,
    env: Box<dyn Environment>,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ck = trainer::Checkpoint::load(std::path::Path::new(path)).map_err(err)?;
        let env = ck.config.env.build().map_err(err)?;
        Ok(Self { policy: ck.policy, env })
    }

    #[getter]
    fn n_experts(&self) -> usize {
        self.policy.n_experts()
    }

    /// Gating probabilities over the experts for one context.
    fn gating(&self, context: Vec<f64>) -> PyResult<Vec<f64>> {
        self.policy.gating(Array1::from_vec(context).view()).map_err(err)
    }

    /// One inference step: `(expert, theta)`.
    #[pyo3(signature = (context, seed=0, deterministic=false))]
    fn act(&self, context: Vec<f64>, seed: u64, deterministic: bool) -> PyResult<(usize, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (o, theta) = self
            .policy
            .act(Array1::from_vec(context).view(), &mut rng, deterministic)
            .map_err(err)?;
        Ok((o, theta.to_vec()))
    }

    /// Act then evaluate on the checkpoint's environment.
    #[pyo3(signature = (context, seed=0, deterministic=false))]
    fn rollout<'py>(
        &self,
        py: Python<'py>,
        context: Vec<f64>,
        seed: u64,
        deterministic: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Array1::from_vec(context);
        let (o, theta) = self.policy.act(c.view(), &mut rng, deterministic).map_err(err)?;
        let r = self.env.evaluate(c.view(), theta.view()).map_err(err)?;
        let d = result_dict(py, &r)?;
        d.set_item("expert", o)?;
        d.set_item("theta", theta.to_vec())?;
        Ok(d)
    }

    /// Per-context count of experts with gating above the threshold.
    #[pyo3(signature = (n_grid=200, threshold=0.2))]
    fn activity_counts(&self, n_grid: usize, threshold: f64) -> PyResult<Vec<usize>> {
        let grid = report::context_grid(self.env.as_ref(), n_grid).map_err(err)?;
        let map = report::activity_map(&self.policy, &grid, threshold).map_err(err)?;
        Ok(map.counts)
    }
}

/// Trains per the config text; returns `(log_path, checkpoint_path)`.
#[pyfunction]
#[pyo3(signature = (config_text, seed=None))]
fn train(py: Python<'_>, config_text: &str, seed: Option<u64>) -> PyResult<(String, String)> {
    let mut cfg = TrainConfig::parse(config_text).map_err(err)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let outcome = py.detach(|| trainer::train(cfg)).map_err(err)?;
    Ok((
        outcome.log_path.display().to_string(),
        outcome.checkpoint_path.display().to_string(),
    ))
}

#[pymodule]
fn diskill_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(iqm, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_basis, m)?)?;
    m.add_function(wrap_pyfunction!(mp_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    Ok(())
}
