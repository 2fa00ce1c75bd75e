//! Python bindings for the `gapcross` crate.
//!
//! Configuration crosses the boundary as TOML text in the same format the
//! CLI reads, so a run set up in Python can be replayed with `gapcross train`.

use std::path::PathBuf;

use gapcross::config::RunConfig;
use gapcross::env::{GapEnv as CoreEnv, StepResult};
use gapcross::eval::{self, EvalReport};
use gapcross::pattern::{self, FootOffsets, LegGeometry, PfParams};
use gapcross::ppo::Trainer as CoreTrainer;
use gapcross::rhythm::{self, InitMode, OscillatorState, RgParams, SupraspinalDrive};
use gapcross::terrain::{generate_terrain, TerrainMode};
use gapcross::{Error, NUM_LEGS};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::ConfigParse(_) | Error::Shape { .. } | Error::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) | Error::Checkpoint { .. } | Error::Csv { .. } => PyIOError::new_err(e.to_string()),
        Error::PhysicsFault(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn run_config(toml: Option<&str>) -> PyResult<RunConfig> {
    match toml {
        Some(text) => RunConfig::from_toml(text).map_err(to_py),
        None => Ok(RunConfig::default()),
    }
}

fn per_leg(v: Vec<f64>, what: &str) -> PyResult<[f64; NUM_LEGS]> {
    match v.len() {
        1 => Ok([v[0]; NUM_LEGS]),
        NUM_LEGS => Ok([v[0], v[1], v[2], v[3]]),
        n => Err(PyValueError::new_err(format!("{what}: expected 1 or {NUM_LEGS} values, got {n}"))),
    }
}

fn parse_mode(mode: &str) -> PyResult<TerrainMode> {
    match mode {
        "flat" => Ok(TerrainMode::Flat),
        "standard" => Ok(TerrainMode::Standard),
        "challenging" => Ok(TerrainMode::Challenging),
        other => Err(PyValueError::new_err(format!("unknown terrain mode {other:?}"))),
    }
}

/// Four coupled amplitude/phase oscillators, one per leg (FR, FL, RR, RL).
#[pyclass(module = "gapcross_py")]
struct Oscillators {
    state: OscillatorState,
    params: RgParams,
}

#[pymethods]
impl Oscillators {
    #[new]
    #[pyo3(signature = (trot = true, seed = 0))]
    fn new(trot: bool, seed: u64) -> Self {
        let init = if trot { InitMode::Trot } else { InitMode::UniformRandom { seed } };
        Self {
            state: rhythm::reset_rg(init),
            params: RgParams::default(),
        }
    }

    /// Advances one 1 ms step. `mu` and `omega` take one value or one per leg.
    fn step(&mut self, mu: Vec<f64>, omega: Vec<f64>) -> PyResult<()> {
        let drive = SupraspinalDrive {
            mu: per_leg(mu, "mu")?,
            omega: per_leg(omega, "omega")?,
        };
        self.state = rhythm::step_rg(&self.state, &drive, &self.params).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn r(&self) -> [f64; NUM_LEGS] {
        self.state.r
    }

    #[getter]
    fn theta(&self) -> [f64; NUM_LEGS] {
        self.state.theta
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.params.dt
    }

    /// Foot targets `(x, z)` per leg for the current state.
    #[pyo3(signature = (x_off = vec![0.0], z_off = vec![0.0]))]
    fn foot_targets(&self, x_off: Vec<f64>, z_off: Vec<f64>) -> PyResult<([f64; NUM_LEGS], [f64; NUM_LEGS])> {
        let off = FootOffsets {
            x: per_leg(x_off, "x_off")?,
            z: per_leg(z_off, "z_off")?,
        };
        let t = pattern::foot_target(&self.state, &off, &PfParams::default());
        Ok((t.x, t.z))
    }
}

/// Single-leg foot target for phase `theta` and amplitude `r`.
#[pyfunction]
#[pyo3(signature = (theta, r, x_off = 0.0, z_off = 0.0))]
fn foot_target(theta: f64, r: f64, x_off: f64, z_off: f64) -> (f64, f64) {
    let mut s = OscillatorState::zeros();
    s.theta = [theta; NUM_LEGS];
    s.r = [r; NUM_LEGS];
    let off = FootOffsets {
        x: [x_off; NUM_LEGS],
        z: [z_off; NUM_LEGS],
    };
    let t = pattern::foot_target(&s, &off, &PfParams::default());
    (t.x[0], t.z[0])
}

/// `(hip, knee)` reaching the hip-frame point `(x, z)`; out-of-reach targets are clamped.
#[pyfunction]
fn inverse_kinematics(x: f64, z: f64) -> PyResult<(f64, f64)> {
    let a = pattern::inverse_kinematics(x, z, &LegGeometry::default()).map_err(to_py)?;
    Ok((a.hip, a.knee))
}

#[pyfunction]
fn forward_kinematics(hip: f64, knee: f64) -> (f64, f64) {
    pattern::forward_kinematics(hip, knee, &LegGeometry::default())
}

/// Gap intervals `[(start, end), ...]` for a seed.
#[pyfunction]
#[pyo3(signature = (n_gaps, seed, mode = "standard"))]
fn terrain(n_gaps: usize, seed: u64, mode: &str) -> PyResult<Vec<(f64, f64)>> {
    let t = generate_terrain(n_gaps, parse_mode(mode)?, seed);
    Ok(t.gaps.iter().map(|g| (g.start, g.end)).collect())
}

fn step_dict<'py>(py: Python<'py>, r: &StepResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let b = &r.breakdown;
    let parts = PyDict::new(py);
    for (name, v) in gapcross::env::RewardBreakdown::NAMES.iter().zip(b.terms()) {
        parts.set_item(*name, v)?;
    }
    d.set_item("reward_terms", parts)?;
    d.set_item("gaps_crossed", r.info.gaps_crossed)?;
    d.set_item("total_gaps_crossed", r.info.total_gaps_crossed)?;
    d.set_item("foot_in_gap", r.info.foot_in_gap)?;
    d.set_item("time", r.info.time)?;
    d.set_item("work", r.info.work)?;
    d.set_item("reason", r.reason.map(|x| format!("{x:?}").to_lowercase()))?;
    Ok(d)
}

/// The gap-crossing environment at 100 Hz control.
#[pyclass(module = "gapcross_py")]
struct GapEnv {
    inner: CoreEnv,
}

#[pymethods]
impl GapEnv {
    /// Builds from run-config TOML (the `[env]` table plus presets); defaults when omitted.
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let cfg = run_config(config)?;
        Ok(Self {
            inner: CoreEnv::new(cfg.env).map_err(to_py)?,
        })
    }

    fn reset(&mut self, seed: u64) -> PyResult<Vec<f64>> {
        self.inner.reset(seed).map_err(to_py)
    }

    /// Returns `(observation, reward, done, info)`.
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, Bound<'py, PyDict>)> {
        let r = self.inner.step(&action).map_err(to_py)?;
        let info = step_dict(py, &r)?;
        Ok((r.observation, r.reward, r.done, info))
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    #[getter]
    fn gaps(&self) -> Vec<(f64, f64)> {
        self.inner.terrain().gaps.iter().map(|g| (g.start, g.end)).collect()
    }

    /// Base `[x, z, pitch]`.
    #[getter]
    fn base(&self) -> [f64; 3] {
        self.inner.sim().base_pos
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.sim().time
    }
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("label", &r.label)?;
    d.set_item("n_rollouts", r.n_rollouts)?;
    d.set_item("success_rate", r.success_rate)?;
    d.set_item("cot", r.cot.as_ref().map(|s| s.mean))?;
    d.set_item("froude", r.froude.mean)?;
    d.set_item("velocity", r.velocity.mean)?;
    d.set_item("mean_body_angular_velocity", r.mean_body_angular_velocity.mean)?;
    d.set_item("fall_rate", r.fall_rate)?;
    Ok(d)
}

/// PPO trainer for a CPG-driven policy.
#[pyclass(module = "gapcross_py")]
struct Trainer {
    inner: CoreTrainer,
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (config = None, seed = None, workers = None))]
    fn new(config: Option<&str>, seed: Option<u64>, workers: Option<usize>) -> PyResult<Self> {
        let cfg = run_config(config)?;
        let inner = CoreTrainer::new(cfg.env, cfg.ppo, seed.unwrap_or(cfg.seed), workers.unwrap_or(cfg.workers))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreTrainer::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    /// Collects one batch and updates; returns the batch statistics.
    fn train_batch<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let inner = &mut self.inner;
        let s = py.detach(|| inner.train_batch()).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("batch", s.batch)?;
        d.set_item("samples", s.samples)?;
        d.set_item("mean_return", s.mean_return)?;
        d.set_item("success_rate", s.success_rate)?;
        d.set_item("episodes", s.episodes)?;
        d.set_item("kl", s.kl)?;
        d.set_item("entropy", s.entropy)?;
        d.set_item("lr", s.lr)?;
        d.set_item("policy_loss", s.policy_loss)?;
        d.set_item("value_loss", s.value_loss)?;
        Ok(d)
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn samples(&self) -> u64 {
        self.inner.samples
    }

    /// Deterministic action for a raw (unnormalised) observation.
    fn act(&self, observation: Vec<f64>) -> Vec<f64> {
        self.inner.policy().act(&observation)
    }

    /// Deterministic evaluation on the training environment (optionally with a different gap count).
    #[pyo3(signature = (n = 30, seed = 1000, gaps = None, workers = 1))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        seed: u64,
        gaps: Option<usize>,
        workers: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut env = self.inner.env_cfg.clone();
        if let Some(g) = gaps {
            env.terrain.n_gaps = g;
        }
        let policy = self.inner.policy();
        let r = py
            .detach(|| eval::evaluate(&policy, &env, n, seed, workers, "python"))
            .map_err(to_py)?;
        report_dict(py, &r)
    }
}

#[pyfunction]
fn success_rate(crossed: usize, total: usize) -> Option<f64> {
    eval::success_rate(crossed, total)
}

#[pyfunction]
#[pyo3(signature = (velocity, leg_length, gravity = 9.81))]
fn froude(velocity: f64, leg_length: f64, gravity: f64) -> f64 {
    eval::froude(velocity, leg_length, gravity)
}

#[pyfunction]
#[pyo3(signature = (work, mass, distance, gravity = 9.81))]
fn cost_of_transport(work: f64, mass: f64, distance: f64, gravity: f64) -> Option<f64> {
    eval::cost_of_transport(work, mass, gravity, distance)
}

#[pymodule]
fn gapcross_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Oscillators>()?;
    m.add_class::<GapEnv>()?;
    m.add_class::<Trainer>()?;
    m.add_function(wrap_pyfunction!(foot_target, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(terrain, m)?)?;
    m.add_function(wrap_pyfunction!(success_rate, m)?)?;
    m.add_function(wrap_pyfunction!(froude, m)?)?;
    m.add_function(wrap_pyfunction!(cost_of_transport, m)?)?;
    Ok(())
}
