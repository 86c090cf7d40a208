//! Python bindings: problems, runs, schedules, stage plans and the
//! lower-bound tools. Long computations release the interpreter lock.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use shblab::harness::{self, ExperimentConfig, Method, Preset};
use shblab::optimizers::RunConfig;
use shblab::{lowerbound, multistage, problems, sampling, schedules, twophase};

fn py_err(e: shblab::Error) -> PyErr {
    match e {
        shblab::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_config_error() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for shblab::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A finite-sum quadratic with known minimizer.
#[pyclass(name = "Problem", module = "shblab", frozen)]
struct PyProblem {
    inner: problems::QuadraticProblem,
}

#[pymethods]
impl PyProblem {
    /// Noisy least squares with condition number `kappa`.
    #[staticmethod]
    #[pyo3(signature = (n, d, kappa, noise=0.0, seed=0))]
    fn regression(n: usize, d: usize, kappa: f64, noise: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: problems::generate_regression(n, d, kappa, noise, seed).py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, d, kappa, seed=0))]
    fn feasible(n: usize, d: usize, kappa: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: problems::generate_feasible_system(n, d, kappa, seed).py()? })
    }

    /// The diagonal construction on which small-batch SHB diverges.
    #[staticmethod]
    fn diagonal(n: usize, kappa: f64) -> PyResult<Self> {
        Ok(Self { inner: problems::generate_diagonal_lb(n, kappa).py()? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: problems::QuadraticProblem::from_text(text).py()? })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: problems::QuadraticProblem::load(path).py()? })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(path).py()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }

    #[getter]
    fn strong_convexity(&self) -> f64 {
        self.inner.strong_convexity()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    #[getter]
    fn w_star(&self) -> Vec<f64> {
        self.inner.w_star().to_vec()
    }

    fn objective(&self, w: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&w).py()
    }

    fn full_gradient(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.full_gradient(&w).py()
    }

    fn batch_gradient(&self, batch: Vec<usize>, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.batch_gradient(&batch, &w).py()
    }

    /// `(sigma2, chi2)`: gradient variance at the optimum and the
    /// interpolation gap.
    fn noise_profile(&self) -> (f64, f64) {
        let np = self.inner.noise_profile();
        (np.sigma2, np.chi2)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(kind={}, n={}, d={}, kappa={:.6})",
            self.inner.kind().as_str(),
            self.inner.n(),
            self.inner.d(),
            self.inner.kappa()
        )
    }
}

/// Recorded gradient norms and distances of one run.
#[pyclass(name = "Trajectory", module = "shblab", frozen)]
struct PyTrajectory {
    inner: shblab::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn iters(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.k).collect()
    }

    #[getter]
    fn grad_norms(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.grad_norm).collect()
    }

    #[getter]
    fn dists(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.dist).collect()
    }

    #[getter]
    fn final_iterate(&self) -> Vec<f64> {
        self.inner.final_iterate.clone()
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.inner.diverged
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn final_grad_norm(&self) -> f64 {
        self.inner.final_grad_norm()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(records={}, final_grad_norm={:.6e}, diverged={})",
            self.inner.records.len(),
            self.inner.final_grad_norm(),
            self.inner.diverged
        )
    }
}

/// Runs `method` (e.g. `"shb-const(a=0.5)"`, `"multistage"`, `"twophase(c=0.5)"`).
#[pyfunction]
#[pyo3(signature = (problem, method, batch_size, iters, seed=0, w0=None, record_every=None))]
fn run(
    py: Python<'_>,
    problem: &PyProblem,
    method: &str,
    batch_size: usize,
    iters: usize,
    seed: u64,
    w0: Option<Vec<f64>>,
    record_every: Option<usize>,
) -> PyResult<PyTrajectory> {
    let method: Method = method.parse().py()?;
    let p = &problem.inner;
    let mut cfg = RunConfig::new(batch_size, iters, w0.unwrap_or_else(|| vec![0.0; p.d()]));
    if let Some(every) = record_every {
        cfg = cfg.with_record_every(every);
    }
    let t = py.detach(|| harness::run_method(p, &method, &cfg, seed)).py()?;
    Ok(PyTrajectory { inner: t })
}

/// Runs a `key = value` experiment config and returns
/// `{method: {"iter": [...], "mean_grad_norm": [...], "mean_dist": [...], "n_diverged": int}}`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_text: &str) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = ExperimentConfig::from_text(config_text).py()?;
    let res = py.detach(|| harness::run_experiment(&cfg)).py()?;
    let out = pyo3::types::PyDict::new(py);
    for agg in &res.aggregates {
        let d = pyo3::types::PyDict::new(py);
        d.set_item("iter", agg.rows.iter().map(|r| r.k).collect::<Vec<_>>())?;
        d.set_item("mean_grad_norm", agg.rows.iter().map(|r| r.mean_grad_norm).collect::<Vec<_>>())?;
        d.set_item("mean_dist", agg.rows.iter().map(|r| r.mean_dist).collect::<Vec<_>>())?;
        d.set_item("n_diverged", agg.n_diverged())?;
        out.set_item(&agg.label, d)?;
    }
    Ok(out)
}

/// Config texts of a named preset (empty for non-experiment presets).
#[pyfunction]
fn preset_configs(name: &str) -> PyResult<Vec<String>> {
    Ok(match harness::preset(name).py()? {
        Preset::Experiments(v) => v.iter().map(ExperimentConfig::to_text).collect(),
        Preset::LowerBound(_) => Vec::new(),
    })
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    harness::PRESET_NAMES.to_vec()
}

/// `(alpha, beta)` for step fraction `a`.
#[pyfunction]
#[pyo3(signature = (l, mu, a=1.0))]
fn constant_params(l: f64, mu: f64, a: f64) -> PyResult<(f64, f64)> {
    let p = schedules::constant_params(l, mu, a).py()?;
    Ok((p.alpha, p.beta))
}

#[pyclass(name = "ExpSchedule", module = "shblab", frozen)]
struct PyExpSchedule {
    inner: schedules::ExpSchedule,
}

#[pymethods]
impl PyExpSchedule {
    #[new]
    #[pyo3(signature = (l, mu, horizon, tau=1.0, half_step=false))]
    fn new(l: f64, mu: f64, horizon: usize, tau: f64, half_step: bool) -> PyResult<Self> {
        let scale = if half_step { schedules::StepScale::Half } else { schedules::StepScale::Quarter };
        Ok(Self { inner: schedules::ExpSchedule::with_scale(l, mu, horizon, tau, scale).py()? })
    }

    fn eta(&self, k: usize) -> f64 {
        self.inner.eta(k)
    }

    fn weight(&self, k: usize) -> f64 {
        self.inner.lambda(k)
    }

    fn shb_params(&self, k: usize) -> (f64, f64) {
        self.inner.shb_params(k)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }
}

/// `[(i, length, a, alpha, beta), ...]` for the multi-stage method.
#[pyfunction]
fn plan_stages(horizon: usize, l: f64, mu: f64) -> PyResult<Vec<(usize, usize, f64, f64, f64)>> {
    let plan = multistage::plan_stages(horizon, l, mu).py()?;
    Ok(plan.stages.iter().map(|s| (s.index, s.length, s.a, s.params.alpha, s.params.beta)).collect())
}

#[pyfunction]
fn lambert_w0(x: f64) -> PyResult<f64> {
    multistage::lambert_w0(x).py()
}

#[pyfunction]
#[pyo3(signature = (n, kappa, a=1.0))]
fn batch_threshold(n: usize, kappa: f64, a: f64) -> f64 {
    multistage::batch_threshold(n, kappa, a)
}

#[pyfunction]
fn critical_t_range(n: usize, b: usize, kappa: f64) -> PyResult<(f64, f64)> {
    let r = multistage::critical_t_range(n, b, kappa).py()?;
    Ok((r.lo, r.hi))
}

#[pyfunction]
fn q_exponent(c: f64, kappa: f64) -> PyResult<f64> {
    twophase::q_exponent(c, kappa).py()
}

#[pyfunction]
fn zeta(n: usize, b: usize) -> PyResult<f64> {
    sampling::zeta(n, b).py()
}

/// `(theta, psi)` at the grid minimum. Without `n`/`b` the two-sample model is used.
#[pyfunction]
#[pyo3(signature = (beta, grid_size=2048, n=None, b=None))]
fn min_psi(beta: f64, grid_size: usize, n: Option<usize>, b: Option<usize>) -> PyResult<(f64, f64)> {
    let model = match (n, b) {
        (Some(n), Some(b)) => lowerbound::PsiModel::n_sample(n, b, beta).py()?,
        (None, None) => lowerbound::PsiModel::two_sample(beta),
        _ => return Err(PyValueError::new_err("give both n and b, or neither")),
    };
    Ok(lowerbound::min_psi(&model, grid_size))
}

#[pyfunction]
#[pyo3(signature = (n, b, grid_size=2048, tol=1e-4))]
fn beta_star(py: Python<'_>, n: usize, b: usize, grid_size: usize, tol: f64) -> PyResult<Option<f64>> {
    py.detach(|| lowerbound::beta_star(n, b, grid_size, tol)).py()
}

#[pyfunction]
fn kappa_star(beta: f64) -> f64 {
    lowerbound::kappa_star(beta)
}

/// `(slope, intercept)` of the log batch factor against `ln kappa*`.
#[pyfunction]
#[pyo3(signature = (n, b_values, grid_size=2048, tol=1e-4))]
fn fit_threshold(py: Python<'_>, n: usize, b_values: Vec<usize>, grid_size: usize, tol: f64) -> PyResult<(f64, f64)> {
    let fit = py.detach(|| lowerbound::fit_threshold(n, &b_values, grid_size, tol)).py()?;
    Ok((fit.slope, fit.intercept))
}

#[pyfunction]
fn divergence_threshold(n: usize, kappa: f64) -> f64 {
    lowerbound::divergence_threshold(n, kappa)
}

#[pymodule(name = "shblab")]
fn shblab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyExpSchedule>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(preset_configs, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(constant_params, m)?)?;
    m.add_function(wrap_pyfunction!(plan_stages, m)?)?;
    m.add_function(wrap_pyfunction!(lambert_w0, m)?)?;
    m.add_function(wrap_pyfunction!(batch_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(critical_t_range, m)?)?;
    m.add_function(wrap_pyfunction!(q_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(min_psi, m)?)?;
    m.add_function(wrap_pyfunction!(beta_star, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_star, m)?)?;
    m.add_function(wrap_pyfunction!(fit_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(divergence_threshold, m)?)?;
    Ok(())
}
