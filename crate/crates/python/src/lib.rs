//! Python bindings for `dg_select`.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dg_select::bounds::{self, BoundInputs, BoundReport};
use dg_select::complexity;
use dg_select::environment::{self as env_mod, Environment, Sample, SynthSpec};
use dg_select::harness;
use dg_select::linalg::Matrix;
use dg_select::linear::{self, LinearModel, LossKind, SvmConfig};
use dg_select::mlp::{self, PenaltyPlugin, TrainSchedule};
use dg_select::selection::{self, CGrid, SelectionResult};
use dg_select::Error;

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        3 => PyArithmeticError::new_err(msg),
        _ if matches!(e, Error::Io(_)) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn grid(log2_values: Option<Vec<i32>>) -> PyResult<CGrid> {
    match log2_values {
        Some(v) => CGrid::new(v).map_err(to_py),
        None => Ok(CGrid::default()),
    }
}

fn loss(name: &str) -> PyResult<LossKind> {
    match name {
        "hinge" => Ok(LossKind::Hinge),
        "logistic" => Ok(LossKind::Logistic),
        _ => Err(PyValueError::new_err(format!("unknown loss {name:?}"))),
    }
}

/// A set of labelled domains with a shared feature space.
#[pyclass(name = "Environment", module = "dgselect", frozen)]
struct PyEnvironment {
    inner: Environment,
}

#[pymethods]
impl PyEnvironment {
    /// Builds an environment from `[(domain_id, features, labels), ...]`.
    #[new]
    #[pyo3(signature = (domains, num_classes=None))]
    fn new(domains: Vec<(String, Vec<Vec<f64>>, Vec<usize>)>, num_classes: Option<usize>) -> PyResult<Self> {
        let doms = domains
            .into_iter()
            .map(|(id, xs, ys)| {
                if xs.len() != ys.len() {
                    return Err(PyValueError::new_err(format!("domain {id}: {} rows but {} labels", xs.len(), ys.len())));
                }
                let samples = xs.into_iter().zip(ys).map(|(x, y)| Sample::new(x, y)).collect();
                env_mod::Domain::new(id, samples).map_err(to_py)
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = match num_classes {
            Some(k) => Environment::new(doms, k),
            None => Environment::from_domains(doms),
        }
        .map_err(to_py)?;
        Ok(PyEnvironment { inner })
    }

    #[staticmethod]
    fn from_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyEnvironment {
            inner: env_mod::load_feature_csv(path).map_err(to_py)?,
        })
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        env_mod::emit_feature_csv(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn n_domains(&self) -> usize {
        self.inner.n_domains()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn domain_ids(&self) -> Vec<String> {
        self.inner.domains().iter().map(|d| d.id.clone()).collect()
    }

    /// `(features, labels)` of one domain.
    fn domain(&self, id: &str) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
        let d = self
            .inner
            .domain(id)
            .ok_or_else(|| PyValueError::new_err(format!("unknown domain id {id:?}")))?;
        Ok((
            d.samples.iter().map(|s| s.features.clone()).collect(),
            d.samples.iter().map(|s| s.label).collect(),
        ))
    }

    /// Stratified per-domain split into `(train, test)`.
    fn split(&self, train_frac: f64, seed: u64) -> PyResult<(PyEnvironment, PyEnvironment)> {
        let (a, b) = env_mod::split_environment(&self.inner, train_frac, seed).map_err(to_py)?;
        Ok((PyEnvironment { inner: a }, PyEnvironment { inner: b }))
    }

    fn __len__(&self) -> usize {
        self.inner.total_samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "Environment(n_domains={}, num_classes={}, feature_dim={}, samples={})",
            self.inner.n_domains(),
            self.inner.num_classes(),
            self.inner.feature_dim(),
            self.inner.total_samples()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n_domains, m_per_domain, d, k, shift_scale=0.0, label_noise=0.0, class_separation=2.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn synth_environment(
    n_domains: usize,
    m_per_domain: usize,
    d: usize,
    k: usize,
    shift_scale: f64,
    label_noise: f64,
    class_separation: f64,
    seed: u64,
) -> PyResult<PyEnvironment> {
    let spec = SynthSpec {
        covariate_shift_scale: shift_scale,
        label_noise,
        class_separation,
        seed,
        ..SynthSpec::new(n_domains, m_per_domain, d, k)
    };
    Ok(PyEnvironment {
        inner: env_mod::synth_environment(&spec).map_err(to_py)?,
    })
}

/// One-vs-rest linear classifier.
#[pyclass(name = "LinearModel", module = "dgselect", frozen)]
struct PyLinearModel {
    inner: LinearModel,
}

#[pymethods]
impl PyLinearModel {
    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        rows(self.inner.weights())
    }

    #[getter]
    fn trained_c(&self) -> f64 {
        self.inner.trained_c()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.report().converged
    }

    fn scores(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&features)?;
        Ok(self.inner.scores(&features))
    }

    fn predict(&self, features: Vec<f64>) -> PyResult<usize> {
        self.check_dim(&features)?;
        Ok(self.inner.predict(&features))
    }

    /// Accuracy, ramp risk and mean margin over a whole environment.
    fn evaluate<'py>(&self, py: Python<'py>, env: PyRef<'_, PyEnvironment>) -> PyResult<Bound<'py, PyDict>> {
        let m = linear::evaluate(&self.inner, &env.inner.pooled()).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("accuracy", m.accuracy)?;
        d.set_item("ramp_risk", m.ramp_risk)?;
        d.set_item("mean_margin", m.mean_margin)?;
        Ok(d)
    }

    fn weight_norm(&self) -> f64 {
        linear::weight_norm(&self.inner).max_norm
    }
}

impl PyLinearModel {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.input_dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} features, got {}",
                self.inner.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

#[pyfunction]
#[pyo3(signature = (env, c, loss="hinge", tol=1e-4, max_iter=1000, seed=0))]
fn train_linear(
    py: Python<'_>,
    env: PyRef<'_, PyEnvironment>,
    c: f64,
    loss: &str,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> PyResult<PyLinearModel> {
    let config = SvmConfig {
        loss: self::loss(loss)?,
        c,
        tol,
        max_iter,
        seed,
        ..SvmConfig::default()
    };
    let env = &env.inner;
    let model = py
        .detach(|| linear::train_linear(&env.pooled(), env.num_classes(), &config))
        .map_err(to_py)?;
    Ok(PyLinearModel { inner: model })
}

fn report_dict<'py>(py: Python<'py>, r: &BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("confidence", r.confidence)?;
    d.set_item("vacuous", r.vacuous)?;
    Ok(d)
}

#[pyfunction]
fn theorem1_bound<'py>(
    py: Python<'py>,
    empirical_risk: f64,
    rad_mn: f64,
    rad_n: f64,
    m: usize,
    n: usize,
    delta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = bounds::theorem1_bound(&BoundInputs {
        empirical_risk,
        rad_mn,
        rad_n,
        m,
        n,
        delta,
    })
    .map_err(to_py)?;
    report_dict(py, &r)
}

#[pyfunction]
fn excess_risk_bound<'py>(py: Python<'py>, rad_mn: f64, rad_n: f64, m: usize, n: usize, delta: f64) -> PyResult<Bound<'py, PyDict>> {
    report_dict(py, &bounds::excess_risk_bound(rad_mn, rad_n, m, n, delta).map_err(to_py)?)
}

#[pyfunction]
fn cantelli_bound<'py>(py: Python<'py>, env_risk: f64, variance: f64, kappa: f64) -> PyResult<Bound<'py, PyDict>> {
    report_dict(py, &bounds::cantelli_bound(env_risk, variance, kappa).map_err(to_py)?)
}

#[pyfunction]
fn worst_case_transform(a: f64, kappa: f64) -> PyResult<f64> {
    Ok(bounds::worst_case_transform(a, kappa).map_err(to_py)?.value)
}

#[pyfunction]
fn linear_rad_closed_form(xs: Vec<Vec<f64>>, b: f64) -> PyResult<f64> {
    complexity::linear_rad_closed_form(&xs, b).map_err(to_py)
}

/// Returns `(mean, standard_error)`.
#[pyfunction]
fn linear_rad_monte_carlo(py: Python<'_>, xs: Vec<Vec<f64>>, b: f64, n_draws: usize, seed: u64) -> PyResult<(f64, f64)> {
    let e = py
        .detach(|| complexity::linear_rad_monte_carlo(&xs, b, n_draws, seed))
        .map_err(to_py)?;
    Ok((e.mean, e.std_error))
}

#[pyfunction]
fn linear_rad_exhaustive(xs: Vec<Vec<f64>>, b: f64) -> PyResult<f64> {
    Ok(complexity::linear_rad_exhaustive(&xs, b).map_err(to_py)?.mean)
}

#[pyfunction]
#[pyo3(signature = (env, b, n_draws, seed, bias_feature=true))]
fn domain_level_rad(env: PyRef<'_, PyEnvironment>, b: f64, n_draws: usize, seed: u64, bias_feature: bool) -> PyResult<(f64, f64)> {
    let e = complexity::domain_level_rad(&env.inner, b, n_draws, seed, bias_feature).map_err(to_py)?;
    Ok((e.mean, e.std_error))
}

#[pyfunction]
#[pyo3(signature = (m, tol=complexity::SPECTRAL_TOL, max_iter=complexity::SPECTRAL_MAX_ITER))]
fn spectral_norm(m: Vec<Vec<f64>>, tol: f64, max_iter: usize) -> PyResult<f64> {
    Ok(complexity::spectral_norm(&matrix(m)?, tol, max_iter).map_err(to_py)?.value)
}

#[pyfunction]
fn neyshabur_measure(v: Vec<Vec<f64>>, u: Vec<Vec<f64>>, u0: Vec<Vec<f64>>) -> PyResult<f64> {
    complexity::neyshabur_measure(&matrix(v)?, &matrix(u)?, &matrix(u0)?).map_err(to_py)
}

fn selection_dict<'py>(py: Python<'py>, r: &SelectionResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("criterion", r.criterion.name())?;
    d.set_item("chosen_c", r.chosen_c)?;
    d.set_item("chosen_log2", r.chosen_log2)?;
    d.set_item("ln_c_selected", r.ln_c_selected)?;
    d.set_item("per_c_scores", r.per_c_scores.clone())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (env, log2_grid=None, seed=0))]
fn domain_wise_cv<'py>(
    py: Python<'py>,
    env: PyRef<'_, PyEnvironment>,
    log2_grid: Option<Vec<i32>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = grid(log2_grid)?;
    let env = &env.inner;
    let r = py
        .detach(|| selection::domain_wise_cv(env, &g, &SvmConfig::default(), seed))
        .map_err(to_py)?;
    selection_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (env, log2_grid=None, k_folds=5, seed=0))]
fn instance_wise_cv<'py>(
    py: Python<'py>,
    env: PyRef<'_, PyEnvironment>,
    log2_grid: Option<Vec<i32>>,
    k_folds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = grid(log2_grid)?;
    let env = &env.inner;
    let r = py
        .detach(|| selection::instance_wise_cv(env, &g, k_folds, &SvmConfig::default(), seed))
        .map_err(to_py)?;
    selection_dict(py, &r)
}

/// Mean curves and their argmax locations (as log2 C).
#[pyfunction]
#[pyo3(signature = (env, seeds, log2_grid=None, train_frac=0.8))]
fn c_sweep<'py>(
    py: Python<'py>,
    env: PyRef<'_, PyEnvironment>,
    seeds: Vec<u64>,
    log2_grid: Option<Vec<i32>>,
    train_frac: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = grid(log2_grid)?;
    let env = &env.inner;
    let c = py
        .detach(|| selection::c_sweep(env, &g, &seeds, &SvmConfig::default(), train_frac))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("log2_c", c.log2_c.clone())?;
    d.set_item("iid_mean", c.iid_mean.clone())?;
    d.set_item("dg_mean", c.dg_mean.clone())?;
    d.set_item("worst_mean", c.worst_mean.clone())?;
    d.set_item("argmax_iid", c.argmax_iid)?;
    d.set_item("argmax_dg", c.argmax_dg)?;
    d.set_item("argmax_worst", c.argmax_worst)?;
    Ok(d)
}

/// Trains the 2-layer network and returns one dict per checkpoint.
#[pyfunction]
#[pyo3(signature = (env, steps=3000, checkpoint_every=300, learning_rate=1e-2, batch_size=64, hidden=256, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_mlp<'py>(
    py: Python<'py>,
    env: PyRef<'_, PyEnvironment>,
    steps: usize,
    checkpoint_every: usize,
    learning_rate: f64,
    batch_size: usize,
    hidden: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let schedule = TrainSchedule {
        steps,
        checkpoint_every,
        learning_rate,
        batch_size,
        hidden,
        seed,
    };
    let env = &env.inner;
    let run = py
        .detach(|| mlp::train_mlp(env, &schedule, &PenaltyPlugin::Erm))
        .map_err(to_py)?;
    run.checkpoints
        .iter()
        .map(|ck| {
            let d = PyDict::new(py);
            d.set_item("step", ck.step)?;
            d.set_item("complexity", complexity::neyshabur_complexity(ck).map_err(to_py)?)?;
            d.set_item("train_loss", ck.train_loss)?;
            d.set_item("train_accuracy", ck.train_accuracy)?;
            Ok(d)
        })
        .collect()
}

/// Runs a TOML experiment config and returns the written file names.
#[pyfunction]
#[pyo3(signature = (config_path, out_dir=None))]
fn run_experiment(py: Python<'_>, config_path: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Vec<String>> {
    let manifest = py
        .detach(|| harness::run_config_file(&config_path, out_dir.as_deref()))
        .map_err(to_py)?;
    Ok(manifest.artifacts.into_iter().map(|a| a.file).collect())
}

#[pymodule]
fn dgselect(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyLinearModel>()?;
    m.add_function(wrap_pyfunction!(synth_environment, m)?)?;
    m.add_function(wrap_pyfunction!(train_linear, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(excess_risk_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cantelli_bound, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_transform, m)?)?;
    m.add_function(wrap_pyfunction!(linear_rad_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(linear_rad_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(linear_rad_exhaustive, m)?)?;
    m.add_function(wrap_pyfunction!(domain_level_rad, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_norm, m)?)?;
    m.add_function(wrap_pyfunction!(neyshabur_measure, m)?)?;
    m.add_function(wrap_pyfunction!(domain_wise_cv, m)?)?;
    m.add_function(wrap_pyfunction!(instance_wise_cv, m)?)?;
    m.add_function(wrap_pyfunction!(c_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(train_mlp, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
