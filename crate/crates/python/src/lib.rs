//! Python module `ordheck`: datasets, the main estimators, the IV test and
//! the Monte Carlo designs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ordheck::estimators::{self as est, FitOptions};
use ordheck::inference::{CovarianceMethod, CovarianceRequest};
use ordheck::sim;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: ordheck::Error) -> PyErr {
    match e {
        ordheck::Error::Numeric(_) | ordheck::Error::Singular { .. } | ordheck::Error::Underflow { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Stage layout: number of stages, outcome stages and excluded columns.
#[pyclass(frozen, skip_from_py_object, name = "ModelSpec")]
#[derive(Clone)]
pub struct PyModelSpec {
    inner: ordheck::model::ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    #[new]
    fn new(n_stages: usize, outcome_stages: Vec<usize>, exclusion_columns: Vec<usize>) -> PyResult<Self> {
        let inner = ordheck::model::ModelSpec::new(n_stages, outcome_stages, exclusion_columns).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_stages(&self) -> usize {
        self.inner.n_stages()
    }

    #[getter]
    fn outcome_stages(&self) -> Vec<usize> {
        self.inner.outcome_stages().to_vec()
    }

    #[getter]
    fn exclusion_columns(&self) -> Vec<usize> {
        self.inner.exclusion_columns().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelSpec(n_stages={}, outcome_stages={:?}, exclusion_columns={:?})",
            self.inner.n_stages(),
            self.inner.outcome_stages(),
            self.inner.exclusion_columns()
        )
    }
}

/// Stage codes, outcomes (None where unobserved) and design matrices.
#[pyclass(frozen, skip_from_py_object, name = "Dataset")]
#[derive(Clone)]
pub struct PyDataset {
    inner: ordheck::model::Dataset,
    selection_names: Vec<String>,
    outcome_names: Vec<String>,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (stage, outcome, x, z, clusters=None, weights=None, outcome_names=None, selection_names=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        stage: Vec<usize>,
        outcome: Vec<Option<f64>>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        clusters: Option<Vec<i64>>,
        weights: Option<Vec<f64>>,
        outcome_names: Option<Vec<String>>,
        selection_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let x = matrix(&x, "x")?;
        let z = matrix(&z, "z")?;
        let (p, q) = (x.ncols(), z.ncols());
        let mut inner = ordheck::model::Dataset::new(stage, outcome, x, z).map_err(to_py)?;
        if let Some(c) = clusters {
            inner = inner.with_clusters(c).map_err(to_py)?;
        }
        if let Some(w) = weights {
            inner = inner.with_weights(w).map_err(to_py)?;
        }
        let names = est::ColumnNames { selection: selection_names.unwrap_or_default(), outcome: outcome_names.unwrap_or_default() }
            .or_default(q, p);
        Ok(Self { inner, selection_names: names.selection, outcome_names: names.outcome })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn stage(&self) -> Vec<usize> {
        self.inner.stage().to_vec()
    }

    #[getter]
    fn outcome(&self) -> Vec<Option<f64>> {
        self.inner.outcome().to_vec()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.x_outcome())
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.z_selection())
    }

    fn validate(&self, spec: &PyModelSpec) -> PyResult<()> {
        self.inner.validate(&spec.inner).map_err(to_py)
    }
}

impl PyDataset {
    fn names(&self) -> est::ColumnNames {
        est::ColumnNames { selection: self.selection_names.clone(), outcome: self.outcome_names.clone() }
    }
}

/// Estimates with standard errors and diagnostics.
#[pyclass(frozen, name = "FitResult")]
pub struct PyFitResult {
    inner: est::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn estimator(&self) -> &'static str {
        self.inner.estimator.label()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    #[getter]
    fn estimates(&self) -> Vec<f64> {
        self.inner.estimates.iter().copied().collect()
    }

    #[getter]
    fn se(&self) -> Option<Vec<f64>> {
        self.inner.ses()
    }

    #[getter]
    fn covariance(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.covariance.as_ref().map(rows_of)
    }

    #[getter]
    fn loglik(&self) -> Option<f64> {
        self.inner.loglik
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn derived(&self) -> BTreeMap<String, f64> {
        self.inner.derived.clone()
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.inner.flags.clone()
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    fn estimate(&self, name: &str) -> PyResult<f64> {
        self.inner.estimate(name).ok_or_else(|| PyValueError::new_err(format!("no parameter named {name:?}")))
    }

    fn as_dict(&self) -> BTreeMap<String, (f64, Option<f64>)> {
        let ses = self.inner.ses();
        self.inner
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), (self.inner.estimates[i], ses.as_ref().map(|s| s[i]))))
            .collect()
    }
}

fn options(covariance: &str, fixed_rho: Option<f64>, exp_beta: Vec<String>, names: est::ColumnNames) -> PyResult<FitOptions> {
    let method = match covariance {
        "oim" => CovarianceMethod::ObservedInformation,
        "robust" => CovarianceMethod::Robust,
        "cluster" => CovarianceMethod::ClusterRobust,
        other => return Err(PyValueError::new_err(format!("unknown covariance {other:?}"))),
    };
    Ok(FitOptions {
        covariance: CovarianceRequest { method, small_sample_correction: false },
        fixed_rho,
        exp_beta,
        names,
        ..FitOptions::default()
    })
}

/// Full-information maximum likelihood of the ordered-selection model.
#[pyfunction]
#[pyo3(signature = (data, spec, covariance="oim", fixed_rho=None, exp_beta=Vec::new()))]
fn fit_ordered_heckman(
    data: &PyDataset,
    spec: &PyModelSpec,
    covariance: &str,
    fixed_rho: Option<f64>,
    exp_beta: Vec<String>,
) -> PyResult<PyFitResult> {
    let opts = options(covariance, fixed_rho, exp_beta, data.names())?;
    let inner = est::fit_ordered_heckman(&data.inner, &spec.inner, &opts).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

#[pyfunction]
#[pyo3(signature = (data, spec, covariance="oim"))]
fn fit_ordered_probit(data: &PyDataset, spec: &PyModelSpec, covariance: &str) -> PyResult<PyFitResult> {
    let opts = options(covariance, None, Vec::new(), data.names())?;
    let inner = est::fit_ordered_probit(&data.inner, &spec.inner, &opts).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

#[pyfunction]
fn fit_two_step(data: &PyDataset, spec: &PyModelSpec) -> PyResult<PyFitResult> {
    let opts = options("oim", None, Vec::new(), data.names())?;
    let inner = est::fit_two_step(&data.inner, &spec.inner, &opts).map_err(to_py)?.result;
    Ok(PyFitResult { inner })
}

/// Least squares with the classical covariance.
#[pyfunction]
#[pyo3(signature = (y, x, weights=None))]
fn fit_ols(y: Vec<f64>, x: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<PyFitResult> {
    let x = matrix(&x, "x")?;
    let y = nalgebra::DVector::from_vec(y);
    let inner = est::fit_ols(&y, &x, weights.as_deref(), None).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Quantile regression coefficients.
#[pyfunction]
#[pyo3(signature = (y, x, tau, weights=None))]
fn fit_quantile(y: Vec<f64>, x: Vec<Vec<f64>>, tau: f64, weights: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let x = matrix(&x, "x")?;
    let y = nalgebra::DVector::from_vec(y);
    let fit = est::fit_quantile(&y, &x, tau, weights.as_deref()).map_err(to_py)?;
    Ok(fit.coefficients.iter().copied().collect())
}

/// Quantile regression after imputing unobserved outcomes at the sample
/// minimum. Returns (coefficients, imputed value, rows crossing the fit).
#[pyfunction]
fn fit_imputation(data: &PyDataset, spec: &PyModelSpec, tau: f64) -> PyResult<(Vec<f64>, f64, usize)> {
    let fit = est::fit_imputation(&data.inner, &spec.inner, tau, &est::ImputationOptions::default()).map_err(to_py)?;
    Ok((fit.fit.coefficients.iter().copied().collect(), fit.imputed_value, fit.n_crossing))
}

/// One sample from a Monte Carlo design, with its spec.
#[pyfunction]
#[pyo3(signature = (study, rho, alpha1, seed, n_per_group=1000))]
fn simulate_dgp(study: &str, rho: f64, alpha1: f64, seed: u64, n_per_group: usize) -> PyResult<(PyDataset, PyModelSpec)> {
    let mut cfg = match study {
        "I" => sim::DgpConfig::study_one(rho, alpha1, seed),
        "II" => sim::DgpConfig::study_two(rho, alpha1, seed),
        other => return Err(PyValueError::new_err(format!("unknown study {other:?}"))),
    };
    cfg.n_per_group = n_per_group;
    let s = sim::simulate_dgp(&cfg).map_err(to_py)?;
    Ok((
        PyDataset { inner: s.data, selection_names: s.names.selection, outcome_names: s.names.outcome },
        PyModelSpec { inner: s.spec },
    ))
}

/// Runs a Monte Carlo study and returns its table as (csv, markdown).
#[pyfunction]
#[pyo3(signature = (study, reps, seed, cells=None, n_per_group=1000))]
fn run_study(study: &str, reps: usize, seed: u64, cells: Option<Vec<(f64, f64)>>, n_per_group: usize) -> PyResult<(String, String)> {
    let study = match study {
        "I" => sim::Study::I,
        "II" => sim::Study::II,
        other => return Err(PyValueError::new_err(format!("unknown study {other:?}"))),
    };
    let mut cfg = sim::StudyConfig::new(study, reps, seed);
    if let Some(c) = cells {
        cfg.cells = c;
    }
    cfg.n_per_group = n_per_group;
    let r = sim::run_study(&cfg).map_err(to_py)?;
    Ok((
        sim::emit_table(&r, sim::TableFormat::Csv).map_err(to_py)?,
        sim::emit_table(&r, sim::TableFormat::Markdown).map_err(to_py)?,
    ))
}

/// Exclusion-restriction test; returns a dict of the reported statistics.
#[pyfunction]
#[pyo3(signature = (y, s, z, bins=10, draws=10_000, seed=0))]
fn huber_mellace(
    y: Vec<Option<f64>>,
    s: Vec<bool>,
    z: Vec<bool>,
    bins: usize,
    draws: usize,
    seed: u64,
) -> PyResult<BTreeMap<String, f64>> {
    let input = ordheck::ivtest::IvTestInput { y, s, z, bins, draws, seed };
    let r = ordheck::ivtest::huber_mellace(&input).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("standardized_difference".to_string(), r.standardized_difference),
        ("p_mean".to_string(), r.p_mean),
        ("p_prob".to_string(), r.p_prob),
        ("direction".to_string(), f64::from(r.direction)),
        ("q".to_string(), r.q),
    ]))
}

/// Leave-one-out group shares of the requested stage levels.
#[pyfunction]
fn leave_out_means(stages: Vec<usize>, groups: Vec<i64>, levels: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
    let lo = ordheck::data::leave_out_means(&stages, &groups, &levels).map_err(to_py)?;
    Ok(rows_of(&lo.shares))
}

#[pymodule]
#[pyo3(name = "ordheck")]
fn ordheck_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit_ordered_heckman, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ordered_probit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_two_step, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ols, m)?)?;
    m.add_function(wrap_pyfunction!(fit_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(fit_imputation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dgp, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(huber_mellace, m)?)?;
    m.add_function(wrap_pyfunction!(leave_out_means, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
