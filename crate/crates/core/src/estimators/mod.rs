//! Fitting routines: OLS, ordered probit, ordered Heckman (FIML), the
//! two-step control function, quantile regression and the imputation
//! estimator.

mod heckman;
mod imputation;
mod ols;
mod oprobit;
mod quantile;
mod twostep;

pub use heckman::fit_ordered_heckman;
pub use imputation::{fit_imputation, ImputationFit, ImputationOptions};
pub use ols::{fit_ols, OlsModel};
pub use oprobit::fit_ordered_probit;
pub use quantile::{check_loss, fit_quantile, QuantileFit};
pub use twostep::{fit_two_step, TwoStepFit, TwoStepRegime};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::inference::CovarianceRequest;
use crate::model::ParamVector;

/// Which routine produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Ols,
    OrderedProbit,
    OrderedHeckman,
    TwoStep,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Ols => "OLS",
            Estimator::OrderedProbit => "Ordered Probit",
            Estimator::OrderedHeckman => "Ordered Heckman (FIML)",
            Estimator::TwoStep => "Two-step (control function)",
        }
    }
}

/// Estimates on the reported (natural) scale with their covariance.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimator: Estimator,
    pub names: Vec<String>,
    pub estimates: DVector<f64>,
    /// Aligned to `estimates`; `None` when the information matrix is singular.
    pub covariance: Option<DMatrix<f64>>,
    pub covariance_label: String,
    /// Natural-scale model parameters for likelihood-based fits.
    pub params: Option<ParamVector>,
    /// Optimizer-scale estimates and covariance (likelihood-based fits).
    pub packed: Option<DVector<f64>>,
    pub packed_covariance: Option<DMatrix<f64>>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub gradient_norm: f64,
    pub n_obs: usize,
    pub n_used: usize,
    pub derived: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.estimates[i])
    }

    pub fn se(&self, i: usize) -> Option<f64> {
        self.covariance.as_ref().map(|v| v[(i, i)].max(0.0).sqrt())
    }

    pub fn ses(&self) -> Option<Vec<f64>> {
        (0..self.estimates.len()).map(|i| self.se(i)).collect()
    }
}

/// Column labels used when naming reported parameters.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColumnNames {
    pub selection: Vec<String>,
    pub outcome: Vec<String>,
}

impl ColumnNames {
    pub fn or_default(&self, q: usize, p: usize) -> ColumnNames {
        let sel = if self.selection.len() == q {
            self.selection.clone()
        } else {
            (0..q).map(|j| format!("z{j}")).collect()
        };
        let out = if self.outcome.len() == p {
            self.outcome.clone()
        } else {
            (0..p).map(|j| format!("x{j}")).collect()
        };
        ColumnNames {
            selection: sel,
            outcome: out,
        }
    }
}

/// Reported names: `sel.<z>`, `cut.<k>`, then per outcome stage `s`:
/// `y<s>.<x>`, `sigma.<s>`, `rho.<s>`.
pub fn parameter_names(names: &ColumnNames, n_stages: usize, outcome_stages: &[usize]) -> Vec<String> {
    let mut out: Vec<String> = names.selection.iter().map(|c| format!("sel.{c}")).collect();
    out.extend((1..n_stages).map(|k| format!("cut.{k}")));
    for s in outcome_stages {
        out.extend(names.outcome.iter().map(|c| format!("y{s}.{c}")));
        out.push(format!("sigma.{s}"));
        out.push(format!("rho.{s}"));
    }
    out
}

/// Options shared by the likelihood-based fits.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Gradient tolerance, scaled by `max(1, |loglik| / n)`.
    pub grad_tol: f64,
    pub covariance: CovarianceRequest,
    pub names: ColumnNames,
    /// Hold every regime's ρ at this value instead of estimating it.
    pub fixed_rho: Option<f64>,
    /// Outcome columns for which `exp(β) − 1` is derived.
    pub exp_beta: Vec<String>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            covariance: CovarianceRequest::observed_information(),
            names: ColumnNames::default(),
            fixed_rho: None,
            exp_beta: Vec::new(),
        }
    }
}
