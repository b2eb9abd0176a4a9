//! Covariance estimation, delta-method back-transforms, Wald tests and
//! confidence intervals.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{relative_asymmetry, spd_inverse, sym_inverse, symmetrize};
use crate::model::{evaluate, Dataset, ModelSpec};
use crate::normal;
use crate::optim::fd_hessian;

/// Step for finite-difference Hessians on the packed scale.
pub const HESSIAN_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMethod {
    ObservedInformation,
    Robust,
    ClusterRobust,
}

#[derive(Debug, Clone, Copy)]
pub struct CovarianceRequest {
    pub method: CovarianceMethod,
    /// Multiply the cluster meat by `G/(G−1)`.
    pub small_sample_correction: bool,
}

impl CovarianceRequest {
    pub fn observed_information() -> Self {
        Self {
            method: CovarianceMethod::ObservedInformation,
            small_sample_correction: false,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.method {
            CovarianceMethod::ObservedInformation => "observed information",
            CovarianceMethod::Robust => "robust (sandwich)",
            CovarianceMethod::ClusterRobust => "cluster-robust",
        }
    }
}

/// An estimator defined by per-observation scores and an information matrix.
pub trait ScoreModel {
    fn n_params(&self) -> usize;
    fn n_obs(&self) -> usize;
    /// Negative Hessian of the objective at `theta`.
    fn information(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// `n × k` matrix of weighted per-observation scores.
    fn scores(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn clusters(&self) -> Option<&[i64]>;
}

/// Covariance of the estimates under the requested method.
pub fn covariance(
    model: &dyn ScoreModel,
    theta: &DVector<f64>,
    request: &CovarianceRequest,
) -> Result<DMatrix<f64>> {
    let a = model.information(theta)?;
    let a_inv = match request.method {
        CovarianceMethod::ObservedInformation => spd_inverse(&a, "information matrix")?,
        _ => sym_inverse(&a, "information matrix")?,
    };
    let v = match request.method {
        CovarianceMethod::ObservedInformation => a_inv,
        CovarianceMethod::Robust => {
            let s = model.scores(theta)?;
            let b = s.tr_mul(&s);
            &a_inv * b * &a_inv
        }
        CovarianceMethod::ClusterRobust => {
            let clusters = model.clusters().ok_or_else(|| {
                Error::InvalidArgument("cluster-robust covariance needs cluster ids".into())
            })?;
            if clusters.len() != model.n_obs() {
                return Err(Error::InvalidArgument(
                    "cluster ids must cover all estimation rows".into(),
                ));
            }
            let s = model.scores(theta)?;
            let sums = cluster_sums(&s, clusters);
            let g = sums.nrows();
            let mut b = sums.tr_mul(&sums);
            if request.small_sample_correction {
                if g < 2 {
                    return Err(Error::InvalidArgument("need at least two clusters".into()));
                }
                b *= g as f64 / (g as f64 - 1.0);
            }
            &a_inv * b * &a_inv
        }
    };
    finish_symmetric(v)
}

fn finish_symmetric(v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if relative_asymmetry(&v) > 1e-8 {
        return Err(Error::Numeric(format!(
            "covariance asymmetry {:.3e} exceeds 1e-8",
            relative_asymmetry(&v)
        )));
    }
    Ok(symmetrize(&v))
}

/// Scores summed within clusters, rows ordered by cluster id.
pub fn cluster_sums(scores: &DMatrix<f64>, clusters: &[i64]) -> DMatrix<f64> {
    let mut groups: BTreeMap<i64, DVector<f64>> = BTreeMap::new();
    let k = scores.ncols();
    for (i, &c) in clusters.iter().enumerate() {
        let e = groups.entry(c).or_insert_with(|| DVector::zeros(k));
        *e += scores.row(i).transpose();
    }
    let mut out = DMatrix::zeros(groups.len(), k);
    for (r, v) in groups.values().enumerate() {
        out.set_row(r, &v.transpose());
    }
    out
}

/// The ordered-selection likelihood as a [`ScoreModel`], optionally holding
/// some packed coordinates fixed.
pub struct OrdselModel<'a> {
    pub data: &'a Dataset,
    pub spec: &'a ModelSpec,
    /// Packed indices that were estimated; all when `None`.
    pub free: Option<Vec<usize>>,
    /// Full packed vector used to fill the fixed coordinates.
    pub base: DVector<f64>,
}

impl<'a> OrdselModel<'a> {
    pub fn new(data: &'a Dataset, spec: &'a ModelSpec, packed: DVector<f64>) -> Self {
        Self {
            data,
            spec,
            free: None,
            base: packed,
        }
    }

    fn free_idx(&self) -> Vec<usize> {
        self.free
            .clone()
            .unwrap_or_else(|| (0..self.base.len()).collect())
    }

    fn expand(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut full = self.base.clone();
        for (t, &i) in self.free_idx().iter().enumerate() {
            full[i] = theta[t];
        }
        full
    }
}

impl ScoreModel for OrdselModel<'_> {
    fn n_params(&self) -> usize {
        self.free_idx().len()
    }

    fn n_obs(&self) -> usize {
        self.data.n()
    }

    fn information(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let idx = self.free_idx();
        let h = fd_hessian(
            |t| {
                let g = evaluate(&self.expand(t), self.data, self.spec, false).gradient;
                DVector::from_iterator(idx.len(), idx.iter().map(|&i| -g[i]))
            },
            theta,
            HESSIAN_STEP,
        );
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Hessian".into()));
        }
        Ok(h)
    }

    fn scores(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let idx = self.free_idx();
        let ev = evaluate(&self.expand(theta), self.data, self.spec, true);
        let s = ev.scores.expect("scores requested");
        Ok(s.select_columns(idx.iter()))
    }

    fn clusters(&self) -> Option<&[i64]> {
        Some(self.data.cluster_id())
    }
}

/// Scalar back-transforms applied to one packed coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// `ρ = tanh(t)`
    Tanh,
    /// `σ = exp(t)`
    Exp,
    /// `exp(β) − 1`
    ExpMinusOne,
}

impl Transform {
    pub fn apply(self, t: f64) -> (f64, f64) {
        match self {
            Transform::Identity => (t, 1.0),
            Transform::Tanh => {
                let r = t.tanh();
                (r, 1.0 - r * r)
            }
            Transform::Exp => (t.exp(), t.exp()),
            Transform::ExpMinusOne => (t.exp_m1(), t.exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

/// First-order delta-method estimates for `(name, packed index, transform)`.
pub fn delta_transform(
    packed: &DVector<f64>,
    packed_cov: &DMatrix<f64>,
    targets: &[(String, usize, Transform)],
) -> Vec<DeltaEstimate> {
    targets
        .iter()
        .map(|(name, i, tr)| {
            let (est, d) = tr.apply(packed[*i]);
            DeltaEstimate {
                name: name.clone(),
                estimate: est,
                se: d.abs() * packed_cov[(*i, *i)].max(0.0).sqrt(),
            }
        })
        .collect()
}

/// Jacobian of the unpack map (packed → natural parameters).
pub fn unpack_jacobian(packed: &DVector<f64>, spec: &ModelSpec, q: usize, p: usize) -> DMatrix<f64> {
    let k = packed.len();
    let mut j = DMatrix::identity(k, k);
    let n_cut = spec.n_stages() - 1;
    // μ_k = u_1 + Σ_{2≤l≤k} exp(u_l)
    for row in 0..n_cut {
        j[(q + row, q)] = 1.0;
        for col in 1..n_cut {
            j[(q + row, q + col)] = if col <= row { packed[q + col].exp() } else { 0.0 };
        }
    }
    for r in 0..spec.n_regimes() {
        let o = q + n_cut + r * (p + 2);
        j[(o + p, o + p)] = packed[o + p].exp();
        let rho = packed[o + p + 1].tanh();
        j[(o + p + 1, o + p + 1)] = 1.0 - rho * rho;
    }
    j
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald test of `R θ = r` with chi-square reference.
pub fn wald(theta: &DVector<f64>, cov: &DMatrix<f64>, r_mat: &DMatrix<f64>, r: &DVector<f64>) -> Result<WaldTest> {
    let df = r_mat.nrows();
    if df == 0 || r_mat.ncols() != theta.len() || r.len() != df {
        return Err(Error::InvalidArgument("restriction shape mismatch".into()));
    }
    let diff = r_mat * theta - r;
    let middle = r_mat * cov * r_mat.transpose();
    let inv = sym_inverse(&middle, "R V R'")?;
    let stat = (diff.transpose() * inv * &diff)[(0, 0)].max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let p_value = (1.0 - chi.cdf(stat)).clamp(0.0, 1.0);
    Ok(WaldTest {
        statistic: stat,
        df,
        p_value,
    })
}

/// Two-sided normal-theory intervals `θ ± z·SE`.
pub fn confidence_interval(estimates: &[f64], ses: &[f64], level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level}")));
    }
    let z = normal::quantile(0.5 * (1.0 + level))?;
    Ok(estimates
        .iter()
        .zip(ses)
        .map(|(e, s)| (e - z * s, e + z * s))
        .collect())
}

/// Two-sided normal p-value for `estimate / se`.
pub fn normal_p_value(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        2.0 * normal::cdf(-(estimate / se).abs())
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}
