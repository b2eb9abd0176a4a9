use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{Estimator, FitResult};
use crate::error::{Error, Result};
use crate::inference::ScoreModel;
use crate::linalg::{dependent_columns, least_squares, spd_inverse};

/// Weighted least squares with the classical covariance `s²(X'WX)⁻¹`.
///
/// Weights are analytic weights: `s²` is computed as if they were rescaled to
/// sum to `n`.
pub fn fit_ols(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    weights: Option<&[f64]>,
    names: Option<&[String]>,
) -> Result<FitResult> {
    let n = y.len();
    let p = x.ncols();
    if x.nrows() != n {
        return Err(Error::Data(format!("y has {n} rows but x has {}", x.nrows())));
    }
    if n <= p {
        return Err(Error::Data(format!("{n} observations for {p} coefficients")));
    }
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Data("weights must be positive and cover every row".into()));
    }
    let names: Vec<String> = match names {
        Some(nm) if nm.len() == p => nm.to_vec(),
        _ => (0..p).map(|j| format!("x{j}")).collect(),
    };
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * sw[i]);
    let dropped = dependent_columns(&xw, 1e-10);
    if !dropped.is_empty() {
        return Err(Error::RankDeficient {
            columns: dropped.into_iter().map(|j| names[j].clone()).collect(),
        });
    }
    let yw = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let xtx = xw.tr_mul(&xw);
    let xtx_inv = spd_inverse(&xtx, "X'WX")?;
    let beta = least_squares(&xw, &yw).unwrap_or_else(|| &xtx_inv * xw.tr_mul(&yw));
    let resid = y - x * &beta;
    let sum_w: f64 = w.iter().sum();
    let ssr: f64 = resid.iter().zip(&w).map(|(e, wi)| wi * e * e).sum();
    let ybar = y.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / sum_w;
    let sst: f64 = y.iter().zip(&w).map(|(v, wi)| wi * (v - ybar).powi(2)).sum();
    let s2 = ssr / sum_w * n as f64 / (n - p) as f64;
    let covariance = &xtx_inv * (s2 * sum_w / n as f64);
    let mut derived = BTreeMap::new();
    derived.insert("r2".into(), if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 });
    derived.insert("sigma2".into(), s2);
    Ok(FitResult {
        estimator: Estimator::Ols,
        names,
        estimates: beta,
        covariance: Some(crate::linalg::symmetrize(&covariance)),
        covariance_label: "classical".into(),
        params: None,
        packed: None,
        packed_covariance: None,
        loglik: None,
        converged: true,
        n_iter: 1,
        gradient_norm: 0.0,
        n_obs: n,
        n_used: n,
        derived,
        flags: Vec::new(),
    })
}

/// Least squares viewed as an M-estimator, for sandwich covariances.
pub struct OlsModel<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub weights: Option<&'a [f64]>,
    pub clusters: Option<&'a [i64]>,
}

impl OlsModel<'_> {
    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }
}

impl ScoreModel for OlsModel<'_> {
    fn n_params(&self) -> usize {
        self.x.ncols()
    }

    fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    fn information(&self, _theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (n, p) = self.x.shape();
        let xw = DMatrix::from_fn(n, p, |i, j| self.x[(i, j)] * self.w(i).sqrt());
        Ok(xw.tr_mul(&xw))
    }

    fn scores(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (n, p) = self.x.shape();
        let resid = self.y - self.x * theta;
        Ok(DMatrix::from_fn(n, p, |i, j| self.w(i) * resid[i] * self.x[(i, j)]))
    }

    fn clusters(&self) -> Option<&[i64]> {
        self.clusters
    }
}
