use nalgebra::DVector;

use super::{fit_quantile, QuantileFit};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec};

#[derive(Debug, Clone, Default)]
pub struct ImputationOptions {
    /// Replaces the default imputed value `min(observed y)`.
    pub imputed_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ImputationFit {
    pub fit: QuantileFit,
    pub imputed_value: f64,
    pub n_imputed: usize,
    /// Imputed rows lying on or above the fitted quantile hyperplane.
    pub n_crossing: usize,
}

/// Assigns every non-outcome observation a low outcome value, then fits a
/// quantile regression on the full sample.
pub fn fit_imputation(data: &Dataset, spec: &ModelSpec, tau: f64, opts: &ImputationOptions) -> Result<ImputationFit> {
    data.validate(spec)?;
    let observed: Vec<f64> = data.outcome().iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::Data("no observed outcomes to impute from".into()));
    }
    let low = opts
        .imputed_value
        .unwrap_or_else(|| observed.iter().cloned().fold(f64::INFINITY, f64::min));
    let imputed: Vec<usize> = (0..data.n()).filter(|&i| data.outcome()[i].is_none()).collect();
    let y = DVector::from_iterator(data.n(), data.outcome().iter().map(|v| v.unwrap_or(low)));
    let fit = fit_quantile(&y, data.x_outcome(), tau, Some(data.weight()))?;
    let fitted = data.x_outcome() * &fit.coefficients;
    let n_crossing = imputed.iter().filter(|&&i| low >= fitted[i]).count();
    Ok(ImputationFit {
        fit,
        imputed_value: low,
        n_imputed: imputed.len(),
        n_crossing,
    })
}
