use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{fit_ols, fit_ordered_probit, Estimator, FitOptions, FitResult};
use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec};
use crate::normal::{log_diff_cdf, log_pdf};

/// Step-two results for one outcome regime.
#[derive(Debug, Clone)]
pub struct TwoStepRegime {
    pub stage: usize,
    pub beta: DVector<f64>,
    /// Coefficient on the generalized inverse-Mills term; estimates `ρσ`.
    pub theta: f64,
    pub theta_se: f64,
    /// Consistent outcome scale implied by the residuals and `theta`.
    pub sigma: f64,
    /// `theta / sigma`, clipped to `[−0.95, 0.95]`.
    pub rho: f64,
    pub n_used: usize,
    pub n_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct TwoStepFit {
    pub result: FitResult,
    pub first_stage: FitResult,
    pub regimes: Vec<TwoStepRegime>,
}

/// Generalized inverse-Mills term `E[ξ | a < ξ < b]` and the truncated
/// second moment adjustment `(aφ(a) − bφ(b))/D`. `None` when `D < 1e-12`.
pub(crate) fn mills_terms(a: f64, b: f64) -> Option<(f64, f64)> {
    let ld = log_diff_cdf(a, b);
    if !(ld >= 1e-12f64.ln()) {
        return None;
    }
    let ra = if a.is_finite() { (log_pdf(a) - ld).exp() } else { 0.0 };
    let rb = if b.is_finite() { (log_pdf(b) - ld).exp() } else { 0.0 };
    let lambda = ra - rb;
    let second = (if a.is_finite() { a * ra } else { 0.0 }) - (if b.is_finite() { b * rb } else { 0.0 });
    Some((lambda, second))
}

/// Ordered-probit first stage, then per-regime least squares of the outcome
/// on its covariates plus the generalized inverse-Mills term.
pub fn fit_two_step(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<TwoStepFit> {
    data.validate(spec)?;
    let first = fit_ordered_probit(data, spec, opts)?;
    let params = first.params.as_ref().expect("ordered probit sets params");
    let q = data.z_selection().ncols();
    let p = data.x_outcome().ncols();
    let index = data.z_selection() * &params.alpha;
    let mut cut = vec![f64::NEG_INFINITY];
    cut.extend(&params.mu);
    cut.push(f64::INFINITY);
    let cols = opts.names.or_default(q, p);

    let mut regimes = Vec::new();
    let mut names = Vec::new();
    let mut estimates = Vec::new();
    let mut blocks = Vec::new();
    let mut flags = first.flags.clone();
    let mut derived = BTreeMap::new();
    let mut n_used_total = 0;
    for &stage in spec.outcome_stages() {
        let mut rows = Vec::new();
        let mut lambdas = Vec::new();
        let mut seconds = Vec::new();
        let mut dropped = 0;
        for i in 0..data.n() {
            if data.stage()[i] != stage {
                continue;
            }
            match mills_terms(cut[stage] - index[i], cut[stage + 1] - index[i]) {
                Some((l, s)) => {
                    rows.push(i);
                    lambdas.push(l);
                    seconds.push(s);
                }
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            flags.push(format!(
                "stage {stage}: {dropped} observations dropped (selection probability below 1e-12)"
            ));
        }
        let m = rows.len();
        if m <= p + 1 {
            return Err(Error::Data(format!(
                "stage {stage}: {m} usable outcome observations for {} coefficients",
                p + 1
            )));
        }
        let x = DMatrix::from_fn(m, p + 1, |r, c| {
            if c < p {
                data.x_outcome()[(rows[r], c)]
            } else {
                lambdas[r]
            }
        });
        let y = DVector::from_iterator(m, rows.iter().map(|&i| data.outcome()[i].expect("validated")));
        let w: Vec<f64> = rows.iter().map(|&i| data.weight()[i]).collect();
        let mut reg_names: Vec<String> = cols.outcome.iter().map(|c| format!("y{stage}.{c}")).collect();
        reg_names.push(format!("theta.{stage}"));
        let fit = fit_ols(&y, &x, Some(&w), Some(&reg_names))?;
        let beta = fit.estimates.rows(0, p).into_owned();
        let theta = fit.estimates[p];
        let theta_se = fit.se(p).unwrap_or(f64::NAN);
        let resid = &y - &x * &fit.estimates;
        let sw: f64 = w.iter().sum();
        let mean_e2 = resid.iter().zip(&w).map(|(e, wi)| wi * e * e).sum::<f64>() / sw;
        // Var(ξ | a<ξ<b) − 1 = second − λ²
        let adj = lambdas
            .iter()
            .zip(&seconds)
            .zip(&w)
            .map(|((l, s), wi)| wi * (s - l * l))
            .sum::<f64>()
            / sw;
        let sigma2 = (mean_e2 - theta * theta * adj).max(mean_e2);
        let sigma = sigma2.sqrt();
        let rho = (theta / sigma).clamp(-0.95, 0.95);
        derived.insert(format!("sigma.{stage}"), sigma);
        derived.insert(format!("rho_implied.{stage}"), rho);
        names.extend(reg_names);
        estimates.extend(fit.estimates.iter());
        blocks.push(fit.covariance.clone().expect("ols covariance"));
        n_used_total += m;
        regimes.push(TwoStepRegime {
            stage,
            beta,
            theta,
            theta_se,
            sigma,
            rho,
            n_used: m,
            n_dropped: dropped,
        });
    }
    let k = estimates.len();
    let mut cov = DMatrix::zeros(k, k);
    let mut at = 0;
    for b in &blocks {
        cov.view_mut((at, at), b.shape()).copy_from(b);
        at += b.nrows();
    }
    let result = FitResult {
        estimator: Estimator::TwoStep,
        names,
        estimates: DVector::from_vec(estimates),
        covariance: Some(cov),
        covariance_label: "two-step, uncorrected (naive OLS)".into(),
        params: None,
        packed: None,
        packed_covariance: None,
        loglik: None,
        converged: first.converged,
        n_iter: first.n_iter,
        gradient_norm: first.gradient_norm,
        n_obs: data.n(),
        n_used: n_used_total,
        derived,
        flags,
    };
    Ok(TwoStepFit {
        result,
        first_stage: first,
        regimes,
    })
}
