use std::collections::BTreeMap;

use nalgebra::DVector;

use super::{parameter_names, Estimator, FitOptions, FitResult};
use crate::error::{Error, Result};
use crate::inference::{covariance, unpack_jacobian, OrdselModel};
use crate::model::{evaluate, unpack_params, Dataset, ModelSpec};
use crate::normal;
use crate::optim::{minimize, BfgsOptions};

/// Maximum-likelihood ordered probit on the stage codes alone; outcomes are
/// ignored. Only `spec.n_stages()` is used.
pub fn fit_ordered_probit(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let layout = ModelSpec::selection_only(spec.n_stages())?;
    data.validate(&layout)?;
    let n = data.n();
    let q = data.z_selection().ncols();
    let p = data.x_outcome().ncols();
    let j = spec.n_stages();

    let mut share = vec![0.0; j];
    for (&s, &w) in data.stage().iter().zip(data.weight()) {
        share[s] += w;
    }
    if let Some(missing) = share.iter().position(|&c| c == 0.0) {
        return Err(Error::Data(format!("stage {missing} never observed")));
    }
    let total: f64 = share.iter().sum();
    let mut start = DVector::zeros(q + j - 1);
    let mut cum = 0.0;
    let mut prev = 0.0;
    for k in 0..j - 1 {
        cum += share[k] / total;
        let mu = normal::quantile(cum.clamp(1e-12, 1.0 - 1e-12))?;
        start[q + k] = if k == 0 { mu } else { (mu - prev).max(1e-6).ln() };
        prev = mu;
    }

    let bfgs = BfgsOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        scale_n: n as f64,
    };
    let res = minimize(
        |v| {
            let ev = evaluate(v, data, &layout, false);
            (-ev.value, -ev.gradient)
        },
        start,
        &bfgs,
    );
    let params = unpack_params(&res.x, &layout, q, p)?;
    let names_cols = opts.names.or_default(q, p);
    let names = parameter_names(&names_cols, j, &[]);
    let mut estimates: Vec<f64> = params.alpha.iter().copied().collect();
    estimates.extend(&params.mu);

    let mut flags = Vec::new();
    if !res.converged {
        let diverging: Vec<&str> = params
            .alpha
            .iter()
            .zip(&names_cols.selection)
            .filter(|(a, _)| a.abs() > 10.0)
            .map(|(_, nm)| nm.as_str())
            .collect();
        flags.push(if diverging.is_empty() {
            format!("not converged: {}", res.message)
        } else {
            format!(
                "not converged ({}); diverging coefficients suggest separation: {}",
                res.message,
                diverging.join(", ")
            )
        });
    }

    let model = OrdselModel::new(data, &layout, res.x.clone());
    let (packed_cov, cov) = match covariance(&model, &res.x, &opts.covariance) {
        Ok(v) => {
            let jac = unpack_jacobian(&res.x, &layout, q, p);
            let rep = &jac * &v * jac.transpose();
            (Some(v), Some(crate::linalg::symmetrize(&rep)))
        }
        Err(e) => {
            flags.push(format!("covariance unavailable: {e}"));
            (None, None)
        }
    };
    Ok(FitResult {
        estimator: Estimator::OrderedProbit,
        names,
        estimates: DVector::from_vec(estimates),
        covariance: cov,
        covariance_label: opts.covariance.label().into(),
        params: Some(params),
        packed: Some(res.x.clone()),
        packed_covariance: packed_cov,
        loglik: Some(-res.f),
        converged: res.converged,
        n_iter: res.n_iter,
        gradient_norm: res.grad_max(),
        n_obs: n,
        n_used: n,
        derived: BTreeMap::new(),
        flags,
    })
}
