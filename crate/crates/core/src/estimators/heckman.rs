use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{fit_two_step, parameter_names, Estimator, FitOptions, FitResult};
use crate::error::Result;
use crate::inference::{covariance, normal_p_value, unpack_jacobian, wald, OrdselModel};
use crate::model::{evaluate, unpack_params, Dataset, ModelSpec};
use crate::optim::{minimize, BfgsOptions};

/// Full-information maximum likelihood of the ordered-selection model,
/// started from two-step estimates.
pub fn fit_ordered_heckman(data: &Dataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    data.validate(spec)?;
    let n = data.n();
    let q = data.z_selection().ncols();
    let p = data.x_outcome().ncols();
    let n_cut = spec.n_stages() - 1;
    let k = spec.n_params(q, p);
    let reg_off = |r: usize| q + n_cut + r * (p + 2);

    let seed = fit_two_step(data, spec, opts)?;
    let first = seed.first_stage.packed.as_ref().expect("ordered probit packed");
    let mut start = DVector::zeros(k);
    start.rows_mut(0, q + n_cut).copy_from(first);
    for (r, reg) in seed.regimes.iter().enumerate() {
        let o = reg_off(r);
        start.rows_mut(o, p).copy_from(&reg.beta);
        start[o + p] = reg.sigma.ln();
        start[o + p + 1] = opts.fixed_rho.unwrap_or(reg.rho).atanh();
    }
    let rho_idx: Vec<usize> = (0..spec.n_regimes()).map(|r| reg_off(r) + p + 1).collect();
    let free: Vec<usize> = if opts.fixed_rho.is_some() {
        (0..k).filter(|i| !rho_idx.contains(i)).collect()
    } else {
        (0..k).collect()
    };
    let expand = |t: &DVector<f64>| {
        let mut full = start.clone();
        for (j, &i) in free.iter().enumerate() {
            full[i] = t[j];
        }
        full
    };
    let seed_loglik = evaluate(&start, data, spec, false).value;
    let bfgs = BfgsOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        scale_n: n as f64,
    };
    let t0 = DVector::from_iterator(free.len(), free.iter().map(|&i| start[i]));
    let res = minimize(
        |t| {
            let ev = evaluate(&expand(t), data, spec, false);
            let g = DVector::from_iterator(free.len(), free.iter().map(|&i| -ev.gradient[i]));
            (-ev.value, g)
        },
        t0,
        &bfgs,
    );
    let packed = expand(&res.x);
    let params = unpack_params(&packed, spec, q, p)?;
    let cols = opts.names.or_default(q, p);
    let names = parameter_names(&cols, spec.n_stages(), spec.outcome_stages());
    let mut estimates: Vec<f64> = params.alpha.iter().copied().collect();
    estimates.extend(&params.mu);
    for reg in &params.regimes {
        estimates.extend(reg.beta.iter());
        estimates.push(reg.sigma);
        estimates.push(reg.rho);
    }

    let mut flags = seed.result.flags.clone();
    if !res.converged {
        flags.push(format!("not converged: {}", res.message));
    }
    if params.regimes.iter().any(|r| r.rho.abs() > 0.99) {
        flags.push("boundary: |rho| approaching 1".into());
    }
    let final_eval = evaluate(&packed, data, spec, false);
    if !final_eval.flagged.is_empty() {
        flags.push(format!(
            "{} observations at the likelihood floor",
            final_eval.flagged.len()
        ));
    }

    let mut derived = BTreeMap::new();
    derived.insert("loglik_seed".into(), seed_loglik);
    let model = OrdselModel {
        data,
        spec,
        free: Some(free.clone()),
        base: packed.clone(),
    };
    let theta_free = DVector::from_iterator(free.len(), free.iter().map(|&i| packed[i]));
    let (packed_cov, cov) = match covariance(&model, &theta_free, &opts.covariance) {
        Ok(v) => {
            let mut full = DMatrix::zeros(k, k);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    full[(i, j)] = v[(a, b)];
                }
            }
            let jac = unpack_jacobian(&packed, spec, q, p);
            let rep = crate::linalg::symmetrize(&(&jac * &full * jac.transpose()));
            (Some(full), Some(rep))
        }
        Err(e) => {
            flags.push(format!("covariance unavailable: {e}"));
            (None, None)
        }
    };

    if let Some(vp) = &packed_cov {
        if opts.fixed_rho.is_none() {
            // ρ = 0 tested on the atanh scale
            for (r, &s) in spec.outcome_stages().iter().enumerate() {
                let i = rho_idx[r];
                derived.insert(format!("p_rho0.{s}"), normal_p_value(packed[i], vp[(i, i)].sqrt()));
            }
            if rho_idx.len() > 1 {
                let r_mat = DMatrix::from_fn(rho_idx.len(), k, |a, b| if rho_idx[a] == b { 1.0 } else { 0.0 });
                if let Ok(w) = wald(&packed, vp, &r_mat, &DVector::zeros(rho_idx.len())) {
                    derived.insert("p_rho0.joint".into(), w.p_value);
                }
            }
        }
        let excl = spec.exclusion_columns();
        let r_mat = DMatrix::from_fn(excl.len(), k, |a, b| if excl[a] == b { 1.0 } else { 0.0 });
        if let Ok(w) = wald(&packed, vp, &r_mat, &DVector::zeros(excl.len())) {
            derived.insert("excl.chi2".into(), w.statistic);
            derived.insert("excl.df".into(), w.df as f64);
            derived.insert("excl.p".into(), w.p_value);
        }
    }
    for name in &opts.exp_beta {
        let Some(c) = cols.outcome.iter().position(|nm| nm == name) else {
            flags.push(format!("exp(beta)-1 requested for unknown column {name}"));
            continue;
        };
        for (r, &s) in spec.outcome_stages().iter().enumerate() {
            let i = reg_off(r) + c;
            let b = packed[i];
            derived.insert(format!("expm1.y{s}.{name}"), b.exp_m1());
            if let Some(vp) = &packed_cov {
                derived.insert(format!("expm1_se.y{s}.{name}"), b.exp() * vp[(i, i)].max(0.0).sqrt());
            }
        }
    }

    Ok(FitResult {
        estimator: Estimator::OrderedHeckman,
        names,
        estimates: DVector::from_vec(estimates),
        covariance: cov,
        covariance_label: format!("{} (delta method for sigma, rho)", opts.covariance.label()),
        params: Some(params),
        packed: Some(packed),
        packed_covariance: packed_cov,
        loglik: Some(-res.f),
        converged: res.converged,
        n_iter: res.n_iter,
        gradient_norm: res.grad_max(),
        n_obs: n,
        n_used: n,
        derived,
        flags,
    })
}
