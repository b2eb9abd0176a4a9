use nalgebra::{DMatrix, DVector};

use super::{pack_params, Dataset, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::normal::{log_diff_cdf, log_diff_cdf_grad, log_pdf, LOG_FLOOR};

/// Weighted log-likelihood with its gradient in packed coordinates.
#[derive(Debug, Clone)]
pub struct LoglikReport {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Unweighted `ln L_i`; `value` is their weighted sum.
    pub per_observation: Option<Vec<f64>>,
    /// Observations whose likelihood fell below the `1e-300` floor.
    pub flagged: Vec<usize>,
}

/// Everything one pass over the data can produce.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub per_observation: Vec<f64>,
    /// Weighted per-observation gradients (`n × k`), when requested.
    pub scores: Option<DMatrix<f64>>,
    pub flagged: Vec<usize>,
}

/// Log-likelihood of the ordered-selection model at natural-scale `params`.
pub fn ordsel_loglik(
    params: &ParamVector,
    data: &Dataset,
    spec: &ModelSpec,
    per_observation: bool,
) -> Result<LoglikReport> {
    data.validate(spec)?;
    check_shapes(params, data, spec)?;
    let packed = pack_params(params)?;
    let ev = evaluate(&packed, data, spec, false);
    Ok(LoglikReport {
        value: ev.value,
        gradient: ev.gradient,
        per_observation: per_observation.then_some(ev.per_observation),
        flagged: ev.flagged,
    })
}

fn check_shapes(params: &ParamVector, data: &Dataset, spec: &ModelSpec) -> Result<()> {
    if params.q() != data.z_selection().ncols() {
        return Err(Error::InvalidArgument(format!(
            "alpha has {} entries but there are {} selection columns",
            params.q(),
            data.z_selection().ncols()
        )));
    }
    if params.mu.len() + 1 != spec.n_stages() {
        return Err(Error::InvalidArgument(format!(
            "{} cutoffs given for {} stages",
            params.mu.len(),
            spec.n_stages()
        )));
    }
    if params.regimes.len() != spec.n_regimes() {
        return Err(Error::InvalidArgument("regime count mismatch".into()));
    }
    if params
        .regimes
        .iter()
        .any(|r| r.beta.len() != data.x_outcome().ncols())
    {
        return Err(Error::InvalidArgument("beta length mismatch".into()));
    }
    Ok(())
}

/// Probability of each stage for one selection covariate row.
pub fn stage_probabilities(params: &ParamVector, z_row: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
    params.validate()?;
    if z_row.len() != params.q() || params.mu.len() + 1 != spec.n_stages() {
        return Err(Error::InvalidArgument("shape mismatch".into()));
    }
    let m: f64 = z_row.iter().zip(params.alpha.iter()).map(|(z, a)| z * a).sum();
    let cut = full_cutoffs(&params.mu);
    Ok((0..spec.n_stages())
        .map(|j| log_diff_cdf(cut[j] - m, cut[j + 1] - m).exp())
        .collect())
}

fn full_cutoffs(mu: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(mu.len() + 2);
    c.push(f64::NEG_INFINITY);
    c.extend_from_slice(mu);
    c.push(f64::INFINITY);
    c
}

/// Partial derivatives of one `ln L_i` on the natural scale, except σ and ρ
/// which are already on the `ln σ`, `atanh ρ` scale.
#[derive(Default, Clone, Copy)]
struct ObsTerms {
    ll: f64,
    d_index: f64,
    /// (interior cutoff index 0-based, derivative); `usize::MAX` when absent
    d_cut: [(usize, f64); 2],
    d_xb: f64,
    d_log_sigma: f64,
    d_atanh_rho: f64,
}

fn cut_slot(j: usize, n_stages: usize) -> usize {
    // full cutoff index j ↦ interior index j-1; ±∞ have no parameter
    if j == 0 || j == n_stages {
        usize::MAX
    } else {
        j - 1
    }
}

#[inline]
fn selection_terms(lo: f64, hi: f64, slots: (usize, usize)) -> ObsTerms {
    let ld = log_diff_cdf(lo, hi);
    let (ga, gb) = log_diff_cdf_grad(lo, hi, ld);
    ObsTerms {
        ll: ld,
        d_index: -(ga + gb),
        d_cut: [(slots.0, ga), (slots.1, gb)],
        ..Default::default()
    }
}

#[inline]
fn outcome_terms(lo: f64, hi: f64, slots: (usize, usize), resid: f64, sigma: f64, rho: f64) -> ObsTerms {
    let e = resid / sigma;
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let a = (lo - rho * e) / s;
    let b = (hi - rho * e) / s;
    let ld = log_diff_cdf(a, b);
    let (ga, gb) = log_diff_cdf_grad(a, b, ld);
    let dll_de = -e - rho * (ga + gb) / s;
    let mut d_atanh = 0.0;
    if a.is_finite() {
        d_atanh += ga * (-e * s + a * rho);
    }
    if b.is_finite() {
        d_atanh += gb * (-e * s + b * rho);
    }
    ObsTerms {
        ll: -sigma.ln() + log_pdf(e) + ld,
        d_index: -(ga + gb) / s,
        d_cut: [(slots.0, ga / s), (slots.1, gb / s)],
        d_xb: -dll_de / sigma,
        d_log_sigma: -1.0 - e * dll_de,
        d_atanh_rho: d_atanh,
    }
}

/// Evaluates the model at a packed parameter vector. `with_scores` also
/// builds the weighted per-observation gradient matrix.
pub fn evaluate(packed: &DVector<f64>, data: &Dataset, spec: &ModelSpec, with_scores: bool) -> Evaluation {
    let n = data.n();
    let q = data.z_selection().ncols();
    let p = data.x_outcome().ncols();
    let n_stages = spec.n_stages();
    let n_cut = n_stages - 1;
    let n_reg = spec.n_regimes();
    let k = spec.n_params(q, p);
    debug_assert_eq!(packed.len(), k);

    let alpha = packed.rows(0, q);
    let u = packed.rows(q, n_cut);
    let mut mu = Vec::with_capacity(n_cut);
    for j in 0..n_cut {
        mu.push(if j == 0 { u[0] } else { mu[j - 1] + u[j].exp() });
    }
    let cut = full_cutoffs(&mu);
    let index = data.z_selection() * alpha;
    let reg_off = |r: usize| q + n_cut + r * (p + 2);
    let mut xb = Vec::with_capacity(n_reg);
    let mut sig = Vec::with_capacity(n_reg);
    let mut rho = Vec::with_capacity(n_reg);
    for r in 0..n_reg {
        let o = reg_off(r);
        xb.push(data.x_outcome() * packed.rows(o, p));
        sig.push(packed[o + p].exp());
        rho.push(packed[o + p + 1].tanh().clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON));
    }
    let regime_of: Vec<Option<usize>> = (0..n_stages).map(|s| spec.regime_of(s)).collect();

    let w = data.weight();
    let mut per_obs = vec![0.0; n];
    let mut flagged = Vec::new();
    let mut d_index_w = DVector::zeros(n);
    let mut d_cut = vec![0.0; n_cut];
    let mut d_xb_w: Vec<DVector<f64>> = (0..n_reg).map(|_| DVector::zeros(n)).collect();
    let mut d_reg = vec![(0.0, 0.0); n_reg];
    let mut scores = with_scores.then(|| DMatrix::zeros(n, k));

    for i in 0..n {
        let j = data.stage()[i];
        let lo = cut[j] - index[i];
        let hi = cut[j + 1] - index[i];
        let slots = (cut_slot(j, n_stages), cut_slot(j + 1, n_stages));
        let reg = regime_of[j];
        let mut t = match (reg, data.outcome()[i]) {
            (Some(r), Some(y)) => outcome_terms(lo, hi, slots, y - xb[r][i], sig[r], rho[r]),
            _ => selection_terms(lo, hi, slots),
        };
        if !(t.ll >= LOG_FLOOR) {
            flagged.push(i);
            t = ObsTerms {
                ll: LOG_FLOOR,
                d_cut: [(usize::MAX, 0.0); 2],
                ..Default::default()
            };
        }
        per_obs[i] = t.ll;
        let wi = w[i];
        d_index_w[i] = wi * t.d_index;
        for (slot, v) in t.d_cut {
            if slot != usize::MAX {
                d_cut[slot] += wi * v;
            }
        }
        if let Some(r) = reg {
            d_xb_w[r][i] = wi * t.d_xb;
            d_reg[r].0 += wi * t.d_log_sigma;
            d_reg[r].1 += wi * t.d_atanh_rho;
        }
        if let Some(sc) = scores.as_mut() {
            let mut row = sc.row_mut(i);
            for c in 0..q {
                row[c] = wi * t.d_index * data.z_selection()[(i, c)];
            }
            let mut local = vec![0.0; n_cut];
            for (slot, v) in t.d_cut {
                if slot != usize::MAX {
                    local[slot] += wi * v;
                }
            }
            let packed_cut = cut_chain(&local, &u.as_slice().to_vec());
            for c in 0..n_cut {
                row[q + c] = packed_cut[c];
            }
            if let Some(r) = reg {
                let o = reg_off(r);
                for c in 0..p {
                    row[o + c] = wi * t.d_xb * data.x_outcome()[(i, c)];
                }
                row[o + p] = wi * t.d_log_sigma;
                row[o + p + 1] = wi * t.d_atanh_rho;
            }
        }
    }

    let value = compensated_sum(per_obs.iter().zip(w).map(|(l, wi)| l * wi));
    let mut grad = DVector::zeros(k);
    grad.rows_mut(0, q)
        .copy_from(&(data.z_selection().tr_mul(&d_index_w)));
    let packed_cut = cut_chain(&d_cut, &u.as_slice().to_vec());
    for c in 0..n_cut {
        grad[q + c] = packed_cut[c];
    }
    for r in 0..n_reg {
        let o = reg_off(r);
        grad.rows_mut(o, p).copy_from(&data.x_outcome().tr_mul(&d_xb_w[r]));
        grad[o + p] = d_reg[r].0;
        grad[o + p + 1] = d_reg[r].1;
    }
    Evaluation {
        value,
        gradient: grad,
        per_observation: per_obs,
        scores,
        flagged,
    }
}

/// Chain rule from natural cutoffs to `(μ_1, ln Δμ_2, …)`.
fn cut_chain(d_mu: &[f64], u: &[f64]) -> Vec<f64> {
    let k = d_mu.len();
    let mut out = vec![0.0; k];
    let mut tail = 0.0;
    for j in (0..k).rev() {
        tail += d_mu[j];
        out[j] = if j == 0 { tail } else { u[j].exp() * tail };
    }
    out
}
