use nalgebra::DVector;

use super::ModelSpec;
use crate::error::{Error, Result};

/// Outcome-equation parameters of one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub beta: DVector<f64>,
    pub sigma: f64,
    pub rho: f64,
}

const RHO_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Natural-scale model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub alpha: DVector<f64>,
    /// Interior cutoffs `μ_1 < … < μ_{J−1}`.
    pub mu: Vec<f64>,
    pub regimes: Vec<Regime>,
}

impl ParamVector {
    pub fn validate(&self) -> Result<()> {
        if self.mu.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(format!(
                "cutoffs must be strictly increasing: {:?}",
                self.mu
            )));
        }
        for (r, reg) in self.regimes.iter().enumerate() {
            if !(reg.sigma > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "regime {r}: sigma must be positive"
                )));
            }
            if !(reg.rho.abs() < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "regime {r}: |rho| must be below 1"
                )));
            }
        }
        let finite = self.alpha.iter().chain(&self.mu).all(|v| v.is_finite())
            && self
                .regimes
                .iter()
                .all(|r| r.beta.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    /// Number of outcome covariates (0 without regimes).
    pub fn p(&self) -> usize {
        self.regimes.first().map_or(0, |r| r.beta.len())
    }
}

/// Maps parameters to the unconstrained optimizer scale:
/// `[α | μ_1, ln Δμ_2, … | β_r, ln σ_r, atanh ρ_r …]`.
pub fn pack_params(p: &ParamVector) -> Result<DVector<f64>> {
    p.validate()?;
    let mut out = Vec::with_capacity(p.q() + p.mu.len() + p.regimes.len() * (p.p() + 2));
    out.extend(p.alpha.iter());
    if let Some(&first) = p.mu.first() {
        out.push(first);
        out.extend(p.mu.windows(2).map(|w| (w[1] - w[0]).ln()));
    }
    for r in &p.regimes {
        out.extend(r.beta.iter());
        out.push(r.sigma.ln());
        out.push(r.rho.atanh());
    }
    Ok(DVector::from_vec(out))
}

/// Inverse of [`pack_params`]; any finite vector maps to valid parameters.
pub fn unpack_params(v: &DVector<f64>, spec: &ModelSpec, q: usize, p: usize) -> Result<ParamVector> {
    let expected = spec.n_params(q, p);
    if v.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "packed vector has length {}, expected {expected}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("packed vector has non-finite entries".into()));
    }
    let alpha = DVector::from_iterator(q, v.iter().take(q).copied());
    let k = spec.n_stages() - 1;
    let mut mu = Vec::with_capacity(k);
    for j in 0..k {
        let u = v[q + j];
        mu.push(if j == 0 { u } else { mu[j - 1] + u.exp() });
    }
    let mut at = q + k;
    let mut regimes = Vec::with_capacity(spec.n_regimes());
    for _ in 0..spec.n_regimes() {
        let beta = DVector::from_iterator(p, v.iter().skip(at).take(p).copied());
        let sigma = v[at + p].exp();
        // tanh saturates to exactly ±1 for |t| > ~19
        let rho = v[at + p + 1].tanh().clamp(-RHO_MAX, RHO_MAX);
        regimes.push(Regime { beta, sigma, rho });
        at += p + 2;
    }
    Ok(ParamVector { alpha, mu, regimes })
}
