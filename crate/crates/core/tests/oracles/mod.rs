//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls into the likelihood code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ordheck::model::{pack_params, Dataset, ModelSpec, ParamVector, Regime};
use ordheck::optim::{minimize, BfgsOptions};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Standard normal CDF by quadrature from −12.
pub fn cdf_quad(x: f64) -> f64 {
    if x <= -12.0 {
        return 0.0;
    }
    simpson(phi, -12.0, x.min(12.0), 4000)
}

fn clip(v: f64) -> f64 {
    v.clamp(-12.0, 12.0)
}

/// Likelihood of one observation by integrating the bivariate normal
/// density of (ξ, ε/σ) over the stage interval. Selection-only stages
/// integrate the outcome error out numerically as well.
pub fn quadrature_likelihood(
    mu: &[f64],
    index: f64,
    stage: usize,
    outcome: Option<(f64, f64, f64, f64)>,
) -> f64 {
    let lo = if stage == 0 { -12.0 } else { clip(mu[stage - 1] - index) };
    let hi = if stage == mu.len() { 12.0 } else { clip(mu[stage] - index) };
    match outcome {
        Some((y, xb, sigma, rho)) => {
            let e = (y - xb) / sigma;
            let s = (1.0 - rho * rho).sqrt();
            simpson(|xi| phi(xi) * phi((e - rho * xi) / s) / s, lo, hi, 20_000) / sigma
        }
        None => {
            let inner = |xi: f64| simpson(|e| phi(xi) * phi((e - 0.3 * xi) / 0.91f64.sqrt()) / 0.91f64.sqrt(), -14.0, 14.0, 400);
            simpson(inner, lo, hi, 2_000)
        }
    }
}

/// Central differences with one Richardson step.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let d = |i: usize, h: f64| {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    };
    DVector::from_fn(x.len(), |i, _| {
        let a = d(i, h);
        let b = d(i, h / 2.0);
        (4.0 * b - a) / 3.0
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Layout {
    TopOnly,
    InteriorOnly,
    TwoRegimes,
    TwoInterior,
}

pub const LAYOUTS: [Layout; 4] = [Layout::TopOnly, Layout::InteriorOnly, Layout::TwoRegimes, Layout::TwoInterior];

/// A small random model and data drawn from it.
pub struct Problem {
    pub data: Dataset,
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub packed: DVector<f64>,
}

pub fn random_problem(rng: &mut ChaCha8Rng, layout: Layout, n: usize) -> Problem {
    let (j, stages): (usize, Vec<usize>) = match layout {
        Layout::TopOnly => (rng.random_range(2..6), vec![]),
        Layout::InteriorOnly => (4, vec![rng.random_range(1..3)]),
        Layout::TwoRegimes => (4, vec![rng.random_range(1..3), 3]),
        Layout::TwoInterior => (5, vec![1, 3]),
    };
    let outcome_stages = if stages.is_empty() { vec![j - 1] } else { stages };
    let spec = ModelSpec::new(j, outcome_stages.clone(), vec![2]).unwrap();
    let q = 3;
    let alpha = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
    let mut mu = vec![rng.random_range(-1.0..0.0)];
    for _ in 1..j - 1 {
        let last = *mu.last().unwrap();
        mu.push(last + rng.random_range(0.3..1.2));
    }
    let regimes: Vec<Regime> = outcome_stages
        .iter()
        .map(|_| Regime {
            beta: DVector::from_fn(3, |_, _| rng.random_range(-1.5..1.5)),
            sigma: rng.random_range(0.5..2.0),
            rho: rng.random_range(-0.9..0.9),
        })
        .collect();
    let params = ParamVector { alpha: alpha.clone(), mu: mu.clone(), regimes: regimes.clone() };
    let z = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(n, 3, |i, c| if c == 0 { 1.0 } else { z[(i, c - 1)] });
    let mut stage = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for i in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let eta: f64 = rng.sample(StandardNormal);
        let latent = (0..q).map(|c| z[(i, c)] * alpha[c]).sum::<f64>() + xi;
        let s = mu.iter().filter(|&&m| m < latent).count();
        stage.push(s);
        outcome.push(outcome_stages.iter().position(|&o| o == s).map(|r| {
            let g = &regimes[r];
            let xb = (0..3).map(|c| x[(i, c)] * g.beta[c]).sum::<f64>();
            xb + g.sigma * (g.rho * xi + (1.0 - g.rho * g.rho).sqrt() * eta)
        }));
    }
    let data = Dataset::new(stage, outcome, x, z).unwrap();
    let packed = pack_params(&params).unwrap();
    Problem { data, spec, params, packed }
}

/// Binary selection model with an intercept in the selection index,
/// parameterized as (γ₀, γ, β, ln σ, atanh ρ).
pub fn binary_heckman_negll(theta: &DVector<f64>, s: &[bool], y: &[f64], z: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let q = z.ncols();
    let p = x.ncols();
    let sigma = theta[1 + q + p].exp();
    let rho = theta[2 + q + p].tanh();
    let r = (1.0 - rho * rho).sqrt();
    let norm = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    use statrs::distribution::ContinuousCDF;
    let mut ll = 0.0;
    for i in 0..s.len() {
        let zg = theta[0] + (0..q).map(|c| z[(i, c)] * theta[1 + c]).sum::<f64>();
        if s[i] {
            let xb = (0..p).map(|c| x[(i, c)] * theta[1 + q + c]).sum::<f64>();
            let e = (y[i] - xb) / sigma;
            ll += (phi(e) / sigma).ln() + norm.cdf((zg + rho * e) / r).ln();
        } else {
            ll += norm.cdf(-zg).ln();
        }
    }
    -ll
}

pub fn fit_binary_heckman(s: &[bool], y: &[f64], z: &DMatrix<f64>, x: &DMatrix<f64>) -> (DVector<f64>, bool) {
    let q = z.ncols();
    let p = x.ncols();
    let mut start = DVector::zeros(1 + q + p + 2);
    let sel: Vec<usize> = (0..s.len()).filter(|&i| s[i]).collect();
    let xs = x.select_rows(sel.iter());
    let ys = DVector::from_iterator(sel.len(), sel.iter().map(|&i| y[i]));
    let b = (xs.transpose() * &xs).lu().solve(&(xs.transpose() * ys)).unwrap();
    for c in 0..p {
        start[1 + q + c] = b[c];
    }
    let f = |t: &DVector<f64>| binary_heckman_negll(t, s, y, z, x);
    let opts = BfgsOptions { max_iter: 2000, grad_tol: 1e-7, scale_n: s.len() as f64 };
    let res = minimize(|t: &DVector<f64>| (f(t), fd_gradient(f, t, 1e-4)), start, &opts);
    // finite-difference gradients cannot drive the line search much below this
    let ok = res.converged || res.grad_max() < 1e-5;
    (res.x, ok)
}

/// Share of each level among the other members of each row's group, by
/// direct pairwise scan.
pub fn leave_out_brute(stages: &[usize], groups: &[u32], levels: &[usize]) -> Vec<Vec<f64>> {
    (0..stages.len())
        .map(|i| {
            let others: Vec<usize> = (0..stages.len()).filter(|&j| j != i && groups[j] == groups[i]).collect();
            levels
                .iter()
                .map(|&l| {
                    if others.is_empty() {
                        f64::NAN
                    } else {
                        others.iter().filter(|&&j| stages[j] == l).count() as f64 / others.len() as f64
                    }
                })
                .collect()
        })
        .collect()
}
