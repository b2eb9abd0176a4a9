use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dependent_columns, least_squares, solve};

/// Linear quantile regression at level `tau`, solved exactly.
#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub tau: f64,
    pub coefficients: DVector<f64>,
    /// Weighted check loss at `coefficients`.
    pub objective: f64,
    /// Observations interpolated by the fitted hyperplane.
    pub basis: Vec<usize>,
    pub n_iter: usize,
}

/// `Σ w_i ρ_τ(y_i − x_i'b)` with `ρ_τ(u) = u(τ − 1{u<0})`.
pub fn check_loss(y: &DVector<f64>, x: &DMatrix<f64>, b: &DVector<f64>, tau: f64, weights: Option<&[f64]>) -> f64 {
    let r = y - x * b;
    r.iter()
        .enumerate()
        .map(|(i, &u)| {
            let w = weights.map_or(1.0, |w| w[i]);
            w * u * if u < 0.0 { tau - 1.0 } else { tau }
        })
        .sum()
}

/// Minimizes the weighted check loss by basis exchange: a vertex is moved
/// along the edge that frees one interpolated observation, with an exact
/// line search over the piecewise-linear objective. Optimality is certified
/// by the dual multipliers of the basic observations lying in `[0, 1]`.
pub fn fit_quantile(y: &DVector<f64>, x: &DMatrix<f64>, tau: f64, weights: Option<&[f64]>) -> Result<QuantileFit> {
    let (n, p) = x.shape();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {tau} outside (0, 1)")));
    }
    if y.len() != n || n < p || p == 0 {
        return Err(Error::Data(format!("{n} rows, {} outcomes, {p} columns", y.len())));
    }
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Data("weights must be positive and cover every row".into()));
    }
    let dropped = dependent_columns(x, 1e-10);
    if !dropped.is_empty() {
        return Err(Error::RankDeficient {
            columns: dropped.iter().map(|j| format!("x{j}")).collect(),
        });
    }

    // All outcomes equal: the flat hyperplane through them is optimal.
    if y.iter().all(|&v| v == y[0]) {
        if let Some(c) = (0..p).find(|&c| {
            let v = x[(0, c)];
            v != 0.0 && x.column(c).iter().all(|&e| e == v)
        }) {
            let mut b = DVector::zeros(p);
            b[c] = y[0] / x[(0, c)];
            return Ok(QuantileFit {
                tau,
                coefficients: b,
                objective: 0.0,
                basis: Vec::new(),
                n_iter: 0,
            });
        }
    }

    let scale = y.amax().max(1.0);
    let zero_tol = 1e-11 * scale;
    let mut basis = initial_basis(y, x, &w)?;
    // +1: residual treated as positive (dual weight 1), −1: negative (0)
    let mut side = vec![1i8; n];
    let rhs_all: DVector<f64> = (0..n).fold(DVector::zeros(p), |acc, i| acc + x.row(i).transpose() * ((1.0 - tau) * w[i]));
    let max_iter = 50 * n + 1000;
    let mut degenerate_run = 0usize;
    let mut in_basis = vec![false; n];
    for &i in &basis {
        in_basis[i] = true;
    }

    for iter in 0..max_iter {
        let xb = x.select_rows(basis.iter());
        let yb = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
        let b = solve(&xb, &yb).ok_or_else(|| Error::Numeric("singular basis".into()))?;
        let mut r = y - x * &b;
        for &i in &basis {
            r[i] = 0.0;
        }
        for j in 0..n {
            if !in_basis[j] && r[j].abs() > zero_tol {
                side[j] = if r[j] > 0.0 { 1 } else { -1 };
            }
        }
        // dual multipliers of the basic observations
        let mut rhs = rhs_all.clone();
        for j in 0..n {
            if !in_basis[j] && side[j] > 0 {
                rhs -= x.row(j).transpose() * w[j];
            }
        }
        let m = DMatrix::from_fn(p, p, |a, c| x[(basis[c], a)] * w[basis[c]]);
        let a_b = solve(&m, &rhs).ok_or_else(|| Error::Numeric("singular dual system".into()))?;
        let violation = |v: f64| (-v).max(v - 1.0);
        let bland = degenerate_run > 50;
        let leave = (0..p)
            .filter(|&c| violation(a_b[c]) > 1e-10)
            .min_by(|&c1, &c2| {
                if bland {
                    basis[c1].cmp(&basis[c2])
                } else {
                    violation(a_b[c2]).total_cmp(&violation(a_b[c1]))
                }
            });
        let Some(pos) = leave else {
            let objective = check_loss(y, x, &b, tau, Some(&w));
            let mut sorted = basis.clone();
            sorted.sort_unstable();
            return Ok(QuantileFit {
                tau,
                coefficients: b,
                objective,
                basis: sorted,
                n_iter: iter,
            });
        };
        let k = basis[pos];
        let to_negative = a_b[pos] < 0.0;
        let mut e = DVector::zeros(p);
        e[pos] = if to_negative { 1.0 } else { -1.0 };
        let v = solve(&xb, &e).ok_or_else(|| Error::Numeric("singular basis".into()))?;
        let g = x * &v;
        let mut slope = if to_negative { w[k] * a_b[pos] } else { w[k] * (1.0 - a_b[pos]) };
        let mut breaks: Vec<(f64, usize)> = (0..n)
            .filter(|&j| !in_basis[j] && g[j] != 0.0 && (side[j] as f64) * g[j] > 0.0)
            .map(|j| ((r[j] / g[j]).max(0.0), j))
            .collect();
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut entering = None;
        for (idx, &(t, j)) in breaks.iter().enumerate() {
            slope += w[j] * g[j].abs();
            if slope >= 0.0 {
                entering = Some((idx, t, j));
                break;
            }
        }
        let Some((idx, t, j)) = entering else {
            return Err(Error::Numeric("check loss unbounded along an edge".into()));
        };
        for &(_, c) in &breaks[..idx] {
            side[c] = -side[c];
        }
        degenerate_run = if t == 0.0 { degenerate_run + 1 } else { 0 };
        basis[pos] = j;
        in_basis[j] = true;
        in_basis[k] = false;
        side[k] = if to_negative { -1 } else { 1 };
    }
    Err(Error::Numeric(format!("quantile solver exceeded {max_iter} pivots")))
}

/// `p` observations with the smallest least-squares residuals whose rows
/// are linearly independent.
fn initial_basis(y: &DVector<f64>, x: &DMatrix<f64>, w: &[f64]) -> Result<Vec<usize>> {
    let (n, p) = x.shape();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * sw[i]);
    let yw = DVector::from_fn(n, |i, _| y[i] * sw[i]);
    let ls = least_squares(&xw, &yw).unwrap_or_else(|| DVector::zeros(p));
    let r = y - x * ls;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    let mut chosen = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for i in order {
        let row = x.row(i).transpose();
        let norm0 = row.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row;
        for _ in 0..2 {
            for q in &ortho {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 * norm0 {
            ortho.push(v / nv);
            chosen.push(i);
            if chosen.len() == p {
                return Ok(chosen);
            }
        }
    }
    Err(Error::RankDeficient {
        columns: vec!["(rows do not span the column space)".into()],
    })
}
