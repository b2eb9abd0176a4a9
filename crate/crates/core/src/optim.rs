//! Quasi-Newton (BFGS) minimization with a strong-Wolfe line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when `max |g| < grad_tol * max(1, |f| / scale_n)`, or when
    /// the line search fails along a quasi-Newton direction whose predicted
    /// decrease is below the floating-point resolution of `f`.
    pub grad_tol: f64,
    pub scale_n: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            scale_n: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub n_iter: usize,
    pub n_eval: usize,
    pub converged: bool,
    pub message: &'static str,
}

impl BfgsResult {
    pub fn grad_max(&self) -> f64 {
        self.grad.amax()
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Objective<F> {
    f: F,
    n_eval: usize,
}

impl<F: FnMut(&DVector<f64>) -> (f64, DVector<f64>)> Objective<F> {
    fn eval(&mut self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.n_eval += 1;
        let (v, g) = (self.f)(x);
        if v.is_finite() && g.iter().all(|c| c.is_finite()) {
            (v, g)
        } else {
            (f64::INFINITY, g)
        }
    }
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(f: F, x0: DVector<f64>, opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut obj = Objective { f, n_eval: 0 };
    let k = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = obj.eval(&x);
    let tol = |fv: f64| opts.grad_tol * (fv.abs() / opts.scale_n).max(1.0);
    if !fx.is_finite() {
        return BfgsResult {
            x,
            f: fx,
            grad: g,
            n_iter: 0,
            n_eval: obj.n_eval,
            converged: false,
            message: "non-finite objective at starting point",
        };
    }
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut fresh = true;
    let mut stalls = 0;
    let mut flat = false;
    let mut message = "maximum iterations reached";
    let mut iter = 0;
    while iter < opts.max_iter {
        if g.amax() < tol(fx) {
            message = "gradient tolerance reached";
            break;
        }
        iter += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(k, k);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let alpha0 = if fresh { (1.0 / d.amax()).min(1.0) } else { 1.0 };
        let found = line_search(&mut obj, &x, fx, slope, &d, alpha0);
        let Some((alpha, f_new, g_new)) = found else {
            // predicted decrease gᵀHg below what f can resolve
            if !fresh && -slope <= 1e3 * f64::EPSILON * fx.abs().max(1.0) {
                flat = true;
                message = "predicted decrease below objective resolution";
                break;
            }
            if fresh {
                message = "line search failed";
                break;
            }
            h = DMatrix::identity(k, k);
            fresh = true;
            continue;
        };
        let s = &d * alpha;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(s hyᵀ + hy sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        let improvement = fx - f_new;
        x += &s;
        fx = f_new;
        g = g_new;
        if improvement <= 1e-15 * fx.abs().max(1.0) && s.amax() <= 1e-12 * x.amax().max(1.0) {
            stalls += 1;
            if stalls >= 3 {
                message = "step size stalled";
                break;
            }
        } else {
            stalls = 0;
        }
    }
    let converged = flat || g.amax() < tol(fx);
    BfgsResult {
        x,
        f: fx,
        grad: g,
        n_iter: iter,
        n_eval: obj.n_eval,
        converged,
        message,
    }
}

fn line_search<F>(
    obj: &mut Objective<F>,
    x: &DVector<f64>,
    f0: f64,
    slope0: f64,
    d: &DVector<f64>,
    alpha0: f64,
) -> Option<(f64, f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let eval = |a: f64, obj: &mut Objective<F>| {
        let (fv, gv) = obj.eval(&(x + d * a));
        let dv = gv.dot(d);
        (fv, gv, dv)
    };
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut a = alpha0;
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for i in 0..40 {
        let (fa, ga, da) = eval(a, obj);
        let armijo = fa <= f0 + C1 * a * slope0;
        if armijo && best.as_ref().is_none_or(|b| fa < b.1) {
            best = Some((a, fa, ga.clone()));
        }
        if !armijo || (i > 0 && fa >= f_prev) {
            return zoom(obj, x, d, f0, slope0, (a_prev, f_prev, d_prev), (a, fa, da)).or(best);
        }
        if da.abs() <= -C2 * slope0 {
            return Some((a, fa, ga));
        }
        if da >= 0.0 {
            return zoom(obj, x, d, f0, slope0, (a, fa, da), (a_prev, f_prev, d_prev)).or(best);
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a *= 2.0;
    }
    best
}

fn zoom<F>(
    obj: &mut Objective<F>,
    x: &DVector<f64>,
    d: &DVector<f64>,
    f0: f64,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Option<(f64, f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for _ in 0..60 {
        let (a_lo, f_lo, d_lo) = lo;
        let (a_hi, f_hi, _) = hi;
        let width = a_hi - a_lo;
        if width.abs() < 1e-16 * a_lo.abs().max(1e-16) {
            break;
        }
        // quadratic through (a_lo, f_lo, d_lo) and (a_hi, f_hi), safeguarded
        let mut a = a_lo;
        let denom = 2.0 * (f_hi - f_lo - d_lo * width);
        if denom.is_finite() && denom > 0.0 {
            a = a_lo - d_lo * width * width / denom;
        }
        let lo_b = a_lo + 0.1 * width;
        let hi_b = a_hi - 0.1 * width;
        let (mn, mx) = if lo_b < hi_b { (lo_b, hi_b) } else { (hi_b, lo_b) };
        if !(a > mn && a < mx) {
            a = 0.5 * (a_lo + a_hi);
        }
        let (fa, ga) = obj.eval(&(x + d * a));
        let da = ga.dot(d);
        if fa > f0 + C1 * a * slope0 || fa >= f_lo {
            hi = (a, fa, da);
        } else {
            if best.as_ref().is_none_or(|b| fa < b.1) {
                best = Some((a, fa, ga.clone()));
            }
            if da.abs() <= -C2 * slope0 {
                return Some((a, fa, ga));
            }
            if da * (a_hi - a_lo) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, da);
        }
    }
    best
}

/// Central finite-difference Jacobian of a gradient function, symmetrized.
pub fn fd_hessian<G>(mut grad: G, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let k = x.len();
    let mut h = DMatrix::zeros(k, k);
    let mut xp = x.clone();
    for j in 0..k {
        let orig = xp[j];
        xp[j] = orig + step;
        let gp = grad(&xp);
        xp[j] = orig - step;
        let gm = grad(&xp);
        xp[j] = orig;
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    crate::linalg::symmetrize(&h)
}
