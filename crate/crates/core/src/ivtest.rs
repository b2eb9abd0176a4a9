//! Bootstrap test of an exclusion restriction after collapsing selection and
//! the instrument to binary indicators.
//!
//! Under a valid instrument that raises selection monotonically, units
//! selected at `z = 0` are a `q = p₀/p₁` share of those selected at `z = 1`.
//! Their mean outcome must lie between the means of the lower and upper
//! `q`-fractions of the `z = 1` outcome distribution, and their outcome
//! density is bounded bin by bin. Each constraint is written so that it is
//! non-positive under the null.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinarizeRule {
    MedianSplit,
    Threshold(f64),
}

/// `1{v > median}`, or `1{v > c}` for a threshold. When no value exceeds the
/// median (a mass at the maximum) the split becomes `1{v ≥ median}`.
pub fn binarize(values: &[f64], rule: BinarizeRule) -> Result<Vec<bool>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot binarize an empty vector".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in binarized column".into()));
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::Data("binarized column has no variation".into()));
    }
    Ok(match rule {
        BinarizeRule::Threshold(c) => values.iter().map(|&v| v > c).collect(),
        BinarizeRule::MedianSplit => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
            if values.iter().any(|&v| v > median) {
                values.iter().map(|&v| v > median).collect()
            } else {
                values.iter().map(|&v| v >= median).collect()
            }
        }
    })
}

#[derive(Debug, Clone)]
pub struct IvTestInput {
    /// Observed exactly when `s` is true.
    pub y: Vec<Option<f64>>,
    pub s: Vec<bool>,
    pub z: Vec<bool>,
    /// Equal-mass outcome bins for the probability constraints.
    pub bins: usize,
    pub draws: usize,
    pub seed: u64,
}

impl IvTestInput {
    pub fn new(y: Vec<Option<f64>>, s: Vec<bool>, z: Vec<bool>) -> Self {
        Self { y, s, z, bins: 10, draws: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IvTestResult {
    /// Largest studentized mean-constraint value; negative when neither
    /// bound is violated.
    pub standardized_difference: f64,
    pub p_mean: f64,
    pub p_prob: f64,
    /// +1 if `z = 1` raises selection, −1 if the labels were swapped.
    pub direction: i8,
    pub q: f64,
    pub draws_used: usize,
    /// Sample values of `LB − m0` and `m0 − UB`, before studentizing.
    pub mean_constraints: [f64; 2],
}

struct Prepared {
    z: Vec<bool>,
    s: Vec<bool>,
    /// Selected `z = 1` rows ordered by outcome.
    upper_cell: Vec<usize>,
    lower_cell: Vec<usize>,
    y: Vec<f64>,
    bin: Vec<usize>,
    bins: usize,
}

impl Prepared {
    /// Constraint values under observation weights `w` (bootstrap counts).
    fn constraints(&self, w: &[f64]) -> Option<Vec<f64>> {
        let (mut n1, mut n0, mut sel1, mut sel0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..w.len() {
            if self.z[i] {
                n1 += w[i];
                if self.s[i] {
                    sel1 += w[i];
                }
            } else {
                n0 += w[i];
                if self.s[i] {
                    sel0 += w[i];
                }
            }
        }
        if n1 == 0.0 || n0 == 0.0 || sel1 == 0.0 || sel0 == 0.0 {
            return None;
        }
        let (p1, p0) = (sel1 / n1, sel0 / n0);
        let q = (p0 / p1).min(1.0);
        let m0 = self.lower_cell.iter().map(|&i| w[i] * self.y[i]).sum::<f64>() / sel0;
        let lb = trimmed_mean(self.upper_cell.iter().map(|&i| (self.y[i], w[i])), sel1, q);
        let ub = trimmed_mean(self.upper_cell.iter().rev().map(|&i| (self.y[i], w[i])), sel1, q);
        let mut out = vec![lb - m0, m0 - ub];
        let mut mass1 = vec![0.0; self.bins];
        let mut mass0 = vec![0.0; self.bins];
        for &i in &self.upper_cell {
            mass1[self.bin[i]] += w[i];
        }
        for &i in &self.lower_cell {
            mass0[self.bin[i]] += w[i];
        }
        for k in 0..self.bins {
            let (a, b) = (mass1[k] / n1, mass0[k] / n0);
            out.push(a - (p1 - p0) - b);
            out.push(b - a);
        }
        Some(out)
    }
}

/// Mean of the first `q` share of the weighted mass, splitting the boundary
/// observation.
fn trimmed_mean(values: impl Iterator<Item = (f64, f64)>, total: f64, q: f64) -> f64 {
    let target = q * total;
    let (mut taken, mut sum) = (0.0, 0.0);
    for (v, w) in values {
        if taken >= target {
            break;
        }
        let take = w.min(target - taken);
        taken += take;
        sum += take * v;
    }
    sum / target
}

fn prepare(input: &IvTestInput) -> Result<(Prepared, i8, f64)> {
    let n = input.s.len();
    if input.y.len() != n || input.z.len() != n {
        return Err(Error::Data(format!("lengths differ: y {}, s {n}, z {}", input.y.len(), input.z.len())));
    }
    if input.bins == 0 || input.draws < 2 {
        return Err(Error::InvalidArgument("need at least one bin and two bootstrap draws".into()));
    }
    if let Some(i) = (0..n).find(|&i| input.s[i] != input.y[i].is_some()) {
        return Err(Error::Data(format!("row {i}: outcome must be present exactly when selected")));
    }
    let share = |flag: bool| {
        let rows: Vec<usize> = (0..n).filter(|&i| input.z[i] == flag).collect();
        let sel = rows.iter().filter(|&&i| input.s[i]).count();
        (rows.len(), sel)
    };
    let (n1, s1) = share(true);
    let (n0, s0) = share(false);
    if n1 == 0 || n0 == 0 {
        return Err(Error::Data("instrument takes only one value".into()));
    }
    if s1 == 0 || s0 == 0 {
        return Err(Error::Data("a selected instrument cell is empty".into()));
    }
    let (p1, p0) = (s1 as f64 / n1 as f64, s0 as f64 / n0 as f64);
    let direction: i8 = if p1 >= p0 { 1 } else { -1 };
    let z: Vec<bool> = input.z.iter().map(|&v| if direction == 1 { v } else { !v }).collect();
    let q = p0.min(p1) / p0.max(p1);
    if q > 1.0 {
        return Err(Error::Numeric(format!("share ratio {q} exceeds one after orientation")));
    }
    let y: Vec<f64> = input.y.iter().map(|v| v.unwrap_or(0.0)).collect();
    let mut upper_cell: Vec<usize> = (0..n).filter(|&i| input.s[i] && z[i]).collect();
    upper_cell.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let lower_cell: Vec<usize> = (0..n).filter(|&i| input.s[i] && !z[i]).collect();
    let mut pooled: Vec<f64> = (0..n).filter(|&i| input.s[i]).map(|i| y[i]).collect();
    pooled.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..input.bins)
        .map(|k| {
            let pos = k as f64 / input.bins as f64 * (pooled.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(pooled.len() - 1);
            pooled[lo] + (pos - lo as f64) * (pooled[hi] - pooled[lo])
        })
        .collect();
    let bin: Vec<usize> = y.iter().map(|v| edges.iter().filter(|&&e| e < *v).count()).collect();
    Ok((
        Prepared { z, s: input.s.clone(), upper_cell, lower_cell, y, bin, bins: input.bins },
        direction,
        q,
    ))
}

pub fn huber_mellace(input: &IvTestInput) -> Result<IvTestResult> {
    let (prep, direction, q) = prepare(input)?;
    let n = input.s.len();
    let theta = prep.constraints(&vec![1.0; n]).ok_or_else(|| Error::Data("empty instrument cell".into()))?;
    let boot: Vec<Option<Vec<f64>>> = (0..input.draws as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(input.seed, b);
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1.0;
            }
            prep.constraints(&w)
        })
        .collect();
    let boot: Vec<Vec<f64>> = boot.into_iter().flatten().collect();
    if boot.len() < 2 {
        return Err(Error::Numeric("fewer than two usable bootstrap draws".into()));
    }
    let m = theta.len();
    let b = boot.len() as f64;
    let sd: Vec<f64> = (0..m)
        .map(|c| {
            let mean = boot.iter().map(|t| t[c]).sum::<f64>() / b;
            (boot.iter().map(|t| (t[c] - mean).powi(2)).sum::<f64>() / (b - 1.0)).sqrt()
        })
        .collect();
    let stat = |cols: std::ops::Range<usize>, value: &dyn Fn(usize) -> f64| -> Option<f64> {
        cols.filter(|&c| sd[c] > 0.0).map(|c| value(c) / sd[c]).reduce(f64::max)
    };
    let test = |cols: std::ops::Range<usize>| -> (f64, f64) {
        match stat(cols.clone(), &|c| theta[c]) {
            None => (f64::NAN, 1.0),
            Some(t) => {
                let exceed = boot
                    .iter()
                    .filter(|tb| stat(cols.clone(), &|c| tb[c] - theta[c]).is_some_and(|s| s >= t))
                    .count();
                (t, exceed as f64 / b)
            }
        }
    };
    let (standardized_difference, p_mean) = test(0..2);
    let (_, p_prob) = test(2..m);
    Ok(IvTestResult {
        standardized_difference,
        p_mean,
        p_prob,
        direction,
        q,
        draws_used: boot.len(),
        mean_constraints: [theta[0], theta[1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize(&[1.0, 2.0, 3.0, 4.0], BinarizeRule::MedianSplit).unwrap(), vec![false, false, true, true]);
        assert_eq!(binarize(&[-1.0, 1.0], BinarizeRule::Threshold(0.0)).unwrap(), vec![false, true]);
        assert!(binarize(&[2.0, 2.0], BinarizeRule::MedianSplit).is_err());
        assert!(binarize(&[], BinarizeRule::MedianSplit).is_err());
    }

    proptest! {
        #[test]
        fn median_split_has_both_sides(v in prop::collection::vec(-5i32..5, 2..30)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let b = binarize(&v, BinarizeRule::MedianSplit).unwrap();
            prop_assert!(b.iter().any(|&x| x) && b.iter().any(|&x| !x));
        }
    }

    #[test]
    fn trimmed_mean_splits_boundary() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let it = || v.iter().map(|&x| (x, 1.0));
        assert!((trimmed_mean(it(), 4.0, 0.5) - 1.5).abs() < 1e-15);
        // mass 1.5: all of 1 and half of 2
        assert!((trimmed_mean(it(), 4.0, 0.375) - 2.0 / 1.5).abs() < 1e-15);
        assert!((trimmed_mean(it(), 4.0, 1.0) - 2.5).abs() < 1e-15);
    }

    fn sample(n: usize, seed: u64, shift: f64) -> IvTestInput {
        let mut rng = stream_rng(seed, 0);
        let mut y = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let zi = rng.random_bool(0.5);
            let xi: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            let sel = 0.8 * f64::from(u8::from(zi)) + xi > 0.3;
            let e = 0.5 * xi + 0.75f64.sqrt() * eta;
            s.push(sel);
            z.push(zi);
            y.push(sel.then(|| 1.0 + e + shift * f64::from(u8::from(zi))));
        }
        IvTestInput { y, s, z, bins: 10, draws: 199, seed }
    }

    #[test]
    fn swapping_labels_flips_direction_only() {
        let a = sample(800, 3, 0.0);
        let mut b = a.clone();
        b.z.iter_mut().for_each(|v| *v = !*v);
        let ra = huber_mellace(&a).unwrap();
        let rb = huber_mellace(&b).unwrap();
        assert_eq!(ra.direction, -rb.direction);
        assert_eq!(ra.p_mean, rb.p_mean);
        assert_eq!(ra.p_prob, rb.p_prob);
        assert_eq!(ra.standardized_difference, rb.standardized_difference);
    }

    #[test]
    fn valid_instrument_is_not_violated() {
        let r = huber_mellace(&sample(3000, 4, 0.0)).unwrap();
        assert!(r.standardized_difference < 0.0, "{r:?}");
        assert!(r.p_mean >= 0.5);
        assert!((0.0..=1.0).contains(&r.p_prob));
        assert!(r.q < 1.0 && r.direction == 1);
    }

    #[test]
    fn equal_shares_collapse_both_bounds() {
        let mut rng = stream_rng(12, 0);
        let n = 600;
        let z: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let s: Vec<bool> = (0..n).map(|i| (i / 2) % 3 != 0).collect();
        let y = s.iter().map(|&sel| sel.then(|| rng.sample::<f64, _>(StandardNormal))).collect();
        let r = huber_mellace(&IvTestInput { y, s, z, bins: 5, draws: 99, seed: 1 }).unwrap();
        assert_eq!(r.q, 1.0);
        let [a, b] = r.mean_constraints;
        assert!((a + b).abs() < 1e-12);
        // max(d, −d) over a common scale cannot be negative
        assert!(r.standardized_difference >= 0.0);
    }

    #[test]
    fn direct_effect_is_detected() {
        let r = huber_mellace(&sample(3000, 5, 2.0)).unwrap();
        assert!(r.standardized_difference > 0.0);
        assert!(r.p_mean < 0.05, "{r:?}");
    }

    #[test]
    fn deterministic_under_seed() {
        let a = huber_mellace(&sample(500, 6, 0.0)).unwrap();
        let b = huber_mellace(&sample(500, 6, 0.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_errors() {
        let mut x = sample(100, 1, 0.0);
        x.y[0] = if x.s[0] { None } else { Some(1.0) };
        assert!(huber_mellace(&x).is_err());
        let mut x = sample(100, 1, 0.0);
        x.z = vec![true; 100];
        assert!(huber_mellace(&x).is_err());
    }
}
