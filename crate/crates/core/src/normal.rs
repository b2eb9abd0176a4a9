//! Standard normal distribution functions, including log-space interval
//! probabilities that stay finite deep in either tail.

use crate::error::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Log of the smallest per-observation likelihood we will report.
pub const LOG_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, accurate for arbitrarily negative `x`.
pub fn log_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        return (-cdf(-x)).ln_1p();
    }
    if x > -37.0 {
        return cdf(x).ln();
    }
    // Asymptotic series of the Mills ratio; below -37 the truncation error
    // is under 1e-13.
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// `ln(Φ(hi) − Φ(lo))` for `lo < hi`; either bound may be infinite.
///
/// When both bounds sit in the upper tail the complementary form
/// `Φ(−lo) − Φ(−hi)` is used so the difference never cancels.
pub fn log_diff_cdf(lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        return log_diff_cdf(-hi, -lo);
    }
    if hi > 0.0 {
        // Straddles zero: the difference exceeds min(Φ(hi) − 1/2, 1/2 − Φ(lo)).
        let d = cdf(hi) - cdf(lo);
        if d > 1e-8 {
            return d.ln();
        }
        // Very narrow interval around the origin.
        return ((hi - lo) * pdf(0.5 * (hi + lo))).ln();
    }
    let lh = log_cdf(hi);
    let ll = log_cdf(lo);
    let d = ll - lh;
    if d > -std::f64::consts::LN_2 {
        lh + (-d.exp_m1()).ln()
    } else {
        lh + (-d.exp()).ln_1p()
    }
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
pub fn quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Gradient of `ln(Φ(hi) − Φ(lo))` with respect to `(lo, hi)`, given the
/// already computed log difference. Infinite bounds contribute zero.
#[inline]
pub fn log_diff_cdf_grad(lo: f64, hi: f64, log_diff: f64) -> (f64, f64) {
    let g_lo = if lo.is_finite() {
        -(log_pdf(lo) - log_diff).exp()
    } else {
        0.0
    };
    let g_hi = if hi.is_finite() {
        (log_pdf(hi) - log_diff).exp()
    } else {
        0.0
    };
    (g_lo, g_hi)
}
