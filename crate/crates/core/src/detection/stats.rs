//! Binomial and chi-square tail probabilities.
//!
//! Probability masses are evaluated with the saddle-point form (Stirling
//! remainder plus a deviance term) instead of differences of log-gamma
//! values, which cancel catastrophically for large arguments. Tails are
//! summed from their largest term outward.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Stirling remainder `ln Γ(h+1) - (h+1/2) ln h + h - ln √(2π)` at the
/// half-integers `h = 0.5, 1.0, ..., 15.0`.
#[allow(clippy::excessive_precision)]
const STIRLING_HALVES: [f64; 30] = [
    0.153_426_409_720_027_345_291_4,
    0.081_061_466_795_327_258_219_67,
    0.054_814_121_051_917_653_896_14,
    0.041_340_695_955_409_294_093_82,
    0.033_162_873_519_936_287_485_11,
    0.027_677_925_684_998_339_148_79,
    0.023_746_163_656_297_495_971_33,
    0.020_790_672_103_765_093_111_52,
    0.018_488_450_532_673_185_230_78,
    0.016_644_691_189_821_192_163_19,
    0.015_134_973_221_917_378_873_51,
    0.013_876_128_823_070_747_998_75,
    0.012_810_465_242_920_226_924_25,
    0.011_896_709_945_891_770_095_06,
    0.011_104_559_758_206_917_326_63,
    0.010_411_265_261_972_096_497_48,
    0.009_799_416_126_158_803_298_39,
    0.009_255_462_182_712_732_917_729,
    0.008_768_700_134_139_385_462_955,
    0.008_330_563_433_362_871_256_469,
    0.007_934_114_564_314_020_547_25,
    0.007_573_675_487_951_840_794_972,
    0.007_244_554_301_320_383_179_546,
    0.006_942_840_107_209_529_865_664,
    0.006_665_247_032_707_682_442_356,
    0.006_408_994_188_004_207_068_44,
    0.006_171_712_263_039_457_647_535,
    0.005_951_370_112_758_847_735_624,
    0.005_746_216_513_010_115_682_026,
    0.005_554_733_551_962_801_371_039,
];

/// Stirling remainder for `h` a positive multiple of 1/2.
fn stirling_remainder(h: f64) -> f64 {
    if h <= 15.0 {
        let twice = 2.0 * h;
        debug_assert!(twice == twice.round() && twice >= 1.0);
        return STIRLING_HALVES[twice as usize - 1];
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let hh = h * h;
    if h > 500.0 {
        (S0 - S1 / hh) / h
    } else if h > 80.0 {
        (S0 - (S1 - S2 / hh) / hh) / h
    } else if h > 35.0 {
        (S0 - (S1 - (S2 - S3 / hh) / hh) / hh) / h
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / hh) / hh) / hh) / hh) / h
    }
}

/// Deviance `x ln(x/mu) + mu - x`, accurate when `x ≈ mu`.
fn deviance(x: f64, mu: f64) -> f64 {
    if (x - mu).abs() < 0.1 * (x + mu) {
        let v = (x - mu) / (x + mu);
        let mut s = (x - mu) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
        s
    } else {
        x * (x / mu).ln() + mu - x
    }
}

/// `ln P(B = k)` for `B ~ Binomial(n, 1/2)`.
fn ln_binomial_half_pmf(k: u64, n: u64) -> f64 {
    if k == 0 || k == n {
        return -(n as f64) * LN_2;
    }
    let (kf, nf) = (k as f64, n as f64);
    let half = 0.5 * nf;
    let lc = stirling_remainder(nf)
        - stirling_remainder(kf)
        - stirling_remainder(nf - kf)
        - deviance(kf, half)
        - deviance(nf - kf, half);
    let lf = (2.0 * PI).ln() + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln P(B >= t)` for `t > n/2`, summing the decreasing terms from `t` up.
fn ln_upper_tail_above_mean(t: u64, n: u64) -> f64 {
    debug_assert!(2 * t > n && t <= n);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = t;
    while k < n {
        term *= (n - k) as f64 / (k + 1) as f64;
        sum += term;
        k += 1;
        if term < sum * 1e-17 {
            break;
        }
    }
    ln_binomial_half_pmf(t, n) + sum.ln()
}

/// Tail evaluation strategy for [`binomial_p_value_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum BinomialMethod {
    /// Exact tail for every `n`.
    #[default]
    Exact,
    /// Continuity-corrected normal approximation once `n` exceeds the cutoff.
    NormalAbove { n: u64 },
}

/// `ln P(B >= t)` for `B ~ Binomial(n, 1/2)`.
pub fn ln_binomial_p_value(t: u64, n: u64) -> Result<f64> {
    if n == 0 || t > n {
        return Err(Error::domain(format!(
            "binomial tail needs 0 <= t <= n and n >= 1, got t = {t}, n = {n}"
        )));
    }
    if t == 0 {
        return Ok(0.0);
    }
    if 2 * t > n {
        Ok(ln_upper_tail_above_mean(t, n))
    } else {
        // P(B >= t) = 1 - P(B <= t-1) = 1 - P(B >= n-t+1) by symmetry.
        let lower = ln_upper_tail_above_mean(n - t + 1, n).exp();
        Ok((-lower).ln_1p())
    }
}

/// Exact one-sided p-value `P(B >= t)` for `B ~ Binomial(n, 1/2)`.
pub fn binomial_p_value(t: u64, n: u64) -> Result<f64> {
    ln_binomial_p_value(t, n).map(f64::exp)
}

pub fn binomial_p_value_with(t: u64, n: u64, method: BinomialMethod) -> Result<f64> {
    match method {
        BinomialMethod::NormalAbove { n: cutoff } if n > cutoff => {
            if t > n {
                return Err(Error::domain(format!("t = {t} exceeds n = {n}")));
            }
            let z = (t as f64 - 0.5 - 0.5 * n as f64) / (0.5 * (n as f64).sqrt());
            Ok(normal_sf(z))
        }
        _ => binomial_p_value(t, n),
    }
}

/// Standard normal upper tail via `P(Z > z) = Q(1/2, z²/2) / 2` for `z > 0`.
pub fn normal_sf(z: f64) -> f64 {
    let half_tail = 0.5 * upper_gamma_regularized(0.5, 0.5 * z * z);
    if z >= 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// `ln(x^a e^{-x} / Γ(a+1))` for half-integer `a`.
fn ln_poisson_like(a: f64, x: f64) -> f64 {
    -stirling_remainder(a) - deviance(a, x) - LN_SQRT_2PI - 0.5 * a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)` for `a` a positive multiple
/// of 1/2: power series below `x = a + 1`, Lentz continued fraction above.
fn upper_gamma_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut denom = a;
        for _ in 0..1_000_000 {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        let lower = (ln_poisson_like(a, x) + sum.ln()).exp();
        (1.0 - lower).max(0.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1_000_000u64 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        // x^a e^{-x} / Γ(a) = a * x^a e^{-x} / Γ(a+1)
        (ln_poisson_like(a, x) + a.ln() + h.ln()).exp()
    }
}

/// Chi-square survival function `P(χ²_p > x)`.
pub fn chi_square_sf(x: f64, p: u64) -> Result<f64> {
    if p == 0 {
        return Err(Error::domain(
            "chi-square needs at least one degree of freedom",
        ));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!(
            "chi-square argument {x} is negative"
        )));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(upper_gamma_regularized(0.5 * p as f64, 0.5 * x))
}

/// `x` with `P(χ²_p <= x) = q`, by bracketed bisection on the survival
/// function.
pub fn chi_square_quantile(q: f64, p: u64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("quantile level {q} outside (0, 1)")));
    }
    let target = 1.0 - q;
    let mut lo = 0.0;
    let mut hi = (p as f64).max(1.0);
    while chi_square_sf(hi, p)? > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi_square_sf(mid, p)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
