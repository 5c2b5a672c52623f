//! Binomial tail and chi-square functions against high-precision references.
//!
//! The CSV fixtures were produced by `fixtures/gen_special_oracles.py` with
//! 40-digit arithmetic: exact rational sums for the binomial tail and the
//! regularized incomplete gamma function for the chi-square survival.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabwm_core::detection::{binomial_p_value, chi_square_quantile, chi_square_sf};

const BINOMIAL_ORACLE: &str = include_str!("fixtures/binomial_tail_oracle.csv");
const CHI_SQUARE_ORACLE: &str = include_str!("fixtures/chi_square_sf_oracle.csv");

fn rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').collect())
}

fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

#[test]
fn binomial_tail_matches_reference() {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for row in rows(BINOMIAL_ORACLE) {
        let t: u64 = row[0].parse().unwrap();
        let n: u64 = row[1].parse().unwrap();
        let want: f64 = row[2].parse().unwrap();
        let got = binomial_p_value(t, n).unwrap();
        let e = rel_err(got, want);
        assert!(e <= 1e-10, "t={t} n={n}: {got} vs {want} (rel {e:e})");
        worst = worst.max(e);
        count += 1;
    }
    assert_eq!(count, 1000);
    eprintln!("binomial tail: worst relative error {worst:e}");
}

#[test]
fn chi_square_sf_matches_reference() {
    let mut count = 0;
    for row in rows(CHI_SQUARE_ORACLE) {
        let x: f64 = row[0].parse().unwrap();
        let p: u64 = row[1].parse().unwrap();
        let want: f64 = row[2].parse().unwrap();
        let got = chi_square_sf(x, p).unwrap();
        assert!(rel_err(got, want) <= 1e-10, "x={x} p={p}: {got} vs {want}");
        count += 1;
    }
    assert_eq!(count, 1000);
}

fn exact_tail(t: u64, n: u64) -> BigRational {
    let mut c = BigInt::one();
    let mut total = BigInt::zero();
    for k in 0..=n {
        if k >= t {
            total += &c;
        }
        c = c * BigInt::from(n - k) / BigInt::from(k + 1);
    }
    BigRational::new(total, BigInt::one() << n as usize)
}

#[test]
fn binomial_tail_matches_rational_sum() {
    let want = exact_tail(60, 100).to_f64().unwrap();
    assert!(rel_err(binomial_p_value(60, 100).unwrap(), want) <= 1e-12);
    assert!(rel_err(want, 0.028_443_966_820_490_395) <= 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let n = rng.random_range(1..=300);
        let t = rng.random_range(0..=n);
        let want = exact_tail(t, n).to_f64().unwrap();
        let got = binomial_p_value(t, n).unwrap();
        assert!(rel_err(got, want) <= 1e-10, "t={t} n={n}: {got} vs {want}");
    }
}

#[test]
fn quantile_reference_values() {
    let q100 = chi_square_quantile(0.95, 100).unwrap();
    assert!(rel_err(q100, 124.342_113_404_004_08) <= 1e-10, "{q100}");
    let q1 = chi_square_quantile(0.95, 1).unwrap();
    assert!(rel_err(q1, 3.841_458_820_694_126) <= 1e-10, "{q1}");
    // Q(50, 124.342 / 2) from the same 30-digit reference.
    let sf = chi_square_sf(124.342, 100).unwrap();
    assert!(rel_err(sf, 0.050_000_715_769_971_76) <= 1e-10, "{sf}");
}

#[test]
fn quantile_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let p = match rng.random_range(0..3) {
            0 => rng.random_range(1..=10),
            1 => rng.random_range(10..=1000),
            _ => rng.random_range(1000..=20_000),
        };
        let q = 1.0 - 10f64.powf(rng.random_range(-12.0..-0.01));
        // Exact in floating point, unlike the alpha that produced q.
        let tail = 1.0 - q;
        let x = chi_square_quantile(q, p).unwrap();
        let back = chi_square_sf(x, p).unwrap();
        assert!(rel_err(back, tail) <= 1e-9, "p={p} q={q}: {back} vs {tail}");
    }
}

#[test]
fn survival_functions_are_monotone() {
    for n in [1u64, 7, 100, 5000] {
        let mut prev = 1.0;
        for t in 0..=n.min(400) {
            let v = binomial_p_value(t, n).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }
    for p in [1u64, 3, 100] {
        let mut prev = 1.0;
        for i in 0..2000 {
            let v = chi_square_sf(i as f64 * 0.25, p).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }
}
