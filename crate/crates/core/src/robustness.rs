//! Attack simulation and analytical robustness bounds.
//!
//! Two adversaries are modeled: additive Gaussian noise on a random subset of
//! entries (the realistic one), and an idealized attacker that moves exactly
//! `k_i` green entries of column `i` into red intervals. For the latter the
//! chi-square statistic is known in closed form, which gives the minimum
//! number of flips needed to push the p-value above `alpha` and, for
//! attackers whose per-element success probability is at most 1/2, an attack
//! budget below which detection survives with high probability.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::split;
use crate::detection::chi_square_quantile;
use crate::embedding::{mean_std, to_working_units, KeyColumn, NumericTable, WatermarkKey};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    AdditiveGaussian,
    TargetedFlip,
}

/// How the perturbed entries of a column are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Each entry independently with probability `proportion`.
    #[default]
    Bernoulli,
    /// Exactly `round(proportion * n)` entries per column.
    FixedCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Noise standard deviation; raw units, or a multiple of each column's
    /// std when `relative` is set.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub relative: bool,
    #[serde(default)]
    pub proportion: f64,
    #[serde(default)]
    pub selection: Selection,
    /// Per-key-column flip counts for [`AttackKind::TargetedFlip`].
    #[serde(default)]
    pub flip_counts: Vec<u64>,
    pub seed: u64,
}

impl AttackSpec {
    pub fn additive(noise_std: f64, proportion: f64, seed: u64) -> Self {
        Self {
            kind: AttackKind::AdditiveGaussian,
            noise_std,
            relative: false,
            proportion,
            selection: Selection::Bernoulli,
            flip_counts: Vec::new(),
            seed,
        }
    }

    /// Additive attack parameterized by noise variance.
    pub fn additive_variance(variance: f64, proportion: f64, seed: u64) -> Self {
        Self::additive(variance.sqrt(), proportion, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.proportion) {
            return Err(Error::validation("proportion", "must lie in [0, 1]"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::validation("noise_std", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Perturbs one column; returns the new values and the attacked-entry mask.
fn perturb_column<R: Rng + ?Sized>(
    col: &[f64],
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = col.len();
    let scale = if spec.relative {
        mean_std(col).map_or(0.0, |(_, sd)| sd)
    } else {
        1.0
    };
    let sigma = spec.noise_std * scale;
    if sigma == 0.0 || spec.proportion == 0.0 {
        return Ok((col.to_vec(), vec![false; n]));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::domain(e.to_string()))?;
    let mut mask = vec![false; n];
    match spec.selection {
        Selection::Bernoulli => {
            for m in mask.iter_mut() {
                *m = rng.random_bool(spec.proportion);
            }
        }
        Selection::FixedCount => {
            let count = ((spec.proportion * n as f64).round() as usize).min(n);
            for i in index::sample(rng, n, count) {
                mask[i] = true;
            }
        }
    }
    let mut out = col.to_vec();
    for (x, &hit) in out.iter_mut().zip(&mask) {
        if hit {
            *x += noise.sample(rng);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("additive noise produced a non-finite value"));
    }
    Ok((out, mask))
}

fn attack_with_masks(
    table: &NumericTable,
    spec: &AttackSpec,
) -> Result<(NumericTable, Vec<Vec<bool>>)> {
    if spec.kind != AttackKind::AdditiveGaussian {
        return Err(Error::domain(
            "additive attack needs kind = additive_gaussian",
        ));
    }
    spec.validate()?;
    let results: Vec<(Vec<f64>, Vec<bool>)> = table
        .columns()
        .par_iter()
        .enumerate()
        .map(|(j, col)| perturb_column(col, spec, &mut rng::substream(spec.seed, j as u64)))
        .collect::<Result<_>>()?;
    let mut out = table.clone();
    let mut masks = Vec::with_capacity(results.len());
    for (j, (col, mask)) in results.into_iter().enumerate() {
        out.set_column(j, col);
        masks.push(mask);
    }
    Ok((out, masks))
}

/// Adds `Normal(0, noise_std²)` to a random subset of every column's entries.
/// Column `j` draws from substream `j` of `spec.seed`.
pub fn additive_noise_attack(table: &NumericTable, spec: &AttackSpec) -> Result<NumericTable> {
    attack_with_masks(table, spec).map(|(t, _)| t)
}

fn require_fully_green(table: &NumericTable, key: &WatermarkKey) -> Result<Vec<usize>> {
    let indices = key.resolve(table)?;
    for (entry, &j) in key.columns.iter().zip(&indices) {
        if let Some(row) = table.column_at(j).iter().position(|&x| !entry.is_green(x)) {
            return Err(Error::domain(format!(
                "column `{}` row {row} is not green; the table must be fully watermarked",
                entry.name
            )));
        }
    }
    Ok(indices)
}

/// Fraction of attacked keyed entries whose fractional part ends up red.
/// Zero when nothing was attacked.
pub fn attack_success_frequency(
    table: &NumericTable,
    spec: &AttackSpec,
    key: &WatermarkKey,
) -> Result<f64> {
    let indices = require_fully_green(table, key)?;
    let (attacked, masks) = attack_with_masks(table, spec)?;
    let mut hits = 0u64;
    let mut red = 0u64;
    for (entry, &j) in key.columns.iter().zip(&indices) {
        for (&x, &hit) in attacked.column_at(j).iter().zip(&masks[j]) {
            if hit {
                hits += 1;
                if !entry.is_green(x) {
                    red += 1;
                }
            }
        }
    }
    Ok(if hits == 0 {
        0.0
    } else {
        red as f64 / hits as f64
    })
}

/// Chi-square statistic after flipping `k_j` of `n` entries in each column of
/// a fully green table: `Σ_j 4n(1/2 − k_j/n)²`.
pub fn flipped_statistic(n: u64, flip_counts: &[u64]) -> f64 {
    flip_counts
        .iter()
        .map(|&k| {
            let d = n as f64 - 2.0 * k as f64;
            d * d / n as f64
        })
        .sum()
}

fn check_bound_args(n: u64, p: u64, alpha: f64) -> Result<f64> {
    if n == 0 || p == 0 {
        return Err(Error::domain("n and p must be >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0, 1)")));
    }
    chi_square_quantile(1.0 - alpha, p)
}

/// Lower bound on the total number of flips an attacker needs to push the
/// p-value of a fully green `n x p` table to `alpha` or above:
/// `np/2 − √(np) √(χ²_p(1−α)) / 2`.
pub fn min_flips_for_evasion(n: u64, p: u64, alpha: f64) -> Result<f64> {
    let q = check_bound_args(n, p, alpha)?;
    let np = (n * p) as f64;
    Ok(0.5 * np - 0.5 * np.sqrt() * q.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    /// Total attacked entries under which the guarantee applies; clamped at 0.
    pub max_attacked: f64,
    /// Probability that such an attack fails (p-value stays below `alpha`),
    /// provided each attacked entry flips with probability at most 1/2.
    pub failure_prob_lb: f64,
}

/// Attack budget and failure guarantee for a fully green `n x p` table:
/// `Σ k̂_j ≤ (np − √(np) √(χ²_p(1−α))) / (1 + (np)^{-1/4})` entries fail with
/// probability at least `1 − exp(−(√(np) − √(χ²_p(1−α))) / 2)`.
pub fn attack_budget(n: u64, p: u64, alpha: f64) -> Result<AttackBudget> {
    let q = check_bound_args(n, p, alpha)?;
    let np = (n * p) as f64;
    let gap = np.sqrt() - q.sqrt();
    let max_attacked = ((np - np.sqrt() * q.sqrt()) / (1.0 + np.powf(-0.25))).max(0.0);
    let failure_prob_lb = (-(-0.5 * gap).exp_m1()).clamp(0.0, 1.0);
    Ok(AttackBudget {
        max_attacked,
        failure_prob_lb,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessBound {
    pub n: u64,
    pub p: u64,
    pub alpha: f64,
    /// Chi-square `1 − alpha` quantile on `p` degrees of freedom.
    pub chi_square_quantile: f64,
    pub min_flips: f64,
    pub max_attacked: f64,
    pub failure_prob_lb: f64,
}

impl RobustnessBound {
    pub fn compute(n: u64, p: u64, alpha: f64) -> Result<Self> {
        let budget = attack_budget(n, p, alpha)?;
        Ok(Self {
            n,
            p,
            alpha,
            chi_square_quantile: chi_square_quantile(1.0 - alpha, p)?,
            min_flips: min_flips_for_evasion(n, p, alpha)?,
            max_attacked: budget.max_attacked,
            failure_prob_lb: budget.failure_prob_lb,
        })
    }

    /// Bounds for a table watermarked under `key`. The guarantees assume every
    /// column is watermarked, so keys covering only part of the table are
    /// refused.
    pub fn for_key(table: &NumericTable, key: &WatermarkKey, alpha: f64) -> Result<Self> {
        key.resolve(table)?;
        let unkeyed = key.unkeyed_columns(table);
        if !unkeyed.is_empty() {
            return Err(Error::schema(format!(
                "robustness bounds assume every column is watermarked; unkeyed: {}",
                unkeyed.join(", ")
            )));
        }
        Self::compute(table.n_rows() as u64, table.n_cols() as u64, alpha)
    }
}

const MAX_FLIP_ATTEMPTS: usize = 64;

fn flip_to_red<R: Rng + ?Sized>(x: f64, entry: &KeyColumn, rng: &mut R) -> Result<f64> {
    let nz = entry.normalizer.as_ref();
    let s = split(to_working_units(x, nz));
    let red = entry.green.red_interval(entry.green.pair_index(s.frac));
    let place = |r: f64| -> Option<f64> {
        let y = s.whole + r;
        let out = match nz {
            Some(nz) => nz.invert(y),
            None => y,
        };
        (out.is_finite() && !entry.is_green(out)).then_some(out)
    };
    for _ in 0..MAX_FLIP_ATTEMPTS {
        let r = red.lo + rng.random::<f64>() * red.width();
        if r < red.hi {
            if let Some(out) = place(r) {
                return Ok(out);
            }
        }
    }
    place(red.center()).ok_or_else(|| {
        Error::domain(format!(
            "value {x} in column `{}` cannot be moved to a red interval",
            entry.name
        ))
    })
}

/// Moves exactly `flip_counts[i]` uniformly chosen entries of key column `i`
/// to a uniform point of the red member of their pair. The table must be
/// fully green under `key`.
pub fn targeted_flip_attack(
    table: &NumericTable,
    key: &WatermarkKey,
    flip_counts: &[u64],
    seed: u64,
) -> Result<NumericTable> {
    if flip_counts.len() != key.columns.len() {
        return Err(Error::schema(format!(
            "{} flip counts for {} key columns",
            flip_counts.len(),
            key.columns.len()
        )));
    }
    let n = table.n_rows() as u64;
    if let Some((i, &k)) = flip_counts.iter().enumerate().find(|(_, &k)| k > n) {
        return Err(Error::domain(format!(
            "flip count {k} for column `{}` exceeds {n} rows",
            key.columns[i].name
        )));
    }
    let indices = require_fully_green(table, key)?;
    let flipped: Vec<(usize, Vec<f64>)> = key
        .columns
        .par_iter()
        .zip(indices.par_iter())
        .zip(flip_counts.par_iter())
        .map(|((entry, &j), &k)| {
            let mut rng = rng::substream(seed, j as u64);
            let mut col = table.column_at(j).to_vec();
            for row in index::sample(&mut rng, col.len(), k as usize) {
                col[row] = flip_to_red(col[row], entry, &mut rng)?;
            }
            Ok((j, col))
        })
        .collect::<Result<_>>()?;
    let mut out = table.clone();
    for (j, col) in flipped {
        out.set_column(j, col);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::detect;
    use crate::embedding::{embed_table, ColumnPlan};
    use rand_distr::StandardNormal;

    fn gaussian_table(n: usize, p: usize, seed: u64) -> NumericTable {
        let mut rng = rng::stream(seed);
        NumericTable::from_columns(
            (0..p)
                .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect(),
        )
        .unwrap()
    }

    fn marked(n: usize, p: usize, m: usize, seed: u64) -> (NumericTable, WatermarkKey) {
        let table = gaussian_table(n, p, seed);
        let plan: Vec<ColumnPlan> = table
            .names()
            .iter()
            .map(|name| ColumnPlan {
                name: name.clone(),
                m,
            })
            .collect();
        let key = WatermarkKey::generate(&table, &plan, seed + 1, true).unwrap();
        (embed_table(&table, &key, seed + 2).unwrap(), key)
    }

    #[test]
    fn zero_attacks_are_identity() {
        let (t, _) = marked(200, 3, 100, 1);
        assert_eq!(
            additive_noise_attack(&t, &AttackSpec::additive(1.0, 0.0, 1)).unwrap(),
            t
        );
        assert_eq!(
            additive_noise_attack(&t, &AttackSpec::additive(0.0, 0.7, 1)).unwrap(),
            t
        );
    }

    #[test]
    fn bernoulli_proportion_is_respected() {
        let t = gaussian_table(20_000, 1, 3);
        let spec = AttackSpec::additive(0.5, 0.3, 9);
        let out = additive_noise_attack(&t, &spec).unwrap();
        let changed = t
            .column_at(0)
            .iter()
            .zip(out.column_at(0))
            .filter(|(a, b)| a != b)
            .count() as f64
            / 20_000.0;
        assert!((changed - 0.3).abs() < 0.015, "{changed}");
        assert_eq!(out, additive_noise_attack(&t, &spec).unwrap());
    }

    #[test]
    fn fixed_count_selection() {
        let t = gaussian_table(1000, 2, 3);
        let spec = AttackSpec {
            selection: Selection::FixedCount,
            ..AttackSpec::additive(0.5, 0.25, 9)
        };
        let out = additive_noise_attack(&t, &spec).unwrap();
        for j in 0..2 {
            let changed = t
                .column_at(j)
                .iter()
                .zip(out.column_at(j))
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, 250);
        }
    }

    #[test]
    fn invalid_specs() {
        let t = gaussian_table(10, 1, 3);
        assert!(additive_noise_attack(&t, &AttackSpec::additive(1.0, 1.5, 0)).is_err());
        assert!(additive_noise_attack(&t, &AttackSpec::additive(-1.0, 0.5, 0)).is_err());
        let flip = AttackSpec {
            kind: AttackKind::TargetedFlip,
            ..AttackSpec::additive(1.0, 0.5, 0)
        };
        assert!(additive_noise_attack(&t, &flip).is_err());
    }

    #[test]
    fn success_frequency_limits() {
        let (t, key) = marked(100_000, 1, 1000, 4);
        let none = attack_success_frequency(&t, &AttackSpec::additive(0.0, 1.0, 1), &key).unwrap();
        assert_eq!(none, 0.0);
        // Normalized units: the marked column has std ≈ 1, so raw ≈ normalized.
        let spec = AttackSpec {
            relative: true,
            ..AttackSpec::additive(0.1, 1.0, 5)
        };
        let f = attack_success_frequency(&t, &spec, &key).unwrap();
        assert!((0.49..=0.51).contains(&f), "{f}");

        let (coarse, key5) = marked(100_000, 1, 5, 6);
        let f =
            attack_success_frequency(&coarse, &AttackSpec::additive(1e-4, 1.0, 7), &key5).unwrap();
        assert!(f < 0.05, "{f}");
    }

    #[test]
    fn success_frequency_requires_green_table() {
        let t = gaussian_table(1000, 1, 8);
        let plan = [ColumnPlan {
            name: "x0".into(),
            m: 100,
        }];
        let key = WatermarkKey::generate(&t, &plan, 1, false).unwrap();
        assert!(attack_success_frequency(&t, &AttackSpec::additive(0.1, 1.0, 1), &key).is_err());
    }

    #[test]
    fn min_flips_values() {
        // alpha with χ²₁(1−α) = 4 is P(χ²₁ > 4).
        let alpha = crate::detection::chi_square_sf(4.0, 1).unwrap();
        assert!(min_flips_for_evasion(4, 1, alpha).unwrap().abs() < 1e-9);
        // 124.342113404004081725 from a 30-digit incomplete-gamma root.
        let expected = 250_000.0 - 0.5 * 500_000f64.sqrt() * 124.342_113_404_004_08f64.sqrt();
        let got = min_flips_for_evasion(5000, 100, 0.05).unwrap();
        assert!((got - expected).abs() / expected < 1e-10);
        assert!((got - 246_057.568_748_158).abs() < 1e-4);
        for (n, p) in [(1, 1), (10, 3), (1000, 1000)] {
            assert!(min_flips_for_evasion(n, p, 0.01).unwrap() < (n * p) as f64 / 2.0);
        }
    }

    #[test]
    fn budget_values() {
        let b = attack_budget(5000, 100, 0.05).unwrap();
        assert!((b.max_attacked - 474_279.372_735_359_3).abs() < 1e-4);
        assert_eq!(b.failure_prob_lb, 1.0);
        let mut prev = 0.0;
        for n in [1u64, 10, 100, 1000, 10_000] {
            let b = attack_budget(n, 3, 0.05).unwrap();
            assert!((0.0..=1.0).contains(&b.failure_prob_lb));
            assert!(b.failure_prob_lb >= prev);
            prev = b.failure_prob_lb;
        }
        let huge = attack_budget(10_000_000, 2, 0.05).unwrap();
        assert!(huge.max_attacked / 2e7 > 0.98);
    }

    #[test]
    fn for_key_refuses_partial_keys() {
        let (t, key) = marked(50, 3, 10, 9);
        assert!(RobustnessBound::for_key(&t, &key, 0.05).is_ok());
        let err = RobustnessBound::for_key(&t, &key.subset(&["x0"]), 0.05).unwrap_err();
        assert!(err.to_string().contains("x1"));
    }

    #[test]
    fn targeted_flips_give_closed_form_statistic() {
        let (t, key) = marked(1000, 10, 1000, 10);
        let none = targeted_flip_attack(&t, &key, &[0; 10], 1).unwrap();
        assert_eq!(none, t);
        assert_eq!(detect(&none, &key, 0.05).unwrap().chi_square_stat, 10_000.0);

        let half = targeted_flip_attack(&t, &key, &[500; 10], 2).unwrap();
        assert_eq!(detect(&half, &key, 0.05).unwrap().chi_square_stat, 0.0);

        let some = targeted_flip_attack(&t, &key, &[400; 10], 3).unwrap();
        let stat = detect(&some, &key, 0.05).unwrap().chi_square_stat;
        assert!((stat - 400.0).abs() < 1e-9);
        assert_eq!(flipped_statistic(1000, &[400; 10]), 400.0);

        assert!(targeted_flip_attack(&t, &key, &[1001; 10], 3).is_err());
        assert!(targeted_flip_attack(&t, &key, &[1; 3], 3).is_err());
    }
}
