//! Column screening before watermarking.
//!
//! A column whose distribution is too spiky at the scale of the green-list
//! intervals does not land green about half the time under a random list, so
//! detection on it would be biased. Each column is normalized, then its green
//! frequency is measured under fresh random lists across a grid of `m`
//! values; columns that fall outside `[1/2 − delta, 1/2 + delta]` too often
//! are discarded, and the rest get the `m` that was in range most often.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{split, GreenList};
use crate::embedding::{ColumnPlan, Normalizer, NumericTable};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConfig {
    pub delta: f64,
    pub m_grid: Vec<usize>,
    pub repeats: usize,
    pub reject_fraction: f64,
}

impl Default for SmoothnessConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            m_grid: (1000..=5000).step_by(500).collect(),
            repeats: 5,
            reject_fraction: 0.10,
        }
    }
}

impl SmoothnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::validation("delta", "must be finite and > 0"));
        }
        if self.m_grid.is_empty() || self.m_grid[0] == 0 {
            return Err(Error::validation(
                "m_grid",
                "must be non-empty with positive entries",
            ));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("m_grid", "must be strictly increasing"));
        }
        if self.repeats == 0 {
            return Err(Error::validation("repeats", "must be >= 1"));
        }
        if !(self.reject_fraction > 0.0 && self.reject_fraction < 1.0) {
            return Err(Error::validation("reject_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn experiments(&self) -> usize {
        self.m_grid.len() * self.repeats
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeptColumn {
    pub name: String,
    pub m: usize,
    pub in_range_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedColumn {
    pub name: String,
    pub out_of_range_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ColumnSelection {
    pub kept: Vec<KeptColumn>,
    pub rejected: Vec<RejectedColumn>,
}

impl ColumnSelection {
    /// Key generation plan for the kept columns.
    pub fn plan(&self) -> Vec<ColumnPlan> {
        self.kept
            .iter()
            .map(|c| ColumnPlan {
                name: c.name.clone(),
                m: c.m,
            })
            .collect()
    }
}

/// Fraction of `col` landing green under a random list drawn from `seed`.
/// The column is used as given; callers normalize first. Empty input gives 0.
pub fn green_frequency(col: &[f64], m: usize, seed: u64) -> Result<f64> {
    let green = GreenList::random(m, seed)?;
    Ok(frequency_under(col, &green))
}

fn frequency_under(col: &[f64], green: &GreenList) -> f64 {
    if col.is_empty() {
        return 0.0;
    }
    let hits = col
        .iter()
        .filter(|&&x| green.in_green(split(x).frac))
        .count();
    hits as f64 / col.len() as f64
}

enum Verdict {
    Kept { m: usize, in_range: usize },
    Rejected { out_of_range: usize },
}

fn screen_column(col: &[f64], j: usize, cfg: &SmoothnessConfig, seed: u64) -> Result<Verdict> {
    let normalized: Vec<f64> = match Normalizer::fit(col) {
        Some(nz) => col.iter().map(|&x| nz.apply(x)).collect(),
        None => col.to_vec(),
    };
    let mut in_range = vec![0usize; cfg.m_grid.len()];
    for (g, &m) in cfg.m_grid.iter().enumerate() {
        for r in 0..cfg.repeats {
            let s = derive_seed(seed, &[j as u64, g as u64, r as u64]);
            let f = green_frequency(&normalized, m, s)?;
            if (f - 0.5).abs() <= cfg.delta {
                in_range[g] += 1;
            }
        }
    }
    let total = cfg.experiments();
    let out_of_range = total - in_range.iter().sum::<usize>();
    if out_of_range as f64 > cfg.reject_fraction * total as f64 {
        return Ok(Verdict::Rejected { out_of_range });
    }
    // First maximum, so ties go to the smallest m.
    let (best, &count) =
        in_range.iter().enumerate().fold(
            (0, &0),
            |acc, (g, c)| if *c > *acc.1 { (g, c) } else { acc },
        );
    Ok(Verdict::Kept {
        m: cfg.m_grid[best],
        in_range: count,
    })
}

/// Screens every column of `table`. Deterministic in `(table, cfg, seed)`.
pub fn select_columns(
    table: &NumericTable,
    cfg: &SmoothnessConfig,
    seed: u64,
) -> Result<ColumnSelection> {
    cfg.validate()?;
    let verdicts: Vec<Verdict> = table
        .columns()
        .par_iter()
        .enumerate()
        .map(|(j, col)| screen_column(col, j, cfg, seed))
        .collect::<Result<_>>()?;
    let mut selection = ColumnSelection::default();
    for (name, verdict) in table.names().iter().zip(verdicts) {
        match verdict {
            Verdict::Kept { m, in_range } => selection.kept.push(KeptColumn {
                name: name.clone(),
                m,
                in_range_count: in_range,
            }),
            Verdict::Rejected { out_of_range } => selection.rejected.push(RejectedColumn {
                name: name.clone(),
                out_of_range_count: out_of_range,
            }),
        }
    }
    Ok(selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn defaults_give_forty_five_experiments() {
        let cfg = SmoothnessConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.m_grid.len(), 9);
        assert_eq!(cfg.experiments(), 45);
        assert_eq!(cfg.m_grid.last(), Some(&5000));
        // 4 failures kept, 5 rejected.
        assert!(4.0 <= cfg.reject_fraction * 45.0 && cfg.reject_fraction * 45.0 < 5.0);
    }

    #[test]
    fn invalid_configs() {
        let base = SmoothnessConfig::default();
        for bad in [
            SmoothnessConfig {
                delta: 0.0,
                ..base.clone()
            },
            SmoothnessConfig {
                m_grid: vec![],
                ..base.clone()
            },
            SmoothnessConfig {
                m_grid: vec![10, 10],
                ..base.clone()
            },
            SmoothnessConfig {
                m_grid: vec![0, 10],
                ..base.clone()
            },
            SmoothnessConfig {
                repeats: 0,
                ..base.clone()
            },
            SmoothnessConfig {
                reject_fraction: 1.0,
                ..base.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn gaussian_frequency_near_half() {
        let f = green_frequency(&gaussian(100_000, 1), 1000, 2).unwrap();
        assert!((0.49..=0.51).contains(&f), "{f}");
    }

    #[test]
    fn degenerate_frequencies() {
        let ints: Vec<f64> = (-50..50).map(f64::from).collect();
        for seed in 0..20 {
            let green = GreenList::random(1000, seed).unwrap();
            let f = green_frequency(&ints, 1000, seed).unwrap();
            assert_eq!(f, if green.bits()[0] { 0.0 } else { 1.0 });
            let one = green_frequency(&[0.123], 7, seed).unwrap();
            assert!(one == 0.0 || one == 1.0);
        }
        assert_eq!(green_frequency(&[], 10, 0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_columns_are_kept() {
        // At n = 1e4 the frequency has std 0.005 = delta / 2, so a column is
        // rejected with probability about 0.05; 4e4 rows make it negligible.
        let cols = (0..10).map(|j| gaussian(40_000, 100 + j)).collect();
        let table = NumericTable::from_columns(cols).unwrap();
        let sel = select_columns(&table, &SmoothnessConfig::default(), 5).unwrap();
        assert!(sel.rejected.is_empty(), "{:?}", sel.rejected);
        assert_eq!(sel.kept.len(), 10);
        let small = NumericTable::from_columns(vec![gaussian(10_000, 7)]).unwrap();
        let sel = select_columns(&small, &SmoothnessConfig::default(), 5).unwrap();
        assert_eq!(sel.kept.len(), 1);
    }

    #[test]
    fn integer_and_spiky_columns_are_rejected() {
        let mut rng = rng::stream(11);
        let ints: Vec<f64> = (0..5000).map(|_| rng.random_range(0..20) as f64).collect();
        let spiky: Vec<f64> = (0..5000)
            .map(|_| {
                if rng.random_bool(0.3) {
                    1.75
                } else {
                    StandardNormal.sample(&mut rng)
                }
            })
            .collect();
        let constant = vec![3.0; 5000];
        let table = NumericTable::new(
            vec!["ints".into(), "spiky".into(), "constant".into()],
            vec![ints, spiky, constant],
        )
        .unwrap();
        let cfg = SmoothnessConfig::default();
        let sel = select_columns(&table, &cfg, 1).unwrap();
        let rejected: Vec<&str> = sel.rejected.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(rejected, ["ints", "spiky", "constant"]);
        assert_eq!(sel.rejected[2].out_of_range_count, 45);
        assert_eq!(sel, select_columns(&table, &cfg, 1).unwrap());
    }

    #[test]
    fn ties_pick_smallest_m() {
        let cfg = SmoothnessConfig {
            repeats: 1,
            m_grid: vec![50, 100, 200],
            ..Default::default()
        };
        let table = NumericTable::from_columns(vec![gaussian(400_000, 3)]).unwrap();
        let sel = select_columns(&table, &cfg, 2).unwrap();
        assert_eq!(sel.kept[0].m, 50);
        assert_eq!(sel.kept[0].in_range_count, 1);
        assert_eq!(sel.plan()[0].m, 50);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn selection_partitions_columns(
            seed in any::<u64>(),
            p in 1usize..5,
            n in 1usize..200,
            frac in 0.01f64..0.99,
        ) {
            let mut rng = rng::stream(seed);
            let cols: Vec<Vec<f64>> = (0..p)
                .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0f64).round() * 0.5).collect())
                .collect();
            let table = NumericTable::from_columns(cols).unwrap();
            let cfg = SmoothnessConfig {
                m_grid: vec![10, 20, 40],
                repeats: 2,
                reject_fraction: frac,
                ..Default::default()
            };
            let sel = select_columns(&table, &cfg, seed).unwrap();
            let mut names: Vec<&str> = sel.kept.iter().map(|c| c.name.as_str())
                .chain(sel.rejected.iter().map(|c| c.name.as_str()))
                .collect();
            names.sort();
            let mut expected: Vec<&str> = table.names().iter().map(String::as_str).collect();
            expected.sort();
            prop_assert_eq!(names, expected);
            prop_assert!(sel.kept.iter().all(|c| cfg.m_grid.contains(&c.m)));
        }

        #[test]
        fn always_in_range_column_is_kept(frac in 0.001f64..0.999, seed in any::<u64>()) {
            // delta = 1/2 makes every experiment in range.
            let cfg = SmoothnessConfig { delta: 0.5, reject_fraction: frac, ..Default::default() };
            let table = NumericTable::from_columns(vec![vec![1.0, 2.0, 2.5]]).unwrap();
            let sel = select_columns(&table, &cfg, seed).unwrap();
            prop_assert_eq!(sel.kept.len(), 1);
            prop_assert_eq!(sel.kept[0].m, 1000);
        }
    }
}
