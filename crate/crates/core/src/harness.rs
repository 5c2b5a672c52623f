//! Synthetic experiments: table generators, detection-rate and ROC sweeps,
//! attack grids and the adjacent-column independence check.
//!
//! Every trial derives its own seed from `(config seed, cell, trial)`, so
//! results do not depend on thread scheduling. Only the runtime column varies
//! between runs.

use std::io::Write;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{split, GreenList};
use crate::detection::detect;
use crate::embedding::{embed_table, ColumnPlan, NumericTable, WatermarkKey};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, StreamRng};
use crate::robustness::{additive_noise_attack, AttackSpec};

fn normal_column(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// I.i.d. standard normal entries; column `j` uses substream `j`.
pub fn gen_gaussian_table(n: usize, p: usize, seed: u64) -> NumericTable {
    let columns = (0..p)
        .into_par_iter()
        .map(|j| normal_column(n, &mut rng::substream(seed, j as u64)))
        .collect();
    NumericTable::from_columns(columns).expect("generated columns are rectangular and finite")
}

/// Chain of correlated columns: `X_{j+1} = 1.1 X_j + ε` after odd (1-based)
/// `j`, `X_{j+1} = X_j / 1.1 + ε` after even `j`, with `ε` standard normal.
pub fn gen_correlated_table(n: usize, p: usize, seed: u64) -> NumericTable {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut rng = rng::substream(seed, j as u64);
        let col = match columns.last() {
            None => normal_column(n, &mut rng),
            Some(prev) => {
                // `j` is the 0-based index of the new column, so the previous
                // column is number `j` in 1-based terms.
                let factor = if j % 2 == 1 { 1.1 } else { 1.0 / 1.1 };
                prev.iter()
                    .map(|&x| {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        factor * x + eps
                    })
                    .collect()
            }
        };
        columns.push(col);
    }
    NumericTable::from_columns(columns).expect("generated columns are rectangular and finite")
}

/// Each column drawn from its own random Gaussian mixture: means uniform in
/// `[-3, 3]`, stds uniform in `[0.2, 1]`, weights uniform on the simplex.
pub fn gen_mixture_table(n: usize, p: usize, components: usize, seed: u64) -> Result<NumericTable> {
    if components == 0 {
        return Err(Error::domain("mixture needs at least one component"));
    }
    let columns = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::substream(seed, j as u64);
            let means: Vec<f64> = (0..components)
                .map(|_| rng.random_range(-3.0..=3.0))
                .collect();
            let stds: Vec<f64> = (0..components)
                .map(|_| rng.random_range(0.2..=1.0))
                .collect();
            let weights: Vec<f64> = (0..components).map(|_| Exp1.sample(&mut rng)).collect();
            let pick = WeightedIndex::new(&weights).map_err(|e| Error::domain(e.to_string()))?;
            Ok((0..n)
                .map(|_| {
                    let c = pick.sample(&mut rng);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    means[c] + stds[c] * z
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    NumericTable::from_columns(columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SingleColumn,
    AllColumns,
    AttackGrid,
    HighDim,
    Independence,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SingleColumn => "single-column",
            Scenario::AllColumns => "all-columns",
            Scenario::AttackGrid => "attack-grid",
            Scenario::HighDim => "high-dim",
            Scenario::Independence => "independence",
        }
    }
}

/// Which columns receive the watermark. Detection always tests every column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// Only the first column is embedded.
    SingleColumn,
    #[default]
    AllColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Ci,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_grid: Vec<usize>,
    pub p_grid: Vec<usize>,
    pub m: usize,
    pub trials: usize,
    pub alpha: f64,
    /// Additive noise variances, in raw units.
    #[serde(default = "default_noise_grid")]
    pub noise_grid: Vec<f64>,
    #[serde(default = "default_proportion_grid")]
    pub proportion_grid: Vec<f64>,
    /// Embedding scope for the attack grid.
    #[serde(default)]
    pub attack_scope: Scope,
    pub seed: u64,
}

fn default_noise_grid() -> Vec<f64> {
    vec![0.001, 0.01, 0.1, 1.0, 10.0]
}

fn default_proportion_grid() -> Vec<f64> {
    vec![0.50, 0.75, 0.90, 0.95]
}

impl ExperimentConfig {
    pub fn preset(scenario: Scenario, scale: Scale) -> Self {
        let ci = scale == Scale::Ci;
        let (n_grid, p_grid, trials) = match scenario {
            Scenario::SingleColumn | Scenario::AllColumns => (
                vec![10, 100, 1000],
                vec![10, 100, 1000],
                if ci { 100 } else { 1000 },
            ),
            Scenario::AttackGrid if ci => (vec![500], vec![20], 100),
            Scenario::AttackGrid => (vec![5000], vec![100], 1000),
            Scenario::HighDim if ci => (vec![100], vec![100, 1000], 100),
            Scenario::HighDim => (vec![100], vec![100, 1000, 10_000], 100),
            Scenario::Independence if ci => (vec![10_000], vec![10], 1),
            Scenario::Independence => (vec![100_000], vec![10], 1),
        };
        Self {
            scenario,
            n_grid,
            p_grid,
            m: 1000,
            trials,
            alpha: 0.005,
            noise_grid: default_noise_grid(),
            proportion_grid: default_proportion_grid(),
            attack_scope: Scope::AllColumns,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, empty: bool| {
            if empty {
                Err(Error::validation(name, "must not be empty"))
            } else {
                Ok(())
            }
        };
        nonempty("n_grid", self.n_grid.is_empty())?;
        nonempty("p_grid", self.p_grid.is_empty())?;
        nonempty("noise_grid", self.noise_grid.is_empty())?;
        nonempty("proportion_grid", self.proportion_grid.is_empty())?;
        if self.n_grid.contains(&0) || self.p_grid.contains(&0) {
            return Err(Error::validation("n_grid", "table sizes must be >= 1"));
        }
        if self.m == 0 {
            return Err(Error::validation("m", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation("alpha", "must lie in (0, 1)"));
        }
        if self
            .noise_grid
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::validation(
                "noise_grid",
                "variances must be finite and >= 0",
            ));
        }
        if self
            .proportion_grid
            .iter()
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::validation("proportion_grid", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Probability that a watermarked p-value is below an unwatermarked one,
/// ties counted one half.
pub fn roc_auc(watermarked: &[f64], unwatermarked: &[f64]) -> f64 {
    if watermarked.is_empty() || unwatermarked.is_empty() {
        return f64::NAN;
    }
    let mut null = unwatermarked.to_vec();
    null.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &w in watermarked {
        let below_or_eq = null.partition_point(|&u| u <= w);
        let below = null.partition_point(|&u| u < w);
        wins += (null.len() - below_or_eq) as f64 + 0.5 * (below_or_eq - below) as f64;
    }
    wins / (watermarked.len() * unwatermarked.len()) as f64
}

/// One row of a sweep's CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub noise_var: Option<f64>,
    pub proportion: Option<f64>,
    pub trial_count: usize,
    pub tpr: f64,
    pub tnr: f64,
    pub auc: f64,
    pub mean_runtime_ms: f64,
}

/// A sweep cell with the per-trial global p-values behind its row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub row: SweepRow,
    pub watermarked_p: Vec<f64>,
    pub unwatermarked_p: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Noise {
    variance: f64,
    proportion: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    n: usize,
    p: usize,
    m: usize,
    alpha: f64,
    scope: Scope,
    noise: Option<Noise>,
}

/// Global p-values of one watermarked and one unwatermarked table, and the
/// wall time in ms.
fn run_trial(cell: &Cell, seed: u64) -> Result<(f64, f64, f64)> {
    let start = Instant::now();
    let clean = gen_gaussian_table(cell.n, cell.p, derive_seed(seed, &[0]));
    let plan: Vec<ColumnPlan> = clean
        .names()
        .iter()
        .map(|name| ColumnPlan {
            name: name.clone(),
            m: cell.m,
        })
        .collect();
    let key = WatermarkKey::generate(&clean, &plan, derive_seed(seed, &[1]), false)?;
    let embed_key = match cell.scope {
        Scope::AllColumns => key.clone(),
        Scope::SingleColumn => key.subset(&["x0"]),
    };
    let mut marked = embed_table(&clean, &embed_key, derive_seed(seed, &[2]))?;
    let mut null = gen_gaussian_table(cell.n, cell.p, derive_seed(seed, &[3]));
    if let Some(noise) = cell.noise {
        let attack = |seed| AttackSpec::additive_variance(noise.variance, noise.proportion, seed);
        marked = additive_noise_attack(&marked, &attack(derive_seed(seed, &[4])))?;
        null = additive_noise_attack(&null, &attack(derive_seed(seed, &[5])))?;
    }
    let pw = detect(&marked, &key, cell.alpha)?.global_p_value;
    let pu = detect(&null, &key, cell.alpha)?.global_p_value;
    Ok((pw, pu, start.elapsed().as_secs_f64() * 1e3))
}

fn run_cell(scenario: Scenario, cell: Cell, trials: usize, seed: u64) -> Result<CellOutcome> {
    let results: Vec<(f64, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(&cell, derive_seed(seed, &[t as u64])))
        .collect::<Result<_>>()?;
    let watermarked_p: Vec<f64> = results.iter().map(|r| r.0).collect();
    let unwatermarked_p: Vec<f64> = results.iter().map(|r| r.1).collect();
    let count = trials as f64;
    let tpr = watermarked_p.iter().filter(|&&p| p < cell.alpha).count() as f64 / count;
    let tnr = unwatermarked_p.iter().filter(|&&p| p >= cell.alpha).count() as f64 / count;
    let row = SweepRow {
        scenario: scenario.as_str().to_owned(),
        n: cell.n,
        p: cell.p,
        m: cell.m,
        noise_var: cell.noise.map(|x| x.variance),
        proportion: cell.noise.map(|x| x.proportion),
        trial_count: trials,
        tpr,
        tnr,
        auc: roc_auc(&watermarked_p, &unwatermarked_p),
        mean_runtime_ms: results.iter().map(|r| r.2).sum::<f64>() / count,
    };
    Ok(CellOutcome {
        row,
        watermarked_p,
        unwatermarked_p,
    })
}

fn grid_cells(cfg: &ExperimentConfig, scope: Scope) -> Vec<Cell> {
    cfg.n_grid
        .iter()
        .flat_map(|&n| {
            cfg.p_grid.iter().map(move |&p| Cell {
                n,
                p,
                m: cfg.m,
                alpha: cfg.alpha,
                scope,
                noise: None,
            })
        })
        .collect()
}

fn run_cells(cfg: &ExperimentConfig, cells: Vec<Cell>) -> Result<Vec<CellOutcome>> {
    cells
        .into_iter()
        .enumerate()
        .map(|(i, cell)| {
            run_cell(
                cfg.scenario,
                cell,
                cfg.trials,
                derive_seed(cfg.seed, &[i as u64]),
            )
        })
        .collect()
}

/// TPR, TNR and AUC for every `(n, p)` of the grid, without attacks.
/// `single-column` embeds only the first column; other scenarios embed all.
pub fn detection_rate_sweep(cfg: &ExperimentConfig) -> Result<Vec<CellOutcome>> {
    cfg.validate()?;
    let scope = match cfg.scenario {
        Scenario::SingleColumn => Scope::SingleColumn,
        _ => Scope::AllColumns,
    };
    run_cells(cfg, grid_cells(cfg, scope))
}

/// Detection under additive noise for every `(variance, proportion)` pair, on
/// tables of size `n_grid[0] x p_grid[0]`.
pub fn attack_sweep(cfg: &ExperimentConfig) -> Result<Vec<CellOutcome>> {
    cfg.validate()?;
    let (n, p) = (cfg.n_grid[0], cfg.p_grid[0]);
    let cells = cfg
        .noise_grid
        .iter()
        .flat_map(|&variance| {
            cfg.proportion_grid.iter().map(move |&proportion| Cell {
                n,
                p,
                m: cfg.m,
                alpha: cfg.alpha,
                scope: cfg.attack_scope,
                noise: Some(Noise {
                    variance,
                    proportion,
                }),
            })
        })
        .collect();
    run_cells(cfg, cells)
}

/// All-columns detection on wide tables (`p` up to and beyond `n`).
pub fn high_dim_sweep(cfg: &ExperimentConfig) -> Result<Vec<CellOutcome>> {
    cfg.validate()?;
    run_cells(cfg, grid_cells(cfg, Scope::AllColumns))
}

/// Joint green frequency of one adjacent column pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceRow {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    /// Index of the first column of the pair.
    pub pair: usize,
    pub joint_green_freq: f64,
    pub marginal_a: f64,
    pub marginal_b: f64,
    /// Standard error of the joint frequency under independence, `√(3/16n)`.
    pub sigma: f64,
}

/// Green/green frequency of adjacent columns of an unwatermarked correlated
/// table, each column under its own random green list.
pub fn independence_check(n: usize, p: usize, m: usize, seed: u64) -> Result<Vec<IndependenceRow>> {
    if n == 0 || p < 2 {
        return Err(Error::domain("independence check needs n >= 1 and p >= 2"));
    }
    let table = gen_correlated_table(n, p, derive_seed(seed, &[0]));
    let lists: Vec<GreenList> = (0..p)
        .map(|j| GreenList::random(m, derive_seed(seed, &[1, j as u64])))
        .collect::<Result<_>>()?;
    let green: Vec<Vec<bool>> = table
        .columns()
        .par_iter()
        .zip(lists.par_iter())
        .map(|(col, gl)| col.iter().map(|&x| gl.in_green(split(x).frac)).collect())
        .collect();
    let nf = n as f64;
    let freq = |v: &[bool]| v.iter().filter(|&&g| g).count() as f64 / nf;
    Ok((0..p - 1)
        .map(|j| {
            let both = green[j]
                .iter()
                .zip(&green[j + 1])
                .filter(|(a, b)| **a && **b)
                .count();
            IndependenceRow {
                scenario: Scenario::Independence.as_str().to_owned(),
                n,
                p,
                m,
                pair: j,
                joint_green_freq: both as f64 / nf,
                marginal_a: freq(&green[j]),
                marginal_b: freq(&green[j + 1]),
                sigma: (3.0 / (16.0 * nf)).sqrt(),
            }
        })
        .collect())
}

/// Runs the independence check for every `(n, p)` of the grid.
pub fn independence_sweep(cfg: &ExperimentConfig) -> Result<Vec<IndependenceRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (i, (&n, &p)) in cfg
        .n_grid
        .iter()
        .flat_map(|n| cfg.p_grid.iter().map(move |p| (n, p)))
        .enumerate()
    {
        rows.extend(independence_check(
            n,
            p,
            cfg.m,
            derive_seed(cfg.seed, &[i as u64]),
        )?);
    }
    Ok(rows)
}

/// Output of [`run_experiment`]; the independence scenario has its own layout.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Sweep(Vec<CellOutcome>),
    Independence(Vec<IndependenceRow>),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.scenario {
        Scenario::SingleColumn | Scenario::AllColumns => {
            detection_rate_sweep(cfg).map(ExperimentOutput::Sweep)
        }
        Scenario::AttackGrid => attack_sweep(cfg).map(ExperimentOutput::Sweep),
        Scenario::HighDim => high_dim_sweep(cfg).map(ExperimentOutput::Sweep),
        Scenario::Independence => independence_sweep(cfg).map(ExperimentOutput::Independence),
    }
}

pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

impl ExperimentOutput {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        match self {
            ExperimentOutput::Sweep(cells) => {
                let rows: Vec<&SweepRow> = cells.iter().map(|c| &c.row).collect();
                write_rows_csv(&rows, writer)
            }
            ExperimentOutput::Independence(rows) => write_rows_csv(rows, writer),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::correlation_matrix;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn gaussian_generator_moments() {
        let t = gen_gaussian_table(1_000_000, 1, 1);
        let (mean, var) = mean_var(t.column_at(0));
        assert!(mean.abs() < 0.004, "{mean}");
        assert!((0.99..=1.01).contains(&var), "{var}");
        assert_eq!(gen_gaussian_table(50, 3, 9), gen_gaussian_table(50, 3, 9));
        assert_ne!(gen_gaussian_table(50, 3, 9), gen_gaussian_table(50, 3, 10));
    }

    #[test]
    fn correlated_generator() {
        let t = gen_correlated_table(100_000, 3, 2);
        let corr = correlation_matrix(&t).unwrap();
        let expected = 1.1 / (1.21f64 + 1.0).sqrt();
        assert!((corr[1] - expected).abs() < 0.01, "{}", corr[1]);
        // Var X2 = 2.21; X3 = X2/1.1 + ε gives corr = (√2.21/1.1) / √(2.21/1.21 + 1).
        let v2 = 2.21f64;
        let expected23 = (v2.sqrt() / 1.1) / (v2 / 1.21 + 1.0).sqrt();
        assert!((corr[5] - expected23).abs() < 0.01, "{}", corr[5]);
        assert_eq!(
            gen_correlated_table(100, 1, 3),
            gen_gaussian_table(100, 1, 3)
        );
        assert_eq!(
            gen_correlated_table(40, 4, 3),
            gen_correlated_table(40, 4, 3)
        );
    }

    #[test]
    fn mixture_generator() {
        let one = gen_mixture_table(200_000, 1, 1, 4).unwrap();
        let (_, var) = mean_var(one.column_at(0));
        assert!((0.2 * 0.2 * 0.97..=1.03).contains(&var));
        let t = gen_mixture_table(100_000, 3, 5, 5).unwrap();
        for col in t.columns() {
            let gl = GreenList::random(1000, 6).unwrap();
            let f = col.iter().filter(|&&x| gl.in_green(split(x).frac)).count() as f64 / 1e5;
            assert!((f - 0.5).abs() <= 4.0 * (0.25f64 / 1e5).sqrt(), "{f}");
        }
        assert_eq!(
            gen_mixture_table(30, 2, 5, 7).unwrap(),
            gen_mixture_table(30, 2, 5, 7).unwrap()
        );
        assert!(gen_mixture_table(3, 1, 0, 7).is_err());
    }

    fn brute_auc(w: &[f64], u: &[f64]) -> f64 {
        let mut s = 0.0;
        for &a in w {
            for &b in u {
                s += if a < b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (w.len() * u.len()) as f64
    }

    #[test]
    fn auc_matches_pairwise_count() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[0.3, 0.4]), 1.0);
        assert_eq!(roc_auc(&[0.3, 0.4], &[0.1, 0.2]), 0.0);
        assert_eq!(roc_auc(&[0.5], &[0.5]), 0.5);
        let mut rng = rng::stream(3);
        for _ in 0..50 {
            let a: Vec<f64> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0..10) as f64)
                .collect();
            let b: Vec<f64> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0..10) as f64)
                .collect();
            assert!((roc_auc(&a, &b) - brute_auc(&a, &b)).abs() < 1e-12);
        }
        let same: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
        let other: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
        assert!((roc_auc(&same, &other) - 0.5).abs() < 0.04);
    }

    fn small(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig {
            n_grid: vec![50],
            p_grid: vec![4],
            trials: 20,
            seed: 11,
            ..ExperimentConfig::preset(scenario, Scale::Ci)
        }
    }

    #[test]
    fn sweeps_are_reproducible() {
        let cfg = small(Scenario::AllColumns);
        let a = detection_rate_sweep(&cfg).unwrap();
        let b = detection_rate_sweep(&cfg).unwrap();
        assert_eq!(a[0].watermarked_p, b[0].watermarked_p);
        assert_eq!(a[0].unwatermarked_p, b[0].unwatermarked_p);
        assert_eq!(a[0].row.tpr, 1.0);
        assert_eq!(a[0].row.auc, 1.0);
    }

    #[test]
    fn zero_proportion_attack_matches_clean_sweep() {
        let cfg = ExperimentConfig {
            noise_grid: vec![1.0],
            proportion_grid: vec![0.0],
            ..small(Scenario::AttackGrid)
        };
        let attacked = attack_sweep(&cfg).unwrap();
        let clean = run_cell(
            cfg.scenario,
            Cell {
                n: 50,
                p: 4,
                m: 1000,
                alpha: 0.005,
                scope: Scope::AllColumns,
                noise: None,
            },
            20,
            derive_seed(cfg.seed, &[0]),
        )
        .unwrap();
        assert_eq!(attacked[0].watermarked_p, clean.watermarked_p);
        assert_eq!(attacked[0].unwatermarked_p, clean.unwatermarked_p);
    }

    #[test]
    fn csv_layout() {
        let cfg = ExperimentConfig {
            trials: 3,
            ..small(Scenario::SingleColumn)
        };
        let out = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scenario,n,p,m,noise_var,proportion,trial_count,tpr,tnr,auc,mean_runtime_ms"
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("single-column,50,4,1000,,,3,"));
    }

    #[test]
    fn independence_rows() {
        let rows = independence_check(20_000, 4, 1000, 5).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!((r.joint_green_freq - 0.25).abs() <= 4.0 * r.sigma, "{r:?}");
        }
        assert!(independence_check(10, 1, 10, 0).is_err());
    }

    #[test]
    fn config_json_and_validation() {
        let cfg = ExperimentConfig::preset(Scenario::HighDim, Scale::Full);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"high-dim\""));
        assert_eq!(
            serde_json::from_str::<ExperimentConfig>(&text).unwrap(),
            cfg
        );
        let minimal = r#"{"scenario":"all-columns","n_grid":[10],"p_grid":[10],"m":1000,
                          "trials":5,"alpha":0.005,"seed":1}"#;
        let parsed: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.noise_grid.len(), 5);
        assert!(ExperimentConfig {
            trials: 0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(ExperimentConfig {
            n_grid: vec![],
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(
            &minimal.replace("\"seed\"", "\"bogus\":1,\"seed\"")
        )
        .is_err());
    }
}
