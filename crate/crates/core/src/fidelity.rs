//! Distortion introduced by embedding.

use serde::{Deserialize, Serialize};

use crate::embedding::{to_working_units, NumericTable, WatermarkKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnW1 {
    pub column_name: String,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Largest change over keyed entries, in normalized units.
    pub linf: f64,
    /// Largest `1/m` over keyed columns.
    pub linf_bound: f64,
    /// Per-column 1D Wasserstein-1 in normalized units.
    pub per_column_w1: Vec<ColumnW1>,
    /// Row-paired W1 estimate over keyed columns (upper-bounds the true
    /// multivariate distance).
    pub row_paired_w1: f64,
    /// `√p / min(m)` for the keyed columns.
    pub multivariate_w1_bound: f64,
    /// Largest absolute change in the Pearson correlation matrix, when every
    /// column is non-constant in both tables.
    pub max_corr_diff: Option<f64>,
}

fn check_same_shape(a: &NumericTable, b: &NumericTable) -> Result<()> {
    if a.names() != b.names() || a.n_rows() != b.n_rows() {
        return Err(Error::schema(format!(
            "tables differ in shape: {}x{} vs {}x{}",
            a.n_rows(),
            a.n_cols(),
            b.n_rows(),
            b.n_cols()
        )));
    }
    Ok(())
}

/// Max over keyed entries of `|a − b|`, each column in its key's units.
pub fn linf_distance(a: &NumericTable, b: &NumericTable, key: &WatermarkKey) -> Result<f64> {
    check_same_shape(a, b)?;
    let indices = key.resolve(a)?;
    let mut worst: f64 = 0.0;
    for (entry, j) in key.columns.iter().zip(indices) {
        let nz = entry.normalizer.as_ref();
        for (&x, &y) in a.column_at(j).iter().zip(b.column_at(j)) {
            worst = worst.max((to_working_units(y, nz) - to_working_units(x, nz)).abs());
        }
    }
    Ok(worst)
}

/// Exact W1 between two equal-size empirical measures on the line.
pub fn wasserstein1_column(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::schema(format!(
            "W1 needs equal sample sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let total: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.len() as f64)
}

/// `(1/n Σ_i ‖a_i − b_i‖^k)^{1/k}` over keyed columns in normalized units:
/// the cost of the identity row coupling, an upper bound on `W_k`.
pub fn row_paired_wasserstein(
    a: &NumericTable,
    b: &NumericTable,
    key: &WatermarkKey,
    k: u32,
) -> Result<f64> {
    check_same_shape(a, b)?;
    if k == 0 {
        return Err(Error::domain("Wasserstein order must be >= 1"));
    }
    let indices = key.resolve(a)?;
    let n = a.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sq = vec![0.0; n];
    for (entry, &j) in key.columns.iter().zip(&indices) {
        let nz = entry.normalizer.as_ref();
        for ((acc, &x), &y) in sq.iter_mut().zip(a.column_at(j)).zip(b.column_at(j)) {
            let d = to_working_units(y, nz) - to_working_units(x, nz);
            *acc += d * d;
        }
    }
    let mean = sq.iter().map(|s| s.sqrt().powi(k as i32)).sum::<f64>() / n as f64;
    Ok(mean.powf(1.0 / k as f64))
}

/// Pearson correlation matrix (population moments), row-major `p x p`.
pub fn correlation_matrix(table: &NumericTable) -> Result<Vec<f64>> {
    let p = table.n_cols();
    let n = table.n_rows() as f64;
    let mut centered = Vec::with_capacity(p);
    for (name, col) in table.names().iter().zip(table.columns()) {
        let mean = col.iter().sum::<f64>() / n;
        let c: Vec<f64> = col.iter().map(|x| x - mean).collect();
        let var = c.iter().map(|v| v * v).sum::<f64>() / n;
        if var.is_nan() || var <= 0.0 {
            return Err(Error::domain(format!(
                "column `{name}` is constant; correlation undefined"
            )));
        }
        let sd = var.sqrt();
        centered.push(c.into_iter().map(|v| v / sd).collect::<Vec<f64>>());
    }
    let mut corr = vec![0.0; p * p];
    for i in 0..p {
        corr[i * p + i] = 1.0;
        for j in i + 1..p {
            let r = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / n;
            corr[i * p + j] = r;
            corr[j * p + i] = r;
        }
    }
    Ok(corr)
}

/// Max absolute difference between the two Pearson correlation matrices.
pub fn correlation_drift(a: &NumericTable, b: &NumericTable) -> Result<f64> {
    check_same_shape(a, b)?;
    let ca = correlation_matrix(a)?;
    let cb = correlation_matrix(b)?;
    Ok(ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Full fidelity summary of `marked` against `original` under `key`.
pub fn fidelity_report(
    original: &NumericTable,
    marked: &NumericTable,
    key: &WatermarkKey,
) -> Result<FidelityReport> {
    let linf = linf_distance(original, marked, key)?;
    let indices = key.resolve(original)?;
    let mut per_column_w1 = Vec::with_capacity(key.columns.len());
    for (entry, &j) in key.columns.iter().zip(&indices) {
        let nz = entry.normalizer.as_ref();
        let a: Vec<f64> = original
            .column_at(j)
            .iter()
            .map(|&x| to_working_units(x, nz))
            .collect();
        let b: Vec<f64> = marked
            .column_at(j)
            .iter()
            .map(|&x| to_working_units(x, nz))
            .collect();
        per_column_w1.push(ColumnW1 {
            column_name: entry.name.clone(),
            w1: wasserstein1_column(&a, &b)?,
        });
    }
    let min_m = key.columns.iter().map(|c| c.m()).min().unwrap_or(0);
    let max_inv_m = if min_m == 0 { 0.0 } else { 1.0 / min_m as f64 };
    let multivariate_w1_bound = (key.columns.len() as f64).sqrt() * max_inv_m;
    let max_corr_diff = if original.n_cols() >= 2 {
        correlation_drift(original, marked).ok()
    } else {
        None
    };
    Ok(FidelityReport {
        linf,
        linf_bound: max_inv_m,
        per_column_w1,
        row_paired_w1: row_paired_wasserstein(original, marked, key, 1)?,
        multivariate_w1_bound,
        max_corr_diff,
    })
}
