//! Watermark detection as a hypothesis test.
//!
//! Under the null (no watermark) each column's green count is approximately
//! `Binomial(n, 1/2)`. Columns are tested individually with the exact
//! binomial upper tail, and jointly with the chi-square statistic
//! `Σ_j [2√n (T_j/n − 1/2)]²` on `p` degrees of freedom.

mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{
    binomial_p_value, binomial_p_value_with, chi_square_quantile, chi_square_sf,
    ln_binomial_p_value, normal_sf, BinomialMethod,
};

use crate::embedding::{KeyColumn, NumericTable, WatermarkKey};
use crate::error::{Error, Result};

/// Number of values in `col` whose (normalized) fractional part is green.
pub fn green_count(col: &[f64], entry: &KeyColumn) -> u64 {
    col.iter().filter(|&&x| entry.is_green(x)).count() as u64
}

/// `(2T − n) / √n`, the standardized green count.
pub fn z_score(green: u64, n: u64) -> f64 {
    (2.0 * green as f64 - n as f64) / (n as f64).sqrt()
}

/// Squared standardized deviation, computed from the integer excess so that
/// `n = T` gives exactly `n`.
fn z_squared(green: u64, n: u64) -> f64 {
    let excess = 2.0 * green as f64 - n as f64;
    excess * excess / n as f64
}

/// Chi-square statistic over `(green_count, n)` pairs.
pub fn chi_square_statistic(counts: &[(u64, u64)]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::domain(
            "chi-square statistic needs at least one column",
        ));
    }
    let mut total = 0.0;
    for &(t, n) in counts {
        if n == 0 || t > n {
            return Err(Error::domain(format!(
                "green count {t} invalid for column of {n} rows"
            )));
        }
        total += z_squared(t, n);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Watermarked,
    NotWatermarked,
}

/// Which columns enter the chi-square aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// Only the columns listed in the key.
    #[default]
    Keyed,
    /// Every column of the table; each must have a key entry.
    AllColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectOptions {
    pub mode: DetectionMode,
    pub binomial: BinomialMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDetection {
    pub column_name: String,
    pub n: u64,
    pub green_count: u64,
    pub binomial_p_value: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub per_column: Vec<ColumnDetection>,
    pub chi_square_stat: f64,
    pub degrees: u64,
    pub global_p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
}

impl DetectionReport {
    pub fn is_watermarked(&self) -> bool {
        self.decision == Decision::Watermarked
    }
}

/// Runs the chi-square test over the key's columns.
pub fn detect(table: &NumericTable, key: &WatermarkKey, alpha: f64) -> Result<DetectionReport> {
    detect_with(table, key, alpha, &DetectOptions::default())
}

pub fn detect_with(
    table: &NumericTable,
    key: &WatermarkKey,
    alpha: f64,
    options: &DetectOptions,
) -> Result<DetectionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha {alpha} outside (0, 1)")));
    }
    key.validate()?;
    table.require_rows()?;
    if key.columns.is_empty() {
        return Err(Error::schema("key lists no columns to test"));
    }
    let indices = key.resolve(table)?;
    if options.mode == DetectionMode::AllColumns {
        let unkeyed = key.unkeyed_columns(table);
        if !unkeyed.is_empty() {
            return Err(Error::schema(format!(
                "all-columns detection needs a key entry for every column; unkeyed: {}",
                unkeyed.join(", ")
            )));
        }
    }

    let n = table.n_rows() as u64;
    let per_column = key
        .columns
        .par_iter()
        .zip(indices.par_iter())
        .map(|(entry, &j)| {
            let t = green_count(table.column_at(j), entry);
            Ok(ColumnDetection {
                column_name: entry.name.clone(),
                n,
                green_count: t,
                binomial_p_value: binomial_p_value_with(t, n, options.binomial)?,
                z: z_score(t, n),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let counts: Vec<(u64, u64)> = per_column.iter().map(|c| (c.green_count, c.n)).collect();
    let chi_square_stat = chi_square_statistic(&counts)?;
    let degrees = counts.len() as u64;
    let global_p_value = chi_square_sf(chi_square_stat, degrees)?;
    let decision = if global_p_value < alpha {
        Decision::Watermarked
    } else {
        Decision::NotWatermarked
    };
    Ok(DetectionReport {
        per_column,
        chi_square_stat,
        degrees,
        global_p_value,
        alpha,
        decision,
    })
}
