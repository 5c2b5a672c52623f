//! Element-wise watermark embedding.
//!
//! A value whose fractional part is already green is left bit-identical.
//! Otherwise its fractional part is resampled uniformly from the nearest
//! green interval, keeping the integer part. Columns carrying a
//! [`Normalizer`] are embedded in normalized units and mapped back.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;

use crate::binning::{split, GreenList};
use crate::error::{Error, Result};
use crate::rng;

/// Columns whose population std falls below this are keyed without a
/// normalizer.
pub const MIN_NORMALIZER_STD: f64 = 1e-12;

/// Current key format version.
pub const KEY_VERSION: u32 = 1;

pub const DEFAULT_ALPHA: f64 = 0.005;

/// Resampling attempts before falling back to the interval center.
const MAX_EMBED_ATTEMPTS: usize = 64;

/// An `n x p` table of finite reals, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    lookup: HashMap<String, usize>,
}

impl NumericTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::schema(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            if lookup.insert(name.clone(), j).is_some() {
                return Err(Error::schema(format!("duplicate column name `{name}`")));
            }
        }
        if let Some(first) = columns.first() {
            let n = first.len();
            for (name, col) in names.iter().zip(&columns) {
                if col.len() != n {
                    return Err(Error::schema(format!(
                        "column `{name}` has {} rows, expected {n}",
                        col.len()
                    )));
                }
                if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                    return Err(Error::domain(format!(
                        "non-finite value in column `{name}` at row {row}"
                    )));
                }
            }
        }
        Ok(Self {
            names,
            columns,
            lookup,
        })
    }

    /// Builds a table with generated names `x0, x1, ...`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        Self::new(names, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|j| self.columns[j].as_slice())
    }

    pub fn column_at(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0 || self.n_cols() == 0
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<Vec<f64>>) {
        (self.names, self.columns)
    }

    /// Replaces column `j`. Lengths and finiteness are the caller's concern;
    /// used by transforms that preserve both.
    pub(crate) fn set_column(&mut self, j: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns[j].len());
        self.columns[j] = values;
    }

    pub(crate) fn require_rows(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyTable)
        } else {
            Ok(())
        }
    }
}

/// Per-column affine map `y = (x - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::validation("normalizer.mean", "must be finite"));
        }
        if !(std.is_finite() && std > 0.0) {
            return Err(Error::validation(
                "normalizer.std",
                "must be finite and > 0",
            ));
        }
        Ok(Self { mean, std })
    }

    /// Population mean and std of `col`; `None` for (near-)constant columns.
    pub fn fit(col: &[f64]) -> Option<Self> {
        let (mean, std) = mean_std(col)?;
        (std >= MIN_NORMALIZER_STD).then_some(Self { mean, std })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        y * self.std + self.mean
    }
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(col: &[f64]) -> Option<(f64, f64)> {
    if col.is_empty() {
        return None;
    }
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[inline]
pub(crate) fn to_working_units(x: f64, normalizer: Option<&Normalizer>) -> f64 {
    match normalizer {
        Some(nz) => nz.apply(x),
        None => x,
    }
}

/// Key material for one column.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyColumn {
    pub name: String,
    pub green: GreenList,
    pub normalizer: Option<Normalizer>,
}

impl KeyColumn {
    pub fn m(&self) -> usize {
        self.green.m()
    }

    /// Whether `x` (in raw units) lands green under this entry.
    #[inline]
    pub fn is_green(&self, x: f64) -> bool {
        self.green
            .in_green(split(to_working_units(x, self.normalizer.as_ref())).frac)
    }
}

/// Secret watermark key: one green list (and optional normalizer) per
/// watermarked column.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkKey {
    pub version: u32,
    pub columns: Vec<KeyColumn>,
    pub alpha_default: f64,
}

/// Requested column and its number of interval pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnPlan {
    pub name: String,
    pub m: usize,
}

impl WatermarkKey {
    pub fn new(columns: Vec<KeyColumn>, alpha_default: f64) -> Result<Self> {
        let key = Self {
            version: KEY_VERSION,
            columns,
            alpha_default,
        };
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != KEY_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.version,
                supported: KEY_VERSION,
            });
        }
        if !(self.alpha_default > 0.0 && self.alpha_default < 1.0) {
            return Err(Error::validation("alpha_default", "must lie in (0, 1)"));
        }
        let mut seen = HashSet::new();
        for (i, col) in self.columns.iter().enumerate() {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::validation(
                    format!("columns[{i}].name"),
                    format!("duplicate column `{}`", col.name),
                ));
            }
            if let Some(nz) = &col.normalizer {
                if !(nz.std.is_finite() && nz.std > 0.0) || !nz.mean.is_finite() {
                    return Err(Error::validation(
                        format!("columns[{i}].normalizer"),
                        "std must be finite and > 0, mean finite",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draws a fresh key for the planned columns of `table`.
    ///
    /// Green lists come from substream `i` of `seed` for the `i`-th plan
    /// entry. With `normalize`, each column's population mean/std is stored.
    pub fn generate(
        table: &NumericTable,
        plan: &[ColumnPlan],
        seed: u64,
        normalize: bool,
    ) -> Result<Self> {
        let mut columns = Vec::with_capacity(plan.len());
        for (i, entry) in plan.iter().enumerate() {
            let values = table
                .column(&entry.name)
                .ok_or_else(|| Error::schema(format!("unknown column `{}`", entry.name)))?;
            let green = GreenList::from_rng(entry.m, &mut rng::substream(seed, i as u64))?;
            let normalizer = if normalize {
                Normalizer::fit(values)
            } else {
                None
            };
            columns.push(KeyColumn {
                name: entry.name.clone(),
                green,
                normalizer,
            });
        }
        Self::new(columns, DEFAULT_ALPHA)
    }

    /// Key restricted to the named columns, in key order.
    pub fn subset(&self, names: &[&str]) -> Self {
        Self {
            version: self.version,
            columns: self
                .columns
                .iter()
                .filter(|c| names.contains(&c.name.as_str()))
                .cloned()
                .collect(),
            alpha_default: self.alpha_default,
        }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Table columns that have no entry in this key, in table order.
    pub fn unkeyed_columns<'a>(&self, table: &'a NumericTable) -> Vec<&'a str> {
        let keyed: HashSet<&str> = self.column_names().collect();
        table
            .names()
            .iter()
            .map(String::as_str)
            .filter(|name| !keyed.contains(name))
            .collect()
    }

    /// Table index of every key column; errors name all missing columns.
    pub fn resolve(&self, table: &NumericTable) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let indices: Vec<usize> = self
            .columns
            .iter()
            .filter_map(|c| {
                let j = table.column_index(&c.name);
                if j.is_none() {
                    missing.push(c.name.as_str());
                }
                j
            })
            .collect();
        if missing.is_empty() {
            Ok(indices)
        } else {
            Err(Error::schema(format!(
                "key columns missing from table: {}",
                missing.join(", ")
            )))
        }
    }
}

/// Embeds one value in raw units.
pub fn embed_value<R: Rng + ?Sized>(x: f64, green: &GreenList, rng: &mut R) -> Result<f64> {
    embed_in_units(x, green, None, rng)
}

fn embed_in_units<R: Rng + ?Sized>(
    x: f64,
    green: &GreenList,
    normalizer: Option<&Normalizer>,
    rng: &mut R,
) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite value {x}")));
    }
    let y = to_working_units(x, normalizer);
    if !y.is_finite() {
        return Err(Error::domain(format!(
            "value {x} overflows after normalization"
        )));
    }
    let s = split(y);
    if green.in_green(s.frac) {
        return Ok(x);
    }
    let target = green.nearest_green(s.frac);
    let bound = 1.0 / green.m() as f64;

    // Rounding in `whole + r` or the inverse normalization can push a sample
    // across an interval edge; reject those and redraw.
    let accept = |r: f64| -> Option<f64> {
        let out = match normalizer {
            Some(nz) => nz.invert(s.whole + r),
            None => s.whole + r,
        };
        if !out.is_finite() {
            return None;
        }
        let back = to_working_units(out, normalizer);
        (green.in_green(split(back).frac) && (back - y).abs() <= bound).then_some(out)
    };

    for _ in 0..MAX_EMBED_ATTEMPTS {
        let u: f64 = rng.random();
        let r = target.lo + u * target.width();
        if r >= target.hi {
            continue;
        }
        if let Some(out) = accept(r) {
            return Ok(out);
        }
    }
    accept(target.center()).ok_or_else(|| {
        Error::domain(format!(
            "value {x} is too large in magnitude to carry a watermark at m = {}",
            green.m()
        ))
    })
}

/// Embeds a column under one key entry, normalizing first when the entry
/// carries a normalizer.
pub fn embed_column<R: Rng + ?Sized>(
    col: &[f64],
    entry: &KeyColumn,
    rng: &mut R,
) -> Result<Vec<f64>> {
    col.iter()
        .enumerate()
        .map(|(row, &x)| {
            embed_in_units(x, &entry.green, entry.normalizer.as_ref(), rng).map_err(|e| match e {
                Error::Domain(msg) => {
                    Error::Domain(format!("column `{}`, row {row}: {msg}", entry.name))
                }
                other => other,
            })
        })
        .collect()
}

/// Embeds every key column of `table`; other columns pass through.
///
/// Column `j` of the table draws from substream `j` of `seed`, so the output
/// does not depend on how columns are scheduled across threads.
pub fn embed_table(table: &NumericTable, key: &WatermarkKey, seed: u64) -> Result<NumericTable> {
    key.validate()?;
    if key.columns.is_empty() {
        return Ok(table.clone());
    }
    table.require_rows()?;
    let indices = key.resolve(table)?;
    let embedded: Vec<(usize, Vec<f64>)> = key
        .columns
        .par_iter()
        .zip(indices.par_iter())
        .map(|(entry, &j)| {
            let mut rng = rng::substream(seed, j as u64);
            embed_column(table.column_at(j), entry, &mut rng).map(|col| (j, col))
        })
        .collect::<Result<_>>()?;
    let mut out = table.clone();
    for (j, col) in embedded {
        out.set_column(j, col);
    }
    Ok(out)
}
