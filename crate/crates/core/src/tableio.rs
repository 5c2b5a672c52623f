//! CSV tables, key files and JSON documents.
//!
//! Numeric cells are written with the shortest decimal text that parses back
//! to the same `f64`, so a write/read cycle never disturbs the fractional
//! digits that carry the watermark. Columns with any non-numeric cell are
//! carried through verbatim and are never watermarked.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::binning::GreenList;
use crate::embedding::{KeyColumn, Normalizer, NumericTable, WatermarkKey, KEY_VERSION};
use crate::error::{Error, Result};

/// A non-numeric column and its position among all CSV columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassthroughColumn {
    pub name: String,
    pub position: usize,
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub numeric: NumericTable,
    pub passthrough: Vec<PassthroughColumn>,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    if err.is_io_error() {
        if let csv::ErrorKind::Io(source) = err.into_kind() {
            return io_error(path, source);
        }
        unreachable!("is_io_error implies an Io kind");
    }
    Error::Csv(err)
}

/// Shortest decimal text that parses back to exactly `x`. Very large and very
/// small magnitudes use exponent notation.
pub fn format_value(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn read_table(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_table_from(BufReader::new(file)).map_err(|e| match e {
        Error::Csv(err) => csv_error(path, err),
        other => other,
    })
}

pub fn read_table_from<R: Read>(reader: R) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let width = header.len();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); width];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != width {
            let row = record.position().map_or(i + 2, |p| p.line() as usize);
            return Err(Error::Parse {
                row,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.to_owned());
        }
    }

    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut passthrough = Vec::new();
    for (position, (name, raw)) in header.into_iter().zip(cells).enumerate() {
        let parsed: Option<Vec<f64>> = raw.iter().map(|c| c.trim().parse::<f64>().ok()).collect();
        match parsed {
            Some(values) => {
                if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::domain(format!(
                        "non-finite value `{}` at data row {}, column `{name}`",
                        raw[row],
                        row + 1
                    )));
                }
                names.push(name);
                columns.push(values);
            }
            None => passthrough.push(PassthroughColumn {
                name,
                position,
                cells: raw,
            }),
        }
    }
    Ok(CsvTable {
        numeric: NumericTable::new(names, columns)?,
        passthrough,
    })
}

pub fn write_table(
    table: &NumericTable,
    passthrough: &[PassthroughColumn],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    write_table_to(table, passthrough, &mut out).map_err(|e| match e {
        Error::Csv(err) => csv_error(path, err),
        other => other,
    })?;
    out.flush().map_err(|e| io_error(path, e))
}

enum Slot<'a> {
    Numeric(&'a [f64]),
    Text(&'a [String]),
}

pub fn write_table_to<W: Write>(
    table: &NumericTable,
    passthrough: &[PassthroughColumn],
    writer: W,
) -> Result<()> {
    let width = table.n_cols() + passthrough.len();
    let n = if table.n_cols() > 0 {
        table.n_rows()
    } else {
        passthrough.first().map_or(0, |c| c.cells.len())
    };
    let mut slots: Vec<Option<(&str, Slot)>> = (0..width).map(|_| None).collect();
    for col in passthrough {
        if col.cells.len() != n {
            return Err(Error::schema(format!(
                "passthrough column `{}` has {} rows, table has {n}",
                col.name,
                col.cells.len()
            )));
        }
        match slots.get_mut(col.position) {
            Some(slot @ None) => *slot = Some((col.name.as_str(), Slot::Text(&col.cells))),
            _ => {
                return Err(Error::schema(format!(
                    "passthrough column `{}` has invalid position {}",
                    col.name, col.position
                )))
            }
        }
    }
    let mut numeric = table.names().iter().zip(table.columns());
    for slot in slots.iter_mut().filter(|s| s.is_none()) {
        let (name, values) = numeric.next().expect("slot count matches column count");
        *slot = Some((name.as_str(), Slot::Numeric(values)));
    }
    let slots: Vec<(&str, Slot)> = slots.into_iter().flatten().collect();

    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(slots.iter().map(|(name, _)| *name))?;
    let mut row = Vec::with_capacity(width);
    for i in 0..n {
        row.clear();
        for (_, slot) in &slots {
            row.push(match slot {
                Slot::Numeric(v) => format_value(v[i]),
                Slot::Text(v) => v[i].clone(),
            });
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Packs bits little-endian within bytes: bit `k` is bit `k % 8` of byte `k / 8`.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b {
            bytes[k / 8] |= 1 << (k % 8);
        }
    }
    bytes
}

/// Inverse of [`pack_bits`]; `None` on a length mismatch or set padding bits.
pub fn unpack_bits(bytes: &[u8], m: usize) -> Option<Vec<bool>> {
    if bytes.len() != m.div_ceil(8) {
        return None;
    }
    let bits: Vec<bool> = (0..m).map(|k| bytes[k / 8] >> (k % 8) & 1 == 1).collect();
    (pack_bits(&bits) == bytes).then_some(bits)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizerDocument {
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyColumnDocument {
    name: String,
    m: usize,
    bits: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalizer: Option<NormalizerDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyDocument {
    version: u32,
    alpha_default: f64,
    columns: Vec<KeyColumnDocument>,
}

pub fn key_to_json(key: &WatermarkKey) -> Result<String> {
    key.validate()?;
    let doc = KeyDocument {
        version: key.version,
        alpha_default: key.alpha_default,
        columns: key
            .columns
            .iter()
            .map(|c| KeyColumnDocument {
                name: c.name.clone(),
                m: c.m(),
                bits: BASE64.encode(pack_bits(c.green.bits())),
                normalizer: c.normalizer.map(|nz| NormalizerDocument {
                    mean: nz.mean,
                    std: nz.std,
                }),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn key_from_json(text: &str) -> Result<WatermarkKey> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .ok_or_else(|| Error::validation("version", "missing"))?
        .as_u64()
        .ok_or_else(|| Error::validation("version", "must be a non-negative integer"))?;
    if version != u64::from(KEY_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: KEY_VERSION,
        });
    }
    let doc: KeyDocument = serde_json::from_value(value)?;
    let mut columns = Vec::with_capacity(doc.columns.len());
    for (i, c) in doc.columns.into_iter().enumerate() {
        let field = |f: &str| format!("columns[{i}].{f}");
        if c.m == 0 {
            return Err(Error::validation(field("m"), "must be >= 1"));
        }
        let bytes = BASE64
            .decode(c.bits.as_bytes())
            .map_err(|e| Error::validation(field("bits"), format!("bad base64: {e}")))?;
        let bits = unpack_bits(&bytes, c.m).ok_or_else(|| {
            Error::validation(
                field("bits"),
                format!(
                    "expected {} packed bytes for m = {} with zero padding, got {}",
                    c.m.div_ceil(8),
                    c.m,
                    bytes.len()
                ),
            )
        })?;
        let normalizer = match c.normalizer {
            Some(nz) => {
                if !nz.mean.is_finite() {
                    return Err(Error::validation(
                        field("normalizer.mean"),
                        "must be finite",
                    ));
                }
                if !(nz.std.is_finite() && nz.std > 0.0) {
                    return Err(Error::validation(
                        field("normalizer.std"),
                        "must be finite and > 0",
                    ));
                }
                Some(Normalizer {
                    mean: nz.mean,
                    std: nz.std,
                })
            }
            None => None,
        };
        columns.push(KeyColumn {
            name: c.name,
            green: GreenList::from_bits(c.m, bits)?,
            normalizer,
        });
    }
    let key = WatermarkKey {
        version: doc.version,
        columns,
        alpha_default: doc.alpha_default,
    };
    key.validate()?;
    Ok(key)
}

pub fn write_key(key: &WatermarkKey, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, key_to_json(key)?).map_err(|e| io_error(path, e))
}

pub fn read_key(path: impl AsRef<Path>) -> Result<WatermarkKey> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    key_from_json(&text)
}

/// Pretty JSON for any report, selection or config document.
pub fn to_document_string<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn from_document_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_document<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_document_string(value)?).map_err(|e| io_error(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    from_document_str(&text)
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub command: String,
    pub tool_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl RunMetadata {
    pub fn new(command: impl Into<String>, threads: usize) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seeds: BTreeMap::new(),
            threads,
            parameters: BTreeMap::new(),
        }
    }
}

/// Names appearing more than once, in first-seen order.
pub fn duplicate_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for name in names {
        if !seen.insert(name) && !dups.contains(&name) {
            dups.push(name);
        }
    }
    dups
}
