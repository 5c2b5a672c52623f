//! Green-list interval watermarking for numeric tables.
//!
//! The fractional part of every watermarked value is forced into one member
//! of each of `m` interval pairs on `[0, 1)`. Unmarked data with a continuous
//! density lands green about half the time, so a marked table shows up as a
//! large excess of green values in a binomial or chi-square test.

pub mod binning;
pub mod detection;
pub mod embedding;
pub mod error;
pub mod fidelity;
pub mod harness;
pub mod rng;
pub mod robustness;
pub mod smoothness;
pub mod tableio;

pub use binning::{fractional_part, GreenList, Interval};
pub use detection::{detect, detect_with, Decision, DetectOptions, DetectionMode, DetectionReport};
pub use embedding::{embed_table, ColumnPlan, KeyColumn, Normalizer, NumericTable, WatermarkKey};
pub use error::{Error, Result};
pub use robustness::{AttackSpec, RobustnessBound};
pub use smoothness::{select_columns, ColumnSelection, SmoothnessConfig};
pub use tableio::{read_key, read_table, write_key, write_table, CsvTable};
