//! CSV result tables.
//!
//! Floats are written in shortest round-trip form, so parsing a table back
//! yields the exact values that were aggregated.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RAW_HEADER: [&str; 9] = [
    "mode",
    "frequency_hz",
    "width",
    "seed",
    "epochs",
    "total_steps",
    "ade_m",
    "fde_m",
    "wall_time_s",
];

pub const AGGREGATE_HEADER: [&str; 7] = [
    "frequency_hz",
    "width",
    "ade_mean",
    "ade_std",
    "fde_mean",
    "fde_std",
    "f_star_flag",
];

/// One completed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub mode: String,
    pub frequency_hz: f64,
    pub width: usize,
    pub seed: u64,
    pub epochs: usize,
    pub total_steps: u64,
    pub ade_m: f64,
    pub fde_m: f64,
    pub wall_time_s: Option<f64>,
}

/// Seed statistics for one `(frequency, width)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub frequency_hz: f64,
    pub width: usize,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
    /// 1 on the best frequency of the width's response.
    pub f_star_flag: u8,
}

/// A run dropped from the tables because training diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub mode: String,
    pub frequency_hz: f64,
    pub width: usize,
    pub seed: u64,
    pub epochs: usize,
    pub failed_step: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FStarRow {
    pub width: usize,
    pub param_count: usize,
    pub f_star_hz: f64,
    pub ade_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairRow {
    pub width: usize,
    pub seed: u64,
    pub low_config: String,
    pub low_ade_m: f64,
    pub low_fde_m: f64,
    pub high_config: String,
    pub high_ade_m: f64,
    pub high_fde_m: f64,
    pub delta_ade: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub frequency_hz: f64,
    pub sample_count: usize,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub const EXCLUDED_HEADER: [&str; 7] = [
    "mode",
    "frequency_hz",
    "width",
    "seed",
    "epochs",
    "failed_step",
    "reason",
];

pub const FSTAR_HEADER: [&str; 4] = ["width", "param_count", "f_star_hz", "ade_mean"];

pub const MATCHED_PAIR_HEADER: [&str; 9] = [
    "width",
    "seed",
    "low_config",
    "low_ade_m",
    "low_fde_m",
    "high_config",
    "high_ade_m",
    "high_fde_m",
    "delta_ade",
];

pub const CENSUS_HEADER: [&str; 2] = ["frequency_hz", "sample_count"];
