use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;

/// One level of a representation-error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprErrorRow {
    pub model: String,
    #[serde(rename = "N")]
    pub level: usize,
    pub mae_v: f64,
    pub sd_v: f64,
    #[serde(rename = "mae_I")]
    pub mae_i: f64,
    #[serde(rename = "sd_I")]
    pub sd_i: f64,
    pub representation: String,
    pub sig_mode: String,
    pub paths: usize,
    pub seed: u64,
    pub maturity: f64,
    pub steps: usize,
}

/// A price error or a held-out MAE. For prices `value` is the estimate,
/// `reference` the benchmark and `error = |value - reference|`; for MAE rows
/// `value = error = ℰ` and `reference` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub model: String,
    pub method: String,
    pub representation: String,
    #[serde(rename = "N")]
    pub level: usize,
    pub moneyness: String,
    pub spot: Option<f64>,
    pub value: f64,
    pub stderr: f64,
    pub reference: Option<f64>,
    pub reference_stderr: Option<f64>,
    pub error: f64,
    pub paths: usize,
    pub seed: u64,
    pub maturity: f64,
    pub steps: usize,
}

/// `itm` / `atm` / `otm` for a put struck at `strike`.
pub fn moneyness(spot: f64, strike: f64) -> &'static str {
    if spot < strike {
        "itm"
    } else if spot > strike {
        "otm"
    } else {
        "atm"
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    version: String,
    seed: u64,
    rows: usize,
    runtime_secs: f64,
    configs: &'a [ExperimentConfig],
}

pub fn version_string() -> String {
    format!("sigvol {}", env!("CARGO_PKG_VERSION"))
}

/// Writes `dir/name.csv` and the metadata sidecar `dir/name.meta.json`.
/// Timing goes only into the sidecar so the CSV depends on inputs alone.
pub fn write_results<T: Serialize>(
    rows: &[T],
    dir: &Path,
    name: &str,
    configs: &[ExperimentConfig],
    runtime_secs: f64,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(&csv_path)?));
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    let sidecar = Sidecar {
        version: version_string(),
        seed: configs.first().map_or(0, |c| c.seed),
        rows: rows.len(),
        runtime_secs,
        configs,
    };
    fs::write(dir.join(format!("{name}.meta.json")), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(csv_path)
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}
