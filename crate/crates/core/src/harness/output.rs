//! Time-series CSV and the JSON run manifest.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsmc::{Record, RunOutput, StepPlan};
use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::profile::SteadyMoments;
use crate::spectral::ShearParams;

pub const CSV_HEADER: [&str; 12] = [
    "t",
    "E0",
    "d12_0",
    "d22_0",
    "U1",
    "U2",
    "U3",
    "R2",
    "R3",
    "mode_k100_mass_abs",
    "mode_k100_d12_abs",
    "ncoll",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub d12_0: f64,
    pub d22_0: f64,
    #[serde(rename = "U1")]
    pub u1: f64,
    #[serde(rename = "U2")]
    pub u2: f64,
    #[serde(rename = "U3")]
    pub u3: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "R3")]
    pub r3: f64,
    pub mode_k100_mass_abs: f64,
    pub mode_k100_d12_abs: f64,
    pub ncoll: u64,
}

impl From<&Record> for CsvRow {
    fn from(r: &Record) -> Self {
        CsvRow {
            t: r.t,
            e0: r.raw[0],
            d12_0: r.raw[1],
            d22_0: r.raw[2],
            u1: r.u[0],
            u2: r.u[1],
            u3: r.u[2],
            r2: r.r[1],
            r3: r.r[2],
            mode_k100_mass_abs: r.mode_k100_mass_abs,
            mode_k100_d12_abs: r.mode_k100_d12_abs,
            ncoll: r.ncoll,
        }
    }
}

impl CsvRow {
    pub fn u(&self) -> [f64; 3] {
        [self.u1, self.u2, self.u3]
    }

    pub fn r(&self) -> [f64; 3] {
        [0.0, self.r2, self.r3]
    }
}

pub fn write_csv<W: Write>(records: &[Record], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

/// Git-style blob hash (`"blob <len>\0" + content`) with SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_text: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub reproducible: bool,
    pub params: ShearParams,
    pub reference: SteadyMoments,
    pub plan: StepPlan,
    pub csv_path: Option<PathBuf>,
    pub csv_hash: Option<String>,
    pub rows: usize,
    pub total_collisions: u64,
}

impl RunManifest {
    pub fn new(config: &RunConfig, output: &RunOutput, reproducible: bool, csv: Option<(&Path, &[u8])>) -> Self {
        let config_text = config.to_text();
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: content_hash(config_text.as_bytes()),
            config_text,
            config: config.clone(),
            seed: config.sim.seed,
            reproducible,
            params: output.params,
            reference: output.reference,
            plan: output.plan,
            csv_path: csv.map(|(p, _)| p.to_path_buf()),
            csv_hash: csv.map(|(_, b)| content_hash(b)),
            rows: output.records.len(),
            total_collisions: output.final_state.collisions,
        }
    }
}

/// `run.csv` → `run.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Writes the CSV and its manifest; returns the manifest.
pub fn write_run(config: &RunConfig, output: &RunOutput, reproducible: bool, csv_path: &Path) -> Result<RunManifest> {
    let mut bytes = Vec::new();
    write_csv(&output.records, &mut bytes)?;
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(csv_path, &bytes)?;
    let manifest = RunManifest::new(config, output, reproducible, Some((csv_path, &bytes)));
    std::fs::write(manifest_path(csv_path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
