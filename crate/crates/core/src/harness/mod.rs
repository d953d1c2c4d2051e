//! Configuration, output files and verification reports.

pub mod config;
pub mod identities;
pub mod output;
pub mod verify;

pub use config::RunConfig;
pub use output::{read_csv, write_csv, write_run, CsvRow, RunManifest};
pub use verify::{
    energy_growth_report, report_from_rows, verify_homogeneous, verify_inhomogeneous, ExperimentReport, Verdict,
};
