use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

/// A report with a stable tabular form.
pub trait Report: Serialize + DeserializeOwned {
    const KIND: &'static str;
    fn header() -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

/// Provenance stamped into every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<R> {
    version: u32,
    kind: String,
    seed: u64,
    config_hash: String,
    report: R,
}

/// `<kind>_seed<seed>_<hash>.<ext>`.
pub fn report_file_name(kind: &str, meta: &ReportMeta, format: ReportFormat) -> String {
    format!("{kind}_seed{}_{}.{}", meta.seed, meta.config_hash, format.extension())
}

pub fn emit_report<R: Report>(report: &R, meta: &ReportMeta, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(R::header())?;
            for row in report.rows() {
                w.write_record(row)?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ReportFormat::Json => {
            let env = Envelope {
                version: REPORT_VERSION,
                kind: R::KIND.to_string(),
                seed: meta.seed,
                config_hash: meta.config_hash.clone(),
                report,
            };
            let text = serde_json::to_string_pretty(&env)?;
            std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_json_report<R: Report>(path: impl AsRef<Path>) -> Result<(ReportMeta, R)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<R> = serde_json::from_str(&text)?;
    if env.version != REPORT_VERSION || env.kind != R::KIND {
        return Err(Error::format(
            "report",
            format!("expected {} v{REPORT_VERSION}, found {} v{}", R::KIND, env.kind, env.version),
        ));
    }
    Ok((
        ReportMeta {
            seed: env.seed,
            config_hash: env.config_hash,
        },
        env.report,
    ))
}
