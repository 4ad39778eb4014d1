//! CLI and HTTP service.

pub mod cli;
pub mod service;

use std::path::Path;

use riskbn_core::discretize::BinningConfig;
use riskbn_core::infer::{Evidence, EvidenceValue, InferError};
use riskbn_core::product::{ProductError, ProductModel, ScenarioConfig};
use riskbn_core::rapex::RapexError;
use riskbn_core::report::{AssessmentReport, RapexComparison};
use riskbn_core::scenarios;
use thiserror::Error;

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Rapex(#[from] RapexError),
}

impl AppError {
    /// Bad input rather than a failure of inference itself.
    pub fn is_validation(&self) -> bool {
        match self {
            AppError::Product(ProductError::Infer(e)) => is_input_error(e),
            AppError::Product(ProductError::Graph(_)) => false,
            _ => true,
        }
    }
}

pub(crate) fn is_input_error(e: &InferError) -> bool {
    matches!(
        e,
        InferError::UnknownNode(_) | InferError::InvalidEvidence { .. } | InferError::Validation(_)
    )
}

/// Reads a scenario from a file, falling back to a bundled scenario name
/// such as `kettle_s1`.
pub fn load_scenario(spec: &str) -> Result<ScenarioConfig, AppError> {
    let path = Path::new(spec);
    if path.exists() {
        let text = read(path)?;
        return Ok(ScenarioConfig::from_json(&text)?);
    }
    match scenarios::load(spec) {
        Some(c) => Ok(c?),
        None => Err(AppError::FileNotFound(spec.to_string())),
    }
}

pub(crate) fn read(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            AppError::FileNotFound(path.display().to_string())
        } else {
            AppError::Io { path: path.display().to_string(), source }
        }
    })
}

/// Changes to apply to a set of evidence; `None` removes the node.
pub type EvidenceUpdate = std::collections::BTreeMap<String, Option<EvidenceValue>>;

pub fn apply_update(evidence: &Evidence, update: &EvidenceUpdate) -> Evidence {
    let mut out = evidence.clone();
    for (node, value) in update {
        match value {
            Some(v) => out.set(node, v.clone()),
            None => {
                out.remove(node);
            }
        }
    }
    out
}

pub fn binning(bins: usize) -> BinningConfig {
    BinningConfig::with_bins(bins)
}

/// The report both the CLI and the service emit.
pub fn build_report(
    model: &ProductModel,
    evidence: &Evidence,
    seed: u64,
    rapex_severity: Option<i64>,
) -> Result<AssessmentReport, AppError> {
    let mut report = model.report(evidence, seed)?;
    if let Some(severity) = rapex_severity {
        report.rapex = Some(RapexComparison::new(&report, severity)?);
    }
    Ok(report)
}
