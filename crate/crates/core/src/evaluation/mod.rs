//! Five-fold cross-validated MAE of the PC and WPC predictors.

mod experiment;
mod folds;
mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::cf::CfError;
use crate::ingest::IngestError;
use crate::model::{ItemId, ModelError};
use crate::weighting::WeightError;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentReport, Method, DEFAULT_K_VALUES,
};
pub use folds::{split_folds, split_folds_with, FoldAssignment, SplitPolicy, NUM_FOLDS};
pub use report::{emit_report, format_csv, format_table, CSV_HEADER};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("the WPC method needs movie profiles")]
    NoProfiles,
    #[error("{0} is rated but has no profile")]
    MissingProfile(ItemId),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Cf(#[from] CfError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Mean absolute error of (actual, predicted) pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = pairs.iter().map(|(r, p)| (r - p).abs()).sum();
    Ok(total / pairs.len() as f64)
}
