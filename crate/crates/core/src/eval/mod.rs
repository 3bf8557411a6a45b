//! Evaluation protocol: stratified folds, ROC/AUC, sensitivity at a fixed
//! PPV, Student-t intervals and paired tests, the repeated-seed experiment,
//! cross-site transfer and a logistic-regression baseline.

mod cv;
mod experiment;
mod logistic;
mod metrics;
mod stats;
mod transfer;

use thiserror::Error;

use crate::features::TableError;
use crate::forest::ForestError;

pub use cv::{complement, stratified_kfold};
pub use experiment::{
    compare, impute_column_means, run_experiment, run_experiment_observed, AccessObserver, Comparison,
    ExperimentConfig, ExperimentReport, LogisticSummary, RocPoint, Selection, SelectionMode, Stage, Summary,
};
pub use logistic::{
    fit_logistic_design, logistic_baseline, Design, LogisticModel, LogisticReport, DEFAULT_LAMBDA, GRAD_TOL,
    MAX_ITER,
};
pub use metrics::{roc_auc, roc_curve, sensitivity_at_ppv, tpr_at, OperatingPoint, PpvOutcome};
pub use stats::{format_p, mean_ci, one_tailed_paired_ttest, P_FLOOR};
pub use transfer::{transfer_experiment, transfer_markdown, TransferResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("class {class} has {count} members, fewer than {k} folds")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("score {0} is NaN")]
    InvalidScore(usize),
    #[error("train and test share no feature")]
    NoSharedFeatures,
    #[error("column {0:?} has no value to impute from")]
    AllMissingColumn(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Forest(Box<ForestError>),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl From<ForestError> for EvalError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::Eval(inner) => *inner,
            other => EvalError::Forest(Box::new(other)),
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
