use thiserror::Error;

use crate::hierarchy_merge::HierarchyError;
use crate::matching::MatchError;
use crate::model::ModelError;

/// Failures of dimension, fact and star merging.
#[derive(Debug, Error)]
pub enum MergeError {
    #[error("dimensions `{left}` and `{right}` are unrelated: no attribute correspondence")]
    Unrelated { left: String, right: String },
    #[error("stars unmergeable: {0}")]
    Unmergeable(String),
    #[error("conflict in `{table}` at {key}, attribute `{attribute}`: `{left}` vs `{right}`")]
    Conflict { table: String, key: String, attribute: String, left: String, right: String },
    #[error("fact key columns misaligned: {0}")]
    KeyAlignment(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
