//! Evolutionary outer loop: Pareto archive and hypervolume, performance-buffer
//! population update, prospective increment models, time-varying evaluation
//! and greedy task selection.

mod archive;
mod increment;
mod run;
mod select;
mod tpu;

pub use archive::{dominates, hypervolume2, non_dominated_indices, ArchiveEntry, ParetoArchive};
pub use increment::{IncrementConfig, IncrementModel, Residual};
pub use run::{
    emoppo_tml, simplex_weights, write_archive_csv, write_generation_csv, write_training_csv, AlgoConfig,
    ArchivedPolicy, GenerationMetrics, RunReport, ARCHIVE_COLUMNS, EVAL_SEEDS_TENSOR, GENERATION_COLUMNS,
};
pub use select::{
    archive_metrics, candidate_weights, diversity, pits, pits_with_weights, tppe, PitsCandidate, Selection,
    TppeConfig, TppeMode, TppeScore,
};
pub use tpu::{buffer_index, tpu};

use thiserror::Error;

use crate::nn::NnError;
use crate::ppo::{PpoError, Vector};

#[derive(Debug, Error)]
pub enum EmoError {
    #[error("point {point:?} does not dominate the reference {reference:?}")]
    BadReference { point: Vector, reference: Vector },
    #[error("archive is empty")]
    EmptyArchive,
    #[error("task population is empty")]
    EmptyPopulation,
    #[error("generation {generation} failed: {source}")]
    GenerationFailed {
        generation: usize,
        #[source]
        source: Box<EmoError>,
        /// State reached before the failure.
        partial: Box<RunReport>,
    },
    #[error("invalid algorithm config: {0}")]
    Config(String),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
