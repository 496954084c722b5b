//! Demonstration collection, dataset construction and staged training.

pub mod archive;
pub mod collect;
pub mod dataset;
pub mod stages;

use crate::eval::episode::EpisodeError;
use crate::nn::NnError;

pub use archive::{DemoArchive, DemoEpisode, DemoRecord};
pub use collect::{collect_demos, expert_gate, record_episode, GateReport, RejectionReport};
pub use dataset::{build_dataset, Dataset, TrainSample};
pub use stages::{train_baseline, train_stage2, train_stage3, StageReport, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("corrupt archive{}: {what}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    Archive { record: Option<usize>, what: String },
    #[error("io: {0}")]
    Io(String),
    #[error("no training samples")]
    EmptyDataset,
    #[error("stage {stage}: numeric fault in epoch {epoch}: {what}")]
    NumericFault { stage: String, epoch: usize, what: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}
