//! Training, evaluation and ablation drivers.

mod ablation;
mod config;
mod train;

pub use ablation::{ablation_sweep, presets, AblationRow, AblationRun, AblationTable, MeanStd};
pub use config::{Precision, TrainConfig};
pub use train::{
    checkpoint_hash, evaluate, evaluate_checkpoint, evaluate_with, predict_corpus, sha256_hex,
    train, train_on, EpochRecord, RunReport, TrainOutcome,
};
