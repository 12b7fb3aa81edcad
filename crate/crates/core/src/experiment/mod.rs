//! Training, cross-validation, checkpoints and the prepared-data cache.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod container;
pub mod louo;
pub mod preprocess;
pub mod train;

pub use cache::{load_prepared, prepare, PrepareOutcome, PreparedDataset};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint};
pub use config::{GestureSource, TrainConfig};
pub use louo::{
    evaluate_models, fingerprint, label_map, measure_latency, run_fold, run_louo, sweep_loss_weights, train_models,
    training_set, FoldOutcome, NoHooks, TrainHooks, TrainedModels,
};
pub use preprocess::Preprocessor;
pub use train::{Control, Decoding, EpochReport, PredSample, RecSample, Stage};
