//! Optimizer, configuration, checkpoints and the training loop.

mod adam;
mod checkpoint;
mod config;
mod trainer;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{Checkpoint, OptimizerState, FORMAT_VERSION, MAGIC};
pub use config::{valid_keys, ExtractorKind, TrainConfig, CONFIG_KEYS};
pub use trainer::{checkpoint_path, read_step_log, run, train, Batch, StepReport, TrainOutcome, Trainer, STEP_LOG};
