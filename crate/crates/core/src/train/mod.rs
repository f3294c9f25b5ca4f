//! Alternating adversarial training: one discriminator update and one
//! segmenter update per batch, with per-epoch checkpoints.

mod checkpoint;
mod config;
mod run;
mod state;
mod steps;

pub use crate::metrics::binarize;
pub use checkpoint::{
    limbs_to_u64, load_checkpoint, save_checkpoint, u64_to_limbs, Checkpoint, NamedTensor, FORMAT_VERSION, MAGIC,
};
pub use config::TrainConfig;
pub use run::{
    epoch_checkpoint_name, flip, make_batch, train, train_epoch, train_with_progress, write_log_csv, EpochLog,
    FINAL_CHECKPOINT, KEEP_CHECKPOINTS, LOG_HEADER,
};
pub use state::{load_model, TrainState};
pub use steps::{discriminator_gradients, discriminator_step, segmenter_step, train_batch, Batch, BatchLosses};
