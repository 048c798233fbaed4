//! Loss, optimization, the training loop, evaluation and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, read_checkpoint_config, save_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::{incremental_loss, incremental_loss_graph, LossNodes, LossReport, LOG_FLOOR};
pub use optim::{lr_at_epoch, Adam, LrSchedule};
pub use trainer::{evaluate, train, EpochMetrics, Evaluation, TrainConfig, Trainer};
