//! Training orchestration: configuration, random streams, the iteration
//! loop, logging, checkpointing, resumption, and inference.

mod checkpoint;
mod config;
mod log;
mod rng;
mod run;

pub use checkpoint::{Checkpoint, ExpertSlot, CHECKPOINT_FORMAT};
pub use config::{EnvConfig, EnvKind, ModelConfig, RunConfig, TrainConfig};
pub use log::{csv_header, IterationLog, LogTable};
pub use rng::RngStreams;
pub use run::{
    infer, infer_on_contexts, resume, train, InferenceRecord, TrainOutcome, Trainer,
};
