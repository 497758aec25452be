//! Experiment orchestration: training, random search, checkpoints, transfer
//! evaluation and pattern-count sweeps.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod search;
pub mod trainer;
pub mod transfer;

pub use checkpoint::{Checkpoint, PatternSetRecord, CHECKPOINT_FORMAT};
pub use config::{lr_schedule, sample_configs, sample_configs_in, BatchProfile, HyperConfig, SearchSpace};
pub use model::{Approach, ApproachKind, Model};
pub use search::{evaluate, fit, run_search, select_best, tune_on, RunContext, RunRecord, SearchOutcome};
pub use trainer::{accumulated_gradient, steps_per_epoch, train, TrainOutcome};
pub use transfer::{n_sweep, transfer_eval, Access, AuditedSplit, SweepCell};
