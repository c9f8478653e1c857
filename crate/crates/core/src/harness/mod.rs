//! Training, evaluation and the experiment drivers.

mod config;
mod evaluate;
mod experiments;
mod optim;
mod output;
mod train;

pub use config::{
    DataConfig, ExperimentConfig, InventoryConfig, LossConfig, OptimizerConfig, Schedule, TrainingConfig,
};
pub use evaluate::{evaluate, majority_class_rate, Evaluation};
pub use experiments::{
    run_ablations, run_layer_sweep, run_seeds, AblationReport, AblationRow, SeedRuns, SweepReport, SweepRow,
    REFERENCE_COREF_AVG_F1, REFERENCE_FULL_MODEL,
};
pub use optim::{learning_rate, Adam};
pub use output::{write_evaluation, write_json};
pub use train::{train, train_and_evaluate, Checkpoint, EpochLog, TrainOutcome, TrainState, Trainer};
