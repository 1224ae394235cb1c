//! Optimization, threshold calibration, evaluation and the fold protocol.

mod adam;
mod cv;
mod eval;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cv::{cross_validate, CvConfig, CvReport, RunResult, DEFAULT_RUN_SEEDS};
pub use eval::{
    calibrate_from_probs, calibrate_threshold, evaluate, evaluate_probs, predict_final,
    threshold_grid, Calibration,
};
pub use train::{
    loss_and_grads, train, StepLosses, StepRecord, TrainConfig, TrainLog, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS, TRAIN_LOG_HEADER,
};
