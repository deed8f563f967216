//! Training, evaluation metrics and the constant-velocity baseline.

pub mod eval;
pub mod metrics;
pub mod scheduler;
pub mod trainer;

pub use crate::config::TrainConfig;
pub use eval::{
    evaluate, label_scenes, predict_scenes, scene_rng, Aggregate, Aggregates, EvalReport, Prediction, SceneResult, Summary,
    EVAL_CSV_HEADER,
};
pub use metrics::{ade, constant_velocity_baseline, fde};
pub use scheduler::PlateauScheduler;
pub use trainer::{train, train_with_progress, LogRow, TrainOutcome, METRICS_HEADER};
