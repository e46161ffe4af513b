//! Experiment driver: configuration, the training loop, sweeps and exports.

pub mod config;
pub mod heatmap;
pub mod metrics;
pub mod sweep;
pub mod trainer;

pub use config::{GuidanceConfig, GuidanceSource, LrSchedule, RewardPool, SampleFrom, ScheduleName, TrainerConfig, WarmStart};
pub use heatmap::{pooled_heatmap, reward_matrix, write_matrix_csv};
pub use metrics::{emit_metrics, read_metrics, write_metrics, StepMetrics};
pub use sweep::{curriculum_ablate, run_all, schedule_compare, sweep_grid, Ablation, Table};
pub use trainer::{
    base_policy, evaluate, final_window_reward, held_out_set, train, train_with, training_set, EvalReport, RunResult,
    StepRecord, TierAccuracy, EVAL_STREAM, FILTER_STREAM, ORDER_STREAM, ROLLOUT_STREAM, WARM_STREAM,
};
