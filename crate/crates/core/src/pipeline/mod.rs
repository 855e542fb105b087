//! Joint training, cross-validation, ablations and hyperparameter studies.

mod config;
mod model;
mod study;
mod train;

pub use config::{total_loss, TrainConfig};
pub use model::{Encoded, Model, Structure};
pub use study::{paf_sweep, perturbation_sweep, render_table, run_ablation, StudyRow};
pub use train::{
    construct, history_csv, kfold_evaluate, scores_csv, standardize, stratified_folds, train_fold, FoldReport,
    KFoldOutcome, LossRecord, MetricReport, Split, TrainedFold,
};
