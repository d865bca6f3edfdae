//! Learned sensor fusion: conv encoders per sensor, cross-attention
//! gating, LSTM temporal stack, FC head, and the training/inference
//! pipelines around them.

pub mod features;
pub mod model;
pub mod train;

pub use features::{build_windows, extract_features, extract_raw_rf, FeatureSet, Window};
pub use model::{
    forward_window, init_params, insert_params, Ablation, ForwardOut, FusionConfig, FusionModel,
};
pub use train::{
    attention_report, attention_report_csv, feature_means, log_to_csv, predict_trace,
    split_windows, train_fusion, train_loop, FusionTraining, LogRow, TrainConfig,
};
