//! End-to-end orchestration: fusion features and MLP, per-stream
//! segmentation, evaluation and the staged experiment.

mod cache;
mod config;
mod evaluate;
mod experiment;
mod fusion;
mod predict;

pub use cache::FeatureCache;
pub use config::ExperimentConfig;
pub use evaluate::{
    evaluate, evaluate_streams, Confusion, EvaluationReport, Metrics, SegmentationResult,
};
pub use experiment::{
    fit_topics, fit_vocabulary, load_dataset, run_experiment, write_outputs, ExperimentArtifacts,
    ExperimentOutcome, ExperimentReport, RowReport, ROW_NAMES,
};
pub use fusion::{
    build_fusion_vector, fusion_len, threshold, train_fusion, FusionInputs, FusionMlp,
    FusionMlpConfig, StreamFusionFeatures, TEXT_BLOCKS,
};
pub use predict::{
    segment_stream, FixedPredictions, FusionPredictor, ImageCnnPredictor, PagePredictor,
    SvmPredictor, TextCnnPredictor,
};
