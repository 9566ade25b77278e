//! Synthetic scenes, dataset assembly, training-set selection, grid-search
//! validation, metrics and the staged run behind the command line.

pub mod config;
pub mod cv;
pub mod dataset;
pub mod lof;
pub mod metrics;
pub mod model;
pub mod report;
pub mod run;
pub mod standardize;
pub mod synth;

pub use config::{BlobSpec, FeatureConfig, ModelConfig, PipelineConfig, SceneConfig, SelectionConfig, VelocitySource};
pub use cv::{fold_ranges, kfold_grid_search, CvReport};
pub use dataset::{build_dataset, frame_features, Dataset, FrameFeatures, Sample, WeightCounts, WeightSource};
pub use lof::{lof_scores, select_inliers};
pub use metrics::{evaluate, forecast_skill, mape, persistence_forecast, rmse, HorizonMetrics, MetricsReport};
pub use model::{
    candidate_grid, cross_validate, run_cross_validation, select_training, split_by_day, CvEntry, CvSummary,
    ExpertInfo, ExpertSource, ForecastModel, ScaledModel,
};
pub use report::{line_plot_svg, write_report, Evaluation};
pub use run::{Layout, Predictions};
pub use standardize::{StandardizationParams, Standardizer};
pub use synth::{generate_synthetic_scene, Scene};
