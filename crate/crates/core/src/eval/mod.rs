//! Patient-level metrics, fold aggregation, Friedman ranking and Nemenyi
//! critical-distance diagrams.

mod diagram;
mod metrics;
mod ranking;

pub use diagram::{cd_diagram, cd_groups, CdDiagramData};
pub use metrics::{
    aggregate_folds, image_accuracy, mean_sd, patient_level_accuracy,
    patient_sensitivity_specificity, sensitivity_specificity, Confusion, FoldMetrics,
    MetricSummary, MetricsReport, PatientAccuracy, PredictionRecord, Rates,
};
pub use ranking::{
    friedman_ranks, midranks_descending, nemenyi_cd, nemenyi_q, Alpha, RankMatrix, MAX_MODELS,
};
