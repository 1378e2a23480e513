//! Plausibility and semi-factual metrics, and CSV report building.

mod metrics;
mod report;

pub use metrics::{
    correlation, im1, im2, knn_accuracy, knn_predict, mc_dropout, nn_dist, sf_l1, substitutability,
    substitutability_against, McStats, Substitutability, DENOMINATOR_GUARD,
};
pub use report::{build_report, fmt_num, mean_std, Aggregate, MetricReport, MetricRow, Table, METRICS, ROW_HEADER};
