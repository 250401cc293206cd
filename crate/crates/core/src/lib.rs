//! Core library for auditing human-annotated datasets: inter-rater
//! reliability, rating variability, rater-count power analysis, and
//! cross-repetition reproducibility, summarized in a banded scorecard.
//!
//! The long-format CSV (`repetition_id,item_id,rater_id,value`) plus a JSON
//! value schema is the canonical input; [`report::analyze`] runs the whole
//! pipeline and returns a serializable [`report::AnalysisReport`].

pub mod agreement;
pub mod dataset;
pub mod error;
pub mod numerics;
pub mod power;
pub mod report;
pub mod reproducibility;
pub mod scorecard;
pub mod seed;
pub mod synthetic;
pub mod variability;

pub use agreement::{
    krippendorff_alpha, masi_distance, per_category_alpha, weighted_cohen_kappa,
    AgreementResult, DistanceFunction,
};
pub use dataset::{
    load_dataset, load_schema, read_dataset, write_dataset, AnnotationDataset, AnnotationValue,
    Repetition, ValueKind, ValueSchema, CSV_HEADER,
};
pub use error::{Error, Result};
pub use power::{bootstrap_alphas, optimal_raters, variance_test, PowerAnalysisResult};
pub use report::{analyze, AnalysisOptions, AnalysisReport, REPORT_SCHEMA_VERSION};
pub use reproducibility::{
    chi2_independence, normalized_xrr, spearman, xrr, PairwiseStability, StabilityMethod,
    XrrResult,
};
pub use scorecard::{classify, BandConfig, Cell, MetricKind, Scorecard};
pub use synthetic::{generate, PopulationSpec};
pub use variability::{
    item_std, iqv, iqv_band, mstd_stdd, variability_report, Band, VariabilityReport,
};
