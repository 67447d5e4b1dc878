//! Offline analysis of an exported corpus.
//!
//! An entry is one snapshot row. Ads are exploded into one row each,
//! attributed to a host, labelled through the taxonomy and aggregated per
//! study group, query term, hour, day and donor.

mod ads;
mod metrics;
mod report;
pub mod stats;

use thiserror::Error;

pub use ads::{
    apply_host_labels, explode_ads, host_frequency_stats, parse_taxonomy, AdRow, HostSource,
    HostStats, LabeledAd,
};
pub use metrics::{
    day_histogram, donor_contribution_stats, group_metrics, hour_of_day_histogram,
    keyword_breakdown, temporal_histogram, DonorStats, Fraction, GroupMetrics, KeywordRow,
    TimeBucket,
};
pub use report::{
    analyze, emit_report, kw_samples, AnalysisOptions, HostRow, KwOutcome, KwUnit, KwVariable,
    Report,
};
pub use stats::{kruskal_wallis, KwError, KwResult, Summary};

use crate::corpus::CorpusError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("taxonomy lists host {0:?} more than once")]
    DuplicateTaxonomyHost(String),
    #[error("taxonomy line {line}: {message}")]
    Taxonomy { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("writing report: {0}")]
    WriteFailure(String),
}

impl AnalysisError {
    fn write(e: impl std::fmt::Display) -> Self {
        AnalysisError::WriteFailure(e.to_string())
    }
}

#[cfg(test)]
mod tests;
