//! End-to-end experiments on top of the search.
//!
//! A campaign resolves its [`CampaignConfig`], runs trials through an
//! [`Engine`] and leaves three files in the output directory:
//! `results.jsonl` (one [`CampaignRecord`] per trial), `summary.json` and
//! `report.csv`.

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::dut::ModelError;
use crate::scenarios::ScenarioError;
use crate::search::SearchError;
use crate::timing::TimingError;

mod config;
mod engine;
mod flows;
mod report;
mod summary;

pub use config::{BodEvalConfig, CampaignConfig, CountermeasureConfig, ModelSpec, SearchConfig, WideNarrowConfig};
pub use engine::{run_trial, CampaignRecord, Engine, Sink};
pub use flows::{
    run_attack_flow, run_bod_eval, run_comparison, run_countermeasure_eval, run_exhaustive, run_sweep,
    run_wide_vs_narrow, RESULTS_FILE, SUMMARY_FILE,
};
pub use report::{read_records, write_report, REPORT_FILE};
pub use summary::{
    cascade_rows, BodEvalResult, BodPeriodRow, CampaignSummary, CascadeRow, Comparison, CountermeasureResult,
    DistributionRow, ExhaustiveSummary, StepTrials, TransferSummary, SUMMARY_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// The search itself failed; the summary written so far is attached.
    #[error("{source}")]
    Search {
        source: SearchError,
        summary: Box<CampaignSummary>,
    },
    #[error(transparent)]
    Setup(#[from] SearchError),
}

impl CampaignError {
    /// A search ran and came back empty-handed, as opposed to a bad setup.
    pub fn is_search_failure(&self) -> bool {
        matches!(
            self,
            CampaignError::Search {
                source: SearchError::NotFound { .. }
                    | SearchError::IncompleteSweep { .. }
                    | SearchError::NoIntegratedSuccess { .. },
                ..
            }
        )
    }
}
