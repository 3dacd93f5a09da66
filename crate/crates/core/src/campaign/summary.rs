use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::CampaignConfig;
use super::CampaignError;
use crate::search::{AbsoluteParamSet, Combo, IntegrationPlan, RankedCombo, Step};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTrials {
    pub step: Step,
    pub trials: u64,
}

/// Rate of hitting the first `k` targets together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeRow {
    pub targets: Vec<String>,
    pub hits: u64,
    pub trials: u64,
    pub rate: f64,
}

pub fn cascade_rows(labels: &[String], counts: &[u64], trials: u64) -> Vec<CascadeRow> {
    counts
        .iter()
        .enumerate()
        .map(|(k, &hits)| CascadeRow {
            targets: labels[..=k].to_vec(),
            hits,
            trials,
            rate: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveSummary {
    pub n_faults: usize,
    pub budget: u64,
    pub grid_points: u64,
    pub trials_used: u64,
    pub found: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_success: Option<Combo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub exhaustive_trials: u64,
    pub exhaustive_found: bool,
    pub sweep_trials: u64,
    pub integrate_trials: u64,
    pub sweeping_trials: u64,
    pub sweeping_found: bool,
    /// Exhaustive over sweeping trials; only when both found a success.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub from: String,
    pub to: String,
    pub combo: RankedCombo,
}

/// Outcome shares of a two-target scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub faults: String,
    pub combo: Combo,
    pub trials: u64,
    pub none: f64,
    pub only_second: f64,
    pub only_first: f64,
    pub both: f64,
    pub invalid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountermeasureResult {
    pub max_delay_cycles: u32,
    pub trials: u64,
    pub combo: Combo,
    pub baseline_successes: u64,
    pub delayed_successes: u64,
    pub baseline_rate: f64,
    pub delayed_rate: f64,
    /// Baseline rate over delayed rate; absent when nothing succeeded with
    /// delays.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodPeriodRow {
    pub period_ns: f64,
    pub period_ticks: u64,
    pub phases: u64,
    pub wide_detected: u64,
    pub split_detected: u64,
    /// Phases at which the split fault went unnoticed.
    pub split_undetected_phases: Vec<u64>,
    pub wide_detection_rate: f64,
    pub split_detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodEvalResult {
    pub wide: Combo,
    pub split: Combo,
    pub periods: Vec<BodPeriodRow>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema_version: u32,
    pub command: String,
    pub scenario: String,
    pub master_seed: u64,
    pub config: CampaignConfig,
    pub steps: Vec<StepTrials>,
    pub total_trials: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<AbsoluteParamSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plans: Option<Vec<IntegrationPlan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrated: Option<Vec<RankedCombo>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<RankedCombo>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<RankedCombo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transferred: Option<TransferSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cascade: Option<Vec<CascadeRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustive: Option<ExhaustiveSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wide_vs_narrow: Option<Vec<DistributionRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub countermeasure: Option<CountermeasureResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bod: Option<BodEvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CampaignSummary {
    pub fn new(command: &str, scenario: &str, config: &CampaignConfig) -> Self {
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            command: command.to_string(),
            scenario: scenario.to_string(),
            master_seed: config.master_seed,
            config: config.clone(),
            steps: Vec::new(),
            total_trials: 0,
            sweep: None,
            plans: None,
            integrated: None,
            ranking: None,
            best: None,
            transferred: None,
            cascade: None,
            exhaustive: None,
            comparison: None,
            wide_vs_narrow: None,
            countermeasure: None,
            bod: None,
            error: None,
        }
    }

    pub fn step_trials(&self, step: Step) -> u64 {
        self.steps.iter().find(|s| s.step == step).map_or(0, |s| s.trials)
    }

    pub fn save(&self, path: &Path) -> Result<(), CampaignError> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
