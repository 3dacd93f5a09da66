use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::calibration::model_preset;
use crate::chain::UnitParams;
use crate::dut::{BodModel, FaultResponseModel};
use crate::scenarios::{builtin, ScenarioSpec};
use crate::search::{Combo, SearchSpace};
use crate::timing::{ClockDomains, Ticks};

/// Fault-response model given by preset name or spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Explicit(FaultResponseModel),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Preset("default".into())
    }
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<FaultResponseModel, CampaignError> {
        let model = match self {
            ModelSpec::Preset(name) => model_preset(name)?,
            ModelSpec::Explicit(m) => m.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

fn d_one_usize() -> usize {
    1
}
fn d_trials_per_combo() -> u64 {
    10
}
fn d_sweep_passes() -> u32 {
    10
}
fn d_budget() -> u64 {
    10_000_000
}
fn d_true() -> bool {
    true
}
fn d_n_rank() -> u64 {
    1_000
}
fn d_n_final() -> u64 {
    100_000
}

/// Budgets and shape of the parameter search. Tick values left out are
/// derived from the scenario and the clock domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Single-fault grid used by sweep and exhaustive search. Defaults to
    /// every tick from the trigger to the end of the program, width K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
    /// Fuzzyfication radius Ψ in ticks. Defaults to two DUT cycles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Ticks>,
    /// Step between integrated offsets. Defaults to Ψ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrate_stride: Option<Ticks>,
    #[serde(default = "d_one_usize")]
    pub widths_per_target: usize,
    #[serde(default = "d_trials_per_combo")]
    pub trials_per_combo: u64,
    #[serde(default = "d_sweep_passes")]
    pub sweep_passes: u32,
    #[serde(default = "d_budget")]
    pub exhaustive_budget: u64,
    /// Number of faults of the exhaustive baseline. Defaults to the number
    /// of targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustive_faults: Option<usize>,
    #[serde(default = "d_true")]
    pub stop_on_first_success: bool,
    #[serde(default = "d_n_rank")]
    pub n_rank: u64,
    #[serde(default = "d_n_final")]
    pub n_final: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn d_wn_trials() -> u64 {
    100_000
}

/// Single wide fault against two narrow ones on a two-target scenario.
/// Combos are relative `[offset, width]` pairs; defaults are derived from
/// the first target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WideNarrowConfig {
    #[serde(default = "d_wn_trials")]
    pub trials: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wide: Option<Vec<[Ticks; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrow: Option<Vec<[Ticks; 2]>>,
}

impl Default for WideNarrowConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn d_max_delay() -> u32 {
    9
}
fn d_cm_trials() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountermeasureConfig {
    #[serde(default = "d_max_delay")]
    pub max_delay_cycles: u32,
    #[serde(default = "d_cm_trials")]
    pub trials: u64,
    /// Relative combo under test; defaults to the one covering every
    /// target at its nominal cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combo: Option<Vec<[Ticks; 2]>>,
}

impl Default for CountermeasureConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn d_wide_ns() -> f64 {
    400.0
}
fn d_split_ns() -> Vec<f64> {
    vec![170.0, 140.0]
}
fn d_gaps_ns() -> Vec<f64> {
    vec![100.0]
}
fn d_periods_ns() -> Vec<f64> {
    vec![400.0]
}

/// Wide fault and its split counterpart against a sampling BOD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodEvalConfig {
    #[serde(default = "d_wide_ns")]
    pub wide_ns: f64,
    #[serde(default = "d_split_ns")]
    pub split_ns: Vec<f64>,
    #[serde(default = "d_gaps_ns")]
    pub gaps_ns: Vec<f64>,
    /// Sample periods to evaluate; every phase of each is swept.
    #[serde(default = "d_periods_ns")]
    pub periods_ns: Vec<f64>,
    /// Start of the fault after the trigger, in ticks. Defaults to the
    /// first target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Ticks>,
}

impl Default for BodEvalConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Everything needed to reproduce a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Builtin scenario name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Scenario file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<PathBuf>,
    #[serde(default)]
    pub domains: ClockDomains,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub bod: BodModel,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_one_usize")]
    pub jobs: usize,
    /// Cooperative scenario to search on when `scenario` itself is not
    /// cooperative. Builtin name, or a path ending in `.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wide_vs_narrow: Option<WideNarrowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub countermeasure: Option<CountermeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bod_eval: Option<BodEvalConfig>,
    /// Directory relative paths are resolved against; set by [`load`].
    ///
    /// [`load`]: CampaignConfig::load
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl CampaignConfig {
    /// Config for a builtin scenario with every other field defaulted.
    pub fn for_scenario(name: &str) -> Self {
        let mut cfg: Self = serde_json::from_str("{}").expect("defaults deserialize");
        cfg.scenario = Some(name.to_string());
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        serde_json::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CampaignError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn scenario(&self) -> Result<ScenarioSpec, CampaignError> {
        match (&self.scenario, &self.scenario_path) {
            (Some(name), None) => Ok(builtin::by_name(name)?),
            (None, Some(p)) => Ok(ScenarioSpec::load(&self.path(p))?),
            _ => Err(CampaignError::Config(
                "exactly one of `scenario` and `scenario_path` must be set".into(),
            )),
        }
    }

    pub fn transfer_source(&self) -> Result<Option<ScenarioSpec>, CampaignError> {
        match &self.transfer_from {
            None => Ok(None),
            Some(s) if s.ends_with(".json") => Ok(Some(ScenarioSpec::load(&self.path(Path::new(s)))?)),
            Some(name) => Ok(Some(builtin::by_name(name)?)),
        }
    }

    /// Checks everything that can be checked without running trials.
    pub fn validate(&self) -> Result<(), CampaignError> {
        self.domains.validate()?;
        self.model.resolve()?;
        self.bod.validate()?;
        if self.jobs == 0 {
            return Err(CampaignError::Config("jobs must be at least 1".into()));
        }
        let s = self.scenario()?;
        self.transfer_source()?;
        self.space(&s).validate()?;
        Ok(())
    }

    pub fn oversampling(&self) -> u32 {
        self.domains.oversampling
    }

    pub fn space(&self, scenario: &ScenarioSpec) -> SearchSpace {
        self.search.space.clone().unwrap_or_else(|| {
            let k = u64::from(self.oversampling());
            let last = scenario.instructions().last().map_or(0, |i| i.cycle + 1);
            SearchSpace {
                offset_start: 0,
                offset_end: (last.saturating_sub(scenario.trigger_cycle()) * k).max(1),
                stride: 1,
                widths: vec![k],
            }
        })
    }

    pub fn psi(&self) -> Ticks {
        self.search.psi.unwrap_or(2 * u64::from(self.oversampling()))
    }

    pub fn integrate_stride(&self) -> Ticks {
        self.search.integrate_stride.unwrap_or(self.psi()).max(1)
    }
}

pub(crate) fn combo_from_pairs(pairs: &[[Ticks; 2]]) -> Combo {
    pairs.iter().map(|&[o, w]| UnitParams::new(o, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = CampaignConfig::from_json(r#"{"scenario":"tzm_full_attack"}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.jobs, 1);
        assert_eq!(cfg.domains, ClockDomains::default());
        assert_eq!(cfg.psi(), 40);
        assert_eq!(cfg.integrate_stride(), 40);
        assert_eq!(cfg.search.n_final, 100_000);
        let s = cfg.scenario().unwrap();
        let space = cfg.space(&s);
        assert_eq!(space.offset_end, (51 - 2) * 20);
        assert_eq!(space.widths, vec![20]);
    }

    #[test]
    fn explicit_and_preset_models() {
        let cfg = CampaignConfig::from_json(
            r#"{"scenario":"successive_shifts","model":{"p_max_skip":1.0,"p_lockup_per_fault":0.0}}"#,
        )
        .unwrap();
        let m = cfg.model.resolve().unwrap();
        assert_eq!(m.p_max_skip, 1.0);
        assert_eq!(m.p_effective, 1.0);
        let cfg = CampaignConfig::from_json(r#"{"scenario":"successive_shifts","model":"tzm_calibrated"}"#).unwrap();
        assert!(cfg.model.resolve().unwrap().per_target_override.len() == 5);
        let cfg = CampaignConfig::from_json(r#"{"scenario":"successive_shifts","model":"nope"}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(CampaignConfig::from_json(r#"{"scenario":"x","bogus":1}"#).is_err());
        assert!(CampaignConfig::from_json("{}").unwrap().validate().is_err());
        assert!(CampaignConfig::from_json(r#"{"scenario":"unknown"}"#).unwrap().validate().is_err());
        let both = r#"{"scenario":"bod_scenario","scenario_path":"x.json"}"#;
        assert!(CampaignConfig::from_json(both).unwrap().validate().is_err());
        let zero_jobs = r#"{"scenario":"bod_scenario","jobs":0}"#;
        assert!(CampaignConfig::from_json(zero_jobs).unwrap().validate().is_err());
        let bad_space = r#"{"scenario":"bod_scenario","search":{"space":{"offset_start":5,"offset_end":5,"widths":[1]}}}"#;
        assert!(CampaignConfig::from_json(bad_space).unwrap().validate().is_err());
    }

    #[test]
    fn scenario_path_is_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        builtin::successive_shifts().save(&dir.path().join("s.json")).unwrap();
        let cfg_path = dir.path().join("c.json");
        fs::write(&cfg_path, r#"{"scenario_path":"s.json","transfer_from":"dup_registers_coop"}"#).unwrap();
        let cfg = CampaignConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.scenario().unwrap(), builtin::successive_shifts());
        assert_eq!(cfg.transfer_source().unwrap().unwrap().name(), "dup_registers_coop");
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = CampaignConfig::for_scenario("dup_registers_33_19");
        cfg.wide_vs_narrow = Some(WideNarrowConfig::default());
        cfg.bod_eval = Some(BodEvalConfig::default());
        cfg.countermeasure = Some(CountermeasureConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(CampaignConfig::from_json(&text).unwrap(), cfg);
    }
}
