//! Multi-fault parameter search.
//!
//! The flow is: sweep single faults with the partial success functions to
//! find where each target can be hit, translate the absolute hits into the
//! chain's relative frame, widen every relative offset by ±Ψ, search that
//! small product space with the full success function, and rank the
//! surviving combinations by repeated execution. [`exhaustive_search`] is
//! the baseline that skips all of this and walks the whole product grid.
//!
//! Trials are executed through [`TrialExecutor`], so the search code never
//! deals with seeds, threads or persistence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::UnitParams;
use crate::scenarios::{OutcomeClass, ScenarioSpec};
use crate::timing::{Ticks, TimingError};

mod exhaustive;
mod integrate;
mod rank;
mod sweep;

pub use exhaustive::{exhaustive_search, exhaustive_trial_count, ExhaustiveConfig, ExhaustiveResult};
pub use integrate::{
    accumulate, enumerate_combos, fuzzyfy, integrate, plan_integration, translate_to_relative, FuzzyInterval,
    IntegrateResult, IntegrationPlan,
};
pub use rank::{cascade_counts, evaluate_repeatability, transfer_parameters, RankedCombo, Repeatability};
pub use sweep::{sweep, AbsoluteHit, AbsoluteParamSet, SweepResult, TargetHits};

/// Relative `(offset, width)` settings of the enabled fault units, in chain
/// order.
pub type Combo = Vec<UnitParams>;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    BadSpace(String),
    #[error("no successful combination within {trials_used} trials")]
    NotFound { trials_used: u64 },
    #[error("sweep finished without hits for {missing:?} after {trials_used} trials")]
    IncompleteSweep { missing: Vec<String>, trials_used: u64 },
    #[error("integration found no successful combination in {trials_used} trials")]
    NoIntegratedSuccess { trials_used: u64 },
    #[error("scenario `{0}` is not cooperative; partial success functions are unavailable")]
    NotCooperative(String),
    #[error("absolute faults overlap or are out of order at index {index}")]
    Overlap { index: usize },
    #[error("cannot transfer parameters: {0}")]
    TransferInvalid(String),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("trial execution failed: {0}")]
    Executor(String),
}

/// Grid of single-fault parameters: offsets `offset_start..offset_end` in
/// steps of `stride`, each combined with every width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub offset_start: Ticks,
    pub offset_end: Ticks,
    #[serde(default = "one")]
    pub stride: Ticks,
    pub widths: Vec<Ticks>,
}

fn one() -> Ticks {
    1
}

impl SearchSpace {
    pub fn new(offset_start: Ticks, offset_end: Ticks, stride: Ticks, widths: Vec<Ticks>) -> Result<Self, SearchError> {
        let space = Self {
            offset_start,
            offset_end,
            stride,
            widths,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.offset_end <= self.offset_start {
            return Err(SearchError::BadSpace(format!(
                "offset range [{}, {}) is empty",
                self.offset_start, self.offset_end
            )));
        }
        if self.stride == 0 {
            return Err(SearchError::BadSpace("stride must be positive".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(SearchError::BadSpace("widths must be non-empty and positive".into()));
        }
        Ok(())
    }

    pub fn offsets(&self) -> impl Iterator<Item = Ticks> + '_ {
        (self.offset_start..self.offset_end).step_by(self.stride as usize)
    }

    pub fn offset_count(&self) -> u64 {
        (self.offset_end - self.offset_start).div_ceil(self.stride)
    }

    /// Number of single-fault grid points.
    pub fn len(&self) -> u64 {
        self.offset_count() * self.widths.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points, offset-major.
    pub fn points(&self) -> Vec<UnitParams> {
        self.offsets()
            .flat_map(|o| self.widths.iter().map(move |&w| UnitParams::new(o, w)))
            .collect()
    }
}

/// Campaign step a trial belongs to; seeds are derived per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Exhaustive,
    Sweep,
    Integrate,
    Rank,
    Final,
    Evaluate,
}

impl Step {
    pub fn id(self) -> u64 {
        match self {
            Step::Exhaustive => 1,
            Step::Sweep => 2,
            Step::Integrate => 3,
            Step::Rank => 4,
            Step::Final => 5,
            Step::Evaluate => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::Exhaustive => "exhaustive",
            Step::Sweep => "sweep",
            Step::Integrate => "integrate",
            Step::Rank => "rank",
            Step::Final => "final",
            Step::Evaluate => "evaluate",
        }
    }
}

/// When a batch may stop early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    Never,
    /// Truncate after the first trial classified as Success.
    FirstSuccess,
}

/// What the search sees of one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub outcome: OutcomeClass,
    /// Ground-truth hit flag per target.
    pub hits: Vec<bool>,
}

/// Runs trials for the search.
pub trait TrialExecutor {
    fn scenario(&self) -> &ScenarioSpec;

    fn oversampling(&self) -> u32;

    /// Runs one trial per combo, in order. With [`StopRule::FirstSuccess`]
    /// the returned list ends at the first success and later combos count
    /// as never run.
    fn run_batch(&mut self, step: Step, combos: &[Combo], stop: StopRule) -> Result<Vec<TrialOutcome>, SearchError>;
}

/// Largest number of trials handed to the executor at once.
pub(crate) const BATCH: usize = 4096;

/// Runs `combo` `n` times and counts successes.
pub(crate) fn run_repeated(
    exec: &mut dyn TrialExecutor,
    step: Step,
    combo: &Combo,
    n: u64,
    mut observe: impl FnMut(&TrialOutcome),
) -> Result<u64, SearchError> {
    let mut successes = 0;
    let mut left = n;
    while left > 0 {
        let chunk = left.min(BATCH as u64) as usize;
        let batch = vec![combo.clone(); chunk];
        for o in exec.run_batch(step, &batch, StopRule::Never)? {
            if o.outcome.is_success() {
                successes += 1;
            }
            observe(&o);
        }
        left -= chunk as u64;
    }
    Ok(successes)
}
