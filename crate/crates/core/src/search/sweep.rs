use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SearchError, SearchSpace, Step, StopRule, TrialExecutor};
use crate::chain::UnitParams;
use crate::timing::Ticks;

/// One absolute single-fault setting that hit a target, with the number of
/// trials in which it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsoluteHit {
    pub offset: Ticks,
    pub width: Ticks,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetHits {
    pub label: String,
    /// Sorted by `(offset, width)`.
    pub hits: Vec<AbsoluteHit>,
}

/// Absolute parameters per target, in target order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AbsoluteParamSet {
    pub targets: Vec<TargetHits>,
}

impl AbsoluteParamSet {
    pub fn get(&self, label: &str) -> Option<&TargetHits> {
        self.targets.iter().find(|t| t.label == label)
    }

    pub fn missing(&self) -> Vec<String> {
        self.targets
            .iter()
            .filter(|t| t.hits.is_empty())
            .map(|t| t.label.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sets: AbsoluteParamSet,
    pub trials_used: u64,
    pub passes: u32,
}

/// Scans single faults over `space`, recording for each target every
/// setting whose outcome credits it. Passes repeat until every target has
/// been hit at least once or `max_passes` is spent.
pub fn sweep(exec: &mut dyn TrialExecutor, space: &SearchSpace, max_passes: u32) -> Result<SweepResult, SearchError> {
    space.validate()?;
    let scenario = exec.scenario().clone();
    if !scenario.cooperative() {
        return Err(SearchError::NotCooperative(scenario.name().to_string()));
    }
    let labels = scenario.labels();
    let mut counts: Vec<BTreeMap<(Ticks, Ticks), u32>> = vec![BTreeMap::new(); labels.len()];
    let points: Vec<Vec<UnitParams>> = space.points().into_iter().map(|p| vec![p]).collect();
    let mut trials_used = 0;
    let mut passes = 0;
    while passes < max_passes && counts.iter().any(BTreeMap::is_empty) {
        passes += 1;
        for chunk in points.chunks(super::BATCH) {
            let outcomes = exec.run_batch(Step::Sweep, chunk, StopRule::Never)?;
            trials_used += outcomes.len() as u64;
            for (combo, o) in chunk.iter().zip(&outcomes) {
                let credited = scenario.credited_labels(&o.outcome);
                for (i, label) in labels.iter().enumerate() {
                    if credited.contains(&label.as_str()) {
                        *counts[i].entry((combo[0].offset, combo[0].width)).or_default() += 1;
                    }
                }
            }
        }
    }
    let sets = AbsoluteParamSet {
        targets: labels
            .into_iter()
            .zip(counts)
            .map(|(label, c)| TargetHits {
                label,
                hits: c
                    .into_iter()
                    .map(|((offset, width), count)| AbsoluteHit { offset, width, count })
                    .collect(),
            })
            .collect(),
    };
    let missing = sets.missing();
    if !missing.is_empty() {
        return Err(SearchError::IncompleteSweep { missing, trials_used });
    }
    Ok(SweepResult {
        sets,
        trials_used,
        passes,
    })
}
