use serde::{Deserialize, Serialize};

use super::{Combo, SearchError, SearchSpace, Step, StopRule, TrialExecutor, BATCH};
use crate::chain::UnitParams;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExhaustiveConfig {
    pub n_faults: usize,
    pub budget: u64,
    /// Stop at the first successful combination instead of walking the
    /// whole grid (or budget).
    #[serde(default = "yes")]
    pub stop_on_first_success: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub successes: Vec<Combo>,
    pub trials_used: u64,
    /// The whole grid was visited.
    pub exhausted: bool,
}

/// Size of the product grid, saturating at `u128::MAX`.
pub fn exhaustive_trial_count(space: &SearchSpace, n_faults: usize) -> u128 {
    let base = u128::from(space.len());
    (0..n_faults).try_fold(1u128, |acc, _| acc.checked_mul(base)).unwrap_or(u128::MAX)
}

/// Walks the product of per-fault grids in lexicographic order (first
/// fault most significant), judging each combination by the success
/// function only.
pub fn exhaustive_search(
    exec: &mut dyn TrialExecutor,
    space: &SearchSpace,
    cfg: &ExhaustiveConfig,
) -> Result<ExhaustiveResult, SearchError> {
    space.validate()?;
    if cfg.n_faults == 0 || cfg.budget == 0 {
        return Err(SearchError::BadSpace("n_faults and budget must be positive".into()));
    }
    let points = space.points();
    let total = exhaustive_trial_count(space, cfg.n_faults);
    let limit = total.min(u128::from(cfg.budget)) as u64;
    let stop = if cfg.stop_on_first_success {
        StopRule::FirstSuccess
    } else {
        StopRule::Never
    };

    let mut digits = vec![0usize; cfg.n_faults];
    let mut successes = Vec::new();
    let mut used = 0u64;
    let mut batch: Vec<Combo> = Vec::with_capacity(BATCH);
    while used < limit {
        batch.clear();
        let want = (limit - used).min(BATCH as u64) as usize;
        for _ in 0..want {
            batch.push(digits.iter().map(|&d| points[d]).collect::<Vec<UnitParams>>());
            increment(&mut digits, points.len());
        }
        let outcomes = exec.run_batch(Step::Exhaustive, &batch, stop)?;
        used += outcomes.len() as u64;
        for (combo, o) in batch.iter().zip(&outcomes) {
            if o.outcome.is_success() {
                successes.push(combo.clone());
            }
        }
        if cfg.stop_on_first_success && !successes.is_empty() {
            break;
        }
    }
    if successes.is_empty() {
        return Err(SearchError::NotFound { trials_used: used });
    }
    Ok(ExhaustiveResult {
        successes,
        trials_used: used,
        exhausted: u128::from(used) == total,
    })
}

/// Mixed-radix increment, last digit fastest.
fn increment(digits: &mut [usize], radix: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < radix {
            return;
        }
        *d = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::Engine;
    use crate::dut::{BodModel, FaultResponseModel};
    use crate::scenarios::builtin;

    fn engine(s: crate::scenarios::ScenarioSpec, k: u32) -> Engine {
        Engine::in_memory(s, k, FaultResponseModel::noise_free(), BodModel::disabled(), 3, 1).unwrap()
    }

    #[test]
    fn lexicographic_order() {
        let mut d = vec![0, 0];
        let mut seen = vec![d.clone()];
        for _ in 0..5 {
            increment(&mut d, 3);
            seen.push(d.clone());
        }
        assert_eq!(seen, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1], vec![1, 2]]);
    }

    #[test]
    fn count_only() {
        let s = SearchSpace::new(0, 10, 1, vec![1, 2]).unwrap();
        assert_eq!(exhaustive_trial_count(&s, 1), 20);
        assert_eq!(exhaustive_trial_count(&s, 2), 400);
        assert_eq!(exhaustive_trial_count(&s, 3), 8000);
        assert_eq!(exhaustive_trial_count(&s, 200), u128::MAX);
    }

    #[test]
    fn single_fault_finds_covering_offset() {
        let s = builtin::bod_scenario();
        let k = 20;
        let space = SearchSpace::new(0, 200, 1, vec![20]).unwrap();
        let mut e = engine(s.clone(), k);
        let cfg = ExhaustiveConfig {
            n_faults: 1,
            budget: 1_000,
            stop_on_first_success: true,
        };
        let r = exhaustive_search(&mut e, &space, &cfg).unwrap();
        let expected = (s.targets()[0].cycle(&s) - s.trigger_cycle()) * 20;
        assert_eq!(r.successes, vec![vec![UnitParams::new(expected, 20)]]);
        assert_eq!(r.trials_used, expected + 1);
        assert!(r.trials_used <= space.len());
    }

    #[test]
    fn full_walk_counts_every_combination() {
        let s = builtin::dup_registers(2, 1, true);
        let space = SearchSpace::new(0, 60, 10, vec![10]).unwrap();
        let mut e = engine(s, 10);
        let cfg = ExhaustiveConfig {
            n_faults: 2,
            budget: u64::MAX,
            stop_on_first_success: false,
        };
        let r = exhaustive_search(&mut e, &space, &cfg).unwrap();
        assert_eq!(r.trials_used, 36);
        assert!(r.exhausted);
        // FIRST at relative 20, SECOND one cycle after the first window.
        assert_eq!(r.successes, vec![vec![UnitParams::new(20, 10), UnitParams::new(10, 10)]]);
    }

    #[test]
    fn budget_exhaustion_is_not_found() {
        let s = builtin::dup_registers(30, 1, true);
        let space = SearchSpace::new(0, 400, 1, vec![10]).unwrap();
        let mut e = engine(s, 10);
        let cfg = ExhaustiveConfig {
            n_faults: 2,
            budget: 5_000,
            stop_on_first_success: true,
        };
        match exhaustive_search(&mut e, &space, &cfg) {
            Err(SearchError::NotFound { trials_used }) => assert_eq!(trials_used, 5_000),
            other => panic!("{other:?}"),
        }
    }
}
