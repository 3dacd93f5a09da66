use serde::{Deserialize, Serialize};

use super::{run_repeated, Combo, SearchError, Step, TrialExecutor, TrialOutcome};
use crate::chain::UnitParams;
use crate::scenarios::ScenarioSpec;

/// A relative combination with its measured success rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCombo {
    pub combo: Combo,
    pub trials_run: u64,
    pub successes: u64,
    pub success_rate: f64,
}

impl RankedCombo {
    pub fn new(combo: Combo, trials_run: u64, successes: u64) -> Self {
        let success_rate = if trials_run == 0 {
            0.0
        } else {
            successes as f64 / trials_run as f64
        };
        Self {
            combo,
            trials_run,
            successes,
            success_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repeatability {
    /// Every input combo after `n_rank` trials, in input order.
    pub ranking: Vec<RankedCombo>,
    pub best_index: usize,
    /// The winner re-measured over `n_final` trials.
    pub best: RankedCombo,
    /// Trials of the final run that hit targets `1..=k` at once, per `k`.
    pub cascade: Vec<u64>,
    pub trials_used: u64,
}

/// Per prefix length `k`, the number of outcomes that hit the first `k`
/// targets together. Only trials the firmware answered are counted.
pub fn cascade_counts<'a>(outcomes: impl IntoIterator<Item = &'a TrialOutcome>, n_targets: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_targets];
    for o in outcomes {
        accumulate_cascade(&mut counts, o);
    }
    counts
}

fn accumulate_cascade(counts: &mut [u64], o: &TrialOutcome) {
    if !o.outcome.responded() {
        return;
    }
    for (k, c) in counts.iter_mut().enumerate() {
        if o.hits[..=k].iter().all(|&h| h) {
            *c += 1;
        } else {
            break;
        }
    }
}

/// Measures every combo `n_rank` times, picks the highest success rate
/// (earliest combo on ties) and measures it again `n_final` times.
pub fn evaluate_repeatability(
    exec: &mut dyn TrialExecutor,
    combos: &[Combo],
    n_rank: u64,
    n_final: u64,
) -> Result<Repeatability, SearchError> {
    if combos.is_empty() || n_rank == 0 || n_final == 0 {
        return Err(SearchError::EmptyInput);
    }
    let mut ranking = Vec::with_capacity(combos.len());
    for combo in combos {
        let s = run_repeated(exec, Step::Rank, combo, n_rank, |_| {})?;
        ranking.push(RankedCombo::new(combo.clone(), n_rank, s));
    }
    let mut best_index = 0;
    for (i, r) in ranking.iter().enumerate() {
        if r.successes > ranking[best_index].successes {
            best_index = i;
        }
    }
    let n_targets = exec.scenario().targets().len();
    let mut cascade = vec![0u64; n_targets];
    let winner = ranking[best_index].combo.clone();
    let s = run_repeated(exec, Step::Final, &winner, n_final, |o| accumulate_cascade(&mut cascade, o))?;
    Ok(Repeatability {
        trials_used: n_rank * combos.len() as u64 + n_final,
        best: RankedCombo::new(winner, n_final, s),
        ranking,
        best_index,
        cascade,
    })
}

/// Rebases a combo found on a cooperative build onto a build triggered at
/// a different point, typically reset. Only the first relative offset
/// changes; the rest of the chain is relative and carries over as long as
/// the distances between targets agree.
pub fn transfer_parameters(
    from: &ScenarioSpec,
    combo: &RankedCombo,
    to: &ScenarioSpec,
    oversampling: u32,
) -> Result<RankedCombo, SearchError> {
    let (ft, tt) = (from.targets(), to.targets());
    if ft.len() != tt.len() || ft.iter().zip(tt).any(|(a, b)| a.effect() != b.effect()) {
        return Err(SearchError::TransferInvalid("target lists differ".into()));
    }
    if from.target_spacing() != to.target_spacing() {
        return Err(SearchError::TransferInvalid(format!(
            "target spacing {:?} differs from {:?}",
            from.target_spacing(),
            to.target_spacing()
        )));
    }
    let Some(first) = combo.combo.first() else {
        return Err(SearchError::EmptyInput);
    };
    let lead = |s: &ScenarioSpec| i128::from(s.targets()[0].cycle(s)) - i128::from(s.trigger_cycle());
    let delta = (lead(to) - lead(from)) * i128::from(oversampling);
    let offset = i128::from(first.offset) + delta;
    if offset < 0 {
        return Err(SearchError::TransferInvalid(format!("rebased offset {offset} is negative")));
    }
    let mut out = combo.combo.clone();
    out[0] = UnitParams::new(offset as u64, first.width);
    Ok(RankedCombo::new(out, 0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::Engine;
    use crate::dut::{BodModel, FaultResponseModel};
    use crate::scenarios::{builtin, OutcomeClass};

    fn noise_free(s: &ScenarioSpec, k: u32) -> Engine {
        Engine::in_memory(s.clone(), k, FaultResponseModel::noise_free(), BodModel::disabled(), 4, 1).unwrap()
    }

    fn nominal(s: &ScenarioSpec, k: u32) -> Combo {
        let abs: Vec<_> = s
            .nominal_faults(k)
            .into_iter()
            .map(|(o, w)| crate::timing::FaultSpec::absolute(o, w).unwrap())
            .collect();
        crate::search::translate_to_relative(&abs)
            .unwrap()
            .iter()
            .map(|f| UnitParams::new(f.offset, f.width))
            .collect()
    }

    #[test]
    fn single_combo_wins() {
        let s = builtin::dup_registers(7, 43, true);
        let mut e = noise_free(&s, 10);
        let c = nominal(&s, 10);
        let r = evaluate_repeatability(&mut e, std::slice::from_ref(&c), 5, 10).unwrap();
        assert_eq!(r.best.combo, c);
        assert_eq!(r.best.successes, 10);
        assert_eq!(r.cascade, vec![10, 10]);
        assert_eq!(r.trials_used, 15);
    }

    #[test]
    fn ties_go_to_the_earliest_combo() {
        let s = builtin::dup_registers(7, 43, true);
        let mut e = noise_free(&s, 10);
        let miss = vec![UnitParams::new(0, 10), UnitParams::new(0, 10)];
        let miss2 = vec![UnitParams::new(1, 10), UnitParams::new(0, 10)];
        let r = evaluate_repeatability(&mut e, &[miss.clone(), miss2], 3, 3).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best.success_rate, 0.0);
        assert_eq!(r.ranking.len(), 2);
        assert!(r.ranking.iter().all(|c| c.successes == 0));

        let hit = nominal(&s, 10);
        let r = evaluate_repeatability(&mut e, &[miss, hit.clone(), hit], 3, 3).unwrap();
        assert_eq!(r.best_index, 1);
    }

    #[test]
    fn rejects_empty_input() {
        let s = builtin::successive_shifts();
        let mut e = noise_free(&s, 20);
        assert!(matches!(evaluate_repeatability(&mut e, &[], 1, 1), Err(SearchError::EmptyInput)));
    }

    #[test]
    fn cascade_counts_prefixes_of_answered_trials() {
        let o = |outcome, hits: &[bool]| TrialOutcome {
            outcome,
            hits: hits.to_vec(),
        };
        let outcomes = [
            o(OutcomeClass::Success, &[true, true, true]),
            o(OutcomeClass::Failure, &[true, false, true]),
            o(OutcomeClass::Failure, &[false, true, true]),
            o(OutcomeClass::Invalid, &[true, true, true]),
        ];
        assert_eq!(cascade_counts(&outcomes, 3), vec![2, 1, 1]);
    }

    #[test]
    fn transfer_shifts_first_offset_only() {
        let k = 10;
        let coop = builtin::dup_registers(7, 43, true);
        let non = builtin::dup_registers(7, 43, false);
        let c = RankedCombo::new(nominal(&coop, k), 1, 1);
        let t = transfer_parameters(&coop, &c, &non, k).unwrap();
        let shift = coop.trigger_cycle() * u64::from(k);
        assert_eq!(t.combo[0].offset, c.combo[0].offset + shift);
        assert_eq!(t.combo[1], c.combo[1]);

        let mut e = noise_free(&non, k);
        let out = e.run_batch(Step::Final, std::slice::from_ref(&t.combo), crate::search::StopRule::Never).unwrap();
        assert_eq!(out[0].outcome, OutcomeClass::Success);

        // Back from reset to the cooperative trigger.
        let back = transfer_parameters(&non, &t, &coop, k).unwrap();
        assert_eq!(back.combo, c.combo);
    }

    #[test]
    fn transfer_rejects_mismatch() {
        let k = 10;
        let coop = builtin::dup_registers(7, 43, true);
        let other = builtin::dup_registers(7, 40, false);
        let c = RankedCombo::new(nominal(&coop, k), 1, 1);
        assert!(matches!(
            transfer_parameters(&coop, &c, &other, k),
            Err(SearchError::TransferInvalid(_))
        ));
        let shifts = builtin::successive_shifts();
        assert!(transfer_parameters(&coop, &c, &shifts, k).is_err());
        let early = builtin::dup_registers(1, 43, false);
        // Target now closer to the trigger than the first offset allows.
        let tiny = RankedCombo::new(vec![UnitParams::new(0, 10), UnitParams::new(430, 10)], 1, 1);
        assert!(transfer_parameters(&builtin::dup_registers(7, 43, false), &tiny, &early, k).is_err());
    }
}
