use serde::{Deserialize, Serialize};

use super::rank::RankedCombo;
use super::sweep::AbsoluteParamSet;
use super::{Combo, SearchError, Step, StopRule, TrialExecutor, BATCH};
use crate::chain::UnitParams;
use crate::scenarios::ScenarioSpec;
use crate::timing::{FaultSpec, Frame, Ticks, TimingError};

/// Converts absolute faults (offsets from the trigger) into the chain's
/// relative frame: the first offset is kept, every later one is counted
/// from the end of its predecessor.
pub fn translate_to_relative(absolute: &[FaultSpec]) -> Result<Vec<FaultSpec>, SearchError> {
    let mut out = Vec::with_capacity(absolute.len());
    let mut prev_end: Option<Ticks> = None;
    for (index, f) in absolute.iter().enumerate() {
        if f.frame != Frame::Absolute {
            return Err(TimingError::NotAbsolute.into());
        }
        let offset = match prev_end {
            None => f.offset,
            Some(end) if f.offset >= end => f.offset - end,
            Some(_) => return Err(SearchError::Overlap { index }),
        };
        out.push(FaultSpec::relative(offset, f.width)?);
        prev_end = Some(f.end());
    }
    Ok(out)
}

/// Inverse of [`translate_to_relative`].
pub fn accumulate(relative: &[FaultSpec]) -> Result<Vec<FaultSpec>, SearchError> {
    let mut out = Vec::with_capacity(relative.len());
    let mut end = 0;
    for f in relative {
        if f.frame != Frame::Relative {
            return Err(SearchError::BadSpace("accumulate expects relative faults".into()));
        }
        let a = FaultSpec::absolute(end + f.offset, f.width)?;
        end = a.end();
        out.push(a);
    }
    Ok(out)
}

/// Relative offset widened to `[center - psi, center + psi]`, clipped at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyInterval {
    pub center: Ticks,
    pub psi: Ticks,
    pub width: Ticks,
}

impl FuzzyInterval {
    pub fn lo(&self) -> Ticks {
        self.center.saturating_sub(self.psi)
    }

    pub fn hi(&self) -> Ticks {
        self.center + self.psi
    }

    /// Offsets `center ± j * stride` inside the interval, ascending.
    pub fn offsets(&self, stride: Ticks) -> Vec<Ticks> {
        let stride = stride.max(1);
        let below = (self.center - self.lo()) / stride;
        let above = self.psi / stride;
        (0..=below)
            .rev()
            .map(|j| self.center - j * stride)
            .chain((1..=above).map(|j| self.center + j * stride))
            .collect()
    }
}

pub fn fuzzyfy(relative: &[FaultSpec], psi: Ticks) -> Vec<FuzzyInterval> {
    relative
        .iter()
        .map(|f| FuzzyInterval {
            center: f.offset,
            psi,
            width: f.width,
        })
        .collect()
}

/// Cartesian product of the interval offsets, first fault most
/// significant.
pub fn enumerate_combos(fuzzy: &[FuzzyInterval], stride: Ticks) -> Vec<Combo> {
    let mut combos: Vec<Combo> = vec![Vec::new()];
    for f in fuzzy {
        let offsets = f.offsets(stride);
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                offsets.iter().map(move |&o| {
                    let mut c = prefix.clone();
                    c.push(UnitParams::new(o, f.width));
                    c
                })
            })
            .collect();
    }
    combos
}

/// One width choice per target with the derived fault parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationPlan {
    pub absolute: Vec<FaultSpec>,
    pub relative: Vec<FaultSpec>,
    pub fuzzy: Vec<FuzzyInterval>,
}

/// Reduces the sweep result to integration plans.
///
/// For every target the `widths_per_target` widths with the most hits are
/// kept (ties go to the narrower width), and each is centered on the
/// count-weighted lower median of its hit offsets. Every combination of
/// width choices whose windows do not overlap becomes one plan.
pub fn plan_integration(
    scenario: &ScenarioSpec,
    sets: &AbsoluteParamSet,
    widths_per_target: usize,
    psi: Ticks,
) -> Result<Vec<IntegrationPlan>, SearchError> {
    let mut choices: Vec<Vec<FaultSpec>> = Vec::new();
    for label in scenario.labels() {
        let hits = &sets
            .get(&label)
            .ok_or_else(|| SearchError::IncompleteSweep {
                missing: vec![label.clone()],
                trials_used: 0,
            })?
            .hits;
        let mut per_width: Vec<(Ticks, u64)> = Vec::new();
        for h in hits {
            match per_width.iter_mut().find(|(w, _)| *w == h.width) {
                Some(e) => e.1 += u64::from(h.count),
                None => per_width.push((h.width, u64::from(h.count))),
            }
        }
        if per_width.is_empty() {
            return Err(SearchError::IncompleteSweep {
                missing: vec![label],
                trials_used: 0,
            });
        }
        per_width.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut options = Vec::new();
        for &(width, total) in per_width.iter().take(widths_per_target.max(1)) {
            let half = total.div_ceil(2);
            let mut seen = 0;
            let center = hits
                .iter()
                .filter(|h| h.width == width)
                .find(|h| {
                    seen += u64::from(h.count);
                    seen >= half
                })
                .map(|h| h.offset)
                .expect("width has hits");
            options.push(FaultSpec::absolute(center, width)?);
        }
        choices.push(options);
    }

    let mut plans = Vec::new();
    let mut idx = vec![0usize; choices.len()];
    loop {
        let absolute: Vec<FaultSpec> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        if let Ok(relative) = translate_to_relative(&absolute) {
            let fuzzy = fuzzyfy(&relative, psi);
            plans.push(IntegrationPlan {
                absolute,
                relative,
                fuzzy,
            });
        }
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                if plans.is_empty() {
                    return Err(SearchError::Overlap { index: 0 });
                }
                return Ok(plans);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateResult {
    /// Combos with at least one success, in enumeration order.
    pub successful: Vec<RankedCombo>,
    pub combos_tested: u64,
    pub trials_used: u64,
}

/// Runs every combination of every plan `trials_per_combo` times with all
/// faults injected, judged by the success function.
pub fn integrate(
    exec: &mut dyn TrialExecutor,
    plans: &[IntegrationPlan],
    stride: Ticks,
    trials_per_combo: u64,
) -> Result<IntegrateResult, SearchError> {
    if plans.is_empty() || trials_per_combo == 0 {
        return Err(SearchError::EmptyInput);
    }
    let combos: Vec<Combo> = plans.iter().flat_map(|p| enumerate_combos(&p.fuzzy, stride)).collect();
    let mut successes = vec![0u64; combos.len()];
    let mut trials_used = 0;
    let jobs: Vec<usize> = (0..combos.len())
        .flat_map(|c| std::iter::repeat_n(c, trials_per_combo as usize))
        .collect();
    for chunk in jobs.chunks(BATCH) {
        let batch: Vec<Combo> = chunk.iter().map(|&c| combos[c].clone()).collect();
        let outcomes = exec.run_batch(Step::Integrate, &batch, StopRule::Never)?;
        trials_used += outcomes.len() as u64;
        for (&c, o) in chunk.iter().zip(&outcomes) {
            if o.outcome.is_success() {
                successes[c] += 1;
            }
        }
    }
    let successful: Vec<RankedCombo> = combos
        .into_iter()
        .zip(successes)
        .filter(|(_, s)| *s > 0)
        .map(|(combo, s)| RankedCombo::new(combo, trials_per_combo, s))
        .collect();
    if successful.is_empty() {
        return Err(SearchError::NoIntegratedSuccess { trials_used });
    }
    Ok(IntegrateResult {
        successful,
        combos_tested: trials_used / trials_per_combo,
        trials_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::Engine;
    use crate::chain::{simulate_chain, ChainConfig, FaultWindow};
    use crate::dut::{BodModel, FaultResponseModel};
    use crate::scenarios::builtin;
    use crate::search::{sweep, SearchSpace};
    use proptest::prelude::*;

    fn abs(v: &[(u64, u64)]) -> Vec<FaultSpec> {
        v.iter().map(|&(a, w)| FaultSpec::absolute(a, w).unwrap()).collect()
    }

    fn pairs(v: &[FaultSpec]) -> Vec<(u64, u64)> {
        v.iter().map(|f| (f.offset, f.width)).collect()
    }

    #[test]
    fn translation_examples() {
        assert_eq!(pairs(&translate_to_relative(&abs(&[(100, 5), (200, 7)])).unwrap()), vec![(100, 5), (95, 7)]);
        assert_eq!(pairs(&translate_to_relative(&abs(&[(42, 9)])).unwrap()), vec![(42, 9)]);
        assert_eq!(pairs(&translate_to_relative(&abs(&[(10, 5), (15, 3)])).unwrap()), vec![(10, 5), (0, 3)]);
        assert!(matches!(
            translate_to_relative(&abs(&[(10, 5), (14, 3)])),
            Err(SearchError::Overlap { index: 1 })
        ));
        assert!(matches!(
            translate_to_relative(&abs(&[(10, 5), (2, 3)])),
            Err(SearchError::Overlap { index: 1 })
        ));
        let rel = [FaultSpec::relative(1, 1).unwrap()];
        assert!(translate_to_relative(&rel).is_err());
        assert!(accumulate(&abs(&[(1, 1)])).is_err());
    }

    #[test]
    fn fuzzy_examples() {
        let rel = [FaultSpec::relative(95, 7).unwrap(), FaultSpec::relative(1, 3).unwrap()];
        let f = fuzzyfy(&rel, 2);
        assert_eq!((f[0].lo(), f[0].hi(), f[0].width), (93, 97, 7));
        let g = fuzzyfy(&rel, 3);
        assert_eq!((g[1].lo(), g[1].hi()), (0, 4));
        let z = fuzzyfy(&rel, 0);
        assert_eq!(z[0].offsets(1), vec![95]);
        assert_eq!(f[0].offsets(1), vec![93, 94, 95, 96, 97]);
        assert_eq!(g[1].offsets(2), vec![1, 3]);
        assert_eq!(g[1].offsets(1), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn combo_count() {
        let rel = [FaultSpec::relative(10, 1).unwrap(), FaultSpec::relative(10, 1).unwrap()];
        assert_eq!(enumerate_combos(&fuzzyfy(&rel, 2), 1).len(), 25);
        assert_eq!(enumerate_combos(&fuzzyfy(&rel, 0), 1).len(), 1);
        let four = vec![FaultSpec::relative(100, 20).unwrap(); 4];
        assert_eq!(enumerate_combos(&fuzzyfy(&four, 40), 40).len(), 81);
        let c = enumerate_combos(&fuzzyfy(&rel, 1), 1);
        assert_eq!(c[0], vec![UnitParams::new(9, 1), UnitParams::new(9, 1)]);
        assert_eq!(c[1], vec![UnitParams::new(9, 1), UnitParams::new(10, 1)]);
    }

    #[test]
    fn perfect_model_center_combo_succeeds() {
        let s = builtin::dup_registers(7, 43, true);
        let mut e = Engine::in_memory(s.clone(), 10, FaultResponseModel::noise_free(), BodModel::disabled(), 2, 1).unwrap();
        let space = SearchSpace::new(0, 600, 1, vec![10]).unwrap();
        let swept = sweep(&mut e, &space, 1).unwrap();
        let plans = plan_integration(&s, &swept.sets, 1, 0).unwrap();
        assert_eq!(plans.len(), 1);
        let r = integrate(&mut e, &plans, 1, 1).unwrap();
        assert_eq!(r.combos_tested, 1);
        assert_eq!(r.successful.len(), 1);
        assert_eq!(r.successful[0].combo, vec![UnitParams::new(70, 10), UnitParams::new(430, 10)]);
    }

    #[test]
    fn plan_picks_busiest_width_and_median() {
        let s = builtin::bod_scenario();
        let sets = AbsoluteParamSet {
            targets: vec![crate::search::TargetHits {
                label: "SAU".into(),
                hits: vec![
                    crate::search::AbsoluteHit { offset: 50, width: 20, count: 1 },
                    crate::search::AbsoluteHit { offset: 55, width: 20, count: 1 },
                    crate::search::AbsoluteHit { offset: 60, width: 20, count: 5 },
                    crate::search::AbsoluteHit { offset: 30, width: 40, count: 1 },
                ],
            }],
        };
        let plans = plan_integration(&s, &sets, 1, 0).unwrap();
        assert_eq!(pairs(&plans[0].absolute), vec![(60, 20)]);
        let both = plan_integration(&s, &sets, 2, 0).unwrap();
        assert_eq!(both.len(), 2);
        assert_eq!(pairs(&both[1].absolute), vec![(30, 40)]);
    }

    #[test]
    fn overlapping_plans_are_skipped() {
        let s = builtin::successive_shifts();
        let hit = |offset, width| crate::search::AbsoluteHit { offset, width, count: 1 };
        let sets = AbsoluteParamSet {
            targets: vec![
                crate::search::TargetHits { label: "LSRS".into(), hits: vec![hit(0, 40)] },
                crate::search::TargetHits { label: "LSLS".into(), hits: vec![hit(20, 20)] },
            ],
        };
        assert!(matches!(plan_integration(&s, &sets, 1, 0), Err(SearchError::Overlap { .. })));
    }

    fn disjoint_absolute() -> impl Strategy<Value = Vec<FaultSpec>> {
        prop::collection::vec((0u64..500, 1u64..100), 1..=6).prop_map(|gaps| {
            let mut end = 0;
            gaps.into_iter()
                .map(|(gap, width)| {
                    let f = FaultSpec::absolute(end + gap, width).unwrap();
                    end = f.end();
                    f
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn translate_accumulate_round_trip(a in disjoint_absolute()) {
            let rel = translate_to_relative(&a).unwrap();
            prop_assert!(rel.iter().all(|f| f.frame == Frame::Relative));
            prop_assert_eq!(accumulate(&rel).unwrap(), a);
        }

        #[test]
        fn chain_reproduces_absolute_windows(a in disjoint_absolute(), trigger in 0u64..1000) {
            let rel = translate_to_relative(&a).unwrap();
            let cfg = ChainConfig::new(rel.iter().map(|f| UnitParams::new(f.offset, f.width)).collect());
            let run = simulate_chain(&cfg, trigger).unwrap();
            // Adjacent absolute windows merge into one interval.
            let mut expected: Vec<FaultWindow> = Vec::new();
            for f in &a {
                let w = FaultWindow::new(trigger + f.offset, trigger + f.end());
                match expected.last_mut() {
                    Some(last) if last.end == w.start => last.end = w.end,
                    _ => expected.push(w),
                }
            }
            prop_assert_eq!(run.windows, expected);
        }
    }
}
