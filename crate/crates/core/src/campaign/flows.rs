use std::fs;
use std::path::Path;

use super::config::{combo_from_pairs, BodEvalConfig, CampaignConfig, CountermeasureConfig};
use super::engine::{Engine, Sink};
use super::report::write_report;
use super::summary::{
    cascade_rows, BodEvalResult, BodPeriodRow, CampaignSummary, Comparison, CountermeasureResult, DistributionRow,
    ExhaustiveSummary, StepTrials, TransferSummary,
};
use super::CampaignError;
use crate::dut::BodModel;
use crate::scenarios::{OutcomeClass, ScenarioSpec};
use crate::search::{
    self, cascade_counts, evaluate_repeatability, exhaustive_search, integrate, plan_integration, run_repeated,
    transfer_parameters, translate_to_relative, Combo, ExhaustiveConfig, SearchError, Step, StopRule,
    TrialExecutor,
};
use crate::chain::UnitParams;
use crate::timing::{split_fault, ticks_from_ns, FaultSpec};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

fn engine(cfg: &CampaignConfig, scenario: ScenarioSpec, out: Option<&Path>) -> Result<Engine, CampaignError> {
    let sink = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Sink::jsonl(&dir.join(RESULTS_FILE))?
        }
        None => Sink::Null,
    };
    Engine::new(
        scenario,
        cfg.oversampling(),
        cfg.model.resolve()?,
        cfg.bod,
        cfg.master_seed,
        cfg.jobs,
        sink,
    )
}

/// Records trial counts, persists the summary and report, and turns a
/// search failure into an error that still carries the summary.
fn finish(
    mut engine: Engine,
    mut summary: CampaignSummary,
    out: Option<&Path>,
    failure: Option<SearchError>,
) -> Result<CampaignSummary, CampaignError> {
    summary.steps = engine
        .step_trials()
        .iter()
        .map(|(&step, &trials)| StepTrials { step, trials })
        .collect();
    summary.total_trials = engine.total_trials();
    summary.error = failure.as_ref().map(ToString::to_string);
    engine.flush()?;
    drop(engine);
    if let Some(dir) = out {
        summary.save(&dir.join(SUMMARY_FILE))?;
        write_report(dir)?;
    }
    match failure {
        None => Ok(summary),
        Some(source) => Err(CampaignError::Search {
            source,
            summary: Box::new(summary),
        }),
    }
}

fn nominal_combo(scenario: &ScenarioSpec, oversampling: u32) -> Result<Combo, CampaignError> {
    let absolute = scenario
        .nominal_faults(oversampling)
        .into_iter()
        .map(|(o, w)| FaultSpec::absolute(o, w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(to_combo(&translate_to_relative(&absolute)?))
}

fn to_combo(relative: &[FaultSpec]) -> Combo {
    relative.iter().map(|f| UnitParams::new(f.offset, f.width)).collect()
}

/// The scenario to search on: the configured one if cooperative, else the
/// transfer source.
fn search_scenario(cfg: &CampaignConfig, target: &ScenarioSpec) -> Result<ScenarioSpec, CampaignError> {
    let source = match cfg.transfer_source()? {
        Some(s) => s,
        None if target.cooperative() => target.clone(),
        None => {
            return Err(CampaignError::Config(format!(
                "scenario `{}` is not cooperative; set `transfer_from` to a cooperative build",
                target.name()
            )))
        }
    };
    if !source.cooperative() {
        return Err(CampaignError::Config(format!(
            "transfer source `{}` is not cooperative",
            source.name()
        )));
    }
    Ok(source)
}

/// Sweep, plan and integrate; returns the surviving combos.
fn sweep_and_integrate(
    cfg: &CampaignConfig,
    source: &ScenarioSpec,
    engine: &mut Engine,
    summary: &mut CampaignSummary,
) -> Result<Vec<Combo>, SearchError> {
    let swept = search::sweep(engine, &cfg.space(source), cfg.search.sweep_passes)?;
    summary.sweep = Some(swept.sets.clone());
    let plans = plan_integration(source, &swept.sets, cfg.search.widths_per_target, cfg.psi())?;
    summary.plans = Some(plans.clone());
    let integrated = integrate(engine, &plans, cfg.integrate_stride(), cfg.search.trials_per_combo)?;
    let combos = integrated.successful.iter().map(|r| r.combo.clone()).collect();
    summary.integrated = Some(integrated.successful);
    Ok(combos)
}

/// Runs the whole search flow: sweep, translate, fuzzyfy, integrate,
/// rank and, for a non-cooperative scenario, transfer from the
/// cooperative build.
pub fn run_attack_flow(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let target = cfg.scenario()?;
    let source = search_scenario(cfg, &target)?;
    let mut summary = CampaignSummary::new("flow", target.name(), cfg);
    let mut engine = engine(cfg, source.clone(), out)?;
    let k = cfg.oversampling();

    let result = (|| -> Result<(), SearchError> {
        let combos = sweep_and_integrate(cfg, &source, &mut engine, &mut summary)?;
        let rep = evaluate_repeatability(&mut engine, &combos, cfg.search.n_rank, cfg.search.n_final)?;
        summary.ranking = Some(rep.ranking);
        summary.best = Some(rep.best.clone());
        if target.cooperative() && cfg.transfer_from.is_none() {
            summary.cascade = Some(cascade_rows(&source.labels(), &rep.cascade, cfg.search.n_final));
            return Ok(());
        }
        let moved = transfer_parameters(&source, &rep.best, &target, k)?;
        engine.set_scenario(target.clone());
        let mut outcomes = Vec::new();
        let successes = run_repeated(&mut engine, Step::Evaluate, &moved.combo, cfg.search.n_final, |o| {
            outcomes.push(o.clone())
        })?;
        let counts = cascade_counts(&outcomes, target.targets().len());
        summary.cascade = Some(cascade_rows(&target.labels(), &counts, cfg.search.n_final));
        summary.transferred = Some(TransferSummary {
            from: source.name().to_string(),
            to: target.name().to_string(),
            combo: search::RankedCombo::new(moved.combo, cfg.search.n_final, successes),
        });
        Ok(())
    })();
    finish(engine, summary, out, result.err())
}

/// Sweep only; the summary carries the absolute sets and integration plans.
pub fn run_sweep(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let target = cfg.scenario()?;
    let source = search_scenario(cfg, &target)?;
    let mut summary = CampaignSummary::new("sweep", source.name(), cfg);
    let mut engine = engine(cfg, source.clone(), out)?;
    let result = (|| -> Result<(), SearchError> {
        let swept = search::sweep(&mut engine, &cfg.space(&source), cfg.search.sweep_passes)?;
        summary.sweep = Some(swept.sets.clone());
        summary.plans = Some(plan_integration(&source, &swept.sets, cfg.search.widths_per_target, cfg.psi())?);
        Ok(())
    })();
    finish(engine, summary, out, result.err())
}

fn exhaustive_config(cfg: &CampaignConfig, scenario: &ScenarioSpec) -> ExhaustiveConfig {
    ExhaustiveConfig {
        n_faults: cfg.search.exhaustive_faults.unwrap_or(scenario.targets().len()),
        budget: cfg.search.exhaustive_budget,
        stop_on_first_success: cfg.search.stop_on_first_success,
    }
}

fn exhaustive_step(
    cfg: &CampaignConfig,
    scenario: &ScenarioSpec,
    engine: &mut Engine,
) -> (ExhaustiveSummary, Option<SearchError>) {
    let space = cfg.space(scenario);
    let ecfg = exhaustive_config(cfg, scenario);
    let mut s = ExhaustiveSummary {
        n_faults: ecfg.n_faults,
        budget: ecfg.budget,
        grid_points: space.len(),
        trials_used: 0,
        found: false,
        first_success: None,
    };
    match exhaustive_search(engine, &space, &ecfg) {
        Ok(r) => {
            s.trials_used = r.trials_used;
            s.found = true;
            s.first_success = r.successes.into_iter().next();
            (s, None)
        }
        Err(SearchError::NotFound { trials_used }) => {
            s.trials_used = trials_used;
            (s, Some(SearchError::NotFound { trials_used }))
        }
        Err(e) => (s, Some(e)),
    }
}

/// Exhaustive baseline only.
pub fn run_exhaustive(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let target = cfg.scenario()?;
    let mut summary = CampaignSummary::new("exhaustive", target.name(), cfg);
    let mut engine = engine(cfg, target.clone(), out)?;
    let (ex, err) = exhaustive_step(cfg, &target, &mut engine);
    summary.exhaustive = Some(ex);
    finish(engine, summary, out, err)
}

/// Exhaustive baseline against sweep + integrate on the same scenario and
/// seed, compared by trials used. A side that finds nothing is recorded
/// and the ratio omitted.
pub fn run_comparison(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let target = cfg.scenario()?;
    let source = search_scenario(cfg, &target)?;
    let mut summary = CampaignSummary::new("compare", target.name(), cfg);
    let mut engine = engine(cfg, target.clone(), out)?;

    let (ex, ex_err) = exhaustive_step(cfg, &target, &mut engine);
    if let Some(e @ (SearchError::Executor(_) | SearchError::BadSpace(_))) = ex_err {
        return finish(engine, summary, out, Some(e));
    }
    engine.set_scenario(source.clone());
    let flow = sweep_and_integrate(cfg, &source, &mut engine, &mut summary);
    let sweep_trials = engine.step_trials().get(&Step::Sweep).copied().unwrap_or(0);
    let integrate_trials = engine.step_trials().get(&Step::Integrate).copied().unwrap_or(0);
    let sweeping_trials = sweep_trials + integrate_trials;
    let sweeping_found = flow.is_ok();
    let ratio = (ex.found && sweeping_found).then(|| ex.trials_used as f64 / sweeping_trials as f64);
    summary.comparison = Some(Comparison {
        exhaustive_trials: ex.trials_used,
        exhaustive_found: ex.found,
        sweep_trials,
        integrate_trials,
        sweeping_trials,
        sweeping_found,
        ratio,
    });
    summary.exhaustive = Some(ex);
    let failure = match flow {
        Err(e @ (SearchError::Executor(_) | SearchError::BadSpace(_))) => Some(e),
        _ => None,
    };
    finish(engine, summary, out, failure)
}

fn distribution(name: &str, combo: Combo, outcomes: &[crate::search::TrialOutcome]) -> DistributionRow {
    let mut c = [0u64; 5];
    for o in outcomes {
        let slot = if !o.outcome.responded() {
            4
        } else {
            match (o.hits[0], o.hits[1]) {
                (false, false) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (true, true) => 3,
            }
        };
        c[slot] += 1;
    }
    let n = outcomes.len().max(1) as f64;
    DistributionRow {
        faults: name.to_string(),
        combo,
        trials: outcomes.len() as u64,
        none: c[0] as f64 / n,
        only_second: c[1] as f64 / n,
        only_first: c[2] as f64 / n,
        both: c[3] as f64 / n,
        invalid: c[4] as f64 / n,
    }
}

/// One wide fault over both targets of a two-target scenario against one
/// narrow fault per target, with identical seeds.
pub fn run_wide_vs_narrow(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let s = cfg.scenario()?;
    if s.targets().len() != 2 {
        return Err(CampaignError::Config(format!(
            "wide-vs-narrow needs a two-target scenario, `{}` has {}",
            s.name(),
            s.targets().len()
        )));
    }
    let wn = cfg.wide_vs_narrow.clone().unwrap_or_default();
    let k = u64::from(cfg.oversampling());
    if k < 5 {
        return Err(CampaignError::Config("default narrow faults need oversampling of at least 5".into()));
    }
    let lead = (s.targets()[0].cycle(&s) - s.trigger_cycle()) * k;
    let wide = wn.wide.as_deref().map_or_else(|| vec![UnitParams::new(lead, 2 * k)], combo_from_pairs);
    let narrow = wn.narrow.as_deref().map_or_else(
        || vec![UnitParams::new(lead + 2, k - 4), UnitParams::new(4, k - 4)],
        combo_from_pairs,
    );
    let mut summary = CampaignSummary::new("wide-vs-narrow", s.name(), cfg);
    let mut engine = engine(cfg, s, out)?;
    let mut rows = Vec::new();
    for (name, combo) in [("wide", wide), ("narrow", narrow)] {
        engine.rewind_seeds(Step::Evaluate);
        let mut outcomes = Vec::with_capacity(wn.trials as usize);
        run_repeated(&mut engine, Step::Evaluate, &combo, wn.trials, |o| outcomes.push(o.clone()))?;
        rows.push(distribution(name, combo, &outcomes));
    }
    summary.wide_vs_narrow = Some(rows);
    finish(engine, summary, out, None)
}

/// Success rate of one combo with and without random stalls in front of
/// the targets, over identical seeds.
pub fn run_countermeasure_eval(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let cm: CountermeasureConfig = cfg.countermeasure.clone().unwrap_or_default();
    let base = cfg.scenario()?.with_protected_targets();
    let combo = match &cm.combo {
        Some(pairs) => combo_from_pairs(pairs),
        None => nominal_combo(&base, cfg.oversampling())?,
    };
    let mut summary = CampaignSummary::new("countermeasure", base.name(), cfg);
    let mut engine = engine(cfg, base.clone().with_random_delays(0), out)?;
    let baseline = run_repeated(&mut engine, Step::Evaluate, &combo, cm.trials, |_| {})?;
    engine.rewind_seeds(Step::Evaluate);
    engine.set_scenario(base.with_random_delays(cm.max_delay_cycles));
    let delayed = run_repeated(&mut engine, Step::Evaluate, &combo, cm.trials, |_| {})?;
    let rate = |s: u64| if cm.trials == 0 { 0.0 } else { s as f64 / cm.trials as f64 };
    summary.countermeasure = Some(CountermeasureResult {
        max_delay_cycles: cm.max_delay_cycles,
        trials: cm.trials,
        combo,
        baseline_successes: baseline,
        delayed_successes: delayed,
        baseline_rate: rate(baseline),
        delayed_rate: rate(delayed),
        factor: (delayed > 0).then(|| baseline as f64 / delayed as f64),
    });
    finish(engine, summary, out, None)
}

/// Detection of a wide fault and its split counterpart by a sampling BOD,
/// over every sample phase of each configured period.
pub fn run_bod_eval(cfg: &CampaignConfig, out: Option<&Path>) -> Result<CampaignSummary, CampaignError> {
    cfg.validate()?;
    let be: BodEvalConfig = cfg.bod_eval.clone().unwrap_or_default();
    let s = cfg.scenario()?;
    let d = &cfg.domains;
    let k = u64::from(cfg.oversampling());
    let offset = be
        .offset
        .unwrap_or((s.targets()[0].cycle(&s) - s.trigger_cycle()) * k);
    let wide_fault = FaultSpec::absolute(offset, ticks_from_ns(d, be.wide_ns))?;
    let widths: Vec<u64> = be.split_ns.iter().map(|&ns| ticks_from_ns(d, ns)).collect();
    let gaps: Vec<u64> = be.gaps_ns.iter().map(|&ns| ticks_from_ns(d, ns)).collect();
    let split = to_combo(&translate_to_relative(&split_fault(&wide_fault, &widths, &gaps)?)?);
    let wide = vec![UnitParams::new(wide_fault.offset, wide_fault.width)];

    let mut summary = CampaignSummary::new("bod", s.name(), cfg);
    let mut engine = engine(cfg, s, out)?;
    let mut periods = Vec::new();
    for &period_ns in &be.periods_ns {
        let p = ticks_from_ns(d, period_ns);
        if p == 0 {
            return Err(CampaignError::Config(format!("BOD period {period_ns} ns rounds to zero ticks")));
        }
        let (mut wide_hits, mut split_hits, mut undetected) = (0, 0, Vec::new());
        for phase in 0..p {
            engine.set_bod(BodModel {
                enabled: true,
                sample_period: p,
                sample_phase: phase,
                detect_width_threshold: cfg.bod.detect_width_threshold,
            });
            let o = engine.run_batch(Step::Evaluate, &[wide.clone(), split.clone()], StopRule::Never)?;
            if o[0].outcome == OutcomeClass::BodReset {
                wide_hits += 1;
            }
            if o[1].outcome == OutcomeClass::BodReset {
                split_hits += 1;
            } else {
                undetected.push(phase);
            }
        }
        periods.push(BodPeriodRow {
            period_ns,
            period_ticks: p,
            phases: p,
            wide_detected: wide_hits,
            split_detected: split_hits,
            split_undetected_phases: undetected,
            wide_detection_rate: wide_hits as f64 / p as f64,
            split_detection_rate: split_hits as f64 / p as f64,
        });
    }
    summary.bod = Some(BodEvalResult { wide, split, periods });
    finish(engine, summary, out, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{read_records, ModelSpec, WideNarrowConfig};
    use crate::dut::FaultResponseModel;
    use crate::search::SearchSpace;

    fn dup_cfg(name: &str) -> CampaignConfig {
        let mut cfg = CampaignConfig::for_scenario(name);
        cfg.domains.oversampling = 10;
        cfg.model = ModelSpec::Preset("noise_free".into());
        cfg.search.space = Some(SearchSpace::new(0, 700, 1, vec![10]).unwrap());
        cfg.search.psi = Some(10);
        cfg.search.integrate_stride = Some(5);
        cfg.search.trials_per_combo = 1;
        cfg.search.n_rank = 10;
        cfg.search.n_final = 100;
        cfg
    }

    #[test]
    fn flow_on_noise_free_dup_registers() {
        let cfg = dup_cfg("dup_registers_33_19");
        let s = run_attack_flow(&cfg, None).unwrap();
        let best = s.best.clone().unwrap();
        assert_eq!(best.success_rate, 1.0);
        assert_eq!(best.combo, vec![UnitParams::new(330, 10), UnitParams::new(190, 10)]);
        let cascade = s.cascade.clone().unwrap();
        assert_eq!(cascade.len(), 2);
        assert_eq!(cascade[1].rate, 1.0);
        assert_eq!(s.step_trials(Step::Sweep), 700);
        assert_eq!(s.step_trials(Step::Integrate), 25);
        assert_eq!(s.total_trials, 700 + 25 + 10 + 100);
    }

    #[test]
    fn flow_transfers_to_non_cooperative_build() {
        let mut cfg = dup_cfg("dup_registers_7_43_noncoop");
        cfg.transfer_from = Some("dup_registers_7_43".into());
        let s = run_attack_flow(&cfg, None).unwrap();
        let t = s.transferred.unwrap();
        assert_eq!(t.combo.success_rate, 1.0);
        assert_eq!(t.combo.combo[0].offset, 70 + 60);
        let mut bad = dup_cfg("dup_registers_7_43_noncoop");
        bad.transfer_from = None;
        assert!(matches!(run_attack_flow(&bad, None), Err(CampaignError::Config(_))));
    }

    #[test]
    fn zero_budget_sweep_persists_empty_summary() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = dup_cfg("dup_registers_7_43");
        cfg.search.sweep_passes = 0;
        let err = run_attack_flow(&cfg, Some(dir.path())).unwrap_err();
        assert!(err.is_search_failure());
        let CampaignError::Search { summary, .. } = err else { panic!() };
        assert_eq!(summary.total_trials, 0);
        let saved = CampaignSummary::load(&dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(saved.error.unwrap().contains("FIRST"));
        assert_eq!(fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap(), "");
    }

    #[test]
    fn records_match_reported_trials() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dup_cfg("dup_registers_4_50");
        let s = run_attack_flow(&cfg, Some(dir.path())).unwrap();
        let records = read_records(&dir.path().join(RESULTS_FILE)).unwrap();
        assert_eq!(records.len() as u64, s.total_trials);
        assert!(records.iter().enumerate().all(|(i, r)| r.trial == i as u64));
        assert!(dir.path().join(crate::campaign::REPORT_FILE).exists());
    }

    #[test]
    fn comparison_reports_ratio() {
        let mut cfg = dup_cfg("dup_registers_4_50");
        cfg.search.space = Some(SearchSpace::new(0, 1000, 1, vec![10]).unwrap());
        let s = run_comparison(&cfg, None).unwrap();
        let c = s.comparison.unwrap();
        assert!(c.exhaustive_found && c.sweeping_found);
        // First success at R0 = 40, R1 = 500.
        assert_eq!(c.exhaustive_trials, 40 * 1000 + 500 + 1);
        assert_eq!(c.sweeping_trials, 1000 + 25);
        assert!(c.ratio.unwrap() > 20.0);
    }

    #[test]
    fn single_fault_comparison_is_about_even() {
        let mut cfg = CampaignConfig::for_scenario("bod_scenario");
        cfg.model = ModelSpec::Preset("noise_free".into());
        cfg.search.space = Some(SearchSpace::new(0, 120, 1, vec![20]).unwrap());
        cfg.search.psi = Some(0);
        cfg.search.trials_per_combo = 1;
        let c = run_comparison(&cfg, None).unwrap().comparison.unwrap();
        // Exhaustive stops at offset 60; sweeping always scans the full range.
        assert_eq!(c.exhaustive_trials, 61);
        assert_eq!(c.sweeping_trials, 121);
        let r = c.ratio.unwrap();
        assert!((0.4..=1.0).contains(&r), "{r}");
    }

    #[test]
    fn comparison_records_missing_exhaustive_success() {
        let mut cfg = dup_cfg("dup_registers_33_19");
        cfg.search.exhaustive_budget = 1000;
        let c = run_comparison(&cfg, None).unwrap().comparison.unwrap();
        assert!(!c.exhaustive_found);
        assert_eq!(c.exhaustive_trials, 1000);
        assert!(c.ratio.is_none());
    }

    #[test]
    fn wide_vs_narrow_limits() {
        let mut cfg = CampaignConfig::for_scenario("successive_shifts");
        cfg.wide_vs_narrow = Some(WideNarrowConfig {
            trials: 2_000,
            ..WideNarrowConfig::default()
        });
        cfg.model = ModelSpec::Explicit(FaultResponseModel {
            p_lockup_per_fault: 0.0,
            ..FaultResponseModel::default()
        });
        let rows = run_wide_vs_narrow(&cfg, None).unwrap().wide_vs_narrow.unwrap();
        for r in &rows {
            assert_eq!(r.invalid, 0.0);
            let sum = r.none + r.only_first + r.only_second + r.both + r.invalid;
            assert!((sum - 1.0).abs() < 1e-9);
        }
        cfg.model = ModelSpec::Explicit(FaultResponseModel {
            p_max_skip: 0.0,
            p_lockup_per_fault: 0.0,
            ..FaultResponseModel::default()
        });
        let rows = run_wide_vs_narrow(&cfg, None).unwrap().wide_vs_narrow.unwrap();
        assert!(rows.iter().all(|r| r.none == 1.0));
        assert!(run_wide_vs_narrow(&CampaignConfig::for_scenario("tzm_full_attack"), None).is_err());
    }

    #[test]
    fn countermeasure_limits() {
        let mut cfg = CampaignConfig::for_scenario("dup_registers_7_43");
        cfg.model = ModelSpec::Preset("noise_free".into());
        cfg.countermeasure = Some(CountermeasureConfig {
            max_delay_cycles: 0,
            trials: 500,
            combo: None,
        });
        let r = run_countermeasure_eval(&cfg, None).unwrap().countermeasure.unwrap();
        assert_eq!(r.factor, Some(1.0));

        cfg.scenario = Some("bod_scenario".into());
        cfg.countermeasure = Some(CountermeasureConfig {
            max_delay_cycles: 9,
            trials: 50_000,
            combo: None,
        });
        let r = run_countermeasure_eval(&cfg, None).unwrap().countermeasure.unwrap();
        let f = r.factor.unwrap();
        assert!((f - 10.0).abs() < 1.0, "{f}");
    }

    #[test]
    fn bod_eval_finds_blind_phase() {
        let mut cfg = CampaignConfig::for_scenario("bod_scenario");
        cfg.bod_eval = Some(BodEvalConfig {
            periods_ns: vec![400.0, 1000.0],
            ..BodEvalConfig::default()
        });
        let r = run_bod_eval(&cfg, None).unwrap().bod.unwrap();
        let p400 = &r.periods[0];
        assert_eq!(p400.period_ticks, 80);
        assert_eq!(p400.wide_detected, 80);
        assert_eq!(p400.split_detected, 60);
        assert_eq!(p400.split_undetected_phases.len(), 20);
        assert!(r.periods[1].wide_detected < r.periods[1].phases);
        assert_eq!(r.split.len(), 2);
        assert_eq!(r.split[1], UnitParams::new(20, 28));
    }
}
