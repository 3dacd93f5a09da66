use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::chain::{simulate_chain, ChainConfig, ChainError};
use crate::dut::{apply_random_delays, execute_trial, BodModel, FaultResponseModel};
use crate::scenarios::{OutcomeClass, ScenarioSpec};
use crate::search::{Combo, SearchError, Step, StopRule, TrialExecutor, TrialOutcome};
use crate::seed::{mix, trial_seed};

/// Stream selector for the per-trial random delay schedule.
const DELAY_STREAM: u64 = 0xD1A7;

/// One persisted trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub trial: u64,
    pub step: Step,
    pub combo: Vec<[u64; 2]>,
    pub outcome: OutcomeClass,
    pub hits: Vec<bool>,
    pub seed: u64,
}

/// Where trial records go.
#[derive(Debug)]
pub enum Sink {
    /// Only counted.
    Null,
    Memory(Vec<CampaignRecord>),
    /// One JSON object per line.
    Jsonl(BufWriter<File>),
}

impl Sink {
    pub fn jsonl(path: &Path) -> io::Result<Self> {
        Ok(Sink::Jsonl(BufWriter::new(File::create(path)?)))
    }

    fn wants_records(&self) -> bool {
        !matches!(self, Sink::Null)
    }

    fn write(&mut self, records: Vec<CampaignRecord>) -> Result<(), CampaignError> {
        match self {
            Sink::Null => {}
            Sink::Memory(v) => v.extend(records),
            Sink::Jsonl(w) => {
                for r in &records {
                    serde_json::to_writer(&mut *w, r)?;
                    w.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::Jsonl(w) => w.flush(),
            _ => Ok(()),
        }
    }
}

/// Executes one trial: chain → DUT → classification.
pub fn run_trial(
    scenario: &ScenarioSpec,
    oversampling: u32,
    combo: &Combo,
    model: &FaultResponseModel,
    bod: &BodModel,
    seed: u64,
) -> Result<TrialOutcome, ChainError> {
    let delayed;
    let s = if scenario.random_delay_max() > 0 {
        delayed = apply_random_delays(scenario, scenario.random_delay_max(), mix(seed, DELAY_STREAM));
        &delayed
    } else {
        scenario
    };
    let windows = if combo.is_empty() {
        Vec::new()
    } else {
        simulate_chain(&ChainConfig::new(combo.clone()), s.trigger_tick(oversampling))?.windows
    };
    let raw = execute_trial(s, oversampling, &windows, model, bod, seed);
    Ok(TrialOutcome {
        outcome: s.classify(&raw),
        hits: s.hits(&raw),
    })
}

/// Parallel trial executor with deterministic seeding and ordered
/// persistence.
///
/// Trial `i` of step `s` runs with seed `trial_seed(master, s, i)`; results
/// are collected in index order before they reach the sink, so the output
/// does not depend on the number of worker threads.
pub struct Engine {
    scenario: ScenarioSpec,
    oversampling: u32,
    model: FaultResponseModel,
    bod: BodModel,
    master_seed: u64,
    pool: Option<rayon::ThreadPool>,
    sink: Sink,
    seed_index: BTreeMap<Step, u64>,
    step_trials: BTreeMap<Step, u64>,
    next_trial: u64,
}

impl Engine {
    pub fn new(
        scenario: ScenarioSpec,
        oversampling: u32,
        model: FaultResponseModel,
        bod: BodModel,
        master_seed: u64,
        jobs: usize,
        sink: Sink,
    ) -> Result<Self, CampaignError> {
        if oversampling == 0 {
            return Err(CampaignError::Config("oversampling must be at least 1".into()));
        }
        if jobs == 0 {
            return Err(CampaignError::Config("jobs must be at least 1".into()));
        }
        model.validate()?;
        bod.validate()?;
        let pool = if jobs > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| CampaignError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            scenario,
            oversampling,
            model,
            bod,
            master_seed,
            pool,
            sink,
            seed_index: BTreeMap::new(),
            step_trials: BTreeMap::new(),
            next_trial: 0,
        })
    }

    /// Engine keeping its records in memory.
    pub fn in_memory(
        scenario: ScenarioSpec,
        oversampling: u32,
        model: FaultResponseModel,
        bod: BodModel,
        master_seed: u64,
        jobs: usize,
    ) -> Result<Self, CampaignError> {
        Self::new(scenario, oversampling, model, bod, master_seed, jobs, Sink::Memory(Vec::new()))
    }

    pub fn records(&self) -> &[CampaignRecord] {
        match &self.sink {
            Sink::Memory(v) => v,
            _ => &[],
        }
    }

    /// Trials run per step.
    pub fn step_trials(&self) -> &BTreeMap<Step, u64> {
        &self.step_trials
    }

    pub fn total_trials(&self) -> u64 {
        self.next_trial
    }

    pub fn model(&self) -> &FaultResponseModel {
        &self.model
    }

    pub fn set_scenario(&mut self, scenario: ScenarioSpec) {
        self.scenario = scenario;
    }

    pub fn set_bod(&mut self, bod: BodModel) {
        self.bod = bod;
    }

    /// Restarts the seed sequence of `step`, so the next trials of that step
    /// reuse the seeds of the first ones. Record indices keep counting.
    pub fn rewind_seeds(&mut self, step: Step) {
        self.seed_index.remove(&step);
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.sink.flush()
    }

    pub fn into_sink(mut self) -> io::Result<Sink> {
        self.sink.flush()?;
        Ok(self.sink)
    }

    fn execute(&self, step: Step, base: u64, combos: &[Combo]) -> Result<Vec<(u64, TrialOutcome)>, ChainError> {
        let run = |(i, combo): (usize, &Combo)| {
            let seed = trial_seed(self.master_seed, step.id(), base + i as u64);
            run_trial(&self.scenario, self.oversampling, combo, &self.model, &self.bod, seed).map(|o| (seed, o))
        };
        match &self.pool {
            Some(pool) => pool.install(|| combos.par_iter().enumerate().map(run).collect()),
            None => combos.iter().enumerate().map(run).collect(),
        }
    }
}

impl TrialExecutor for Engine {
    fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    fn oversampling(&self) -> u32 {
        self.oversampling
    }

    fn run_batch(&mut self, step: Step, combos: &[Combo], stop: StopRule) -> Result<Vec<TrialOutcome>, SearchError> {
        let base = self.seed_index.get(&step).copied().unwrap_or(0);
        let mut results = self
            .execute(step, base, combos)
            .map_err(|e| SearchError::Executor(e.to_string()))?;
        if stop == StopRule::FirstSuccess {
            if let Some(i) = results.iter().position(|(_, o)| o.outcome.is_success()) {
                results.truncate(i + 1);
            }
        }
        let n = results.len() as u64;
        if self.sink.wants_records() {
            let first = self.next_trial;
            let records = results
                .iter()
                .zip(combos)
                .enumerate()
                .map(|(i, ((seed, o), combo))| CampaignRecord {
                    trial: first + i as u64,
                    step,
                    combo: combo.iter().map(|u| [u.offset, u.width]).collect(),
                    outcome: o.outcome.clone(),
                    hits: o.hits.clone(),
                    seed: *seed,
                })
                .collect();
            self.sink
                .write(records)
                .map_err(|e| SearchError::Executor(e.to_string()))?;
        }
        self.next_trial += n;
        *self.seed_index.entry(step).or_default() += n;
        *self.step_trials.entry(step).or_default() += n;
        Ok(results.into_iter().map(|(_, o)| o).collect())
    }
}
