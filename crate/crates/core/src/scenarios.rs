//! Firmware scenarios, their success function (SF) and partial success
//! functions (PSFs).
//!
//! A scenario pairs an instruction stream with the fault targets an attacker
//! wants to skip. The firmware reports a response word; the SF and PSFs only
//! ever look at that word, the way a host would.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dut::{Effect, Instruction, RawTrialResult, SecurityState};
use crate::timing::Ticks;

pub mod builtin;

/// Version of the scenario file layout.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Returned by the duplicate-register firmware (cooperative build).
pub mod dup_response {
    pub const FAILURE: u32 = 0;
    pub const FIRST: u32 = 1;
    pub const SECOND: u32 = 2;
    pub const SUCCESS: u32 = 3;
}

/// Returned by the shift-out/shift-in firmware, keyed by which shifts ran.
pub mod shift_response {
    pub const NONE_SKIPPED: u32 = 0x12;
    pub const ONLY_LSLS_SKIPPED: u32 = 0x9;
    pub const ONLY_LSRS_SKIPPED: u32 = 0x38;
    pub const BOTH_SKIPPED: u32 = 0x13;
}

/// Bits of the TrustZone response word; a set bit means the protection is
/// still in place.
pub mod tzm_response {
    pub const SAU_ACTIVE: u32 = 1 << 0;
    pub const AHB_ORIGINAL: u32 = 1 << 1;
    pub const AHB_DUPLICATE: u32 = 1 << 2;
    pub const LSB_CLEARED: u32 = 1 << 3;
    pub const LOCKED_UP: u32 = 1 << 4;
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario `{0}` has no targets")]
    NoTargets(String),
    #[error("duplicate target label `{0}`")]
    DuplicateLabel(String),
    #[error("instruction {index}: cycles must be strictly increasing")]
    NonMonotonicCycles { index: usize },
    #[error("instruction {index} carries index {found}")]
    BadIndex { index: usize, found: usize },
    #[error("target `{label}`: no {effect:?} instruction at cycle {cycle}")]
    UnresolvedTarget { label: String, effect: Effect, cycle: u64 },
    #[error("target `{label}` lies before the trigger cycle")]
    TargetBeforeTrigger { label: String },
    #[error("target `{label}` span runs past the instruction stream")]
    BadSpan { label: String },
    #[error("unsupported scenario schema version {0}")]
    SchemaVersion(u32),
    #[error("scenario file needs either `instructions` or duplicate-register `delays`/`seed`")]
    NoInstructions,
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error("{0}")]
    Layout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Determines how the firmware encodes its response word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Register + duplicate register, reported through `res_t`.
    DupRegisters,
    /// `a = 0x13` through `LSRS`/`LSLS`, the final `a` is returned.
    SuccessiveShifts,
    /// TrustZone-M setup; the word is a bitfield of protection flags
    /// sampled at `BXNS`.
    TrustZone,
    /// Bit `i` of the word is set when target `i` was skipped.
    Generic,
}

/// One fault target: `span` consecutive instructions that must all be
/// skipped for the target to count as hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    label: String,
    effect: Effect,
    instruction: usize,
    span: usize,
}

impl Target {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn effect(&self) -> Effect {
        self.effect
    }

    /// Index of the first instruction of the target.
    pub fn instruction(&self) -> usize {
        self.instruction
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn cycle(&self, scenario: &ScenarioSpec) -> u64 {
        scenario.instructions[self.instruction].cycle
    }

    /// Ground truth: every instruction of the target was skipped.
    pub fn hit_in(&self, skipped: &[bool]) -> bool {
        skipped[self.instruction..self.instruction + self.span]
            .iter()
            .all(|&s| s)
    }
}

/// Classified result of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Failure,
    /// Labels whose PSF fired, in target order.
    PartialHit(Vec<String>),
    Success,
    Invalid,
    NoResponse,
    BodReset,
}

impl OutcomeClass {
    pub fn is_success(&self) -> bool {
        matches!(self, OutcomeClass::Success)
    }

    /// The firmware answered (no lockup, hang or brown-out reset).
    pub fn responded(&self) -> bool {
        matches!(
            self,
            OutcomeClass::Failure | OutcomeClass::PartialHit(_) | OutcomeClass::Success
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            OutcomeClass::Failure => "failure",
            OutcomeClass::PartialHit(_) => "partial_hit",
            OutcomeClass::Success => "success",
            OutcomeClass::Invalid => "invalid",
            OutcomeClass::NoResponse => "no_response",
            OutcomeClass::BodReset => "bod_reset",
        }
    }
}

/// Immutable description of an executable firmware scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    name: String,
    kind: ScenarioKind,
    instructions: Vec<Instruction>,
    targets: Vec<Target>,
    cooperative: bool,
    trigger_cycle: u64,
    random_delay_max: u32,
    delays: Option<Vec<u64>>,
    seed: Option<u64>,
}

/// Target as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDef {
    pub label: String,
    pub effect: Effect,
    pub cycle: u64,
    #[serde(default = "one")]
    pub span: usize,
}

fn one() -> usize {
    1
}

fn schema_v1() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

/// Instruction as written in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionDef {
    pub cycle: u64,
    pub effect: Effect,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub protected: bool,
}

/// On-disk scenario layout (`schema_version` 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default = "schema_v1")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "generic_kind")]
    pub kind: ScenarioKind,
    pub cooperative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_cycle: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<Vec<InstructionDef>>,
    #[serde(default)]
    pub targets: Vec<TargetDef>,
    /// Compile-time delays of a duplicate-register build.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<u64>>,
    /// Seed the delays were drawn from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub random_delay_max: u32,
}

fn generic_kind() -> ScenarioKind {
    ScenarioKind::Generic
}

/// Checks instruction indices and strictly increasing cycles.
pub fn validate_instructions(instructions: &[Instruction]) -> Result<(), ScenarioError> {
    for (i, ins) in instructions.iter().enumerate() {
        if ins.index != i {
            return Err(ScenarioError::BadIndex {
                index: i,
                found: ins.index,
            });
        }
        if i > 0 && instructions[i - 1].cycle >= ins.cycle {
            return Err(ScenarioError::NonMonotonicCycles { index: i });
        }
    }
    Ok(())
}

impl ScenarioSpec {
    /// Builds and validates a scenario. Targets are given by cycle and
    /// resolved to the instruction carrying their effect.
    pub fn new(
        name: impl Into<String>,
        kind: ScenarioKind,
        instructions: Vec<Instruction>,
        targets: &[TargetDef],
        cooperative: bool,
        trigger_cycle: u64,
    ) -> Result<Self, ScenarioError> {
        let name = name.into();
        validate_instructions(&instructions)?;
        if targets.is_empty() {
            return Err(ScenarioError::NoTargets(name));
        }
        let mut resolved: Vec<Target> = Vec::with_capacity(targets.len());
        for def in targets {
            if resolved.iter().any(|t| t.label == def.label) {
                return Err(ScenarioError::DuplicateLabel(def.label.clone()));
            }
            let index = instructions
                .iter()
                .position(|i| i.cycle == def.cycle && i.effect == def.effect)
                .ok_or_else(|| ScenarioError::UnresolvedTarget {
                    label: def.label.clone(),
                    effect: def.effect,
                    cycle: def.cycle,
                })?;
            if def.span == 0 || index + def.span > instructions.len() {
                return Err(ScenarioError::BadSpan {
                    label: def.label.clone(),
                });
            }
            if def.cycle < trigger_cycle {
                return Err(ScenarioError::TargetBeforeTrigger {
                    label: def.label.clone(),
                });
            }
            resolved.push(Target {
                label: def.label.clone(),
                effect: def.effect,
                instruction: index,
                span: def.span,
            });
        }
        let spec = Self {
            name,
            kind,
            instructions,
            targets: resolved,
            cooperative,
            trigger_cycle,
            random_delay_max: 0,
            delays: None,
            seed: None,
        };
        spec.check_kind_layout()?;
        Ok(spec)
    }

    fn check_kind_layout(&self) -> Result<(), ScenarioError> {
        let effects: Vec<Effect> = self.targets.iter().map(|t| t.effect).collect();
        let ok = match self.kind {
            ScenarioKind::DupRegisters => {
                effects == [Effect::StoreAhbOriginal, Effect::StoreAhbDuplicate]
            }
            ScenarioKind::SuccessiveShifts => {
                effects == [Effect::ClearLsbShift1, Effect::ClearLsbShift2]
            }
            ScenarioKind::TrustZone => {
                effects
                    == [
                        Effect::StoreSauCtrl,
                        Effect::StoreAhbOriginal,
                        Effect::StoreAhbDuplicate,
                        Effect::ClearLsbShift1,
                    ]
            }
            ScenarioKind::Generic => self.targets.len() <= 32,
        };
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Layout(format!(
                "targets {effects:?} do not fit a {:?} scenario",
                self.kind
            )))
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn target(&self, label: &str) -> Option<&Target> {
        self.targets.iter().find(|t| t.label == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.targets.iter().map(|t| t.label.clone()).collect()
    }

    pub fn cooperative(&self) -> bool {
        self.cooperative
    }

    pub fn trigger_cycle(&self) -> u64 {
        self.trigger_cycle
    }

    /// Upper bound of the per-execution stall inserted before protected
    /// instructions (0: countermeasure off).
    pub fn random_delay_max(&self) -> u32 {
        self.random_delay_max
    }

    pub fn delays(&self) -> Option<&[u64]> {
        self.delays.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn trigger_tick(&self, oversampling: u32) -> Ticks {
        self.trigger_cycle * u64::from(oversampling)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_random_delays(mut self, max_delay_cycles: u32) -> Self {
        self.random_delay_max = max_delay_cycles;
        self
    }

    pub fn with_provenance(mut self, delays: Option<Vec<u64>>, seed: Option<u64>) -> Self {
        self.delays = delays;
        self.seed = seed;
        self
    }

    /// Same firmware, attacked without a cooperating trigger or PSFs: the
    /// trigger moves to reset.
    pub fn non_cooperative(&self) -> Self {
        let mut s = self.clone();
        s.cooperative = false;
        s.trigger_cycle = 0;
        s.name = format!("{}_noncoop", self.name.trim_end_matches("_coop"));
        s
    }

    /// Marks the first instruction of every target as protected.
    pub fn with_protected_targets(mut self) -> Self {
        for t in &self.targets {
            self.instructions[t.instruction].protected = true;
        }
        self
    }

    /// Replaces the stream, moving target references through `remap`
    /// (old index → new index).
    pub(crate) fn with_instructions(&self, instructions: Vec<Instruction>, remap: &[usize]) -> Self {
        let targets = self
            .targets
            .iter()
            .map(|t| Target {
                instruction: remap[t.instruction],
                ..t.clone()
            })
            .collect();
        Self {
            instructions,
            targets,
            ..self.clone()
        }
    }

    /// Cycle distance between consecutive targets.
    pub fn target_spacing(&self) -> Vec<u64> {
        self.targets
            .windows(2)
            .map(|p| p[1].cycle(self) - p[0].cycle(self))
            .collect()
    }

    /// Absolute faults `(offset from trigger, width)` that cover each target
    /// exactly.
    pub fn nominal_faults(&self, oversampling: u32) -> Vec<(Ticks, Ticks)> {
        let k = u64::from(oversampling);
        self.targets
            .iter()
            .map(|t| {
                (
                    (t.cycle(self) - self.trigger_cycle) * k,
                    t.span as u64 * k,
                )
            })
            .collect()
    }

    /// Response word the firmware reports, or `None` if it never reaches
    /// its reporting code.
    pub fn response_word(&self, state: &SecurityState, skipped: &[bool]) -> Option<u32> {
        match self.kind {
            ScenarioKind::DupRegisters => {
                let first = !state.ahb_original;
                let second = !state.ahb_duplicate;
                Some(if self.cooperative {
                    match (first, second) {
                        (true, true) => dup_response::SUCCESS,
                        (true, false) => dup_response::FIRST,
                        (false, true) => dup_response::SECOND,
                        (false, false) => dup_response::FAILURE,
                    }
                } else {
                    u32::from(first && second)
                })
            }
            ScenarioKind::SuccessiveShifts => {
                let lsrs = self.targets[0].hit_in(skipped);
                let lsls = self.targets[1].hit_in(skipped);
                Some(match (lsrs, lsls) {
                    (false, false) => shift_response::NONE_SKIPPED,
                    (false, true) => shift_response::ONLY_LSLS_SKIPPED,
                    (true, false) => shift_response::ONLY_LSRS_SKIPPED,
                    (true, true) => shift_response::BOTH_SKIPPED,
                })
            }
            ScenarioKind::TrustZone => {
                let branch_skipped = self
                    .instructions
                    .iter()
                    .zip(skipped)
                    .any(|(i, &s)| i.effect == Effect::BranchNonSecure && s);
                if branch_skipped {
                    // Falls through into the `B .` loop.
                    return None;
                }
                let mut word = 0;
                for (flag, bit) in [
                    (state.sau_active, tzm_response::SAU_ACTIVE),
                    (state.ahb_original, tzm_response::AHB_ORIGINAL),
                    (state.ahb_duplicate, tzm_response::AHB_DUPLICATE),
                    (state.lsb_cleared, tzm_response::LSB_CLEARED),
                    (state.locked_up, tzm_response::LOCKED_UP),
                ] {
                    if flag {
                        word |= bit;
                    }
                }
                Some(word)
            }
            ScenarioKind::Generic => Some(
                self.targets
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.hit_in(skipped))
                    .fold(0, |w, (i, _)| w | (1 << i)),
            ),
        }
    }

    /// Success function: all targets hit at once.
    pub fn success(&self, response: u32) -> bool {
        match self.kind {
            ScenarioKind::DupRegisters if self.cooperative => response == dup_response::SUCCESS,
            ScenarioKind::DupRegisters => response == 1,
            ScenarioKind::SuccessiveShifts => response == shift_response::BOTH_SKIPPED,
            ScenarioKind::TrustZone => response == 0,
            ScenarioKind::Generic => response == (1u32 << self.targets.len()) - 1,
        }
    }

    /// Partial success function of target `index`; `None` when the setup is
    /// not cooperative and PSFs cannot be defined.
    pub fn partial_success(&self, index: usize, response: u32) -> Option<bool> {
        if !self.cooperative {
            return None;
        }
        Some(match self.kind {
            ScenarioKind::DupRegisters => {
                let bit = if index == 0 {
                    dup_response::FIRST
                } else {
                    dup_response::SECOND
                };
                response & bit != 0
            }
            ScenarioKind::SuccessiveShifts => {
                let hit = if index == 0 {
                    [shift_response::ONLY_LSRS_SKIPPED, shift_response::BOTH_SKIPPED]
                } else {
                    [shift_response::ONLY_LSLS_SKIPPED, shift_response::BOTH_SKIPPED]
                };
                hit.contains(&response)
            }
            ScenarioKind::TrustZone => {
                let bit = [
                    tzm_response::SAU_ACTIVE,
                    tzm_response::AHB_ORIGINAL,
                    tzm_response::AHB_DUPLICATE,
                    tzm_response::LSB_CLEARED,
                ][index];
                response & bit == 0
            }
            ScenarioKind::Generic => response & (1 << index) != 0,
        })
    }

    /// Ground-truth hit flag per target.
    pub fn hits(&self, raw: &RawTrialResult) -> Vec<bool> {
        self.targets.iter().map(|t| t.hit_in(&raw.skipped)).collect()
    }

    /// Maps a raw trial onto the outcome taxonomy. Evaluation order: BOD
    /// reset, lockup, missing response, SF, then PSFs.
    pub fn classify(&self, raw: &RawTrialResult) -> OutcomeClass {
        if raw.bod_reset {
            return OutcomeClass::BodReset;
        }
        if raw.state.locked_up {
            return OutcomeClass::Invalid;
        }
        let Some(response) = raw.response else {
            return OutcomeClass::NoResponse;
        };
        if self.success(response) {
            return OutcomeClass::Success;
        }
        let labels: Vec<String> = (0..self.targets.len())
            .filter(|&i| self.partial_success(i, response) == Some(true))
            .map(|i| self.targets[i].label.clone())
            .collect();
        if labels.is_empty() {
            OutcomeClass::Failure
        } else {
            OutcomeClass::PartialHit(labels)
        }
    }

    /// Labels credited by an outcome (all of them on success).
    pub fn credited_labels<'a>(&'a self, outcome: &'a OutcomeClass) -> Vec<&'a str> {
        match outcome {
            OutcomeClass::Success => self.targets.iter().map(|t| t.label.as_str()).collect(),
            OutcomeClass::PartialHit(l) => l.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: self.name.clone(),
            kind: self.kind,
            cooperative: self.cooperative,
            trigger_cycle: Some(self.trigger_cycle),
            instructions: Some(
                self.instructions
                    .iter()
                    .map(|i| InstructionDef {
                        cycle: i.cycle,
                        effect: i.effect,
                        protected: i.protected,
                    })
                    .collect(),
            ),
            targets: self
                .targets
                .iter()
                .map(|t| TargetDef {
                    label: t.label.clone(),
                    effect: t.effect,
                    cycle: t.cycle(self),
                    span: t.span,
                })
                .collect(),
            delays: self.delays.clone(),
            seed: self.seed,
            random_delay_max: self.random_delay_max,
        }
    }

    pub fn from_file(file: &ScenarioFile) -> Result<Self, ScenarioError> {
        if file.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(file.schema_version));
        }
        let spec = match &file.instructions {
            Some(defs) => {
                let instructions = defs
                    .iter()
                    .enumerate()
                    .map(|(index, d)| Instruction {
                        index,
                        cycle: d.cycle,
                        effect: d.effect,
                        protected: d.protected,
                    })
                    .collect();
                let trigger = file.trigger_cycle.unwrap_or(0);
                ScenarioSpec::new(
                    file.name.clone(),
                    file.kind,
                    instructions,
                    &file.targets,
                    file.cooperative,
                    trigger,
                )?
                .with_provenance(file.delays.clone(), file.seed)
            }
            None if file.kind == ScenarioKind::DupRegisters => {
                let mut s = match (&file.delays, file.seed) {
                    (Some(d), _) if d.len() >= 2 => builtin::dup_registers(d[0], d[1], file.cooperative),
                    (_, Some(seed)) => builtin::dup_registers_from_seed(seed, file.cooperative),
                    _ => return Err(ScenarioError::NoInstructions),
                };
                if let Some(t) = file.trigger_cycle {
                    s.trigger_cycle = t;
                }
                s.with_name(file.name.clone())
            }
            None => return Err(ScenarioError::NoInstructions),
        };
        Ok(spec.with_random_delays(file.random_delay_max))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)?;
        let file: ScenarioFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}
