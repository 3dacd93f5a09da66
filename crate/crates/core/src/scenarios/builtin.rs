//! Built-in scenario presets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ScenarioError, ScenarioKind, ScenarioSpec, TargetDef};
use crate::dut::{Effect, Instruction};

/// Compile-time delay pairs of the duplicate-register builds.
pub const DUP_PRESETS: [(u64, u64); 4] = [(7, 43), (33, 19), (4, 50), (22, 1)];

/// Upper bound of the per-execution stall of the randomized TrustZone build.
pub const TZM_RANDOM_DELAY_MAX: u32 = 9;

/// Accumulates a straight-line program, one instruction per cycle.
struct Program {
    instructions: Vec<Instruction>,
}

impl Program {
    fn new() -> Self {
        Self {
            instructions: Vec::new(),
        }
    }

    fn cycle(&self) -> u64 {
        self.instructions.len() as u64
    }

    fn push(&mut self, effect: Effect) -> u64 {
        let cycle = self.cycle();
        self.instructions.push(Instruction {
            index: self.instructions.len(),
            cycle,
            effect,
            protected: false,
        });
        cycle
    }

    fn repeat(&mut self, effect: Effect, n: u64) {
        for _ in 0..n {
            self.push(effect);
        }
    }
}

fn target(label: &str, effect: Effect, cycle: u64, span: usize) -> TargetDef {
    TargetDef {
        label: label.to_string(),
        effect,
        cycle,
        span,
    }
}

fn build(
    name: String,
    kind: ScenarioKind,
    program: Program,
    targets: &[TargetDef],
    cooperative: bool,
    trigger_cycle: u64,
) -> ScenarioSpec {
    ScenarioSpec::new(name, kind, program.instructions, targets, cooperative, trigger_cycle)
        .expect("builtin scenario is well formed")
}

/// Register + duplicate register with `d1` delay cycles before the first
/// store and `d2` between the stores.
///
/// The cooperative build pulses the trigger right before the first delay;
/// the non-cooperative one has to be triggered at reset.
pub fn dup_registers(d1: u64, d2: u64, cooperative: bool) -> ScenarioSpec {
    let mut p = Program::new();
    p.repeat(Effect::Plain, 4);
    p.push(Effect::Plain); // set_trigger
    p.push(Effect::Plain); // reset_trigger
    let trigger = if cooperative { p.cycle() } else { 0 };
    p.repeat(Effect::Delay, d1);
    let first = p.push(Effect::StoreAhbOriginal);
    p.repeat(Effect::Delay, d2);
    let second = p.push(Effect::StoreAhbDuplicate);
    // Tail before the result checks, which are never glitched.
    p.repeat(Effect::Delay, 3);
    let name = if cooperative {
        format!("dup_registers_{d1}_{d2}")
    } else {
        format!("dup_registers_{d1}_{d2}_noncoop")
    };
    build(
        name,
        ScenarioKind::DupRegisters,
        p,
        &[
            target("FIRST", Effect::StoreAhbOriginal, first, 1),
            target("SECOND", Effect::StoreAhbDuplicate, second, 1),
        ],
        cooperative,
        trigger,
    )
    .with_provenance(Some(vec![d1, d2]), None)
}

/// Duplicate-register build whose delays are drawn from `seed`, each in
/// `1..=50` cycles.
pub fn dup_registers_from_seed(seed: u64, cooperative: bool) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d1 = rng.random_range(1..=50);
    let d2 = rng.random_range(1..=50);
    let suffix = if cooperative { "" } else { "_noncoop" };
    dup_registers(d1, d2, cooperative)
        .with_name(format!("dup_registers_seed_{seed}{suffix}"))
        .with_provenance(Some(vec![d1, d2]), Some(seed))
}

/// `LSRS` directly followed by `LSLS` on `a = 0x13`.
pub fn successive_shifts() -> ScenarioSpec {
    let mut p = Program::new();
    p.push(Effect::Plain);
    p.push(Effect::Plain); // set_trigger
    p.push(Effect::Plain); // reset_trigger
    let trigger = p.cycle();
    let lsrs = p.push(Effect::ClearLsbShift1);
    let lsls = p.push(Effect::ClearLsbShift2);
    p.push(Effect::Plain); // return a
    build(
        "successive_shifts".into(),
        ScenarioKind::SuccessiveShifts,
        p,
        &[
            target("LSRS", Effect::ClearLsbShift1, lsrs, 1),
            target("LSLS", Effect::ClearLsbShift2, lsls, 1),
        ],
        true,
        trigger,
    )
}

/// Secure boot code that enables the SAU and the secure AHB controller
/// (original then duplicate register) and clears the LSB of the NS entry
/// point before `BXNS`.
pub fn tzm_full_attack() -> ScenarioSpec {
    let mut p = Program::new();
    p.repeat(Effect::Plain, 2);
    let trigger = p.cycle();
    // SAU region setup, then the enable.
    p.repeat(Effect::Plain, 8);
    p.push(Effect::Plain); // MOVS r1, #1
    let sau = p.push(Effect::StoreSauCtrl);
    // Secure AHB controller configuration.
    p.repeat(Effect::Plain, 10);
    p.push(Effect::Plain); // MOVW r1, ...
    let ahb = p.push(Effect::StoreAhbOriginal);
    p.repeat(Effect::Plain, 6);
    p.push(Effect::Plain); // MOVW r1, ...
    let dupl = p.push(Effect::StoreAhbDuplicate);
    // Rest of the secure main, then the jump to the NS image.
    p.repeat(Effect::Plain, 12);
    let lsrs = p.push(Effect::ClearLsbShift1);
    p.push(Effect::ClearLsbShift2);
    p.repeat(Effect::Plain, 2);
    p.push(Effect::Plain); // BL
    p.push(Effect::BranchNonSecure);
    p.push(Effect::Plain); // B .
    build(
        "tzm_full_attack".into(),
        ScenarioKind::TrustZone,
        p,
        &[
            target("SAU", Effect::StoreSauCtrl, sau, 1),
            target("AHB_CTRL", Effect::StoreAhbOriginal, ahb, 1),
            target("DUPL", Effect::StoreAhbDuplicate, dupl, 1),
            target("PE", Effect::ClearLsbShift1, lsrs, 2),
        ],
        true,
        trigger,
    )
}

/// [`tzm_full_attack`] with a random stall in front of every target.
pub fn tzm_randomized() -> ScenarioSpec {
    tzm_full_attack()
        .with_protected_targets()
        .with_random_delays(TZM_RANDOM_DELAY_MAX)
        .with_name("tzm_randomized")
}

/// Single SAU store shortly after the trigger, used against a sampling
/// brown-out detector.
pub fn bod_scenario() -> ScenarioSpec {
    let mut p = Program::new();
    p.repeat(Effect::Plain, 4);
    let trigger = p.cycle();
    p.repeat(Effect::Plain, 3);
    let sau = p.push(Effect::StoreSauCtrl);
    p.repeat(Effect::Plain, 2);
    build(
        "bod_scenario".into(),
        ScenarioKind::Generic,
        p,
        &[target("SAU", Effect::StoreSauCtrl, sau, 1)],
        true,
        trigger,
    )
}

/// Every named preset.
pub fn all() -> Vec<ScenarioSpec> {
    let mut out = vec![
        dup_registers(7, 43, true).with_name("dup_registers_coop"),
        dup_registers(7, 43, false).with_name("dup_registers_noncoop"),
    ];
    for (d1, d2) in DUP_PRESETS {
        out.push(dup_registers(d1, d2, true));
        out.push(dup_registers(d1, d2, false));
    }
    out.extend([
        successive_shifts(),
        tzm_full_attack(),
        tzm_randomized(),
        bod_scenario(),
    ]);
    out
}

/// Looks up a preset. Besides the names of [`all`], accepts
/// `dup_registers_<d1>_<d2>[_noncoop]` and `dup_registers_seed_<n>[_noncoop]`.
pub fn by_name(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    if let Some(s) = all().into_iter().find(|s| s.name() == name) {
        return Ok(s);
    }
    let unknown = || ScenarioError::UnknownBuiltin(name.to_string());
    let rest = name.strip_prefix("dup_registers_").ok_or_else(unknown)?;
    let (rest, cooperative) = match rest.strip_suffix("_noncoop") {
        Some(r) => (r, false),
        None => (rest, true),
    };
    if let Some(seed) = rest.strip_prefix("seed_") {
        let seed = seed.parse().map_err(|_| unknown())?;
        return Ok(dup_registers_from_seed(seed, cooperative));
    }
    let (a, b) = rest.split_once('_').ok_or_else(unknown)?;
    let d1 = a.parse().map_err(|_| unknown())?;
    let d2 = b.parse().map_err(|_| unknown())?;
    Ok(dup_registers(d1, d2, cooperative))
}
