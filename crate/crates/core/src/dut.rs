//! Device-under-test model.
//!
//! The firmware is a straight-line instruction stream, one instruction per
//! DUT cycle. A fault window that overlaps an instruction's cycle may cause
//! that instruction to be skipped; every window may also lock the core up.
//! The instructions that survive drive a TrustZone-M style security state
//! (SAU enable, secure AHB controller with its duplicate register, and the
//! LSB clearing in front of `BXNS`).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::FaultWindow;
use crate::scenarios::ScenarioSpec;
use crate::seed::mix;
use crate::timing::Ticks;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("probability `{name}` = {value} is outside [0, 1]")]
    Probability { name: String, value: f64 },
    #[error("BOD sample period must be at least one tick")]
    ZeroSamplePeriod,
    #[error("BOD sample phase {phase} must be below the period {period}")]
    PhaseOutOfRange { phase: Ticks, period: Ticks },
}

/// What an instruction does to the security state when it executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// `STR` to `SAU_CTRL`.
    StoreSauCtrl,
    /// `STR` activating the secure AHB controller (original register).
    StoreAhbOriginal,
    /// `STR` to the duplicate of the AHB controller register.
    StoreAhbDuplicate,
    /// `LSRS` of the shift-out/shift-in pair.
    ClearLsbShift1,
    /// `LSLS` of the shift-out/shift-in pair.
    ClearLsbShift2,
    /// `BXNS` into non-secure code.
    BranchNonSecure,
    /// Stall cycle (delay loops, inserted random delays).
    Delay,
    /// Anything without a modeled effect.
    Plain,
}

impl Effect {
    pub const ALL: [Effect; 8] = [
        Effect::StoreSauCtrl,
        Effect::StoreAhbOriginal,
        Effect::StoreAhbDuplicate,
        Effect::ClearLsbShift1,
        Effect::ClearLsbShift2,
        Effect::BranchNonSecure,
        Effect::Delay,
        Effect::Plain,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub index: usize,
    /// DUT cycle the instruction occupies.
    pub cycle: u64,
    pub effect: Effect,
    /// Receives a random stall in front of it when the delay countermeasure
    /// is active.
    #[serde(default)]
    pub protected: bool,
}

impl Instruction {
    /// Ticks `[start, end)` during which the instruction is in flight.
    pub fn occupancy(&self, oversampling: u32) -> (Ticks, Ticks) {
        let k = u64::from(oversampling);
        (self.cycle * k, (self.cycle + 1) * k)
    }
}

/// Configuration flags of the TrustZone-M protections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityState {
    pub sau_active: bool,
    pub ahb_original: bool,
    pub ahb_duplicate: bool,
    /// The NS branch target went through the shift-out/shift-in sequence.
    /// Only when both shifts are skipped does the address stay intact with
    /// its LSB set, which keeps `BXNS` from leaving the secure state.
    pub lsb_cleared: bool,
    pub locked_up: bool,
}

impl SecurityState {
    fn apply(&mut self, effect: Effect) {
        if self.locked_up {
            return;
        }
        match effect {
            Effect::StoreSauCtrl => self.sau_active = true,
            Effect::StoreAhbOriginal => self.ahb_original = true,
            Effect::StoreAhbDuplicate => self.ahb_duplicate = true,
            Effect::ClearLsbShift1 | Effect::ClearLsbShift2 => self.lsb_cleared = true,
            Effect::BranchNonSecure | Effect::Delay | Effect::Plain => {}
        }
    }

    /// Every protection is off and the branch keeps the secure target.
    pub fn fully_compromised(&self) -> bool {
        !self.locked_up
            && !self.sau_active
            && !self.ahb_original
            && !self.ahb_duplicate
            && !self.lsb_cleared
    }
}

fn default_one() -> f64 {
    1.0
}

/// Probabilistic response of the core to fault windows.
///
/// An instruction whose cycle overlaps a window is skipped with probability
/// `per_target_override[effect]` if present, else `p_max_skip * coverage`
/// where coverage is the fraction of its cycle under the crowbar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultResponseModel {
    pub p_max_skip: f64,
    pub p_lockup_per_fault: f64,
    #[serde(default)]
    pub per_target_override: BTreeMap<Effect, f64>,
    /// Selects an independent noise stream for identical trial seeds.
    #[serde(default)]
    pub rng_seed: u64,
    /// Probability that a window disturbs the core at all. Skips of
    /// instructions under one window are correlated through it.
    #[serde(default = "default_one")]
    pub p_effective: f64,
    /// Minimum covered fraction of a cycle for a skip to be possible.
    #[serde(default)]
    pub min_coverage: f64,
}

impl Default for FaultResponseModel {
    fn default() -> Self {
        Self {
            p_max_skip: 0.5,
            p_lockup_per_fault: 0.05,
            per_target_override: BTreeMap::new(),
            rng_seed: 0,
            p_effective: 1.0,
            min_coverage: 0.0,
        }
    }
}

impl FaultResponseModel {
    /// Skips happen exactly for fully covered cycles; nothing else happens.
    pub fn noise_free() -> Self {
        Self {
            p_max_skip: 1.0,
            p_lockup_per_fault: 0.0,
            min_coverage: 1.0,
            ..Self::default()
        }
    }

    pub fn with_override(mut self, effect: Effect, p: f64) -> Self {
        self.per_target_override.insert(effect, p);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut named = vec![
            ("p_max_skip".to_string(), self.p_max_skip),
            ("p_lockup_per_fault".to_string(), self.p_lockup_per_fault),
            ("p_effective".to_string(), self.p_effective),
            ("min_coverage".to_string(), self.min_coverage),
        ];
        for (effect, p) in &self.per_target_override {
            named.push((format!("per_target_override.{effect:?}"), *p));
        }
        for (name, value) in named {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::Probability { name, value });
            }
        }
        Ok(())
    }

    fn skip_probability(&self, effect: Effect, coverage: f64) -> f64 {
        match self.per_target_override.get(&effect) {
            Some(&p) => p,
            None => self.p_max_skip * coverage,
        }
    }
}

/// Sampling brown-out detector: the supply is sampled at ticks
/// `sample_phase + i * sample_period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodModel {
    pub enabled: bool,
    pub sample_period: Ticks,
    pub sample_phase: Ticks,
    /// Windows narrower than this are filtered by the supply and never
    /// sampled low. Zero keeps detection purely sample-based.
    #[serde(default)]
    pub detect_width_threshold: Ticks,
}

impl Default for BodModel {
    fn default() -> Self {
        Self::disabled()
    }
}

impl BodModel {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            sample_period: 1,
            sample_phase: 0,
            detect_width_threshold: 0,
        }
    }

    pub fn sampling(sample_period: Ticks, sample_phase: Ticks) -> Result<Self, ModelError> {
        let bod = Self {
            enabled: true,
            sample_period,
            sample_phase,
            detect_width_threshold: 0,
        };
        bod.validate()?;
        Ok(bod)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sample_period == 0 {
            return Err(ModelError::ZeroSamplePeriod);
        }
        if self.sample_phase >= self.sample_period {
            return Err(ModelError::PhaseOutOfRange {
                phase: self.sample_phase,
                period: self.sample_period,
            });
        }
        Ok(())
    }

    /// Whether any sample tick falls inside `window`.
    pub fn samples(&self, window: &FaultWindow) -> bool {
        if !self.enabled || window.width() < self.detect_width_threshold {
            return false;
        }
        let first = if window.start <= self.sample_phase {
            self.sample_phase
        } else {
            let k = (window.start - self.sample_phase).div_ceil(self.sample_period);
            self.sample_phase + k * self.sample_period
        };
        window.contains(first)
    }

    pub fn detects(&self, windows: &[FaultWindow]) -> bool {
        windows.iter().any(|w| self.samples(w))
    }
}

/// Everything observable (and some things only the simulator knows) about
/// one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTrialResult {
    pub state: SecurityState,
    /// Per instruction: skipped by a fault.
    pub skipped: Vec<bool>,
    /// Value reported back by the firmware, if it reported anything.
    pub response: Option<u32>,
    pub bod_reset: bool,
    /// Number of windows that locked the core up.
    pub lockups: u32,
}

/// Runs the scenario once under the given fault windows (absolute ticks,
/// disjoint and ordered).
pub fn execute_trial(
    scenario: &ScenarioSpec,
    oversampling: u32,
    windows: &[FaultWindow],
    model: &FaultResponseModel,
    bod: &BodModel,
    seed: u64,
) -> RawTrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, model.rng_seed));
    let k = u64::from(oversampling);

    let mut lockup_at: Option<Ticks> = None;
    let mut lockups = 0;
    let mut effective = Vec::with_capacity(windows.len());
    for w in windows {
        let locks = rng.random::<f64>() < model.p_lockup_per_fault;
        let disturbs = rng.random::<f64>() < model.p_effective;
        if locks {
            lockups += 1;
            lockup_at = Some(lockup_at.map_or(w.start, |t| t.min(w.start)));
        }
        effective.push(disturbs);
    }

    let instructions = scenario.instructions();
    let mut skipped = vec![false; instructions.len()];
    let mut state = SecurityState::default();
    let mut branch_state = None;
    let mut first_window = 0;
    for (i, ins) in instructions.iter().enumerate() {
        let (lo, hi) = ins.occupancy(oversampling);
        if lockup_at.is_some_and(|t| lo >= t) {
            state.locked_up = true;
            break;
        }
        while first_window < windows.len() && windows[first_window].end <= lo {
            first_window += 1;
        }
        let mut covered = 0;
        let mut disturbed = false;
        for (w, &eff) in windows[first_window..].iter().zip(&effective[first_window..]) {
            if w.start >= hi {
                break;
            }
            let o = w.overlap(lo, hi);
            if o > 0 {
                covered += o;
                disturbed |= eff;
            }
        }
        if covered > 0 {
            let coverage = (covered as f64 / k as f64).min(1.0);
            let u = rng.random::<f64>();
            if disturbed
                && coverage >= model.min_coverage
                && u < model.skip_probability(ins.effect, coverage)
            {
                skipped[i] = true;
            }
        }
        if skipped[i] {
            continue;
        }
        state.apply(ins.effect);
        if ins.effect == Effect::BranchNonSecure && branch_state.is_none() {
            branch_state = Some(state);
        }
    }
    if lockup_at.is_some() {
        state.locked_up = true;
    }

    let bod_reset = bod.detects(windows);
    let response = if bod_reset || state.locked_up {
        None
    } else {
        scenario.response_word(branch_state.as_ref().unwrap_or(&state), &skipped)
    };
    RawTrialResult {
        state,
        skipped,
        response,
        bod_reset,
        lockups,
    }
}

/// Inserts a uniform random stall of `0..=max_delay_cycles` cycles in front
/// of every protected instruction and re-derives all cycle positions.
pub fn apply_random_delays(scenario: &ScenarioSpec, max_delay_cycles: u32, seed: u64) -> ScenarioSpec {
    if max_delay_cycles == 0 {
        return scenario.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old = scenario.instructions();
    let mut out = Vec::with_capacity(old.len() + 4 * max_delay_cycles as usize);
    let mut remap = Vec::with_capacity(old.len());
    let mut shift = 0u64;
    for ins in old {
        if ins.protected {
            let d = u64::from(rng.random_range(0..=max_delay_cycles));
            for j in 0..d {
                out.push(Instruction {
                    index: out.len(),
                    cycle: ins.cycle + shift + j,
                    effect: Effect::Delay,
                    protected: false,
                });
            }
            shift += d;
        }
        remap.push(out.len());
        out.push(Instruction {
            index: out.len(),
            cycle: ins.cycle + shift,
            ..*ins
        });
    }
    scenario.with_instructions(out, &remap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::FaultWindow;
    use crate::scenarios::{self, builtin};

    const K: u32 = 20;

    fn cycle_window(first: u64, last_inclusive: u64) -> FaultWindow {
        let k = u64::from(K);
        FaultWindow::new(first * k, (last_inclusive + 1) * k)
    }

    fn certain() -> FaultResponseModel {
        FaultResponseModel {
            p_max_skip: 1.0,
            p_lockup_per_fault: 0.0,
            ..FaultResponseModel::default()
        }
    }

    #[test]
    fn no_fault_leaves_firmware_nominal() {
        let s = builtin::successive_shifts();
        let r = execute_trial(&s, K, &[], &FaultResponseModel::default(), &BodModel::disabled(), 1);
        assert_eq!(r.response, Some(0x12));
        assert!(r.skipped.iter().all(|s| !s));

        let tz = builtin::tzm_full_attack();
        let r = execute_trial(&tz, K, &[], &FaultResponseModel::default(), &BodModel::disabled(), 1);
        assert!(r.state.sau_active && r.state.ahb_original && r.state.ahb_duplicate);
        assert!(r.state.lsb_cleared && !r.state.locked_up);
    }

    #[test]
    fn shift_skips_produce_listing_values() {
        let s = builtin::successive_shifts();
        let lsrs = s.target("LSRS").unwrap().cycle(&s);
        let lsls = s.target("LSLS").unwrap().cycle(&s);
        let both = execute_trial(&s, K, &[cycle_window(lsrs, lsls)], &certain(), &BodModel::disabled(), 3);
        assert_eq!(both.response, Some(0x13));
        let first = execute_trial(&s, K, &[cycle_window(lsrs, lsrs)], &certain(), &BodModel::disabled(), 3);
        assert_eq!(first.response, Some(0x38));
        let second = execute_trial(&s, K, &[cycle_window(lsls, lsls)], &certain(), &BodModel::disabled(), 3);
        assert_eq!(second.response, Some(0x9));
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let s = builtin::tzm_full_attack();
        let windows = [cycle_window(5, 9), cycle_window(20, 22), cycle_window(40, 47)];
        let m = FaultResponseModel::default();
        let bod = BodModel::disabled();
        for seed in 0..200 {
            let a = execute_trial(&s, K, &windows, &m, &bod, seed);
            let b = execute_trial(&s, K, &windows, &m, &bod, seed);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn subsets_never_compromise() {
        // Only SAU, AHB original and duplicate skipped: LSB still cleared.
        let s = builtin::tzm_full_attack();
        let c = |l: &str| s.target(l).unwrap().cycle(&s);
        let windows = [
            cycle_window(c("SAU"), c("SAU")),
            cycle_window(c("AHB_CTRL"), c("AHB_CTRL")),
            cycle_window(c("DUPL"), c("DUPL")),
        ];
        let r = execute_trial(&s, K, &windows, &certain(), &BodModel::disabled(), 0);
        assert!(!r.state.sau_active && !r.state.ahb_original && !r.state.ahb_duplicate);
        assert!(!r.state.fully_compromised());
        let pe = s.target("PE").unwrap().cycle(&s);
        let mut all = windows.to_vec();
        all.push(cycle_window(pe, pe + 1));
        let r = execute_trial(&s, K, &all, &certain(), &BodModel::disabled(), 0);
        assert!(r.state.fully_compromised());
    }

    #[test]
    fn windows_off_the_stream_only_lock_up() {
        let s = builtin::successive_shifts();
        let far = FaultWindow::new(10_000, 10_040);
        let r = execute_trial(&s, K, &[far], &certain(), &BodModel::disabled(), 9);
        assert!(r.skipped.iter().all(|s| !s));
        assert_eq!(r.response, Some(0x12));
        let locking = FaultResponseModel {
            p_lockup_per_fault: 1.0,
            ..certain()
        };
        let r = execute_trial(&s, K, &[far], &locking, &BodModel::disabled(), 9);
        assert!(r.skipped.iter().all(|s| !s));
        assert!(r.state.locked_up);
        assert_eq!(r.response, None);
    }

    #[test]
    fn lockup_freezes_state() {
        let s = builtin::tzm_full_attack();
        let early = cycle_window(0, 0);
        let m = FaultResponseModel {
            p_max_skip: 0.0,
            p_lockup_per_fault: 1.0,
            ..FaultResponseModel::default()
        };
        let r = execute_trial(&s, K, &[early], &m, &BodModel::disabled(), 0);
        assert!(r.state.locked_up);
        assert!(!r.state.sau_active && !r.state.ahb_original);
        assert_eq!(r.lockups, 1);
    }

    #[test]
    fn partial_coverage_scales_skip_probability() {
        let s = builtin::successive_shifts();
        let c = s.target("LSRS").unwrap().cycle(&s);
        let k = u64::from(K);
        // Quarter of the LSRS cycle.
        let w = FaultWindow::new(c * k, c * k + k / 4);
        let n = 40_000;
        let hits = (0..n)
            .filter(|&seed| execute_trial(&s, K, &[w], &certain(), &BodModel::disabled(), seed).skipped[s.target("LSRS").unwrap().instruction()])
            .count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.25).abs() < 0.015, "rate {rate}");

        let gated = FaultResponseModel {
            min_coverage: 0.5,
            ..certain()
        };
        let r = execute_trial(&s, K, &[w], &gated, &BodModel::disabled(), 0);
        assert!(r.skipped.iter().all(|s| !s));
    }

    #[test]
    fn bod_sampling() {
        let bod = BodModel::sampling(10, 3).unwrap();
        assert!(bod.samples(&FaultWindow::new(0, 4)));
        assert!(!bod.samples(&FaultWindow::new(4, 13)));
        assert!(bod.samples(&FaultWindow::new(4, 14)));
        assert!(bod.samples(&FaultWindow::new(13, 14)));
        assert!(!BodModel::disabled().samples(&FaultWindow::new(0, 100)));
        assert_eq!(BodModel::sampling(0, 0), Err(ModelError::ZeroSamplePeriod));
        assert!(BodModel::sampling(5, 5).is_err());
    }

    #[test]
    fn bod_pigeonhole_over_all_phases() {
        for period in 1..=30u64 {
            for width in period..period + 5 {
                for start in [0u64, 7, 33] {
                    let w = FaultWindow::new(start, start + width);
                    for phase in 0..period {
                        let bod = BodModel::sampling(period, phase).unwrap();
                        assert!(bod.samples(&w), "period {period} width {width} phase {phase}");
                    }
                }
            }
        }
    }

    #[test]
    fn bod_trip_ends_trial() {
        let s = builtin::bod_scenario();
        let w = cycle_window(s.trigger_cycle(), s.trigger_cycle() + 3);
        let r = execute_trial(&s, K, &[w], &certain(), &BodModel::sampling(40, 0).unwrap(), 0);
        assert!(r.bod_reset);
        assert_eq!(r.response, None);
    }

    #[test]
    fn model_validation() {
        assert!(FaultResponseModel::default().validate().is_ok());
        let bad = FaultResponseModel::default().with_override(Effect::StoreSauCtrl, 1.5);
        assert!(matches!(bad.validate(), Err(ModelError::Probability { .. })));
        let bad = FaultResponseModel {
            p_lockup_per_fault: -0.1,
            ..FaultResponseModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_delay_is_identity() {
        let s = builtin::dup_registers(7, 43, true);
        assert_eq!(apply_random_delays(&s, 0, 5), s);
    }

    #[test]
    fn delays_shift_protected_targets_independently() {
        let s = builtin::tzm_full_attack().with_protected_targets();
        let base: Vec<u64> = s.targets().iter().map(|t| t.cycle(&s)).collect();
        let mut seen_first = [false; 10];
        for seed in 0..400 {
            let d = apply_random_delays(&s, 9, seed);
            scenarios::validate_instructions(d.instructions()).unwrap();
            let cycles: Vec<u64> = d.targets().iter().map(|t| t.cycle(&d)).collect();
            let mut prev_shift = 0;
            for (b, c) in base.iter().zip(&cycles) {
                let shift = c - b;
                assert!(shift >= prev_shift && shift - prev_shift <= 9);
                prev_shift = shift;
            }
            seen_first[(cycles[0] - base[0]) as usize] = true;
            for t in d.targets() {
                assert_eq!(d.instructions()[t.instruction()].effect, t.effect());
            }
        }
        assert!(seen_first.iter().all(|&x| x));
    }

    #[test]
    fn random_delay_hit_rate_is_one_in_ten() {
        // Monte-Carlo: a fixed fault on the nominal first-target cycle only
        // lands when its stall is zero.
        let s = builtin::dup_registers(7, 43, true).with_protected_targets();
        let c = s.targets()[0].cycle(&s);
        let window = [cycle_window(c, c)];
        let n = 100_000u64;
        let hits = (0..n)
            .filter(|&seed| {
                let d = apply_random_delays(&s, 9, seed);
                let r = execute_trial(&d, K, &window, &FaultResponseModel::noise_free(), &BodModel::disabled(), seed);
                r.skipped[d.targets()[0].instruction()]
            })
            .count();
        let rate = hits as f64 / n as f64;
        let sigma = (0.1f64 * 0.9 / n as f64).sqrt();
        assert!((rate - 0.1).abs() < 4.0 * sigma, "rate {rate}");
    }
}
