//! Tick-level model of the multiple voltage fault unit.
//!
//! A single fault unit (SFU) counts `offset` reference-clock ticks after its
//! trigger, then drives its fault output for `width` ticks and pulses `done`
//! for one tick. Units are chained done→trigger behind a demultiplexer, so
//! only the first `enabled_count` units take part in an attempt. The fault
//! outputs are OR-combined onto the crowbar gate.
//!
//! [`simulate_chain`] computes the result in closed form. [`MultiFaultUnit`]
//! steps the same hardware tick by tick and is kept as the reference model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timing::Ticks;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("no fault unit is enabled")]
    EmptyChain,
    #[error("chain has {available} units, cannot enable {requested}")]
    BadChainLength { requested: usize, available: usize },
    #[error("unit {0} has zero width")]
    ZeroWidth(usize),
}

/// Half-open interval `[start, end)` of ticks during which the crowbar is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultWindow {
    pub start: Ticks,
    pub end: Ticks,
}

impl FaultWindow {
    pub fn new(start: Ticks, end: Ticks) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn width(&self) -> Ticks {
        self.end - self.start
    }

    /// Number of ticks shared with `[lo, hi)`.
    pub fn overlap(&self, lo: Ticks, hi: Ticks) -> Ticks {
        let s = self.start.max(lo);
        let e = self.end.min(hi);
        e.saturating_sub(s)
    }

    pub fn contains(&self, tick: Ticks) -> bool {
        self.start <= tick && tick < self.end
    }
}

/// Offset/width registers of one SFU, in the relative frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitParams {
    pub offset: Ticks,
    pub width: Ticks,
}

impl UnitParams {
    pub fn new(offset: Ticks, width: Ticks) -> Self {
        Self { offset, width }
    }
}

/// Register state of the chain: per-unit parameters plus the demux select.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    units: Vec<UnitParams>,
    enabled_count: usize,
}

impl ChainConfig {
    /// All units enabled.
    pub fn new(units: Vec<UnitParams>) -> Self {
        let enabled_count = units.len();
        Self {
            units,
            enabled_count,
        }
    }

    pub fn units(&self) -> &[UnitParams] {
        &self.units
    }

    pub fn enabled_count(&self) -> usize {
        self.enabled_count
    }

    pub fn enabled_units(&self) -> &[UnitParams] {
        &self.units[..self.enabled_count]
    }

    /// Reconfigures the demux so that the first `n` units are live.
    pub fn set_enabled(mut self, n: usize) -> Result<Self, ChainError> {
        if n > self.units.len() {
            return Err(ChainError::BadChainLength {
                requested: n,
                available: self.units.len(),
            });
        }
        self.enabled_count = n;
        Ok(self)
    }
}

/// Result of one triggered attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainRun {
    /// Disjoint, ordered, maximal intervals of the OR-combined fault output.
    pub windows: Vec<FaultWindow>,
    /// Tick at which the last enabled unit pulses `done`.
    pub done_tick: Ticks,
}

/// Simulates one attempt of the chain triggered at `trigger_tick`.
///
/// Chaining has zero latency: a unit is triggered on the tick its
/// predecessor's fault ends.
pub fn simulate_chain(cfg: &ChainConfig, trigger_tick: Ticks) -> Result<ChainRun, ChainError> {
    let units = cfg.enabled_units();
    if units.is_empty() {
        return Err(ChainError::EmptyChain);
    }
    let mut windows: Vec<FaultWindow> = Vec::with_capacity(units.len());
    let mut trigger = trigger_tick;
    for (i, unit) in units.iter().enumerate() {
        if unit.width == 0 {
            return Err(ChainError::ZeroWidth(i));
        }
        let start = trigger + unit.offset;
        let end = start + unit.width;
        match windows.last_mut() {
            Some(last) if last.end >= start => last.end = last.end.max(end),
            _ => windows.push(FaultWindow::new(start, end)),
        }
        trigger = end;
    }
    Ok(ChainRun {
        windows,
        done_tick: trigger,
    })
}

/// Counter phase of a single fault unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfuPhase {
    Idle,
    CountingOffset(Ticks),
    Asserting(Ticks),
    Done,
}

/// One single fault unit with its counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SfuState {
    pub params: UnitParams,
    pub phase: SfuPhase,
}

/// Outputs of one unit for one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SfuOutputs {
    pub fault: bool,
    pub done: bool,
}

impl SfuState {
    pub fn new(params: UnitParams) -> Self {
        Self {
            params,
            phase: SfuPhase::Idle,
        }
    }

    /// Evaluates one clock tick. `trigger` is sampled combinationally, so a
    /// unit triggered on a tick may already assert on that tick when its
    /// offset is zero.
    pub fn tick(&mut self, trigger: bool) -> SfuOutputs {
        if trigger && self.phase == SfuPhase::Idle {
            self.phase = SfuPhase::CountingOffset(self.params.offset);
        }
        let mut out = SfuOutputs::default();
        if self.phase == SfuPhase::CountingOffset(0) {
            self.phase = SfuPhase::Asserting(self.params.width);
        }
        if self.phase == SfuPhase::Asserting(0) {
            self.phase = SfuPhase::Done;
            out.done = true;
        }
        match &mut self.phase {
            SfuPhase::CountingOffset(r) => *r -= 1,
            SfuPhase::Asserting(r) => {
                out.fault = true;
                *r -= 1;
            }
            SfuPhase::Idle | SfuPhase::Done => {}
        }
        out
    }
}

/// Tick-stepped chain of SFUs behind the demux.
#[derive(Debug, Clone)]
pub struct MultiFaultUnit {
    units: Vec<SfuState>,
    tick: Ticks,
}

/// Outputs of the whole chain for one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainOutputs {
    pub fault: bool,
    pub done: bool,
}

impl MultiFaultUnit {
    pub fn new(cfg: &ChainConfig) -> Result<Self, ChainError> {
        if cfg.enabled_count() == 0 {
            return Err(ChainError::EmptyChain);
        }
        if let Some(i) = cfg.enabled_units().iter().position(|u| u.width == 0) {
            return Err(ChainError::ZeroWidth(i));
        }
        Ok(Self {
            units: cfg.enabled_units().iter().copied().map(SfuState::new).collect(),
            tick: 0,
        })
    }

    pub fn current_tick(&self) -> Ticks {
        self.tick
    }

    pub fn units(&self) -> &[SfuState] {
        &self.units
    }

    pub fn step(&mut self, external_trigger: bool) -> ChainOutputs {
        let mut trigger = external_trigger;
        let mut out = ChainOutputs::default();
        let last = self.units.len() - 1;
        for (i, unit) in self.units.iter_mut().enumerate() {
            let o = unit.tick(trigger);
            out.fault |= o.fault;
            if i == last {
                out.done = o.done;
            }
            trigger = o.done;
        }
        self.tick += 1;
        out
    }

    /// Steps from tick 0 until the chain reports done.
    pub fn run(mut self, trigger_tick: Ticks) -> ChainRun {
        let mut windows: Vec<FaultWindow> = Vec::new();
        loop {
            let t = self.tick;
            let out = self.step(t == trigger_tick);
            if out.fault {
                match windows.last_mut() {
                    Some(w) if w.end == t => w.end = t + 1,
                    _ => windows.push(FaultWindow::new(t, t + 1)),
                }
            }
            if out.done {
                return ChainRun {
                    windows,
                    done_tick: t,
                };
            }
        }
    }
}
