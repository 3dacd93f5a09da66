//! Clock-domain arithmetic and fault-window representation.
//!
//! Every duration inside the simulator is counted in framework ticks, the
//! period of the glitcher's reference clock. Nanoseconds only appear when a
//! configuration is read, and are converted once with [`ticks_from_ns`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Framework clock ticks.
pub type Ticks = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimingError {
    #[error("oversampling must be at least 1")]
    ZeroOversampling,
    #[error("DUT clock period must be positive and finite, got {0} ns")]
    BadPeriod(f64),
    #[error("fault width must be at least one tick")]
    ZeroWidth,
    #[error("cannot split into an empty list of sub-faults")]
    EmptySplit,
    #[error("expected {expected} gaps between sub-faults, got {got}")]
    GapCountMismatch { expected: usize, got: usize },
    #[error("only absolute faults can be split")]
    NotAbsolute,
}

/// Relation between the DUT clock and the (faster) framework clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockDomains {
    /// Framework ticks per DUT cycle.
    pub oversampling: u32,
    /// Nanoseconds per DUT cycle.
    pub dut_period_ns: f64,
}

impl ClockDomains {
    pub fn new(oversampling: u32, dut_period_ns: f64) -> Result<Self, TimingError> {
        let domains = Self {
            oversampling,
            dut_period_ns,
        };
        domains.validate()?;
        Ok(domains)
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        if self.oversampling == 0 {
            return Err(TimingError::ZeroOversampling);
        }
        if !(self.dut_period_ns.is_finite() && self.dut_period_ns > 0.0) {
            return Err(TimingError::BadPeriod(self.dut_period_ns));
        }
        Ok(())
    }

    pub fn tick_period_ns(&self) -> f64 {
        self.dut_period_ns / f64::from(self.oversampling)
    }

    /// First tick of DUT cycle `cycle`.
    pub fn cycle_start(&self, cycle: u64) -> Ticks {
        cycle * u64::from(self.oversampling)
    }
}

impl Default for ClockDomains {
    /// 20x oversampling of a 10 MHz target.
    fn default() -> Self {
        Self {
            oversampling: 20,
            dut_period_ns: 100.0,
        }
    }
}

/// Converts a duration to ticks, rounding half up. Negative and NaN
/// durations saturate to zero.
pub fn ticks_from_ns(domains: &ClockDomains, duration_ns: f64) -> Ticks {
    if duration_ns.is_nan() || duration_ns <= 0.0 {
        return 0;
    }
    // duration * oversampling / period keeps integral inputs exact.
    let scaled = duration_ns * f64::from(domains.oversampling) / domains.dut_period_ns;
    (scaled + 0.5).floor() as Ticks
}

/// Reference point a fault offset is counted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Offset counted from the trigger tick.
    Absolute,
    /// Offset counted from the end of the preceding fault.
    Relative,
}

/// One voltage fault: the crowbar is driven for `width` ticks, `offset`
/// ticks after the frame's reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSpec {
    pub offset: Ticks,
    pub width: Ticks,
    pub frame: Frame,
}

impl FaultSpec {
    pub fn new(offset: Ticks, width: Ticks, frame: Frame) -> Result<Self, TimingError> {
        if width == 0 {
            return Err(TimingError::ZeroWidth);
        }
        Ok(Self {
            offset,
            width,
            frame,
        })
    }

    pub fn absolute(offset: Ticks, width: Ticks) -> Result<Self, TimingError> {
        Self::new(offset, width, Frame::Absolute)
    }

    pub fn relative(offset: Ticks, width: Ticks) -> Result<Self, TimingError> {
        Self::new(offset, width, Frame::Relative)
    }

    /// One past the last asserted tick, in the same frame as `offset`.
    pub fn end(&self) -> Ticks {
        self.offset + self.width
    }
}

/// Replaces one absolute fault by a train of narrower ones.
///
/// The first sub-fault keeps the original offset; each following one starts
/// `gaps[i]` ticks after its predecessor ends.
pub fn split_fault(
    fault: &FaultSpec,
    widths: &[Ticks],
    gaps: &[Ticks],
) -> Result<Vec<FaultSpec>, TimingError> {
    if fault.frame != Frame::Absolute {
        return Err(TimingError::NotAbsolute);
    }
    if widths.is_empty() {
        return Err(TimingError::EmptySplit);
    }
    if gaps.len() + 1 != widths.len() {
        return Err(TimingError::GapCountMismatch {
            expected: widths.len() - 1,
            got: gaps.len(),
        });
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut start = fault.offset;
    for (i, &width) in widths.iter().enumerate() {
        let sub = FaultSpec::absolute(start, width)?;
        out.push(sub);
        if let Some(gap) = gaps.get(i) {
            start = sub.end() + gap;
        }
    }
    Ok(out)
}
