//! Fault-response models fitted to measured attack statistics.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dut::{Effect, FaultResponseModel};
use crate::scenarios::ScenarioSpec;

/// Success rate of the best two-fault combination on the duplicate-register
/// firmware.
pub const DUP_SUCCESS_RATE: f64 = 0.212;

/// Lockup probability per fault assumed by [`dup_calibrated`].
pub const DUP_LOCKUP: f64 = 0.05;

/// Rates of hitting the first 1, 2, 3 and 4 TrustZone targets in one run.
pub const TZM_CASCADE_RATES: [f64; 4] = [0.451, 0.0251, 0.0023, 3e-7];

/// Result distribution of the shift pair under one wide fault.
pub const SHIFT_WIDE: ShiftDistribution = ShiftDistribution {
    none: 0.31,
    only_lsls: 0.09,
    only_lsrs: 0.17,
    both: 0.24,
    invalid: 0.19,
};

/// Result distribution of the shift pair under two narrow faults.
pub const SHIFT_NARROW: ShiftDistribution = ShiftDistribution {
    none: 0.17,
    only_lsls: 0.19,
    only_lsrs: 0.21,
    both: 0.15,
    invalid: 0.28,
};

pub const PRESET_NAMES: [&str; 5] = [
    "default",
    "noise_free",
    "successive_shifts",
    "dup_calibrated",
    "tzm_calibrated",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("unknown model preset `{0}`")]
    UnknownPreset(String),
    #[error("expected {expected} prefix rates, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error("prefix rates must be positive and non-increasing, got {0:?}")]
    BadRates(Vec<f64>),
    #[error("effect {0:?} appears in more than one target")]
    SharedEffect(Effect),
}

/// Shares of the five observable result groups of the shift pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftDistribution {
    pub none: f64,
    pub only_lsls: f64,
    pub only_lsrs: f64,
    pub both: f64,
    pub invalid: f64,
}

impl ShiftDistribution {
    pub fn as_array(&self) -> [f64; 5] {
        [self.none, self.only_lsls, self.only_lsrs, self.both, self.invalid]
    }

    pub fn max_abs_diff(&self, other: &ShiftDistribution) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Parameters of the shift-pair model: window efficacy, per-shift skip
/// probabilities and lockup per window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftParams {
    pub p_effective: f64,
    pub p_lsrs: f64,
    pub p_lsls: f64,
    pub p_lockup: f64,
}

impl ShiftParams {
    pub fn model(&self) -> FaultResponseModel {
        FaultResponseModel {
            p_lockup_per_fault: self.p_lockup,
            p_effective: self.p_effective,
            min_coverage: 0.0,
            ..FaultResponseModel::default()
        }
        .with_override(Effect::ClearLsbShift1, self.p_lsrs)
        .with_override(Effect::ClearLsbShift2, self.p_lsls)
    }

    /// Exact outcome shares for one wide window over both shifts, or one
    /// narrow window per shift.
    pub fn predict(&self, narrow: bool) -> ShiftDistribution {
        let (e, a, b, l) = (self.p_effective, self.p_lsrs, self.p_lsls, self.p_lockup);
        if narrow {
            let alive = (1.0 - l) * (1.0 - l);
            let (x, y) = (e * a, e * b);
            ShiftDistribution {
                none: alive * (1.0 - x) * (1.0 - y),
                only_lsls: alive * (1.0 - x) * y,
                only_lsrs: alive * x * (1.0 - y),
                both: alive * x * y,
                invalid: 1.0 - alive,
            }
        } else {
            let alive = 1.0 - l;
            ShiftDistribution {
                none: alive * ((1.0 - e) + e * (1.0 - a) * (1.0 - b)),
                only_lsls: alive * e * (1.0 - a) * b,
                only_lsrs: alive * e * a * (1.0 - b),
                both: alive * e * a * b,
                invalid: l,
            }
        }
    }

    /// Worst deviation from the reference distributions over both rows.
    pub fn max_deviation(&self) -> f64 {
        self.predict(false)
            .max_abs_diff(&SHIFT_WIDE)
            .max(self.predict(true).max_abs_diff(&SHIFT_NARROW))
    }

    fn sse(&self) -> f64 {
        let mut s = 0.0;
        for (pred, reference) in [(self.predict(false), SHIFT_WIDE), (self.predict(true), SHIFT_NARROW)] {
            for (p, r) in pred.as_array().iter().zip(reference.as_array()) {
                s += (p - r) * (p - r);
            }
        }
        s
    }
}

/// Fitted shift-pair parameters.
pub const SHIFT_FIT: ShiftParams = ShiftParams {
    p_effective: 0.70,
    p_lsrs: 0.70,
    p_lsls: 0.64,
    p_lockup: 0.16,
};

/// Minimax grid fit of [`ShiftParams`] against both reference rows; ties
/// are broken by squared error. `fix_effective` pins the window efficacy.
pub fn fit_shift_params(step: f64, fix_effective: Option<f64>) -> ShiftParams {
    let n = (1.0 / step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let efficacies = match fix_effective {
        Some(e) => vec![e],
        None => grid.clone(),
    };
    let lockups: Vec<f64> = grid.iter().copied().filter(|&l| l <= 0.5).collect();
    let mut best: Option<(f64, f64, ShiftParams)> = None;
    for &p_effective in &efficacies {
        for &p_lsrs in &grid {
            for &p_lsls in &grid {
                for &p_lockup in &lockups {
                    let p = ShiftParams {
                        p_effective,
                        p_lsrs,
                        p_lsls,
                        p_lockup,
                    };
                    let key = (p.max_deviation(), p.sse());
                    if best.is_none_or(|(m, s, _)| key.0 < m - 1e-12 || (key.0 < m + 1e-12 && key.1 < s)) {
                        best = Some((key.0, key.1, p));
                    }
                }
            }
        }
    }
    best.expect("grid is not empty").2
}

/// Symmetric per-store skip probability that yields `success_rate` for two
/// faults, each locking up with probability `lockup`.
pub fn dup_override(success_rate: f64, lockup: f64) -> f64 {
    (success_rate / ((1.0 - lockup) * (1.0 - lockup))).sqrt()
}

pub fn dup_calibrated() -> FaultResponseModel {
    let q = dup_override(DUP_SUCCESS_RATE, DUP_LOCKUP);
    FaultResponseModel {
        p_lockup_per_fault: DUP_LOCKUP,
        ..FaultResponseModel::default()
    }
    .with_override(Effect::StoreAhbOriginal, q)
    .with_override(Effect::StoreAhbDuplicate, q)
}

/// Per-instruction overrides such that hitting the first `k` targets at
/// once has probability `prefix_rates[k - 1]`, with lockups disabled.
///
/// A target spanning `n` instructions gets the `n`-th root of its
/// conditional rate on each of them.
pub fn cascade_model(scenario: &ScenarioSpec, prefix_rates: &[f64]) -> Result<FaultResponseModel, CalibrationError> {
    let targets = scenario.targets();
    if prefix_rates.len() != targets.len() {
        return Err(CalibrationError::RateCount {
            expected: targets.len(),
            got: prefix_rates.len(),
        });
    }
    let valid = prefix_rates.iter().all(|&r| r > 0.0 && r <= 1.0)
        && prefix_rates.windows(2).all(|w| w[1] <= w[0]);
    if !valid {
        return Err(CalibrationError::BadRates(prefix_rates.to_vec()));
    }
    let mut overrides = BTreeMap::new();
    let mut prev = 1.0;
    for (t, &rate) in targets.iter().zip(prefix_rates) {
        let per_instruction = (rate / prev).powf(1.0 / t.span() as f64);
        prev = rate;
        for ins in &scenario.instructions()[t.instruction()..t.instruction() + t.span()] {
            if overrides.insert(ins.effect, per_instruction).is_some() {
                return Err(CalibrationError::SharedEffect(ins.effect));
            }
        }
    }
    Ok(FaultResponseModel {
        p_lockup_per_fault: 0.0,
        per_target_override: overrides,
        ..FaultResponseModel::default()
    })
}

pub fn tzm_calibrated() -> FaultResponseModel {
    cascade_model(&crate::scenarios::builtin::tzm_full_attack(), &TZM_CASCADE_RATES)
        .expect("reference rates fit the TrustZone targets")
}

/// Resolves a named model preset.
pub fn model_preset(name: &str) -> Result<FaultResponseModel, CalibrationError> {
    match name {
        "default" => Ok(FaultResponseModel::default()),
        "noise_free" => Ok(FaultResponseModel::noise_free()),
        "successive_shifts" => Ok(SHIFT_FIT.model()),
        "dup_calibrated" => Ok(dup_calibrated()),
        "tzm_calibrated" => Ok(tzm_calibrated()),
        other => Err(CalibrationError::UnknownPreset(other.to_string())),
    }
}
