//! Simulation of multiple voltage fault injection against a TrustZone-M
//! style target, and the multi-fault parameter search built on it.
//!
//! Layers, bottom up: [`timing`] (ticks and fault specs), [`chain`] (the
//! chained fault units), [`dut`] (instruction skips, lockups, brown-out
//! detection), [`scenarios`] (firmware and success functions), [`search`]
//! and [`campaign`].

pub mod calibration;
pub mod campaign;
pub mod chain;
pub mod dut;
pub mod scenarios;
pub mod search;
pub mod seed;
pub mod timing;

pub use campaign::{CampaignConfig, CampaignError, CampaignSummary, Engine};
pub use chain::{simulate_chain, ChainConfig, FaultWindow, UnitParams};
pub use dut::{execute_trial, BodModel, Effect, FaultResponseModel, RawTrialResult};
pub use scenarios::{builtin, OutcomeClass, ScenarioSpec};
pub use search::{Combo, SearchError, SearchSpace};
pub use timing::{ClockDomains, FaultSpec, Frame, Ticks};
