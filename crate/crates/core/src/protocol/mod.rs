//! Test scheduling: who gets sampled when, and what happens when results
//! arrive one day later.
//!
//! Tests are registered at each day's `d+` phase and their outcomes are fixed
//! at that moment (samples are taken at registration); results only become
//! actionable at the next day's `d-` phase. Two schedulers implement this
//! cycle: the adaptive two-stage Dorfman scheduler ([`two_stage`]) and the
//! non-adaptive CCA baseline with definite-defective decoding ([`cca`]).

pub mod cca;
pub mod two_stage;

use serde::{Deserialize, Serialize};

use crate::dorfman::CostParams;

pub use cca::{cca_budget, cca_design, dd_decode, CcaScheduler};
pub use two_stage::DorfmanScheduler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    First,
    Second,
}

/// A registered pool: first-stage pools group members of one community,
/// second-stage pools are singletons.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPool {
    pub id: u64,
    pub members: Vec<usize>,
    pub stage: Stage,
    pub community: usize,
    pub registration_day: u32,
}

/// A pool together with its outcome, sampled at registration and revealed at
/// the next day's resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingPool {
    pub pool: TestPool,
    pub outcome: bool,
}

/// What to do with members of a contaminated first-stage pool while their
/// individual tests are pending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuarantinePolicy {
    /// Members stay in the population until confirmed.
    NoQuarantine,
    /// Members are quarantined for one spread phase; pool sizing still
    /// minimizes tests only.
    Quarantine,
    /// Quarantine plus pool sizing that minimizes the combined test and
    /// quarantine objective.
    QuarantineCostAware(CostParams),
}

impl QuarantinePolicy {
    pub fn quarantines(&self) -> bool {
        !matches!(self, QuarantinePolicy::NoQuarantine)
    }

    pub fn cost_params(&self) -> Option<CostParams> {
        match self {
            QuarantinePolicy::QuarantineCostAware(params) => Some(*params),
            _ => None,
        }
    }
}

/// Per-day test budget rule for the CCA baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRule {
    /// `c * e * mu * ln(N_d)` tests.
    MuLog { c: f64 },
    /// `c * e * p * N_d * ln(N_d)` tests.
    PnLog { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// Definite-defective decoding: never a false positive, may miss.
    Dd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcaConfig {
    pub budget_rule: BudgetRule,
    pub slack_delta: f64,
    pub decoder: Decoder,
}

impl CcaConfig {
    pub fn new(budget_rule: BudgetRule, slack_delta: f64) -> crate::Result<Self> {
        let c = match budget_rule {
            BudgetRule::MuLog { c } | BudgetRule::PnLog { c } => c,
        };
        if c <= 0.0 || !c.is_finite() {
            return Err(crate::Error::param("c", format!("must be > 0, got {c}")));
        }
        if slack_delta < 0.0 || !slack_delta.is_finite() {
            return Err(crate::Error::param(
                "slack_delta",
                format!("must be >= 0, got {slack_delta}"),
            ));
        }
        Ok(Self {
            budget_rule,
            slack_delta,
            decoder: Decoder::Dd,
        })
    }
}

/// Effects of a morning resolution, for the day's metrics row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolveOutcome {
    pub isolated: Vec<usize>,
    pub released: Vec<usize>,
    /// Individuals entering quarantine for this day's spread phase.
    pub quarantined_now: u64,
    /// Of those, the ones not currently infected (unnecessary quarantine).
    pub quarantined_uninfected_now: u64,
    /// Realized exponential quarantine cost, cost-aware runs only.
    pub realized_quarantine_cost: f64,
}

/// Effects of a registration, for the day's metrics row and the detection
/// audit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegisterOutcome {
    pub tests_registered: u64,
    /// People entering first-stage pooled testing today (Dorfman), or tested
    /// today (CCA).
    pub pipeline_size: u64,
    /// Members who were already infected when their first-stage pool was
    /// registered today; the detection-window clock starts for them.
    pub infected_at_first_stage: Vec<usize>,
}
