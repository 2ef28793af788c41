//! Per-person cost calculus for static two-stage (Dorfman) pooled testing and
//! the integer group-size optimizers built on top of it.
//!
//! All functions here are pure. Costs are normalized per tested person so the
//! optimal group size is independent of community size.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Floor applied to estimated prevalence whenever there is positive infection
/// pressure, so downstream conditioning on "at least one infected" never
/// divides by zero.
pub const PREVALENCE_FLOOR: f64 = 1e-6;

/// Quarantine cost shape: base of the exponential penalty `a` and the weight
/// `alpha` of the quarantine term in the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub quarantine_base: f64,
    pub weight: f64,
}

impl CostParams {
    pub fn new(quarantine_base: f64, weight: f64) -> Result<Self> {
        if quarantine_base <= 1.0 || !quarantine_base.is_finite() {
            return Err(Error::param(
                "quarantine_base",
                format!("must be > 1, got {quarantine_base}"),
            ));
        }
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::param("weight", format!("must be >= 0, got {weight}")));
        }
        Ok(Self {
            quarantine_base,
            weight,
        })
    }
}

/// Which per-person objective the group-size search minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Expected tests per person only.
    TestOnly,
    /// Expected tests plus `alpha` times the expected quarantine cost.
    Combined(CostParams),
}

/// Per-community next-day prevalence estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceEstimate(pub Vec<f64>);

impl PrevalenceEstimate {
    pub fn get(&self, community: usize) -> f64 {
        self.0[community]
    }
}

/// Expected number of infected members of a pool of size `s` given the pool
/// tested positive, under i.i.d. per-member infection probability `p`:
/// `s*p / (1 - (1-p)^s)`.
pub fn expected_infected_in_contaminated_group(s: u32, p: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::param("s", "group size must be >= 1"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(
            "p",
            format!("conditioning on a contaminated group requires 0 < p <= 1, got {p}"),
        ));
    }
    let s_f = f64::from(s);
    Ok(s_f * p / (1.0 - (1.0 - p).powi(s as i32)))
}

/// Next-day per-community infection probability from per-community counts of
/// infection sources active during the spread phase:
/// `p_j = 1 - (1-q1)^{I_j} * (1-q2)^{sum of other communities' counts}`.
///
/// Each contaminated first-stage pool counts as one source; under the
/// no-quarantine policy each second-stage positive counts as one more. The
/// caller composes the counts accordingly.
pub fn estimate_next_day_prevalence(counts: &[u64], q1: f64, q2: f64) -> PrevalenceEstimate {
    let total: u64 = counts.iter().sum();
    let estimates = counts
        .iter()
        .map(|&own| {
            let other = total - own;
            let escape = (1.0 - q1).powi(own as i32) * (1.0 - q2).powi(other as i32);
            let p = 1.0 - escape;
            if p > 0.0 {
                p.max(PREVALENCE_FLOOR)
            } else {
                0.0
            }
        })
        .collect();
    PrevalenceEstimate(estimates)
}

/// Expected tests per person for first-stage pools of size `s` at prevalence
/// `p`: `1/s + 1 - (1-p)^s`.
///
/// `s = 1` is degenerate: a pool of one already identifies the individual, so
/// it is charged one test per person with no confirmatory stage.
pub fn dorfman_cost_per_person(s: u32, p: f64) -> f64 {
    assert!(s >= 1, "group size must be >= 1");
    if s == 1 {
        return 1.0;
    }
    let s_f = f64::from(s);
    1.0 / s_f + 1.0 - (1.0 - p).powi(s as i32)
}

/// Expected quarantine cost per person for pools of size `s`, prevalence `p`,
/// and exponential penalty base `a`, treating pools as independent:
/// `((a - ap + p)^s - (a - ap)^s - p^s) / s`.
pub fn quarantine_cost_per_person(s: u32, p: f64, a: f64) -> f64 {
    assert!(s >= 1, "group size must be >= 1");
    let s_i = s as i32;
    let s_f = f64::from(s);
    ((a - a * p + p).powi(s_i) - (a - a * p).powi(s_i) - p.powi(s_i)) / s_f
}

/// The explicit binomial sum behind [`quarantine_cost_per_person`], evaluated
/// term by term in log space. Serves as the independent oracle for the closed
/// form; restricted to `s <= 64` where exact summation is meaningful.
pub fn quarantine_cost_brute_force(s: u32, p: f64, a: f64) -> Result<f64> {
    if s == 0 || s > 64 {
        return Err(Error::param("s", "brute-force sum requires 1 <= s <= 64"));
    }
    if s == 1 {
        return Ok(0.0); // empty sum
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let ln_a = a.ln();
    // sum_{i=1}^{s-1} C(s,i) p^(s-i) (1-p)^i a^i, with i = number of uninfected
    // members of a contaminated pool.
    let log_terms: Vec<f64> = (1..s)
        .map(|i| {
            ln_binomial(s, i) + f64::from(s - i) * ln_p + f64::from(i) * (ln_q + ln_a)
        })
        .collect();
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|&t| (t - max).exp()).sum();
    Ok(max.exp() * sum / f64::from(s))
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

/// Weighted per-person objective: test cost plus `alpha` times quarantine cost.
pub fn combined_cost_per_person(s: u32, p: f64, params: CostParams) -> f64 {
    dorfman_cost_per_person(s, p)
        + params.weight * quarantine_cost_per_person(s, p, params.quarantine_base)
}

fn objective_cost(s: u32, p: f64, objective: Objective) -> f64 {
    match objective {
        Objective::TestOnly => dorfman_cost_per_person(s, p),
        Objective::Combined(params) => combined_cost_per_person(s, p, params),
    }
}

/// Integer group size in `[1, s_max]` minimizing the chosen per-person
/// objective at prevalence `p`. Ties break toward the smaller size.
pub fn optimal_group_size(p: f64, objective: Objective, s_max: u32) -> u32 {
    assert!(s_max >= 1, "s_max must be >= 1");
    let mut best_s = 1;
    let mut best_cost = objective_cost(1, p, objective);
    for s in 2..=s_max {
        let cost = objective_cost(s, p, objective);
        if cost < best_cost {
            best_cost = cost;
            best_s = s;
        }
    }
    best_s
}

/// One row of the static cost table: optimal sizes under both objectives and
/// the per-person costs each optimum induces.
#[derive(Debug, Clone, Serialize)]
pub struct CostTableRow {
    pub p: f64,
    pub s_test_only: u32,
    pub s_combined: u32,
    /// Test cost per person at the test-only optimum.
    pub test_cost_pp: f64,
    /// Quarantine cost per person at the test-only optimum.
    pub quarantine_cost_pp: f64,
    /// Test cost per person at the combined optimum.
    pub test_cost_pp_combined: f64,
    /// Quarantine cost per person at the combined optimum.
    pub quarantine_cost_pp_combined: f64,
}

/// Evaluate both optimizers over a prevalence grid. Used to reproduce the
/// test-cost versus quarantine-cost trade-off curves.
pub fn cost_table(p_grid: &[f64], params: CostParams, s_max: u32) -> Vec<CostTableRow> {
    p_grid
        .iter()
        .map(|&p| {
            let s_test_only = optimal_group_size(p, Objective::TestOnly, s_max);
            let s_combined = optimal_group_size(p, Objective::Combined(params), s_max);
            CostTableRow {
                p,
                s_test_only,
                s_combined,
                test_cost_pp: dorfman_cost_per_person(s_test_only, p),
                quarantine_cost_pp: quarantine_cost_per_person(
                    s_test_only,
                    p,
                    params.quarantine_base,
                ),
                test_cost_pp_combined: dorfman_cost_per_person(s_combined, p),
                quarantine_cost_pp_combined: quarantine_cost_per_person(
                    s_combined,
                    p,
                    params.quarantine_base,
                ),
            }
        })
        .collect()
}

/// `points` logarithmically spaced values spanning `[lo, hi]` inclusive.
pub fn log_spaced_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && lo > 0.0 && hi > lo);
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / (points - 1) as f64).exp())
        .collect()
}
