//! Finite-horizon group-size optimization for the dynamic i.i.d. infection
//! model.
//!
//! People enter first-stage pooled testing each day; members of clean pools
//! return the next day, uninfected members of contaminated pools return two
//! days later after an individual test clears them. The expected pipeline
//! follows the linear recursion
//!
//! `E[N_d] = E[N_{d-1}](1-p)^{s_{d-1}} + E[N_{d-2}](1-(1-p)^{s_{d-2}}-p)(1-p)`
//!
//! and expected total tests are `sum_d E[N_d] (1/s_d + 1 - (1-p)^{s_d})`,
//! with the trailing individual tests of day `t` (registered on day `t+1`)
//! included. Because each day's expected mass only scales the future cost, the
//! optimal sizes decouple day by day and can be found by backward induction; a
//! plain exhaustive search over size vectors serves as its oracle.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::Result;

/// Hard caps for the exhaustive oracle: beyond this the search space is not
/// worth enumerating.
pub const BRUTE_FORCE_MAX_HORIZON: u32 = 5;
pub const BRUTE_FORCE_MAX_S: u32 = 40;

/// A per-day group-size schedule together with the expected pipeline it
/// induces and its expected total test count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonPlan {
    pub horizon: u32,
    pub group_sizes: Vec<u32>,
    pub expected_pipeline: Vec<f64>,
    pub expected_total_tests: f64,
}

/// First-stage plus expected second-stage tests per person entering a pool of
/// size `s` at prevalence `p`.
pub fn stage_cost(s: u32, p: f64) -> f64 {
    assert!(s >= 1);
    1.0 / f64::from(s) + 1.0 - (1.0 - p).powi(s as i32)
}

/// Fraction of a day's entrants that return the next day (their pool was
/// clean).
fn survive(s: u32, p: f64) -> f64 {
    (1.0 - p).powi(s as i32)
}

/// Fraction of a day's entrants that return two days later: in a contaminated
/// pool, uninfected at pooling time, and still uninfected at the individual
/// test.
fn deferred(s: u32, p: f64) -> f64 {
    (1.0 - (1.0 - p).powi(s as i32) - p) * (1.0 - p)
}

/// Expected number of people entering first-stage testing on days `1..=t`,
/// for `t = group_sizes.len()`.
pub fn expected_pipeline(n1: f64, p: f64, group_sizes: &[u32]) -> Vec<f64> {
    let sizes: Vec<f64> = group_sizes.iter().map(|&s| f64::from(s)).collect();
    expected_pipeline_real(n1, p, &sizes)
}

/// Same recursion with real-valued group sizes (used by the unrounded
/// diagnostic plan).
pub fn expected_pipeline_real(n1: f64, p: f64, group_sizes: &[f64]) -> Vec<f64> {
    let t = group_sizes.len();
    let mut series = Vec::with_capacity(t);
    let q = 1.0 - p;
    for d in 0..t {
        let value = match d {
            0 => n1,
            1 => series[0] * q.powf(group_sizes[0]),
            _ => {
                series[d - 1] * q.powf(group_sizes[d - 1])
                    + series[d - 2] * (1.0 - q.powf(group_sizes[d - 2]) - p) * q
            }
        };
        series.push(value);
    }
    series
}

/// Expected total tests over the horizon, trailing second stage included.
pub fn expected_total_tests(n1: f64, p: f64, group_sizes: &[u32]) -> f64 {
    let pipeline = expected_pipeline(n1, p, group_sizes);
    pipeline
        .iter()
        .zip(group_sizes)
        .map(|(&n, &s)| n * stage_cost(s, p))
        .sum()
}

/// Real-valued variant of [`expected_total_tests`].
pub fn expected_total_tests_real(n1: f64, p: f64, group_sizes: &[f64]) -> f64 {
    let pipeline = expected_pipeline_real(n1, p, group_sizes);
    let q = 1.0 - p;
    pipeline
        .iter()
        .zip(group_sizes)
        .map(|(&n, &s)| n * (1.0 / s + 1.0 - q.powf(s)))
        .sum()
}

/// Backward-induction optimizer. Each person entering day `d` costs
/// `stage_cost(s)` now, continues to day `d+1` with weight `survive(s)` and to
/// day `d+2` with weight `deferred(s)`; minimizing that per-person value from
/// the last day backwards is optimal because expected masses are nonnegative
/// and enter the total only as positive scale factors. In particular the size
/// schedule does not depend on `n1`.
pub fn optimize_backward(n1: f64, p: f64, t: u32, s_max: u32) -> HorizonPlan {
    assert!(t >= 1 && s_max >= 1);
    let t = t as usize;
    // value[d] = optimal expected future tests per person entering day d+1
    // (0-indexed); two sentinel zeros past the horizon.
    let mut value = vec![0.0f64; t + 2];
    let mut sizes = vec![1u32; t];
    for d in (0..t).rev() {
        let mut best_s = 1;
        let mut best_v = f64::INFINITY;
        for s in 1..=s_max {
            let v = stage_cost(s, p)
                + survive(s, p) * value[d + 1]
                + deferred(s, p) * value[d + 2];
            if v < best_v {
                best_v = v;
                best_s = s;
            }
        }
        value[d] = best_v;
        sizes[d] = best_s;
    }
    plan_from_sizes(n1, p, sizes)
}

/// Package a size schedule with its induced pipeline and expected total.
pub fn plan_from_sizes(n1: f64, p: f64, group_sizes: Vec<u32>) -> HorizonPlan {
    let expected_pipeline = expected_pipeline(n1, p, &group_sizes);
    let expected_total_tests = expected_total_tests(n1, p, &group_sizes);
    HorizonPlan {
        horizon: group_sizes.len() as u32,
        group_sizes,
        expected_pipeline,
        expected_total_tests,
    }
}

/// The static schedule: every day uses the single-day optimal size.
pub fn static_plan(n1: f64, p: f64, t: u32, s_max: u32) -> HorizonPlan {
    let s = optimal_static_size(p, s_max);
    plan_from_sizes(n1, p, vec![s; t as usize])
}

/// Single-day optimum of [`stage_cost`]; ties break toward the smaller size.
pub fn optimal_static_size(p: f64, s_max: u32) -> u32 {
    let mut best = (1u32, stage_cost(1, p));
    for s in 2..=s_max {
        let c = stage_cost(s, p);
        if c < best.1 {
            best = (s, c);
        }
    }
    best.0
}

/// Default search cap: the current pipeline size, capped at `10 * ceil(1/sqrt(p))`
/// (the single-day optimum scales like `1/sqrt(p)`).
pub fn default_s_max(p: f64, pipeline: u32) -> u32 {
    if p <= 0.0 {
        return pipeline.max(1);
    }
    let cap = 10.0 * (1.0 / p.sqrt()).ceil();
    pipeline.clamp(1, cap as u32).max(1)
}

/// Exhaustive minimizer over all `s_max^t` size vectors, in lexicographic
/// order with ties broken toward the lexicographically smaller vector.
/// Independent oracle for [`optimize_backward`]; rejects large instances.
pub fn brute_force_horizon(n1: f64, p: f64, t: u32, s_max: u32) -> Result<HorizonPlan> {
    if t == 0 || t > BRUTE_FORCE_MAX_HORIZON {
        return Err(Error::param(
            "t",
            format!("exhaustive search supports 1 <= t <= {BRUTE_FORCE_MAX_HORIZON}"),
        ));
    }
    if s_max == 0 || s_max > BRUTE_FORCE_MAX_S {
        return Err(Error::param(
            "s_max",
            format!("exhaustive search supports 1 <= s_max <= {BRUTE_FORCE_MAX_S}"),
        ));
    }
    let t = t as usize;
    let smax = s_max as usize;
    // Per-size tables; index 0 unused.
    let mut cost = vec![0.0f64; smax + 1];
    let mut surv = vec![0.0f64; smax + 1];
    let mut defer = vec![0.0f64; smax + 1];
    for s in 1..=s_max {
        cost[s as usize] = stage_cost(s, p);
        surv[s as usize] = survive(s, p);
        defer[s as usize] = deferred(s, p);
    }

    let eval = |sizes: &[usize]| -> f64 {
        let mut total = 0.0;
        let mut prev2 = 0.0; // E[N_{d-1}] * deferred(s_{d-1}) carried two days
        let mut prev = n1;
        for (d, &s) in sizes.iter().enumerate() {
            total += prev * cost[s];
            let next = prev * surv[s] + prev2;
            prev2 = prev * defer[s];
            prev = next;
            let _ = d;
        }
        total
    };

    // Parallel over the first coordinate; each branch scans its suffixes in
    // lexicographic order, so taking the first branch minimum and then the
    // smallest first coordinate reproduces the global lexicographic tie-break
    // regardless of scheduling.
    let branch_best: Vec<(f64, Vec<usize>)> = (1..=smax)
        .into_par_iter()
        .map(|first| {
            let mut sizes = vec![1usize; t];
            sizes[0] = first;
            let mut best_cost = f64::INFINITY;
            let mut best_sizes = sizes.clone();
            loop {
                let c = eval(&sizes);
                if c < best_cost {
                    best_cost = c;
                    best_sizes = sizes.clone();
                }
                // Odometer over positions 1..t (position 0 fixed).
                let mut pos = t;
                loop {
                    if pos == 1 {
                        return (best_cost, best_sizes);
                    }
                    pos -= 1;
                    if sizes[pos] < smax {
                        sizes[pos] += 1;
                        break;
                    }
                    sizes[pos] = 1;
                }
            }
        })
        .collect();

    let (_, best) = branch_best
        .into_iter()
        .reduce(|acc, cand| if cand.0 < acc.0 { cand } else { acc })
        .expect("at least one branch");
    Ok(plan_from_sizes(
        n1,
        p,
        best.iter().map(|&s| s as u32).collect(),
    ))
}

/// Real-valued (unrounded) backward plan, reported as a diagnostic alongside
/// the integer schedule. Uses a fine grid plus golden-section refinement per
/// stage; robust to the objective not being unimodal in `s`.
#[derive(Debug, Clone, Serialize)]
pub struct RealHorizonPlan {
    pub horizon: u32,
    pub group_sizes: Vec<f64>,
    pub expected_total_tests: f64,
}

pub fn optimize_backward_real(n1: f64, p: f64, t: u32, s_max: u32) -> RealHorizonPlan {
    assert!(t >= 1 && s_max >= 1);
    let t = t as usize;
    let q = 1.0 - p;
    let hi = f64::from(s_max);
    let mut value = vec![0.0f64; t + 2];
    let mut sizes = vec![1.0f64; t];
    for d in (0..t).rev() {
        let g = |s: f64| -> f64 {
            let qs = q.powf(s);
            1.0 / s + 1.0 - qs + qs * value[d + 1] + (1.0 - qs - p) * q * value[d + 2]
        };
        // Coarse scan, then golden-section inside the best bracket.
        let steps = 4000usize;
        let mut best_i = 0;
        let mut best_v = f64::INFINITY;
        for i in 0..=steps {
            let s = 1.0 + (hi - 1.0) * i as f64 / steps as f64;
            let v = g(s);
            if v < best_v {
                best_v = v;
                best_i = i;
            }
        }
        let lo_s = 1.0 + (hi - 1.0) * best_i.saturating_sub(1) as f64 / steps as f64;
        let hi_s = 1.0 + (hi - 1.0) * (best_i + 1).min(steps) as f64 / steps as f64;
        let (mut a, mut b) = (lo_s, hi_s);
        let phi = 0.618_033_988_749_895;
        for _ in 0..80 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if g(x1) <= g(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let s_star = 0.5 * (a + b);
        value[d] = g(s_star);
        sizes[d] = s_star;
    }
    let expected_total_tests = expected_total_tests_real(n1, p, &sizes);
    RealHorizonPlan {
        horizon: t as u32,
        group_sizes: sizes,
        expected_total_tests,
    }
}
