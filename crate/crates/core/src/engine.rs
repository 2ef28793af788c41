//! The daily phase loop and seeded Monte Carlo batches.
//!
//! A trajectory runs `seed -> (resolve, register, spread)+` with one full day
//! per step: results of yesterday's tests are acted on at `d-`, today's tests
//! are registered (and sampled) at `d+`, and infection spreads during `d++`.
//! After the horizon, two trailing mornings resolve the still-pending tests so
//! the last registered pools are charged and acted on.
//!
//! Everything is driven by one ChaCha generator per trajectory; identical
//! (configuration, seed) pairs produce bit-identical metrics. Batches run
//! trajectories in parallel with seeds `base_seed + index` and aggregate with
//! order-independent integer sums.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::epidemic::{
    iid_spread_step, sbm_spread_and_recover, seed_infections, PopulationState, SbmParams,
    SpreadOutcome, Status,
};
use crate::error::Error;
use crate::horizon::{default_s_max, optimize_backward};
use crate::protocol::two_stage::SizingRule;
use crate::protocol::{
    CcaConfig, CcaScheduler, DorfmanScheduler, QuarantinePolicy, RegisterOutcome, ResolveOutcome,
};
use crate::Result;

/// Highest individually tracked undetected age; the last histogram bucket
/// absorbs everything older.
pub const MAX_TRACKED_AGE: usize = 10;

/// Default cumulative-infection fraction declaring a trajectory exploded.
pub const DEFAULT_EXPLOSION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Sbm(SbmParams),
    Iid { population_size: usize, infection_prob: f64 },
}

impl ModelSpec {
    pub fn population_size(&self) -> usize {
        match self {
            ModelSpec::Sbm(p) => p.population_size,
            ModelSpec::Iid { population_size, .. } => *population_size,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Sbm(_) => Ok(()), // validated at construction
            ModelSpec::Iid { population_size, infection_prob } => {
                if *population_size == 0 {
                    return Err(Error::param("population_size", "must be positive"));
                }
                if !(0.0..=1.0).contains(infection_prob) {
                    return Err(Error::param(
                        "infection_prob",
                        format!("must be a probability, got {infection_prob}"),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolSpec {
    Dorfman(QuarantinePolicy),
    Cca(CcaConfig),
}

/// One per-day metrics row. Counts are taken at the end of the day, after the
/// spread phase; quarantine columns describe the window opened that morning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: u32,
    pub tests_registered: u64,
    pub cum_infected: u64,
    pub active_infected: u64,
    pub isolated: u64,
    pub quarantined: u64,
    pub quarantined_uninfected: u64,
    pub pipeline_size: u64,
    /// Histogram of days-since-infection for infected, non-isolated
    /// individuals; index = age, last bucket = everything older.
    pub undetected_age_hist: Vec<u64>,
    pub quarantine_cost_realized: f64,
}

impl DayRecord {
    /// Individuals infected and unisolated for more than two days.
    pub fn undetected_gt2(&self) -> u64 {
        self.undetected_age_hist[3..].iter().sum()
    }
}

/// Zero-error bookkeeping maintained by the engine across a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ProtocolAudit {
    /// Isolations of never-infected individuals. Must be zero under both
    /// protocols: pooled outcomes are noiseless and DD never false-positives.
    pub false_positive_isolations: u64,
    /// Individuals infected at a first-stage registration who were neither
    /// isolated within two days of it nor recovered meanwhile. Must be zero
    /// under the two-stage scheduler.
    pub late_detections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    pub seed: u64,
    pub population: u64,
    pub days: Vec<DayRecord>,
    pub total_tests: u64,
    pub final_cum_infected: u64,
    /// Unnecessary quarantine person-days summed over the trajectory.
    pub quarantine_person_days: u64,
    pub audit: ProtocolAudit,
}

impl TrajectoryMetrics {
    pub fn final_infected_fraction(&self) -> f64 {
        self.final_cum_infected as f64 / self.population as f64
    }
}

/// True when the cumulative infected fraction at horizon end reaches the
/// threshold.
pub fn detect_explosion(metrics: &TrajectoryMetrics, threshold_fraction: f64) -> bool {
    metrics.final_infected_fraction() >= threshold_fraction
}

enum AnyScheduler {
    Dorfman(DorfmanScheduler),
    Cca(CcaScheduler),
}

impl AnyScheduler {
    fn resolve(&mut self, state: &mut PopulationState, day: u32) -> Result<ResolveOutcome> {
        match self {
            AnyScheduler::Dorfman(s) => s.resolve(state, day),
            AnyScheduler::Cca(s) => s.resolve(state, day),
        }
    }

    fn register(
        &mut self,
        state: &PopulationState,
        day: u32,
        first_stage: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<RegisterOutcome> {
        match self {
            AnyScheduler::Dorfman(s) => s.register(state, day, first_stage, rng),
            AnyScheduler::Cca(s) => s.register(state, day, first_stage, rng),
        }
    }
}

struct TrajectoryRun {
    state: PopulationState,
    rng: ChaCha12Rng,
    scheduler: AnyScheduler,
    /// Day whose spread phase infected each individual (seeding = day 0).
    infection_day: Vec<Option<u32>>,
    /// First day the individual sat already-infected in a first-stage pool.
    infected_registration_day: Vec<Option<u32>>,
    isolation_day: Vec<Option<u32>>,
    recovery_day: Vec<Option<u32>>,
    audit: ProtocolAudit,
    is_dorfman: bool,
}

impl TrajectoryRun {
    fn record_resolution(&mut self, day: u32, res: &ResolveOutcome) {
        for &m in &res.isolated {
            self.isolation_day[m] = Some(day);
            if !self.state.health(m).ever_infected {
                self.audit.false_positive_isolations += 1;
            }
        }
    }

    fn record_registration(&mut self, day: u32, reg: &RegisterOutcome) {
        if !self.is_dorfman {
            return;
        }
        for &m in &reg.infected_at_first_stage {
            self.infected_registration_day[m].get_or_insert(day);
        }
    }

    fn record_spread(&mut self, day: u32, outcome: &SpreadOutcome) {
        for &m in &outcome.newly_infected {
            self.infection_day[m] = Some(day);
        }
        for &m in &outcome.recovered {
            self.recovery_day[m] = Some(day);
        }
    }

    fn day_record(&self, day: u32, res: &ResolveOutcome, reg: &RegisterOutcome) -> DayRecord {
        let state = &self.state;
        let mut active_infected = 0u64;
        let mut hist = vec![0u64; MAX_TRACKED_AGE + 1];
        for i in 0..state.len() {
            if state.status(i) == Status::Infected && !state.is_isolated(i) {
                active_infected += 1;
                let age = (day - self.infection_day[i].expect("infected without a day")) as usize;
                hist[age.min(MAX_TRACKED_AGE)] += 1;
            }
        }
        DayRecord {
            day,
            tests_registered: reg.tests_registered,
            cum_infected: state.ever_infected_count() as u64,
            active_infected,
            isolated: state.isolated_count() as u64,
            quarantined: res.quarantined_now,
            quarantined_uninfected: res.quarantined_uninfected_now,
            pipeline_size: reg.pipeline_size,
            undetected_age_hist: hist,
            quarantine_cost_realized: res.realized_quarantine_cost,
        }
    }

    fn finish_audit(&mut self, is_dorfman: bool) {
        if !is_dorfman {
            return;
        }
        for i in 0..self.state.len() {
            let Some(reg) = self.infected_registration_day[i] else {
                continue;
            };
            let isolated_in_time = self.isolation_day[i].is_some_and(|d| d <= reg + 2);
            let recovered_first = self.recovery_day[i].is_some_and(|d| d <= reg);
            if !isolated_in_time && !recovered_first {
                self.audit.late_detections += 1;
            }
        }
    }
}

/// Run one seeded trajectory of `horizon` testing days plus the trailing
/// resolutions.
pub fn run_trajectory(
    model: ModelSpec,
    protocol: ProtocolSpec,
    horizon: u32,
    seed: u64,
) -> Result<TrajectoryMetrics> {
    model.validate()?;
    if horizon == 0 {
        return Err(Error::param("horizon", "must be at least one day"));
    }
    let n = model.population_size();
    let rng = ChaCha12Rng::seed_from_u64(seed);

    let state = match &model {
        ModelSpec::Sbm(params) => {
            PopulationState::with_communities(params.population_size, params.community_size)?
        }
        ModelSpec::Iid { population_size, .. } => {
            PopulationState::single_community(*population_size)
        }
    };
    let seed_prob = match &model {
        ModelSpec::Sbm(params) => params.initial_prevalence,
        ModelSpec::Iid { infection_prob, .. } => *infection_prob,
    };

    let scheduler = match (&model, &protocol) {
        (ModelSpec::Sbm(params), ProtocolSpec::Dorfman(policy)) => AnyScheduler::Dorfman(
            DorfmanScheduler::new(*policy, SizingRule::SbmAdaptive(*params), state.community_count()),
        ),
        (ModelSpec::Iid { population_size, infection_prob }, ProtocolSpec::Dorfman(policy)) => {
            // The whole-horizon schedule is optimal regardless of realized
            // pipeline sizes, so it is computed once up front.
            let s_max = default_s_max(*infection_prob, *population_size as u32);
            let plan =
                optimize_backward(*population_size as f64, *infection_prob, horizon, s_max);
            AnyScheduler::Dorfman(DorfmanScheduler::new(
                *policy,
                SizingRule::FixedPlan(plan.group_sizes),
                1,
            ))
        }
        (ModelSpec::Sbm(params), ProtocolSpec::Cca(config)) => {
            AnyScheduler::Cca(CcaScheduler::new_sbm(*config, *params))
        }
        (ModelSpec::Iid { infection_prob, .. }, ProtocolSpec::Cca(config)) => {
            AnyScheduler::Cca(CcaScheduler::new_iid(*config, *infection_prob, n))
        }
    };
    let is_dorfman = matches!(protocol, ProtocolSpec::Dorfman(_));

    let mut run = TrajectoryRun {
        infection_day: vec![None; n],
        infected_registration_day: vec![None; n],
        isolation_day: vec![None; n],
        recovery_day: vec![None; n],
        audit: ProtocolAudit::default(),
        scheduler,
        is_dorfman,
        state,
        rng,
    };

    // Day 0: infections seeded during the evening phase, no testing yet.
    seed_infections(&mut run.state, seed_prob, &mut run.rng)?;
    for i in 0..n {
        if run.state.health(i).ever_infected {
            run.infection_day[i] = Some(0);
        }
    }
    let mut days = Vec::with_capacity(horizon as usize + 3);
    days.push(run.day_record(0, &ResolveOutcome::default(), &RegisterOutcome::default()));

    for day in 1..=horizon + 2 {
        run.state.day = day;
        let res = run.scheduler.resolve(&mut run.state, day)?;
        run.record_resolution(day, &res);

        let reg = if day <= horizon + 1 {
            // Past the horizon only trailing second-stage tests register.
            let first_stage = day <= horizon;
            let reg = {
                let TrajectoryRun { scheduler, state, rng, .. } = &mut run;
                scheduler.register(state, day, first_stage, rng)?
            };
            run.record_registration(day, &reg);
            reg
        } else {
            RegisterOutcome::default()
        };

        if day <= horizon {
            let outcome = {
                let TrajectoryRun { state, rng, .. } = &mut run;
                match &model {
                    ModelSpec::Sbm(params) => sbm_spread_and_recover(state, params, rng),
                    ModelSpec::Iid { infection_prob, .. } => SpreadOutcome {
                        newly_infected: iid_spread_step(state, *infection_prob, rng),
                        recovered: Vec::new(),
                    },
                }
            };
            run.record_spread(day, &outcome);
        }

        days.push(run.day_record(day, &res, &reg));
    }

    run.finish_audit(is_dorfman);

    let total_tests = days.iter().map(|d| d.tests_registered).sum();
    let final_cum_infected = days.last().unwrap().cum_infected;
    let quarantine_person_days = days.iter().map(|d| d.quarantined_uninfected).sum();
    Ok(TrajectoryMetrics {
        seed,
        population: n as u64,
        days,
        total_tests,
        final_cum_infected,
        quarantine_person_days,
        audit: run.audit,
    })
}

/// Batch aggregate. Means are computed from exact integer sums and quantiles
/// from sorted copies, so the summary does not depend on trajectory order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n_traj: u64,
    pub mean_final_infected_frac: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub explosion_frac: f64,
    pub mean_total_tests: f64,
    pub mean_quarantine_person_days: f64,
    pub seed: u64,
}

/// Nearest-rank quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn summarize(
    metrics: &[TrajectoryMetrics],
    explosion_threshold: f64,
    base_seed: u64,
) -> BatchSummary {
    let n = metrics.len() as u64;
    assert!(n > 0, "summary of an empty batch");
    let population = metrics[0].population;
    let infected_sum: u64 = metrics.iter().map(|m| m.final_cum_infected).sum();
    let tests_sum: u64 = metrics.iter().map(|m| m.total_tests).sum();
    let person_days_sum: u64 = metrics.iter().map(|m| m.quarantine_person_days).sum();
    let explosions = metrics
        .iter()
        .filter(|m| detect_explosion(m, explosion_threshold))
        .count() as u64;
    let mut fractions: Vec<f64> = metrics
        .iter()
        .map(TrajectoryMetrics::final_infected_fraction)
        .collect();
    fractions.sort_by(f64::total_cmp);
    BatchSummary {
        n_traj: n,
        mean_final_infected_frac: infected_sum as f64 / (n * population) as f64,
        q10: quantile(&fractions, 0.1),
        q50: quantile(&fractions, 0.5),
        q90: quantile(&fractions, 0.9),
        explosion_frac: explosions as f64 / n as f64,
        mean_total_tests: tests_sum as f64 / n as f64,
        mean_quarantine_person_days: person_days_sum as f64 / n as f64,
        seed: base_seed,
    }
}

/// Run `n_traj` trajectories with seeds `base_seed..base_seed + n_traj`,
/// in parallel.
pub fn run_batch(
    model: ModelSpec,
    protocol: ProtocolSpec,
    horizon: u32,
    n_traj: u64,
    base_seed: u64,
    explosion_threshold: f64,
) -> Result<(BatchSummary, Vec<TrajectoryMetrics>)> {
    if n_traj == 0 {
        return Err(Error::param("n_traj", "need at least one trajectory"));
    }
    let metrics: Vec<TrajectoryMetrics> = (0..n_traj)
        .into_par_iter()
        .map(|i| run_trajectory(model, protocol, horizon, base_seed + i))
        .collect::<Result<_>>()?;
    let summary = summarize(&metrics, explosion_threshold, base_seed);
    Ok((summary, metrics))
}
