//! Population state and infection dynamics.
//!
//! Two infection models share the same state representation:
//!
//! - the community-structured SBM model: an individual infected at the start
//!   of the spread phase transmits to each active susceptible in its own
//!   community with probability `q1` and elsewhere with probability `q2`, and
//!   may itself recover with probability `r` during the same phase;
//! - the simplified i.i.d. model: every never-infected individual becomes
//!   infected independently with probability `p` each day, and never recovers.
//!
//! Isolation and quarantine are flags, never removals, so individual ids stay
//! stable across the whole trajectory.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Parameters of the community-structured infection model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub population_size: usize,
    pub community_size: usize,
    /// Per-pair intra-community daily transmission probability.
    pub intra_rate: f64,
    /// Per-pair inter-community daily transmission probability.
    pub inter_rate: f64,
    pub initial_prevalence: f64,
    pub recovery_prob: f64,
}

impl SbmParams {
    pub fn new(
        population_size: usize,
        community_size: usize,
        intra_rate: f64,
        inter_rate: f64,
        initial_prevalence: f64,
        recovery_prob: f64,
    ) -> Result<Self> {
        if population_size == 0 {
            return Err(Error::param("population_size", "must be positive"));
        }
        if community_size == 0 || !population_size.is_multiple_of(community_size) {
            return Err(Error::param(
                "community_size",
                format!("community size must divide population ({population_size} % {community_size} != 0)"),
            ));
        }
        for (name, v) in [
            ("intra_rate", intra_rate),
            ("inter_rate", inter_rate),
            ("initial_prevalence", initial_prevalence),
            ("recovery_prob", recovery_prob),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::param(name, format!("must be a probability, got {v}")));
            }
        }
        if inter_rate > intra_rate {
            return Err(Error::param(
                "inter_rate",
                "inter-community rate must not exceed the intra-community rate",
            ));
        }
        Ok(Self {
            population_size,
            community_size,
            intra_rate,
            inter_rate,
            initial_prevalence,
            recovery_prob,
        })
    }

    pub fn community_count(&self) -> usize {
        self.population_size / self.community_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Susceptible,
    Infected,
    Recovered,
}

/// Per-individual health and intervention flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HealthState {
    pub status: Status,
    /// Confirmed positive and removed from the population indefinitely.
    pub isolated: bool,
    /// Quarantined through the spread phases of days strictly before this day.
    pub quarantined_until: Option<u32>,
    pub ever_infected: bool,
}

impl HealthState {
    fn susceptible() -> Self {
        HealthState {
            status: Status::Susceptible,
            isolated: false,
            quarantined_until: None,
            ever_infected: false,
        }
    }
}

/// The full population: a day clock, one `HealthState` per individual, and a
/// fixed community assignment. The individual count never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub day: u32,
    individuals: Vec<HealthState>,
    community_of: Vec<usize>,
    community_count: usize,
}

impl PopulationState {
    /// Fresh all-susceptible population partitioned into consecutive
    /// communities of `community_size`.
    pub fn with_communities(population_size: usize, community_size: usize) -> Result<Self> {
        if community_size == 0 || !population_size.is_multiple_of(community_size) {
            return Err(Error::param(
                "community_size",
                "community size must divide population",
            ));
        }
        let community_of = (0..population_size).map(|i| i / community_size).collect();
        Ok(PopulationState {
            day: 0,
            individuals: vec![HealthState::susceptible(); population_size],
            community_of,
            community_count: population_size / community_size,
        })
    }

    /// Single-community population for the i.i.d. model.
    pub fn single_community(population_size: usize) -> Self {
        Self::with_communities(population_size, population_size).expect("n divides n")
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.community_count
    }

    pub fn community_of(&self, individual: usize) -> usize {
        self.community_of[individual]
    }

    pub fn health(&self, individual: usize) -> &HealthState {
        &self.individuals[individual]
    }

    pub fn status(&self, individual: usize) -> Status {
        self.individuals[individual].status
    }

    pub fn is_isolated(&self, individual: usize) -> bool {
        self.individuals[individual].isolated
    }

    /// Quarantined during the current day's phases?
    pub fn is_quarantined(&self, individual: usize) -> bool {
        self.individuals[individual]
            .quarantined_until
            .is_some_and(|until| self.day < until)
    }

    /// Neither isolated nor quarantined: participates in testing and spread.
    pub fn is_active(&self, individual: usize) -> bool {
        !self.is_isolated(individual) && !self.is_quarantined(individual)
    }

    /// Mark a confirmed positive; isolation supersedes any quarantine window.
    pub fn isolate(&mut self, individual: usize) {
        let h = &mut self.individuals[individual];
        h.isolated = true;
        h.quarantined_until = None;
    }

    /// Quarantine through the end of the spread phase of day `until - 1`.
    pub fn quarantine_until(&mut self, individual: usize, until: u32) {
        self.individuals[individual].quarantined_until = Some(until);
    }

    pub fn release_from_quarantine(&mut self, individual: usize) {
        self.individuals[individual].quarantined_until = None;
    }

    pub fn infect(&mut self, individual: usize) {
        let h = &mut self.individuals[individual];
        h.status = Status::Infected;
        h.ever_infected = true;
    }

    fn recover(&mut self, individual: usize) {
        self.individuals[individual].status = Status::Recovered;
    }

    /// (susceptible, infected, recovered) counts.
    pub fn status_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for h in &self.individuals {
            match h.status {
                Status::Susceptible => counts.0 += 1,
                Status::Infected => counts.1 += 1,
                Status::Recovered => counts.2 += 1,
            }
        }
        counts
    }

    pub fn ever_infected_count(&self) -> usize {
        self.individuals.iter().filter(|h| h.ever_infected).count()
    }

    pub fn isolated_count(&self) -> usize {
        self.individuals.iter().filter(|h| h.isolated).count()
    }

    pub fn quarantined_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_quarantined(i)).count()
    }

    /// Infected and free to transmit today, grouped by community.
    fn active_infected_by_community(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.community_count];
        for i in 0..self.len() {
            if self.individuals[i].status == Status::Infected && self.is_active(i) {
                counts[self.community_of[i]] += 1;
            }
        }
        counts
    }

    pub fn infected_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.individuals[i].status == Status::Infected)
            .collect()
    }
}

/// Independently infect each individual with probability `p_init` at day 0.
/// Returns the seeded count.
pub fn seed_infections<R: Rng>(
    state: &mut PopulationState,
    p_init: f64,
    rng: &mut R,
) -> Result<usize> {
    if state.day != 0 {
        return Err(Error::InconsistentState(
            "seeding is only valid at day 0".into(),
        ));
    }
    if state
        .individuals
        .iter()
        .any(|h| h.status != Status::Susceptible)
    {
        return Err(Error::InconsistentState(
            "seeding requires an all-susceptible population".into(),
        ));
    }
    let mut seeded = 0;
    for i in 0..state.len() {
        if rng.random_bool(p_init) {
            state.infect(i);
            seeded += 1;
        }
    }
    Ok(seeded)
}

/// One SBM spread phase: each active susceptible in community `j` becomes
/// infected with probability `1 - (1-q1)^k1 * (1-q2)^k2`, where `k1` counts
/// active infected in `j` and `k2` active infected elsewhere, both snapshotted
/// before any mutation. Equivalent in distribution to independent per-pair
/// transmission. Returns the newly infected ids.
pub fn sbm_spread_step<R: Rng>(
    state: &mut PopulationState,
    params: &SbmParams,
    rng: &mut R,
) -> Vec<usize> {
    let newly = plan_sbm_infections(state, params, rng);
    for &i in &newly {
        state.infect(i);
    }
    newly
}

/// Draw the new-infection set from the current snapshot without mutating.
fn plan_sbm_infections<R: Rng>(
    state: &PopulationState,
    params: &SbmParams,
    rng: &mut R,
) -> Vec<usize> {
    let infected = state.active_infected_by_community();
    let total: u32 = infected.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    // Per-community infection probability for an active susceptible.
    let p_by_community: Vec<f64> = infected
        .iter()
        .map(|&k1| {
            let k2 = total - k1;
            1.0 - (1.0 - params.intra_rate).powi(k1 as i32)
                * (1.0 - params.inter_rate).powi(k2 as i32)
        })
        .collect();
    let mut newly = Vec::new();
    for i in 0..state.len() {
        if state.individuals[i].status == Status::Susceptible && state.is_active(i) {
            let p = p_by_community[state.community_of[i]];
            if p > 0.0 && rng.random_bool(p) {
                newly.push(i);
            }
        }
    }
    newly
}

/// Recovery draw for every currently infected individual. Callers must invoke
/// this on the pre-spread snapshot (i.e. before applying the same phase's new
/// infections) so that individuals infected during the phase cannot recover
/// the same day. Returns the recovered ids.
pub fn recovery_step<R: Rng>(state: &mut PopulationState, r: f64, rng: &mut R) -> Vec<usize> {
    let infected = state.infected_indices();
    let mut recovered = Vec::new();
    for i in infected {
        if rng.random_bool(r) {
            state.recover(i);
            recovered.push(i);
        }
    }
    recovered
}

/// Full SBM spread phase: transmission and recovery both read the same
/// start-of-phase snapshot, so an individual can infect others and recover in
/// the same phase, while the newly infected can do neither.
pub fn sbm_spread_and_recover<R: Rng>(
    state: &mut PopulationState,
    params: &SbmParams,
    rng: &mut R,
) -> SpreadOutcome {
    let planned = plan_sbm_infections(state, params, rng);
    let recovered = recovery_step(state, params.recovery_prob, rng);
    for &i in &planned {
        state.infect(i);
    }
    SpreadOutcome {
        newly_infected: planned,
        recovered,
    }
}

/// One i.i.d. spread phase: every never-infected individual becomes infected
/// independently with probability `p`. No recovery in this model.
pub fn iid_spread_step<R: Rng>(state: &mut PopulationState, p: f64, rng: &mut R) -> Vec<usize> {
    let mut newly = Vec::new();
    if p <= 0.0 {
        return newly;
    }
    for i in 0..state.len() {
        if !state.individuals[i].ever_infected && rng.random_bool(p) {
            newly.push(i);
        }
    }
    for &i in &newly {
        state.infect(i);
    }
    newly
}

#[derive(Debug, Clone, Default)]
pub struct SpreadOutcome {
    pub newly_infected: Vec<usize>,
    pub recovered: Vec<usize>,
}

/// Noiseless pooled test: OR of the members' infection indicators, evaluated
/// against the state at registration time. Recovered individuals contribute 0.
pub fn pool_outcome(members: &[usize], state: &PopulationState) -> Result<bool> {
    if members.is_empty() {
        return Err(Error::param("members", "pool must not be empty"));
    }
    Ok(members
        .iter()
        .any(|&i| state.status(i) == Status::Infected))
}
