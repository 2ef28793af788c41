//! Adaptive two-stage (Dorfman) scheduler with a one-day result delay.
//!
//! Daily cycle for day `d`:
//!
//! - `d-` (resolve): outcomes of pools registered at `(d-1)+` arrive. Members
//!   of contaminated first-stage pools are due for individual tests today and,
//!   under quarantining policies, are quarantined until `(d+1)-`. Second-stage
//!   positives are isolated indefinitely; second-stage negatives rejoin (under
//!   quarantining policies they skip today's registration, having sat out
//!   yesterday's spread phase in quarantine).
//! - `d+` (register): individual tests for the due roster, then the remaining
//!   eligible individuals of each community are partitioned uniformly at
//!   random into fresh first-stage pools.
//!
//! Pool sizes adapt daily: the per-community prevalence estimate counts one
//! infection source per contaminated first-stage pool, plus one per
//! second-stage positive when nobody was quarantined.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dorfman::{estimate_next_day_prevalence, optimal_group_size, Objective};
use crate::epidemic::{pool_outcome, PopulationState, SbmParams, Status};
use crate::error::Error;
use crate::Result;

use super::{PendingPool, QuarantinePolicy, RegisterOutcome, ResolveOutcome, Stage, TestPool};

/// How first-stage pool sizes are chosen each day.
#[derive(Debug, Clone)]
pub enum SizingRule {
    /// Re-optimize per community from the estimated next-day prevalence.
    SbmAdaptive(SbmParams),
    /// Fixed per-day schedule (day `d` uses `plan[d-1]`, clamped to the last
    /// entry); used by the i.i.d. model where the whole horizon is optimized
    /// up front.
    FixedPlan(Vec<u32>),
}

#[derive(Debug, Clone)]
pub struct DorfmanScheduler {
    policy: QuarantinePolicy,
    sizing: SizingRule,
    pending: Vec<PendingPool>,
    /// Individuals owed a second-stage test at today's registration.
    due_second: Vec<usize>,
    /// Released this morning; skip exactly today's registration.
    exempt_today: Vec<usize>,
    /// Per-community infection-source counts from this morning's resolution.
    source_counts: Vec<u64>,
    any_resolution_yet: bool,
    pool_seq: u64,
}

impl DorfmanScheduler {
    pub fn new(policy: QuarantinePolicy, sizing: SizingRule, community_count: usize) -> Self {
        DorfmanScheduler {
            policy,
            sizing,
            pending: Vec::new(),
            due_second: Vec::new(),
            exempt_today: Vec::new(),
            source_counts: vec![0; community_count],
            any_resolution_yet: false,
            pool_seq: 0,
        }
    }

    pub fn policy(&self) -> QuarantinePolicy {
        self.policy
    }

    /// Pools currently awaiting results (registered at the previous `d+`).
    pub fn pending(&self) -> &[PendingPool] {
        &self.pending
    }

    /// Morning resolution for day `day`.
    pub fn resolve(
        &mut self,
        state: &mut PopulationState,
        day: u32,
    ) -> Result<ResolveOutcome> {
        let pools = std::mem::take(&mut self.pending);
        // Sizing falls back to the initial prevalence until first results.
        if !pools.is_empty() {
            self.any_resolution_yet = true;
        }
        let communities = state.community_count();
        let mut contaminated = vec![0u64; communities];
        let mut second_stage_positive = vec![0u64; communities];
        // Unnecessarily quarantined per community, for the realized cost.
        let mut unnecessary = vec![0u64; communities];
        let mut out = ResolveOutcome::default();

        for pending in pools {
            let pool = pending.pool;
            if pool.members.iter().any(|&m| state.is_isolated(m)) {
                return Err(Error::InconsistentState(format!(
                    "pool {} references an isolated individual",
                    pool.id
                )));
            }
            match pool.stage {
                Stage::First => {
                    if pending.outcome {
                        contaminated[pool.community] += 1;
                        for &m in &pool.members {
                            self.due_second.push(m);
                            if self.policy.quarantines() {
                                state.quarantine_until(m, day + 1);
                                out.quarantined_now += 1;
                                if state.status(m) != Status::Infected {
                                    out.quarantined_uninfected_now += 1;
                                    unnecessary[pool.community] += 1;
                                }
                            }
                        }
                    }
                    // Clean pools: members simply re-enter today's pools.
                }
                Stage::Second => {
                    let m = pool.members[0];
                    if pending.outcome {
                        state.isolate(m);
                        second_stage_positive[pool.community] += 1;
                        out.isolated.push(m);
                    } else {
                        if self.policy.quarantines() {
                            state.release_from_quarantine(m);
                            self.exempt_today.push(m);
                        }
                        out.released.push(m);
                    }
                }
            }
        }

        if let Some(params) = self.policy.cost_params() {
            out.realized_quarantine_cost = unnecessary
                .iter()
                .filter(|&&x| x >= 1)
                .map(|&x| params.quarantine_base.powi(x as i32))
                .sum();
        }

        // Infection sources active during yesterday's spread phase, used to
        // size today's pools: one per contaminated pool, plus one per
        // second-stage positive when those individuals were not quarantined.
        self.source_counts = if self.policy.quarantines() {
            contaminated
        } else {
            contaminated
                .iter()
                .zip(&second_stage_positive)
                .map(|(&c, &p)| c + p)
                .collect()
        };
        Ok(out)
    }

    /// Registration for day `day`. `first_stage` is false past the horizon,
    /// when only the trailing individual tests are still owed.
    pub fn register<R: Rng>(
        &mut self,
        state: &PopulationState,
        day: u32,
        first_stage: bool,
        rng: &mut R,
    ) -> Result<RegisterOutcome> {
        let mut out = RegisterOutcome::default();
        let mut excluded = vec![false; state.len()];

        // Second-stage singletons for the due roster.
        let due = std::mem::take(&mut self.due_second);
        for &m in &due {
            excluded[m] = true;
            let members = vec![m];
            let outcome = pool_outcome(&members, state)?;
            let id = self.next_id();
            self.pending.push(PendingPool {
                pool: TestPool {
                    id,
                    members,
                    stage: Stage::Second,
                    community: state.community_of(m),
                    registration_day: day,
                },
                outcome,
            });
            out.tests_registered += 1;
        }

        for &m in &self.exempt_today {
            excluded[m] = true;
        }
        self.exempt_today.clear();

        if !first_stage {
            return Ok(out);
        }

        // Fresh first-stage pools, community by community.
        let communities = state.community_count();
        let mut eligible: Vec<Vec<usize>> = vec![Vec::new(); communities];
        for i in 0..state.len() {
            if state.is_active(i) && !excluded[i] {
                eligible[state.community_of(i)].push(i);
            }
        }
        let sizes = self.pool_sizes_for_day(day, &eligible)?;
        for (community, mut members) in eligible.into_iter().enumerate() {
            out.pipeline_size += members.len() as u64;
            if members.is_empty() {
                continue;
            }
            members.shuffle(rng);
            let s = sizes[community].max(1) as usize;
            for chunk in members.chunks(s) {
                let members = chunk.to_vec();
                for &m in &members {
                    if state.status(m) == Status::Infected {
                        out.infected_at_first_stage.push(m);
                    }
                }
                let outcome = pool_outcome(&members, state)?;
                let id = self.next_id();
                self.pending.push(PendingPool {
                    pool: TestPool {
                        id,
                        members,
                        stage: Stage::First,
                        community,
                        registration_day: day,
                    },
                    outcome,
                });
                out.tests_registered += 1;
            }
        }
        Ok(out)
    }

    fn pool_sizes_for_day(&self, day: u32, eligible: &[Vec<usize>]) -> Result<Vec<u32>> {
        match &self.sizing {
            SizingRule::FixedPlan(plan) => {
                if plan.is_empty() {
                    return Err(Error::InvalidConfig("empty group-size plan".into()));
                }
                let idx = (day.saturating_sub(1) as usize).min(plan.len() - 1);
                Ok(vec![plan[idx]; eligible.len()])
            }
            SizingRule::SbmAdaptive(params) => {
                let objective = match self.policy.cost_params() {
                    Some(cost) => Objective::Combined(cost),
                    None => Objective::TestOnly,
                };
                let s_max = params.community_size as u32;
                if !self.any_resolution_yet {
                    // Day one: no results yet, size from the initial prevalence.
                    let s = optimal_group_size(params.initial_prevalence, objective, s_max);
                    return Ok(vec![s; eligible.len()]);
                }
                let prevalence = estimate_next_day_prevalence(
                    &self.source_counts,
                    params.intra_rate,
                    params.inter_rate,
                );
                Ok(prevalence
                    .0
                    .iter()
                    .map(|&p| optimal_group_size(p, objective, s_max))
                    .collect())
            }
        }
    }

    fn next_id(&mut self) -> u64 {
        let id = self.pool_seq;
        self.pool_seq += 1;
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::seed_infections;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sbm_params() -> SbmParams {
        SbmParams::new(100, 50, 0.012, 0.0004, 0.02, 0.1).unwrap()
    }

    fn scheduler(policy: QuarantinePolicy) -> DorfmanScheduler {
        DorfmanScheduler::new(policy, SizingRule::SbmAdaptive(sbm_params()), 2)
    }

    #[test]
    fn day_one_sizing_uses_initial_prevalence() {
        let mut sched = scheduler(QuarantinePolicy::NoQuarantine);
        let state = PopulationState::with_communities(100, 50).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let out = sched.register(&state, 1, true, &mut rng).unwrap();
        // s*(0.02) = 8: each community of 50 gets 6 pools of 8 and one of 2.
        assert_eq!(out.tests_registered, 14);
        assert_eq!(out.pipeline_size, 100);
        assert_eq!(sched.pending().len(), 14);
        for p in sched.pending() {
            assert!(p.pool.members.len() <= 8);
            assert!(p
                .pool
                .members
                .iter()
                .all(|&m| state.community_of(m) == p.pool.community));
        }
    }

    #[test]
    fn residual_pool_rule() {
        // Community of 50 with s*=7 -> 7 pools of 7 and one residual of 1.
        let sizes = [7usize];
        let mut members: Vec<usize> = (0..50).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        members.shuffle(&mut rng);
        let chunks: Vec<_> = members.chunks(sizes[0]).collect();
        assert_eq!(chunks.len(), 8);
        assert_eq!(chunks[7].len(), 1);
    }

    #[test]
    fn no_double_booking_and_all_active_covered() {
        let mut sched = scheduler(QuarantinePolicy::NoQuarantine);
        let mut state = PopulationState::with_communities(100, 50).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        seed_infections(&mut state, 0.1, &mut rng).unwrap();
        for day in 1..=4 {
            state.day = day;
            sched.resolve(&mut state, day).unwrap();
            sched.register(&state, day, true, &mut rng).unwrap();
            let mut seen = vec![0u32; state.len()];
            for p in sched.pending() {
                for &m in &p.pool.members {
                    seen[m] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c <= 1), "double-booked on day {day}");
        }
    }

    #[test]
    fn contaminated_pool_walkthrough_with_quarantine() {
        // One contaminated pool of 5 with one infected member: all 5 get
        // quarantined and individually tested; next morning the infected one
        // is isolated and the other four are released and skip that day's
        // registration.
        let mut state = PopulationState::with_communities(10, 5).unwrap();
        state.infect(2);
        let mut sched = DorfmanScheduler::new(
            QuarantinePolicy::Quarantine,
            SizingRule::FixedPlan(vec![5]),
            2,
        );
        let mut rng = ChaCha12Rng::seed_from_u64(4);

        state.day = 1;
        sched.resolve(&mut state, 1).unwrap();
        let reg = sched.register(&state, 1, true, &mut rng).unwrap();
        assert_eq!(reg.tests_registered, 2); // one pool per community
        assert_eq!(reg.infected_at_first_stage, vec![2]);

        state.day = 2;
        let res = sched.resolve(&mut state, 2).unwrap();
        assert_eq!(res.quarantined_now, 5);
        assert_eq!(res.quarantined_uninfected_now, 4);
        for m in 0..5 {
            assert!(state.is_quarantined(m), "member {m} not quarantined");
        }
        let reg = sched.register(&state, 2, true, &mut rng).unwrap();
        // Five singletons plus one first-stage pool for the clean community.
        assert_eq!(reg.tests_registered, 6);
        assert_eq!(reg.pipeline_size, 5);

        state.day = 3;
        let res = sched.resolve(&mut state, 3).unwrap();
        assert_eq!(res.isolated, vec![2]);
        assert_eq!(res.released.len(), 4);
        assert!(state.is_isolated(2));
        for m in [0usize, 1, 3, 4] {
            assert!(!state.is_quarantined(m));
        }
        // Released negatives skip today's registration entirely.
        let reg = sched.register(&state, 3, true, &mut rng).unwrap();
        for p in sched.pending() {
            for m in [0usize, 1, 3, 4] {
                assert!(!p.pool.members.contains(&m));
            }
        }
        assert_eq!(reg.pipeline_size, 5); // only the clean community

        // And they re-enter the following day.
        state.day = 4;
        sched.resolve(&mut state, 4).unwrap();
        let reg = sched.register(&state, 4, true, &mut rng).unwrap();
        assert_eq!(reg.pipeline_size, 9); // everyone but the isolated one
    }

    #[test]
    fn no_quarantine_keeps_contaminated_members_active() {
        let mut state = PopulationState::with_communities(10, 5).unwrap();
        state.infect(2);
        let mut sched = DorfmanScheduler::new(
            QuarantinePolicy::NoQuarantine,
            SizingRule::FixedPlan(vec![5]),
            2,
        );
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        state.day = 1;
        sched.resolve(&mut state, 1).unwrap();
        sched.register(&state, 1, true, &mut rng).unwrap();
        state.day = 2;
        let res = sched.resolve(&mut state, 2).unwrap();
        assert_eq!(res.quarantined_now, 0);
        assert!((0..5).all(|m| state.is_active(m)));
        // Due members still sit out today's first stage.
        let reg = sched.register(&state, 2, true, &mut rng).unwrap();
        assert_eq!(reg.pipeline_size, 5);
        // Negatives released next morning rejoin the same day.
        state.day = 3;
        sched.resolve(&mut state, 3).unwrap();
        let reg = sched.register(&state, 3, true, &mut rng).unwrap();
        assert_eq!(reg.pipeline_size, 9);
    }

    #[test]
    fn all_negative_pools_mean_no_quarantines_or_due_tests() {
        let mut state = PopulationState::with_communities(100, 50).unwrap();
        let mut sched = scheduler(QuarantinePolicy::Quarantine);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        state.day = 1;
        sched.register(&state, 1, true, &mut rng).unwrap();
        state.day = 2;
        let res = sched.resolve(&mut state, 2).unwrap();
        assert_eq!(res, ResolveOutcome::default());
        let reg = sched.register(&state, 2, true, &mut rng).unwrap();
        assert_eq!(reg.pipeline_size, 100);
    }

    #[test]
    fn resolve_rejects_isolated_pool_members() {
        let mut state = PopulationState::with_communities(10, 5).unwrap();
        let mut sched = DorfmanScheduler::new(
            QuarantinePolicy::NoQuarantine,
            SizingRule::FixedPlan(vec![5]),
            2,
        );
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        state.day = 1;
        sched.register(&state, 1, true, &mut rng).unwrap();
        state.isolate(3); // out-of-band isolation corrupts the ledger
        state.day = 2;
        assert!(sched.resolve(&mut state, 2).is_err());
    }

    #[test]
    fn cost_aware_sizing_shrinks_pools() {
        let params = SbmParams::new(100, 50, 0.012, 0.0004, 0.02, 0.1).unwrap();
        let cost = crate::dorfman::CostParams::new(1.5, 2.0).unwrap();
        let mut aware = DorfmanScheduler::new(
            QuarantinePolicy::QuarantineCostAware(cost),
            SizingRule::SbmAdaptive(params),
            2,
        );
        let state = PopulationState::with_communities(100, 50).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let out = aware.register(&state, 1, true, &mut rng).unwrap();
        let max_pool = aware
            .pending()
            .iter()
            .map(|p| p.pool.members.len())
            .max()
            .unwrap();
        // s*(0.02, combined a=1.5 alpha=2) = 4 < s*(0.02, tests only) = 8.
        assert_eq!(max_pool, 4);
        assert!(out.tests_registered > 14);
    }
}
