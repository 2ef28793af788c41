//! Non-adaptive baseline: one randomized test design per day over all
//! non-isolated individuals, decoded with the definite-defective (DD) rule.
//!
//! Each of the day's `T_d` tests includes each eligible individual
//! independently with probability `1/mu`, where `mu` estimates the number of
//! currently detectable infected. DD never produces a false positive, so
//! isolation stays zero-error; its false negatives are retested the next day
//! with a fresh design.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::epidemic::{PopulationState, SbmParams, Status};
use crate::Result;

use super::{BudgetRule, CcaConfig, RegisterOutcome, ResolveOutcome};

/// Per-day test budget, rounded up, floored at one test. `mu` is the
/// detectable-infected estimate, `p` the per-day infection probability used by
/// the `PnLog` rule.
pub fn cca_budget(n_d: u64, mu: f64, p: f64, config: &CcaConfig) -> u64 {
    assert!(n_d >= 1, "budget needs a nonempty population");
    let n = n_d as f64;
    let raw = match config.budget_rule {
        BudgetRule::MuLog { c } => c * std::f64::consts::E * mu * n.ln(),
        BudgetRule::PnLog { c } => c * std::f64::consts::E * p * n * n.ln(),
    };
    ((1.0 + config.slack_delta) * raw).ceil().max(1.0) as u64
}

/// Bernoulli random design: each of `t_d` tests includes each eligible
/// individual independently with probability `min(1, 1/mu)`. Members are
/// returned sorted within each test.
pub fn cca_design<R: Rng>(
    eligible: &[usize],
    t_d: u64,
    mu: f64,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    assert!(t_d >= 1 && mu >= 1.0);
    let q = (1.0 / mu).min(1.0);
    let n = eligible.len();
    let mut tests = Vec::with_capacity(t_d as usize);
    for _ in 0..t_d {
        if q >= 1.0 {
            tests.push(eligible.to_vec());
            continue;
        }
        // Draw the member count, then the members, instead of n Bernoullis.
        let count = Binomial::new(n as u64, q).expect("valid binomial").sample(rng) as usize;
        let mut picks = rand::seq::index::sample(rng, n, count.min(n)).into_vec();
        picks.sort_unstable();
        tests.push(picks.iter().map(|&i| eligible[i]).collect());
    }
    tests
}

/// Definite-defective decoding. Anyone appearing in a negative test is
/// definitely non-defective; a positive test whose members are all cleared
/// except one pins that one as defective. Everyone unresolved is classified
/// negative, so false negatives are possible but false positives are not.
/// Returns the sorted list of definite defectives.
pub fn dd_decode(tests: &[Vec<usize>], outcomes: &[bool]) -> Vec<usize> {
    assert_eq!(tests.len(), outcomes.len());
    let mut cleared = std::collections::HashSet::new();
    for (members, &positive) in tests.iter().zip(outcomes) {
        if !positive {
            cleared.extend(members.iter().copied());
        }
    }
    let mut positives = std::collections::BTreeSet::new();
    for (members, &positive) in tests.iter().zip(outcomes) {
        if !positive {
            continue;
        }
        let mut unresolved = members.iter().filter(|m| !cleared.contains(*m));
        if let (Some(&only), None) = (unresolved.next(), unresolved.next()) {
            positives.insert(only);
        }
    }
    positives.into_iter().collect()
}

/// Detectable-infected estimate feeding the daily budget and design density.
/// The design is committed to in advance: the estimate never reacts to decode
/// results, which is what lets decode failures compound.
#[derive(Debug, Clone)]
enum MuEstimator {
    /// i.i.d. model: infections arrive at a steady expected rate, so the
    /// design density is sized once for the initial expected prevalence.
    Iid { mu: f64 },
    /// Community model: per-community expected detectable count, advanced
    /// each day by the spread formula under the planned assumption that all
    /// but the miss carryover are found after one day of spreading.
    Sbm {
        params: SbmParams,
        /// Expected detectable infected per community today.
        detectable: Vec<f64>,
        /// Expected ever-infected per community (depletes the susceptibles).
        cumulative: Vec<f64>,
    },
}

impl MuEstimator {
    fn mu(&self) -> f64 {
        match self {
            MuEstimator::Iid { mu } => mu.max(1.0),
            MuEstimator::Sbm { detectable, .. } => detectable.iter().sum::<f64>().max(1.0),
        }
    }

    /// Advance the planned schedule by one day: the expected new infections of
    /// one spread phase, plus the unresolved carryover the decoder is budgeted
    /// to miss, become tomorrow's detectable set.
    fn advance(&mut self) {
        let MuEstimator::Sbm { params, detectable, cumulative } = self else {
            return;
        };
        let total: f64 = detectable.iter().sum();
        let c = params.community_size as f64;
        for j in 0..detectable.len() {
            let own = detectable[j];
            let escape = (1.0 - params.intra_rate).powf(own)
                * (1.0 - params.inter_rate).powf(total - own);
            let new = (c - cumulative[j]).max(0.0) * (1.0 - escape);
            cumulative[j] += new;
            detectable[j] =
                new + PLANNED_MISS_RATE * (1.0 - params.recovery_prob) * detectable[j];
        }
    }
}

/// Fraction of today's detectable set the schedule assumes the decoder will
/// fail to pin (DD admits false negatives); they stay detectable the next day
/// unless they recover.
const PLANNED_MISS_RATE: f64 = 0.08;

#[derive(Debug, Clone)]
struct PendingDesign {
    tests: Vec<Vec<usize>>,
    outcomes: Vec<bool>,
}

/// Non-adaptive daily scheduler: fresh design every day, DD decoding of the
/// previous day's design every morning.
#[derive(Debug, Clone)]
pub struct CcaScheduler {
    config: CcaConfig,
    /// The i.i.d. per-day infection probability, or the SBM initial
    /// prevalence; used by the `PnLog` budget rule.
    infection_p: f64,
    estimator: MuEstimator,
    pending: Option<PendingDesign>,
}

impl CcaScheduler {
    /// `n` is the population size; the detectable-count schedule starts at
    /// the expected seeded prevalence `p * n`.
    pub fn new_iid(config: CcaConfig, p: f64, n: usize) -> Self {
        CcaScheduler {
            config,
            infection_p: p,
            estimator: MuEstimator::Iid { mu: p * n as f64 },
            pending: None,
        }
    }

    pub fn new_sbm(config: CcaConfig, params: SbmParams) -> Self {
        let per_community = params.initial_prevalence * params.community_size as f64;
        CcaScheduler {
            config,
            infection_p: params.initial_prevalence,
            estimator: MuEstimator::Sbm {
                detectable: vec![per_community; params.community_count()],
                cumulative: vec![per_community; params.community_count()],
                params,
            },
            pending: None,
        }
    }

    /// Decode yesterday's design and isolate the definite defectives.
    pub fn resolve(&mut self, state: &mut PopulationState, _day: u32) -> Result<ResolveOutcome> {
        let mut out = ResolveOutcome::default();
        let Some(design) = self.pending.take() else {
            return Ok(out);
        };
        let positives = dd_decode(&design.tests, &design.outcomes);
        for &m in &positives {
            state.isolate(m);
            out.isolated.push(m);
        }
        Ok(out)
    }

    /// One fresh design over every non-isolated individual.
    pub fn register<R: Rng>(
        &mut self,
        state: &PopulationState,
        day: u32,
        first_stage: bool,
        rng: &mut R,
    ) -> Result<RegisterOutcome> {
        let mut out = RegisterOutcome::default();
        if !first_stage {
            return Ok(out);
        }
        let eligible: Vec<usize> = (0..state.len())
            .filter(|&i| !state.is_isolated(i))
            .collect();
        if eligible.is_empty() {
            return Ok(out);
        }
        let n_d = eligible.len() as u64;
        let mu = self.estimator.mu();
        let t_d = cca_budget(n_d, mu, self.infection_p, &self.config);
        let tests = cca_design(&eligible, t_d, mu, rng);
        let outcomes: Vec<bool> = tests
            .iter()
            .map(|members| {
                members
                    .iter()
                    .any(|&m| state.status(m) == Status::Infected)
            })
            .collect();
        for &m in &eligible {
            if state.status(m) == Status::Infected {
                out.infected_at_first_stage.push(m);
            }
        }
        let _ = day;
        out.tests_registered = t_d;
        out.pipeline_size = n_d;
        self.pending = Some(PendingDesign { tests, outcomes });
        self.estimator.advance();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn mu_log(c: f64) -> CcaConfig {
        CcaConfig::new(BudgetRule::MuLog { c }, 0.0).unwrap()
    }

    fn pn_log(c: f64) -> CcaConfig {
        CcaConfig::new(BudgetRule::PnLog { c }, 0.0).unwrap()
    }

    #[test]
    fn budget_known_values() {
        // 1.6 e * 20 * ln 1000 = 600.93 -> 601.
        assert_eq!(cca_budget(1000, 20.0, 0.02, &mu_log(1.6)), 601);
        // 0.8 e * 0.035 * 1000 * ln 1000 = 525.76 -> 526.
        assert_eq!(cca_budget(1000, 35.0, 0.035, &pn_log(0.8)), 526);
        // Floor at one test.
        assert_eq!(cca_budget(1, 5.0, 0.5, &mu_log(1.6)), 1);
    }

    #[test]
    fn budget_matches_formula_on_grid() {
        for n in [2u64, 10, 100, 1000, 5000] {
            for mu in [1.0, 4.0, 20.0, 77.5] {
                for c in [0.7, 0.8, 1.6] {
                    let expect = (c * std::f64::consts::E * mu * (n as f64).ln())
                        .ceil()
                        .max(1.0) as u64;
                    assert_eq!(cca_budget(n, mu, 0.1, &mu_log(c)), expect);
                    let expect = (c * std::f64::consts::E * 0.1 * n as f64 * (n as f64).ln())
                        .ceil()
                        .max(1.0) as u64;
                    assert_eq!(cca_budget(n, mu, 0.1, &pn_log(c)), expect);
                }
            }
        }
    }

    #[test]
    fn design_mu_one_includes_everyone() {
        let eligible: Vec<usize> = (0..30).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let tests = cca_design(&eligible, 5, 1.0, &mut rng);
        assert_eq!(tests.len(), 5);
        for t in &tests {
            assert_eq!(t, &eligible);
        }
    }

    #[test]
    fn design_mean_test_size_matches_inclusion_probability() {
        // T=601, N=1000, mu=20: mean test size N/mu = 50.
        let eligible: Vec<usize> = (0..1000).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut total = 0usize;
        let reps = 20;
        for _ in 0..reps {
            let tests = cca_design(&eligible, 601, 20.0, &mut rng);
            total += tests.iter().map(|t| t.len()).sum::<usize>();
        }
        let n_tests = (601 * reps) as f64;
        let mean = total as f64 / n_tests;
        // Var of one test size is N q(1-q) ~ 47.5; se over 12020 tests ~ 0.063.
        let se = (1000.0 * 0.05 * 0.95 / n_tests).sqrt();
        assert!((mean - 50.0).abs() <= 4.0 * se, "mean {mean}");
    }

    #[test]
    fn dd_decode_resolves_textbook_cases() {
        // Single negative test clears both members.
        assert!(dd_decode(&[vec![1, 2]], &[false]).is_empty());
        // Positive singleton is a definite defective.
        assert_eq!(dd_decode(&[vec![3]], &[true]), vec![3]);
        // {1,2}=+ and {2}=-: 2 cleared, 1 definite.
        assert_eq!(dd_decode(&[vec![1, 2], vec![2]], &[true, false]), vec![1]);
        // Ambiguous positive pair: nobody can be declared defective.
        assert!(dd_decode(&[vec![1, 2]], &[true]).is_empty());
    }

    /// Exhaustive ground-truth check: for a design, iterate every status
    /// assignment, compute the noiseless outcomes, and confirm every decoded
    /// positive is truly infected.
    fn assert_no_false_positives(tests: &[Vec<usize>], n: usize) {
        for assignment in 0u32..(1 << n) {
            let infected = |i: usize| assignment & (1 << i) != 0;
            let outcomes: Vec<bool> = tests
                .iter()
                .map(|members| members.iter().any(|&m| infected(m)))
                .collect();
            for m in dd_decode(tests, &outcomes) {
                assert!(
                    infected(m),
                    "false positive {m} for assignment {assignment:b} in {tests:?}"
                );
            }
        }
    }

    #[test]
    fn dd_decode_never_false_positive_exhaustive_small_designs() {
        // Every design over 3 individuals and up to 2 tests.
        let n = 3usize;
        let all_subsets: Vec<Vec<usize>> = (0u32..(1 << n))
            .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
            .collect();
        for first in &all_subsets {
            assert_no_false_positives(std::slice::from_ref(first), n);
            for second in &all_subsets {
                assert_no_false_positives(&[first.clone(), second.clone()], n);
            }
        }
    }

    #[test]
    fn dd_decode_never_false_positive_random_designs() {
        // Random designs up to 12 individuals and 8 tests, statuses exhaustive.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..60 {
            let n = rand::Rng::random_range(&mut rng, 4..=12usize);
            let t = rand::Rng::random_range(&mut rng, 1..=8usize);
            let tests: Vec<Vec<usize>> = (0..t)
                .map(|_| {
                    (0..n)
                        .filter(|_| rand::Rng::random_bool(&mut rng, 0.3))
                        .collect()
                })
                .collect();
            assert_no_false_positives(&tests, n);
        }
    }

    #[test]
    fn scheduler_isolates_known_infected() {
        let mut state = PopulationState::with_communities(100, 50).unwrap();
        state.infect(7);
        state.infect(63);
        let mut sched = CcaScheduler::new_sbm(
            mu_log(1.6),
            SbmParams::new(100, 50, 0.012, 0.0004, 0.02, 0.1).unwrap(),
        );
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        state.day = 1;
        sched.resolve(&mut state, 1).unwrap();
        let reg = sched.register(&state, 1, true, &mut rng).unwrap();
        assert!(reg.tests_registered >= 1);
        assert_eq!(reg.pipeline_size, 100);
        state.day = 2;
        let res = sched.resolve(&mut state, 2).unwrap();
        // Generous budget at mu ~ 2, N=100: DD finds both with near certainty.
        assert_eq!(res.isolated, vec![7, 63]);
        assert!(state.is_isolated(7) && state.is_isolated(63));
    }

    #[test]
    fn scheduler_with_no_infected_never_isolates() {
        let mut state = PopulationState::with_communities(60, 30).unwrap();
        let mut sched = CcaScheduler::new_iid(pn_log(0.8), 0.05, 60);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for day in 1..=5 {
            state.day = day;
            let res = sched.resolve(&mut state, day).unwrap();
            assert!(res.isolated.is_empty());
            sched.register(&state, day, true, &mut rng).unwrap();
        }
        assert_eq!(state.isolated_count(), 0);
    }
}
