//! Episodic learning loops: REGAL.C, REGAL.D and an unregularized
//! UCRL2-style baseline.
//!
//! Every agent works in episodes. At the start of episode `k` it builds the
//! L1 confidence set from the counts `N_k`, plans, and follows the plan until
//! some state-action pair has been visited `max(N_k(s, a), 1)` times within
//! the episode, or the horizon is reached. Rewards are known to the agent;
//! only transitions are learned.
//!
//! REGAL.D splits each episode into sub-episodes of at most `2^j` steps,
//! `j = 1, 2, ...`, replanning with weight `c / sqrt(2^j)` each time. Hitting
//! the doubling threshold ends the whole episode.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceSet, VisitCounts};
use crate::mdp::{simulate_step, solve_gain_bias, DEFAULT_THETA};
use crate::planner::{constrained_plan, evi, PlanResult, SpanGrid, DEFAULT_PLAN_TOL};
use crate::{Error, Mdp, Policy, Result};

/// Tolerance used for the true optimal gain in regret accounting.
pub const TRUTH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum AgentKind {
    RegalC,
    RegalD,
    Ucrl2Baseline,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::RegalC => "regal_c",
            AgentKind::RegalD => "regal_d",
            AgentKind::Ucrl2Baseline => "ucrl2_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Span bound, REGAL.C only.
    #[cfg_attr(feature = "serde", serde(default, rename = "H", skip_serializing_if = "Option::is_none"))]
    pub h: Option<f64>,
    /// Regularization scale, REGAL.D only.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub c: Option<f64>,
    pub delta: f64,
    pub horizon: u64,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_plan_tol"))]
    pub plan_tol: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub start_state: usize,
}

#[cfg(feature = "serde")]
fn default_plan_tol() -> f64 {
    DEFAULT_PLAN_TOL
}

impl AgentConfig {
    fn base(kind: AgentKind, delta: f64, horizon: u64, seed: u64) -> Self {
        Self { kind, h: None, c: None, delta, horizon, seed, plan_tol: DEFAULT_PLAN_TOL, start_state: 0 }
    }

    pub fn regal_c(h: f64, delta: f64, horizon: u64, seed: u64) -> Self {
        Self { h: Some(h), ..Self::base(AgentKind::RegalC, delta, horizon, seed) }
    }

    pub fn regal_d(c: f64, delta: f64, horizon: u64, seed: u64) -> Self {
        Self { c: Some(c), ..Self::base(AgentKind::RegalD, delta, horizon, seed) }
    }

    pub fn ucrl2_baseline(delta: f64, horizon: u64, seed: u64) -> Self {
        Self::base(AgentKind::Ucrl2Baseline, delta, horizon, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Checks that exactly the parameters of `kind` are present and in range.
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter { name: "delta", value: self.delta });
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter { name: "horizon", value: 0.0 });
        }
        if !(self.plan_tol > 0.0) {
            return Err(Error::InvalidParameter { name: "plan_tol", value: self.plan_tol });
        }
        let nan = f64::NAN;
        match (self.kind, self.h, self.c) {
            (AgentKind::RegalC, Some(h), None) if h >= 0.0 => Ok(()),
            (AgentKind::RegalC, Some(h), None) => Err(Error::InvalidParameter { name: "H", value: h }),
            (AgentKind::RegalC, _, _) => Err(Error::InvalidParameter { name: "H", value: self.h.unwrap_or(nan) }),
            (AgentKind::RegalD, None, Some(c)) if c > 0.0 && c.is_finite() => Ok(()),
            (AgentKind::RegalD, None, Some(c)) => Err(Error::InvalidParameter { name: "c", value: c }),
            (AgentKind::RegalD, _, _) => Err(Error::InvalidParameter { name: "c", value: self.c.unwrap_or(nan) }),
            (AgentKind::Ucrl2Baseline, None, None) => Ok(()),
            (AgentKind::Ucrl2Baseline, Some(h), _) => Err(Error::InvalidParameter { name: "H", value: h }),
            (AgentKind::Ucrl2Baseline, None, Some(c)) => Err(Error::InvalidParameter { name: "c", value: c }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SubEpisodeLog {
    pub j: u32,
    /// Length cap `2^j`.
    pub cap: u64,
    pub length: u64,
    /// Regularization weight `c / sqrt(cap)`.
    pub weight: f64,
    pub gain: f64,
    pub span: f64,
    pub objective: f64,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpisodeLog {
    pub k: usize,
    pub t_k: u64,
    pub length: u64,
    /// The horizon cut the episode before its stop rule fired.
    pub partial: bool,
    /// `N_k(s, a)`, flattened as `s * A + a`.
    pub start_counts: Vec<u64>,
    /// `v_k(s, a)`, flattened as `s * A + a`.
    pub visits: Vec<u64>,
    /// Whether the true model lay in the episode's confidence set.
    pub truth_in_set: bool,
    pub gain: f64,
    pub span: f64,
    pub residual: f64,
    pub cap_violated: bool,
    pub policy: Policy,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub sub_episodes: Vec<SubEpisodeLog>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunResult {
    pub kind: AgentKind,
    pub seed: u64,
    pub horizon: u64,
    pub start_state: usize,
    /// Optimal gain of the environment.
    pub optimal_gain: f64,
    /// `cumulative_reward[t]` is the reward collected in the first `t` steps.
    pub cumulative_reward: Vec<f64>,
    /// `sum_{i<t} gap(s_i, a_i) + h*(s_t) - h*(s_0)`, where
    /// `gap(s, a) = gain + h*(s) - r(s, a) - P(s, a) . h*`. Same expectation
    /// as the realized regret without its reward noise.
    pub pseudo_regret: Vec<f64>,
    pub episodes: Vec<EpisodeLog>,
    pub final_counts: VisitCounts,
    pub final_state: usize,
    /// Planner failure that stopped the run early.
    pub aborted: Option<String>,
}

impl RunResult {
    /// Steps actually taken.
    pub fn steps(&self) -> u64 {
        (self.cumulative_reward.len() - 1) as u64
    }

    /// Realized regret `optimal_gain * t - cumulative_reward[t]`.
    pub fn regret_at(&self, t: u64) -> f64 {
        self.optimal_gain * t as f64 - self.cumulative_reward[t as usize]
    }

    pub fn pseudo_regret_at(&self, t: u64) -> f64 {
        self.pseudo_regret[t as usize]
    }

    pub fn regret_curve(&self, checkpoints: &[u64]) -> Vec<f64> {
        checkpoints.iter().map(|&t| self.regret_at(t)).collect()
    }

    /// Index of the episode in which step `t` (1-based) was taken; 0 for `t = 0`.
    pub fn episode_at(&self, t: u64) -> usize {
        if t == 0 {
            return 0;
        }
        self.episodes.partition_point(|e| e.t_k < t).saturating_sub(1)
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }
}

/// REGAL.D's default regularization scale `2S sqrt(12 log(2AT/delta)) + sqrt(2 log(1/delta))`.
pub fn default_c(num_states: usize, num_actions: usize, horizon: u64, delta: f64) -> f64 {
    let s = num_states as f64;
    let lead = libm::log(2.0 * num_actions as f64 * horizon.max(1) as f64 / delta);
    2.0 * s * libm::sqrt(12.0 * lead) + libm::sqrt(2.0 * libm::log(1.0 / delta))
}

/// True iff some pair has been visited `max(N_k(s, a), 1)` times in the episode.
pub fn episode_should_end(start_counts: &[u64], visits: &[u64]) -> bool {
    start_counts.iter().zip(visits).any(|(&n, &v)| v >= n.max(1))
}

/// Upper bound `SA log2(8T / SA)` on the number of episodes, meaningful for
/// `T >= SA`.
pub fn episode_bound(num_states: usize, num_actions: usize, horizon: u64) -> f64 {
    let sa = (num_states * num_actions) as f64;
    sa * libm::log2(8.0 * horizon as f64 / sa)
}

/// `m <= floor(SA log2(8T / SA))`.
pub fn episode_bound_holds(episodes: usize, num_states: usize, num_actions: usize, horizon: u64) -> bool {
    (episodes as f64) <= libm::floor(episode_bound(num_states, num_actions, horizon))
}

/// `sum_k sum_{s,a} v_k(s, a) / max(N_k(s, a), 1)`.
pub fn visit_ratio_sum(episodes: &[EpisodeLog]) -> f64 {
    episodes
        .iter()
        .flat_map(|e| e.visits.iter().zip(&e.start_counts))
        .map(|(&v, &n)| v as f64 / n.max(1) as f64)
        .sum()
}

/// `sqrt(8 SAT)`, the bound on [`visit_ratio_sum`].
pub fn visit_ratio_bound(num_states: usize, num_actions: usize, horizon: u64) -> f64 {
    libm::sqrt(8.0 * (num_states * num_actions) as f64 * horizon as f64)
}

/// The regularization weight an episode would have needed, computed in
/// hindsight from its visit counts:
/// `(2 sum v sqrt(12 S log(2AT/delta) / max(N, 1)) + sqrt(2 l log(1/delta))) / l`.
pub fn hindsight_weight(num_states: usize, num_actions: usize, horizon: u64, delta: f64, episode: &EpisodeLog) -> f64 {
    let len = episode.length.max(1) as f64;
    let scale = 12.0 * num_states as f64 * libm::log(2.0 * num_actions as f64 * horizon.max(1) as f64 / delta);
    let spread: f64 = episode
        .visits
        .iter()
        .zip(&episode.start_counts)
        .map(|(&v, &n)| v as f64 * libm::sqrt(scale / n.max(1) as f64))
        .sum();
    (2.0 * spread + libm::sqrt(2.0 * len * libm::log(1.0 / delta))) / len
}

/// Optional hooks for [`run_agent_with`].
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Plan on this set in every episode instead of the learned one.
    pub fixed_set: Option<&'a ConfidenceSet>,
    /// Called with the episode index and its confidence set before planning.
    pub observer: Option<&'a mut dyn FnMut(usize, &ConfidenceSet)>,
}

struct Run<'a> {
    env: &'a Mdp,
    rng: ChaCha8Rng,
    counts: VisitCounts,
    cumulative: Vec<f64>,
    gaps: Vec<f64>,
    bias: Vec<f64>,
    /// Sum of gaps so far.
    gap_total: f64,
    pseudo: Vec<f64>,
    pseudo_start: usize,
    state: usize,
    horizon: u64,
}

impl Run<'_> {
    fn t(&self) -> u64 {
        (self.cumulative.len() - 1) as u64
    }

    /// Follows `policy` for at most `max_steps` steps. Returns the number of
    /// steps taken and whether the doubling rule fired.
    fn follow(&mut self, policy: &Policy, start: &[u64], visits: &mut [u64], max_steps: u64) -> (u64, bool) {
        let na = self.env.num_actions();
        let mut taken = 0;
        while taken < max_steps && self.t() < self.horizon {
            let s = self.state;
            let a = policy.action(s);
            let (next, r) = simulate_step(self.env, s, a, &mut self.rng);
            self.counts.update(s, a, next);
            let last = *self.cumulative.last().unwrap();
            self.cumulative.push(last + r);
            self.gap_total += self.gaps[s * na + a];
            self.pseudo.push(self.gap_total + self.bias[next] - self.bias[self.pseudo_start]);
            self.state = next;
            taken += 1;
            let pair = s * na + a;
            visits[pair] += 1;
            if visits[pair] >= start[pair].max(1) {
                return (taken, true);
            }
        }
        (taken, false)
    }
}

pub fn run_regal_c(env: &Mdp, cfg: &AgentConfig) -> Result<RunResult> {
    expect_kind(cfg, AgentKind::RegalC)?;
    run_agent_with(env, cfg, RunOptions::default())
}

pub fn run_regal_d(env: &Mdp, cfg: &AgentConfig) -> Result<RunResult> {
    expect_kind(cfg, AgentKind::RegalD)?;
    run_agent_with(env, cfg, RunOptions::default())
}

pub fn run_ucrl2_baseline(env: &Mdp, cfg: &AgentConfig) -> Result<RunResult> {
    expect_kind(cfg, AgentKind::Ucrl2Baseline)?;
    run_agent_with(env, cfg, RunOptions::default())
}

pub fn run_agent(env: &Mdp, cfg: &AgentConfig) -> Result<RunResult> {
    run_agent_with(env, cfg, RunOptions::default())
}

fn expect_kind(cfg: &AgentConfig, kind: AgentKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::InvalidParameter { name: "kind", value: cfg.kind as u8 as f64 });
    }
    Ok(())
}

/// Runs the agent selected by `cfg.kind`.
///
/// Invalid configurations and environments without a constant optimal gain
/// are errors. A planner failure mid-run stops the run and is reported in
/// [`RunResult::aborted`] together with everything logged so far.
pub fn run_agent_with(env: &Mdp, cfg: &AgentConfig, mut opts: RunOptions<'_>) -> Result<RunResult> {
    cfg.validate()?;
    let (ns, na) = (env.num_states(), env.num_actions());
    if cfg.start_state >= ns {
        return Err(Error::IndexOutOfRange { what: "start_state", index: cfg.start_state, bound: ns });
    }
    if let Some(set) = opts.fixed_set {
        if set.num_states() != ns || set.num_actions() != na {
            return Err(Error::DimensionMismatch { expected: ns * na, found: set.num_states() * set.num_actions() });
        }
    }
    let truth = solve_gain_bias(env, TRUTH_TOL, DEFAULT_THETA)?;
    let optimal_gain = truth.gain;
    let gaps: Vec<f64> = (0..ns * na)
        .map(|pair| {
            let (s, a) = (pair / na, pair % na);
            optimal_gain + truth.bias[s] - env.q_value(s, a, &truth.bias)
        })
        .collect();
    let mut cumulative = Vec::with_capacity(cfg.horizon as usize + 1);
    cumulative.push(0.0);
    let mut pseudo = Vec::with_capacity(cfg.horizon as usize + 1);
    pseudo.push(0.0);
    let mut run = Run {
        env,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        counts: VisitCounts::new(ns, na),
        cumulative,
        gaps,
        bias: truth.bias,
        gap_total: 0.0,
        pseudo,
        pseudo_start: cfg.start_state,
        state: cfg.start_state,
        horizon: cfg.horizon,
    };
    let mut episodes = Vec::new();
    let mut aborted = None;
    while run.t() < cfg.horizon {
        match run_episode(&mut run, cfg, episodes.len(), &mut opts) {
            Ok(log) => episodes.push(log),
            Err(e) => {
                aborted = Some(format!("episode {} at t = {}: {}", episodes.len(), run.t(), e));
                break;
            }
        }
    }
    Ok(RunResult {
        kind: cfg.kind,
        seed: cfg.seed,
        horizon: cfg.horizon,
        start_state: cfg.start_state,
        optimal_gain,
        final_state: run.state,
        final_counts: run.counts,
        cumulative_reward: run.cumulative,
        pseudo_regret: run.pseudo,
        episodes,
        aborted,
    })
}

fn run_episode(run: &mut Run<'_>, cfg: &AgentConfig, k: usize, opts: &mut RunOptions<'_>) -> Result<EpisodeLog> {
    let t_k = run.t();
    let start: Vec<u64> = run.counts.pair_counts().to_vec();
    let learned;
    let set = match opts.fixed_set {
        Some(set) => set,
        None => {
            learned = ConfidenceSet::from_counts(&run.counts, cfg.delta)?;
            &learned
        }
    };
    let truth_in_set = set.contains(run.env)?;
    if let Some(observer) = opts.observer.as_mut() {
        observer(k, set);
    }
    let rewards = run.env.rewards();
    let mut visits = vec![0; start.len()];
    let mut sub_episodes = Vec::new();
    let (plan, ended): (PlanResult, bool) = match cfg.kind {
        AgentKind::RegalC | AgentKind::Ucrl2Baseline => {
            let plan = match cfg.h {
                Some(h) => constrained_plan(set, rewards, h, cfg.plan_tol)?,
                None => evi(set, rewards, cfg.plan_tol)?,
            };
            let (_, ended) = run.follow(&plan.policy, &start, &mut visits, u64::MAX);
            (plan, ended)
        }
        AgentKind::RegalD => {
            let c = cfg.c.expect("validated");
            let grid = SpanGrid::build(set, rewards, cfg.plan_tol)?;
            let mut first = None;
            let mut ended = false;
            for j in 1u32.. {
                let cap = 1u64 << j.min(63);
                let weight = c / libm::sqrt(cap as f64);
                let plan = grid.select(weight);
                let (length, fired) = run.follow(&plan.policy, &start, &mut visits, cap);
                sub_episodes.push(SubEpisodeLog {
                    j,
                    cap,
                    length,
                    weight,
                    gain: plan.gain,
                    span: plan.span,
                    objective: plan.objective,
                    policy: plan.policy.clone(),
                });
                first.get_or_insert(plan);
                if fired {
                    ended = true;
                    break;
                }
                if run.t() >= run.horizon {
                    break;
                }
            }
            (first.expect("at least one sub-episode"), ended)
        }
    };
    Ok(EpisodeLog {
        k,
        t_k,
        length: run.t() - t_k,
        partial: !ended,
        start_counts: start,
        visits,
        truth_in_set,
        gain: plan.gain,
        span: plan.span,
        residual: plan.residual,
        cap_violated: plan.cap_violated,
        policy: plan.policy,
        sub_episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_two_state, make_random_wc};

    #[test]
    fn default_c_value() {
        let c = default_c(2, 2, 10_000, 0.05);
        let expected = 4.0 * libm::sqrt(12.0 * libm::log(8e5)) + libm::sqrt(2.0 * libm::log(20.0));
        assert!((c - expected).abs() < 1e-12);
        assert!((c - 53.55).abs() < 0.05);
        assert!(default_c(3, 2, 10_000, 0.05) > c);
        assert!(default_c(2, 2, 20_000, 0.05) > c);
        assert!(default_c(2, 2, 10_000, 0.01) > c);
        let near_one = default_c(2, 2, 10_000, 1.0 - 1e-12);
        assert!((near_one - 4.0 * libm::sqrt(12.0 * libm::log(4e4))).abs() < 1e-4);
    }

    #[test]
    fn stop_rule() {
        assert!(episode_should_end(&[0, 0], &[1, 0]));
        assert!(!episode_should_end(&[0, 0], &[0, 0]));
        assert!(episode_should_end(&[8, 3], &[8, 0]));
        assert!(!episode_should_end(&[8, 3], &[7, 2]));
    }

    #[test]
    fn episode_bound_value() {
        let b = episode_bound(2, 2, 1000);
        assert!((b - 4.0 * libm::log2(2000.0)).abs() < 1e-12);
        assert!((b - 43.86).abs() < 0.01);
        assert!(episode_bound_holds(43, 2, 2, 1000));
        assert!(!episode_bound_holds(44, 2, 2, 1000));
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::regal_c(5.0, 0.05, 10, 0).validate().is_ok());
        assert!(AgentConfig::regal_c(5.0, 1.0, 10, 0).validate().is_err());
        assert!(AgentConfig::regal_c(-1.0, 0.05, 10, 0).validate().is_err());
        let mut extra = AgentConfig::regal_c(5.0, 0.05, 10, 0);
        extra.c = Some(1.0);
        assert!(extra.validate().is_err());
        assert!(AgentConfig::regal_d(0.0, 0.05, 10, 0).validate().is_err());
        let mut wrong = AgentConfig::ucrl2_baseline(0.05, 10, 0);
        wrong.h = Some(1.0);
        assert!(wrong.validate().is_err());
        assert!(AgentConfig::ucrl2_baseline(0.05, 0, 0).validate().is_err());
    }

    #[test]
    fn single_step_run() {
        let env = make_two_state(0.5, 0.1).unwrap();
        let run = run_regal_c(&env, &AgentConfig::regal_c(5.0, 0.05, 1, 3)).unwrap();
        assert_eq!(run.steps(), 1);
        assert_eq!(run.num_episodes(), 1);
        let a = run.episodes[0].policy.action(0);
        assert!((run.regret_at(1) - (run.optimal_gain - env.reward(0, a))).abs() < 1e-15);
        assert_eq!(run.regret_at(0), 0.0);
    }

    #[test]
    fn episode_bookkeeping() {
        let env = make_random_wc(3, 2, 5, 0.4).unwrap();
        for cfg in [
            AgentConfig::regal_c(3.0, 0.05, 2000, 1),
            AgentConfig::ucrl2_baseline(0.05, 2000, 1),
            AgentConfig::regal_d(default_c(3, 2, 2000, 0.05), 0.05, 2000, 1),
        ] {
            let run = run_agent(&env, &cfg).unwrap();
            assert!(run.aborted.is_none());
            assert_eq!(run.steps(), 2000);
            let mut t = 0;
            for (i, e) in run.episodes.iter().enumerate() {
                assert_eq!(e.k, i);
                assert_eq!(e.t_k, t);
                assert_eq!(e.visits.iter().sum::<u64>(), e.length);
                assert_eq!(e.partial, !episode_should_end(&e.start_counts, &e.visits));
                assert!(!e.partial || i + 1 == run.episodes.len());
                for (&n, &v) in e.start_counts.iter().zip(&e.visits) {
                    assert!(v <= n.max(1));
                }
                t += e.length;
                if cfg.kind == AgentKind::RegalD {
                    let total: u64 = e.sub_episodes.iter().map(|s| s.length).sum();
                    assert_eq!(total, e.length);
                    for (j, sub) in e.sub_episodes.iter().enumerate() {
                        assert_eq!(sub.cap, 1 << (j + 1));
                        assert!(sub.length <= sub.cap);
                    }
                }
            }
            assert_eq!(t, 2000);
            assert!(episode_bound_holds(run.num_episodes(), 3, 2, 2000));
            assert!(visit_ratio_sum(&run.episodes) <= visit_ratio_bound(3, 2, 2000));
            assert_eq!(run.episode_at(1), 0);
            assert_eq!(run.episode_at(2000), run.num_episodes() - 1);
        }
    }

    #[test]
    fn pseudo_regret_matches_realized_on_deterministic_chain() {
        let env = make_random_wc(4, 2, 6, 1.0).unwrap();
        let run = run_agent(&env, &AgentConfig::ucrl2_baseline(0.05, 500, 0)).unwrap();
        for t in [0, 1, 7, 100, 500] {
            assert!((run.pseudo_regret_at(t) - run.regret_at(t)).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn pseudo_regret_is_unbiased() {
        let env = make_random_wc(3, 2, 21, 0.2).unwrap();
        let (n, t) = (200, 400);
        let mut diffs = Vec::with_capacity(n);
        for seed in 0..n as u64 {
            let run = run_agent(&env, &AgentConfig::regal_c(2.0, 0.05, t, seed)).unwrap();
            diffs.push(run.regret_at(t) - run.pseudo_regret_at(t));
        }
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        let se = libm::sqrt(var / n as f64);
        assert!(se > 0.0);
        assert!(mean.abs() <= 4.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn runs_are_deterministic() {
        let env = make_random_wc(3, 2, 9, 0.4).unwrap();
        let cfg = AgentConfig::regal_d(5.0, 0.05, 500, 77);
        assert_eq!(run_agent(&env, &cfg).unwrap(), run_agent(&env, &cfg).unwrap());
    }

    #[test]
    fn exact_set_follows_optimal_policy() {
        let env = make_random_wc(4, 3, 2, 0.3).unwrap();
        let exact = ConfidenceSet::exact(&env);
        let cfg = AgentConfig::ucrl2_baseline(0.05, 300, 0);
        let opts = RunOptions { fixed_set: Some(&exact), observer: None };
        let run = run_agent_with(&env, &cfg, opts).unwrap();
        let gb = solve_gain_bias(&env, 1e-10, DEFAULT_THETA).unwrap();
        let greedy = crate::mdp::bellman_apply(&env, &gb.bias).unwrap().greedy;
        for e in &run.episodes {
            assert!(e.truth_in_set);
            assert_eq!(e.policy, greedy);
        }
    }

    #[test]
    fn observer_sees_every_episode() {
        let env = make_two_state(0.5, 0.1).unwrap();
        let cfg = AgentConfig::regal_c(5.0, 0.05, 200, 4);
        let mut seen = Vec::new();
        let mut obs = |k: usize, set: &ConfidenceSet| seen.push((k, set.built_at()));
        let run = run_agent_with(&env, &cfg, RunOptions { fixed_set: None, observer: Some(&mut obs) }).unwrap();
        assert_eq!(seen.len(), run.num_episodes());
        for ((k, built), e) in seen.iter().zip(&run.episodes) {
            assert_eq!(*k, e.k);
            assert_eq!(*built, e.t_k);
        }
    }

    #[test]
    fn two_state_agents_find_gain_one() {
        let env = make_two_state(0.5, 0.1).unwrap();
        for cfg in [AgentConfig::regal_c(5.0, 0.05, 3000, 2), AgentConfig::ucrl2_baseline(0.05, 3000, 2)] {
            let run = run_agent(&env, &cfg).unwrap();
            let late = &run.episodes[run.num_episodes() / 2..];
            for e in late {
                assert!(e.gain >= 1.0 - 1e-3, "{:?}: {}", cfg.kind, e.gain);
            }
            assert_eq!(run.final_state, 1);
            assert!(run.regret_at(3000) < 0.5 * 3000.0 * 0.1);
        }
    }

    #[test]
    fn hindsight_weight_value() {
        let e = EpisodeLog {
            k: 0,
            t_k: 0,
            length: 4,
            partial: false,
            start_counts: vec![0, 4],
            visits: vec![1, 3],
            truth_in_set: true,
            gain: 0.0,
            span: 0.0,
            residual: 0.0,
            cap_violated: false,
            policy: Policy::new(vec![0]),
            sub_episodes: Vec::new(),
        };
        let scale = 12.0 * libm::log(2.0 * 2.0 * 100.0 / 0.1);
        let expected = (2.0 * (libm::sqrt(scale) + 3.0 * libm::sqrt(scale / 4.0)) + libm::sqrt(8.0 * libm::log(10.0))) / 4.0;
        assert!((hindsight_weight(1, 2, 100, 0.1, &e) - expected).abs() < 1e-12);
    }
}
