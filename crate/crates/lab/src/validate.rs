//! The acceptance suite: twelve numbered checks covering the solvers,
//! the planner's inner maximization, the confidence sets and the learning
//! agents. Used by `regal validate` and by the `acceptance` test target.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regal_core::agents::{
    default_c, episode_bound, episode_bound_holds, run_agent_with, visit_ratio_bound, visit_ratio_sum, AgentConfig,
    AgentKind, RunOptions, RunResult,
};
use regal_core::confidence::ConfidenceSet;
use regal_core::diameters::{analyze, diameter, one_way_diameter, verify_travel_bound};
use regal_core::envs::{make_two_state, make_lower_bound, make_random_wc, LowerBoundParams};
use regal_core::mdp::{aperiodicity_transform, policy_gain, solve_gain_bias, DEFAULT_THETA};
use regal_core::planner::{inner_max, lp_inner_oracle, SpanGrid, DEFAULT_PLAN_TOL};
use regal_core::{Mdp, Policy};

use crate::config::{AgentSpec, EnvSpec, ExperimentConfig, NamedScale, Scale, SpanBound};
use crate::experiment::{execute, worker_count, Experiment};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget: Option<f64>,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {:>2} {} ({:.2}s", self.id, self.title, self.seconds)?;
        if let Some(b) = self.budget {
            write!(f, " / {b}s")?;
        }
        write!(f, "): {}", self.detail)
    }
}

/// Counts kept from every agent run the suite performs.
#[derive(Debug, Clone, Copy)]
struct RunStats {
    num_states: usize,
    num_actions: usize,
    horizon: u64,
    episodes: usize,
    visit_ratio: f64,
    aborted: bool,
}

impl RunStats {
    fn of(run: &RunResult, env: &Mdp) -> Self {
        Self {
            num_states: env.num_states(),
            num_actions: env.num_actions(),
            horizon: run.horizon,
            episodes: run.num_episodes(),
            visit_ratio: visit_ratio_sum(&run.episodes),
            aborted: run.aborted.is_some(),
        }
    }
}

/// A confidence set from an episode start, with whether it held the truth.
struct SetSample {
    set: ConfidenceSet,
    truth_in_set: bool,
}

struct Coverage {
    env: Mdp,
    gain: f64,
    span: f64,
    h: f64,
    runs: Vec<RunResult>,
    sets: Vec<SetSample>,
    seconds: f64,
}

pub struct Suite {
    workers: usize,
    stats: Vec<RunStats>,
    coverage: Option<Coverage>,
}

pub const COVERAGE_RUNS: u64 = 200;
pub const COVERAGE_HORIZON: u64 = 10_000;
pub const SUBLINEAR_HORIZON: u64 = 1 << 18;
pub const SUBLINEAR_SEEDS: u64 = 20;

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| if sparse && rng.gen_bool(0.4) { 0.0 } else { rng.gen::<f64>() }).collect();
    if p.iter().all(|&x| x == 0.0) {
        p[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Random model whose last state is transient under every policy; the
/// others form a communicating class.
pub fn random_transient_tail(num_states: usize, num_actions: usize, seed: u64) -> Mdp {
    assert!(num_states >= 2);
    let core = make_random_wc(num_states - 1, num_actions, seed, 0.3).expect("valid parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (ns, na) = (num_states, num_actions);
    let mut reward = Vec::with_capacity(ns * na);
    let mut transition = Vec::with_capacity(ns * na * ns);
    for s in 0..ns {
        for a in 0..na {
            if s + 1 < ns {
                reward.push(core.reward(s, a));
                transition.extend_from_slice(core.row(s, a));
                transition.push(0.0);
            } else {
                reward.push(rng.gen::<f64>());
                let stay = 0.9 * rng.gen::<f64>();
                let rest = random_simplex(&mut rng, ns - 1, false);
                transition.extend(rest.iter().map(|x| x * (1.0 - stay)));
                transition.push(stay);
            }
        }
    }
    Mdp::new(ns, na, reward, transition).expect("rows are distributions")
}

/// Mix of communicating and weakly communicating instances, indexed by `i`.
fn constant_gain_instance(i: u64, num_states: usize, num_actions: usize) -> Mdp {
    if i % 2 == 1 && num_states >= 2 {
        random_transient_tail(num_states, num_actions, i)
    } else {
        let connectivity = 0.1 + 0.8 * ((i / 2) % 9) as f64 / 8.0;
        make_random_wc(num_states, num_actions, i, connectivity).expect("valid parameters")
    }
}

impl Default for Suite {
    fn default() -> Self {
        Self::new()
    }
}

impl Suite {
    pub fn new() -> Self {
        Self { workers: worker_count().unwrap_or(1), stats: Vec::new(), coverage: None }
    }

    pub fn with_workers(workers: usize) -> Self {
        Self { workers: workers.max(1), ..Self::new() }
    }

    /// Runs every criterion and returns the outcomes in numeric order.
    pub fn run_all(&mut self) -> Vec<Outcome> {
        let mut out = vec![
            self.two_state_exactness(),
            self.travel_time_sweep(),
            self.inner_max_oracle(),
            self.gain_oracle(),
            self.transform_relations(),
            self.coverage_criterion(),
            self.optimism(),
            self.regularized_optimism(),
            self.sublinear_regret(),
            self.lower_bound_geometry(),
        ];
        out.push(self.episode_bound_criterion());
        out.push(self.visit_ratio_criterion());
        out.sort_by_key(|o| o.id);
        out
    }

    pub fn two_state_exactness(&mut self) -> Outcome {
        let (res, seconds) = timed(|| {
            let m = make_two_state(0.5, 0.1).expect("valid parameters");
            let gb = solve_gain_bias(&m, 1e-10, DEFAULT_THETA).expect("solvable");
            let report = analyze(&m).expect("analyzable");
            (gb.gain, report)
        });
        let (gain, r) = res;
        let passed = (gain - 1.0).abs() <= 1e-8
            && (r.span - 5.0).abs() <= 1e-6
            && (r.d_ow - 10.0).abs() <= 1e-6
            && r.d == f64::INFINITY
            && seconds < 1.0;
        Outcome {
            id: 1,
            title: "two-state example: gain, span, one-way diameter, diameter",
            passed,
            detail: format!("gain {gain:.10}, span {:.8}, d_ow {:.8}, d {}", r.span, r.d_ow, r.d),
            seconds,
            budget: Some(1.0),
        }
    }

    pub fn travel_time_sweep(&mut self) -> Outcome {
        let ((worst, failures, policies), seconds) = timed(|| {
            let mut worst = f64::INFINITY;
            let mut failures = 0;
            let mut policies = 0;
            for i in 0..200 {
                let m = constant_gain_instance(i, 3, 2);
                let r = verify_travel_bound(&m).expect("constant gain");
                worst = worst.min(r.worst_slack);
                policies += r.policies_checked;
                if !r.passed {
                    failures += 1;
                }
            }
            (worst, failures, policies)
        });
        Outcome {
            id: 2,
            title: "bias differences bounded by gain times travel time",
            passed: failures == 0 && policies == 200 * 8 && seconds < 30.0,
            detail: format!("200 models, {policies} policies, {failures} failures, worst slack {worst:.3e}"),
            seconds,
            budget: Some(30.0),
        }
    }

    pub fn inner_max_oracle(&mut self) -> Outcome {
        let ((worst, over), seconds) = timed(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut worst: f64 = 0.0;
            let mut over = 0;
            for i in 0..1000 {
                let n = rng.gen_range(1..=6);
                let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
                if i % 4 == 0 {
                    v.iter_mut().for_each(|x| *x = x.round());
                }
                let center = random_simplex(&mut rng, n, i % 3 == 0);
                let rho = if i % 10 == 0 { 2.0 } else { rng.gen_range(0.0..2.2) };
                let fast: f64 = inner_max(&v, &center, rho).iter().zip(&v).map(|(p, x)| p * x).sum();
                let exact: f64 = lp_inner_oracle(&v, &center, rho)
                    .expect("small support")
                    .iter()
                    .zip(&v)
                    .map(|(p, x)| p * x)
                    .sum();
                let gap = (fast - exact).abs();
                worst = worst.max(gap);
                if gap > 1e-9 {
                    over += 1;
                }
            }
            (worst, over)
        });
        Outcome {
            id: 3,
            title: "greedy inner maximization matches exhaustive vertex oracle",
            passed: over == 0 && seconds < 10.0,
            detail: format!("1000 instances, {over} above 1e-9, worst gap {worst:.2e}"),
            seconds,
            budget: Some(10.0),
        }
    }

    pub fn gain_oracle(&mut self) -> Outcome {
        let ((worst, over), seconds) = timed(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut worst: f64 = 0.0;
            let mut over = 0;
            for i in 0..100 {
                let ns = rng.gen_range(1..=4);
                let na = rng.gen_range(1..=3);
                let m = constant_gain_instance(i, ns, na);
                let solved = solve_gain_bias(&m, 1e-9, DEFAULT_THETA).expect("constant gain").gain;
                let mut best = vec![f64::NEG_INFINITY; ns];
                for policy in Policy::enumerate(ns, na) {
                    let g = policy_gain(&m, &policy).expect("valid policy");
                    for (b, x) in best.iter_mut().zip(g) {
                        *b = b.max(x);
                    }
                }
                let gap = best.iter().map(|b| (b - solved).abs()).fold(0.0, f64::max);
                worst = worst.max(gap);
                if gap > 1e-6 {
                    over += 1;
                }
            }
            (worst, over)
        });
        Outcome {
            id: 4,
            title: "optimal gain matches policy enumeration",
            passed: over == 0 && seconds < 60.0,
            detail: format!("100 models, {over} above 1e-6, worst gap {worst:.2e}"),
            seconds,
            budget: Some(60.0),
        }
    }

    pub fn transform_relations(&mut self) -> Outcome {
        let ((gain_gap, span_gap, over), seconds) = timed(|| {
            let (mut gain_gap, mut span_gap): (f64, f64) = (0.0, 0.0);
            let mut over = 0;
            for i in 0..100 {
                let m = constant_gain_instance(i, 2 + (i as usize % 4), 1 + (i as usize % 3));
                let base = solve_gain_bias(&m, 1e-11, DEFAULT_THETA).expect("constant gain");
                for theta in [0.3, 0.9] {
                    let t = aperiodicity_transform(&m, theta).expect("valid theta");
                    let lazy = solve_gain_bias(&t, 1e-11, DEFAULT_THETA).expect("constant gain");
                    let g = (lazy.gain - theta * base.gain).abs();
                    let s = (lazy.span() - base.span()).abs();
                    gain_gap = gain_gap.max(g);
                    span_gap = span_gap.max(s);
                    if g > 1e-8 || s > 1e-6 {
                        over += 1;
                    }
                }
            }
            (gain_gap, span_gap, over)
        });
        Outcome {
            id: 5,
            title: "lazy transform scales gain by theta and keeps the span",
            passed: over == 0,
            detail: format!("200 cases, {over} out of tolerance, worst gain gap {gain_gap:.2e}, worst span gap {span_gap:.2e}"),
            seconds,
            budget: None,
        }
    }

    fn coverage(&mut self) -> &Coverage {
        if self.coverage.is_none() {
            let (cov, seconds) = timed(|| {
                let env = make_two_state(0.5, 0.1).expect("valid parameters");
                let truth = solve_gain_bias(&env, 1e-10, DEFAULT_THETA).expect("constant gain");
                let h = 5.0;
                let mut runs = Vec::new();
                let mut sets = Vec::new();
                for seed in 0..COVERAGE_RUNS {
                    let cfg = AgentConfig::regal_c(h, 0.05, COVERAGE_HORIZON, seed);
                    let mut observer = |_: usize, set: &ConfidenceSet| {
                        let truth_in_set = set.contains(&env).expect("same shape");
                        sets.push(SetSample { set: set.clone(), truth_in_set });
                    };
                    let opts = RunOptions { fixed_set: None, observer: Some(&mut observer) };
                    runs.push(run_agent_with(&env, &cfg, opts).expect("valid config"));
                }
                (env, truth, h, runs, sets)
            });
            let (env, truth, h, runs, sets) = cov;
            self.stats.extend(runs.iter().map(|r| RunStats::of(r, &env)));
            self.coverage = Some(Coverage { gain: truth.gain, span: truth.span(), env, h, runs, sets, seconds });
        }
        self.coverage.as_ref().expect("just filled")
    }

    pub fn coverage_criterion(&mut self) -> Outcome {
        let cov = self.coverage();
        let total = cov.sets.len();
        let good = cov.sets.iter().filter(|s| s.truth_in_set).count();
        let rate = good as f64 / total as f64;
        Outcome {
            id: 7,
            title: "confidence sets contain the true model at episode starts",
            passed: rate >= 0.95 && cov.seconds < 300.0,
            detail: format!("{COVERAGE_RUNS} runs, {good}/{total} episode starts covered ({:.2}%)", 100.0 * rate),
            seconds: cov.seconds,
            budget: Some(300.0),
        }
    }

    pub fn optimism(&mut self) -> Outcome {
        let ((checked, violations, worst), seconds) = timed(|| {
            let cov = self.coverage();
            let mut checked = 0;
            let mut violations = 0;
            let mut worst = f64::INFINITY;
            if cov.h >= cov.span - 1e-9 {
                for e in cov.runs.iter().flat_map(|r| &r.episodes).filter(|e| e.truth_in_set) {
                    checked += 1;
                    worst = worst.min(e.gain - cov.gain);
                    if e.gain < cov.gain - 1e-3 {
                        violations += 1;
                    }
                }
            }
            (checked, violations, worst)
        });
        Outcome {
            id: 8,
            title: "span-constrained plans are optimistic when the truth is covered",
            passed: checked > 0 && violations == 0,
            detail: format!("{checked} covered episodes, {violations} violations, min gain minus optimum {worst:.3e}"),
            seconds,
            budget: None,
        }
    }

    pub fn regularized_optimism(&mut self) -> Outcome {
        let weights = [0.001, 0.01, 0.1];
        let ((checked, violations, worst), seconds) = timed(|| {
            let cov = self.coverage();
            let rewards = cov.env.rewards().to_vec();
            let mut checked = 0;
            let mut violations = 0;
            let mut worst = f64::INFINITY;
            for sample in cov.sets.iter().filter(|s| s.truth_in_set) {
                let grid = SpanGrid::build(&sample.set, &rewards, DEFAULT_PLAN_TOL).expect("planner converges");
                for &c in &weights {
                    let plan = grid.select(c);
                    let floor = cov.gain - c * cov.span - grid.slack(c, cov.span);
                    checked += 1;
                    worst = worst.min(plan.objective - floor);
                    if plan.objective < floor {
                        violations += 1;
                    }
                }
            }
            (checked, violations, worst)
        });
        Outcome {
            id: 9,
            title: "regularized plans beat the truth's regularized objective",
            passed: checked > 0 && violations == 0,
            detail: format!("{checked} (set, C) pairs, {violations} violations, min margin {worst:.3e}"),
            seconds,
            budget: None,
        }
    }

    fn sublinear_config(kind: AgentKind) -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvSpec::Random { num_states: 6, num_actions: 2, seed: 1, connectivity: 0.5 },
            agent: AgentSpec {
                kind,
                h: (kind == AgentKind::RegalC).then_some(SpanBound::SpanPlus { span_plus: 1.0 }),
                c: (kind == AgentKind::RegalD).then_some(Scale::Named(NamedScale::Default)),
                delta: 0.05,
                horizon: SUBLINEAR_HORIZON,
                plan_tol: None,
                start_state: 0,
            },
            seeds: (0..SUBLINEAR_SEEDS).collect(),
            checkpoints: Some(vec![SUBLINEAR_HORIZON / 4, SUBLINEAR_HORIZON]),
            output_dir: PathBuf::new(),
            optimism_tol: None,
            base_dir: PathBuf::new(),
        }
    }

    /// Growth of mean regret from `T/4` to `T` for the three agents.
    ///
    /// The ratio is taken on the pseudo-regret, which has the same mean as
    /// the realized regret without its reward noise; the realized ratio is
    /// reported alongside.
    pub fn sublinear_regret(&mut self) -> Outcome {
        let agents = [(AgentKind::RegalC, 2.6), (AgentKind::Ucrl2Baseline, 2.6), (AgentKind::RegalD, 2.8)];
        let (results, seconds) = timed(|| {
            agents
                .iter()
                .map(|&(kind, threshold)| {
                    let cfg = Self::sublinear_config(kind);
                    (kind, threshold, execute(&cfg, self.workers))
                })
                .collect::<Vec<_>>()
        });
        let mut passed = seconds < 900.0;
        let mut parts = Vec::new();
        for (kind, threshold, res) in results {
            match res {
                Ok(Experiment { summary, runs }) => {
                    let env = Self::sublinear_config(kind).build_env().expect("valid parameters");
                    self.stats.extend(runs.iter().map(|r| RunStats::of(r, &env)));
                    let (q, t) = (SUBLINEAR_HORIZON / 4, SUBLINEAR_HORIZON);
                    let pq = summary.mean_pseudo_regret_at(q).expect("checkpoint");
                    let pt = summary.mean_pseudo_regret_at(t).expect("checkpoint");
                    let rq = summary.mean_regret_at(q).expect("checkpoint");
                    let rt = summary.mean_regret_at(t).expect("checkpoint");
                    let ratio = pt / pq;
                    let ok = pq > 0.0 && ratio <= threshold && summary.diagnostics.aborted_runs == 0;
                    passed &= ok;
                    parts.push(format!(
                        "{} ratio {ratio:.3} (<= {threshold}; pseudo {pq:.2} -> {pt:.2}; realized {rq:.2} -> {rt:.2}, ratio {:.3})",
                        kind.name(),
                        rt / rq
                    ));
                }
                Err(e) => {
                    passed = false;
                    parts.push(format!("{}: {e}", kind.name()));
                }
            }
        }
        Outcome {
            id: 10,
            title: "regret grows sublinearly",
            passed,
            detail: parts.join("; "),
            seconds,
            budget: Some(900.0),
        }
    }

    pub fn lower_bound_geometry(&mut self) -> Outcome {
        let ((d_ow, d, gap, floor), seconds) = timed(|| {
            let p = LowerBoundParams::new(2, 2, 10.0, 10_000, 0).expect("valid parameters");
            let m = make_lower_bound(&p).expect("valid parameters");
            let (d_ow, _) = one_way_diameter(&m).expect("constant gain");
            let floor = p.epsilon() / (4.0 * p.alpha());
            (d_ow, diameter(&m), p.gain_gap(), floor)
        });
        let passed = (d_ow - 10.0).abs() <= 1.0 && (d - 100.0).abs() <= 10.0 && gap > floor && seconds < 5.0;
        Outcome {
            id: 12,
            title: "lower-bound family: one-way diameter, diameter, gain gap",
            passed,
            detail: format!("d_ow {d_ow:.4}, d {d:.4}, gain gap {gap:.4e} > {floor:.4e}"),
            seconds,
            budget: Some(5.0),
        }
    }

    /// Adds a dedicated small-horizon sweep, then checks every run so far.
    pub fn episode_bound_criterion(&mut self) -> Outcome {
        let (_, extra) = timed(|| {
            let env = make_two_state(0.5, 0.1).expect("valid parameters");
            let c = default_c(2, 2, 1000, 0.05);
            for seed in 0..20 {
                for cfg in [
                    AgentConfig::regal_c(5.0, 0.05, 1000, seed),
                    AgentConfig::ucrl2_baseline(0.05, 1000, seed),
                    AgentConfig::regal_d(c, 0.05, 1000, seed),
                ] {
                    let run = run_agent_with(&env, &cfg, RunOptions::default()).expect("valid config");
                    self.stats.push(RunStats::of(&run, &env));
                }
            }
        });
        let mut checked = 0;
        let mut violations = 0;
        let mut closest = f64::INFINITY;
        for s in self.stats.iter().filter(|s| s.horizon >= (s.num_states * s.num_actions) as u64) {
            checked += 1;
            closest = closest.min(episode_bound(s.num_states, s.num_actions, s.horizon).floor() - s.episodes as f64);
            if !episode_bound_holds(s.episodes, s.num_states, s.num_actions, s.horizon) {
                violations += 1;
            }
        }
        Outcome {
            id: 6,
            title: "episode count within SA log2(8T/SA)",
            passed: checked > 0 && violations == 0,
            detail: format!("{checked} runs, {violations} violations, smallest margin {closest} episodes"),
            seconds: extra,
            budget: None,
        }
    }

    pub fn visit_ratio_criterion(&mut self) -> Outcome {
        let mut checked = 0;
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for s in self.stats.iter().filter(|s| !s.aborted) {
            checked += 1;
            let bound = visit_ratio_bound(s.num_states, s.num_actions, s.horizon);
            worst = worst.max(s.visit_ratio / bound);
            if s.visit_ratio > bound {
                violations += 1;
            }
        }
        let aborted = self.stats.iter().filter(|s| s.aborted).count();
        Outcome {
            id: 11,
            title: "visit-ratio sum within sqrt(8SAT)",
            passed: checked > 0 && violations == 0 && aborted == 0,
            detail: format!("{checked} completed runs, {aborted} aborted, {violations} violations, largest sum/bound {worst:.3}"),
            seconds: 0.0,
            budget: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transient_tail_has_constant_gain() {
        for seed in 0..10 {
            let m = random_transient_tail(4, 2, seed);
            let gb = solve_gain_bias(&m, 1e-10, DEFAULT_THETA).unwrap();
            for policy in Policy::enumerate(4, 2) {
                let g = policy_gain(&m, &policy).unwrap();
                assert!(g.iter().all(|&x| x <= gb.gain + 1e-9));
            }
            // no state of the closed class leaks into the tail
            for s in 0..3 {
                for a in 0..2 {
                    assert_eq!(m.row(s, a)[3], 0.0);
                }
            }
        }
    }

    #[test]
    fn outcome_line() {
        let o = Outcome { id: 3, title: "x", passed: true, detail: "ok".into(), seconds: 0.5, budget: Some(10.0) };
        assert_eq!(o.to_string(), "[PASS]  3 x (0.50s / 10s): ok");
    }
}
