//! Expected hitting times and the diameter family.
//!
//! Unreachable targets are reported as `f64::INFINITY`, never as a large
//! finite sentinel.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::linalg::solve_dense;
use crate::mdp::{policy_gain, solve_gain_bias, span, DEFAULT_THETA};
use crate::{Error, Mdp, Policy, Result};

/// Largest number of deterministic policies any enumeration will visit.
pub const ENUMERATION_LIMIT: f64 = 1e6;
/// Stop rule for the shortest-path value iteration.
pub const SSP_TOLERANCE: f64 = 1e-10;
/// Entries growing past this are declared unreachable.
pub const SSP_DIVERGENCE: f64 = 1e12;
/// Default tolerance deciding which policies count as gain optimal.
pub const DEFAULT_GAIN_TOL: f64 = 1e-8;
/// Tolerance used when solving for `h*` inside diagnostics.
const SOLVE_TOL: f64 = 1e-10;
/// Number of random policies examined when enumeration is too large.
pub const SAMPLED_POLICIES: usize = 1000;

fn check_state(m: &Mdp, s: usize) -> Result<()> {
    if s < m.num_states() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what: "state", index: s, bound: m.num_states() })
    }
}

fn check_enumerable(m: &Mdp) -> Result<()> {
    let policies = Policy::count(m.num_states(), m.num_actions());
    if policies > ENUMERATION_LIMIT {
        Err(Error::EnumerationTooLarge { policies, limit: ENUMERATION_LIMIT })
    } else {
        Ok(())
    }
}

/// Expected number of steps for the chain of `policy` to first reach
/// `target` from each state. Zero at the target, infinite wherever the
/// target is not reached with probability one.
pub fn hitting_times(m: &Mdp, policy: &Policy, target: usize) -> Result<Vec<f64>> {
    check_state(m, target)?;
    if policy.len() != m.num_states() {
        return Err(Error::DimensionMismatch { expected: m.num_states(), found: policy.len() });
    }
    let n = m.num_states();
    let row = |s: usize| m.row(s, policy.action(s));

    // States with a path to the target.
    let mut reaches = vec![false; n];
    reaches[target] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if !reaches[s] && row(s).iter().enumerate().any(|(t, &p)| p > 0.0 && reaches[t]) {
                reaches[s] = true;
                changed = true;
            }
        }
    }
    // States that can wander into a dead end before hitting the target.
    let mut doomed: Vec<bool> = reaches.iter().map(|r| !r).collect();
    changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if s != target && !doomed[s] && row(s).iter().enumerate().any(|(t, &p)| p > 0.0 && doomed[t]) {
                doomed[s] = true;
                changed = true;
            }
        }
    }

    let live: Vec<usize> = (0..n).filter(|&s| s != target && !doomed[s]).collect();
    let mut out: Vec<f64> = (0..n)
        .map(|s| if s == target { 0.0 } else if doomed[s] { f64::INFINITY } else { 0.0 })
        .collect();
    if live.is_empty() {
        return Ok(out);
    }
    let k = live.len();
    let mut index = vec![usize::MAX; n];
    for (i, &s) in live.iter().enumerate() {
        index[s] = i;
    }
    let mut a = vec![0.0; k * k];
    for (i, &s) in live.iter().enumerate() {
        a[i * k + i] += 1.0;
        for (t, &p) in row(s).iter().enumerate() {
            if index[t] != usize::MAX {
                a[i * k + index[t]] -= p;
            }
        }
    }
    match solve_dense(a, vec![1.0; k], k) {
        Some(x) => {
            for (i, &s) in live.iter().enumerate() {
                out[s] = x[i].max(0.0);
            }
        }
        None => {
            for &s in &live {
                out[s] = f64::INFINITY;
            }
        }
    }
    Ok(out)
}

/// Minimum over policies of the expected time to reach `target`, from every
/// state.
///
/// The set of states that can reach the target almost surely is found first;
/// on that set, value iteration on `W(s) = 1 + min_a P(. | s, a) . W` runs
/// until successive iterates differ by at most [`SSP_TOLERANCE`], and its
/// greedy policy is then polished by exact policy evaluation and improvement.
pub fn min_hitting_time(m: &Mdp, target: usize) -> Result<Vec<f64>> {
    check_state(m, target)?;
    let (n, na) = (m.num_states(), m.num_actions());

    // Greatest fixpoint: states that can reach the target while staying inside.
    let mut inside = vec![true; n];
    loop {
        let allowed = |s: usize, a: usize, inside: &[bool]| {
            m.row(s, a).iter().enumerate().all(|(t, &p)| p == 0.0 || inside[t])
        };
        let mut reach = vec![false; n];
        reach[target] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if reach[s] || !inside[s] {
                    continue;
                }
                let ok = (0..na).any(|a| {
                    allowed(s, a, &inside) && m.row(s, a).iter().enumerate().any(|(t, &p)| p > 0.0 && reach[t])
                });
                if ok {
                    reach[s] = true;
                    changed = true;
                }
            }
        }
        if reach == inside {
            break;
        }
        inside = reach;
    }
    let allowed: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            (0..na)
                .filter(|&a| m.row(s, a).iter().enumerate().all(|(t, &p)| p == 0.0 || inside[t]))
                .collect()
        })
        .collect();

    let step = |w: &[f64], s: usize, a: usize| -> f64 {
        1.0 + m
            .row(s, a)
            .iter()
            .enumerate()
            .filter(|&(t, _)| t != target)
            .map(|(t, &p)| p * w[t])
            .sum::<f64>()
    };

    let mut w = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut diverged = false;
    loop {
        let mut change: f64 = 0.0;
        for s in 0..n {
            next[s] = if s == target || !inside[s] {
                0.0
            } else {
                allowed[s].iter().map(|&a| step(&w, s, a)).fold(f64::INFINITY, f64::min)
            };
            change = change.max((next[s] - w[s]).abs());
        }
        core::mem::swap(&mut w, &mut next);
        if change <= SSP_TOLERANCE {
            break;
        }
        if w.iter().any(|&x| x > SSP_DIVERGENCE) {
            diverged = true;
            break;
        }
    }

    let greedy = |w: &[f64]| -> Policy {
        Policy::new(
            (0..n)
                .map(|s| {
                    if s == target || !inside[s] {
                        return 0;
                    }
                    let mut best = allowed[s][0];
                    let mut best_val = step(w, s, best);
                    for &a in &allowed[s][1..] {
                        let val = step(w, s, a);
                        if val < best_val - 1e-12 * (1.0 + best_val.abs()) {
                            best = a;
                            best_val = val;
                        }
                    }
                    best
                })
                .collect(),
        )
    };

    let mut result = w.clone();
    if !diverged {
        let mut policy = greedy(&w);
        for _ in 0..100 {
            let exact = hitting_times(m, &policy, target)?;
            let proper = (0..n).all(|s| !inside[s] || exact[s].is_finite());
            if !proper {
                break;
            }
            result = exact;
            let improved = greedy(&result);
            if improved == policy {
                break;
            }
            policy = improved;
        }
    }
    for s in 0..n {
        if !inside[s] || result[s] > SSP_DIVERGENCE {
            result[s] = f64::INFINITY;
        }
    }
    result[target] = 0.0;
    Ok(result)
}

/// `max_{s1 != s2} min_pi T^pi(s1 -> s2)`; infinite when the MDP is not
/// communicating. A single-state MDP has diameter 0.
pub fn diameter(m: &Mdp) -> f64 {
    let mut d: f64 = 0.0;
    for target in 0..m.num_states() {
        // target is in range, so this cannot fail
        let times = min_hitting_time(m, target).unwrap_or_else(|_| vec![f64::INFINITY; m.num_states()]);
        for (s, &t) in times.iter().enumerate() {
            if s != target {
                d = d.max(t);
            }
        }
    }
    d
}

/// Lowest state index whose bias is within tolerance of the maximum.
pub fn bias_argmax(bias: &[f64]) -> usize {
    let best = bias.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * (1.0 + best.abs());
    bias.iter().position(|&h| h >= best - slack).unwrap_or(0)
}

/// One-way diameter `max_s min_pi T^pi(s -> s_bar)` where `s_bar` maximizes
/// the optimal bias. Returns `(D_ow, s_bar)`.
pub fn one_way_diameter(m: &Mdp) -> Result<(f64, usize)> {
    let gb = solve_gain_bias(m, SOLVE_TOL, DEFAULT_THETA)?;
    let s_bar = bias_argmax(&gb.bias);
    let times = min_hitting_time(m, s_bar)?;
    Ok((times.iter().copied().fold(0.0, f64::max), s_bar))
}

fn max_pair_time(m: &Mdp, policy: &Policy) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for target in 0..m.num_states() {
        let times = hitting_times(m, policy, target)?;
        worst = worst.max(times.iter().copied().fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Largest hitting time over every deterministic policy and ordered pair.
pub fn d_worst(m: &Mdp) -> Result<f64> {
    check_enumerable(m)?;
    let mut worst: f64 = 0.0;
    for policy in Policy::enumerate(m.num_states(), m.num_actions()) {
        worst = worst.max(max_pair_time(m, &policy)?);
        if worst == f64::INFINITY {
            break;
        }
    }
    Ok(worst)
}

/// Smallest worst-pair hitting time among gain-optimal policies, a policy
/// counting as optimal when its gain from every state is within `gain_tol`
/// of the optimal gain.
pub fn d_opt(m: &Mdp, gain_tol: f64) -> Result<f64> {
    check_enumerable(m)?;
    let gain = solve_gain_bias(m, SOLVE_TOL, DEFAULT_THETA)?.gain;
    let mut best = f64::INFINITY;
    for policy in Policy::enumerate(m.num_states(), m.num_actions()) {
        let g = policy_gain(m, &policy)?;
        if g.iter().all(|&x| x >= gain - gain_tol) {
            best = best.min(max_pair_time(m, &policy)?);
        }
    }
    Ok(best)
}

/// The diameter family of one model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DiameterReport {
    pub span: f64,
    pub d_ow: f64,
    pub d: f64,
    /// `None` when the policy count exceeds [`ENUMERATION_LIMIT`].
    pub d_worst: Option<f64>,
    pub d_opt: Option<f64>,
    pub s_bar: usize,
}

impl DiameterReport {
    /// `span <= d_ow <= d <= d_worst` up to `tol`, skipping infinite links.
    pub fn chain_holds(&self, tol: f64) -> bool {
        let le = |a: f64, b: f64| !a.is_finite() || !b.is_finite() || a <= b + tol;
        le(self.span, self.d_ow) && le(self.d_ow, self.d) && self.d_worst.is_none_or(|w| le(self.d, w))
    }
}

pub fn analyze(m: &Mdp) -> Result<DiameterReport> {
    let gb = solve_gain_bias(m, SOLVE_TOL, DEFAULT_THETA)?;
    let s_bar = bias_argmax(&gb.bias);
    let d_ow = min_hitting_time(m, s_bar)?.iter().copied().fold(0.0, f64::max);
    let enumerable = Policy::count(m.num_states(), m.num_actions()) <= ENUMERATION_LIMIT;
    Ok(DiameterReport {
        span: span(&gb.bias),
        d_ow,
        d: diameter(m),
        d_worst: if enumerable { Some(d_worst(m)?) } else { None },
        d_opt: if enumerable { Some(d_opt(m, DEFAULT_GAIN_TOL)?) } else { None },
        s_bar,
    })
}

/// Worst slack of `h*(s2) - h*(s1) <= gain * T^pi(s1 -> s2)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TravelBoundReport {
    /// `min (gain * T - (h(s2) - h(s1)))` over examined triples.
    pub worst_slack: f64,
    /// Policy and pair attaining the worst slack.
    pub worst_policy: Policy,
    pub worst_pair: (usize, usize),
    pub policies_checked: usize,
    /// True when policies were sampled rather than enumerated.
    pub sampled: bool,
    pub passed: bool,
}

/// Checks the span/travel-time inequality over all deterministic policies,
/// or over [`SAMPLED_POLICIES`] seeded random policies when there are too
/// many to enumerate.
pub fn verify_travel_bound(m: &Mdp) -> Result<TravelBoundReport> {
    let gb = solve_gain_bias(m, SOLVE_TOL, DEFAULT_THETA)?;
    let (n, na) = (m.num_states(), m.num_actions());
    let sampled = Policy::count(n, na) > ENUMERATION_LIMIT;
    let policies: alloc::boxed::Box<dyn Iterator<Item = Policy>> = if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        alloc::boxed::Box::new(
            (0..SAMPLED_POLICIES)
                .map(move |_| Policy::new((0..n).map(|_| rng.gen_range(0..na)).collect())),
        )
    } else {
        alloc::boxed::Box::new(Policy::enumerate(n, na))
    };
    let mut report = TravelBoundReport {
        worst_slack: f64::INFINITY,
        worst_policy: Policy::constant(n, 0),
        worst_pair: (0, 0),
        policies_checked: 0,
        sampled,
        passed: true,
    };
    for policy in policies {
        report.policies_checked += 1;
        for s2 in 0..n {
            let times = hitting_times(m, &policy, s2)?;
            for s1 in 0..n {
                let slack = gb.gain * times[s1] - (gb.bias[s2] - gb.bias[s1]);
                if slack < report.worst_slack {
                    report.worst_slack = slack;
                    report.worst_policy = policy.clone();
                    report.worst_pair = (s1, s2);
                }
            }
        }
    }
    report.passed = report.worst_slack >= -1e-6;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_two_state, make_random_wc};

    fn residual_check(m: &Mdp, policy: &Policy, target: usize, h: &[f64]) {
        for s in 0..m.num_states() {
            if s == target || !h[s].is_finite() {
                continue;
            }
            let rhs: f64 = 1.0
                + m.row(s, policy.action(s))
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| t != target)
                    .map(|(t, &p)| p * h[t])
                    .sum::<f64>();
            assert!((h[s] - rhs).abs() <= 1e-9, "residual at {s}");
        }
    }

    #[test]
    fn hitting_self_is_zero() {
        let m = make_random_wc(3, 2, 4, 0.5).unwrap();
        let h = hitting_times(&m, &Policy::constant(3, 1), 2).unwrap();
        assert_eq!(h[2], 0.0);
        residual_check(&m, &Policy::constant(3, 1), 2, &h);
    }

    #[test]
    fn two_state_hitting_times() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let leak = Policy::new(vec![1, 0]);
        let h = hitting_times(&m, &leak, 1).unwrap();
        assert!((h[0] - 10.0).abs() < 1e-9);
        let back = hitting_times(&m, &leak, 0).unwrap();
        assert_eq!(back[1], f64::INFINITY);
        let stay = hitting_times(&m, &Policy::new(vec![0, 0]), 1).unwrap();
        assert_eq!(stay[0], f64::INFINITY);
    }

    #[test]
    fn min_hitting_two_state_and_single_state() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let w = min_hitting_time(&m, 1).unwrap();
        assert!((w[0] - 10.0).abs() < 1e-9 && w[1] == 0.0);
        let one = Mdp::new(1, 1, vec![0.5], vec![1.0]).unwrap();
        assert_eq!(min_hitting_time(&one, 0).unwrap(), vec![0.0]);
        assert_eq!(diameter(&one), 0.0);
        assert_eq!(one_way_diameter(&one).unwrap(), (0.0, 0));
    }

    #[test]
    fn min_hitting_matches_policy_enumeration() {
        for seed in 0..10 {
            let m = make_random_wc(4, 2, seed, 0.2).unwrap();
            for target in 0..4 {
                let w = min_hitting_time(&m, target).unwrap();
                let mut brute = [f64::INFINITY; 4];
                for pi in Policy::enumerate(4, 2) {
                    let h = hitting_times(&m, &pi, target).unwrap();
                    for s in 0..4 {
                        assert!(w[s] <= h[s] + 1e-9);
                        brute[s] = brute[s].min(h[s]);
                    }
                }
                for s in 0..4 {
                    assert!((w[s] - brute[s]).abs() < 1e-8, "seed {seed} target {target} state {s}");
                }
            }
        }
    }

    #[test]
    fn complete_deterministic_has_unit_diameter() {
        // Action a moves to state a from everywhere.
        let n = 3;
        let mut p = Vec::new();
        for _ in 0..n {
            for a in 0..n {
                let mut row = vec![0.0; n];
                row[a] = 1.0;
                p.extend(row);
            }
        }
        let m = Mdp::new(n, n, vec![0.5; n * n], p).unwrap();
        assert!((diameter(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diameter_ordering_on_random_instances() {
        for seed in 0..10 {
            let m = make_random_wc(4, 2, 100 + seed, 0.3).unwrap();
            let report = analyze(&m).unwrap();
            assert!(report.chain_holds(1e-6), "{report:?}");
            let dopt = report.d_opt.unwrap();
            assert!(report.d <= dopt + 1e-9 && dopt <= report.d_worst.unwrap() + 1e-9);
        }
    }

    #[test]
    fn single_action_diameters_coincide() {
        let m = make_random_wc(3, 1, 8, 0.5).unwrap();
        let d = diameter(&m);
        assert!((d_worst(&m).unwrap() - d).abs() < 1e-8);
        assert!((d_opt(&m, DEFAULT_GAIN_TOL).unwrap() - d).abs() < 1e-8);
    }

    #[test]
    fn d_opt_picks_faster_optimal_policy() {
        // Two states with reward 1 everywhere: every policy is optimal.
        // Action 0 switches state w.p. 0.1, action 1 w.p. 0.5.
        let p = vec![0.9, 0.1, 0.5, 0.5, 0.1, 0.9, 0.5, 0.5];
        let m = Mdp::new(2, 2, vec![1.0; 4], p).unwrap();
        // enumerate: slow policy worst time 10, fast policy 2
        let slow = max_pair_time(&m, &Policy::constant(2, 0)).unwrap();
        let fast = max_pair_time(&m, &Policy::constant(2, 1)).unwrap();
        assert!((slow - 10.0).abs() < 1e-9 && (fast - 2.0).abs() < 1e-9);
        assert!((d_opt(&m, DEFAULT_GAIN_TOL).unwrap() - 2.0).abs() < 1e-9);
        assert!((d_worst(&m).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_guard() {
        let m = make_random_wc(21, 2, 1, 0.5).unwrap();
        assert!(matches!(d_worst(&m), Err(Error::EnumerationTooLarge { .. })));
        let report = verify_travel_bound(&m).unwrap();
        assert!(report.sampled && report.policies_checked == SAMPLED_POLICIES);
        assert!(report.passed);
    }

    #[test]
    fn travel_bound_two_state_and_constant_bias() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let report = verify_travel_bound(&m).unwrap();
        assert!(report.passed, "{report:?}");
        // all rewards equal: bias constant, left side 0
        let flat = Mdp::new(2, 2, vec![0.4; 4], vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.2, 0.8]).unwrap();
        let report = verify_travel_bound(&flat).unwrap();
        assert!(report.passed && report.worst_slack >= -1e-9);
    }
}
