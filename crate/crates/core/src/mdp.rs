//! Tabular MDPs and average-reward dynamic programming.
//!
//! States and actions are dense indices. Rewards are known constants in
//! `[0, 1]`; transition rows are stored contiguously, one row of length `S`
//! per state-action pair.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row sums must be within this distance of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Self-loop weight `1 - theta` used by the solvers unless told otherwise.
pub const DEFAULT_THETA: f64 = 0.99;
/// Hard cap on value-iteration sweeps.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Relative tolerance used when comparing action values for ties.
pub(crate) const TIE_EPS: f64 = 1e-12;

/// A finite MDP with known rewards.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// `reward[s * A + a]`
    reward: Vec<f64>,
    /// `transition[(s * A + a) * S + s']`
    transition: Vec<f64>,
}

impl Mdp {
    /// Builds a model from flat arrays, checking every row and reward.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::InvalidParameter { name: "num_states", value: 0.0 });
        }
        if num_actions == 0 {
            return Err(Error::InvalidParameter { name: "num_actions", value: 0.0 });
        }
        let pairs = num_states * num_actions;
        if reward.len() != pairs {
            return Err(Error::DimensionMismatch { expected: pairs, found: reward.len() });
        }
        if transition.len() != pairs * num_states {
            return Err(Error::DimensionMismatch {
                expected: pairs * num_states,
                found: transition.len(),
            });
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let r = reward[s * num_actions + a];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::RewardOutOfRange { state: s, action: a, value: r });
                }
                let start = (s * num_actions + a) * num_states;
                let row = &transition[start..start + num_states];
                check_row(row, s, a)?;
            }
        }
        Ok(Self { num_states, num_actions, reward, transition })
    }

    /// Builds a model from nested `reward[s][a]` and `transition[s][a][s']`.
    pub fn from_nested(reward: &[Vec<f64>], transition: &[Vec<Vec<f64>>]) -> Result<Self> {
        let num_states = reward.len();
        let num_actions = reward.first().map_or(0, Vec::len);
        if transition.len() != num_states {
            return Err(Error::DimensionMismatch { expected: num_states, found: transition.len() });
        }
        let mut flat_r = Vec::with_capacity(num_states * num_actions);
        let mut flat_p = Vec::with_capacity(num_states * num_actions * num_states);
        for s in 0..num_states {
            if reward[s].len() != num_actions {
                return Err(Error::DimensionMismatch { expected: num_actions, found: reward[s].len() });
            }
            if transition[s].len() != num_actions {
                return Err(Error::DimensionMismatch {
                    expected: num_actions,
                    found: transition[s].len(),
                });
            }
            flat_r.extend_from_slice(&reward[s]);
            for row in &transition[s] {
                if row.len() != num_states {
                    return Err(Error::DimensionMismatch { expected: num_states, found: row.len() });
                }
                flat_p.extend_from_slice(row);
            }
        }
        Self::new(num_states, num_actions, flat_r, flat_p)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Transition row `P(. | s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Flat reward table, indexed `s * A + a`.
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Flat transition table, indexed `(s * A + a) * S + s'`.
    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Same rewards, different transitions.
    pub fn with_transitions(&self, transition: Vec<f64>) -> Result<Self> {
        Self::new(self.num_states, self.num_actions, self.reward.clone(), transition)
    }

    /// `r(s, a) + P(. | s, a) . v`
    pub fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.reward(s, a) + dot(self.row(s, a), v)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.num_states {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.num_states, found: v.len() })
        }
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.num_states {
            return Err(Error::DimensionMismatch { expected: self.num_states, found: policy.len() });
        }
        if let Some(&a) = policy.actions().iter().find(|&&a| a >= self.num_actions) {
            return Err(Error::IndexOutOfRange { what: "action", index: a, bound: self.num_actions });
        }
        Ok(())
    }
}

pub(crate) fn check_row(row: &[f64], s: usize, a: usize) -> Result<()> {
    let mut sum = 0.0;
    for (next, &p) in row.iter().enumerate() {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidEntry { state: s, action: a, next, value: p });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::InvalidRow { state: s, action: a, sum });
    }
    Ok(())
}

pub(crate) fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(x, y)| x * y).sum()
}

/// A stationary deterministic policy, one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    /// The policy taking action `a` everywhere.
    pub fn constant(num_states: usize, a: usize) -> Self {
        Self(vec![a; num_states])
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Iterates over all `A^S` deterministic policies in mixed-radix order
    /// (state 0 varies fastest).
    pub fn enumerate(num_states: usize, num_actions: usize) -> PolicyIter {
        PolicyIter { next: Some(vec![0; num_states]), num_actions }
    }

    /// Number of deterministic policies, as a float so that overflow is not an issue.
    pub fn count(num_states: usize, num_actions: usize) -> f64 {
        libm::pow(num_actions as f64, num_states as f64)
    }
}

pub struct PolicyIter {
    next: Option<Vec<usize>>,
    num_actions: usize,
}

impl Iterator for PolicyIter {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carry = true;
        for slot in succ.iter_mut() {
            *slot += 1;
            if *slot < self.num_actions {
                carry = false;
                break;
            }
            *slot = 0;
        }
        if !carry {
            self.next = Some(succ);
        }
        Some(Policy(current))
    }
}

/// Solution of the average-reward optimality equations.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GainBias {
    pub gain: f64,
    /// Bias vector shifted so that its minimum is exactly zero.
    pub bias: Vec<f64>,
    /// `max_s |(T h)(s) - h(s) - gain|` achieved on the original model.
    pub residual: f64,
    pub iterations: usize,
}

impl GainBias {
    pub fn span(&self) -> f64 {
        span(&self.bias)
    }
}

/// Result of one application of the Bellman operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Backup {
    pub values: Vec<f64>,
    /// Maximizing action per state, lowest index on ties.
    pub greedy: Policy,
}

/// `max v - min v`.
pub fn span(v: &[f64]) -> f64 {
    let (lo, hi) = min_max(v);
    hi - lo
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Index of the first entry within tie tolerance of the maximum of `values`.
pub(crate) fn argmax_lowest(values: &[f64]) -> (usize, f64) {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_EPS * (1.0 + best.abs());
    let idx = values.iter().position(|&q| q >= best - slack).unwrap_or(0);
    (idx, best)
}

fn greedy_backup_into(m: &Mdp, v: &[f64], out: &mut [f64], greedy: Option<&mut [usize]>, q: &mut [f64]) {
    let mut greedy = greedy;
    for s in 0..m.num_states {
        for (a, qa) in q.iter_mut().enumerate() {
            *qa = m.q_value(s, a, v);
        }
        let (a, best) = argmax_lowest(q);
        out[s] = best;
        if let Some(g) = greedy.as_deref_mut() {
            g[s] = a;
        }
    }
}

/// `(T v)(s) = max_a r(s, a) + P(. | s, a) . v`, together with the greedy policy.
pub fn bellman_apply(m: &Mdp, v: &[f64]) -> Result<Backup> {
    m.check_len(v)?;
    let mut values = vec![0.0; m.num_states];
    let mut greedy = vec![0; m.num_states];
    let mut q = vec![0.0; m.num_actions];
    greedy_backup_into(m, v, &mut values, Some(&mut greedy), &mut q);
    Ok(Backup { values, greedy: Policy(greedy) })
}

/// Optimal `n`-step total reward `V^n`, with `V^0 = 0` and `V^{n+1} = T V^n`.
pub fn value_iteration_n(m: &Mdp, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; m.num_states];
    let mut next = vec![0.0; m.num_states];
    let mut q = vec![0.0; m.num_actions];
    for _ in 0..n {
        greedy_backup_into(m, &v, &mut next, None, &mut q);
        core::mem::swap(&mut v, &mut next);
    }
    v
}

/// Blends every row with a self-loop: `P' = (1 - theta) e_s + theta P`,
/// `r' = theta r`.
pub fn aperiodicity_transform(m: &Mdp, theta: f64) -> Result<Mdp> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter { name: "theta", value: theta });
    }
    let (ns, na) = (m.num_states, m.num_actions);
    let reward = m.reward.iter().map(|r| theta * r).collect();
    let mut transition = Vec::with_capacity(m.transition.len());
    for s in 0..ns {
        for a in 0..na {
            transition.extend(m.row(s, a).iter().enumerate().map(|(next, &p)| {
                let stay = if next == s { 1.0 - theta } else { 0.0 };
                stay + theta * p
            }));
        }
    }
    Mdp::new(ns, na, reward, transition)
}

/// Output of [`relative_value_iteration`].
pub(crate) struct RviOutcome {
    /// Final iterate, shifted to minimum zero.
    pub values: Vec<f64>,
    pub gain: f64,
    pub iterations: usize,
}

/// Relative value iteration on the aperiodicity-transformed version of an
/// operator.
///
/// `backup(v, out)` must write `T v` for an additively homogeneous monotone
/// operator `T` on the original scale. The transformed update is
/// `v <- (1 - theta) v + theta T v`; iteration stops when
/// `span(T v - v) <= tol`, with gain taken at the midpoint of `T v - v`.
pub(crate) fn relative_value_iteration<F>(
    n: usize,
    init: Option<&[f64]>,
    tol: f64,
    theta: f64,
    max_iterations: usize,
    mut backup: F,
) -> Result<RviOutcome>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", value: tol });
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter { name: "theta", value: theta });
    }
    let mut v = match init {
        Some(init) if init.len() == n => init.to_vec(),
        _ => vec![0.0; n],
    };
    let mut tv = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut checkpoint_span = f64::INFINITY;
    for it in 0..max_iterations {
        backup(&v, &mut tv);
        for ((d, &t), &x) in diff.iter_mut().zip(&tv).zip(&v) {
            *d = t - x;
        }
        let (lo, hi) = min_max(&diff);
        if hi - lo <= tol {
            let vmin = min_max(&v).0;
            for x in v.iter_mut() {
                *x -= vmin;
            }
            return Ok(RviOutcome { values: v, gain: 0.5 * (lo + hi), iterations: it + 1 });
        }
        // A span that refuses to shrink means the increments have settled on
        // a non-constant vector: the gain differs between states.
        if it > 0 && it % 1000 == 0 {
            let now = hi - lo;
            if now >= checkpoint_span * (1.0 - 1e-6) {
                return Err(Error::NonConvergence { iterations: it + 1, per_state_gain: diff });
            }
            checkpoint_span = now;
        }
        let mut wmin = f64::INFINITY;
        for (x, &t) in v.iter_mut().zip(&tv) {
            *x = (1.0 - theta) * *x + theta * t;
            wmin = wmin.min(*x);
        }
        for x in v.iter_mut() {
            *x -= wmin;
        }
    }
    Err(Error::NonConvergence { iterations: max_iterations, per_state_gain: diff })
}

/// Largest `|(T h)(s) - h(s) - gain|`.
pub fn optimality_residual(m: &Mdp, gain: f64, bias: &[f64]) -> Result<f64> {
    let th = bellman_apply(m, bias)?;
    Ok(th
        .values
        .iter()
        .zip(bias)
        .map(|(t, h)| (t - h - gain).abs())
        .fold(0.0, f64::max))
}

/// Largest `|r(s, pi(s)) + P(. | s, pi(s)) . h - h(s) - gain|`.
pub fn policy_residual(m: &Mdp, policy: &Policy, gain: f64, bias: &[f64]) -> Result<f64> {
    m.check_policy(policy)?;
    m.check_len(bias)?;
    Ok((0..m.num_states)
        .map(|s| (m.q_value(s, policy.action(s), bias) - bias[s] - gain).abs())
        .fold(0.0, f64::max))
}

/// Solves `h + gain e = T h` by relative value iteration on the transformed
/// model. The returned bias has minimum zero and residual at most `tol`.
pub fn solve_gain_bias(m: &Mdp, tol: f64, theta: f64) -> Result<GainBias> {
    let mut q = vec![0.0; m.num_actions];
    let mut tol_run = tol;
    let mut total = 0;
    // The stop rule bounds the residual by tol / 2 in exact arithmetic; the
    // loop only repeats if rounding pushed it over.
    for _ in 0..4 {
        let out = relative_value_iteration(m.num_states, None, tol_run, theta, MAX_ITERATIONS, |v, out| {
            greedy_backup_into(m, v, out, None, &mut q)
        })?;
        total += out.iterations;
        let residual = optimality_residual(m, out.gain, &out.values)?;
        if residual <= tol {
            return Ok(GainBias { gain: out.gain, bias: out.values, residual, iterations: total });
        }
        tol_run *= 0.25;
    }
    Err(Error::NonConvergence { iterations: total, per_state_gain: Vec::new() })
}

/// Gain and bias of a fixed policy whose chain has constant gain.
pub fn evaluate_policy(m: &Mdp, policy: &Policy, tol: f64, theta: f64) -> Result<GainBias> {
    evaluate_policy_from(m, policy, tol, theta, None)
}

pub(crate) fn evaluate_policy_from(
    m: &Mdp,
    policy: &Policy,
    tol: f64,
    theta: f64,
    init: Option<&[f64]>,
) -> Result<GainBias> {
    m.check_policy(policy)?;
    let out = relative_value_iteration(m.num_states, init, tol, theta, MAX_ITERATIONS, |v, out| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = m.q_value(s, policy.action(s), v);
        }
    })?;
    let residual = policy_residual(m, policy, out.gain, &out.values)?;
    Ok(GainBias { gain: out.gain, bias: out.values, residual, iterations: out.iterations })
}

/// Per-state long-run average reward of a fixed policy.
///
/// Iterates the transformed chain; the one-step increments `V_{n+1} - V_n`
/// converge to `theta` times the gain vector, which may differ between
/// recurrent classes.
pub fn policy_gain(m: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
    policy_gain_with(m, policy, DEFAULT_THETA)
}

pub fn policy_gain_with(m: &Mdp, policy: &Policy, theta: f64) -> Result<Vec<f64>> {
    m.check_policy(policy)?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter { name: "theta", value: theta });
    }
    let ns = m.num_states;
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut diff = vec![f64::INFINITY; ns];
    for _ in 0..MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        for s in 0..ns {
            let a = policy.action(s);
            let t = m.q_value(s, a, &v);
            next[s] = (1.0 - theta) * v[s] + theta * t;
            let d = next[s] - v[s];
            change = change.max((d - diff[s]).abs());
            diff[s] = d;
        }
        let shift = next[0];
        let mut scale: f64 = 0.0;
        for (x, &y) in v.iter_mut().zip(&next) {
            *x = y - shift;
            scale = scale.max(x.abs());
        }
        if change <= 1e-13_f64.max(8.0 * f64::EPSILON * (1.0 + scale)) {
            return Ok(diff.iter().map(|d| d / theta).collect());
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, per_state_gain: diff })
}

/// Samples one transition. The reward is the known constant `r(s, a)`.
pub fn simulate_step<R: Rng + ?Sized>(m: &Mdp, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
    let row = m.row(s, a);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = s;
    for (next, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = next;
            if u < acc {
                return (next, m.reward(s, a));
            }
        }
    }
    (last_positive, m.reward(s, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_two_state, make_random_wc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(r: f64) -> Mdp {
        Mdp::new(1, 1, vec![r], vec![1.0]).unwrap()
    }

    fn two_cycle() -> Mdp {
        // 0 -> 1 -> 0 deterministically, reward only in state 1.
        Mdp::new(2, 1, vec![0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_bad_rows_with_location() {
        let err = Mdp::new(2, 1, vec![0.0, 0.0], vec![0.5, 0.4, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidRow { state: 0, action: 0, .. }));
        let err = Mdp::new(1, 1, vec![1.5], vec![1.0]).unwrap_err();
        assert!(matches!(err, Error::RewardOutOfRange { .. }));
        let err = Mdp::new(2, 1, vec![0.0, 0.0], vec![1.0, 0.0, -0.5, 1.5]).unwrap_err();
        assert!(matches!(err, Error::InvalidEntry { state: 1, action: 0, next: 0, .. }));
    }

    #[test]
    fn bellman_zero_rewards() {
        let m = Mdp::new(2, 2, vec![0.0; 4], vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.3, 0.7]).unwrap();
        let b = bellman_apply(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(b.values, vec![0.0, 0.0]);
        assert_eq!(b.greedy.actions(), &[0, 0]);
    }

    #[test]
    fn bellman_on_two_state_bias() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let b = bellman_apply(&m, &[-5.0, 0.0]).unwrap();
        assert!((b.values[0] + 4.0).abs() < 1e-12);
        assert!((b.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bellman_matches_per_state_loop() {
        let m = make_random_wc(3, 2, 11, 0.5).unwrap();
        let v = [0.3, -1.2, 2.5];
        let b = bellman_apply(&m, &v).unwrap();
        for s in 0..3 {
            let mut best = f64::NEG_INFINITY;
            for a in 0..2 {
                let mut q = m.reward(s, a);
                for n in 0..3 {
                    q += m.row(s, a)[n] * v[n];
                }
                best = best.max(q);
            }
            assert!((b.values[s] - best).abs() < 1e-14);
        }
    }

    #[test]
    fn bellman_dimension_mismatch() {
        let m = single(0.5);
        assert!(matches!(bellman_apply(&m, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn value_iteration_small_n() {
        let m = make_random_wc(3, 2, 5, 0.3).unwrap();
        assert_eq!(value_iteration_n(&m, 0), vec![0.0; 3]);
        let v1 = value_iteration_n(&m, 1);
        for s in 0..3 {
            assert_eq!(v1[s], m.reward(s, 0).max(m.reward(s, 1)));
        }
    }

    #[test]
    fn value_iteration_difference_converges_to_bias_gap() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let v = value_iteration_n(&m, 10_000);
        assert!((v[1] - v[0] - 5.0).abs() < 1e-3);
    }

    #[test]
    fn solve_single_state() {
        let gb = solve_gain_bias(&single(0.7), 1e-10, DEFAULT_THETA).unwrap();
        assert!((gb.gain - 0.7).abs() < 1e-12);
        assert_eq!(gb.bias, vec![0.0]);
    }

    #[test]
    fn solve_two_state() {
        let gb = solve_gain_bias(&make_two_state(0.5, 0.1).unwrap(), 1e-10, DEFAULT_THETA).unwrap();
        assert!((gb.gain - 1.0).abs() < 1e-8);
        assert!(gb.bias[0].abs() < 1e-12);
        assert!((gb.bias[1] - 5.0).abs() < 1e-6);
        assert!((gb.span() - 5.0).abs() < 1e-6);
        assert!(gb.residual <= 1e-10);
    }

    #[test]
    fn solve_periodic_cycle() {
        let gb = solve_gain_bias(&two_cycle(), 1e-10, DEFAULT_THETA).unwrap();
        assert!((gb.gain - 0.5).abs() < 1e-9);
        assert!((gb.span() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn solve_reports_non_constant_gain() {
        // Two absorbing states with different rewards: gain is not constant.
        let m = Mdp::new(2, 1, vec![0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        match solve_gain_bias(&m, 1e-8, DEFAULT_THETA) {
            Err(Error::NonConvergence { per_state_gain, .. }) => {
                assert!(per_state_gain[1] - per_state_gain[0] > 0.5);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn span_basics() {
        assert_eq!(span(&[2.0, 2.0, 2.0]), 0.0);
        assert_eq!(span(&[-5.0, 0.0]), 5.0);
        let v = [0.1, -3.0, 7.5];
        let shifted: Vec<f64> = v.iter().map(|x| x + 11.0).collect();
        assert!((span(&v) - span(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn transform_near_identity() {
        let m = make_random_wc(4, 2, 3, 0.5).unwrap();
        let t = aperiodicity_transform(&m, 1.0 - 1e-12).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let l1: f64 = m.row(s, a).iter().zip(t.row(s, a)).map(|(x, y)| (x - y).abs()).sum();
                assert!(l1 <= 1e-11);
            }
        }
    }

    #[test]
    fn transform_scales_gain_of_cycle() {
        let m = two_cycle();
        let t = aperiodicity_transform(&m, 0.5).unwrap();
        let g = solve_gain_bias(&m, 1e-11, DEFAULT_THETA).unwrap().gain;
        let gt = solve_gain_bias(&t, 1e-11, DEFAULT_THETA).unwrap().gain;
        assert!((gt - 0.25).abs() < 1e-9);
        assert!((gt - 0.5 * g).abs() < 1e-9);
    }

    #[test]
    fn transform_keeps_two_state_span() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let t = aperiodicity_transform(&m, 0.9).unwrap();
        let gb = solve_gain_bias(&t, 1e-11, DEFAULT_THETA).unwrap();
        assert!((gb.span() - 5.0).abs() < 1e-6);
        for s in 0..2 {
            for a in 0..2 {
                assert!(t.row(s, a)[s] >= 0.1 - 1e-15);
            }
        }
    }

    #[test]
    fn policy_gain_single_action_matches_solver() {
        let m = make_random_wc(4, 1, 9, 0.4).unwrap();
        let g = policy_gain(&m, &Policy::constant(4, 0)).unwrap();
        let gb = solve_gain_bias(&m, 1e-11, DEFAULT_THETA).unwrap();
        for x in g {
            assert!((x - gb.gain).abs() < 1e-9);
        }
    }

    #[test]
    fn policy_gain_two_state_stay_policy() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let g = policy_gain(&m, &Policy::constant(2, 0)).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-10);
        assert!((g[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn policy_gain_matches_monte_carlo() {
        let m = make_random_wc(3, 2, 21, 0.5).unwrap();
        let pi = Policy::new(vec![1, 0, 1]);
        let g = policy_gain(&m, &pi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        // Batch means over 1000 blocks for the standard error.
        let blocks = 1000;
        let mut s = 0;
        let mut means = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let mut acc = 0.0;
            for _ in 0..n / blocks {
                let (next, r) = simulate_step(&m, s, pi.action(s), &mut rng);
                acc += r;
                s = next;
            }
            means.push(acc / (n / blocks) as f64);
        }
        let mean = means.iter().sum::<f64>() / blocks as f64;
        let var = means.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (blocks - 1) as f64;
        let se = libm::sqrt(var / blocks as f64);
        assert!((mean - g[0]).abs() <= 3.0 * se + 1e-12, "mean {mean} gain {} se {se}", g[0]);
    }

    #[test]
    fn simulate_deterministic_and_binomial() {
        let m = Mdp::new(3, 1, vec![0.25; 3], vec![0.0, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(simulate_step(&m, 0, 0, &mut rng), (2, 0.25));
        }
        let hits = (0..100_000).filter(|_| simulate_step(&m, 1, 0, &mut rng).0 == 0).count();
        let freq = hits as f64 / 100_000.0;
        assert!((0.49..=0.51).contains(&freq), "freq {freq}");
    }

    #[test]
    fn policy_enumeration_counts() {
        assert_eq!(Policy::enumerate(3, 2).count(), 8);
        assert_eq!(Policy::enumerate(2, 3).count(), 9);
        assert_eq!(Policy::enumerate(1, 1).count(), 1);
        let all: Vec<Policy> = Policy::enumerate(2, 2).collect();
        assert_eq!(all[1].actions(), &[1, 0]);
    }
}
