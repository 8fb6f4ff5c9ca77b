//! Optimistic planning over an L1 confidence set.
//!
//! All three planners run the same optimistic relative value iteration:
//!
//! ```text
//! (T v)(s) = max_a  r(s, a) + max { p . v : |p - center(s, a)|_1 <= rho(s, a) }
//! ```
//!
//! [`constrained_plan`] additionally truncates every sweep at
//! `min_s (T v)(s) + H`, and [`regularized_plan`] searches a geometric grid
//! of such caps for the best `gain - C * span`.
//!
//! Once the iteration settles, the policy and one transition row per
//! state-action pair are frozen into `chosen_model`, and gain and bias are
//! recomputed on that model so that `h + gain e = r_pi + P_pi h` holds up to
//! the planning tolerance. For a truncated state the frozen row is the point
//! on the segment between the pessimistic and optimistic rows whose value
//! equals the truncated target.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceSet;
use crate::mdp::{
    argmax_lowest, dot, evaluate_policy_from, min_max, policy_residual, relative_value_iteration, span,
    DEFAULT_THETA, MAX_ITERATIONS,
};
use crate::{Error, Mdp, Policy, Result};

/// Planning tolerance used by the agents.
pub const DEFAULT_PLAN_TOL: f64 = 1e-6;
/// Largest support size accepted by [`lp_inner_oracle`].
pub const ORACLE_MAX_STATES: usize = 6;

/// An optimistic model choice together with its policy, gain and bias.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PlanResult {
    /// One row per state-action pair, every row inside the confidence set.
    pub chosen_model: Mdp,
    pub policy: Policy,
    pub gain: f64,
    /// Bias of `policy` on `chosen_model`, minimum zero.
    pub bias: Vec<f64>,
    pub span: f64,
    /// `gain - C * span` for regularized plans, `gain` otherwise.
    pub objective: f64,
    /// `max_s |r_pi(s) + P_pi(s) . bias - bias(s) - gain|`.
    pub residual: f64,
    /// Span cap used, `None` for the unconstrained planner.
    pub span_cap: Option<f64>,
    /// Set when the frozen model could not honour the span cap.
    pub cap_violated: bool,
    pub iterations: usize,
}

fn order_by(v: &[f64], descending: bool, order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..v.len());
    if descending {
        order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    } else {
        order.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
    }
}

/// Moves up to `rho / 2` mass onto `order[0]`, taking it from the back of
/// `order` first.
fn shift_mass(center: &[f64], rho: f64, order: &[usize], out: &mut [f64]) {
    out.copy_from_slice(center);
    let best = order[0];
    let room = 1.0 - center[best];
    let add = (0.5 * rho).min(room);
    if !(add > 0.0) {
        return;
    }
    out[best] = if add == room { 1.0 } else { center[best] + add };
    let mut excess = add;
    for &i in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if i == best {
            continue;
        }
        let take = out[i].min(excess);
        out[i] -= take;
        excess -= take;
    }
}

/// `argmax p . v` over the simplex intersected with the L1 ball of radius
/// `rho` around `center`. Ties in `v` favour the lowest index.
pub fn inner_max(v: &[f64], center: &[f64], rho: f64) -> Vec<f64> {
    let mut order = Vec::with_capacity(v.len());
    order_by(v, true, &mut order);
    let mut out = vec![0.0; v.len()];
    shift_mass(center, rho, &order, &mut out);
    out
}

/// `argmin p . v` over the same feasible set as [`inner_max`].
pub fn inner_min(v: &[f64], center: &[f64], rho: f64) -> Vec<f64> {
    let mut order = Vec::with_capacity(v.len());
    order_by(v, false, &mut order);
    let mut out = vec![0.0; v.len()];
    shift_mass(center, rho, &order, &mut out);
    out
}

/// Exact maximizer of `p . v` over the simplex-ball intersection by
/// exhaustive enumeration, for supports of at most [`ORACLE_MAX_STATES`].
///
/// Some maximizer sends all added mass to a single recipient `j` and removes
/// it from a set of fully drained donors plus at most one partially drained
/// donor, the partial amount fixed by an active budget constraint. Every
/// such pattern is tried.
pub fn lp_inner_oracle(v: &[f64], center: &[f64], rho: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if n > ORACLE_MAX_STATES {
        return Err(Error::DimensionMismatch { expected: ORACLE_MAX_STATES, found: n });
    }
    if center.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: center.len() });
    }
    let budget = 0.5 * rho.max(0.0);
    let mut best = center.to_vec();
    let mut best_val = dot(center, v);
    let mut candidate = vec![0.0; n];
    let mut consider = |recipient: usize, mask: u32, partial: Option<(usize, f64)>| {
        candidate.copy_from_slice(center);
        let mut moved = 0.0;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                moved += center[i];
                candidate[i] = 0.0;
            }
        }
        if let Some((k, x)) = partial {
            candidate[k] -= x;
            moved += x;
        }
        if moved > budget + 1e-15 || center[recipient] + moved > 1.0 + 1e-15 {
            return;
        }
        candidate[recipient] += moved;
        let val = dot(&candidate, v);
        if val > best_val {
            best_val = val;
            best.copy_from_slice(&candidate);
        }
    };
    for j in 0..n {
        for mask in 0u32..(1 << n) {
            if mask & (1 << j) != 0 {
                continue;
            }
            let drained: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| center[i]).sum();
            consider(j, mask, None);
            for k in 0..n {
                if k == j || mask & (1 << k) != 0 {
                    continue;
                }
                for x in [budget - drained, 1.0 - center[j] - drained] {
                    if x >= 0.0 && x <= center[k] {
                        consider(j, mask, Some((k, x)));
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Scratch space for the optimistic Bellman operator.
struct Optimistic<'a> {
    set: &'a ConfidenceSet,
    rewards: &'a [f64],
    cap: Option<f64>,
    order: Vec<usize>,
    row: Vec<f64>,
}

impl<'a> Optimistic<'a> {
    fn new(set: &'a ConfidenceSet, rewards: &'a [f64], cap: Option<f64>) -> Self {
        let n = set.num_states();
        Self { set, rewards, cap, order: Vec::with_capacity(n), row: vec![0.0; n] }
    }

    fn backup(&mut self, v: &[f64], out: &mut [f64]) {
        let na = self.set.num_actions();
        order_by(v, true, &mut self.order);
        for (s, o) in out.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                shift_mass(self.set.center_row(s, a), self.set.radius(s, a), &self.order, &mut self.row);
                best = best.max(self.rewards[s * na + a] + dot(&self.row, v));
            }
            *o = best;
        }
        if let Some(h) = self.cap {
            let lo = min_max(out).0;
            for o in out.iter_mut() {
                *o = o.min(lo + h);
            }
        }
    }
}

fn check_inputs(set: &ConfidenceSet, rewards: &[f64], tol: f64) -> Result<()> {
    let pairs = set.num_states() * set.num_actions();
    if rewards.len() != pairs {
        return Err(Error::DimensionMismatch { expected: pairs, found: rewards.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", value: tol });
    }
    Ok(())
}

/// Runs the (possibly truncated) optimistic iteration from `init` and
/// freezes the result. Also returns the final iterate for warm starts.
fn plan_with_cap(
    set: &ConfidenceSet,
    rewards: &[f64],
    cap: Option<f64>,
    tol: f64,
    init: Option<&[f64]>,
) -> Result<(PlanResult, Vec<f64>)> {
    check_inputs(set, rewards, tol)?;
    if let Some(h) = cap {
        if !(h >= 0.0) {
            return Err(Error::InvalidParameter { name: "H", value: h });
        }
    }
    let cap = cap.filter(|h| h.is_finite());
    let (ns, na) = (set.num_states(), set.num_actions());
    let mut op = Optimistic::new(set, rewards, cap);
    let rvi = relative_value_iteration(ns, init, tol, DEFAULT_THETA, MAX_ITERATIONS, |v, out| op.backup(v, out))?;
    let v = rvi.values;

    let mut desc = Vec::with_capacity(ns);
    let mut asc = Vec::with_capacity(ns);
    order_by(&v, true, &mut desc);
    order_by(&v, false, &mut asc);

    let mut rows = vec![0.0; ns * na * ns];
    let mut q_max = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let pair = s * na + a;
            let row = &mut rows[pair * ns..(pair + 1) * ns];
            shift_mass(set.center_row(s, a), set.radius(s, a), &desc, row);
            q_max[pair] = rewards[pair] + dot(row, &v);
        }
    }
    let mut greedy = vec![0; ns];
    let mut best = vec![0.0; ns];
    for s in 0..ns {
        let (a, q) = argmax_lowest(&q_max[s * na..(s + 1) * na]);
        greedy[s] = a;
        best[s] = q;
    }
    let floor = min_max(&best).0;
    let mut policy = greedy.clone();
    let mut unattainable = false;
    let mut low = vec![0.0; ns];
    for s in 0..ns {
        let target = match cap {
            Some(h) if best[s] > floor + h => floor + h,
            _ => continue,
        };
        // Candidate actions: greedy first, then by index.
        let candidates = core::iter::once(greedy[s]).chain((0..na).filter(|&a| a != greedy[s]));
        let mut closest: Option<(f64, usize)> = None;
        let mut placed = false;
        for a in candidates {
            let pair = s * na + a;
            shift_mass(set.center_row(s, a), set.radius(s, a), &asc, &mut low);
            let q_low = rewards[pair] + dot(&low, &v);
            let q_high = q_max[pair];
            if q_low <= target && target <= q_high {
                let row = &mut rows[pair * ns..(pair + 1) * ns];
                let w = if q_high > q_low { (target - q_low) / (q_high - q_low) } else { 0.0 };
                for (r, &l) in row.iter_mut().zip(&low) {
                    *r = l + w * (*r - l);
                }
                policy[s] = a;
                placed = true;
                break;
            }
            let miss = if target < q_low { q_low - target } else { target - q_high };
            if closest.is_none_or(|(m, _)| miss < m) {
                closest = Some((miss, a));
            }
        }
        if !placed {
            unattainable = true;
            let (_, a) = closest.expect("at least one action");
            let pair = s * na + a;
            shift_mass(set.center_row(s, a), set.radius(s, a), &asc, &mut low);
            if rewards[pair] + dot(&low, &v) > target {
                rows[pair * ns..(pair + 1) * ns].copy_from_slice(&low);
            }
            policy[s] = a;
        }
    }

    let chosen_model = Mdp::new(ns, na, rewards.to_vec(), rows)?;
    let policy = Policy::new(policy);
    let (gain, bias, extra) = match evaluate_policy_from(&chosen_model, &policy, tol, DEFAULT_THETA, Some(&v)) {
        Ok(gb) => (gb.gain, gb.bias, gb.iterations),
        Err(_) => (rvi.gain, v.clone(), 0),
    };
    let residual = policy_residual(&chosen_model, &policy, gain, &bias)?;
    let span = span(&bias);
    let cap_violated = unattainable || cap.is_some_and(|h| span > h + tol);
    Ok((
        PlanResult {
            chosen_model,
            policy,
            gain,
            bias,
            span,
            objective: gain,
            residual,
            span_cap: cap,
            cap_violated,
            iterations: rvi.iterations + extra,
        },
        v,
    ))
}

/// Extended value iteration: the most optimistic gain over the set and a
/// policy attaining it.
pub fn evi(set: &ConfidenceSet, rewards: &[f64], tol: f64) -> Result<PlanResult> {
    plan_with_cap(set, rewards, None, tol, None).map(|(p, _)| p)
}

/// Optimistic planning restricted to bias span at most `h`.
///
/// `h = f64::INFINITY` reproduces [`evi`]. If the cap cannot be met by any
/// row in the set the result is still returned, with `cap_violated` set.
pub fn constrained_plan(set: &ConfidenceSet, rewards: &[f64], h: f64, tol: f64) -> Result<PlanResult> {
    if !(h >= 0.0) {
        return Err(Error::InvalidParameter { name: "H", value: h });
    }
    plan_with_cap(set, rewards, Some(h), tol, None).map(|(p, _)| p)
}

/// Constrained plans over a geometric grid of span caps, reusable for any
/// regularization weight on the same set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SpanGrid {
    /// Ascending caps: `0`, then `tol * 2^i` up to the grid top, then infinity.
    pub caps: Vec<f64>,
    pub plans: Vec<PlanResult>,
    pub tol: f64,
}

/// Upper end of the finite grid: `S / (smallest positive radius)`, capped at
/// `2 S max(t, 1)`.
pub fn grid_top(set: &ConfidenceSet) -> f64 {
    let ns = set.num_states() as f64;
    let ceiling = 2.0 * ns * set.built_at().max(1) as f64;
    let smallest = set.radii().iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        (ns / smallest).min(ceiling)
    } else {
        ceiling
    }
}

impl SpanGrid {
    pub fn build(set: &ConfidenceSet, rewards: &[f64], tol: f64) -> Result<Self> {
        check_inputs(set, rewards, tol)?;
        let top = grid_top(set);
        let mut caps = vec![0.0];
        let mut h = tol;
        loop {
            caps.push(h);
            if h >= top {
                break;
            }
            h *= 2.0;
        }
        caps.push(f64::INFINITY);
        let mut plans = Vec::with_capacity(caps.len());
        let mut warm: Option<Vec<f64>> = None;
        for &cap in &caps {
            let (plan, v) = plan_with_cap(set, rewards, Some(cap), tol, warm.as_deref())?;
            plans.push(plan);
            warm = Some(v);
        }
        Ok(Self { caps, plans, tol })
    }

    /// Plan maximizing `gain - c * span`; ties go to the smaller cap.
    /// `c = 0` returns the unconstrained plan.
    pub fn select(&self, c: f64) -> PlanResult {
        let last = self.plans.len() - 1;
        let mut pick = last;
        if c > 0.0 {
            let objective = |p: &PlanResult| p.gain - c * p.span;
            let mut best = f64::NEG_INFINITY;
            for (i, plan) in self.plans.iter().enumerate() {
                let obj = objective(plan);
                if obj > best + 1e-12 * (1.0 + best.abs()) || best == f64::NEG_INFINITY {
                    best = obj;
                    pick = i;
                }
            }
        }
        let mut out = self.plans[pick].clone();
        out.objective = out.gain - c * out.span;
        out
    }

    /// Discretization allowance when comparing against a model of bias span
    /// `reference_span`: `c` times the gap to the next cap, plus tolerance terms.
    pub fn slack(&self, c: f64, reference_span: f64) -> f64 {
        let cap = self
            .caps
            .iter()
            .copied()
            .find(|&h| h >= reference_span)
            .unwrap_or(f64::INFINITY);
        let gap = if cap.is_finite() { cap - reference_span } else { 0.0 };
        c * gap + (1.0 + c) * self.tol
    }
}

/// Maximizes `gain - c * span` over the grid of span-capped plans.
pub fn regularized_plan(set: &ConfidenceSet, rewards: &[f64], c: f64, tol: f64) -> Result<PlanResult> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter { name: "C", value: c });
    }
    if c == 0.0 {
        let mut plan = evi(set, rewards, tol)?;
        plan.objective = plan.gain;
        return Ok(plan);
    }
    Ok(SpanGrid::build(set, rewards, tol)?.select(c))
}
