//! Benchmark MDP families.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Mdp, Result};

/// Two states, two actions. State 0 keeps the agent in place under action 0
/// and leaks to state 1 with probability `eps` under action 1; state 1 is
/// absorbing. Rewards are `1 - alpha` in state 0 and `1` in state 1.
///
/// Optimal gain is 1 and the bias is `(-alpha / eps, 0)`, while the
/// diameter is infinite.
pub fn make_two_state(alpha: f64, eps: f64) -> Result<Mdp> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter { name: "alpha", value: alpha });
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter { name: "eps", value: eps });
    }
    let reward = vec![1.0 - alpha, 1.0 - alpha, 1.0, 1.0];
    let transition = vec![
        1.0, 0.0, // (0, 0)
        1.0 - eps, eps, // (0, 1)
        0.0, 1.0, // (1, 0)
        0.0, 1.0, // (1, 1)
    ];
    Mdp::new(2, 2, reward, transition)
}

/// Parameters of the lower-bound family: `S / 2` two-state copies wired
/// together by a navigation tree, one copy hiding a slightly better action.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LowerBoundParams {
    pub num_states: usize,
    pub num_actions: usize,
    /// Target one-way diameter; `alpha = 1 / d_ow`.
    pub d_ow: f64,
    /// Horizon used to size the advantage of the good action.
    pub horizon: u64,
    pub good_copy: usize,
    pub a_star: usize,
}

impl LowerBoundParams {
    /// Draws the good copy and the good action from `seed`.
    pub fn new(num_states: usize, num_actions: usize, d_ow: f64, horizon: u64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let copies = (num_states / 2).max(1);
        let params = Self {
            num_states,
            num_actions,
            d_ow,
            horizon,
            good_copy: rng.gen_range(0..copies),
            a_star: rng.gen_range(0..num_actions.max(1)),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.d_ow
    }

    /// Leak probability out of the rewarding state, `alpha^2`.
    pub fn delta(&self) -> f64 {
        let a = self.alpha();
        a * a
    }

    /// Advantage of the good action, `delta * sqrt(S A / T)`.
    pub fn epsilon(&self) -> f64 {
        self.delta() * libm::sqrt((self.num_states * self.num_actions) as f64 / self.horizon as f64)
    }

    /// `alpha / (alpha + delta - eps) - alpha / (alpha + delta)`: the gain
    /// difference inside the good copy between using and avoiding `a_star`.
    pub fn gain_gap(&self) -> f64 {
        let (a, d, e) = (self.alpha(), self.delta(), self.epsilon());
        a / (a + d - e) - a / (a + d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 || !self.num_states.is_multiple_of(2) {
            return Err(Error::InvalidParameter { name: "num_states", value: self.num_states as f64 });
        }
        if self.num_actions == 0 {
            return Err(Error::InvalidParameter { name: "num_actions", value: 0.0 });
        }
        if !(self.d_ow > 1.0) || !self.d_ow.is_finite() {
            return Err(Error::InvalidParameter { name: "d_ow", value: self.d_ow });
        }
        if self.horizon <= (self.num_states * self.num_actions) as u64 {
            return Err(Error::InvalidParameter { name: "horizon", value: self.horizon as f64 });
        }
        if self.good_copy >= self.num_states / 2 {
            return Err(Error::IndexOutOfRange {
                what: "good_copy",
                index: self.good_copy,
                bound: self.num_states / 2,
            });
        }
        if self.a_star >= self.num_actions {
            return Err(Error::IndexOutOfRange { what: "a_star", index: self.a_star, bound: self.num_actions });
        }
        Ok(())
    }
}

/// Builds the lower-bound MDP described by `p`.
pub fn make_lower_bound(p: &LowerBoundParams) -> Result<Mdp> {
    p.validate()?;
    lower_bound_from_parts(
        p.num_states,
        p.num_actions,
        p.alpha(),
        p.delta(),
        p.epsilon(),
        p.good_copy,
        p.a_star,
    )
}

/// Lower-bound construction with explicit `alpha`, `delta`, `eps`.
///
/// Copy `c` owns state `2c` (the entry state, reward 0) and `2c + 1` (the
/// rewarding state). Actions `0..A` act inside the copy. Actions `A..2A` are
/// deterministic navigation moves with reward 0: on an entry state,
/// navigation action `i` jumps to the entry state of child `i` in a complete
/// `A`-ary tree over copies, or back to the root when that child does not
/// exist; on a rewarding state it is a self-loop.
pub fn lower_bound_from_parts(
    num_states: usize,
    num_actions: usize,
    alpha: f64,
    delta: f64,
    eps: f64,
    good_copy: usize,
    a_star: usize,
) -> Result<Mdp> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter { name: "alpha", value: alpha });
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter { name: "delta", value: delta });
    }
    if !(eps >= 0.0 && eps <= delta) {
        return Err(Error::InvalidParameter { name: "eps", value: eps });
    }
    let copies = num_states / 2;
    let total_actions = 2 * num_actions;
    let mut reward = vec![0.0; num_states * total_actions];
    let mut transition = vec![0.0; num_states * total_actions * num_states];
    let mut set = |s: usize, a: usize, next: usize, p: f64| {
        transition[(s * total_actions + a) * num_states + next] += p;
    };
    for c in 0..copies {
        let entry = 2 * c;
        let good = entry + 1;
        for a in 0..num_actions {
            set(entry, a, entry, 1.0 - alpha);
            set(entry, a, good, alpha);
            let leak = if c == good_copy && a == a_star { delta - eps } else { delta };
            set(good, a, entry, leak);
            set(good, a, good, 1.0 - leak);
            reward[good * total_actions + a] = 1.0;
        }
        for i in 0..num_actions {
            let child = c * num_actions + 1 + i;
            let dest = if child < copies { 2 * child } else { 0 };
            set(entry, num_actions + i, dest, 1.0);
            set(good, num_actions + i, good, 1.0);
        }
    }
    Mdp::new(num_states, total_actions, reward, transition)
}

/// Entry state of the copy a navigation action leads to, if `a` is a
/// navigation action taken in an entry state.
pub fn navigation_target(num_states: usize, num_actions: usize, s: usize, a: usize) -> Option<usize> {
    if !s.is_multiple_of(2) || a < num_actions || a >= 2 * num_actions {
        return None;
    }
    let copies = num_states / 2;
    let child = (s / 2) * num_actions + 1 + (a - num_actions);
    Some(if child < copies { 2 * child } else { 0 })
}

/// Seeded random communicating MDP.
///
/// A random Hamiltonian cycle over the states receives probability
/// `connectivity` in every row (the successor is the same for every action of
/// a state); the remaining mass is spread by normalized uniform weights.
/// Rewards are uniform on `[0, 1)`.
pub fn make_random_wc(num_states: usize, num_actions: usize, seed: u64, connectivity: f64) -> Result<Mdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidParameter { name: "num_states/num_actions", value: 0.0 });
    }
    if !(connectivity > 0.0 && connectivity <= 1.0) {
        return Err(Error::InvalidParameter { name: "connectivity", value: connectivity });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..num_states).collect();
    order.shuffle(&mut rng);
    let mut successor = vec![0; num_states];
    for i in 0..num_states {
        successor[order[i]] = order[(i + 1) % num_states];
    }
    let mut reward = Vec::with_capacity(num_states * num_actions);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    let mut weights = vec![0.0; num_states];
    for s in 0..num_states {
        for _ in 0..num_actions {
            reward.push(rng.gen::<f64>());
            for w in weights.iter_mut() {
                *w = rng.gen::<f64>() + 1e-3;
            }
            let total: f64 = weights.iter().sum();
            for (next, w) in weights.iter().enumerate() {
                let cycle = if next == successor[s] { connectivity } else { 0.0 };
                transition.push((1.0 - connectivity) * w / total + cycle);
            }
        }
    }
    Mdp::new(num_states, num_actions, reward, transition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diameters::{diameter, one_way_diameter};
    use crate::mdp::{policy_gain, solve_gain_bias, Policy, DEFAULT_THETA};

    #[test]
    fn two_state_exact_values() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let gb = solve_gain_bias(&m, 1e-10, DEFAULT_THETA).unwrap();
        assert!((gb.gain - 1.0).abs() < 1e-8);
        assert!((gb.span() - 5.0).abs() < 1e-6);
        let (dow, sbar) = one_way_diameter(&m).unwrap();
        assert!((dow - 10.0).abs() < 1e-6);
        assert_eq!(sbar, 1);
        assert_eq!(diameter(&m), f64::INFINITY);
    }

    #[test]
    fn two_state_eps_one_and_alpha_equals_eps() {
        let m = make_two_state(0.3, 1.0).unwrap();
        let (dow, _) = one_way_diameter(&m).unwrap();
        assert!((dow - 1.0).abs() < 1e-9);
        for scale in [0.02, 0.2, 0.9] {
            let m = make_two_state(scale, scale).unwrap();
            let gb = solve_gain_bias(&m, 1e-11, DEFAULT_THETA).unwrap();
            assert!((gb.span() - 1.0).abs() < 1e-6, "scale {scale}: {}", gb.span());
        }
    }

    #[test]
    fn lower_bound_gap_closed_form() {
        let p = LowerBoundParams { num_states: 4, num_actions: 2, d_ow: 10.0, horizon: 10_000, good_copy: 1, a_star: 0 };
        let (a, d, e) = (p.alpha(), p.delta(), p.epsilon());
        assert!((a - 0.1).abs() < 1e-15 && (d - 0.01).abs() < 1e-15);
        assert!((e - 0.01 * libm::sqrt(8.0 / 1e4)).abs() < 1e-15);
        let gap = p.gain_gap();
        let closed = 0.1 / (0.11 - e) - 0.1 / 0.11;
        assert!((gap - closed).abs() < 1e-15);
        assert!((gap - 2.3436e-3).abs() < 1e-6, "gap {gap}");
        assert!(gap > e / (4.0 * a));

        let m = make_lower_bound(&p).unwrap();
        // In-copy policies: entry state plays action 0, rewarding state
        // plays a_star (good) or the other in-copy action (bad).
        let with = Policy::new(vec![0, 0, 0, 0]);
        let without = Policy::new(vec![0, 1, 0, 1]);
        let g_with = policy_gain(&m, &with).unwrap();
        let g_without = policy_gain(&m, &without).unwrap();
        let measured = g_with[2] - g_without[2];
        assert!((measured - gap).abs() < 1e-9, "measured {measured} vs {gap}");
        // The bad copy is unaffected.
        assert!((g_with[0] - g_without[0]).abs() < 1e-10);
    }

    #[test]
    fn lower_bound_zero_advantage_is_symmetric() {
        let m = lower_bound_from_parts(4, 3, 0.1, 0.01, 0.0, 0, 1).unwrap();
        for s in [1, 3] {
            for a in 1..3 {
                assert_eq!(m.row(s, a), m.row(s, 0));
            }
        }
    }

    #[test]
    fn lower_bound_single_copy_geometry() {
        let p = LowerBoundParams { num_states: 2, num_actions: 2, d_ow: 10.0, horizon: 10_000, good_copy: 0, a_star: 1 };
        let m = make_lower_bound(&p).unwrap();
        let (dow, sbar) = one_way_diameter(&m).unwrap();
        assert_eq!(sbar, 1);
        assert!((dow - 10.0).abs() / 10.0 < 0.1);
        let d = diameter(&m);
        assert!((d - 100.0).abs() / 100.0 < 0.1, "d {d}");
    }

    #[test]
    fn lower_bound_navigation_tree() {
        for (s, a) in [(14usize, 2usize), (30, 3), (8, 1)] {
            let p = LowerBoundParams::new(s, a, 5.0, 10_000, 3).unwrap();
            let m = make_lower_bound(&p).unwrap();
            let copies = s / 2;
            // breadth-first search from the root over navigation actions only
            let mut depth = vec![usize::MAX; copies];
            depth[0] = 0;
            let mut frontier = vec![0usize];
            while let Some(c) = frontier.pop() {
                for nav in a..2 * a {
                    let next = navigation_target(s, a, 2 * c, nav).unwrap() / 2;
                    assert_eq!(m.row(2 * c, nav)[2 * next], 1.0);
                    assert_eq!(m.reward(2 * c, nav), 0.0);
                    if depth[next] == usize::MAX {
                        depth[next] = depth[c] + 1;
                        frontier.push(next);
                    }
                }
                for nav in a..2 * a {
                    assert_eq!(m.row(2 * c + 1, nav)[2 * c + 1], 1.0);
                }
            }
            let max_depth = *depth.iter().max().unwrap();
            let bound = if a == 1 {
                copies - 1
            } else {
                libm::ceil(libm::log(copies as f64) / libm::log(a as f64)) as usize
            };
            assert!(max_depth <= bound, "depth {max_depth} > {bound}");
            assert!(diameter(&m).is_finite());
        }
    }

    #[test]
    fn lower_bound_rejects_bad_params() {
        assert!(LowerBoundParams::new(3, 2, 10.0, 1000, 0).is_err());
        assert!(LowerBoundParams::new(4, 2, 1.0, 1000, 0).is_err());
        assert!(LowerBoundParams::new(4, 2, 10.0, 8, 0).is_err());
    }

    #[test]
    fn random_wc_cycle_and_determinism() {
        let m = make_random_wc(3, 2, 17, 1.0).unwrap();
        assert!(diameter(&m) <= 2.0 + 1e-9);
        for seed in 0..20 {
            let m = make_random_wc(5, 3, seed, 0.3).unwrap();
            assert!(diameter(&m).is_finite());
            assert_eq!(m, make_random_wc(5, 3, seed, 0.3).unwrap());
        }
        assert_ne!(make_random_wc(4, 2, 1, 0.5).unwrap(), make_random_wc(4, 2, 2, 0.5).unwrap());
    }
}
