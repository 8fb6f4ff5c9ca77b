//! Visit counts, empirical transitions and L1 confidence sets.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Mdp, Result};

/// Largest L1 distance between two probability vectors; radii are clipped here.
pub const MAX_RADIUS: f64 = 2.0;
/// Slack allowed in membership tests.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-12;

/// Cumulative state-action(-state) visit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VisitCounts {
    num_states: usize,
    num_actions: usize,
    n_sa: Vec<u64>,
    n_sas: Vec<u64>,
    t: u64,
}

impl VisitCounts {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            n_sa: vec![0; num_states * num_actions],
            n_sas: vec![0; num_states * num_actions * num_states],
            t: 0,
        }
    }

    /// Records the transition `(s, a) -> next`.
    pub fn update(&mut self, s: usize, a: usize, next: usize) {
        let pair = s * self.num_actions + a;
        self.n_sa[pair] += 1;
        self.n_sas[pair * self.num_states + next] += 1;
        self.t += 1;
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn n_sa(&self, s: usize, a: usize) -> u64 {
        self.n_sa[s * self.num_actions + a]
    }

    pub fn n_sas(&self, s: usize, a: usize, next: usize) -> u64 {
        self.n_sas[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Pair counts, indexed `s * A + a`.
    pub fn pair_counts(&self) -> &[u64] {
        &self.n_sa
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Checks both bookkeeping identities.
    pub fn is_consistent(&self) -> bool {
        let rows_ok = self.n_sa.iter().enumerate().all(|(pair, &n)| {
            let start = pair * self.num_states;
            self.n_sas[start..start + self.num_states].iter().sum::<u64>() == n
        });
        rows_ok && self.n_sa.iter().sum::<u64>() == self.t
    }

    /// Empirical transitions `N(s, a, s') / max(N(s, a), 1)`. Rows of
    /// unvisited pairs are all zero.
    pub fn empirical_model(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_sas.len()];
        for (pair, &n) in self.n_sa.iter().enumerate() {
            let denom = n.max(1) as f64;
            let start = pair * self.num_states;
            for next in 0..self.num_states {
                out[start + next] = self.n_sas[start + next] as f64 / denom;
            }
        }
        out
    }

    /// Empirical transitions with unvisited rows replaced by the uniform
    /// distribution, so every row is a probability vector.
    pub fn center(&self) -> Vec<f64> {
        let mut out = self.empirical_model();
        let uniform = 1.0 / self.num_states as f64;
        for (pair, &n) in self.n_sa.iter().enumerate() {
            if n == 0 {
                let start = pair * self.num_states;
                out[start..start + self.num_states].fill(uniform);
            }
        }
        out
    }
}

/// `sqrt(12 S log(2 A t / delta) / max(n, 1))` before clipping.
pub fn radius_unclipped(num_states: usize, num_actions: usize, delta: f64, at_time: u64, n: u64) -> f64 {
    let log_term = libm::log(2.0 * num_actions as f64 * at_time as f64 / delta);
    libm::sqrt(12.0 * num_states as f64 * log_term / n.max(1) as f64)
}

/// Per-pair L1 radii at time `at_time`, clipped to [`MAX_RADIUS`].
pub fn radius(counts: &VisitCounts, delta: f64, at_time: u64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if at_time == 0 {
        return Err(Error::InvalidParameter { name: "at_time", value: 0.0 });
    }
    Ok(counts
        .pair_counts()
        .iter()
        .map(|&n| radius_unclipped(counts.num_states, counts.num_actions, delta, at_time, n).min(MAX_RADIUS))
        .collect())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "delta", value: delta })
    }
}

/// All transition models whose rows lie within the per-pair L1 radius of the
/// empirical center.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConfidenceSet {
    num_states: usize,
    num_actions: usize,
    center: Vec<f64>,
    radius: Vec<f64>,
    delta: f64,
    built_at: u64,
}

impl ConfidenceSet {
    /// The set at the current count time. The log term uses `max(t, 1)` so
    /// that the set built before the first step is the whole simplex.
    pub fn from_counts(counts: &VisitCounts, delta: f64) -> Result<Self> {
        let at_time = counts.t().max(1);
        Ok(Self {
            num_states: counts.num_states,
            num_actions: counts.num_actions,
            center: counts.center(),
            radius: radius(counts, delta, at_time)?,
            delta,
            built_at: counts.t(),
        })
    }

    /// A set with explicit center rows and radii.
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        center: Vec<f64>,
        radius: Vec<f64>,
        delta: f64,
        built_at: u64,
    ) -> Result<Self> {
        let pairs = num_states * num_actions;
        if center.len() != pairs * num_states {
            return Err(Error::DimensionMismatch { expected: pairs * num_states, found: center.len() });
        }
        if radius.len() != pairs {
            return Err(Error::DimensionMismatch { expected: pairs, found: radius.len() });
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let pair = s * num_actions + a;
                crate::mdp::check_row(&center[pair * num_states..(pair + 1) * num_states], s, a)?;
                if !(radius[pair] >= 0.0) {
                    return Err(Error::InvalidParameter { name: "radius", value: radius[pair] });
                }
            }
        }
        Ok(Self { num_states, num_actions, center, radius, delta, built_at })
    }

    /// The singleton set `{m}`.
    pub fn exact(m: &Mdp) -> Self {
        Self {
            num_states: m.num_states(),
            num_actions: m.num_actions(),
            center: m.transitions().to_vec(),
            radius: vec![0.0; m.num_states() * m.num_actions()],
            delta: 0.5,
            built_at: 0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn center_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.center[start..start + self.num_states]
    }

    pub fn radius(&self, s: usize, a: usize) -> f64 {
        self.radius[s * self.num_actions + a]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn built_at(&self) -> u64 {
        self.built_at
    }

    /// The center rows as an MDP with the given rewards.
    pub fn center_mdp(&self, rewards: &[f64]) -> Result<Mdp> {
        Mdp::new(self.num_states, self.num_actions, rewards.to_vec(), self.center.clone())
    }

    /// Whether every row of `m` is within its radius of the center.
    pub fn contains(&self, m: &Mdp) -> Result<bool> {
        if m.num_states() != self.num_states {
            return Err(Error::DimensionMismatch { expected: self.num_states, found: m.num_states() });
        }
        if m.num_actions() != self.num_actions {
            return Err(Error::DimensionMismatch { expected: self.num_actions, found: m.num_actions() });
        }
        Ok((0..self.num_states).all(|s| {
            (0..self.num_actions).all(|a| self.contains_row(s, a, m.row(s, a)))
        }))
    }

    pub fn contains_row(&self, s: usize, a: usize, row: &[f64]) -> bool {
        l1_distance(row, self.center_row(s, a)) <= self.radius(s, a) + MEMBERSHIP_TOLERANCE
    }
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_two_state, make_random_wc};
    use crate::mdp::simulate_step;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_update() {
        let mut c = VisitCounts::new(3, 2);
        c.update(0, 1, 2);
        assert_eq!((c.n_sa(0, 1), c.n_sas(0, 1, 2), c.t()), (1, 1, 1));
        assert!(c.is_consistent());
    }

    #[test]
    fn replay_matches_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj: Vec<(usize, usize, usize)> =
            (0..100).map(|_| (rng.gen_range(0..3), rng.gen_range(0..2), rng.gen_range(0..3))).collect();
        let mut c = VisitCounts::new(3, 2);
        for &(s, a, n) in &traj {
            c.update(s, a, n);
            assert!(c.is_consistent());
        }
        assert_eq!(c.t(), 100);
        for s in 0..3 {
            for a in 0..2 {
                for n in 0..3 {
                    let hist = traj.iter().filter(|&&x| x == (s, a, n)).count() as u64;
                    assert_eq!(c.n_sas(s, a, n), hist);
                }
            }
        }
    }

    #[test]
    fn empirical_rows() {
        let mut c = VisitCounts::new(3, 1);
        c.update(0, 0, 0);
        c.update(0, 0, 0);
        c.update(0, 0, 1);
        let p = c.empirical_model();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15 && p[2] == 0.0);
        assert_eq!(&p[3..6], &[0.0, 0.0, 0.0]);
        let center = c.center();
        assert_eq!(&center[3..6], &[1.0 / 3.0; 3]);
    }

    #[test]
    fn empirical_concentrates() {
        let m = make_random_wc(4, 1, 3, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut c = VisitCounts::new(4, 1);
        for _ in 0..100_000 {
            let (next, _) = simulate_step(&m, 2, 0, &mut rng);
            c.update(2, 0, next);
        }
        let p = c.empirical_model();
        assert!(l1_distance(&p[8..12], m.row(2, 0)) <= 0.02);
    }

    #[test]
    fn radius_values() {
        let c = VisitCounts::new(2, 2);
        let raw = radius_unclipped(2, 2, 0.1, 1, 0);
        assert!((raw - libm::sqrt(24.0 * libm::log(40.0))).abs() < 1e-12);
        assert!((raw - 9.409).abs() < 1e-3);
        assert_eq!(radius(&c, 0.1, 1).unwrap(), vec![2.0; 4]);
        let big = radius_unclipped(6, 2, 0.05, 10_000, 500);
        // log(2 * 2 * 10^4 / 0.05) = log(8e5)
        assert!((big - libm::sqrt(72.0 * libm::log(8e5) / 500.0)).abs() < 1e-12);
        assert!((big - 1.3991).abs() < 1e-3);
        let quarter = radius_unclipped(6, 2, 0.05, 10_000, 2000);
        assert!((quarter - big / 2.0).abs() < 1e-12);
        assert!(radius(&c, 1.5, 1).is_err());
        assert!(radius(&c, 0.1, 0).is_err());
    }

    #[test]
    fn radius_monotonicity() {
        let base = radius_unclipped(3, 2, 0.1, 100, 10);
        assert!(radius_unclipped(3, 2, 0.1, 100, 11) <= base);
        assert!(radius_unclipped(3, 2, 0.1, 101, 10) >= base);
        assert!(radius_unclipped(4, 2, 0.1, 100, 10) >= base);
        assert!(radius_unclipped(3, 3, 0.1, 100, 10) >= base);
        assert!(radius_unclipped(3, 2, 0.05, 100, 10) >= base);
    }

    #[test]
    fn membership() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let set = ConfidenceSet::from_parts(2, 2, m.transitions().to_vec(), vec![0.01; 4], 0.1, 10).unwrap();
        assert!(set.contains(&m).unwrap());
        let center = vec![1.0, 0.0];
        let single = ConfidenceSet::from_parts(2, 1, [center.clone(), center].concat(), vec![0.1; 2], 0.1, 1).unwrap();
        assert!(!single.contains_row(0, 0, &[0.9, 0.1]));
        assert!(single.contains_row(0, 0, &[0.95, 0.05]));
        let wrong = make_random_wc(3, 2, 1, 0.5).unwrap();
        assert!(set.contains(&wrong).is_err());
    }

    #[test]
    fn fresh_set_is_whole_simplex() {
        let c = VisitCounts::new(3, 2);
        let set = ConfidenceSet::from_counts(&c, 0.05).unwrap();
        let m = make_random_wc(3, 2, 9, 0.5).unwrap();
        assert!(set.contains(&m).unwrap());
        assert!(set.radii().iter().all(|&r| r == MAX_RADIUS));
    }
}
