//! System parameters and the two-dimensional (U, Q) Markov chain.
//!
//! A lot has `K` spaces, each with a charger. EVs arrive as a Poisson
//! stream with rate `lambda`, park for an exponential time with rate `mu`
//! and need an exponential amount of charging work with rate `nu` at full
//! power. The lot delivers total power `min(U, M)` to its `U` uncharged
//! EVs, shared equally.
//!
//! States are ordered lexicographically in `(q, u)`, so all states with the
//! same occupancy `q` form one contiguous block starting at `q(q+1)/2`.

use serde::Serialize;

use crate::error::{Error, Result};

/// One system instance `(lambda, mu, nu, K, M)`.
///
/// `m` is real-valued; the chain only uses it through `min(u, M)`.
/// `f64::INFINITY` is accepted for `m` where the spaces are unbounded as
/// well (see [`crate::exact::erlang_a_variant`]), but not by [`ModelParams::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub k: usize,
    pub m: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, mu: f64, nu: f64, k: usize, m: f64) -> Result<Self> {
        let p = Self { lambda, mu, nu, k, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("nu", self.nu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("K must be at least 1".into()));
        }
        if !(self.m > 0.0 && self.m <= self.k as f64) {
            return Err(Error::InvalidParams(format!("M must satisfy 0 < M <= K, got M={} K={}", self.m, self.k)));
        }
        Ok(())
    }

    /// Offered load `lambda / mu` of the underlying loss system.
    pub fn offered_load(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn with_m(&self, m: f64) -> Self {
        Self { m, ..*self }
    }

    pub fn state_count(&self) -> usize {
        state_count(self.k)
    }
}

/// A point of the chain: `u` uncharged EVs out of `q` present.
///
/// The charged count `q - u` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateUQ {
    pub u: usize,
    pub q: usize,
}

impl StateUQ {
    pub const fn new(u: usize, q: usize) -> Self {
        Self { u, q }
    }

    pub fn charged(&self) -> usize {
        self.q - self.u
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.u <= self.q && self.q <= k
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.is_valid(k) {
            Ok(())
        } else {
            Err(Error::InvalidState { u: self.u, q: self.q, k })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub target: StateUQ,
    pub rate: f64,
}

/// Total charging power `min(u, M)` delivered with `u` uncharged EVs.
pub fn power(u: usize, m: f64) -> f64 {
    (u as f64).min(m)
}

pub fn state_count(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// All feasible states for `K` spaces, in `(q, u)` lexicographic order.
pub fn enumerate_states(k: usize) -> Result<Vec<StateUQ>> {
    if k == 0 {
        return Err(Error::InvalidParams("K must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(state_count(k));
    for q in 0..=k {
        for u in 0..=q {
            out.push(StateUQ::new(u, q));
        }
    }
    Ok(out)
}

/// Position of `s` in [`enumerate_states`]. Assumes `s` is feasible.
#[inline]
pub fn state_index(s: StateUQ) -> usize {
    s.q * (s.q + 1) / 2 + s.u
}

/// Outgoing transitions from `s`, zero-rate moves omitted.
///
/// Order: arrival, uncharged departure, charged departure, charge completion.
pub fn transitions(p: &ModelParams, s: StateUQ) -> Result<Vec<Transition>> {
    s.check(p.k)?;
    let mut out = Vec::with_capacity(4);
    for_each_transition(p, s, |target, rate| out.push(Transition { target, rate }));
    Ok(out)
}

/// Allocation-free variant of [`transitions`] for hot loops. `s` must be feasible.
#[inline]
pub(crate) fn for_each_transition(p: &ModelParams, s: StateUQ, mut f: impl FnMut(StateUQ, f64)) {
    let StateUQ { u, q } = s;
    if q < p.k {
        f(StateUQ::new(u + 1, q + 1), p.lambda);
    }
    if u > 0 {
        f(StateUQ::new(u - 1, q - 1), p.mu * u as f64);
    }
    if q > u {
        f(StateUQ::new(u, q - 1), p.mu * (q - u) as f64);
    }
    if u > 0 {
        let r = p.nu * power(u, p.m);
        if r > 0.0 {
            f(StateUQ::new(u - 1, q), r);
        }
    }
}

/// Total outflow rate `lambda 1{q<K} + mu q + nu min(u, M)`.
#[inline]
pub fn outflow_rate(p: &ModelParams, s: StateUQ) -> f64 {
    let arrivals = if s.q < p.k { p.lambda } else { 0.0 };
    arrivals + p.mu * s.q as f64 + p.nu * power(s.u, p.m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn params(lambda: f64, mu: f64, nu: f64, k: usize, m: f64) -> ModelParams {
        ModelParams::new(lambda, mu, nu, k, m).unwrap()
    }

    #[test]
    fn power_is_min_of_uncharged_and_capacity() {
        assert_eq!(power(0, 5.0), 0.0);
        assert_eq!(power(3, 5.0), 3.0);
        assert_eq!(power(8, 5.0), 5.0);
        assert_eq!(power(3, 2.5), 2.5);
    }

    #[test]
    fn enumeration_small_cases() {
        let s = enumerate_states(1).unwrap();
        assert_eq!(s, vec![StateUQ::new(0, 0), StateUQ::new(0, 1), StateUQ::new(1, 1)]);
        assert_eq!(enumerate_states(2).unwrap().len(), 6);
        assert!(enumerate_states(0).is_err());
    }

    #[test]
    fn enumeration_length_and_bijection_k50() {
        let states = enumerate_states(50).unwrap();
        // independent count by brute force over the full square
        let brute = (0..=50usize).flat_map(|q| (0..=50usize).map(move |u| (u, q))).filter(|(u, q)| u <= q).count();
        assert_eq!(states.len(), brute);
        assert_eq!(states.len(), 1326);
        for (i, s) in states.iter().enumerate() {
            assert_eq!(state_index(*s), i);
        }
    }

    #[test]
    fn transitions_blocked_at_capacity() {
        let p = params(1.0, 1.0, 1.0, 1, 1.0);
        let t = transitions(&p, StateUQ::new(1, 1)).unwrap();
        assert_eq!(
            t,
            vec![
                Transition { target: StateUQ::new(0, 0), rate: 1.0 },
                Transition { target: StateUQ::new(0, 1), rate: 1.0 },
            ]
        );
    }

    #[test]
    fn transitions_interior_state() {
        let p = params(2.0, 1.0, 3.0, 5, 2.0);
        let t = transitions(&p, StateUQ::new(3, 4)).unwrap();
        let expect = [((4, 5), 2.0), ((2, 3), 3.0), ((3, 3), 1.0), ((2, 4), 6.0)];
        assert_eq!(t.len(), 4);
        for (tr, ((u, q), r)) in t.iter().zip(expect) {
            assert_eq!(tr.target, StateUQ::new(u, q));
            assert_eq!(tr.rate, r);
        }
    }

    #[test]
    fn transitions_from_empty_only_arrivals() {
        let p = params(0.7, 1.3, 2.0, 4, 1.5);
        let t = transitions(&p, StateUQ::new(0, 0)).unwrap();
        assert_eq!(t, vec![Transition { target: StateUQ::new(1, 1), rate: 0.7 }]);
    }

    #[test]
    fn invalid_state_rejected() {
        let p = params(1.0, 1.0, 1.0, 2, 1.0);
        assert!(transitions(&p, StateUQ::new(2, 1)).is_err());
        assert!(transitions(&p, StateUQ::new(0, 3)).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 2, 3.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 2, 1.0).is_err());
        assert!(ModelParams::new(-1.0, 1.0, 1.0, 2, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 2, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 2, 1.5).is_ok());
    }

    #[test]
    fn outflow_matches_sum_and_region_closed() {
        let p = params(2.5, 0.7, 1.9, 6, 2.5);
        for s in enumerate_states(p.k).unwrap() {
            let t = transitions(&p, s).unwrap();
            let total: f64 = t.iter().map(|t| t.rate).sum();
            assert!((total - outflow_rate(&p, s)).abs() < 1e-12);
            for tr in t {
                assert!(tr.rate > 0.0 && tr.rate.is_finite());
                assert!(tr.target.is_valid(p.k));
            }
        }
    }

    fn reachable(p: &ModelParams, from: StateUQ) -> HashSet<StateUQ> {
        let mut seen = HashSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            for t in transitions(p, s).unwrap() {
                if seen.insert(t.target) {
                    queue.push_back(t.target);
                }
            }
        }
        seen
    }

    #[test]
    fn chain_is_irreducible_for_small_k() {
        for k in 1..=6 {
            let p = params(1.1, 0.9, 1.4, k, (k as f64) * 0.4 + 0.1);
            let origin = StateUQ::new(0, 0);
            assert_eq!(reachable(&p, origin).len(), state_count(k));
            for s in enumerate_states(k).unwrap() {
                assert!(reachable(&p, s).contains(&origin));
            }
        }
    }
}
