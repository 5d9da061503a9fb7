//! Exact stationary analysis of the (U, Q) chain, its two solvable special
//! cases, and the bounds on the fraction of EVs that leave fully charged.
//!
//! Special cases:
//! - `M = K`: charging never congests, so each EV evolves independently of
//!   the others except through blocking. [`joint_km_decomposition`] builds
//!   that law as Erlang-loss occupancy times a binomial split; it is a
//!   reconstruction and is checked against the solver in the tests.
//! - `K = infinity`: `U` is a birth-death process, see [`erlang_a_variant`].

mod solver;

use serde::Serialize;
use statrs::function::factorial::ln_binomial;

pub use solver::{SolveMethod, SolverOptions};

use crate::error::{Error, Result};
use crate::model::{enumerate_states, for_each_transition, outflow_rate, power, state_index, ModelParams, StateUQ};

/// Stationary law of `(U, Q)`, aligned with [`enumerate_states`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    params: ModelParams,
    probs: Vec<f64>,
}

impl StationaryDistribution {
    /// Wraps an externally computed probability vector.
    pub fn from_probs(params: ModelParams, probs: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if probs.len() != params.state_count() {
            return Err(Error::InvalidParams(format!(
                "expected {} probabilities, got {}",
                params.state_count(),
                probs.len()
            )));
        }
        if probs.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParams("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("probabilities sum to {total}")));
        }
        Ok(Self { params, probs })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: StateUQ) -> f64 {
        if s.is_valid(self.params.k) {
            self.probs[state_index(s)]
        } else {
            0.0
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateUQ, f64)> + '_ {
        (0..=self.params.k).flat_map(|q| (0..=q).map(move |u| StateUQ::new(u, q))).zip(self.probs.iter().copied())
    }

    /// Law of the occupancy `Q`.
    pub fn q_marginal(&self) -> Vec<f64> {
        (0..=self.params.k)
            .map(|q| {
                let start = q * (q + 1) / 2;
                self.probs[start..=start + q].iter().sum()
            })
            .collect()
    }

    /// Law of the uncharged count `U`.
    pub fn u_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.params.k + 1];
        for (s, p) in self.iter() {
            out[s.u] += p;
        }
        out
    }

    /// Largest global-balance violation `|inflow - outflow|` over all states.
    pub fn balance_residual(&self) -> f64 {
        let p = &self.params;
        let mut inflow = vec![0.0; self.probs.len()];
        for (s, pr) in self.iter() {
            for_each_transition(p, s, |t, r| inflow[state_index(t)] += pr * r);
        }
        self.iter().zip(inflow).map(|((s, pr), inn)| (inn - pr * outflow_rate(p, s)).abs()).fold(0.0, f64::max)
    }

    /// `E[min(U, M)]`, the mean delivered power.
    pub fn mean_power(&self) -> f64 {
        self.iter().map(|(s, pr)| pr * power(s.u, self.params.m)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerformanceMetrics {
    pub e_u: f64,
    pub e_q: f64,
    pub e_c: f64,
    pub p_block: f64,
    /// Fraction of departing EVs that are fully charged, `E[C] / E[Q]`.
    pub success: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
}

impl BoundsResult {
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        self.lower - slack <= x && x <= self.upper + slack
    }
}

pub fn stationary_distribution(p: &ModelParams) -> Result<StationaryDistribution> {
    stationary_distribution_with(p, &SolverOptions::default())
}

pub fn stationary_distribution_with(p: &ModelParams, opts: &SolverOptions) -> Result<StationaryDistribution> {
    p.validate()?;
    let probs = solver::solve(p, opts)?;
    Ok(StationaryDistribution { params: *p, probs })
}

pub fn metrics(d: &StationaryDistribution) -> Result<PerformanceMetrics> {
    let (mut e_u, mut e_q) = (0.0, 0.0);
    for (s, p) in d.iter() {
        e_u += p * s.u as f64;
        e_q += p * s.q as f64;
    }
    if e_q <= 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let e_c = e_q - e_u;
    let p_block = *d.q_marginal().last().expect("K >= 1");
    Ok(PerformanceMetrics { e_u, e_q, e_c, p_block, success: e_c / e_q })
}

/// Exact success fraction for `p` via the full chain.
pub fn exact_success(p: &ModelParams) -> Result<f64> {
    Ok(metrics(&stationary_distribution(p)?)?.success)
}

/// Erlang B blocking probability for `k` servers and offered load `a`.
pub fn erlang_b(k: usize, a: f64) -> f64 {
    (1..=k).fold(1.0, |b, j| a * b / (j as f64 + a * b))
}

/// Truncated Poisson law of the occupancy in a loss system with `k` servers.
pub fn erlang_loss_law(k: usize, a: f64) -> Vec<f64> {
    let mut logw = Vec::with_capacity(k + 1);
    logw.push(0.0);
    for q in 1..=k {
        logw.push(logw[q - 1] + a.ln() - (q as f64).ln());
    }
    normalize_log_weights(&logw)
}

fn normalize_log_weights(logw: &[f64]) -> Vec<f64> {
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Stationary law of `U` when spaces are unlimited.
#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedUncharged {
    pub probs: Vec<f64>,
    pub mean: f64,
}

/// Law of the uncharged count for `K = infinity`.
///
/// `U` is birth-death with birth rate `lambda` and death rate
/// `nu min(u, M) + mu u`: cars leave mid-charge as well as on completion.
/// The series is cut at the first `u` where the ratio of successive
/// weights is below one half and the geometric bound on the tail's mass
/// and first moment is below `tail_eps` relative to the accumulated mass. `m` may be infinite.
pub fn erlang_a_variant(lambda: f64, mu: f64, nu: f64, m: f64, tail_eps: f64) -> Result<UnboundedUncharged> {
    if !(lambda > 0.0 && mu > 0.0 && nu > 0.0 && m > 0.0) {
        return Err(Error::InvalidParams("rates and M must be positive".into()));
    }
    if !(tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(Error::InvalidParams(format!("tail_eps must lie in (0,1), got {tail_eps}")));
    }
    let mut logw = vec![0.0];
    let mut log_total = 0.0f64;
    let mut u = 0usize;
    loop {
        let next = (u + 1) as f64;
        let ratio = lambda / (nu * next.min(m) + mu * next);
        let lw = logw[u];
        // tail mass beyond u is at most w_u * ratio / (1 - ratio), and its
        // first moment at most (u + 2) times that while ratio < 1/2
        let tail = lw + (ratio / (1.0 - ratio)).ln() + (u as f64 + 2.0).ln() - log_total;
        if ratio < 0.5 && tail < tail_eps.ln() {
            break;
        }
        let l = lw + ratio.ln();
        log_total = log_add(log_total, l);
        logw.push(l);
        u += 1;
    }
    let probs = normalize_log_weights(&logw);
    let mean = probs.iter().enumerate().map(|(u, p)| u as f64 * p).sum();
    Ok(UnboundedUncharged { probs, mean })
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Success fraction of the unlimited-space system `(infinity, M)`.
pub fn lower_bound(p: &ModelParams) -> Result<f64> {
    let eu = erlang_a_variant(p.lambda, p.mu, p.nu, p.m, 1e-12)?.mean;
    let eq = p.offered_load();
    Ok((eq - eu) / eq)
}

/// `E[C]` of the uncongested system `(K, K)` over `E[Q]` of `(K, M)`,
/// both from full chain solves.
pub fn upper_bound(p: &ModelParams) -> Result<f64> {
    let numerator = metrics(&stationary_distribution(&p.with_m(p.k as f64))?)?.e_c;
    let denominator = metrics(&stationary_distribution(p)?)?.e_q;
    Ok(numerator / denominator)
}

/// The value [`upper_bound`] collapses to, `nu / (mu + nu)`.
///
/// `Q` has the same law for every `M`, and under `M = K` a present EV is
/// charged with probability `nu / (mu + nu)`.
pub fn upper_bound_closed_form(p: &ModelParams) -> f64 {
    p.nu / (p.mu + p.nu)
}

pub fn bounds(p: &ModelParams) -> Result<BoundsResult> {
    let lower = lower_bound(p)?;
    let upper = upper_bound(p)?;
    debug_assert!(lower <= upper + 1e-9, "bounds crossed: {lower} > {upper}");
    Ok(BoundsResult { lower, upper })
}

/// Closed-form joint law for `M = K`: Erlang-loss occupancy and, given
/// `Q = q`, `U ~ Binomial(q, mu / (mu + nu))`.
pub fn joint_km_decomposition(p: &ModelParams) -> Result<StationaryDistribution> {
    p.validate()?;
    if p.m != p.k as f64 {
        return Err(Error::InvalidParams(format!("decomposition requires M = K, got M={} K={}", p.m, p.k)));
    }
    let occupancy = erlang_loss_law(p.k, p.offered_load());
    let uncharged = p.mu / (p.mu + p.nu);
    let mut probs = Vec::with_capacity(p.state_count());
    for s in enumerate_states(p.k)? {
        probs.push(occupancy[s.q] * binomial_pmf(s.q, s.u, uncharged));
    }
    Ok(StationaryDistribution { params: *p, probs })
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n as u64, k as u64) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}
