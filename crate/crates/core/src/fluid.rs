//! Fluid fixed point for the number of uncharged EVs and the resulting
//! probability of leaving fully charged.
//!
//! In the fluid picture an admitted EV parks for `B` and needs `D` units of
//! charging work. Once the uncharged mass `u` exceeds the power capacity
//! `M` every EV charges at rate `M / u`, so charging takes `D max(1, u/M)`.
//! Little's law then gives
//!
//! ```text
//! u = Lambda * E[min(B, D max(1, u / M))]
//! ```
//!
//! with effective admission rate `Lambda`. The blocking-corrected version
//! uses `Lambda = lambda (1 - P_K)`; the raw limit form uses
//! `Lambda = min(lambda, mu K)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::erlang_b;
use crate::model::ModelParams;
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::rng::stream_rng;
use crate::stats::{t_interval, CiMethod, EstimateWithCI};

const QUAD_TOL: f64 = 1e-10;
const BISECTION_TOL: f64 = 1e-12;

/// A user-supplied duration law. Sampling must be reproducible for a given
/// generator state.
pub trait Sampler: Send + Sync + fmt::Debug {
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn mean(&self) -> f64;
    fn quantile(&self, p: f64) -> f64;
}

/// Law of a parking time `B` or a charging requirement `D`.
#[derive(Debug, Clone)]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Custom(Arc<dyn Sampler>),
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        Self::Deterministic { value }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Exponential { rate } => rate.is_finite() && *rate > 0.0,
            Self::Deterministic { value } => value.is_finite() && *value > 0.0,
            Self::Custom(s) => s.mean().is_finite() && s.mean() > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("distribution must have finite positive mean: {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { value } => *value,
            Self::Custom(s) => s.mean(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Self::Deterministic { value } => *value,
            Self::Custom(s) => {
                let mut dyn_rng = DynRng(rng);
                s.sample(&mut dyn_rng)
            }
        }
    }

    /// `P(X > t)`, or `None` for a custom sampler.
    pub fn survival(&self, t: f64) -> Option<f64> {
        match self {
            Self::Exponential { rate } => Some(if t <= 0.0 { 1.0 } else { (-rate * t).exp() }),
            Self::Deterministic { value } => Some(if t < *value { 1.0 } else { 0.0 }),
            Self::Custom(_) => None,
        }
    }

    fn is_custom(&self) -> bool {
        matches!(self, Self::Custom(_))
    }
}

struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `u* <= M`: every uncharged EV charges at full rate.
    Underloaded,
    /// `u* > M`: power is shared and charging slows down.
    Overloaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidSolution {
    pub u_star: f64,
    pub regime: Regime,
    pub p_s: f64,
    pub p_block: f64,
    /// Effective admission rate used as the prefactor.
    pub throughput: f64,
    /// Monte Carlo half-width on `p_s`, when a sampler was involved.
    pub mc_half_width: Option<f64>,
}

/// Slowdown `max(1, u / M)` of charging at fluid level `u`.
pub fn slowdown(u: f64, m: f64) -> f64 {
    (u / m).max(1.0)
}

/// `E[min(B, c D)]` for independent analytic `B`, `D` and `c >= 1`.
pub fn expected_min(b: &DistributionSpec, d: &DistributionSpec, c: f64) -> Result<f64> {
    check_slowdown(c)?;
    use DistributionSpec::*;
    match (b, d) {
        (Exponential { rate: mu }, Exponential { rate: nu }) => Ok(1.0 / (mu + nu / c)),
        (Deterministic { value: x }, Deterministic { value: y }) => Ok(x.min(c * y)),
        _ => expected_min_quadrature(b, d, c),
    }
}

/// `E[min(B, c D)] = int_0^inf P(B > t) P(D > t/c) dt` by adaptive quadrature.
pub fn expected_min_quadrature(b: &DistributionSpec, d: &DistributionSpec, c: f64) -> Result<f64> {
    check_slowdown(c)?;
    if b.is_custom() || d.is_custom() {
        return Err(Error::InvalidParams("quadrature needs analytic distributions; use Monte Carlo".into()));
    }
    let integrand = |t: f64| b.survival(t).unwrap() * d.survival(t / c).unwrap();
    match finite_support(b, d, c) {
        Some(end) => integrate(integrand, 0.0, end, QUAD_TOL),
        None => integrate_to_infinity(integrand, 0.0, QUAD_TOL),
    }
}

/// Where the survival product drops to zero, if a deterministic law is involved.
fn finite_support(b: &DistributionSpec, d: &DistributionSpec, c: f64) -> Option<f64> {
    let mut end: Option<f64> = None;
    if let DistributionSpec::Deterministic { value } = b {
        end = Some(*value);
    }
    if let DistributionSpec::Deterministic { value } = d {
        end = Some(end.map_or(c * value, |e| e.min(c * value)));
    }
    end
}

/// Monte Carlo estimate of `E[min(B, c D)]` with a CI on the mean.
pub fn expected_min_monte_carlo(
    b: &DistributionSpec,
    d: &DistributionSpec,
    c: f64,
    mc: &MonteCarloOptions,
) -> Result<EstimateWithCI> {
    check_slowdown(c)?;
    let draws = PairedDraws::new(b, d, mc);
    let xs: Vec<f64> = draws.pairs.iter().map(|&(x, y)| x.min(c * y)).collect();
    Ok(t_interval(&xs, mc.confidence, CiMethod::MonteCarlo))
}

/// `P(B > c D)` for independent analytic `B`, `D`.
pub fn prob_charged(b: &DistributionSpec, d: &DistributionSpec, c: f64) -> Result<f64> {
    check_slowdown(c)?;
    use DistributionSpec::*;
    match (b, d) {
        (Exponential { rate: mu }, Exponential { rate: nu }) => Ok(nu / (nu + mu * c)),
        (_, Deterministic { value }) if !b.is_custom() => Ok(b.survival(c * value).unwrap()),
        (Deterministic { value }, Exponential { rate: nu }) => Ok(1.0 - (-nu * value / c).exp()),
        _ => Err(Error::InvalidParams("custom distributions need Monte Carlo".into())),
    }
}

/// `P(B > c D) = int f_D(t) P(B > c t) dt` for exponential `D`, by quadrature.
pub fn prob_charged_quadrature(b: &DistributionSpec, d: &DistributionSpec, c: f64) -> Result<f64> {
    check_slowdown(c)?;
    let DistributionSpec::Exponential { rate: nu } = *d else {
        return Err(Error::InvalidParams("quadrature path needs an exponential charging law".into()));
    };
    if b.is_custom() {
        return Err(Error::InvalidParams("custom parking law needs Monte Carlo".into()));
    }
    let integrand = |t: f64| nu * (-nu * t).exp() * b.survival(c * t).unwrap();
    match b {
        DistributionSpec::Deterministic { value } => integrate(integrand, 0.0, value / c, QUAD_TOL),
        _ => integrate_to_infinity(integrand, 0.0, QUAD_TOL),
    }
}

fn check_slowdown(c: f64) -> Result<()> {
    if c >= 1.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("slowdown must be >= 1, got {c}")))
    }
}

/// Fixed point with the blocking-corrected prefactor `lambda (1 - P_K)`.
pub fn fluid_fixed_point(p: &ModelParams) -> Result<FluidSolution> {
    p.validate()?;
    let p_block = erlang_b(p.k, p.offered_load());
    Ok(exponential_solution(p, p.lambda * (1.0 - p_block), p_block))
}

/// Fixed point with the limit-theorem prefactor `min(lambda, mu K)`.
pub fn fluid_fixed_point_raw(p: &ModelParams) -> Result<FluidSolution> {
    p.validate()?;
    let throughput = p.lambda.min(p.mu * p.k as f64);
    Ok(exponential_solution(p, throughput, 1.0 - throughput / p.lambda))
}

/// Closed two-branch solution for exponential parking and charging.
fn exponential_solution(p: &ModelParams, throughput: f64, p_block: f64) -> FluidSolution {
    let unshared = throughput / (p.mu + p.nu);
    let (u_star, regime) = if unshared <= p.m {
        (unshared, Regime::Underloaded)
    } else {
        ((throughput - p.nu * p.m) / p.mu, Regime::Overloaded)
    };
    let p_s = match regime {
        Regime::Underloaded => p.nu / (p.mu + p.nu),
        Regime::Overloaded => p.nu * p.m / throughput,
    };
    FluidSolution { u_star, regime, p_s, p_block, throughput, mc_half_width: None }
}

/// Fixed point of the blocking-corrected equation found by bisection on
/// the generic right-hand side instead of the closed form.
pub fn fluid_fixed_point_bisection(p: &ModelParams) -> Result<FluidSolution> {
    p.validate()?;
    let b = DistributionSpec::exponential(p.mu);
    let d = DistributionSpec::exponential(p.nu);
    general_fluid_fixed_point(p.lambda, p.k, p.m, &b, &d, &MonteCarloOptions::default())
}

/// Fluid success probability; see [`fluid_fixed_point`].
pub fn fluid_success(p: &ModelParams) -> Result<f64> {
    Ok(fluid_fixed_point(p)?.p_s)
}

/// Finds the unique `u` in `[0, hi]` with `rhs(u) = u`, for `rhs`
/// continuous, nondecreasing and bounded by `hi`.
pub fn solve_fixed_point(mut rhs: impl FnMut(f64) -> Result<f64>, hi: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, hi);
    if rhs(lo)? - lo <= 0.0 {
        return Ok(lo);
    }
    while hi - lo > BISECTION_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if rhs(mid)? - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloOptions {
    pub samples: usize,
    pub seed: u64,
    pub confidence: f64,
    /// Largest acceptable CI half-width on the success probability.
    pub tolerance: f64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { samples: 200_000, seed: 0x5eed, confidence: 0.99, tolerance: 5e-3 }
    }
}

/// Common random numbers: one fixed set of `(B, D)` draws reused at
/// every `u`, so the Monte Carlo right-hand side stays monotone.
struct PairedDraws {
    pairs: Vec<(f64, f64)>,
}

impl PairedDraws {
    fn new(b: &DistributionSpec, d: &DistributionSpec, mc: &MonteCarloOptions) -> Self {
        let mut rng = stream_rng(mc.seed, 0);
        let pairs = (0..mc.samples).map(|_| (b.sample(&mut rng), d.sample(&mut rng))).collect();
        Self { pairs }
    }

    fn expected_min(&self, c: f64) -> f64 {
        self.pairs.iter().map(|&(x, y)| x.min(c * y)).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Fixed point for general independent parking (`b`) and charging (`d`)
/// laws. Blocking uses the Erlang loss formula at offered load
/// `lambda E[B]`. Custom samplers are handled by Monte Carlo with common
/// random numbers, and fail if the half-width on `p_s` exceeds
/// `mc.tolerance`.
pub fn general_fluid_fixed_point(
    lambda: f64,
    k: usize,
    m: f64,
    b: &DistributionSpec,
    d: &DistributionSpec,
    mc: &MonteCarloOptions,
) -> Result<FluidSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) || k == 0 || !(m > 0.0) {
        return Err(Error::InvalidParams(format!("need lambda > 0, K >= 1, M > 0; got {lambda}, {k}, {m}")));
    }
    b.validate()?;
    d.validate()?;
    let p_block = erlang_b(k, lambda * b.mean());
    let throughput = lambda * (1.0 - p_block);
    let hi = throughput * b.mean();

    let (u_star, p_s, mc_half_width) = if b.is_custom() || d.is_custom() {
        let draws = PairedDraws::new(b, d, mc);
        let u_star = solve_fixed_point(|u| Ok(throughput * draws.expected_min(slowdown(u, m))), hi)?;
        let c = slowdown(u_star, m);
        let hits: Vec<f64> = draws.pairs.iter().map(|&(x, y)| if x > c * y { 1.0 } else { 0.0 }).collect();
        let ci = t_interval(&hits, mc.confidence, CiMethod::MonteCarlo);
        if ci.half_width > mc.tolerance {
            return Err(Error::MonteCarloTolerance { half_width: ci.half_width, tolerance: mc.tolerance });
        }
        (u_star, ci.estimate, Some(ci.half_width))
    } else {
        let u_star = solve_fixed_point(|u| Ok(throughput * expected_min(b, d, slowdown(u, m))?), hi)?;
        (u_star, prob_charged(b, d, slowdown(u_star, m))?, None)
    };
    let regime = if u_star <= m { Regime::Underloaded } else { Regime::Overloaded };
    Ok(FluidSolution { u_star, regime, p_s, p_block, throughput, mc_half_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(lambda: f64, mu: f64, nu: f64, k: usize, m: f64) -> ModelParams {
        ModelParams::new(lambda, mu, nu, k, m).unwrap()
    }

    #[derive(Debug)]
    struct Erlang2 {
        rate: f64,
    }

    impl Sampler for Erlang2 {
        fn sample(&self, rng: &mut dyn RngCore) -> f64 {
            let e = Exp::new(self.rate).unwrap();
            e.sample(rng) + e.sample(rng)
        }
        fn mean(&self) -> f64 {
            2.0 / self.rate
        }
        fn quantile(&self, _p: f64) -> f64 {
            unimplemented!("not needed for sampling")
        }
    }

    #[test]
    fn expected_min_cases() {
        let e1 = DistributionSpec::exponential(1.0);
        assert_abs_diff_eq!(expected_min(&e1, &e1, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_min(&e1, &e1, 2.0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_min_quadrature(&e1, &e1, 2.0).unwrap(), 2.0 / 3.0, epsilon = 1e-10);
        let d1 = DistributionSpec::deterministic(1.0);
        let d2 = DistributionSpec::deterministic(2.0);
        assert_eq!(expected_min(&d1, &d2, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(expected_min_quadrature(&d1, &d2, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(expected_min(&e1, &e1, 0.5).is_err());
    }

    #[test]
    fn expected_min_mixed_by_quadrature() {
        // E[min(Exp(2), 1.5 * 0.4)] = (1 - exp(-2 * 0.6)) / 2
        let b = DistributionSpec::exponential(2.0);
        let d = DistributionSpec::deterministic(0.4);
        let want = (1.0 - (-1.2f64).exp()) / 2.0;
        assert_abs_diff_eq!(expected_min(&b, &d, 1.5).unwrap(), want, epsilon = 1e-10);
    }

    #[test]
    fn prob_charged_paths_agree() {
        let cases = [
            (DistributionSpec::exponential(1.0), DistributionSpec::exponential(2.0), 1.7),
            (DistributionSpec::deterministic(1.3), DistributionSpec::exponential(0.8), 2.2),
        ];
        for (b, d, c) in cases {
            assert_abs_diff_eq!(
                prob_charged(&b, &d, c).unwrap(),
                prob_charged_quadrature(&b, &d, c).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn fixed_point_underloaded_example() {
        let s = fluid_fixed_point(&params(1.0, 1.0, 1.0, 2, 1.0)).unwrap();
        assert_abs_diff_eq!(s.p_block, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.u_star, 0.4, epsilon = 1e-15);
        assert_eq!(s.regime, Regime::Underloaded);
        assert_abs_diff_eq!(s.p_s, 0.5);
    }

    #[test]
    fn fixed_point_overloaded_example() {
        let p = params(10.0, 1.0, 1.0, 2, 0.5);
        let s = fluid_fixed_point(&p).unwrap();
        // B_1 = 10/11, B_2 = 100/122
        let pk = 100.0 / 122.0;
        assert_abs_diff_eq!(s.p_block, pk, epsilon = 1e-14);
        assert_abs_diff_eq!(s.u_star, 10.0 * (1.0 - pk) - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.u_star, 1.3033, epsilon = 1e-4);
        assert_eq!(s.regime, Regime::Overloaded);
        assert_abs_diff_eq!(s.p_s, 0.2773, epsilon = 1e-4);
        let bis = fluid_fixed_point_bisection(&p).unwrap();
        assert_abs_diff_eq!(bis.u_star, s.u_star, epsilon = 1e-9);
        assert_abs_diff_eq!(bis.p_s, s.p_s, epsilon = 1e-9);
    }

    #[test]
    fn fixed_point_full_capacity() {
        let p = params(3.0, 1.0, 2.0, 4, 4.0);
        let s = fluid_fixed_point(&p).unwrap();
        assert_abs_diff_eq!(s.u_star, 3.0 * (1.0 - erlang_b(4, 3.0)) / 3.0, epsilon = 1e-15);
        assert_eq!(s.regime, Regime::Underloaded);
    }

    #[test]
    fn raw_prefactor_examples() {
        let s = fluid_fixed_point_raw(&params(1.0, 1.0, 1.0, 2, 1.0)).unwrap();
        assert_abs_diff_eq!(s.u_star, 0.5);
        let s = fluid_fixed_point_raw(&params(10.0, 1.0, 1.0, 2, 2.0)).unwrap();
        assert_abs_diff_eq!(s.throughput, 2.0);
        assert_abs_diff_eq!(s.u_star, 1.0);
        assert_eq!(s.regime, Regime::Underloaded);
    }

    #[test]
    fn success_with_instant_charging() {
        let s = fluid_success(&params(2.0, 1.0, 1e6, 5, 3.0)).unwrap();
        assert!(s > 1.0 - 1e-5);
    }

    #[test]
    fn general_reproduces_exponential_case() {
        for p in [params(10.0, 1.0, 1.0, 2, 0.5), params(4.0, 0.5, 2.0, 6, 1.2), params(1.0, 1.0, 1.0, 2, 1.0)] {
            let closed = fluid_fixed_point(&p).unwrap();
            let general = general_fluid_fixed_point(
                p.lambda,
                p.k,
                p.m,
                &DistributionSpec::exponential(p.mu),
                &DistributionSpec::exponential(p.nu),
                &MonteCarloOptions::default(),
            )
            .unwrap();
            assert_abs_diff_eq!(general.u_star, closed.u_star, epsilon = 1e-9);
            assert_abs_diff_eq!(general.p_s, closed.p_s, epsilon = 1e-9);
            assert_eq!(general.regime, closed.regime);
        }
    }

    #[test]
    fn general_deterministic_cases() {
        let mc = MonteCarloOptions::default();
        let s = general_fluid_fixed_point(
            1.0,
            50,
            100.0,
            &DistributionSpec::deterministic(1.0),
            &DistributionSpec::deterministic(0.5),
            &mc,
        )
        .unwrap();
        assert_abs_diff_eq!(s.u_star, 0.5, epsilon = 1e-10);
        assert_eq!(s.p_s, 1.0);
        for m in [0.1, 1.0, 10.0] {
            let s = general_fluid_fixed_point(
                3.0,
                4,
                m,
                &DistributionSpec::deterministic(1.0),
                &DistributionSpec::deterministic(2.0),
                &mc,
            )
            .unwrap();
            assert_eq!(s.p_s, 0.0);
        }
    }

    #[test]
    fn general_with_custom_sampler_uses_monte_carlo() {
        let b = DistributionSpec::Custom(Arc::new(Erlang2 { rate: 2.0 }));
        let d = DistributionSpec::exponential(1.0);
        let s = general_fluid_fixed_point(2.0, 8, 0.6, &b, &d, &MonteCarloOptions::default()).unwrap();
        let hw = s.mc_half_width.unwrap();
        assert!(hw > 0.0 && hw < 5e-3);
        // The fixed point must satisfy the equation with the analytic mean
        // E[min(B, cD)] for B ~ Erlang(2, 2), D ~ Exp(1): 1/(2+r) + 2/(2+r)^2 with r = 1/c.
        let c = slowdown(s.u_star, 0.6);
        let r = 1.0 / c;
        let em = 1.0 / (2.0 + r) + 2.0 / ((2.0 + r) * (2.0 + r));
        assert!((s.throughput * em - s.u_star).abs() < 0.01);
        let strict = MonteCarloOptions { samples: 100, tolerance: 1e-4, ..Default::default() };
        assert!(matches!(
            general_fluid_fixed_point(2.0, 8, 0.6, &b, &d, &strict),
            Err(Error::MonteCarloTolerance { .. })
        ));
    }

    #[test]
    fn monte_carlo_expected_min_covers_closed_form() {
        let e1 = DistributionSpec::exponential(1.0);
        let ci = expected_min_monte_carlo(&e1, &e1, 2.0, &MonteCarloOptions::default()).unwrap();
        assert!(ci.covers(2.0 / 3.0));
    }
}
