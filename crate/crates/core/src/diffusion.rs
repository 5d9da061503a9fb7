//! Square-root staffing limit of the lot.
//!
//! In the `n`-th system `lambda_n = n (nu + mu)`, the power capacity is
//! `M_n = n + beta sqrt(n)` and the space capacity is
//! `K_n = n (nu + mu) / mu + kappa sqrt(n)`. The centred and scaled
//! processes `U_hat = (U - n) / sqrt(n)` and
//! `Q_hat = (Q - n (nu + mu) / mu) / sqrt(n)` converge to a reflected
//! two-dimensional diffusion with drift
//!
//! ```text
//! b1(x, y) = -nu min(x, beta) - mu x,    b2(x, y) = -mu y
//! ```
//!
//! correlated Brownian noise, and a common push `dY` on both coordinates
//! that keeps `Q_hat <= kappa`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quadrature::{integrate, integrate_real_line, integrate_to_infinity};
use crate::rng::stream_rng;
use crate::stats::{batch_averages, normal_cdf, normal_pdf, t_interval, CiMethod, EstimateWithCI};

pub type Mat2 = [[f64; 2]; 2];

/// Multiplier on `sqrt(lambda_n / mu)` used to size the spaces of a
/// pre-limit system when `kappa = +inf`: `K_n = lambda_n/mu + 10 sqrt(lambda_n/mu)`.
pub const UNBOUNDED_SPACE_MULTIPLIER: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionSpec {
    pub beta: f64,
    /// May be `f64::INFINITY`.
    pub kappa: f64,
    pub nu: f64,
    pub mu: f64,
}

impl DiffusionSpec {
    pub fn new(beta: f64, kappa: f64, nu: f64, mu: f64) -> Result<Self> {
        let s = Self { beta, kappa, nu, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.mu > 0.0 && self.nu.is_finite() && self.mu.is_finite()) {
            return Err(Error::InvalidParams("nu and mu must be positive and finite".into()));
        }
        if self.beta.is_nan() || self.kappa.is_nan() || self.kappa == f64::NEG_INFINITY {
            return Err(Error::InvalidParams("beta must be a number and kappa in R or +inf".into()));
        }
        Ok(())
    }

    /// Per-coordinate noise variance rate `2 (nu + mu)`.
    pub fn noise_variance(&self) -> f64 {
        2.0 * (self.nu + self.mu)
    }

    /// Cross-covariance rate `nu + 2 mu` of the two noise components.
    pub fn noise_covariance(&self) -> f64 {
        self.nu + 2.0 * self.mu
    }

    pub fn noise_correlation(&self) -> f64 {
        self.noise_covariance() / self.noise_variance()
    }

    /// Noise covariance rate matrix `B B^T`.
    pub fn noise_matrix(&self) -> Mat2 {
        let (v, c) = (self.noise_variance(), self.noise_covariance());
        [[v, c], [c, v]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRegime {
    pub n: u32,
    pub spec: DiffusionSpec,
}

impl ScalingRegime {
    pub fn arrival_rate(&self) -> f64 {
        f64::from(self.n) * (self.spec.nu + self.spec.mu)
    }

    /// Centring `lambda_n / (nu + mu) = n` for `U`.
    pub fn u_center(&self) -> f64 {
        f64::from(self.n)
    }

    /// Centring `lambda_n / mu` for `Q`.
    pub fn q_center(&self) -> f64 {
        self.arrival_rate() / self.spec.mu
    }

    pub fn sqrt_n(&self) -> f64 {
        f64::from(self.n).sqrt()
    }

    pub fn power_capacity(&self) -> f64 {
        self.u_center() + self.spec.beta * self.sqrt_n()
    }

    pub fn space_capacity(&self) -> f64 {
        self.q_center() + self.spec.kappa * self.sqrt_n()
    }
}

/// Pre-limit parameters for finite `kappa`: `M` is kept real, `K` rounded.
pub fn scaled_params(r: &ScalingRegime) -> Result<ModelParams> {
    r.spec.validate()?;
    if r.n == 0 {
        return Err(Error::InvalidParams("scaling index n must be positive".into()));
    }
    if !r.spec.kappa.is_finite() {
        return Err(Error::InvalidParams("scaled_params needs finite kappa; use prelimit_params".into()));
    }
    let m = r.power_capacity();
    let k_real = r.space_capacity();
    if !(m > 0.0) {
        return Err(Error::InvalidParams(format!("power capacity M_n = {m} is not positive")));
    }
    if k_real < m || k_real < 1.0 {
        return Err(Error::InvalidParams(format!("space capacity K_n = {k_real} is below M_n = {m}")));
    }
    let k = k_real.round() as usize;
    ModelParams::new(r.arrival_rate(), r.spec.mu, r.spec.nu, k, m.min(k as f64))
}

/// Pre-limit parameters for any regime. `kappa = +inf` sizes the lot with
/// [`UNBOUNDED_SPACE_MULTIPLIER`]; `beta = +inf` sets `M = K`.
pub fn prelimit_params(r: &ScalingRegime) -> Result<ModelParams> {
    if r.spec.kappa.is_finite() && r.spec.beta.is_finite() {
        return scaled_params(r);
    }
    r.spec.validate()?;
    let k = if r.spec.kappa.is_finite() {
        r.space_capacity().round()
    } else {
        let load = r.q_center();
        (load + UNBOUNDED_SPACE_MULTIPLIER * load.sqrt()).ceil()
    };
    let m = if r.spec.beta == f64::INFINITY { k } else { r.power_capacity() };
    if !(m > 0.0) || k < m {
        return Err(Error::InvalidParams(format!("infeasible pre-limit capacities M={m}, K={k}")));
    }
    ModelParams::new(r.arrival_rate(), r.spec.mu, r.spec.nu, k as usize, m)
}

pub fn drift(x: f64, y: f64, spec: &DiffusionSpec) -> (f64, f64) {
    (-spec.nu * x.min(spec.beta) - spec.mu * x, -spec.mu * y)
}

/// Lower Cholesky factor of the per-unit-time noise covariance.
#[derive(Debug, Clone, Copy)]
pub struct NoiseFactor {
    l11: f64,
    l21: f64,
    l22: f64,
}

impl NoiseFactor {
    pub fn new(spec: &DiffusionSpec, dt: f64) -> Self {
        let v = spec.noise_variance() * dt;
        let c = spec.noise_covariance() * dt;
        let l11 = v.sqrt();
        let l21 = c / l11;
        let l22 = (v - l21 * l21).max(0.0).sqrt();
        Self { l11, l21, l22 }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        (self.l11 * z1, self.l21 * z1 + self.l22 * z2)
    }
}

/// One Brownian increment over `dt`: variance `2(nu+mu) dt` per component,
/// covariance `(nu + 2mu) dt`.
pub fn noise_increment<R: Rng + ?Sized>(spec: &DiffusionSpec, dt: f64, rng: &mut R) -> (f64, f64) {
    NoiseFactor::new(spec, dt).draw(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Keep every `record_stride`-th step.
    pub record_stride: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { dt: 1e-3, horizon: 1e4, seed: 1, record_stride: 100 }
    }
}

/// Recorded Euler-Maruyama path. `reflected[i]` is set when the reflection
/// was active in any step since the previous recorded point.
#[derive(Debug, Clone, Default)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub y: Vec<f64>,
    pub reflected: Vec<bool>,
}

impl SdePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first point at or after `fraction` of the horizon.
    pub fn warmup_index(&self, fraction: f64) -> usize {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        self.times.partition_point(|&t| t < fraction * t_end)
    }

    /// Time-average moments over the recorded points after `warmup`.
    pub fn moments(&self, warmup: f64) -> Moments2 {
        let i = self.warmup_index(warmup);
        Moments2::from_samples(&self.u_hat[i..], &self.q_hat[i..])
    }

    /// Batch-means interval on `Var(Q_hat)` after `warmup`.
    pub fn q_variance_ci(&self, warmup: f64, batches: usize, confidence: f64) -> EstimateWithCI {
        let i = self.warmup_index(warmup);
        let qs = &self.q_hat[i..];
        let len = qs.len() / batches;
        let vars: Vec<f64> =
            qs[qs.len() - len * batches..].chunks_exact(len).map(|c| Moments2::from_samples(c, c).var_q).collect();
        t_interval(&vars, confidence, CiMethod::BatchMeans)
    }

    /// Batch-means interval on the mean of `Q_hat`.
    pub fn q_mean_ci(&self, warmup: f64, batches: usize, confidence: f64) -> EstimateWithCI {
        let i = self.warmup_index(warmup);
        t_interval(&batch_averages(&self.q_hat[i..], batches), confidence, CiMethod::BatchMeans)
    }
}

/// Euler-Maruyama with projection along `(-1, -1)` onto `Q_hat <= kappa`.
pub fn simulate_sde(spec: &DiffusionSpec, init: (f64, f64), cfg: &SdeConfig) -> Result<SdePath> {
    spec.validate()?;
    if !(cfg.dt > 0.0 && cfg.horizon > cfg.dt) || cfg.record_stride == 0 {
        return Err(Error::InvalidParams("need dt > 0, horizon > dt, record_stride >= 1".into()));
    }
    let (mut x, mut y) = init;
    if y > spec.kappa {
        return Err(Error::InvalidParams(format!("initial q_hat {y} exceeds kappa {}", spec.kappa)));
    }
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let noise = NoiseFactor::new(spec, cfg.dt);
    let mut rng = stream_rng(cfg.seed, 0);
    let cap = steps / cfg.record_stride + 1;
    let mut path = SdePath {
        times: Vec::with_capacity(cap),
        u_hat: Vec::with_capacity(cap),
        q_hat: Vec::with_capacity(cap),
        y: Vec::with_capacity(cap),
        reflected: Vec::with_capacity(cap),
    };
    let mut pushed = 0.0;
    let mut reflected = false;
    path.times.push(0.0);
    path.u_hat.push(x);
    path.q_hat.push(y);
    path.y.push(0.0);
    path.reflected.push(false);
    for step in 1..=steps {
        let (b1, b2) = drift(x, y, spec);
        let (w1, w2) = noise.draw(&mut rng);
        x += b1 * cfg.dt + w1;
        y += b2 * cfg.dt + w2;
        let excess = y - spec.kappa;
        if excess > 0.0 {
            x -= excess;
            y = spec.kappa;
            pushed += excess;
            reflected = true;
        }
        if step % cfg.record_stride == 0 {
            path.times.push(step as f64 * cfg.dt);
            path.u_hat.push(x);
            path.q_hat.push(y);
            path.y.push(pushed);
            path.reflected.push(reflected);
            reflected = false;
        }
    }
    Ok(path)
}

/// Stationary covariance `S` with `A S + S A^T + Q = 0` for Hurwitz `A`.
pub fn lyapunov_stationary(a: Mat2, q: Mat2) -> Result<Mat2> {
    let trace = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(trace < 0.0 && det > 0.0) {
        return Err(Error::InvalidParams("drift matrix is not stable".into()));
    }
    // unknowns (s11, s12, s22)
    let m = [[2.0 * a[0][0], 2.0 * a[0][1], 0.0], [a[1][0], trace, a[0][1]], [0.0, 2.0 * a[1][0], 2.0 * a[1][1]]];
    let rhs = [-q[0][0], -0.5 * (q[0][1] + q[1][0]), -q[1][1]];
    let d = det3(m);
    let solve = |col: usize| {
        let mut mc = m;
        for (row, r) in mc.iter_mut().zip(rhs) {
            row[col] = r;
        }
        det3(mc) / d
    };
    let (s11, s12, s22) = (solve(0), solve(1), solve(2));
    Ok([[s11, s12], [s12, s22]])
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// First and second moments of a pair of coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments2 {
    pub mean_u: f64,
    pub mean_q: f64,
    pub var_u: f64,
    pub var_q: f64,
    pub cov_uq: f64,
}

impl Moments2 {
    pub fn from_samples(us: &[f64], qs: &[f64]) -> Self {
        let n = us.len() as f64;
        let mean_u = us.iter().sum::<f64>() / n;
        let mean_q = qs.iter().sum::<f64>() / n;
        let (mut vu, mut vq, mut c) = (0.0, 0.0, 0.0);
        for (u, q) in us.iter().zip(qs) {
            let (du, dq) = (u - mean_u, q - mean_q);
            vu += du * du;
            vq += dq * dq;
            c += du * dq;
        }
        Self { mean_u, mean_q, var_u: vu / n, var_q: vq / n, cov_uq: c / n }
    }

    pub fn covariance(&self) -> Mat2 {
        [[self.var_u, self.cov_uq], [self.cov_uq, self.var_q]]
    }
}

/// Piecewise-Gaussian stationary density for `kappa = +inf`:
/// `c1 f_minus 1{x <= beta} + c2 f_plus 1{x > beta}`.
///
/// `c1`, `c2` make the `x`-marginal continuous at `beta` and the total mass
/// one. The `x`-marginal alone is the exact stationary law of the
/// one-dimensional `U_hat` diffusion; the cross terms of the covariance
/// matrices are taken as given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiecewiseGaussianDensity {
    pub beta: f64,
    pub nu: f64,
    pub mu: f64,
    pub m_minus: [f64; 2],
    pub m_plus: [f64; 2],
    pub sigma_minus: Mat2,
    pub sigma_plus: Mat2,
    pub c1: f64,
    pub c2: f64,
}

pub fn invariant_density(spec: &DiffusionSpec) -> Result<PiecewiseGaussianDensity> {
    spec.validate()?;
    if spec.kappa != f64::INFINITY {
        return Err(Error::InvalidParams("invariant density is only available for kappa = +inf".into()));
    }
    let (nu, mu, beta) = (spec.nu, spec.mu, spec.beta);
    let m_minus = [0.0, 0.0];
    let m_plus = [-nu * beta / mu, 0.0];
    let s = (nu + mu) / mu;
    let sigma_minus = [[1.0, 2.0 / (nu + 2.0 * mu)], [2.0 / (nu + 2.0 * mu), s]];
    let sigma_plus = [[s, 1.0 / mu], [1.0 / mu, s]];

    let (c1, c2) = if beta == f64::INFINITY {
        (1.0, 0.0)
    } else if beta == f64::NEG_INFINITY {
        (0.0, 1.0)
    } else {
        let sd_plus = s.sqrt();
        // c2 / c1 from matching the two Gaussian x-densities at beta
        let ln_ratio = -0.5 * beta * beta + 0.5 * (beta - m_plus[0]).powi(2) / s + sd_plus.ln();
        let upper_tail = 1.0 - normal_cdf(beta, m_plus[0], sd_plus);
        let lower_mass = normal_cdf(beta, 0.0, 1.0);
        let weighted_tail = (ln_ratio + upper_tail.ln()).exp();
        let c1 = 1.0 / (lower_mass + weighted_tail);
        (c1, c1 * ln_ratio.exp())
    };
    Ok(PiecewiseGaussianDensity { beta, nu, mu, m_minus, m_plus, sigma_minus, sigma_plus, c1, c2 })
}

fn gaussian2_pdf(x: f64, y: f64, mean: [f64; 2], cov: Mat2) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (dx, dy) = (x - mean[0], y - mean[1]);
    let quad = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
    (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

impl PiecewiseGaussianDensity {
    pub fn pdf(&self, x: f64, y: f64) -> f64 {
        if x <= self.beta {
            self.c1 * gaussian2_pdf(x, y, self.m_minus, self.sigma_minus)
        } else {
            self.c2 * gaussian2_pdf(x, y, self.m_plus, self.sigma_plus)
        }
    }

    fn plus_sd(&self) -> f64 {
        self.sigma_plus[0][0].sqrt()
    }

    pub fn x_marginal_pdf(&self, x: f64) -> f64 {
        if x <= self.beta {
            self.c1 * normal_pdf(x, self.m_minus[0], self.sigma_minus[0][0].sqrt())
        } else {
            self.c2 * normal_pdf(x, self.m_plus[0], self.plus_sd())
        }
    }

    pub fn x_marginal_cdf(&self, x: f64) -> f64 {
        let sd_minus = self.sigma_minus[0][0].sqrt();
        if x <= self.beta {
            self.c1 * normal_cdf(x, self.m_minus[0], sd_minus)
        } else {
            let below = if self.c1 > 0.0 { self.c1 * normal_cdf(self.beta, self.m_minus[0], sd_minus) } else { 0.0 };
            let lo = if self.beta == f64::NEG_INFINITY {
                0.0
            } else {
                normal_cdf(self.beta, self.m_plus[0], self.plus_sd())
            };
            below + self.c2 * (normal_cdf(x, self.m_plus[0], self.plus_sd()) - lo)
        }
    }

    /// Integrates `g(x, y) * pdf(x, y)` over the plane, splitting at `x = beta`.
    pub fn integrate(&self, g: impl Fn(f64, f64) -> f64, tol: f64) -> Result<f64> {
        let inner = |x: f64, mean: [f64; 2], cov: Mat2| -> f64 {
            let y_center = mean[1] + cov[0][1] / cov[0][0] * (x - mean[0]);
            integrate_real_line(|y| g(x, y) * self.pdf(x, y), y_center, 0.1 * tol).unwrap_or(f64::NAN)
        };
        let mut total = 0.0;
        if self.c1 > 0.0 {
            let left = |x: f64| inner(x, self.m_minus, self.sigma_minus);
            let b = self.beta.min(self.m_minus[0] + 40.0);
            // reflect (-inf, b] onto [b, inf)
            total += integrate_to_infinity(|t| left(2.0 * b - t), b, 0.5 * tol)?;
            if self.beta > b {
                total += integrate(left, b, self.beta, 0.5 * tol)?;
            }
        }
        if self.c2 > 0.0 {
            let right = |x: f64| inner(x, self.m_plus, self.sigma_plus);
            total += integrate_to_infinity(right, self.beta.max(self.m_plus[0] - 40.0), 0.5 * tol)?;
        }
        if total.is_nan() {
            return Err(Error::Quadrature { requested: tol, achieved: f64::NAN });
        }
        Ok(total)
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.integrate(|_, _| 1.0, 1e-11)
    }

    pub fn moments(&self) -> Result<Moments2> {
        let tol = 1e-10;
        let mean_u = self.integrate(|x, _| x, tol)?;
        let mean_q = self.integrate(|_, y| y, tol)?;
        let var_u = self.integrate(|x, _| (x - mean_u).powi(2), tol)?;
        let var_q = self.integrate(|_, y| (y - mean_q).powi(2), tol)?;
        let cov_uq = self.integrate(|x, y| (x - mean_u) * (y - mean_q), tol)?;
        Ok(Moments2 { mean_u, mean_q, var_u, var_q, cov_uq })
    }
}

/// Success fraction implied by stationary diffusion means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionSuccess {
    pub success: f64,
    /// The unclamped estimate fell outside `[0, 1]`.
    pub breakdown: bool,
}

/// Maps `E[U_hat]`, `E[Q_hat]` back to `E[U]`, `E[Q]` and returns `E[C] / E[Q]`.
pub fn diffusion_success_estimate(r: &ScalingRegime, mean_u_hat: f64, mean_q_hat: f64) -> DiffusionSuccess {
    let eu = r.u_center() + r.sqrt_n() * mean_u_hat;
    let eq = r.q_center() + r.sqrt_n() * mean_q_hat;
    let success = (eq - eu) / eq;
    let breakdown = !(0.0..=1.0).contains(&success);
    if breakdown {
        log::warn!("diffusion success estimate {success} outside [0, 1]: n = {} is too small for this regime", r.n);
    }
    DiffusionSuccess { success, breakdown }
}
