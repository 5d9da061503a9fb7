//! Simulation experiments that check the fluid and diffusion limits.

use serde::Serialize;

use super::{simulate_markovian, SimConfig};
use crate::diffusion::{invariant_density, prelimit_params, simulate_sde, Moments2, ScalingRegime, SdeConfig};
use crate::error::{Error, Result};
use crate::fluid::{fluid_fixed_point, fluid_fixed_point_raw};
use crate::model::ModelParams;
use crate::stats::EstimateWithCI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidScalingRow {
    pub n: u32,
    /// Time-average `U_n / n`.
    pub mean_u_over_n: EstimateWithCI,
    /// Fixed point with prefactor `min(lambda, mu K)`; the same for every `n`.
    pub u_star_raw: f64,
    /// Blocking-corrected fixed point of the `n`-th system, divided by `n`.
    pub u_star: f64,
}

impl FluidScalingRow {
    pub fn error_raw(&self) -> f64 {
        (self.mean_u_over_n.estimate - self.u_star_raw).abs()
    }
}

/// Simulates the systems `(n lambda, mu, nu, n K, n M)` for each `n`.
pub fn fluid_scaling_experiment(base: &ModelParams, n_list: &[u32], cfg: &SimConfig) -> Result<Vec<FluidScalingRow>> {
    base.validate()?;
    if n_list.windows(2).any(|w| w[0] >= w[1]) || n_list.first() == Some(&0) {
        return Err(Error::InvalidParams("n_list must be positive and strictly increasing".into()));
    }
    let u_star_raw = fluid_fixed_point_raw(base)?.u_star;
    n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let nf = f64::from(n);
            let p = ModelParams::new(base.lambda * nf, base.mu, base.nu, base.k * n as usize, base.m * nf)?;
            let run_cfg = SimConfig { stream_offset: cfg.stream_offset + ((i as u64) << 32), ..*cfg };
            let est = simulate_markovian(&p, &run_cfg)?;
            let mean_u_over_n =
                EstimateWithCI { estimate: est.e_u.estimate / nf, half_width: est.e_u.half_width / nf, ..est.e_u };
            Ok(FluidScalingRow { n, mean_u_over_n, u_star_raw, u_star: fluid_fixed_point(&p)?.u_star / nf })
        })
        .collect()
}

/// Settings for the limiting SDE run used as a reference.
#[derive(Debug, Clone, Copy)]
pub struct SdeReference {
    pub config: SdeConfig,
    pub warmup: f64,
}

impl Default for SdeReference {
    fn default() -> Self {
        Self { config: SdeConfig::default(), warmup: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionComparison {
    pub n: u32,
    pub params: ModelParams,
    /// Stationary moments of the scaled pre-limit chain.
    pub prelimit: Moments2,
    pub prelimit_var_q: EstimateWithCI,
    /// Long-run moments of the limiting SDE.
    pub sde: Moments2,
    /// Moments of the piecewise-Gaussian density (`kappa = +inf`, finite `beta`).
    pub density: Option<Moments2>,
}

/// Simulates the pre-limit chain at `r`, rescales it, and sets the moments
/// beside those of the limit.
pub fn diffusion_scaling_experiment(
    r: &ScalingRegime,
    cfg: &SimConfig,
    sde: &SdeReference,
) -> Result<DiffusionComparison> {
    let params = prelimit_params(r)?;
    let est = simulate_markovian(&params, cfg)?;
    let raw = est.moments();
    let sn = r.sqrt_n();
    let n = f64::from(r.n);
    let prelimit = Moments2 {
        mean_u: (raw.mean_u - r.u_center()) / sn,
        mean_q: (raw.mean_q - r.q_center()) / sn,
        var_u: raw.var_u / n,
        var_q: raw.var_q / n,
        cov_uq: raw.cov_uq / n,
    };
    let prelimit_var_q =
        EstimateWithCI { estimate: est.var_q.estimate / n, half_width: est.var_q.half_width / n, ..est.var_q };
    let path = simulate_sde(&r.spec, (0.0, r.spec.kappa.min(0.0)), &sde.config)?;
    let density = if r.spec.kappa == f64::INFINITY && r.spec.beta.is_finite() {
        Some(invariant_density(&r.spec)?.moments()?)
    } else {
        None
    };
    Ok(DiffusionComparison { n: r.n, params, prelimit, prelimit_var_q, sde: path.moments(sde.warmup), density })
}
