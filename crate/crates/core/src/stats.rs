//! Confidence intervals and goodness-of-fit helpers.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    /// Student-t interval over independent replication means.
    Replications,
    /// Student-t interval over contiguous batches of each run.
    BatchMeans,
    /// Student-t interval over i.i.d. Monte Carlo draws.
    MonteCarlo,
}

/// Point estimate with a symmetric confidence interval.
///
/// With fewer than two samples the half-width is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub half_width: f64,
    pub confidence: f64,
    pub samples: usize,
    pub method: CiMethod,
}

impl EstimateWithCI {
    pub fn lower(&self) -> f64 {
        self.estimate - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.estimate + self.half_width
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lower() <= x && x <= self.upper()
    }

    pub fn overlaps(&self, other: &EstimateWithCI) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }

    /// Standard error implied by the half-width.
    pub fn std_error(&self) -> f64 {
        if self.samples < 2 {
            return f64::INFINITY;
        }
        self.half_width / t_quantile(self.confidence, self.samples - 1)
    }
}

/// Two-sided Student-t critical value.
pub fn t_quantile(confidence: f64, dof: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    t.inverse_cdf(0.5 + 0.5 * confidence)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn t_interval(xs: &[f64], confidence: f64, method: CiMethod) -> EstimateWithCI {
    let n = xs.len();
    let estimate = if n == 0 { f64::NAN } else { mean(xs) };
    let half_width =
        if n < 2 { f64::INFINITY } else { t_quantile(confidence, n - 1) * (sample_variance(xs) / n as f64).sqrt() };
    EstimateWithCI { estimate, half_width, confidence, samples: n, method }
}

/// Splits `series` into `batches` contiguous equal batches (dropping the
/// remainder at the front) and returns the batch averages.
pub fn batch_averages(series: &[f64], batches: usize) -> Vec<f64> {
    let len = series.len() / batches;
    let skip = series.len() - len * batches;
    series[skip..].chunks_exact(len.max(1)).take(batches).map(mean).collect()
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples`
/// and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("sd > 0").cdf(x)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}
