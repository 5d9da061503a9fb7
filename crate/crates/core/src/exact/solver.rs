//! Linear solvers for the stationary law of the (U, Q) chain.
//!
//! With the `(q, u)` ordering every transition moves at most `K + 1`
//! positions, so the rate matrix is banded. The direct path is the
//! Grassmann-Taksar-Heyman state reduction restricted to that band: it is
//! subtraction-free, so it keeps full relative accuracy even for states with
//! tiny mass. Larger chains fall back to Gauss-Seidel sweeps.

use crate::error::{Error, Result};
use crate::model::{enumerate_states, for_each_transition, outflow_rate, state_index, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Direct for `K <= direct_max_k`, iterative above.
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_states: usize,
    pub direct_max_k: usize,
    pub method: SolveMethod,
    /// Stopping tolerance on the max balance residual (relative to the
    /// largest outflow) for Gauss-Seidel.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_states: 1_000_000,
            direct_max_k: 200,
            method: SolveMethod::Auto,
            tolerance: 1e-12,
            max_sweeps: 200_000,
        }
    }
}

pub(crate) fn solve(p: &ModelParams, opts: &SolverOptions) -> Result<Vec<f64>> {
    let n = p.state_count();
    if n > opts.max_states {
        return Err(Error::SolverLimit { states: n, limit: opts.max_states });
    }
    let direct = match opts.method {
        SolveMethod::Direct => true,
        SolveMethod::Iterative => false,
        SolveMethod::Auto => p.k <= opts.direct_max_k,
    };
    if direct {
        banded_gth(p)
    } else {
        gauss_seidel(p, opts)
    }
}

/// Row-major band storage: entry `(i, j)` lives at `i * width + (j + w - i)`.
struct Band {
    w: usize,
    width: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, w: usize) -> Self {
        let width = 2 * w + 1;
        Self { w, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.w);
        i * self.width + j + self.w - i
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }
}

fn banded_gth(p: &ModelParams) -> Result<Vec<f64>> {
    let states = enumerate_states(p.k)?;
    let n = states.len();
    let w = p.k + 1;
    let mut a = Band::new(n, w);
    for (i, &s) in states.iter().enumerate() {
        for_each_transition(p, s, |t, r| *a.get_mut(i, state_index(t)) += r);
    }

    for m in (1..n).rev() {
        let lo = m.saturating_sub(w);
        let s: f64 = (lo..m).map(|j| a.get(m, j)).sum();
        if !(s > 0.0) {
            return Err(Error::Singular(format!("state {} has no path to lower-indexed states", m)));
        }
        for i in lo..m {
            *a.get_mut(i, m) /= s;
        }
        for i in lo..m {
            let a_im = a.get(i, m);
            if a_im == 0.0 {
                continue;
            }
            for j in lo..m {
                if j == i {
                    continue;
                }
                let a_mj = a.get(m, j);
                if a_mj != 0.0 {
                    *a.get_mut(i, j) += a_im * a_mj;
                }
            }
        }
    }

    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        let lo = j.saturating_sub(w);
        pi[j] = (lo..j).map(|i| pi[i] * a.get(i, j)).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

fn gauss_seidel(p: &ModelParams, opts: &SolverOptions) -> Result<Vec<f64>> {
    let states = enumerate_states(p.k)?;
    let n = states.len();
    // incoming transitions in CSR form
    let mut counts = vec![0usize; n + 1];
    for &s in &states {
        for_each_transition(p, s, |t, _| counts[state_index(t) + 1] += 1);
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let mut src = vec![0usize; counts[n]];
    let mut rate = vec![0.0; counts[n]];
    for (i, &s) in states.iter().enumerate() {
        for_each_transition(p, s, |t, r| {
            let j = state_index(t);
            src[fill[j]] = i;
            rate[fill[j]] = r;
            fill[j] += 1;
        });
    }
    let out: Vec<f64> = states.iter().map(|&s| outflow_rate(p, s)).collect();
    let scale = out.iter().cloned().fold(0.0, f64::max);

    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for sweep in 0..opts.max_sweeps {
        for j in 0..n {
            let inflow: f64 = (counts[j]..counts[j + 1]).map(|e| pi[src[e]] * rate[e]).sum();
            pi[j] = inflow / out[j];
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        if sweep % 16 == 15 {
            residual = (0..n)
                .map(|j| {
                    let inflow: f64 = (counts[j]..counts[j + 1]).map(|e| pi[src[e]] * rate[e]).sum();
                    (inflow - pi[j] * out[j]).abs()
                })
                .fold(0.0, f64::max)
                / scale;
            if residual < opts.tolerance {
                return Ok(pi);
            }
        }
    }
    Err(Error::NotConverged { iterations: opts.max_sweeps, residual })
}
