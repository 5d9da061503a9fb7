//! Success probability against `M / K`: bounds, exact chain solve, fluid
//! approximation and simulation side by side.

use std::io::{self, Write};

use chargelot::des::simulate_markovian;
use chargelot::exact::{bounds, exact_success};
use chargelot::fluid::fluid_success;
use chargelot::{ModelParams, SimConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::CliError;

pub const CSV_HEADER: &str = "m_over_k,lower,upper,exact,fluid,sim_mean,sim_ci";

/// Loads `lambda / K` of the published panels.
pub const PANEL_LOADS: [f64; 3] = [0.8, 1.0, 1.2];
pub const PANEL_SPACES: [usize; 2] = [10, 50];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigureRow {
    pub m_over_k: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact: f64,
    pub fluid: f64,
    pub sim_mean: f64,
    pub sim_ci: f64,
}

#[derive(Debug, Clone)]
pub struct FigureSpec {
    pub k: usize,
    /// `lambda / K`.
    pub load: f64,
    pub grid: Vec<f64>,
    pub mu: f64,
    pub nu: f64,
    pub sim: SimConfig,
}

/// `{0.05, 0.10, ..., 1.00}`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 20.0).collect()
}

pub fn default_sim_config(seed: u64) -> SimConfig {
    SimConfig {
        run_length: chargelot::RunLength::Horizon(1000.0),
        replications: 10,
        master_seed: seed,
        ..SimConfig::default()
    }
}

pub fn figure_rows(spec: &FigureSpec) -> Result<Vec<FigureRow>, CliError> {
    if let Some(bad) = spec.grid.iter().find(|&&g| !(g > 0.0 && g <= 1.0)) {
        return Err(CliError::Usage(format!("M/K grid values must lie in (0, 1], got {bad}")));
    }
    let lambda = spec.load * spec.k as f64;
    spec.grid
        .par_iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let p = ModelParams::new(lambda, spec.mu, spec.nu, spec.k, ratio * spec.k as f64)?;
            let b = bounds(&p)?;
            let cfg = SimConfig { stream_offset: (i as u64) << 32, ..spec.sim };
            let sim = simulate_markovian(&p, &cfg)?.success_departures;
            Ok(FigureRow {
                m_over_k: ratio,
                lower: b.lower,
                upper: b.upper,
                exact: exact_success(&p)?,
                fluid: fluid_success(&p)?,
                sim_mean: sim.estimate,
                sim_ci: sim.half_width,
            })
        })
        .collect()
}

pub fn write_csv(rows: &[FigureRow], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{},{}", r.m_over_k, r.lower, r.upper, r.exact, r.fluid, r.sim_mean, r.sim_ci)?;
    }
    Ok(())
}

/// File stem used for a panel, e.g. `figure_K10_load0.8`.
pub fn panel_name(k: usize, load: f64) -> String {
    format!("figure_K{k}_load{load}")
}

/// A matplotlib script that plots the CSV at `csv_file` (relative to the
/// script's own directory) and saves a PNG next to it.
pub fn plot_script(csv_file: &str, k: usize, load: f64) -> String {
    format!(
        r#"# Plots {csv_file}; run with: python3 <this script>
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = os.path.join(here, "{csv_file}")
with open(path) as fh:
    rows = [{{k: float(v) for k, v in r.items()}} for r in csv.DictReader(fh)]

x = [r["m_over_k"] for r in rows]
fig, ax = plt.subplots(figsize=(5, 4))
ax.plot(x, [r["lower"] for r in rows], "b--", label="lower bound")
ax.plot(x, [r["upper"] for r in rows], "r--", label="upper bound")
ax.plot(x, [r["exact"] for r in rows], "k-", label="exact")
ax.plot(x, [r["fluid"] for r in rows], "g-.", label="fluid")
ax.errorbar(x, [r["sim_mean"] for r in rows], yerr=[r["sim_ci"] for r in rows], fmt="o", ms=3, label="simulation")
ax.set_xlabel("M / K")
ax.set_ylabel("P(leave fully charged)")
ax.set_title("K = {k}, lambda = {load} K")
ax.legend(loc="lower right")
fig.tight_layout()
fig.savefig(os.path.splitext(path)[0] + ".png", dpi=150)
"#
    )
}
