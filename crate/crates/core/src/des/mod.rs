//! Discrete-event simulation of the lot.
//!
//! [`simulate_markovian`] jumps the `(U, Q)` chain directly;
//! [`simulate_general`] follows individual EVs with arbitrary parking and
//! charging laws. Both share the measurement machinery here: warmup,
//! batches, and replication CIs.
//!
//! Replications run in parallel on independent ChaCha streams derived from
//! the master seed and are reduced in index order, so output is bitwise
//! reproducible for a given seed.

mod experiments;
mod general;
mod markovian;

use serde::Serialize;

pub use experiments::{
    diffusion_scaling_experiment, fluid_scaling_experiment, DiffusionComparison, FluidScalingRow, SdeReference,
};
pub use general::{simulate_general, simulate_general_trace, EvRecord, EvStatus, GeneralTrace};
pub use markovian::simulate_markovian;

use crate::error::{Error, Result};
use crate::stats::{t_interval, CiMethod, EstimateWithCI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunLength {
    /// Simulate until this time.
    Horizon(f64),
    /// Simulate until this many departures.
    Departures(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub run_length: RunLength,
    /// Fraction of the run discarded before measuring.
    pub warmup: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub ci_method: CiMethod,
    /// Batches per run, used with [`CiMethod::BatchMeans`].
    pub batch_count: usize,
    pub confidence: f64,
    /// Added to every replication stream id; lets sweeps give each point
    /// its own streams under one master seed.
    pub stream_offset: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            run_length: RunLength::Horizon(1000.0),
            warmup: 0.1,
            replications: 20,
            master_seed: 2016,
            ci_method: CiMethod::Replications,
            batch_count: 20,
            confidence: 0.99,
            stream_offset: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(Error::InvalidParams(format!("warmup must lie in [0,1), got {}", self.warmup)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParams("need at least one replication".into()));
        }
        if self.ci_method == CiMethod::BatchMeans && self.batch_count < 2 {
            return Err(Error::InvalidParams("batch means need at least two batches".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParams("confidence must lie in (0,1)".into()));
        }
        match self.run_length {
            RunLength::Horizon(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::InvalidParams(format!("horizon must be positive, got {t}")))
            }
            RunLength::Departures(0) => Err(Error::InvalidParams("departure count must be positive".into())),
            _ => Ok(()),
        }
    }

    fn batches_per_run(&self) -> usize {
        match self.ci_method {
            CiMethod::BatchMeans => self.batch_count,
            _ => 1,
        }
    }

    fn stream(&self, rep: usize) -> u64 {
        self.stream_offset.wrapping_add(rep as u64)
    }
}

/// Time integrals and event counts over one measurement batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct BatchStats {
    pub duration: f64,
    pub int_u: f64,
    pub int_q: f64,
    pub int_uu: f64,
    pub int_qq: f64,
    pub int_uq: f64,
    pub arrivals: u64,
    pub blocked: u64,
    pub departed_charged: u64,
    pub departed_uncharged: u64,
}

impl BatchStats {
    fn add_segment(&mut self, dt: f64, u: f64, q: f64) {
        self.duration += dt;
        self.int_u += u * dt;
        self.int_q += q * dt;
        self.int_uu += u * u * dt;
        self.int_qq += q * q * dt;
        self.int_uq += u * q * dt;
    }

    fn merge(&mut self, o: &BatchStats) {
        self.duration += o.duration;
        self.int_u += o.int_u;
        self.int_q += o.int_q;
        self.int_uu += o.int_uu;
        self.int_qq += o.int_qq;
        self.int_uq += o.int_uq;
        self.arrivals += o.arrivals;
        self.blocked += o.blocked;
        self.departed_charged += o.departed_charged;
        self.departed_uncharged += o.departed_uncharged;
    }

    fn departures(&self) -> u64 {
        self.departed_charged + self.departed_uncharged
    }

    fn mean_u(&self) -> f64 {
        self.int_u / self.duration
    }

    fn mean_q(&self) -> f64 {
        self.int_q / self.duration
    }

    fn var_u(&self) -> f64 {
        self.int_uu / self.duration - self.mean_u().powi(2)
    }

    fn var_q(&self) -> f64 {
        self.int_qq / self.duration - self.mean_q().powi(2)
    }

    fn cov_uq(&self) -> f64 {
        self.int_uq / self.duration - self.mean_u() * self.mean_q()
    }
}

/// Whole-run admission counts, warmup included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AdmissionCounts {
    pub arrivals: u64,
    pub admitted: u64,
    pub blocked: u64,
    pub departed_charged: u64,
    pub departed_uncharged: u64,
    pub in_system_end: u64,
}

impl AdmissionCounts {
    /// `admitted = departed charged + departed uncharged + still present`.
    pub fn is_conserved(&self) -> bool {
        self.admitted == self.departed_charged + self.departed_uncharged + self.in_system_end
            && self.arrivals == self.admitted + self.blocked
    }

    fn merge(&mut self, o: &AdmissionCounts) {
        self.arrivals += o.arrivals;
        self.admitted += o.admitted;
        self.blocked += o.blocked;
        self.departed_charged += o.departed_charged;
        self.departed_uncharged += o.departed_uncharged;
        self.in_system_end += o.in_system_end;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Event {
    Arrival { blocked: bool },
    Departure { charged: bool },
    Completion,
}

/// Routes time segments and events of one run into measurement batches.
pub(crate) struct Recorder {
    run_length: RunLength,
    warmup_time: f64,
    warmup_departures: u64,
    batch_len: f64,
    batches: Vec<BatchStats>,
    counts: AdmissionCounts,
    departures: u64,
    current: Option<usize>,
    now: f64,
}

impl Recorder {
    pub fn new(cfg: &SimConfig) -> Self {
        let nb = cfg.batches_per_run();
        let (warmup_time, warmup_departures, batch_len, current) = match cfg.run_length {
            RunLength::Horizon(t) => {
                let w = cfg.warmup * t;
                (w, 0, (t - w) / nb as f64, None)
            }
            RunLength::Departures(n) => {
                let w = (cfg.warmup * n as f64).floor() as u64;
                let per = ((n - w) as f64 / nb as f64).max(1.0);
                (0.0, w, per, if w == 0 { Some(0) } else { None })
            }
        };
        Self {
            run_length: cfg.run_length,
            warmup_time,
            warmup_departures,
            batch_len,
            batches: vec![BatchStats::default(); nb],
            counts: AdmissionCounts::default(),
            departures: 0,
            current,
            now: 0.0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Time at which the run stops, if it is time based.
    pub fn horizon(&self) -> f64 {
        match self.run_length {
            RunLength::Horizon(t) => t,
            RunLength::Departures(_) => f64::INFINITY,
        }
    }

    pub fn done(&self) -> bool {
        match self.run_length {
            RunLength::Horizon(t) => self.now >= t,
            RunLength::Departures(n) => self.departures >= n,
        }
    }

    /// Accumulates state `(u, q)` held on `[now, t]`.
    pub fn advance(&mut self, t: f64, u: usize, q: usize) {
        let (uf, qf) = (u as f64, q as f64);
        match self.run_length {
            RunLength::Horizon(_) => {
                let mut start = self.now.max(self.warmup_time);
                while start < t {
                    let b = (((start - self.warmup_time) / self.batch_len) as usize).min(self.batches.len() - 1);
                    let end = if b + 1 == self.batches.len() {
                        t
                    } else {
                        t.min(self.warmup_time + (b + 1) as f64 * self.batch_len)
                    };
                    if end <= start {
                        // rounding at a batch edge
                        break;
                    }
                    self.batches[b].add_segment(end - start, uf, qf);
                    start = end;
                }
            }
            RunLength::Departures(_) => {
                if let Some(b) = self.current {
                    self.batches[b].add_segment(t - self.now, uf, qf);
                }
            }
        }
        self.now = t;
    }

    fn active_batch(&self) -> Option<usize> {
        match self.run_length {
            RunLength::Horizon(_) => (self.now >= self.warmup_time)
                .then(|| (((self.now - self.warmup_time) / self.batch_len) as usize).min(self.batches.len() - 1)),
            RunLength::Departures(_) => self.current,
        }
    }

    pub fn event(&mut self, e: Event) {
        let batch = self.active_batch();
        match e {
            Event::Arrival { blocked } => {
                self.counts.arrivals += 1;
                if blocked {
                    self.counts.blocked += 1;
                } else {
                    self.counts.admitted += 1;
                }
                if let Some(b) = batch {
                    self.batches[b].arrivals += 1;
                    self.batches[b].blocked += u64::from(blocked);
                }
            }
            Event::Departure { charged } => {
                if charged {
                    self.counts.departed_charged += 1;
                } else {
                    self.counts.departed_uncharged += 1;
                }
                if let Some(b) = batch {
                    if charged {
                        self.batches[b].departed_charged += 1;
                    } else {
                        self.batches[b].departed_uncharged += 1;
                    }
                }
                self.departures += 1;
                if let RunLength::Departures(_) = self.run_length {
                    if self.departures >= self.warmup_departures {
                        let idx = ((self.departures - self.warmup_departures) as f64 / self.batch_len) as usize;
                        self.current = Some(idx.min(self.batches.len() - 1));
                    }
                }
            }
            Event::Completion => {}
        }
    }

    pub fn finish(mut self, in_system: usize) -> RunOutcome {
        self.counts.in_system_end = in_system as u64;
        RunOutcome { batches: self.batches, counts: self.counts }
    }
}

pub(crate) struct RunOutcome {
    pub batches: Vec<BatchStats>,
    pub counts: AdmissionCounts,
}

/// Estimates from a simulation, each with a CI across replications or batches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimates {
    pub e_u: EstimateWithCI,
    pub e_q: EstimateWithCI,
    pub e_c: EstimateWithCI,
    pub p_block: EstimateWithCI,
    /// Charged departures over all departures in the measurement window.
    pub success_departures: EstimateWithCI,
    /// Time-average `E[C] / E[Q]`.
    pub success_time_average: EstimateWithCI,
    pub var_u: EstimateWithCI,
    pub var_q: EstimateWithCI,
    pub cov_uq: EstimateWithCI,
    pub counts: AdmissionCounts,
    pub per_replication_counts: Vec<AdmissionCounts>,
}

impl SimEstimates {
    /// Time-average moments, averaged over replications or batches.
    pub fn moments(&self) -> crate::diffusion::Moments2 {
        crate::diffusion::Moments2 {
            mean_u: self.e_u.estimate,
            mean_q: self.e_q.estimate,
            var_u: self.var_u.estimate,
            var_q: self.var_q.estimate,
            cov_uq: self.cov_uq.estimate,
        }
    }
}

pub(crate) fn summarize(cfg: &SimConfig, runs: Vec<RunOutcome>) -> Result<SimEstimates> {
    let units: Vec<BatchStats> = match cfg.ci_method {
        CiMethod::BatchMeans => runs.iter().flat_map(|r| r.batches.iter().copied()).collect(),
        _ => runs
            .iter()
            .map(|r| {
                let mut total = BatchStats::default();
                r.batches.iter().for_each(|b| total.merge(b));
                total
            })
            .collect(),
    };
    let method = match cfg.ci_method {
        CiMethod::BatchMeans => CiMethod::BatchMeans,
        _ => CiMethod::Replications,
    };
    let admitted: u64 = units.iter().map(|b| b.arrivals - b.blocked).sum();
    if admitted == 0 {
        return Err(Error::NoAdmissions);
    }
    let ci = |f: &dyn Fn(&BatchStats) -> Option<f64>| {
        let xs: Vec<f64> = units.iter().filter_map(f).collect();
        t_interval(&xs, cfg.confidence, method)
    };
    let timed = |b: &BatchStats| b.duration > 0.0;
    let mut counts = AdmissionCounts::default();
    runs.iter().for_each(|r| counts.merge(&r.counts));
    Ok(SimEstimates {
        e_u: ci(&|b| timed(b).then(|| b.mean_u())),
        e_q: ci(&|b| timed(b).then(|| b.mean_q())),
        e_c: ci(&|b| timed(b).then(|| b.mean_q() - b.mean_u())),
        p_block: ci(&|b| (b.arrivals > 0).then(|| b.blocked as f64 / b.arrivals as f64)),
        success_departures: ci(&|b| (b.departures() > 0).then(|| b.departed_charged as f64 / b.departures() as f64)),
        success_time_average: ci(&|b| (b.int_q > 0.0).then(|| (b.int_q - b.int_u) / b.int_q)),
        var_u: ci(&|b| timed(b).then(|| b.var_u())),
        var_q: ci(&|b| timed(b).then(|| b.var_q())),
        cov_uq: ci(&|b| timed(b).then(|| b.cov_uq())),
        counts,
        per_replication_counts: runs.iter().map(|r| r.counts).collect(),
    })
}
