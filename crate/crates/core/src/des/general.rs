//! Event-driven simulation with general parking and charging laws.
//!
//! Every uncharged EV receives power `min(1, M / U)`. Because all of them
//! progress at the same rate, one cumulative effort clock `S(t)` with
//! `dS/dt = min(1, M / U)` serves for all: an EV that arrives when the
//! clock reads `S0` with requirement `d` completes when `S(t) = S0 + d`.
//! Pending completions are kept ordered by that target so the next one is
//! always the first entry.
//!
//! Simultaneous events are resolved as departure, then completion, then
//! arrival.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use super::{summarize, AdmissionCounts, Event, Recorder, RunOutcome, SimConfig, SimEstimates};
use crate::error::{Error, Result};
use crate::fluid::DistributionSpec;
use crate::rng::{stream_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvStatus {
    Charging,
    Charged,
    DepartedCharged,
    DepartedUncharged,
    Blocked,
}

/// One EV's history. Blocked EVs carry no service fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvRecord {
    pub arrival: f64,
    pub parking: Option<f64>,
    pub requirement: Option<f64>,
    pub attained: Option<f64>,
    pub status: EvStatus,
}

#[derive(Debug, Clone)]
pub struct GeneralTrace {
    pub records: Vec<EvRecord>,
    pub counts: AdmissionCounts,
}

#[derive(Debug, Clone, Copy)]
struct Key(f64, usize);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone, Copy)]
struct Active {
    effort_start: f64,
    target: f64,
    charged: bool,
    record: usize,
}

pub fn simulate_general(
    lambda: f64,
    k: usize,
    m: f64,
    b: &DistributionSpec,
    d: &DistributionSpec,
    cfg: &SimConfig,
) -> Result<SimEstimates> {
    validate(lambda, k, m, b, d, cfg)?;
    let runs: Vec<RunOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(cfg.master_seed, cfg.stream(rep));
            Lot::new(lambda, k, m, b, d, false).run(cfg, &mut rng).0
        })
        .collect();
    summarize(cfg, runs)
}

/// Runs replication `rep` alone and returns every EV record.
pub fn simulate_general_trace(
    lambda: f64,
    k: usize,
    m: f64,
    b: &DistributionSpec,
    d: &DistributionSpec,
    cfg: &SimConfig,
    rep: usize,
) -> Result<GeneralTrace> {
    validate(lambda, k, m, b, d, cfg)?;
    let mut rng = stream_rng(cfg.master_seed, cfg.stream(rep));
    let (outcome, records) = Lot::new(lambda, k, m, b, d, true).run(cfg, &mut rng);
    Ok(GeneralTrace { records, counts: outcome.counts })
}

fn validate(lambda: f64, k: usize, m: f64, b: &DistributionSpec, d: &DistributionSpec, cfg: &SimConfig) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) || k == 0 || !(m > 0.0) {
        return Err(Error::InvalidParams(format!("need lambda > 0, K >= 1, M > 0; got {lambda}, {k}, {m}")));
    }
    b.validate()?;
    d.validate()?;
    cfg.validate()
}

struct Lot<'a> {
    lambda: f64,
    k: usize,
    m: f64,
    parking: &'a DistributionSpec,
    requirement: &'a DistributionSpec,
    trace: bool,
    slots: Vec<Option<Active>>,
    free: Vec<usize>,
    pending: BTreeSet<Key>,
    expiries: BinaryHeap<Reverse<Key>>,
    records: Vec<EvRecord>,
    effort: f64,
}

impl<'a> Lot<'a> {
    fn new(lambda: f64, k: usize, m: f64, b: &'a DistributionSpec, d: &'a DistributionSpec, trace: bool) -> Self {
        Self {
            lambda,
            k,
            m,
            parking: b,
            requirement: d,
            trace,
            slots: Vec::new(),
            free: Vec::new(),
            pending: BTreeSet::new(),
            expiries: BinaryHeap::new(),
            records: Vec::new(),
            effort: 0.0,
        }
    }

    fn share(&self) -> f64 {
        let u = self.pending.len();
        if u == 0 {
            0.0
        } else {
            (self.m / u as f64).min(1.0)
        }
    }

    fn run(mut self, cfg: &SimConfig, rng: &mut SimRng) -> (RunOutcome, Vec<EvRecord>) {
        let inter = Exp::new(self.lambda).expect("validated rate");
        let mut rec = Recorder::new(cfg);
        let horizon = rec.horizon();
        let mut next_arrival = inter.sample(rng);

        while !rec.done() {
            let now = rec.now();
            let rate = self.share();
            let t_dep = self.expiries.peek().map_or(f64::INFINITY, |Reverse(k)| k.0);
            let t_comp = match self.pending.first() {
                Some(k) if rate > 0.0 => now + ((k.0 - self.effort) / rate).max(0.0),
                _ => f64::INFINITY,
            };
            let t = t_dep.min(t_comp).min(next_arrival);
            let (u, q) = (self.pending.len(), self.expiries.len());
            if t >= horizon {
                rec.advance(horizon, u, q);
                break;
            }
            rec.advance(t, u, q);
            self.effort += rate * (t - now);

            if t_dep <= t {
                let Reverse(Key(_, id)) = self.expiries.pop().expect("peeked");
                let ev = self.slots[id].take().expect("active EV");
                self.free.push(id);
                if !ev.charged {
                    self.pending.remove(&Key(ev.target, id));
                }
                if self.trace {
                    let r = &mut self.records[ev.record];
                    r.status = if ev.charged { EvStatus::DepartedCharged } else { EvStatus::DepartedUncharged };
                    if !ev.charged {
                        let need = r.requirement.unwrap_or(0.0);
                        r.attained = Some((self.effort - ev.effort_start).min(need));
                    }
                }
                rec.event(Event::Departure { charged: ev.charged });
            } else if t_comp <= t {
                let Key(target, id) = self.pending.pop_first().expect("pending completion");
                self.effort = target;
                let ev = self.slots[id].as_mut().expect("active EV");
                ev.charged = true;
                if self.trace {
                    let r = &mut self.records[ev.record];
                    r.status = EvStatus::Charged;
                    r.attained = r.requirement;
                }
                rec.event(Event::Completion);
            } else {
                next_arrival = t + inter.sample(rng);
                let blocked = q == self.k;
                if blocked {
                    if self.trace {
                        self.records.push(EvRecord {
                            arrival: t,
                            parking: None,
                            requirement: None,
                            attained: None,
                            status: EvStatus::Blocked,
                        });
                    }
                } else {
                    self.admit(t, rng);
                }
                rec.event(Event::Arrival { blocked });
            }
        }
        let in_system = self.expiries.len();
        (rec.finish(in_system), self.records)
    }

    fn admit(&mut self, t: f64, rng: &mut SimRng) {
        let stay = self.parking.sample(rng);
        let need = self.requirement.sample(rng);
        let id = self.free.pop().unwrap_or_else(|| {
            self.slots.push(None);
            self.slots.len() - 1
        });
        let record = self.records.len();
        if self.trace {
            self.records.push(EvRecord {
                arrival: t,
                parking: Some(stay),
                requirement: Some(need),
                attained: Some(0.0),
                status: EvStatus::Charging,
            });
        }
        let target = self.effort + need;
        self.slots[id] = Some(Active { effort_start: self.effort, target, charged: false, record });
        self.pending.insert(Key(target, id));
        self.expiries.push(Reverse(Key(t + stay, id)));
    }
}
