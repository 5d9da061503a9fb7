use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::{summarize, Event, Recorder, RunOutcome, SimConfig, SimEstimates};
use crate::error::Result;
use crate::model::{power, ModelParams};
use crate::rng::{stream_rng, SimRng};

/// Jump simulation of the `(U, Q)` chain.
///
/// Arrival attempts occur at rate `lambda` in every state so that blocked
/// arrivals can be counted; an attempt with `q = K` is lost.
pub fn simulate_markovian(p: &ModelParams, cfg: &SimConfig) -> Result<SimEstimates> {
    p.validate()?;
    cfg.validate()?;
    let runs: Vec<RunOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_once(p, cfg, &mut stream_rng(cfg.master_seed, cfg.stream(rep))))
        .collect();
    summarize(cfg, runs)
}

fn run_once(p: &ModelParams, cfg: &SimConfig, rng: &mut SimRng) -> RunOutcome {
    let mut rec = Recorder::new(cfg);
    let horizon = rec.horizon();
    let (mut u, mut q) = (0usize, 0usize);
    while !rec.done() {
        let uncharged_leave = p.mu * u as f64;
        let charged_leave = p.mu * (q - u) as f64;
        let charge = p.nu * power(u, p.m);
        let total = p.lambda + uncharged_leave + charged_leave + charge;
        let e: f64 = Exp1.sample(rng);
        let t = rec.now() + e / total;
        if t >= horizon {
            rec.advance(horizon, u, q);
            break;
        }
        rec.advance(t, u, q);
        let r = rng.random::<f64>() * total;
        if r < p.lambda {
            let blocked = q == p.k;
            if !blocked {
                u += 1;
                q += 1;
            }
            rec.event(Event::Arrival { blocked });
        } else if r < p.lambda + uncharged_leave {
            u -= 1;
            q -= 1;
            rec.event(Event::Departure { charged: false });
        } else if r < p.lambda + uncharged_leave + charged_leave || u == 0 {
            q -= 1;
            rec.event(Event::Departure { charged: true });
        } else {
            u -= 1;
            rec.event(Event::Completion);
        }
    }
    rec.finish(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::RunLength;
    use crate::stats::CiMethod;

    #[test]
    fn same_seed_same_output() {
        let p = ModelParams::new(3.0, 1.0, 2.0, 4, 1.5).unwrap();
        let cfg = SimConfig { run_length: RunLength::Horizon(200.0), replications: 4, ..Default::default() };
        let a = simulate_markovian(&p, &cfg).unwrap();
        let b = simulate_markovian(&p, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_markovian(&p, &SimConfig { master_seed: 99, ..cfg }).unwrap();
        assert_ne!(a.e_u.estimate, c.e_u.estimate);
    }

    #[test]
    fn admissions_are_conserved_per_run() {
        let p = ModelParams::new(5.0, 1.0, 1.0, 3, 2.0).unwrap();
        for run_length in [RunLength::Horizon(300.0), RunLength::Departures(5000)] {
            let cfg = SimConfig { run_length, replications: 3, ..Default::default() };
            let est = simulate_markovian(&p, &cfg).unwrap();
            assert!(est.per_replication_counts.iter().all(|c| c.is_conserved()));
            assert!(est.counts.is_conserved());
            if let RunLength::Departures(n) = run_length {
                for c in &est.per_replication_counts {
                    assert_eq!(c.departed_charged + c.departed_uncharged, n);
                }
            }
        }
    }

    #[test]
    fn light_traffic_limit() {
        let p = ModelParams::new(0.01, 1.0, 1.0, 3, 1.0).unwrap();
        let cfg = SimConfig { run_length: RunLength::Horizon(100_000.0), replications: 10, ..Default::default() };
        let est = simulate_markovian(&p, &cfg).unwrap();
        assert!(est.p_block.estimate < 1e-3);
        assert!((est.success_departures.estimate - 0.5).abs() < 0.05);
    }

    #[test]
    fn batch_means_mode() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 1, 1.0).unwrap();
        let cfg = SimConfig {
            run_length: RunLength::Horizon(50_000.0),
            replications: 1,
            ci_method: CiMethod::BatchMeans,
            batch_count: 25,
            ..Default::default()
        };
        let est = simulate_markovian(&p, &cfg).unwrap();
        assert_eq!(est.success_time_average.samples, 25);
        assert_eq!(est.success_time_average.method, CiMethod::BatchMeans);
        assert!(est.success_time_average.covers(0.5));
    }
}
