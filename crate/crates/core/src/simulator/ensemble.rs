// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_with_rng, Event, ModelParams, Trajectory};
use crate::error::Result;
use crate::intensity::InitialStateSpec;
use crate::output::fmt_num;
use crate::rng::{replica_seed, stream};

/// Cross-replica statistics at one grid time. Capped replicas are excluded
/// from the means and counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub time: f64,
    pub replicas: usize,
    pub recorded: usize,
    pub mean_size: f64,
    pub se_size: f64,
    pub mean_weights: Vec<f64>,
    pub se_weights: Vec<f64>,
    pub capped: usize,
    pub extinct: usize,
    pub live: usize,
}

impl GridSummary {
    pub fn capped_fraction(&self) -> f64 {
        self.capped as f64 / self.replicas as f64
    }

    pub fn extinct_fraction(&self) -> f64 {
        self.extinct as f64 / self.replicas as f64
    }

    pub fn live_fraction(&self) -> f64 {
        self.live as f64 / self.replicas as f64
    }
}

/// Mean and standard error (n − 1 variance); the error is NaN below two
/// observations.
pub fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    match n {
        0 => (f64::NAN, f64::NAN),
        1 => (mean, f64::NAN),
        _ => (mean, (m2 / (n - 1) as f64 / n as f64).sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaEnsemble {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub trajectories: Vec<Trajectory>,
    pub summary: Vec<GridSummary>,
}

impl ReplicaEnsemble {
    pub fn from_trajectories(
        base_seed: u64,
        grid: &[f64],
        n_weights: usize,
        trajectories: Vec<Trajectory>,
    ) -> Self {
        let summary = grid
            .iter()
            .enumerate()
            .map(|(g, &time)| summarize(g, time, n_weights, &trajectories))
            .collect();
        ReplicaEnsemble {
            base_seed,
            seeds: trajectories.iter().map(|t| t.seed).collect(),
            trajectories,
            summary,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn capped_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.capped()).count()
    }

    /// Summary CSV; the first column of weight statistics refers to the
    /// first registered weight function.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# base_seed={}\n", self.base_seed);
        out.push_str("time,mean_N,se_N,mean_h,se_h,capped_fraction,extinct_fraction\n");
        for s in &self.summary {
            let (mh, sh) = match (s.mean_weights.first(), s.se_weights.first()) {
                (Some(&m), Some(&e)) => (m, e),
                _ => (f64::NAN, f64::NAN),
            };
            let row = [
                s.time,
                s.mean_size,
                s.se_size,
                mh,
                sh,
                s.capped_fraction(),
                s.extinct_fraction(),
            ];
            let cells: Vec<String> = row.iter().map(|&v| fmt_num(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn summarize(g: usize, time: f64, n_weights: usize, trajectories: &[Trajectory]) -> GridSummary {
    let recorded: Vec<_> = trajectories
        .iter()
        .filter_map(|t| t.samples.get(g))
        .collect();
    let (mean_size, se_size) = mean_and_se(recorded.iter().map(|s| s.size as f64));
    let (mean_weights, se_weights) = (0..n_weights)
        .map(|w| mean_and_se(recorded.iter().map(|s| s.weights[w])))
        .unzip();
    let extinct = recorded.iter().filter(|s| s.size == 0).count();
    GridSummary {
        time,
        replicas: trajectories.len(),
        recorded: recorded.len(),
        mean_size,
        se_size,
        mean_weights,
        se_weights,
        capped: trajectories.len() - recorded.len(),
        extinct,
        live: recorded.len() - extinct,
    }
}

/// Runs `n_replicas` independent replicas on the current rayon pool.
///
/// Replica `i` uses seed `replica_seed(base_seed, i)`; its initial state and
/// its dynamics draw from that single stream, so results do not depend on
/// the number of worker threads.
pub fn run_ensemble(
    params: &ModelParams,
    init: &InitialStateSpec,
    n_replicas: usize,
    base_seed: u64,
) -> Result<ReplicaEnsemble> {
    params.validate()?;
    let trajectories = (0..n_replicas as u64)
        .into_par_iter()
        .map(|i| run_member(params, init, base_seed, i, &mut |_| {}))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicaEnsemble::from_trajectories(
        base_seed,
        &params.record_grid,
        params.weights.len(),
        trajectories,
    ))
}

fn run_member<F: FnMut(&Event)>(
    params: &ModelParams,
    init: &InitialStateSpec,
    base_seed: u64,
    index: u64,
    on_event: &mut F,
) -> Result<Trajectory> {
    let seed = replica_seed(base_seed, index);
    let mut rng = stream(seed);
    let gamma = init.sample(&mut rng)?;
    run_with_rng(params, &gamma, seed, rng, on_event)
}

/// Replays replica `index` of [`run_ensemble`], reporting its events.
pub fn run_ensemble_member<F: FnMut(&Event)>(
    params: &ModelParams,
    init: &InitialStateSpec,
    base_seed: u64,
    index: u64,
    on_event: &mut F,
) -> Result<Trajectory> {
    params.validate()?;
    run_member(params, init, base_seed, index, on_event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::CycleKernel;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let (m, se) = mean_and_se(xs.iter().copied());
        let mean = 4.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((m - mean).abs() < 1e-14);
        assert!((se - (var / 5.0).sqrt()).abs() < 1e-14);
        assert!(mean_and_se([3.0].into_iter()).1.is_nan());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let params = ModelParams::new(0.8, CycleKernel::product_gamma(1, 1.0).unwrap(), 5.0)
            .with_grid(vec![1.0, 2.5, 5.0]);
        let init = InitialStateSpec::Fixed {
            traits: crate::configuration::Configuration::new(vec![0.2, 0.9]).unwrap(),
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_ensemble(&params, &init, 64, 11)).unwrap();
        let b = three.install(|| run_ensemble(&params, &init, 64, 11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let replay = run_ensemble_member(&params, &init, 11, 5, &mut |_| {}).unwrap();
        assert_eq!(replay, a.trajectories[5]);
    }
}
