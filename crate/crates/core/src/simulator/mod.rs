// SPDX-License-Identifier: Apache-2.0

//! Exact event-driven simulation of the drift–fission–death process.
//!
//! Between events every trait decreases at unit speed. A particle whose
//! trait reaches zero splits into two progenies drawn from the cycle kernel;
//! independently every particle dies at rate `m`. The engine never
//! decrements traits: it stores the absolute time at which each particle
//! reaches the boundary, so the trait at time `t` is `fission_time − t`.
//!
//! The next event is the earlier of the smallest fission time and a death
//! time drawn from an exponential clock of rate `m·N`. That clock is kept
//! while `N` is unchanged, so observation times do not perturb the path.

mod ensemble;
mod queue;

pub use ensemble::{mean_and_se, run_ensemble, run_ensemble_member, GridSummary, ReplicaEnsemble};
pub use queue::{FissionQueue, Particle};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::configuration::{Configuration, WeightFunction};
use crate::error::{Error, Result};
use crate::kernels::CycleKernel;
use crate::rng::{stream, SimRng};

pub const DEFAULT_CAP: usize = 1_000_000;

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_true() -> bool {
    true
}

/// Model and observation parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-particle death rate.
    pub m: f64,
    pub kernel: CycleKernel,
    /// Simulation horizon `T`.
    pub horizon: f64,
    /// Largest population allowed; a fission that would exceed it stops
    /// the replica and flags it as capped.
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Sorted observation times in `[0, T]`.
    #[serde(default)]
    pub record_grid: Vec<f64>,
    /// When false a particle reaching the boundary just disappears.
    #[serde(default = "default_true")]
    pub branching: bool,
    /// Observables recorded at every grid time.
    #[serde(default)]
    pub weights: Vec<WeightFunction>,
}

impl ModelParams {
    pub fn new(m: f64, kernel: CycleKernel, horizon: f64) -> Self {
        ModelParams {
            m,
            kernel,
            horizon,
            cap: DEFAULT_CAP,
            record_grid: vec![horizon],
            branching: true,
            weights: Vec::new(),
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.record_grid = grid;
        self
    }

    pub fn with_weights(mut self, weights: Vec<WeightFunction>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// Pure drift with absorption at the boundary.
    pub fn without_branching(mut self) -> Self {
        self.branching = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::param("m", self.m, "must be finite and ≥ 0"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::param("horizon", self.horizon, "must be finite and > 0"));
        }
        if self.cap == 0 {
            return Err(Error::param("cap", 0.0, "must be ≥ 1"));
        }
        if let Some(&t) = self
            .record_grid
            .iter()
            .find(|t| !(t.is_finite() && **t >= 0.0 && **t <= self.horizon))
        {
            return Err(Error::param("record_grid", t, "times must lie in [0, T]"));
        }
        if self.record_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("record_grid", f64::NAN, "times must be sorted"));
        }
        self.weights.iter().try_for_each(WeightFunction::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Fission { left: f64, right: f64 },
    /// A particle reached the boundary with branching disabled.
    Absorption,
    Death { trait_value: f64 },
    /// The next fission would exceed the population cap.
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Population size after the event.
    pub size: usize,
}

/// One realisation of the process, advanced on demand.
pub struct Replica<'a> {
    params: &'a ModelParams,
    queue: FissionQueue,
    rng: SimRng,
    time: f64,
    pending_death: Option<f64>,
    capped_at: Option<f64>,
    extinct_at: Option<f64>,
    events: u64,
}

impl<'a> Replica<'a> {
    pub fn new(params: &'a ModelParams, init: &Configuration, rng: SimRng) -> Result<Self> {
        if init.len() > params.cap {
            return Err(Error::param(
                "cap",
                params.cap as f64,
                "initial configuration exceeds the population cap",
            ));
        }
        let mut queue = FissionQueue::with_capacity(init.len().max(16));
        for x in init.iter() {
            queue.push(x);
        }
        Ok(Replica {
            params,
            extinct_at: if init.is_empty() { Some(0.0) } else { None },
            queue,
            rng,
            time: 0.0,
            pending_death: None,
            capped_at: None,
            events: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn size(&self) -> usize {
        self.queue.len()
    }

    pub fn capped_at(&self) -> Option<f64> {
        self.capped_at
    }

    pub fn extinct_at(&self) -> Option<f64> {
        self.extinct_at
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Current traits in slot order (unsorted).
    pub fn traits(&self) -> impl Iterator<Item = f64> + '_ {
        let t = self.time;
        self.queue.particles().iter().map(move |p| p.fission_time - t)
    }

    pub fn configuration(&self) -> Configuration {
        Configuration::new(self.traits().map(|x| x.max(0.0)).collect())
            .expect("live traits are finite")
    }

    pub fn weights(&self) -> Vec<f64> {
        self.params
            .weights
            .iter()
            .map(|w| w.evaluate_traits(self.size(), self.traits()))
            .collect()
    }

    /// Processes every event at times `≤ target` (fissions exactly at
    /// `target` included) and moves the clock to `target`. Does nothing
    /// once the replica is capped.
    pub fn advance_to<F: FnMut(&Event)>(&mut self, target: f64, on_event: &mut F) {
        while self.capped_at.is_none() {
            let n = self.queue.len();
            let Some(next_fission) = self.queue.peek().map(|p| p.fission_time) else {
                break;
            };
            let death_at = if self.params.m > 0.0 {
                let now = self.time;
                let rate = self.params.m * n as f64;
                let rng = &mut self.rng;
                *self.pending_death.get_or_insert_with(|| {
                    let e: f64 = Exp1.sample(rng);
                    now + e / rate
                })
            } else {
                f64::INFINITY
            };
            if next_fission <= death_at {
                if next_fission > target {
                    break;
                }
                self.fission(next_fission, on_event);
            } else {
                if death_at > target {
                    break;
                }
                self.death(death_at, on_event);
            }
        }
        if self.capped_at.is_none() {
            self.time = self.time.max(target);
        }
    }

    fn fission<F: FnMut(&Event)>(&mut self, t: f64, on_event: &mut F) {
        self.time = t;
        self.pending_death = None;
        if !self.params.branching {
            self.queue.pop();
            self.finish_event(t, EventKind::Absorption, on_event);
            return;
        }
        if self.queue.len() + 1 > self.params.cap {
            self.capped_at = Some(t);
            on_event(&Event {
                time: t,
                kind: EventKind::Cap,
                size: self.queue.len(),
            });
            return;
        }
        self.queue.pop();
        let (left, right) = self.params.kernel.sample_pair(&mut self.rng);
        self.queue.push(t + left);
        self.queue.push(t + right);
        self.finish_event(t, EventKind::Fission { left, right }, on_event);
    }

    fn death<F: FnMut(&Event)>(&mut self, t: f64, on_event: &mut F) {
        self.time = t;
        self.pending_death = None;
        let victim = self.rng.random_range(0..self.queue.len());
        let p = self.queue.remove_at(victim);
        self.finish_event(
            t,
            EventKind::Death {
                trait_value: p.fission_time - t,
            },
            on_event,
        );
    }

    fn finish_event<F: FnMut(&Event)>(&mut self, t: f64, kind: EventKind, on_event: &mut F) {
        self.events += 1;
        if self.queue.is_empty() {
            self.extinct_at = Some(t);
        }
        on_event(&Event {
            time: t,
            kind,
            size: self.queue.len(),
        });
    }
}

/// Observation of one replica at a grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub size: usize,
    /// Values of the registered weight functions.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub initial_size: usize,
    /// One sample per grid time reached before any cap.
    pub samples: Vec<Sample>,
    pub capped_at: Option<f64>,
    pub extinct_at: Option<f64>,
    pub events: u64,
}

impl Trajectory {
    pub fn capped(&self) -> bool {
        self.capped_at.is_some()
    }
}

pub(crate) fn run_with_rng<F: FnMut(&Event)>(
    params: &ModelParams,
    init: &Configuration,
    seed: u64,
    rng: SimRng,
    on_event: &mut F,
) -> Result<Trajectory> {
    let mut replica = Replica::new(params, init, rng)?;
    let mut samples = Vec::with_capacity(params.record_grid.len());
    for &t in &params.record_grid {
        replica.advance_to(t, on_event);
        if replica.capped_at().is_some() {
            break;
        }
        samples.push(Sample {
            time: t,
            size: replica.size(),
            weights: replica.weights(),
        });
    }
    replica.advance_to(params.horizon, on_event);
    Ok(Trajectory {
        seed,
        initial_size: init.len(),
        samples,
        capped_at: replica.capped_at(),
        extinct_at: replica.extinct_at(),
        events: replica.events(),
    })
}

/// Simulates one replica from a fixed initial configuration.
pub fn run_replica(params: &ModelParams, init: &Configuration, seed: u64) -> Result<Trajectory> {
    params.validate()?;
    run_with_rng(params, init, seed, stream(seed), &mut |_| {})
}

/// Like [`run_replica`], reporting every event to `on_event`.
pub fn run_replica_with_events<F: FnMut(&Event)>(
    params: &ModelParams,
    init: &Configuration,
    seed: u64,
    on_event: &mut F,
) -> Result<Trajectory> {
    params.validate()?;
    run_with_rng(params, init, seed, stream(seed), on_event)
}
