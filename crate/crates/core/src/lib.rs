// SPDX-License-Identifier: Apache-2.0

//! Drift–fission–death particle populations.
//!
//! Every particle carries a trait, the time left until it divides. Traits
//! decrease at unit speed; at zero the particle is replaced by two
//! progenies whose traits are drawn from a symmetric cycle kernel `b`, and
//! each particle independently dies at rate `m`.
//!
//! The crate provides an exact event-driven simulator, the thresholds on
//! `m` derived from `b`, the first-moment renewal equations, the closed-form
//! branch-free model, and executable checks of the Lyapunov argument that
//! the population stays finite.

pub mod configuration;
pub mod error;
pub mod intensity;
pub mod kernels;
pub mod output;
pub mod quadrature;
pub mod renewal;
pub mod rng;
pub mod simulator;
pub mod soluble;
pub mod thresholds;
pub mod validate;

pub use configuration::{phi, Configuration, WeightFunction};
pub use error::{Error, Result};
pub use intensity::{InitialStateSpec, Intensity, Profile, Table1d};
pub use kernels::{fit_envelope, CycleKernel, Envelope, KernelSpec, Table2d, KERNEL_TYPES};
pub use renewal::{GrowthEstimate, GrowthVerdict, RenewalOptions, RenewalSolution};
pub use simulator::{
    run_ensemble, run_replica, Event, EventKind, ModelParams, ReplicaEnsemble, Sample, Trajectory,
};
pub use soluble::SolubleState;
pub use thresholds::ThresholdReport;
