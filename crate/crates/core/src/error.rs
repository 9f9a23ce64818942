// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("negative shift by {shift} would move trait {trait_value} below zero")]
    NegativeShift { shift: f64, trait_value: f64 },

    #[error("trait {0} is negative or not finite")]
    InvalidTrait(f64),

    #[error("intensity has non-finite or non-positive integral ({0})")]
    NonFiniteIntegral(f64),

    #[error("tabulated data invalid: {0}")]
    InvalidTable(String),

    #[error("kernel is not normalized: (1/2)∫∫b = {0}")]
    NotNormalized(f64),

    #[error(
        "envelope ratio grows in the tail (σ = {sigma}, ratio {inner} at x = {x_inner} vs {outer} at x = {x_outer}); σ too small for this kernel"
    )]
    EnvelopeUnbounded {
        sigma: f64,
        x_inner: f64,
        inner: f64,
        x_outer: f64,
        outer: f64,
    },

    #[error("moment of order {0} is not supported (expected 0, 1 or 2)")]
    UnsupportedMoment(u32),

    #[error("root bracket not found for target {target} (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoBracket { target: f64, f_lo: f64, f_hi: f64 },

    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
