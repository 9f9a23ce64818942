// SPDX-License-Identifier: Apache-2.0

//! Pure drift without branching or death.
//!
//! A Poisson configuration with intensity `κ₀` stays Poisson: at time `t`
//! its intensity is `κ₀(· + t)` restricted to `[0, ∞)`. The evolution is
//! a translation, so composing two steps just adds the shifts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::Intensity;
use crate::quadrature::{dyadic_partition, integrate_segments};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolubleState {
    pub intensity: Intensity,
    /// Total elapsed drift.
    pub t: f64,
}

impl SolubleState {
    pub fn new(intensity: Intensity) -> Self {
        SolubleState { intensity, t: 0.0 }
    }

    pub fn evolve(&self, dt: f64) -> Result<SolubleState> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::param("t", dt, "must be finite and ≥ 0"));
        }
        Ok(SolubleState {
            intensity: self.intensity.clone(),
            t: self.t + dt,
        })
    }

    /// Intensity at trait `x` after the drift.
    pub fn kappa(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.intensity.density(x + self.t)
        }
    }

    /// Expected number of surviving particles.
    pub fn mean_size(&self) -> f64 {
        self.intensity.tail(self.t)
    }
}

/// Evolves `κ₀` by `t`.
pub fn evolve(kappa0: &Intensity, t: f64) -> Result<SolubleState> {
    SolubleState::new(kappa0.clone()).evolve(t)
}

/// Outcome of the moment comparison `N_l(t) ≤ N_l(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub l: u32,
    pub t: f64,
    pub initial: f64,
    pub evolved: f64,
    pub pass: bool,
}

/// `E |γ|^l` for a Poisson count with mean `mu`.
fn poisson_moment(l: u32, mu: f64) -> Result<f64> {
    match l {
        0 => Ok(1.0),
        1 => Ok(mu),
        2 => Ok(mu + mu * mu),
        _ => Err(Error::UnsupportedMoment(l)),
    }
}

/// Checks that the `l`-th moment of the particle count does not grow.
pub fn moment_bound_check(kappa0: &Intensity, t: f64, l: u32) -> Result<MomentCheck> {
    let state = evolve(kappa0, t)?;
    let initial = poisson_moment(l, kappa0.mass())?;
    let evolved = poisson_moment(l, state.mean_size())?;
    Ok(MomentCheck {
        l,
        t,
        initial,
        evolved,
        pass: evolved <= initial * (1.0 + 1e-12),
    })
}

/// `∫ |κ_a − κ_b|` over `[0, ∞)`.
pub fn l1_distance(a: &SolubleState, b: &SolubleState) -> f64 {
    let points: Vec<f64> = [&a.intensity, &b.intensity]
        .iter()
        .zip([a.t, b.t])
        .flat_map(|(k, shift)| {
            let mut p = k.profile().breakpoints();
            p.push(k.profile().tail_cutoff(1e-14));
            p.into_iter().map(move |x| x - shift)
        })
        .filter(|&x| x > 0.0)
        .collect();
    let x_max = points.iter().copied().fold(0.0, f64::max);
    if x_max == 0.0 {
        return 0.0;
    }
    let points = dyadic_partition(x_max, &points);
    integrate_segments(|x| (a.kappa(x) - b.kappa(x)).abs(), &points, 1e-12).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_mean_size() {
        let k = Intensity::exponential(3.0, 2.0).unwrap();
        let s = evolve(&k, 0.5).unwrap();
        assert!((s.mean_size() - 3.0 * (-1.0f64).exp()).abs() < 1e-14);
        assert!((s.kappa(0.25) - k.density(0.75)).abs() < 1e-15);
        assert_eq!(s.kappa(-1.0), 0.0);
    }

    #[test]
    fn higher_moments_unsupported() {
        let k = Intensity::exponential(1.0, 1.0).unwrap();
        assert!(matches!(
            moment_bound_check(&k, 1.0, 3),
            Err(Error::UnsupportedMoment(3))
        ));
    }

    #[test]
    fn uniform_l1_distance() {
        let k = Intensity::uniform(2.0, 0.0, 4.0).unwrap();
        let a = evolve(&k, 0.0).unwrap();
        let b = evolve(&k, 1.0).unwrap();
        // Densities 0.5 on [0,4] vs [0,3]: they differ on [3,4].
        assert!((l1_distance(&a, &b) - 0.5).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn evolution_composes(mass in 0.1f64..10.0, rate in 0.1f64..5.0,
                              s in 0.0f64..3.0, t in 0.0f64..3.0) {
            let k = Intensity::exponential(mass, rate).unwrap();
            let two = evolve(&k, s).unwrap().evolve(t).unwrap();
            let one = evolve(&k, s + t).unwrap();
            prop_assert!(l1_distance(&one, &two) < 1e-12 * mass.max(1.0));
        }

        #[test]
        fn moments_never_grow(mass in 0.0f64..20.0, rate in 0.1f64..5.0,
                              t in 0.0f64..10.0, l in 0u32..3) {
            let k = Intensity::exponential(mass, rate).unwrap();
            prop_assert!(moment_bound_check(&k, t, l).unwrap().pass);
        }
    }
}
