// SPDX-License-Identifier: Apache-2.0

//! First-moment renewal equations.
//!
//! With `u(t)` the expected rate at which particles reach the boundary and
//! `M(t)` the expected population size,
//!
//! ```text
//! u(t) = e^{-mt} κ₀(t) + ∫₀ᵗ e^{-ms} β(s) u(t-s) ds
//! M(t) = e^{-mt} K₀(t) + ∫₀ᵗ e^{-ms} B(s) u(t-s) ds
//! ```
//!
//! where `K₀(t) = ∫_t^∞ κ₀` and `B(s) = ∫_s^∞ β`. Both are discretised
//! with the trapezoid rule on a uniform grid; the implicit term at the
//! current node is linear in `u_n` and is solved for directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::Intensity;
use crate::kernels::CycleKernel;

/// Default relative tolerance of the step-halving check.
pub const DEFAULT_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalOptions {
    /// Step size; `0.01 / sup β` when absent.
    pub dt: Option<f64>,
    /// Largest accepted relative change between steps `h` and `h/2`.
    pub rel_tol: f64,
}

impl Default for RenewalOptions {
    fn default() -> Self {
        RenewalOptions {
            dt: None,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalSolution {
    pub m: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Boundary flux `u`.
    pub flux: Vec<f64>,
    /// Expected population size `M`.
    pub mean_size: Vec<f64>,
    /// Largest relative difference against the half-step solution; NaN
    /// when the check was skipped.
    pub richardson_error: f64,
}

impl RenewalSolution {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// `M(t)` by linear interpolation on the grid.
    pub fn mean_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.mean_size, self.dt, t)
    }

    pub fn flux_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.flux, self.dt, t)
    }
}

fn interpolate(times: &[f64], values: &[f64], dt: f64, t: f64) -> f64 {
    if !(t >= 0.0) || t > times[times.len() - 1] * (1.0 + 1e-12) {
        return f64::NAN;
    }
    let s = t / dt;
    let i = (s.floor() as usize).min(times.len() - 1);
    if i + 1 >= times.len() {
        return values[i];
    }
    let w = s - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Default step `0.01 / sup β`.
pub fn default_dt(kernel: &CycleKernel) -> Result<f64> {
    match kernel.marginal_sup() {
        Some(s) if s.is_finite() && s > 0.0 => Ok(0.01 / s),
        other => Err(Error::param(
            "dt",
            other.unwrap_or(f64::INFINITY),
            "sup β is not finite; give the step explicitly",
        )),
    }
}

fn check_inputs(m: f64, horizon: f64, dt: f64) -> Result<usize> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::param("m", m, "must be finite and ≥ 0"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("horizon", horizon, "must be finite and > 0"));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= horizon) {
        return Err(Error::param("dt", dt, "must lie in (0, T]"));
    }
    let steps = (horizon / dt).round();
    if steps > 5e7 {
        return Err(Error::param("dt", dt, "too many steps"));
    }
    Ok(steps.max(1.0) as usize)
}

/// Trapezoid solution with `round(T / dt)` steps, without any accuracy
/// check. The step is adjusted so the grid ends exactly at `T`.
pub fn solve_unchecked(
    kernel: &CycleKernel,
    m: f64,
    intensity: &Intensity,
    horizon: f64,
    dt: f64,
) -> Result<RenewalSolution> {
    let n = check_inputs(m, horizon, dt)?;
    let h = horizon / n as f64;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let decay: Vec<f64> = times.iter().map(|&t| (-m * t).exp()).collect();
    let k: Vec<f64> = times
        .iter()
        .zip(&decay)
        .map(|(&t, d)| d * kernel.marginal(t))
        .collect();
    let l: Vec<f64> = times
        .iter()
        .zip(&decay)
        .map(|(&t, d)| d * kernel.marginal_tail(t))
        .collect();

    let mut u = vec![0.0; n + 1];
    let mut big_m = vec![0.0; n + 1];
    u[0] = intensity.density(0.0);
    big_m[0] = intensity.mass();
    let denom = 1.0 - 0.5 * h * k[0];
    if denom <= 0.0 {
        return Err(Error::param("dt", dt, "step too large for the kernel"));
    }
    for i in 1..=n {
        let mut conv_u = 0.5 * k[i] * u[0];
        let mut conv_m = 0.5 * l[i] * u[0];
        for j in 1..i {
            conv_u += k[j] * u[i - j];
            conv_m += l[j] * u[i - j];
        }
        u[i] = (decay[i] * intensity.density(times[i]) + h * conv_u) / denom;
        big_m[i] = decay[i] * intensity.tail(times[i]) + h * (conv_m + 0.5 * l[0] * u[i]);
    }
    Ok(RenewalSolution {
        m,
        dt: h,
        times,
        flux: u,
        mean_size: big_m,
        richardson_error: f64::NAN,
    })
}

/// Largest relative difference of `M` between a solution and one with
/// half the step, over the coarse grid.
fn halving_error(coarse: &RenewalSolution, fine: &RenewalSolution) -> f64 {
    let scale = fine.mean_size.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
    coarse
        .mean_size
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let f = fine.mean_size[2 * i];
            (c - f).abs() / f.abs().max(floor)
        })
        .fold(0.0, f64::max)
}

/// Solves on `[0, T]` and checks the result against the half-step
/// solution, failing with [`Error::NonConvergence`] beyond `rel_tol`.
pub fn solve(
    kernel: &CycleKernel,
    m: f64,
    intensity: &Intensity,
    horizon: f64,
    options: RenewalOptions,
) -> Result<RenewalSolution> {
    let dt = match options.dt {
        Some(dt) => dt,
        None => default_dt(kernel)?.min(horizon),
    };
    let mut coarse = solve_unchecked(kernel, m, intensity, horizon, dt)?;
    let fine = solve_unchecked(kernel, m, intensity, horizon, coarse.dt / 2.0)?;
    let err = halving_error(&coarse, &fine);
    coarse.richardson_error = err;
    if !(err <= options.rel_tol) {
        return Err(Error::NonConvergence(format!(
            "renewal solution changed by {err:.3e} (relative) when halving dt = {:.3e}",
            coarse.dt
        )));
    }
    Ok(coarse)
}

/// Observed order of accuracy of `M` from steps `dt`, `dt/2`, `dt/4`.
pub fn convergence_order(
    kernel: &CycleKernel,
    m: f64,
    intensity: &Intensity,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let s1 = solve_unchecked(kernel, m, intensity, horizon, dt)?;
    let s2 = solve_unchecked(kernel, m, intensity, horizon, s1.dt / 2.0)?;
    let s4 = solve_unchecked(kernel, m, intensity, horizon, s1.dt / 4.0)?;
    let d12 = (0..s1.times.len())
        .map(|i| (s1.mean_size[i] - s2.mean_size[2 * i]).abs())
        .fold(0.0, f64::max);
    let d24 = (0..s1.times.len())
        .map(|i| (s2.mean_size[2 * i] - s4.mean_size[4 * i]).abs())
        .fold(0.0, f64::max);
    Ok((d12 / d24).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthVerdict {
    Growth,
    Decay,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub slope: f64,
    pub std_error: f64,
    pub residual_rms: f64,
    pub points: usize,
    pub verdict: GrowthVerdict,
}

/// Slopes smaller than this are never called growth or decay.
pub const MIN_DECISIVE_SLOPE: f64 = 1e-3;

/// Least-squares slope of `ln y` against `t` over the last third of the
/// series. Non-positive values are skipped. The verdict is inconclusive
/// when the slope is within two standard errors of zero or below
/// [`MIN_DECISIVE_SLOPE`] in magnitude.
pub fn growth_rate_from_series(times: &[f64], values: &[f64]) -> GrowthEstimate {
    let len = times.len().min(values.len());
    let start = len - ((len + 2) / 3).max(3).min(len);
    let pts: Vec<(f64, f64)> = times[start..len]
        .iter()
        .zip(&values[start..len])
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return GrowthEstimate {
            slope: f64::NAN,
            std_error: f64::NAN,
            residual_rms: f64::NAN,
            points: n,
            verdict: GrowthVerdict::Inconclusive,
        };
    }
    let nf = n as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx = pts.iter().map(|p| (p.0 - tm).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let sse = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>();
    let std_error = (sse / (nf - 2.0) / sxx).sqrt();
    let verdict = if slope.abs() <= 2.0 * std_error || slope.abs() < MIN_DECISIVE_SLOPE {
        GrowthVerdict::Inconclusive
    } else if slope > 0.0 {
        GrowthVerdict::Growth
    } else {
        GrowthVerdict::Decay
    };
    GrowthEstimate {
        slope,
        std_error,
        residual_rms: (sse / nf).sqrt(),
        points: n,
        verdict,
    }
}

/// Growth estimate of `M` from a renewal solution.
pub fn growth_rate(solution: &RenewalSolution) -> GrowthEstimate {
    growth_rate_from_series(&solution.times, &solution.mean_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_kernel() -> CycleKernel {
        CycleKernel::product_gamma(0, 1.0).unwrap()
    }

    #[test]
    fn exponential_case_grows_at_one_minus_m() {
        let k0 = Intensity::exponential(1.0, 1.0).unwrap();
        for m in [0.5, 1.0, 1.5] {
            let sol = solve(&exp_kernel(), m, &k0, 5.0, RenewalOptions::default()).unwrap();
            for (t, v) in sol.times.iter().zip(&sol.mean_size) {
                let exact = ((1.0 - m) * t).exp();
                assert!((v - exact).abs() / exact < 1e-4, "m={m} t={t} {v} {exact}");
            }
        }
    }

    #[test]
    fn second_order() {
        let k0 = Intensity::exponential(1.0, 1.0).unwrap();
        let kernel = CycleKernel::product_gamma(1, 1.0).unwrap();
        let p = convergence_order(&kernel, 0.3, &k0, 4.0, 0.05).unwrap();
        assert!((p - 2.0).abs() < 0.1, "{p}");
    }

    #[test]
    fn coarse_step_is_rejected() {
        let k0 = Intensity::exponential(1.0, 1.0).unwrap();
        let opts = RenewalOptions {
            dt: Some(0.5),
            rel_tol: 1e-6,
        };
        assert!(matches!(
            solve(&exp_kernel(), 0.2, &k0, 5.0, opts),
            Err(Error::NonConvergence(_))
        ));
    }

    #[test]
    fn growth_verdicts() {
        let t: Vec<f64> = (0..=300).map(|i| i as f64 * 0.1).collect();
        let up: Vec<f64> = t.iter().map(|x| (0.2 * x).exp()).collect();
        let down: Vec<f64> = t.iter().map(|x| (-0.2 * x).exp()).collect();
        let flat = vec![1.0; t.len()];
        assert_eq!(growth_rate_from_series(&t, &up).verdict, GrowthVerdict::Growth);
        assert_eq!(growth_rate_from_series(&t, &down).verdict, GrowthVerdict::Decay);
        assert_eq!(growth_rate_from_series(&t, &flat).verdict, GrowthVerdict::Inconclusive);
        assert!((growth_rate_from_series(&t, &up).slope - 0.2).abs() < 1e-10);
    }
}
