// SPDX-License-Identifier: Apache-2.0

//! Mortality thresholds derived from a cycle kernel.
//!
//! * `m₁ = max{0, (σ-1)/(2σ-5) · (b*/2 − σ)}`: above it the Lyapunov weight
//!   `v` certifies that no probability mass escapes to infinity;
//! * `α, ς` with `β̂(α) = 1 − ς < 1`: the weight `h_{ς,α}`;
//! * `m₂`: both `min{m₁, α}` and `max{m₁, α}` are reported, since only the
//!   latter is compatible with `m₂ ≥ m₁`;
//! * `m*` with `β̂(m*) = 1`: the exact boundary between bounded and
//!   exponentially growing mean population size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{fit_envelope, CycleKernel, Envelope};
use crate::quadrature::bisect_decreasing;

/// Interval width at which the bisections stop.
pub const ROOT_TOL: f64 = 1e-12;

pub fn compute_m1(sigma: f64, b_star: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 3.0) {
        return Err(Error::param("sigma", sigma, "m₁ requires σ ≥ 3"));
    }
    if !(b_star.is_finite() && b_star > 0.0) {
        return Err(Error::param("b_star", b_star, "must be finite and > 0"));
    }
    Ok(((sigma - 1.0) / (2.0 * sigma - 5.0) * (0.5 * b_star - sigma)).max(0.0))
}

/// Solves `β̂(α) = target` for `target ∈ (0, 1)`; returns `(α, ς = 1 − target)`.
pub fn find_alpha(kernel: &CycleKernel, target: f64) -> Result<(f64, f64)> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param("target", target, "must lie in (0, 1)"));
    }
    let alpha = bisect_decreasing(|a| kernel.beta_hat(a), target, ROOT_TOL)?;
    Ok((alpha, 1.0 - target))
}

/// The root of `β̂(m) = 1`.
pub fn compute_m_star(kernel: &CycleKernel) -> Result<f64> {
    bisect_decreasing(|a| kernel.beta_hat(a), 1.0, ROOT_TOL)
}

/// Exponential growth rate `λ` of the mean population size at mortality
/// `m`: the root of `β̂(m + λ) = 1`, i.e. `m* − m`.
pub fn malthusian_rate(kernel: &CycleKernel, m: f64) -> Result<f64> {
    Ok(compute_m_star(kernel)? - m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub sigma: f64,
    pub b_star: f64,
    pub m1: f64,
    pub alpha: f64,
    pub varsigma: f64,
    pub beta_hat_at_alpha: f64,
    /// `min{m₁, α}`
    pub m2_min: f64,
    /// `max{m₁, α}`
    pub m2_max: f64,
    /// Set when `min{m₁, α} < m₁`, i.e. the min reading contradicts `m₂ ≥ m₁`.
    pub m2_min_below_m1: bool,
    pub m_star: f64,
    pub envelope: Envelope,
}

impl ThresholdReport {
    /// Mortality at and above which the `h_{ς,α}` bound is guaranteed
    /// (`max{m₁, α}`).
    pub fn safe_mortality(&self) -> f64 {
        self.m2_max
    }

    /// Human-readable two-column table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("sigma", self.sigma),
            ("b_star", self.b_star),
            ("m1", self.m1),
            ("alpha", self.alpha),
            ("varsigma", self.varsigma),
            ("beta_hat(alpha)", self.beta_hat_at_alpha),
            ("m2 = min{m1, alpha}", self.m2_min),
            ("m2 = max{m1, alpha}", self.m2_max),
            ("m_star", self.m_star),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            out.push_str(&format!("{name:<22} {value:>24.16e}\n"));
        }
        if self.m2_min_below_m1 {
            out.push_str("note: min{m1, alpha} < m1\n");
        }
        out
    }
}

pub fn build_report(kernel: &CycleKernel, sigma: f64, target: f64) -> Result<ThresholdReport> {
    let envelope = fit_envelope(kernel, sigma)?;
    report_from_envelope(kernel, envelope, target)
}

/// Assembles a report around an already fitted envelope.
pub fn report_from_envelope(
    kernel: &CycleKernel,
    envelope: Envelope,
    target: f64,
) -> Result<ThresholdReport> {
    let m1 = compute_m1(envelope.sigma, envelope.b_star)?;
    let (alpha, varsigma) = find_alpha(kernel, target)?;
    let m_star = compute_m_star(kernel)?;
    Ok(ThresholdReport {
        sigma: envelope.sigma,
        b_star: envelope.b_star,
        m1,
        alpha,
        varsigma,
        beta_hat_at_alpha: kernel.beta_hat(alpha),
        m2_min: m1.min(alpha),
        m2_max: m1.max(alpha),
        m2_min_below_m1: m1.min(alpha) < m1,
        m_star,
        envelope,
    })
}

/// σ values scanned by [`scan_sigma`].
pub fn sigma_grid() -> Vec<f64> {
    (0..=10).map(|i| 3.0 + 0.5 * f64::from(i)).collect()
}

/// `(σ, b*, m₁)` for every σ of [`sigma_grid`] whose envelope exists.
pub fn scan_sigma(kernel: &CycleKernel) -> Vec<(f64, f64, f64)> {
    sigma_grid()
        .into_iter()
        .filter_map(|s| {
            let env = fit_envelope(kernel, s).ok()?;
            Some((s, env.b_star, compute_m1(s, env.b_star).ok()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m1_examples() {
        assert_eq!(compute_m1(3.0, 4.0).unwrap(), 0.0);
        assert_eq!(compute_m1(3.0, 8.0).unwrap(), 2.0);
        assert_eq!(compute_m1(4.0, 16.0).unwrap(), 4.0);
        assert_eq!(compute_m1(3.0, 6.0).unwrap(), 0.0);
        assert!(compute_m1(2.9, 8.0).is_err());
    }

    #[test]
    fn m1_is_monotone_in_b_star() {
        let mut last = 0.0;
        for i in 0..200 {
            let m1 = compute_m1(3.5, 0.5 * f64::from(i) + 0.1).unwrap();
            assert!(m1 >= last);
            last = m1;
        }
    }

    #[test]
    fn find_alpha_closed_forms() {
        let (a, s) = find_alpha(&CycleKernel::product_gamma(0, 1.0).unwrap(), 0.5).unwrap();
        assert!((a - 3.0).abs() < 1e-8 && s == 0.5);
        let (a, _) = find_alpha(&CycleKernel::product_gamma(1, 1.0).unwrap(), 0.5).unwrap();
        assert!((a - 1.0).abs() < 1e-8);
        // 2a/(a+α) = t ⇒ α = a(2/t − 1) → a as t → 1.
        let k = CycleKernel::product_gamma(0, 2.0).unwrap();
        let (a, _) = find_alpha(&k, 1.0 - 1e-9).unwrap();
        assert!((a - 2.0).abs() < 1e-8, "{a}");
        assert!(find_alpha(&k, 1.0).is_err());
        assert!(find_alpha(&k, 0.0).is_err());
    }

    #[test]
    fn m_star_closed_forms() {
        let m = |k, a| compute_m_star(&CycleKernel::product_gamma(k, a).unwrap()).unwrap();
        assert!((m(0, 1.0) - 1.0).abs() < 1e-8);
        assert!((m(1, 1.0) - (2f64.sqrt() - 1.0)).abs() < 1e-8);
        assert!((m(0, 5.0) - 5.0).abs() < 1e-8);
    }

    #[test]
    fn report_for_exponential_kernel() {
        let k = CycleKernel::product_gamma(0, 1.0).unwrap();
        let r = build_report(&k, 3.0, 0.5).unwrap();
        assert!((r.m_star - 1.0).abs() < 1e-8);
        assert!((r.alpha - 3.0).abs() < 1e-8);
        assert_eq!(r.varsigma, 0.5);
        assert_eq!(r.m1, compute_m1(3.0, r.b_star).unwrap());
        assert!(r.m_star < r.alpha);
        assert_eq!(r.m2_max, r.m1.max(r.alpha));
        let json = serde_json::to_string(&r).unwrap();
        let back: ThresholdReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn report_for_uniform_square() {
        let k = CycleKernel::tabulated(vec![0.0, 1.0], vec![vec![2.0; 2]; 2]).unwrap();
        let r = build_report(&k, 3.0, 0.5).unwrap();
        // b* = 128 before the 1% inflation gives m₁ = 2(64 − 3).
        assert_eq!(compute_m1(3.0, r.envelope.sup_ratio).unwrap(), 122.0);
        assert!(r.m1 >= 122.0 && r.m1 <= 2.0 * (0.5 * 128.0 * 1.01 - 3.0) + 1e-9);
        assert!(r.m2_min_below_m1);
    }

    #[test]
    fn envelope_shaped_kernel_sits_on_the_b_star_le_2_sigma_branch() {
        let k = CycleKernel::phi_envelope(3.0).unwrap();
        let r = build_report(&k, 3.0, 0.5).unwrap();
        assert_eq!(compute_m1(3.0, r.envelope.sup_ratio.min(6.0)).unwrap(), 0.0);
        // Only the 1% inflation lifts m₁ above zero.
        assert!(r.m1 <= 2.0 * (0.5 * 6.0 * 1.01 - 3.0) + 1e-9, "{}", r.m1);
        assert_eq!(r.m2_min, r.m1.min(r.alpha));
    }

    #[test]
    fn m1_grows_with_sigma_for_exponential_tails() {
        // The ratio e^{-x-y} / φ-shape peaks near x = y = σ - 1/2 and grows
        // without bound in σ.
        let k = CycleKernel::product_gamma(0, 1.0).unwrap();
        let scan = scan_sigma(&k);
        assert_eq!(scan.len(), 11);
        assert!(scan.windows(2).all(|w| w[1].2 > w[0].2 && w[1].2.is_finite()), "{scan:?}");
    }
}
