// SPDX-License-Identifier: Apache-2.0

//! Executable checks of the honesty argument: the Lyapunov weight
//! `v(γ) = |γ|! Π φ_σ(x)`, the sign of `Υ(ς, α)`, and Monte Carlo evidence
//! that probability mass is conserved.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::configuration::{phi, Configuration, WeightFunction};
use crate::error::{Error, Result};
use crate::intensity::InitialStateSpec;
use crate::kernels::{catalog, fit_envelope, CycleKernel, Envelope};
use crate::rng::stream;
use crate::simulator::{run_ensemble, ModelParams, ReplicaEnsemble};
use crate::soluble::moment_bound_check;
use crate::intensity::Intensity;
use crate::thresholds::{build_report, compute_m1, compute_m_star, find_alpha, ThresholdReport};

/// `v(γ) = |γ|! Π_{x∈γ} φ_σ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovFunction {
    pub sigma: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

impl LyapunovFunction {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 3.0) {
            return Err(Error::param("sigma", sigma, "must be ≥ 3"));
        }
        Ok(LyapunovFunction { sigma })
    }

    pub fn ln_value(&self, gamma: &Configuration) -> f64 {
        ln_factorial(gamma.len()) - self.sigma * gamma.iter().map(f64::ln_1p).sum::<f64>()
    }

    pub fn value(&self, gamma: &Configuration) -> f64 {
        self.ln_value(gamma).exp()
    }
}

/// `(A + B)v(γ)` split into its pieces, each divided by `v(γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTerms {
    /// `−σ Σ φ_{σ+1}(x)/φ_σ(x)`
    pub drift: f64,
    /// `−m|γ|`
    pub death: f64,
    /// Fission term `B₁v / v`.
    pub fission: f64,
    /// Death-gain term `B₂v / v = m(|γ|+1)/(σ−1)`.
    pub gain: f64,
    /// `ln v(γ)`.
    pub ln_scale: f64,
}

impl GeneratorTerms {
    /// Sum with the negative and positive parts accumulated separately.
    pub fn scaled(&self) -> f64 {
        (self.fission + self.gain) - (-self.drift - self.death)
    }

    pub fn value(&self) -> f64 {
        let s = self.scaled();
        if s == 0.0 {
            0.0
        } else {
            s * self.ln_scale.exp()
        }
    }
}

/// The four generator terms at `γ`.
pub fn generator_terms(gamma: &Configuration, sigma: f64, m: f64, kernel: &CycleKernel) -> GeneratorTerms {
    let traits = gamma.traits();
    let n = traits.len();
    let drift = -sigma * traits.iter().map(|x| 1.0 / (1.0 + x)).sum::<f64>();
    let mut pairs = 0.0;
    for (i, &x) in traits.iter().enumerate() {
        for &y in &traits[i + 1..] {
            pairs += kernel.density(x, y) / (phi(sigma, x) * phi(sigma, y));
        }
    }
    GeneratorTerms {
        drift,
        death: -m * n as f64,
        fission: if n >= 2 { pairs / n as f64 } else { 0.0 },
        gain: m * (n as f64 + 1.0) / (sigma - 1.0),
        ln_scale: LyapunovFunction { sigma }.ln_value(gamma),
    }
}

/// `(Av)(γ) + (Bv)(γ)` evaluated exactly:
///
/// ```text
/// Av  = −σ|γ|! Σ_x φ_{σ+1}(x) Π_{y≠x} φ_σ(y) − m|γ| v(γ)
/// B₁v = (|γ|−1)! Σ_{x,y} b(x,y) Π_{z≠x,y} φ_σ(z)
/// B₂v = (|γ|+1)! m/(σ−1) Π φ_σ
/// ```
///
/// On the empty configuration only `B₂v = m/(σ−1)` survives.
pub fn apply_generator_to_v(gamma: &Configuration, sigma: f64, m: f64, kernel: &CycleKernel) -> f64 {
    generator_terms(gamma, sigma, m, kernel).value()
}

/// Upper bound on `(A + B)v / v` implied by an envelope: each pair term
/// obeys `b(x,y)/(φ_σ(x)φ_σ(y)) ≤ b*[1/(1+x) + 1/(1+y)]`, which sums to
/// `b*(|γ|−1)/|γ| · Σ 1/(1+x)` after the `1/|γ|` prefactor.
pub fn envelope_bound(gamma: &Configuration, envelope: &Envelope, m: f64) -> f64 {
    let n = gamma.len() as f64;
    let sigma = envelope.sigma;
    let s1: f64 = gamma.iter().map(|x| 1.0 / (1.0 + x)).sum();
    let fission = if n >= 2.0 {
        envelope.b_star * (n - 1.0) / n * s1
    } else {
        0.0
    };
    fission - sigma * s1 - m * n + m * (n + 1.0) / (sigma - 1.0)
}

/// `Υ(ς, α) = ς − 1 + β̂(α)`.
pub fn upsilon(varsigma: f64, alpha: f64, kernel: &CycleKernel) -> f64 {
    varsigma - 1.0 + kernel.beta_hat(alpha)
}

/// Largest configuration drawn by [`random_configuration`].
pub const RANDOM_MAX_LEN: usize = 20;

/// `|γ|` uniform on `{0, …, 20}`, traits i.i.d. Exp(1).
pub fn random_configuration<R: Rng + ?Sized>(rng: &mut R) -> Configuration {
    let n = rng.random_range(0..=RANDOM_MAX_LEN);
    let traits = (0..n).map(|_| Exp1.sample(rng)).collect();
    Configuration::new(traits).expect("exponential draws are finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSuiteReport {
    pub sigma: f64,
    pub m: f64,
    pub checked: usize,
    pub violations: usize,
    pub empty_checked: usize,
    pub empty_violations: usize,
    /// Largest value over all configurations.
    pub max_value: f64,
    /// Largest value of `(A+B)v / v` over non-empty configurations.
    pub max_scaled_nonempty: f64,
    pub worst_nonempty: Option<Configuration>,
}

impl LyapunovSuiteReport {
    pub fn nonempty_violations(&self) -> usize {
        self.violations - self.empty_violations
    }

    pub fn violation_fraction(&self) -> f64 {
        self.violations as f64 / self.checked as f64
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Evaluates the generator on `n_configs` random configurations.
pub fn lyapunov_suite(
    kernel: &CycleKernel,
    sigma: f64,
    m: f64,
    n_configs: usize,
    seed: u64,
) -> LyapunovSuiteReport {
    let mut rng = stream(seed);
    let mut report = LyapunovSuiteReport {
        sigma,
        m,
        checked: 0,
        violations: 0,
        empty_checked: 0,
        empty_violations: 0,
        max_value: f64::NEG_INFINITY,
        max_scaled_nonempty: f64::NEG_INFINITY,
        worst_nonempty: None,
    };
    for _ in 0..n_configs {
        let gamma = random_configuration(&mut rng);
        let terms = generator_terms(&gamma, sigma, m, kernel);
        let value = terms.value();
        let bad = value > 0.0;
        report.checked += 1;
        report.violations += usize::from(bad);
        report.max_value = report.max_value.max(value);
        if gamma.is_empty() {
            report.empty_checked += 1;
            report.empty_violations += usize::from(bad);
        } else if terms.scaled() > report.max_scaled_nonempty {
            report.max_scaled_nonempty = terms.scaled();
            report.worst_nonempty = Some(gamma);
        }
    }
    report
}

/// Fraction of random configurations violating `(A+B)v ≤ 0` at a
/// mortality `m` (typically below `m₁`).
pub fn sharpness_probe(kernel: &CycleKernel, sigma: f64, m: f64, n_configs: usize, seed: u64) -> f64 {
    lyapunov_suite(kernel, sigma, m, n_configs, seed).violation_fraction()
}

/// `E h_{ς,α}(γ₀)` for an initial state.
pub fn initial_h(init: &InitialStateSpec, varsigma: f64, alpha: f64) -> f64 {
    match init {
        InitialStateSpec::Poisson { intensity } => {
            1.0 + varsigma * intensity.mass() + intensity.laplace(alpha)
        }
        InitialStateSpec::Fixed { traits } => {
            WeightFunction::HVarsigmaAlpha { varsigma, alpha }.evaluate(traits)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBoundRow {
    pub time: f64,
    pub mean_h: f64,
    pub se_h: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBoundCheck {
    pub alpha: f64,
    pub varsigma: f64,
    pub initial_h: f64,
    pub rows: Vec<HBoundRow>,
    pub pass: bool,
}

/// Compares ensemble means of `h_{ς,α}` with `E h(γ₀)`; a grid time passes
/// when the mean does not exceed it by more than three standard errors.
pub fn h_bound_check(
    ensemble: &ReplicaEnsemble,
    weight_index: usize,
    init: &InitialStateSpec,
    varsigma: f64,
    alpha: f64,
) -> HBoundCheck {
    let h0 = initial_h(init, varsigma, alpha);
    let rows: Vec<HBoundRow> = ensemble
        .summary
        .iter()
        .map(|s| {
            let mean_h = s.mean_weights[weight_index];
            let se_h = s.se_weights[weight_index];
            let se = if se_h.is_nan() { 0.0 } else { se_h };
            HBoundRow {
                time: s.time,
                mean_h,
                se_h,
                pass: mean_h <= h0 + 3.0 * se,
            }
        })
        .collect();
    HBoundCheck {
        alpha,
        varsigma,
        initial_h: h0,
        pass: rows.iter().all(|r| r.pass),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestyReport {
    pub m: f64,
    pub m_star: f64,
    /// `m < m*`: the mean population grows exponentially.
    pub supercritical: bool,
    pub replicas: usize,
    pub capped: usize,
    pub capped_fraction: f64,
    /// Every replica is, at every grid time, capped, extinct or live with
    /// a finite size, and the three counts add up to the replica count.
    pub accounting_ok: bool,
    pub final_extinct: usize,
    pub final_live: usize,
    /// Present when `m ≥ max{m₁, α}`.
    pub h_check: Option<HBoundCheck>,
    pub ensemble: ReplicaEnsemble,
}

impl HonestyReport {
    pub fn honest_at_scale(&self) -> bool {
        self.capped == 0 && self.accounting_ok
    }
}

/// True when, at every grid time, each replica is capped, extinct or live
/// with finite recorded weights, and the three counts add up to the number
/// of replicas.
pub fn probability_accounting(ensemble: &ReplicaEnsemble, grid_len: usize) -> bool {
    ensemble
        .summary
        .iter()
        .all(|s| s.capped + s.extinct + s.live == s.replicas && s.recorded == s.extinct + s.live)
        && ensemble.trajectories.iter().all(|t| {
            t.samples.iter().all(|s| s.weights.iter().all(|w| w.is_finite()))
                && (t.capped() || t.samples.len() == grid_len)
        })
}

/// Runs an ensemble and collects honesty evidence. With a threshold
/// report the `h_{ς,α}` weight is recorded and checked whenever
/// `m ≥ max{m₁, α}`.
pub fn honesty_probe(
    params: &ModelParams,
    init: &InitialStateSpec,
    n_replicas: usize,
    seed: u64,
    thresholds: Option<&ThresholdReport>,
) -> Result<HonestyReport> {
    let mut params = params.clone();
    let h_index = thresholds.map(|r| {
        params.weights.push(WeightFunction::HVarsigmaAlpha {
            varsigma: r.varsigma,
            alpha: r.alpha,
        });
        params.weights.len() - 1
    });
    let ensemble = run_ensemble(&params, init, n_replicas, seed)?;
    let m_star = compute_m_star(&params.kernel)?;
    let accounting_ok = probability_accounting(&ensemble, params.record_grid.len());
    let last = ensemble.summary.last();
    let h_check = match (thresholds, h_index) {
        (Some(r), Some(i)) if params.m >= r.m2_max => {
            Some(h_bound_check(&ensemble, i, init, r.varsigma, r.alpha))
        }
        _ => None,
    };
    let capped = ensemble.capped_count();
    Ok(HonestyReport {
        m: params.m,
        m_star,
        supercritical: params.m < m_star,
        replicas: n_replicas,
        capped,
        capped_fraction: capped as f64 / n_replicas.max(1) as f64,
        accounting_ok,
        final_extinct: last.map_or(0, |s| s.extinct),
        final_live: last.map_or(0, |s| s.live),
        h_check,
        ensemble,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        PropertyResult {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySuiteReport {
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl PropertySuiteReport {
    pub fn pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }
}

/// Deterministic property checks over the kernel catalog.
pub fn run_property_suite(seed: u64, n_configs: usize) -> PropertySuiteReport {
    let mut out = Vec::new();
    let alphas = [0.1, 0.5, 1.0, 2.0, 5.0];
    for (name, kernel) in catalog() {
        let mass = kernel.half_mass();
        out.push(PropertyResult::new(
            format!("normalization[{name}]"),
            (mass.value - 1.0).abs() < 1e-6,
            format!("(1/2)∫∫b = {:.12}", mass.value),
        ));
        let values: Vec<f64> = std::iter::once(0.0)
            .chain(alphas)
            .map(|a| kernel.beta_hat(a))
            .collect();
        out.push(PropertyResult::new(
            format!("beta_hat_decreasing[{name}]"),
            (values[0] - 2.0).abs() < 1e-6 && values.windows(2).all(|w| w[1] < w[0]),
            format!("β̂ on {{0, {alphas:?}}} = {values:?}"),
        ));
        let worst = alphas
            .iter()
            .map(|&a| upsilon(1.0 - kernel.beta_hat(a), a, &kernel).abs())
            .fold(0.0, f64::max);
        out.push(PropertyResult::new(
            format!("upsilon_zero[{name}]"),
            worst <= 4.0 * f64::EPSILON,
            format!("max |Υ(1 − β̂(α), α)| = {worst:.3e}"),
        ));
        match fit_envelope(&kernel, 3.0) {
            Ok(env) => {
                let m = compute_m1(3.0, env.b_star).unwrap_or(f64::NAN) + 0.01;
                let suite = lyapunov_suite(&kernel, 3.0, m, n_configs, seed);
                out.push(PropertyResult::new(
                    format!("lyapunov_nonempty[{name}]"),
                    suite.nonempty_violations() == 0,
                    format!(
                        "σ=3, b*={:.6}, m=m₁+0.01={m:.6}: {} of {} non-empty violate, max (A+B)v/v = {:.6e}",
                        env.b_star,
                        suite.nonempty_violations(),
                        suite.checked - suite.empty_checked,
                        suite.max_scaled_nonempty
                    ),
                ));
                out.push(PropertyResult::new(
                    format!("lyapunov_empty[{name}]"),
                    suite.empty_violations == 0,
                    format!(
                        "(A+B)v(∅) = m/(σ−1) = {:.6e}; {} of {} empty configurations positive",
                        m / 2.0,
                        suite.empty_violations,
                        suite.empty_checked
                    ),
                ));
                let mut rng = stream(seed ^ 0x5eed);
                let bound_ok = (0..n_configs.min(2000)).all(|_| {
                    let g = random_configuration(&mut rng);
                    generator_terms(&g, 3.0, m, &kernel).scaled()
                        <= envelope_bound(&g, &env, m) + 1e-9 * (1.0 + g.len() as f64)
                });
                out.push(PropertyResult::new(
                    format!("envelope_bound[{name}]"),
                    bound_ok,
                    "exact (A+B)v/v never exceeds the envelope bound",
                ));
            }
            Err(e) => out.push(PropertyResult::new(
                format!("envelope[{name}]"),
                false,
                e.to_string(),
            )),
        }
    }
    out.push(singleton_property());
    out.push(closed_form_property());
    out.push(soluble_moment_property());
    PropertySuiteReport {
        seed,
        properties: out,
    }
}

fn singleton_property() -> PropertyResult {
    let kernel = CycleKernel::product_gamma(0, 1.0).expect("valid kernel");
    let sigma = 3.0;
    let mut worst: f64 = 0.0;
    for &x in &[0.0, 0.1, 1.0, 3.0, 10.0] {
        for &m in &[0.0, 0.5, 2.0] {
            let got = apply_generator_to_v(&Configuration::new(vec![x]).unwrap(), sigma, m, &kernel);
            let want = -sigma * phi(sigma + 1.0, x) - m * phi(sigma, x)
                + 2.0 * m / (sigma - 1.0) * phi(sigma, x);
            worst = worst.max((got - want).abs());
        }
    }
    PropertyResult::new(
        "lyapunov_singleton_closed_form",
        worst < 1e-14,
        format!("max deviation {worst:.3e}"),
    )
}

fn closed_form_property() -> PropertyResult {
    let k0 = CycleKernel::product_gamma(0, 1.0).expect("valid kernel");
    let k1 = CycleKernel::product_gamma(1, 1.0).expect("valid kernel");
    let checks = (|| -> Result<[f64; 4]> {
        Ok([
            compute_m_star(&k0)? - 1.0,
            compute_m_star(&k1)? - (2f64.sqrt() - 1.0),
            find_alpha(&k0, 0.5)?.0 - 3.0,
            compute_m1(3.0, 8.0)? - 2.0,
        ])
    })();
    match checks {
        Ok(d) => PropertyResult::new(
            "threshold_closed_forms",
            d[..3].iter().all(|e| e.abs() <= 1e-8) && d[3] == 0.0,
            format!("deviations {d:?}"),
        ),
        Err(e) => PropertyResult::new("threshold_closed_forms", false, e.to_string()),
    }
}

fn soluble_moment_property() -> PropertyResult {
    let k0 = Intensity::exponential(1.0, 1.0).expect("valid intensity");
    let ok = [0.1, 1.0, 10.0].iter().all(|&t| {
        (0..=2).all(|l| moment_bound_check(&k0, t, l).map(|c| c.pass).unwrap_or(false))
    });
    PropertyResult::new("soluble_moments_nonincreasing", ok, "l ∈ {0,1,2}, t ∈ {0.1,1,10}")
}

/// Threshold report for σ = 3 and `β̂(α) = 1/2`, the defaults of the suite.
pub fn default_report(kernel: &CycleKernel) -> Result<ThresholdReport> {
    build_report(kernel, 3.0, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k0() -> CycleKernel {
        CycleKernel::product_gamma(0, 1.0).unwrap()
    }

    #[test]
    fn empty_configuration_keeps_the_gain_term() {
        let v = apply_generator_to_v(&Configuration::empty(), 3.0, 0.4, &k0());
        assert!((v - 0.2).abs() < 1e-15);
        assert_eq!(apply_generator_to_v(&Configuration::empty(), 3.0, 0.0, &k0()), 0.0);
    }

    #[test]
    fn upsilon_examples() {
        assert!((upsilon(0.25, 3.0, &k0()) + 0.25).abs() < 1e-15);
        assert!((upsilon(0.3, 0.0, &k0()) - 1.3).abs() < 1e-15);
    }

    /// Direct evaluation with explicit factorials and products.
    fn brute_force(traits: &[f64], sigma: f64, m: f64, kernel: &CycleKernel) -> f64 {
        let n = traits.len();
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        let prod_except = |skip: &[usize]| {
            traits
                .iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, &x)| phi(sigma, x))
                .product::<f64>()
        };
        let mut a = 0.0;
        for (i, &x) in traits.iter().enumerate() {
            a -= sigma * fact(n) * phi(sigma + 1.0, x) * prod_except(&[i]);
        }
        a -= m * n as f64 * fact(n) * prod_except(&[]);
        let mut b1 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                b1 += fact(n - 1) * kernel.density(traits[i], traits[j]) * prod_except(&[i, j]);
            }
        }
        let b2 = fact(n + 1) * m / (sigma - 1.0) * prod_except(&[]);
        a + b1 + b2
    }

    #[test]
    fn five_particles_against_brute_force() {
        let traits = [0.1, 0.7, 1.3, 2.2, 4.0];
        let gamma = Configuration::new(traits.to_vec()).unwrap();
        let env = fit_envelope(&k0(), 3.0).unwrap();
        let m = compute_m1(3.0, env.b_star).unwrap() + 0.01;
        let got = apply_generator_to_v(&gamma, 3.0, m, &k0());
        let want = brute_force(&traits, 3.0, m, &k0());
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} {want}");
        assert!(got <= 0.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(traits in prop::collection::vec(0.0f64..6.0, 0..9),
                               m in 0.0f64..5.0, sigma in 3.0f64..6.0) {
            let kernel = CycleKernel::product_gamma(1, 1.5).unwrap();
            let gamma = Configuration::new(traits.clone()).unwrap();
            let got = apply_generator_to_v(&gamma, sigma, m, &kernel);
            let want = brute_force(gamma.traits(), sigma, m, &kernel);
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }

        #[test]
        fn v_is_positive(traits in prop::collection::vec(0.0f64..50.0, 0..40), sigma in 3.0f64..8.0) {
            let gamma = Configuration::new(traits).unwrap();
            prop_assert!(LyapunovFunction::new(sigma).unwrap().ln_value(&gamma).is_finite());
        }

        #[test]
        fn upsilon_vanishes_on_the_boundary(alpha in 0.01f64..20.0) {
            let kernel = CycleKernel::product_gamma(2, 0.7).unwrap();
            prop_assert!(upsilon(1.0 - kernel.beta_hat(alpha), alpha, &kernel).abs() <= 4.0 * f64::EPSILON);
        }
    }
}
