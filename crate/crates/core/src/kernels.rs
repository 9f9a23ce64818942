// SPDX-License-Identifier: Apache-2.0

//! Cycle kernels `b(x, y)`: the joint density of the two progeny traits
//! produced at a fission.
//!
//! Kernels are stored in two-progeny normalisation, `∫∫ b = 2`, so the
//! marginal `β(x) = ∫ b(x, y) dy` has mass two and `β̂(0) = 2`. Samplers
//! draw pairs from the probability density `b / 2`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::configuration::phi;
use crate::error::{Error, Result};
use crate::intensity::{check_grid, invert_linear_cell, locate, Profile};
use crate::quadrature::{dyadic_partition, integrate_segments, Integral};

/// Tolerance on `|(1/2)∫∫b − 1|` accepted for user-supplied tables.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Tail mass neglected by the quadrature routes.
const QUADRATURE_TAIL: f64 = 1e-13;
const QUADRATURE_TOL: f64 = 1e-11;

/// Symmetric kernel given by bilinear interpolation on a square grid,
/// zero outside `[g₀, g_N]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Table2dRepr", into = "Table2dRepr")]
pub struct Table2d {
    grid: Vec<f64>,
    // Row-major, values[i * n + j] = b(grid[i], grid[j]).
    values: Vec<f64>,
    // ∫ b(grid[i], y) dy
    row_integrals: Vec<f64>,
    // ∫ from grid[0] to grid[i] of β
    marginal_cumulative: Vec<f64>,
    max_value: f64,
}

#[derive(Serialize, Deserialize)]
struct Table2dRepr {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<Table2dRepr> for Table2d {
    type Error = Error;
    fn try_from(r: Table2dRepr) -> Result<Self> {
        Table2d::new(r.grid, r.values)
    }
}

impl From<Table2d> for Table2dRepr {
    fn from(t: Table2d) -> Self {
        let n = t.grid.len();
        Table2dRepr {
            values: t.values.chunks(n).map(<[f64]>::to_vec).collect(),
            grid: t.grid,
        }
    }
}

impl Table2d {
    pub fn new(grid: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&grid)?;
        let n = grid.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidTable(format!("values must be a {n}×{n} matrix")));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidTable("values must be finite and ≥ 0".into()));
        }
        let max_value = values.iter().copied().fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..i {
                if (values[i * n + j] - values[j * n + i]).abs() > 1e-12 * max_value {
                    return Err(Error::InvalidTable(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let trapezoid = |row: &[f64]| -> f64 {
            (1..n)
                .map(|j| 0.5 * (row[j] + row[j - 1]) * (grid[j] - grid[j - 1]))
                .sum()
        };
        let row_integrals: Vec<f64> = values.chunks(n).map(trapezoid).collect();
        let mut marginal_cumulative = vec![0.0; n];
        for i in 1..n {
            marginal_cumulative[i] = marginal_cumulative[i - 1]
                + 0.5 * (row_integrals[i] + row_integrals[i - 1]) * (grid[i] - grid[i - 1]);
        }
        let total = marginal_cumulative[n - 1];
        if (0.5 * total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(0.5 * total));
        }
        Ok(Table2d {
            grid,
            values,
            row_integrals,
            marginal_cumulative,
            max_value,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let (Some(i), Some(j)) = (locate(&self.grid, x), locate(&self.grid, y)) else {
            return 0.0;
        };
        let n = self.grid.len();
        let tx = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        let ty = (y - self.grid[j]) / (self.grid[j + 1] - self.grid[j]);
        let v = |a: usize, b: usize| self.values[a * n + b];
        (1.0 - tx) * ((1.0 - ty) * v(i, j) + ty * v(i, j + 1))
            + tx * ((1.0 - ty) * v(i + 1, j) + ty * v(i + 1, j + 1))
    }

    fn marginal(&self, x: f64) -> f64 {
        match locate(&self.grid, x) {
            None => 0.0,
            Some(i) => {
                let t = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
                (1.0 - t) * self.row_integrals[i] + t * self.row_integrals[i + 1]
            }
        }
    }

    fn marginal_tail(&self, x: f64) -> f64 {
        let total = *self.marginal_cumulative.last().expect("non-empty");
        if x <= self.grid[0] {
            return total;
        }
        match locate(&self.grid, x) {
            None => 0.0,
            Some(i) => {
                let d = x - self.grid[i];
                let below =
                    self.marginal_cumulative[i] + 0.5 * d * (self.row_integrals[i] + self.marginal(x));
                (total - below).max(0.0)
            }
        }
    }

    /// Draws `x` from `β/2` and then `y` from the conditional `b(x,·)/β(x)`.
    fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let n = self.grid.len();
        let total = *self.marginal_cumulative.last().expect("non-empty");
        let x = invert_piecewise_linear(
            &self.grid,
            &self.row_integrals,
            &self.marginal_cumulative,
            rng.random::<f64>() * total,
        );
        let i = locate(&self.grid, x).expect("x inside the grid");
        let t = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        let row: Vec<f64> = (0..n)
            .map(|j| (1.0 - t) * self.values[i * n + j] + t * self.values[(i + 1) * n + j])
            .collect();
        let mut cumulative = vec![0.0; n];
        for j in 1..n {
            cumulative[j] =
                cumulative[j - 1] + 0.5 * (row[j] + row[j - 1]) * (self.grid[j] - self.grid[j - 1]);
        }
        let y = invert_piecewise_linear(
            &self.grid,
            &row,
            &cumulative,
            rng.random::<f64>() * cumulative[n - 1],
        );
        (x, y)
    }
}

fn invert_piecewise_linear(grid: &[f64], values: &[f64], cumulative: &[f64], target: f64) -> f64 {
    let i = cumulative
        .partition_point(|&c| c <= target)
        .saturating_sub(1)
        .min(grid.len() - 2);
    let h = grid[i + 1] - grid[i];
    let slope = (values[i + 1] - values[i]) / h;
    grid[i] + invert_linear_cell(values[i], slope, target - cumulative[i]).clamp(0.0, h)
}

/// JSON description of a kernel, e.g. `{"type":"product_gamma","k":1,"a":2.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `b(x,y) = 2 p(x) p(y)` with `p` the Gamma(k+1, a) density
    /// `a^{k+1} x^k e^{-ax} / k!`.
    ProductGamma { k: u32, a: f64 },
    /// `b(x,y) = 2 p(x) p(y)` for a catalog density `p`.
    ProductGeneral { p: Profile },
    /// `b(x,y) = σ(σ-1)[φ_{σ+1}(x)φ_σ(y) + φ_σ(x)φ_{σ+1}(y)]`, the envelope
    /// shape itself, normalised.
    PhiEnvelope { sigma: f64 },
    Tabulated(Table2d),
}

/// Names accepted in the `type` field of a kernel spec.
pub const KERNEL_TYPES: [&str; 4] = ["product_gamma", "product_general", "phi_envelope", "tabulated"];

/// A validated cycle kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct CycleKernel {
    spec: KernelSpec,
    // Progeny density for the product variants.
    profile: Option<Profile>,
}

impl TryFrom<KernelSpec> for CycleKernel {
    type Error = Error;
    fn try_from(spec: KernelSpec) -> Result<Self> {
        CycleKernel::new(spec)
    }
}

impl From<CycleKernel> for KernelSpec {
    fn from(k: CycleKernel) -> Self {
        k.spec
    }
}

impl CycleKernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        let profile = match &spec {
            KernelSpec::ProductGamma { k, a } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::param("a", *a, "must be finite and > 0"));
                }
                Some(Profile::Gamma {
                    shape: f64::from(*k) + 1.0,
                    rate: *a,
                })
            }
            KernelSpec::ProductGeneral { p } => {
                p.validate()?;
                Some(p.clone())
            }
            KernelSpec::PhiEnvelope { sigma } => {
                if !(sigma.is_finite() && *sigma > 2.0) {
                    return Err(Error::param("sigma", *sigma, "must be finite and > 2"));
                }
                None
            }
            KernelSpec::Tabulated(_) => None,
        };
        Ok(CycleKernel { spec, profile })
    }

    pub fn product_gamma(k: u32, a: f64) -> Result<Self> {
        CycleKernel::new(KernelSpec::ProductGamma { k, a })
    }

    pub fn product(p: Profile) -> Result<Self> {
        CycleKernel::new(KernelSpec::ProductGeneral { p })
    }

    pub fn phi_envelope(sigma: f64) -> Result<Self> {
        CycleKernel::new(KernelSpec::PhiEnvelope { sigma })
    }

    pub fn tabulated(grid: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        CycleKernel::new(KernelSpec::Tabulated(Table2d::new(grid, rows)?))
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        match self.spec {
            KernelSpec::ProductGamma { .. } => "product_gamma",
            KernelSpec::ProductGeneral { .. } => "product_general",
            KernelSpec::PhiEnvelope { .. } => "phi_envelope",
            KernelSpec::Tabulated(_) => "tabulated",
        }
    }

    /// Progeny density `p` when `b = 2 p ⊗ p`.
    pub fn product_profile(&self) -> Option<&Profile> {
        self.profile.as_ref()
    }

    /// `b(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        if x < 0.0 || y < 0.0 {
            return 0.0;
        }
        match (&self.spec, &self.profile) {
            (_, Some(p)) => 2.0 * p.pdf(x) * p.pdf(y),
            (KernelSpec::PhiEnvelope { sigma }, _) => {
                let s = *sigma;
                s * (s - 1.0) * (phi(s + 1.0, x) * phi(s, y) + phi(s, x) * phi(s + 1.0, y))
            }
            (KernelSpec::Tabulated(t), _) => t.density(x, y),
            _ => unreachable!("product kernels carry a profile"),
        }
    }

    /// `β(x) = ∫ b(x, y) dy`.
    pub fn marginal(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match (&self.spec, &self.profile) {
            (_, Some(p)) => 2.0 * p.pdf(x),
            (KernelSpec::PhiEnvelope { sigma }, _) => {
                sigma * phi(sigma + 1.0, x) + (sigma - 1.0) * phi(*sigma, x)
            }
            (KernelSpec::Tabulated(t), _) => t.marginal(x),
            _ => unreachable!("product kernels carry a profile"),
        }
    }

    /// `∫_x^∞ β`.
    pub fn marginal_tail(&self, x: f64) -> f64 {
        match (&self.spec, &self.profile) {
            (_, Some(p)) => 2.0 * p.survival(x),
            (KernelSpec::PhiEnvelope { sigma }, _) => {
                let x = x.max(0.0);
                phi(*sigma, x) + phi(sigma - 1.0, x)
            }
            (KernelSpec::Tabulated(t), _) => t.marginal_tail(x),
            _ => unreachable!("product kernels carry a profile"),
        }
    }

    /// `sup β`, `None` if unbounded.
    pub fn marginal_sup(&self) -> Option<f64> {
        match (&self.spec, &self.profile) {
            (_, Some(p)) => p.sup().map(|s| 2.0 * s),
            (KernelSpec::PhiEnvelope { sigma }, _) => Some(2.0 * sigma - 1.0),
            (KernelSpec::Tabulated(t), _) => Some(t.row_integrals.iter().copied().fold(0.0, f64::max)),
            _ => unreachable!("product kernels carry a profile"),
        }
    }

    /// Points where `b` or `β` may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match (&self.spec, &self.profile) {
            (_, Some(p)) => p.breakpoints(),
            (KernelSpec::Tabulated(t), _) => t.grid.clone(),
            _ => Vec::new(),
        }
    }

    /// A dyadic `X ≥ 1` beyond which the marginal carries mass at most
    /// `tail`; for compactly supported kernels, the support bound.
    pub fn tail_cutoff(&self, tail: f64) -> f64 {
        match (&self.spec, &self.profile) {
            (_, Some(p)) => p.tail_cutoff(tail / 2.0),
            (KernelSpec::Tabulated(t), _) => t.grid.last().copied().unwrap_or(1.0).max(1.0),
            _ => {
                let mut x = 1.0;
                while self.marginal_tail(x) > tail && x < 1e300 {
                    x *= 2.0;
                }
                x
            }
        }
    }

    fn quadrature_points(&self) -> Vec<f64> {
        dyadic_partition(self.tail_cutoff(QUADRATURE_TAIL), &self.breakpoints())
    }

    /// Laplace transform `β̂(α) = ∫ β(x) e^{-αx} dx`, in closed form where
    /// the kernel has one and by quadrature otherwise.
    pub fn beta_hat(&self, alpha: f64) -> f64 {
        match (&self.spec, &self.profile) {
            (KernelSpec::ProductGamma { k, a }, _) => 2.0 * (a / (a + alpha)).powi(*k as i32 + 1),
            (_, Some(p)) => 2.0 * p.laplace(alpha),
            _ => self.beta_hat_quadrature(alpha).value,
        }
    }

    /// `β̂(α)` by adaptive quadrature of the marginal.
    pub fn beta_hat_quadrature(&self, alpha: f64) -> Integral {
        integrate_segments(
            |x| self.marginal(x) * (-alpha * x).exp(),
            &self.quadrature_points(),
            QUADRATURE_TOL,
        )
    }

    /// `(1/2) ∫∫ b` by nested quadrature of the joint density.
    pub fn half_mass(&self) -> Integral {
        let points = self.quadrature_points();
        let inner = |x: f64| integrate_segments(|y| self.density(x, y), &points, 1e-12).value;
        let outer = integrate_segments(inner, &points, 1e-10);
        Integral {
            value: 0.5 * outer.value,
            error: 0.5 * outer.error,
        }
    }

    /// Draws a progeny pair from `b / 2`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match (&self.spec, &self.profile) {
            (KernelSpec::ProductGamma { k, a }, _) => {
                let mut draw = || {
                    let mut s = 0.0;
                    for _ in 0..=*k {
                        let e: f64 = Exp1.sample(rng);
                        s += e;
                    }
                    s / a
                };
                let x = draw();
                let y = draw();
                (x, y)
            }
            (_, Some(p)) => {
                let x = p.sample(rng);
                let y = p.sample(rng);
                (x, y)
            }
            (KernelSpec::PhiEnvelope { sigma }, _) => {
                // Mixture of Lomax(σ) ⊗ Lomax(σ-1) and its mirror image.
                let flip = rng.random::<bool>();
                let x = (1.0 - rng.random::<f64>()).powf(-1.0 / sigma) - 1.0;
                let y = (1.0 - rng.random::<f64>()).powf(-1.0 / (sigma - 1.0)) - 1.0;
                if flip {
                    (y, x)
                } else {
                    (x, y)
                }
            }
            (KernelSpec::Tabulated(t), _) => t.sample_pair(rng),
            _ => unreachable!("product kernels carry a profile"),
        }
    }
}

/// Reference kernels used by the property suite and the acceptance tests.
pub fn catalog() -> Vec<(String, CycleKernel)> {
    let mut out: Vec<(String, CycleKernel)> = [(0, 1.0), (1, 1.0), (1, 2.0), (3, 2.0)]
        .into_iter()
        .map(|(k, a)| {
            (
                format!("product_gamma(k={k},a={a})"),
                CycleKernel::product_gamma(k, a).expect("valid catalog kernel"),
            )
        })
        .collect();
    let products = [
        ("product_general(uniform[0,1])", Profile::Uniform { lo: 0.0, hi: 1.0 }),
        ("product_general(uniform[0.5,2])", Profile::Uniform { lo: 0.5, hi: 2.0 }),
        ("product_general(gamma(2.5,2))", Profile::Gamma { shape: 2.5, rate: 2.0 }),
    ];
    for (name, p) in products {
        out.push((name.to_string(), CycleKernel::product(p).expect("valid catalog kernel")));
    }
    for sigma in [3.0, 4.0] {
        out.push((
            format!("phi_envelope(sigma={sigma})"),
            CycleKernel::phi_envelope(sigma).expect("valid catalog kernel"),
        ));
    }
    // 2 p ⊗ p for the tent p peaking at 1/2; bilinear interpolation is exact.
    out.push((
        "tabulated(tent)".to_string(),
        CycleKernel::tabulated(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0; 3], vec![0.0, 8.0, 0.0], vec![0.0; 3]],
        )
        .expect("valid catalog kernel"),
    ));
    out
}

/// `φ_{σ+1}(x)φ_σ(y) + φ_σ(x)φ_{σ+1}(y)`.
pub fn envelope_shape(sigma: f64, x: f64, y: f64) -> f64 {
    phi(sigma + 1.0, x) * phi(sigma, y) + phi(sigma, x) * phi(sigma + 1.0, y)
}

/// Certified bound `b(x,y) ≤ b* · envelope_shape(σ, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sigma: f64,
    pub b_star: f64,
    /// Largest ratio `b / shape` found before inflation.
    pub sup_ratio: f64,
    pub worst_point: [f64; 2],
    /// `b* − max ratio` over the verification grid.
    pub residual: f64,
    pub x_max: f64,
}

const ENVELOPE_TAIL: f64 = 1e-8;
const ENVELOPE_INFLATION: f64 = 1.01;
const COARSE_POINTS: usize = 200;
const FINE_POINTS: usize = 2000;

impl Envelope {
    pub fn bound(&self, x: f64, y: f64) -> f64 {
        self.b_star * envelope_shape(self.sigma, x, y)
    }

    /// Checks the inequality at every pair of `points` (no tolerance).
    pub fn holds_on(&self, kernel: &CycleKernel, points: &[f64]) -> bool {
        points
            .iter()
            .all(|&x| points.iter().all(|&y| kernel.density(x, y) <= self.bound(x, y)))
    }
}

/// `{0}`, `n` log-spaced points in `[10⁻³, x_max]` and the breakpoints.
pub fn envelope_grid(x_max: f64, n: usize, breakpoints: &[f64]) -> Vec<f64> {
    let lo: f64 = 1e-3;
    let step = (x_max / lo).ln() / (n - 1) as f64;
    let mut points: Vec<f64> = std::iter::once(0.0)
        .chain((0..n).map(|i| lo * (step * i as f64).exp()))
        .chain(breakpoints.iter().copied().filter(|&b| b >= 0.0 && b <= x_max))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

fn ratio(kernel: &CycleKernel, sigma: f64, x: f64, y: f64) -> f64 {
    kernel.density(x, y) / envelope_shape(sigma, x, y)
}

/// Largest ratio over the grid and where it occurs (grid indices).
fn scan(kernel: &CycleKernel, sigma: f64, points: &[f64]) -> (f64, usize, usize) {
    let phi_hi: Vec<f64> = points.iter().map(|&x| phi(sigma + 1.0, x)).collect();
    let phi_lo: Vec<f64> = points.iter().map(|&x| phi(sigma, x)).collect();
    let pdf: Option<Vec<f64>> = kernel
        .product_profile()
        .map(|p| points.iter().map(|&x| p.pdf(x)).collect());
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for i in 0..points.len() {
        // b and the shape are symmetric: j ≥ i suffices.
        for j in i..points.len() {
            let b = match &pdf {
                Some(p) => 2.0 * p[i] * p[j],
                None => kernel.density(points[i], points[j]),
            };
            let r = b / (phi_hi[i] * phi_lo[j] + phi_lo[i] * phi_hi[j]);
            if r > best.0 {
                best = (r, i, j);
            }
        }
    }
    best
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Fits the smallest `b*` making `b ≤ b*[φ_{σ+1}⊗φ_σ + φ_σ⊗φ_{σ+1}]` hold
/// on a log grid (refined around the worst point), inflated by 1% and
/// re-verified on a ten times finer grid.
pub fn fit_envelope(kernel: &CycleKernel, sigma: f64) -> Result<Envelope> {
    if !(sigma.is_finite() && sigma >= 3.0) {
        return Err(Error::param("sigma", sigma, "envelope requires σ ≥ 3"));
    }
    if kernel.marginal_sup().is_none() {
        return Err(Error::param(
            "kernel",
            f64::INFINITY,
            "kernel density is unbounded; no envelope exists",
        ));
    }
    let x_max = kernel.tail_cutoff(ENVELOPE_TAIL);
    let breakpoints = kernel.breakpoints();

    // Tail growth of the ratio means no finite b* exists for this σ.
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let (x_in, x_out) = (x_max, 16.0 * x_max);
        let inner = ratio(kernel, sigma, dx * x_in, dy * x_in);
        let outer = ratio(kernel, sigma, dx * x_out, dy * x_out);
        if outer > 0.0 && outer > inner * (1.0 + 1e-9) {
            return Err(Error::EnvelopeUnbounded {
                sigma,
                x_inner: x_in,
                inner,
                x_outer: x_out,
                outer,
            });
        }
    }

    let coarse = envelope_grid(x_max, COARSE_POINTS, &breakpoints);
    let (mut sup, i, j) = scan(kernel, sigma, &coarse);
    let mut worst = [coarse[i], coarse[j]];
    let neighbours = |k: usize| (coarse[k.saturating_sub(1)], coarse[(k + 1).min(coarse.len() - 1)]);
    let (xr, yr) = (neighbours(i), neighbours(j));
    let mut point = worst;
    for _ in 0..4 {
        let (x, _) = golden_max(|x| ratio(kernel, sigma, x, point[1]), xr.0, xr.1);
        point[0] = x;
        let (y, r) = golden_max(|y| ratio(kernel, sigma, point[0], y), yr.0, yr.1);
        point[1] = y;
        if r > sup {
            sup = r;
            worst = point;
        }
    }

    let mut b_star = ENVELOPE_INFLATION * sup;
    let fine = envelope_grid(x_max, FINE_POINTS, &breakpoints);
    let (fine_sup, fi, fj) = scan(kernel, sigma, &fine);
    if fine_sup > b_star {
        sup = fine_sup;
        worst = [fine[fi], fine[fj]];
        b_star = ENVELOPE_INFLATION * sup;
    }
    let envelope = Envelope {
        sigma,
        b_star,
        sup_ratio: sup,
        worst_point: worst,
        residual: b_star - fine_sup,
        x_max,
    };
    debug_assert!(envelope.holds_on(kernel, &coarse));
    Ok(envelope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn uniform_square() -> CycleKernel {
        CycleKernel::tabulated(vec![0.0, 1.0], vec![vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap()
    }

    #[test]
    fn marginal_examples() {
        let k = CycleKernel::product_gamma(0, 1.0).unwrap();
        assert!((k.marginal(0.0) - 2.0).abs() < 1e-15);
        assert_eq!(uniform_square().marginal(0.5), 2.0);
        let total = integrate_segments(|x| k.marginal(x), &dyadic_partition(64.0, &[]), 1e-12);
        assert!((total.value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn beta_hat_closed_forms() {
        let k0 = CycleKernel::product_gamma(0, 1.0).unwrap();
        assert!((k0.beta_hat(1.0) - 1.0).abs() < 1e-15);
        assert!((k0.beta_hat_quadrature(1.0).value - 1.0).abs() < 1e-8);
        let k1 = CycleKernel::product_gamma(1, 1.0).unwrap();
        assert!((k1.beta_hat(2f64.sqrt() - 1.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beta_hat_at_zero_is_two() {
        for k in [
            CycleKernel::product_gamma(2, 3.0).unwrap(),
            CycleKernel::product(Profile::Uniform { lo: 1.0, hi: 2.0 }).unwrap(),
            CycleKernel::phi_envelope(3.0).unwrap(),
            uniform_square(),
        ] {
            assert!((k.beta_hat(0.0) - 2.0).abs() < 1e-6, "{}", k.name());
            assert!((k.marginal_tail(0.0) - 2.0).abs() < 1e-9, "{}", k.name());
        }
    }

    #[test]
    fn tabulated_validation() {
        assert!(matches!(
            CycleKernel::tabulated(vec![0.0, 1.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            Err(Error::NotNormalized(_))
        ));
        assert!(matches!(
            CycleKernel::tabulated(vec![0.0, 1.0], vec![vec![2.0, 3.0], vec![1.0, 2.0]]),
            Err(Error::InvalidTable(_))
        ));
    }

    #[test]
    fn kernel_json() {
        let k = CycleKernel::from_json(r#"{"type":"product_gamma","k":1,"a":2.0}"#).unwrap();
        assert_eq!(k, CycleKernel::product_gamma(1, 2.0).unwrap());
        let k = CycleKernel::from_json(
            r#"{"type":"product_general","p":{"type":"uniform","lo":1.0,"hi":2.0}}"#,
        )
        .unwrap();
        assert_eq!(k.marginal(1.5), 2.0);
        let err = CycleKernel::from_json(r#"{"type":"mystery"}"#).unwrap_err().to_string();
        assert!(err.contains("product_gamma"), "{err}");
        assert!(CycleKernel::from_json(r#"{"type":"product_gamma","k":1,"a":-2.0}"#).is_err());
    }

    #[test]
    fn sample_pair_means() {
        let mut rng = stream(3);
        for (k, a) in [(0, 1.0), (1, 2.0)] {
            let kernel = CycleKernel::product_gamma(k, a).unwrap();
            let n = 1_000_000;
            let mean = (0..n).map(|_| kernel.sample_pair(&mut rng).0).sum::<f64>() / n as f64;
            assert!((mean - 1.0).abs() < 0.005, "k={k} a={a}: {mean}");
        }
    }

    #[test]
    fn tabulated_sampler_stays_in_support() {
        let kernel = CycleKernel::tabulated(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0, 0.5, 0.0], vec![0.5, 1.0, 0.5], vec![0.0, 0.5, 0.0]],
        )
        .unwrap();
        let mut rng = stream(5);
        let n = 200_000;
        let mut mean = 0.0;
        for _ in 0..n {
            let (x, y) = kernel.sample_pair(&mut rng);
            assert!((0.0..=2.0).contains(&x) && (0.0..=2.0).contains(&y));
            mean += x / n as f64;
        }
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn envelope_of_uniform_square_is_set_by_the_corner() {
        let env = fit_envelope(&uniform_square(), 3.0).unwrap();
        assert!((env.sup_ratio - 128.0).abs() < 1e-9, "{env:?}");
        assert!(env.b_star >= 128.0 && env.b_star <= 128.0 * 1.01 + 1e-9);
        assert_eq!(env.worst_point, [1.0, 1.0]);
    }

    #[test]
    fn envelope_of_its_own_shape_is_the_constant() {
        let env = fit_envelope(&CycleKernel::phi_envelope(3.0).unwrap(), 3.0).unwrap();
        assert!((env.sup_ratio - 6.0).abs() < 6.0 * 0.01, "{env:?}");
    }

    #[test]
    fn envelope_detects_heavier_tails() {
        let err = fit_envelope(&CycleKernel::phi_envelope(3.0).unwrap(), 4.0).unwrap_err();
        assert!(matches!(err, Error::EnvelopeUnbounded { .. }), "{err}");
        assert!(fit_envelope(&uniform_square(), 2.5).is_err());
    }
}
