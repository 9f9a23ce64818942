// SPDX-License-Identifier: Apache-2.0

//! One-dimensional densities on `[0, ∞)`, Poisson intensities built from
//! them, and sampling of initial configurations.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::configuration::Configuration;
use crate::error::{Error, Result};
use crate::quadrature::{dyadic_partition, integrate_segments};

/// Piecewise-linear nonnegative function on a grid, zero outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct Table1d {
    grid: Vec<f64>,
    values: Vec<f64>,
    // cumulative[i] = ∫ from grid[0] to grid[i]
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<TableRepr> for Table1d {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        Table1d::new(r.grid, r.values)
    }
}

impl From<Table1d> for TableRepr {
    fn from(t: Table1d) -> Self {
        TableRepr {
            grid: t.grid,
            values: t.values,
        }
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidTable("grid needs at least two nodes".into()));
    }
    if grid[0] < 0.0 || !grid.iter().all(|g| g.is_finite()) {
        return Err(Error::InvalidTable("grid must be finite and ≥ 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTable("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Index `i` of the cell `[grid[i], grid[i+1]]` containing `x`, if any.
pub(crate) fn locate(grid: &[f64], x: f64) -> Option<usize> {
    let last = *grid.last()?;
    if !(x >= grid[0] && x <= last) {
        return None;
    }
    let i = grid.partition_point(|&g| g <= x);
    Some(i.saturating_sub(1).min(grid.len() - 2))
}

/// Solves `v0 d + s d²/2 = target` for `d ≥ 0` without cancellation.
pub(crate) fn invert_linear_cell(v0: f64, slope: f64, target: f64) -> f64 {
    let disc = (v0 * v0 + 2.0 * slope * target).max(0.0);
    let denom = v0 + disc.sqrt();
    if denom > 0.0 {
        2.0 * target / denom
    } else {
        0.0
    }
}

impl Table1d {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::InvalidTable(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidTable("values must be finite and ≥ 0".into()));
        }
        let mut cumulative = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            cumulative[i] =
                cumulative[i - 1] + 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
        }
        Ok(Table1d {
            grid,
            values,
            cumulative,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn value(&self, x: f64) -> f64 {
        match locate(&self.grid, x) {
            None => 0.0,
            Some(i) => {
                let t = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
                self.values[i] + t * (self.values[i + 1] - self.values[i])
            }
        }
    }

    /// `∫_{-∞}^{x}` of the table.
    pub fn cumulative(&self, x: f64) -> f64 {
        if x <= self.grid[0] {
            return 0.0;
        }
        match locate(&self.grid, x) {
            None => self.integral(),
            Some(i) => {
                let d = x - self.grid[i];
                self.cumulative[i] + 0.5 * d * (self.values[i] + self.value(x))
            }
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Draws from the normalised table by inverting its cumulative integral.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>() * self.integral();
        let i = self
            .cumulative
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(self.grid.len() - 2);
        let h = self.grid[i + 1] - self.grid[i];
        let slope = (self.values[i + 1] - self.values[i]) / h;
        let d = invert_linear_cell(self.values[i], slope, target - self.cumulative[i]);
        (self.grid[i] + d.min(h)).max(self.grid[i])
    }
}

/// Probability density on `[0, ∞)` from a small closed catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Linear interpolation of the values, normalised to unit mass.
    Tabulated(Table1d),
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, v, "must be finite and > 0"))
    }
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Profile::Exponential { rate } => positive("rate", *rate),
            Profile::Uniform { lo, hi } => {
                if !(lo.is_finite() && *lo >= 0.0) {
                    return Err(Error::param("lo", *lo, "must be finite and ≥ 0"));
                }
                if !(hi.is_finite() && hi > lo) {
                    return Err(Error::param("hi", *hi, "must be finite and > lo"));
                }
                Ok(())
            }
            Profile::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            Profile::Tabulated(t) => {
                if t.integral() > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidTable("table has zero mass".into()))
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Profile::Exponential { rate } => rate * (-rate * x).exp(),
            Profile::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Profile::Gamma { shape, rate } => {
                if x == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => rate,
                        _ => 0.0,
                    };
                }
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
            }
            Profile::Tabulated(ref t) => t.value(x) / t.integral(),
        }
    }

    /// `∫_x^∞ p`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match *self {
            Profile::Exponential { rate } => (-rate * x).exp(),
            Profile::Uniform { lo, hi } => ((hi - x.max(lo)) / (hi - lo)).clamp(0.0, 1.0),
            Profile::Gamma { shape, rate } => gamma_ur(shape, rate * x),
            Profile::Tabulated(ref t) => ((t.integral() - t.cumulative(x)) / t.integral()).max(0.0),
        }
    }

    /// Laplace transform `∫ p(x) e^{-αx} dx`.
    pub fn laplace(&self, alpha: f64) -> f64 {
        match *self {
            Profile::Exponential { rate } => rate / (rate + alpha),
            Profile::Uniform { lo, hi } => {
                let w = hi - lo;
                if alpha * w == 0.0 {
                    (-alpha * lo).exp()
                } else {
                    (-alpha * lo).exp() * (-(-alpha * w).exp_m1()) / (alpha * w)
                }
            }
            Profile::Gamma { shape, rate } => (rate / (rate + alpha)).powf(shape),
            Profile::Tabulated(ref t) => {
                integrate_segments(|x| t.value(x) * (-alpha * x).exp(), t.grid(), 1e-13).value
                    / t.integral()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Profile::Exponential { rate } => 1.0 / rate,
            Profile::Uniform { lo, hi } => 0.5 * (lo + hi),
            Profile::Gamma { shape, rate } => shape / rate,
            Profile::Tabulated(ref t) => {
                integrate_segments(|x| x * t.value(x), t.grid(), 1e-13).value / t.integral()
            }
        }
    }

    /// Supremum of the density, `None` if unbounded.
    pub fn sup(&self) -> Option<f64> {
        match *self {
            Profile::Exponential { rate } => Some(rate),
            Profile::Uniform { lo, hi } => Some(1.0 / (hi - lo)),
            Profile::Gamma { shape, rate } => {
                if shape < 1.0 {
                    None
                } else {
                    Some(self.pdf((shape - 1.0) / rate))
                }
            }
            Profile::Tabulated(ref t) => Some(t.max_value() / t.integral()),
        }
    }

    /// Points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Uniform { lo, hi } => vec![*lo, *hi],
            Profile::Tabulated(t) => t.grid().to_vec(),
            _ => Vec::new(),
        }
    }

    /// Smallest dyadic `X ≥ 1` with `survival(X) ≤ tail`.
    pub fn tail_cutoff(&self, tail: f64) -> f64 {
        match *self {
            Profile::Uniform { hi, .. } => hi.max(1.0),
            Profile::Tabulated(ref t) => t.grid().last().copied().unwrap_or(1.0).max(1.0),
            _ => {
                let mut x = 1.0;
                while self.survival(x) > tail && x < 1e300 {
                    x *= 2.0;
                }
                x
            }
        }
    }

    /// Quadrature partition of `[0, X]` respecting the breakpoints.
    pub fn partition(&self, tail: f64) -> Vec<f64> {
        dyadic_partition(self.tail_cutoff(tail), &self.breakpoints())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Profile::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Profile::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Profile::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            Profile::Tabulated(ref t) => t.sample(rng),
        }
    }
}

/// Poisson intensity `κ₀ = mass · p` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntensityRepr", into = "IntensityRepr")]
pub struct Intensity {
    mass: f64,
    profile: Profile,
}

/// JSON form: the profile's tagged object plus an optional `mass`. For
/// tabulated intensities the mass defaults to the integral of the values;
/// otherwise it defaults to one.
#[derive(Serialize, Deserialize)]
struct IntensityRepr {
    #[serde(flatten)]
    profile: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
}

impl TryFrom<IntensityRepr> for Intensity {
    type Error = Error;
    fn try_from(r: IntensityRepr) -> Result<Self> {
        let mass = match (&r.profile, r.mass) {
            (_, Some(m)) => m,
            (Profile::Tabulated(t), None) => t.integral(),
            (_, None) => 1.0,
        };
        Intensity::new(mass, r.profile)
    }
}

impl From<Intensity> for IntensityRepr {
    fn from(i: Intensity) -> Self {
        IntensityRepr {
            profile: i.profile,
            mass: Some(i.mass),
        }
    }
}

impl Intensity {
    pub fn new(mass: f64, profile: Profile) -> Result<Self> {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::NonFiniteIntegral(mass));
        }
        profile.validate()?;
        Ok(Intensity { mass, profile })
    }

    /// `κ₀(x) = mass · rate · e^{-rate·x}`.
    pub fn exponential(mass: f64, rate: f64) -> Result<Self> {
        Intensity::new(mass, Profile::Exponential { rate })
    }

    pub fn uniform(mass: f64, lo: f64, hi: f64) -> Result<Self> {
        Intensity::new(mass, Profile::Uniform { lo, hi })
    }

    /// Intensity given by tabulated values; its mass is their integral.
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let table = Table1d::new(grid, values)?;
        let mass = table.integral();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NonFiniteIntegral(mass));
        }
        Intensity::new(mass, Profile::Tabulated(table))
    }

    /// `∫ κ₀`, the expected number of particles.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn density(&self, x: f64) -> f64 {
        self.mass * self.profile.pdf(x)
    }

    /// `∫_x^∞ κ₀`.
    pub fn tail(&self, x: f64) -> f64 {
        self.mass * self.profile.survival(x)
    }

    /// `∫ κ₀(x) e^{-αx} dx`.
    pub fn laplace(&self, alpha: f64) -> f64 {
        self.mass * self.profile.laplace(alpha)
    }
}

/// How the initial configuration of a replica is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialStateSpec {
    /// Poisson point process with the given intensity.
    Poisson { intensity: Intensity },
    Fixed { traits: Configuration },
}

impl InitialStateSpec {
    /// Expected number of initial particles.
    pub fn expected_size(&self) -> f64 {
        match self {
            InitialStateSpec::Poisson { intensity } => intensity.mass(),
            InitialStateSpec::Fixed { traits } => traits.len() as f64,
        }
    }

    /// Draws an initial configuration.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Configuration> {
        match self {
            InitialStateSpec::Fixed { traits } => Ok(traits.clone()),
            InitialStateSpec::Poisson { intensity } => {
                let mass = intensity.mass();
                if !mass.is_finite() {
                    return Err(Error::NonFiniteIntegral(mass));
                }
                if mass == 0.0 {
                    return Ok(Configuration::empty());
                }
                let count: f64 = Poisson::new(mass)
                    .map_err(|_| Error::NonFiniteIntegral(mass))?
                    .sample(rng);
                let traits = (0..count as u64)
                    .map(|_| intensity.profile().sample(rng))
                    .collect();
                Configuration::new(traits)
            }
        }
    }
}

/// Draws an initial configuration from `spec`.
pub fn sample_initial<R: Rng + ?Sized>(spec: &InitialStateSpec, rng: &mut R) -> Result<Configuration> {
    spec.sample(rng)
}
