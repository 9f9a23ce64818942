// SPDX-License-Identifier: Apache-2.0

//! Adaptive Gauss-Kronrod quadrature and bracketing root search.
//!
//! The integrator is the classic globally adaptive G7/K15 scheme: the
//! interval with the largest local error estimate is bisected until the
//! summed estimate drops below the requested absolute tolerance.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SUBDIVISIONS: usize = 4000;

/// Result of a numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
}

impl std::ops::Add for Integral {
    type Output = Integral;
    fn add(self, rhs: Integral) -> Integral {
        Integral {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Integral {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Integral {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Never fails: if the subdivision budget is exhausted the best estimate
/// is returned together with its (larger than requested) error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Integral {
    if b <= a {
        return Integral {
            value: 0.0,
            error: 0.0,
        };
    }
    let mut pieces = vec![(a, b, kronrod15(&f, a, b))];
    loop {
        let total_error: f64 = pieces.iter().map(|p| p.2.error).sum();
        if total_error <= abs_tol || pieces.len() >= MAX_SUBDIVISIONS {
            break;
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|l, r| l.1 .2.error.total_cmp(&r.1 .2.error))
            .expect("non-empty");
        let (lo, hi, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval cannot be split further in floating point.
            pieces.push((lo, hi, kronrod15(&f, lo, hi)));
            break;
        }
        pieces.push((lo, mid, kronrod15(&f, lo, mid)));
        pieces.push((mid, hi, kronrod15(&f, mid, hi)));
    }
    // Sum in position order so the result does not depend on split history.
    pieces.sort_by(|l, r| l.0.total_cmp(&r.0));
    pieces.iter().fold(
        Integral {
            value: 0.0,
            error: 0.0,
        },
        |acc, p| acc + p.2,
    )
}

/// Integrates over consecutive segments of the sorted `points`, splitting
/// the tolerance evenly between them.
pub fn integrate_segments<F: Fn(f64) -> f64>(f: F, points: &[f64], abs_tol: f64) -> Integral {
    let segments = points.len().saturating_sub(1).max(1) as f64;
    points
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], abs_tol / segments))
        .fold(
            Integral {
                value: 0.0,
                error: 0.0,
            },
            |acc, i| acc + i,
        )
}

/// Breakpoints for integrals over `[0, x_max]` of functions with scale near
/// one: `0`, the dyadic points `2^-6, ..., ≥ x_max` and any `extra` points.
pub fn dyadic_partition(x_max: f64, extra: &[f64]) -> Vec<f64> {
    let mut points = vec![0.0, x_max];
    let mut x = 1.0 / 64.0;
    while x < x_max {
        points.push(x);
        x *= 2.0;
    }
    points.extend(extra.iter().copied().filter(|&p| p > 0.0 && p < x_max));
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Finds `x ≥ 0` with `f(x) = target` for a strictly decreasing `f` with
/// `f(0) > target`, by bisection on a bracket `[0, A]` whose right end is
/// doubled until `f(A) < target`.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, target: f64, tol: f64) -> Result<f64> {
    let f0 = f(0.0);
    if !(f0 > target) {
        return Err(Error::NoBracket {
            target,
            f_lo: f0,
            f_hi: f64::NAN,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while f(hi) >= target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return Err(Error::NoBracket {
                target,
                f_lo: f0,
                f_hi: f(hi),
            });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn smooth_and_kinked_integrands() {
        let r = integrate(|x: f64| (-x).exp(), 0.0, 40.0, 1e-12);
        assert!((r.value - (1.0 - (-40f64).exp())).abs() < 1e-11);
        let r = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10);
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn segments_cover_long_tails() {
        let points = dyadic_partition(1e6, &[]);
        let r = integrate_segments(|x: f64| 2.0 * (1.0 + x).powi(-3), &points, 1e-10);
        let exact = 1.0 - (1.0f64 + 1e6).powi(-2);
        assert!((r.value - exact).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn bisection_finds_decreasing_root() {
        let root = bisect_decreasing(|x| 2.0 / (1.0 + x), 0.5, 1e-12).unwrap();
        assert!((root - 3.0).abs() < 1e-11);
        let root = bisect_decreasing(|x| 2.0 / (1.0 + x), 1e-3, 1e-9).unwrap();
        assert!((root - 1999.0).abs() < 1e-8);
    }

    #[test]
    fn bisection_rejects_missing_bracket() {
        assert!(matches!(
            bisect_decreasing(|x| 0.5 / (1.0 + x), 1.0, 1e-9),
            Err(Error::NoBracket { .. })
        ));
    }
}
