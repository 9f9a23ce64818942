// SPDX-License-Identifier: Apache-2.0

//! Finite particle configurations and the observables evaluated on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite multiset of nonnegative traits (times to division).
///
/// Traits are kept in ascending order so the next fission time is the first
/// element. Duplicates are kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Configuration {
    traits: Vec<f64>,
}

impl Configuration {
    pub fn new(mut traits: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = traits.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidTrait(bad));
        }
        traits.sort_by(f64::total_cmp);
        Ok(Configuration { traits })
    }

    pub fn empty() -> Self {
        Configuration::default()
    }

    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }

    /// Traits in ascending order.
    pub fn traits(&self) -> &[f64] {
        &self.traits
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.traits.iter().copied()
    }

    /// Smallest trait, i.e. the time until the next fission.
    pub fn min_trait(&self) -> Option<f64> {
        self.traits.first().copied()
    }

    /// Translates every trait by `t`. Negative shifts are only defined when
    /// no trait would become negative.
    pub fn shift(&self, t: f64) -> Result<Configuration> {
        if !t.is_finite() {
            return Err(Error::param("t", t, "shift must be finite"));
        }
        if let Some(min) = self.min_trait() {
            if min + t < 0.0 {
                return Err(Error::NegativeShift {
                    shift: t,
                    trait_value: min,
                });
            }
        }
        Ok(Configuration {
            traits: self.traits.iter().map(|x| x + t).collect(),
        })
    }
}

impl TryFrom<Vec<f64>> for Configuration {
    type Error = Error;
    fn try_from(traits: Vec<f64>) -> Result<Self> {
        Configuration::new(traits)
    }
}

impl From<Configuration> for Vec<f64> {
    fn from(c: Configuration) -> Vec<f64> {
        c.traits
    }
}

/// `φ_σ(x) = (1 + x)^(-σ)`.
pub fn phi(sigma: f64, x: f64) -> f64 {
    (1.0 + x).powf(-sigma)
}

/// Observables `F: Γ → [0, ∞)` used to monitor the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightFunction {
    /// `1 + m|γ|`
    HM { m: f64 },
    /// `1 + ς|γ| + Σ e^{-αx}`
    HVarsigmaAlpha { varsigma: f64, alpha: f64 },
    /// `|γ|^l`
    PowerMoment { l: u32 },
    /// `Π φ_σ(x)`, equal to one on the empty configuration.
    PhiSigmaProduct { sigma: f64 },
}

impl WeightFunction {
    pub fn h_varsigma_alpha(varsigma: f64, alpha: f64) -> Result<Self> {
        let w = WeightFunction::HVarsigmaAlpha { varsigma, alpha };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightFunction::HM { m } if !(m.is_finite() && m >= 0.0) => {
                Err(Error::param("m", m, "must be finite and ≥ 0"))
            }
            WeightFunction::HVarsigmaAlpha { varsigma, .. }
                if !(varsigma.is_finite() && varsigma > 0.0) =>
            {
                Err(Error::param("varsigma", varsigma, "must be finite and > 0"))
            }
            WeightFunction::HVarsigmaAlpha { alpha, .. } if !(alpha.is_finite() && alpha > 0.0) => {
                Err(Error::param("alpha", alpha, "must be finite and > 0"))
            }
            WeightFunction::PhiSigmaProduct { sigma } if !(sigma.is_finite() && sigma >= 3.0) => {
                Err(Error::param("sigma", sigma, "must be ≥ 3"))
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, gamma: &Configuration) -> f64 {
        self.evaluate_traits(gamma.len(), gamma.iter())
    }

    /// Evaluates on a configuration given as its cardinality and an
    /// iterator over its traits (which need not be sorted).
    pub fn evaluate_traits<I: Iterator<Item = f64>>(&self, len: usize, traits: I) -> f64 {
        let n = len as f64;
        match *self {
            WeightFunction::HM { m } => 1.0 + m * n,
            WeightFunction::HVarsigmaAlpha { varsigma, alpha } => {
                1.0 + varsigma * n + traits.map(|x| (-alpha * x).exp()).sum::<f64>()
            }
            WeightFunction::PowerMoment { l } => n.powi(l as i32),
            WeightFunction::PhiSigmaProduct { sigma } => traits.map(|x| phi(sigma, x)).product(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(traits: &[f64]) -> Configuration {
        Configuration::new(traits.to_vec()).unwrap()
    }

    #[test]
    fn h_varsigma_alpha_examples() {
        let h = WeightFunction::h_varsigma_alpha(1.0, 1.0).unwrap();
        assert_eq!(h.evaluate(&Configuration::empty()), 1.0);
        let h = WeightFunction::h_varsigma_alpha(0.5, 1.0).unwrap();
        assert_eq!(h.evaluate(&config(&[0.0])), 2.5);
    }

    #[test]
    fn power_moment_and_h_m() {
        let g = config(&[1.0, 2.0, 3.0]);
        assert_eq!(WeightFunction::PowerMoment { l: 2 }.evaluate(&g), 9.0);
        assert_eq!(WeightFunction::PowerMoment { l: 0 }.evaluate(&Configuration::empty()), 1.0);
        assert_eq!(WeightFunction::HM { m: 0.5 }.evaluate(&g), 2.5);
    }

    #[test]
    fn phi_product_of_empty_is_one() {
        let w = WeightFunction::PhiSigmaProduct { sigma: 3.0 };
        assert_eq!(w.evaluate(&Configuration::empty()), 1.0);
        assert_eq!(w.evaluate(&config(&[1.0])), 0.125);
    }

    #[test]
    fn shift_examples() {
        let g = config(&[1.0, 2.0]);
        assert_eq!(g.shift(0.5).unwrap().traits(), &[1.5, 2.5]);
        assert_eq!(g.shift(-1.0).unwrap().traits(), &[0.0, 1.0]);
        assert!(Configuration::empty().shift(-7.0).unwrap().is_empty());
        assert!(matches!(g.shift(-1.5), Err(Error::NegativeShift { .. })));
    }

    #[test]
    fn rejects_negative_traits_and_keeps_duplicates() {
        assert!(Configuration::new(vec![1.0, -0.1]).is_err());
        assert!(Configuration::new(vec![f64::NAN]).is_err());
        let g = config(&[2.0, 1.0, 1.0]);
        assert_eq!(g.traits(), &[1.0, 1.0, 2.0]);
        assert_eq!(g.min_trait(), Some(1.0));
    }

    #[test]
    fn json_is_a_plain_array() {
        let g = config(&[2.0, 0.5]);
        assert_eq!(serde_json::to_string(&g).unwrap(), "[0.5,2.0]");
        let back: Configuration = serde_json::from_str("[3, 1]").unwrap();
        assert_eq!(back.traits(), &[1.0, 3.0]);
        assert!(serde_json::from_str::<Configuration>("[-1]").is_err());
    }

    #[test]
    fn weight_function_json_is_tagged() {
        let w: WeightFunction =
            serde_json::from_str(r#"{"type":"h_varsigma_alpha","varsigma":0.5,"alpha":3.0}"#)
                .unwrap();
        assert_eq!(w, WeightFunction::HVarsigmaAlpha { varsigma: 0.5, alpha: 3.0 });
    }

    proptest! {
        #[test]
        fn shifts_compose(traits in proptest::collection::vec(0.0f64..50.0, 0..12),
                          s in 0.0f64..10.0, t in 0.0f64..10.0) {
            let g = config(&traits);
            let twice = g.shift(s).unwrap().shift(t).unwrap();
            let once = g.shift(s + t).unwrap();
            prop_assert_eq!(twice.len(), once.len());
            for (a, b) in twice.iter().zip(once.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
            }
        }

        #[test]
        fn h_dominates_linear_part(traits in proptest::collection::vec(0.0f64..50.0, 0..12),
                                   varsigma in 0.01f64..1.0, alpha in 0.01f64..5.0) {
            let g = config(&traits);
            let h = WeightFunction::h_varsigma_alpha(varsigma, alpha).unwrap();
            prop_assert!(h.evaluate(&g) >= 1.0 + varsigma * g.len() as f64);
        }
    }
}
