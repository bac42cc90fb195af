//! Bijections between constrained filter parameters and unconstrained reals.
//!
//! Positive parameters (white-balance gains, gamma, tone knots, sharpen
//! strength) use `exp`; parameters confined to `[0, 1]` (contrast blend,
//! defog strength) use the logistic function.

use crate::filters::{FilterChain, FilterKind, FilterParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Exp,
    Logistic,
}

impl Transform {
    pub fn for_kind(kind: FilterKind) -> Self {
        match kind {
            FilterKind::Contrast | FilterKind::Defog => Transform::Logistic,
            _ => Transform::Exp,
        }
    }

    #[inline]
    pub fn forward(self, u: f64) -> f64 {
        match self {
            Transform::Exp => u.exp(),
            Transform::Logistic => logistic(u),
        }
    }

    #[inline]
    pub fn inverse(self, v: f64) -> f64 {
        match self {
            Transform::Exp => v.ln(),
            Transform::Logistic => logit(v),
        }
    }

    /// `d forward / du`, written in terms of the constrained value.
    #[inline]
    pub fn derivative_at_value(self, v: f64) -> f64 {
        match self {
            Transform::Exp => v,
            Transform::Logistic => v * (1.0 - v),
        }
    }
}

#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(v: f64) -> f64 {
    v.ln() - (-v).ln_1p()
}

pub fn to_unconstrained(p: &FilterParams) -> Vec<f64> {
    let t = Transform::for_kind(p.kind());
    p.values().into_iter().map(|v| t.inverse(v)).collect()
}

/// Parameters of `template`'s kind (and fixed settings) from unconstrained values.
pub fn from_unconstrained(template: &FilterParams, u: &[f64]) -> FilterParams {
    let t = Transform::for_kind(template.kind());
    let v: Vec<f64> = u.iter().map(|&x| t.forward(x)).collect();
    template.with_values(&v)
}

pub fn chain_to_unconstrained(chain: &FilterChain) -> Vec<f64> {
    chain.stages().iter().flat_map(to_unconstrained).collect()
}

pub fn chain_from_unconstrained(template: &FilterChain, u: &[f64]) -> FilterChain {
    let values: Vec<f64> = transforms(template)
        .zip(u)
        .map(|(t, &x)| t.forward(x))
        .collect();
    template.with_values(&values)
}

/// One transform per fitted scalar of the chain.
pub fn transforms(chain: &FilterChain) -> impl Iterator<Item = Transform> + '_ {
    chain
        .stages()
        .iter()
        .flat_map(|s| std::iter::repeat_n(Transform::for_kind(s.kind()), s.len()))
}

/// Converts a gradient with respect to the chain's values into one with
/// respect to its unconstrained coordinates.
pub fn to_unconstrained_gradient(chain: &FilterChain, grad: &[f64]) -> Vec<f64> {
    transforms(chain)
        .zip(chain.values())
        .zip(grad)
        .map(|((t, v), g)| g * t.derivative_at_value(v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn landmarks() {
        assert_eq!(logit(0.5), 0.0);
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(Transform::Exp.inverse(1.0), 0.0);
        assert_eq!(to_unconstrained(&FilterParams::Defog { omega: 0.5 }), vec![0.0]);
        assert_eq!(to_unconstrained(&FilterParams::Gamma { gamma: 1.0 }), vec![0.0]);
    }

    #[test]
    fn sigma_survives_reparameterization() {
        let p = FilterParams::Sharpen { lambda: 0.3, sigma: 2.5 };
        let back = from_unconstrained(&p, &to_unconstrained(&p));
        assert!(matches!(back, FilterParams::Sharpen { sigma, .. } if sigma == 2.5));
    }

    proptest! {
        #[test]
        fn chain_round_trip(
            omega in 0.01f64..0.99,
            gains in proptest::array::uniform3(0.05f64..20.0),
            gamma in 0.05f64..20.0,
            alpha in 0.01f64..0.99,
            knots in proptest::collection::vec(0.05f64..20.0, 8),
            lambda in 0.01f64..10.0,
        ) {
            let chain = FilterChain::new(vec![
                FilterParams::Defog { omega },
                FilterParams::WhiteBalance { gains },
                FilterParams::Gamma { gamma },
                FilterParams::Contrast { alpha },
                FilterParams::Tone { knots },
                FilterParams::Sharpen { lambda, sigma: 1.0 },
            ]).unwrap();
            let back = chain_from_unconstrained(&chain, &chain_to_unconstrained(&chain));
            for (a, b) in chain.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn values_stay_in_domain(u in proptest::collection::vec(-30.0f64..30.0, 15)) {
            let chain = chain_from_unconstrained(&FilterChain::default_chain(true), &u);
            for s in chain.stages() {
                prop_assert!(s.validate().is_ok(), "{:?}", s);
            }
        }
    }
}
