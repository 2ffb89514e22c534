use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elliptical likelihood family, described by `ρ = −log g` and the
/// influence function `u = 2ρ′`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EllipticalFamily {
    #[default]
    Gaussian,
    /// Multivariate Student-t with `nu > 2` degrees of freedom.
    #[serde(rename = "student-t")]
    StudentT { nu: f64 },
}

impl EllipticalFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian => Ok(()),
            Self::StudentT { nu } if nu.is_finite() && nu > 2.0 => Ok(()),
            Self::StudentT { nu } => Err(Error::InvalidParameter(format!(
                "Student-t fit needs nu > 2 (finite second moments), got {nu}"
            ))),
        }
    }

    /// `ρ(s)` for a quadratic form `s = xᵀΘx` in dimension `p`.
    pub fn rho(&self, s: f64, p: usize) -> f64 {
        match *self {
            Self::Gaussian => 0.5 * s,
            Self::StudentT { nu } => 0.5 * (nu + p as f64) * (s / nu).ln_1p(),
        }
    }

    /// `u(s) = 2ρ′(s)`: 1 for the Gaussian, `(ν+p)/(ν+s)` for Student-t.
    pub fn u(&self, s: f64, p: usize) -> f64 {
        match *self {
            Self::Gaussian => 1.0,
            Self::StudentT { nu } => (nu + p as f64) / (nu + s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn influence_examples() {
        assert_eq!(EllipticalFamily::Gaussian.u(123.0, 7), 1.0);
        assert_eq!(EllipticalFamily::StudentT { nu: 2.0 }.u(2.0, 4), 1.5);
        assert!(EllipticalFamily::StudentT { nu: 2.0 }.validate().is_err());
        assert!(EllipticalFamily::StudentT { nu: 2.1 }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn u_is_twice_the_derivative_of_rho(s in 0.01f64..50.0, nu in 2.1f64..30.0, p in 1usize..60) {
            let h = 1e-5;
            for fam in [EllipticalFamily::Gaussian, EllipticalFamily::StudentT { nu }] {
                let fd = 2.0 * (fam.rho(s + h, p) - fam.rho(s - h, p)) / (2.0 * h);
                prop_assert!((fd - fam.u(s, p)).abs() <= 1e-6 * fam.u(s, p).max(1.0));
            }
        }

        #[test]
        fn student_u_positive_and_decreasing(s in 0.0f64..100.0, ds in 0.01f64..10.0, nu in 2.1f64..30.0) {
            let fam = EllipticalFamily::StudentT { nu };
            prop_assert!(fam.u(s, 10) > 0.0);
            prop_assert!(fam.u(s + ds, 10) < fam.u(s, 10));
        }
    }
}
