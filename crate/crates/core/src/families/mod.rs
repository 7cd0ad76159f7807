//! Concrete tilting families: one per row of the summary table of tilting
//! measures, plus the compound Poisson process over f(R_t) = R_t - r_p.

mod binomial;
mod compound_poisson;
mod gamma;
mod noncentral_chi_square;
mod normal;
mod poisson;
mod uniform;

pub use binomial::Binomial;
pub use compound_poisson::{CompoundPoisson, CompoundPoissonSpec};
pub use gamma::{ChiSquare, Exponential, Gamma};
pub use noncentral_chi_square::NoncentralChiSquare;
pub use normal::Normal;
pub use poisson::Poisson;
pub use uniform::Uniform;

use crate::error::{Error, Result};
use crate::numeric::mills_ratio;
use crate::tilt::TiltingFamily;
use serde::{Deserialize, Serialize};

/// Parameter set for each supported family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Binomial { n: u64, p: f64 },
    Poisson { lambda: f64 },
    /// N(0, sigma^2)
    Normal { sigma: f64 },
    /// Rate-1 exponential; general rates are reachable through Gamma(1, beta).
    Exponential,
    ChiSquare { kappa: f64 },
    /// Shape alpha, scale beta.
    Gamma { alpha: f64, beta: f64 },
    NoncentralChiSquare { kappa: f64, lambda: f64 },
    /// Uniform(0, 1)
    Uniform,
}

/// Build the named family, validating its parameters.
pub fn make_family(spec: &FamilySpec) -> Result<Box<dyn TiltingFamily>> {
    Ok(match *spec {
        FamilySpec::Binomial { n, p } => Box::new(Binomial::new(n, p)?),
        FamilySpec::Poisson { lambda } => Box::new(Poisson::new(lambda)?),
        FamilySpec::Normal { sigma } => Box::new(Normal::new(sigma)?),
        FamilySpec::Exponential => Box::new(Exponential::new()),
        FamilySpec::ChiSquare { kappa } => Box::new(ChiSquare::new(kappa)?),
        FamilySpec::Gamma { alpha, beta } => Box::new(Gamma::new(alpha, beta)?),
        FamilySpec::NoncentralChiSquare { kappa, lambda } => {
            Box::new(NoncentralChiSquare::new(kappa, lambda)?)
        }
        FamilySpec::Uniform => Box::new(Uniform::new()),
    })
}

/// Closed-form optimal tilt for the rate-1 exponential and event {X > a}:
/// theta* = (-1 + sqrt(1 + a^2)) / a, always < 1.
pub fn exponential_theta_star(a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Precondition(format!(
            "exponential closed-form tilt requires a > 0, got {a}"
        )));
    }
    // Rationalized form avoids cancellation as a -> 0.
    Ok(a / (1.0 + (1.0 + a * a).sqrt()))
}

/// Residual of the standard-normal optimality equation at (a, theta):
/// theta - [phi(a+theta)/(1-Phi(a+theta)) - theta] = 2 theta - mills(a+theta).
///
/// Its root in theta coincides with the variance-optimal tilt for N(0,1) and
/// {X > a}; the first-order form 2 theta (1-Phi(a+theta)) = phi(a+theta)
/// holds at the root.
pub fn normal_tilt_equation(a: f64, theta: f64) -> f64 {
    2.0 * theta - mills_ratio(a + theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_theta_star_values() {
        let t2 = exponential_theta_star(2.0).unwrap();
        assert!((t2 - (5.0f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!((t2 - 0.618_034).abs() < 1e-6);
        let t1 = exponential_theta_star(1.0).unwrap();
        assert!((t1 - (2.0f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((t1 - 0.414_214).abs() < 1e-6);
    }

    #[test]
    fn exponential_theta_star_limits() {
        // a -> 0+ gives theta -> 0; always below 1
        assert!(exponential_theta_star(1e-12).unwrap() < 1e-12);
        assert!(exponential_theta_star(1e9).unwrap() < 1.0);
        assert!(exponential_theta_star(0.0).is_err());
        assert!(exponential_theta_star(-1.0).is_err());
    }

    #[test]
    fn normal_tilt_equation_at_origin() {
        // residual at theta=0, a=0 is -2 phi(0)
        let r = normal_tilt_equation(0.0, 0.0);
        assert!((r + 0.797_885).abs() < 1e-6);
    }

    #[test]
    fn make_family_validates() {
        assert!(make_family(&FamilySpec::Binomial { n: 0, p: 0.5 }).is_err());
        assert!(make_family(&FamilySpec::Binomial { n: 4, p: 1.0 }).is_err());
        assert!(make_family(&FamilySpec::Poisson { lambda: 0.0 }).is_err());
        assert!(make_family(&FamilySpec::Normal { sigma: -1.0 }).is_err());
        assert!(make_family(&FamilySpec::Gamma { alpha: 1.0, beta: 0.0 }).is_err());
        assert!(make_family(&FamilySpec::ChiSquare { kappa: 0.0 }).is_err());
        assert!(make_family(&FamilySpec::NoncentralChiSquare { kappa: 2.0, lambda: -0.1 }).is_err());
    }
}
