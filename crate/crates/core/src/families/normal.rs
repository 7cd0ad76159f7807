//! N(0, sigma^2) under tilting: psi(theta) = theta^2 sigma^2 / 2, so the
//! tilted law is N(theta sigma^2, sigma^2) and the conjugate is its mirror.

use crate::error::{Error, Result};
use crate::numeric::{norm_pdf, norm_sf, SQRT_2PI};
use crate::tilt::{Support, TailMoments, ThetaDomain, TiltingFamily};
use rand::RngCore;
use rand_distr::Distribution;

#[derive(Debug, Clone)]
pub struct Normal {
    sigma: f64,
}

impl Normal {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("normal sigma must be > 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn standard() -> Self {
        Self { sigma: 1.0 }
    }

    fn var(&self) -> f64 {
        self.sigma * self.sigma
    }
}

impl TiltingFamily for Normal {
    fn psi(&self, theta: f64) -> Result<f64> {
        Ok(0.5 * theta * theta * self.var())
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        Ok(theta * self.var())
    }

    fn psi_double_prime(&self, _theta: f64) -> Result<f64> {
        Ok(self.var())
    }

    fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::all_reals()
    }

    fn base_mean(&self) -> f64 {
        0.0
    }

    fn base_var(&self) -> f64 {
        self.var()
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let d = rand_distr::Normal::new(theta * self.var(), self.sigma)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(d.sample(rng))
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        // Qbar = N(-theta sigma^2, sigma^2)
        let m = -theta * self.var();
        let z = (a - m) / self.sigma;
        let sf = norm_sf(z);
        let partial = m * sf + self.sigma * norm_pdf(z);
        Ok(TailMoments { prob: sf, partial_mean: partial })
    }

    fn conditional_mean_conjugate(&self, theta: f64, a: f64) -> Result<f64> {
        // Mills-ratio closed form stays accurate far into the tail.
        let m = -theta * self.var();
        let z = (a - m) / self.sigma;
        Ok(m + self.sigma * crate::numeric::mills_ratio(z))
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        let z = x / self.sigma;
        -0.5 * z * z - (self.sigma * SQRT_2PI).ln()
    }

    fn support(&self) -> Support {
        Support::Continuous { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    fn label(&self) -> String {
        if self.sigma == 1.0 {
            "normal(0,1)".into()
        } else {
            format!("normal(0,{}^2)", self.sigma)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mills_ratio;

    #[test]
    fn tilted_law_matches_psi_prime() {
        // Tilted mean is theta*sigma^2, consistent with psi' (the Q column of
        // the summary table reads N(theta, sigma^2); the mean must equal psi'
        // so the tilted mean theta*sigma^2 is used).
        let f = Normal::new(2.0).unwrap();
        assert_eq!(f.psi_prime(0.3).unwrap(), 0.3 * 4.0);
    }

    #[test]
    fn conjugate_conditional_mean_is_truncated_normal_mean() {
        let f = Normal::standard();
        // E_Qbar[X | X > a] = mills(a + theta) - theta for N(0,1)
        let (theta, a) = (0.7, 1.3);
        let got = f.conditional_mean_conjugate(theta, a).unwrap();
        assert!((got - (mills_ratio(a + theta) - theta)).abs() < 1e-12);
        assert!(got > a);
    }
}
