//! Poisson(lambda); tilting rescales the mean to lambda e^theta.

use crate::error::{Error, Result};
use crate::numeric::ln_poisson_pmf;
use crate::tilt::{Support, TailMoments, ThetaDomain, TiltingFamily};
use rand::RngCore;
use rand_distr::Distribution;

const TAIL_EPS: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct Poisson {
    lambda: f64,
}

impl Poisson {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "poisson requires lambda > 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }
}

impl TiltingFamily for Poisson {
    fn psi(&self, theta: f64) -> Result<f64> {
        Ok(self.lambda * theta.exp_m1())
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        Ok(self.lambda * theta.exp())
    }

    fn psi_double_prime(&self, theta: f64) -> Result<f64> {
        Ok(self.lambda * theta.exp())
    }

    fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::all_reals()
    }

    fn base_mean(&self) -> f64 {
        self.lambda
    }

    fn base_var(&self) -> f64 {
        self.lambda
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let mean = self.lambda * theta.exp();
        let d = rand_distr::Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(d.sample(rng))
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        // Summation until the cumulative tilted tail mass drops below 1e-14.
        let mean = self.lambda * (-theta).exp();
        let k_lo = if a < 0.0 {
            0
        } else if a.fract() == 0.0 {
            a as u64 + 1
        } else {
            a.ceil() as u64
        };
        let mut prob = 0.0;
        let mut partial = 0.0;
        let mut k = k_lo;
        loop {
            let pmf = ln_poisson_pmf(k, mean).exp();
            prob += pmf;
            partial += k as f64 * pmf;
            // Geometric-ratio bound on the remaining mass once past the mode.
            let kf = k as f64 + 1.0;
            if kf > mean {
                let ratio = mean / kf;
                let rem_bound = pmf * ratio / (1.0 - ratio) * (kf + 2.0);
                if rem_bound < TAIL_EPS * (prob + partial).max(TAIL_EPS) {
                    break;
                }
            }
            k += 1;
            if k > k_lo + 100_000_000 {
                return Err(Error::Numerical("poisson tail summation did not converge".into()));
            }
        }
        Ok(TailMoments { prob, partial_mean: partial })
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        if x < 0.0 || x.fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        ln_poisson_pmf(x as u64, self.lambda)
    }

    fn support(&self) -> Support {
        Support::Integers { lo: 0, hi: i64::MAX }
    }

    fn label(&self) -> String {
        format!("poisson({})", self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilted_mean_is_lambda_exp_theta() {
        let f = Poisson::new(3.0).unwrap();
        assert!((f.psi_prime(0.5).unwrap() - 3.0 * 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn conjugate_tail_full_mass() {
        let f = Poisson::new(4.0).unwrap();
        let tm = f.conjugate_tail(0.2, -0.5).unwrap();
        assert!((tm.prob - 1.0).abs() < 1e-12);
        let conj_mean = 4.0 * (-0.2f64).exp();
        assert!((tm.partial_mean - conj_mean).abs() < 1e-10);
    }

    #[test]
    fn conditional_mean_decreasing_in_theta() {
        let f = Poisson::new(2.0).unwrap();
        let a = 6.5;
        let m1 = f.conditional_mean_conjugate(0.0, a).unwrap();
        let m2 = f.conditional_mean_conjugate(0.5, a).unwrap();
        let m3 = f.conditional_mean_conjugate(1.5, a).unwrap();
        assert!(m1 > m2 && m2 > m3);
        assert!(m3 > a);
    }
}
