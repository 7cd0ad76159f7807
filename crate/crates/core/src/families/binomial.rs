//! Binomial(n, p); tilting moves the success probability to
//! p e^theta / (p e^theta + 1 - p).

use crate::error::{Error, Result};
use crate::numeric::ln_binomial_pmf;
use crate::tilt::{Support, TailMoments, ThetaDomain, TiltingFamily};
use rand::RngCore;
use rand_distr::Distribution;

#[derive(Debug, Clone)]
pub struct Binomial {
    n: u64,
    p: f64,
}

impl Binomial {
    pub fn new(n: u64, p: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("binomial requires n >= 1".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "binomial requires 0 < p < 1, got {p}"
            )));
        }
        Ok(Self { n, p })
    }

    /// Tilted success probability, computed in logistic form for stability.
    fn tilted_p(&self, theta: f64) -> f64 {
        let odds = (1.0 - self.p) / self.p;
        1.0 / (1.0 + odds * (-theta).exp())
    }
}

impl TiltingFamily for Binomial {
    fn psi(&self, theta: f64) -> Result<f64> {
        // n log(1 - p + p e^theta), evaluated as n(theta + log(p + (1-p)e^-theta))
        // for large theta to avoid overflow.
        let n = self.n as f64;
        if theta > 0.0 {
            Ok(n * (theta + (self.p + (1.0 - self.p) * (-theta).exp()).ln()))
        } else {
            Ok(n * ((self.p * theta.exp_m1()).ln_1p()))
        }
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        Ok(self.n as f64 * self.tilted_p(theta))
    }

    fn psi_double_prime(&self, theta: f64) -> Result<f64> {
        let q = self.tilted_p(theta);
        Ok(self.n as f64 * q * (1.0 - q))
    }

    fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::all_reals()
    }

    fn base_mean(&self) -> f64 {
        self.n as f64 * self.p
    }

    fn base_var(&self) -> f64 {
        self.n as f64 * self.p * (1.0 - self.p)
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let d = rand_distr::Binomial::new(self.n, self.tilted_p(theta))
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(d.sample(rng) as f64)
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        // Exact summation over the full support.
        let q = self.tilted_p(-theta);
        let k_lo = if a < 0.0 {
            0
        } else if a.fract() == 0.0 {
            a as u64 + 1
        } else {
            a.ceil() as u64
        };
        let mut prob = 0.0;
        let mut partial = 0.0;
        for k in k_lo..=self.n {
            let pmf = ln_binomial_pmf(k, self.n, q).exp();
            prob += pmf;
            partial += k as f64 * pmf;
        }
        Ok(TailMoments { prob, partial_mean: partial })
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        if x < 0.0 || x.fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        ln_binomial_pmf(x as u64, self.n, self.p)
    }

    fn support(&self) -> Support {
        Support::Integers { lo: 0, hi: self.n as i64 }
    }

    fn label(&self) -> String {
        format!("binomial({},{})", self.n, self.p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_prime_matches_table() {
        // n p e^theta / (1 - p + p e^theta)
        let f = Binomial::new(10, 0.3).unwrap();
        let theta = 0.7f64;
        let expect = 10.0 * 0.3 * theta.exp() / (0.7 + 0.3 * theta.exp());
        assert!((f.psi_prime(theta).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn conjugate_tail_sums_to_one_at_minus_infinity_threshold() {
        let f = Binomial::new(8, 0.4).unwrap();
        let tm = f.conjugate_tail(0.3, -1.0).unwrap();
        assert!((tm.prob - 1.0).abs() < 1e-12);
        assert!((tm.partial_mean - f.psi_prime(-0.3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psi_stable_for_large_theta() {
        let f = Binomial::new(5, 0.2).unwrap();
        let v = f.psi(800.0).unwrap();
        // psi(theta) ~ n(theta + ln p) for large theta
        assert!((v - 5.0 * (800.0 + 0.2f64.ln())).abs() < 1e-6);
    }
}
