//! Noncentral chi-square NCX2(kappa, lambda) as a Poisson-weighted mixture of
//! central chi-squares: X | {N=i} ~ chisq(kappa + 2i), N ~ Pois(lambda/2).
//! Tilting preserves the mixture shape: X | {N=i} ~ Gamma((kappa+2i)/2,
//! 2/(1-2 theta)) with N ~ Pois(lambda/(2(1-2 theta))).

use crate::error::{Error, Result};
use crate::numeric::{gamma_partial_upper, gamma_sf, ln_poisson_pmf};
use crate::tilt::{Support, TailMoments, ThetaDomain, TiltingFamily};
use rand::RngCore;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;

const MIX_EPS: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct NoncentralChiSquare {
    kappa: f64,
    lambda: f64,
}

impl NoncentralChiSquare {
    pub fn new(kappa: f64, lambda: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("NCX2 kappa must be > 0, got {kappa}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("NCX2 lambda must be > 0, got {lambda}")));
        }
        Ok(Self { kappa, lambda })
    }

    fn check(&self, theta: f64) -> Result<()> {
        if theta.is_finite() && theta < 0.5 {
            Ok(())
        } else {
            Err(Error::ThetaOutOfDomain { theta, lower: f64::NEG_INFINITY, upper: 0.5 })
        }
    }

    /// Mixture sweep: weights Pois(lambda/(2(1-2t))) against Gamma components
    /// with scale 2/(1-2t), truncated once the remaining Poisson mass cannot
    /// move the accumulated sums by a relative 1e-14.
    fn tilted_mixture<F>(&self, t: f64, mut f: F) -> Result<()>
    where
        F: FnMut(f64 /*weight*/, f64 /*shape*/, f64 /*scale*/),
    {
        self.check(t)?;
        let d = 1.0 - 2.0 * t;
        let mean = self.lambda / (2.0 * d);
        let scale = 2.0 / d;
        let cap = (mean + 40.0 * (mean + 1.0).sqrt() + 60.0) as u64;
        let mut cum = 0.0;
        for i in 0..=cap {
            let w = ln_poisson_pmf(i, mean).exp();
            f(w, 0.5 * (self.kappa + 2.0 * i as f64), scale);
            cum += w;
            if 1.0 - cum < MIX_EPS && i as f64 > mean {
                break;
            }
        }
        Ok(())
    }

    /// Base density via the Poisson-weighted mixture of central chi-squares.
    pub fn density_mixture(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let mut dens = 0.0;
        self.tilted_mixture(0.0, |w, shape, scale| {
            let ln_pdf = (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape);
            dens += w * ln_pdf.exp();
        })
        .expect("t=0 is always admissible");
        dens
    }

    /// Base density via the modified-Bessel closed form:
    /// (1/2) e^{-(x+lambda)/2} (x/lambda)^{kappa/4 - 1/2} I_{kappa/2-1}(sqrt(lambda x)).
    pub fn density_bessel(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let nu = 0.5 * self.kappa - 1.0;
        let z = (self.lambda * x).sqrt();
        let ln = -0.5 * (x + self.lambda) + (0.25 * self.kappa - 0.5) * (x / self.lambda).ln()
            + ln_bessel_i(nu, z)
            - std::f64::consts::LN_2;
        ln.exp()
    }
}

/// log I_nu(z) by the ascending series, summed in log space.
fn ln_bessel_i(nu: f64, z: f64) -> f64 {
    let half = 0.5 * z;
    let ln_half = half.ln();
    let mut terms: Vec<f64> = Vec::with_capacity(64);
    let mut j = 0.0f64;
    let mut max_t = f64::NEG_INFINITY;
    loop {
        let t = (nu + 2.0 * j) * ln_half - ln_gamma(j + 1.0) - ln_gamma(nu + j + 1.0);
        terms.push(t);
        max_t = max_t.max(t);
        // terms decay factorially once 2j exceeds z
        if j > 2.0 && 2.0 * j > z && t < max_t - 40.0 {
            break;
        }
        j += 1.0;
        if j > 10_000.0 {
            break;
        }
    }
    let sum: f64 = terms.iter().map(|t| (t - max_t).exp()).sum();
    max_t + sum.ln()
}

impl TiltingFamily for NoncentralChiSquare {
    fn psi(&self, theta: f64) -> Result<f64> {
        self.check(theta)?;
        let d = 1.0 - 2.0 * theta;
        Ok(self.lambda * theta / d - 0.5 * self.kappa * d.ln())
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        self.check(theta)?;
        let d = 1.0 - 2.0 * theta;
        Ok((self.lambda + self.kappa * d) / (d * d))
    }

    fn psi_double_prime(&self, theta: f64) -> Result<f64> {
        self.check(theta)?;
        let d = 1.0 - 2.0 * theta;
        Ok((4.0 * self.lambda + 2.0 * self.kappa * d) / (d * d * d))
    }

    fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::new(f64::NEG_INFINITY, 0.5)
    }

    fn base_mean(&self) -> f64 {
        self.kappa + self.lambda
    }

    fn base_var(&self) -> f64 {
        2.0 * self.kappa + 4.0 * self.lambda
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        // Two-stage mixture: Poisson index, then the Gamma component.
        self.check(theta)?;
        let d = 1.0 - 2.0 * theta;
        let n = rand_distr::Poisson::new(self.lambda / (2.0 * d))
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(rng);
        let shape = 0.5 * (self.kappa + 2.0 * n);
        let g = rand_distr::Gamma::new(shape, 2.0 / d)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(g.sample(rng))
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        let mut prob = 0.0;
        let mut partial = 0.0;
        self.tilted_mixture(-theta, |w, shape, scale| {
            prob += w * gamma_sf(shape, scale, a);
            partial += w * gamma_partial_upper(shape, scale, a);
        })?;
        Ok(TailMoments { prob, partial_mean: partial })
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        let d = self.density_mixture(x);
        if d > 0.0 {
            d.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn support(&self) -> Support {
        Support::Continuous { lo: 0.0, hi: f64::INFINITY }
    }

    fn label(&self) -> String {
        format!("ncchisq({},{})", self.kappa, self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_prime_matches_table() {
        // (lambda + kappa(1-2 theta)) / (1-2 theta)^2
        let f = NoncentralChiSquare::new(2.0, 1.0).unwrap();
        let t = 0.33;
        let d: f64 = 1.0 - 2.0 * t;
        assert!((f.psi_prime(t).unwrap() - (1.0 + 2.0 * d) / (d * d)).abs() < 1e-12);
    }

    #[test]
    fn density_forms_agree() {
        // mixture and Bessel representations agree pointwise
        for (k, l) in [(2.0, 1.0), (5.0, 5.0), (3.0, 0.5)] {
            let f = NoncentralChiSquare::new(k, l).unwrap();
            for i in 1..=50 {
                let x = 0.9 * i as f64;
                let m = f.density_mixture(x);
                let b = f.density_bessel(x);
                assert!((m - b).abs() <= 1e-8 * b.max(1e-8), "k={k} l={l} x={x}: {m} vs {b}");
            }
        }
    }

    #[test]
    fn moments_match_closed_forms() {
        let f = NoncentralChiSquare::new(2.0, 5.0).unwrap();
        assert_eq!(f.base_mean(), 7.0);
        assert_eq!(f.base_var(), 24.0);
        let h = 1e-6;
        let fd = (f.psi(h).unwrap() - f.psi(-h).unwrap()) / (2.0 * h);
        assert!((fd - f.base_mean()).abs() < 1e-6);
    }
}
