//! Compound Poisson process R_t = sum_{n<=N(t)} log Y_n with lognormal jumps,
//! embedded through f(R_t) = R_t - r_p. The tilted law keeps the compound
//! Poisson shape: jumps N(eta + theta delta^2, delta^2) arriving at rate
//! lambda e^{theta eta + theta^2 delta^2/2}.

use crate::error::{Error, Result};
use crate::numeric::{ln_poisson_pmf, norm_cdf, norm_pdf, norm_sf};
use crate::tilt::{Support, TailDirection, TailEvent, TailMoments, ThetaDomain, TiltingFamily};
use rand::RngCore;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

const TRUNC_EPS: f64 = 1e-12;

/// Parameters of the compound Poisson embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoissonSpec {
    /// Jump intensity per unit time.
    pub lambda: f64,
    /// Horizon t.
    pub horizon: f64,
    /// Jump log-size mean eta.
    pub eta: f64,
    /// Jump log-size variance delta^2.
    pub delta2: f64,
    /// Offset r_p in f(R_t) = R_t - r_p.
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct CompoundPoisson {
    spec: CompoundPoissonSpec,
}

impl CompoundPoisson {
    pub fn new(spec: CompoundPoissonSpec) -> Result<Self> {
        if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
            return Err(Error::InvalidParameter("compound poisson requires lambda > 0".into()));
        }
        if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
            return Err(Error::InvalidParameter("compound poisson requires horizon > 0".into()));
        }
        if !(spec.delta2 > 0.0 && spec.delta2.is_finite()) {
            return Err(Error::InvalidParameter("compound poisson requires delta^2 > 0".into()));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &CompoundPoissonSpec {
        &self.spec
    }

    /// e^{theta eta + theta^2 delta^2/2}, the per-jump tilting factor.
    fn jump_mgf(&self, theta: f64) -> f64 {
        (theta * self.spec.eta + 0.5 * theta * theta * self.spec.delta2).exp()
    }

    /// Tilted jump intensity over the horizon: lambda e^{...} t.
    pub fn tilted_count_mean(&self, theta: f64) -> f64 {
        self.spec.lambda * self.spec.horizon * self.jump_mgf(theta)
    }

    /// Tilted jump mean eta + theta delta^2.
    pub fn tilted_jump_mean(&self, theta: f64) -> f64 {
        self.spec.eta + theta * self.spec.delta2
    }

    /// Draw (N(t), f(R_t)) under Q_theta; exposes the count for tests.
    pub fn sample_tilted_parts(&self, theta: f64, rng: &mut dyn RngCore) -> Result<(u64, f64)> {
        let n = rand_distr::Poisson::new(self.tilted_count_mean(theta))
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(rng) as u64;
        let jump = rand_distr::Normal::new(self.tilted_jump_mean(theta), self.spec.delta2.sqrt())
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let mut r = 0.0;
        for _ in 0..n {
            r += jump.sample(rng);
        }
        Ok((n, r - self.spec.offset))
    }

    /// Sweep Poisson counts n with weights under intensity `count_mean`,
    /// stopping when the remaining mass is below the truncation tolerance.
    fn sweep_counts<F>(&self, count_mean: f64, mut f: F)
    where
        F: FnMut(u64, f64),
    {
        let cap = (count_mean + 40.0 * (count_mean + 1.0).sqrt() + 60.0) as u64;
        let mut cum = 0.0;
        for n in 0..=cap {
            let w = ln_poisson_pmf(n, count_mean).exp();
            f(n, w);
            cum += w;
            if 1.0 - cum < TRUNC_EPS && n as f64 > count_mean {
                break;
            }
        }
    }
}

impl TiltingFamily for CompoundPoisson {
    fn psi(&self, theta: f64) -> Result<f64> {
        let s = &self.spec;
        Ok(s.lambda * s.horizon * (theta * s.eta + 0.5 * theta * theta * s.delta2).exp_m1()
            - theta * s.offset)
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        let s = &self.spec;
        Ok(s.lambda * s.horizon * self.jump_mgf(theta) * (s.eta + theta * s.delta2) - s.offset)
    }

    fn psi_double_prime(&self, theta: f64) -> Result<f64> {
        let s = &self.spec;
        let m = s.eta + theta * s.delta2;
        Ok(s.lambda * s.horizon * self.jump_mgf(theta) * (m * m + s.delta2))
    }

    fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::all_reals()
    }

    fn base_mean(&self) -> f64 {
        self.spec.lambda * self.spec.horizon * self.spec.eta - self.spec.offset
    }

    fn base_var(&self) -> f64 {
        self.spec.lambda
            * self.spec.horizon
            * (self.spec.eta * self.spec.eta + self.spec.delta2)
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.sample_tilted_parts(theta, rng)?.1)
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        // Conjugate parameters: eta - theta delta^2 and lambda e^{-theta eta + theta^2 delta^2/2} t.
        let count_mean = self.tilted_count_mean(-theta);
        let jump_mean = self.tilted_jump_mean(-theta);
        let sd = self.spec.delta2.sqrt();
        let r_thresh = a + self.spec.offset;
        let mut prob = 0.0;
        let mut partial_r = 0.0;
        self.sweep_counts(count_mean, |n, w| {
            if n == 0 {
                if 0.0 > r_thresh {
                    prob += w;
                }
                return;
            }
            let nf = n as f64;
            let m = nf * jump_mean;
            let s = nf.sqrt() * sd;
            let z = (r_thresh - m) / s;
            let sf = norm_sf(z);
            prob += w * sf;
            partial_r += w * (m * sf + s * norm_pdf(z));
        });
        Ok(TailMoments { prob, partial_mean: partial_r - self.spec.offset * prob })
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        // Density of the continuous part only; the atom at -offset (no jumps)
        // is handled inside the overridden variance functional.
        let count_mean = self.spec.lambda * self.spec.horizon;
        let sd = self.spec.delta2.sqrt();
        let r = x + self.spec.offset;
        let mut dens = 0.0;
        self.sweep_counts(count_mean, |n, w| {
            if n == 0 {
                return;
            }
            let nf = n as f64;
            let s = nf.sqrt() * sd;
            dens += w * norm_pdf((r - nf * self.spec.eta) / s) / s;
        });
        if dens > 0.0 {
            dens.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn support(&self) -> Support {
        Support::Continuous { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    fn variance_functional_g(&self, theta: f64, event: &TailEvent) -> Result<f64> {
        // Mixture summation with the exact per-count Gaussian Laplace tail:
        // E[e^{-theta W} 1{W > c}] = e^{-theta m + theta^2 s^2/2} SF((c - m + theta s^2)/s).
        let psi_t = self.psi(theta)?;
        let count_mean = self.spec.lambda * self.spec.horizon;
        let sd = self.spec.delta2.sqrt();
        let c = event.threshold + self.spec.offset;
        let mut g = 0.0;
        self.sweep_counts(count_mean, |n, w| {
            let contrib = if n == 0 {
                let in_event = match event.direction {
                    TailDirection::Upper => 0.0 > c,
                    TailDirection::Lower => 0.0 < c,
                };
                if in_event {
                    1.0
                } else {
                    0.0
                }
            } else {
                let nf = n as f64;
                let m = nf * self.spec.eta;
                let s2 = nf * sd * sd;
                let s = s2.sqrt();
                let factor = (-theta * m + 0.5 * theta * theta * s2).exp();
                let z = (c - m + theta * s2) / s;
                factor
                    * match event.direction {
                        TailDirection::Upper => norm_sf(z),
                        TailDirection::Lower => norm_cdf(z),
                    }
            };
            g += w * contrib;
        });
        Ok((psi_t + theta * self.spec.offset).exp() * g)
    }

    fn label(&self) -> String {
        let s = &self.spec;
        format!("cpp(l={},t={},eta={},d2={},rp={})", s.lambda, s.horizon, s.eta, s.delta2, s.offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec() -> CompoundPoissonSpec {
        CompoundPoissonSpec { lambda: 1.0, horizon: 1.0, eta: 0.0, delta2: 1.0, offset: 0.0 }
    }

    #[test]
    fn psi_closed_form_example() {
        // lambda t = 1, eta = 0, delta = 1, r_p = 0: psi(theta) = e^{theta^2/2} - 1
        let f = CompoundPoisson::new(unit_spec()).unwrap();
        assert!((f.psi(1.0).unwrap() - 0.5f64.exp() + 1.0).abs() < 1e-15);
        assert!((f.psi(1.0).unwrap() - 0.648_721).abs() < 1e-6);
        assert_eq!(f.psi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_prime_at_zero_is_mean() {
        let spec =
            CompoundPoissonSpec { lambda: 2.0, horizon: 1.5, eta: 0.3, delta2: 0.25, offset: 0.7 };
        let f = CompoundPoisson::new(spec).unwrap();
        assert!((f.psi_prime(0.0).unwrap() - (2.0 * 1.5 * 0.3 - 0.7)).abs() < 1e-12);
        let h = 1e-6;
        let fd = (f.psi(h).unwrap() - f.psi(-h).unwrap()) / (2.0 * h);
        assert!((fd - f.psi_prime(0.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn conjugate_tail_matches_simple_case() {
        // At theta = 0 with a below the atom, the tail is the full mass and the
        // partial mean is the base mean.
        let f = CompoundPoisson::new(unit_spec()).unwrap();
        let tm = f.conjugate_tail(0.0, -50.0).unwrap();
        assert!((tm.prob - 1.0).abs() < 1e-10);
        assert!(tm.partial_mean.abs() < 1e-10);
    }

    #[test]
    fn g_at_zero_matches_conjugate_tail_prob() {
        let f = CompoundPoisson::new(unit_spec()).unwrap();
        let ev = TailEvent::upper(1.7);
        let g0 = f.variance_functional_g(0.0, &ev).unwrap();
        let p = f.conjugate_tail(0.0, 1.7).unwrap().prob;
        assert!((g0 - p).abs() < 1e-12);
    }
}
