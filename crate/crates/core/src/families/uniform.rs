//! Uniform(0,1); the tilted density is proportional to e^{theta x} on [0,1]
//! and is sampled exactly by inverse CDF: x = log(1 + u(e^theta - 1))/theta.

use crate::error::Result;
use crate::tilt::{Support, TailMoments, ThetaDomain, TiltingFamily};
use rand::{Rng, RngCore};

#[derive(Debug, Clone, Default)]
pub struct Uniform;

impl Uniform {
    pub fn new() -> Self {
        Self
    }

    /// Density of Q_theta at x in [0,1].
    pub fn tilted_density(&self, theta: f64, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        if theta.abs() < 1e-12 {
            return 1.0;
        }
        theta * (theta * x).exp() / theta.exp_m1()
    }
}

/// Tail probability of the theta-tilted uniform above a in (0,1).
fn tilted_tail(t: f64, a: f64) -> f64 {
    if t == 0.0 {
        1.0 - a
    } else if t > 0.0 {
        // (1 - e^{-t(1-a)}) / (1 - e^{-t}), stable for arbitrarily large t
        (-t * (1.0 - a)).exp_m1() / (-t).exp_m1()
    } else {
        (t * a).exp() * (t * (1.0 - a)).exp_m1() / t.exp_m1()
    }
}

/// Partial expectation E[X; X > a] of the theta-tilted uniform.
fn tilted_partial(t: f64, a: f64) -> f64 {
    if t.abs() < 1e-3 {
        // series ratio of [sum t^k (1-a^k)(k-1)/k!] / [t^2(1 + t/2 + t^2/6 + t^3/24)]
        let a2 = a * a;
        let num = 0.5 * (1.0 - a2) + t * (1.0 - a2 * a) / 3.0 + t * t * (1.0 - a2 * a2) / 8.0;
        let den = 1.0 + t * (0.5 + t * (1.0 / 6.0 + t / 24.0));
        num / den
    } else if t > 0.0 {
        ((t - 1.0) + (-t * (1.0 - a)).exp() * (1.0 - a * t)) / (t * -(-t).exp_m1())
    } else {
        (t * a).exp() * ((t * (1.0 - a)).exp() * (t - 1.0) + (1.0 - a * t)) / (t * t.exp_m1())
    }
}

impl TiltingFamily for Uniform {
    fn psi(&self, theta: f64) -> Result<f64> {
        if theta.abs() < 1e-300 {
            Ok(0.0)
        } else if theta > 700.0 {
            Ok(theta - theta.ln())
        } else {
            Ok((theta.exp_m1() / theta).ln())
        }
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        if theta.abs() < 0.01 {
            Ok(0.5 + theta / 12.0 - theta.powi(3) / 720.0)
        } else {
            Ok(1.0 / -(-theta).exp_m1() - 1.0 / theta)
        }
    }

    fn psi_double_prime(&self, theta: f64) -> Result<f64> {
        let t = theta.abs();
        if t < 0.02 {
            let t2 = theta * theta;
            Ok(1.0 / 12.0 - t2 / 240.0 + t2 * t2 / 6048.0)
        } else {
            let s = (0.5 * t).sinh();
            if s.is_infinite() {
                Ok(1.0 / (t * t))
            } else {
                Ok(1.0 / (t * t) - 1.0 / (4.0 * s * s))
            }
        }
    }

    fn theta_domain(&self) -> ThetaDomain {
        ThetaDomain::all_reals()
    }

    fn base_mean(&self) -> f64 {
        0.5
    }

    fn base_var(&self) -> f64 {
        1.0 / 12.0
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let u: f64 = rng.random();
        if theta.abs() < 1e-12 {
            Ok(u)
        } else if theta > 700.0 {
            Ok((1.0 + u.max(f64::MIN_POSITIVE).ln() / theta).max(0.0))
        } else {
            Ok((u * theta.exp_m1()).ln_1p() / theta)
        }
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        let t = -theta;
        if a >= 1.0 {
            return Ok(TailMoments { prob: 0.0, partial_mean: 0.0 });
        }
        if a <= 0.0 {
            return Ok(TailMoments { prob: 1.0, partial_mean: self.psi_prime(t)? });
        }
        Ok(TailMoments { prob: tilted_tail(t, a), partial_mean: tilted_partial(t, a) })
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        if (0.0..=1.0).contains(&x) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn support(&self) -> Support {
        Support::Continuous { lo: 0.0, hi: 1.0 }
    }

    fn label(&self) -> String {
        "uniform(0,1)".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;

    #[test]
    fn psi_prime_matches_table_formula() {
        // e^theta/(e^theta - 1) - 1/theta
        let f = Uniform::new();
        for t in [-3.0f64, -0.5, 0.4, 2.0, 10.0] {
            let direct = t.exp() / t.exp_m1() - 1.0 / t;
            assert!((f.psi_prime(t).unwrap() - direct).abs() < 1e-12, "t={t}");
        }
        // series and direct formula agree near the switch point
        for t in [0.006f64, 0.009, 0.011, -0.008] {
            let direct = 1.0 / -(-t).exp_m1() - 1.0 / t;
            assert!((f.psi_prime(t).unwrap() - direct).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn tilted_tail_matches_quadrature() {
        let f = Uniform::new();
        for theta in [-2.0, -0.3, 0.0, 0.7, 4.0] {
            let t = -theta;
            for a in [0.2, 0.5, 0.9] {
                let dens = |x: f64| f.tilted_density(t, x);
                let want_p = adaptive_simpson(&dens, a, 1.0, 1e-13).unwrap();
                let want_m = adaptive_simpson(&|x| x * dens(x), a, 1.0, 1e-13).unwrap();
                let tm = f.conjugate_tail(theta, a).unwrap();
                assert!((tm.prob - want_p).abs() < 1e-10, "theta={theta} a={a}");
                assert!((tm.partial_mean - want_m).abs() < 1e-10, "theta={theta} a={a}");
            }
        }
    }

    #[test]
    fn partial_series_matches_closed_form_at_switch() {
        // evaluate both branches at the same t just outside the series range
        for a in [0.1, 0.6] {
            for t in [0.0011f64, -0.0011, 0.002, -0.002] {
                let series = {
                    let a2 = a * a;
                    let num =
                        0.5 * (1.0 - a2) + t * (1.0 - a2 * a) / 3.0 + t * t * (1.0 - a2 * a2) / 8.0;
                    let den = 1.0 + t * (0.5 + t * (1.0 / 6.0 + t / 24.0));
                    num / den
                };
                let closed = tilted_partial(t, a);
                assert!((series - closed).abs() < 1e-10, "t={t} a={a}: {series} vs {closed}");
            }
        }
    }

    #[test]
    fn psi_finite_difference() {
        let f = Uniform::new();
        for t in [-5.0f64, -0.004, 0.009, 1.5, 40.0] {
            let h = 1e-5 * t.abs().max(1.0);
            let fd = (f.psi(t + h).unwrap() - f.psi(t - h).unwrap()) / (2.0 * h);
            assert!(
                (fd - f.psi_prime(t).unwrap()).abs() < 1e-6 * f.psi_prime(t).unwrap().abs().max(1.0),
                "t={t}"
            );
        }
    }
}
