//! The exponential-embedding abstraction.
//!
//! A [`TiltingFamily`] carries the cumulant generating function psi of a base
//! law P together with the tilted sampler for Q_theta, where
//! dQ_theta/dP = exp(theta x - psi(theta)). The conjugate measure
//! Qbar_theta = Q_{-theta} drives the variance-optimal tilt equation
//! psi'(theta) = E_Qbar[X | X in A], and the variance functional
//! G(theta) = E[1_{X in A} exp(-theta X + psi(theta))] is evaluated by
//! deterministic quadrature or summation as the test oracle.

use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Open interval of admissible tilts; infinite endpoints are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDomain {
    pub lower: f64,
    pub upper: f64,
}

/// Relative margin kept away from domain poles when clipping; steepness makes
/// psi' explode at the boundary, so the solver never evaluates exactly there.
pub const DOMAIN_MARGIN: f64 = 1e-9;

impl ThetaDomain {
    pub fn new(lower: f64, upper: f64) -> Self {
        assert!(lower < 0.0 && upper > 0.0, "theta domain must contain 0");
        Self { lower, upper }
    }

    pub fn all_reals() -> Self {
        Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta.is_finite() && theta > self.lower && theta < self.upper
    }

    /// Largest usable tilt below the upper boundary.
    pub fn clip_upper(&self, fallback: f64) -> f64 {
        if self.upper.is_finite() {
            self.upper * (1.0 - DOMAIN_MARGIN)
        } else {
            fallback
        }
    }

    /// Smallest usable tilt above the lower boundary.
    pub fn clip_lower(&self, fallback: f64) -> f64 {
        if self.lower.is_finite() {
            self.lower * (1.0 - DOMAIN_MARGIN)
        } else {
            fallback
        }
    }

    pub fn check(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::ThetaOutOfDomain { theta, lower: self.lower, upper: self.upper })
        }
    }
}

/// Tail direction of the rare event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailDirection {
    Upper,
    Lower,
}

/// The event {X > a} (canonical) or {X < a}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEvent {
    pub threshold: f64,
    pub direction: TailDirection,
}

impl TailEvent {
    pub fn upper(threshold: f64) -> Self {
        Self { threshold, direction: TailDirection::Upper }
    }

    pub fn lower(threshold: f64) -> Self {
        Self { threshold, direction: TailDirection::Lower }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self.direction {
            TailDirection::Upper => x > self.threshold,
            TailDirection::Lower => x < self.threshold,
        }
    }
}

/// Tail probability and partial expectation E[X; X > a] of a tilted law.
#[derive(Debug, Clone, Copy)]
pub struct TailMoments {
    pub prob: f64,
    pub partial_mean: f64,
}

impl TailMoments {
    /// Conditional mean E[X | X > a]; errors when the event has no mass.
    pub fn conditional_mean(&self) -> Result<f64> {
        if self.prob <= 0.0 {
            Err(Error::Precondition(
                "conditional mean undefined: event has zero probability under the conjugate law"
                    .into(),
            ))
        } else {
            Ok(self.partial_mean / self.prob)
        }
    }
}

/// Support of the base law, used to bound oracle quadrature and summation.
#[derive(Debug, Clone, Copy)]
pub enum Support {
    /// Continuous density on (lo, hi).
    Continuous { lo: f64, hi: f64 },
    /// Integer support {lo, ..., hi} (i64::MAX / MIN for unbounded ends).
    Integers { lo: i64, hi: i64 },
}

/// A distribution embedded in the exponential family dQ_theta ~ e^{theta x} dP.
///
/// Implementations are immutable after construction and safe to share across
/// threads; sampling takes an explicit random stream so there is no hidden
/// mutable state.
pub trait TiltingFamily: Send + Sync {
    /// Cumulant generating function psi(theta) = log E[e^{theta X}].
    fn psi(&self, theta: f64) -> Result<f64>;

    /// psi'(theta), the mean of X under Q_theta.
    fn psi_prime(&self, theta: f64) -> Result<f64>;

    /// psi''(theta), the variance of X under Q_theta.
    fn psi_double_prime(&self, theta: f64) -> Result<f64>;

    fn theta_domain(&self) -> ThetaDomain;

    /// Base mean mu = psi'(0).
    fn base_mean(&self) -> f64;

    /// Base variance sigma^2 = psi''(0).
    fn base_var(&self) -> f64;

    /// Draw one sample from Q_theta.
    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64>;

    /// Tail probability and partial mean above `a` under the conjugate
    /// measure Qbar_theta = Q_{-theta}.
    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments>;

    /// E_{Qbar_theta}[X | X > a]; strictly decreasing in theta.
    fn conditional_mean_conjugate(&self, theta: f64, a: f64) -> Result<f64> {
        self.conjugate_tail(theta, a)?.conditional_mean()
    }

    /// Log density (continuous) or log pmf (discrete) of the base law.
    fn ln_base_density(&self, x: f64) -> f64;

    fn support(&self) -> Support;

    /// Deterministic oracle for G(theta) = E[1_{X in A} e^{-theta X + psi(theta)}].
    ///
    /// The default integrates the base density (adaptive quadrature, absolute
    /// tolerance 1e-12) or sums the base pmf; mixed laws override it.
    fn variance_functional_g(&self, theta: f64, event: &TailEvent) -> Result<f64> {
        self.theta_domain().check(theta)?;
        let psi_t = self.psi(theta)?;
        match self.support() {
            Support::Continuous { lo, hi } => {
                // When -theta leaves the domain (possible for bounded-region
                // lower tails) fall back to the raw support as the window.
                let (cm, csd) = self.conjugate_scale(theta).unwrap_or((f64::NAN, f64::NAN));
                g_continuous(|x| self.ln_base_density(x), psi_t, theta, event, lo, hi, cm, csd)
            }
            Support::Integers { lo, hi } => {
                g_discrete(|k| self.ln_base_density(k as f64), psi_t, theta, event, lo, hi)
            }
        }
    }

    /// Mean and sd of the conjugate law, used to bound the quadrature window.
    fn conjugate_scale(&self, theta: f64) -> Result<(f64, f64)> {
        let m = self.psi_prime(-theta)?;
        let v = self.psi_double_prime(-theta)?;
        Ok((m, v.max(0.0).sqrt()))
    }

    /// Short label for reports.
    fn label(&self) -> String;
}

pub(crate) const G_ABS_TOL: f64 = 1e-12;
const G_WINDOW_SDS: f64 = 60.0;

/// G(theta) for a continuous base law: integrate exp(psi - theta x) f(x)
/// over the event, windowed where the integrand (proportional to the
/// conjugate density) carries mass.
#[allow(clippy::too_many_arguments)]
pub(crate) fn g_continuous(
    ln_density: impl Fn(f64) -> f64,
    psi_theta: f64,
    theta: f64,
    event: &TailEvent,
    lo: f64,
    hi: f64,
    conj_mean: f64,
    conj_sd: f64,
) -> Result<f64> {
    let a = event.threshold;
    let integrand = |x: f64| {
        let e = psi_theta - theta * x + ln_density(x);
        if e < -745.0 {
            0.0
        } else {
            e.exp()
        }
    };
    let window_ok = conj_mean.is_finite() && conj_sd.is_finite();
    let (from, to) = match event.direction {
        TailDirection::Upper => {
            let from = a.max(lo);
            let to = if window_ok {
                hi.min(a.max(conj_mean) + G_WINDOW_SDS * conj_sd)
            } else if hi.is_finite() {
                hi
            } else {
                return Err(Error::Numerical(
                    "variance functional window unbounded: conjugate scale unavailable and support has no upper bound".into(),
                ));
            };
            (from, to)
        }
        TailDirection::Lower => {
            let from = if window_ok {
                lo.max(a.min(conj_mean) - G_WINDOW_SDS * conj_sd)
            } else if lo.is_finite() {
                lo
            } else {
                return Err(Error::Numerical(
                    "variance functional window unbounded: conjugate scale unavailable and support has no lower bound".into(),
                ));
            };
            (from, a.min(hi))
        }
    };
    if to <= from {
        return Ok(0.0);
    }
    adaptive_simpson(&integrand, from, to, G_ABS_TOL)
}

/// G(theta) for an integer-supported base law. Summation starts at the event
/// boundary and walks outward, stopping once terms stay below 1e-16 of the
/// accumulated sum (the summand is proportional to the conjugate pmf, so it
/// eventually decays monotonically).
pub(crate) fn g_discrete(
    ln_pmf: impl Fn(i64) -> f64,
    psi_theta: f64,
    theta: f64,
    event: &TailEvent,
    support_lo: i64,
    support_hi: i64,
) -> Result<f64> {
    let a = event.threshold;
    let term = |k: i64| {
        let e = psi_theta - theta * k as f64 + ln_pmf(k);
        if e < -745.0 {
            0.0
        } else {
            e.exp()
        }
    };
    // Smallest integer strictly above a / largest strictly below a.
    let first_above = if a.fract() == 0.0 { a as i64 + 1 } else { a.ceil() as i64 };
    let last_below = if a.fract() == 0.0 { a as i64 - 1 } else { a.floor() as i64 };

    let mut sum = 0.0;
    let mut small_streak = 0usize;
    let mut steps = 0u64;
    let (mut k, step, bound) = match event.direction {
        TailDirection::Upper => (first_above.max(support_lo), 1i64, support_hi),
        TailDirection::Lower => (last_below.min(support_hi), -1i64, support_lo),
    };
    while (step > 0 && k <= bound) || (step < 0 && k >= bound) {
        let t = term(k);
        sum += t;
        if t <= sum.abs() * 1e-16 {
            small_streak += 1;
            if small_streak > 8 {
                break;
            }
        } else {
            small_streak = 0;
        }
        steps += 1;
        if steps > 100_000_000 {
            return Err(Error::Numerical(
                "discrete variance-functional summation did not converge".into(),
            ));
        }
        k = match k.checked_add(step) {
            Some(next) => next,
            None => break,
        };
    }
    Ok(sum)
}

/// Radon-Nikodym weight dP/dQ_theta evaluated at x: e^{-theta x + psi(theta)}.
///
/// Averaging `likelihood_ratio * indicator` over Q_theta samples is unbiased
/// for P{X in A}.
pub fn likelihood_ratio(family: &dyn TiltingFamily, theta: f64, x: f64) -> Result<f64> {
    family.theta_domain().check(theta)?;
    Ok((family.psi(theta)? - theta * x).exp())
}

/// Sampler view of the conjugate measure Qbar_theta = Q_{-theta}.
pub struct ConjugateView<'a> {
    family: &'a dyn TiltingFamily,
    theta: f64,
}

impl<'a> ConjugateView<'a> {
    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<f64> {
        self.family.sample_tilted(-self.theta, rng)
    }

    pub fn tilt(&self) -> f64 {
        -self.theta
    }
}

/// View of the family tilted at -theta; sampling it is distributionally
/// identical to `sample_tilted(-theta)`.
pub fn conjugate_view(family: &dyn TiltingFamily, theta: f64) -> Result<ConjugateView<'_>> {
    family.theta_domain().check(-theta)?;
    Ok(ConjugateView { family, theta })
}

/// The variance functional G(theta) = E[1_{X in A} e^{-theta X + psi(theta)}],
/// evaluated deterministically against the base law (test oracle, not the
/// production estimator). The importance-sampling variance at theta is
/// (G(theta) - p^2) / n.
pub fn variance_functional_g(
    family: &dyn TiltingFamily,
    theta: f64,
    event: &TailEvent,
) -> Result<f64> {
    family.variance_functional_g(theta, event)
}

/// View of the family with X replaced by -X. Lower-tail events on the base
/// family become canonical upper-tail events on the negation.
pub struct NegatedFamily<'a> {
    pub inner: &'a dyn TiltingFamily,
}

impl<'a> NegatedFamily<'a> {
    pub fn new(inner: &'a dyn TiltingFamily) -> Self {
        Self { inner }
    }
}

impl TiltingFamily for NegatedFamily<'_> {
    fn psi(&self, theta: f64) -> Result<f64> {
        self.inner.psi(-theta)
    }

    fn psi_prime(&self, theta: f64) -> Result<f64> {
        Ok(-self.inner.psi_prime(-theta)?)
    }

    fn psi_double_prime(&self, theta: f64) -> Result<f64> {
        self.inner.psi_double_prime(-theta)
    }

    fn theta_domain(&self) -> ThetaDomain {
        let d = self.inner.theta_domain();
        ThetaDomain { lower: -d.upper, upper: -d.lower }
    }

    fn base_mean(&self) -> f64 {
        -self.inner.base_mean()
    }

    fn base_var(&self) -> f64 {
        self.inner.base_var()
    }

    fn sample_tilted(&self, theta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(-self.inner.sample_tilted(-theta, rng)?)
    }

    fn conjugate_tail(&self, theta: f64, a: f64) -> Result<TailMoments> {
        // {Y > a} = {X < -a} under the tilt of X by +theta.
        let t = theta;
        let c = -a;
        match self.inner.support() {
            Support::Integers { lo, hi } => {
                // Exact summation of the tilted pmf below c (strict).
                self.inner.theta_domain().check(t)?;
                let psi_t = self.inner.psi(t)?;
                let k_hi = if c.fract() == 0.0 { c as i64 - 1 } else { c.floor() as i64 };
                let mut prob = 0.0;
                let mut partial_x = 0.0;
                for k in lo..=k_hi.min(hi) {
                    let p = (t * k as f64 - psi_t + self.inner.ln_base_density(k as f64)).exp();
                    prob += p;
                    partial_x += k as f64 * p;
                }
                Ok(TailMoments { prob, partial_mean: -partial_x })
            }
            Support::Continuous { lo, hi } => {
                if self.inner.theta_domain().contains(t) {
                    // Complement of the inner upper tail, exact and normalized.
                    let inner_tail = self.inner.conjugate_tail(-t, c)?;
                    let mean = self.inner.psi_prime(t)?;
                    let prob = (1.0 - inner_tail.prob).max(0.0);
                    let partial = -(mean - inner_tail.partial_mean);
                    Ok(TailMoments { prob, partial_mean: partial })
                } else if lo.is_finite() {
                    // The conjugate measure does not exist globally (psi(t)
                    // diverges), but the tilted integrals restricted to the
                    // bounded region (lo, c) are finite; the returned pair is
                    // unnormalized, which cancels in conditional means.
                    let c = c.min(hi);
                    if c <= lo {
                        return Ok(TailMoments { prob: 0.0, partial_mean: 0.0 });
                    }
                    // Factor out exp(t c) so the integrand stays bounded.
                    let w = |x: f64| {
                        let e = t * (x - c) + self.inner.ln_base_density(x);
                        if e < -745.0 {
                            0.0
                        } else {
                            e.exp()
                        }
                    };
                    let prob = adaptive_simpson(&w, lo, c, 1e-13)?;
                    let partial_x = adaptive_simpson(&|x| x * w(x), lo, c, 1e-13)?;
                    Ok(TailMoments { prob, partial_mean: -partial_x })
                } else {
                    Err(Error::ThetaOutOfDomain {
                        theta: t,
                        lower: self.inner.theta_domain().lower,
                        upper: self.inner.theta_domain().upper,
                    })
                }
            }
        }
    }

    fn ln_base_density(&self, x: f64) -> f64 {
        self.inner.ln_base_density(-x)
    }

    fn support(&self) -> Support {
        match self.inner.support() {
            Support::Continuous { lo, hi } => Support::Continuous { lo: -hi, hi: -lo },
            Support::Integers { lo, hi } => Support::Integers {
                lo: hi.checked_neg().unwrap_or(i64::MIN),
                hi: lo.checked_neg().unwrap_or(i64::MAX),
            },
        }
    }

    fn variance_functional_g(&self, theta: f64, event: &TailEvent) -> Result<f64> {
        // G is invariant under joint negation of X, theta and the event.
        let flipped = match event.direction {
            TailDirection::Upper => TailEvent::lower(-event.threshold),
            TailDirection::Lower => TailEvent::upper(-event.threshold),
        };
        self.inner.variance_functional_g(-theta, &flipped)
    }

    fn label(&self) -> String {
        format!("neg({})", self.inner.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilySpec};

    #[test]
    fn likelihood_ratio_is_one_at_zero_tilt() {
        let fam = make_family(&FamilySpec::Normal { sigma: 1.0 }).unwrap();
        for x in [-3.0, 0.0, 1.7] {
            assert_eq!(likelihood_ratio(fam.as_ref(), 0.0, x).unwrap(), 1.0);
        }
    }

    #[test]
    fn likelihood_ratio_normal_example() {
        // N(0,1), theta=1, x=1 -> e^{-theta x + theta^2/2} = e^{-0.5}
        let fam = make_family(&FamilySpec::Normal { sigma: 1.0 }).unwrap();
        let lr = likelihood_ratio(fam.as_ref(), 1.0, 1.0).unwrap();
        assert!((lr - (-0.5f64).exp()).abs() < 1e-15);
        assert!((lr - 0.606_531).abs() < 1e-6);
    }

    #[test]
    fn likelihood_ratio_exponential_example() {
        // E(1), theta=0.5, x=2 -> e^{-1} * 2 (psi(0.5) = -log(0.5))
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        let lr = likelihood_ratio(fam.as_ref(), 0.5, 2.0).unwrap();
        assert!((lr - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((lr - 0.735_759).abs() < 1e-6);
    }

    #[test]
    fn likelihood_ratio_rejects_out_of_domain() {
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        assert!(likelihood_ratio(fam.as_ref(), 1.5, 1.0).is_err());
    }

    #[test]
    fn g_at_zero_is_event_probability() {
        let fam = make_family(&FamilySpec::Normal { sigma: 1.0 }).unwrap();
        let ev = TailEvent::upper(2.326);
        let g0 = variance_functional_g(fam.as_ref(), 0.0, &ev).unwrap();
        let p = crate::numeric::norm_sf(2.326);
        assert!((g0 - p).abs() < 1e-10, "g0={g0} p={p}");
    }

    #[test]
    fn conjugate_view_requires_negated_tilt_in_domain() {
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        // -theta = 1.2 is outside theta < 1
        assert!(conjugate_view(fam.as_ref(), -1.2).is_err());
        assert!(conjugate_view(fam.as_ref(), 0.4).is_ok());
    }
}
