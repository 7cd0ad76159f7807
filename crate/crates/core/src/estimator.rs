//! Monte Carlo execution: naive and importance-sampling tail estimators,
//! standard errors, and relative efficiency against the analytic benchmark
//! RE* = p(1-p)/(G(theta*) - p^2).

use crate::error::{Error, Result};
use crate::rng::{map_blocks, BLOCK_SIZE};
use crate::solver::{large_deviation_tilt, solve_optimal_tilt, SolverConfig};
use crate::tilt::{NegatedFamily, TailDirection, TailEvent, TiltingFamily};
use serde::{Deserialize, Serialize};

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Naive,
    ImportanceSampling { theta: f64 },
    /// Stratified two-sided estimate with independent per-stratum tilts.
    TwoSided { theta_upper: f64, theta_lower: f64 },
}

/// A reproducible estimate: bit-identical given (method, n, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub p_hat: f64,
    pub std_err: f64,
    /// Per-sample variance; std_err = sqrt(variance / n).
    pub variance: f64,
    pub n: u64,
    pub method: Method,
    pub seed: u64,
}

/// Empirical and analytic relative efficiency of IS against naive sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyReport {
    /// var_naive / var_is from the two reports.
    pub re_empirical: f64,
    /// p(1-p)/(G(theta*) - p^2) from the quadrature oracle.
    pub re_star: f64,
    /// Reference probability G(0) = P{X in A} from the oracle.
    pub p_reference: f64,
}

/// Sum of weights, squared weights and hit count over one deterministic run.
struct Accum {
    sum_w: f64,
    sum_w2: f64,
    hits: u64,
}

fn run_weighted(
    family: &dyn TiltingFamily,
    theta: f64,
    event: &TailEvent,
    n: u64,
    seed: u64,
    stream_base: u64,
) -> Result<Accum> {
    let psi = family.psi(theta)?;
    let blocks = map_blocks(n, seed, stream_base, |rng, count| -> Result<Accum> {
        let mut acc = Accum { sum_w: 0.0, sum_w2: 0.0, hits: 0 };
        for _ in 0..count {
            let x = family.sample_tilted(theta, rng)?;
            if event.contains(x) {
                let w = (psi - theta * x).exp();
                acc.sum_w += w;
                acc.sum_w2 += w * w;
                acc.hits += 1;
            }
        }
        Ok(acc)
    });
    let mut total = Accum { sum_w: 0.0, sum_w2: 0.0, hits: 0 };
    for b in blocks {
        let b = b?;
        total.sum_w += b.sum_w;
        total.sum_w2 += b.sum_w2;
        total.hits += b.hits;
    }
    Ok(total)
}

/// Crude Monte Carlo estimate of P{X in A}; variance is p_hat (1 - p_hat).
pub fn estimate_naive(
    family: &dyn TiltingFamily,
    event: &TailEvent,
    n: u64,
    seed: u64,
) -> Result<EstimateReport> {
    if n < 1 {
        return Err(Error::InvalidParameter("estimate_naive requires n >= 1".into()));
    }
    let acc = run_weighted(family, 0.0, event, n, seed, 0)?;
    let p_hat = acc.sum_w / n as f64;
    let variance = p_hat * (1.0 - p_hat);
    Ok(EstimateReport {
        p_hat,
        std_err: (variance / n as f64).sqrt(),
        variance,
        n,
        method: Method::Naive,
        seed,
    })
}

/// Importance-sampling estimate at tilt theta: the mean of the weighted
/// indicators 1_{X in A} e^{-theta X + psi(theta)} over Q_theta samples.
pub fn estimate_is(
    family: &dyn TiltingFamily,
    theta: f64,
    event: &TailEvent,
    n: u64,
    seed: u64,
) -> Result<EstimateReport> {
    if n < 1 {
        return Err(Error::InvalidParameter("estimate_is requires n >= 1".into()));
    }
    family.theta_domain().check(theta)?;
    let acc = run_weighted(family, theta, event, n, seed, 0)?;
    let nf = n as f64;
    let p_hat = acc.sum_w / nf;
    let variance = if n > 1 { (acc.sum_w2 - nf * p_hat * p_hat).max(0.0) / (nf - 1.0) } else { 0.0 };
    Ok(EstimateReport {
        p_hat,
        std_err: (variance / nf).sqrt(),
        variance,
        n,
        method: Method::ImportanceSampling { theta },
        seed,
    })
}

/// Empirical variance ratio plus the analytic benchmark from the G oracle.
pub fn relative_efficiency(
    family: &dyn TiltingFamily,
    event: &TailEvent,
    naive: &EstimateReport,
    is: &EstimateReport,
) -> Result<EfficiencyReport> {
    if naive.variance <= 0.0 || is.variance <= 0.0 {
        return Err(Error::DegenerateVariance(format!(
            "relative efficiency needs nonzero variances (naive {:.3e}, is {:.3e}); no hits?",
            naive.variance, is.variance
        )));
    }
    let theta = match is.method {
        Method::ImportanceSampling { theta } => theta,
        _ => {
            return Err(Error::InvalidParameter(
                "relative_efficiency expects an importance-sampling report".into(),
            ))
        }
    };
    let p = family.variance_functional_g(0.0, event)?;
    let g = family.variance_functional_g(theta, event)?;
    let denom = g - p * p;
    if denom <= 0.0 {
        return Err(Error::DegenerateVariance(format!(
            "G(theta) - p^2 = {denom:.3e} is not positive"
        )));
    }
    Ok(EfficiencyReport {
        re_empirical: naive.variance / is.variance,
        re_star: p * (1.0 - p) / denom,
        p_reference: p,
    })
}

/// Two-sided tail estimate P{|X| > a} = P{X > a} + P{X < -a}, stratified with
/// independently solved per-stratum optimal tilts. The sample budget is
/// split proportionally to the large-deviation weight e^{-theta_LD a} of each
/// stratum; strata with zero mass are skipped.
pub fn estimate_two_sided(
    family: &dyn TiltingFamily,
    a: f64,
    n: u64,
    seed: u64,
) -> Result<EstimateReport> {
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("two-sided threshold must be > 0, got {a}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("estimate_two_sided requires n >= 2".into()));
    }
    let cfg = SolverConfig::default();
    let neg = NegatedFamily::new(family);

    // Per-stratum setup on the canonical upper-tail form.
    let upper_mass = family.conjugate_tail(0.0, a)?.prob;
    let lower_mass = neg.conjugate_tail(0.0, a)?.prob;
    let mut theta_upper = 0.0;
    let mut theta_lower = 0.0;
    let mut weights = [0.0f64; 2];
    if upper_mass > 0.0 {
        theta_upper = solve_optimal_tilt(family, &TailEvent::upper(a), &cfg)?.theta_star;
        weights[0] = (-large_deviation_tilt(family, a)? * a).exp();
    }
    if lower_mass > 0.0 {
        theta_lower = solve_optimal_tilt(&neg, &TailEvent::upper(a), &cfg)?.theta_star;
        weights[1] = (-large_deviation_tilt(&neg, a)? * a).exp();
    }
    let wsum = weights[0] + weights[1];
    if wsum <= 0.0 {
        return Ok(EstimateReport {
            p_hat: 0.0,
            std_err: 0.0,
            variance: 0.0,
            n,
            method: Method::TwoSided { theta_upper: 0.0, theta_lower: 0.0 },
            seed,
        });
    }
    let mut n_upper = ((n as f64) * weights[0] / wsum).round() as u64;
    if weights[0] > 0.0 {
        n_upper = n_upper.clamp(1, n - u64::from(weights[1] > 0.0));
    }
    let n_lower = if weights[1] > 0.0 { n - n_upper } else { 0 };

    // Disjoint stream ranges per stratum keep the partition deterministic.
    let stratum_base = 1u64 << 40;
    let mut p_hat = 0.0;
    let mut var_of_phat = 0.0;
    let event = TailEvent::upper(a);
    if n_upper > 0 {
        let acc = run_weighted(family, theta_upper, &event, n_upper, seed, 0)?;
        let nf = n_upper as f64;
        let m = acc.sum_w / nf;
        let v = if n_upper > 1 { (acc.sum_w2 - nf * m * m).max(0.0) / (nf - 1.0) } else { 0.0 };
        p_hat += m;
        var_of_phat += v / nf;
    }
    if n_lower > 0 {
        let acc = run_weighted(&neg, theta_lower, &event, n_lower, seed, stratum_base)?;
        let nf = n_lower as f64;
        let m = acc.sum_w / nf;
        let v = if n_lower > 1 { (acc.sum_w2 - nf * m * m).max(0.0) / (nf - 1.0) } else { 0.0 };
        p_hat += m;
        var_of_phat += v / nf;
    }
    // Report per-sample variance so std_err = sqrt(variance/n) holds.
    let variance = var_of_phat * n as f64;
    Ok(EstimateReport {
        p_hat,
        std_err: var_of_phat.sqrt(),
        variance,
        n,
        // theta_lower is the tilt on the negated variable; the tilt acting on
        // X itself is its negation.
        method: Method::TwoSided { theta_upper, theta_lower: -theta_lower },
        seed,
    })
}

/// Lower-tail events reuse the importance machinery through negation.
pub fn estimate_is_event(
    family: &dyn TiltingFamily,
    theta: f64,
    event: &TailEvent,
    n: u64,
    seed: u64,
) -> Result<EstimateReport> {
    match event.direction {
        TailDirection::Upper => estimate_is(family, theta, event, n, seed),
        TailDirection::Lower => {
            let neg = NegatedFamily::new(family);
            let mut rep =
                estimate_is(&neg, -theta, &TailEvent::upper(-event.threshold), n, seed)?;
            rep.method = Method::ImportanceSampling { theta };
            Ok(rep)
        }
    }
}

/// Block size used by the deterministic sample partition (re-exported for
/// documentation in reports).
pub const ESTIMATOR_BLOCK: u64 = BLOCK_SIZE;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_family, FamilySpec};
    use crate::numeric::norm_sf;

    #[test]
    fn naive_certain_event() {
        let fam = make_family(&FamilySpec::Normal { sigma: 1.0 }).unwrap();
        let rep =
            estimate_naive(fam.as_ref(), &TailEvent::upper(f64::NEG_INFINITY), 1000, 1).unwrap();
        assert_eq!(rep.p_hat, 1.0);
        assert_eq!(rep.variance, 0.0);
    }

    #[test]
    fn naive_median_event() {
        let fam = make_family(&FamilySpec::Normal { sigma: 1.0 }).unwrap();
        let n = 100_000;
        let rep = estimate_naive(fam.as_ref(), &TailEvent::upper(0.0), n, 42).unwrap();
        let se = (0.25 / n as f64).sqrt();
        assert!((rep.p_hat - 0.5).abs() < 4.0 * se, "p_hat={}", rep.p_hat);
    }

    #[test]
    fn naive_exponential_tail() {
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        let a = 100.0f64.ln();
        let rep = estimate_naive(fam.as_ref(), &TailEvent::upper(a), 100_000, 7).unwrap();
        assert!((rep.p_hat - 0.01).abs() < 4.0 * rep.std_err.max(1e-4), "p_hat={}", rep.p_hat);
    }

    #[test]
    fn is_at_zero_tilt_matches_naive_p_hat() {
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        let ev = TailEvent::upper(2.0);
        let naive = estimate_naive(fam.as_ref(), &ev, 50_000, 9).unwrap();
        let is = estimate_is(fam.as_ref(), 0.0, &ev, 50_000, 9).unwrap();
        assert_eq!(naive.p_hat, is.p_hat);
    }

    #[test]
    fn seed_determinism_across_runs() {
        let fam = make_family(&FamilySpec::NoncentralChiSquare { kappa: 2.0, lambda: 1.0 }).unwrap();
        let ev = TailEvent::upper(12.85);
        let a = estimate_is(fam.as_ref(), 0.33, &ev, 30_000, 123).unwrap();
        let b = estimate_is(fam.as_ref(), 0.33, &ev, 30_000, 123).unwrap();
        assert_eq!(a.p_hat.to_bits(), b.p_hat.to_bits());
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }

    #[test]
    fn is_rejects_out_of_domain_theta() {
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        assert!(estimate_is(fam.as_ref(), 1.01, &TailEvent::upper(2.0), 10, 0).is_err());
    }

    #[test]
    fn two_sided_normal_symmetric() {
        let fam = make_family(&FamilySpec::Normal { sigma: 1.0 }).unwrap();
        let a = 2.576;
        let rep = estimate_two_sided(fam.as_ref(), a, 200_000, 11).unwrap();
        let want = 2.0 * norm_sf(a);
        assert!((rep.p_hat - want).abs() < 4.0 * rep.std_err, "p={} want={want}", rep.p_hat);
        match rep.method {
            Method::TwoSided { theta_upper, theta_lower } => {
                assert!((theta_upper + theta_lower).abs() < 1e-8, "tilts should mirror");
            }
            _ => panic!("wrong method tag"),
        }
    }

    #[test]
    fn two_sided_exponential_lower_stratum_empty() {
        // E(1) has no mass below -a; the lower stratum is skipped and the
        // total matches the upper tail alone.
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        let rep = estimate_two_sided(fam.as_ref(), 3.0, 100_000, 5).unwrap();
        let want = (-3.0f64).exp();
        assert!((rep.p_hat - want).abs() < 4.0 * rep.std_err, "p={}", rep.p_hat);
    }

    #[test]
    fn lower_tail_via_negation_matches_cdf() {
        // E(1), event {X < c}: negated upper tail, exact CDF 1 - e^{-c}.
        let fam = make_family(&FamilySpec::Exponential).unwrap();
        let c = 0.2;
        let ev = TailEvent::lower(c);
        let res = crate::solver::solve_optimal_tilt(fam.as_ref(), &ev, &SolverConfig::default())
            .unwrap();
        let rep = estimate_is_event(fam.as_ref(), res.theta_star, &ev, 100_000, 13).unwrap();
        let want = 1.0 - (-c as f64).exp();
        assert!((rep.p_hat - want).abs() < 4.0 * rep.std_err, "p={} want={want}", rep.p_hat);
    }
}
