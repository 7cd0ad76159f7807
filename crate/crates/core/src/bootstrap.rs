//! Importance resampling for bootstrap tail probabilities and confidence
//! regions of regression coefficients.
//!
//! The bootstrap statistic T* = sum_i eps*_i^2 / (p sigma_hat^2) is chi^2_n/p
//! when the residual scale is held at the fitted value, so its moment
//! generating function is closed form and the optimal tilt solves the same
//! conjugate-mean equation as every other family here. Resampling can run in
//! the normal family (tilted residuals) or the chi-square family (tilted
//! squared pulls); both weight replicates by e^{-theta (T* - a) + psi_a(theta)}.

use crate::error::{Error, Result};
use crate::numeric::{gamma_partial_upper, gamma_sf};
use crate::rng::{map_blocks, stream_rng};
use crate::solver::{solve_fixed_point, SolverConfig, SolverResult, SolverStatus};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::ln_gamma;

pub mod longley;

/// Divisor used for the residual variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceDivisor {
    /// n - 1 (matches the reference fit on the Longley data).
    NMinusOne,
    /// n - p (unbiased under the model).
    NMinusP,
    N,
}

impl VarianceDivisor {
    fn value(self, n: usize, p: usize) -> f64 {
        match self {
            VarianceDivisor::NMinusOne => (n - 1) as f64,
            VarianceDivisor::NMinusP => (n - p) as f64,
            VarianceDivisor::N => n as f64,
        }
    }
}

/// A fitted least-squares problem.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta_hat: DVector<f64>,
    pub sigma2_hat: f64,
    pub residuals: DVector<f64>,
    /// sqrt(det(X'X)), from the QR factor.
    pub sqrt_det_xtx: f64,
    pub divisor: VarianceDivisor,
}

impl RegressionProblem {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Least squares by QR (never the normal equations; the classic test data is
/// deliberately ill conditioned).
pub fn ols_fit(x: DMatrix<f64>, y: DVector<f64>) -> Result<RegressionProblem> {
    ols_fit_with_divisor(x, y, VarianceDivisor::NMinusOne)
}

pub fn ols_fit_with_divisor(
    x: DMatrix<f64>,
    y: DVector<f64>,
    divisor: VarianceDivisor,
) -> Result<RegressionProblem> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::InvalidParameter("response length != design rows".into()));
    }
    if n <= p {
        return Err(Error::InvalidParameter("need more observations than parameters".into()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    // Column scaling makes the rank check meaningful despite wildly scaled
    // regressors.
    for j in 0..p {
        let col_norm = x.column(j).norm();
        if r[(j, j)].abs() <= 1e-12 * col_norm.max(1.0) {
            return Err(Error::RankDeficient { rank: j, cols: p });
        }
    }
    let qty = qr.q().transpose() * &y;
    let beta_hat = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or_else(|| Error::RankDeficient { rank: p - 1, cols: p })?;
    let residuals = &y - &x * &beta_hat;
    let rss = residuals.norm_squared();
    let sigma2_hat = rss / divisor.value(n, p);
    let sqrt_det_xtx = (0..p).map(|j| r[(j, j)].abs()).product();
    Ok(RegressionProblem { x, y, beta_hat, sigma2_hat, residuals, sqrt_det_xtx, divisor })
}

/// Threshold, sample size, effective parameter count and tilt of the
/// bootstrap statistic T* (chi^2_n / p under the fixed-scale treatment).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapStatistic {
    pub a: f64,
    pub n: usize,
    pub p: usize,
    pub theta: f64,
}

impl BootstrapStatistic {
    fn check_theta(n_over: f64, p: usize, theta: f64) -> Result<()> {
        let _ = n_over;
        let pf = p as f64;
        if 1.0 - 2.0 * theta / pf <= 0.0 {
            return Err(Error::Numerical(format!(
                "bootstrap tilt theta = {theta} violates 1 - 2 theta/p > 0 (p = {p})"
            )));
        }
        Ok(())
    }
}

/// psi_a(theta) = -theta a - (n/2) log(1 - 2 theta/p) and its derivative
/// psi_a'(theta) = -a + (n/p)/(1 - 2 theta/p).
///
/// (The derivative is the correct differentiation of psi_a; a printed form
/// in the source material omits the chain rule on the log term.)
pub fn bootstrap_psi(a: f64, n: usize, p: usize, theta: f64) -> Result<(f64, f64)> {
    BootstrapStatistic::check_theta(0.0, p, theta)?;
    let (nf, pf) = (n as f64, p as f64);
    let d = 1.0 - 2.0 * theta / pf;
    Ok((-theta * a - 0.5 * nf * d.ln(), -a + nf / pf / d))
}

/// Conditional mean of T* - a above a under the conjugate tilt:
/// T* | Qbar_theta ~ Gamma(n/2, 2/(p (1 + 2 theta/p))).
fn conjugate_excess_mean(a: f64, n: usize, p: usize, theta: f64) -> Result<f64> {
    let pf = p as f64;
    if 1.0 + 2.0 * theta / pf <= 0.0 {
        return Err(Error::Numerical(format!(
            "conjugate bootstrap tilt theta = {theta} violates 1 + 2 theta/p > 0"
        )));
    }
    let shape = 0.5 * n as f64;
    let scale = 2.0 / (pf + 2.0 * theta);
    let prob = gamma_sf(shape, scale, a);
    if prob <= 0.0 {
        return Err(Error::Precondition(format!("no conjugate mass above a = {a}")));
    }
    Ok(gamma_partial_upper(shape, scale, a) / prob - a)
}

/// Optimal bootstrap tilt: root of psi_a'(theta) = E_Qbar[T* - a | T* > a].
pub fn solve_bootstrap_tilt(a: f64, n: usize, p: usize, cfg: &SolverConfig) -> Result<SolverResult> {
    let (nf, pf) = (n as f64, p as f64);
    if !(a > nf / pf) {
        return Err(Error::Precondition(format!(
            "bootstrap tilt requires a > n/p = {:.4}, got {a} (the event must be rarer than the mean)",
            nf / pf
        )));
    }
    let g = |t: f64| Ok(bootstrap_psi(a, n, p, t)?.1);
    let h = |t: f64| conjugate_excess_mean(a, n, p, t);
    let cap = 0.5 * pf * (1.0 - 1e-9);
    // Dominating point: psi_a' = 0.
    let theta_ld = 0.5 * pf * (1.0 - nf / (pf * a));
    let eff = SolverConfig { initial_theta: cfg.initial_theta.or(Some(theta_ld)), ..*cfg };
    let res = solve_fixed_point(g, h, (0.0, cap), &eff)?;
    if res.status == SolverStatus::DomainFailure {
        return Err(Error::Numerical("bootstrap tilt equation lost its bracket".into()));
    }
    Ok(res)
}

/// Resampling family for the tilted bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleFamily {
    /// Residuals eps*_i ~ N(0, sigma_hat^2/(1 - 2 theta/p)).
    NormalFamily,
    /// Squared pulls X_i = eps*_i^2/sigma_hat^2 drawn as tilted chi^2_1.
    ChiSquareFamily,
}

/// One batch of B tilted bootstrap replicates: the weighted tail estimate of
/// alpha = P{T* > a} and its per-replicate variance.
pub fn resample_tilted(
    problem: &RegressionProblem,
    stat: &BootstrapStatistic,
    family: ResampleFamily,
    b: u64,
    seed: u64,
) -> Result<crate::estimator::EstimateReport> {
    if b < 1 {
        return Err(Error::InvalidParameter("resample_tilted requires B >= 1".into()));
    }
    let (n, p) = (problem.n(), stat.p);
    let (psi_a, _) = bootstrap_psi(stat.a, n, p, stat.theta)?;
    let pf = p as f64;
    let d = 1.0 - 2.0 * stat.theta / pf;
    let results = map_blocks(b, seed, 0, |rng, count| {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..count {
            let t_star = match family {
                ResampleFamily::NormalFamily => {
                    // eps* ~ N(0, sigma^2/d); T* = sum eps*^2/(p sigma^2)
                    let mut acc = 0.0;
                    for _ in 0..n {
                        let z: f64 = StandardNormal.sample(rng);
                        acc += z * z;
                    }
                    acc / (pf * d)
                }
                ResampleFamily::ChiSquareFamily => {
                    let g = rand_distr::Gamma::new(0.5, 2.0 / d).expect("valid gamma");
                    let mut acc = 0.0;
                    for _ in 0..n {
                        acc += g.sample(rng);
                    }
                    acc / pf
                }
            };
            if t_star > stat.a {
                let w = (-stat.theta * (t_star - stat.a) + psi_a).exp();
                sum += w;
                sum2 += w * w;
            }
        }
        (sum, sum2)
    });
    let (mut sum, mut sum2) = (0.0, 0.0);
    for (s, s2) in results {
        sum += s;
        sum2 += s2;
    }
    let bf = b as f64;
    let alpha_hat = sum / bf;
    let variance =
        if b > 1 { (sum2 - bf * alpha_hat * alpha_hat).max(0.0) / (bf - 1.0) } else { 0.0 };
    Ok(crate::estimator::EstimateReport {
        p_hat: alpha_hat,
        std_err: (variance / bf).sqrt(),
        variance,
        n: b,
        method: crate::estimator::Method::ImportanceSampling { theta: stat.theta },
        seed,
    })
}

/// Replicated resampling: `batches` independent batches of B replicates.
/// Returns the mean of the batch estimates and their sample variance, the
/// batch-level analogue of the replication protocol used for the tables.
pub struct ResampleExperiment {
    pub alpha_hat: f64,
    /// Variance of the B-replicate estimator across batches.
    pub batch_variance: f64,
    pub batches: u64,
    pub b: u64,
}

pub fn resample_batches(
    problem: &RegressionProblem,
    stat: &BootstrapStatistic,
    family: ResampleFamily,
    b: u64,
    batches: u64,
    seed: u64,
) -> Result<ResampleExperiment> {
    if batches < 2 {
        return Err(Error::InvalidParameter("resample_batches needs >= 2 batches".into()));
    }
    let means: Result<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|j| {
            resample_tilted(problem, stat, family, b, seed.wrapping_add(j.wrapping_mul(0x9e37)))
                .map(|r| r.p_hat)
        })
        .collect();
    let means = means?;
    let mf = batches as f64;
    let mean = means.iter().sum::<f64>() / mf;
    let var = means.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (mf - 1.0);
    Ok(ResampleExperiment { alpha_hat: mean, batch_variance: var, batches, b })
}

/// Coverage experiment for circular confidence regions
/// {beta : (beta_hat - beta)' X'X (beta_hat - beta) <= p sigma_hat^2 t_crit}.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub noncoverage: f64,
    pub area_mean: f64,
    pub area_sd: f64,
    pub trials: u64,
    pub b: u64,
    pub theta: f64,
    pub nominal: f64,
}

/// Calibrate t_crit per trial from (importance-)resampled T* quantiles and
/// test coverage of the residual-sum statistic at the fitted scale. theta = 0
/// reproduces naive bootstrap calibration.
pub fn coverage_experiment(
    problem: &RegressionProblem,
    nominal: f64,
    b: u64,
    trials: u64,
    theta: Option<f64>,
    seed: u64,
) -> Result<CoverageReport> {
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(Error::Precondition(format!("nominal must be in (0,1), got {nominal}")));
    }
    if trials < 1 {
        return Err(Error::InvalidParameter("coverage_experiment needs trials >= 1".into()));
    }
    let (n, p) = (problem.n(), problem.p());
    let (nf, pf) = (n as f64, p as f64);
    // Tilt anchored at the asymptotic quantile of T* ~ chi^2_n / p.
    let chi = statrs::distribution::ChiSquared::new(nf)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let a_anchor = chi.inverse_cdf(nominal) / pf;
    let theta = match theta {
        Some(t) => t,
        None => solve_bootstrap_tilt(a_anchor, n, p, &SolverConfig::default())?.theta_star,
    };
    let (psi_a, _) = bootstrap_psi(a_anchor, n, p, theta)?;
    let d = 1.0 - 2.0 * theta / pf;
    // The quantile needs enough replicates beyond the anchor; under the tilt
    // the expected exceedance count is B Q_theta(T* > a), which reduces to
    // B (1 - nominal) for naive resampling.
    let exceed = gamma_sf(0.5 * nf, 2.0 / (pf * d), a_anchor);
    if (b as f64) * exceed < 10.0 {
        return Err(Error::InvalidParameter(format!(
            "B = {b} too small for the requested quantile: expected replicates beyond the anchor = {:.1} < 10",
            b as f64 * exceed
        )));
    }
    let alpha = 1.0 - nominal;
    // Volume of the p-dim ellipsoid with radius^2 = p sigma^2 t:
    // V_p (radius^2)^{p/2} / sqrt(det(X'X)).
    let unit_ball_ln = 0.5 * pf * std::f64::consts::PI.ln() - ln_gamma(0.5 * pf + 1.0);

    const TRIAL_STREAM_BASE: u64 = 1 << 43;
    let per_trial: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, TRIAL_STREAM_BASE + t);
            // B tilted replicates of T*.
            let mut draws: Vec<(f64, f64)> = (0..b)
                .map(|_| {
                    let mut acc = 0.0;
                    for _ in 0..n {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        acc += z * z;
                    }
                    let t_star = acc / (pf * d);
                    let w = (-theta * (t_star - a_anchor) + psi_a).exp();
                    (t_star, w)
                })
                .collect();
            // Weighted upper quantile: smallest t with P_hat(T* > t) <= alpha.
            draws.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
            let mut cum = 0.0;
            let mut t_crit = draws.last().map(|d| d.0).unwrap_or(a_anchor);
            for (ts, w) in &draws {
                cum += w / b as f64;
                if cum >= alpha {
                    t_crit = *ts;
                    break;
                }
            }
            // The trial statistic: residual sum at the true parameter over
            // the fitted scale, chi^2_n / p distributed.
            let mut acc = 0.0;
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += z * z;
            }
            let t_true = acc / pf;
            let radius2 = pf * problem.sigma2_hat * t_crit;
            let area =
                (unit_ball_ln + 0.5 * pf * radius2.ln()).exp() / problem.sqrt_det_xtx;
            (t_true > t_crit, area)
        })
        .collect();

    let nc = per_trial.iter().filter(|(miss, _)| *miss).count() as f64 / trials as f64;
    let tf = trials as f64;
    let area_mean = per_trial.iter().map(|(_, a)| a).sum::<f64>() / tf;
    let area_sd = if trials > 1 {
        (per_trial.iter().map(|(_, a)| (a - area_mean) * (a - area_mean)).sum::<f64>()
            / (tf - 1.0))
            .sqrt()
    } else {
        0.0
    };
    Ok(CoverageReport {
        noncoverage: nc,
        area_mean,
        area_sd,
        trials,
        b,
        theta,
        nominal,
    })
}
