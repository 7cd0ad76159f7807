//! Delta-gamma VaR under a d-dimensional jump-diffusion model.
//!
//! The quadratic loss approximation diagonalizes to
//! L_b = sum_j b_j Z_j + lambda_j (sigma^(j))^2 dt Z_j^2 + a_1' J
//! with Z standard normal and J the compound Poisson jump aggregate. Tilting
//! by theta keeps the shape: Z_j ~ N(mu_j(theta), sigma_j^2(theta)), the jump
//! count is Poisson with rate lambda(theta), and jump vectors stay Gaussian
//! with a shifted mean. The optimal theta_p solves
//! psi'(theta) = E_Qbar[L_b - r_p | L_b > r_p] with the conjugate conditional
//! mean estimated by reweighted common-random-number Monte Carlo.

use crate::error::{Error, Result};
use crate::rng::{map_blocks, stream_rng};
use crate::solver::{solve_fixed_point, SolverConfig, SolverResult};
use crate::estimator::{EstimateReport, Method};
use crate::numeric::bisect;
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Model parameters of the d-dimensional jump diffusion.
#[derive(Debug, Clone)]
pub struct JumpDiffusionSpec {
    /// Per-unit-time drifts mu^(i).
    pub drift: Vec<f64>,
    /// Per-sqrt-time volatilities sigma^(i).
    pub vol: Vec<f64>,
    /// Diffusion correlation (unit diagonal, positive definite).
    pub corr: DMatrix<f64>,
    /// Jump intensity lambda per unit time.
    pub jump_intensity: f64,
    /// Jump log-size means eta^(i).
    pub jump_mean: Vec<f64>,
    /// Jump log-size scales delta^(i).
    pub jump_scale: Vec<f64>,
    /// Jump correlation Sigma_J.
    pub jump_corr: DMatrix<f64>,
    /// Horizon dt.
    pub horizon: f64,
}

impl JumpDiffusionSpec {
    pub fn dim(&self) -> usize {
        self.vol.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidParameter("jump diffusion needs dimension >= 1".into()));
        }
        for (name, v) in [("drift", &self.drift), ("jump_mean", &self.jump_mean)] {
            if v.len() != d {
                return Err(Error::InvalidParameter(format!("{name} length != {d}")));
            }
        }
        for (name, v) in [("vol", &self.vol), ("jump_scale", &self.jump_scale)] {
            if v.len() != d {
                return Err(Error::InvalidParameter(format!("{name} length != {d}")));
            }
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} entries must be > 0")));
            }
        }
        if !(self.jump_intensity > 0.0) {
            return Err(Error::InvalidParameter("jump intensity must be > 0".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter("horizon must be > 0".into()));
        }
        for (name, m) in [("corr", &self.corr), ("jump_corr", &self.jump_corr)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::InvalidParameter(format!("{name} must be {d}x{d}")));
            }
            for i in 0..d {
                if (m[(i, i)] - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("{name} must have unit diagonal")));
                }
                for j in 0..d {
                    if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Diagonalizing transform: C with C C' = Sigma and C' A1 C = Lambda.
///
/// Construction: Sigma = L L' (Cholesky), then L' A1 L = U Lambda U'
/// (symmetric eigendecomposition, eigenvalues sorted descending), C = L U.
pub fn diagonalize(sigma: &DMatrix<f64>, a_mat: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("diffusion correlation is not positive definite".into()))?;
    let l = chol.l();
    let m = l.transpose() * a_mat * &l;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let d = sigma.nrows();
    let mut u = DMatrix::zeros(d, d);
    let mut lam = DVector::zeros(d);
    for (col, &src) in order.iter().enumerate() {
        lam[col] = eig.eigenvalues[src];
        u.set_column(col, &eig.eigenvectors.column(src));
    }
    let c = l * u;
    // Verify both identities before handing the transform out.
    let r1 = (&c * c.transpose() - sigma).abs().max();
    let r2 = {
        let m = c.transpose() * a_mat * &c;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { lam[i] } else { 0.0 };
                worst = worst.max((m[(i, j)] - want).abs());
            }
        }
        worst
    };
    if r1 > 1e-10 || r2 > 1e-10 {
        return Err(Error::Numerical(format!(
            "diagonalization residuals too large: |CC'-Sigma| = {r1:.2e}, |C'A1C-Lambda| = {r2:.2e}"
        )));
    }
    Ok((c, lam))
}

/// Diagonalized delta-gamma loss representation.
#[derive(Debug, Clone)]
pub struct QuadraticPortfolio {
    /// Constant offset b0 = a0 + a1' mu + mu' A1 mu (informational; the
    /// engine works on L_b = L - b0).
    pub b0: f64,
    /// Linear loadings b = (a1' sigma C)'.
    pub b: DVector<f64>,
    /// Diagonal quadratic loadings lambda_j.
    pub lambda_diag: DVector<f64>,
    /// Jump exposure a1 (enters through a1' J).
    pub a1: DVector<f64>,
    /// Diagonalizing transform (identity when built pre-diagonalized).
    pub transform: DMatrix<f64>,
}

impl QuadraticPortfolio {
    /// Build from greeks: a0 = -dV/dt * dt, a1 = -delta, a_mat = -Gamma/2.
    pub fn from_greeks(
        a0: f64,
        a1: DVector<f64>,
        a_mat: DMatrix<f64>,
        spec: &JumpDiffusionSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim();
        if a1.len() != d || a_mat.nrows() != d || a_mat.ncols() != d {
            return Err(Error::InvalidParameter("greek dimensions do not match the model".into()));
        }
        let (c, lam) = diagonalize(&spec.corr, &a_mat)?;
        let mu = DVector::from_iterator(d, spec.drift.iter().map(|m| m * spec.horizon));
        let sig = DVector::from_iterator(d, spec.vol.iter().map(|s| s * spec.horizon.sqrt()));
        let b0 = a0 + a1.dot(&mu) + (a_mat.clone() * &mu).dot(&mu);
        let scaled = DVector::from_iterator(d, (0..d).map(|i| a1[i] * sig[i]));
        let b = c.transpose() * scaled;
        Ok(Self { b0, b, lambda_diag: lam, a1, transform: c })
    }

    /// Build directly from a diagonalized representation (b, lambda_j) plus
    /// the jump exposure.
    pub fn from_diagonalized(
        b0: f64,
        b: DVector<f64>,
        lambda_diag: DVector<f64>,
        a1: DVector<f64>,
    ) -> Result<Self> {
        let d = b.len();
        if lambda_diag.len() != d || a1.len() != d {
            return Err(Error::InvalidParameter("diagonalized portfolio dimensions differ".into()));
        }
        Ok(Self { b0, b, lambda_diag, a1, transform: DMatrix::identity(d, d) })
    }
}

/// Per-component tilted parameters (and their conjugates at -theta).
#[derive(Debug, Clone)]
pub struct TiltedJdParams {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Tilted jump count mean over the horizon: lambda(theta).
    pub lambda: f64,
    /// Tilted jump mean vector eta(theta).
    pub eta: DVector<f64>,
    pub theta: f64,
}

/// The assembled engine: portfolio + model with precomputed loadings.
pub struct VarEngine {
    portfolio: QuadraticPortfolio,
    spec: JumpDiffusionSpec,
    /// c_j = lambda_j (sigma^(j))^2 dt.
    c: Vec<f64>,
    /// lambda dt.
    jump_rate: f64,
    /// m = a1' eta.
    jump_lin_mean: f64,
    /// s = a1' (delta' Sigma_J delta) a1.
    jump_lin_var: f64,
    /// Cholesky factor of the jump covariance delta' Sigma_J delta.
    jump_chol: DMatrix<f64>,
    /// Admissibility bound: |theta| < strip for both signs (Corollary
    /// condition 1 +/- 2 theta c_j > 0 for every component).
    strip: f64,
}

impl VarEngine {
    pub fn new(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim();
        if portfolio.b.len() != d {
            return Err(Error::InvalidParameter("portfolio dimension != model dimension".into()));
        }
        let c: Vec<f64> = (0..d)
            .map(|j| portfolio.lambda_diag[j] * spec.vol[j] * spec.vol[j] * spec.horizon)
            .collect();
        let delta = DMatrix::from_diagonal(&DVector::from_row_slice(&spec.jump_scale));
        let jump_cov = &delta * &spec.jump_corr * &delta;
        let jump_chol = jump_cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("jump covariance is not positive definite".into()))?
            .l();
        let eta = DVector::from_row_slice(&spec.jump_mean);
        let jump_lin_mean = portfolio.a1.dot(&eta);
        let jump_lin_var = (&jump_cov * &portfolio.a1).dot(&portfolio.a1);
        let strip = c
            .iter()
            .filter(|cj| cj.abs() > 0.0)
            .map(|cj| 1.0 / (2.0 * cj.abs()))
            .fold(f64::INFINITY, f64::min);
        let jump_rate = spec.jump_intensity * spec.horizon;
        Ok(Self { portfolio, spec, c, jump_rate, jump_lin_mean, jump_lin_var, jump_chol, strip })
    }

    pub fn portfolio(&self) -> &QuadraticPortfolio {
        &self.portfolio
    }

    pub fn spec(&self) -> &JumpDiffusionSpec {
        &self.spec
    }

    /// Upper edge of the admissibility strip (|theta| must stay below).
    pub fn strip(&self) -> f64 {
        self.strip
    }

    fn check_strip(&self, theta: f64) -> Result<()> {
        for (j, cj) in self.c.iter().enumerate() {
            if 1.0 - 2.0 * theta * cj <= 0.0 {
                return Err(Error::Numerical(format!(
                    "theta = {theta} violates 1 - 2 theta c_j > 0 at component j = {j} (c_j = {cj:.6e})"
                )));
            }
        }
        Ok(())
    }

    /// Tilted parameters of Z_j, the jump count and the jump mean at theta.
    pub fn tilted_params(&self, theta: f64) -> Result<TiltedJdParams> {
        self.check_strip(theta)?;
        let d = self.c.len();
        let mut mu = Vec::with_capacity(d);
        let mut sigma2 = Vec::with_capacity(d);
        for j in 0..d {
            let den = 1.0 - 2.0 * theta * self.c[j];
            mu.push(theta * self.portfolio.b[j] / den);
            sigma2.push(1.0 / den);
        }
        let lambda = self.jump_rate
            * (theta * self.jump_lin_mean + 0.5 * theta * theta * self.jump_lin_var).exp();
        let jump_cov_a1 = &self.jump_chol * (self.jump_chol.transpose() * &self.portfolio.a1);
        let eta = DVector::from_row_slice(&self.spec.jump_mean) + theta * jump_cov_a1;
        Ok(TiltedJdParams { mu, sigma2, lambda, eta, theta })
    }

    /// Conjugate parameters: the tilt at -theta.
    pub fn conjugate_params(&self, theta: f64) -> Result<TiltedJdParams> {
        self.tilted_params(-theta)
    }

    /// psi(theta) of L_b - r_p.
    pub fn psi(&self, theta: f64, r_p: f64) -> Result<f64> {
        self.check_strip(theta)?;
        let mut acc = 0.0;
        for j in 0..self.c.len() {
            let den = 1.0 - 2.0 * theta * self.c[j];
            let tb = theta * self.portfolio.b[j];
            acc += 0.5 * (tb * tb / den - den.ln());
        }
        acc += self.jump_rate
            * (theta * self.jump_lin_mean + 0.5 * theta * theta * self.jump_lin_var).exp_m1();
        Ok(acc - theta * r_p)
    }

    /// psi'(theta) of L_b - r_p.
    pub fn psi_prime(&self, theta: f64, r_p: f64) -> Result<f64> {
        self.check_strip(theta)?;
        let mut acc = 0.0;
        for j in 0..self.c.len() {
            let cj = self.c[j];
            let bj = self.portfolio.b[j];
            let den = 1.0 - 2.0 * theta * cj;
            acc += theta * bj * bj * (1.0 - theta * cj) / (den * den) + cj / den;
        }
        let e = (theta * self.jump_lin_mean + 0.5 * theta * theta * self.jump_lin_var).exp();
        acc += self.jump_rate * e * (self.jump_lin_mean + theta * self.jump_lin_var);
        Ok(acc - r_p)
    }

    /// Draw one loss L_b under the tilted parameters.
    ///
    /// Z_j are independent N(mu_j, sigma_j^2), the jump count is Poisson with
    /// the tilted rate (sampled by inverse CDF so that common random numbers
    /// stay aligned across tilts), and each jump vector is Gaussian with the
    /// tilted mean.
    pub fn loss_sample(&self, params: &TiltedJdParams, rng: &mut dyn RngCore) -> f64 {
        let d = self.c.len();
        let mut quad = 0.0;
        for j in 0..d {
            let xi: f64 = StandardNormal.sample(rng);
            let z = params.mu[j] + params.sigma2[j].sqrt() * xi;
            quad += self.portfolio.b[j] * z + self.c[j] * z * z;
        }
        let u: f64 = rand::Rng::random(rng);
        let n = poisson_inv_cdf(params.lambda, u);
        let mut jump = 0.0;
        for _ in 0..n {
            let xi = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
            let v = &params.eta + &self.jump_chol * xi;
            jump += self.portfolio.a1.dot(&v);
        }
        quad + jump
    }

    /// Optimal tilt theta_p solving psi'(theta) = E_Qbar[L_b - r_p | L_b > r_p].
    ///
    /// The conjugate conditional mean is estimated from m common-random-number
    /// samples drawn under Q_theta and reweighted by e^{-2 theta (L_b - r_p)}
    /// (the conjugate/tilted density ratio up to constants that cancel); at
    /// least 50 samples must exceed r_p. Stopping tolerances below the Monte
    /// Carlo resolution are clamped to 1e-5.
    pub fn solve_theta_p(
        &self,
        r_p: f64,
        cfg: &SolverConfig,
        m: u64,
        seed: u64,
    ) -> Result<SolverResult> {
        if m < 100 {
            return Err(Error::InvalidParameter("solve_theta_p needs m >= 100".into()));
        }
        let mean_excess_at_zero = self.psi_prime(0.0, r_p)?;
        if mean_excess_at_zero >= 0.0 {
            return Err(Error::Precondition(format!(
                "r_p = {r_p} does not exceed the mean loss (psi'(0) = {mean_excess_at_zero:.4e} >= 0)"
            )));
        }
        let cap = self.strip * (1.0 - 1e-9);
        let g = |t: f64| self.psi_prime(t, r_p);
        let h = |t: f64| self.conditional_mean_excess(t, r_p, m, seed);
        // Large-deviation initializer: psi'(theta) = 0.
        let theta_ld = bisect(&g, 0.0, cap, 1e-12, 200).ok();
        let hi = theta_ld.map(|t| (2.0 * t).min(cap)).unwrap_or(cap);
        let eff = SolverConfig {
            tol_rel: cfg.tol_rel.max(1e-5),
            initial_theta: cfg.initial_theta.or(theta_ld),
            ..*cfg
        };
        solve_fixed_point(g, h, (0.0, hi), &eff)
    }

    /// Self-normalized estimate of E_Qbar[L_b - r_p | L_b > r_p] from
    /// up-tilted samples.
    fn conditional_mean_excess(&self, theta: f64, r_p: f64, m: u64, seed: u64) -> Result<f64> {
        let params = self.tilted_params(theta)?;
        self.check_strip(-theta)?;
        const SOLVE_STREAM_BASE: u64 = 1 << 41;
        let results = map_blocks(m, seed, SOLVE_STREAM_BASE, |rng, count| {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut hits = 0u64;
            for _ in 0..count {
                let l = self.loss_sample(&params, rng);
                let f = l - r_p;
                if f > 0.0 {
                    let w = (-2.0 * theta * f).exp();
                    num += w * f;
                    den += w;
                    hits += 1;
                }
            }
            (num, den, hits)
        });
        let (mut num, mut den, mut hits) = (0.0, 0.0, 0u64);
        for (a, b, c) in results {
            num += a;
            den += b;
            hits += c;
        }
        if hits < 50 {
            return Err(Error::InsufficientHits { hits: hits as usize, needed: 50 });
        }
        Ok(num / den)
    }

    /// The importance-sampling tail estimator replicated M times with k
    /// samples each: reports the mean of the batch estimates and their
    /// scatter (variance field is per-sample: batch variance * k).
    pub fn estimate_var_tail(
        &self,
        theta_p: f64,
        r_p: f64,
        k: u64,
        replications: u64,
        seed: u64,
    ) -> Result<EstimateReport> {
        if k < 1 || replications < 1 {
            return Err(Error::InvalidParameter("estimate_var_tail needs k, M >= 1".into()));
        }
        let params = self.tilted_params(theta_p)?;
        let psi = self.psi(theta_p, r_p)?;
        const EST_STREAM_BASE: u64 = 1 << 42;
        let batch_means: Vec<f64> = (0..replications)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream_rng(seed, EST_STREAM_BASE + j);
                let mut sum = 0.0;
                for _ in 0..k {
                    let l = self.loss_sample(&params, &mut rng);
                    if l > r_p {
                        sum += (-theta_p * (l - r_p) + psi).exp();
                    }
                }
                sum / k as f64
            })
            .collect();
        let mf = replications as f64;
        let p_hat = batch_means.iter().sum::<f64>() / mf;
        let batch_var = if replications > 1 {
            batch_means.iter().map(|x| (x - p_hat) * (x - p_hat)).sum::<f64>() / (mf - 1.0)
        } else {
            0.0
        };
        let method = if theta_p == 0.0 {
            Method::Naive
        } else {
            Method::ImportanceSampling { theta: theta_p }
        };
        Ok(EstimateReport {
            p_hat,
            std_err: (batch_var / mf).sqrt(),
            variance: batch_var * k as f64,
            n: k * replications,
            method,
            seed,
        })
    }

    /// Invert the tail: find r_p with P(L_b > r_p) = p by bisection on the
    /// estimated tail probability, re-solving theta_p per candidate.
    pub fn find_var_quantile(
        &self,
        p: f64,
        cfg: &SolverConfig,
        budget: u64,
        seed: u64,
    ) -> Result<QuantileResult> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::Precondition(format!(
                "find_var_quantile requires 0 < p < 0.5, got {p}"
            )));
        }
        let mean = self.psi_prime(0.0, 0.0)?;
        let sd = {
            // psi''(0) by central difference of psi' (cheap and exact enough
            // for a starting bracket).
            let h = 1e-6 * self.strip.min(1.0);
            ((self.psi_prime(h, 0.0)? - self.psi_prime(-h, 0.0)?) / (2.0 * h)).max(1e-12).sqrt()
        };
        use statrs::distribution::ContinuousCDF;
        let z = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        let mut lo = mean + 0.2 * sd;
        let mut hi = mean + (z.inverse_cdf(1.0 - p) + 6.0) * sd;
        let m_solver = 50_000u64;
        let n_eval = 400_000u64;
        let mut spent = 0u64;
        let mut last = 0.5 * (lo + hi);
        for round in 0u64..64 {
            let r = 0.5 * (lo + hi);
            last = r;
            if spent + m_solver + n_eval > budget {
                return Ok(QuantileResult {
                    r_p: r,
                    bracket: (lo, hi),
                    status: QuantileStatus::BudgetExhausted,
                    samples_used: spent,
                });
            }
            let theta = self.solve_theta_p(r, cfg, m_solver, seed.wrapping_add(round))?.theta_star;
            spent += m_solver;
            let rep = self.estimate_var_tail(theta, r, 4096, n_eval / 4096, seed.wrapping_add(round))?;
            spent += rep.n;
            let ci = 3.0 * rep.std_err;
            if rep.p_hat - ci > p {
                lo = r;
            } else if rep.p_hat + ci < p {
                hi = r;
            } else {
                return Ok(QuantileResult {
                    r_p: r,
                    bracket: (lo, hi),
                    status: QuantileStatus::Converged,
                    samples_used: spent,
                });
            }
        }
        Ok(QuantileResult {
            r_p: last,
            bracket: (lo, hi),
            status: QuantileStatus::Converged,
            samples_used: spent,
        })
    }
}

/// Poisson sampling by CDF inversion from a single uniform; keeps common
/// random numbers aligned when the rate changes between solver iterations.
fn poisson_inv_cdf(mean: f64, u: f64) -> u64 {
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u > cdf {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
        if k > 10_000_000 {
            break;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct QuantileResult {
    pub r_p: f64,
    pub bracket: (f64, f64),
    pub status: QuantileStatus,
    pub samples_used: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equicorr(d: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
    }

    fn table4_spec() -> JumpDiffusionSpec {
        let d = 15;
        JumpDiffusionSpec {
            drift: (1..=d).map(|i| i as f64 / 100.0).collect(),
            vol: (1..=d).map(|i| 0.1 + i as f64 / 100.0).collect(),
            corr: equicorr(d, 0.3),
            jump_intensity: 1.0,
            jump_mean: vec![0.0; d],
            jump_scale: (1..=d).map(|i| i as f64 / 100.0).collect(),
            jump_corr: DMatrix::identity(d, d),
            horizon: 1.0 / 252.0,
        }
    }

    #[test]
    fn diagonalize_identity_case() {
        // Sigma = I, A1 diagonal: C is a permutation/sign matrix, Lambda = sorted A1.
        let sigma = DMatrix::identity(3, 3);
        let a1 = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, 2.0, 1.0]));
        let (c, lam) = diagonalize(&sigma, &a1).unwrap();
        assert!((lam[0] - 2.0).abs() < 1e-12);
        assert!((lam[1] - 1.0).abs() < 1e-12);
        assert!((lam[2] - 0.5).abs() < 1e-12);
        assert!(((&c * c.transpose()) - sigma).abs().max() < 1e-12);
    }

    #[test]
    fn diagonalize_d2_residuals() {
        let sigma = equicorr(2, 0.3);
        let a1 = DMatrix::from_diagonal(&DVector::from_row_slice(&[5.2, 0.7]));
        let (c, lam) = diagonalize(&sigma, &a1).unwrap();
        let r1 = (&c * c.transpose() - &sigma).abs().max();
        let m = c.transpose() * &a1 * &c;
        let r2 = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (m[(i, j)] - if i == j { lam[i] } else { 0.0 }).abs())
            .fold(0.0f64, f64::max);
        assert!(r1 < 1e-10 && r2 < 1e-10, "r1={r1:e} r2={r2:e}");
    }

    #[test]
    fn diagonalize_rejects_non_pd() {
        let mut sigma = equicorr(2, 0.3);
        sigma[(0, 0)] = -1.0;
        sigma[(1, 1)] = -1.0;
        assert!(diagonalize(&sigma, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn table4_eigenvalues() {
        // Equicorrelation rho = 0.3, d = 15, A1 = I: eigenvalues 5.2 and 0.7.
        let (_, lam) = diagonalize(&equicorr(15, 0.3), &DMatrix::identity(15, 15)).unwrap();
        assert!((lam[0] - 5.2).abs() < 1e-10, "lam0={}", lam[0]);
        for j in 1..15 {
            assert!((lam[j] - 0.7).abs() < 1e-10, "lam{j}={}", lam[j]);
        }
    }

    #[test]
    fn psi_zero_is_zero_and_prime_matches_fd() {
        let spec = table4_spec();
        let b = DVector::from_row_slice(&[
            0.044, 0.0589891, 0.0720326, 0.0838734, 0.0948957, 0.105325, 0.115304, 0.124929,
            0.134271, 0.143378, 0.152289, 0.161034, 0.169635, 0.178112, 0.186479,
        ]);
        let lam = DVector::from_iterator(15, std::iter::once(5.2).chain(std::iter::repeat(0.7)).take(15));
        let pf = QuadraticPortfolio::from_diagonalized(0.0, b, lam, DVector::from_element(15, 1.0))
            .unwrap();
        let eng = VarEngine::new(pf, spec).unwrap();
        assert_eq!(eng.psi(0.0, 0.824).unwrap(), 0.0);
        for theta in [-3.0, 0.5, 4.0] {
            let h = 1e-6;
            let fd = (eng.psi(theta + h, 0.824).unwrap() - eng.psi(theta - h, 0.824).unwrap())
                / (2.0 * h);
            let an = eng.psi_prime(theta, 0.824).unwrap();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "theta={theta}: {fd} vs {an}");
        }
    }

    #[test]
    fn strip_violation_names_component() {
        let spec = table4_spec();
        let b = DVector::from_element(15, 0.1);
        let lam = DVector::from_iterator(15, std::iter::once(5.2).chain(std::iter::repeat(0.7)).take(15));
        let eng = VarEngine::new(
            QuadraticPortfolio::from_diagonalized(0.0, b, lam, DVector::from_element(15, 1.0))
                .unwrap(),
            spec,
        )
        .unwrap();
        let bad = eng.strip() * 1.01;
        let err = eng.psi(bad, 0.0).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("component"), "message was: {msg}");
    }

    #[test]
    fn conjugate_params_are_negated_tilt() {
        let spec = table4_spec();
        let b = DVector::from_element(15, 0.1);
        let lam = DVector::from_iterator(15, std::iter::once(5.2).chain(std::iter::repeat(0.7)).take(15));
        let eng = VarEngine::new(
            QuadraticPortfolio::from_diagonalized(0.0, b, lam, DVector::from_element(15, 1.0))
                .unwrap(),
            spec,
        )
        .unwrap();
        let t = 2.5;
        let bar = eng.conjugate_params(t).unwrap();
        let neg = eng.tilted_params(-t).unwrap();
        assert_eq!(bar.mu, neg.mu);
        assert_eq!(bar.sigma2, neg.sigma2);
        assert_eq!(bar.lambda, neg.lambda);
        assert_eq!(bar.eta, neg.eta);
    }

    #[test]
    fn poisson_inversion_matches_cdf() {
        // median of Pois(3) is 3
        assert_eq!(poisson_inv_cdf(3.0, 0.5), 3);
        assert_eq!(poisson_inv_cdf(0.5, 0.0), 0);
        assert!(poisson_inv_cdf(10.0, 0.999999) > 10);
    }
}
