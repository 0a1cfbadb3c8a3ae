//! End-to-end error of the SGD → ULA pipeline: kernels, expected error,
//! the σ trade-off scan and Monte Carlo convergence studies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian_metrics::{loglog_slope, w2_sq_gauss, GaussianModel};
use crate::langevin::{
    expected_w2_perturbed, kernel_alpha, kernel_beta, kernel_psi, perturbation_mc, run_ula_core,
    ula_stationary, Flavor, PerturbationLaw,
};
use crate::matrixkit::{psd_sqrt, SpdMatrix};
use crate::rng::stream;
use crate::score_theory::{sgd_stationary_exact, sgd_tau_bound, LinearScore, SampleSize, TauNSign};
use crate::sgd_sim::{default_sgd_burn_in, run_sgd_core, EmpiricalGaussian};
use crate::stats::mean_se;

/// `(σ, τ, γ, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineParams {
    pub sigma: f64,
    pub tau: f64,
    pub gamma: f64,
    pub n: u64,
}

impl PipelineParams {
    /// Every violated invariant for the given spectrum.
    pub fn violations(&self, spectrum: &[f64]) -> Vec<String> {
        let mut v = Vec::new();
        if spectrum.is_empty() {
            v.push("spectrum must be nonempty".to_string());
        }
        if spectrum.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            v.push("spectrum entries must be positive and finite".to_string());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            v.push(format!("sigma = {} must be positive", self.sigma));
        }
        if !v.is_empty() {
            return v;
        }
        if self.n < 2 {
            v.push(format!("N = {} must be at least 2", self.n));
        }
        let s2 = self.sigma * self.sigma;
        let lmax = spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lmin = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = sgd_tau_bound(lmax, self.sigma);
        if !(self.tau > 0.0) || self.tau >= bound {
            v.push(format!(
                "tau = {} violates the SGD stepsize bound 2/max(max_k λ_k + σ², 1) = {bound}",
                self.tau
            ));
        }
        if !(self.gamma > 0.0) || self.gamma >= lmin + s2 {
            v.push(format!(
                "gamma = {} violates the kernel domain bound min_k(λ_k + σ²) = {}",
                self.gamma,
                lmin + s2
            ));
        }
        v
    }

    pub fn validate(&self, spectrum: &[f64]) -> Result<()> {
        let v = self.violations(spectrum);
        if v.is_empty() {
            return Ok(());
        }
        if v.iter().any(|m| m.contains("stepsize")) {
            Err(Error::StabilityViolation(v.join("; ")))
        } else {
            Err(Error::DomainError(v.join("; ")))
        }
    }
}

/// The four kernel sums and their total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBreakdown {
    pub term0: f64,
    pub term_tau: f64,
    #[serde(rename = "term_tauN")]
    pub term_tau_n: f64,
    #[serde(rename = "term_N")]
    pub term_n: f64,
    pub total: f64,
}

/// Kernel values for one ordered pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairKernels {
    pub h0_i: f64,
    pub k_tau: f64,
    pub k_n: f64,
    pub k_tau_n: f64,
}

/// Kernels at eigenvalues `(λ_i, λ_j)`; `same_index` selects the `i = j`
/// contributions.
pub fn kernels_thm3(li: f64, lj: f64, same_index: bool, sigma: f64, gamma: f64) -> Result<PairKernels> {
    let s2 = sigma * sigma;
    let (si, sj) = (li + s2, lj + s2);
    let a = kernel_alpha(li, lj, si, sj, gamma)?;
    let b = kernel_beta(li, lj, si, sj, gamma)?;
    let ri = li / si;
    let (ki, kj) = (li / (si * si), lj / (sj * sj));
    let mut k_tau = 0.5 * ri * a;
    let mut k_tau_n = ri * ri * a;
    let mut k_n = (a + b) * ki * kj;
    if same_index {
        let diag = si * si + b;
        k_tau += 0.5 * ri * diag;
        k_tau_n += ri * ri * diag;
        k_n += li + (a + b) * ki * ki;
    }
    Ok(PairKernels { h0_i: kernel_psi(li, si, gamma)?, k_tau, k_n, k_tau_n })
}

/// Second-order expected pipeline error (squared distance).
pub fn expected_pipeline_error(spectrum: &[f64], params: &PipelineParams, sign: TauNSign) -> Result<ErrorBreakdown> {
    params.validate(spectrum)?;
    let d = spectrum.len();
    let (mut h0, mut kt, mut ktn, mut kn) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let k = kernels_thm3(spectrum[i], spectrum[j], i == j, params.sigma, params.gamma)?;
            if i == j {
                h0 += k.h0_i;
            }
            kt += k.k_tau;
            ktn += k.k_tau_n;
            kn += k.k_n;
        }
    }
    let s2 = params.sigma * params.sigma;
    let nf = params.n as f64;
    let term_tau = params.tau / s2 * kt;
    let term_tau_n = sign.value() * params.tau / (nf * s2) * ktn;
    let term_n = kn / nf;
    Ok(ErrorBreakdown { term0: h0, term_tau, term_tau_n, term_n, total: h0 + term_tau + term_tau_n + term_n })
}

/// Second moments of `(δ, Δ) = (b - E b, A - A*)` implied by the three-term
/// SGD covariance, in the data eigenbasis.
pub fn perturbation_law_from_sgd(
    spectrum: &[f64],
    sigma: f64,
    tau: f64,
    n: SampleSize,
    sign: TauNSign,
) -> Result<PerturbationLaw> {
    n.check()?;
    if !(sigma > 0.0) {
        return Err(Error::DomainError(format!("sigma must be positive, got {sigma}")));
    }
    let lmax = spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bound = sgd_tau_bound(lmax, sigma);
    if !(tau >= 0.0) || tau >= bound {
        return Err(Error::StabilityViolation(format!(
            "tau = {tau} violates 2/max(max_k λ_k + σ², 1) = {bound}"
        )));
    }
    let d = spectrum.len();
    let s2 = sigma * sigma;
    let inv_n = n.inverse();
    let ratio: Vec<f64> = spectrum.iter().map(|l| l / (l + s2)).collect();
    let kappa: Vec<f64> = spectrum.iter().map(|l| l / ((l + s2) * (l + s2))).collect();
    let t = tau / (2.0 * s2);
    let tn = sign.value() * tau * inv_n / s2;
    let mut law = PerturbationLaw::zero(d);
    for i in 0..d {
        let opt = t * ratio[i] + tn * ratio[i] * ratio[i];
        law.cov_delta[(i, i)] = opt + inv_n * kappa[i];
        for j in 0..d {
            let gen = inv_n * kappa[i] * kappa[j] * if i == j { 2.0 } else { 1.0 };
            law.m2[(i, j)] = opt + gen;
            law.m2x[(i, j)] = gen + if i == j { opt } else { 0.0 };
        }
    }
    Ok(law)
}

/// Law of `(b, A - A*)` from a factorized exact stationary covariance on
/// diagonal data (eigenbasis = canonical basis).
pub fn perturbation_law_from_theta(cov_a: &DMatrix<f64>, cov_b: &DMatrix<f64>) -> PerturbationLaw {
    let d = cov_b.nrows();
    let mut law = PerturbationLaw::zero(d);
    law.cov_delta = cov_b.clone();
    for i in 0..d {
        for j in 0..d {
            law.m2[(i, j)] = cov_a[(i + j * d, i + j * d)];
            law.m2x[(i, j)] = cov_a[(i + j * d, j + i * d)];
        }
    }
    law
}

/// One grid point of a σ scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub sigma: f64,
    pub breakdown: Option<ErrorBreakdown>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaScan {
    pub rows: Vec<ScanRow>,
    /// Grid index of the smallest valid total.
    pub grid_argmin: usize,
    pub interior: bool,
    pub sigma_star: f64,
    pub total_star: f64,
}

/// Total error on a σ grid, refined by golden section when the grid minimum
/// is interior.
pub fn sigma_tradeoff_scan(
    spectrum: &[f64],
    tau: f64,
    gamma: f64,
    n: u64,
    grid: &[f64],
    sign: TauNSign,
) -> Result<SigmaScan> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sigma grid is empty".into()));
    }
    let eval = |s: f64| expected_pipeline_error(spectrum, &PipelineParams { sigma: s, tau, gamma, n }, sign);
    let rows: Vec<ScanRow> = grid
        .iter()
        .map(|&s| match eval(s) {
            Ok(b) => ScanRow { sigma: s, breakdown: Some(b), error: None },
            Err(e) => ScanRow { sigma: s, breakdown: None, error: Some(e.code().to_string()) },
        })
        .collect();
    let (grid_argmin, best) = rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.breakdown.map(|b| (k, b.total)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::DomainError("no grid point inside the domain".into()))?;
    let valid = |k: usize| rows.get(k).and_then(|r| r.breakdown).is_some();
    let interior = grid_argmin > 0 && grid_argmin + 1 < rows.len() && valid(grid_argmin - 1) && valid(grid_argmin + 1);
    let (sigma_star, total_star) = if interior {
        let (lo, hi) = (grid[grid_argmin - 1], grid[grid_argmin + 1]);
        golden_section(|s| eval(s).map(|b| b.total).unwrap_or(f64::INFINITY), lo, hi, 1e-4)
    } else {
        (grid[grid_argmin], best)
    };
    Ok(SigmaScan { rows, grid_argmin, interior, sigma_star, total_star })
}

/// Minimizes `f` on `[lo, hi]` until the bracket's relative width is below `rel`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel: f64) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (hi - lo) > rel * 0.5 * (hi + lo).abs() {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// How the ULA law is obtained for each outer draw of the nested Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UlaMode {
    /// Exact stationary Gaussian.
    Exact,
    /// Moments of a simulated chain of the given length (smoke tests only).
    Chain { n_steps: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedMcResult {
    pub outer_draws: usize,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub formula: ErrorBreakdown,
    /// `(MC - formula) / SE`.
    pub z: f64,
    /// Outer draws whose trained score was not ULA-stable.
    pub unstable_draws: usize,
}

/// Dataset → SGD → ULA law → exact squared W2, averaged over outer draws.
pub fn pipeline_nested_mc(
    c: &SpdMatrix,
    params: &PipelineParams,
    outer: usize,
    seed: u64,
    mode: UlaMode,
    sign: TauNSign,
) -> Result<NestedMcResult> {
    let spectrum: Vec<f64> = c.eigvals().iter().cloned().collect();
    let formula = expected_pipeline_error(&spectrum, params, sign)?;
    let burn_in = 3 * default_sgd_burn_in(c.min_eig(), params.sigma, params.tau);
    let c_root = c.sqrt().matrix().clone();
    let p = GaussianModel::centered(c.clone());
    let vals: Vec<Option<f64>> = (0..outer)
        .into_par_iter()
        .map(|o| {
            let mut rng = stream(seed, &format!("nested-mc/outer/{o}"));
            let emp = EmpiricalGaussian::draw(&c_root, params.n, &mut rng);
            let root = psd_sqrt(&emp.cov);
            let st = run_sgd_core(&emp.mean, &root, params.sigma, params.tau, burn_in, 0, 1, &mut rng, |_| {})?;
            let score = st.score();
            let q = match mode {
                UlaMode::Exact => match ula_stationary(&score, params.gamma) {
                    Ok(q) => q.gaussian(),
                    Err(Error::StabilityViolation(_)) => return Ok(None),
                    Err(e) => return Err(e),
                },
                UlaMode::Chain { n_steps } => match chain_gaussian(&score, params.gamma, n_steps, &mut rng) {
                    Ok(q) => q,
                    Err(Error::StabilityViolation(_)) => return Ok(None),
                    Err(e) => return Err(e),
                },
            };
            Ok(Some(w2_sq_gauss(&p, &q)?))
        })
        .collect::<Result<_>>()?;
    let ok: Vec<f64> = vals.iter().flatten().cloned().collect();
    let (mc_mean, mc_se) = mean_se(&ok);
    Ok(NestedMcResult {
        outer_draws: outer,
        mc_mean,
        mc_se,
        formula,
        z: (mc_mean - formula.total) / mc_se,
        unstable_draws: outer - ok.len(),
    })
}

fn chain_gaussian<R: rand::Rng + ?Sized>(score: &LinearScore, gamma: f64, n_steps: u64, rng: &mut R) -> Result<GaussianModel> {
    crate::langevin::check_ula_stability(&score.a, gamma)?;
    let d = score.dim();
    let burn = crate::langevin::default_ula_burn_in(&score.a, gamma);
    let mut sum = DVector::zeros(d);
    let mut outer = DMatrix::zeros(d, d);
    run_ula_core(score, gamma, burn, n_steps, 1, rng, |y| {
        sum += y;
        outer.ger(1.0, y, y, 1.0);
    })?;
    let n = n_steps as f64;
    let mean = sum / n;
    let cov = crate::matrixkit::symmetrize(&(outer / n - &mean * mean.transpose()));
    GaussianModel::new(mean, SpdMatrix::new(cov)?)
}

/// Which expansion parameter a convergence study varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Tau,
    N,
    Gamma,
    Eps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub axis: ScanAxis,
    pub x: Vec<f64>,
    pub remainder: Vec<f64>,
    pub remainder_se: Vec<f64>,
    pub slope: f64,
    /// Approximate 95% interval from replicate slopes (degenerate for
    /// deterministic scans).
    pub slope_ci: (f64, f64),
    pub replicates: usize,
}

fn slope_summary(axis: ScanAxis, x: Vec<f64>, reps: Vec<Vec<f64>>) -> SlopeReport {
    let r = reps.len();
    let m = x.len();
    let remainder: Vec<f64> = (0..m).map(|k| reps.iter().map(|v| v[k]).sum::<f64>() / r as f64).collect();
    let remainder_se: Vec<f64> = if r > 1 {
        (0..m).map(|k| mean_se(&reps.iter().map(|v| v[k]).collect::<Vec<_>>()).1).collect()
    } else {
        vec![0.0; m]
    };
    let slope = loglog_slope(&x, &remainder);
    let slope_ci = if r > 1 {
        let slopes: Vec<f64> = reps.iter().map(|v| loglog_slope(&x, v)).collect();
        let (ms, se) = mean_se(&slopes);
        (ms - 2.0 * se, ms + 2.0 * se)
    } else {
        (slope, slope)
    };
    SlopeReport { axis, x, remainder, remainder_se, slope, slope_ci, replicates: r }
}

/// Remainder slopes of the second-order models along one axis.
///
/// * `Eps`: antithetic nested MC of the perturbed ULA error against the
///   model evaluated at the empirical law of the draws, for the law implied
///   by `params`, `ε ∈ {0.02, 0.01, 0.005}`.
/// * `Tau`: model error under the exact stationary SGD law minus the model
///   under the leading-order law (`N = ∞`), `τ ∈ τ₀·{1, 1/2, 1/4, 1/8}`.
/// * `N`: Monte Carlo over datasets at `τ → 0` of the exact error of the
///   regularized empirical score minus the `1/N` model.
/// * `Gamma`: ULA stationary covariance at the optimal score minus its
///   first-order expansion `C_σ + (γ/2)I`.
pub fn convergence_study(
    spectrum: &[f64],
    params: &PipelineParams,
    axis: ScanAxis,
    replicates: usize,
    draws: usize,
    seed: u64,
) -> Result<SlopeReport> {
    params.validate(spectrum)?;
    let c = SpdMatrix::diagonal(spectrum)?;
    let d = spectrum.len();
    let s2 = params.sigma * params.sigma;
    match axis {
        ScanAxis::Eps => {
            let law = perturbation_law_from_sgd(spectrum, params.sigma, params.tau, SampleSize::Finite(params.n), TauNSign::Minus)?;
            let eps = vec![0.02, 0.01, 0.005];
            let scale = 1.0 / law.m2.amax().max(law.cov_delta.amax());
            let law = PerturbationLaw { cov_delta: &law.cov_delta * scale, m2: &law.m2 * scale, m2x: &law.m2x * scale };
            let reps = (0..replicates.max(1))
                .map(|r| {
                    perturbation_mc(&c, params.sigma, params.gamma, &law, &eps, draws, Flavor::Wasserstein, crate::rng::derive_seed(seed, &format!("eps/{r}")))
                        .map(|pts| pts.iter().map(|p| p.residual()).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            Ok(slope_summary(axis, eps, reps))
        }
        ScanAxis::Tau => {
            let taus: Vec<f64> = (0..4).map(|k| params.tau / f64::powi(2.0, k)).collect();
            let rem = taus
                .iter()
                .map(|&t| {
                    let th = sgd_stationary_exact(c.matrix(), params.sigma, &DVector::zeros(d), t)?;
                    let exact = perturbation_law_from_theta(&th.cov_a(), &th.cov_b());
                    let lead = perturbation_law_from_sgd(spectrum, params.sigma, t, SampleSize::Infinite, TauNSign::Minus)?;
                    let a = expected_w2_perturbed(spectrum, params.sigma, params.gamma, &exact, 1.0, Flavor::Wasserstein)?;
                    let b = expected_w2_perturbed(spectrum, params.sigma, params.gamma, &lead, 1.0, Flavor::Wasserstein)?;
                    Ok((a - b).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(slope_summary(axis, taus, vec![rem]))
        }
        ScanAxis::Gamma => {
            let gammas: Vec<f64> = (0..6).map(|k| params.gamma / f64::powi(2.0, k)).collect();
            let a = crate::score_theory::optimal_score(&c, params.sigma)?;
            let rem = gammas
                .iter()
                .map(|&g| {
                    let q = ula_stationary(&a, g)?;
                    let lin = c.shifted(s2)?.matrix() + DMatrix::identity(d, d) * (g / 2.0);
                    Ok((q.cov.matrix() - lin).norm())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(slope_summary(axis, gammas, vec![rem]))
        }
        ScanAxis::N => {
            let ns: Vec<u64> = (0..4).map(|k| params.n << k).collect();
            let x: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
            let c_root = c.sqrt().matrix().clone();
            let p = GaussianModel::centered(c.clone());
            let reps = (0..replicates.max(1))
                .map(|r| {
                    ns.iter()
                        .map(|&n| {
                            let model = expected_pipeline_error(spectrum, &PipelineParams { n, ..*params }, TauNSign::Minus)?;
                            let base = model.term0 + model.term_n;
                            let vals: Vec<f64> = (0..draws)
                                .into_par_iter()
                                .map(|k| {
                                    let mut rng = stream(seed, &format!("n-scan/{r}/{n}/{k}"));
                                    let emp = EmpiricalGaussian::draw(&c_root, n, &mut rng);
                                    let inv = (&emp.cov + DMatrix::identity(d, d) * s2).try_inverse().expect("invertible");
                                    let score = LinearScore::new(inv.clone(), &inv * &emp.mean)?;
                                    let q = ula_stationary(&score, params.gamma)?;
                                    w2_sq_gauss(&p, &q.gaussian())
                                })
                                .collect::<Result<_>>()?;
                            Ok((mean_se(&vals).0 - base).abs())
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            Ok(slope_summary(axis, x, reps))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_theory::sgd_full_moments;
    use rand::Rng;

    fn params(sigma: f64, tau: f64, gamma: f64, n: u64) -> PipelineParams {
        PipelineParams { sigma, tau, gamma, n }
    }

    #[test]
    fn zeroth_order_limits() {
        let spec = [1.0, 0.5];
        let b = expected_pipeline_error(&spec, &params(0.8, 1e-12, 0.01, u64::MAX / 2), TauNSign::Minus).unwrap();
        assert!((b.total - b.term0).abs() < 1e-9);
        let k = kernels_thm3(1.3, 1.3, true, 1e-9, 1e-12).unwrap();
        assert!(k.h0_i < 1e-12);
        assert!((b.total - (b.term0 + b.term_tau + b.term_tau_n + b.term_n)).abs() <= 1e-12 * b.total.abs());
    }

    #[test]
    fn diagonal_n_kernel_contains_lambda() {
        let k = kernels_thm3(0.7, 0.7, true, 0.5, 0.05).unwrap();
        assert!(k.k_n >= 0.7);
    }

    #[test]
    fn pipeline_equals_theorem2_on_sgd_law() {
        let mut rng = crate::rng::stream(1, "pipe-consistency");
        for _ in 0..20 {
            let d = 1 + (rng.random::<u32>() % 4) as usize;
            let spec: Vec<f64> = (0..d).map(|_| 0.1 + 2.0 * rng.random::<f64>()).collect();
            let sigma = 0.2 + rng.random::<f64>();
            let lmax = spec.iter().cloned().fold(0.0, f64::max);
            let lmin = spec.iter().cloned().fold(f64::INFINITY, f64::min);
            let tau = 0.5 * sgd_tau_bound(lmax, sigma) * rng.random::<f64>();
            let gamma = 0.9 * (lmin + sigma * sigma) * rng.random::<f64>();
            let n = 2 + rng.random::<u64>() % 5000;
            for sign in [TauNSign::Plus, TauNSign::Minus] {
                let p = params(sigma, tau, gamma, n);
                let b = expected_pipeline_error(&spec, &p, sign).unwrap();
                let law = perturbation_law_from_sgd(&spec, sigma, tau, SampleSize::Finite(n), sign).unwrap();
                let t2 = expected_w2_perturbed(&spec, sigma, gamma, &law, 1.0, Flavor::Wasserstein).unwrap();
                assert!((b.total - t2).abs() <= 1e-10 * t2.abs().max(1.0), "{} vs {t2}", b.total);
            }
        }
    }

    #[test]
    fn law_matches_moment_projections() {
        let spec = [1.0, 3.0];
        let c = SpdMatrix::diagonal(&spec).unwrap();
        let m = sgd_full_moments(&c, 1.0, 0.01, SampleSize::Finite(100), TauNSign::Minus).unwrap();
        let law = perturbation_law_from_sgd(&spec, 1.0, 0.01, SampleSize::Finite(100), TauNSign::Minus).unwrap();
        let proj = perturbation_law_from_theta(&m.cov_a, &m.cov_b);
        assert!((proj.m2 - &law.m2).amax() < 1e-15);
        assert!((proj.m2x - &law.m2x).amax() < 1e-15);
        assert!((proj.cov_delta - &law.cov_delta).amax() < 1e-15);
        let l = perturbation_law_from_sgd(&[1.0], 1.0, 0.01, SampleSize::Finite(100), TauNSign::Plus).unwrap();
        assert!((l.m2[(0, 0)] - (0.0025 + 0.000025 + 0.02 / 16.0)).abs() < 1e-15);
        let l0 = perturbation_law_from_sgd(&spec, 1.0, 0.0, SampleSize::Finite(100), TauNSign::Plus).unwrap();
        assert_eq!(l0.m2x[(0, 1)], l0.m2[(0, 1)]);
    }

    #[test]
    fn invariances() {
        let spec = [1.0, 0.5, 0.25];
        let p = params(0.6, 1e-3, 1e-2, 1000);
        let a = expected_pipeline_error(&spec, &p, TauNSign::Minus).unwrap();
        let b = expected_pipeline_error(&[0.25, 1.0, 0.5], &p, TauNSign::Minus).unwrap();
        assert!((a.total - b.total).abs() <= 1e-12 * a.total);
        let mut rng = crate::rng::stream(2, "finite");
        for _ in 0..1000 {
            let d = 1 + (rng.random::<u32>() % 4) as usize;
            let spec: Vec<f64> = (0..d).map(|_| 0.01 + 5.0 * rng.random::<f64>()).collect();
            let sigma = 0.05 + 3.0 * rng.random::<f64>();
            let lmax = spec.iter().cloned().fold(0.0, f64::max);
            let lmin = spec.iter().cloned().fold(f64::INFINITY, f64::min);
            let p = params(
                sigma,
                0.99 * sgd_tau_bound(lmax, sigma) * rng.random::<f64>() + 1e-12,
                0.99 * (lmin + sigma * sigma) * rng.random::<f64>() + 1e-12,
                2 + rng.random::<u64>() % 100_000,
            );
            let b = expected_pipeline_error(&spec, &p, TauNSign::Minus).unwrap();
            assert!(b.total.is_finite() && b.term0 >= 0.0);
        }
    }

    #[test]
    fn validation_names_bounds() {
        let v = params(1.0, 1.5, 0.1, 100).violations(&[1.0]);
        assert!(v[0].contains("2/max(max_k λ_k + σ², 1)"));
        let v = params(1.0, 1.5, 5.0, 1).violations(&[1.0]);
        assert_eq!(v.len(), 3);
        let v = params(-1.0, 1.5, 5.0, 1).violations(&[1.0]);
        assert_eq!(v.len(), 1);
        let v = params(1.0, 1.5, 5.0, 10).violations(&[1.0]);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn sigma_scan_has_interior_minimum() {
        let spec = [1.0, 0.5, 0.25];
        let grid = crate::gaussian_metrics::log_grid(0.05, 5.0, 40);
        let scan = sigma_tradeoff_scan(&spec, 1e-3, 1e-2, 1000, &grid, TauNSign::Minus).unwrap();
        assert!(scan.interior);
        let k = scan.grid_argmin;
        let t = |i: usize| scan.rows[i].breakdown.unwrap().total;
        assert!(scan.total_star <= t(k - 1) && scan.total_star <= t(k + 1));
        let rows: Vec<ErrorBreakdown> = scan.rows.iter().map(|r| r.breakdown.unwrap()).collect();
        assert!(rows.windows(2).all(|w| w[1].term0 >= w[0].term0));
        let left = &rows[..=k];
        assert!(left.windows(2).all(|w| w[1].term_tau < w[0].term_tau));
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let (x, fx) = golden_section(|x| (x - 1.3).powi(2) + 2.0, 0.5, 2.0, 1e-8);
        assert!((x - 1.3).abs() < 1e-6 && (fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tau_and_gamma_scans_are_superlinear() {
        let spec = [1.0, 0.5];
        let p = params(0.7, 0.02, 0.05, 200);
        let r = convergence_study(&spec, &p, ScanAxis::Tau, 1, 0, 1).unwrap();
        assert!(r.slope > 1.0, "{r:?}");
        let r = convergence_study(&spec, &p, ScanAxis::Gamma, 1, 0, 1).unwrap();
        assert!(r.slope > 1.5, "{r:?}");
    }

    #[test]
    fn eps_scan_has_high_order_residual() {
        let spec = [1.0, 0.5];
        let p = params(0.7, 0.02, 0.05, 200);
        let r = convergence_study(&spec, &p, ScanAxis::Eps, 2, 500, 3).unwrap();
        assert!(r.slope >= 2.5, "{r:?}");
    }

    #[test]
    fn nested_mc_smoke() {
        let c = SpdMatrix::diagonal(&[1.0, 0.5]).unwrap();
        let p = params(0.7, 0.01, 0.05, 100);
        let r = pipeline_nested_mc(&c, &p, 40, 5, UlaMode::Exact, TauNSign::Minus).unwrap();
        assert!(r.mc_mean.is_finite() && r.mc_se > 0.0);
        let r = pipeline_nested_mc(&c, &p, 4, 5, UlaMode::Chain { n_steps: 20_000 }, TauNSign::Minus).unwrap();
        assert!(r.mc_mean.is_finite());
    }
}
