//! ULA with a linear score: simulator, exact stationary law, perturbation
//! expansion around the optimal score and the second-order error kernels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_metrics::{l2_gauss_distance, w2_sq_gauss, GaussianModel};
use crate::matrixkit::{lyap_inverse_dense, lyap_inverse_spd, psd_sqrt, symmetrize, SpdMatrix};
use crate::rng::{normal, normal_vector, stream};
use crate::score_theory::LinearScore;
use crate::sgd_sim::ChainConfig;
use crate::stats::{mean_se, BatchMeans, BatchStat, MomentEstimate};

const DIVERGENCE_NORM: f64 = 1e6;

/// Which distance the error kernels measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Wasserstein,
    L2,
}

/// Stationary law `N(A⁻¹b, (L^γ_A)⁻¹[2I])` of ULA.
#[derive(Debug, Clone, PartialEq)]
pub struct UlaStationary {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

impl UlaStationary {
    pub fn gaussian(&self) -> GaussianModel {
        GaussianModel { mean: self.mean.clone(), cov: self.cov.clone() }
    }
}

/// Checks `Re μ > 0` and `|1 - γμ| < 1` for every eigenvalue `μ` of `A`.
pub fn check_ula_stability(a: &DMatrix<f64>, gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::StabilityViolation(format!("gamma must be positive, got {gamma}")));
    }
    for mu in a.complex_eigenvalues().iter() {
        if !(mu.re > 0.0) {
            return Err(Error::StabilityViolation(format!("eigenvalue {mu} of A has nonpositive real part")));
        }
        let limit = 2.0 * mu.re / mu.norm_sqr();
        if gamma >= limit {
            return Err(Error::StabilityViolation(format!(
                "gamma = {gamma} >= {limit} (from eigenvalue {mu} of A)"
            )));
        }
    }
    Ok(())
}

pub fn ula_stationary(score: &LinearScore, gamma: f64) -> Result<UlaStationary> {
    check_ula_stability(&score.a, gamma)?;
    let d = score.dim();
    let mean = score
        .a
        .clone()
        .lu()
        .solve(&score.b)
        .ok_or_else(|| Error::SingularSystem("A is singular".into()))?;
    let cov = lyap_inverse_dense(&score.a, gamma, &(DMatrix::identity(d, d) * 2.0))?;
    Ok(UlaStationary { mean, cov: SpdMatrix::new(symmetrize(&cov))? })
}

/// `⌈10 / (γ · min Re eig(A))⌉`.
pub fn default_ula_burn_in(a: &DMatrix<f64>, gamma: f64) -> u64 {
    let re = a.complex_eigenvalues().iter().map(|m| m.re).fold(f64::INFINITY, f64::min);
    (10.0 / (gamma * re)).ceil() as u64
}

/// Runs `y ← y - γ(Ay - b) + √(2γ)w` from `y = 0`.
pub fn run_ula_core<R: Rng + ?Sized>(
    score: &LinearScore,
    gamma: f64,
    burn_in: u64,
    n_steps: u64,
    thinning: u64,
    rng: &mut R,
    mut sink: impl FnMut(&DVector<f64>),
) -> Result<DVector<f64>> {
    let d = score.dim();
    let a = score.a.as_slice();
    let b = score.b.as_slice();
    let noise = (2.0 * gamma).sqrt();
    let mut y = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut out = DVector::zeros(d);
    for k in 0..burn_in + n_steps {
        for i in 0..d {
            let mut drift = b[i];
            for j in 0..d {
                drift -= a[i + j * d] * y[j];
            }
            next[i] = y[i] + gamma * drift + noise * normal(rng);
        }
        std::mem::swap(&mut y, &mut next);
        if k % 4096 == 0 && !(y.iter().map(|v| v * v).sum::<f64>().sqrt() <= DIVERGENCE_NORM) {
            return Err(Error::StabilityViolation(format!("ULA diverged after {k} steps")));
        }
        if k >= burn_in && (k - burn_in + 1).is_multiple_of(thinning) {
            out.copy_from_slice(&y);
            sink(&out);
        }
    }
    Ok(DVector::from_vec(y))
}

pub fn run_ula_chain(score: &LinearScore, gamma: f64, cfg: &ChainConfig) -> Result<MomentEstimate> {
    check_ula_stability(&score.a, gamma)?;
    cfg.validate()?;
    let d = score.dim();
    let burn_in = cfg.burn_in.unwrap_or_else(|| default_ula_burn_in(&score.a, gamma));
    let per_replica: Vec<Result<Vec<BatchStat>>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, &format!("ula/replica/{r}"));
            let mut bm = BatchMeans::new(d, cfg.kept_samples());
            run_ula_core(score, gamma, burn_in, cfg.n_steps, cfg.thinning, &mut rng, |y| bm.push(y))?;
            Ok(bm.into_batches())
        })
        .collect();
    let mut batches = Vec::new();
    for r in per_replica {
        batches.extend(r?);
    }
    Ok(MomentEstimate::from_batches(&batches))
}

/// `A* = C_σ⁻¹` as an SPD matrix in the data eigenbasis.
fn optimal_a(c: &SpdMatrix, sigma: f64) -> SpdMatrix {
    let vals: Vec<f64> = c.eigvals().iter().map(|l| 1.0 / (l + sigma * sigma)).collect();
    SpdMatrix::from_eigen(&vals, c.eigvecs()).expect("positive")
}

/// Stationary covariance of ULA with score matrix `A* + εΔ` expanded to
/// second order: returns `(Σ₀, Σ₁(Δ), Σ₂(Δ))`.
pub fn sigma_expansion(
    c: &SpdMatrix,
    sigma: f64,
    gamma: f64,
    delta: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let d = c.dim();
    if delta.nrows() != d || delta.ncols() != d {
        return Err(Error::DimensionMismatch("Delta must be d×d".into()));
    }
    let a = optimal_a(c, sigma);
    let id = DMatrix::<f64>::identity(d, d);
    let damp = &id - a.matrix() * gamma;
    let first = |z: &DMatrix<f64>| delta * z * damp.transpose() + &damp * z * delta.transpose();
    let s0 = lyap_inverse_spd(&a, gamma, &(&id * 2.0))?;
    let s1 = -lyap_inverse_spd(&a, gamma, &first(&s0))?;
    let rhs2 = first(&s1) - delta * &s0 * delta.transpose() * gamma;
    let s2 = -lyap_inverse_spd(&a, gamma, &rhs2)?;
    Ok((s0, s1, s2))
}

fn check_pair(lsi: f64, lsj: f64, gamma: f64) -> Result<()> {
    if !(lsi - gamma / 2.0 > 0.0) || !(lsj - gamma / 2.0 > 0.0) || !(lsi + lsj - gamma > 0.0) {
        return Err(Error::DomainError(format!(
            "kernel domain requires λ^σ > γ/2 and λ^σ_i + λ^σ_j > γ (λ^σ = {lsi}, {lsj}; γ = {gamma})"
        )));
    }
    Ok(())
}

fn check_lambda(l: f64) -> Result<()> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::DomainError(format!("eigenvalue must be positive, got {l}")));
    }
    Ok(())
}

/// Eigenvalue of `Σ₀`: `(λ^σ)² / (λ^σ - γ/2)`.
fn p_of(ls: f64, gamma: f64) -> f64 {
    ls * ls / (ls - gamma / 2.0)
}

fn q_of(ls: f64, gamma: f64) -> f64 {
    ls * (ls - gamma) / (ls - gamma / 2.0)
}

fn r_of(ls: f64, gamma: f64) -> f64 {
    (ls - gamma) / ls
}

fn g_of(lsi: f64, lsj: f64, gamma: f64) -> f64 {
    lsi * lsj / (lsi + lsj - gamma)
}

/// Shared second-order coefficient of `(Σ₂)_ii` for one `(i, j)` pair:
/// returns the `U_ij²` and `U_ij U_ji` parts.
fn sigma2_parts(lsi: f64, lsj: f64, gamma: f64) -> (f64, f64) {
    let gii = g_of(lsi, lsi, gamma);
    let gij = g_of(lsi, lsj, gamma);
    let two_r = 2.0 * r_of(lsi, gamma) * gij;
    let sq = gii * (two_r * q_of(lsj, gamma) + gamma * p_of(lsj, gamma));
    let cross = gii * two_r * q_of(lsi, gamma);
    (sq, cross)
}

/// Zeroth-order Bures term `(√λ - λ^σ/√(λ^σ - γ/2))²`.
pub fn kernel_psi(lam: f64, ls: f64, gamma: f64) -> Result<f64> {
    check_lambda(lam)?;
    check_pair(ls, ls, gamma)?;
    Ok((lam.sqrt() - ls / (ls - gamma / 2.0).sqrt()).powi(2))
}

fn w2_parts(li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<(f64, f64)> {
    check_lambda(li)?;
    check_lambda(lj)?;
    check_pair(lsi, lsj, gamma)?;
    check_pair(lsi, lsi, gamma)?;
    check_pair(lsj, lsj, gamma)?;
    let ri = (li * p_of(lsi, gamma)).sqrt();
    let rj = (lj * p_of(lsj, gamma)).sqrt();
    let m = (li * lj).sqrt() * g_of(lsi, lsj, gamma) / (ri + rj);
    let w = m * m * (1.0 / ri + 1.0 / rj);
    let hat_g = 1.0 - li / ri;
    let (sq, cross) = sigma2_parts(lsi, lsj, gamma);
    let (qi, qj) = (q_of(lsi, gamma), q_of(lsj, gamma));
    Ok((w * qj * qj + hat_g * sq, w * qi * qj + hat_g * cross))
}

/// Coefficient of `E⟨Δ, u_iu_jᵀ⟩²` in the Wasserstein error.
pub fn kernel_alpha(li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<f64> {
    Ok(w2_parts(li, lj, lsi, lsj, gamma)?.0)
}

/// Coefficient of `E⟨Δ, u_iu_jᵀ⟩⟨Δ, u_ju_iᵀ⟩` in the Wasserstein error.
pub fn kernel_beta(li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<f64> {
    Ok(w2_parts(li, lj, lsi, lsj, gamma)?.1)
}

/// Zeroth-order Frobenius term `(λ - (λ^σ)²/(λ^σ - γ/2))²`.
pub fn kernel_psi_l2(lam: f64, ls: f64, gamma: f64) -> Result<f64> {
    check_lambda(lam)?;
    check_pair(ls, ls, gamma)?;
    Ok((lam - p_of(ls, gamma)).powi(2))
}

fn l2_parts(li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<(f64, f64)> {
    check_lambda(li)?;
    check_lambda(lj)?;
    check_pair(lsi, lsj, gamma)?;
    check_pair(lsi, lsi, gamma)?;
    check_pair(lsj, lsj, gamma)?;
    let gij = g_of(lsi, lsj, gamma);
    let gap = li - p_of(lsi, gamma);
    let (sq, cross) = sigma2_parts(lsi, lsj, gamma);
    let (qi, qj) = (q_of(lsi, gamma), q_of(lsj, gamma));
    Ok((2.0 * gij * gij * qj * qj - 2.0 * gap * sq, 2.0 * gij * gij * qi * qj - 2.0 * gap * cross))
}

pub fn kernel_alpha_l2(li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<f64> {
    Ok(l2_parts(li, lj, lsi, lsj, gamma)?.0)
}

pub fn kernel_beta_l2(li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<f64> {
    Ok(l2_parts(li, lj, lsi, lsj, gamma)?.1)
}

/// `(ψ, α, β)` for the chosen flavor.
pub fn kernels(flavor: Flavor, li: f64, lj: f64, lsi: f64, lsj: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    match flavor {
        Flavor::Wasserstein => {
            let (a, b) = w2_parts(li, lj, lsi, lsj, gamma)?;
            Ok((kernel_psi(li, lsi, gamma)?, a, b))
        }
        Flavor::L2 => {
            let (a, b) = l2_parts(li, lj, lsi, lsj, gamma)?;
            Ok((kernel_psi_l2(li, lsi, gamma)?, a, b))
        }
    }
}

/// Second moments of a random score perturbation `(δ, Δ)`, expressed in the
/// data eigenbasis `u_1, …, u_d` (same order as the spectrum):
/// `cov_delta[i][j] = E⟨δ,u_i⟩⟨δ,u_j⟩`, `m2[i][j] = E⟨Δ,u_iu_jᵀ⟩²`,
/// `m2x[i][j] = E⟨Δ,u_iu_jᵀ⟩⟨Δ,u_ju_iᵀ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationLaw {
    pub cov_delta: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub m2x: DMatrix<f64>,
}

impl PerturbationLaw {
    pub fn zero(d: usize) -> Self {
        Self { cov_delta: DMatrix::zeros(d, d), m2: DMatrix::zeros(d, d), m2x: DMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.m2.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for m in [&self.cov_delta, &self.m2x] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch("perturbation law blocks must be d×d".into()));
            }
        }
        let tol = 1e-12 * (1.0 + self.m2.amax());
        for i in 0..d {
            for j in 0..d {
                if self.m2[(i, j)] < -tol {
                    return Err(Error::DomainError("m2 must be nonnegative".into()));
                }
                if (self.m2x[(i, j)] - self.m2x[(j, i)]).abs() > tol {
                    return Err(Error::DomainError("m2x must be symmetric".into()));
                }
                if self.m2x[(i, j)].abs() > (self.m2[(i, j)] * self.m2[(j, i)]).max(0.0).sqrt() + tol {
                    return Err(Error::DomainError("m2x violates Cauchy-Schwarz".into()));
                }
            }
        }
        if crate::matrixkit::sorted_eigen(&symmetrize(&self.cov_delta)).0.min() < -tol {
            return Err(Error::DomainError("cov_delta must be PSD".into()));
        }
        Ok(())
    }

    /// Draws `(δ, Δ)` in the original basis given by the columns of `basis`.
    /// Entries of `UᵀΔU` are Gaussian, independent across unordered pairs
    /// `{i, j}` except for the coupling of `(i, j)` and `(j, i)`.
    pub fn sample<R: Rng + ?Sized>(&self, basis: &DMatrix<f64>, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let delta_eig = psd_sqrt(&self.cov_delta) * normal_vector(rng, d);
        let mut u = DMatrix::zeros(d, d);
        for i in 0..d {
            u[(i, i)] = self.m2[(i, i)].max(0.0).sqrt() * normal(rng);
            for j in (i + 1)..d {
                let cov = DMatrix::from_row_slice(
                    2,
                    2,
                    &[self.m2[(i, j)], self.m2x[(i, j)], self.m2x[(i, j)], self.m2[(j, i)]],
                );
                let z = psd_sqrt(&cov) * normal_vector(rng, 2);
                u[(i, j)] = z[0];
                u[(j, i)] = z[1];
            }
        }
        (basis * delta_eig, basis * u * basis.transpose())
    }

    /// Second moments of draws given in eigen coordinates.
    pub fn empirical(draws: &[(DVector<f64>, DMatrix<f64>)]) -> Self {
        let d = draws[0].0.len();
        let n = draws.len() as f64;
        let mut law = Self::zero(d);
        for (de, ue) in draws {
            law.cov_delta += de * de.transpose();
            law.m2 += ue.component_mul(ue);
            law.m2x += ue.component_mul(&ue.transpose());
        }
        law.cov_delta /= n;
        law.m2 /= n;
        law.m2x /= n;
        law
    }
}

/// Per-ε² coefficient of the mean error, `Σ_i (λ^σ_i)² ⟨Cov(δ), u_iu_iᵀ⟩`.
pub fn mean_term(c: &SpdMatrix, sigma: f64, cov_delta: &DMatrix<f64>) -> f64 {
    let u = c.eigvecs();
    c.eigvals()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let ui = u.column(i);
            (l + sigma * sigma).powi(2) * (ui.transpose() * cov_delta * ui)[(0, 0)]
        })
        .sum()
}

fn check_spectrum_domain(spectrum: &[f64], sigma: f64, gamma: f64) -> Result<()> {
    if spectrum.is_empty() {
        return Err(Error::DomainError("spectrum must be nonempty".into()));
    }
    for &l in spectrum {
        check_lambda(l)?;
    }
    let min_ls = spectrum.iter().map(|l| l + sigma * sigma).fold(f64::INFINITY, f64::min);
    if !(gamma > 0.0) || gamma >= min_ls {
        return Err(Error::DomainError(format!(
            "gamma = {gamma} must lie in (0, min_k(λ_k + σ²) = {min_ls})"
        )));
    }
    Ok(())
}

/// Second-order model of `E[W2²(p_data, q^γ_ε)]` (or its Frobenius
/// analogue) for the score `A* + εΔ`, `b = εδ`.
pub fn expected_w2_perturbed(
    spectrum: &[f64],
    sigma: f64,
    gamma: f64,
    law: &PerturbationLaw,
    eps: f64,
    flavor: Flavor,
) -> Result<f64> {
    check_spectrum_domain(spectrum, sigma, gamma)?;
    let d = spectrum.len();
    if law.dim() != d {
        return Err(Error::DimensionMismatch("law dimension differs from the spectrum".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::DomainError("eps must be nonnegative".into()));
    }
    let ls: Vec<f64> = spectrum.iter().map(|l| l + sigma * sigma).collect();
    let mut zeroth = 0.0;
    let mut second = 0.0;
    for i in 0..d {
        second += ls[i] * ls[i] * law.cov_delta[(i, i)];
        for j in 0..d {
            let (psi, a, b) = kernels(flavor, spectrum[i], spectrum[j], ls[i], ls[j], gamma)?;
            if i == j {
                zeroth += psi;
            }
            second += a * law.m2[(i, j)] + b * law.m2x[(i, j)];
        }
    }
    Ok(zeroth + eps * eps * second)
}

/// Exact distance between `p_data` and the ULA law of `(A* + εΔ, εδ)`.
pub fn perturbed_distance(
    c: &SpdMatrix,
    a_star: &DMatrix<f64>,
    gamma: f64,
    delta: &DVector<f64>,
    big_delta: &DMatrix<f64>,
    eps: f64,
    flavor: Flavor,
) -> Result<f64> {
    let score = LinearScore::new(a_star + big_delta * eps, delta * eps)?;
    let q = ula_stationary(&score, gamma)?.gaussian();
    let p = GaussianModel::centered(c.clone());
    match flavor {
        Flavor::Wasserstein => w2_sq_gauss(&p, &q),
        Flavor::L2 => l2_gauss_distance(&p, &q),
    }
}

/// Monte Carlo check of the second-order model at one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationMcPoint {
    pub eps: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    /// Model evaluated with the law that generated the draws.
    pub model_true_law: f64,
    /// Model evaluated with the empirical second moments of the draws.
    pub model_empirical_law: f64,
}

impl PerturbationMcPoint {
    /// `|MC - model(empirical law)|`, deterministic given the draws and `O(ε⁴)`.
    pub fn residual(&self) -> f64 {
        (self.mc_mean - self.model_empirical_law).abs()
    }
}

/// Nested Monte Carlo over antithetic pairs `±(δ, Δ)` with the same draws at
/// every ε.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_mc(
    c: &SpdMatrix,
    sigma: f64,
    gamma: f64,
    law: &PerturbationLaw,
    eps_list: &[f64],
    n_pairs: usize,
    flavor: Flavor,
    seed: u64,
) -> Result<Vec<PerturbationMcPoint>> {
    law.validate()?;
    let spectrum: Vec<f64> = c.eigvals().iter().cloned().collect();
    let u = c.eigvecs().clone();
    let a_star = optimal_a(c, sigma).matrix().clone();
    let mut rng = stream(seed, "perturbation-mc/draws");
    let draws: Vec<(DVector<f64>, DMatrix<f64>)> = (0..n_pairs).map(|_| law.sample(&u, &mut rng)).collect();
    let eig_draws: Vec<(DVector<f64>, DMatrix<f64>)> =
        draws.iter().map(|(d, m)| (u.transpose() * d, u.transpose() * m * &u)).collect();
    let emp = PerturbationLaw::empirical(&eig_draws);
    let mut out = Vec::new();
    for &eps in eps_list {
        let vals: Vec<f64> = draws
            .par_iter()
            .map(|(d, m)| {
                let plus = perturbed_distance(c, &a_star, gamma, d, m, eps, flavor)?;
                let minus = perturbed_distance(c, &a_star, gamma, &-d, &-m, eps, flavor)?;
                Ok(0.5 * (plus + minus))
            })
            .collect::<Result<_>>()?;
        let (mc_mean, mc_se) = mean_se(&vals);
        out.push(PerturbationMcPoint {
            eps,
            mc_mean,
            mc_se,
            model_true_law: expected_w2_perturbed(&spectrum, sigma, gamma, law, eps, flavor)?,
            model_empirical_law: expected_w2_perturbed(&spectrum, sigma, gamma, &emp, eps, flavor)?,
        });
    }
    Ok(out)
}

/// Second-order coefficient of the exact distance for a fixed `Δ` (with
/// `δ = 0`), assembled from the matrix-level expansion.
pub fn second_order_matrix_level(c: &SpdMatrix, sigma: f64, gamma: f64, delta: &DMatrix<f64>, flavor: Flavor) -> Result<f64> {
    let (s0, s1, s2) = sigma_expansion(c, sigma, gamma, delta)?;
    match flavor {
        Flavor::Wasserstein => {
            let h0 = SpdMatrix::new(s0)?;
            Ok(crate::gaussian_metrics::bures_taylor2(c, &h0, &s1, &s2)?.2)
        }
        Flavor::L2 => {
            let gap = c.matrix() - s0;
            Ok(s1.norm_squared() - 2.0 * gap.dot(&s2))
        }
    }
}
