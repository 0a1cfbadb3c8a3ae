//! Optimal linear score, gradient-noise matrices and the stationary moments
//! of constant-step SGD on the denoising score-matching loss.
//!
//! Parameter layout: output `i` of the score `v(x) = -Ax + b` is
//! `-⟨row_i(A), x⟩ + b_i`, so its parameter block is `θ_i = (-row_i(A), b_i)`
//! of length `d+1`. Matrix covariances are reported for `vec(A)` in
//! column-major order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixkit::{commutation_matrix, kron, lyap_inverse_spd, symmetrize, vec, SpdMatrix};
use crate::rng::{normal_vector, stream};

/// Affine score `v(x) = -Ax + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearScore {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite score parameter".into()));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.a * x) + &self.b
    }
}

/// Sign applied to the `τ/N` covariance term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TauNSign {
    Plus,
    #[default]
    Minus,
}

impl TauNSign {
    pub fn value(self) -> f64 {
        match self {
            TauNSign::Plus => 1.0,
            TauNSign::Minus => -1.0,
        }
    }
}

/// Dataset size; `Infinite` means training on the population law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSize {
    Finite(u64),
    Infinite,
}

impl SampleSize {
    pub fn inverse(self) -> f64 {
        match self {
            SampleSize::Finite(n) => 1.0 / n as f64,
            SampleSize::Infinite => 0.0,
        }
    }

    pub fn check(self) -> Result<()> {
        match self {
            SampleSize::Finite(n) if n < 2 => Err(Error::InvalidN(n)),
            _ => Ok(()),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DomainError(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// `C_σ = C + σ²I`.
pub fn c_sigma(c: &SpdMatrix, sigma: f64) -> SpdMatrix {
    c.shifted(sigma * sigma).expect("shift of SPD by a nonnegative amount is SPD")
}

/// Stepsize bound `2/max(max_k λ_k + σ², 1)`.
pub fn sgd_tau_bound(lambda_max: f64, sigma: f64) -> f64 {
    2.0 / (lambda_max + sigma * sigma).max(1.0)
}

fn check_tau(c: &SpdMatrix, sigma: f64, tau: f64) -> Result<()> {
    let bound = sgd_tau_bound(c.max_eig(), sigma);
    if !(tau > 0.0) || tau >= bound {
        return Err(Error::StabilityViolation(format!(
            "tau = {tau} must lie in (0, 2/max(max_k λ_k + σ², 1) = {bound})"
        )));
    }
    Ok(())
}

pub fn optimal_score(c: &SpdMatrix, sigma: f64) -> Result<LinearScore> {
    if !(sigma >= 0.0) {
        return Err(Error::DomainError(format!("sigma must be nonnegative, got {sigma}")));
    }
    let a = c_sigma(c, sigma).inverse();
    LinearScore::new(a, DVector::zeros(c.dim()))
}

/// Tweedie denoiser `x + σ²v(x)` built from the optimal score.
pub fn mmse_denoiser_identity(c: &SpdMatrix, sigma: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let s = optimal_score(c, sigma)?;
    Ok(x + s.apply(x) * (sigma * sigma))
}

/// Second moment of `z = (x + σw, 1)` for `x ~ N(μ, C)`.
pub fn cz_matrix(c: &DMatrix<f64>, sigma: f64, mu: &DVector<f64>) -> DMatrix<f64> {
    let d = c.nrows();
    let mut cz = DMatrix::zeros(d + 1, d + 1);
    let top = c + DMatrix::identity(d, d) * (sigma * sigma) + mu * mu.transpose();
    cz.view_mut((0, 0), (d, d)).copy_from(&top);
    for k in 0..d {
        cz[(k, d)] = mu[k];
        cz[(d, k)] = mu[k];
    }
    cz[(d, d)] = 1.0;
    cz
}

/// Residual covariance `(1/σ²) C_σ⁻¹ C` for a PSD data covariance.
pub fn residual_covariance(c: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let d = c.nrows();
    let cs = c + DMatrix::identity(d, d) * (sigma * sigma);
    let inv = cs.try_inverse().expect("C + σ²I is invertible");
    symmetrize(&(inv * c)) / (sigma * sigma)
}

fn check_index(d: usize, i: usize, j: usize) -> Result<()> {
    if i >= d || j >= d {
        return Err(Error::InvalidArgument(format!("indices ({i},{j}) out of range for d={d}")));
    }
    Ok(())
}

/// Gradient-noise covariance at the optimum, `(1/σ²)(C_σ⁻¹C)_{ij}·C_z`
/// (zero-based `i`, `j`).
pub fn noise_matrix_sigma_eps(
    c: &SpdMatrix,
    sigma: f64,
    mu: &DVector<f64>,
    i: usize,
    j: usize,
) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    check_index(c.dim(), i, j)?;
    let s = residual_covariance(c.matrix(), sigma);
    Ok(cz_matrix(c.matrix(), sigma, mu) * s[(i, j)])
}

/// `E[z zᵀ S z zᵀ]` for Gaussian `z` with second moment `C` and mean `r`.
pub fn isserlis_quartic(c: &DMatrix<f64>, r: &DVector<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let rr = r * r.transpose();
    c * s * c + c * s.transpose() * c + c * c.dot(s) - rr.clone() * (2.0 * rr.dot(s))
}

/// Optimal block parameters `θ*_k = C_z⁻¹ν_k` and `ν_k = E[y_k z]`.
fn optimum_blocks(c: &SpdMatrix, sigma: f64, mu: &DVector<f64>) -> (DMatrix<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let d = c.dim();
    let cz = cz_matrix(c.matrix(), sigma, mu);
    let czi = cz.clone().try_inverse().expect("C_z is invertible for sigma > 0");
    let nus: Vec<DVector<f64>> = (0..d)
        .map(|k| {
            let mut v = DVector::zeros(d + 1);
            v[k] = -1.0;
            v
        })
        .collect();
    let thetas = nus.iter().map(|n| &czi * n).collect();
    (cz, nus, thetas)
}

/// The same noise matrix assembled from the four expectation terms of
/// `E[(zᵀθ*_i - y_i)(zᵀθ*_j - y_j) z zᵀ]`, each evaluated by Isserlis.
pub fn noise_matrix_four_term(
    c: &SpdMatrix,
    sigma: f64,
    mu: &DVector<f64>,
    i: usize,
    j: usize,
) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    check_index(c.dim(), i, j)?;
    let d = c.dim();
    let (cz, nus, thetas) = optimum_blocks(c, sigma, mu);
    let czi = cz.clone().try_inverse().expect("invertible");
    let mut r = DVector::zeros(d + 1);
    r.rows_mut(0, d).copy_from(mu);
    r[d] = 1.0;
    let (ni, nj) = (&nus[i], &nus[j]);
    let cross = ni * nj.transpose() + nj * ni.transpose();
    let delta = if i == j { 1.0 / (sigma * sigma) } else { 0.0 };
    let yy = &cz * delta + &cross;
    let zz = isserlis_quartic(&cz, &r, &(&thetas[i] * thetas[j].transpose()));
    let yz_i = &cz * czi.dot(&(ni * nj.transpose())) + &cross;
    let yz_j = &cz * czi.dot(&(nj * ni.transpose())) + &cross;
    Ok(yy + zz - yz_i - yz_j)
}

/// Monte Carlo estimate (mean, standard error) of the gradient-noise outer
/// product `ε_i ε_jᵀ` at the optimum.
pub fn isserlis_sigma_eps_oracle(
    c: &SpdMatrix,
    sigma: f64,
    mu: &DVector<f64>,
    i: usize,
    j: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_sigma(sigma)?;
    check_index(c.dim(), i, j)?;
    if n_samples < 1000 {
        return Err(Error::InvalidArgument("n_samples must be at least 1000".into()));
    }
    let d = c.dim();
    let (_, _, thetas) = optimum_blocks(c, sigma, mu);
    let root = c.sqrt();
    let mut rng = stream(seed, "isserlis-sigma-eps");
    let p = d + 1;
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut sum2 = DMatrix::<f64>::zeros(p, p);
    let mut z = DVector::zeros(p);
    z[d] = 1.0;
    for _ in 0..n_samples {
        let x = mu + root.matrix() * normal_vector(&mut rng, d);
        let w = normal_vector(&mut rng, d);
        z.rows_mut(0, d).copy_from(&(&x + &w * sigma));
        let ri = z.dot(&thetas[i]) + w[i] / sigma;
        let rj = z.dot(&thetas[j]) + w[j] / sigma;
        let outer = &z * z.transpose() * (ri * rj);
        sum2 += outer.component_mul(&outer);
        sum += outer;
    }
    let n = n_samples as f64;
    let mean = &sum / n;
    let var = (&sum2 / n - mean.component_mul(&mean)) * (n / (n - 1.0));
    let se = var.map(|v| (v.max(0.0) / n).sqrt());
    Ok((mean, se))
}

/// Monte Carlo estimate (mean, standard error) of `E[z zᵀ S z zᵀ]` for
/// `z = r + K^{1/2}g`.
pub fn isserlis_quartic_oracle<R: Rng + ?Sized>(
    k_root: &DMatrix<f64>,
    r: &DVector<f64>,
    s: &DMatrix<f64>,
    n_samples: usize,
    rng: &mut R,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = r.len();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut sum2 = DMatrix::<f64>::zeros(p, p);
    for _ in 0..n_samples {
        let z = r + k_root * normal_vector(rng, k_root.ncols());
        let outer = &z * z.transpose() * z.dot(&(s * &z));
        sum2 += outer.component_mul(&outer);
        sum += outer;
    }
    let n = n_samples as f64;
    let mean = &sum / n;
    let var = (&sum2 / n - mean.component_mul(&mean)) * (n / (n - 1.0));
    (mean.clone(), var.map(|v| (v.max(0.0) / n).sqrt()))
}

/// Per-term pieces of a covariance; `tau_n` is unsigned.
#[derive(Debug, Clone, PartialEq)]
pub struct CovBreakdown {
    pub tau: DMatrix<f64>,
    pub tau_n: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

impl CovBreakdown {
    pub fn total(&self, sign: TauNSign) -> DMatrix<f64> {
        &self.tau + &self.tau_n * sign.value() + &self.n
    }
}

/// Stationary SGD moments of `(A, b)`. `cov_a` is the covariance of
/// column-major `vec(A)`; `tau_n` pieces carry the magnitude only, the
/// totals apply `tau_n_sign`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMoments {
    pub mean_a: DMatrix<f64>,
    pub mean_b: DVector<f64>,
    pub cov_b: DMatrix<f64>,
    pub cov_a: DMatrix<f64>,
    pub breakdown_b: CovBreakdown,
    pub breakdown_a: CovBreakdown,
    pub tau_n_sign: TauNSign,
}

/// Leading-order moments on the population law (`N = ∞`).
pub fn sgd_optim_moments(c: &SpdMatrix, sigma: f64, mu: &DVector<f64>, tau: f64) -> Result<SgdMoments> {
    check_sigma(sigma)?;
    check_tau(c, sigma, tau)?;
    let d = c.dim();
    if mu.len() != d {
        return Err(Error::DimensionMismatch("mu length differs from d".into()));
    }
    let cs = c_sigma(c, sigma);
    let a = cs.inverse();
    let s0 = symmetrize(&(&a * c.matrix()));
    let k = tau / (2.0 * sigma * sigma);
    let id = DMatrix::identity(d, d);
    let b_tau = &s0 * k;
    let a_tau = kron(&id, &s0) * k;
    let zero_b = DMatrix::zeros(d, d);
    let zero_a = DMatrix::zeros(d * d, d * d);
    Ok(SgdMoments {
        mean_b: &a * mu,
        mean_a: a,
        cov_b: b_tau.clone(),
        cov_a: a_tau.clone(),
        breakdown_b: CovBreakdown { tau: b_tau, tau_n: zero_b.clone(), n: zero_b },
        breakdown_a: CovBreakdown { tau: a_tau, tau_n: zero_a.clone(), n: zero_a },
        tau_n_sign: TauNSign::default(),
    })
}

/// Three-term moments for zero-mean data and a dataset of size `n`.
pub fn sgd_full_moments(
    c: &SpdMatrix,
    sigma: f64,
    tau: f64,
    n: SampleSize,
    sign: TauNSign,
) -> Result<SgdMoments> {
    n.check()?;
    let d = c.dim();
    let mut m = sgd_optim_moments(c, sigma, &DVector::zeros(d), tau)?;
    let inv_n = n.inverse();
    let cs_inv = m.mean_a.clone();
    let s0 = symmetrize(&(&cs_inv * c.matrix()));
    let s0sq = &s0 * &s0;
    let kmat = symmetrize(&(&cs_inv * &cs_inv * c.matrix()));
    let id = DMatrix::identity(d, d);
    let tn = tau * inv_n / (sigma * sigma);
    m.breakdown_b.tau_n = &s0sq * tn;
    m.breakdown_a.tau_n = kron(&id, &s0sq) * tn;
    m.breakdown_b.n = &kmat * inv_n;
    let ip = DMatrix::identity(d * d, d * d) + commutation_matrix(d);
    m.breakdown_a.n = kron(&kmat, &kmat) * ip * inv_n;
    let sg = sign.value();
    m.cov_b = &m.breakdown_b.tau + &m.breakdown_b.tau_n * sg + &m.breakdown_b.n;
    m.cov_a = &m.breakdown_a.tau + &m.breakdown_a.tau_n * sg + &m.breakdown_a.n;
    m.tau_n_sign = sign;
    Ok(m)
}

/// Covariances of the `√N`-scaled fluctuations of the empirical mean and of
/// `vec` of the empirical covariance; both are independent of `N`.
pub fn clt_empirical_moments(c: &SpdMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = c.dim();
    let v = kron(c.matrix(), c.matrix()) * (DMatrix::identity(d * d, d * d) + commutation_matrix(d));
    (c.matrix().clone(), v)
}

/// Stationary covariance of all parameter blocks in factorized form:
/// `Cov(θ_i, θ_j) = s_ij · M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCovariance {
    pub s: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl ThetaCovariance {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        &self.m * self.s[(i, j)]
    }

    pub fn cov_b(&self) -> DMatrix<f64> {
        let d = self.dim();
        &self.s * self.m[(d, d)]
    }

    /// Covariance of column-major `vec(A)`.
    pub fn cov_a(&self) -> DMatrix<f64> {
        let d = self.dim();
        kron(&self.m.view((0, 0), (d, d)).into_owned(), &self.s)
    }
}

/// The stationary covariance `τ (L^τ_{C_z})⁻¹[Σ_ε^{ij}]` of the linearized
/// recursion.
pub fn sgd_exact_second_moment(c: &SpdMatrix, sigma: f64, mu: &DVector<f64>, tau: f64) -> Result<ThetaCovariance> {
    check_sigma(sigma)?;
    check_tau(c, sigma, tau)?;
    let cz = SpdMatrix::new(cz_matrix(c.matrix(), sigma, mu))?;
    let m = lyap_inverse_spd(&cz, tau, cz.matrix())? * tau;
    Ok(ThetaCovariance { s: residual_covariance(c.matrix(), sigma), m })
}

/// Exact stationary covariance of SGD driven by `x ~ N(μ, C)` with `C`
/// PSD, solving `C_z M + M C_z - τ E[zzᵀMzzᵀ] = τ C_z`.
pub fn sgd_stationary_exact(c: &DMatrix<f64>, sigma: f64, mu: &DVector<f64>, tau: f64) -> Result<ThetaCovariance> {
    check_sigma(sigma)?;
    let d = c.nrows();
    let p = d + 1;
    let cz = cz_matrix(c, sigma, mu);
    let mut r = DVector::zeros(p);
    r.rows_mut(0, d).copy_from(mu);
    r[d] = 1.0;
    let mut op = DMatrix::zeros(p * p, p * p);
    for col in 0..p * p {
        let mut e = DMatrix::zeros(p, p);
        e[(col % p, col / p)] = 1.0;
        let img = &cz * &e + &e * &cz - isserlis_quartic(&cz, &r, &e) * tau;
        op.set_column(col, &vec(&img));
    }
    let sol = op
        .lu()
        .solve(&(vec(&cz) * tau))
        .ok_or_else(|| Error::StabilityViolation("SGD second-moment recursion has no fixed point".into()))?;
    let m = symmetrize(&DMatrix::from_column_slice(p, p, sol.as_slice()));
    let eig_min = crate::matrixkit::sorted_eigen(&m).0.min();
    if !(eig_min > 0.0) {
        return Err(Error::StabilityViolation(format!(
            "tau = {tau} too large for a stable second moment"
        )));
    }
    Ok(ThetaCovariance { s: residual_covariance(c, sigma), m })
}
