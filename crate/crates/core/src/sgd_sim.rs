//! Monte Carlo simulation of single-sample SGD on the denoising
//! score-matching loss.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_metrics::loglog_slope;
use crate::matrixkit::{psd_sqrt, symmetrize, SpdMatrix};
use crate::rng::{normal, stream};
use crate::score_theory::{sgd_stationary_exact, sgd_tau_bound, LinearScore, SampleSize};
use crate::stats::{BatchMeans, BatchStat, MomentEstimate, N_BATCHES};

const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// `None` selects the default burn-in of the chain type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    pub n_steps: u64,
    #[serde(default = "one")]
    pub thinning: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_u32")]
    pub replicas: u32,
}

fn one() -> u64 {
    1
}

fn one_u32() -> u32 {
    1
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { burn_in: None, n_steps: 1_000_000, thinning: 1, seed: 0, replicas: 1 }
    }
}

impl ChainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.thinning == 0 {
            v.push("chain.thinning must be positive".to_string());
        } else if self.n_steps / self.thinning < 1000 {
            v.push(format!(
                "chain.n_steps / chain.thinning = {} must be at least 1000",
                self.n_steps / self.thinning
            ));
        }
        if self.replicas == 0 {
            v.push("chain.replicas must be at least 1".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }

    pub fn kept_samples(&self) -> usize {
        (self.n_steps / self.thinning) as usize
    }
}

/// Where SGD draws its training samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// The population law `N(0, C)`.
    Exact,
    /// The empirical Gaussian `N(μ̂_N, Ĉ_N)` of `n` draws from `N(0, C)`.
    Empirical { n: u64, seed: u64 },
}

/// Empirical mean and (1/N-normalized) covariance of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EmpiricalGaussian {
    pub fn draw<R: Rng + ?Sized>(c_root: &DMatrix<f64>, n: u64, rng: &mut R) -> Self {
        let d = c_root.nrows();
        let mut sum = DVector::zeros(d);
        let mut outer = DMatrix::zeros(d, d);
        let mut g = DVector::zeros(d);
        for _ in 0..n {
            for k in 0..d {
                g[k] = normal(rng);
            }
            let x = c_root * &g;
            sum += &x;
            outer.ger(1.0, &x, &x, 1.0);
        }
        let nf = n as f64;
        let mean = sum / nf;
        let cov = symmetrize(&(outer / nf - &mean * mean.transpose()));
        Self { mean, cov }
    }
}

/// Gradient of `‖v(x+σw) + w/σ‖²` with respect to `(A, b)` at `score`.
pub fn sgd_gradient(score: &LinearScore, x: &DVector<f64>, w: &DVector<f64>, sigma: f64) -> LinearScore {
    let xt = x + w * sigma;
    let res = score.apply(&xt) + w / sigma;
    LinearScore { a: &res * xt.transpose() * -2.0, b: res * 2.0 }
}

/// `⌈10 / (τ · min(min_k λ_k + σ², 1))⌉`.
pub fn default_sgd_burn_in(lambda_min: f64, sigma: f64, tau: f64) -> u64 {
    (10.0 / (tau * (lambda_min + sigma * sigma).min(1.0))).ceil() as u64
}

/// SGD state with flat column-major storage of `A`.
#[derive(Debug, Clone)]
pub struct SgdState {
    d: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    xt: Vec<f64>,
    g: Vec<f64>,
    w: Vec<f64>,
}

impl SgdState {
    pub fn zeros(d: usize) -> Self {
        Self { d, a: vec![0.0; d * d], b: vec![0.0; d], xt: vec![0.0; d], g: vec![0.0; d], w: vec![0.0; d] }
    }

    /// One step `θ ← θ - (τ/2)∇‖v(x+σw) + w/σ‖²` with `x = mean + root·g`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, mean: &[f64], root: &[f64], sigma: f64, tau: f64, rng: &mut R) {
        let d = self.d;
        for k in 0..d {
            self.g[k] = normal(rng);
        }
        for k in 0..d {
            self.w[k] = normal(rng);
        }
        for r in 0..d {
            let mut x = mean[r];
            for k in 0..d {
                x += root[r + k * d] * self.g[k];
            }
            self.xt[r] = x + sigma * self.w[r];
        }
        for i in 0..d {
            let mut res = self.b[i] + self.w[i] / sigma;
            for k in 0..d {
                res -= self.a[i + k * d] * self.xt[k];
            }
            let tr = tau * res;
            for k in 0..d {
                self.a[i + k * d] += tr * self.xt[k];
            }
            self.b[i] -= tr;
        }
    }

    pub fn norm(&self) -> f64 {
        self.a.iter().chain(&self.b).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `(vec(A), b)`.
    pub fn theta(&self, out: &mut DVector<f64>) {
        let d2 = self.d * self.d;
        out.rows_mut(0, d2).copy_from_slice(&self.a);
        out.rows_mut(d2, self.d).copy_from_slice(&self.b);
    }

    pub fn score(&self) -> LinearScore {
        LinearScore {
            a: DMatrix::from_column_slice(self.d, self.d, &self.a),
            b: DVector::from_column_slice(&self.b),
        }
    }
}

/// Runs one chain from `θ = 0`; `sink` receives every kept `(vec(A), b)`.
#[allow(clippy::too_many_arguments)]
pub fn run_sgd_core<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    root: &DMatrix<f64>,
    sigma: f64,
    tau: f64,
    burn_in: u64,
    n_steps: u64,
    thinning: u64,
    rng: &mut R,
    mut sink: impl FnMut(&DVector<f64>),
) -> Result<SgdState> {
    let d = mean.len();
    let mut st = SgdState::zeros(d);
    let mut theta = DVector::zeros(d * d + d);
    let (m, r) = (mean.as_slice(), root.as_slice());
    for k in 0..burn_in + n_steps {
        st.step(m, r, sigma, tau, rng);
        if k % 4096 == 0 && !(st.norm() <= DIVERGENCE_NORM) {
            return Err(Error::StabilityViolation(format!(
                "SGD diverged: parameter norm {:.3e} after {k} steps (tau = {tau})",
                st.norm()
            )));
        }
        if k >= burn_in && (k - burn_in + 1).is_multiple_of(thinning) {
            st.theta(&mut theta);
            sink(&theta);
        }
    }
    if !(st.norm() <= DIVERGENCE_NORM) {
        return Err(Error::StabilityViolation(format!("SGD diverged: parameter norm {:.3e}", st.norm())));
    }
    Ok(st)
}

/// Moments of `(vec(A), b)` with convenience accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdEstimate {
    pub d: usize,
    pub estimate: MomentEstimate,
}

impl SgdEstimate {
    pub fn mean_a(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.d, self.d, self.estimate.mean.rows(0, self.d * self.d).as_slice())
    }

    pub fn se_mean_a(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.d, self.d, self.estimate.se_mean.rows(0, self.d * self.d).as_slice())
    }

    pub fn mean_b(&self) -> DVector<f64> {
        self.estimate.mean.rows(self.d * self.d, self.d).into_owned()
    }

    pub fn se_mean_b(&self) -> DVector<f64> {
        self.estimate.se_mean.rows(self.d * self.d, self.d).into_owned()
    }

    pub fn cov_a(&self) -> DMatrix<f64> {
        let d2 = self.d * self.d;
        self.estimate.cov.view((0, 0), (d2, d2)).into_owned()
    }

    pub fn se_cov_a(&self) -> DMatrix<f64> {
        let d2 = self.d * self.d;
        self.estimate.se_cov.view((0, 0), (d2, d2)).into_owned()
    }

    pub fn cov_b(&self) -> DMatrix<f64> {
        let d2 = self.d * self.d;
        self.estimate.cov.view((d2, d2), (self.d, self.d)).into_owned()
    }

    pub fn se_cov_b(&self) -> DMatrix<f64> {
        let d2 = self.d * self.d;
        self.estimate.se_cov.view((d2, d2), (self.d, self.d)).into_owned()
    }
}

fn check_sgd(c: &SpdMatrix, sigma: f64, tau: f64) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::DomainError(format!("sigma must be positive, got {sigma}")));
    }
    let bound = sgd_tau_bound(c.max_eig(), sigma);
    if !(tau > 0.0) || tau >= bound {
        return Err(Error::StabilityViolation(format!(
            "tau = {tau} must lie in (0, 2/max(max_k λ_k + σ², 1) = {bound})"
        )));
    }
    Ok(())
}

/// Long-run moments of the SGD chain on a fixed training law.
pub fn run_sgd_chain(
    c: &SpdMatrix,
    sigma: f64,
    tau: f64,
    source: DataSource,
    cfg: &ChainConfig,
) -> Result<SgdEstimate> {
    check_sgd(c, sigma, tau)?;
    cfg.validate()?;
    let d = c.dim();
    let (mean, root) = match source {
        DataSource::Exact => (DVector::zeros(d), c.sqrt().matrix().clone()),
        DataSource::Empirical { n, seed } => {
            SampleSize::Finite(n).check()?;
            let mut rng = stream(seed, "sgd/dataset");
            let emp = EmpiricalGaussian::draw(c.sqrt().matrix(), n, &mut rng);
            let root = psd_sqrt(&emp.cov);
            (emp.mean, root)
        }
    };
    let burn_in = cfg.burn_in.unwrap_or_else(|| default_sgd_burn_in(c.min_eig(), sigma, tau));
    let per_replica: Vec<Result<Vec<BatchStat>>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, &format!("sgd/replica/{r}"));
            let mut bm = BatchMeans::new(d * d + d, cfg.kept_samples());
            run_sgd_core(&mean, &root, sigma, tau, burn_in, cfg.n_steps, cfg.thinning, &mut rng, |t| bm.push(t))?;
            Ok(bm.into_batches())
        })
        .collect();
    let mut batches = Vec::new();
    for r in per_replica {
        batches.extend(r?);
    }
    Ok(SgdEstimate { d, estimate: MomentEstimate::from_batches(&batches) })
}

/// Moments pooled over fresh datasets and SGD noise. Datasets are grouped
/// into [`N_BATCHES`] contiguous groups that serve as independent batches.
pub fn run_sgd_ensemble(
    c: &SpdMatrix,
    sigma: f64,
    tau: f64,
    n: SampleSize,
    datasets: usize,
    cfg: &ChainConfig,
) -> Result<SgdEstimate> {
    check_sgd(c, sigma, tau)?;
    n.check()?;
    let n = match n {
        SampleSize::Infinite => return run_sgd_chain(c, sigma, tau, DataSource::Exact, cfg),
        SampleSize::Finite(n) => n,
    };
    if datasets < N_BATCHES {
        return Err(Error::InvalidArgument(format!("need at least {N_BATCHES} datasets")));
    }
    let d = c.dim();
    let c_root = c.sqrt().matrix().clone();
    let burn_in = cfg.burn_in.unwrap_or_else(|| default_sgd_burn_in(c.min_eig(), sigma, tau));
    let groups: Vec<Result<BatchStat>> = (0..N_BATCHES)
        .into_par_iter()
        .map(|g| {
            let mut stat = BatchStat::new(d * d + d);
            for r in (g * datasets / N_BATCHES)..((g + 1) * datasets / N_BATCHES) {
                let mut rng = stream(cfg.seed, &format!("sgd-ensemble/N={n}/dataset/{r}"));
                let emp = EmpiricalGaussian::draw(&c_root, n, &mut rng);
                let root = psd_sqrt(&emp.cov);
                run_sgd_core(&emp.mean, &root, sigma, tau, burn_in, cfg.n_steps, cfg.thinning, &mut rng, |t| {
                    stat.push(t)
                })?;
            }
            Ok(stat)
        })
        .collect();
    let groups: Vec<BatchStat> = groups.into_iter().collect::<Result<_>>()?;
    Ok(SgdEstimate { d, estimate: MomentEstimate::from_batches(&groups) })
}

/// One row of a generalization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: SampleSize,
    pub estimate: SgdEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationSweep {
    pub rows: Vec<SweepRow>,
    /// Log-log slope of `Tr(Cov(b)) - Tr(τ-term)` against `1/N` over the finite rows.
    pub slope_vs_inv_n: f64,
}

/// Empirical `Cov(b)`, `Cov(A)` as functions of `N` (law of total covariance).
pub fn generalization_sweep(
    c: &SpdMatrix,
    sigma: f64,
    tau: f64,
    n_list: &[SampleSize],
    datasets: usize,
    cfg: &ChainConfig,
) -> Result<GeneralizationSweep> {
    let mut rows = Vec::new();
    for &n in n_list {
        rows.push(SweepRow { n, estimate: run_sgd_ensemble(c, sigma, tau, n, datasets, cfg)? });
    }
    let s0 = c_tau_trace(c, sigma, tau);
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| matches!(r.n, SampleSize::Finite(_)))
        .map(|r| (r.n.inverse(), r.estimate.cov_b().trace() - s0))
        .unzip();
    let slope_vs_inv_n = if x.len() >= 2 { loglog_slope(&x, &y) } else { f64::NAN };
    Ok(GeneralizationSweep { rows, slope_vs_inv_n })
}

fn c_tau_trace(c: &SpdMatrix, sigma: f64, tau: f64) -> f64 {
    let s2 = sigma * sigma;
    c.eigvals().iter().map(|l| tau / (2.0 * s2) * l / (l + s2)).sum()
}

/// Dataset-averaged moments using the exact stationary SGD covariance of each
/// realized empirical law. Each `τ` reuses the same datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiAnalyticPoint {
    pub tau: f64,
    /// Total covariance of `b` (within-dataset plus between-dataset).
    pub cov_b: DMatrix<f64>,
    pub se_cov_b: DMatrix<f64>,
    pub cov_a: DMatrix<f64>,
    pub se_cov_a: DMatrix<f64>,
    /// Dataset average of `Cov_SGD(b | D) - (τ/2)S_D`.
    pub curvature_b: DMatrix<f64>,
    pub se_curvature_b: DMatrix<f64>,
    pub curvature_a: DMatrix<f64>,
    pub se_curvature_a: DMatrix<f64>,
}

/// Dataset average of `S_D = (1/σ²)(Ĉ+σ²I)⁻¹Ĉ` and of the total
/// covariances, plus the second-order-in-τ parts, per τ.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiAnalyticStudy {
    pub mean_s: DMatrix<f64>,
    pub se_mean_s: DMatrix<f64>,
    pub points: Vec<SemiAnalyticPoint>,
}

pub fn semi_analytic_study(
    c: &SpdMatrix,
    sigma: f64,
    taus: &[f64],
    n: u64,
    datasets: usize,
    seed: u64,
) -> Result<SemiAnalyticStudy> {
    for &t in taus {
        check_sgd(c, sigma, t)?;
    }
    SampleSize::Finite(n).check()?;
    if datasets < N_BATCHES {
        return Err(Error::InvalidArgument(format!("need at least {N_BATCHES} datasets")));
    }
    let d = c.dim();
    let c_root = c.sqrt().matrix().clone();
    let s2 = sigma * sigma;
    let nt = taus.len();
    // Per group: [S_D], then per tau [cov_b, cov_a, curvature_b, curvature_a], then mean b, mean vec A.
    let per_group: Vec<Result<Vec<Vec<f64>>>> = (0..N_BATCHES)
        .into_par_iter()
        .map(|g| {
            let lo = g * datasets / N_BATCHES;
            let hi = (g + 1) * datasets / N_BATCHES;
            let mut acc_s = DMatrix::<f64>::zeros(d, d);
            let mut acc_cb = vec![DMatrix::<f64>::zeros(d, d); nt];
            let mut acc_ca = vec![DMatrix::<f64>::zeros(d * d, d * d); nt];
            let mut acc_kb = vec![DMatrix::<f64>::zeros(d, d); nt];
            let mut acc_ka = vec![DMatrix::<f64>::zeros(d * d, d * d); nt];
            let mut m_b = DVector::<f64>::zeros(d);
            let mut o_b = DMatrix::<f64>::zeros(d, d);
            let mut m_a = DVector::<f64>::zeros(d * d);
            let mut o_a = DMatrix::<f64>::zeros(d * d, d * d);
            for r in lo..hi {
                let mut rng = stream(seed, &format!("semi-analytic/N={n}/dataset/{r}"));
                let emp = EmpiricalGaussian::draw(&c_root, n, &mut rng);
                let cs_inv = (&emp.cov + DMatrix::identity(d, d) * s2)
                    .try_inverse()
                    .expect("C + σ²I invertible");
                let s_d = symmetrize(&(&cs_inv * &emp.cov)) / s2;
                acc_s += &s_d;
                let mean_b = &cs_inv * &emp.mean;
                let mean_a = crate::matrixkit::vec(&cs_inv);
                m_b += &mean_b;
                o_b.ger(1.0, &mean_b, &mean_b, 1.0);
                m_a += &mean_a;
                o_a.ger(1.0, &mean_a, &mean_a, 1.0);
                let lead_a = crate::matrixkit::kron(&DMatrix::identity(d, d), &s_d);
                for (k, &t) in taus.iter().enumerate() {
                    let th = sgd_stationary_exact(&emp.cov, sigma, &emp.mean, t)?;
                    let cb = th.cov_b();
                    let ca = th.cov_a();
                    acc_kb[k] += &cb - &s_d * (t / 2.0);
                    acc_ka[k] += &ca - &lead_a * (t / 2.0);
                    acc_cb[k] += cb;
                    acc_ca[k] += ca;
                }
            }
            let cnt = (hi - lo) as f64;
            let mb = &m_b / cnt;
            let ma = &m_a / cnt;
            let between_b = &o_b / cnt - &mb * mb.transpose();
            let between_a = &o_a / cnt - &ma * ma.transpose();
            let mut out = vec![(acc_s / cnt).as_slice().to_vec()];
            for k in 0..nt {
                out.push((&acc_cb[k] / cnt + &between_b).as_slice().to_vec());
                out.push((&acc_ca[k] / cnt + &between_a).as_slice().to_vec());
                out.push((&acc_kb[k] / cnt).as_slice().to_vec());
                out.push((&acc_ka[k] / cnt).as_slice().to_vec());
            }
            Ok(out)
        })
        .collect();
    let per_group: Vec<Vec<Vec<f64>>> = per_group.into_iter().collect::<Result<_>>()?;
    let summarize = |idx: usize, rows: usize| -> (DMatrix<f64>, DMatrix<f64>) {
        let samples: Vec<Vec<f64>> = per_group.iter().map(|g| g[idx].clone()).collect();
        let len = samples[0].len();
        let mean: Vec<f64> =
            (0..len).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / samples.len() as f64).collect();
        let se = crate::stats::elementwise_se(&samples);
        (DMatrix::from_vec(rows, rows, mean), DMatrix::from_vec(rows, rows, se))
    };
    let (mean_s, se_mean_s) = summarize(0, d);
    let points = taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let (cov_b, se_cov_b) = summarize(1 + 4 * k, d);
            let (cov_a, se_cov_a) = summarize(2 + 4 * k, d * d);
            let (curvature_b, se_curvature_b) = summarize(3 + 4 * k, d);
            let (curvature_a, se_curvature_a) = summarize(4 + 4 * k, d * d);
            SemiAnalyticPoint {
                tau,
                cov_b,
                se_cov_b,
                cov_a,
                se_cov_a,
                curvature_b,
                se_curvature_b,
                curvature_a,
                se_curvature_a,
            }
        })
        .collect();
    Ok(SemiAnalyticStudy { mean_s, se_mean_s, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vector, random_matrix};
    use crate::score_theory::{sgd_exact_second_moment, sgd_optim_moments};

    fn loss(score: &LinearScore, x: &DVector<f64>, w: &DVector<f64>, sigma: f64) -> f64 {
        (score.apply(&(x + w * sigma)) + w / sigma).norm_squared()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream(1, "fd");
        let d = 3;
        let score = LinearScore::new(random_matrix(&mut rng, d, d), normal_vector(&mut rng, d)).unwrap();
        let x = normal_vector(&mut rng, d);
        let w = normal_vector(&mut rng, d);
        let sigma = 0.7;
        let g = sgd_gradient(&score, &x, &w, sigma);
        let h = 1e-6;
        for k in 0..d * d {
            let mut p = score.clone();
            let mut m = score.clone();
            p.a[k] += h;
            m.a[k] -= h;
            let fd = (loss(&p, &x, &w, sigma) - loss(&m, &x, &w, sigma)) / (2.0 * h);
            assert!((fd - g.a[k]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
        for k in 0..d {
            let mut p = score.clone();
            let mut m = score.clone();
            p.b[k] += h;
            m.b[k] -= h;
            let fd = (loss(&p, &x, &w, sigma) - loss(&m, &x, &w, sigma)) / (2.0 * h);
            assert!((fd - g.b[k]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_vanishes_on_average_at_optimum() {
        let c = SpdMatrix::diagonal(&[1.0, 0.5]).unwrap();
        let sigma = 0.8;
        let opt = crate::score_theory::optimal_score(&c, sigma).unwrap();
        let mut rng = stream(2, "grad-mean");
        let n = 100_000;
        let root = c.sqrt();
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let x = root.matrix() * normal_vector(&mut rng, 2);
                let w = normal_vector(&mut rng, 2);
                let g = sgd_gradient(&opt, &x, &w, sigma);
                g.a.iter().chain(g.b.iter()).cloned().collect()
            })
            .collect();
        let se = crate::stats::elementwise_se(&samples);
        for k in 0..6 {
            let m = samples.iter().map(|s| s[k]).sum::<f64>() / n as f64;
            assert!(m.abs() <= 4.0 * se[k]);
        }
    }

    #[test]
    fn gradient_is_affine_in_parameters() {
        let mut rng = stream(3, "affine");
        let x = normal_vector(&mut rng, 2);
        let w = normal_vector(&mut rng, 2);
        let s1 = LinearScore::new(random_matrix(&mut rng, 2, 2), normal_vector(&mut rng, 2)).unwrap();
        let s2 = LinearScore::new(random_matrix(&mut rng, 2, 2), normal_vector(&mut rng, 2)).unwrap();
        let mid = LinearScore::new((&s1.a + &s2.a) * 0.5, (&s1.b + &s2.b) * 0.5).unwrap();
        let (g1, g2, gm) = (sgd_gradient(&s1, &x, &w, 1.0), sgd_gradient(&s2, &x, &w, 1.0), sgd_gradient(&mid, &x, &w, 1.0));
        assert!(((&g1.a + &g2.a) * 0.5 - gm.a).norm() < 1e-12);
        let zero = LinearScore::new(DMatrix::zeros(2, 2), DVector::zeros(2)).unwrap();
        let g0 = sgd_gradient(&zero, &x, &w, 1.0);
        assert!((g0.b - (&w / 1.0) * 2.0).norm() < 1e-12);
    }

    #[test]
    fn scalar_chain_matches_theory() {
        let c = SpdMatrix::identity(1);
        let cfg = ChainConfig { n_steps: 2_000_000, seed: 11, ..Default::default() };
        let est = run_sgd_chain(&c, 1.0, 0.01, DataSource::Exact, &cfg).unwrap();
        assert!(est.estimate.max_mean_z(&DVector::from_column_slice(&[0.5, 0.0])) < 4.0);
        let exact = sgd_stationary_exact(c.matrix(), 1.0, &DVector::zeros(1), 0.01).unwrap();
        assert!(stats_z(&est.cov_b(), &exact.cov_b(), &est.se_cov_b()) < 4.0);
        let lead = sgd_optim_moments(&c, 1.0, &DVector::zeros(1), 0.01).unwrap();
        assert!(stats_z(&est.cov_b(), &lead.cov_b, &est.se_cov_b()) < 4.0);
        let lemma = sgd_exact_second_moment(&c, 1.0, &DVector::zeros(1), 0.01).unwrap();
        assert!(stats_z(&est.cov_a(), &lemma.cov_a(), &est.se_cov_a()) < 4.0);
    }

    fn stats_z(a: &DMatrix<f64>, b: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
        crate::stats::max_z(a.as_slice(), b.as_slice(), se.as_slice())
    }

    #[test]
    fn empirical_chain_mean_is_regularized_inverse() {
        let c = SpdMatrix::identity(1);
        let cfg = ChainConfig { n_steps: 1_000_000, seed: 5, ..Default::default() };
        let seed = 99;
        let est = run_sgd_chain(&c, 1.0, 0.01, DataSource::Empirical { n: 50, seed }, &cfg).unwrap();
        let mut rng = stream(seed, "sgd/dataset");
        let emp = EmpiricalGaussian::draw(c.sqrt().matrix(), 50, &mut rng);
        let a = 1.0 / (emp.cov[(0, 0)] + 1.0);
        assert!(est.estimate.max_mean_z(&DVector::from_column_slice(&[a, a * emp.mean[0]])) < 4.0);
    }

    #[test]
    fn chains_are_deterministic_and_replicas_agree() {
        let c = SpdMatrix::diagonal(&[1.0, 0.5]).unwrap();
        let cfg = ChainConfig { n_steps: 200_000, seed: 3, replicas: 2, ..Default::default() };
        let a = run_sgd_chain(&c, 1.0, 0.02, DataSource::Exact, &cfg).unwrap();
        let b = run_sgd_chain(&c, 1.0, 0.02, DataSource::Exact, &cfg).unwrap();
        assert_eq!(a, b);
        let one = |r: u32| {
            let mut rng = stream(3, &format!("sgd/replica/{r}"));
            let mut bm = BatchMeans::new(6, 200_000);
            run_sgd_core(&DVector::zeros(2), c.sqrt().matrix(), 1.0, 0.02, 500, 200_000, 1, &mut rng, |t| bm.push(t)).unwrap();
            MomentEstimate::from_batches(&bm.into_batches())
        };
        let (r0, r1) = (one(0), one(1));
        for k in 0..6 {
            let se = (r0.se_mean[k].powi(2) + r1.se_mean[k].powi(2)).sqrt();
            assert!((r0.mean[k] - r1.mean[k]).abs() <= 5.0 * se);
        }
        let est_a = a.mean_a();
        let se_a = a.se_mean_a();
        assert!(est_a[(0, 1)].abs() < 4.0 * se_a[(0, 1)]);
        assert!(est_a[(1, 0)].abs() < 4.0 * se_a[(1, 0)]);
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = stream(4, "div");
        let r = run_sgd_core(&DVector::zeros(1), &DMatrix::from_element(1, 1, 3.0), 1.0, 1.5, 0, 100_000, 1, &mut rng, |_| {});
        assert!(matches!(r, Err(Error::StabilityViolation(_))));
        let c = SpdMatrix::identity(1);
        assert!(run_sgd_chain(&c, 1.0, 1.5, DataSource::Exact, &ChainConfig::default()).is_err());
    }
}
