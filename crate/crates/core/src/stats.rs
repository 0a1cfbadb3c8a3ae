//! Batch-means moment estimation for Markov chain output.

use nalgebra::{DMatrix, DVector};

/// Number of batches per chain.
pub const N_BATCHES: usize = 30;

/// Running sums for one batch.
#[derive(Debug, Clone)]
pub struct BatchStat {
    pub count: usize,
    pub sum: DVector<f64>,
    pub sum_outer: DMatrix<f64>,
}

impl BatchStat {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, sum: DVector::zeros(dim), sum_outer: DMatrix::zeros(dim, dim) }
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.count += 1;
        self.sum += x;
        self.sum_outer.ger(1.0, x, x, 1.0);
    }

    fn mean(&self) -> DVector<f64> {
        &self.sum / self.count as f64
    }

    fn cov(&self) -> DMatrix<f64> {
        let m = self.mean();
        &self.sum_outer / self.count as f64 - &m * m.transpose()
    }
}

/// Splits a stream of `n_samples` vectors into [`N_BATCHES`] contiguous
/// batches; samples beyond `N_BATCHES · ⌊n_samples / N_BATCHES⌋` are dropped.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_size: usize,
    batches: Vec<BatchStat>,
    dim: usize,
}

impl BatchMeans {
    pub fn new(dim: usize, n_samples: usize) -> Self {
        Self { batch_size: (n_samples / N_BATCHES).max(1), batches: vec![BatchStat::new(dim)], dim }
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        let last = self.batches.last_mut().expect("nonempty");
        if last.count == self.batch_size {
            if self.batches.len() == N_BATCHES {
                return;
            }
            self.batches.push(BatchStat::new(self.dim));
        }
        self.batches.last_mut().expect("nonempty").push(x);
    }

    pub fn into_batches(self) -> Vec<BatchStat> {
        self.batches.into_iter().filter(|b| b.count > 0).collect()
    }
}

/// Mean and covariance with elementwise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub se_mean: DVector<f64>,
    pub se_cov: DMatrix<f64>,
    pub n_effective: f64,
    pub n_batches: usize,
}

impl MomentEstimate {
    /// Combines equally weighted, independent-in-the-limit batches.
    pub fn from_batches(batches: &[BatchStat]) -> Self {
        let nb = batches.len();
        let dim = batches[0].sum.len();
        let total: usize = batches.iter().map(|b| b.count).sum();
        let mut sum = DVector::zeros(dim);
        let mut sum_outer = DMatrix::zeros(dim, dim);
        for b in batches {
            sum += &b.sum;
            sum_outer += &b.sum_outer;
        }
        let mean = &sum / total as f64;
        let cov = crate::matrixkit::symmetrize(&(&sum_outer / total as f64 - &mean * mean.transpose()));
        let means: Vec<DVector<f64>> = batches.iter().map(|b| b.mean()).collect();
        let covs: Vec<DMatrix<f64>> = batches.iter().map(|b| b.cov()).collect();
        let se_mean = elementwise_se(&means.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>());
        let se_cov = elementwise_se(&covs.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>());
        let se_mean = DVector::from_vec(se_mean);
        let se_cov = DMatrix::from_vec(dim, dim, se_cov);
        let n_effective = (0..dim)
            .filter(|&k| se_mean[k] > 0.0)
            .map(|k| cov[(k, k)] / (se_mean[k] * se_mean[k]))
            .sum::<f64>()
            / dim as f64;
        Self { mean, cov, se_mean, se_cov, n_effective, n_batches: nb }
    }

    /// Largest `|estimate - reference| / se` over the covariance entries.
    pub fn max_cov_z(&self, reference: &DMatrix<f64>) -> f64 {
        max_z(self.cov.as_slice(), reference.as_slice(), self.se_cov.as_slice())
    }

    pub fn max_mean_z(&self, reference: &DVector<f64>) -> f64 {
        max_z(self.mean.as_slice(), reference.as_slice(), self.se_mean.as_slice())
    }
}

/// `sd/√n` of each coordinate across replicate vectors.
pub fn elementwise_se(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as f64;
    let dim = samples[0].len();
    (0..dim)
        .map(|k| {
            let m = samples.iter().map(|s| s[k]).sum::<f64>() / n;
            let v = samples.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
            (v / n).sqrt()
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Largest standardized deviation; entries with zero SE must match exactly.
pub fn max_z(est: &[f64], reference: &[f64], se: &[f64]) -> f64 {
    est.iter()
        .zip(reference)
        .zip(se)
        .map(|((e, r), s)| {
            let diff = (e - r).abs();
            if *s > 0.0 {
                diff / s
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream};

    #[test]
    fn iid_batches_recover_moments() {
        let mut rng = stream(1, "bm");
        let n = 300_000;
        let mut bm = BatchMeans::new(2, n);
        for _ in 0..n {
            let a = normal(&mut rng);
            let b = 0.5 * a + normal(&mut rng);
            bm.push(&DVector::from_column_slice(&[a + 1.0, b]));
        }
        let batches = bm.into_batches();
        assert_eq!(batches.len(), N_BATCHES);
        let est = MomentEstimate::from_batches(&batches);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.25]);
        assert!(est.max_cov_z(&cov) < 4.5);
        assert!(est.max_mean_z(&DVector::from_column_slice(&[1.0, 0.0])) < 4.5);
        assert!(est.n_effective > 0.5 * n as f64 && est.n_effective < 2.0 * n as f64);
    }

    #[test]
    fn mean_se_basic() {
        let (m, s) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
