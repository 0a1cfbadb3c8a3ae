//! Distances between Gaussian laws and second-order expansions of the
//! matrix square root and the Bures distance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixkit::{lyap_inverse_spd, psd_sqrt, sorted_eigen, symmetrize, SpdMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

impl GaussianModel {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: SpdMatrix) -> Self {
        let d = cov.dim();
        Self { mean: DVector::zeros(d), cov }
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("dimensions {a} and {b} differ")));
    }
    Ok(())
}

/// `Tr(S1 + S2 - 2(√S1 S2 √S1)^{1/2})`, clamped at zero.
pub fn bures_sq(s1: &SpdMatrix, s2: &SpdMatrix) -> f64 {
    bures_sq_matrices(s1.matrix(), s2.matrix())
}

/// [`bures_sq`] for symmetric PSD matrices given without a decomposition.
pub fn bures_sq_matrices(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    let r = psd_sqrt(s1);
    let inner = symmetrize(&(&r * s2 * &r));
    let (vals, _) = sorted_eigen(&inner);
    let floor = 1e-14 * vals[0].max(0.0);
    let cross: f64 = vals.iter().map(|v| v.max(floor).sqrt()).sum();
    (s1.trace() + s2.trace() - 2.0 * cross).max(0.0)
}

pub fn w2_sq_gauss(g1: &GaussianModel, g2: &GaussianModel) -> Result<f64> {
    check_dims(g1.dim(), g2.dim())?;
    Ok((&g1.mean - &g2.mean).norm_squared() + bures_sq(&g1.cov, &g2.cov))
}

/// Squared mean gap plus squared Frobenius gap of the covariances.
pub fn l2_gauss_distance(g1: &GaussianModel, g2: &GaussianModel) -> Result<f64> {
    check_dims(g1.dim(), g2.dim())?;
    Ok((&g1.mean - &g2.mean).norm_squared() + (g1.cov.matrix() - g2.cov.matrix()).norm_squared())
}

/// Coefficients of `(H0 + εH1)^{1/2} = X0 + εX1 + ε²X2 + O(ε³)`.
pub fn sqrt_taylor2(
    h0: &SpdMatrix,
    h1: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_dims(h0.dim(), h1.nrows())?;
    let root = h0.sqrt();
    let x1 = lyap_inverse_spd(&root, 0.0, &symmetrize(h1))?;
    let x2 = -lyap_inverse_spd(&root, 0.0, &(&x1 * &x1))?;
    Ok((root.matrix().clone(), x1, x2))
}

/// Coefficients `(c0, c1, c2)` of `B²(Σ, H0 + εH1 + ε²H2)` in powers of ε.
pub fn bures_taylor2(
    sigma: &SpdMatrix,
    h0: &SpdMatrix,
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
) -> Result<(f64, f64, f64)> {
    let d = sigma.dim();
    check_dims(d, h0.dim())?;
    check_dims(d, h1.nrows())?;
    check_dims(d, h2.nrows())?;
    let r = sigma.sqrt();
    let r = r.matrix();
    let x0 = SpdMatrix::new(symmetrize(&(r * h0.matrix() * r)))?;
    let q = x0.sqrt();
    let y1 = lyap_inverse_spd(&q, 0.0, &symmetrize(&(r * h1 * r)))?;
    let y2 = lyap_inverse_spd(&q, 0.0, &symmetrize(&(r * h2 * r)))?;
    let y11 = lyap_inverse_spd(&q, 0.0, &(&y1 * &y1))?;
    let c0 = bures_sq(sigma, h0);
    let c1 = h1.trace() - 2.0 * y1.trace();
    let c2 = h2.trace() - 2.0 * y2.trace() + 2.0 * y11.trace();
    Ok((c0, c1, c2))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `n` logarithmically spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo; n];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}
