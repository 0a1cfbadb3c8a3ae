//! Dense linear-algebra primitives: vec/Kronecker calculus, the commutation
//! matrix and the Lyapunov-type operator `X -> CX + XCᵀ - τCXCᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const ASYMMETRY_TOL: f64 = 1e-8;
const MAX_CONDITION: f64 = 1e12;

/// Column-stacking vectorization.
pub fn vec(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`] for a `d×d` matrix.
pub fn unvec(v: &DVector<f64>, d: usize) -> Result<DMatrix<f64>> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "unvec: length {} is not {}²",
            v.len(),
            d
        )));
    }
    Ok(DMatrix::from_column_slice(d, d, v.as_slice()))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// The `d²×d²` permutation with `P·vec(X) = vec(Xᵀ)`.
pub fn commutation_matrix(d: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            p[(i + j * d, j + i * d)] = 1.0;
        }
    }
    p
}

pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

fn max_abs(x: &DMatrix<f64>) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Symmetric positive definite matrix with a cached eigendecomposition.
///
/// Eigenvalues are stored in descending order; column `k` of `eigvecs`
/// is the eigenvector of `eigvals[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates, symmetrizes and decomposes `m`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "SPD matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let scale = max_abs(&m).max(f64::MIN_POSITIVE);
        let asym = max_abs(&(&m - m.transpose())) / scale;
        if asym > ASYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = symmetrize(&m);
        let (vals, vecs) = sorted_eigen(&sym);
        let min = vals[vals.len() - 1];
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(Self { entries: sym, eigvals: vals, eigvecs: vecs })
    }

    /// Builds `U diag(vals) Uᵀ` from a given orthogonal basis.
    pub fn from_eigen(vals: &[f64], vecs: &DMatrix<f64>) -> Result<Self> {
        if vals.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(
                vals.iter().cloned().fold(f64::INFINITY, f64::min),
            ));
        }
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(vals));
        Self::new(symmetrize(&(vecs * d * vecs.transpose())))
    }

    pub fn diagonal(vals: &[f64]) -> Result<Self> {
        Self::from_eigen(vals, &DMatrix::identity(vals.len(), vals.len()))
    }

    pub fn identity(d: usize) -> Self {
        Self::diagonal(&vec![1.0; d]).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn max_eig(&self) -> f64 {
        self.eigvals[0]
    }

    pub fn min_eig(&self) -> f64 {
        self.eigvals[self.eigvals.len() - 1]
    }

    /// Spectral function `U f(Λ) Uᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let fv = self.eigvals.map(f);
        symmetrize(&(&self.eigvecs * DMatrix::from_diagonal(&fv) * self.eigvecs.transpose()))
    }

    pub fn sqrt(&self) -> SpdMatrix {
        let vals: Vec<f64> = self.eigvals.iter().map(|v| v.sqrt()).collect();
        SpdMatrix::from_eigen(&vals, &self.eigvecs).expect("square root of SPD is SPD")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.map_spectrum(|v| 1.0 / v)
    }

    /// `C + s·I`, sharing the eigenbasis.
    pub fn shifted(&self, s: f64) -> Result<SpdMatrix> {
        let vals: Vec<f64> = self.eigvals.iter().map(|v| v + s).collect();
        SpdMatrix::from_eigen(&vals, &self.eigvecs)
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym.clone());
    let n = sym.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &k) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// Principal square root of a symmetric PSD matrix, clamping tiny or
/// negative eigenvalues at `1e-14·max`.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sorted_eigen(&symmetrize(m));
    let floor = 1e-14 * vals[0].max(0.0);
    let r = vals.map(|v| v.max(floor).sqrt());
    symmetrize(&(&vecs * DMatrix::from_diagonal(&r) * vecs.transpose()))
}

/// `L^τ_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovOp {
    pub c: DMatrix<f64>,
    pub tau: f64,
}

impl LyapunovOp {
    pub fn new(c: DMatrix<f64>, tau: f64) -> Self {
        Self { c, tau }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        lyap_apply(self, x)
    }

    /// The `p²×p²` matrix `I⊗C + C⊗I - τC⊗C`.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let p = self.c.nrows();
        let id = DMatrix::<f64>::identity(p, p);
        kron(&id, &self.c) + kron(&self.c, &id) - kron(&self.c, &self.c) * self.tau
    }
}

pub fn lyap_apply(op: &LyapunovOp, x: &DMatrix<f64>) -> DMatrix<f64> {
    let cx = &op.c * x;
    let cxct = &cx * op.c.transpose();
    &cx + x * op.c.transpose() - cxct * op.tau
}

/// Upper stepsize bound `2/max eig(C)`.
pub fn lyap_tau_bound(c: &SpdMatrix) -> f64 {
    2.0 / c.max_eig()
}

/// Eigenbasis inverse of `L^τ_C` for SPD `C`.
pub fn lyap_inverse_spd(c: &SpdMatrix, tau: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = c.dim();
    if x.nrows() != p || x.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "lyap_inverse_spd: C is {p}x{p}, X is {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if tau < 0.0 || tau >= lyap_tau_bound(c) {
        return Err(Error::StabilityViolation(format!(
            "tau = {tau} outside [0, 2/max eig(C) = {})",
            lyap_tau_bound(c)
        )));
    }
    let u = c.eigvecs();
    let g = c.eigvals();
    let mut y = u.transpose() * x * u;
    for i in 0..p {
        for j in 0..p {
            y[(i, j)] /= g[i] + g[j] - tau * g[i] * g[j];
        }
    }
    Ok(u * y * u.transpose())
}

/// Brute-force inverse through the dense vectorized system.
pub fn lyap_inverse_dense(c: &DMatrix<f64>, tau: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = c.nrows();
    if !c.is_square() || x.nrows() != p || x.ncols() != p {
        return Err(Error::DimensionMismatch("lyap_inverse_dense: shape mismatch".into()));
    }
    let k = LyapunovOp::new(c.clone(), tau).dense_matrix();
    let cond = condition_number(&k);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularSystem(format!("condition estimate {cond:.3e} exceeds 1e12")));
    }
    let sol = k
        .lu()
        .solve(&vec(x))
        .ok_or_else(|| Error::SingularSystem("LU factorization failed".into()))?;
    unvec(&sol, p)
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_matrix, random_spd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vec_is_column_stacking() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&x).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&vec(&x), 2).unwrap(), x);
        assert!(unvec(&DVector::zeros(3), 2).is_err());
    }

    #[test]
    fn vec_outer_is_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3, 1);
        let b = random_matrix(&mut rng, 3, 1);
        let lhs = vec(&(&a * b.transpose()));
        let rhs = kron(&b, &a);
        assert!((lhs - rhs.column(0)).norm() < 1e-14);
    }

    #[test]
    fn commutation_properties() {
        let p2 = commutation_matrix(2);
        let v = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((&p2 * v).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = commutation_matrix(3);
        assert_eq!(p.transpose(), p);
        assert_eq!(&p * &p, DMatrix::identity(9, 9));
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        assert!((&p * kron(&a, &b) * &p - kron(&b, &a)).norm() < 1e-13);
        let x = random_matrix(&mut rng, 3, 3);
        assert!((&p * vec(&x) - vec(&x.transpose())).norm() < 1e-15);
        assert_eq!(kron(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2)), DMatrix::identity(4, 4));
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let c = random_matrix(&mut rng, 3, 3);
        let lhs = kron(&c, &a) * vec(&b);
        let rhs = vec(&(&a * &b * c.transpose()));
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn lyap_apply_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let op = LyapunovOp::new(DMatrix::identity(2, 2), 0.0);
        assert_eq!(lyap_apply(&op, &x), &x * 2.0);
        let op = LyapunovOp::new(DMatrix::identity(2, 2), 1.0);
        assert_eq!(lyap_apply(&op, &DMatrix::identity(2, 2)), DMatrix::identity(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_matrix(&mut rng, 4, 4);
        let x = random_matrix(&mut rng, 4, 4);
        let op = LyapunovOp::new(c, 0.3);
        let dense = unvec(&(op.dense_matrix() * vec(&x)), 4).unwrap();
        assert!(rel_frobenius(&lyap_apply(&op, &x), &dense) < 1e-13);
    }

    #[test]
    fn lyap_inverse_examples() {
        let c = SpdMatrix::diagonal(&[1.0, 2.0]).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 3.0, 4.0]);
        let r = lyap_inverse_spd(&c, 0.0, &x).unwrap();
        assert!((r - DMatrix::from_element(2, 2, 1.0)).norm() < 1e-14);
        let ones = DMatrix::from_element(2, 2, 1.0);
        let r = lyap_inverse_spd(&c, 0.1, &ones).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0 / 1.9, 1.0 / 2.8, 1.0 / 2.8, 1.0 / 3.6]);
        assert!((&r - &expect).norm() < 1e-14);
        let rd = lyap_inverse_dense(c.matrix(), 0.1, &ones).unwrap();
        assert!((rd - expect).norm() < 1e-14);
        let id = SpdMatrix::identity(3);
        let r = lyap_inverse_spd(&id, 0.0, &(DMatrix::identity(3, 3) * 2.0)).unwrap();
        assert!((r - DMatrix::identity(3, 3)).norm() < 1e-15);
        assert!(matches!(lyap_inverse_spd(&c, 1.0, &ones), Err(Error::StabilityViolation(_))));
    }

    #[test]
    fn lyap_dense_scalar_and_nonsymmetric() {
        let a = 1.7;
        let tau = 0.3;
        let r = lyap_inverse_dense(&DMatrix::from_element(1, 1, a), tau, &DMatrix::from_element(1, 1, 2.0))
            .unwrap();
        assert!((r[(0, 0)] - 2.0 / (2.0 * a - tau * a * a)).abs() < 1e-14);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let id = DMatrix::identity(2, 2);
        let r = lyap_inverse_dense(&c, 0.0, &id).unwrap();
        assert!((lyap_apply(&LyapunovOp::new(c, 0.0), &r) - &id).norm() < 1e-9);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(lyap_inverse_dense(&sing, 0.0, &id), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn spd_validation() {
        assert!(matches!(
            SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])),
            Err(Error::NotSymmetric(_))
        ));
        assert!(matches!(
            SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])),
            Err(Error::NotPositiveDefinite(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spd(&mut rng, 5);
        let rec = s.eigvecs() * DMatrix::from_diagonal(s.eigvals()) * s.eigvecs().transpose();
        assert!(rel_frobenius(&rec, s.matrix()) < 1e-10);
        assert!(s.eigvals().as_slice().windows(2).all(|w| w[0] >= w[1]));
        let r = s.sqrt();
        assert!(rel_frobenius(&(r.matrix() * r.matrix()), s.matrix()) < 1e-12);
    }

    #[test]
    fn inverse_preserves_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 1..=8 {
            let c = random_spd(&mut rng, d);
            let x = symmetrize(&random_matrix(&mut rng, d, d));
            let r = lyap_inverse_spd(&c, 0.5 * lyap_tau_bound(&c), &x).unwrap();
            assert!((&r - r.transpose()).norm() <= 1e-12 * r.norm());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn inverse_round_trips(seed in any::<u64>(), d in 1usize..=8, half in any::<bool>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c = random_spd(&mut rng, d);
                let tau = if half { 0.5 * lyap_tau_bound(&c) } else { 0.0 };
                let x = symmetrize(&random_matrix(&mut rng, d, d));
                let r = lyap_inverse_spd(&c, tau, &x).unwrap();
                let back = lyap_apply(&LyapunovOp::new(c.matrix().clone(), tau), &r);
                prop_assert!(rel_frobenius(&back, &x) < 1e-10);
                let dense = lyap_inverse_dense(c.matrix(), tau, &x).unwrap();
                prop_assert!(rel_frobenius(&r, &dense) < 1e-10);
            }
        }
    }
}
