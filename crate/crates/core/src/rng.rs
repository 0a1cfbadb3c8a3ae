//! Seed derivation and random test-object generators.
//!
//! Every stochastic task draws from a stream keyed by `(master seed, task path)`:
//! the stream seed is the first eight bytes (little endian) of
//! `SHA-256(master.to_le_bytes() ‖ path)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::matrixkit::SpdMatrix;

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(master: u64, path: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(path.as_bytes());
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

pub fn stream(master: u64, path: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Matrix with i.i.d. standard normal entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

/// Haar-distributed orthogonal matrix (QR with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let qr = random_matrix(rng, d, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            let col = -q.column(k);
            q.set_column(k, &col);
        }
    }
    q
}

/// Random SPD matrix with eigenvalues uniform in `[0.2, 2.2]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize) -> SpdMatrix {
    let vals: Vec<f64> = (0..d).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
    random_spd_with_spectrum(rng, &vals)
}

pub fn random_spd_with_spectrum<R: Rng + ?Sized>(rng: &mut R, vals: &[f64]) -> SpdMatrix {
    let q = random_orthogonal(rng, vals.len());
    SpdMatrix::from_eigen(vals, &q).expect("positive spectrum")
}
