//! Small shared helpers for complex Hermitian matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{GgutError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest |A - A†| entry.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Rejects matrices that deviate from Hermiticity by more than `tol`.
pub fn check_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let dev = hermiticity_deviation(m);
    if dev > tol {
        return Err(GgutError::NotHermitian { max_dev: dev });
    }
    Ok(())
}

/// (A + A†)/2, used to scrub accumulated roundoff.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns (eigenvalues, eigenvectors-as-columns) with m = V diag(w) V†.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let se = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vals.push(se.eigenvalues[i]);
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Frobenius norm of A - B.
pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Complex matrix from a real one.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        hermitize(&raw)
    }

    #[test]
    fn eigh_reconstructs_input() {
        let m = random_hermitian(5, 7);
        let (w, v) = eigh(&m);
        let d = CMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                Complex64::new(w[i], 0.0)
            } else {
                Complex64::default()
            }
        });
        let rebuilt = &v * d * v.adjoint();
        assert_relative_eq!((rebuilt - &m).norm(), 0.0, epsilon = 1e-12);
        for k in 1..w.len() {
            assert!(w[k] >= w[k - 1]);
        }
    }

    #[test]
    fn hermiticity_check_rejects() {
        let mut m = random_hermitian(3, 1);
        m[(0, 1)] += Complex64::new(1e-6, 0.0);
        assert!(check_hermitian(&m, 1e-8).is_err());
        assert!(check_hermitian(&m, 1e-3).is_ok());
    }
}
