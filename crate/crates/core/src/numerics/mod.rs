//! Linear algebra kernels: sparse SPD factorization, the power-iteration norm
//! estimate, and PSD projection of small dense blocks.

mod cholesky;
mod sparse;

pub use cholesky::{reverse_cuthill_mckee, SpdFactor};
pub use sparse::{CsrMatrix, TripletBuilder};

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite (pivot {value:e} at original row {pivot})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
}

/// Stopping tolerance on the relative change of the Rayleigh quotient.
pub const NORMEST_TOLERANCE: f64 = 1e-4;
pub const NORMEST_MAX_ITERATIONS: usize = 100;

/// Power-iteration estimate of the 2-norm of a symmetric matrix.
///
/// Starts from the normalized all-ones vector so the estimate is reproducible.
/// If that start vector happens to be an eigenvector of a small eigenvalue
/// (a constant null space, for example) the iteration is restarted from a
/// fixed alternating vector.
pub fn normest(a: &CsrMatrix) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let ones = vec![1.0; n];
    let alternating: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0).collect();
    let first = power_iteration(a, ones);
    let second = power_iteration(a, alternating);
    first.max(second)
}

fn power_iteration(a: &CsrMatrix, mut v: Vec<f64>) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = 0.0f64;
    let mut av = vec![0.0; v.len()];
    for _ in 0..NORMEST_MAX_ITERATIONS {
        a.mul_vec_into(&v, &mut av);
        let next = norm(&av);
        if next == 0.0 {
            return 0.0;
        }
        let converged = (next - estimate).abs() <= NORMEST_TOLERANCE * next;
        estimate = next;
        v.iter_mut().zip(&av).for_each(|(x, y)| *x = y / next);
        if converged {
            break;
        }
    }
    estimate
}

/// Projects a small symmetric matrix onto the PSD cone by clamping negative
/// eigenvalues to zero. Matrices that are already PSD are returned unchanged.
pub fn psd_project(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return s.clone();
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let projected = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    // Symmetrize to remove rounding asymmetry from the reassembly.
    (&projected + projected.transpose()) * 0.5
}

/// Largest absolute eigenvalue of a dense symmetric matrix.
pub fn symmetric_spectral_norm(s: &DMatrix<f64>) -> f64 {
    s.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()))
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    s.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
