//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Dependency-free and deterministic: the sweep order is fixed, so equal
//! inputs always produce bitwise-equal decompositions. Adequate for the
//! matrix sizes this crate works with (up to a few thousand); for larger
//! problems a tridiagonalization-based solver would be preferable.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// Convergence threshold relative to the Frobenius norm of the input.
const OFF_TOLERANCE: f64 = 1e-14;
/// Upper bound on full sweeps; cyclic Jacobi converges quadratically and
/// in practice needs fewer than 15 sweeps even at d = 1000.
const MAX_SWEEPS: usize = 64;

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order (ties keep the solver's
/// diagonal order). `vectors` holds the matching unit eigenvectors as
/// row-major rows; each row's largest-magnitude entry is made positive
/// (earliest index on ties) so the decomposition is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    /// `dim × dim` row-major; row `i` pairs with `eigenvalues[i]`.
    pub vectors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EigenError {
    #[error("matrix data length {len} does not match dimension {dim}")]
    BadShape { len: usize, dim: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("matrix contains a non-finite entry at [{i}][{j}]")]
    NonFinite { i: usize, j: usize },
    #[error("Jacobi iteration did not converge: off-diagonal residual {residual} after {sweeps} sweeps")]
    NoConvergence { residual: f64, sweeps: usize },
}

/// Decomposes a symmetric `dim × dim` matrix given in row-major order.
///
/// Symmetry is checked up to 1e-10 relative to the largest entry; the
/// strictly upper triangle is mirrored before iterating so the sweep sees
/// an exactly symmetric matrix.
pub fn symmetric_eigen(matrix: &[f64], dim: usize) -> Result<SymmetricEigen, EigenError> {
    if matrix.len() != dim * dim {
        return Err(EigenError::BadShape {
            len: matrix.len(),
            dim,
        });
    }
    let mut scale = 0.0f64;
    for (idx, &x) in matrix.iter().enumerate() {
        if !x.is_finite() {
            return Err(EigenError::NonFinite {
                i: idx / dim,
                j: idx % dim,
            });
        }
        scale = scale.max(x.abs());
    }
    let sym_tol = 1e-10 * scale.max(1.0);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let delta = (matrix[i * dim + j] - matrix[j * dim + i]).abs();
            if delta > sym_tol {
                return Err(EigenError::NotSymmetric { i, j, delta });
            }
        }
    }

    // Work on an exactly symmetric copy (upper triangle wins).
    let mut a = matrix.to_vec();
    for i in 0..dim {
        for j in (i + 1)..dim {
            a[j * dim + i] = a[i * dim + j];
        }
    }

    // v starts as the identity; columns accumulate the eigenvectors.
    let mut v = vec![0.0f64; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }

    let fro = sqrt(a.iter().map(|x| x * x).sum());
    let tol = OFF_TOLERANCE * fro.max(1.0);

    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&a, dim);
    while off > tol {
        if sweeps == MAX_SWEEPS {
            return Err(EigenError::NoConvergence {
                residual: off,
                sweeps,
            });
        }
        for p in 0..dim.saturating_sub(1) {
            for q in (p + 1)..dim {
                rotate(&mut a, &mut v, dim, p, q);
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&a, dim);
    }

    // Sort by eigenvalue descending, index ascending on exact ties.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        a[j * dim + j]
            .total_cmp(&a[i * dim + i])
            .then(i.cmp(&j))
    });

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut vectors = vec![0.0f64; dim * dim];
    for (row, &col) in order.iter().enumerate() {
        eigenvalues.push(a[col * dim + col]);
        for r in 0..dim {
            vectors[row * dim + r] = v[r * dim + col];
        }
        fix_sign(&mut vectors[row * dim..(row + 1) * dim]);
    }

    Ok(SymmetricEigen {
        dim,
        eigenvalues,
        vectors,
    })
}

/// Makes the largest-magnitude entry positive; first occurrence wins ties.
fn fix_sign(row: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    for (i, &x) in row.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if row[best] < 0.0 {
        for x in row.iter_mut() {
            *x = -*x;
        }
    }
}

fn off_diagonal_norm(a: &[f64], dim: usize) -> f64 {
    let mut sum = 0.0;
    for p in 0..dim {
        for q in (p + 1)..dim {
            sum += 2.0 * a[p * dim + q] * a[p * dim + q];
        }
    }
    sqrt(sum)
}

/// One Jacobi rotation annihilating a[p][q], accumulated into v's columns.
fn rotate(a: &mut [f64], v: &mut [f64], dim: usize, p: usize, q: usize) {
    let apq = a[p * dim + q];
    if apq == 0.0 {
        return;
    }
    let app = a[p * dim + p];
    let aqq = a[q * dim + q];
    let theta = (aqq - app) / (2.0 * apq);
    // Smaller-angle root of t^2 + 2t*theta - 1 = 0, for stability.
    let t = if theta >= 0.0 {
        1.0 / (theta + sqrt(1.0 + theta * theta))
    } else {
        -1.0 / (-theta + sqrt(1.0 + theta * theta))
    };
    let c = 1.0 / sqrt(1.0 + t * t);
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p * dim + p] = app - t * apq;
    a[q * dim + q] = aqq + t * apq;
    a[p * dim + q] = 0.0;
    a[q * dim + p] = 0.0;

    for j in 0..dim {
        if j == p || j == q {
            continue;
        }
        let ajp = a[j * dim + p];
        let ajq = a[j * dim + q];
        let njp = ajp - s * (ajq + tau * ajp);
        let njq = ajq + s * (ajp - tau * ajq);
        a[j * dim + p] = njp;
        a[p * dim + j] = njp;
        a[j * dim + q] = njq;
        a[q * dim + j] = njq;
    }
    for j in 0..dim {
        let vjp = v[j * dim + p];
        let vjq = v[j * dim + q];
        v[j * dim + p] = vjp - s * (vjq + tau * vjp);
        v[j * dim + q] = vjq + s * (vjp - tau * vjq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn residual(m: &[f64], dim: usize, lambda: f64, vec: &[f64]) -> f64 {
        let mut r = 0.0;
        for i in 0..dim {
            let mut mv = 0.0;
            for j in 0..dim {
                mv += m[i * dim + j] * vec[j];
            }
            let d = mv - lambda * vec[i];
            r += d * d;
        }
        sqrt(r)
    }

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let m = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = symmetric_eigen(&m, 3).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 2.0, 1.0]);
        assert_eq!(&e.vectors[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&e.vectors[3..6], &[0.0, 0.0, 1.0]);
        assert_eq!(&e.vectors[6..9], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = [2.0, 1.0, 1.0, 2.0];
        let e = symmetric_eigen(&m, 2).unwrap();
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert!((e.vectors[0] - inv_sqrt2).abs() < 1e-12);
        assert!((e.vectors[1] - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn zero_and_identity() {
        let z = [0.0; 9];
        let e = symmetric_eigen(&z, 3).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0, 0.0, 0.0]);
        // Identity input: eigenvectors span is unconstrained but the
        // decomposition must still be orthonormal with unit eigenvalues.
        let mut ident = [0.0; 16];
        for i in 0..4 {
            ident[i * 4 + i] = 1.0;
        }
        let e = symmetric_eigen(&ident, 4).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn one_dimensional() {
        let e = symmetric_eigen(&[-7.5], 1).unwrap();
        assert_eq!(e.eigenvalues, vec![-7.5]);
        assert_eq!(e.vectors, vec![1.0]);
    }

    #[test]
    fn random_matrices_meet_contract() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for trial in 0..40 {
            let dim = 1 + (trial % 12);
            let mut m = vec![0.0f64; dim * dim];
            for i in 0..dim {
                for j in i..dim {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    m[i * dim + j] = x;
                    m[j * dim + i] = x;
                }
            }
            let e = symmetric_eigen(&m, dim).unwrap();
            for i in 0..dim {
                let lam = e.eigenvalues[i];
                let row = &e.vectors[i * dim..(i + 1) * dim];
                assert!(
                    residual(&m, dim, lam, row) <= 1e-8 * lam.abs().max(1.0),
                    "residual bound violated at dim {dim}"
                );
                for j in 0..dim {
                    let other = &e.vectors[j * dim..(j + 1) * dim];
                    let g: f64 = row.iter().zip(other).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-9, "orthonormality violated");
                }
                if i > 0 {
                    assert!(e.eigenvalues[i - 1] >= lam, "not descending");
                }
            }
        }
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let m = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            symmetric_eigen(&m, 2),
            Err(EigenError::NotSymmetric { i: 0, j: 1, .. })
        ));
        let m = [1.0, f64::NAN, f64::NAN, 4.0];
        assert!(matches!(
            symmetric_eigen(&m, 2),
            Err(EigenError::NonFinite { .. })
        ));
        assert!(matches!(
            symmetric_eigen(&[1.0; 3], 2),
            Err(EigenError::BadShape { len: 3, dim: 2 })
        ));
    }

    #[test]
    fn deterministic_repeat() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let dim = 8;
        let mut m = vec![0.0f64; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let x: f64 = rng.gen_range(-2.0..2.0);
                m[i * dim + j] = x;
                m[j * dim + i] = x;
            }
        }
        let a = symmetric_eigen(&m, dim).unwrap();
        let b = symmetric_eigen(&m, dim).unwrap();
        assert_eq!(a, b);
    }
}
