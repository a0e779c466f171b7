//! Matrix functions through eigen-decompositions.
//!
//! Hermitian generators use the unitary eigen-decomposition. General
//! generators go through a complex Schur form `A = Z·R·Zᴴ`; eigenvectors of
//! the triangular factor are obtained by back substitution and `f(A)` is
//! `S·f(Λ)·S⁻¹`, which is only trustworthy while `cond(S)` stays moderate.

use nalgebra::{DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::operator::{singular_values, ComplexMatrix};

/// Generators whose eigenvector matrix is worse conditioned than this are
/// treated as non-diagonalizable.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("matrix is not diagonalizable (eigenvector condition number {condition:e})")]
    NotDiagonalizable { condition: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// `A = S·diag(values)·S⁻¹` with unit-norm eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: ComplexMatrix,
    pub inverse_vectors: ComplexMatrix,
    /// 2-norm condition number of `vectors`.
    pub condition: f64,
}

impl EigenDecomposition {
    /// `S·diag(f(λ))·S⁻¹`.
    pub fn apply<F: Fn(Complex64) -> Complex64>(&self, f: F) -> ComplexMatrix {
        let scaled = ComplexMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |r, c| {
            self.vectors[(r, c)] * f(self.values[c])
        });
        scaled * &self.inverse_vectors
    }
}

pub fn eigendecompose(
    a: &ComplexMatrix,
    max_condition: f64,
) -> Result<EigenDecomposition, FunctionalError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(FunctionalError::NotSquare { rows, cols });
    }
    let n = rows;
    let (z, r) = Schur::new(a.clone()).unpack();
    let scale = r.norm().max(f64::MIN_POSITIVE);
    let tiny = 64.0 * f64::EPSILON * scale;

    // Upper triangular Y with R·Y = Y·diag(R).
    let mut y = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = r[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut num = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                num += r[(i, j)] * y[(j, k)];
            }
            let den = r[(i, i)] - lambda;
            if den.norm() <= tiny {
                // Repeated eigenvalue: the equation is consistent only when
                // the right-hand side vanishes too.
                if num.norm() <= 1e3 * tiny {
                    y[(i, k)] = Complex64::new(0.0, 0.0);
                } else {
                    return Err(FunctionalError::NotDiagonalizable {
                        condition: f64::INFINITY,
                    });
                }
            } else {
                y[(i, k)] = -num / den;
            }
        }
    }
    let mut vectors = z * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
    }
    let sv = singular_values(&vectors);
    let smallest = sv.last().copied().unwrap_or(1.0);
    let condition = if smallest > 0.0 {
        sv[0] / smallest
    } else {
        f64::INFINITY
    };
    if !(condition <= max_condition) {
        return Err(FunctionalError::NotDiagonalizable { condition });
    }
    let inverse_vectors = vectors
        .clone()
        .lu()
        .try_inverse()
        .ok_or(FunctionalError::NotDiagonalizable { condition })?;
    let values = (0..n).map(|i| r[(i, i)]).collect();
    Ok(EigenDecomposition {
        values,
        vectors,
        inverse_vectors,
        condition,
    })
}

/// `f(A)` for a Hermitian `A`, via `A = U·diag(λ)·Uᴴ`. Only the Hermitian
/// part of `a` is used.
pub fn hermitian_function<F: Fn(f64) -> Complex64>(a: &ComplexMatrix, f: F) -> ComplexMatrix {
    let herm = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let u = eig.eigenvectors;
    let values = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    let scaled = ComplexMatrix::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, c)] * values[c]);
    scaled * u.adjoint()
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Vec<f64> {
    let herm = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Eigenvalues of a general complex matrix from its Schur form, sorted by
/// real part then imaginary part.
pub fn eigenvalues(a: &ComplexMatrix) -> Vec<Complex64> {
    if a.is_empty() {
        return Vec::new();
    }
    let r = Schur::new(a.clone()).unpack().1;
    let mut values: Vec<Complex64> = (0..r.nrows()).map(|i| r[(i, i)]).collect();
    values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::op_norm;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn triangular_generator_is_reconstructed() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(2., 0.)]);
        let eig = eigendecompose(&a, DEFAULT_MAX_CONDITION).unwrap();
        let back = eig.apply(|z| z);
        assert!(op_norm(&(back - &a)) < 1e-14);
        // a² through the calculus against the product.
        let sq = eig.apply(|z| z * z);
        assert!(op_norm(&(sq - &a * &a)) < 1e-13);
    }

    #[test]
    fn repeated_eigenvalues_of_diagonalizable_matrix() {
        let s = ComplexMatrix::from_row_slice(
            3,
            3,
            &[c(1., 0.), c(0.3, 0.1), c(0., 0.2), c(0., 0.), c(1., 0.), c(0.5, 0.), c(0.2, 0.), c(0., 0.), c(1., 0.)],
        );
        let d = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1., 0.), c(2., 0.), c(1., 0.)]));
        let a = &s * d * s.clone().try_inverse().unwrap();
        let eig = eigendecompose(&a, DEFAULT_MAX_CONDITION).unwrap();
        let exp = eig.apply(|z| z.exp());
        // exp(A) = S·exp(D)·S⁻¹ computed independently.
        let expd = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(1f64.exp(), 0.), c(2f64.exp(), 0.), c(1f64.exp(), 0.)]));
        let oracle = &s * expd * s.try_inverse().unwrap();
        assert!(op_norm(&(exp - oracle)) < 1e-10);
    }

    #[test]
    fn jordan_block_is_rejected() {
        let a = ComplexMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(
            eigendecompose(&a, DEFAULT_MAX_CONDITION),
            Err(FunctionalError::NotDiagonalizable { .. })
        ));
    }

    #[test]
    fn hermitian_calculus_matches_diagonal() {
        let a = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(0.25, 0.), c(4., 0.)]));
        let root = hermitian_function(&a, |x| c(x.sqrt(), 0.));
        assert!((root[(0, 0)] - c(0.5, 0.)).norm() < 1e-15);
        assert!((root[(1, 1)] - c(2., 0.)).norm() < 1e-15);
        assert_eq!(hermitian_eigenvalues(&a), vec![0.25, 4.0]);
    }

    #[test]
    fn eigenvalues_of_symmetric_two_by_two() {
        let h = ComplexMatrix::from_row_slice(2, 2, &[c(2., 0.), c(1., 0.), c(1., 0.), c(3., 0.)]);
        let ev = eigenvalues(&h);
        let s5 = 5f64.sqrt();
        assert!((ev[0] - c((5. - s5) / 2., 0.)).norm() < 1e-14);
        assert!((ev[1] - c((5. + s5) / 2., 0.)).norm() < 1e-14);
    }
}
