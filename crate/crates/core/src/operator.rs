//! Dense complex operators and the linear algebra every other module is
//! built on.
//!
//! Operators are plain [`nalgebra::DMatrix`] values over [`Complex64`].
//! Rank decisions all go through one relative singular-value cutoff (see
//! [`Tolerances::rank_cutoff`]) and residual checks are relative to the norms
//! of the operators involved.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense complex matrix. Every operator in the crate (`H`, `T`, `W`, `χ`,
/// `χ̄`, `F`, `Q`, `Q#`, ...) has this representation.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Absolute residual threshold used when every norm in a relative test
/// vanishes.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("subspace is not invariant under the operator (leak {leak:e} > threshold {threshold:e})")]
    NotInvariant { leak: f64, threshold: f64 },
    #[error("operator is numerically singular on the subspace (smallest singular value {smallest:e} <= cutoff {cutoff:e})")]
    Singular { smallest: f64, cutoff: f64 },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("basis columns are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("tolerance `{name}` must be finite and strictly positive, got {value}")]
    InvalidTolerance { name: &'static str, value: f64 },
}

/// Numerical tolerance policy shared by all modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_rel: f64,
    /// Relative residual acceptance for identities and invariance checks.
    pub residual_rel: f64,
    /// Truncation threshold for the Neumann series.
    pub neumann_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: 1e-10,
            residual_rel: 1e-9,
            neumann_tol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn new(rank_rel: f64, residual_rel: f64, neumann_tol: f64) -> Result<Self, OperatorError> {
        for (name, value) in [
            ("rank_rel", rank_rel),
            ("residual_rel", residual_rel),
            ("neumann_tol", neumann_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(OperatorError::InvalidTolerance { name, value });
            }
        }
        Ok(Self {
            rank_rel,
            residual_rel,
            neumann_tol,
        })
    }

    /// Singular values at or below this value count as zero.
    pub fn rank_cutoff(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        self.rank_rel * sigma_max * rows.max(cols) as f64
    }

    /// Residual threshold relative to `scale`, falling back to
    /// [`ABSOLUTE_FLOOR`] when the scale vanishes.
    pub fn residual_threshold(&self, scale: f64) -> f64 {
        if scale > 0.0 {
            self.residual_rel * scale
        } else {
            ABSOLUTE_FLOOR
        }
    }

    /// Acceptance for quantities computed from numerical kernels, which lose
    /// about one digit against plain matrix identities.
    pub fn kernel_threshold(&self) -> f64 {
        10.0 * self.residual_rel
    }
}

/// A subspace of `C^n` stored as a matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: ComplexMatrix,
}

impl Subspace {
    /// Wraps `basis` after checking `basisᴴ·basis = 1` to within `1e-10`.
    pub fn from_orthonormal(basis: ComplexMatrix) -> Result<Self, OperatorError> {
        let k = basis.ncols();
        let gram = basis.adjoint() * &basis;
        let deviation = if k == 0 {
            0.0
        } else {
            op_norm(&(gram - ComplexMatrix::identity(k, k)))
        };
        if deviation > 1e-10 {
            return Err(OperatorError::NotOrthonormal(deviation));
        }
        Ok(Self { basis })
    }

    /// The whole space `C^n`.
    pub fn full(n: usize) -> Self {
        Self {
            basis: ComplexMatrix::identity(n, n),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            basis: ComplexMatrix::zeros(n, 0),
        }
    }

    /// Span of the given standard basis vectors.
    pub fn coordinate(n: usize, indices: &[usize]) -> Self {
        let mut basis = ComplexMatrix::zeros(n, indices.len());
        for (col, &i) in indices.iter().enumerate() {
            basis[(i, col)] = Complex64::new(1.0, 0.0);
        }
        Self { basis }
    }

    /// Span of arbitrary (not necessarily independent) columns.
    pub fn span(vectors: &ComplexMatrix, tol: &Tolerances) -> Self {
        column_space(vectors, tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    /// Orthogonal projector `B·Bᴴ`.
    pub fn projector(&self) -> ComplexMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// `op_norm((1 − B·Bᴴ)·M)`: how far the columns of `M` stick out of the
    /// subspace.
    pub fn leak_of(&self, m: &ComplexMatrix) -> f64 {
        let inside = &self.basis * (self.basis.adjoint() * m);
        op_norm(&(m - inside))
    }
}

/// Full SVD `M = U·diag(s)·Vᴴ` with `U` square of size `rows`, `V` square
/// of size `cols` and `s` descending, of length `min(rows, cols)`.
struct FullSvd {
    u: ComplexMatrix,
    s: Vec<f64>,
    v: ComplexMatrix,
}

fn full_svd(m: &ComplexMatrix) -> FullSvd {
    let (rows, cols) = m.shape();
    let fm = faer::Mat::<Complex64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    match fm.svd() {
        Ok(svd) => {
            let (u, sd, v) = (svd.U(), svd.S().column_vector(), svd.V());
            FullSvd {
                u: ComplexMatrix::from_fn(rows, rows, |i, j| u[(i, j)]),
                s: (0..sd.nrows()).map(|i| sd[i].re).collect(),
                v: ComplexMatrix::from_fn(cols, cols, |i, j| v[(i, j)]),
            }
        }
        // Only reached for non-finite input; every singular value is NaN so
        // all downstream tests fail.
        Err(_) => FullSvd {
            u: ComplexMatrix::identity(rows, rows),
            s: vec![f64::NAN; rows.min(cols)],
            v: ComplexMatrix::identity(cols, cols),
        },
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let fm = faer::Mat::<Complex64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let mut s = fm
        .singular_values()
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())]);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Operator 2-norm (largest singular value). Zero for empty matrices.
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value of a square matrix; `None` for empty matrices.
pub fn smallest_singular_value(m: &ComplexMatrix) -> Option<f64> {
    singular_values(m).last().copied()
}

pub fn check_finite(m: &ComplexMatrix) -> Result<(), OperatorError> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let z = m[(row, col)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(OperatorError::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// Orthonormal basis of the numerical null space of `m`.
///
/// A singular value `σ` is zero iff `σ ≤ rank_rel · σ_max · max(rows, cols)`.
pub fn kernel_basis(m: &ComplexMatrix, tol: &Tolerances) -> Subspace {
    kernel_below(m, |sigma_max, rows, cols| tol.rank_cutoff(sigma_max, rows, cols))
}

/// Kernel of `A` restricted to `V`, as a subspace of the ambient space.
/// Singular values are judged against the norm of the full operator, as in
/// [`singularity_margin`].
pub fn restricted_kernel(a: &ComplexMatrix, v: &Subspace, tol: &Tolerances) -> Result<Subspace, OperatorError> {
    check_square_on(a, v)?;
    let n = a.nrows();
    let cutoff = tol.rank_cutoff(op_norm(a), n, n);
    let coords = kernel_below(&(a * v.basis()), |_, _, _| cutoff);
    Ok(Subspace {
        basis: canonical_basis(&(v.basis() * coords.basis())),
    })
}

fn kernel_below<C: Fn(f64, usize, usize) -> f64>(m: &ComplexMatrix, cutoff_for: C) -> Subspace {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Subspace::zero(0);
    }
    if rows == 0 {
        return Subspace::full(cols);
    }
    let svd = full_svd(m);
    let sigma_max = svd.s.iter().copied().fold(0.0, f64::max);
    let cutoff = cutoff_for(sigma_max, rows, cols);
    // Right singular vectors beyond min(rows, cols) are null directions.
    let null: Vec<usize> = (0..cols)
        .filter(|&i| svd.s.get(i).is_none_or(|&sigma| sigma <= cutoff))
        .collect();
    let picked = ComplexMatrix::from_fn(cols, null.len(), |r, c| svd.v[(r, null[c])]);
    Subspace {
        basis: canonical_basis(&picked),
    }
}

/// Orthonormal basis of the numerical column space of `m`, with the same
/// cutoff rule as [`kernel_basis`].
pub fn column_space(m: &ComplexMatrix, tol: &Tolerances) -> Subspace {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Subspace::zero(rows);
    }
    let svd = full_svd(m);
    let sigma_max = svd.s.iter().copied().fold(0.0, f64::max);
    let cutoff = tol.rank_cutoff(sigma_max, rows, cols);
    let range: Vec<usize> = (0..svd.s.len())
        .filter(|&i| svd.s[i] > cutoff && sigma_max > 0.0)
        .collect();
    let picked = ComplexMatrix::from_fn(rows, range.len(), |r, c| svd.u[(r, range[c])]);
    Subspace {
        basis: canonical_basis(&picked),
    }
}

/// Re-expresses the span of the orthonormal columns of `q` in a gauge that
/// depends only on the subspace: pivoted Gram–Schmidt on the columns of the
/// projector `q·qᴴ`, each resulting column rotated so that its first
/// significant entry is real and positive.
fn canonical_basis(q: &ComplexMatrix) -> ComplexMatrix {
    let (n, k) = q.shape();
    if k == 0 {
        return ComplexMatrix::zeros(n, 0);
    }
    if k == n {
        return ComplexMatrix::identity(n, n);
    }
    let mut work = q * q.adjoint();
    let mut used = vec![false; n];
    let mut out = ComplexMatrix::zeros(n, k);
    for j in 0..k {
        let norms: Vec<f64> = (0..n)
            .map(|c| if used[c] { -1.0 } else { work.column(c).norm() })
            .collect();
        let best = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Near-ties go to the lowest index so the choice is stable.
        let pivot = (0..n)
            .find(|&c| !used[c] && norms[c] >= best * (1.0 - 1e-12))
            .expect("k < n leaves unused columns");
        used[pivot] = true;
        let mut v = work.column(pivot).clone_owned();
        for _ in 0..2 {
            for i in 0..j {
                let qi = out.column(i);
                let proj = qi.dotc(&v);
                v -= qi * proj;
            }
        }
        let norm = v.norm();
        v /= Complex64::new(norm, 0.0);
        fix_phase(v.as_mut_slice());
        out.set_column(j, &v);
        let coeffs = v.adjoint() * &work;
        work -= &v * coeffs;
    }
    out
}

/// Rotates `v` so its first significant entry is real and positive.
pub(crate) fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-10 * max).copied() {
        let phase = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Coordinate representation of an operator on a subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedMap {
    /// `Bᴴ·A·B`.
    pub coords: ComplexMatrix,
    /// `op_norm((1 − B·Bᴴ)·A·B)`; zero iff `A` maps the subspace into itself.
    pub leak: f64,
}

fn check_square_on(a: &ComplexMatrix, v: &Subspace) -> Result<(), OperatorError> {
    if !a.is_square() || a.nrows() != v.ambient_dim() {
        return Err(OperatorError::DimensionMismatch(format!(
            "operator is {}x{}, subspace lives in dimension {}",
            a.nrows(),
            a.ncols(),
            v.ambient_dim()
        )));
    }
    Ok(())
}

pub fn restricted_map(a: &ComplexMatrix, v: &Subspace) -> Result<RestrictedMap, OperatorError> {
    check_square_on(a, v)?;
    let b = v.basis();
    let ab = a * b;
    let coords = b.adjoint() * &ab;
    let leak = op_norm(&(&ab - b * &coords));
    Ok(RestrictedMap { coords, leak })
}

/// Smallest singular value of `A` on `V` together with the cutoff below
/// which `A` counts as singular there. The cutoff is relative to the norm of
/// the full operator, so a small block of a large operator is judged on the
/// operator's scale.
pub fn singularity_margin(
    a: &ComplexMatrix,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<(f64, f64), OperatorError> {
    let map = restricted_map(a, v)?;
    let n = a.nrows();
    let cutoff = tol.rank_cutoff(op_norm(a), n, n);
    let smallest = smallest_singular_value(&map.coords).unwrap_or(f64::INFINITY);
    Ok((smallest, cutoff))
}

/// Inverse of `A` restricted to `V`, extended by zero on the orthogonal
/// complement: `G = B·(Bᴴ·A·B)⁻¹·Bᴴ`.
pub fn restricted_inverse(
    a: &ComplexMatrix,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<ComplexMatrix, OperatorError> {
    let map = restricted_map(a, v)?;
    let n = a.nrows();
    let a_norm = op_norm(a);
    let threshold = tol.residual_threshold(a_norm);
    if map.leak > threshold {
        return Err(OperatorError::NotInvariant {
            leak: map.leak,
            threshold,
        });
    }
    if v.dim() == 0 {
        return Ok(ComplexMatrix::zeros(n, n));
    }
    let cutoff = tol.rank_cutoff(a_norm, n, n);
    let smallest = smallest_singular_value(&map.coords).unwrap_or(0.0);
    if smallest <= cutoff {
        return Err(OperatorError::Singular { smallest, cutoff });
    }
    let inv = map
        .coords
        .lu()
        .try_inverse()
        .ok_or(OperatorError::Singular { smallest, cutoff })?;
    let b = v.basis();
    Ok(b * inv * b.adjoint())
}

/// Full inverse with the shared singularity policy.
pub fn inverse(a: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix, OperatorError> {
    if !a.is_square() {
        return Err(OperatorError::DimensionMismatch(format!(
            "cannot invert a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    restricted_inverse(a, &Subspace::full(a.nrows()), tol)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// `op_norm(lhs − rhs) / (1 + scale)`, the relative residual used for every
/// identity check.
pub fn relative_residual(lhs: &ComplexMatrix, rhs: &ComplexMatrix, scale: f64) -> f64 {
    op_norm(&(lhs - rhs)) / (1.0 + scale)
}

pub fn is_hermitian(m: &ComplexMatrix, tol: &Tolerances) -> (bool, f64) {
    let residual = op_norm(&(m - m.adjoint()));
    (residual <= tol.residual_threshold(op_norm(m)), residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x)))
    }

    fn diag(d: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|&x| c(x))))
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(op_norm(&ComplexMatrix::zeros(3, 3)), 0.0);
        assert_abs_diff_eq!(op_norm(&identity(4)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(op_norm(&real(2, 2, &[0.0, 1.0, 1.0, 0.0])), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let tol = Tolerances::default();
        assert_eq!(kernel_basis(&identity(5), &tol).dim(), 0);
        assert_eq!(kernel_basis(&ComplexMatrix::zeros(2, 2), &tol).dim(), 2);

        let k = kernel_basis(&real(2, 2, &[1.0, 1.0, 1.0, 1.0]), &tol);
        assert_eq!(k.dim(), 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(k.basis()[(0, 0)].re, s, epsilon = 1e-14);
        assert_abs_diff_eq!(k.basis()[(1, 0)].re, -s, epsilon = 1e-14);
        assert_abs_diff_eq!(k.basis()[(1, 0)].im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kernel_of_wide_matrix() {
        let tol = Tolerances::default();
        let k = kernel_basis(&real(1, 3, &[1.0, 2.0, 3.0]), &tol);
        assert_eq!(k.dim(), 2);
        let m = real(1, 3, &[1.0, 2.0, 3.0]);
        assert!(op_norm(&(m * k.basis())) < 1e-14);
    }

    #[test]
    fn column_space_examples() {
        let tol = Tolerances::default();
        let s = column_space(&diag(&[1.0, 0.0]), &tol);
        assert_eq!(s.basis(), &real(2, 1, &[1.0, 0.0]));

        let s = column_space(&real(2, 1, &[1.0, 1.0]), &tol);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.basis()[(0, 0)].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(s.basis()[(1, 0)].re, r, epsilon = 1e-15);

        assert_eq!(column_space(&identity(3), &tol).dim(), 3);
        assert_eq!(column_space(&ComplexMatrix::zeros(3, 3), &tol).dim(), 0);
    }

    #[test]
    fn coordinate_projections_get_coordinate_bases() {
        let tol = Tolerances::default();
        let s = column_space(&diag(&[1.0, 0.0, 1.0, 1.0, 0.0]), &tol);
        assert_eq!(s, Subspace::coordinate(5, &[0, 2, 3]));
    }

    #[test]
    fn restricted_map_examples() {
        let m = restricted_map(&identity(3), &Subspace::coordinate(3, &[0, 2])).unwrap();
        assert_eq!(m.coords, identity(2));
        assert_eq!(m.leak, 0.0);

        let m = restricted_map(&diag(&[2.0, 3.0]), &Subspace::coordinate(2, &[1])).unwrap();
        assert_eq!(m.coords, real(1, 1, &[3.0]));
        assert_eq!(m.leak, 0.0);

        let nil = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m = restricted_map(&nil, &Subspace::coordinate(2, &[0])).unwrap();
        assert_eq!((m.coords[(0, 0)], m.leak), (c(0.0), 0.0));
        let m = restricted_map(&nil, &Subspace::coordinate(2, &[1])).unwrap();
        assert_eq!(m.coords[(0, 0)], c(0.0));
        assert_abs_diff_eq!(m.leak, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn restricted_inverse_examples() {
        let tol = Tolerances::default();
        let g = restricted_inverse(&diag(&[2.0, 3.0]), &Subspace::coordinate(2, &[1]), &tol).unwrap();
        assert_abs_diff_eq!(op_norm(&(g - diag(&[0.0, 1.0 / 3.0]))), 0.0, epsilon = 1e-15);

        let g = restricted_inverse(&identity(3), &Subspace::full(3), &tol).unwrap();
        assert_eq!(g, identity(3));

        let err = restricted_inverse(&diag(&[0.0, 3.0]), &Subspace::coordinate(2, &[0]), &tol);
        assert!(matches!(err, Err(OperatorError::Singular { .. })));

        let nil = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let err = restricted_inverse(&nil, &Subspace::coordinate(2, &[1]), &tol);
        assert!(matches!(err, Err(OperatorError::NotInvariant { .. })));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = restricted_map(&identity(3), &Subspace::full(2));
        assert!(matches!(err, Err(OperatorError::DimensionMismatch(_))));
    }

    #[test]
    fn tolerances_reject_nonpositive() {
        assert!(Tolerances::new(0.0, 1e-9, 1e-12).is_err());
        assert!(Tolerances::new(1e-10, f64::NAN, 1e-12).is_err());
        assert!(Tolerances::new(1e-10, 1e-9, 1e-12).is_ok());
    }

    #[test]
    fn from_orthonormal_rejects_skewed_columns() {
        let b = real(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(Subspace::from_orthonormal(b), Err(OperatorError::NotOrthonormal(_))));
    }

    #[test]
    fn non_finite_entries_are_located() {
        let mut m = identity(2);
        m[(1, 0)] = Complex64::new(0.0, f64::INFINITY);
        assert_eq!(check_finite(&m), Err(OperatorError::NonFinite { row: 1, col: 0 }));
    }
}
