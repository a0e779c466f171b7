//! Partition pairs `(χ, χ̄)`: commuting, nonzero operators with
//! `χ² + χ̄² = 1`.
//!
//! Three constructors cover the cases of interest: sharp projections
//! (`χ = P`, `χ̄ = 1 − P`), smooth self-adjoint cutoffs of a Hermitian
//! generator, and non-self-adjoint pairs `χ = sin θ(A)`, `χ̄ = cos θ(A)` of a
//! diagonalizable generator. Reference operators `T` that commute with such a
//! partition come from [`make_commuting_t`].

use num_complex::Complex64;
use thiserror::Error;

use crate::functional::{eigendecompose, hermitian_function, FunctionalError, DEFAULT_MAX_CONDITION};
use crate::operator::{check_finite, identity, is_hermitian, op_norm, ComplexMatrix, OperatorError, Tolerances};
use crate::report::ResidualReport;

/// Operators with norm below this count as zero.
pub const ZERO_OPERATOR_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionInvariant {
    Commutation,
    UnitySum,
    ChiNonzero,
    ChibarNonzero,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("partition invariant {invariant:?} violated (residual {residual:e}, threshold {threshold:e})")]
    PartitionInvalid {
        invariant: PartitionInvariant,
        residual: f64,
        threshold: f64,
    },
    #[error("projection is not idempotent (‖P² − P‖ = {residual:e} > {threshold:e})")]
    NotIdempotent { residual: f64, threshold: f64 },
    #[error("generator is not Hermitian (‖A − Aᴴ‖ = {residual:e})")]
    NotHermitian { residual: f64 },
    #[error("cutoff value {value} at eigenvalue {at} is outside [0, 1]")]
    CutoffOutOfRange { value: f64, at: f64 },
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// A validated partition pair. Construction goes through
/// [`validate_partition`] or one of the `make_*` constructors.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    chi: ComplexMatrix,
    chibar: ComplexMatrix,
    evidence: ResidualReport,
}

impl Partition {
    pub fn chi(&self) -> &ComplexMatrix {
        &self.chi
    }

    pub fn chibar(&self) -> &ComplexMatrix {
        &self.chibar
    }

    pub fn evidence(&self) -> &ResidualReport {
        &self.evidence
    }

    pub fn dim(&self) -> usize {
        self.chi.nrows()
    }

    /// `(χᴴ, χ̄ᴴ)`, again a partition.
    pub fn adjoint(&self, tol: &Tolerances) -> Result<Partition, PartitionError> {
        validate_partition(self.chi.adjoint(), self.chibar.adjoint(), tol)
    }

    /// Whether `χ` is a projection with `χ̄ = 1 − χ`.
    pub fn is_sharp(&self, tol: &Tolerances) -> bool {
        let chi = &self.chi;
        let idem = op_norm(&(chi * chi - chi));
        let comp = op_norm(&(chi + &self.chibar - identity(self.dim())));
        let scale = 1.0 + op_norm(chi).powi(2);
        idem <= tol.residual_threshold(scale) && comp <= tol.residual_threshold(scale)
    }
}

pub fn validate_partition(
    chi: ComplexMatrix,
    chibar: ComplexMatrix,
    tol: &Tolerances,
) -> Result<Partition, PartitionError> {
    if !chi.is_square() || chi.shape() != chibar.shape() {
        return Err(PartitionError::DimensionMismatch(format!(
            "chi is {}x{}, chibar is {}x{}",
            chi.nrows(),
            chi.ncols(),
            chibar.nrows(),
            chibar.ncols()
        )));
    }
    check_finite(&chi)?;
    check_finite(&chibar)?;
    let n = chi.nrows();
    let chi_norm = op_norm(&chi);
    let chibar_norm = op_norm(&chibar);
    if chi_norm < ZERO_OPERATOR_NORM {
        return Err(PartitionError::PartitionInvalid {
            invariant: PartitionInvariant::ChiNonzero,
            residual: chi_norm,
            threshold: ZERO_OPERATOR_NORM,
        });
    }
    if chibar_norm < ZERO_OPERATOR_NORM {
        return Err(PartitionError::PartitionInvalid {
            invariant: PartitionInvariant::ChibarNonzero,
            residual: chibar_norm,
            threshold: ZERO_OPERATOR_NORM,
        });
    }

    let mut evidence = ResidualReport::new();
    let commutator = op_norm(&(&chi * &chibar - &chibar * &chi));
    let commutator_threshold = tol.residual_threshold(chi_norm * chibar_norm);
    evidence.push("partition_commutation", commutator, commutator_threshold);
    let unity = op_norm(&(&chi * &chi + &chibar * &chibar - identity(n)));
    let unity_threshold = tol.residual_threshold(1.0 + chi_norm * chi_norm + chibar_norm * chibar_norm);
    evidence.push("partition_unity", unity, unity_threshold);

    if commutator > commutator_threshold {
        return Err(PartitionError::PartitionInvalid {
            invariant: PartitionInvariant::Commutation,
            residual: commutator,
            threshold: commutator_threshold,
        });
    }
    if !(unity <= unity_threshold) {
        return Err(PartitionError::PartitionInvalid {
            invariant: PartitionInvariant::UnitySum,
            residual: unity,
            threshold: unity_threshold,
        });
    }
    Ok(Partition { chi, chibar, evidence })
}

/// Sharp partition `(P, 1 − P)` of an idempotent `P` (orthogonal or
/// oblique).
pub fn make_sharp(p: &ComplexMatrix, tol: &Tolerances) -> Result<Partition, PartitionError> {
    if !p.is_square() {
        return Err(PartitionError::DimensionMismatch(format!(
            "projection must be square, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    check_finite(p)?;
    let residual = op_norm(&(p * p - p));
    let threshold = tol.residual_threshold(1.0 + op_norm(p).powi(2));
    if !(residual <= threshold) {
        return Err(PartitionError::NotIdempotent { residual, threshold });
    }
    let mut partition = validate_partition(p.clone(), identity(p.nrows()) - p, tol)?;
    partition.evidence.push("projection_idempotence", residual, threshold);
    Ok(partition)
}

/// Smooth self-adjoint partition `χ = f(H_f)`, `χ̄ = √(1 − f²)(H_f)`.
pub fn make_smooth_selfadjoint<F: Fn(f64) -> f64>(
    hf: &ComplexMatrix,
    f: F,
    tol: &Tolerances,
) -> Result<Partition, PartitionError> {
    require_hermitian(hf, tol)?;
    for lambda in crate::functional::hermitian_eigenvalues(hf) {
        let value = f(lambda);
        if !(0.0..=1.0).contains(&value) {
            return Err(PartitionError::CutoffOutOfRange { value, at: lambda });
        }
    }
    let chi = hermitian_function(hf, |x| Complex64::new(f(x), 0.0));
    let chibar = hermitian_function(hf, |x| {
        let v = f(x);
        Complex64::new((1.0 - v * v).max(0.0).sqrt(), 0.0)
    });
    validate_partition(chi, chibar, tol)
}

/// Non-self-adjoint partition `χ = sin θ(A)`, `χ̄ = cos θ(A)` for a
/// diagonalizable generator `A`.
pub fn make_nonselfadjoint<F: Fn(Complex64) -> Complex64>(
    a: &ComplexMatrix,
    theta: F,
    tol: &Tolerances,
) -> Result<Partition, PartitionError> {
    make_nonselfadjoint_with(a, theta, DEFAULT_MAX_CONDITION, tol)
}

pub fn make_nonselfadjoint_with<F: Fn(Complex64) -> Complex64>(
    a: &ComplexMatrix,
    theta: F,
    max_condition: f64,
    tol: &Tolerances,
) -> Result<Partition, PartitionError> {
    check_finite(a)?;
    let eig = eigendecompose(a, max_condition)?;
    let chi = eig.apply(|z| theta(z).sin());
    let chibar = eig.apply(|z| theta(z).cos());
    validate_partition(chi, chibar, tol)
}

/// `T = g(generator)`. Hermitian generators use the unitary calculus, all
/// others the eigenvector calculus with the default conditioning guard.
pub fn make_commuting_t<G: Fn(Complex64) -> Complex64>(
    generator: &ComplexMatrix,
    g: G,
    tol: &Tolerances,
) -> Result<ComplexMatrix, PartitionError> {
    check_finite(generator)?;
    if !generator.is_square() {
        return Err(PartitionError::DimensionMismatch(format!(
            "generator must be square, got {}x{}",
            generator.nrows(),
            generator.ncols()
        )));
    }
    if is_hermitian(generator, tol).0 {
        Ok(hermitian_function(generator, |x| g(Complex64::new(x, 0.0))))
    } else {
        Ok(eigendecompose(generator, DEFAULT_MAX_CONDITION)?.apply(g))
    }
}

/// Spectral projection of a diagonalizable generator onto the eigenvalues
/// selected by `keep`.
pub fn spectral_projection<K: Fn(Complex64) -> bool>(
    generator: &ComplexMatrix,
    keep: K,
    tol: &Tolerances,
) -> Result<ComplexMatrix, PartitionError> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    make_commuting_t(generator, |z| if keep(z) { one } else { zero }, tol)
}

/// C¹ smoothstep cutoff: 1 for `x ≤ 0`, `1 − 3x² + 2x³` on `[0, 1]`, 0 for
/// `x ≥ 1`.
pub fn smoothstep_cutoff(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        1.0 - 3.0 * x * x + 2.0 * x * x * x
    }
}

fn require_hermitian(a: &ComplexMatrix, tol: &Tolerances) -> Result<(), PartitionError> {
    check_finite(a)?;
    if !a.is_square() {
        return Err(PartitionError::DimensionMismatch(format!(
            "generator must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let (ok, residual) = is_hermitian(a, tol);
    if ok {
        Ok(())
    } else {
        Err(PartitionError::NotHermitian { residual })
    }
}
