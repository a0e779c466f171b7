//! Feshbach pairs `(H, T)` for a partition, the smooth Feshbach map and the
//! auxiliary operators `Q`, `Q#`.
//!
//! Inverses on `Ran χ̄` are stored zero-extended to the whole space, so the
//! sandwiches `χ̄·H_χ̄⁻¹·χ̄` and `χ̄·T⁻¹·χ̄` are literal matrix products.

use thiserror::Error;

use crate::operator::{
    check_finite, column_space, op_norm, restricted_inverse, ComplexMatrix, OperatorError, Subspace,
    Tolerances,
};
use crate::partition::Partition;
use crate::report::ResidualReport;

/// Default cap on Neumann series length.
pub const DEFAULT_MAX_NEUMANN_TERMS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Chi,
    Chibar,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PairError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("T does not commute with {side:?} (residual {residual:e} > {threshold:e})")]
    ConditionAViolated {
        side: Side,
        residual: f64,
        threshold: f64,
    },
    #[error("{operator} is not bounded invertible on Ran χ̄: {source}")]
    ConditionBViolated {
        operator: &'static str,
        source: OperatorError,
    },
    #[error("T is not bounded invertible on Ran χ̄: {0}")]
    ConditionBPrimeViolated(OperatorError),
    #[error("Neumann series is not contractive (‖χ̄WT⁻¹χ̄‖ = {norm} >= 1)")]
    NotContractive { norm: f64 },
}

/// A validated Feshbach pair together with every derived operator.
#[derive(Debug, Clone)]
pub struct FeshbachPair {
    h: ComplexMatrix,
    t: ComplexMatrix,
    partition: Partition,
    w: ComplexMatrix,
    w_chi: ComplexMatrix,
    w_chibar: ComplexMatrix,
    h_chi: ComplexMatrix,
    h_chibar: ComplexMatrix,
    ran_chibar: Subspace,
    h_chibar_inv: ComplexMatrix,
    t_inv_bar: ComplexMatrix,
    evidence: ResidualReport,
}

impl FeshbachPair {
    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }
    pub fn t(&self) -> &ComplexMatrix {
        &self.t
    }
    pub fn partition(&self) -> &Partition {
        &self.partition
    }
    pub fn chi(&self) -> &ComplexMatrix {
        self.partition.chi()
    }
    pub fn chibar(&self) -> &ComplexMatrix {
        self.partition.chibar()
    }
    /// `W = H − T`.
    pub fn w(&self) -> &ComplexMatrix {
        &self.w
    }
    /// `χWχ`.
    pub fn w_chi(&self) -> &ComplexMatrix {
        &self.w_chi
    }
    /// `χ̄Wχ̄`.
    pub fn w_chibar(&self) -> &ComplexMatrix {
        &self.w_chibar
    }
    /// `T + χWχ`.
    pub fn h_chi(&self) -> &ComplexMatrix {
        &self.h_chi
    }
    /// `T + χ̄Wχ̄`.
    pub fn h_chibar(&self) -> &ComplexMatrix {
        &self.h_chibar
    }
    pub fn ran_chibar(&self) -> &Subspace {
        &self.ran_chibar
    }
    /// Inverse of `H_χ̄` on `Ran χ̄`, zero on its orthogonal complement.
    pub fn h_chibar_inv(&self) -> &ComplexMatrix {
        &self.h_chibar_inv
    }
    /// Inverse of `T` on `Ran χ̄`, zero on its orthogonal complement.
    pub fn t_inv_bar(&self) -> &ComplexMatrix {
        &self.t_inv_bar
    }
    pub fn evidence(&self) -> &ResidualReport {
        &self.evidence
    }
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `χ̄·H_χ̄⁻¹·χ̄`.
    pub fn reduced_resolvent(&self) -> ComplexMatrix {
        self.chibar() * &self.h_chibar_inv * self.chibar()
    }

    /// `χ̄·T⁻¹·χ̄`.
    pub fn free_resolvent(&self) -> ComplexMatrix {
        self.chibar() * &self.t_inv_bar * self.chibar()
    }
}

fn commutation_check(
    t: &ComplexMatrix,
    x: &ComplexMatrix,
    tol: &Tolerances,
) -> (f64, f64) {
    let residual = op_norm(&(x * t - t * x));
    (residual, tol.residual_threshold(op_norm(x) * op_norm(t)))
}

pub fn build_pair(
    h: ComplexMatrix,
    t: ComplexMatrix,
    partition: Partition,
    tol: &Tolerances,
) -> Result<FeshbachPair, PairError> {
    let n = partition.dim();
    if h.shape() != (n, n) || t.shape() != (n, n) {
        return Err(PairError::DimensionMismatch(format!(
            "H is {}x{}, T is {}x{}, partition has dimension {n}",
            h.nrows(),
            h.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    check_finite(&h)?;
    check_finite(&t)?;
    let mut evidence = ResidualReport::new();

    for (side, x) in [(Side::Chi, partition.chi()), (Side::Chibar, partition.chibar())] {
        let (residual, threshold) = commutation_check(&t, x, tol);
        let label = match side {
            Side::Chi => "condition_a_chi",
            Side::Chibar => "condition_a_chibar",
        };
        evidence.push(label, residual, threshold);
        if residual > threshold {
            return Err(PairError::ConditionAViolated {
                side,
                residual,
                threshold,
            });
        }
    }

    let chi = partition.chi();
    let chibar = partition.chibar();
    let w = &h - &t;
    let w_chi = chi * &w * chi;
    let w_chibar = chibar * &w * chibar;
    let h_chi = &t + &w_chi;
    let h_chibar = &t + &w_chibar;
    let ran_chibar = column_space(chibar, tol);

    let t_inv_bar = restricted_inverse(&t, &ran_chibar, tol).map_err(|source| {
        PairError::ConditionBViolated {
            operator: "T",
            source,
        }
    })?;
    let h_chibar_inv = restricted_inverse(&h_chibar, &ran_chibar, tol).map_err(|source| {
        PairError::ConditionBViolated {
            operator: "H_chibar",
            source,
        }
    })?;
    evidence.push_info("condition_b_ran_chibar_dim", ran_chibar.dim() as f64);
    evidence.push_info("condition_b_t_inverse_norm", op_norm(&t_inv_bar));
    evidence.push_info("condition_b_h_chibar_inverse_norm", op_norm(&h_chibar_inv));
    // Bounded automatically in finite dimension; recorded only.
    let c_operator = chibar * &h_chibar_inv * chibar * &w * chi;
    evidence.push_info("condition_c_norm", op_norm(&c_operator));

    Ok(FeshbachPair {
        h,
        t,
        partition,
        w,
        w_chi,
        w_chibar,
        h_chi,
        h_chibar,
        ran_chibar,
        h_chibar_inv,
        t_inv_bar,
        evidence,
    })
}

/// The Feshbach map `F` and the auxiliary operators `Q`, `Q#`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeshbachData {
    pub f: ComplexMatrix,
    pub q: ComplexMatrix,
    pub q_sharp: ComplexMatrix,
}

/// ```text
/// F  = H_χ − χ·W·χ̄·H_χ̄⁻¹·χ̄·W·χ
/// Q  = χ − χ̄·H_χ̄⁻¹·χ̄·W·χ
/// Q# = χ − χ·W·χ̄·H_χ̄⁻¹·χ̄
/// ```
pub fn feshbach_map(pair: &FeshbachPair) -> FeshbachData {
    let chi = pair.chi();
    let w = pair.w();
    let sandwich = pair.reduced_resolvent();
    let right = &sandwich * w * chi;
    let f = pair.h_chi() - chi * w * &right;
    let q = chi - &right;
    let q_sharp = chi - chi * w * &sandwich;
    FeshbachData { f, q, q_sharp }
}

const C_PRIME_LEFT: &str = "neumann_left_contraction";
const C_PRIME_RIGHT: &str = "neumann_right_contraction";

/// Largest value accepted as "< 1".
fn below_one() -> f64 {
    1.0f64.next_down()
}

/// Checks the sufficient conditions for a Feshbach pair starting from raw
/// operators: commutation, invertibility of `T` on `Ran χ̄`, and
/// `‖T⁻¹χ̄Wχ̄‖ < 1`, `‖χ̄WT⁻¹χ̄‖ < 1`. Only the invertibility of `T` is a hard
/// error; the rest are report entries.
pub fn sufficient_conditions_raw(
    h: &ComplexMatrix,
    t: &ComplexMatrix,
    partition: &Partition,
    tol: &Tolerances,
) -> Result<ResidualReport, PairError> {
    let n = partition.dim();
    if h.shape() != (n, n) || t.shape() != (n, n) {
        return Err(PairError::DimensionMismatch(format!(
            "H is {}x{}, T is {}x{}, partition has dimension {n}",
            h.nrows(),
            h.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    let ran_chibar = column_space(partition.chibar(), tol);
    let t_inv_bar =
        restricted_inverse(t, &ran_chibar, tol).map_err(PairError::ConditionBPrimeViolated)?;
    let w = h - t;
    Ok(lemma_report(t, &w, partition, &t_inv_bar, tol))
}

fn lemma_report(
    t: &ComplexMatrix,
    w: &ComplexMatrix,
    partition: &Partition,
    t_inv_bar: &ComplexMatrix,
    tol: &Tolerances,
) -> ResidualReport {
    let chibar = partition.chibar();
    let mut report = ResidualReport::new();
    for (label, x) in [("commutation_chi", partition.chi()), ("commutation_chibar", chibar)] {
        let (residual, threshold) = commutation_check(t, x, tol);
        report.push(label, residual, threshold);
    }
    let left = op_norm(&(t_inv_bar * chibar * w * chibar));
    let right = op_norm(&(chibar * w * t_inv_bar * chibar));
    report.push(C_PRIME_LEFT, left, below_one());
    report.push(C_PRIME_RIGHT, right, below_one());
    report
}

/// Sufficient-condition report for an already validated pair. A failing
/// entry here does not invalidate the pair.
pub fn sufficient_conditions(pair: &FeshbachPair, tol: &Tolerances) -> ResidualReport {
    lemma_report(pair.t(), pair.w(), pair.partition(), pair.t_inv_bar(), tol)
}

/// `‖χ̄·W·T⁻¹·χ̄‖`, the contraction the Neumann inverse needs below one.
pub fn neumann_contraction(pair: &FeshbachPair) -> f64 {
    let chibar = pair.chibar();
    op_norm(&(chibar * pair.w() * pair.t_inv_bar() * chibar))
}

/// Terms a Neumann series with contraction `q < 1` needs before its next
/// term drops below `neumann_tol`: the least `N` with `q^N < neumann_tol`.
pub fn geometric_term_bound(q: f64, tol: &Tolerances) -> usize {
    if q <= 0.0 {
        1
    } else {
        (tol.neumann_tol.ln() / q.ln()).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone)]
pub struct NeumannInverse {
    /// `T⁻¹·Σ (−χ̄WT⁻¹χ̄)ⁿ` on `Ran χ̄`, zero on its orthogonal complement.
    pub approx_inv: ComplexMatrix,
    pub terms_used: usize,
    /// `op_norm(approx_inv·H_χ̄·B − B)` for `B` a basis of `Ran χ̄`.
    pub residual: f64,
    pub contraction: f64,
    /// False when `max_terms` was reached before the terms dropped below
    /// `neumann_tol`.
    pub converged: bool,
}

/// Inverts `H_χ̄ = (1 + χ̄WT⁻¹χ̄)·T` on `Ran χ̄` by a Neumann series.
pub fn neumann_inverse(
    pair: &FeshbachPair,
    max_terms: usize,
    tol: &Tolerances,
) -> Result<NeumannInverse, PairError> {
    let chibar = pair.chibar();
    let k = chibar * pair.w() * pair.t_inv_bar() * chibar;
    let contraction = op_norm(&k);
    if !(contraction < 1.0) {
        return Err(PairError::NotContractive { norm: contraction });
    }
    let n = pair.dim();
    let step = -k;
    let mut term = ComplexMatrix::identity(n, n);
    let mut sum = term.clone();
    let mut terms_used = 1;
    let mut converged = false;
    while terms_used < max_terms.max(1) {
        term = &term * &step;
        if op_norm(&term) < tol.neumann_tol {
            converged = true;
            break;
        }
        sum += &term;
        terms_used += 1;
    }
    if !converged && terms_used >= max_terms.max(1) {
        // One more look: the last added term may already be negligible.
        converged = op_norm(&(&term * &step)) < tol.neumann_tol;
    }
    // Zero on the orthogonal complement of Ran χ̄, like every restricted
    // inverse in the crate.
    let approx_inv = pair.t_inv_bar() * sum * pair.ran_chibar().projector();
    let b = pair.ran_chibar().basis();
    let residual = op_norm(&(&approx_inv * pair.h_chibar() * b - b));
    Ok(NeumannInverse {
        approx_inv,
        terms_used,
        residual,
        contraction,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::identity;
    use crate::partition::{make_sharp, validate_partition};
    use nalgebra::DVector;
    use num_complex::Complex64;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x)))
    }

    fn diag(d: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| c(x))))
    }

    fn worked_pair() -> FeshbachPair {
        let tol = Tolerances::default();
        let part = validate_partition(diag(&[1., 0.]), diag(&[0., 1.]), &tol).unwrap();
        build_pair(real(2, 2, &[2., 1., 1., 3.]), diag(&[2., 3.]), part, &tol).unwrap()
    }

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, eps: f64) -> bool {
        op_norm(&(a - b)) <= eps
    }

    #[test]
    fn worked_pair_fields() {
        let pair = worked_pair();
        assert_eq!(pair.w(), &real(2, 2, &[0., 1., 1., 0.]));
        assert_eq!(pair.w_chi(), &ComplexMatrix::zeros(2, 2));
        assert_eq!(pair.h_chibar(), &diag(&[2., 3.]));
        assert!(close(pair.h_chibar_inv(), &diag(&[0., 1. / 3.]), 1e-16));
        assert!(pair.evidence().all_pass());
    }

    #[test]
    fn worked_pair_map() {
        let data = feshbach_map(&worked_pair());
        assert!(close(&data.f, &diag(&[5. / 3., 3.]), 1e-15));
        assert!(close(&data.q, &real(2, 2, &[1., 0., -1. / 3., 0.]), 1e-15));
        assert!(close(&data.q_sharp, &real(2, 2, &[1., -1. / 3., 0., 0.]), 1e-15));
    }

    #[test]
    fn zero_perturbation_collapses() {
        let tol = Tolerances::default();
        let part = validate_partition(diag(&[1., 0., 0.]), diag(&[0., 1., 1.]), &tol).unwrap();
        let t = diag(&[1., 2., -3.]);
        let pair = build_pair(t.clone(), t.clone(), part, &tol).unwrap();
        assert_eq!(pair.w_chi(), &ComplexMatrix::zeros(3, 3));
        assert_eq!(pair.w_chibar(), &ComplexMatrix::zeros(3, 3));
        let data = feshbach_map(&pair);
        assert!(close(&data.f, &t, 1e-15));
        assert_eq!(&data.q, pair.chi());
        assert_eq!(&data.q_sharp, pair.chi());
    }

    #[test]
    fn t_vanishing_on_ran_chibar_fails_condition_b() {
        let tol = Tolerances::default();
        let part = validate_partition(diag(&[1., 0.]), diag(&[0., 1.]), &tol).unwrap();
        let err = build_pair(diag(&[1., 0.]), diag(&[1., 0.]), part, &tol).unwrap_err();
        assert!(matches!(err, PairError::ConditionBViolated { operator: "T", .. }));
    }

    #[test]
    fn noncommuting_t_fails_condition_a() {
        let tol = Tolerances::default();
        let part = validate_partition(diag(&[1., 0.]), diag(&[0., 1.]), &tol).unwrap();
        let t = real(2, 2, &[1., 1., 0., 1.]);
        let err = build_pair(t.clone(), t, part, &tol).unwrap_err();
        assert!(matches!(err, PairError::ConditionAViolated { side: Side::Chi, .. }));
    }

    #[test]
    fn sufficient_conditions_examples() {
        let tol = Tolerances::default();
        let pair = worked_pair();
        let report = sufficient_conditions(&pair, &tol);
        assert_eq!(report.residual(C_PRIME_LEFT), 0.0);
        assert!(report.all_pass());

        // χ̄Wχ̄ = c·e3e3ᴴ with T = 1 on Ran χ̄: contraction exactly c.
        let part = make_sharp(&diag(&[1., 0., 0.]), &tol).unwrap();
        let mut w = ComplexMatrix::zeros(3, 3);
        w[(2, 2)] = c(1.0);
        w[(0, 2)] = c(0.5);
        for (scale, pass) in [(0.5, true), (4.0, false)] {
            let h = identity(3) + &w * c(scale);
            let pair = build_pair(h.clone(), identity(3), part.clone(), &tol).unwrap();
            let report = sufficient_conditions(&pair, &tol);
            assert!((report.residual(C_PRIME_LEFT) - scale).abs() < 1e-14);
            assert_eq!(report.all_pass(), pass);
            let raw = sufficient_conditions_raw(&h, &identity(3), &part, &tol).unwrap();
            assert_eq!(raw, report);
        }
    }

    #[test]
    fn sufficient_conditions_raw_needs_invertible_t() {
        let tol = Tolerances::default();
        let part = validate_partition(diag(&[1., 0.]), diag(&[0., 1.]), &tol).unwrap();
        let err = sufficient_conditions_raw(&diag(&[1., 0.]), &diag(&[1., 0.]), &part, &tol);
        assert!(matches!(err, Err(PairError::ConditionBPrimeViolated(_))));
    }

    #[test]
    fn neumann_zero_perturbation() {
        let tol = Tolerances::default();
        let pair = worked_pair();
        // The worked pair has χ̄Wχ̄ = 0, so the series is a single term.
        let neu = neumann_inverse(&pair, 100, &tol).unwrap();
        assert_eq!(neu.terms_used, 1);
        assert!(neu.converged);
        assert!(close(&neu.approx_inv, pair.t_inv_bar(), 0.0));
        assert!(neu.residual < 1e-15);
    }

    #[test]
    fn neumann_geometric_bound_and_noncontractive() {
        let tol = Tolerances::default();
        let part = make_sharp(&diag(&[1., 0., 0.]), &tol).unwrap();
        let t = identity(3);
        let mut w = ComplexMatrix::zeros(3, 3);
        w[(1, 1)] = c(0.5);
        w[(2, 2)] = c(-0.25);
        w[(0, 1)] = c(1.0);
        let pair = build_pair(&t + &w, t.clone(), part.clone(), &tol).unwrap();
        let neu = neumann_inverse(&pair, 500, &tol).unwrap();
        assert!((neu.contraction - 0.5).abs() < 1e-15);
        let bound = geometric_term_bound(0.5, &tol) + 1;
        assert!(neu.terms_used <= bound, "{} > {bound}", neu.terms_used);
        assert!(neu.converged);
        let b = pair.ran_chibar().basis();
        assert!(op_norm(&((&neu.approx_inv - pair.h_chibar_inv()) * b)) < 1e-11);

        let truncated = neumann_inverse(&pair, 3, &tol).unwrap();
        assert_eq!(truncated.terms_used, 3);
        assert!(!truncated.converged);

        let pair = build_pair(&t + &w * c(2.0), t.clone(), part.clone(), &tol).unwrap();
        assert!(matches!(
            neumann_inverse(&pair, 500, &tol),
            Err(PairError::NotContractive { .. })
        ));
    }
}
