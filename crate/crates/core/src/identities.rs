//! Residual checks of the algebraic identities relating `H`, `T`, `F`, `Q`
//! and `Q#`.
//!
//! Every identity is checked as a full `n×n` matrix equation. Residuals are
//! `op_norm(lhs − rhs) / (1 + Π)` where `Π` is the largest product of factor
//! norms appearing on either side, and pass under `residual_rel`.

use crate::operator::{identity, op_norm, relative_residual, ComplexMatrix, Tolerances};
use crate::pair::{FeshbachData, FeshbachPair};
use crate::report::ResidualReport;

pub const REDUCED_INVERSE_LEFT: &str = "reduced_inverse_left";
pub const REDUCED_INVERSE_RIGHT: &str = "reduced_inverse_right";
pub const FREE_INVERSE_LEFT: &str = "free_inverse_left";
pub const FREE_INVERSE_RIGHT: &str = "free_inverse_right";
pub const INTERTWINING_LEFT: &str = "intertwining_left";
pub const INTERTWINING_RIGHT: &str = "intertwining_right";
pub const RESOLVENT: &str = "resolvent";
pub const ALT_FACTORIZATION: &str = "alt_factorization";
pub const ALT_RANGE: &str = "alt_range_in_ran_chibar";

/// Labels of [`verify_basics`] in report order.
pub const BASIC_LABELS: [&str; 6] = [
    REDUCED_INVERSE_LEFT,
    REDUCED_INVERSE_RIGHT,
    FREE_INVERSE_LEFT,
    FREE_INVERSE_RIGHT,
    INTERTWINING_LEFT,
    INTERTWINING_RIGHT,
];

fn norm_product(factors: &[&ComplexMatrix]) -> f64 {
    factors.iter().map(|m| op_norm(m)).product()
}

/// The six intertwining identities:
///
/// ```text
/// (χ̄H_χ̄⁻¹χ̄)·H = 1 − Qχ        H·(χ̄H_χ̄⁻¹χ̄) = 1 − χQ#
/// (χ̄T⁻¹χ̄)·F   = 1 − χQ        F·(χ̄T⁻¹χ̄)   = 1 − Q#χ
/// H·Q         = χF            Q#·H         = Fχ
/// ```
pub fn verify_basics(pair: &FeshbachPair, data: &FeshbachData, tol: &Tolerances) -> ResidualReport {
    let n = pair.dim();
    let one = identity(n);
    let (h, chi) = (pair.h(), pair.chi());
    let (f, q, qs) = (&data.f, &data.q, &data.q_sharp);
    let reduced = pair.reduced_resolvent();
    let free = pair.free_resolvent();

    let norms = |lhs: &[&ComplexMatrix], rhs: &[&ComplexMatrix]| norm_product(lhs).max(norm_product(rhs));

    let mut report = ResidualReport::new();
    let cases: [(&str, ComplexMatrix, ComplexMatrix, f64); 6] = [
        (
            REDUCED_INVERSE_LEFT,
            &reduced * h,
            &one - q * chi,
            norms(&[&reduced, h], &[q, chi]),
        ),
        (
            REDUCED_INVERSE_RIGHT,
            h * &reduced,
            &one - chi * qs,
            norms(&[h, &reduced], &[chi, qs]),
        ),
        (
            FREE_INVERSE_LEFT,
            &free * f,
            &one - chi * q,
            norms(&[&free, f], &[chi, q]),
        ),
        (
            FREE_INVERSE_RIGHT,
            f * &free,
            &one - qs * chi,
            norms(&[f, &free], &[qs, chi]),
        ),
        (INTERTWINING_LEFT, h * q, chi * f, norms(&[h, q], &[chi, f])),
        (INTERTWINING_RIGHT, qs * h, f * chi, norms(&[qs, h], &[f, chi])),
    ];
    for (label, lhs, rhs, scale) in cases {
        report.push(label, relative_residual(&lhs, &rhs, scale), tol.residual_rel);
    }
    report
}

/// `χ̄(T⁻¹ − H_χ̄⁻¹)χ̄ = χ̄T⁻¹W_χ̄H_χ̄⁻¹χ̄` with both inverses taken on `Ran χ̄`.
pub fn verify_resolvent(pair: &FeshbachPair, tol: &Tolerances) -> ResidualReport {
    let chibar = pair.chibar();
    let t_inv = pair.t_inv_bar();
    let h_inv = pair.h_chibar_inv();
    let lhs = chibar * (t_inv - h_inv) * chibar;
    let rhs = chibar * t_inv * pair.w_chibar() * h_inv * chibar;
    let scale = norm_product(&[chibar, chibar]) * (op_norm(t_inv) + op_norm(h_inv))
        .max(norm_product(&[chibar, t_inv, pair.w_chibar(), h_inv, chibar]));
    let mut report = ResidualReport::new();
    report.push(RESOLVENT, relative_residual(&lhs, &rhs, scale), tol.residual_rel);
    report
}

/// The alternative route: `χ̄²F = T(1 − χQ)` and `Ran(1 − χQ) ⊂ Ran χ̄`.
pub fn verify_alt_remark(
    pair: &FeshbachPair,
    data: &FeshbachData,
    tol: &Tolerances,
) -> ResidualReport {
    let chi = pair.chi();
    let chibar = pair.chibar();
    let t = pair.t();
    let one_minus = identity(pair.dim()) - chi * &data.q;
    let lhs = chibar * chibar * &data.f;
    let rhs = t * &one_minus;
    let scale = norm_product(&[chibar, chibar, &data.f]).max(norm_product(&[t, &one_minus]));

    let mut report = ResidualReport::new();
    report.push(ALT_FACTORIZATION, relative_residual(&lhs, &rhs, scale), tol.residual_rel);
    let range_leak = pair.ran_chibar().leak_of(&one_minus);
    report.push(ALT_RANGE, range_leak / (1.0 + op_norm(&one_minus)), tol.residual_rel);
    report
}

/// All of the above in one report.
pub fn verify_all(pair: &FeshbachPair, data: &FeshbachData, tol: &Tolerances) -> ResidualReport {
    let mut report = verify_basics(pair, data, tol);
    report.extend(verify_resolvent(pair, tol));
    report.extend(verify_alt_remark(pair, data, tol));
    report
}
