//! Isospectrality of the Feshbach map: `H` is invertible iff `F` is
//! invertible on an admissible subspace `V`, with explicit inverse formulas
//! in both directions, and `χ`, `Q` are mutually inverse isomorphisms between
//! `ker H` and `ker F`.
//!
//! Also hosts two uses of that fact: scanning a spectral parameter for
//! eigenvalues through the smallest singular value of the reduced operator,
//! and a toy iterated reduction that shrinks the dimension stage by stage.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::eigenvalues;
use crate::operator::{
    column_space, identity, inverse, kernel_basis, op_norm, restricted_inverse, restricted_kernel, restricted_map,
    singularity_margin, smallest_singular_value, ComplexMatrix, OperatorError, Subspace, Tolerances,
};
use crate::pair::{build_pair, feshbach_map, FeshbachData, FeshbachPair, PairError};
use crate::partition::{make_sharp, spectral_projection, Partition, PartitionError};
use crate::report::ResidualReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsoError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("subspace is not admissible: {0}")]
    NotAdmissible(OperatorError),
    #[error("F is not invertible on V (smallest singular value {smallest:e} <= {cutoff:e}), so H is singular")]
    FNotInvertibleOnV { smallest: f64, cutoff: f64 },
    #[error("H is not invertible (smallest singular value {smallest:e} <= {cutoff:e})")]
    HNotInvertible { smallest: f64, cutoff: f64 },
    #[error("spectral grid is empty")]
    EmptyGrid,
    #[error("reduction stage {stage} is invalid: {reason}")]
    StagePairInvalid { stage: usize, reason: StageError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StageError {
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("Ran χ has dimension {ran_dim}, not a proper nonzero subspace of dimension {dim}")]
    NotProper { dim: usize, ran_dim: usize },
}

fn check_subspace(pair: &FeshbachPair, v: &Subspace) -> Result<(), IsoError> {
    if v.ambient_dim() != pair.dim() {
        return Err(IsoError::DimensionMismatch(format!(
            "subspace lives in dimension {}, pair has dimension {}",
            v.ambient_dim(),
            pair.dim()
        )));
    }
    Ok(())
}

/// `Bᴴ·M·B`.
pub fn compress(m: &ComplexMatrix, v: &Subspace) -> ComplexMatrix {
    v.basis().adjoint() * m * v.basis()
}

/// `Ran χ` of the pair's partition.
pub fn ran_chi(pair: &FeshbachPair, tol: &Tolerances) -> Subspace {
    column_space(pair.chi(), tol)
}

pub const ADMISSIBLE_CONTAINS_RAN_CHI: &str = "admissible_contains_ran_chi";
pub const ADMISSIBLE_T_INVARIANT: &str = "admissible_t_invariant";
pub const ADMISSIBLE_FREE_RESOLVENT_INVARIANT: &str = "admissible_free_resolvent_invariant";

/// Checks `Ran χ ⊂ V`, `T·V ⊂ V` and `χ̄T⁻¹χ̄·V ⊂ V`.
pub fn admissible_subspace_check(
    pair: &FeshbachPair,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<ResidualReport, IsoError> {
    check_subspace(pair, v)?;
    let chi = pair.chi();
    let free = pair.free_resolvent();
    let mut report = ResidualReport::new();
    report.push(
        ADMISSIBLE_CONTAINS_RAN_CHI,
        v.leak_of(chi),
        tol.residual_threshold(op_norm(chi)),
    );
    let t_leak = restricted_map(pair.t(), v).map_err(IsoError::NotAdmissible)?.leak;
    report.push(ADMISSIBLE_T_INVARIANT, t_leak, tol.residual_threshold(op_norm(pair.t())));
    let free_leak = restricted_map(&free, v).map_err(IsoError::NotAdmissible)?.leak;
    report.push(
        ADMISSIBLE_FREE_RESOLVENT_INVARIANT,
        free_leak,
        tol.residual_threshold(op_norm(&free)),
    );
    Ok(report)
}

/// `R = Q·F_V⁻¹·Q# + χ̄·H_χ̄⁻¹·χ̄`, with `F_V⁻¹` the zero-extended inverse of
/// `F` on `V`.
pub fn invert_h_via_f(
    pair: &FeshbachPair,
    data: &FeshbachData,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<ComplexMatrix, IsoError> {
    check_subspace(pair, v)?;
    let f_inv = restricted_inverse(&data.f, v, tol).map_err(|e| match e {
        OperatorError::Singular { smallest, cutoff } => IsoError::FNotInvertibleOnV { smallest, cutoff },
        other => IsoError::NotAdmissible(other),
    })?;
    Ok(&data.q * f_inv * &data.q_sharp + pair.reduced_resolvent())
}

/// `S = χ·H⁻¹·χ + χ̄·T⁻¹·χ̄`, an inverse of `F` on `V`.
pub fn invert_f_via_h(
    pair: &FeshbachPair,
    _data: &FeshbachData,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<ComplexMatrix, IsoError> {
    check_subspace(pair, v)?;
    let h_inv = inverse(pair.h(), tol).map_err(|e| match e {
        OperatorError::Singular { smallest, cutoff } => IsoError::HNotInvertible { smallest, cutoff },
        other => IsoError::DimensionMismatch(other.to_string()),
    })?;
    let chi = pair.chi();
    Ok(chi * h_inv * chi + pair.free_resolvent())
}

pub const H_INVERSE_LEFT: &str = "h_inverse_left";
pub const H_INVERSE_RIGHT: &str = "h_inverse_right";
pub const F_INVERSE_LEFT: &str = "f_inverse_left_on_v";
pub const F_INVERSE_RIGHT: &str = "f_inverse_right_on_v";
pub const F_INVERSE_MAPS_V: &str = "f_inverse_maps_v_into_v";

/// `R·H = 1` and `H·R = 1`, relative to `1 + ‖R‖‖H‖`.
pub fn check_h_inverse(pair: &FeshbachPair, r: &ComplexMatrix, tol: &Tolerances) -> ResidualReport {
    let h = pair.h();
    let one = identity(pair.dim());
    let scale = 1.0 + op_norm(r) * op_norm(h);
    let mut report = ResidualReport::new();
    report.push(H_INVERSE_LEFT, op_norm(&(r * h - &one)) / scale, tol.residual_rel);
    report.push(H_INVERSE_RIGHT, op_norm(&(h * r - &one)) / scale, tol.residual_rel);
    report
}

/// `S·F = 1` and `F·S = 1` on `V`, and `S·V ⊂ V`.
pub fn check_f_inverse(
    data: &FeshbachData,
    v: &Subspace,
    s: &ComplexMatrix,
    tol: &Tolerances,
) -> ResidualReport {
    let b = v.basis();
    let f = &data.f;
    let s_norm = op_norm(s);
    let scale = 1.0 + s_norm * op_norm(f);
    let mut report = ResidualReport::new();
    report.push(F_INVERSE_LEFT, op_norm(&(s * f * b - b)) / scale, tol.residual_rel);
    report.push(F_INVERSE_RIGHT, op_norm(&(f * s * b - b)) / scale, tol.residual_rel);
    report.push(F_INVERSE_MAPS_V, v.leak_of(&(s * b)) / (1.0 + s_norm), tol.residual_rel);
    report
}

/// Singularity classification of `H` and of `F` on `V` under the shared
/// rank policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invertibility {
    pub h_smallest_sv: f64,
    pub h_cutoff: f64,
    pub f_smallest_sv: f64,
    pub f_cutoff: f64,
    pub h_invertible: bool,
    pub f_invertible: bool,
    /// Either smallest singular value lies within a factor 10 of its cutoff,
    /// where the classification is not meaningful.
    pub near_threshold: bool,
}

impl Invertibility {
    pub fn agrees(&self) -> bool {
        self.h_invertible == self.f_invertible
    }
}

pub fn invertibility(
    pair: &FeshbachPair,
    data: &FeshbachData,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<Invertibility, IsoError> {
    check_subspace(pair, v)?;
    let full = Subspace::full(pair.dim());
    let (h_smallest_sv, h_cutoff) = singularity_margin(pair.h(), &full, tol).map_err(IsoError::NotAdmissible)?;
    let (f_smallest_sv, f_cutoff) = singularity_margin(&data.f, v, tol).map_err(IsoError::NotAdmissible)?;
    let near = |s: f64, c: f64| s >= c / 10.0 && s <= c * 10.0;
    Ok(Invertibility {
        h_smallest_sv,
        h_cutoff,
        f_smallest_sv,
        f_cutoff,
        h_invertible: h_smallest_sv > h_cutoff,
        f_invertible: f_smallest_sv > f_cutoff,
        near_threshold: near(h_smallest_sv, h_cutoff) || near(f_smallest_sv, f_cutoff),
    })
}

/// How `χ: ker H → ker F` and `Q: ker F → ker H` behave numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCorrespondence {
    pub dim_ker_h: usize,
    pub dim_ker_f: usize,
    /// Largest distance of `χv` from `ker F` over unit `v ∈ ker H`, relative
    /// to `1 + ‖χ‖`.
    pub chi_maps_residual: f64,
    /// Largest distance of `Qw` from `ker H` over unit `w ∈ ker F`, relative
    /// to `1 + ‖Q‖`.
    pub q_maps_residual: f64,
    /// Largest of `‖Qχv − v‖` and `‖χQw − w‖` over unit kernel vectors.
    pub roundtrip_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl KernelCorrespondence {
    pub fn to_report(&self) -> ResidualReport {
        let mut report = ResidualReport::new();
        report.push(
            "kernel_dimension_gap",
            self.dim_ker_h.abs_diff(self.dim_ker_f) as f64,
            0.0,
        );
        report.push("kernel_chi_maps", self.chi_maps_residual, self.threshold);
        report.push("kernel_q_maps", self.q_maps_residual, self.threshold);
        report.push("kernel_roundtrip", self.roundtrip_residual, self.threshold);
        report
    }
}

/// `ker H` on the whole space against `ker F ∩ Ran χ`.
pub fn kernel_correspondence(
    pair: &FeshbachPair,
    data: &FeshbachData,
    tol: &Tolerances,
) -> KernelCorrespondence {
    let chi = pair.chi();
    let q = &data.q;
    let ker_h = kernel_basis(pair.h(), tol);
    let v = ran_chi(pair, tol);
    let ker_f = restricted_kernel(&data.f, &v, tol).expect("Ran χ lives in the pair's space");

    let kh = ker_h.basis();
    let kf = ker_f.basis();
    let chi_maps_residual = if kh.ncols() == 0 {
        0.0
    } else {
        ker_f.leak_of(&(chi * kh)) / (1.0 + op_norm(chi))
    };
    let q_maps_residual = if kf.ncols() == 0 {
        0.0
    } else {
        ker_h.leak_of(&(q * kf)) / (1.0 + op_norm(q))
    };
    let roundtrip_h = if kh.ncols() == 0 {
        0.0
    } else {
        op_norm(&(q * chi * kh - kh))
    };
    let roundtrip_f = if kf.ncols() == 0 {
        0.0
    } else {
        op_norm(&(chi * q * kf - kf))
    };
    let roundtrip_residual = roundtrip_h.max(roundtrip_f);
    let threshold = tol.kernel_threshold();
    let pass = ker_h.dim() == ker_f.dim()
        && chi_maps_residual <= threshold
        && q_maps_residual <= threshold
        && roundtrip_residual <= threshold;
    KernelCorrespondence {
        dim_ker_h: ker_h.dim(),
        dim_ker_f: ker_f.dim(),
        chi_maps_residual,
        q_maps_residual,
        roundtrip_residual,
        threshold,
        pass,
    }
}

/// Rectangular grid in the complex plane; `re` varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let step = (max - min) / (count - 1) as f64;
            (0..count).map(|i| min + step * i as f64).collect()
        }
    }
}

impl Grid {
    pub fn new(re_min: f64, re_max: f64, re_count: usize, im_min: f64, im_max: f64, im_count: usize) -> Self {
        Self {
            re: linspace(re_min, re_max, re_count),
            im: linspace(im_min, im_max, im_count),
        }
    }

    /// Grid along the real axis.
    pub fn real(min: f64, max: f64, count: usize) -> Self {
        Self::new(min, max, count, 0.0, 0.0, 1)
    }

    pub fn len(&self) -> usize {
        self.re.len() * self.im.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.im
            .iter()
            .flat_map(|&y| self.re.iter().map(move |&x| Complex64::new(x, y)))
            .collect()
    }

    /// Largest spacing along either axis.
    pub fn resolution(&self) -> f64 {
        let step = |v: &[f64]| {
            v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
        };
        step(&self.re).max(step(&self.im))
    }

    fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let nx = self.re.len();
        let ny = self.im.len();
        let (ix, iy) = (index % nx, index / nx);
        let mut out = Vec::with_capacity(4);
        if ix > 0 {
            out.push(index - 1);
        }
        if ix + 1 < nx {
            out.push(index + 1);
        }
        if iy > 0 {
            out.push(index - nx);
        }
        if iy + 1 < ny {
            out.push(index + nx);
        }
        out.into_iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub grid: Vec<Complex64>,
    pub re_count: usize,
    pub im_count: usize,
    pub resolution: f64,
    pub pair_valid: Vec<bool>,
    /// Smallest singular value of `F(H − λ, T − λ)` compressed to `Ran χ`;
    /// `None` where `(H − λ, T − λ)` is not a Feshbach pair.
    pub f_smallest_sv: Vec<Option<f64>>,
    /// Smallest singular value of `H − λ`, for comparison only.
    pub h_smallest_sv: Vec<f64>,
    pub flagged_eigenvalues: Vec<Complex64>,
    pub reference_eigenvalues: Vec<Complex64>,
}

impl ScanResult {
    /// Reference eigenvalues near a valid grid point that were not flagged,
    /// and flagged points with no reference eigenvalue nearby. Both empty
    /// when the scan is consistent with `H`'s spectrum at grid resolution.
    pub fn isospectrality_mismatches(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let res = self.resolution * (1.0 + 1e-9);
        let within = |a: Complex64, b: Complex64| (a - b).norm() <= res;
        let missed = self
            .reference_eigenvalues
            .iter()
            .copied()
            .filter(|&e| {
                let in_scope = self
                    .grid
                    .iter()
                    .zip(&self.pair_valid)
                    .any(|(&g, &ok)| ok && within(g, e));
                in_scope && !self.flagged_eigenvalues.iter().any(|&f| within(f, e))
            })
            .collect();
        let spurious = self
            .flagged_eigenvalues
            .iter()
            .copied()
            .filter(|&f| !self.reference_eigenvalues.iter().any(|&e| within(f, e)))
            .collect();
        (missed, spurious)
    }
}

/// Smallest singular value of the `Ran χ` compression of
/// `F(H − λ, T − λ)`, with the rank cutoff at that point; `None` when the
/// shifted operators do not form a Feshbach pair.
pub fn reduced_margin(
    h: &ComplexMatrix,
    t: &ComplexMatrix,
    partition: &Partition,
    lambda: Complex64,
    tol: &Tolerances,
) -> Option<(f64, f64)> {
    let n = h.nrows();
    let shift = identity(n) * lambda;
    let pair = build_pair(h - &shift, t - &shift, partition.clone(), tol).ok()?;
    let data = feshbach_map(&pair);
    let v = ran_chi(&pair, tol);
    singularity_margin(&data.f, &v, tol).ok()
}

/// Scans `λ` over `grid`, flagging points where the reduced operator
/// `F(H − λ, T − λ)` on `Ran χ` is singular to grid resolution: either its
/// smallest singular value is below the rank cutoff, or it is a local
/// minimum no larger than the rise to its neighbours (a zero within one grid
/// step).
pub fn spectral_scan(
    h: &ComplexMatrix,
    t: &ComplexMatrix,
    partition: &Partition,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<ScanResult, IsoError> {
    if grid.is_empty() {
        return Err(IsoError::EmptyGrid);
    }
    let n = partition.dim();
    if h.shape() != (n, n) || t.shape() != (n, n) {
        return Err(IsoError::DimensionMismatch(format!(
            "H is {}x{}, T is {}x{}, partition has dimension {n}",
            h.nrows(),
            h.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    let points = grid.points();
    let evaluated: Vec<(Option<(f64, f64)>, f64)> = points
        .par_iter()
        .map(|&lambda| {
            let margin = reduced_margin(h, t, partition, lambda, tol);
            let shifted = h - identity(n) * lambda;
            let h_sv = smallest_singular_value(&shifted).unwrap_or(0.0);
            (margin, h_sv)
        })
        .collect();

    let values: Vec<Option<f64>> = evaluated.iter().map(|(m, _)| m.map(|(s, _)| s)).collect();
    let mut flagged = Vec::new();
    for (i, (margin, _)) in evaluated.iter().enumerate() {
        let Some((s, cutoff)) = *margin else { continue };
        let below_cutoff = s <= cutoff;
        let neighbor_values: Vec<f64> = grid.neighbors(i).filter_map(|j| values[j]).collect();
        let local_zero = !neighbor_values.is_empty()
            && neighbor_values.iter().all(|&v| s <= v)
            && s <= neighbor_values.iter().map(|&v| v - s).fold(0.0, f64::max);
        if below_cutoff || local_zero {
            flagged.push(points[i]);
        }
    }

    Ok(ScanResult {
        re_count: grid.re.len(),
        im_count: grid.im.len(),
        resolution: grid.resolution(),
        pair_valid: values.iter().map(Option::is_some).collect(),
        f_smallest_sv: values,
        h_smallest_sv: evaluated.iter().map(|&(_, h)| h).collect(),
        flagged_eigenvalues: flagged,
        reference_eigenvalues: eigenvalues(h),
        grid: points,
    })
}

/// One stage of an iterated reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionStage {
    /// `Bᴴ·F·B` with `B` an orthonormal basis of `Ran χ`.
    pub effective_operator: ComplexMatrix,
    /// `Bᴴ·T·B`, the reference operator of the next stage.
    pub reference_operator: ComplexMatrix,
    pub subspace_dim: usize,
}

/// Reduces `(H, T)` once per partition; stage `k + 1` works with the `Ran χ_k`
/// compressions of `F_k` and `T_k`.
pub fn iterated_reduction(
    h: &ComplexMatrix,
    t: &ComplexMatrix,
    partitions: &[Partition],
    tol: &Tolerances,
) -> Result<Vec<ReductionStage>, IsoError> {
    iterated_reduction_by(h, t, partitions.len(), tol, |stage, _, _| {
        Ok(partitions[stage].clone())
    })
}

/// Like [`iterated_reduction`] but asks `choose(stage, H_k, T_k)` for each
/// stage's partition.
pub fn iterated_reduction_by<C>(
    h: &ComplexMatrix,
    t: &ComplexMatrix,
    stages: usize,
    tol: &Tolerances,
    mut choose: C,
) -> Result<Vec<ReductionStage>, IsoError>
where
    C: FnMut(usize, &ComplexMatrix, &ComplexMatrix) -> Result<Partition, StageError>,
{
    let mut h_k = h.clone();
    let mut t_k = t.clone();
    let mut out = Vec::with_capacity(stages);
    for stage in 0..stages {
        let fail = |reason: StageError| IsoError::StagePairInvalid { stage, reason };
        let partition = choose(stage, &h_k, &t_k).map_err(fail)?;
        let pair = build_pair(h_k.clone(), t_k.clone(), partition, tol).map_err(|e| fail(e.into()))?;
        let data = feshbach_map(&pair);
        let v = ran_chi(&pair, tol);
        let dim = pair.dim();
        if v.dim() == 0 || v.dim() >= dim {
            return Err(fail(StageError::NotProper {
                dim,
                ran_dim: v.dim(),
            }));
        }
        h_k = compress(&data.f, &v);
        t_k = compress(&t_k, &v);
        out.push(ReductionStage {
            effective_operator: h_k.clone(),
            reference_operator: t_k.clone(),
            subspace_dim: v.dim(),
        });
    }
    Ok(out)
}

/// Sharp spectral projection of `t` onto its `keep` eigenvalues with the
/// smallest real parts (ties by imaginary part). Commutes with `t` by
/// construction.
pub fn lowest_spectral_partition(
    t: &ComplexMatrix,
    keep: usize,
    tol: &Tolerances,
) -> Result<Partition, StageError> {
    let n = t.nrows();
    let values = eigenvalues(t);
    if keep == 0 || keep >= n {
        return Err(StageError::NotProper { dim: n, ran_dim: keep });
    }
    let key = |z: &Complex64| (z.re, z.im);
    let last_kept = key(&values[keep - 1]);
    let first_dropped = key(&values[keep]);
    let cut = ((last_kept.0 + first_dropped.0) / 2.0, (last_kept.1 + first_dropped.1) / 2.0);
    let below = move |z: Complex64| {
        if last_kept.0 != first_dropped.0 {
            z.re < cut.0
        } else {
            z.re < last_kept.0 || (z.re == last_kept.0 && z.im < cut.1)
        }
    };
    let p = spectral_projection(t, below, tol)?;
    Ok(make_sharp(&p, tol)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::validate_partition;
    use nalgebra::DVector;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x)))
    }

    fn diag(d: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| c(x))))
    }

    fn coordinate_partition(mask: &[bool], tol: &Tolerances) -> Partition {
        let chi: Vec<f64> = mask.iter().map(|&m| if m { 1. } else { 0. }).collect();
        let chibar: Vec<f64> = chi.iter().map(|x| 1. - x).collect();
        validate_partition(diag(&chi), diag(&chibar), tol).unwrap()
    }

    fn worked() -> (FeshbachPair, FeshbachData) {
        let tol = Tolerances::default();
        let part = coordinate_partition(&[true, false], &tol);
        let pair = build_pair(real(2, 2, &[2., 1., 1., 3.]), diag(&[2., 3.]), part, &tol).unwrap();
        let data = feshbach_map(&pair);
        (pair, data)
    }

    #[test]
    fn admissible_examples() {
        let tol = Tolerances::default();
        let (pair, _) = worked();
        let full = admissible_subspace_check(&pair, &Subspace::full(2), &tol).unwrap();
        assert!(full.entries.iter().all(|e| e.residual == 0.0));
        let v = ran_chi(&pair, &tol);
        assert!(admissible_subspace_check(&pair, &v, &tol).unwrap().all_pass());
        let wrong = admissible_subspace_check(&pair, &Subspace::coordinate(2, &[1]), &tol).unwrap();
        assert!((wrong.residual(ADMISSIBLE_CONTAINS_RAN_CHI) - 1.0).abs() < 1e-15);
        assert!(!wrong.all_pass());
    }

    #[test]
    fn worked_inverse_of_h() {
        let tol = Tolerances::default();
        let (pair, data) = worked();
        let r = invert_h_via_f(&pair, &data, &Subspace::full(2), &tol).unwrap();
        let expected = real(2, 2, &[3., -1., -1., 2.]) * c(0.2);
        assert!(op_norm(&(&r - expected)) < 1e-15);
        let r_chi = invert_h_via_f(&pair, &data, &ran_chi(&pair, &tol), &tol).unwrap();
        assert!(check_h_inverse(&pair, &r_chi, &tol).all_pass());
    }

    #[test]
    fn worked_inverse_of_f_on_ran_chi() {
        let tol = Tolerances::default();
        let (pair, data) = worked();
        let v = Subspace::coordinate(2, &[0]);
        let s = invert_f_via_h(&pair, &data, &v, &tol).unwrap();
        assert!((s[(0, 0)] - c(0.6)).norm() < 1e-15);
        assert!(check_f_inverse(&data, &v, &s, &tol).all_pass());
    }

    #[test]
    fn zero_perturbation_inverse_is_t_inverse() {
        let tol = Tolerances::default();
        let t = diag(&[2., -4., 5.]);
        let part = validate_partition(diag(&[0.6, 1., 0.]), diag(&[0.8, 0., 1.]), &tol).unwrap();
        let pair = build_pair(t.clone(), t.clone(), part, &tol).unwrap();
        let data = feshbach_map(&pair);
        let full = Subspace::full(3);
        let r = invert_h_via_f(&pair, &data, &full, &tol).unwrap();
        assert!(op_norm(&(&r * &t - identity(3))) < 1e-14);
        let s = invert_f_via_h(&pair, &data, &full, &tol).unwrap();
        assert!(op_norm(&(&s * &t - identity(3))) < 1e-14);
    }

    fn kernel_example() -> (FeshbachPair, FeshbachData) {
        let tol = Tolerances::default();
        let part = coordinate_partition(&[true, false], &tol);
        let pair = build_pair(real(2, 2, &[1., 1., 1., 1.]), identity(2), part, &tol).unwrap();
        let data = feshbach_map(&pair);
        (pair, data)
    }

    #[test]
    fn kernel_example_by_hand() {
        let tol = Tolerances::default();
        let (pair, data) = kernel_example();
        assert!(op_norm(&(&data.f - diag(&[0., 1.]))) < 1e-15);
        assert!(op_norm(&(&data.q - real(2, 2, &[1., 0., -1., 0.]))) < 1e-15);
        let k = kernel_correspondence(&pair, &data, &tol);
        assert_eq!((k.dim_ker_h, k.dim_ker_f), (1, 1));
        assert!(k.roundtrip_residual < 1e-15);
        assert!(k.pass);
        assert!(k.to_report().all_pass());

        assert!(matches!(
            invert_h_via_f(&pair, &data, &ran_chi(&pair, &tol), &tol),
            Err(IsoError::FNotInvertibleOnV { .. })
        ));
        assert!(matches!(
            invert_f_via_h(&pair, &data, &Subspace::full(2), &tol),
            Err(IsoError::HNotInvertible { .. })
        ));
        let inv = invertibility(&pair, &data, &ran_chi(&pair, &tol), &tol).unwrap();
        assert!(!inv.h_invertible && !inv.f_invertible && !inv.near_threshold);
    }

    #[test]
    fn invertible_pair_has_trivial_kernels() {
        let tol = Tolerances::default();
        let (pair, data) = worked();
        let k = kernel_correspondence(&pair, &data, &tol);
        assert_eq!((k.dim_ker_h, k.dim_ker_f), (0, 0));
        assert_eq!(k.roundtrip_residual, 0.0);
        assert!(k.pass);
    }

    #[test]
    fn grid_shapes() {
        let g = Grid::new(0., 1., 3, -1., 1., 2);
        assert_eq!(g.len(), 6);
        assert_eq!(g.points()[4], Complex64::new(0.5, 1.0));
        assert_eq!(g.resolution(), 2.0);
        assert!(Grid::real(0., 1., 0).is_empty());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let tol = Tolerances::default();
        let (pair, _) = worked();
        let err = spectral_scan(pair.h(), pair.t(), pair.partition(), &Grid::real(0., 1., 0), &tol);
        assert_eq!(err.unwrap_err(), IsoError::EmptyGrid);
    }

    #[test]
    fn diagonal_scan_flags_entries_in_valid_regions() {
        let tol = Tolerances::default();
        let t = diag(&[0.5, 1.5, 2.25, 3.0]);
        let part = coordinate_partition(&[true, true, false, false], &tol);
        let scan = spectral_scan(&t, &t, &part, &Grid::real(0., 4., 401), &tol).unwrap();
        // Entries on Ran χ̄ are gaps, entries on Ran χ are flagged.
        let flagged: Vec<f64> = scan.flagged_eigenvalues.iter().map(|z| z.re).collect();
        assert_eq!(flagged.len(), 2);
        assert!((flagged[0] - 0.5).abs() < 1e-12 && (flagged[1] - 1.5).abs() < 1e-12);
        let gap = scan.grid.iter().position(|z| (z.re - 2.25).abs() < 1e-12).unwrap();
        assert!(!scan.pair_valid[gap]);
        assert_eq!(scan.pair_valid.iter().filter(|v| !**v).count(), 2);
    }

    #[test]
    fn sharp_reduction_is_schur_complement() {
        let tol = Tolerances::default();
        let h = real(3, 3, &[4., 1., 0.5, 1., 5., 0.2, 0.5, 0.2, 6.]);
        let t = diag(&[4., 5., 6.]);
        let part = coordinate_partition(&[true, false, false], &tol);
        let stages = iterated_reduction(&h, &t, &[part], &tol).unwrap();
        assert_eq!(stages.len(), 1);
        assert_eq!(stages[0].subspace_dim, 1);
        // Schur complement of the lower 2x2 block.
        let d = real(2, 2, &[5., 0.2, 0.2, 6.]).try_inverse().unwrap();
        let b = real(1, 2, &[1., 0.5]);
        let schur = c(4.) - (&b * d * b.transpose())[(0, 0)];
        assert!((stages[0].effective_operator[(0, 0)] - schur).norm() < 1e-14);
    }

    #[test]
    fn stage_with_singular_reference_fails() {
        let tol = Tolerances::default();
        let t = diag(&[1., 0.]);
        let part = coordinate_partition(&[true, false], &tol);
        let err = iterated_reduction(&t, &t, &[part], &tol).unwrap_err();
        assert!(matches!(err, IsoError::StagePairInvalid { stage: 0, .. }));
    }

    #[test]
    fn lowest_spectral_partition_halves() {
        let tol = Tolerances::default();
        let t = diag(&[3., -1., 2., 0.5]);
        let p = lowest_spectral_partition(&t, 2, &tol).unwrap();
        assert!(op_norm(&(p.chi() - diag(&[0., 1., 0., 1.]))) < 1e-14);
        assert!(lowest_spectral_partition(&t, 4, &tol).is_err());
    }
}
