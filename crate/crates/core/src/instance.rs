//! Seeded random instances `(H, T, χ, χ̄)`.
//!
//! Every instance is built from a generator `A` with a chosen spectrum:
//!
//! - `sharp`: `A` Hermitian, `χ` the spectral projection onto eigenvalues
//!   below the midpoint of the cutoff window.
//! - `smooth`: `A` Hermitian, `χ = f(A)` with the smoothstep cutoff over the
//!   window `[a, b]`.
//! - `nonselfadjoint`: `A = S·Λ·S⁻¹` with a non-unitary `S`, `χ = sin θ(A)`,
//!   `χ̄ = cos θ(A)` and `θ(z) = (π/2)·f(Re z) + i·c·Im z`.
//!
//! `T = A + 2 + i/2` in every case and `W` is complex Gaussian scaled to
//! `‖W‖ = perturbation_scale·‖T‖`. A nonzero `kernel_dim` replaces `H` by
//! `H·(1 − V·Vᴴ)` for a random orthonormal `V`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::hermitian_function;
use crate::operator::{identity, op_norm, ComplexMatrix, Tolerances};
use crate::partition::{
    make_commuting_t, make_nonselfadjoint, make_sharp, make_smooth_selfadjoint, smoothstep_cutoff,
    Partition, PartitionError,
};

/// Shift applied to the generator to obtain `T`.
pub const T_SHIFT: Complex64 = Complex64::new(2.0, 0.5);

/// Default imaginary coupling `c` of the non-self-adjoint angle.
pub const DEFAULT_IM_COUPLING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    Sharp,
    Smooth,
    Nonselfadjoint,
}

impl PartitionKind {
    pub const ALL: [PartitionKind; 3] = [Self::Sharp, Self::Smooth, Self::Nonselfadjoint];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sharp => "sharp",
            Self::Smooth => "smooth",
            Self::Nonselfadjoint => "nonselfadjoint",
        }
    }
}

impl std::str::FromStr for PartitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sharp" => Ok(Self::Sharp),
            "smooth" => Ok(Self::Smooth),
            "nonselfadjoint" | "non-selfadjoint" => Ok(Self::Nonselfadjoint),
            other => Err(format!(
                "unknown partition kind `{other}` (expected sharp, smooth or nonselfadjoint)"
            )),
        }
    }
}

impl std::fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub dim: usize,
    pub partition_kind: PartitionKind,
    /// Generator eigenvalues; drawn at random when empty.
    #[serde(default)]
    pub generator_spectrum: Vec<Complex64>,
    /// `[a, b]` cutoff window, optionally followed by the imaginary coupling
    /// `c`. Defaults to `[0, 1, 0.5]`.
    #[serde(default)]
    pub cutoff_params: Vec<f64>,
    pub perturbation_scale: f64,
    #[serde(default)]
    pub kernel_dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("invalid instance spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

impl InstanceSpec {
    pub fn new(dim: usize, partition_kind: PartitionKind, perturbation_scale: f64, seed: u64) -> Self {
        Self {
            dim,
            partition_kind,
            generator_spectrum: Vec::new(),
            cutoff_params: Vec::new(),
            perturbation_scale,
            kernel_dim: 0,
            seed,
        }
    }

    pub fn with_kernel_dim(mut self, kernel_dim: usize) -> Self {
        self.kernel_dim = kernel_dim;
        self
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |msg: String| Err(InstanceError::InvalidSpec(msg));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.dim > MAX_DIM {
            return bad(format!("dim must be at most {MAX_DIM}, got {}", self.dim));
        }
        if !(self.perturbation_scale.is_finite() && self.perturbation_scale >= 0.0) {
            return bad(format!(
                "perturbation_scale must be finite and nonnegative, got {}",
                self.perturbation_scale
            ));
        }
        if self.kernel_dim >= self.dim {
            return bad(format!(
                "kernel_dim must be below dim ({}), got {}",
                self.dim, self.kernel_dim
            ));
        }
        if !self.generator_spectrum.is_empty() {
            if self.generator_spectrum.len() != self.dim {
                return bad(format!(
                    "generator_spectrum has {} values, expected {}",
                    self.generator_spectrum.len(),
                    self.dim
                ));
            }
            if self.generator_spectrum.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return bad("generator_spectrum must be finite".into());
            }
            if self.partition_kind != PartitionKind::Nonselfadjoint
                && self.generator_spectrum.iter().any(|z| z.im != 0.0)
            {
                return bad(format!(
                    "{} partitions need a real generator spectrum",
                    self.partition_kind
                ));
            }
        }
        match self.cutoff_params.len() {
            0 => {}
            2 | 3 => {
                if self.cutoff_params.iter().any(|x| !x.is_finite()) {
                    return bad("cutoff_params must be finite".into());
                }
                if !(self.cutoff_params[0] < self.cutoff_params[1]) {
                    return bad("cutoff_params must satisfy a < b".into());
                }
            }
            n => return bad(format!("cutoff_params takes 0, 2 or 3 values, got {n}")),
        }
        Ok(())
    }

    fn window(&self) -> (f64, f64, f64) {
        match self.cutoff_params.as_slice() {
            [a, b] => (*a, *b, DEFAULT_IM_COUPLING),
            [a, b, c] => (*a, *b, *c),
            _ => (0.0, 1.0, DEFAULT_IM_COUPLING),
        }
    }
}

/// Largest dimension accepted by [`InstanceSpec::validate`].
pub const MAX_DIM: usize = 256;

/// A generated instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub generator: ComplexMatrix,
    pub h: ComplexMatrix,
    pub t: ComplexMatrix,
    pub partition: Partition,
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    // Filled row by row so the stream order does not depend on storage.
    let data: Vec<Complex64> = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    ComplexMatrix::from_row_slice(rows, cols, &data)
}

/// Random matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn random_isometry<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let g = gaussian_matrix(rng, rows, cols);
    let q = g.qr().q();
    q.columns(0, cols).into_owned()
}

#[derive(Clone, Copy)]
enum Band {
    Low,
    Mid,
    High,
}

fn draw_spectrum<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> Vec<Complex64> {
    let (a, b, _) = spec.window();
    let width = b - a;
    let n = spec.dim;
    let mut bands: Vec<Band> = (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => Band::Low,
            1 => Band::Mid,
            _ => Band::High,
        })
        .collect();
    // χ and χ̄ must both be nonzero.
    if !bands.iter().any(|b| matches!(b, Band::Low | Band::Mid)) {
        bands[0] = Band::Low;
    }
    if !bands.iter().any(|b| matches!(b, Band::Mid | Band::High)) {
        bands[n - 1] = Band::High;
    }
    // A sharp projection needs eigenvalues on both sides of the midpoint.
    if spec.partition_kind == PartitionKind::Sharp {
        bands[0] = Band::Low;
        bands[n - 1] = Band::High;
    }
    bands
        .into_iter()
        .map(|band| {
            // Bands stay clear of the window edges so no cutoff value sits
            // near the rank threshold.
            let re = match band {
                Band::Low => a - width * rng.random_range(0.1..1.0),
                Band::Mid => a + width * rng.random_range(0.15..0.85),
                Band::High => b + width * rng.random_range(0.1..1.0),
            };
            let im = match (band, spec.partition_kind) {
                (Band::Mid, PartitionKind::Nonselfadjoint) => width * rng.random_range(-0.4..0.4),
                _ => 0.0,
            };
            Complex64::new(re, im)
        })
        .collect()
}

fn diagonal(values: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Builds the instance described by `spec`. Deterministic in the spec.
pub fn generate(spec: &InstanceSpec, tol: &Tolerances) -> Result<Instance, InstanceError> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let n = spec.dim;
    let spectrum = if spec.generator_spectrum.is_empty() {
        draw_spectrum(&mut rng, spec)
    } else {
        spec.generator_spectrum.clone()
    };
    let (a, b, coupling) = spec.window();
    let cutoff = move |x: f64| smoothstep_cutoff((x - a) / (b - a));

    let (generator, partition) = match spec.partition_kind {
        PartitionKind::Sharp | PartitionKind::Smooth => {
            let u = random_isometry(&mut rng, n, n);
            let generator = &u * diagonal(&spectrum) * u.adjoint();
            let partition = if spec.partition_kind == PartitionKind::Sharp {
                let mid = 0.5 * (a + b);
                let p = hermitian_function(&generator, |x| {
                    Complex64::new(if x < mid { 1.0 } else { 0.0 }, 0.0)
                });
                make_sharp(&p, tol)?
            } else {
                make_smooth_selfadjoint(&generator, cutoff, tol)?
            };
            (generator, partition)
        }
        PartitionKind::Nonselfadjoint => {
            let g = gaussian_matrix(&mut rng, n, n);
            let g_norm = op_norm(&g).max(f64::MIN_POSITIVE);
            // cond(S) <= 3.
            let s = identity(n) + g * Complex64::new(0.5 / g_norm, 0.0);
            let s_inv = s
                .clone()
                .lu()
                .try_inverse()
                .ok_or_else(|| InstanceError::InvalidSpec("singular eigenvector draw".into()))?;
            let generator = &s * diagonal(&spectrum) * s_inv;
            let theta = move |z: Complex64| {
                Complex64::new(FRAC_PI_2 * cutoff(z.re), coupling * z.im)
            };
            let partition = make_nonselfadjoint(&generator, theta, tol)?;
            (generator, partition)
        }
    };

    let t = make_commuting_t(&generator, |z| z + T_SHIFT, tol)?;
    let mut h = t.clone();
    if spec.perturbation_scale > 0.0 {
        let w = gaussian_matrix(&mut rng, n, n);
        let scale = spec.perturbation_scale * op_norm(&t) / op_norm(&w);
        h += w * Complex64::new(scale, 0.0);
    }
    if spec.kernel_dim > 0 {
        let v = random_isometry(&mut rng, n, spec.kernel_dim);
        h = &h * (identity(n) - &v * v.adjoint());
    }
    Ok(Instance {
        spec: spec.clone(),
        generator,
        h,
        t,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{kernel_basis, singular_values};

    #[test]
    fn same_seed_same_instance() {
        let tol = Tolerances::default();
        for kind in PartitionKind::ALL {
            let spec = InstanceSpec::new(6, kind, 0.3, 42);
            let a = generate(&spec, &tol).unwrap();
            let b = generate(&spec, &tol).unwrap();
            assert_eq!(a.h, b.h);
            assert_eq!(a.partition.chi(), b.partition.chi());
        }
    }

    #[test]
    fn zero_scale_gives_h_equal_t() {
        let tol = Tolerances::default();
        let inst = generate(&InstanceSpec::new(5, PartitionKind::Smooth, 0.0, 1), &tol).unwrap();
        assert_eq!(inst.h, inst.t);
    }

    #[test]
    fn sharp_rank_two_projection() {
        let tol = Tolerances::default();
        let mut spec = InstanceSpec::new(4, PartitionKind::Sharp, 0.1, 3);
        spec.generator_spectrum = [-0.5, -0.2, 1.3, 1.7].map(|x| Complex64::new(x, 0.0)).to_vec();
        let inst = generate(&spec, &tol).unwrap();
        let sv = singular_values(inst.partition.chi());
        assert!((sv[0] - 1.0).abs() < 1e-12 && (sv[1] - 1.0).abs() < 1e-12);
        assert!(sv[2] < 1e-12 && sv[3] < 1e-12);
    }

    #[test]
    fn kernel_dimension_is_planted() {
        let tol = Tolerances::default();
        let spec = InstanceSpec::new(7, PartitionKind::Nonselfadjoint, 0.2, 11).with_kernel_dim(2);
        let inst = generate(&spec, &tol).unwrap();
        assert_eq!(kernel_basis(&inst.h, &tol).dim(), 2);
    }

    #[test]
    fn spec_validation() {
        assert!(InstanceSpec::new(1, PartitionKind::Sharp, 0.1, 0).validate().is_err());
        assert!(InstanceSpec::new(3, PartitionKind::Sharp, -0.1, 0).validate().is_err());
        assert!(InstanceSpec::new(3, PartitionKind::Sharp, 0.1, 0).with_kernel_dim(3).validate().is_err());
        let mut spec = InstanceSpec::new(2, PartitionKind::Smooth, 0.1, 0);
        spec.generator_spectrum = vec![Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)];
        assert!(spec.validate().is_err());
        spec.partition_kind = PartitionKind::Nonselfadjoint;
        assert!(spec.validate().is_ok());
        spec.cutoff_params = vec![1.0, 0.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = InstanceSpec::new(3, PartitionKind::Nonselfadjoint, 0.45, u64::MAX).with_kernel_dim(1);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"nonselfadjoint\""));
        let back: InstanceSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
