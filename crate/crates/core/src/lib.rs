//! Smooth Feshbach–Schur map for finite-dimensional complex operators.
//!
//! Given a reference operator `T`, a perturbed operator `H = T + W` and a
//! partition of unity `χ² + χ̄² = 1` of commuting (not necessarily
//! self-adjoint) operators that commute with `T`, this crate builds the
//! effective operator
//!
//! ```text
//! F = T + χWχ − χWχ̄ (T + χ̄Wχ̄)⁻¹ χ̄Wχ
//! ```
//!
//! together with the auxiliary operators `Q` and `Q#`, and checks the
//! algebra that ties `F` to `H`: the intertwining identities, the two
//! explicit inverse formulas and the kernel isomorphism.
//!
//! Modules, bottom-up:
//!
//! - [`operator`]: dense complex matrices, norms, ranks, subspaces and
//!   inverses restricted to subspaces.
//! - [`functional`]: eigen-decomposition based matrix functions.
//! - [`partition`]: construction and validation of `(χ, χ̄)`.
//! - [`pair`]: Feshbach pairs, the map itself and the Neumann-series inverse.
//! - [`identities`]: residual checks of the algebraic identities.
//! - [`isospectral`]: inverse formulas, kernel correspondence, spectral scans
//!   and iterated reductions.
//! - [`instance`], [`io`], [`harness`]: seeded instance generation, the
//!   matrix JSON format and the run reports used by the command-line tool.

pub mod functional;
pub mod harness;
pub mod identities;
pub mod instance;
pub mod io;
pub mod isospectral;
pub mod operator;
pub mod pair;
pub mod partition;
pub mod report;

pub use num_complex::Complex64;

pub use operator::{ComplexMatrix, OperatorError, Subspace, Tolerances};
pub use pair::{build_pair, feshbach_map, FeshbachData, FeshbachPair, PairError};
pub use partition::{Partition, PartitionError};
pub use report::{ResidualEntry, ResidualReport};
