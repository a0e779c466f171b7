//! Run reports behind the command-line tool: checking one instance, fuzzing
//! many seeded instances, scanning a spectral parameter and iterated
//! reduction.
//!
//! Reports serialize deterministically: maps are ordered, trials and grid
//! points are merged by index, and wall-clock timing is only included on
//! request.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identities::verify_all;
use crate::instance::{generate, seeded_rng, Instance, InstanceError, InstanceSpec, PartitionKind};
use crate::io::{InstanceFiles, IoError, MatrixFile};
use crate::isospectral::{
    admissible_subspace_check, check_f_inverse, check_h_inverse, invert_f_via_h, invert_h_via_f,
    invertibility, iterated_reduction_by, kernel_correspondence, lowest_spectral_partition, ran_chi,
    spectral_scan, Grid, Invertibility, IsoError, KernelCorrespondence, StageError,
};
use crate::operator::{op_norm, singularity_margin, ComplexMatrix, Subspace, Tolerances};
use crate::pair::{
    build_pair, feshbach_map, neumann_inverse, sufficient_conditions, FeshbachData, FeshbachPair,
    PairError, DEFAULT_MAX_NEUMANN_TERMS,
};
use crate::partition::{validate_partition, Partition, PartitionError};
use crate::report::ResidualReport;

pub const SCHEMA_VERSION: &str = "1.0";

/// Regeneration attempts before a random instance is given up.
pub const MAX_GENERATION_ATTEMPTS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("invalid partition: {0}")]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Iso(#[from] IsoError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl Summary {
    fn from_suites<'a>(
        suites: impl IntoIterator<Item = (&'a String, &'a ResidualReport)>,
        mut failures: Vec<String>,
    ) -> Self {
        let mut checks = 0;
        for (name, report) in suites {
            checks += report.entries.iter().filter(|e| e.threshold.is_some()).count();
            failures.extend(report.failures().map(|e| format!("{name}.{}", e.label)));
        }
        Self {
            pass: failures.is_empty(),
            checks,
            failures,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

/// Every check that runs on a valid pair.
#[derive(Debug, Clone)]
pub struct PairChecks {
    pub pair: FeshbachPair,
    pub data: FeshbachData,
    /// Pass/fail suites, keyed by suite name.
    pub suites: BTreeMap<String, ResidualReport>,
    /// Sufficient conditions and Neumann series. Informational: a pair may
    /// be valid without meeting them.
    pub sufficient_conditions: ResidualReport,
    pub kernel: KernelCorrespondence,
    /// Invertibility of `H` and of `F` on `V`, keyed by the choice of `V`.
    pub invertibility: BTreeMap<String, Invertibility>,
}

pub const V_RAN_CHI: &str = "ran_chi";
pub const V_FULL: &str = "full";

fn isospectral_suite(
    pair: &FeshbachPair,
    data: &FeshbachData,
    v: &Subspace,
    tol: &Tolerances,
) -> Result<(ResidualReport, Invertibility), IsoError> {
    let mut report = admissible_subspace_check(pair, v, tol)?;
    let inv = invertibility(pair, data, v, tol)?;
    report.push_info("h_smallest_sv", inv.h_smallest_sv);
    report.push_info("f_smallest_sv_on_v", inv.f_smallest_sv);
    if inv.near_threshold {
        report.push_info("invertibility_agreement", if inv.agrees() { 0.0 } else { 1.0 });
        return Ok((report, inv));
    }
    report.push("invertibility_agreement", if inv.agrees() { 0.0 } else { 1.0 }, 0.0);
    if inv.h_invertible && inv.f_invertible {
        let r = invert_h_via_f(pair, data, v, tol)?;
        report.extend(check_h_inverse(pair, &r, tol));
        let s = invert_f_via_h(pair, data, v, tol)?;
        report.extend(check_f_inverse(data, v, &s, tol));
    }
    Ok((report, inv))
}

fn neumann_report(pair: &FeshbachPair, tol: &Tolerances) -> ResidualReport {
    let mut report = sufficient_conditions(pair, tol);
    if let Ok(series) = neumann_inverse(pair, DEFAULT_MAX_NEUMANN_TERMS, tol) {
        let exact = pair.h_chibar_inv();
        let gap = op_norm(&(&series.approx_inv - exact)) / (1.0 + op_norm(exact));
        report.push_info("neumann_terms", series.terms_used as f64);
        report.push_info("neumann_agreement", gap);
        report.push_info("neumann_residual", series.residual);
    }
    report
}

/// Builds the pair and runs the identity, kernel and isospectrality suites.
pub fn check_pair(
    h: ComplexMatrix,
    t: ComplexMatrix,
    partition: Partition,
    tol: &Tolerances,
) -> Result<PairChecks, PairError> {
    let pair = build_pair(h, t, partition, tol)?;
    Ok(check_built_pair(pair, tol))
}

pub fn check_built_pair(pair: FeshbachPair, tol: &Tolerances) -> PairChecks {
    let data = feshbach_map(&pair);
    let mut suites = BTreeMap::new();
    suites.insert("pair".to_string(), pair.evidence().clone());
    suites.insert("identities".to_string(), verify_all(&pair, &data, tol));
    let kernel = kernel_correspondence(&pair, &data, tol);
    suites.insert("kernel".to_string(), kernel.to_report());

    let mut inv_map = BTreeMap::new();
    for (name, v) in [(V_RAN_CHI, ran_chi(&pair, tol)), (V_FULL, Subspace::full(pair.dim()))] {
        let suite = format!("isospectral_{name}");
        match isospectral_suite(&pair, &data, &v, tol) {
            Ok((report, inv)) => {
                suites.insert(suite, report);
                inv_map.insert(name.to_string(), inv);
            }
            Err(e) => {
                let mut report = ResidualReport::new();
                report.push(format!("error: {e}"), f64::INFINITY, 0.0);
                suites.insert(suite, report);
            }
        }
    }
    let sufficient = neumann_report(&pair, tol);
    PairChecks {
        pair,
        data,
        suites,
        sufficient_conditions: sufficient,
        kernel,
        invertibility: inv_map,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operators {
    pub f: MatrixFile,
    pub q: MatrixFile,
    pub q_sharp: MatrixFile,
}

/// Result of checking one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: String,
    pub spec: Option<InstanceSpec>,
    pub tolerances: Tolerances,
    pub dim: usize,
    pub pair_valid: bool,
    pub pair_error: Option<String>,
    pub suites: BTreeMap<String, ResidualReport>,
    pub sufficient_conditions: Option<ResidualReport>,
    pub kernel: Option<KernelCorrespondence>,
    pub invertibility: BTreeMap<String, Invertibility>,
    pub operators: Option<Operators>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
    pub summary: Summary,
}

impl RunReport {
    fn invalid(spec: Option<InstanceSpec>, tol: &Tolerances, dim: usize, error: String) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            command: "check".into(),
            spec,
            tolerances: *tol,
            dim,
            pair_valid: false,
            summary: Summary {
                pass: false,
                checks: 0,
                failures: vec![format!("pair: {error}")],
            },
            pair_error: Some(error),
            suites: BTreeMap::new(),
            sufficient_conditions: None,
            kernel: None,
            invertibility: BTreeMap::new(),
            operators: None,
            timing: None,
        }
    }

    fn from_checks(spec: Option<InstanceSpec>, tol: &Tolerances, checks: PairChecks) -> Self {
        let summary = Summary::from_suites(&checks.suites, Vec::new());
        Self {
            schema: SCHEMA_VERSION.into(),
            command: "check".into(),
            spec,
            tolerances: *tol,
            dim: checks.pair.dim(),
            pair_valid: true,
            pair_error: None,
            suites: checks.suites,
            sufficient_conditions: Some(checks.sufficient_conditions),
            kernel: Some(checks.kernel),
            invertibility: checks.invertibility,
            operators: Some(Operators {
                f: MatrixFile::from_matrix(&checks.data.f),
                q: MatrixFile::from_matrix(&checks.data.q),
                q_sharp: MatrixFile::from_matrix(&checks.data.q_sharp),
            }),
            timing: None,
            summary,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn check_operators(
    h: ComplexMatrix,
    t: ComplexMatrix,
    chi: ComplexMatrix,
    chibar: ComplexMatrix,
    spec: Option<InstanceSpec>,
    tol: &Tolerances,
) -> RunReport {
    let dim = h.nrows();
    let partition = match validate_partition(chi, chibar, tol) {
        Ok(p) => p,
        Err(e) => return RunReport::invalid(spec, tol, dim, e.to_string()),
    };
    match check_pair(h, t, partition, tol) {
        Ok(checks) => RunReport::from_checks(spec, tol, checks),
        Err(e) => RunReport::invalid(spec, tol, dim, e.to_string()),
    }
}

pub fn check_instance(files: &InstanceFiles, tol: &Tolerances) -> RunReport {
    check_operators(
        files.h.clone(),
        files.t.clone(),
        files.chi.clone(),
        files.chibar.clone(),
        files.spec.clone(),
        tol,
    )
}

fn fmt_suite(out: &mut String, name: &str, report: &ResidualReport) {
    let _ = writeln!(out, "[{name}]");
    for e in &report.entries {
        let status = match (e.threshold, e.pass) {
            (None, _) => "info",
            (Some(_), true) => "ok",
            (Some(_), false) => "FAIL",
        };
        let threshold = e.threshold.map(|t| format!("{t:.3e}")).unwrap_or_default();
        let _ = writeln!(out, "  {status:<4} {:<40} {:>12.3e} {threshold:>12}", e.label, e.residual);
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "dimension {}", self.dim);
        if let Some(err) = &self.pair_error {
            let _ = writeln!(out, "pair invalid: {err}");
        }
        for (name, report) in &self.suites {
            fmt_suite(&mut out, name, report);
        }
        if let Some(report) = &self.sufficient_conditions {
            fmt_suite(&mut out, "sufficient_conditions (informational)", report);
        }
        if let Some(ops) = &self.operators {
            if ops.f.rows <= 6 {
                let _ = writeln!(out, "[F]");
                for i in 0..ops.f.rows {
                    let row: Vec<String> = (0..ops.f.cols)
                        .map(|j| {
                            let k = i * ops.f.cols + j;
                            format!("{:.6}{:+.6}i", ops.f.re[k], ops.f.im[k])
                        })
                        .collect();
                    let _ = writeln!(out, "  {}", row.join("  "));
                }
            }
        }
        let _ = writeln!(
            out,
            "{}: {} checks, {} failures",
            if self.summary.pass { "PASS" } else { "FAIL" },
            self.summary.checks,
            self.summary.failures.len()
        );
        for failure in &self.summary.failures {
            let _ = writeln!(out, "  {failure}");
        }
        f.write_str(&out)
    }
}

/// Mixes an attempt counter into a seed.
pub fn derived_seed(seed: u64, attempt: u64) -> u64 {
    if attempt == 0 {
        seed
    } else {
        seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Generates `spec`, redrawing with derived seeds until the result is a
/// valid pair. The returned instance carries the seed that worked.
pub fn generate_valid(
    spec: &InstanceSpec,
    tol: &Tolerances,
) -> Result<(Instance, FeshbachPair, u64), HarnessError> {
    spec.validate()?;
    let mut last = None;
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut s = spec.clone();
        s.seed = derived_seed(spec.seed, attempt);
        match generate(&s, tol) {
            Ok(inst) => match build_pair(inst.h.clone(), inst.t.clone(), inst.partition.clone(), tol) {
                Ok(pair) => return Ok((inst, pair, attempt)),
                Err(e) => last = Some(e.to_string()),
            },
            Err(InstanceError::Partition(e)) => last = Some(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    Err(HarnessError::InvalidConfig(format!(
        "no valid pair after {MAX_GENERATION_ATTEMPTS} attempts: {}",
        last.unwrap_or_default()
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub trials: usize,
    pub dim_min: usize,
    pub dim_max: usize,
    pub kinds: Vec<PartitionKind>,
    pub scales: Vec<f64>,
    pub kernel_dim_min: usize,
    pub kernel_dim_max: usize,
    pub seed: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            dim_min: 2,
            dim_max: 20,
            kinds: PartitionKind::ALL.to_vec(),
            scales: vec![0.0, 0.1, 0.45],
            kernel_dim_min: 0,
            kernel_dim_max: 0,
            seed: 0,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.dim_min < 2 || self.dim_min > self.dim_max {
            return bad("dims must satisfy 2 <= min <= max");
        }
        if self.kinds.is_empty() {
            return bad("at least one partition kind is required");
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("scales must be a nonempty list of finite nonnegative values");
        }
        if self.kernel_dim_min > self.kernel_dim_max {
            return bad("kernel dims must satisfy min <= max");
        }
        Ok(())
    }

    /// Seed of trial `index`; `--trials 1 --seed <trial_seed>` replays it.
    pub fn trial_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    /// The spec a trial starts from, drawn from its own seed.
    pub fn trial_spec(&self, index: usize) -> InstanceSpec {
        let seed = self.trial_seed(index);
        let mut rng = seeded_rng(seed ^ 0x5EED_F022);
        let dim = rng.random_range(self.dim_min..=self.dim_max);
        let kind = self.kinds[rng.random_range(0..self.kinds.len())];
        let scale = self.scales[rng.random_range(0..self.scales.len())];
        let kmax = self.kernel_dim_max.min(dim - 1);
        let kernel_dim = rng.random_range(self.kernel_dim_min.min(kmax)..=kmax);
        InstanceSpec::new(dim, kind, scale, seed).with_kernel_dim(kernel_dim)
    }
}

/// Outcome of one fuzz trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub trial_seed: u64,
    pub spec: InstanceSpec,
    pub regenerations: u64,
    pub pass: bool,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub residuals: Vec<(String, f64, Option<f64>)>,
    #[serde(skip)]
    pub invertibility: BTreeMap<String, Invertibility>,
    #[serde(skip)]
    pub kernel_dims: Option<(usize, usize)>,
}

pub fn run_trial(config: &FuzzConfig, index: usize, tol: &Tolerances) -> TrialOutcome {
    let spec = config.trial_spec(index);
    let trial_seed = spec.seed;
    match generate_valid(&spec, tol) {
        Ok((inst, pair, regenerations)) => {
            let checks = check_built_pair(pair, tol);
            let summary = Summary::from_suites(&checks.suites, Vec::new());
            let residuals = checks
                .suites
                .iter()
                .flat_map(|(name, report)| {
                    report
                        .entries
                        .iter()
                        .map(move |e| (format!("{name}.{}", e.label), e.residual, e.threshold))
                })
                .collect();
            TrialOutcome {
                trial: index,
                trial_seed,
                spec: inst.spec,
                regenerations,
                pass: summary.pass,
                failures: summary.failures,
                residuals,
                invertibility: checks.invertibility,
                kernel_dims: Some((checks.kernel.dim_ker_h, checks.kernel.dim_ker_f)),
            }
        }
        Err(e) => TrialOutcome {
            trial: index,
            trial_seed,
            spec,
            regenerations: MAX_GENERATION_ATTEMPTS,
            pass: false,
            failures: vec![format!("generation: {e}")],
            residuals: Vec::new(),
            invertibility: BTreeMap::new(),
            kernel_dims: None,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub count: usize,
    pub max_residual: f64,
    /// Largest residual-to-threshold ratio; absent for informational labels.
    pub max_ratio: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityCounts {
    pub invertible: usize,
    pub singular: usize,
    pub near_threshold: usize,
    pub disagreements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub schema: String,
    pub command: String,
    pub config: FuzzConfig,
    pub tolerances: Tolerances,
    pub valid_pairs: usize,
    pub regenerated: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub invertibility: BTreeMap<String, InvertibilityCounts>,
    pub kernel_dimension_histogram: BTreeMap<usize, usize>,
    pub max_residuals: BTreeMap<String, LabelStats>,
    pub failed_trials: Vec<TrialOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
    pub summary: Summary,
}

impl FuzzReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn run_fuzz(config: &FuzzConfig, tol: &Tolerances) -> Result<FuzzReport, HarnessError> {
    config.validate()?;
    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, i, tol))
        .collect();
    Ok(aggregate(config, tol, outcomes))
}

pub fn aggregate(config: &FuzzConfig, tol: &Tolerances, outcomes: Vec<TrialOutcome>) -> FuzzReport {
    let mut by_kind = BTreeMap::new();
    let mut stats: BTreeMap<String, LabelStats> = BTreeMap::new();
    let mut inv: BTreeMap<String, InvertibilityCounts> = BTreeMap::new();
    let mut kernel_hist = BTreeMap::new();
    let mut valid = 0;
    let mut regenerated = 0;
    let mut failed = Vec::new();
    let mut failures = Vec::new();
    let mut checks = 0;
    for outcome in outcomes {
        *by_kind.entry(outcome.spec.partition_kind.name().to_string()).or_insert(0) += 1;
        if outcome.kernel_dims.is_some() {
            valid += 1;
        }
        if outcome.regenerations > 0 {
            regenerated += 1;
        }
        if let Some((dh, _)) = outcome.kernel_dims {
            *kernel_hist.entry(dh).or_insert(0) += 1;
        }
        for (label, residual, threshold) in &outcome.residuals {
            let s = stats.entry(label.clone()).or_default();
            s.count += 1;
            if !(s.max_residual >= *residual) {
                s.max_residual = *residual;
            }
            if let Some(t) = threshold {
                checks += 1;
                let ratio = if *t > 0.0 {
                    residual / t
                } else if *residual == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                s.max_ratio = Some(s.max_ratio.map_or(ratio, |m| if m >= ratio { m } else { ratio }));
                if !(residual <= t) {
                    s.failures += 1;
                }
            }
        }
        for (name, i) in &outcome.invertibility {
            let c = inv.entry(name.clone()).or_default();
            if i.near_threshold {
                c.near_threshold += 1;
            } else if i.h_invertible {
                c.invertible += 1;
            } else {
                c.singular += 1;
            }
            if !i.near_threshold && !i.agrees() {
                c.disagreements += 1;
            }
        }
        if !outcome.pass {
            for f in &outcome.failures {
                failures.push(format!("trial {} (seed {}): {f}", outcome.trial, outcome.trial_seed));
            }
            failed.push(outcome);
        }
    }
    FuzzReport {
        schema: SCHEMA_VERSION.into(),
        command: "fuzz".into(),
        config: config.clone(),
        tolerances: *tol,
        valid_pairs: valid,
        regenerated,
        by_kind,
        invertibility: inv,
        kernel_dimension_histogram: kernel_hist,
        max_residuals: stats,
        failed_trials: failed,
        timing: None,
        summary: Summary {
            pass: failures.is_empty(),
            checks,
            failures,
        },
    }
}

impl fmt::Display for FuzzReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} trials, {} valid pairs ({} regenerated)",
            self.config.trials, self.valid_pairs, self.regenerated
        );
        for (kind, count) in &self.by_kind {
            let _ = writeln!(out, "  {kind}: {count}");
        }
        let _ = writeln!(out, "{:<52} {:>12} {:>10} {:>6}", "label", "max", "max/tol", "fail");
        for (label, s) in &self.max_residuals {
            let ratio = s.max_ratio.map(|r| format!("{r:.3e}")).unwrap_or_else(|| "info".into());
            let _ = writeln!(out, "{label:<52} {:>12.3e} {ratio:>10} {:>6}", s.max_residual, s.failures);
        }
        for (v, c) in &self.invertibility {
            let _ = writeln!(
                out,
                "V = {v}: {} invertible, {} singular, {} near threshold, {} disagreements",
                c.invertible, c.singular, c.near_threshold, c.disagreements
            );
        }
        let _ = writeln!(
            out,
            "{}: {} checks, {} failures",
            if self.summary.pass { "PASS" } else { "FAIL" },
            self.summary.checks,
            self.summary.failures.len()
        );
        for failure in self.summary.failures.iter().take(20) {
            let _ = writeln!(out, "  {failure}");
        }
        f.write_str(&out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub smallest_sv: Option<f64>,
    pub h_smallest_sv: f64,
    pub pair_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema: String,
    pub command: String,
    pub tolerances: Tolerances,
    pub re_count: usize,
    pub im_count: usize,
    pub resolution: f64,
    pub points: Vec<ScanPoint>,
    pub flagged_eigenvalues: Vec<Complex64>,
    pub reference_eigenvalues: Vec<Complex64>,
    pub missed: Vec<Complex64>,
    pub spurious: Vec<Complex64>,
    pub summary: Summary,
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_csv(&self) -> String {
        let num = |x: f64| serde_json::to_string(&x).expect("float serializes");
        let mut out = String::from("re_lambda,im_lambda,smallest_sv,pair_valid\n");
        for p in &self.points {
            let sv = p.smallest_sv.map(num).unwrap_or_default();
            let _ = writeln!(out, "{},{},{sv},{}", num(p.re_lambda), num(p.im_lambda), p.pair_valid);
        }
        out
    }
}

impl fmt::Display for ScanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = |v: &[Complex64]| {
            v.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect::<Vec<_>>().join(", ")
        };
        writeln!(f, "{} grid points, resolution {:.3e}", self.points.len(), self.resolution)?;
        writeln!(f, "flagged:   {}", z(&self.flagged_eigenvalues))?;
        writeln!(f, "reference: {}", z(&self.reference_eigenvalues))?;
        if !self.missed.is_empty() {
            writeln!(f, "missed:    {}", z(&self.missed))?;
        }
        if !self.spurious.is_empty() {
            writeln!(f, "spurious:  {}", z(&self.spurious))?;
        }
        writeln!(f, "{}", if self.summary.pass { "PASS" } else { "FAIL" })
    }
}

pub fn scan_instance(files: &InstanceFiles, grid: &Grid, tol: &Tolerances) -> Result<ScanReport, HarnessError> {
    let partition = validate_partition(files.chi.clone(), files.chibar.clone(), tol)?;
    let scan = spectral_scan(&files.h, &files.t, &partition, grid, tol)?;
    let (missed, spurious) = scan.isospectrality_mismatches();
    let mut failures: Vec<String> = missed
        .iter()
        .map(|z| format!("missed eigenvalue {}{:+}i", z.re, z.im))
        .collect();
    failures.extend(spurious.iter().map(|z| format!("spurious flag {}{:+}i", z.re, z.im)));
    let points = scan
        .grid
        .iter()
        .zip(&scan.f_smallest_sv)
        .zip(&scan.h_smallest_sv)
        .map(|((z, f), &h)| ScanPoint {
            re_lambda: z.re,
            im_lambda: z.im,
            smallest_sv: *f,
            h_smallest_sv: h,
            pair_valid: f.is_some(),
        })
        .collect();
    Ok(ScanReport {
        schema: SCHEMA_VERSION.into(),
        command: "scan".into(),
        tolerances: *tol,
        re_count: scan.re_count,
        im_count: scan.im_count,
        resolution: scan.resolution,
        points,
        flagged_eigenvalues: scan.flagged_eigenvalues,
        reference_eigenvalues: scan.reference_eigenvalues,
        summary: Summary {
            pass: failures.is_empty(),
            checks: 1,
            failures,
        },
        missed,
        spurious,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub stage: usize,
    pub dim: usize,
    pub smallest_sv: f64,
    pub cutoff: f64,
    pub invertible: bool,
    pub near_threshold: bool,
    pub effective_operator: MatrixFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReduceReport {
    pub schema: String,
    pub command: String,
    pub tolerances: Tolerances,
    pub dim: usize,
    pub h_smallest_sv: f64,
    pub h_cutoff: f64,
    pub h_invertible: bool,
    pub stages: Vec<ReductionRecord>,
    pub summary: Summary,
}

impl ReduceReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

impl fmt::Display for ReduceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "H: dimension {}, smallest singular value {:.3e} (cutoff {:.3e})",
            self.dim, self.h_smallest_sv, self.h_cutoff
        )?;
        for s in &self.stages {
            writeln!(
                f,
                "stage {}: dimension {}, smallest singular value {:.3e} (cutoff {:.3e}){}",
                s.stage,
                s.dim,
                s.smallest_sv,
                s.cutoff,
                if s.near_threshold { ", near threshold" } else { "" }
            )?;
        }
        writeln!(f, "{}", if self.summary.pass { "PASS" } else { "FAIL" })
    }
}

/// Reduces `stages` times. The first stage uses the instance partition,
/// later ones keep the lower half of the spectrum of the current `T`.
pub fn reduce_instance(files: &InstanceFiles, stages: usize, tol: &Tolerances) -> Result<ReduceReport, HarnessError> {
    if stages == 0 {
        return Err(HarnessError::InvalidConfig("stages must be at least 1".into()));
    }
    let first = validate_partition(files.chi.clone(), files.chibar.clone(), tol)?;
    let n = files.dim();
    let result = iterated_reduction_by(&files.h, &files.t, stages, tol, |stage, _, t_k| {
        if stage == 0 {
            Ok(first.clone())
        } else {
            let d = t_k.nrows();
            if d < 2 {
                return Err(StageError::NotProper { dim: d, ran_dim: d });
            }
            lowest_spectral_partition(t_k, d.div_ceil(2), tol)
        }
    })?;
    let near = |s: f64, c: f64| s >= c / 10.0 && s <= c * 10.0;
    let (h_sv, h_cut) = singularity_margin(&files.h, &Subspace::full(n), tol)
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let h_invertible = h_sv > h_cut;
    let mut failures = Vec::new();
    let mut records = Vec::with_capacity(result.len());
    for (k, stage) in result.into_iter().enumerate() {
        let d = stage.effective_operator.nrows();
        let (s, c) = singularity_margin(&stage.effective_operator, &Subspace::full(d), tol)
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let near_threshold = near(s, c) || near(h_sv, h_cut);
        if !near_threshold && (s > c) != h_invertible {
            failures.push(format!("stage {k}: invertibility differs from H"));
        }
        records.push(ReductionRecord {
            stage: k,
            dim: d,
            smallest_sv: s,
            cutoff: c,
            invertible: s > c,
            near_threshold,
            effective_operator: MatrixFile::from_matrix(&stage.effective_operator),
        });
    }
    Ok(ReduceReport {
        schema: SCHEMA_VERSION.into(),
        command: "reduce".into(),
        tolerances: *tol,
        dim: n,
        h_smallest_sv: h_sv,
        h_cutoff: h_cut,
        h_invertible,
        summary: Summary {
            pass: failures.is_empty(),
            checks: records.len(),
            failures,
        },
        stages: records,
    })
}

/// Runs `f`, attaching wall-clock time to the result when `timed`.
pub fn timed<T>(timed: bool, f: impl FnOnce() -> T) -> (T, Option<Timing>) {
    let start = Instant::now();
    let value = f();
    let timing = timed.then(|| Timing {
        elapsed_seconds: start.elapsed().as_secs_f64(),
    });
    (value, timing)
}
