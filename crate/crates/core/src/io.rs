//! Matrix and instance files.
//!
//! A matrix file is a JSON object `{"rows": r, "cols": c, "re": [...], "im": [...]}`
//! with both arrays in row-major order. An instance directory holds
//! `H.json`, `T.json`, `chi.json`, `chibar.json` and, when generated,
//! `instance.json` with the generating spec.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceSpec};
use crate::operator::ComplexMatrix;

pub const H_FILE: &str = "H.json";
pub const T_FILE: &str = "T.json";
pub const CHI_FILE: &str = "chi.json";
pub const CHIBAR_FILE: &str = "chibar.json";
pub const SPEC_FILE: &str = "instance.json";

/// Largest `rows × cols` accepted from a file.
pub const MAX_ENTRIES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Shape { file: String, message: String },
    #[error("{file}: non-finite entry at row {row}, column {col}")]
    NonFinite { file: String, row: usize, col: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { rows, cols, re, im }
    }

    pub fn to_matrix(&self, file: &str) -> Result<ComplexMatrix, IoError> {
        let shape = |message: String| IoError::Shape {
            file: file.to_string(),
            message,
        };
        if self.rows == 0 || self.cols == 0 {
            return Err(shape(format!("empty shape {}x{}", self.rows, self.cols)));
        }
        let len = self
            .rows
            .checked_mul(self.cols)
            .filter(|&n| n <= MAX_ENTRIES)
            .ok_or_else(|| shape(format!("shape {}x{} is too large", self.rows, self.cols)))?;
        for (name, values) in [("re", &self.re), ("im", &self.im)] {
            if values.len() != len {
                return Err(shape(format!(
                    "`{name}` has {} entries, expected {}x{} = {len}",
                    values.len(),
                    self.rows,
                    self.cols
                )));
            }
        }
        let mut data = Vec::with_capacity(len);
        for (k, (&re, &im)) in self.re.iter().zip(&self.im).enumerate() {
            if !(re.is_finite() && im.is_finite()) {
                return Err(IoError::NonFinite {
                    file: file.to_string(),
                    row: k / self.cols,
                    col: k % self.cols,
                });
            }
            data.push(Complex64::new(re, im));
        }
        Ok(ComplexMatrix::from_row_slice(self.rows, self.cols, &data))
    }
}

fn parse_error(file: &str, err: serde_json::Error) -> IoError {
    IoError::Parse {
        file: file.to_string(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// Parses matrix JSON; `file` only labels errors.
pub fn parse_matrix(text: &str, file: &str) -> Result<ComplexMatrix, IoError> {
    let raw: MatrixFile = serde_json::from_str(text).map_err(|e| parse_error(file, e))?;
    raw.to_matrix(file)
}

pub fn matrix_to_json(m: &ComplexMatrix) -> String {
    let mut text = serde_json::to_string(&MatrixFile::from_matrix(m)).expect("matrix serializes");
    text.push('\n');
    text
}

pub fn parse_instance_spec(text: &str, file: &str) -> Result<InstanceSpec, IoError> {
    serde_json::from_str(text).map_err(|e| parse_error(file, e))
}

pub fn instance_spec_to_json(spec: &InstanceSpec) -> String {
    let mut text = serde_json::to_string_pretty(spec).expect("spec serializes");
    text.push('\n');
    text
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix, IoError> {
    parse_matrix(&read_text(path)?, &path.display().to_string())
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<(), IoError> {
    write_text(path, &matrix_to_json(m))
}

pub fn read_instance_spec(path: &Path) -> Result<InstanceSpec, IoError> {
    parse_instance_spec(&read_text(path)?, &path.display().to_string())
}

/// The four operators of an instance, plus the spec when present.
#[derive(Debug, Clone)]
pub struct InstanceFiles {
    pub h: ComplexMatrix,
    pub t: ComplexMatrix,
    pub chi: ComplexMatrix,
    pub chibar: ComplexMatrix,
    pub spec: Option<InstanceSpec>,
}

impl InstanceFiles {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
}

pub fn instance_paths(dir: &Path) -> [PathBuf; 4] {
    [H_FILE, T_FILE, CHI_FILE, CHIBAR_FILE].map(|f| dir.join(f))
}

pub fn write_instance(dir: &Path, inst: &Instance) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let [h, t, chi, chibar] = instance_paths(dir);
    write_matrix(&h, &inst.h)?;
    write_matrix(&t, &inst.t)?;
    write_matrix(&chi, inst.partition.chi())?;
    write_matrix(&chibar, inst.partition.chibar())?;
    write_text(&dir.join(SPEC_FILE), &instance_spec_to_json(&inst.spec))
}

pub fn read_instance(dir: &Path) -> Result<InstanceFiles, IoError> {
    let [h, t, chi, chibar] = instance_paths(dir);
    let spec_path = dir.join(SPEC_FILE);
    let spec = if spec_path.exists() {
        Some(read_instance_spec(&spec_path)?)
    } else {
        None
    };
    let files = InstanceFiles {
        h: read_matrix(&h)?,
        t: read_matrix(&t)?,
        chi: read_matrix(&chi)?,
        chibar: read_matrix(&chibar)?,
        spec,
    };
    check_shapes(&files)?;
    Ok(files)
}

pub fn check_shapes(files: &InstanceFiles) -> Result<(), IoError> {
    let n = files.h.nrows();
    for (name, m) in [
        (H_FILE, &files.h),
        (T_FILE, &files.t),
        (CHI_FILE, &files.chi),
        (CHIBAR_FILE, &files.chibar),
    ] {
        if m.shape() != (n, n) {
            return Err(IoError::DimensionMismatch(format!(
                "{name} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(())
}
