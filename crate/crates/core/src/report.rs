use std::fmt;

use serde::{Deserialize, Serialize};

/// One labelled residual and its acceptance threshold. Entries without a
/// threshold are informational and always pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub label: String,
    pub residual: f64,
    pub threshold: Option<f64>,
    pub pass: bool,
}

impl ResidualEntry {
    pub fn new(label: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Self {
            label: label.into(),
            residual,
            threshold: Some(threshold),
            // NaN residuals fail.
            pass: residual <= threshold,
        }
    }

    pub fn info(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            residual: value,
            threshold: None,
            pass: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, residual: f64, threshold: f64) -> &mut Self {
        self.entries.push(ResidualEntry::new(label, residual, threshold));
        self
    }

    pub fn push_info(&mut self, label: impl Into<String>, value: f64) -> &mut Self {
        self.entries.push(ResidualEntry::info(label, value));
        self
    }

    pub fn extend(&mut self, other: ResidualReport) {
        self.entries.extend(other.entries);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, label: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Residual for `label`, panicking if it is missing.
    pub fn residual(&self, label: &str) -> f64 {
        self.get(label)
            .unwrap_or_else(|| panic!("no entry labelled `{label}`"))
            .residual
    }

    pub fn failures(&self) -> impl Iterator<Item = &ResidualEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let status = match (e.threshold, e.pass) {
                (None, _) => "info",
                (Some(_), true) => "ok",
                (Some(_), false) => "FAIL",
            };
            match e.threshold {
                Some(t) => writeln!(f, "  [{status:>4}] {:<36} {:>11.3e} <= {:.1e}", e.label, e.residual, t)?,
                None => writeln!(f, "  [{status:>4}] {:<36} {:>11.3e}", e.label, e.residual)?,
            }
        }
        Ok(())
    }
}
