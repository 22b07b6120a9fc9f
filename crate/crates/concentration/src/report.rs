//! Structured run reports: a versioned key/value document that echoes the
//! full configuration, so any report can be re-run and reproduced
//! bit-identically from its own contents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::theory::{ConcentrationEstimate, GeneralizationCertificate};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A complete measurement report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub schema_version: u32,
    /// The subcommand that produced this report.
    pub command: String,
    /// Echo of the effective configuration (all defaults resolved).
    pub config: serde_json::Value,
    /// Present unless the run was infeasible.
    pub estimate: Option<ConcentrationEstimate>,
    pub certificate: Option<GeneralizationCertificate>,
    /// `1 - advrisk` per split, when an estimate exists.
    pub intrinsic_robustness_train: Option<f64>,
    pub intrinsic_robustness_test: Option<f64>,
    pub infeasible: bool,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config,
            estimate: None,
            certificate: None,
            intrinsic_robustness_train: None,
            intrinsic_robustness_test: None,
            infeasible: false,
            notes: Vec::new(),
        }
    }

    pub fn with_estimate(mut self, est: ConcentrationEstimate) -> Self {
        self.intrinsic_robustness_train = Some(crate::theory::intrinsic_robustness(est.advrisk_train));
        self.intrinsic_robustness_test = Some(crate::theory::intrinsic_robustness(est.advrisk_test));
        self.estimate = Some(est);
        self
    }

    /// Serializes with stable field order and round-trip-exact floats.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::param("report", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}
