//! JSON persistence of fitted laws.
//!
//! ```json
//! {"type": "single_epoch", "E": 1.73, "A": 13.9, "B": 39.8, "alpha": 0.25, "beta": 0.24,
//!  "fit_meta": {...}}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lawfit::{ChinchillaParams, MultiEpochParams};
use crate::linkage::LinearFit;
use crate::scalecurves::PowerLawFit;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed law artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid law artifact: {0}")]
    Invalid(String),
    #[error("expected a {expected} artifact, found {found}")]
    WrongType {
        expected: &'static str,
        found: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, ArtifactError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Law {
    SingleEpoch(ChinchillaParams),
    MultiEpoch(MultiEpochParams),
    PowerLaw(PowerLawFit),
    Linear(LinearFit),
}

impl Law {
    pub fn type_name(&self) -> &'static str {
        match self {
            Law::SingleEpoch(_) => "single_epoch",
            Law::MultiEpoch(_) => "multi_epoch",
            Law::PowerLaw(_) => "power_law",
            Law::Linear(_) => "linear",
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Law::SingleEpoch(p) => p.validate().map_err(|e| e.to_string()),
            Law::MultiEpoch(p) => p.validate().map_err(|e| e.to_string()),
            Law::PowerLaw(f) => {
                if !(f.coefficient.is_finite() && f.coefficient > 0.0) {
                    return Err(format!("coefficient {} must be > 0", f.coefficient));
                }
                if !f.exponent.is_finite() {
                    return Err("exponent is not finite".into());
                }
                if !(f.domain[0] > 0.0 && f.domain[0] < f.domain[1] && f.domain[1].is_finite()) {
                    return Err(format!("domain {:?} is degenerate", f.domain));
                }
                if f.n_points < 2 {
                    return Err(format!("n_points = {} < 2", f.n_points));
                }
                Ok(())
            }
            Law::Linear(f) => {
                if !(f.slope.is_finite() && f.intercept.is_finite()) {
                    return Err("slope and intercept must be finite".into());
                }
                if !(f.pearson_r.abs() <= 1.0) {
                    return Err(format!("pearson_r = {} outside [-1, 1]", f.pearson_r));
                }
                if f.n_points < 2 {
                    return Err(format!("n_points = {} < 2", f.n_points));
                }
                Ok(())
            }
        }
    }
}

/// Provenance of a fitted law. Every field is optional so hand-written
/// artifacts load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_path: Option<String>,
    /// Hex SHA-256 of the input file bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub huber_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs_used: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winning_init: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    /// Full configuration the law was produced with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawArtifact {
    #[serde(flatten)]
    pub law: Law,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_meta: Option<FitMeta>,
}

impl LawArtifact {
    pub fn new(law: Law) -> Self {
        LawArtifact { law, fit_meta: None }
    }

    pub fn with_meta(law: Law, meta: FitMeta) -> Self {
        LawArtifact {
            law,
            fit_meta: Some(meta),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let art: LawArtifact = serde_json::from_str(text)?;
        art.law.validate().map_err(ArtifactError::Invalid)?;
        Ok(art)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?).map_err(|source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ArtifactError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// The single-epoch law, or the base law of a multi-epoch artifact.
    pub fn chinchilla(&self) -> Result<ChinchillaParams> {
        match &self.law {
            Law::SingleEpoch(p) => Ok(*p),
            Law::MultiEpoch(p) => Ok(p.base),
            other => Err(ArtifactError::WrongType {
                expected: "single_epoch or multi_epoch",
                found: other.type_name(),
            }),
        }
    }

    pub fn power_law(&self) -> Result<PowerLawFit> {
        match &self.law {
            Law::PowerLaw(f) => Ok(*f),
            other => Err(ArtifactError::WrongType {
                expected: "power_law",
                found: other.type_name(),
            }),
        }
    }
}
