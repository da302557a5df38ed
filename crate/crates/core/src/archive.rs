//! Versioned, self-describing JSON archives of fitted models.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "distforest-model",
//!   "version": 1,
//!   "family": {"name": "censored-gaussian", "threshold": 0.0},
//!   "schema": { ...data schema used for fitting, or null... },
//!   "fingerprint": "<sha256 hex of the training sample>",
//!   "model": {"forest": { ... }} | {"tree": { ... }} | {"emos": { ... }} | {"intercept": { ... }}
//! }
//! ```
//!
//! Forest archives carry leaf member ids plus training responses and case
//! weights so the weighted refits at prediction time need no data file.
//! Floats are written in shortest round-trip form, so a loaded model predicts
//! bit-identically to the one that was saved.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{EmosModel, InterceptModel};
use crate::data::{ColumnData, Dataset, Schema};
use crate::error::{Error, Result};
use crate::families::Family;
use crate::forest::DistForest;
use crate::model::DistributionalModel;
use crate::tree::DistTree;

pub const ARCHIVE_FORMAT: &str = "distforest-model";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoredModel {
    Forest(DistForest),
    Tree(DistTree),
    Emos(EmosModel),
    Intercept(InterceptModel),
}

impl StoredModel {
    pub fn kind(&self) -> &'static str {
        match self {
            StoredModel::Forest(_) => "forest",
            StoredModel::Tree(_) => "tree",
            StoredModel::Emos(_) => "emos",
            StoredModel::Intercept(_) => "intercept",
        }
    }

    pub fn as_model(&self) -> &dyn DistributionalModel {
        match self {
            StoredModel::Forest(m) => m,
            StoredModel::Tree(m) => m,
            StoredModel::Emos(m) => m,
            StoredModel::Intercept(m) => m,
        }
    }

    pub fn family(&self) -> Family {
        self.as_model().family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format: String,
    pub version: u32,
    pub family: Family,
    pub schema: Option<Schema>,
    pub fingerprint: String,
    pub model: StoredModel,
}

impl ModelArchive {
    pub fn new(model: StoredModel, training: &Dataset, schema: Option<Schema>) -> Self {
        Self {
            format: ARCHIVE_FORMAT.into(),
            version: ARCHIVE_VERSION,
            family: model.family(),
            schema,
            fingerprint: fingerprint(training),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses an archive, rejecting other formats and newer versions before
    /// looking at the model body.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|f| f.as_str());
        if format != Some(ARCHIVE_FORMAT) {
            return Err(Error::Config(format!(
                "not a {ARCHIVE_FORMAT} archive (format field {format:?})"
            )));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Config("archive lacks a version field".into()))?;
        if version > u64::from(ARCHIVE_VERSION) || version == 0 {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: ARCHIVE_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// SHA-256 over the response, case weights and covariates of `data`.
pub fn fingerprint(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(data.response_name.as_bytes());
    h.update((data.n_rows() as u64).to_le_bytes());
    for y in &data.response {
        h.update(y.to_bits().to_le_bytes());
    }
    for w in &data.weights {
        h.update(w.to_bits().to_le_bytes());
    }
    for col in data.covariates.columns() {
        h.update(col.name.as_bytes());
        h.update([0u8]);
        match &col.data {
            ColumnData::Numeric(values) => {
                h.update(b"n");
                for v in values {
                    match v {
                        Some(x) => h.update(x.to_bits().to_le_bytes()),
                        None => h.update([0xffu8; 9]),
                    }
                }
            }
            ColumnData::Categorical { levels, codes } => {
                h.update(b"c");
                for l in levels {
                    h.update(l.as_bytes());
                    h.update([0u8]);
                }
                for c in codes {
                    match c {
                        Some(x) => h.update(x.to_le_bytes()),
                        None => h.update([0xffu8; 5]),
                    }
                }
            }
        }
    }
    hex::encode(h.finalize())
}
