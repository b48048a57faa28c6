//! Serializable run and ORAM configurations.

use std::path::PathBuf;

use pyramid_oram::pyramid::default_k;
use pyramid_oram::{FailurePolicy, PyramidConfig, ZhtParams};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::workload::Workload;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyDoc {
    Strict,
    Retry(u32),
}

impl From<FailurePolicy> for PolicyDoc {
    fn from(p: FailurePolicy) -> Self {
        match p {
            FailurePolicy::StrictAbort => PolicyDoc::Strict,
            FailurePolicy::Retry(r) => PolicyDoc::Retry(r),
        }
    }
}

impl From<PolicyDoc> for FailurePolicy {
    fn from(p: PolicyDoc) -> Self {
        match p {
            PolicyDoc::Strict => FailurePolicy::StrictAbort,
            PolicyDoc::Retry(r) => FailurePolicy::Retry(r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDoc {
    pub n: usize,
    pub k: usize,
    pub c: usize,
}

/// Versioned JSON form of a [`PyramidConfig`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OramConfigDoc {
    pub version: u32,
    pub capacity: usize,
    pub first_level_size: usize,
    pub payload_bytes: usize,
    pub seed: u64,
    pub policy: PolicyDoc,
    pub levels: Vec<LevelDoc>,
}

impl OramConfigDoc {
    pub fn new(cfg: &PyramidConfig, payload_bytes: usize) -> Self {
        OramConfigDoc {
            version: CONFIG_VERSION,
            capacity: cfg.capacity,
            first_level_size: cfg.first_level_size,
            payload_bytes,
            seed: cfg.seed,
            policy: cfg.policy.into(),
            levels: cfg.levels().into_iter().map(|l| LevelDoc { n: l.n, k: l.k, c: l.c }).collect(),
        }
    }

    /// Rebuilds the configuration, checking that the stored level table is
    /// the one it implies.
    pub fn to_config(&self) -> Result<PyramidConfig> {
        if self.version != CONFIG_VERSION {
            return Err(LabError::Invalid(format!("unsupported config version {}", self.version)));
        }
        let first = self.levels.first().ok_or_else(|| LabError::Invalid("no levels".into()))?;
        let k_override = if self.levels.iter().all(|l| l.k == default_k(l.n)) {
            None
        } else if self.levels.iter().all(|l| l.k == first.k) {
            Some(first.k)
        } else {
            return Err(LabError::Invalid("per-level k must follow the default or be uniform".into()));
        };
        let cfg = PyramidConfig {
            capacity: self.capacity,
            first_level_size: self.first_level_size,
            c: first.c,
            k_override,
            seed: self.seed,
            policy: self.policy.into(),
        };
        cfg.validate()?;
        let implied: Vec<ZhtParams> = cfg.levels();
        let stored: Vec<ZhtParams> = self.levels.iter().map(|l| ZhtParams { n: l.n, k: l.k, c: l.c }).collect();
        if implied != stored {
            return Err(LabError::Invalid("level table does not match capacity and first level size".into()));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything needed to repeat one CLI run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub capacity: usize,
    pub p: usize,
    pub c: usize,
    pub k: Option<usize>,
    pub ops: u64,
    pub workload: Workload,
    pub seed: u64,
    pub policy: PolicyDoc,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn oram_config(&self) -> PyramidConfig {
        PyramidConfig {
            capacity: self.capacity,
            first_level_size: self.p,
            c: self.c,
            k_override: self.k,
            seed: self.seed,
            policy: self.policy.into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
