//! Run manifest: which artifacts each command produced, relative to the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::Seeds;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "nlgrad-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    /// Unix seconds.
    pub created: u64,
    pub updated: u64,
    pub states: Vec<StateArtifacts>,
    #[serde(default)]
    pub baseline: Option<BaselineArtifacts>,
    #[serde(default)]
    pub analysis: Option<AnalysisArtifacts>,
    /// Fits whose NMSE exceeded the configured limit.
    #[serde(default)]
    pub nmse_flags: Vec<NmseFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateArtifacts {
    pub name: String,
    pub kind: String,
    pub records: Vec<String>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub fit_reports: Option<String>,
    #[serde(default)]
    pub gradients: Vec<String>,
    #[serde(default)]
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineArtifacts {
    pub lag: usize,
    pub lag_table: String,
    pub models: Vec<String>,
    pub fit_reports: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisArtifacts {
    pub metrics_csv: String,
    pub metrics_json: String,
    pub kde: Vec<String>,
    pub plots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmseFlag {
    /// Command that produced the fit.
    pub stage: String,
    pub state: String,
    pub dof: usize,
    /// Worst of train / validation / test, percent.
    pub nmse: f64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_hash: String, seeds: Seeds) -> Self {
        let now = unix_now();
        Self {
            format: MANIFEST_FORMAT.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seeds,
            created: now,
            updated: now,
            states: Vec::new(),
            baseline: None,
            analysis: None,
            nmse_flags: Vec::new(),
        }
    }

    pub fn state(&self, name: &str) -> Option<&StateArtifacts> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn state_mut(&mut self, name: &str) -> Option<&mut StateArtifacts> {
        self.states.iter_mut().find(|s| s.name == name)
    }

    /// Every artifact path the manifest lists.
    pub fn paths(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.states {
            out.extend(s.records.iter().map(String::as_str));
            out.extend(s.models.iter().map(String::as_str));
            out.extend(s.fit_reports.as_deref());
            out.extend(s.gradients.iter().map(String::as_str));
            out.extend(s.report.as_deref());
        }
        if let Some(b) = &self.baseline {
            out.push(&b.lag_table);
            out.extend(b.models.iter().map(String::as_str));
            out.push(&b.fit_reports);
        }
        if let Some(a) = &self.analysis {
            out.push(&a.metrics_csv);
            out.push(&a.metrics_json);
            out.extend(a.kde.iter().map(String::as_str));
            out.extend(a.plots.iter().map(String::as_str));
        }
        out
    }

    pub fn save(&mut self, dir: &Path) -> Result<PathBuf> {
        self.updated = unix_now();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(path)
    }

    /// Parses a manifest and checks that every listed artifact exists next to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound {
                path: path.to_path_buf(),
                context: "run manifest".into(),
            },
            _ => Error::Io(e),
        })?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
            Error::MalformedManifest(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::MalformedManifest(format!(
                "{}: format `{}` (expected `{MANIFEST_FORMAT}`)",
                path.display(),
                manifest.format
            )));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in manifest.paths() {
            if !dir.join(p).is_file() {
                return Err(Error::MalformedManifest(format!("listed artifact `{p}` does not exist")));
            }
        }
        Ok(manifest)
    }
}
