//! Fixture manifest (`manifest.json`).
//!
//! ```json
//! {
//!   "format": "vtr-fixtures",
//!   "version": 1,
//!   "tolerances": { "stage_rel": 1e-4, "logits_rel": 1e-4 },
//!   "cases": [{
//!     "name": "toy-0",
//!     "weights": "toy.vtrw",
//!     "image": "images/toy-0.pgm",
//!     "expected_class": 2,
//!     "trace_dir": "traces/toy-0",
//!     "stages": ["spt", "tokens", "embed", "layer0.ln1", "..."]
//!   }]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trace::stage_file;
use crate::error::{Error, FormatError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "vtr-fixtures";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub stage_rel: f64,
    pub logits_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stage_rel: 1e-4,
            logits_rel: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureCase {
    pub name: String,
    pub weights: String,
    pub image: String,
    pub expected_class: usize,
    pub trace_dir: String,
    pub stages: Vec<String>,
}

impl FixtureCase {
    /// Every file this case refers to, resolved against `root`.
    pub fn paths(&self, root: &Path) -> Vec<PathBuf> {
        let mut out = vec![root.join(&self.weights), root.join(&self.image)];
        let dir = root.join(&self.trace_dir);
        out.extend(self.stages.iter().map(|s| dir.join(stage_file(s))));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub cases: Vec<FixtureCase>,
}

impl Manifest {
    pub fn new(cases: Vec<FixtureCase>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            tolerances: Tolerances::default(),
            cases,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest =
            serde_json::from_str(text).map_err(|e| FormatError::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(FormatError::Manifest(format!("unknown format {:?}", m.format)).into());
        }
        if m.version != MANIFEST_VERSION {
            return Err(FormatError::VersionMismatch {
                expected: MANIFEST_VERSION,
                found: m.version,
            }
            .into());
        }
        if !(m.tolerances.stage_rel > 0.0 && m.tolerances.logits_rel > 0.0) {
            return Err(FormatError::Manifest("tolerances must be positive".into()).into());
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Referenced paths that do not exist under `root`.
    pub fn dangling(&self, root: &Path) -> Vec<PathBuf> {
        self.cases
            .iter()
            .flat_map(|c| c.paths(root))
            .filter(|p| !p.is_file())
            .collect()
    }
}

/// Load `<dir>/manifest.json`.
pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Manifest::parse(&text).map_err(|e| e.at(&path))
}
