//! Run manifests: a JSON record of everything needed to reproduce a run.
//!
//! The manifest is written before any artifact so an interrupted run still
//! leaves behind its intended configuration. Replay deserializes the stored
//! parameter snapshot and re-executes the command; with the same inputs this
//! reproduces artifacts byte for byte.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write manifest {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("manifest version {found} not supported (expected {MANIFEST_VERSION})")]
    Version { found: u32 },
}

/// Full record of one CLI invocation: the command name, its resolved
/// parameters, the seed, and every input and output path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub created_at: DateTime<Utc>,
    /// Subcommand name, e.g. "generate".
    pub command: String,
    /// Resolved parameter snapshot; replay deserializes this back into the
    /// command's parameter struct, so defaults are baked in at write time.
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<P: Serialize>(
        command: &str,
        params: &P,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<Self, serde_json::Error> {
        Ok(RunManifest {
            version: MANIFEST_VERSION,
            created_at: Utc::now(),
            command: command.to_string(),
            params: serde_json::to_value(params)?,
            seed,
            inputs,
            outputs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(|source| ManifestError::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ManifestError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: RunManifest =
            serde_json::from_str(&raw).map_err(|source| ManifestError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(ManifestError::Version {
                found: manifest.version,
            });
        }
        Ok(manifest)
    }

    pub fn params_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_value(self.params.clone())
    }
}

/// Manifest path for an artifact: `<artifact>.manifest.json`.
pub fn manifest_path_for(artifact: &Path) -> PathBuf {
    let mut name = artifact
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    name.push_str(".manifest.json");
    artifact.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Params {
        seed: u64,
        n: usize,
    }

    #[test]
    fn round_trips_params_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.ndjson.manifest.json");
        let params = Params { seed: 7, n: 100 };
        let m = RunManifest::new(
            "generate",
            &params,
            Some(7),
            vec![PathBuf::from("model.json")],
            vec![PathBuf::from("out.ndjson")],
        )
        .unwrap();
        m.save(&path).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back.command, "generate");
        assert_eq!(back.params_as::<Params>().unwrap(), params);
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.outputs, vec![PathBuf::from("out.ndjson")]);
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = RunManifest::new("x", &(), None, vec![], vec![]).unwrap();
        m.version = 99;
        let json = serde_json::to_string(&m).unwrap();
        std::fs::write(&path, json).unwrap();
        assert!(matches!(
            RunManifest::load(&path),
            Err(ManifestError::Version { found: 99 })
        ));
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path_for(Path::new("runs/out.ndjson")),
            PathBuf::from("runs/out.ndjson.manifest.json")
        );
    }
}
