//! Flat-file artifact store with per-stage manifests.
//!
//! Every stage writes `manifests/<stage>.json` listing the sha256 of each
//! file it read and wrote. Before a stage reads an upstream artifact, the
//! artifact is checked against its producer's manifest, and that manifest's
//! own inputs are checked against the files now on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Pipeline stages, named as their subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenSynthetic,
    Ingest,
    Od,
    Assign,
    FitPref,
    Recommend,
    Simulate,
    Sweep,
    Predict,
}

impl Stage {
    pub fn command(&self) -> &'static str {
        match self {
            Stage::GenSynthetic => "gen-synthetic",
            Stage::Ingest => "ingest",
            Stage::Od => "od",
            Stage::Assign => "assign",
            Stage::FitPref => "fit-pref",
            Stage::Recommend => "recommend",
            Stage::Simulate => "simulate",
            Stage::Sweep => "sweep",
            Stage::Predict => "predict",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    /// A raw input named in the config, relative to the config's directory.
    Input,
    /// A file in the output directory.
    Artifact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub kind: FileKind,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, FileHash>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// The output directory.
#[derive(Debug, Clone)]
pub struct Store {
    pub dir: PathBuf,
    /// Directory that relative raw-input paths are resolved against.
    pub input_base: PathBuf,
}

impl Store {
    pub fn new(dir: impl Into<PathBuf>, input_base: impl Into<PathBuf>) -> Result<Self, CliError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("manifests")).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            input_base: input_base.into(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.dir.join("manifests").join(format!("{}.json", stage.command()))
    }

    pub fn read_manifest(&self, stage: Stage) -> Result<Option<Manifest>, CliError> {
        let path = self.manifest_path(stage);
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Stale(format!("{} is not a valid manifest: {e}", path.display())))
    }

    fn resolve(&self, f: &FileHash) -> PathBuf {
        match f.kind {
            FileKind::Input => self.input_base.join(&f.path),
            FileKind::Artifact => self.dir.join(&f.path),
        }
    }

    /// Checks that `name` exists and is exactly what `producer` wrote from
    /// inputs that have not changed since.
    pub fn verify(&self, name: &str, producer: Stage) -> Result<String, CliError> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(CliError::MissingArtifact {
                artifact: name.to_string(),
                producer: producer.command(),
            });
        }
        let Some(manifest) = self.read_manifest(producer)? else {
            return Err(CliError::Stale(format!(
                "{name} has no manifest; rerun `tdm {}`",
                producer.command()
            )));
        };
        let sha = hash_file(&path)?;
        if manifest.outputs.get(name) != Some(&sha) {
            return Err(CliError::Stale(format!(
                "{name} does not match the output recorded by `tdm {}`; rerun it",
                producer.command()
            )));
        }
        for (key, f) in &manifest.inputs {
            let p = self.resolve(f);
            let current = if p.is_file() { Some(hash_file(&p)?) } else { None };
            if current.as_deref() != Some(f.sha256.as_str()) {
                return Err(CliError::Stale(format!(
                    "{name} was built from a different `{key}` ({}); rerun `tdm {}`",
                    p.display(),
                    producer.command()
                )));
            }
        }
        Ok(sha)
    }
}

/// Collects the hashes a stage reads and writes, then emits its manifest.
pub struct StageRun<'a> {
    store: &'a Store,
    stage: Stage,
    seed: u64,
    config: serde_json::Value,
    inputs: BTreeMap<String, FileHash>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageRun<'a> {
    pub fn new(store: &'a Store, stage: Stage, seed: u64, config: serde_json::Value) -> Self {
        Self {
            store,
            stage,
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Reads a raw input file, recording its hash under `key`.
    pub fn read_input(&mut self, key: &str, path: &Path) -> Result<Vec<u8>, CliError> {
        let full = self.store.input_base.join(path);
        let bytes = fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        self.inputs.insert(
            key.to_string(),
            FileHash {
                kind: FileKind::Input,
                path: path.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&bytes),
            },
        );
        Ok(bytes)
    }

    /// Reads an upstream artifact after verifying it against its producer.
    pub fn read_artifact(&mut self, name: &str, producer: Stage) -> Result<Vec<u8>, CliError> {
        self.store.verify(name, producer)?;
        let path = self.store.path(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.inputs.insert(
            name.to_string(),
            FileHash {
                kind: FileKind::Artifact,
                path: name.to_string(),
                sha256: sha256_hex(&bytes),
            },
        );
        Ok(bytes)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, name: &str, producer: Stage) -> Result<T, CliError> {
        let bytes = self.read_artifact(name, producer)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Runtime(format!("{name}: {e}")))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.store.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            command: self.stage.command().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let path = self.store.manifest_path(self.stage);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::new(dir.path().join("out"), dir.path()).unwrap();
        (dir, s)
    }

    #[test]
    fn missing_artifact_names_producer() {
        let (_d, s) = store();
        match s.verify("model.json", Stage::FitPref) {
            Err(CliError::MissingArtifact { producer, .. }) => assert_eq!(producer, "fit-pref"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampering_and_upstream_changes_are_detected() {
        let (d, s) = store();
        fs::write(d.path().join("raw.csv"), "a\n").unwrap();
        let mut run = StageRun::new(&s, Stage::Ingest, 1, serde_json::Value::Null);
        run.read_input("cdr", Path::new("raw.csv")).unwrap();
        run.write("x.json", b"{}").unwrap();
        run.finish().unwrap();
        s.verify("x.json", Stage::Ingest).unwrap();

        fs::write(s.path("x.json"), b"{ }").unwrap();
        assert!(matches!(s.verify("x.json", Stage::Ingest), Err(CliError::Stale(_))));
        fs::write(s.path("x.json"), b"{}").unwrap();
        fs::write(d.path().join("raw.csv"), "b\n").unwrap();
        assert!(matches!(s.verify("x.json", Stage::Ingest), Err(CliError::Stale(_))));
    }
}
