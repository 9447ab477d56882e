//! Per-stage manifests: configuration hash, input and output file hashes.
//!
//! A stage may only consume an upstream artifact whose manifest exists, was
//! written under the same stage configuration, and whose recorded hashes
//! still match the files on disk, all the way up the chain.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Configuration keys that change each stage's outputs.
pub fn stage_keys(stage: &str) -> &'static [&'static str] {
    match stage {
        "synth" => &["synth_curves_per_template", "synth_noise", "synth_days_per_household", "synth_seed"],
        "ingest" => &[],
        "distances" => &["window", "cost"],
        "graph" => &["lambda", "edge_rule"],
        "cluster" => &["gamma", "gamma_mode"],
        "tlp" => &["window"],
        "baseline" => &["k", "baseline_init", "baseline_seed"],
        "validate" => &["method", "force_dba", "window", "cost", "sf_mode", "sdbw_mode"],
        "sweep" => &["gamma_start", "gamma_end", "gamma_step", "gamma_mode", "window", "cost"],
        "directory" => &["intervals", "window"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub producer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn stage_config(cfg: &RunConfig, stage: &str) -> BTreeMap<String, String> {
    stage_keys(stage)
        .iter()
        .map(|k| (k.to_string(), cfg.canonical(k)))
        .collect()
}

fn config_hash(config: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in config {
        h.update(format!("{k}={v}\n").as_bytes());
    }
    hex::encode(h.finalize())
}

/// One upstream file a stage reads.
#[derive(Debug, Clone)]
pub struct Input {
    pub path: PathBuf,
    pub producer: Option<&'static str>,
}

pub struct Artifacts<'a> {
    pub out: PathBuf,
    pub cfg: &'a RunConfig,
    pub force: bool,
}

impl<'a> Artifacts<'a> {
    pub fn new(cfg: &'a RunConfig, force: bool) -> Self {
        Self {
            out: cfg.out.clone(),
            cfg,
            force,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.path(&format!("{stage}.manifest.json"))
    }

    fn read_manifest(&self, stage: &str) -> CliResult<Option<Manifest>> {
        let p = self.manifest_path(stage);
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        let m = serde_json::from_str(&text)
            .map_err(|e| CliError::Stale(format!("{} is unreadable ({e}); rerun `loadnet {stage}`", p.display())))?;
        Ok(Some(m))
    }

    fn display_path(&self, p: &Path) -> String {
        p.strip_prefix(&self.out)
            .map(|r| r.display().to_string())
            .unwrap_or_else(|_| p.display().to_string())
    }

    fn resolve_recorded(&self, f: &FileHash) -> PathBuf {
        if f.producer.is_some() {
            self.path(&f.path)
        } else {
            PathBuf::from(&f.path)
        }
    }

    /// Check `stage`'s manifest and everything upstream of it.
    pub fn verify_stage(&self, stage: &'static str) -> CliResult<()> {
        let m = self.read_manifest(stage)?.ok_or_else(|| CliError::Missing {
            artifact: format!("{} outputs in {}", stage, self.out.display()),
            producer: stage,
        })?;
        let expected = stage_config(self.cfg, stage);
        if m.config != expected {
            let diff: Vec<String> = expected
                .iter()
                .filter(|(k, v)| m.config.get(*k) != Some(*v))
                .map(|(k, v)| format!("{k}: {} -> {v}", m.config.get(k).map_or("unset", String::as_str)))
                .collect();
            return Err(CliError::Stale(format!(
                "`{stage}` outputs were built with a different configuration ({}); rerun `loadnet {stage}`",
                diff.join(", ")
            )));
        }
        for f in &m.outputs {
            let p = self.path(&f.path);
            if !p.exists() {
                return Err(CliError::Missing {
                    artifact: p.display().to_string(),
                    producer: stage,
                });
            }
            if sha256_file(&p)? != f.sha256 {
                return Err(CliError::Stale(format!(
                    "{} changed after `{stage}` wrote it; rerun `loadnet {stage}`",
                    p.display()
                )));
            }
        }
        for f in &m.inputs {
            let p = self.resolve_recorded(f);
            let current = if p.exists() { Some(sha256_file(&p)?) } else { None };
            if current.as_deref() != Some(f.sha256.as_str()) {
                return Err(CliError::Stale(format!(
                    "input {} changed since `{stage}` ran; rerun `loadnet {stage}`",
                    p.display()
                )));
            }
            if let Some(producer) = &f.producer {
                self.verify_stage(static_stage(producer)?)?;
            }
        }
        Ok(())
    }

    /// Path of an upstream artifact after validating its producer chain.
    pub fn require(&self, producer: &'static str, name: &str) -> CliResult<Input> {
        if !self.force {
            self.verify_stage(producer)?;
        }
        let path = self.path(name);
        if !path.exists() {
            return Err(CliError::Missing {
                artifact: path.display().to_string(),
                producer,
            });
        }
        Ok(Input {
            path,
            producer: Some(producer),
        })
    }

    fn hash_inputs(&self, inputs: &[Input]) -> CliResult<Vec<FileHash>> {
        inputs
            .iter()
            .map(|i| {
                Ok(FileHash {
                    path: if i.producer.is_some() {
                        self.display_path(&i.path)
                    } else {
                        i.path.display().to_string()
                    },
                    sha256: sha256_file(&i.path)?,
                    producer: i.producer.map(str::to_string),
                })
            })
            .collect()
    }

    /// True when `stage` already ran with this configuration on these inputs
    /// and its outputs are intact.
    pub fn up_to_date(&self, stage: &'static str, inputs: &[Input]) -> CliResult<bool> {
        if self.force {
            return Ok(false);
        }
        let Some(m) = self.read_manifest(stage)? else {
            return Ok(false);
        };
        if m.version != VERSION || m.config != stage_config(self.cfg, stage) || m.inputs != self.hash_inputs(inputs)? {
            return Ok(false);
        }
        for f in &m.outputs {
            let p = self.path(&f.path);
            if !p.exists() || sha256_file(&p)? != f.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn write_manifest(&self, stage: &str, inputs: &[Input], outputs: &[&str]) -> CliResult<()> {
        let config = stage_config(self.cfg, stage);
        let manifest = Manifest {
            stage: stage.to_string(),
            version: VERSION.to_string(),
            config_hash: config_hash(&config),
            config,
            inputs: self.hash_inputs(inputs)?,
            outputs: outputs
                .iter()
                .map(|name| {
                    Ok(FileHash {
                        path: name.to_string(),
                        sha256: sha256_file(&self.path(name))?,
                        producer: None,
                    })
                })
                .collect::<CliResult<_>>()?,
        };
        let p = self.manifest_path(stage);
        let text = loadnet_core::fmt::to_json_string(&manifest).map_err(|e| CliError::Invalid(e.to_string()))?;
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }
}

fn static_stage(name: &str) -> CliResult<&'static str> {
    const STAGES: [&str; 10] = [
        "synth", "ingest", "distances", "graph", "cluster", "tlp", "baseline", "validate", "sweep", "directory",
    ];
    STAGES
        .iter()
        .find(|s| **s == name)
        .copied()
        .ok_or_else(|| CliError::Stale(format!("manifest names unknown stage {name:?}")))
}
