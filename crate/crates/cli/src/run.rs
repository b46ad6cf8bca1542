//! Output directories, run manifests and configuration loading.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to repeat a run: pass the file back through `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub jobs: Option<usize>,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub files: Vec<String>,
}

pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    /// Create `<outdir>/<subcommand>/<timestamp>/` and write the manifest.
    pub fn start(
        outdir: &Path,
        subcommand: &str,
        config: &impl Serialize,
        seed: u64,
        jobs: Option<usize>,
    ) -> CliResult<Run> {
        let started = Utc::now();
        let parent = outdir.join(subcommand);
        fs::create_dir_all(&parent).map_err(|e| CliError::usage(format!("{}: {e}", parent.display())))?;
        let stamp = started.format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let mut dir = parent.join(&stamp);
        let mut k = 1;
        loop {
            match fs::create_dir(&dir) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    dir = parent.join(format!("{stamp}-{k}"));
                    k += 1;
                }
                Err(e) => return Err(CliError::usage(format!("{}: {e}", dir.display()))),
            }
        }
        let run = Run {
            dir,
            manifest: RunManifest {
                subcommand: subcommand.into(),
                config: serde_json::to_value(config)?,
                seed,
                version: env!("CARGO_PKG_VERSION").into(),
                jobs,
                started,
                finished: None,
                files: vec![MANIFEST.into()],
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> CliResult<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(MANIFEST))?);
        serde_json::to_writer_pretty(&mut w, &self.manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Open an output file and record it in the manifest.
    pub fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        self.manifest.files.push(name.into());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.manifest.finished = Some(Utc::now());
        self.write_manifest()?;
        Ok(self.dir)
    }
}

/// A configuration object read from `--config`, which may be a plain
/// configuration or the manifest of an earlier run.
#[derive(Debug, Default)]
pub struct Loaded {
    pub config: Map<String, Value>,
    pub seed: Option<u64>,
}

pub fn load(path: Option<&Path>, subcommand: &str) -> CliResult<Loaded> {
    let Some(path) = path else {
        return Ok(Loaded::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(CliError::usage(format!("{}: expected a JSON object", path.display())));
    };
    if obj.contains_key("subcommand") && obj.contains_key("config") {
        let manifest: RunManifest = serde_json::from_value(Value::Object(obj))
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if manifest.subcommand != subcommand {
            return Err(CliError::usage(format!(
                "{} is a manifest for '{}', not '{subcommand}'",
                path.display(),
                manifest.subcommand
            )));
        }
        let Value::Object(config) = manifest.config else {
            return Err(CliError::usage("manifest config is not an object"));
        };
        return Ok(Loaded {
            config,
            seed: Some(manifest.seed),
        });
    }
    let seed = match obj.remove("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v).map_err(|e| CliError::usage(format!("seed: {e}")))?),
    };
    Ok(Loaded { config: obj, seed })
}

/// Command-line values that replace entries of the configuration file.
/// Keys may be dotted to reach nested objects.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(&'static str, Value)>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &'static str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.push((key, serde_json::to_value(v).expect("serializable flag value")));
        }
        self
    }
}

pub fn resolve<T: DeserializeOwned>(mut base: Map<String, Value>, overrides: Overrides) -> CliResult<T> {
    for (key, value) in overrides.0 {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("nonempty key");
        let mut obj = &mut base;
        for part in parts {
            let entry = obj.entry(part).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            obj = entry.as_object_mut().expect("object");
        }
        obj.insert(last.into(), value);
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| CliError::usage(format!("config: {e}")))
}

/// Six significant digits with trailing zeros removed.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    if x.abs() < 1e-4 || x.abs() >= 1e6 {
        return format!("{x:.5e}");
    }
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
