use std::fs;
use std::path::{Path, PathBuf};

use fracstab::{Error, TrajectorySequence};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    Ok(text)
}

pub fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist", path.display())))
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    require_exists(path)?;
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn read_trajectory(path: &Path) -> Result<TrajectorySequence, CliError> {
    let text = read_text(path)?;
    TrajectorySequence::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Files in `dir` ending with `suffix`, sorted by name.
pub fn list_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    require_exists(dir)?;
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))? {
        let path = entry.map_err(|e| CliError::Io(dir.to_path_buf(), e))?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Detector and ground-truth pairs (`<id>.z.json`, `<id>.gt.json`) in a
/// split directory.
pub fn read_split(dir: &Path) -> Result<(Vec<TrajectorySequence>, Vec<TrajectorySequence>), CliError> {
    let gt_paths = list_with_suffix(dir, ".gt.json")?;
    if gt_paths.is_empty() {
        return Err(CliError::Data(format!("no *.gt.json files in {}", dir.display())));
    }
    let mut z = Vec::new();
    let mut p = Vec::new();
    for gt in gt_paths {
        let name = gt.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name.trim_end_matches(".gt.json");
        p.push(read_trajectory(&gt)?);
        z.push(read_trajectory(&dir.join(format!("{stem}.z.json")))?);
    }
    Ok((z, p))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    extra: Value,
    files: Vec<FileEntry>,
}

/// Collects output files and writes them together with a manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(root.to_path_buf(), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Io(path.clone(), e))?;
        self.files.push(FileEntry {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(mut self, command: &str, seed: u64, config: &Value, extra: Value) -> Result<(), CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let config_text = serde_json::to_string(config).map_err(Error::from)?;
        let manifest = Manifest {
            tool: "fracstab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config,
            extra,
            files: self.files,
        };
        let path = self.root.join(MANIFEST);
        fs::write(&path, to_json(&manifest)?).map_err(|e| CliError::Io(path, e))
    }
}
