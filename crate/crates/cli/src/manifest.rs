use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run; written before any result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arch_file: Option<PathBuf>,
    /// Command-line arguments after the subcommand, without output flags.
    pub args: Vec<String>,
    pub config_overrides: serde_json::Value,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub tool_version: String,
    /// SHA-256 of every input file, keyed by path.
    pub input_hashes: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes of every existing file or, for directories, every file inside.
pub fn hash_inputs(paths: &[&Path]) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for &p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for e in entries {
                out.insert(e.display().to_string(), sha256_file(&e)?);
            }
        } else {
            out.insert(p.display().to_string(), sha256_file(p)?);
        }
    }
    Ok(out)
}

/// Strips `--out DIR`, `--out=DIR` and `--force` from an argument list.
pub fn strip_output_flags(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
        } else if a != "--force" && !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

/// Creates `dir`, refusing an existing non-empty directory unless `force`.
pub fn prepare_output(dir: &Path, force: bool) -> Result<(), Failure> {
    if dir.exists() {
        let empty = dir.is_dir() && fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !empty && !force {
            return Err(Failure::Usage(format!(
                "output directory {} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), text).map_err(|e| Failure::Runtime(e.to_string()))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid manifest {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_flags_are_stripped() {
        let args: Vec<String> = ["--arch", "a.json", "--out", "x", "--force", "--out=y", "--seed", "3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_output_flags(&args), vec!["--arch", "a.json", "--seed", "3"]);
    }

    #[test]
    fn existing_directory_refused_without_force() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("f"), "x").unwrap();
        assert!(matches!(prepare_output(dir.path(), false), Err(Failure::Usage(_))));
        assert!(prepare_output(dir.path(), true).is_ok());
        let empty = dir.path().join("empty");
        fs::create_dir(&empty).unwrap();
        assert!(prepare_output(&empty, false).is_ok());
    }
}
