//! Run manifests: what was run, on which inputs, producing which outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    pub params: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    /// Output file names, relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects inputs and outputs of one command run and writes the manifest last.
pub struct Run {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, argv: &[String], params: &impl Serialize, out_dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(out_dir).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;
        Ok(Run {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                argv: argv.to_vec(),
                params: serde_json::to_value(params).expect("params serialize"),
                inputs: Vec::new(),
                seeds: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        self.manifest.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        String::from_utf8(bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seeds.push(seed);
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        self.manifest.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Writes a JSON object with a `manifest` back-reference added.
    pub fn write_json(&mut self, name: &str, value: impl Serialize) -> Result<(), Failure> {
        let mut value = serde_json::to_value(value).expect("report serialize");
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("manifest".into(), MANIFEST_FILE.into());
        }
        let mut text = serde_json::to_string_pretty(&value).expect("report serialize");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(self) -> Result<RunManifest, Failure> {
        let path = self.out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialize");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        Ok(self.manifest)
    }
}

/// Loads a manifest and checks its inputs still match their recorded digests.
pub fn load_for_rerun(path: &Path) -> Result<RunManifest, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    for input in &manifest.inputs {
        let bytes = fs::read(&input.path).map_err(|e| Failure::Data(format!("{}: {e}", input.path)))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(Failure::Data(format!("input {} changed since the recorded run", input.path)));
        }
    }
    Ok(manifest)
}

/// `argv` with every `--out-dir` occurrence replaced by `out_dir`.
pub fn retarget(argv: &[String], out_dir: &Path) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len() + 2);
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out-dir" {
            skip = true;
            continue;
        }
        if a.starts_with("--out-dir=") {
            continue;
        }
        out.push(a.clone());
    }
    out.push("--out-dir".into());
    out.push(out_dir.display().to_string());
    out
}

/// Output names whose digests differ between two runs, or are missing from either.
pub fn mismatched_outputs(recorded: &RunManifest, rerun: &RunManifest) -> Vec<String> {
    let mut bad: Vec<String> = recorded
        .outputs
        .iter()
        .filter(|o| !rerun.outputs.contains(o))
        .map(|o| o.path.clone())
        .collect();
    for o in &rerun.outputs {
        if !recorded.outputs.iter().any(|r| r.path == o.path) {
            bad.push(o.path.clone());
        }
    }
    bad
}
