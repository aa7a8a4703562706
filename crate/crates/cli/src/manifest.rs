use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command invocation and everything it wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config_paths: Vec<String>,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_s: f64,
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((hex, bytes.len() as u64))
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        command: &str,
        args: Vec<String>,
        config_paths: Vec<String>,
        seeds: Vec<u64>,
        out: &Path,
        files: &[PathBuf],
        wall_clock_s: f64,
    ) -> std::io::Result<Self> {
        let mut artifacts = Vec::new();
        for f in files {
            let (sha256, bytes) = sha256_file(&out.join(f))?;
            artifacts.push(Artifact { path: f.to_string_lossy().into_owned(), sha256, bytes });
        }
        Ok(Self {
            tool: "mesbench",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args,
            config_paths,
            seeds,
            output_dir: out.to_string_lossy().into_owned(),
            artifacts,
            wall_clock_s,
        })
    }
}
