use std::path::{Path, PathBuf};

use attlab::net::MODEL_FORMAT_VERSION;
use attlab::passlog::PASSLOG_FORMAT_VERSION;
use attlab::Result;
use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// One per invocation, written next to the outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub model_format_version: u32,
    pub passlog_format_version: u32,
    pub subcommand: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub started_utc: DateTime<Utc>,
    pub finished_utc: Option<DateTime<Utc>>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl RunManifest {
    pub fn start(subcommand: &str) -> Self {
        RunManifest {
            tool: "attlab",
            tool_version: env!("CARGO_PKG_VERSION"),
            model_format_version: MODEL_FORMAT_VERSION,
            passlog_format_version: PASSLOG_FORMAT_VERSION,
            subcommand: subcommand.to_string(),
            args: std::env::args().skip(1).collect(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            started_utc: Utc::now(),
            finished_utc: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputFile { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().display().to_string());
    }

    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_utc = Some(Utc::now());
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(path)
    }
}
