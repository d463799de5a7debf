//! Run directory plumbing. Every command leaves behind the resolved config,
//! the tool version, the seed, and a manifest of the files it produced.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ConfigError, ResolvedConfig};
use crate::Failure;
use crate::EXIT_RUNTIME;

pub struct RunDir {
    path: PathBuf,
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    command: &'a str,
    seed: u64,
}

impl RunDir {
    pub fn create(config: &ResolvedConfig) -> Result<Self, Failure> {
        let path = PathBuf::from(&config.out);
        fs::create_dir_all(&path).map_err(|e| {
            Failure::from(ConfigError::Invalid(format!(
                "cannot create run dir {}: {}",
                path.display(),
                e
            )))
        })?;
        let dir = RunDir { path };
        let echo = toml::to_string_pretty(config)
            .map_err(|e| io_failure(format!("serialize config: {}", e)))?;
        dir.write_text("config.toml", &echo)?;
        let meta = Meta {
            version: voxelprior::VERSION,
            command: &config.command,
            seed: config.seed,
        };
        dir.write_text(
            "meta.json",
            &serde_json::to_string_pretty(&meta).expect("meta serializes"),
        )?;
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), Failure> {
        fs::write(self.path.join(name), text)
            .map_err(|e| io_failure(format!("write {}: {}", name, e)))
    }

    pub fn write_files_manifest(&self, produced: &[String]) -> Result<(), Failure> {
        let mut all = vec!["config.toml".to_string(), "meta.json".to_string()];
        all.extend(produced.iter().cloned());
        all.push("files.json".to_string());
        self.write_text(
            "files.json",
            &serde_json::to_string_pretty(&all).expect("list serializes"),
        )
    }
}

fn io_failure(message: String) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        kind: "runtime",
        message,
    }
}
