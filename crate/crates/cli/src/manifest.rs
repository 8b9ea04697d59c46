use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_time_s: f64,
    pub phase_wall_times_s: BTreeMap<String, Vec<f64>>,
    #[serde(skip)]
    clock: Instant,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file(path: &Path) -> CliResult<InputDigest> {
    let bytes = std::fs::read(path)?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

impl RunManifest {
    pub fn start(command: &'static str, config: &impl Serialize, seed: u64) -> Self {
        RunManifest {
            tool: "prunekit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seeds: BTreeMap::from([("root".to_string(), seed)]),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            wall_time_s: 0.0,
            phase_wall_times_s: BTreeMap::new(),
            clock: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(sha256_file(path)?);
        Ok(())
    }

    pub fn inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> CliResult<()> {
        for p in paths {
            self.input(p)?;
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn phase_times(&mut self, name: &str, times: Vec<f64>) {
        self.phase_wall_times_s.insert(name.to_string(), times);
    }

    pub fn finish(mut self, path: &Path) -> CliResult<()> {
        self.finished_unix_s = unix_now();
        self.wall_time_s = self.clock.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&self).map_err(prunekit::Error::from)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// `<path>.<suffix>`, keeping the original extension in the stem.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
