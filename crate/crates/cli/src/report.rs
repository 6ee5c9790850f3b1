//! Report envelopes and atomic artifact writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bihm_core::grid4::{write_bhm4, Field};
use bihm_core::{Error, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wrapper written around every JSON result. Only `timestamp` varies
/// between identical runs.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub code_version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub results: T,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timestamp {
    pub unix_seconds: u64,
}

impl Timestamp {
    pub fn now() -> Self {
        let unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { unix_seconds }
    }
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::ConfigInvalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects the artifacts of one command under the output directory.
#[derive(Debug)]
pub struct ArtifactWriter<'a> {
    config: &'a RunConfig,
    command: &'a str,
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl<'a> ArtifactWriter<'a> {
    pub fn new(config: &'a RunConfig, command: &'a str) -> Result<Self> {
        let dir = config.output_dir.clone();
        fs::create_dir_all(&dir)?;
        Ok(Self { config, command, dir, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        atomic_write(&path, bytes)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, results: T) -> Result<PathBuf> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            code_version: CODE_VERSION,
            command: self.command,
            config: self.config,
            results,
            timestamp: Timestamp::now(),
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.put(name, text.as_bytes())
    }

    pub fn field(&mut self, name: &str, u: &Field) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_bhm4(&path, u)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Shortest round-trip representation, as used in CSV cells.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// The report with its timestamp removed, for reproducibility comparisons.
pub fn without_timestamp(text: &str) -> Result<String> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| Error::InputMissing(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.remove("timestamp");
    }
    serde_json::to_string_pretty(&v).map_err(|e| Error::InputMissing(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = std::env::temp_dir().join(format!("bihm-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.json");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.json")]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn envelope_carries_config_and_version() {
        let dir = std::env::temp_dir().join(format!("bihm-env-{}", std::process::id()));
        let cfg = RunConfig { output_dir: dir.clone(), ..Default::default() };
        let mut w = ArtifactWriter::new(&cfg, "test").unwrap();
        let p = w.json("r.json", serde_json::json!({"x": 1.5})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["code_version"], CODE_VERSION);
        assert_eq!(v["config"]["flow"]["dt_factor"], 0.1);
        assert_eq!(v["results"]["x"], 1.5);
        assert!(v["timestamp"]["unix_seconds"].is_u64());
        let stripped = without_timestamp(&fs::read_to_string(&p).unwrap()).unwrap();
        assert!(!stripped.contains("timestamp"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_cells_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 12345.678] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
