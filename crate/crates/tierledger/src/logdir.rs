//! Append-only log directory.
//!
//! ```text
//! genesis.json          SystemConfig
//! header_000000.json    genesis header, no receipts
//! batch_000001.json     Batch
//! header_000001.json    { "header": BatchHeader, "receipts": [Receipt] }
//! ...
//! ```
//!
//! Replay reads exactly these files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use tierledger_core::ledger::{Batch, BatchHeader, LogEntry, Receipt};
use tierledger_core::SystemConfig;

pub const GENESIS_FILE: &str = "genesis.json";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, batch: Option<u64>, source: serde_json::Error },
    #[error("missing {}", path.display())]
    Missing { path: PathBuf, batch: u64 },
    #[error("invalid genesis config: {0}")]
    Config(String),
    #[error("{} already holds a log", .0.display())]
    Exists(PathBuf),
}

impl LogError {
    /// Batch whose files are at fault, 0 for genesis.
    pub fn batch(&self) -> Option<u64> {
        match self {
            LogError::Parse { batch, .. } => *batch,
            LogError::Missing { batch, .. } => Some(*batch),
            LogError::Config(_) => Some(0),
            LogError::Io { .. } | LogError::Exists(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderFile {
    pub header: BatchHeader,
    pub receipts: Vec<Receipt>,
}

pub fn batch_file(n: u64) -> String {
    format!("batch_{n:06}.json")
}

pub fn header_file(n: u64) -> String {
    format!("header_{n:06}.json")
}

/// Serialized form of every log file. Writers and mutation tests share it.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("log types serialize");
    s.push('\n');
    s
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, contents: &str) -> Result<(), LogError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read<T: DeserializeOwned>(path: &Path, batch: Option<u64>) -> Result<T, LogError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(LogError::Missing { path: path.to_path_buf(), batch: batch.unwrap_or(0) })
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    serde_json::from_str(&text).map_err(|source| LogError::Parse { path: path.to_path_buf(), batch, source })
}

/// Writer handle on a log directory.
#[derive(Clone, Debug)]
pub struct LogDir {
    path: PathBuf,
}

impl LogDir {
    /// Starts a new log. Fails if `path` already holds one.
    pub fn create(path: &Path, cfg: &SystemConfig, genesis: &BatchHeader) -> Result<LogDir, LogError> {
        fs::create_dir_all(path).map_err(io_err(path))?;
        let g = path.join(GENESIS_FILE);
        if g.exists() {
            return Err(LogError::Exists(path.to_path_buf()));
        }
        write(&g, &to_json(cfg))?;
        write(&path.join(header_file(0)), &to_json(&HeaderFile { header: genesis.clone(), receipts: vec![] }))?;
        Ok(LogDir { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &LogEntry) -> Result<(), LogError> {
        let n = entry.batch.number;
        write(&self.path.join(batch_file(n)), &to_json(&entry.batch))?;
        let hf = HeaderFile { header: entry.header.clone(), receipts: entry.receipts.clone() };
        write(&self.path.join(header_file(n)), &to_json(&hf))
    }
}

/// Everything replay needs, as read from disk.
#[derive(Clone, Debug)]
pub struct Log {
    pub cfg: SystemConfig,
    pub genesis: BatchHeader,
    pub entries: Vec<LogEntry>,
}

fn numbered(name: &str, prefix: &str) -> Option<u64> {
    let digits = name.strip_prefix(prefix)?.strip_suffix(".json")?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit())).then(|| digits.parse().ok())?
}

/// Reads a log directory. Batches must be numbered 1..=n with no gaps, each
/// with its header file.
pub fn load(path: &Path) -> Result<Log, LogError> {
    let cfg: SystemConfig = read(&path.join(GENESIS_FILE), Some(0))?;
    cfg.validate().map_err(|e| LogError::Config(format!("{e:?}")))?;
    let genesis: HeaderFile = read(&path.join(header_file(0)), Some(0))?;

    let mut last = 0;
    for dirent in fs::read_dir(path).map_err(io_err(path))? {
        let name = dirent.map_err(io_err(path))?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = numbered(&name, "batch_").or_else(|| numbered(&name, "header_")) {
            last = last.max(n);
        }
    }

    let mut entries = Vec::with_capacity(last as usize);
    for n in 1..=last {
        let batch: Batch = read(&path.join(batch_file(n)), Some(n))?;
        let hf: HeaderFile = read(&path.join(header_file(n)), Some(n))?;
        entries.push(LogEntry { batch, header: hf.header, receipts: hf.receipts });
    }
    Ok(Log { cfg, genesis: genesis.header, entries })
}
