//! Append-only JSON-lines ledger where each line carries the hash of its
//! predecessor, so truncation or in-place edits are detectable.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::hash::sha256_hex;

/// Hash preceding the first line.
pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub seq: u64,
    pub prev: String,
    pub record: Json,
    pub hash: String,
}

fn line_hash(seq: u64, prev: &str, record: &Json) -> String {
    sha256_hex(format!("{seq}\n{prev}\n{record}"))
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("ledger line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Writer side of a ledger file.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    seq: u64,
    head: String,
}

impl Ledger {
    /// Opens `path` for appending, verifying any existing chain first.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let (seq, head) = if path.exists() {
            let lines = verify_chain(&path)?;
            match lines.last() {
                Some(l) => (l.seq + 1, l.hash.clone()),
                None => (0, GENESIS.to_string()),
            }
        } else {
            File::create(&path)?;
            (0, GENESIS.to_string())
        };
        Ok(Ledger { path, seq, head })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<&str, LedgerError> {
        let record = serde_json::to_value(record).map_err(io::Error::other)?;
        let hash = line_hash(self.seq, &self.head, &record);
        let line = LedgerLine {
            seq: self.seq,
            prev: self.head.clone(),
            record,
            hash: hash.clone(),
        };
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(
            f,
            "{}",
            serde_json::to_string(&line).map_err(io::Error::other)?
        )?;
        self.seq += 1;
        self.head = hash;
        Ok(&self.head)
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn len(&self) -> u64 {
        self.seq
    }

    pub fn is_empty(&self) -> bool {
        self.seq == 0
    }
}

/// Reads and checks every line of a ledger.
pub fn verify_chain(path: impl AsRef<Path>) -> Result<Vec<LedgerLine>, LedgerError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<LedgerLine> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |m: String| LedgerError::Corrupt {
            line: i + 1,
            message: m,
        };
        let l: LedgerLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        let (want_seq, want_prev) = out
            .last()
            .map_or((0, GENESIS), |p| (p.seq + 1, p.hash.as_str()));
        if l.seq != want_seq || l.prev != want_prev {
            return Err(corrupt("chain link broken".into()));
        }
        if l.hash != line_hash(l.seq, &l.prev, &l.record) {
            return Err(corrupt("hash mismatch".into()));
        }
        out.push(l);
    }
    Ok(out)
}

/// Reads a verified ledger and decodes each record.
pub fn read_records<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, LedgerError> {
    verify_chain(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_value(l.record).map_err(|e| LedgerError::Corrupt {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
