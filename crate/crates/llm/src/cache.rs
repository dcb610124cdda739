//! Append-only JSON-lines response cache.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::endpoint::{LlmError, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response_text: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub token_usage: Option<TokenUsage>,
}

/// SHA-256 over the JSON encoding of `[model, prompt, temperature, index]`.
pub fn cache_key(model: &str, prompt: &str, temperature: f64, index: usize) -> String {
    let material = serde_json::to_string(&(model, prompt, temperature, index)).expect("plain values serialize");
    hex::encode(Sha256::digest(material.as_bytes()))
}

#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CacheEntry>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> ResponseCache {
        ResponseCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads every well-formed line of `path` (creating it if missing).
    /// Corrupt lines, such as a torn final write, are skipped with a
    /// warning; a later entry with the same key wins.
    pub fn open(path: &Path) -> Result<ResponseCache, LlmError> {
        let io = |e: std::io::Error| LlmError::Cache(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io)?;

        let mut entries = HashMap::new();
        let mut bad = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<CacheEntry>(line) {
                Ok(e) => {
                    entries.insert(e.key.clone(), e);
                }
                Err(_) => bad += 1,
            }
        }
        if bad > 0 {
            warn!("{}: skipped {bad} unreadable cache lines", path.display());
        }
        if !text.is_empty() && !text.ends_with('\n') {
            file.seek(SeekFrom::End(0)).map_err(io)?;
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(ResponseCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    /// Persists the entry (one line, flushed) before making it visible.
    pub fn insert(&self, key: String, response_text: String, token_usage: Option<TokenUsage>) -> Result<(), LlmError> {
        let entry = CacheEntry {
            key,
            response_text,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            token_usage,
        };
        {
            let mut writer = self.writer.lock().unwrap();
            if let Some(file) = writer.as_mut() {
                let mut line = serde_json::to_string(&entry).map_err(|e| LlmError::Cache(e.to_string()))?;
                line.push('\n');
                file.write_all(line.as_bytes())
                    .and_then(|_| file.flush())
                    .map_err(|e| LlmError::Cache(e.to_string()))?;
            }
        }
        self.entries.lock().unwrap().insert(entry.key.clone(), entry);
        Ok(())
    }
}
