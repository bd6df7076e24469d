use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// SHA-256 over everything that determines a model's answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn new(model_id: &str, prompt_text: &str, image: &[u8], max_output_tokens: u32, temperature: f64) -> Self {
        let mut h = Sha256::new();
        // length prefixes keep field boundaries unambiguous
        for field in [model_id.as_bytes(), prompt_text.as_bytes(), image] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field);
        }
        h.update(max_output_tokens.to_le_bytes());
        h.update(temperature.to_bits().to_le_bytes());
        Self(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub text: String,
    /// Seconds since the Unix epoch at which the answer was stored.
    pub timestamp: u64,
}

/// Response store keyed by [`CacheKey`]. The on-disk variant keeps one
/// JSON file per digest, named by the hex digest.
#[derive(Debug)]
pub enum ResponseCache {
    Disabled,
    Memory(RwLock<HashMap<CacheKey, CacheEntry>>),
    Disk(PathBuf),
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::Memory(RwLock::new(HashMap::new()))
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache::Disk(dir))
    }

    pub fn get(&self, key: &CacheKey) -> io::Result<Option<CacheEntry>> {
        match self {
            ResponseCache::Disabled => Ok(None),
            ResponseCache::Memory(m) => Ok(m.read().unwrap().get(key).cloned()),
            ResponseCache::Disk(dir) => match fs::read(dir.join(key.hex())) {
                Ok(bytes) => match serde_json::from_slice(&bytes) {
                    Ok(entry) => Ok(Some(entry)),
                    Err(e) => {
                        log::warn!("ignoring corrupt cache entry {}: {e}", key.hex());
                        Ok(None)
                    }
                },
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e),
            },
        }
    }

    pub fn put(&self, key: &CacheKey, text: &str) -> io::Result<()> {
        let entry = CacheEntry {
            text: text.to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        match self {
            ResponseCache::Disabled => Ok(()),
            ResponseCache::Memory(m) => {
                m.write().unwrap().insert(*key, entry);
                Ok(())
            }
            ResponseCache::Disk(dir) => {
                // write-then-rename so concurrent readers never see partial files
                let mut tmp = tempfile_in(dir)?;
                tmp.1.write_all(&serde_json::to_vec(&entry)?)?;
                tmp.1.sync_all()?;
                drop(tmp.1);
                fs::rename(&tmp.0, dir.join(key.hex()))
            }
        }
    }
}

fn tempfile_in(dir: &std::path::Path) -> io::Result<(PathBuf, fs::File)> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let name = format!(
        ".tmp-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    let path = dir.join(name);
    let f = fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
    Ok((path, f))
}
