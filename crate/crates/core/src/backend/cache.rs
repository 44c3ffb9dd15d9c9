use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Answer, ScoreRequest, CANDIDATES};
use crate::persona::Direction;

pub const CACHE_SCHEMA_VERSION: u32 = 1;

/// Content address of a scored prompt.
///
/// `draw_tag` is only set for stochastic backends, whose answers depend on
/// the draw coordinates and not just the prompt text.
pub fn cache_key(
    model_name: &str,
    system_text: &str,
    user_text: &str,
    candidates: &[&str],
    draw_tag: Option<&str>,
) -> String {
    let mut h = Sha256::new();
    let mut part = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    part(b"steerbench-cache/v1");
    part(model_name.as_bytes());
    part(system_text.as_bytes());
    part(user_text.as_bytes());
    for c in candidates {
        part(c.as_bytes());
    }
    if let Some(tag) = draw_tag {
        part(b"draw");
        part(tag.as_bytes());
    }
    hex::encode(h.finalize())
}

/// One cached answer, stored with the exact prompt texts for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub schema_version: u32,
    pub key: String,
    pub model_name: String,
    pub system_text: String,
    pub user_text: String,
    pub candidates: Vec<String>,
    pub answer: Answer,
    pub logprob_gap: f64,
    pub valence: Direction,
    pub confidence: f64,
    pub dimension: String,
    pub budget_k: usize,
}

impl CacheEntry {
    pub fn new(key: String, model_name: &str, request: &ScoreRequest, logprob_gap: f64) -> Self {
        let statement = &request.prompt.profiling_statement;
        Self {
            schema_version: CACHE_SCHEMA_VERSION,
            key,
            model_name: model_name.to_owned(),
            system_text: request.prompt.system_text.clone(),
            user_text: request.prompt.user_text.clone(),
            candidates: CANDIDATES.iter().map(|c| c.to_string()).collect(),
            answer: Answer::from_gap(logprob_gap),
            logprob_gap,
            valence: statement.direction(),
            confidence: statement.label_confidence(),
            dimension: request.coords.dimension.clone(),
            budget_k: request.coords.budget_k,
        }
    }
}

/// Append-only, content-addressed store: one JSON file per entry, named by
/// the hex key.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    tmp_counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Corrupt or mismatched entries are reported and treated as misses.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache entry {} unreadable: {e}", path.display());
                return None;
            }
        };
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.key == key && entry.answer == Answer::from_gap(entry.logprob_gap) => Some(entry),
            Ok(_) => {
                log::warn!("cache entry {} inconsistent, ignoring", path.display());
                None
            }
            Err(e) => {
                log::warn!("cache entry {} corrupt ({e}), ignoring", path.display());
                None
            }
        }
    }

    /// Writes an entry atomically (temp file + rename). Existing valid
    /// entries are left untouched.
    pub fn put(&self, entry: &CacheEntry) -> std::io::Result<()> {
        if self.contains(&entry.key) {
            return Ok(());
        }
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{}.{}.{n}.tmp", entry.key, std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec_pretty(entry).expect("entry serializes"))?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path_for(&entry.key))
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
