//! Content-addressed artifact cache.
//!
//! Entries are directories under `<root>/<kind>/<key>` where the key is a
//! SHA-256 over the input file contents and the config keys that affect the
//! artifact. Entries are filled in a scratch directory and renamed into
//! place, so a reader never sees a partial entry.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{IoContext, Result};

pub const CACHE_ENV: &str = "BEDSAL_CACHE_DIR";

/// Incremental cache key.
#[derive(Clone)]
pub struct KeyHasher(Sha256);

impl KeyHasher {
    pub fn new(kind: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"bedsal-cache\0");
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(b"\0");
        h.update(kind.as_bytes());
        KeyHasher(h)
    }

    /// Adds a named, length-prefixed field.
    pub fn field(mut self, name: &str, value: impl AsRef<[u8]>) -> Self {
        let v = value.as_ref();
        self.0.update(name.as_bytes());
        self.0.update((v.len() as u64).to_le_bytes());
        self.0.update(v);
        self
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).at(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).at(path)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

static SCRATCH: AtomicUsize = AtomicUsize::new(0);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    root: Option<PathBuf>,
}

impl Cache {
    pub fn new(root: PathBuf) -> Self {
        Cache { root: Some(root) }
    }

    pub fn disabled() -> Self {
        Cache { root: None }
    }

    /// `$BEDSAL_CACHE_DIR` when set (an empty value disables caching),
    /// otherwise `default`.
    pub fn from_env_or(default: PathBuf) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(v) if v.is_empty() => Cache::disabled(),
            Some(v) => Cache::new(PathBuf::from(v)),
            None => Cache::new(default),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// The entry directory if it has been stored.
    pub fn lookup(&self, kind: &str, key: &str) -> Option<PathBuf> {
        let dir = self.root.as_ref()?.join(kind).join(key);
        dir.is_dir().then_some(dir)
    }

    /// Fills a fresh entry with `fill` and publishes it. Returns the entry
    /// directory, or `None` when caching is disabled. If another writer
    /// published the same key first, its entry is kept.
    pub fn store(&self, kind: &str, key: &str, fill: impl FnOnce(&Path) -> Result<()>) -> Result<Option<PathBuf>> {
        let Some(root) = &self.root else {
            return Ok(None);
        };
        let parent = root.join(kind);
        fs::create_dir_all(&parent).at(&parent)?;
        let scratch = parent.join(format!(
            ".tmp-{key}-{}-{}",
            std::process::id(),
            SCRATCH.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir(&scratch).at(&scratch)?;
        if let Err(e) = fill(&scratch) {
            let _ = fs::remove_dir_all(&scratch);
            return Err(e);
        }
        let dest = parent.join(key);
        if fs::rename(&scratch, &dest).is_err() {
            let _ = fs::remove_dir_all(&scratch);
            if !dest.is_dir() {
                return Err(crate::error::Error::io(
                    &dest,
                    std::io::Error::other("could not publish cache entry"),
                ));
            }
        }
        Ok(Some(dest))
    }
}
