//! On-disk JSON response cache.
//!
//! Layout: `<root>/<namespace>/<backend dir>/<key>.json`, where the backend
//! directory is the backend id with path-unsafe characters replaced (so
//! `BAAI/bge-large-en-v1.5` becomes `BAAI__bge-large-en-v1.5`). Writes go to a
//! temp file in the same directory and are renamed into place, so readers
//! never observe a truncated entry and concurrent writers of the same key
//! leave exactly one complete file.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Cache I/O failure.
#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache I/O on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot serialize cache entry: {0}")]
    Encode(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Hex sha256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex sha256 over several fields, NUL-separated so field boundaries count.
pub fn sha256_fields(fields: &[&str]) -> String {
    let mut h = Sha256::new();
    for f in fields {
        h.update(f.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Directory name for a backend id.
pub fn backend_dir(backend_id: &str) -> String {
    let mut out = String::with_capacity(backend_id.len());
    for c in backend_id.chars() {
        match c {
            '/' | '\\' => out.push_str("__"),
            c if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '+') => out.push(c),
            _ => out.push('_'),
        }
    }
    if out.is_empty() || out.chars().all(|c| c == '.') {
        out = format!("_{out}");
    }
    out
}

/// One file in the cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub namespace: String,
    pub backend: String,
    pub key: String,
    pub path: PathBuf,
    pub bytes: u64,
}

/// A cache rooted at one directory.
#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, namespace: &str, backend_id: &str, key: &str) -> PathBuf {
        self.root
            .join(namespace)
            .join(backend_dir(backend_id))
            .join(format!("{key}.json"))
    }

    /// Raw bytes of an entry, `None` when absent.
    pub fn get_bytes(
        &self,
        namespace: &str,
        backend_id: &str,
        key: &str,
    ) -> Result<Option<Vec<u8>>, CacheError> {
        let p = self.entry_path(namespace, backend_id, key);
        match std::fs::read(&p) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&p)(e)),
        }
    }

    /// Decoded entry. Undecodable entries are reported and treated as misses.
    pub fn get_json<T: DeserializeOwned>(
        &self,
        namespace: &str,
        backend_id: &str,
        key: &str,
    ) -> Result<Option<T>, CacheError> {
        let Some(bytes) = self.get_bytes(namespace, backend_id, key)? else {
            return Ok(None);
        };
        match serde_json::from_slice(&bytes) {
            Ok(v) => Ok(Some(v)),
            Err(e) => {
                log::warn!(
                    "corrupt cache entry {}: {e}; treating as miss",
                    self.entry_path(namespace, backend_id, key).display()
                );
                Ok(None)
            }
        }
    }

    /// Atomically writes `bytes` as the entry.
    pub fn put_bytes(
        &self,
        namespace: &str,
        backend_id: &str,
        key: &str,
        bytes: &[u8],
    ) -> Result<PathBuf, CacheError> {
        let path = self.entry_path(namespace, backend_id, key);
        let dir = path.parent().expect("entry has a parent");
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .suffix(".part")
            .tempfile_in(dir)
            .map_err(io_err(dir))?;
        tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| io_err(&path)(e.error))?;
        Ok(path)
    }

    pub fn put_json<T: Serialize>(
        &self,
        namespace: &str,
        backend_id: &str,
        key: &str,
        value: &T,
    ) -> Result<PathBuf, CacheError> {
        let bytes = serde_json::to_vec_pretty(value)?;
        self.put_bytes(namespace, backend_id, key, &bytes)
    }

    /// All entries, sorted by path. Temp files are skipped.
    pub fn list(&self) -> Result<Vec<CacheEntry>, CacheError> {
        let mut out = Vec::new();
        for (ns, backend, path) in self.walk()? {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let Some(key) = name.strip_suffix(".json") else {
                continue;
            };
            if name.starts_with(".tmp-") {
                continue;
            }
            let bytes = std::fs::metadata(&path).map_err(io_err(&path))?.len();
            out.push(CacheEntry {
                namespace: ns,
                backend,
                key: key.to_string(),
                path,
                bytes,
            });
        }
        Ok(out)
    }

    /// Leftover temp files from interrupted writes.
    pub fn stale_temp_files(&self) -> Result<Vec<PathBuf>, CacheError> {
        Ok(self
            .walk()?
            .into_iter()
            .map(|(_, _, p)| p)
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(".tmp-"))
            })
            .collect())
    }

    fn walk(&self) -> Result<Vec<(String, String, PathBuf)>, CacheError> {
        let mut out = Vec::new();
        let read_dir = |p: &Path| -> Result<Vec<PathBuf>, CacheError> {
            match std::fs::read_dir(p) {
                Ok(rd) => {
                    let mut v: Vec<PathBuf> = rd
                        .map(|e| e.map(|e| e.path()))
                        .collect::<Result<_, _>>()
                        .map_err(io_err(p))?;
                    v.sort();
                    Ok(v)
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
                Err(e) => Err(io_err(p)(e)),
            }
        };
        for ns in read_dir(&self.root)?.into_iter().filter(|p| p.is_dir()) {
            for backend in read_dir(&ns)?.into_iter().filter(|p| p.is_dir()) {
                for file in read_dir(&backend)?.into_iter().filter(|p| p.is_file()) {
                    let name = |p: &Path| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .unwrap_or("")
                            .to_string()
                    };
                    out.push((name(&ns), name(&backend), file));
                }
            }
        }
        Ok(out)
    }

    pub fn remove(&self, path: &Path) -> Result<(), CacheError> {
        std::fs::remove_file(path).map_err(io_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitizes_backend_ids() {
        assert_eq!(
            backend_dir("BAAI/bge-large-en-v1.5"),
            "BAAI__bge-large-en-v1.5"
        );
        assert_eq!(backend_dir("gemini 2.5:flash"), "gemini_2.5_flash");
        assert_eq!(backend_dir(".."), "_..");
        assert_eq!(backend_dir(""), "_");
    }

    #[test]
    fn store_then_lookup_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = DiskCache::new(dir.path());
        let bytes = b"{\"x\": 0.1}".to_vec();
        assert_eq!(c.get_bytes("models", "m/1", "k").unwrap(), None);
        c.put_bytes("models", "m/1", "k", &bytes).unwrap();
        assert_eq!(c.get_bytes("models", "m/1", "k").unwrap(), Some(bytes));
        let l = c.list().unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(
            (
                l[0].namespace.as_str(),
                l[0].backend.as_str(),
                l[0].key.as_str()
            ),
            ("models", "m__1", "k")
        );
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let c = DiskCache::new(dir.path());
        c.put_bytes("embeddings", "b", "k", b"{not json").unwrap();
        let v: Option<serde_json::Value> = c.get_json("embeddings", "b", "k").unwrap();
        assert!(v.is_none());
    }

    #[test]
    fn field_hash_respects_boundaries() {
        assert_ne!(sha256_fields(&["ab", "c"]), sha256_fields(&["a", "bc"]));
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
