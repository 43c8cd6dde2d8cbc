//! Content-addressed response cache.
//!
//! Layout: `<root>/<port>/<first-2-hex>/<digest>.bin` holds the response and a
//! sidecar `<digest>.meta` holds the canonical request plus a checksum of the
//! response. Files are written to a temporary name and renamed into place, so
//! concurrent writers of one key converge on a single valid entry.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable that overrides the configured cache directory.
pub const CACHE_DIR_ENV: &str = "ROSE_CACHE_DIR";

/// Request fields serialized as sorted key/value pairs.
///
/// Values are canonicalized to LF line endings with trailing whitespace
/// trimmed from every line, so insignificant whitespace and field order never
/// change the digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CanonicalRequest {
    fields: BTreeMap<String, String>,
}

impl CanonicalRequest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields
            .insert(key.trim().to_string(), canonical_value(&value.to_string()));
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.fields).expect("string map serializes")
    }

}

fn canonical_value(v: &str) -> String {
    let unified = v.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    lines.join("\n").trim().to_string()
}

/// SHA-256 over the port name and the canonical request bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub digest: [u8; 32],
}

impl CacheKey {
    pub fn new(port: &str, request: &CanonicalRequest) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(port.as_bytes());
        hasher.update([0u8]);
        hasher.update(request.to_bytes());
        Self {
            digest: hasher.finalize().into(),
        }
    }

    pub fn hex(&self) -> String {
        hex::encode(self.digest)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryMeta {
    port: String,
    request: BTreeMap<String, String>,
    response_sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
    pub per_port: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    /// Pick the cache directory: explicit override, then `ROSE_CACHE_DIR`,
    /// then the configured value.
    pub fn resolve_dir(explicit: Option<&Path>, configured: Option<&Path>) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from))
            .or_else(|| configured.map(Path::to_path_buf))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_paths(&self, port: &str, key: &CacheKey) -> (PathBuf, PathBuf) {
        let hex = key.hex();
        let dir = self.root.join(port).join(&hex[..2]);
        (dir.join(format!("{hex}.bin")), dir.join(format!("{hex}.meta")))
    }

    /// Stored response for `request`, if any.
    pub fn lookup(&self, port: &str, request: &CanonicalRequest) -> Result<Option<Vec<u8>>> {
        let key = CacheKey::new(port, request);
        let (bin, meta) = self.entry_paths(port, &key);
        let meta_bytes = match fs::read(&meta) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&meta, e)),
        };
        let entry: EntryMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| Error::CacheIntegrity(format!("{}: unreadable sidecar: {e}", meta.display())))?;
        if entry.port != port || entry.request != request.fields {
            return Err(Error::CacheIntegrity(format!(
                "{}: stored request does not match the lookup request",
                meta.display()
            )));
        }
        let body = fs::read(&bin)
            .map_err(|e| Error::CacheIntegrity(format!("{}: response missing: {e}", bin.display())))?;
        if sha256_hex(&body) != entry.response_sha256 {
            return Err(Error::CacheIntegrity(format!(
                "{}: response digest mismatch",
                bin.display()
            )));
        }
        Ok(Some(body))
    }

    /// Store `response`. If another writer already stored a response for the
    /// same key, that one is kept and returned.
    pub fn store(&self, port: &str, request: &CanonicalRequest, response: &[u8]) -> Result<Vec<u8>> {
        let key = CacheKey::new(port, request);
        let (bin, meta) = self.entry_paths(port, &key);
        let dir = bin.parent().expect("entry has a parent directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let body = match write_new(dir, &bin, response)? {
            true => response.to_vec(),
            false => fs::read(&bin).map_err(|e| Error::io(&bin, e))?,
        };
        let entry = EntryMeta {
            port: port.to_string(),
            request: request.fields.clone(),
            response_sha256: sha256_hex(&body),
        };
        write_replace(dir, &meta, &serde_json::to_vec_pretty(&entry)?)?;
        Ok(body)
    }

    /// Serve `request` from the cache, invoking `inner` only on a miss.
    pub fn cached_call<F>(&self, port: &str, request: &CanonicalRequest, inner: F) -> Result<Vec<u8>>
    where
        F: FnOnce() -> Result<Vec<u8>>,
    {
        if let Some(hit) = self.lookup(port, request)? {
            return Ok(hit);
        }
        let response = inner()?;
        self.store(port, request, &response)
    }

    pub fn stats(&self) -> Result<CacheStats> {
        let mut stats = CacheStats::default();
        let ports = match fs::read_dir(&self.root) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(stats),
            Err(e) => return Err(Error::io(&self.root, e)),
        };
        for port in ports {
            let port = port.map_err(|e| Error::io(&self.root, e))?;
            if !port.path().is_dir() {
                continue;
            }
            let name = port.file_name().to_string_lossy().into_owned();
            let mut count = 0;
            for shard in fs::read_dir(port.path()).map_err(|e| Error::io(port.path(), e))? {
                let shard = shard.map_err(|e| Error::io(port.path(), e))?;
                if !shard.path().is_dir() {
                    continue;
                }
                for file in fs::read_dir(shard.path()).map_err(|e| Error::io(shard.path(), e))? {
                    let file = file.map_err(|e| Error::io(shard.path(), e))?;
                    let path = file.path();
                    if path.extension().is_some_and(|e| e == "bin") {
                        count += 1;
                        stats.bytes += file.metadata().map(|m| m.len()).unwrap_or(0);
                    }
                }
            }
            stats.entries += count;
            stats.per_port.insert(name, count);
        }
        Ok(stats)
    }

    /// Remove every entry, keeping the root directory.
    pub fn clear(&self) -> Result<usize> {
        let removed = self.stats()?.entries;
        if self.root.exists() {
            for entry in fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
                let path = entry.map_err(|e| Error::io(&self.root, e))?.path();
                let res = if path.is_dir() {
                    fs::remove_dir_all(&path)
                } else {
                    fs::remove_file(&path)
                };
                res.map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(removed)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn temp_in(dir: &Path, bytes: &[u8]) -> Result<tempfile::NamedTempFile> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    Ok(tmp)
}

/// Returns false when `target` already existed.
fn write_new(dir: &Path, target: &Path, bytes: &[u8]) -> Result<bool> {
    let tmp = temp_in(dir, bytes)?;
    match tmp.persist_noclobber(target) {
        Ok(_) => Ok(true),
        Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(Error::io(target, e.error)),
    }
}

fn write_replace(dir: &Path, target: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_in(dir, bytes)?;
    tmp.persist(target).map_err(|e| Error::io(target, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;

    fn req(prompt: &str) -> CanonicalRequest {
        CanonicalRequest::new().field("prompt", prompt).field("max_len", 64)
    }

    #[test]
    fn second_identical_call_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let calls = Cell::new(0);
        let inner = || {
            calls.set(calls.get() + 1);
            Ok(b"answer".to_vec())
        };
        assert_eq!(cache.cached_call("llm", &req("hi"), inner).unwrap(), b"answer");
        assert_eq!(cache.cached_call("llm", &req("hi"), inner).unwrap(), b"answer");
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn one_byte_difference_gives_two_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.cached_call("llm", &req("abc"), || Ok(b"1".to_vec())).unwrap();
        cache.cached_call("llm", &req("abd"), || Ok(b"2".to_vec())).unwrap();
        assert_eq!(cache.stats().unwrap().entries, 2);
        assert_eq!(cache.lookup("llm", &req("abc")).unwrap().unwrap(), b"1");
        assert_eq!(cache.lookup("llm", &req("abd")).unwrap().unwrap(), b"2");
    }

    #[test]
    fn canonicalization_ignores_order_and_line_endings() {
        let a = CanonicalRequest::new().field("b", "x \r\ny").field("a", 1);
        let b = CanonicalRequest::new().field("a", "1").field("b", "x\ny  ");
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(CacheKey::new("p", &a), CacheKey::new("p", &b));
        assert_ne!(CacheKey::new("p", &a), CacheKey::new("q", &a));
    }

    #[test]
    fn layout_uses_port_and_shard_directories() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.cached_call("web_searcher", &req("q"), || Ok(b"[]".to_vec())).unwrap();
        let hex = CacheKey::new("web_searcher", &req("q")).hex();
        let shard = dir.path().join("web_searcher").join(&hex[..2]);
        assert!(shard.join(format!("{hex}.bin")).is_file());
        let meta = fs::read_to_string(shard.join(format!("{hex}.meta"))).unwrap();
        assert!(meta.contains("\"prompt\""));
    }

    #[test]
    fn tampered_response_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.cached_call("llm", &req("x"), || Ok(b"good".to_vec())).unwrap();
        let hex = CacheKey::new("llm", &req("x")).hex();
        let bin = dir.path().join("llm").join(&hex[..2]).join(format!("{hex}.bin"));
        fs::write(&bin, b"evil").unwrap();
        let err = cache.cached_call("llm", &req("x"), || Ok(b"good".to_vec())).unwrap_err();
        assert!(matches!(err, Error::CacheIntegrity(_)));
    }

    #[test]
    fn mismatched_sidecar_request_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.cached_call("llm", &req("x"), || Ok(b"good".to_vec())).unwrap();
        let hex = CacheKey::new("llm", &req("x")).hex();
        let meta = dir.path().join("llm").join(&hex[..2]).join(format!("{hex}.meta"));
        let text = fs::read_to_string(&meta).unwrap().replace("\"x\"", "\"y\"");
        fs::write(&meta, text).unwrap();
        assert!(matches!(cache.lookup("llm", &req("x")), Err(Error::CacheIntegrity(_))));
    }

    #[test]
    fn inner_failure_on_miss_propagates_and_stores_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let err = cache
            .cached_call("llm", &req("x"), || Err(Error::Retrieval("offline".into())))
            .unwrap_err();
        assert!(matches!(err, Error::Retrieval(_)));
        assert_eq!(cache.stats().unwrap().entries, 0);
    }

    #[test]
    fn clear_removes_entries() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.cached_call("a", &req("1"), || Ok(vec![1])).unwrap();
        cache.cached_call("b", &req("1"), || Ok(vec![2])).unwrap();
        assert_eq!(cache.clear().unwrap(), 2);
        assert_eq!(cache.stats().unwrap().entries, 0);
    }

    #[test]
    fn concurrent_writers_converge() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| cache.cached_call("llm", &req("race"), || Ok(b"same".to_vec())).unwrap());
            }
        });
        assert_eq!(cache.lookup("llm", &req("race")).unwrap().unwrap(), b"same");
        assert_eq!(cache.stats().unwrap().entries, 1);
    }
}
