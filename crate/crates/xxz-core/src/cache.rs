//! On-disk cache of Nystrom solves.
//!
//! One JSON file per solve, named by a SHA-256 digest of the inputs that
//! determine it. Every real is written with 17 significant digits so a
//! reload reproduces the computed `f64` values bit for bit. Files are written
//! to a temporary sibling and renamed into place, so concurrent writers never
//! expose a partial record.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use sha2::{Digest, Sha256};

use crate::error::{Result, XxzError};

/// Inputs identifying a cached solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub kind: String,
    pub zeta: f64,
    pub coupling: f64,
    pub order: usize,
    pub q: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    /// Real and imaginary part of the second argument of a dressed phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[f64; 2]>,
}

/// Stored solve: the quadrature rule and the nodal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub meta: CacheMeta,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<[f64; 2]>,
}

/// Builder of content-hash keys; fields are hashed in insertion order.
#[derive(Clone, Debug, Default)]
pub struct CacheKey {
    canonical: String,
}

impl CacheKey {
    pub fn new(kind: &str) -> Self {
        Self {
            canonical: format!("kind={kind}"),
        }
    }

    pub fn real(mut self, name: &str, value: f64) -> Self {
        self.canonical.push_str(&format!(";{name}={value:.16e}"));
        self
    }

    pub fn integer(mut self, name: &str, value: i64) -> Self {
        self.canonical.push_str(&format!(";{name}={value}"));
        self
    }

    pub fn text(mut self, name: &str, value: &str) -> Self {
        self.canonical.push_str(&format!(";{name}={value}"));
        self
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// Lower-case hex SHA-256 of the canonical string.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical.as_bytes()))
    }
}

/// JSON formatter that prints every float as `{:.16e}`.
struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", f64::from(value))
    }
}

/// Serialises `value` as JSON with 17 significant digits for every real.
pub fn to_json_fixed<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    value.serialize(&mut ser)?;
    Ok(out)
}

/// Directory-backed solve cache.
#[derive(Clone, Debug)]
pub struct SolveCache {
    dir: PathBuf,
}

/// One cached entry as reported by [`SolveCache::list`].
#[derive(Clone, Debug, Serialize)]
pub struct CacheEntry {
    pub file: String,
    pub bytes: u64,
    pub meta: CacheMeta,
}

impl SolveCache {
    /// Opens (creating if needed) a cache rooted at `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey, kind: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{}.json", &key.digest()[..32]))
    }

    /// Returns the record for `key`, or `None` on a miss. Unreadable or
    /// mismatched files count as misses and are overwritten by the next store.
    pub fn load(&self, key: &CacheKey, kind: &str) -> Option<SolveRecord> {
        let bytes = fs::read(self.path_for(key, kind)).ok()?;
        let record: SolveRecord = serde_json::from_slice(&bytes).ok()?;
        let consistent = record.meta.kind == kind
            && record.nodes.len() == record.weights.len()
            && record.nodes.len() == record.values.len();
        consistent.then_some(record)
    }

    /// Atomically writes `record` under `key`.
    pub fn store(&self, key: &CacheKey, record: &SolveRecord) -> Result<()> {
        let bytes = to_json_fixed(record)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.flush()?;
        tmp.persist(self.path_for(key, &record.meta.kind))
            .map_err(|e| XxzError::Cache(format!("atomic rename failed: {}", e.error)))?;
        Ok(())
    }

    /// All readable records, sorted by file name.
    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        let mut entries = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Ok(bytes) = fs::read(&path) else { continue };
            let Ok(record) = serde_json::from_slice::<SolveRecord>(&bytes) else {
                continue;
            };
            entries.push(CacheEntry {
                file: entry.file_name().to_string_lossy().into_owned(),
                bytes: bytes.len() as u64,
                meta: record.meta,
            });
        }
        entries.sort_by(|a, b| a.file.cmp(&b.file));
        Ok(entries)
    }

    /// Removes every cache file; returns how many were deleted.
    pub fn clear(&self) -> Result<usize> {
        let mut removed = 0;
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                fs::remove_file(&path)?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}
