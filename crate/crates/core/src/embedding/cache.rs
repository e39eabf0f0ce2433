use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::text_hash;
use crate::error::{Error, Result, Violation};

const MANIFEST: &str = "manifest.jsonl";
const VECTORS: &str = "vectors.bin";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    h: String,
    model: String,
    dim: usize,
    off: u64,
    len: u64,
}

#[derive(Debug, Clone)]
struct Entry {
    model: String,
    vector: Vec<f32>,
}

struct Appender {
    manifest: File,
    vectors: File,
    offset: u64,
}

/// Content-addressed store of embedding vectors.
///
/// On disk it is a `manifest.jsonl` index into `vectors.bin` (contiguous
/// little-endian f32). Reads go through an in-memory map; writes are
/// serialized through a single appender.
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<[u8; 32], Entry>>,
    dims: RwLock<HashMap<String, usize>>,
    appender: Mutex<Option<Appender>>,
}

impl std::fmt::Debug for EmbeddingCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingCache")
            .field("dir", &self.dir)
            .field("len", &self.len())
            .finish()
    }
}

fn check_vector(vector: &[f32]) -> Result<()> {
    if vector.is_empty() {
        return Err(Error::InvalidInput("empty embedding vector".into()));
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("embedding has non-finite components".into()));
    }
    Ok(())
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl EmbeddingCache {
    /// A cache that lives only as long as the process.
    pub fn in_memory() -> Self {
        EmbeddingCache {
            dir: None,
            entries: RwLock::new(HashMap::new()),
            dims: RwLock::new(HashMap::new()),
            appender: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) the cache in `dir`, validating every
    /// manifest line against the vector file.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST);
        let vectors_path = dir.join(VECTORS);
        let mut vectors = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&vectors_path)
            .map_err(|e| Error::io(&vectors_path, e))?;
        let manifest = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&manifest_path)
            .map_err(|e| Error::io(&manifest_path, e))?;

        let mut blob = Vec::new();
        vectors
            .seek(SeekFrom::Start(0))
            .and_then(|_| vectors.read_to_end(&mut blob))
            .map_err(|e| Error::io(&vectors_path, e))?;

        let mut entries = HashMap::new();
        let mut dims: HashMap<String, usize> = HashMap::new();
        let mut violations = Vec::new();
        let reader = BufReader::new(&manifest);
        let lines: Vec<String> = reader
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(&manifest_path, e))?;
        for (i, line) in lines.iter().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestLine = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    violations.push(Violation::Parse {
                        line: lineno,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let mut key = [0u8; 32];
            if hex::decode_to_slice(&rec.h, &mut key).is_err() {
                violations.push(Violation::Invalid {
                    line: lineno,
                    message: format!("bad hash {:?}", rec.h),
                });
                continue;
            }
            let end = rec.off.checked_add(rec.len);
            if rec.len != rec.dim as u64 * 4 || end.is_none_or(|e| e > blob.len() as u64) {
                violations.push(Violation::Invalid {
                    line: lineno,
                    message: format!("record {} points outside {VECTORS}", rec.h),
                });
                continue;
            }
            let bytes = &blob[rec.off as usize..(rec.off + rec.len) as usize];
            let vector: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if vector.iter().any(|v| !v.is_finite()) {
                violations.push(Violation::Invalid {
                    line: lineno,
                    message: format!("record {} has non-finite components", rec.h),
                });
                continue;
            }
            match dims.get(&rec.model) {
                Some(&d) if d != rec.dim => {
                    violations.push(Violation::Invalid {
                        line: lineno,
                        message: format!("model {} has dims {d} and {}", rec.model, rec.dim),
                    });
                    continue;
                }
                _ => {
                    dims.insert(rec.model.clone(), rec.dim);
                }
            }
            match entries.get(&key) {
                Some(Entry { vector: old, .. }) if !same_bits(old, &vector) => {
                    violations.push(Violation::DuplicateKey {
                        line: lineno,
                        key: rec.h.clone(),
                    });
                    continue;
                }
                _ => {}
            }
            entries.insert(
                key,
                Entry {
                    model: rec.model,
                    vector,
                },
            );
        }
        if !violations.is_empty() {
            return Err(Error::InvalidData {
                path: manifest_path,
                violations,
            });
        }
        let offset = blob.len() as u64;
        Ok(EmbeddingCache {
            dir: Some(dir.to_path_buf()),
            entries: RwLock::new(entries),
            dims: RwLock::new(dims),
            appender: Mutex::new(Some(Appender {
                manifest,
                vectors,
                offset,
            })),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the vectors cached for `model_id`, if any.
    pub fn model_dim(&self, model_id: &str) -> Option<usize> {
        self.dims.read().unwrap().get(model_id).copied()
    }

    pub fn get(&self, text: &str, model_id: &str) -> Option<Vec<f32>> {
        self.get_hash(&text_hash(text, model_id))
    }

    pub fn get_hash(&self, hash: &[u8; 32]) -> Option<Vec<f32>> {
        self.entries.read().unwrap().get(hash).map(|e| e.vector.clone())
    }

    pub fn contains(&self, text: &str, model_id: &str) -> bool {
        self.contains_hash(&text_hash(text, model_id))
    }

    pub fn contains_hash(&self, hash: &[u8; 32]) -> bool {
        self.entries.read().unwrap().contains_key(hash)
    }

    pub fn put(&self, text: &str, model_id: &str, vector: &[f32]) -> Result<()> {
        self.put_many(model_id, &[(text, vector)])
    }

    /// Stores several vectors for one model. Re-storing identical bytes under
    /// an existing key is a no-op; different bytes are a conflict.
    pub fn put_many(&self, model_id: &str, items: &[(&str, &[f32])]) -> Result<()> {
        let mut appender = self.appender.lock().unwrap();
        let mut fresh: Vec<([u8; 32], &[f32])> = Vec::new();
        let mut fresh_index: HashMap<[u8; 32], usize> = HashMap::new();
        {
            let entries = self.entries.read().unwrap();
            let mut dim = self.model_dim(model_id);
            for &(text, vector) in items {
                check_vector(vector)?;
                match dim {
                    Some(d) if d != vector.len() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: vector.len(),
                        })
                    }
                    _ => dim = Some(vector.len()),
                }
                let key = text_hash(text, model_id);
                let prior = entries
                    .get(&key)
                    .map(|e| e.vector.as_slice())
                    .or_else(|| fresh_index.get(&key).map(|&i| fresh[i].1));
                match prior {
                    Some(old) if same_bits(old, vector) => {}
                    Some(_) => return Err(Error::CacheConflict { hash: hex::encode(key) }),
                    None => {
                        fresh_index.insert(key, fresh.len());
                        fresh.push((key, vector));
                    }
                }
            }
        }
        if fresh.is_empty() {
            return Ok(());
        }
        if let Some(app) = appender.as_mut() {
            let dir = self.dir.as_deref().unwrap_or(Path::new("."));
            let mut blob = Vec::new();
            let mut manifest = String::new();
            let mut off = app.offset;
            for (key, vector) in &fresh {
                for v in *vector {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
                let len = vector.len() as u64 * 4;
                let line = ManifestLine {
                    h: hex::encode(key),
                    model: model_id.to_string(),
                    dim: vector.len(),
                    off,
                    len,
                };
                manifest.push_str(&serde_json::to_string(&line)?);
                manifest.push('\n');
                off += len;
            }
            // Vectors land before the manifest lines that point at them.
            app.vectors
                .write_all(&blob)
                .and_then(|_| app.vectors.flush())
                .map_err(|e| Error::io(dir.join(VECTORS), e))?;
            app.manifest
                .write_all(manifest.as_bytes())
                .and_then(|_| app.manifest.flush())
                .map_err(|e| Error::io(dir.join(MANIFEST), e))?;
            app.offset = off;
        }
        let mut entries = self.entries.write().unwrap();
        for (key, vector) in fresh {
            entries.insert(
                key,
                Entry {
                    model: model_id.to_string(),
                    vector: vector.to_vec(),
                },
            );
        }
        self.dims
            .write()
            .unwrap()
            .entry(model_id.to_string())
            .or_insert(items[0].1.len());
        Ok(())
    }

    /// Models present in the cache.
    pub fn models(&self) -> Vec<String> {
        let entries = self.entries.read().unwrap();
        let mut models: Vec<String> = entries.values().map(|e| e.model.clone()).collect();
        models.sort();
        models.dedup();
        models
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = EmbeddingCache::open(dir.path()).unwrap();
            cache.put("sad", "m", &[0.1, -2.5, 3.0e-8]).unwrap();
            cache.put("happy", "m", &[1.0, 2.0, 3.0]).unwrap();
            cache.put("sad", "m", &[0.1, -2.5, 3.0e-8]).unwrap();
            assert_eq!(cache.len(), 2);
        }
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("sad", "m").unwrap(), vec![0.1, -2.5, 3.0e-8]);
        assert_eq!(cache.model_dim("m"), Some(3));
        assert!(cache.get("sad", "other").is_none());
        cache.put("calm", "m", &[0.0, 0.0, 1.0]).unwrap();
        let reopened = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 3);
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert_eq!(manifest.lines().count(), 3);
        assert_eq!(std::fs::metadata(dir.path().join(VECTORS)).unwrap().len(), 36);
    }

    #[test]
    fn conflicts_and_dimension_checks() {
        let cache = EmbeddingCache::in_memory();
        cache.put("a", "m", &[1.0, 2.0]).unwrap();
        assert!(matches!(
            cache.put("a", "m", &[1.0, 2.5]),
            Err(Error::CacheConflict { .. })
        ));
        assert!(matches!(
            cache.put("b", "m", &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(cache.put("c", "m", &[f32::NAN, 1.0]).is_err());
        cache.put("a", "other", &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cache.models(), vec!["m".to_string(), "other".to_string()]);
    }

    #[test]
    fn corrupt_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = EmbeddingCache::open(dir.path()).unwrap();
            cache.put("a", "m", &[1.0, 2.0]).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(MANIFEST)).unwrap();
        writeln!(f, "not json").unwrap();
        writeln!(
            f,
            r#"{{"h":"{}","model":"m","dim":2,"off":64,"len":8}}"#,
            "ab".repeat(32)
        )
        .unwrap();
        match EmbeddingCache::open(dir.path()) {
            Err(Error::InvalidData { violations, .. }) => assert_eq!(violations.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concurrent_identical_writes_are_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for i in 0..50 {
                        let v = [i as f32, 1.0];
                        cache.put(&format!("t{i}"), "m", &v).unwrap();
                    }
                });
            }
        });
        assert_eq!(cache.len(), 50);
        drop(cache);
        let reopened = EmbeddingCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 50);
        assert_eq!(reopened.get("t7", "m").unwrap(), vec![7.0, 1.0]);
    }
}
