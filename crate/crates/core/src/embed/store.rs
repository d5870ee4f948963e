use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock, RwLock};

use sha2::{Digest, Sha256};

use super::vector::EmbeddingVector;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UTDE";
pub const VERSION: u16 = 1;

pub type Key = [u8; 32];

/// SHA-256 over the length-prefixed model id, instruction and text.
pub fn embedding_key(model_id: &str, instruction: &str, text: &str) -> Key {
    let mut h = Sha256::new();
    for part in [model_id, instruction, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().into()
}

/// Embedding cache keyed by (model, instruction, text), optionally backed by an
/// append-only file.
///
/// File layout: `UTDE`, version u16, dim u32, model id as u32 length + UTF-8
/// bytes, then records of a 32-byte key and `dim` f32 values, all little-endian.
/// The file is created on the first insert, when the dimension is known.
#[derive(Debug)]
pub struct EmbeddingStore {
    model_id: String,
    path: Option<PathBuf>,
    dim: OnceLock<usize>,
    vectors: RwLock<HashMap<Key, EmbeddingVector>>,
    file: Mutex<Option<File>>,
}

impl EmbeddingStore {
    pub fn in_memory(model_id: impl Into<String>) -> Self {
        EmbeddingStore {
            model_id: model_id.into(),
            path: None,
            dim: OnceLock::new(),
            vectors: RwLock::default(),
            file: Mutex::new(None),
        }
    }

    /// Fixes the dimension up front; vectors of any other length are rejected.
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        match self.dim.get() {
            Some(&d) if d != dim => Err(Error::DimensionMismatch { expected: d, actual: dim }),
            _ => {
                let _ = self.dim.set(dim);
                Ok(self)
            }
        }
    }

    /// Opens (or prepares) the cache file for `model_id` at `path`.
    pub fn open(path: impl Into<PathBuf>, model_id: impl Into<String>) -> Result<Self> {
        let path = path.into();
        let mut store = EmbeddingStore::in_memory(model_id);
        if path.exists() {
            store.load(&path)?;
        }
        store.path = Some(path);
        Ok(store)
    }

    /// `dir/<sanitized model id>.utde`
    pub fn open_in_dir(dir: &Path, model_id: &str) -> Result<Self> {
        let name: String =
            model_id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
        EmbeddingStore::open(dir.join(format!("{name}.utde")), model_id)
    }

    fn load(&mut self, path: &Path) -> Result<()> {
        let format_err = |message: String| Error::Format { path: path.display().to_string(), message };
        let mut bytes = Vec::new();
        File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4).ok_or_else(|| format_err("truncated header".into()))? != MAGIC {
            return Err(format_err("bad magic".into()));
        }
        let version = cur.u16().ok_or_else(|| format_err("truncated header".into()))?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let dim = cur.u32().ok_or_else(|| format_err("truncated header".into()))? as usize;
        let len = cur.u32().ok_or_else(|| format_err("truncated header".into()))? as usize;
        let model = cur.take(len).ok_or_else(|| format_err("truncated header".into()))?;
        let model = std::str::from_utf8(model).map_err(|e| format_err(e.to_string()))?;
        if model != self.model_id {
            return Err(format_err(format!("cache holds model `{model}`, expected `{}`", self.model_id)));
        }
        if dim == 0 {
            return Err(format_err("zero dimension".into()));
        }
        let record = 32 + 4 * dim;
        let body = bytes.len() - cur.pos;
        if !body.is_multiple_of(record) {
            return Err(format_err(format!("{} trailing bytes after the last full record", body % record)));
        }
        let map = self.vectors.get_mut().unwrap();
        while let Some(key) = cur.take(32) {
            let key: Key = key.try_into().unwrap();
            let values: Vec<f32> =
                cur.take(4 * dim).unwrap().chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            map.insert(key, EmbeddingVector::new(values).map_err(|e| format_err(e.to_string()))?);
        }
        let _ = self.dim.set(dim);
        Ok(())
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.vectors.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &Key) -> Option<EmbeddingVector> {
        self.vectors.read().unwrap().get(key).cloned()
    }

    /// Records `vector` under `key`, appending it to the file if there is one.
    /// Re-inserting an existing key is a no-op.
    pub fn insert(&self, key: Key, vector: EmbeddingVector) -> Result<()> {
        let dim = *self.dim.get_or_init(|| vector.dim());
        if vector.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: vector.dim() });
        }
        let mut file = self.file.lock().unwrap();
        if self.vectors.read().unwrap().contains_key(&key) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if file.is_none() {
                *file = Some(self.open_for_append(path, dim)?);
            }
            let mut record = Vec::with_capacity(32 + 4 * dim);
            record.extend_from_slice(&key);
            for x in vector.as_slice() {
                record.extend_from_slice(&x.to_le_bytes());
            }
            file.as_mut().unwrap().write_all(&record).map_err(|e| Error::io(path, e))?;
        }
        self.vectors.write().unwrap().insert(key, vector);
        Ok(())
    }

    fn open_for_append(&self, path: &Path, dim: usize) -> Result<File> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let fresh = !path.exists();
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        if fresh {
            let mut header = Vec::new();
            header.extend_from_slice(MAGIC);
            header.extend_from_slice(&VERSION.to_le_bytes());
            header.extend_from_slice(&(dim as u32).to_le_bytes());
            header.extend_from_slice(&(self.model_id.len() as u32).to_le_bytes());
            header.extend_from_slice(self.model_id.as_bytes());
            f.write_all(&header).map_err(|e| Error::io(path, e))?;
        }
        Ok(f)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}
