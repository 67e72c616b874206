//! VEMB embedding exchange format and in-memory embedding collections.
//!
//! A VEMB file is laid out as:
//!
//! ```text
//! "VEMB"            4 bytes magic
//! version           u16 little-endian (1)
//! metadata length   u32 little-endian
//! metadata          UTF-8 JSON document
//! payload           record_count * dimension f32 little-endian, row-major
//! ```
//!
//! The metadata document carries `model_name`, `layer_index`, `dimension`,
//! `record_count`, the ordered `ids`, and optional `layer_count` and
//! free-form `attributes`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MAGIC: &[u8; 4] = b"VEMB";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}, expected \"VEMB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported VEMB version {0}, expected {FORMAT_VERSION}")]
    Version(u16),
    #[error("malformed metadata: {0}")]
    Metadata(String),
    #[error("payload holds {actual} bytes but metadata declares {expected}")]
    PayloadLength { expected: u64, actual: u64 },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {id:?} has length {actual}, set dimension is {expected}")]
    Dimension {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("record {id:?} has a non-finite component at index {index}")]
    NonFinite { id: String, index: usize },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("layer index {layer_index} exceeds declared layer count {layer_count}")]
    LayerOutOfRange { layer_index: u32, layer_count: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            vector,
        }
    }
}

/// A labeled matrix of same-dimension vectors from one model layer.
///
/// Construct through [`EmbeddingSet::new`] (validating) and treat as
/// immutable afterwards; mutation goes through [`EmbeddingSet::push`], which
/// re-checks the invariants for the new record.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    model_name: String,
    layer_index: u32,
    layer_count: Option<u32>,
    dimension: usize,
    records: Vec<EmbeddingRecord>,
    attributes: BTreeMap<String, Value>,
}

impl EmbeddingSet {
    pub fn new(
        model_name: impl Into<String>,
        layer_index: u32,
        dimension: usize,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, StoreError> {
        if dimension == 0 {
            return Err(StoreError::ZeroDimension);
        }
        let mut set = Self {
            model_name: model_name.into(),
            layer_index,
            layer_count: None,
            dimension,
            records: Vec::with_capacity(records.len()),
            attributes: BTreeMap::new(),
        };
        let mut seen = HashSet::with_capacity(records.len());
        for record in records {
            set.check_record(&record)?;
            if !seen.insert(record.id.clone()) {
                return Err(StoreError::DuplicateId(record.id));
            }
            set.records.push(record);
        }
        Ok(set)
    }

    /// Declares the model's layer count; `layer_index` must not exceed it.
    pub fn with_layer_count(mut self, layer_count: u32) -> Result<Self, StoreError> {
        if self.layer_index > layer_count {
            return Err(StoreError::LayerOutOfRange {
                layer_index: self.layer_index,
                layer_count,
            });
        }
        self.layer_count = Some(layer_count);
        Ok(self)
    }

    pub fn with_attribute(mut self, key: impl Into<String>, value: Value) -> Self {
        self.attributes.insert(key.into(), value);
        self
    }

    pub fn push(&mut self, record: EmbeddingRecord) -> Result<(), StoreError> {
        self.check_record(&record)?;
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(StoreError::DuplicateId(record.id));
        }
        self.records.push(record);
        Ok(())
    }

    fn check_record(&self, record: &EmbeddingRecord) -> Result<(), StoreError> {
        if record.vector.len() != self.dimension {
            return Err(StoreError::Dimension {
                id: record.id.clone(),
                expected: self.dimension,
                actual: record.vector.len(),
            });
        }
        if let Some(index) = record.vector.iter().position(|x| !x.is_finite()) {
            return Err(StoreError::NonFinite {
                id: record.id.clone(),
                index,
            });
        }
        Ok(())
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn layer_index(&self) -> u32 {
        self.layer_index
    }

    pub fn layer_count(&self) -> Option<u32> {
        self.layer_count
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn attributes(&self) -> &BTreeMap<String, Value> {
        &self.attributes
    }

    pub fn attribute(&self, key: &str) -> Option<&Value> {
        self.attributes.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.records
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.vector.as_slice())
    }

    /// Index from id to vector, for repeated lookups over large sets.
    pub fn index(&self) -> BTreeMap<&str, &[f32]> {
        self.records
            .iter()
            .map(|r| (r.id.as_str(), r.vector.as_slice()))
            .collect()
    }

    /// New set holding only the records whose ids satisfy `keep`, in order.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> EmbeddingSet {
        EmbeddingSet {
            model_name: self.model_name.clone(),
            layer_index: self.layer_index,
            layer_count: self.layer_count,
            dimension: self.dimension,
            records: self
                .records
                .iter()
                .filter(|r| keep(&r.id))
                .cloned()
                .collect(),
            attributes: self.attributes.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    model_name: String,
    layer_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layer_count: Option<u32>,
    dimension: usize,
    record_count: usize,
    ids: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, Value>,
}

/// Serializes `set` in VEMB format, returning the number of bytes written.
pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut sink: W) -> Result<u64, StoreError> {
    // Sets built through the public API are already finite, but the format
    // must never carry NaN/Inf regardless of how the set was produced.
    for record in &set.records {
        set.check_record(record)?;
    }
    let meta = Metadata {
        model_name: set.model_name.clone(),
        layer_index: set.layer_index,
        layer_count: set.layer_count,
        dimension: set.dimension,
        record_count: set.records.len(),
        ids: set.records.iter().map(|r| r.id.clone()).collect(),
        attributes: set.attributes.clone(),
    };
    let meta_bytes =
        serde_json::to_vec(&meta).map_err(|e| StoreError::Metadata(e.to_string()))?;
    let meta_len = u32::try_from(meta_bytes.len())
        .map_err(|_| StoreError::Metadata("metadata exceeds 4 GiB".into()))?;

    sink.write_all(MAGIC)?;
    sink.write_all(&FORMAT_VERSION.to_le_bytes())?;
    sink.write_all(&meta_len.to_le_bytes())?;
    sink.write_all(&meta_bytes)?;
    let mut written = (4 + 2 + 4 + meta_bytes.len()) as u64;

    let mut row = Vec::with_capacity(set.dimension * 4);
    for record in &set.records {
        row.clear();
        for x in &record.vector {
            row.extend_from_slice(&x.to_le_bytes());
        }
        sink.write_all(&row)?;
        written += row.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

/// Parses a VEMB stream. The stream must end exactly where the payload does.
pub fn read_embeddings<R: Read>(mut source: R) -> Result<EmbeddingSet, StoreError> {
    let mut magic = [0u8; 4];
    source.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    let mut u16_buf = [0u8; 2];
    source.read_exact(&mut u16_buf)?;
    let version = u16::from_le_bytes(u16_buf);
    if version != FORMAT_VERSION {
        return Err(StoreError::Version(version));
    }
    let mut u32_buf = [0u8; 4];
    source.read_exact(&mut u32_buf)?;
    let meta_len = u32::from_le_bytes(u32_buf) as usize;

    let mut meta_bytes = vec![0u8; meta_len];
    source.read_exact(&mut meta_bytes)?;
    let meta: Metadata =
        serde_json::from_slice(&meta_bytes).map_err(|e| StoreError::Metadata(e.to_string()))?;
    if meta.ids.len() != meta.record_count {
        return Err(StoreError::Metadata(format!(
            "record_count {} disagrees with {} listed ids",
            meta.record_count,
            meta.ids.len()
        )));
    }
    if meta.dimension == 0 {
        return Err(StoreError::ZeroDimension);
    }

    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    let expected = (meta.record_count as u64) * (meta.dimension as u64) * 4;
    if payload.len() as u64 != expected {
        return Err(StoreError::PayloadLength {
            expected,
            actual: payload.len() as u64,
        });
    }

    let records = meta
        .ids
        .into_iter()
        .zip(payload.chunks_exact(meta.dimension * 4))
        .map(|(id, row)| {
            let vector = row
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            EmbeddingRecord { id, vector }
        })
        .collect();

    let mut set = EmbeddingSet::new(meta.model_name, meta.layer_index, meta.dimension, records)?;
    if let Some(count) = meta.layer_count {
        set = set.with_layer_count(count)?;
    }
    set.attributes = meta.attributes;
    Ok(set)
}

pub fn write_embeddings_file(set: &EmbeddingSet, path: &Path) -> Result<u64, StoreError> {
    let file = File::create(path)?;
    write_embeddings(set, BufWriter::new(file))
}

pub fn read_embeddings_file(path: &Path) -> Result<EmbeddingSet, StoreError> {
    let file = File::open(path)?;
    read_embeddings(BufReader::new(file))
}
