//! File formats: `UDTF` tensors for dense maps, JSON for mask sets,
//! centroid stores and configs. Writes go through a temporary file in the
//! destination directory followed by a rename.

mod maskset;
mod tensor;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use maskset::{default_category_names, rle_decode, rle_encode, MaskRecord, MaskSetDocument};
pub use tensor::{Dtype, TensorData, TensorFile, MAGIC, VERSION};

use crate::superpixel::SuperpixelMap;
use crate::types::{CentroidStore, FeatureMap, PanopticLabel};

/// Malformed file content.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"UDTF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("tensor size overflows")]
    SizeOverflow,
    #[error("rank {0} exceeds 255")]
    RankTooLarge(usize),
    #[error("dims describe {expected} elements but {actual} were given")]
    ElementCount { expected: usize, actual: usize },
    #[error("expected dtype {expected:?}, found {actual:?}")]
    DtypeMismatch { expected: Dtype, actual: Dtype },
    #[error("expected rank {expected}, found {actual}")]
    RankMismatch { expected: usize, actual: usize },
    #[error("run lengths sum to {actual}, expected {expected}")]
    RleLength { expected: usize, actual: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Content(#[from] crate::error::Error),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, source: FormatError) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Replaces `path` with `bytes` via a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|e| IoError::io(path, e))
}

pub fn write_tensor(path: &Path, t: &TensorFile) -> Result<(), IoError> {
    write_atomic(path, &t.to_bytes())
}

pub fn read_tensor(path: &Path) -> Result<TensorFile, IoError> {
    TensorFile::from_bytes(&read_bytes(path)?).map_err(|e| IoError::format(path, e))
}

fn read_typed<T>(path: &Path) -> Result<T, IoError>
where
    T: for<'a> TryFrom<&'a TensorFile, Error = FormatError>,
{
    let t = read_tensor(path)?;
    T::try_from(&t).map_err(|e| IoError::format(path, e))
}

fn write_typed<T>(path: &Path, value: &T) -> Result<(), IoError>
where
    for<'a> TensorFile: TryFrom<&'a T, Error = FormatError>,
{
    let t = TensorFile::try_from(value).map_err(|e| IoError::format(path, e))?;
    write_tensor(path, &t)
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap, IoError> {
    read_typed(path)
}

pub fn write_feature_map(path: &Path, f: &FeatureMap) -> Result<(), IoError> {
    write_typed(path, f)
}

pub fn read_label(path: &Path) -> Result<PanopticLabel, IoError> {
    read_typed(path)
}

pub fn write_label(path: &Path, l: &PanopticLabel) -> Result<(), IoError> {
    write_typed(path, l)
}

pub fn read_superpixels(path: &Path) -> Result<SuperpixelMap, IoError> {
    read_typed(path)
}

pub fn write_superpixels(path: &Path, sp: &SuperpixelMap) -> Result<(), IoError> {
    write_typed(path, sp)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_mask_set(path: &Path) -> Result<MaskSetDocument, IoError> {
    let doc: MaskSetDocument = read_json(path)?;
    doc.validate().map_err(|e| IoError::format(path, e))?;
    Ok(doc)
}

pub fn write_mask_set(path: &Path, doc: &MaskSetDocument) -> Result<(), IoError> {
    write_json(path, doc)
}

/// Reads and re-validates a centroid store.
pub fn read_centroids(path: &Path) -> Result<CentroidStore, IoError> {
    let raw: CentroidStore = read_json(path)?;
    CentroidStore::from_parts(raw.centroids().to_vec(), raw.valid().to_vec(), raw.gamma_prime())
        .map_err(|e| IoError::format(path, FormatError::Content(e)))
}

pub fn write_centroids(path: &Path, store: &CentroidStore) -> Result<(), IoError> {
    write_json(path, store)
}
