//! Readers and writers for every on-disk format: corpus manifests, feature
//! matrices, alignments, labels, lexica, phone-class maps, phone pools,
//! datasets, and scorer checkpoints.
//!
//! Binary formats are little-endian, carry a magic tag, and round-trip
//! bit-exactly. Readers validate on ingest and never return a partially
//! populated record.

mod binary;
mod checkpoint;
mod manifest;
mod text;

pub use binary::{
    dataset_to_bytes, pool_to_bytes, read_dataset, read_matrix, read_pool, write_dataset,
    write_matrix_binary, write_matrix_tsv, write_pool, DATASET_MAGIC, MATRIX_MAGIC, POOL_MAGIC,
};
pub use checkpoint::{
    read_checkpoint, read_training_manifest, training_manifest_path, write_checkpoint,
    write_training_manifest, DataHash, TrainingManifest, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use manifest::{read_manifest, write_manifest, CorpusReader, ManifestLine, UttDescriptor};
pub use text::{
    lexicon_to_bytes, read_alignments, read_labels, read_lexicon, read_phone_map,
    write_alignments, write_labels, write_lexicon, write_phone_map, AlignUnits, LabelRow,
    LabelTable, HOP_SECONDS,
};

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Resolves a user-supplied path: absolute paths pass through, relative
/// paths are prefixed with `GMX_DATA_ROOT` when that variable is set.
pub fn resolve_path(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(crate::DATA_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Hex sha-256 of a byte buffer.
pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex sha-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}
