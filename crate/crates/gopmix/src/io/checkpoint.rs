//! Scorer checkpoints.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic  "GMCK"
//! u32    version (currently 1)
//! string metadata: JSON {"config": ScorerConfig, "phones": [symbols]}
//! u32    tensor count
//! per tensor:
//!   string name
//!   u32    rank, then u32 per dimension
//!   f32    values (row-major, product-of-dims many)
//! ```
//!
//! Tensors appear in the model's canonical order (trainable parameters,
//! then batch-norm running stats); names and shapes are validated against
//! the config on load. A training run additionally writes a JSON sidecar
//! (`<checkpoint>.train.json`) with the [`TrainingManifest`]: seeds, input
//! data hashes, and the loss curves.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use super::binary::{CountingWriter, Reader};
use crate::error::{Error, Result};
use crate::scorer::{ScorerConfig, ScorerModel, Tensor, TrainReport};
use crate::types::PhoneInventory;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointMeta {
    config: ScorerConfig,
    phones: Vec<String>,
}

/// Writes a model and its phone inventory as a `GMCK` file.
pub fn write_checkpoint(
    path: &Path,
    model: &ScorerModel<f32>,
    inventory: &PhoneInventory,
) -> Result<()> {
    if inventory.len() != model.config.n_phones {
        return Err(Error::InvalidInput(format!(
            "checkpoint inventory has {} phones, model config says {}",
            inventory.len(),
            model.config.n_phones
        )));
    }
    let meta = CheckpointMeta {
        config: model.config.clone(),
        phones: inventory.symbols().to_vec(),
    };
    let meta_json = serde_json::to_string(&meta)
        .map_err(|e| Error::InvalidInput(format!("unserializable scorer config: {e}")))?;
    let tensors = model.to_tensors();

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = CountingWriter::new(BufWriter::new(file));
    (|| -> std::io::Result<()> {
        w.bytes(CHECKPOINT_MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.string(&meta_json)?;
        w.u32(tensors.len() as u32)?;
        for t in &tensors {
            w.string(&t.name)?;
            w.u32(t.dims.len() as u32)?;
            for &d in &t.dims {
                w.u32(d as u32)?;
            }
            w.f32_slice(&t.data)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Reads a `GMCK` file back into a model and its phone inventory.
pub fn read_checkpoint(path: &Path) -> Result<(ScorerModel<f32>, Arc<PhoneInventory>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.expect_magic(CHECKPOINT_MAGIC, "GMCK checkpoint")?;
    r.expect_version(CHECKPOINT_VERSION, "checkpoint")?;
    let meta_json = r.string()?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_json)
        .map_err(|e| Error::format(path, format!("invalid checkpoint metadata: {e}")))?;
    let inventory = PhoneInventory::from_symbols(meta.phones)?;
    if inventory.len() != meta.config.n_phones {
        return Err(Error::format(
            path,
            format!(
                "checkpoint lists {} phones but its config says {}",
                inventory.len(),
                meta.config.n_phones
            ),
        ));
    }
    let n = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::format(
                path,
                format!("tensor `{name}` has implausible rank {rank}"),
            ));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        if len > 64 * 1024 * 1024 {
            return Err(Error::format(
                path,
                format!("tensor `{name}` of shape {dims:?} is implausibly large"),
            ));
        }
        let data = r.f32_vec(len)?;
        tensors.push(Tensor { name, dims, data });
    }
    r.expect_eof()?;
    let model = ScorerModel::from_tensors(&meta.config, &tensors)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((model, inventory))
}

/// One input file of a training run, hashed for reproducibility checks.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DataHash {
    pub path: String,
    pub sha256: String,
}

/// The JSON sidecar written next to a trained checkpoint: everything
/// needed to audit or reproduce the run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingManifest {
    /// `"pretrain"` or `"finetune"`.
    pub phase: String,
    /// Seed that initialized the model; absent when resuming from a base
    /// checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_seed: Option<u64>,
    /// Seed driving shuffles and dropout, from the scorer config.
    pub train_seed: u64,
    /// Input dataset files with content hashes.
    pub data: Vec<DataHash>,
    /// Checkpoint this run started from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_checkpoint: Option<DataHash>,
    /// Loss curves and the selected epoch.
    pub report: TrainReport,
}

/// Sidecar path for a checkpoint's training manifest.
pub fn training_manifest_path(checkpoint: &Path) -> std::path::PathBuf {
    super::binary::sidecar_path(checkpoint, "train.json")
}

pub fn write_training_manifest(path: &Path, manifest: &TrainingManifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("unserializable training manifest: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_training_manifest(path: &Path) -> Result<TrainingManifest> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&body)
        .map_err(|e| Error::format(path, format!("invalid training manifest: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::init_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn tiny() -> (ScorerModel<f32>, Arc<PhoneInventory>) {
        let inventory =
            PhoneInventory::from_symbols(["AA", "B", "K", "S", "T"].map(String::from)).unwrap();
        let config = ScorerConfig {
            d_mfcc: 4,
            d_deep: 6,
            d_hidden: 8,
            filters: 8,
            n_phones: inventory.len(),
            ..ScorerConfig::default()
        };
        let model = init_model(&config, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        (model, inventory)
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.gmck");
        let (model, inventory) = tiny();
        write_checkpoint(&path, &model, &inventory).unwrap();
        let (back, inv2) = read_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(inv2.symbols(), inventory.symbols());
        // Bit-exactness of a second write.
        let path2 = dir.path().join("model2.gmck");
        write_checkpoint(&path2, &back, &inv2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.gmck");
        let (model, inventory) = tiny();
        write_checkpoint(&path, &model, &inventory).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("GMCK"), "{err}");
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.gmck");
        let (model, inventory) = tiny();
        write_checkpoint(&path, &model, &inventory).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn phone_count_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.gmck");
        let (model, _) = tiny();
        let wrong =
            PhoneInventory::from_symbols(["AA", "B", "K"].map(String::from)).unwrap();
        assert!(write_checkpoint(&path, &model, &wrong).is_err());
    }

    #[test]
    fn corrupt_metadata_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.gmck");
        let (model, inventory) = tiny();
        write_checkpoint(&path, &model, &inventory).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // The metadata string starts after magic + version + u32 length;
        // smash its first brace.
        bytes[12] = b'!';
        std::fs::write(&path, &bytes).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("metadata"), "{err}");
    }

    #[test]
    fn training_manifest_round_trips() {
        let dir = tempdir().unwrap();
        let ckpt = dir.path().join("model.gmck");
        let path = training_manifest_path(&ckpt);
        assert!(path.to_string_lossy().ends_with("model.gmck.train.json"));
        let manifest = TrainingManifest {
            phase: "pretrain".into(),
            init_seed: Some(11),
            train_seed: 17,
            data: vec![DataHash {
                path: "mix.gmds".into(),
                sha256: "ab".repeat(32),
            }],
            base_checkpoint: None,
            report: TrainReport {
                epochs: 2,
                n_train: 9,
                n_holdout: 1,
                train_loss: vec![0.2, 0.1],
                holdout_loss: vec![0.25, 0.12],
                best_epoch: 1,
            },
        };
        write_training_manifest(&path, &manifest).unwrap();
        let back = read_training_manifest(&path).unwrap();
        assert_eq!(back, manifest);
    }
}
