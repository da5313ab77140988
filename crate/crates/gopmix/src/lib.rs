//! Phone-level mixup augmentation and word-level pronunciation scoring.
//!
//! The crate covers the full pipeline for training a word-level
//! pronunciation scorer when human-labeled data is scarce:
//!
//! 1. [`gop`] — goodness-of-pronunciation scores from frame posteriorgrams
//!    and forced-alignment phone boundaries;
//! 2. [`pool`] — per-phoneme pools of (features, GOP) phone instances
//!    harvested from a corpus;
//! 3. [`mixup`] — synthetic word samples built by concatenating pool draws
//!    per phone, labeled with the mean of the drawn GOP scores;
//! 4. [`scorer`] — a dual-tower 1D-CNN regressor over MFCC and deep
//!    features with phone embeddings, trained with Adam on MSE, following a
//!    pretrain (GOP targets) then fine-tune (human targets) schedule;
//! 5. [`eval`] — Pearson-correlation evaluation and sweep reports;
//! 6. [`synth`] — a synthetic corpus generator with known ground truth so
//!    the whole pipeline runs at desk scale without any real speech data.
//!
//! See the `examples/` directory for one runnable program per capability,
//! and the `gopmix` binary for the file-based pipeline.

pub mod cli;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gop;
pub mod io;
pub mod mixup;
pub mod pool;
pub mod scorer;
pub mod synth;
pub mod types;
pub mod words;

pub use error::{Error, Result};
pub use types::{
    AlignSegment, FeatureMatrix, Lexicon, LexiconEntry, PhoneAlignment, PhoneId, PhoneInventory,
    PhonePoolSet, Posteriorgram, Provenance, Quadruplet, UtteranceRecord, WordSample,
};

/// Environment variable holding an optional prefix for relative data paths.
pub const DATA_ROOT_ENV: &str = "GMX_DATA_ROOT";
