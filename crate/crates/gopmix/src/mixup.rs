//! Synthetic word samples from per-phoneme pools.
//!
//! A generated word is built in three steps: pick a word from the lexicon
//! with probability proportional to its training-set frequency, draw one
//! pooled quadruplet per phone of its canonical pronunciation, and
//! concatenate the drawn feature slices in phone order. The sample's
//! continuous target is the unweighted mean of the drawn per-phone GOP
//! scores, so the corpus covers the whole score range without human labels.
//!
//! [`generate_dataset`] parallelizes over fixed-size chunks, each driven by
//! an independent random substream derived from (seed, chunk index); output
//! order is chunk order, so results are bit-identical regardless of worker
//! count. Words containing a phone whose pool is empty are rejected and
//! redrawn; the returned [`GenManifest`] exposes the rejection count and
//! content hashes of the inputs.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gop::word_gop;
use crate::io::{lexicon_to_bytes, pool_to_bytes, sha256_bytes};
use crate::pool::sample_quadruplet;
use crate::types::{FeatureMatrix, Lexicon, LexiconEntry, PhoneId, PhonePoolSet, Provenance,
    WordSample};

/// Samples generated per parallel chunk. Determinism holds for any value;
/// changing it changes which substream produces which sample, so it is
/// fixed.
pub const GEN_CHUNK: usize = 1024;

/// Frequency-weighted word sampling, reusable across draws.
pub struct WordSampler<'a> {
    lexicon: &'a Lexicon,
    dist: WeightedIndex<u64>,
}

impl<'a> WordSampler<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Result<Self> {
        let dist = WeightedIndex::new(lexicon.entries().iter().map(|e| e.frequency))
            .map_err(|e| Error::InvalidInput(format!("unusable lexicon frequencies: {e}")))?;
        Ok(WordSampler { lexicon, dist })
    }

    /// Draws an entry with probability `frequency / Σ frequency`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, &'a LexiconEntry) {
        let i = self.dist.sample(rng);
        (i, &self.lexicon.entries()[i])
    }
}

/// One frequency-weighted word draw: the chosen word and its canonical
/// phone sequence. Build a [`WordSampler`] instead for repeated draws.
pub fn sample_word<'a, R: Rng + ?Sized>(
    lexicon: &'a Lexicon,
    rng: &mut R,
) -> Result<&'a LexiconEntry> {
    Ok(WordSampler::new(lexicon)?.sample(rng).1)
}

/// Builds one synthetic word sample: one pool draw per phone, features
/// concatenated in phone order, target = mean of the drawn GOP scores.
pub fn generate_word_sample<R: Rng + ?Sized>(
    pools: &PhonePoolSet,
    word: &str,
    phones: &[PhoneId],
    rng: &mut R,
) -> Result<WordSample> {
    if phones.is_empty() {
        return Err(Error::EmptyInput(format!(
            "word `{word}` has no phones to generate"
        )));
    }
    let mut mfcc_parts = Vec::with_capacity(phones.len());
    let mut deep_parts = Vec::with_capacity(phones.len());
    let mut gops = Vec::with_capacity(phones.len());
    let mut phones_per_frame = Vec::new();
    for &phone in phones {
        let quad = sample_quadruplet(pools, phone, rng)?;
        phones_per_frame.extend(std::iter::repeat_n(phone, quad.frames()));
        mfcc_parts.push(&quad.mfcc_seg);
        deep_parts.push(&quad.deep_seg);
        gops.push(quad.gop);
    }
    WordSample::new(
        word.to_string(),
        phones_per_frame,
        FeatureMatrix::concat_rows(mfcc_parts)?,
        FeatureMatrix::concat_rows(deep_parts)?,
        word_gop(&gops)?,
        Provenance::Mixup,
    )
}

/// Provenance record for one generated dataset: inputs are identified by
/// content hash, and the rejection counter makes sparse pool coverage
/// visible.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GenManifest {
    pub n_words: usize,
    pub seed: u64,
    /// Hex sha-256 of the pool's binary serialization.
    pub pool_sha256: String,
    /// Hex sha-256 of the lexicon's TSV serialization.
    pub lexicon_sha256: String,
    /// Draws discarded because a phone of the drawn word had an empty pool.
    pub resamples: u64,
}

/// Generates exactly `n_words` samples, deterministically for a given
/// (seed, pool content, lexicon content) and independent of worker count.
///
/// Errors if no lexicon word has full pool coverage; words with partial
/// coverage are redrawn and counted in the manifest.
pub fn generate_dataset(
    pools: &PhonePoolSet,
    lexicon: &Lexicon,
    n_words: usize,
    seed: u64,
) -> Result<(Vec<WordSample>, GenManifest)> {
    if n_words == 0 {
        return Err(Error::InvalidInput(
            "cannot generate an empty dataset (n_words = 0)".into(),
        ));
    }
    if pools.inventory().symbols() != lexicon.inventory().symbols() {
        return Err(Error::InvalidInput(
            "pool and lexicon use different phone inventories".into(),
        ));
    }
    let covered: Vec<bool> = lexicon
        .entries()
        .iter()
        .map(|e| e.phones.iter().all(|&p| !pools.pool(p).is_empty()))
        .collect();
    if !covered.iter().any(|&c| c) {
        return Err(Error::InvalidInput(
            "no lexicon word has a non-empty pool for every phone".into(),
        ));
    }
    let sampler = WordSampler::new(lexicon)?;

    let n_chunks = n_words.div_ceil(GEN_CHUNK);
    let chunks: Vec<(Vec<WordSample>, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let quota = GEN_CHUNK.min(n_words - chunk * GEN_CHUNK);
            let mut samples = Vec::with_capacity(quota);
            let mut resamples = 0u64;
            while samples.len() < quota {
                let (i, entry) = sampler.sample(&mut rng);
                if !covered[i] {
                    resamples += 1;
                    continue;
                }
                samples.push(generate_word_sample(
                    pools,
                    &entry.word,
                    &entry.phones,
                    &mut rng,
                )?);
            }
            Ok((samples, resamples))
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(n_words);
    let mut resamples = 0;
    for (chunk, r) in chunks {
        samples.extend(chunk);
        resamples += r;
    }
    let manifest = GenManifest {
        n_words,
        seed,
        pool_sha256: sha256_bytes(&pool_to_bytes(pools)),
        lexicon_sha256: sha256_bytes(&lexicon_to_bytes(lexicon)),
        resamples,
    };
    Ok((samples, manifest))
}

/// Concatenates real (GOP-scored) and generated samples into one seeded
/// shuffle for pretraining. Counts per provenance are preserved.
pub fn mix_pretrain_corpus(
    real: Vec<WordSample>,
    mixed: Vec<WordSample>,
    seed: u64,
) -> Result<Vec<WordSample>> {
    for s in &real {
        if s.provenance != Provenance::RealUnlabeled {
            return Err(Error::InvalidInput(format!(
                "real sample `{}` has provenance {}, expected real_unlabeled",
                s.word,
                s.provenance.as_str()
            )));
        }
    }
    for s in &mixed {
        if s.provenance != Provenance::Mixup {
            return Err(Error::InvalidInput(format!(
                "generated sample `{}` has provenance {}, expected mixup",
                s.word,
                s.provenance.as_str()
            )));
        }
    }
    let mut out = real;
    out.extend(mixed);
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(out)
}
