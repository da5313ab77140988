//! Slicing utterances into word-level training samples.
//!
//! The transcript and lexicon determine which consecutive alignment
//! segments belong to each word; the aligned phone sequence must match the
//! word's canonical pronunciation exactly. Gap frames between segments
//! (silence) are dropped — a word sample contains only its phones' frames.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::eval::scale_human_score;
use crate::gop::{phone_gop, word_gop, GopVariant, PhoneClassMap};
use crate::io::LabelTable;
use crate::types::{FeatureMatrix, Lexicon, PhoneId, Provenance, UtteranceRecord, WordSample};

/// One transcript word mapped to its alignment segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSpan {
    pub word_index: usize,
    pub word: String,
    /// Range of indices into the utterance's alignment segments.
    pub segments: Range<usize>,
}

/// Maps each transcript word to its consecutive alignment segments,
/// verifying the aligned phones against the lexicon pronunciation.
pub fn word_spans(rec: &UtteranceRecord, lexicon: &Lexicon) -> Result<Vec<WordSpan>> {
    let segments = rec.align.segments();
    let mut spans = Vec::with_capacity(rec.text.len());
    let mut cursor = 0usize;
    for (word_index, word) in rec.text.iter().enumerate() {
        let entry = lexicon.get(word).ok_or_else(|| {
            Error::InvalidInput(format!(
                "utterance {}: word `{word}` (index {word_index}) not in lexicon",
                rec.utt_id
            ))
        })?;
        let n = entry.phones.len();
        if cursor + n > segments.len() {
            return Err(Error::Alignment {
                context: rec.utt_id.clone(),
                segment: segments.len().saturating_sub(1),
                detail: format!(
                    "word `{word}` (index {word_index}) needs {n} segments starting at \
                     {cursor}, but the alignment has {}",
                    segments.len()
                ),
            });
        }
        for (k, &want) in entry.phones.iter().enumerate() {
            let got = segments[cursor + k].phone;
            if got != want {
                return Err(Error::Alignment {
                    context: rec.utt_id.clone(),
                    segment: cursor + k,
                    detail: format!(
                        "word `{word}` (index {word_index}) expects phone `{}` at position \
                         {k}, alignment has `{}`",
                        lexicon.inventory().symbol(want),
                        lexicon.inventory().symbol(got)
                    ),
                });
            }
        }
        spans.push(WordSpan {
            word_index,
            word: word.clone(),
            segments: cursor..cursor + n,
        });
        cursor += n;
    }
    if cursor != segments.len() {
        return Err(Error::Alignment {
            context: rec.utt_id.clone(),
            segment: cursor,
            detail: format!(
                "transcript consumes {cursor} segments but the alignment has {}",
                segments.len()
            ),
        });
    }
    Ok(spans)
}

/// Concatenated per-frame features and phone labels for one word span.
fn assemble_sample(
    rec: &UtteranceRecord,
    span: &WordSpan,
    target: f64,
    provenance: Provenance,
) -> Result<WordSample> {
    let segments = &rec.align.segments()[span.segments.clone()];
    let mut phones: Vec<PhoneId> = Vec::new();
    let mut mfcc_parts = Vec::with_capacity(segments.len());
    let mut deep_parts = Vec::with_capacity(segments.len());
    for seg in segments {
        phones.extend(std::iter::repeat(seg.phone).take(seg.frames()));
        mfcc_parts.push(rec.mfcc.slice_rows(seg.start, seg.end)?);
        deep_parts.push(rec.deep.slice_rows(seg.start, seg.end)?);
    }
    WordSample::new(
        span.word.clone(),
        phones,
        FeatureMatrix::concat_rows(&mfcc_parts)?,
        FeatureMatrix::concat_rows(&deep_parts)?,
        target,
        provenance,
    )
}

/// Word samples with GOP targets, one per transcript word, for pretraining.
pub fn real_word_samples(
    rec: &UtteranceRecord,
    lexicon: &Lexicon,
    map: &PhoneClassMap,
    variant: GopVariant,
) -> Result<Vec<WordSample>> {
    let spans = word_spans(rec, lexicon)?;
    let mut out = Vec::with_capacity(spans.len());
    for span in &spans {
        let mut phone_gops = Vec::with_capacity(span.segments.len());
        for seg in &rec.align.segments()[span.segments.clone()] {
            phone_gops.push(phone_gop(&rec.post, map, seg, variant)?);
        }
        let target = word_gop(&phone_gops)?;
        out.push(assemble_sample(rec, span, target, Provenance::RealUnlabeled)?);
    }
    Ok(out)
}

/// One human-scored word occurrence with its assembled sample.
#[derive(Debug, Clone)]
pub struct LabeledWord {
    pub utt_id: String,
    pub word_index: usize,
    pub sample: WordSample,
}

/// Word samples with scaled human targets for the words that have labels.
/// Unlabeled words are skipped; a label whose word disagrees with the
/// transcript is an error.
pub fn labeled_word_samples(
    rec: &UtteranceRecord,
    lexicon: &Lexicon,
    labels: &LabelTable,
) -> Result<Vec<LabeledWord>> {
    let spans = word_spans(rec, lexicon)?;
    let mut out = Vec::new();
    for span in &spans {
        let Some(row) = labels.get(&rec.utt_id, span.word_index) else {
            continue;
        };
        if row.word != span.word {
            return Err(Error::InvalidInput(format!(
                "utterance {} word index {}: label says `{}`, transcript says `{}`",
                rec.utt_id, span.word_index, row.word, span.word
            )));
        }
        let target = scale_human_score(row.score)?;
        out.push(LabeledWord {
            utt_id: rec.utt_id.clone(),
            word_index: span.word_index,
            sample: assemble_sample(rec, span, target, Provenance::HumanLabeled)?,
        });
    }
    Ok(out)
}
