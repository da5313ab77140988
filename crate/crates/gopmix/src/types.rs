//! Core domain types shared by every other module.
//!
//! All types are immutable after construction and validated on the way in,
//! so downstream code can rely on the invariants instead of re-checking.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Row-sum tolerance for posteriorgrams coming from external softmax layers.
pub const POSTERIOR_ROW_SUM_TOL: f64 = 1e-4;

/// Dense id of a phoneme within a [`PhoneInventory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhoneId(pub u32);

impl PhoneId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The set of phoneme symbols in play, mapping symbol <-> dense id.
///
/// The inventory is fixed when loaded (from the phone-map file); unseen
/// symbols are a hard error everywhere, never an auto-add.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneInventory {
    symbols: Vec<String>,
    by_symbol: HashMap<String, PhoneId>,
}

impl PhoneInventory {
    pub fn from_symbols<I, S>(symbols: I) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::EmptyInput("phone inventory has no symbols".into()));
        }
        let mut by_symbol = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "phone symbol at index {i} is empty"
                )));
            }
            if by_symbol.insert(s.clone(), PhoneId(i as u32)).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate phone symbol `{s}` in inventory"
                )));
            }
        }
        Ok(Arc::new(PhoneInventory { symbols, by_symbol }))
    }

    pub fn get(&self, symbol: &str) -> Option<PhoneId> {
        self.by_symbol.get(symbol).copied()
    }

    /// Look up a symbol, failing with a categorized error naming the context.
    pub fn require(&self, symbol: &str, context: &str) -> Result<PhoneId> {
        self.get(symbol).ok_or_else(|| Error::UnknownPhone {
            symbol: symbol.to_string(),
            context: context.to_string(),
        })
    }

    pub fn symbol(&self, id: PhoneId) -> &str {
        &self.symbols[id.index()]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = PhoneId> + '_ {
        (0..self.symbols.len() as u32).map(PhoneId)
    }
}

/// A T x D matrix of frame-level features, row-major, 10 ms hop semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let t = rows.len();
        if t == 0 {
            return Err(Error::InvalidInput("matrix has no rows".into()));
        }
        let d = rows[0].len();
        let mut data = Vec::with_capacity(t * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        FeatureMatrix::new(t, d, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Index of the first non-finite row, if any.
    pub fn first_non_finite_row(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| i / self.cols)
    }

    /// Copy of the half-open row range `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::InvalidInput(format!(
                "row slice [{start}, {end}) out of bounds for {} rows",
                self.rows
            )));
        }
        FeatureMatrix::new(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Row-wise concatenation; all parts must share the column count.
    pub fn concat_rows<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureMatrix>,
    {
        let mut cols = None;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            match cols {
                None => cols = Some(p.cols),
                Some(c) if c != p.cols => {
                    return Err(Error::InvalidInput(format!(
                        "cannot concatenate {c}-column and {}-column matrices",
                        p.cols
                    )))
                }
                _ => {}
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        match cols {
            Some(c) => FeatureMatrix::new(rows, c, data),
            None => Err(Error::EmptyInput("no matrices to concatenate".into())),
        }
    }
}

/// T x C matrix of per-frame class posterior probabilities.
///
/// Every row sums to 1 within [`POSTERIOR_ROW_SUM_TOL`]; every entry is in
/// `[0, 1]`. The checks run once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    inner: FeatureMatrix,
}

impl Posteriorgram {
    pub fn new(matrix: FeatureMatrix) -> Result<Self> {
        Self::with_context(matrix, "posteriorgram")
    }

    pub fn with_context(matrix: FeatureMatrix, context: &str) -> Result<Self> {
        for t in 0..matrix.rows() {
            let mut sum = 0.0f64;
            for &v in matrix.row(t) {
                let v = v as f64;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::PosteriorRange {
                        context: context.to_string(),
                        row: t,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > POSTERIOR_ROW_SUM_TOL {
                return Err(Error::RowSum {
                    context: context.to_string(),
                    row: t,
                    sum,
                    tol: POSTERIOR_ROW_SUM_TOL,
                });
            }
        }
        Ok(Posteriorgram { inner: matrix })
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.inner.cols()
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f32] {
        self.inner.row(t)
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.inner
    }
}

/// One aligned phone occurrence, frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignSegment {
    pub phone: PhoneId,
    pub start: usize,
    pub end: usize,
}

impl AlignSegment {
    #[inline]
    pub fn frames(&self) -> usize {
        self.end - self.start
    }
}

/// Ordered phone segmentation of one utterance.
///
/// Segments are non-overlapping and strictly increasing; gaps are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneAlignment {
    segments: Vec<AlignSegment>,
}

impl PhoneAlignment {
    pub fn new(segments: Vec<AlignSegment>) -> Result<Self> {
        Self::with_context(segments, "alignment")
    }

    pub fn with_context(segments: Vec<AlignSegment>, context: &str) -> Result<Self> {
        let mut prev_end = 0usize;
        for (i, seg) in segments.iter().enumerate() {
            if seg.end <= seg.start {
                return Err(Error::Alignment {
                    context: context.to_string(),
                    segment: i,
                    detail: format!("empty or reversed segment [{}, {})", seg.start, seg.end),
                });
            }
            if i > 0 && seg.start < prev_end {
                return Err(Error::Alignment {
                    context: context.to_string(),
                    segment: i,
                    detail: format!(
                        "segment starts at {} before previous segment end {prev_end}",
                        seg.start
                    ),
                });
            }
            prev_end = seg.end;
        }
        Ok(PhoneAlignment { segments })
    }

    pub fn segments(&self) -> &[AlignSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Largest end frame, 0 for an empty alignment.
    pub fn max_frame(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }
}

/// One utterance: features, posteriors, alignment, and transcription.
#[derive(Debug, Clone)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub mfcc: FeatureMatrix,
    pub deep: FeatureMatrix,
    pub post: Posteriorgram,
    pub align: PhoneAlignment,
    pub text: Vec<String>,
}

impl UtteranceRecord {
    /// Checks every cross-field invariant; returns the first violation as a
    /// categorized error naming the utterance and offending field.
    pub fn validate(&self) -> Result<()> {
        let id = &self.utt_id;
        let t = self.mfcc.rows();
        if self.deep.rows() != t {
            return Err(Error::DimensionMismatch {
                context: id.clone(),
                field: "deep",
                detail: format!("deep has {} frames, mfcc has {t}", self.deep.rows()),
            });
        }
        if self.post.frames() != t {
            return Err(Error::DimensionMismatch {
                context: id.clone(),
                field: "post",
                detail: format!("posteriorgram has {} frames, mfcc has {t}", self.post.frames()),
            });
        }
        if let Some(row) = self.mfcc.first_non_finite_row() {
            return Err(Error::NonFinite {
                context: id.clone(),
                field: "mfcc",
                row,
            });
        }
        if let Some(row) = self.deep.first_non_finite_row() {
            return Err(Error::NonFinite {
                context: id.clone(),
                field: "deep",
                row,
            });
        }
        if self.align.max_frame() > t {
            return Err(Error::Alignment {
                context: id.clone(),
                segment: self.align.len().saturating_sub(1),
                detail: format!(
                    "alignment reaches frame {} but utterance has {t} frames",
                    self.align.max_frame()
                ),
            });
        }
        Ok(())
    }

    /// Validating constructor form of [`UtteranceRecord::validate`].
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

/// One pooled phone instance: label, feature slices, and its GOP score.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadruplet {
    pub phone: PhoneId,
    pub mfcc_seg: FeatureMatrix,
    pub deep_seg: FeatureMatrix,
    pub gop: f64,
}

impl Quadruplet {
    pub fn new(
        phone: PhoneId,
        mfcc_seg: FeatureMatrix,
        deep_seg: FeatureMatrix,
        gop: f64,
    ) -> Result<Self> {
        if mfcc_seg.rows() != deep_seg.rows() {
            return Err(Error::DimensionMismatch {
                context: "quadruplet".into(),
                field: "deep_seg",
                detail: format!(
                    "mfcc segment has {} frames, deep segment has {}",
                    mfcc_seg.rows(),
                    deep_seg.rows()
                ),
            });
        }
        if !(0.0..=1.0).contains(&gop) {
            return Err(Error::InvalidInput(format!(
                "quadruplet GOP {gop} outside [0, 1]"
            )));
        }
        Ok(Quadruplet {
            phone,
            mfcc_seg,
            deep_seg,
            gop,
        })
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.mfcc_seg.rows()
    }
}

/// Per-phoneme pools of quadruplets, indexed by dense phone id.
#[derive(Debug, Clone)]
pub struct PhonePoolSet {
    inventory: Arc<PhoneInventory>,
    pools: Vec<Vec<Quadruplet>>,
}

impl PhonePoolSet {
    pub fn new(inventory: Arc<PhoneInventory>) -> Self {
        let pools = vec![Vec::new(); inventory.len()];
        PhonePoolSet { inventory, pools }
    }

    pub fn inventory(&self) -> &Arc<PhoneInventory> {
        &self.inventory
    }

    pub fn push(&mut self, quad: Quadruplet) {
        self.pools[quad.phone.index()].push(quad);
    }

    pub fn pool(&self, phone: PhoneId) -> &[Quadruplet] {
        &self.pools[phone.index()]
    }

    /// Total quadruplets across all phones.
    pub fn total(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }

    pub fn phones(&self) -> impl Iterator<Item = PhoneId> + '_ {
        self.inventory.ids()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub phones: Vec<PhoneId>,
    pub frequency: u64,
}

/// Word -> canonical phone sequence plus training-set frequency.
#[derive(Debug, Clone)]
pub struct Lexicon {
    inventory: Arc<PhoneInventory>,
    entries: Vec<LexiconEntry>,
    by_word: HashMap<String, usize>,
}

impl Lexicon {
    pub fn new(inventory: Arc<PhoneInventory>, entries: Vec<LexiconEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("lexicon has no entries".into()));
        }
        let mut by_word = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.phones.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "lexicon word `{}` has an empty phone sequence",
                    e.word
                )));
            }
            if e.frequency == 0 {
                return Err(Error::InvalidInput(format!(
                    "lexicon word `{}` has frequency 0",
                    e.word
                )));
            }
            if by_word.insert(e.word.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate lexicon word `{}`",
                    e.word
                )));
            }
        }
        Ok(Lexicon {
            inventory,
            entries,
            by_word,
        })
    }

    pub fn inventory(&self) -> &Arc<PhoneInventory> {
        &self.inventory
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.by_word.get(word).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Where a scorer training example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    RealUnlabeled,
    Mixup,
    HumanLabeled,
}

impl Provenance {
    pub fn tag(self) -> u8 {
        match self {
            Provenance::RealUnlabeled => 0,
            Provenance::Mixup => 1,
            Provenance::HumanLabeled => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Provenance::RealUnlabeled),
            1 => Some(Provenance::Mixup),
            2 => Some(Provenance::HumanLabeled),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::RealUnlabeled => "real_unlabeled",
            Provenance::Mixup => "mixup",
            Provenance::HumanLabeled => "human_labeled",
        }
    }
}

/// One scorer training example: per-frame features, per-frame canonical
/// phone ids, and a target score in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct WordSample {
    pub word: String,
    pub phones_per_frame: Vec<PhoneId>,
    pub mfcc: FeatureMatrix,
    pub deep: FeatureMatrix,
    pub target: f64,
    pub provenance: Provenance,
}

impl WordSample {
    pub fn new(
        word: String,
        phones_per_frame: Vec<PhoneId>,
        mfcc: FeatureMatrix,
        deep: FeatureMatrix,
        target: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if phones_per_frame.len() != mfcc.rows() || mfcc.rows() != deep.rows() {
            return Err(Error::DimensionMismatch {
                context: format!("word sample `{word}`"),
                field: "phones_per_frame",
                detail: format!(
                    "phones {} / mfcc {} / deep {} frames must agree",
                    phones_per_frame.len(),
                    mfcc.rows(),
                    deep.rows()
                ),
            });
        }
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidInput(format!(
                "word sample `{word}` target {target} outside [0, 1]"
            )));
        }
        Ok(WordSample {
            word,
            phones_per_frame,
            mfcc,
            deep,
            target,
            provenance,
        })
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.phones_per_frame.len()
    }

    /// Run-length decoding of the per-frame phone track: the sampled phone
    /// sequence with per-phone frame counts.
    pub fn phone_runs(&self) -> Vec<(PhoneId, usize)> {
        let mut runs: Vec<(PhoneId, usize)> = Vec::new();
        for &p in &self.phones_per_frame {
            match runs.last_mut() {
                Some((q, n)) if *q == p => *n += 1,
                _ => runs.push((p, 1)),
            }
        }
        runs
    }
}
