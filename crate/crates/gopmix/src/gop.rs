//! Phone- and word-level GOP scores from posteriorgrams and alignments.
//!
//! The per-frame posterior of a phone is the sum of posteriors over the
//! phone's class set (e.g. its senones). A phone's GOP normalizes that over
//! the segment duration; the default variant is the arithmetic mean, with an
//! exp-mean-log alternative. A word's GOP is the unweighted mean of its
//! phone GOPs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{AlignSegment, PhoneId, PhoneInventory, Posteriorgram, UtteranceRecord};

/// Floor applied to per-frame posteriors before any logarithm.
pub const LOG_POSTERIOR_FLOOR: f64 = 1e-8;

/// How a phone's per-frame posteriors are normalized over its duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GopVariant {
    /// Arithmetic mean of per-frame phone posteriors.
    #[default]
    MeanPosterior,
    /// exp(mean(log p)), with posteriors floored at [`LOG_POSTERIOR_FLOOR`].
    LogMean,
}

impl GopVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_posterior" => Ok(GopVariant::MeanPosterior),
            "log_mean" => Ok(GopVariant::LogMean),
            other => Err(Error::Config(format!(
                "unknown GOP variant `{other}` (expected mean_posterior or log_mean)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GopVariant::MeanPosterior => "mean_posterior",
            GopVariant::LogMean => "log_mean",
        }
    }
}

/// Phone -> posterior-class indices (the classes belonging to that phone).
#[derive(Debug, Clone)]
pub struct PhoneClassMap {
    inventory: Arc<PhoneInventory>,
    classes: Vec<Vec<usize>>,
}

impl PhoneClassMap {
    /// `classes[i]` is the class set of phone with dense id `i`; sets must be
    /// non-empty and cover the whole inventory.
    pub fn new(inventory: Arc<PhoneInventory>, classes: Vec<Vec<usize>>) -> Result<Self> {
        if classes.len() != inventory.len() {
            return Err(Error::InvalidInput(format!(
                "phone-class map covers {} phones, inventory has {}",
                classes.len(),
                inventory.len()
            )));
        }
        for (i, set) in classes.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "phone `{}` has an empty class set",
                    inventory.symbol(PhoneId(i as u32))
                )));
            }
        }
        Ok(PhoneClassMap { inventory, classes })
    }

    pub fn inventory(&self) -> &Arc<PhoneInventory> {
        &self.inventory
    }

    pub fn classes(&self, phone: PhoneId) -> Result<&[usize]> {
        self.classes
            .get(phone.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownPhone {
                symbol: format!("#{}", phone.0),
                context: "phone-class map".into(),
            })
    }

    /// Largest class index referenced by any phone.
    pub fn max_class(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|s| s.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Sum of posteriors over the phone's class set at one frame, clamped to
/// `[0, 1]`.
pub fn phone_frame_posterior(
    post: &Posteriorgram,
    map: &PhoneClassMap,
    phone: PhoneId,
    frame: usize,
) -> Result<f64> {
    if frame >= post.frames() {
        return Err(Error::InvalidInput(format!(
            "frame {frame} out of range for posteriorgram with {} frames",
            post.frames()
        )));
    }
    let classes = map.classes(phone)?;
    let row = post.row(frame);
    let mut sum = 0.0f64;
    for &c in classes {
        let v = row.get(c).copied().ok_or_else(|| {
            Error::InvalidInput(format!(
                "class index {c} of phone `{}` out of range for {} posterior classes",
                map.inventory.symbol(phone),
                post.classes()
            ))
        })?;
        sum += v as f64;
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// GOP of one aligned segment: per-frame phone posteriors normalized over the
/// segment duration according to `variant`.
pub fn phone_gop(
    post: &Posteriorgram,
    map: &PhoneClassMap,
    segment: &AlignSegment,
    variant: GopVariant,
) -> Result<f64> {
    if segment.end <= segment.start {
        return Err(Error::InvalidInput(format!(
            "empty segment [{}, {})",
            segment.start, segment.end
        )));
    }
    if segment.end > post.frames() {
        return Err(Error::InvalidInput(format!(
            "segment [{}, {}) out of range for posteriorgram with {} frames",
            segment.start,
            segment.end,
            post.frames()
        )));
    }
    let n = segment.frames() as f64;
    let mut acc = 0.0f64;
    for t in segment.start..segment.end {
        let p = phone_frame_posterior(post, map, segment.phone, t)?;
        match variant {
            GopVariant::MeanPosterior => acc += p,
            GopVariant::LogMean => acc += p.max(LOG_POSTERIOR_FLOOR).ln(),
        }
    }
    let gop = match variant {
        GopVariant::MeanPosterior => acc / n,
        GopVariant::LogMean => (acc / n).exp(),
    };
    Ok(gop.clamp(0.0, 1.0))
}

/// Unweighted arithmetic mean of per-phone GOP scores.
pub fn word_gop(phone_gops: &[f64]) -> Result<f64> {
    if phone_gops.is_empty() {
        return Err(Error::EmptyInput("word GOP of an empty phone list".into()));
    }
    for &g in phone_gops {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::InvalidInput(format!(
                "phone GOP {g} outside [0, 1]"
            )));
        }
    }
    Ok(phone_gops.iter().sum::<f64>() / phone_gops.len() as f64)
}

/// GOP of one alignment segment together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGop {
    pub segment: AlignSegment,
    pub gop: f64,
}

/// One GOP per alignment segment, in alignment order.
pub fn utterance_gops(
    rec: &UtteranceRecord,
    map: &PhoneClassMap,
    variant: GopVariant,
) -> Result<Vec<SegmentGop>> {
    let mut out = Vec::with_capacity(rec.align.len());
    for (i, seg) in rec.align.segments().iter().enumerate() {
        let gop = phone_gop(&rec.post, map, seg, variant).map_err(|e| match e {
            Error::UnknownPhone { symbol, .. } => Error::UnknownPhone {
                symbol,
                context: format!("utterance {} segment {i}", rec.utt_id),
            },
            other => Error::InvalidInput(format!(
                "utterance {} segment {i}: {other}",
                rec.utt_id
            )),
        })?;
        out.push(SegmentGop { segment: *seg, gop });
    }
    Ok(out)
}
