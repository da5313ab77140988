//! Evaluation: Pearson correlation between predicted and human scores,
//! per-word prediction reports, and sweep summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::words::LabeledWord;

/// Maps a raw human score on the 0-10 scale into the model's `[0, 1]` range.
pub fn scale_human_score(score: f64) -> Result<f64> {
    if !(0.0..=10.0).contains(&score) {
        return Err(Error::InvalidInput(format!(
            "human score {score} outside [0, 10]"
        )));
    }
    Ok(score / 10.0)
}

/// Pearson correlation coefficient between two equal-length vectors.
///
/// Fails with a categorized error on length mismatch, fewer than two points,
/// or a constant vector (zero variance on either side).
pub fn pearson_pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "correlation inputs have {} and {} points",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "correlation needs at least 2 points, got {}",
            x.len()
        )));
    }
    for (name, v) in [("first", x), ("second", y)] {
        if let Some(i) = v.iter().position(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!(
                "{name} correlation input has a non-finite value at index {i}"
            )));
        }
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ConstantVector(
            "first correlation input has zero variance".into(),
        ));
    }
    if syy == 0.0 {
        return Err(Error::ConstantVector(
            "second correlation input has zero variance".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One scored word in an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub utt_id: String,
    pub word: String,
    pub word_index: usize,
    /// Human target on the `[0, 1]` scale.
    pub target: f64,
    /// Model prediction on the `[0, 1]` scale.
    pub prediction: f64,
}

/// Evaluation result: per-word rows (sorted by utterance then word index)
/// and the Pearson correlation between predictions and targets.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<PredictionRow>,
    pub pcc: f64,
}

/// Pairs labeled words with their predictions into a sorted report.
pub fn build_report(labeled: &[LabeledWord], predictions: &[f64]) -> Result<EvalReport> {
    if labeled.len() != predictions.len() {
        return Err(Error::LengthMismatch(format!(
            "{} labeled words but {} predictions",
            labeled.len(),
            predictions.len()
        )));
    }
    let mut rows: Vec<PredictionRow> = labeled
        .iter()
        .zip(predictions)
        .map(|(lw, &p)| PredictionRow {
            utt_id: lw.utt_id.clone(),
            word: lw.sample.word.clone(),
            word_index: lw.word_index,
            target: lw.sample.target,
            prediction: p,
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.utt_id.as_str(), a.word_index).cmp(&(b.utt_id.as_str(), b.word_index))
    });
    let preds: Vec<f64> = rows.iter().map(|r| r.prediction).collect();
    let targets: Vec<f64> = rows.iter().map(|r| r.target).collect();
    let pcc = pearson_pcc(&preds, &targets)?;
    Ok(EvalReport { rows, pcc })
}

/// Writes the per-word predictions as CSV:
/// `utt_id,word,word_index,target,prediction`.
pub fn write_predictions_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "utt_id,word,word_index,target,prediction")?;
        for r in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.utt_id, r.word, r.word_index, r.target, r.prediction
            )?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// One sweep measurement: augmentation size, feature set, correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub aug_size: usize,
    pub feature_set: String,
    pub pcc: f64,
}

/// Writes sweep results as CSV sorted by size then feature set:
/// `aug_size,feature_set,pcc`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        (a.aug_size, a.feature_set.as_str()).cmp(&(b.aug_size, b.feature_set.as_str()))
    });
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "aug_size,feature_set,pcc")?;
        for r in &rows {
            writeln!(w, "{},{},{}", r.aug_size, r.feature_set, r.pcc)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}
