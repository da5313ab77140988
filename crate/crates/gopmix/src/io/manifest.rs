//! Corpus manifests: one JSON object per line naming an utterance's feature,
//! posterior, and alignment files plus its transcription. File paths inside a
//! manifest are resolved relative to the manifest's directory.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::binary::read_matrix;
use crate::io::text::{read_alignments, AlignUnits};
use crate::types::{PhoneAlignment, PhoneInventory, Posteriorgram, UtteranceRecord};

/// Raw manifest row as serialized on disk.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestLine {
    pub utt_id: String,
    pub mfcc: String,
    pub deep: String,
    pub post: String,
    pub align: String,
    /// Transcription as a space-separated word string.
    pub text: String,
}

/// A manifest row with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UttDescriptor {
    pub utt_id: String,
    pub mfcc: PathBuf,
    pub deep: PathBuf,
    pub post: PathBuf,
    pub align: PathBuf,
    pub text: Vec<String>,
}

fn resolve_relative(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a manifest, resolving relative paths against the manifest's
/// directory. Duplicate utterance ids are an error naming both lines.
pub fn read_manifest(path: &Path) -> Result<Vec<UttDescriptor>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, line_no, format!("invalid manifest line: {e}")))?;
        if row.utt_id.trim().is_empty() {
            return Err(Error::parse(path, line_no, "empty utterance id"));
        }
        if let Some(first) = seen.insert(row.utt_id.clone(), line_no) {
            return Err(Error::parse(
                path,
                line_no,
                format!(
                    "duplicate utterance id `{}` (first seen on line {first})",
                    row.utt_id
                ),
            ));
        }
        out.push(UttDescriptor {
            utt_id: row.utt_id,
            mfcc: resolve_relative(base, &row.mfcc),
            deep: resolve_relative(base, &row.deep),
            post: resolve_relative(base, &row.post),
            align: resolve_relative(base, &row.align),
            text: row.text.split_whitespace().map(str::to_string).collect(),
        });
    }
    if out.is_empty() {
        return Err(Error::format(path, "manifest has no entries"));
    }
    Ok(out)
}

/// Writes a manifest, one JSON object per line.
pub fn write_manifest(path: &Path, lines: &[ManifestLine]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for line in lines {
            let json = serde_json::to_string(line).expect("manifest line is serializable");
            writeln!(w, "{json}")?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Streams validated utterance records out of a manifest.
///
/// Alignment files are parsed once up front (they are shared and small);
/// feature and posterior matrices are loaded per utterance on demand, so
/// memory stays bounded by one utterance at a time.
pub struct CorpusReader {
    inventory: Arc<PhoneInventory>,
    descriptors: Vec<UttDescriptor>,
    alignments: HashMap<PathBuf, HashMap<String, PhoneAlignment>>,
}

impl CorpusReader {
    pub fn open(
        manifest: &Path,
        inventory: &Arc<PhoneInventory>,
        units: AlignUnits,
    ) -> Result<Self> {
        let descriptors = read_manifest(manifest)?;
        let mut alignments: HashMap<PathBuf, HashMap<String, PhoneAlignment>> = HashMap::new();
        for d in &descriptors {
            if !alignments.contains_key(&d.align) {
                let parsed = read_alignments(&d.align, inventory, units)?;
                alignments.insert(d.align.clone(), parsed);
            }
        }
        Ok(CorpusReader {
            inventory: inventory.clone(),
            descriptors,
            alignments,
        })
    }

    pub fn inventory(&self) -> &Arc<PhoneInventory> {
        &self.inventory
    }

    pub fn descriptors(&self) -> &[UttDescriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Loads and validates one utterance by manifest position.
    pub fn load(&self, index: usize) -> Result<UtteranceRecord> {
        let d = &self.descriptors[index];
        let mfcc = read_matrix(&d.mfcc)?;
        let deep = read_matrix(&d.deep)?;
        let post_matrix = read_matrix(&d.post)?;
        let post = Posteriorgram::with_context(
            post_matrix,
            &format!("posteriorgram of {}", d.utt_id),
        )?;
        let align = self
            .alignments
            .get(&d.align)
            .and_then(|m| m.get(&d.utt_id))
            .cloned()
            .ok_or_else(|| {
                Error::Format {
                    path: d.align.display().to_string(),
                    msg: format!("no alignment rows for utterance `{}`", d.utt_id),
                }
            })?;
        UtteranceRecord {
            utt_id: d.utt_id.clone(),
            mfcc,
            deep,
            post,
            align,
            text: d.text.clone(),
        }
        .validated()
    }

    /// Iterates validated records in manifest order.
    pub fn iter(&self) -> impl Iterator<Item = Result<UtteranceRecord>> + '_ {
        (0..self.len()).map(move |i| self.load(i))
    }
}
