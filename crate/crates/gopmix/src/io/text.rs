//! Line-oriented text formats: phone-class maps, lexica, alignments, and
//! human score labels. All are TSV with `#`-prefixed comment lines allowed.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gop::PhoneClassMap;
use crate::types::{AlignSegment, Lexicon, LexiconEntry, PhoneAlignment, PhoneInventory};

/// Frame hop in seconds, used when alignments are given in seconds.
pub const HOP_SECONDS: f64 = 0.010;

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn split_fields<'a>(
    path: &Path,
    line_no: usize,
    line: &'a str,
    expected: usize,
    what: &str,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != expected {
        return Err(Error::parse(
            path,
            line_no,
            format!("{what} line has {} fields, expected {expected}", fields.len()),
        ));
    }
    Ok(fields)
}

// ---------------------------------------------------------------------------
// Phone-class map

/// Reads a phone-class map: one `PHONE\tc1,c2,...` row per phone. Row order
/// defines the canonical phone inventory used everywhere downstream.
pub fn read_phone_map(path: &Path) -> Result<PhoneClassMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut symbols = Vec::new();
    let mut classes = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let fields = split_fields(path, line_no, line, 2, "phone-map")?;
        let symbol = fields[0].trim();
        if symbol.is_empty() {
            return Err(Error::parse(path, line_no, "empty phone symbol"));
        }
        let mut set = Vec::new();
        for cell in fields[1].split(',') {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let c: usize = cell.parse().map_err(|_| {
                Error::parse(path, line_no, format!("non-integer class index `{cell}`"))
            })?;
            set.push(c);
        }
        if set.is_empty() {
            return Err(Error::parse(
                path,
                line_no,
                format!("phone `{symbol}` has no class indices"),
            ));
        }
        symbols.push(symbol.to_string());
        classes.push(set);
    }
    if symbols.is_empty() {
        return Err(Error::format(path, "phone map has no rows"));
    }
    let inventory = PhoneInventory::from_symbols(symbols)?;
    PhoneClassMap::new(inventory, classes)
}

/// Writes a phone-class map in inventory order.
pub fn write_phone_map(path: &Path, map: &PhoneClassMap) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for phone in map.inventory().ids() {
            let classes: Vec<String> = map
                .classes(phone)
                .expect("inventory id")
                .iter()
                .map(|c| c.to_string())
                .collect();
            writeln!(
                w,
                "{}\t{}",
                map.inventory().symbol(phone),
                classes.join(",")
            )?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Lexicon

/// Reads a lexicon: `WORD\tph1 ph2 ...\tfreq` rows. Phone symbols must be in
/// `inventory`; unknown symbols are a hard error naming the line.
pub fn read_lexicon(path: &Path, inventory: &Arc<PhoneInventory>) -> Result<Lexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let fields = split_fields(path, line_no, line, 3, "lexicon")?;
        let word = fields[0].trim().to_string();
        if word.is_empty() {
            return Err(Error::parse(path, line_no, "empty word"));
        }
        let mut phones = Vec::new();
        for sym in fields[1].split_whitespace() {
            let id = inventory.get(sym).ok_or_else(|| {
                Error::parse(
                    path,
                    line_no,
                    format!("unknown phone symbol `{sym}` in word `{word}`"),
                )
            })?;
            phones.push(id);
        }
        if phones.is_empty() {
            return Err(Error::parse(
                path,
                line_no,
                format!("word `{word}` has an empty phone sequence"),
            ));
        }
        let frequency: u64 = fields[2].trim().parse().map_err(|_| {
            Error::parse(
                path,
                line_no,
                format!("non-integer frequency `{}`", fields[2].trim()),
            )
        })?;
        if frequency == 0 {
            return Err(Error::parse(
                path,
                line_no,
                format!("word `{word}` has frequency 0"),
            ));
        }
        entries.push(LexiconEntry {
            word,
            phones,
            frequency,
        });
    }
    Lexicon::new(inventory.clone(), entries)
}

/// The lexicon's TSV serialization, byte-for-byte what [`write_lexicon`]
/// writes — the canonical content for hashing.
pub fn lexicon_to_bytes(lexicon: &Lexicon) -> Vec<u8> {
    let mut out = Vec::new();
    for e in lexicon.entries() {
        let phones: Vec<&str> = e
            .phones
            .iter()
            .map(|&p| lexicon.inventory().symbol(p))
            .collect();
        writeln!(out, "{}\t{}\t{}", e.word, phones.join(" "), e.frequency)
            .expect("writing to Vec cannot fail");
    }
    out
}

/// Writes a lexicon in entry order.
pub fn write_lexicon(path: &Path, lexicon: &Lexicon) -> Result<()> {
    std::fs::write(path, lexicon_to_bytes(lexicon)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Alignments

/// Units of the start/end columns in an alignment file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignUnits {
    /// Integer frame indices, half-open `[start, end)`.
    #[default]
    Frames,
    /// Seconds; converted at a 10 ms hop with floor(start) / ceil(end).
    Seconds,
}

impl AlignUnits {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "frames" => Ok(AlignUnits::Frames),
            "seconds" => Ok(AlignUnits::Seconds),
            other => Err(Error::Config(format!(
                "unknown alignment units `{other}` (expected frames or seconds)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlignUnits::Frames => "frames",
            AlignUnits::Seconds => "seconds",
        }
    }
}

fn parse_bound(
    path: &Path,
    line_no: usize,
    cell: &str,
    units: AlignUnits,
    is_end: bool,
) -> Result<usize> {
    match units {
        AlignUnits::Frames => cell.trim().parse().map_err(|_| {
            Error::parse(path, line_no, format!("non-integer frame index `{cell}`"))
        }),
        AlignUnits::Seconds => {
            let secs: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(path, line_no, format!("non-numeric time `{cell}`"))
            })?;
            if !secs.is_finite() || secs < 0.0 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("time `{cell}` is negative or non-finite"),
                ));
            }
            // The epsilon only absorbs float representation error in the
            // division (e.g. 0.03 / 0.01 = 2.999...); semantics stay
            // floor(start), ceil(end).
            let frames = secs / HOP_SECONDS;
            Ok(if is_end {
                (frames - 1e-6).ceil().max(0.0) as usize
            } else {
                (frames + 1e-6).floor() as usize
            })
        }
    }
}

/// Reads per-utterance phone alignments: `utt_id\tphone\tstart\tend` rows,
/// grouped by utterance in file order.
pub fn read_alignments(
    path: &Path,
    inventory: &Arc<PhoneInventory>,
    units: AlignUnits,
) -> Result<HashMap<String, PhoneAlignment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // Preserve first-seen utterance order while grouping.
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<AlignSegment>> = HashMap::new();
    for (line_no, line) in data_lines(&text) {
        let fields = split_fields(path, line_no, line, 4, "alignment")?;
        let utt_id = fields[0].trim();
        if utt_id.is_empty() {
            return Err(Error::parse(path, line_no, "empty utterance id"));
        }
        let phone = inventory.get(fields[1].trim()).ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                format!("unknown phone symbol `{}`", fields[1].trim()),
            )
        })?;
        let start = parse_bound(path, line_no, fields[2], units, false)?;
        let end = parse_bound(path, line_no, fields[3], units, true)?;
        if end <= start {
            return Err(Error::parse(
                path,
                line_no,
                format!("segment [{start}, {end}) is empty after unit conversion"),
            ));
        }
        if !grouped.contains_key(utt_id) {
            order.push(utt_id.to_string());
        }
        grouped
            .entry(utt_id.to_string())
            .or_default()
            .push(AlignSegment { phone, start, end });
    }
    let mut out = HashMap::with_capacity(order.len());
    for utt_id in order {
        let segments = grouped.remove(&utt_id).expect("grouped by construction");
        let align = PhoneAlignment::with_context(segments, &format!("alignment of {utt_id}"))?;
        out.insert(utt_id, align);
    }
    if out.is_empty() {
        return Err(Error::format(path, "alignment file has no rows"));
    }
    Ok(out)
}

/// Writes alignments in the given utterance order, in frame units.
pub fn write_alignments(
    path: &Path,
    alignments: &[(String, PhoneAlignment)],
    inventory: &PhoneInventory,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for (utt_id, align) in alignments {
            for seg in align.segments() {
                writeln!(
                    w,
                    "{utt_id}\t{}\t{}\t{}",
                    inventory.symbol(seg.phone),
                    seg.start,
                    seg.end
                )?;
            }
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Human score labels

/// One human-scored word occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub utt_id: String,
    pub word_index: usize,
    pub word: String,
    /// Raw human score on the 0-10 scale.
    pub score: f64,
}

/// Human word-score labels with `(utt_id, word_index)` lookup.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    rows: Vec<LabelRow>,
    by_key: HashMap<(String, usize), usize>,
}

impl LabelTable {
    pub fn new(rows: Vec<LabelRow>) -> Result<Self> {
        let mut by_key = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if !(0.0..=10.0).contains(&r.score) {
                return Err(Error::InvalidInput(format!(
                    "label for {} word {} has score {} outside [0, 10]",
                    r.utt_id, r.word_index, r.score
                )));
            }
            if by_key
                .insert((r.utt_id.clone(), r.word_index), i)
                .is_some()
            {
                return Err(Error::InvalidInput(format!(
                    "duplicate label for utterance {} word index {}",
                    r.utt_id, r.word_index
                )));
            }
        }
        Ok(LabelTable { rows, by_key })
    }

    pub fn get(&self, utt_id: &str, word_index: usize) -> Option<&LabelRow> {
        self.by_key
            .get(&(utt_id.to_string(), word_index))
            .map(|&i| &self.rows[i])
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads human word-score labels: `utt_id\tword_index\tword\tscore` rows with
/// scores on the 0-10 scale.
pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let fields = split_fields(path, line_no, line, 4, "label")?;
        let utt_id = fields[0].trim().to_string();
        let word_index: usize = fields[1].trim().parse().map_err(|_| {
            Error::parse(
                path,
                line_no,
                format!("non-integer word index `{}`", fields[1].trim()),
            )
        })?;
        let word = fields[2].trim().to_string();
        let score: f64 = fields[3].trim().parse().map_err(|_| {
            Error::parse(
                path,
                line_no,
                format!("non-numeric score `{}`", fields[3].trim()),
            )
        })?;
        if !(0.0..=10.0).contains(&score) {
            return Err(Error::parse(
                path,
                line_no,
                format!("score {score} outside [0, 10]"),
            ));
        }
        rows.push(LabelRow {
            utt_id,
            word_index,
            word,
            score,
        });
    }
    LabelTable::new(rows)
}

/// Writes labels in row order.
pub fn write_labels(path: &Path, labels: &LabelTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for r in labels.rows() {
            writeln!(w, "{}\t{}\t{}\t{}", r.utt_id, r.word_index, r.word, r.score)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn phone_map_round_trip_defines_inventory_order() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phones.tsv");
        std::fs::write(&path, "# comment\nEY\t3,4,5\nD\t0,1\n\nK\t2\n").unwrap();
        let map = read_phone_map(&path).unwrap();
        assert_eq!(map.inventory().symbols(), ["EY", "D", "K"]);
        assert_eq!(map.classes(map.inventory().get("D").unwrap()).unwrap(), &[0, 1]);
        let out = dir.path().join("phones_out.tsv");
        write_phone_map(&out, &map).unwrap();
        let back = read_phone_map(&out).unwrap();
        assert_eq!(back.inventory().symbols(), map.inventory().symbols());
        assert_eq!(
            back.classes(back.inventory().get("EY").unwrap()).unwrap(),
            &[3, 4, 5]
        );
    }

    #[test]
    fn phone_map_rejects_empty_class_list() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phones.tsv");
        std::fs::write(&path, "D\t\n").unwrap();
        assert!(read_phone_map(&path).is_err());
    }

    #[test]
    fn lexicon_round_trip_and_unknown_phone() {
        let dir = tempdir().unwrap();
        let map_path = dir.path().join("phones.tsv");
        std::fs::write(&map_path, "D\t0\nEY\t1\n").unwrap();
        let inv = read_phone_map(&map_path).unwrap().inventory().clone();

        let lex_path = dir.path().join("lexicon.tsv");
        std::fs::write(&lex_path, "DAY\tD EY\t40\nAYE\tEY\t7\n").unwrap();
        let lex = read_lexicon(&lex_path, &inv).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.get("DAY").unwrap().frequency, 40);
        assert_eq!(lex.get("DAY").unwrap().phones.len(), 2);

        let out = dir.path().join("lex_out.tsv");
        write_lexicon(&out, &lex).unwrap();
        let back = read_lexicon(&out, &inv).unwrap();
        assert_eq!(back.entries(), lex.entries());

        std::fs::write(&lex_path, "DAY\tD ZZ\t40\n").unwrap();
        let err = read_lexicon(&lex_path, &inv).unwrap_err();
        assert!(err.to_string().contains("ZZ"), "{err}");
    }

    #[test]
    fn alignment_frames_round_trip() {
        let dir = tempdir().unwrap();
        let inv = PhoneInventory::from_symbols(["D", "EY"]).unwrap();
        let path = dir.path().join("ali.tsv");
        std::fs::write(&path, "u1\tD\t0\t12\nu1\tEY\t12\t30\nu2\tEY\t3\t9\n").unwrap();
        let alis = read_alignments(&path, &inv, AlignUnits::Frames).unwrap();
        assert_eq!(alis.len(), 2);
        assert_eq!(alis["u1"].len(), 2);
        assert_eq!(alis["u1"].segments()[1].end, 30);

        let out = dir.path().join("ali_out.tsv");
        let ordered: Vec<(String, PhoneAlignment)> = vec![
            ("u1".into(), alis["u1"].clone()),
            ("u2".into(), alis["u2"].clone()),
        ];
        write_alignments(&out, &ordered, &inv).unwrap();
        let back = read_alignments(&out, &inv, AlignUnits::Frames).unwrap();
        assert_eq!(back["u1"], alis["u1"]);
        assert_eq!(back["u2"], alis["u2"]);
    }

    #[test]
    fn alignment_seconds_floor_start_ceil_end() {
        let dir = tempdir().unwrap();
        let inv = PhoneInventory::from_symbols(["D"]).unwrap();
        let path = dir.path().join("ali.tsv");
        // 0.034s -> floor(3.4) = 3; 0.071s -> ceil(7.1) = 8.
        std::fs::write(&path, "u1\tD\t0.034\t0.071\n").unwrap();
        let alis = read_alignments(&path, &inv, AlignUnits::Seconds).unwrap();
        let seg = alis["u1"].segments()[0];
        assert_eq!((seg.start, seg.end), (3, 8));
        // Exact multiples of the hop stay exact: 0.03 -> 3, 0.12 -> 12.
        std::fs::write(&path, "u1\tD\t0.03\t0.12\n").unwrap();
        let alis = read_alignments(&path, &inv, AlignUnits::Seconds).unwrap();
        let seg = alis["u1"].segments()[0];
        assert_eq!((seg.start, seg.end), (3, 12));
    }

    #[test]
    fn alignment_overlap_is_rejected_with_context() {
        let dir = tempdir().unwrap();
        let inv = PhoneInventory::from_symbols(["D"]).unwrap();
        let path = dir.path().join("ali.tsv");
        std::fs::write(&path, "u1\tD\t0\t5\nu1\tD\t3\t8\n").unwrap();
        let err = read_alignments(&path, &inv, AlignUnits::Frames).unwrap_err();
        assert!(err.to_string().contains("u1"), "{err}");
    }

    #[test]
    fn labels_round_trip_and_lookup() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        std::fs::write(&path, "u1\t0\tDAY\t8.5\nu1\t1\tOFF\t3\nu2\t0\tDAY\t10\n").unwrap();
        let labels = read_labels(&path).unwrap();
        assert_eq!(labels.len(), 3);
        assert_eq!(labels.get("u1", 1).unwrap().score, 3.0);
        assert!(labels.get("u3", 0).is_none());

        let out = dir.path().join("labels_out.tsv");
        write_labels(&out, &labels).unwrap();
        let back = read_labels(&out).unwrap();
        assert_eq!(back.rows(), labels.rows());
    }

    #[test]
    fn labels_reject_out_of_range_and_duplicates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        std::fs::write(&path, "u1\t0\tDAY\t11\n").unwrap();
        assert!(read_labels(&path).is_err());
        std::fs::write(&path, "u1\t0\tDAY\t5\nu1\t0\tDAY\t6\n").unwrap();
        let err = read_labels(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }
}
