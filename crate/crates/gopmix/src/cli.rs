//! Command-line front end.
//!
//! Every subcommand reads/writes the crate's file formats, resolves
//! relative paths against `GMX_DATA_ROOT` when that variable is set, and
//! writes a JSON run manifest next to its primary output recording the
//! effective arguments, seeds, and input/output hashes. Runs are
//! deterministic: the same inputs and seed produce byte-identical outputs.
//!
//! Any long flag of a subcommand can instead be supplied through a JSON
//! config file (`--config file.json`, snake_case keys); explicit flags
//! override the file. Training subcommands additionally read scorer
//! hyperparameters from the file's `scorer` object.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/validation error,
//! 4 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::{write_predictions_csv, write_sweep_csv, SweepRow};
use crate::experiment::{derive_seed, evaluate_model, load_protocol_data, run_sweep, stage};
use crate::gop::{phone_gop, GopVariant};
use crate::io::{
    read_checkpoint, read_dataset, read_labels, read_lexicon, read_phone_map, read_pool,
    resolve_path, sha256_file, write_checkpoint, write_dataset, write_pool,
    write_training_manifest, AlignUnits, CorpusReader, DataHash, TrainingManifest,
};
use crate::mixup::{generate_dataset, mix_pretrain_corpus};
use crate::pool::build_pool;
use crate::scorer::{init_model, train, FeatureSet, ScorerConfig, ScorerModel, TargetKind};
use crate::synth::{generate_corpus, write_corpus, CorpusPaths, SynthSpec};
use crate::types::{PhoneInventory, WordSample};
use crate::words::{labeled_word_samples, real_word_samples, word_spans, LabeledWord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;

/// A subcommand failure with its process exit code.
#[derive(Debug)]
enum Failure {
    /// Missing/contradictory arguments — exit 2.
    Usage(String),
    /// Categorized pipeline error — exit 3 or 4 per [`Error::exit_code`].
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Run(e) => e.exit_code(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses the given argv and runs the selected subcommand, returning the
/// process exit code. `main` is a thin wrapper over this.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests print to stdout and exit 0; real
            // usage errors print to stderr and exit 2.
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gopmix",
    version,
    about = "Phone-level mixup augmentation and word-level pronunciation scoring",
    disable_help_subcommand = true
)]
struct Cli {
    /// Cap internal parallelism at this many worker threads.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// JSON file supplying any long flag of the subcommand (snake_case
    /// keys); explicit flags override the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: features, posteriors, alignments,
    /// split manifests, and human-style word scores.
    Synth(SynthArgs),
    /// Dump per-phone and per-word pronunciation scores as CSV.
    Gop(GopArgs),
    /// Harvest per-phoneme (features, score) pools from a corpus.
    BuildPool(BuildPoolArgs),
    /// Generate augmented words by per-phone sampling from pools.
    Mixup(MixupArgs),
    /// Extract real words with posterior-based targets into a dataset.
    ExtractReal(ExtractRealArgs),
    /// Train the scorer from scratch on posterior-based targets.
    Pretrain(PretrainArgs),
    /// Continue training a checkpoint on human-scored words.
    Finetune(FinetuneArgs),
    /// Score a labeled test set and report the Pearson correlation.
    Eval(EvalArgs),
    /// Train and evaluate across augmentation sizes and feature sets.
    Sweep(SweepArgs),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        // A pool may already exist when embedded in another process (e.g.
        // tests); the existing pool then keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, &file),
        Command::Gop(a) => cmd_gop(a, &file),
        Command::BuildPool(a) => cmd_build_pool(a, &file),
        Command::Mixup(a) => cmd_mixup(a, &file),
        Command::ExtractReal(a) => cmd_extract_real(a, &file),
        Command::Pretrain(a) => cmd_pretrain(a, &file),
        Command::Finetune(a) => cmd_finetune(a, &file),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Sweep(a) => cmd_sweep(a, &file),
    }
}

// ---------------------------------------------------------------------------
// Config-file merge

/// The parsed `--config` JSON object (empty when no file was given).
#[derive(Debug)]
struct FileConfig {
    map: serde_json::Map<String, Value>,
    path: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig {
                map: serde_json::Map::new(),
                path: None,
            });
        };
        let path = resolve_path(path);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(&path, format!("invalid JSON: {e}")))?;
        match value {
            Value::Object(map) => Ok(FileConfig {
                map,
                path: Some(path),
            }),
            other => Err(Error::format(
                &path,
                format!("config must be a JSON object, got {}", kind_name(&other)),
            )
            .into()),
        }
    }

    /// Rejects keys that are not flags of the running subcommand, so a
    /// typo cannot silently fall back to a default.
    fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(usage(format!(
                    "unknown config key `{key}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.map.get(key)
    }

    fn wrong_type(&self, key: &str, want: &str, got: &Value) -> Failure {
        let path = self
            .path
            .as_deref()
            .unwrap_or_else(|| Path::new("<config>"));
        Error::format(
            path,
            format!("key `{key}` must be a {want}, got {}", kind_name(got)),
        )
        .into()
    }

    fn path_value(&self, key: &str) -> CliResult<Option<PathBuf>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(other) => Err(self.wrong_type(key, "string path", other)),
        }
    }

    fn u64_value(&self, key: &str) -> CliResult<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) if n.as_u64().is_some() => Ok(n.as_u64()),
            Some(other) => Err(self.wrong_type(key, "non-negative integer", other)),
        }
    }

    /// A count: a JSON number, or a string with an optional k/m suffix.
    fn count_value(&self, key: &str) -> CliResult<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) if n.as_u64().is_some() => {
                Ok(Some(n.as_u64().expect("checked") as usize))
            }
            Some(Value::String(s)) => Ok(Some(parse_count(s).map_err(usage)?)),
            Some(other) => Err(self.wrong_type(key, "count (number or `50k` string)", other)),
        }
    }

    fn string_value(&self, key: &str) -> CliResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(self.wrong_type(key, "string", other)),
        }
    }

    /// A list: a comma-separated string or a JSON array of strings/numbers.
    fn list_value(&self, key: &str) -> CliResult<Option<Vec<String>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(split_list(s))),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::String(s) => out.push(s.clone()),
                        Value::Number(n) => out.push(n.to_string()),
                        other => {
                            return Err(self.wrong_type(key, "array of strings/numbers", other))
                        }
                    }
                }
                Ok(Some(out))
            }
            Some(other) => Err(self.wrong_type(key, "list (string or array)", other)),
        }
    }

    /// The `scorer` object deserialized as a full scorer config; absent
    /// keys take the documented defaults.
    fn scorer(&self) -> CliResult<Option<ScorerConfig>> {
        match self.get("scorer") {
            None => Ok(None),
            Some(v) => {
                let config: ScorerConfig = serde_json::from_value(v.clone()).map_err(|e| {
                    let path = self
                        .path
                        .as_deref()
                        .unwrap_or_else(|| Path::new("<config>"));
                    Error::format(path, format!("invalid `scorer` object: {e}"))
                })?;
                Ok(Some(config))
            }
        }
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn missing(key: &str) -> Failure {
    usage(format!(
        "missing {} (or `{key}` in the config file)",
        flag_name(key)
    ))
}

/// Required path: flag wins, then config file; resolved against the data
/// root.
fn req_path(flag: Option<PathBuf>, file: &FileConfig, key: &str) -> CliResult<PathBuf> {
    opt_path(flag, file, key)?.ok_or_else(|| missing(key))
}

fn opt_path(flag: Option<PathBuf>, file: &FileConfig, key: &str) -> CliResult<Option<PathBuf>> {
    let raw = match flag {
        Some(p) => Some(p),
        None => file.path_value(key)?,
    };
    Ok(raw.map(|p| resolve_path(&p)))
}

fn opt_u64(flag: Option<u64>, file: &FileConfig, key: &str) -> CliResult<Option<u64>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.u64_value(key),
    }
}

fn opt_count(flag: &Option<String>, file: &FileConfig, key: &str) -> CliResult<Option<usize>> {
    match flag {
        Some(s) => Ok(Some(parse_count(s).map_err(usage)?)),
        None => file.count_value(key),
    }
}

fn req_count(flag: &Option<String>, file: &FileConfig, key: &str) -> CliResult<usize> {
    opt_count(flag, file, key)?.ok_or_else(|| missing(key))
}

fn opt_string(flag: &Option<String>, file: &FileConfig, key: &str) -> CliResult<Option<String>> {
    match flag {
        Some(s) => Ok(Some(s.clone())),
        None => file.string_value(key),
    }
}

fn opt_list(flag: &Option<String>, file: &FileConfig, key: &str) -> CliResult<Option<Vec<String>>> {
    match flag {
        Some(s) => Ok(Some(split_list(s))),
        None => file.list_value(key),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses a non-negative count, accepting `k` (thousand) and `m`
/// (million) suffixes: `20000`, `20k`, `2m`.
pub fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let t = s.trim().to_ascii_lowercase();
    let (digits, mult) = if let Some(d) = t.strip_suffix('k') {
        (d, 1_000usize)
    } else if let Some(d) = t.strip_suffix('m') {
        (d, 1_000_000usize)
    } else {
        (t.as_str(), 1usize)
    };
    let base: usize = digits
        .parse()
        .map_err(|_| format!("invalid count `{s}` (expected forms: 20000, 20k, 2m)"))?;
    base.checked_mul(mult)
        .ok_or_else(|| format!("count `{s}` overflows"))
}

fn parse_variant(flag: &Option<String>, file: &FileConfig) -> CliResult<GopVariant> {
    match opt_string(flag, file, "variant")? {
        None => Ok(GopVariant::MeanPosterior),
        Some(s) => Ok(GopVariant::parse(&s)?),
    }
}

fn parse_units(flag: &Option<String>, file: &FileConfig) -> CliResult<AlignUnits> {
    match opt_string(flag, file, "align_units")? {
        None => Ok(AlignUnits::Frames),
        Some(s) => Ok(AlignUnits::parse(&s)?),
    }
}

// ---------------------------------------------------------------------------
// Run manifests

/// What a finished run records next to its primary output. Contains no
/// timestamps, so reruns with identical inputs produce identical bytes.
#[derive(Debug, serde::Serialize)]
struct RunManifest {
    command: String,
    /// Effective argument values after the config-file merge.
    args: BTreeMap<String, Value>,
    /// Master seed plus every derived stage seed the run used.
    seeds: BTreeMap<String, u64>,
    inputs: Vec<DataHash>,
    outputs: Vec<DataHash>,
    /// Subcommand-specific summary (counts, losses, correlation).
    #[serde(skip_serializing_if = "Value::is_null")]
    details: Value,
}

/// `out.gmds` -> `out.gmds.run.json`; directories get `run.json` inside.
fn run_manifest_path(primary_output: &Path) -> PathBuf {
    if primary_output.is_dir() {
        primary_output.join("run.json")
    } else {
        let mut name = primary_output
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        name.push_str(".run.json");
        primary_output.with_file_name(name)
    }
}

fn hash_input(path: &Path) -> Result<DataHash> {
    Ok(DataHash {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

fn write_run_manifest(primary_output: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = run_manifest_path(primary_output);
    let mut json =
        serde_json::to_string_pretty(manifest).expect("run manifest is serializable");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn arg_path(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// Corpus parameters as JSON (defaults when omitted).
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Output directory for the corpus.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed; overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_synth(a: SynthArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&["spec", "out", "seed"])?;
    let spec_path = opt_path(a.spec, file, "spec")?;
    let out = req_path(a.out, file, "out")?;
    let seed = opt_u64(a.seed, file, "seed")?;

    let mut spec = match &spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthSpec>(&text)
                .map_err(|e| Error::format(p, format!("invalid corpus spec: {e}")))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }

    let mut inputs = Vec::new();
    if let Some(p) = &spec_path {
        inputs.push(hash_input(p)?);
    }

    let corpus = generate_corpus(&spec)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_corpus(&out, &corpus)?;

    let paths = CorpusPaths::under(&out);
    let mut outputs = Vec::new();
    for p in [
        &paths.phone_map,
        &paths.lexicon,
        &paths.alignments,
        &paths.pool_manifest,
        &paths.train_manifest,
        &paths.test_manifest,
        &paths.train_labels,
        &paths.test_labels,
        &paths.spec_json,
    ] {
        outputs.push(hash_input(p)?);
    }

    let mut args = BTreeMap::new();
    if let Some(p) = &spec_path {
        args.insert("spec".into(), arg_path(p));
    }
    args.insert("out".into(), arg_path(&out));
    write_run_manifest(
        &out,
        &RunManifest {
            command: "synth".into(),
            args,
            seeds: BTreeMap::from([("seed".into(), spec.seed)]),
            inputs,
            outputs,
            details: json!({
                "n_utterances": corpus.utterances.len(),
                "n_phones": corpus.inventory.len(),
                "lexicon_words": corpus.lexicon.len(),
            }),
        },
    )?;
    println!(
        "synth: {} utterances, {} phones, {} lexicon words -> {}",
        corpus.utterances.len(),
        corpus.inventory.len(),
        corpus.lexicon.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gop

#[derive(Args)]
struct GopArgs {
    /// Corpus manifest (JSONL).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Phone-to-posterior-class map (TSV).
    #[arg(long, value_name = "FILE")]
    phone_map: Option<PathBuf>,
    /// Word pronunciation lexicon (TSV); delimits words in the alignment.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Score variant: mean_posterior (default) or log_mean.
    #[arg(long)]
    variant: Option<String>,
    /// Alignment units: frames (default) or seconds.
    #[arg(long)]
    align_units: Option<String>,
    /// Output CSV of per-phone and per-word scores.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn cmd_gop(a: GopArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&["manifest", "phone_map", "lexicon", "variant", "align_units", "out"])?;
    let manifest = req_path(a.manifest, file, "manifest")?;
    let phone_map = req_path(a.phone_map, file, "phone_map")?;
    let lexicon_path = req_path(a.lexicon, file, "lexicon")?;
    let out = req_path(a.out, file, "out")?;
    let variant = parse_variant(&a.variant, file)?;
    let units = parse_units(&a.align_units, file)?;

    let map = read_phone_map(&phone_map)?;
    let lexicon = read_lexicon(&lexicon_path, map.inventory())?;
    let reader = CorpusReader::open(&manifest, map.inventory(), units)?;

    let mut csv = String::from("utt_id,kind,index,label,start,end,gop\n");
    let (mut n_phones, mut n_words) = (0usize, 0usize);
    for rec in reader.iter() {
        let rec = rec?;
        let segments = rec.align.segments();
        let mut seg_gops = Vec::with_capacity(segments.len());
        for (i, seg) in segments.iter().enumerate() {
            let g = phone_gop(&rec.post, &map, seg, variant)?;
            let symbol = map.inventory().symbol(seg.phone);
            writeln!(
                csv,
                "{},phone,{i},{symbol},{},{},{g}",
                rec.utt_id, seg.start, seg.end
            )
            .expect("writing to a string cannot fail");
            seg_gops.push(g);
            n_phones += 1;
        }
        for span in word_spans(&rec, &lexicon)? {
            let gops = &seg_gops[span.segments.clone()];
            let word_score = crate::gop::word_gop(gops)?;
            let start = segments[span.segments.start].start;
            let end = segments[span.segments.end - 1].end;
            writeln!(
                csv,
                "{},word,{},{},{start},{end},{word_score}",
                rec.utt_id, span.word_index, span.word
            )
            .expect("writing to a string cannot fail");
            n_words += 1;
        }
    }
    std::fs::write(&out, csv).map_err(|e| Error::io(&out, e))?;

    write_run_manifest(
        &out,
        &RunManifest {
            command: "gop".into(),
            args: BTreeMap::from([
                ("manifest".into(), arg_path(&manifest)),
                ("phone_map".into(), arg_path(&phone_map)),
                ("lexicon".into(), arg_path(&lexicon_path)),
                ("variant".into(), Value::String(variant.as_str().into())),
                ("align_units".into(), Value::String(units.as_str().into())),
                ("out".into(), arg_path(&out)),
            ]),
            seeds: BTreeMap::new(),
            inputs: vec![
                hash_input(&manifest)?,
                hash_input(&phone_map)?,
                hash_input(&lexicon_path)?,
            ],
            outputs: vec![hash_input(&out)?],
            details: json!({
                "n_utterances": reader.len(),
                "n_phone_scores": n_phones,
                "n_word_scores": n_words,
            }),
        },
    )?;
    println!(
        "gop: {} utterances, {n_phones} phone scores, {n_words} word scores -> {}",
        reader.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// build-pool

#[derive(Args)]
struct BuildPoolArgs {
    /// Corpus manifest (JSONL).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Phone-to-posterior-class map (TSV).
    #[arg(long, value_name = "FILE")]
    phone_map: Option<PathBuf>,
    /// Score variant: mean_posterior (default) or log_mean.
    #[arg(long)]
    variant: Option<String>,
    /// Alignment units: frames (default) or seconds.
    #[arg(long)]
    align_units: Option<String>,
    /// Output pool file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn cmd_build_pool(a: BuildPoolArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&["manifest", "phone_map", "variant", "align_units", "out"])?;
    let manifest = req_path(a.manifest, file, "manifest")?;
    let phone_map = req_path(a.phone_map, file, "phone_map")?;
    let out = req_path(a.out, file, "out")?;
    let variant = parse_variant(&a.variant, file)?;
    let units = parse_units(&a.align_units, file)?;

    let map = read_phone_map(&phone_map)?;
    let reader = CorpusReader::open(&manifest, map.inventory(), units)?;
    let (pools, stats) = build_pool(reader.iter(), &map, variant)?;
    write_pool(&out, &pools)?;

    write_run_manifest(
        &out,
        &RunManifest {
            command: "build-pool".into(),
            args: BTreeMap::from([
                ("manifest".into(), arg_path(&manifest)),
                ("phone_map".into(), arg_path(&phone_map)),
                ("variant".into(), Value::String(variant.as_str().into())),
                ("align_units".into(), Value::String(units.as_str().into())),
                ("out".into(), arg_path(&out)),
            ]),
            seeds: BTreeMap::new(),
            inputs: vec![hash_input(&manifest)?, hash_input(&phone_map)?],
            outputs: vec![hash_input(&out)?],
            details: json!({
                "utterances": stats.utterances,
                "quadruplets": pools.total(),
                "long_segments": stats.long_segments.len(),
            }),
        },
    )?;
    println!(
        "build-pool: {} quadruplets from {} utterances -> {}",
        pools.total(),
        stats.utterances,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mixup

#[derive(Args)]
struct MixupArgs {
    /// Phone pool file.
    #[arg(long, value_name = "FILE")]
    pool: Option<PathBuf>,
    /// Word pronunciation lexicon (TSV) with frequencies.
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Number of words to generate (accepts k/m suffixes).
    #[arg(long, value_name = "COUNT")]
    n: Option<String>,
    /// Generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn cmd_mixup(a: MixupArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&["pool", "lexicon", "n", "seed", "out"])?;
    let pool_path = req_path(a.pool, file, "pool")?;
    let lexicon_path = req_path(a.lexicon, file, "lexicon")?;
    let n = req_count(&a.n, file, "n")?;
    let seed = opt_u64(a.seed, file, "seed")?.unwrap_or(0);
    let out = req_path(a.out, file, "out")?;

    let pools = read_pool(&pool_path)?;
    let lexicon = read_lexicon(&lexicon_path, pools.inventory())?;
    let (samples, gen) = generate_dataset(&pools, &lexicon, n, seed)?;
    write_dataset(&out, &samples, pools.inventory())?;

    write_run_manifest(
        &out,
        &RunManifest {
            command: "mixup".into(),
            args: BTreeMap::from([
                ("pool".into(), arg_path(&pool_path)),
                ("lexicon".into(), arg_path(&lexicon_path)),
                ("n".into(), json!(n)),
                ("out".into(), arg_path(&out)),
            ]),
            seeds: BTreeMap::from([("seed".into(), seed)]),
            inputs: vec![hash_input(&pool_path)?, hash_input(&lexicon_path)?],
            outputs: vec![hash_input(&out)?],
            details: serde_json::to_value(&gen).expect("generation manifest is serializable"),
        },
    )?;
    println!(
        "mixup: {} words (resampled {}) -> {}",
        samples.len(),
        gen.resamples,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// extract-real

#[derive(Args)]
struct ExtractRealArgs {
    /// Corpus manifest (JSONL).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Phone-to-posterior-class map (TSV).
    #[arg(long, value_name = "FILE")]
    phone_map: Option<PathBuf>,
    /// Word pronunciation lexicon (TSV).
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Score variant: mean_posterior (default) or log_mean.
    #[arg(long)]
    variant: Option<String>,
    /// Alignment units: frames (default) or seconds.
    #[arg(long)]
    align_units: Option<String>,
    /// Output dataset file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn cmd_extract_real(a: ExtractRealArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&["manifest", "phone_map", "lexicon", "variant", "align_units", "out"])?;
    let manifest = req_path(a.manifest, file, "manifest")?;
    let phone_map = req_path(a.phone_map, file, "phone_map")?;
    let lexicon_path = req_path(a.lexicon, file, "lexicon")?;
    let out = req_path(a.out, file, "out")?;
    let variant = parse_variant(&a.variant, file)?;
    let units = parse_units(&a.align_units, file)?;

    let map = read_phone_map(&phone_map)?;
    let lexicon = read_lexicon(&lexicon_path, map.inventory())?;
    let reader = CorpusReader::open(&manifest, map.inventory(), units)?;
    let mut samples = Vec::new();
    for rec in reader.iter() {
        samples.extend(real_word_samples(&rec?, &lexicon, &map, variant)?);
    }
    write_dataset(&out, &samples, map.inventory())?;

    write_run_manifest(
        &out,
        &RunManifest {
            command: "extract-real".into(),
            args: BTreeMap::from([
                ("manifest".into(), arg_path(&manifest)),
                ("phone_map".into(), arg_path(&phone_map)),
                ("lexicon".into(), arg_path(&lexicon_path)),
                ("variant".into(), Value::String(variant.as_str().into())),
                ("align_units".into(), Value::String(units.as_str().into())),
                ("out".into(), arg_path(&out)),
            ]),
            seeds: BTreeMap::new(),
            inputs: vec![
                hash_input(&manifest)?,
                hash_input(&phone_map)?,
                hash_input(&lexicon_path)?,
            ],
            outputs: vec![hash_input(&out)?],
            details: json!({ "n_words": samples.len() }),
        },
    )?;
    println!(
        "extract-real: {} words from {} utterances -> {}",
        samples.len(),
        reader.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// pretrain

#[derive(Args)]
struct PretrainArgs {
    /// Dataset of real words with posterior-based targets.
    #[arg(long, value_name = "FILE")]
    real: Option<PathBuf>,
    /// Optional dataset of augmented words to mix in.
    #[arg(long, value_name = "FILE")]
    mixup: Option<PathBuf>,
    /// Master seed for initialization, shuffling, and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint path.
    #[arg(long, value_name = "FILE")]
    out_ckpt: Option<PathBuf>,
}

/// Feature widths always come from the data and the inventory, so a
/// config written for one corpus cannot silently mis-shape another.
fn shape_from_data(config: &mut ScorerConfig, sample: &WordSample, inv: &PhoneInventory) {
    config.d_mfcc = sample.mfcc.cols();
    config.d_deep = sample.deep.cols();
    config.n_phones = inv.len();
}

fn cmd_pretrain(a: PretrainArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&["real", "mixup", "seed", "out_ckpt", "scorer"])?;
    let real_path = req_path(a.real, file, "real")?;
    let mixup_path = opt_path(a.mixup, file, "mixup")?;
    let seed = opt_u64(a.seed, file, "seed")?.unwrap_or(0);
    let out_ckpt = req_path(a.out_ckpt, file, "out_ckpt")?;

    let (real, inventory) = read_dataset(&real_path)?;
    let mut inputs = vec![hash_input(&real_path)?];
    let corpus = match &mixup_path {
        Some(p) => {
            let (mixed, inv2) = read_dataset(p)?;
            if inventory.symbols() != inv2.symbols() {
                return Err(Error::InvalidInput(format!(
                    "phone inventories differ between {} and {}",
                    real_path.display(),
                    p.display()
                ))
                .into());
            }
            inputs.push(hash_input(p)?);
            mix_pretrain_corpus(real, mixed, derive_seed(seed, stage::MIX_SHUFFLE))?
        }
        None => real,
    };
    let Some(first) = corpus.first() else {
        return Err(Error::EmptyInput("pretraining dataset is empty".into()).into());
    };

    let mut config = file.scorer()?.unwrap_or_default();
    shape_from_data(&mut config, first, &inventory);
    let init_seed = derive_seed(seed, stage::INIT);
    let train_seed = derive_seed(seed, stage::PRETRAIN);
    config.seed = train_seed;

    let mut model: ScorerModel<f32> =
        init_model(&config, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
    let report = train(&mut model, &corpus, TargetKind::Pretrain)?;

    write_checkpoint(&out_ckpt, &model, &inventory)?;
    let manifest_file = crate::io::training_manifest_path(&out_ckpt);
    write_training_manifest(
        &manifest_file,
        &TrainingManifest {
            phase: "pretrain".into(),
            init_seed: Some(init_seed),
            train_seed,
            data: inputs.clone(),
            base_checkpoint: None,
            report: report.clone(),
        },
    )?;
    write_run_manifest(
        &out_ckpt,
        &RunManifest {
            command: "pretrain".into(),
            args: BTreeMap::from([
                ("real".into(), arg_path(&real_path)),
                (
                    "mixup".into(),
                    mixup_path.as_deref().map(arg_path).unwrap_or(Value::Null),
                ),
                ("out_ckpt".into(), arg_path(&out_ckpt)),
            ]),
            seeds: BTreeMap::from([
                ("seed".into(), seed),
                ("init".into(), init_seed),
                ("train".into(), train_seed),
                ("mix_shuffle".into(), derive_seed(seed, stage::MIX_SHUFFLE)),
            ]),
            inputs,
            outputs: vec![hash_input(&out_ckpt)?, hash_input(&manifest_file)?],
            details: json!({
                "n_words": corpus.len(),
                "epochs": report.epochs,
                "best_epoch": report.best_epoch,
                "final_train_loss": report.train_loss.last(),
            }),
        },
    )?;
    println!(
        "pretrain: {} words, {} epochs (best {}) -> {}",
        corpus.len(),
        report.epochs,
        report.best_epoch,
        out_ckpt.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// finetune

/// Training hyperparameters that may be overridden when fine-tuning; the
/// architecture always comes from the checkpoint.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainOverrides {
    learning_rate: Option<f64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_epsilon: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    holdout_fraction: Option<f64>,
    dropout_p: Option<f64>,
}

impl TrainOverrides {
    fn from_file(file: &FileConfig) -> CliResult<Self> {
        match file.get("scorer") {
            None => Ok(TrainOverrides::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| {
                let path = file
                    .path
                    .as_deref()
                    .unwrap_or_else(|| Path::new("<config>"));
                Error::format(
                    path,
                    format!(
                        "invalid `scorer` override (only training fields may change \
                         when fine-tuning): {e}"
                    ),
                )
                .into()
            }),
        }
    }

    fn apply(&self, config: &mut ScorerConfig) {
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.adam_beta1 {
            config.adam_beta1 = v;
        }
        if let Some(v) = self.adam_beta2 {
            config.adam_beta2 = v;
        }
        if let Some(v) = self.adam_epsilon {
            config.adam_epsilon = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.holdout_fraction {
            config.holdout_fraction = v;
        }
        if let Some(v) = self.dropout_p {
            config.dropout_p = v;
        }
    }
}

#[derive(Args)]
struct FinetuneArgs {
    /// Checkpoint to start from.
    #[arg(long, value_name = "FILE")]
    ckpt: Option<PathBuf>,
    /// Manifest of the labeled training utterances.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Word pronunciation lexicon (TSV).
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Human word scores (TSV, 0-10 scale).
    #[arg(long, value_name = "FILE")]
    train_labels: Option<PathBuf>,
    /// Alignment units: frames (default) or seconds.
    #[arg(long)]
    align_units: Option<String>,
    /// Master seed for batch order and dropout.
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint path.
    #[arg(long, value_name = "FILE")]
    out_ckpt: Option<PathBuf>,
}

fn cmd_finetune(a: FinetuneArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&[
        "ckpt",
        "manifest",
        "lexicon",
        "train_labels",
        "align_units",
        "seed",
        "out_ckpt",
        "scorer",
    ])?;
    let ckpt = req_path(a.ckpt, file, "ckpt")?;
    let manifest = req_path(a.manifest, file, "manifest")?;
    let lexicon_path = req_path(a.lexicon, file, "lexicon")?;
    let labels_path = req_path(a.train_labels, file, "train_labels")?;
    let units = parse_units(&a.align_units, file)?;
    let seed = opt_u64(a.seed, file, "seed")?.unwrap_or(0);
    let out_ckpt = req_path(a.out_ckpt, file, "out_ckpt")?;

    let (mut model, inventory) = read_checkpoint(&ckpt)?;
    let lexicon = read_lexicon(&lexicon_path, &inventory)?;
    let labels = read_labels(&labels_path)?;
    let reader = CorpusReader::open(&manifest, &inventory, units)?;
    let mut samples = Vec::new();
    for rec in reader.iter() {
        let labeled = labeled_word_samples(&rec?, &lexicon, &labels)?;
        samples.extend(labeled.into_iter().map(|lw| lw.sample));
    }

    TrainOverrides::from_file(file)?.apply(&mut model.config);
    let train_seed = derive_seed(seed, stage::FINETUNE);
    model.config.seed = train_seed;
    let report = train(&mut model, &samples, TargetKind::Finetune)?;

    let base_hash = hash_input(&ckpt)?;
    write_checkpoint(&out_ckpt, &model, &inventory)?;
    let manifest_file = crate::io::training_manifest_path(&out_ckpt);
    write_training_manifest(
        &manifest_file,
        &TrainingManifest {
            phase: "finetune".into(),
            init_seed: None,
            train_seed,
            data: vec![hash_input(&manifest)?, hash_input(&labels_path)?],
            base_checkpoint: Some(base_hash.clone()),
            report: report.clone(),
        },
    )?;
    write_run_manifest(
        &out_ckpt,
        &RunManifest {
            command: "finetune".into(),
            args: BTreeMap::from([
                ("ckpt".into(), arg_path(&ckpt)),
                ("manifest".into(), arg_path(&manifest)),
                ("lexicon".into(), arg_path(&lexicon_path)),
                ("train_labels".into(), arg_path(&labels_path)),
                ("align_units".into(), Value::String(units.as_str().into())),
                ("out_ckpt".into(), arg_path(&out_ckpt)),
            ]),
            seeds: BTreeMap::from([("seed".into(), seed), ("train".into(), train_seed)]),
            inputs: vec![
                base_hash,
                hash_input(&manifest)?,
                hash_input(&lexicon_path)?,
                hash_input(&labels_path)?,
            ],
            outputs: vec![hash_input(&out_ckpt)?, hash_input(&manifest_file)?],
            details: json!({
                "n_words": samples.len(),
                "epochs": report.epochs,
                "best_epoch": report.best_epoch,
                "final_train_loss": report.train_loss.last(),
            }),
        },
    )?;
    println!(
        "finetune: {} words, {} epochs (best {}) -> {}",
        samples.len(),
        report.epochs,
        report.best_epoch,
        out_ckpt.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    ckpt: Option<PathBuf>,
    /// Manifest of the labeled test utterances.
    #[arg(long, value_name = "FILE")]
    test_manifest: Option<PathBuf>,
    /// Word pronunciation lexicon (TSV).
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Human word scores (TSV, 0-10 scale).
    #[arg(long, value_name = "FILE")]
    test_labels: Option<PathBuf>,
    /// Alignment units: frames (default) or seconds.
    #[arg(long)]
    align_units: Option<String>,
    /// Output CSV of per-word predictions.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

fn cmd_eval(a: EvalArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&[
        "ckpt",
        "test_manifest",
        "lexicon",
        "test_labels",
        "align_units",
        "report",
    ])?;
    let ckpt = req_path(a.ckpt, file, "ckpt")?;
    let manifest = req_path(a.test_manifest, file, "test_manifest")?;
    let lexicon_path = req_path(a.lexicon, file, "lexicon")?;
    let labels_path = req_path(a.test_labels, file, "test_labels")?;
    let units = parse_units(&a.align_units, file)?;
    let report_path = req_path(a.report, file, "report")?;

    let (model, inventory) = read_checkpoint(&ckpt)?;
    let lexicon = read_lexicon(&lexicon_path, &inventory)?;
    let labels = read_labels(&labels_path)?;
    let reader = CorpusReader::open(&manifest, &inventory, units)?;
    let mut test: Vec<LabeledWord> = Vec::new();
    for rec in reader.iter() {
        test.extend(labeled_word_samples(&rec?, &lexicon, &labels)?);
    }

    let eval_report = evaluate_model(&model, &test)?;
    write_predictions_csv(&report_path, &eval_report)?;

    write_run_manifest(
        &report_path,
        &RunManifest {
            command: "eval".into(),
            args: BTreeMap::from([
                ("ckpt".into(), arg_path(&ckpt)),
                ("test_manifest".into(), arg_path(&manifest)),
                ("lexicon".into(), arg_path(&lexicon_path)),
                ("test_labels".into(), arg_path(&labels_path)),
                ("align_units".into(), Value::String(units.as_str().into())),
                ("report".into(), arg_path(&report_path)),
            ]),
            seeds: BTreeMap::new(),
            inputs: vec![
                hash_input(&ckpt)?,
                hash_input(&manifest)?,
                hash_input(&lexicon_path)?,
                hash_input(&labels_path)?,
            ],
            outputs: vec![hash_input(&report_path)?],
            details: json!({
                "pcc": eval_report.pcc,
                "n_words": eval_report.rows.len(),
            }),
        },
    )?;
    println!(
        "eval: pcc {:.6} over {} words -> {}",
        eval_report.pcc,
        eval_report.rows.len(),
        report_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Args)]
struct SweepArgs {
    /// Corpus directory (the layout `synth` writes).
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Comma-separated total pretraining sizes (k/m suffixes allowed).
    /// The smallest size equal to --real-count is the no-mixup point.
    #[arg(long, value_name = "LIST")]
    sizes: Option<String>,
    /// Comma-separated feature sets (default: mfcc,deep,multi).
    #[arg(long, value_name = "LIST")]
    feature_sets: Option<String>,
    /// Real words pretrained on at every size (default: smallest size).
    #[arg(long, value_name = "COUNT")]
    real_count: Option<String>,
    /// Score variant: mean_posterior (default) or log_mean.
    #[arg(long)]
    variant: Option<String>,
    /// Alignment units: frames (default) or seconds.
    #[arg(long)]
    align_units: Option<String>,
    /// Master seed for every run of the sweep.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV: aug_size,feature_set,pcc.
    #[arg(long, value_name = "FILE")]
    out_csv: Option<PathBuf>,
}

fn cmd_sweep(a: SweepArgs, file: &FileConfig) -> CliResult<()> {
    file.check_keys(&[
        "corpus",
        "sizes",
        "feature_sets",
        "real_count",
        "variant",
        "align_units",
        "seed",
        "out_csv",
        "scorer",
    ])?;
    let corpus = req_path(a.corpus, file, "corpus")?;
    let sizes_raw = opt_list(&a.sizes, file, "sizes")?.ok_or_else(|| missing("sizes"))?;
    let mut sizes = Vec::with_capacity(sizes_raw.len());
    for s in &sizes_raw {
        sizes.push(parse_count(s).map_err(usage)?);
    }
    if sizes.is_empty() {
        return Err(usage("--sizes must name at least one size"));
    }
    let feature_sets = match opt_list(&a.feature_sets, file, "feature_sets")? {
        Some(names) => {
            let mut sets = Vec::with_capacity(names.len());
            for name in &names {
                sets.push(FeatureSet::parse(name)?);
            }
            sets
        }
        None => vec![FeatureSet::Mfcc, FeatureSet::Deep, FeatureSet::Multi],
    };
    let real_count = match opt_count(&a.real_count, file, "real_count")? {
        Some(n) => n,
        None => *sizes.iter().min().expect("sizes checked non-empty"),
    };
    let variant = parse_variant(&a.variant, file)?;
    let units = parse_units(&a.align_units, file)?;
    let seed = opt_u64(a.seed, file, "seed")?.unwrap_or(0);
    let out_csv = req_path(a.out_csv, file, "out_csv")?;

    let data = load_protocol_data(&corpus, variant, units)?;
    let base = data.configure(&file.scorer()?.unwrap_or_default())?;
    let points = run_sweep(&data, &base, &sizes, &feature_sets, real_count, seed)?;

    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        match p.pcc {
            Some(pcc) => rows.push(SweepRow {
                aug_size: p.size,
                feature_set: p.feature_set.as_str().to_string(),
                pcc,
            }),
            None => {
                return Err(Error::ConstantVector(format!(
                    "sweep point size={} feature_set={} produced a degenerate model: {}",
                    p.size,
                    p.feature_set.as_str(),
                    p.note.as_deref().unwrap_or("constant predictions")
                ))
                .into())
            }
        }
    }
    write_sweep_csv(&out_csv, &rows)?;

    let paths = CorpusPaths::under(&corpus);
    write_run_manifest(
        &out_csv,
        &RunManifest {
            command: "sweep".into(),
            args: BTreeMap::from([
                ("corpus".into(), arg_path(&corpus)),
                ("sizes".into(), json!(sizes)),
                (
                    "feature_sets".into(),
                    json!(feature_sets.iter().map(|f| f.as_str()).collect::<Vec<_>>()),
                ),
                ("real_count".into(), json!(real_count)),
                ("variant".into(), Value::String(variant.as_str().into())),
                ("align_units".into(), Value::String(units.as_str().into())),
                ("out_csv".into(), arg_path(&out_csv)),
            ]),
            seeds: BTreeMap::from([("seed".into(), seed)]),
            inputs: vec![
                hash_input(&paths.phone_map)?,
                hash_input(&paths.lexicon)?,
                hash_input(&paths.pool_manifest)?,
                hash_input(&paths.train_manifest)?,
                hash_input(&paths.test_manifest)?,
                hash_input(&paths.train_labels)?,
                hash_input(&paths.test_labels)?,
            ],
            outputs: vec![hash_input(&out_csv)?],
            details: json!({
                "rows": rows
                    .iter()
                    .map(|r| json!({
                        "aug_size": r.aug_size,
                        "feature_set": r.feature_set,
                        "pcc": r.pcc,
                    }))
                    .collect::<Vec<_>>(),
            }),
        },
    )?;
    println!("sweep: {} points -> {}", rows.len(), out_csv.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_plain_and_suffixed_forms() {
        assert_eq!(parse_count("20000").unwrap(), 20_000);
        assert_eq!(parse_count("20k").unwrap(), 20_000);
        assert_eq!(parse_count("450K").unwrap(), 450_000);
        assert_eq!(parse_count("2m").unwrap(), 2_000_000);
        assert_eq!(parse_count(" 7 ").unwrap(), 7);
        assert!(parse_count("").is_err());
        assert!(parse_count("k").is_err());
        assert!(parse_count("2.5k").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn flags_override_config_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"seed": 7, "n": "3k"}"#).unwrap();
        let file = FileConfig::load(Some(&cfg)).unwrap();
        assert_eq!(opt_u64(Some(9), &file, "seed").unwrap(), Some(9));
        assert_eq!(opt_u64(None, &file, "seed").unwrap(), Some(7));
        assert_eq!(opt_count(&None, &file, "n").unwrap(), Some(3000));
        assert_eq!(
            opt_count(&Some("5".into()), &file, "n").unwrap(),
            Some(5)
        );
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"freq": 1}"#).unwrap();
        let file = FileConfig::load(Some(&cfg)).unwrap();
        let err = file.check_keys(&["seed", "out"]).unwrap_err();
        assert_eq!(err.code(), EXIT_USAGE);
        assert!(err.to_string().contains("freq"), "{err}");
    }

    #[test]
    fn non_object_config_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, "[1, 2]").unwrap();
        let err = FileConfig::load(Some(&cfg)).unwrap_err();
        assert_eq!(err.code(), 3);
    }

    #[test]
    fn run_manifest_sits_next_to_files_and_inside_directories() {
        assert_eq!(
            run_manifest_path(Path::new("/tmp/x/out.gmds")),
            Path::new("/tmp/x/out.gmds.run.json")
        );
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_manifest_path(dir.path()), dir.path().join("run.json"));
    }

    #[test]
    fn lists_split_on_commas_and_json_arrays() {
        assert_eq!(split_list("a, b,c,"), ["a", "b", "c"]);
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"sizes": [100, "2k"]}"#).unwrap();
        let file = FileConfig::load(Some(&cfg)).unwrap();
        assert_eq!(
            file.list_value("sizes").unwrap().unwrap(),
            ["100", "2k"]
        );
    }

    #[test]
    fn usage_errors_exit_2_and_help_exits_0() {
        assert_eq!(main_with_args(["gopmix", "no-such-command"]), EXIT_USAGE);
        assert_eq!(main_with_args(["gopmix", "--help"]), EXIT_OK);
        assert_eq!(main_with_args(["gopmix", "mixup", "--bogus-flag"]), EXIT_USAGE);
    }

    #[test]
    fn missing_required_input_is_a_usage_error() {
        // `mixup` without --pool anywhere: flag-level parse succeeds (all
        // flags optional for config-file merge), merge then reports 2.
        assert_eq!(main_with_args(["gopmix", "mixup"]), EXIT_USAGE);
    }
}
