//! Command-line front end.
//!
//! Every command writes only under its output directory (or to stdout) and
//! never modifies its inputs. `decompose` and `compose` finish by writing
//! `manifest.json`: the configuration, the tool version and SHA-256 digests
//! of every input and output file. Outputs contain no timestamps, so a rerun
//! with the same inputs and flags reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compose::{CompositionSpec, ScoreFactors};
use crate::embedding::{align_vocabularies, EmbeddingMatrix};
use crate::error::{JiveError, Result};
use crate::eval::{load_corpus, train_and_evaluate, Split, TrainConfig};
use crate::jive::{jive_fit, JiveConfig, JiveResult};
use crate::rank::{
    estimate_signal_rank, joint_basis_estimate, select_individual_ranks, select_joint_rank,
    IndividualRankPolicy, JointRankOptions, RankDecision, SignalRankPolicy, ThresholdMode,
};
use crate::report::{make_variance_report, ReportFormat, VarianceReport};
use crate::text::{parse_embedding, write_embedding, TextFormat};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const FACTOR_FORMAT: TextFormat = TextFormat::GloveText;

#[derive(Debug, Parser)]
#[command(
    name = "jive",
    version,
    about = "Joint and individual decomposition of word embeddings"
)]
pub struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the decomposition and write factors, reports and a manifest.
    Decompose(DecomposeArgs),
    /// Select ranks without fitting and print the decision as JSON.
    Ranks(RanksArgs),
    /// Build composed embeddings from a fitted model directory.
    Compose(ComposeArgs),
    /// Train and evaluate a linear classifier on each embedding.
    Eval(EvalArgs),
    /// Print the variance report of a fitted model directory.
    Report(ReportArgs),
}

/// A rank that is either given or selected from the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankArg {
    Auto,
    Fixed(usize),
}

/// A per-block list of ranks, or automatic selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankListArg {
    Auto,
    Fixed(Vec<usize>),
}

impl FromStr for RankArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "auto" => Ok(RankArg::Auto),
            t => t
                .parse()
                .map(RankArg::Fixed)
                .map_err(|_| format!("expected a non-negative integer or \"auto\", got {s:?}")),
        }
    }
}

impl FromStr for RankListArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "auto" => Ok(RankListArg::Auto),
            t => t
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(RankListArg::Fixed)
                .map_err(|_| {
                    format!("expected a comma-separated list of integers or \"auto\", got {s:?}")
                }),
        }
    }
}

impl fmt::Display for RankArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankArg::Auto => f.write_str("auto"),
            RankArg::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl fmt::Display for RankListArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankListArg::Auto => f.write_str("auto"),
            RankListArg::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(usize::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

/// An embedding file with an optional `:format` suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputArg {
    pub path: PathBuf,
    pub format: TextFormat,
}

impl FromStr for InputArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some((path, suffix)) = s.rsplit_once(':') {
            if let Ok(format) = suffix.parse::<TextFormat>() {
                return Ok(InputArg {
                    path: path.into(),
                    format,
                });
            }
        }
        Ok(InputArg {
            path: s.into(),
            format: TextFormat::Auto,
        })
    }
}

impl fmt::Display for InputArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.path.display(), self.format)
    }
}

fn parse_from_string<T: FromStr<Err = String>>(value: serde_json::Value) -> Result<T> {
    let text = match value {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        serde_json::Value::Array(items) => items
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
        other => other.to_string(),
    };
    text.parse().map_err(JiveError::Argument)
}

/// Settings shared by `decompose` and `ranks`. Every field may also come
/// from a JSON config file; flags take precedence.
#[derive(Debug, Clone, Default, Args)]
struct RankFlags {
    /// Embedding file, optionally suffixed with :glove-text, :word2vec-text
    /// or :auto (repeat for each block).
    #[arg(long = "input", value_name = "PATH[:FORMAT]")]
    inputs: Vec<InputArg>,

    /// Signal rank per block: comma-separated list or "auto".
    #[arg(long, value_name = "LIST|auto")]
    signal_ranks: Option<RankListArg>,

    /// Energy fraction used by the automatic signal and individual ranks.
    #[arg(long, value_name = "F")]
    energy: Option<f64>,

    /// Seed for the resampled rank threshold.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of resamples for the rank threshold.
    #[arg(long)]
    resamples: Option<usize>,

    /// Upper quantile of the resampled statistics.
    #[arg(long)]
    quantile: Option<f64>,

    /// Use only the random-subspace null for the joint-rank threshold.
    #[arg(long)]
    null_only: bool,

    /// JSON file with any of the flag values; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[command(flatten)]
    common: RankFlags,

    /// Joint rank, or "auto".
    #[arg(long, value_name = "N|auto")]
    joint_rank: Option<RankArg>,

    /// Individual ranks: comma-separated list, or "auto".
    #[arg(long, value_name = "LIST|auto")]
    individual_ranks: Option<RankListArg>,

    /// Relative-decrease tolerance of the fit.
    #[arg(long)]
    epsilon: Option<f64>,

    #[arg(long)]
    max_iter: Option<usize>,

    /// Fit without the joint/individual orthogonality constraint.
    #[arg(long)]
    no_orthogonality: bool,

    /// Compositions to write after fitting (comma-separated names or "all").
    #[arg(long, value_name = "NAMES")]
    compositions: Option<String>,

    /// Labeled training corpus (label<TAB>text) for evaluating compositions.
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,

    /// Labeled test corpus.
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,

    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RanksArgs {
    #[command(flatten)]
    common: RankFlags,

    /// Also write the decision to this file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// Directory written by `decompose`.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,

    /// Comma-separated composition names, or "all".
    #[arg(long, value_name = "NAMES", default_value = "all")]
    compositions: String,

    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Output format of the composed embeddings.
    #[arg(long, default_value = "glove-text")]
    format: TextFormat,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Embedding to evaluate, optionally with a :format suffix (repeatable).
    #[arg(long = "embedding", value_name = "PATH[:FORMAT]", required = true)]
    embeddings: Vec<InputArg>,

    #[arg(long, value_name = "FILE")]
    train: PathBuf,

    #[arg(long, value_name = "FILE")]
    test: PathBuf,

    #[arg(long, default_value_t = 50)]
    epochs: usize,

    #[arg(long, default_value_t = 0.1)]
    lr: f64,

    #[arg(long, default_value_t = 1e-4)]
    l2: f64,

    #[arg(long, default_value_t = 64)]
    batch: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Append result rows to this file instead of printing them.
    #[arg(long, value_name = "FILE")]
    results: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory written by `decompose`.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,

    /// text, tsv or json.
    #[arg(long, default_value = "text")]
    format: String,
}

/// Values accepted in a `--config` JSON file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    inputs: Option<Vec<String>>,
    joint_rank: Option<serde_json::Value>,
    individual_ranks: Option<serde_json::Value>,
    signal_ranks: Option<serde_json::Value>,
    energy: Option<f64>,
    epsilon: Option<f64>,
    max_iter: Option<usize>,
    seed: Option<u64>,
    resamples: Option<usize>,
    quantile: Option<f64>,
    null_only: Option<bool>,
    enforce_orthogonality: Option<bool>,
    compositions: Option<String>,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| JiveError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| JiveError::Argument(format!("{}: {e}", path.display())))
}

/// Fully resolved settings of a run, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub inputs: Vec<String>,
    pub joint_rank: String,
    pub individual_ranks: String,
    pub signal_ranks: String,
    pub energy: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub enforce_orthogonality: bool,
    pub seed: u64,
    pub resamples: usize,
    pub quantile: f64,
    pub threshold_mode: ThresholdMode,
    pub compositions: Option<String>,
    pub train: Option<String>,
    pub test: Option<String>,
}

struct RankSettings {
    inputs: Vec<InputArg>,
    signal: RankListArg,
    energy: f64,
    options: JointRankOptions,
}

fn resolve_rank_flags(flags: &RankFlags, file: &ConfigFile) -> Result<RankSettings> {
    let inputs = if !flags.inputs.is_empty() {
        flags.inputs.clone()
    } else {
        file.inputs
            .iter()
            .flatten()
            .map(|s| s.parse().map_err(JiveError::Argument))
            .collect::<Result<_>>()?
    };
    if inputs.len() < 2 {
        return Err(JiveError::arg(format!(
            "at least 2 --input embeddings are required, got {}",
            inputs.len()
        )));
    }
    let signal = match (&flags.signal_ranks, &file.signal_ranks) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => parse_from_string(v.clone())?,
        (None, None) => RankListArg::Auto,
    };
    let energy = flags.energy.or(file.energy).unwrap_or(0.95);
    let null_only = flags.null_only || file.null_only.unwrap_or(false);
    let mut options = JointRankOptions::new(flags.seed.or(file.seed).unwrap_or(0));
    options.resamples = flags
        .resamples
        .or(file.resamples)
        .unwrap_or(options.resamples);
    options.quantile = flags.quantile.or(file.quantile).unwrap_or(options.quantile);
    if null_only {
        options.mode = ThresholdMode::NullOnly;
    }
    Ok(RankSettings {
        inputs,
        signal,
        energy,
        options,
    })
}

/// Loads, aligns and preprocesses the input embeddings.
fn load_blocks(inputs: &[InputArg]) -> Result<Vec<EmbeddingMatrix>> {
    let raw = inputs
        .iter()
        .map(|i| parse_embedding(&i.path, i.format))
        .collect::<Result<Vec<_>>>()?;
    let (aligned, report) = align_vocabularies(&raw)?;
    for (e, dropped) in raw.iter().zip(&report.dropped_per_source) {
        log::info!("{}: {} words, {dropped} not shared", e.name(), e.len());
    }
    log::info!("{} shared words", report.n_shared);
    aligned.iter().map(EmbeddingMatrix::preprocess).collect()
}

fn block_data(blocks: &[EmbeddingMatrix]) -> Vec<DMatrix<f64>> {
    blocks.iter().map(|b| b.data().clone()).collect()
}

fn signal_ranks(data: &[DMatrix<f64>], setting: &RankListArg, energy: f64) -> Result<Vec<usize>> {
    match setting {
        RankListArg::Fixed(v) if v.len() != data.len() => Err(JiveError::arg(format!(
            "{} signal ranks given for {} inputs",
            v.len(),
            data.len()
        ))),
        RankListArg::Fixed(v) => Ok(v.clone()),
        RankListArg::Auto => data
            .iter()
            .map(|x| estimate_signal_rank(x, SignalRankPolicy::Energy(energy)))
            .collect(),
    }
}

fn decide_ranks(
    data: &[DMatrix<f64>],
    settings: &RankSettings,
    joint: &RankArg,
    individual: &RankListArg,
) -> Result<(usize, Vec<usize>, Option<RankDecision>)> {
    let max_joint = data
        .iter()
        .map(|x| x.nrows().min(x.ncols()))
        .min()
        .unwrap_or(0);
    if let RankArg::Fixed(r) = joint {
        if *r > max_joint {
            return Err(JiveError::arg(format!(
                "joint rank {r} exceeds the smallest min(p, n) = {max_joint}"
            )));
        }
    }
    if let (RankArg::Fixed(r), RankListArg::Fixed(v)) = (joint, individual) {
        if v.len() != data.len() {
            return Err(JiveError::arg(format!(
                "{} individual ranks given for {} inputs",
                v.len(),
                data.len()
            )));
        }
        return Ok((*r, v.clone(), None));
    }

    let t = signal_ranks(data, &settings.signal, settings.energy)?;
    let mut decision = None;
    let r = match joint {
        RankArg::Fixed(r) => *r,
        RankArg::Auto => {
            let d = select_joint_rank(data, &t, &settings.options)?;
            let r = d.joint_rank;
            decision = Some(d);
            r
        }
    };
    let individual = match individual {
        RankListArg::Fixed(v) if v.len() != data.len() => {
            return Err(JiveError::arg(format!(
                "{} individual ranks given for {} inputs",
                v.len(),
                data.len()
            )));
        }
        RankListArg::Fixed(v) => v.clone(),
        RankListArg::Auto => {
            let basis = joint_basis_estimate(data, &t, r)?;
            select_individual_ranks(data, &basis, &IndividualRankPolicy::Energy(settings.energy))?
        }
    };
    if let Some(d) = decision.as_mut() {
        d.individual_ranks = individual.clone();
    }
    Ok((r, individual, decision))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn file_digest(path: &Path) -> Result<String> {
    fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| JiveError::io(path, e))
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    /// Input path (as given) to SHA-256 of its contents.
    inputs: BTreeMap<String, String>,
    /// Output file (relative to the output directory) to SHA-256.
    outputs: BTreeMap<String, String>,
}

/// Collects written files so that the manifest can digest them.
struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    protected: Vec<PathBuf>,
}

impl OutputDir {
    fn create(root: &Path, inputs: &[&Path]) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| JiveError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
            protected: inputs
                .iter()
                .filter_map(|p| fs::canonicalize(p).ok())
                .collect(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Ok(canonical) = fs::canonicalize(&path) {
            if self.protected.contains(&canonical) {
                return Err(JiveError::arg(format!(
                    "refusing to overwrite input file {}",
                    path.display()
                )));
            }
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| JiveError::io(parent, e))?;
        }
        self.written.push(name.to_string());
        Ok(path)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name)?;
        fs::write(&path, contents).map_err(|e| JiveError::io(&path, e))
    }

    fn finish<C: Serialize>(
        mut self,
        command: &'static str,
        config: &C,
        inputs: &[&Path],
    ) -> Result<()> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            digests.insert(p.display().to_string(), file_digest(p)?);
        }
        let mut outputs = BTreeMap::new();
        self.written.sort();
        self.written.dedup();
        for name in &self.written {
            outputs.insert(name.clone(), file_digest(&self.root.join(name))?);
        }
        let manifest = Manifest {
            tool: "jive",
            version: VERSION,
            command,
            config,
            inputs: digests,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| JiveError::io(&path, e))
    }
}

/// Sidecar describing the factor files of a fitted model, so that
/// `compose` and `report` can run as separate invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub blocks: Vec<BlockInfo>,
    pub vocab_size: usize,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub joint_file: Option<String>,
    pub individual_files: Vec<Option<String>>,
    pub joint_singular_values: Vec<f64>,
    pub individual_singular_values: Vec<Vec<f64>>,
    /// How factor files are scaled.
    pub score_scaling: String,
    pub factor_format: TextFormat,
    pub config: JiveConfig,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub dim: usize,
    pub source: String,
}

fn score_embedding(
    name: &str,
    vocab: &[String],
    scores: DMatrix<f64>,
) -> Result<Option<EmbeddingMatrix>> {
    if scores.nrows() == 0 {
        return Ok(None);
    }
    EmbeddingMatrix::new(name, vocab.to_vec(), scores).map(Some)
}

fn parse_compositions(names: &str, n_blocks: usize) -> Result<Vec<CompositionSpec>> {
    if names.trim() == "all" {
        return Ok(CompositionSpec::all(n_blocks));
    }
    names
        .split(',')
        .map(|n| CompositionSpec::parse(n.trim(), n_blocks))
        .collect()
}

fn write_factors(
    out: &mut OutputDir,
    result: &JiveResult,
    blocks: &[EmbeddingMatrix],
    inputs: &[InputArg],
) -> Result<ModelFile> {
    let vocab = blocks[0].vocab();
    let mut joint_file = None;
    if let Some(e) = score_embedding("joint", vocab, result.joint_scores())? {
        let name = "joint.txt".to_string();
        write_embedding(&e, out.path(&name)?, FACTOR_FORMAT)?;
        joint_file = Some(name);
    }
    let mut individual_files = Vec::new();
    for i in 0..result.n_blocks() {
        let file = match score_embedding(&format!("ind{i}"), vocab, result.individual_scores(i))? {
            Some(e) => {
                let name = format!("ind_{i}.txt");
                write_embedding(&e, out.path(&name)?, FACTOR_FORMAT)?;
                Some(name)
            }
            None => None,
        };
        individual_files.push(file);
    }
    Ok(ModelFile {
        version: VERSION.to_string(),
        blocks: blocks
            .iter()
            .zip(inputs)
            .map(|(b, i)| BlockInfo {
                name: b.name().to_string(),
                dim: b.dim(),
                source: i.path.display().to_string(),
            })
            .collect(),
        vocab_size: vocab.len(),
        joint_rank: result.joint_rank(),
        individual_ranks: result.individual_ranks(),
        joint_file,
        individual_files,
        joint_singular_values: result.joint.s.iter().copied().collect(),
        individual_singular_values: result
            .individual
            .iter()
            .map(|f| f.s.iter().copied().collect())
            .collect(),
        score_scaling: "rows are singular-value scaled scores diag(s)·Vt".to_string(),
        factor_format: FACTOR_FORMAT,
        config: result.config.clone(),
        iterations: result.iterations,
        converged: result.converged,
    })
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let file = read_config(args.common.config.as_deref())?;
    let settings = resolve_rank_flags(&args.common, &file)?;
    let joint_arg = match (&args.joint_rank, &file.joint_rank) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => parse_from_string(v.clone())?,
        (None, None) => RankArg::Auto,
    };
    let individual_arg = match (&args.individual_ranks, &file.individual_ranks) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => parse_from_string(v.clone())?,
        (None, None) => RankListArg::Auto,
    };
    let out_dir = args
        .out_dir
        .clone()
        .or(file.out_dir.clone())
        .ok_or_else(|| JiveError::arg("--out-dir is required"))?;
    let compositions = args.compositions.clone().or(file.compositions.clone());
    let train = args.train.clone().or(file.train.clone());
    let test = args.test.clone().or(file.test.clone());
    if train.is_some() != test.is_some() {
        return Err(JiveError::arg("--train and --test must be given together"));
    }
    let enforce = !args.no_orthogonality && file.enforce_orthogonality.unwrap_or(true);
    let defaults = JiveConfig::new(0, Vec::new());
    let epsilon = args.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon);
    let max_iter = args.max_iter.or(file.max_iter).unwrap_or(defaults.max_iter);

    // Reject an empty model before any expensive work.
    if let (RankArg::Fixed(0), RankListArg::Fixed(v)) = (&joint_arg, &individual_arg) {
        if v.iter().all(|&r| r == 0) {
            return Err(JiveError::arg("empty model: all ranks are zero"));
        }
    }

    let run = RunConfig {
        inputs: settings.inputs.iter().map(InputArg::to_string).collect(),
        joint_rank: joint_arg.to_string(),
        individual_ranks: individual_arg.to_string(),
        signal_ranks: settings.signal.to_string(),
        energy: settings.energy,
        epsilon,
        max_iter,
        enforce_orthogonality: enforce,
        seed: settings.options.seed,
        resamples: settings.options.resamples,
        quantile: settings.options.quantile,
        threshold_mode: settings.options.mode,
        compositions: compositions.clone(),
        train: train.as_ref().map(|p| p.display().to_string()),
        test: test.as_ref().map(|p| p.display().to_string()),
    };

    let blocks = load_blocks(&settings.inputs)?;
    let data = block_data(&blocks);
    let (r, individual, decision) = decide_ranks(&data, &settings, &joint_arg, &individual_arg)?;
    let cfg = JiveConfig::new(r, individual)
        .epsilon(epsilon)
        .max_iter(max_iter)
        .enforce_orthogonality(enforce);
    log::info!(
        "fitting joint rank {r}, individual ranks {:?}",
        cfg.individual_ranks
    );
    let result = jive_fit(&blocks, &cfg)?;
    if !result.converged {
        log::warn!("no convergence after {} iterations", result.iterations);
    }

    let mut input_paths: Vec<&Path> = settings.inputs.iter().map(|i| i.path.as_path()).collect();
    if let (Some(tr), Some(te)) = (&train, &test) {
        input_paths.push(tr);
        input_paths.push(te);
    }
    let mut out = OutputDir::create(&out_dir, &input_paths)?;

    let model = write_factors(&mut out, &result, &blocks, &settings.inputs)?;
    let mut model_text = serde_json::to_string_pretty(&model)?;
    model_text.push('\n');
    out.write("model.json", &model_text)?;

    let mut report = make_variance_report(&result, &blocks).with_seed(settings.options.seed);
    if let Some(d) = &decision {
        report = report.with_threshold(d.threshold);
        let mut text = serde_json::to_string_pretty(d)?;
        text.push('\n');
        out.write("ranks.json", &text)?;
    }
    out.write("report.json", &report.to_json()?)?;
    out.write("report.tsv", &report.to_tsv())?;
    let mut log_text = result
        .diagnostics
        .log_lines(&result.residual_history)
        .join("\n");
    log_text.push('\n');
    out.write("fit.log", &log_text)?;
    eprint!("{report}");

    if let Some(names) = &compositions {
        let specs = parse_compositions(names, blocks.len())?;
        let factors = ScoreFactors::from_result(&result, blocks[0].vocab())?;
        let composed = compose_all(&factors, &specs, &mut out, FACTOR_FORMAT)?;
        if let (Some(tr), Some(te)) = (&train, &test) {
            let train = load_corpus(tr, Split::Train)?;
            let test = load_corpus(te, Split::Test)?;
            let cfg = TrainConfig {
                seed: settings.options.seed,
                ..TrainConfig::default()
            };
            let rows = composed
                .par_iter()
                .map(|e| train_and_evaluate(&train, &test, e, &cfg)?.to_json_line())
                .collect::<Result<Vec<_>>>()?;
            let mut text = rows.join("\n");
            text.push('\n');
            out.write("eval.jsonl", &text)?;
        }
    } else if train.is_some() {
        return Err(JiveError::arg(
            "--train/--test need --compositions to evaluate",
        ));
    }

    out.finish("decompose", &run, &input_paths)
}

/// Composes every requested composition that has a non-zero rank; zero-rank compositions are
/// skipped with a warning when several were requested, and are an error
/// when requested alone.
fn compose_all(
    factors: &ScoreFactors,
    specs: &[CompositionSpec],
    out: &mut OutputDir,
    format: TextFormat,
) -> Result<Vec<EmbeddingMatrix>> {
    let mut composed = Vec::new();
    for spec in specs {
        match factors.compose(spec) {
            Ok(e) => {
                write_embedding(
                    &e,
                    out.path(&format!("composed/{}.txt", spec.name()))?,
                    format,
                )?;
                composed.push(e);
            }
            Err(e) if specs.len() > 1 => log::warn!("skipping {spec}: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(composed)
}

fn load_model(dir: &Path) -> Result<ModelFile> {
    let path = dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(|e| JiveError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_factors(dir: &Path, model: &ModelFile) -> Result<ScoreFactors> {
    let mut vocab: Option<Vec<String>> = None;
    let mut load = |file: &Option<String>, rank: usize| -> Result<Option<DMatrix<f64>>> {
        let Some(name) = file else {
            return Ok(None);
        };
        let e = parse_embedding(dir.join(name), model.factor_format)?;
        if e.dim() != rank {
            return Err(JiveError::Invalid(format!(
                "{name} has {} rows, model.json says {rank}",
                e.dim()
            )));
        }
        match &vocab {
            Some(v) if v.as_slice() != e.vocab() => {
                return Err(JiveError::Invalid(format!(
                    "{name} has a different vocabulary"
                )));
            }
            Some(_) => {}
            None => vocab = Some(e.vocab().to_vec()),
        }
        Ok(Some(e.into_parts().2))
    };
    let joint = load(&model.joint_file, model.joint_rank)?;
    let individual = model
        .individual_files
        .iter()
        .zip(&model.individual_ranks)
        .map(|(f, &r)| load(f, r))
        .collect::<Result<Vec<_>>>()?;
    let vocab = vocab.ok_or_else(|| JiveError::Invalid("model has no factor files".into()))?;
    let n = vocab.len();
    Ok(ScoreFactors {
        joint: joint.unwrap_or_else(|| DMatrix::zeros(0, n)),
        individual: individual
            .into_iter()
            .map(|m| m.unwrap_or_else(|| DMatrix::zeros(0, n)))
            .collect(),
        vocab,
    })
}

#[derive(Debug, Serialize)]
struct ComposeEcho<'a> {
    model: String,
    compositions: &'a str,
    format: TextFormat,
}

fn cmd_compose(args: ComposeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let specs = parse_compositions(&args.compositions, model.blocks.len())?;
    let factors = load_factors(&args.model, &model)?;
    let mut inputs: Vec<PathBuf> = vec![args.model.join("model.json")];
    inputs.extend(model.joint_file.iter().map(|f| args.model.join(f)));
    inputs.extend(
        model
            .individual_files
            .iter()
            .flatten()
            .map(|f| args.model.join(f)),
    );
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut out = OutputDir::create(&args.out_dir, &input_refs)?;
    let composed = compose_all(&factors, &specs, &mut out, args.format)?;
    for e in &composed {
        println!("{}\t{}", e.name(), e.dim());
    }
    let echo = ComposeEcho {
        model: args.model.display().to_string(),
        compositions: &args.compositions,
        format: args.format,
    };
    out.finish("compose", &echo, &input_refs)
}

fn cmd_ranks(args: RanksArgs) -> Result<()> {
    let file = read_config(args.common.config.as_deref())?;
    let settings = resolve_rank_flags(&args.common, &file)?;
    let blocks = load_blocks(&settings.inputs)?;
    let data = block_data(&blocks);
    let (_, _, decision) = decide_ranks(&data, &settings, &RankArg::Auto, &RankListArg::Auto)?;
    let decision = decision.expect("automatic joint rank yields a decision");
    let mut text = serde_json::to_string_pretty(&decision)?;
    text.push('\n');
    if let Some(path) = &args.out {
        fs::write(path, &text).map_err(|e| JiveError::io(path, e))?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        l2: args.l2,
        batch: args.batch,
        seed: args.seed,
    };
    let train = load_corpus(&args.train, Split::Train)?;
    let test = load_corpus(&args.test, Split::Test)?;
    let embeddings = args
        .embeddings
        .iter()
        .map(|i| parse_embedding(&i.path, i.format))
        .collect::<Result<Vec<_>>>()?;
    let rows = embeddings
        .par_iter()
        .map(|e| train_and_evaluate(&train, &test, e, &cfg)?.to_json_line())
        .collect::<Result<Vec<_>>>()?;
    match &args.results {
        Some(path) => {
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| JiveError::io(path, e))?;
            for row in &rows {
                writeln!(f, "{row}").map_err(|e| JiveError::io(path, e))?;
            }
        }
        None => {
            for row in &rows {
                println!("{row}");
            }
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let path = args.model.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| JiveError::io(&path, e))?;
    let report: VarianceReport = serde_json::from_str(&text)?;
    match args.format.as_str() {
        "text" => print!("{report}"),
        other => match other.parse::<ReportFormat>()? {
            ReportFormat::Tsv => print!("{}", report.to_tsv()),
            ReportFormat::Json => print!("{}", report.to_json()?),
        },
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported as one line on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let outcome = match cli.command {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Ranks(a) => cmd_ranks(a),
        Command::Compose(a) => cmd_compose(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
