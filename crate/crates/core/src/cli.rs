//! Command-line front end. Exit status: 0 success, 1 data error, 2 usage
//! error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::corpus_gen::{generate_corpus, generate_splits, GenConfig, GenError, Splits, SPLIT_FILES};
use crate::experiments::{compare_transforms, compare_weights, RunConfig};
use crate::metrics::{corpus_report_with, MetricsError};
use crate::model::{load_checkpoint, CheckpointError};
use crate::trainer::{predict_all, train, TrainData, TrainError};
use crate::transforms::TransformMode;
use crate::treebank::{
    disfluency_word_positions, parse_bracketed, read_trees, serialize, trees_to_string, Preprocess,
    Token, Tree, TreebankError, EDITED_LABELS, EIP_LABELS, INTJ, PRN,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError {
    let path = path.to_path_buf();
    move |source| CliError::Io { path, source }
}

#[derive(Debug, Parser)]
#[command(
    name = "jointparse",
    version,
    about = "Joint constituency parsing and disfluency detection"
)]
pub struct Cli {
    /// Log progress (training evaluations, warnings) to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic disfluent treebank (train/dev/test + manifest).
    GenCorpus(GenCorpusArgs),
    /// Rewrite trees into another disfluency encoding.
    Transform(TransformArgs),
    /// Train a parser; writes log.jsonl, step-N.bin and best.bin.
    Train(TrainArgs),
    /// Parse sentences with a trained checkpoint.
    Parse(ParseArgs),
    /// Score predicted trees against gold trees.
    Eval(EvalArgs),
    /// Train with label weights (1, 1) and (2, 0.7) and compare.
    CompareWeights(CompareArgs),
    /// Train on several tree encodings over several seeds and compare F(W_E).
    CompareTransforms(CompareTransformsArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Generator config JSON; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// baseline, posdisfl, nosyntax, posdisfl-nosyntax, topdisfl or topdisfl-nosyntax.
    #[arg(long)]
    pub mode: TransformMode,
    /// Bracketed trees.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Run config JSON with optional `model`, `train`, `preprocess` and
    /// `transform` sections; desk-scale defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Whitespace-separated `word/POS` tokens.
    Tagged,
    /// Whitespace-separated words; tags are ignored by the model.
    Raw,
    /// One bracketed tree per line; its leaves are parsed.
    Tree,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One sentence per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "tagged")]
    pub format: InputFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write per-token E/I/P/O disfluency tags (`word/TAG`).
    #[arg(long)]
    pub words_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpanLabels {
    /// The S_E row counts EDITED spans.
    Edited,
    /// The S_E row counts EDITED, INTJ and PRN spans.
    Eip,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long, value_enum, default_value = "edited")]
    pub labels: SpanLabels,
    /// Remove punctuation and partial words from both sides first.
    #[arg(long)]
    pub preprocess: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory with train.trees, dev.trees and test.trees; generated
    /// from --gen-config when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub gen_config: Option<PathBuf>,
    /// Run config JSON (see `train`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for reports and per-run artifacts.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareTransformsArgs {
    #[command(flatten)]
    pub common: CompareArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "baseline,posdisfl,nosyntax")]
    pub modes: Vec<TransformMode>,
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config {
                path: p.to_path_buf(),
                message: e.to_string(),
            })
        }
    }
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn gen_corpus(a: &GenCorpusArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config: GenConfig = read_json(a.config.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let m = generate_corpus(&config, &a.out)?;
    for (split, n) in &m.counts {
        writeln!(out, "{split}: {n} sentences, {} with EDITED", m.disfluent[split])
            .map_err(io_err(Path::new("<stdout>")))?;
    }
    Ok(())
}

fn transform(a: &TransformArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let trees = read_trees(&a.input)?;
    let result: Vec<Tree> = trees.iter().map(|t| a.mode.apply(t)).collect();
    write_output(a.output.as_deref(), &trees_to_string(&result), out)
}

fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let run: RunConfig = read_json(a.config.as_deref())?;
    let train_set = run.prepare(&read_trees(&a.train)?);
    let dev = run.prepare(&read_trees(&a.dev)?);
    let mut tc = run.train.clone();
    tc.out_dir = Some(a.out.clone());
    let data = TrainData {
        train: &train_set,
        dev: &dev,
        transform: run.transform,
        preprocess: run.preprocess.clone(),
    };
    let started = Instant::now();
    let outcome = train(&data, &run.model, &tc)?;
    let cfg_path = a.out.join("run_config.json");
    let json = serde_json::to_string_pretty(&run).expect("config serializes") + "\n";
    fs::write(&cfg_path, json).map_err(io_err(&cfg_path))?;
    let best = outcome.log.iter().find(|r| r.step == outcome.best_step);
    let stdout = Path::new("<stdout>");
    writeln!(
        out,
        "trained {} steps in {:.1}s; best step {}",
        outcome.log.last().map_or(0, |r| r.step),
        started.elapsed().as_secs_f64(),
        outcome.best_step
    )
    .map_err(io_err(stdout))?;
    if let Some(r) = best {
        writeln!(
            out,
            "dev F(S) {:.4}  F(S_E) {:.4}  F(W_E) {:.4}  F(W_EIP) {:.4}",
            r.f_s, r.f_se, r.f_we, r.f_weip
        )
        .map_err(io_err(stdout))?;
    }
    Ok(())
}

/// Tokens of one input line, or `None` for a blank line.
fn line_tokens(line: &str, format: InputFormat, path: &Path, lineno: usize) -> Result<Option<Vec<Token>>, CliError> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let bad = |message: String| CliError::Input {
        path: path.to_path_buf(),
        line: lineno,
        message,
    };
    let toks = match format {
        InputFormat::Raw => line.split_whitespace().map(|w| Token::new(w, "X")).collect(),
        InputFormat::Tagged => line
            .split_whitespace()
            .map(|t| match t.rsplit_once('/') {
                Some((w, p)) if !w.is_empty() && !p.is_empty() => Ok(Token::new(w, p)),
                _ => Err(bad(format!("token {t:?} is not of the form word/POS"))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        InputFormat::Tree => parse_bracketed(line).map_err(|e| bad(e.to_string()))?.fringe(),
    };
    Ok(Some(toks))
}

fn keep_token(p: &Preprocess, t: &Token) -> bool {
    !(p.drop_punct && p.punct_tags.contains(&t.pos)
        || p.drop_partial && Preprocess::is_partial(&t.pos, &t.word))
}

/// E, I, P or O for every leaf; EDITED wins over INTJ, INTJ over PRN.
pub fn word_tags(tree: &Tree) -> Vec<(String, char)> {
    let e = disfluency_word_positions(tree, EDITED_LABELS);
    let i = disfluency_word_positions(tree, &[INTJ]);
    let p = disfluency_word_positions(tree, &[PRN]);
    tree.words()
        .into_iter()
        .enumerate()
        .map(|(k, w)| {
            let tag = if e.contains(&k) {
                'E'
            } else if i.contains(&k) {
                'I'
            } else if p.contains(&k) {
                'P'
            } else {
                'O'
            };
            (w, tag)
        })
        .collect()
}

fn parse_cmd(a: &ParseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let h = &ckpt.header;
    let text = fs::read_to_string(&a.input).map_err(io_err(&a.input))?;
    let mut sentences = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let toks = line_tokens(line, a.format, &a.input, k + 1)?.unwrap_or_default();
        sentences.push(toks.into_iter().filter(|t| keep_token(&h.preprocess, t)).collect::<Vec<_>>());
    }
    let nonempty: Vec<Vec<Token>> = sentences.iter().filter(|s| !s.is_empty()).cloned().collect();
    let mut parsed = predict_all(&ckpt.params, &h.config, &h.vocab, &h.labels, &nonempty)?.into_iter();
    let mut trees_out = String::new();
    let mut tags_out = String::new();
    let mut skipped = 0;
    for s in &sentences {
        let tree = if s.is_empty() { None } else { parsed.next().expect("one result per sentence") };
        match tree {
            Some(t) => {
                trees_out.push_str(&serialize(&t));
                let tags: Vec<String> = word_tags(&t).into_iter().map(|(w, c)| format!("{w}/{c}")).collect();
                tags_out.push_str(&tags.join(" "));
            }
            None if !s.is_empty() => skipped += 1,
            None => {}
        }
        trees_out.push('\n');
        tags_out.push('\n');
    }
    if skipped > 0 {
        eprintln!(
            "warning: skipped {skipped} sentences longer than {} words (empty output lines)",
            h.config.max_len
        );
    }
    write_output(a.output.as_deref(), &trees_out, out)?;
    if let Some(p) = &a.words_out {
        fs::write(p, tags_out).map_err(io_err(p))?;
    }
    Ok(())
}

fn eval_cmd(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut gold = read_trees(&a.gold)?;
    let mut pred = read_trees(&a.pred)?;
    if a.preprocess {
        let p = Preprocess::default();
        gold = p.apply_corpus(&gold);
        pred = p.apply_corpus(&pred);
    }
    let labels: &[&str] = match a.labels {
        SpanLabels::Edited => EDITED_LABELS,
        SpanLabels::Eip => EIP_LABELS,
    };
    let report = corpus_report_with(&gold, &pred, labels)?;
    let text = if a.json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        report.to_string()
    };
    write_output(None, &text, out)
}

fn load_splits(a: &CompareArgs) -> Result<Splits, CliError> {
    match &a.corpus {
        Some(dir) => {
            let read = |name: &str| -> Result<Vec<Tree>, CliError> {
                let file = SPLIT_FILES.iter().find(|(n, _)| *n == name).unwrap().1;
                Ok(read_trees(dir.join(file))?)
            };
            Ok(Splits {
                train: read("train")?,
                dev: read("dev")?,
                test: read("test")?,
            })
        }
        None => {
            let g: GenConfig = read_json(a.gen_config.as_deref())?;
            Ok(generate_splits(&g)?)
        }
    }
}

fn compare_weights_cmd(a: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let splits = load_splits(a)?;
    let run: RunConfig = read_json(a.config.as_deref())?;
    let report = compare_weights(&splits, &run, Some(&a.out))?;
    write_output(None, &report.to_string(), out)
}

fn compare_transforms_cmd(a: &CompareTransformsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let splits = load_splits(&a.common)?;
    let run: RunConfig = read_json(a.common.config.as_deref())?;
    let report = compare_transforms(&splits, &run, &a.modes, &a.seeds, Some(&a.common.out))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_output(None, &report.to_string(), out)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a, out),
        Command::Transform(a) => transform(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Parse(a) => parse_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::CompareWeights(a) => compare_weights_cmd(a, out),
        Command::CompareTransforms(a) => compare_transforms_cmd(a, out),
    }
}

/// Parses the process arguments and runs; returns the exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            // Some clap errors (bad values) omit the usage line.
            if !e.to_string().contains("Usage:") {
                use clap::CommandFactory;
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return 2;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
