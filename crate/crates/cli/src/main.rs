use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use lexnorm::baseline::{correct, Dictionary, DEFAULT_ALPHABET};
use lexnorm::bench::{run_bench, BenchConfig};
use lexnorm::bounds::{bounds_report, EdgeModelParams};
use lexnorm::graph::DEFAULT_WARN_BUCKET_SIZE;
use lexnorm::pipeline::{
    component_stats, index_corpus, normalize_corpus, IndexOptions, NormalizeOptions, Tokenizer,
    WhitespaceTokenizer,
};
use lexnorm::{load_index, Error, ErrorKind, InferenceOptions, LshParams};

#[derive(Debug, Parser)]
#[command(name = "lexnorm", version, about = "Unsupervised lexical normalization with repeated MinHash LSH")]
struct Cli {
    /// Worker threads for hashing, counting, normalization and simulation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an index (manifest.json, vocab.tsv, buckets.bin) from a corpus.
    Index(IndexArgs),
    /// Rewrite a corpus onto the representatives of an index.
    Normalize(NormalizeArgs),
    /// Look up words that may not be in the index.
    Infer(InferArgs),
    /// Component size histogram and the largest components of an index.
    Stats(StatsArgs),
    /// Closed-form false positive/negative bounds against a simulated edge model.
    Bounds(BoundsArgs),
    /// Edit-distance spell correction against the word frequencies of an index.
    Baseline(BaselineArgs),
    /// Time indexing and inference over synthetic corpora.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct LshArgs {
    /// Character n-gram lengths, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3, 5, 7])]
    charlens: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    bins: usize,
    #[arg(long, default_value_t = 20)]
    repetitions: usize,
    /// Pruning ratio; edges need weight >= alpha * repetitions.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1 << 32)]
    universe: u64,
    #[arg(long, default_value_t = 1 << 32)]
    folded_universe: u64,
    #[arg(long, default_value_t = (1 << 31) - 1)]
    prime: u64,
}

impl LshArgs {
    fn params(&self) -> LshParams {
        LshParams {
            charlens: self.charlens.clone(),
            num_repetitions: self.repetitions,
            alpha: self.alpha,
            num_bins: self.bins,
            universe_size: self.universe,
            folded_universe_size: self.folded_universe,
            prime: self.prime,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    lsh: LshArgs,
    /// Tokens seen fewer times are not indexed.
    #[arg(long, default_value_t = 1)]
    min_freq: u64,
    #[arg(long)]
    lowercase: bool,
    #[arg(long, default_value_t = DEFAULT_WARN_BUCKET_SIZE)]
    warn_bucket_size: usize,
    /// Timestamp recorded in the manifest; defaults to $SOURCE_DATE_EPOCH, else 0.
    #[arg(long)]
    created_at: Option<u64>,
}

#[derive(Debug, Args)]
struct InferenceFlags {
    /// Accept inference matches with weight >= alpha*T instead of > alpha*T.
    #[arg(long)]
    inference_threshold_inclusive: bool,
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Route tokens missing from the index through inference.
    #[arg(long)]
    infer_unseen: bool,
    #[command(flatten)]
    inference: InferenceFlags,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    index: PathBuf,
    /// File with one query word per line.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceFlags,
    words: Vec<String>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    index: PathBuf,
    /// Number of largest components to list.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long = "p")]
    p: f64,
    #[arg(long = "q")]
    q: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "T", alias = "repetitions", default_value_t = 20)]
    repetitions: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![5, 5])]
    cluster_sizes: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include per-trial event counts in the report.
    #[arg(long)]
    per_trial: bool,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// Index whose word frequencies form the dictionary.
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    max_edits: u8,
    #[arg(long, default_value = DEFAULT_ALPHABET)]
    alphabet: String,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![100_000, 200_000])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20])]
    bench_repetitions: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 4])]
    bench_workers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
    #[command(flatten)]
    lsh: LshArgs,
}

/// Failure with its exit code: 1 validation, 2 I/O, 3 internal.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Io => 2,
            ErrorKind::Internal => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(what: &Path, e: io::Error) -> Failure {
    Failure { code: 2, message: format!("{}: {e}", what.display()) }
}

fn emit(report: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, report)
        .map_err(|e| Failure { code: 2, message: format!("stdout: {e}") })?;
    writeln!(out).map_err(|e| io_failure(Path::new("stdout"), e))
}

/// Echoes the resolved configuration on stderr.
fn echo(config: Value) {
    eprintln!("{}", serde_json::to_string(&config).expect("config serializes"));
}

fn params_json(p: &LshParams) -> Value {
    serde_json::to_value(p).expect("params serialize")
}

fn cmd_index(args: &IndexArgs, workers: usize) -> Result<Value, Failure> {
    let params = args.lsh.params();
    params.validate()?;
    let created_at = match args.created_at {
        Some(t) => t,
        None => std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0),
    };
    echo(json!({
        "command": "index",
        "input": args.input,
        "out": args.out,
        "params": params_json(&params),
        "min_freq": args.min_freq,
        "lowercase": args.lowercase,
        "warn_bucket_size": args.warn_bucket_size,
        "created_at": created_at,
        "workers": workers,
    }));
    let opts = IndexOptions {
        lowercase: args.lowercase,
        min_freq: args.min_freq,
        workers,
        warn_bucket_size: args.warn_bucket_size,
        created_at,
    };
    let stats = index_corpus(&args.input, params, &args.out, &opts)?;
    info!("indexed {} words into {} components", stats.indexed_words, stats.components);
    Ok(serde_json::to_value(stats).expect("stats serialize"))
}

fn cmd_normalize(args: &NormalizeArgs, workers: usize) -> Result<Value, Failure> {
    echo(json!({
        "command": "normalize",
        "index": args.index,
        "input": args.input,
        "output": args.output,
        "infer_unseen": args.infer_unseen,
        "inference_threshold_inclusive": args.inference.inference_threshold_inclusive,
        "workers": workers,
    }));
    let opts = NormalizeOptions {
        infer_unseen: args.infer_unseen,
        inference: InferenceOptions { inclusive: args.inference.inference_threshold_inclusive },
        workers,
    };
    let summary = normalize_corpus(&args.input, &args.index, &args.output, &opts)?;
    Ok(serde_json::to_value(summary).expect("summary serializes"))
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| io_failure(path, e)))
        .collect()
}

fn cmd_infer(args: &InferArgs, workers: usize) -> Result<Value, Failure> {
    let mut words = args.words.clone();
    if let Some(path) = &args.input {
        words.extend(read_lines(path)?.into_iter().map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()));
    }
    echo(json!({
        "command": "infer",
        "index": args.index,
        "input": args.input,
        "words": words.len(),
        "inference_threshold_inclusive": args.inference.inference_threshold_inclusive,
        "workers": workers,
    }));
    let index = load_index(&args.index)?;
    let opts = InferenceOptions { inclusive: args.inference.inference_threshold_inclusive };
    let results = lexnorm::infer_batch(&words, &index, &opts, workers)?;
    let rows: Vec<Value> = words
        .iter()
        .zip(results)
        .map(|(w, m)| {
            let found = m.map(|m| {
                json!({
                    "matched": index.words.token(m.word),
                    "weight": m.weight,
                    "representative": index.words.token(m.representative),
                })
            });
            json!({ "word": w, "match": found })
        })
        .collect();
    Ok(json!({ "results": rows, "threshold": index.manifest.params.threshold() }))
}

fn cmd_stats(args: &StatsArgs) -> Result<Value, Failure> {
    echo(json!({ "command": "stats", "index": args.index, "top_k": args.top_k }));
    let report = component_stats(&args.index, args.top_k)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn cmd_bounds(args: &BoundsArgs, workers: usize) -> Result<Value, Failure> {
    let params = EdgeModelParams {
        p: args.p,
        q: args.q,
        cluster_sizes: args.cluster_sizes.clone(),
        repetitions: args.repetitions,
        alpha: args.alpha,
        trials: args.trials,
        seed: args.seed,
    };
    echo(json!({ "command": "bounds", "model": params, "per_trial": args.per_trial, "workers": workers }));
    let report = bounds_report(&params, workers, args.per_trial)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn cmd_baseline(args: &BaselineArgs) -> Result<Value, Failure> {
    echo(json!({
        "command": "baseline",
        "index": args.index,
        "input": args.input,
        "output": args.output,
        "max_edits": args.max_edits,
        "alphabet": args.alphabet,
    }));
    let index = load_index(&args.index)?;
    let dict = Dictionary::new(index.words.iter().map(|(_, t, f)| (t.to_owned(), f)))?;
    let alphabet: Vec<char> = args.alphabet.chars().collect();
    let lowercase = index.manifest.lowercase;

    let input = File::open(&args.input).map_err(|e| io_failure(&args.input, e))?;
    let output = File::create(&args.output).map_err(|e| io_failure(&args.output, e))?;
    let mut reader = BufReader::new(input);
    let mut writer = BufWriter::new(output);
    let (mut tokens, mut corrected) = (0u64, 0u64);
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| io_failure(&args.input, e))? == 0 {
            break;
        }
        line_no += 1;
        let spans = WhitespaceTokenizer
            .spans(&line)
            .map_err(|c| Error::ControlCharacter { line: line_no, code: c as u32 })?;
        let mut last = 0;
        let mut out = String::with_capacity(line.len());
        for span in spans {
            out.push_str(&line[last..span.start]);
            let original = &line[span.clone()];
            let key = if lowercase { original.to_lowercase() } else { original.to_owned() };
            let fixed = correct(&key, &dict, args.max_edits, &alphabet);
            tokens += 1;
            if fixed != original {
                corrected += 1;
            }
            out.push_str(&fixed);
            last = span.end;
        }
        out.push_str(&line[last..]);
        writer.write_all(out.as_bytes()).map_err(|e| io_failure(&args.output, e))?;
    }
    writer.flush().map_err(|e| io_failure(&args.output, e))?;
    Ok(json!({ "lines": line_no, "tokens": tokens, "corrected": corrected, "unchanged": tokens - corrected }))
}

fn cmd_bench(args: &BenchArgs) -> Result<Value, Failure> {
    let params = args.lsh.params();
    params.validate()?;
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        repetitions: args.bench_repetitions.clone(),
        workers: args.bench_workers.clone(),
        rounds: args.rounds,
        inference_queries: args.queries,
        seed: args.lsh.seed,
        params,
    };
    echo(json!({ "command": "bench", "config": cfg }));
    let report = run_bench(&cfg)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

fn run(cli: &Cli) -> Result<Value, Failure> {
    match &cli.command {
        Command::Index(a) => cmd_index(a, cli.workers),
        Command::Normalize(a) => cmd_normalize(a, cli.workers),
        Command::Infer(a) => cmd_infer(a, cli.workers),
        Command::Stats(a) => cmd_stats(a),
        Command::Bounds(a) => cmd_bounds(a, cli.workers),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if cli.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(1);
    }
    match run(&cli).and_then(|report| emit(&report)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
