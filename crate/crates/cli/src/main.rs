use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conjunct_bench::{measure_latency_with, LatencyOptions};
use conjunct_core::corpus::{read_corpus, write_corpus};
use conjunct_core::datagen::{self, GenConfig, Grammar};
use conjunct_core::eval::EvalReport;
use conjunct_core::training::{train_with_callback, TrainConfig};
use conjunct_core::treepattern::{self, Tree};
use conjunct_core::{checkpoint, decode_bio, evaluate, tokenize, ConjunctSpan, Error, LabeledUtterance, Result, Tag};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "conjunct",
    version,
    about = "Conjunct boundary tagging for spoken-language utterances"
)]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled corpus from slot catalogs and carrier phrases.
    Generate(GenerateArgs),
    /// Train a tagger and write its best checkpoint.
    Train(TrainArgs),
    /// Tag utterances with a trained model.
    Tag(TagArgs),
    /// Score a model on a labeled corpus.
    Eval(EvalArgs),
    /// Measure per-utterance inference latency.
    Bench(BenchArgs),
    /// Mine tree patterns from parses with gold conjuncts.
    MinePatterns(MineArgs),
    /// Score the tree-pattern baseline on parses with gold conjuncts.
    EvalTrees(EvalTreesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Records,
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory receiving train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Generation settings (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grammar directory with catalogs/ and carriers/; defaults to the bundled grammar.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Number of utterances over all splits.
    #[arg(long)]
    size: Option<usize>,
    /// Comma-separated training slot types.
    #[arg(long, value_delimiter = ',')]
    slots: Option<Vec<String>>,
    /// Comma-separated slot types for unseen.jsonl.
    #[arg(long, value_delimiter = ',')]
    unseen_slots: Option<Vec<String>>,
    /// Utterances per unseen slot type.
    #[arg(long, default_value_t = 0)]
    unseen_per_slot: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training log (one JSON record per evaluation); stdout if absent.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Worker threads; 1 gives the single-threaded mode.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    /// File with one utterance per line; `-` reads stdin.
    #[arg(long, conflicts_with = "text")]
    input: Option<PathBuf>,
    /// Include the probability of each predicted tag.
    #[arg(long)]
    scores: bool,
    /// Utterance to tag.
    text: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    by_slot: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Timed calls per utterance (median kept).
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    trees: PathBuf,
    /// Corpus aligned line by line with the trees.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_support: usize,
}

#[derive(Args)]
struct EvalTreesArgs {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    by_slot: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) => 2,
        Error::Training { .. } => 4,
        _ => 3,
    }
}

fn header(command: &str, seed: u64) {
    eprintln!("{}", json!({ "command": command, "seed": seed }));
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn generate(args: GenerateArgs, seed: Option<u64>) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            toml::from_str::<GenConfig>(&text).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?
        }
        None => GenConfig::default(),
    };
    if let Some(size) = args.size {
        config.corpus_size = size;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    header("generate", config.seed);
    let grammar = match &args.grammar {
        Some(dir) => Grammar::load(dir)?,
        None => Grammar::bundled(),
    };
    let slots = args
        .slots
        .unwrap_or_else(|| datagen::IN_DOMAIN_SLOTS.iter().map(|s| s.to_string()).collect());
    let split = datagen::generate_corpus(&grammar.restrict(&slots)?, &config)?;
    create_dir(&args.out_dir)?;
    write_corpus(args.out_dir.join("train.jsonl"), &split.train)?;
    write_corpus(args.out_dir.join("valid.jsonl"), &split.validation)?;
    write_corpus(args.out_dir.join("test.jsonl"), &split.test)?;
    let mut summary = json!({
        "train": split.train.len(),
        "valid": split.validation.len(),
        "test": split.test.len(),
    });
    if args.unseen_per_slot > 0 {
        let unseen_slots = args
            .unseen_slots
            .unwrap_or_else(|| datagen::UNSEEN_SLOTS.iter().map(|s| s.to_string()).collect());
        let unseen =
            datagen::generate_unseen_testset(&grammar.restrict(&unseen_slots)?, &slots, args.unseen_per_slot, &config)?;
        write_corpus(args.out_dir.join("unseen.jsonl"), &unseen)?;
        summary["unseen"] = json!(unseen.len());
    }
    print_json(&summary)
}

fn train(args: TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = threads;
    }
    if let Some(epochs) = args.max_epochs {
        config.max_epochs = epochs;
    }
    config.validate()?;
    header("train", config.seed);
    let train = read_corpus(&args.train)?;
    let valid = read_corpus(&args.valid)?;

    let mut log: Box<dyn Write> = match &args.log {
        Some(path) => Box::new(io::BufWriter::new(fs::File::create(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?)),
        None => Box::new(io::stdout()),
    };
    let mut write_err = None;
    let outcome = train_with_callback(&config, &train, &valid, |record| {
        let line = serde_json::to_string(record).expect("records serialize");
        if let Err(e) = writeln!(log, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    let log_path = args.log.clone().unwrap_or_else(|| PathBuf::from("-"));
    if let Some(e) = write_err {
        return Err(Error::Io {
            path: log_path,
            source: e,
        });
    }
    log.flush().map_err(|e| Error::Io {
        path: log_path,
        source: e,
    })?;
    drop(log);

    let size = checkpoint::save(&outcome.model, &args.out)?;
    let summary = json!({
        "checkpoint": args.out,
        "evaluations": outcome.log.len(),
        "best_valid_accuracy": outcome.best_accuracy,
        "stopped_early": outcome.stopped_early,
        "model_size_bytes": size,
    });
    if args.log.is_some() {
        print_json(&summary)
    } else {
        eprintln!("{summary}");
        Ok(())
    }
}

#[derive(Serialize)]
struct TagOutput {
    tokens: Vec<String>,
    tags: Vec<Tag>,
    slot_type: String,
    spans: Vec<ConjunctSpan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
}

fn tag(args: TagArgs, seed: Option<u64>) -> Result<()> {
    header("tag", seed.unwrap_or(0));
    let model = checkpoint::load(&args.model)?;
    let lines: Vec<String> = match (&args.text, &args.input) {
        (Some(text), _) => vec![text.clone()],
        (None, Some(path)) if path.as_os_str() == "-" => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<_>>()
            .map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?,
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?
            .lines()
            .map(String::from)
            .collect(),
        (None, None) => return Err(Error::Argument("give an utterance or --input".into())),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in lines {
        if args.input.is_some() && line.trim().is_empty() {
            continue;
        }
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            return Err(Error::Argument("empty utterance".into()));
        }
        let (tags, scores) = if args.scores {
            let (tags, scores) = model.predict_with_scores(&tokens)?;
            (tags, Some(scores))
        } else {
            (model.predict(&tokens)?, None)
        };
        let record = TagOutput {
            spans: decode_bio(&tags),
            tokens,
            tags,
            slot_type: String::new(),
            scores,
        };
        writeln!(out, "{}", serde_json::to_string(&record)?).map_err(|e| Error::Io {
            path: PathBuf::from("-"),
            source: e,
        })?;
    }
    Ok(())
}

fn emit_report(report: &EvalReport, format: Format, by_slot: bool, size: Option<u64>) -> Result<()> {
    match format {
        Format::Table => {
            print!("{}", report.to_table(by_slot));
            if let Some(size) = size {
                println!("model size: {:.2} MB ({size} bytes)", size as f64 / 1e6);
            }
            Ok(())
        }
        Format::Records => {
            let mut value = serde_json::to_value(report)?;
            if !by_slot {
                value.as_object_mut().expect("report is an object").remove("by_slot");
            }
            if let Some(size) = size {
                value["model_size_bytes"] = json!(size);
            }
            print_json(&value)
        }
    }
}

fn eval(args: EvalArgs, seed: Option<u64>) -> Result<()> {
    header("eval", seed.unwrap_or(0));
    let model = checkpoint::load(&args.model)?;
    let test = read_corpus(&args.test)?;
    let report = evaluate(&model, &test)?;
    emit_report(
        &report,
        args.format,
        args.by_slot,
        Some(checkpoint::model_size(&model)?),
    )
}

fn bench(args: BenchArgs, seed: Option<u64>) -> Result<()> {
    header("bench", seed.unwrap_or(0));
    let model = checkpoint::load(&args.model)?;
    let corpus: Vec<Vec<String>> = read_corpus(&args.corpus)?.into_iter().map(|u| u.tokens).collect();
    let options = LatencyOptions {
        warmup: args.warmup,
        repeats: args.repeats,
    };
    let report = measure_latency_with(&model, &corpus, options)?;
    let mut value = serde_json::to_value(&report)?;
    value["model_size_bytes"] = json!(checkpoint::model_size(&model)?);
    print_json(&value)
}

/// Trees paired with the gold corpus, checking that the tokens agree.
fn aligned(trees: &Path, gold: &Path) -> Result<(Vec<Tree>, Vec<LabeledUtterance>)> {
    let trees = treepattern::read_trees(trees)?;
    let gold = read_corpus(gold)?;
    if trees.len() != gold.len() {
        return Err(Error::Data(format!(
            "{} trees but {} gold utterances",
            trees.len(),
            gold.len()
        )));
    }
    for (i, (t, g)) in trees.iter().zip(&gold).enumerate() {
        if t.words() != g.tokens {
            return Err(Error::Data(format!(
                "tree {} does not match the tokens of its gold utterance",
                i + 1
            )));
        }
    }
    Ok((trees, gold))
}

fn mine_patterns(args: MineArgs, seed: Option<u64>) -> Result<()> {
    header("mine-patterns", seed.unwrap_or(0));
    let (trees, gold) = aligned(&args.trees, &args.gold)?;
    let examples: Vec<_> = trees.into_iter().zip(gold.iter().map(|g| g.spans())).collect();
    let mined = treepattern::mine_patterns_with_support(&examples, args.min_support);
    treepattern::write_patterns(&args.out, &mined.patterns)?;
    print_json(&json!({
        "trees": examples.len(),
        "failures": mined.failures,
        "patterns": mined.patterns.len(),
    }))
}

fn eval_trees(args: EvalTreesArgs, seed: Option<u64>) -> Result<()> {
    header("eval-trees", seed.unwrap_or(0));
    let (trees, gold) = aligned(&args.trees, &args.gold)?;
    let patterns = treepattern::read_patterns(&args.patterns)?;
    let predicted = trees
        .iter()
        .map(|t| treepattern::tag_tree(t, &patterns))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::from_predictions(&gold, &predicted)?;
    emit_report(&report, args.format, args.by_slot, None)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Generate(a) => generate(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Tag(a) => tag(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Bench(a) => bench(a, seed),
        Command::MinePatterns(a) => mine_patterns(a, seed),
        Command::EvalTrees(a) => eval_trees(a, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
    }
}
