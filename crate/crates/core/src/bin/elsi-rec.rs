use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use elsi_rec::classifier::read_head;
use elsi_rec::config::PipelineConfig;
use elsi_rec::corpus::CorpusFormat;
use elsi_rec::pipeline;
use elsi_rec::recommend::read_index;
use elsi_rec::service::{self, AppState};

/// Topic-conditioned ELSI article recommender.
#[derive(Parser)]
#[command(name = "elsi-rec", version)]
struct Cli {
    /// Pipeline configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, env = "ELSI_REC_CONFIG")]
    config: Option<PathBuf>,

    /// Log more (-v info, -vv debug). Logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus and partition it into SB and ELSI subsets.
    Ingest(IngestArgs),
    /// Fit the LDA topic model on SB abstracts.
    LdaFit(LdaFitArgs),
    /// Label records with their highest-scoring LDA topic.
    Label(LabelArgs),
    /// Train the topic classifier head on labeled embeddings.
    TrainHead(TrainHeadArgs),
    /// Partition ELSI embeddings by predicted topic.
    BuildIndex(BuildIndexArgs),
    /// Recommend ELSI articles for query embeddings.
    Recommend(RecommendArgs),
    /// Report accuracy and macro F1 of a head on labeled embeddings.
    Evaluate(EvaluateArgs),
    /// Serve recommendations over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// jsonl or csv; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LdaFitArgs {
    /// SB records (JSONL or CSV); defaults to <parts_dir>/sb.jsonl.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainHeadArgs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of labeled examples held out from training.
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    /// Where to write the train/test id split.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildIndexArgs {
    /// ELSI embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    head: Option<PathBuf>,
    /// Use these topic labels instead of the head's predictions.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    query_embedding: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Search every topic when the predicted one has no ELSI articles.
    #[arg(long)]
    fallback_global: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Restrict to the test ids of a split written by train-head.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long)]
    bridge_url: Option<String>,
    #[arg(long)]
    fallback_global: bool,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(command: &str, body: T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(&Summary { command, body })?);
    Ok(())
}

fn pick(flag: Option<PathBuf>, config: &PipelineConfig, default: &Path) -> PathBuf {
    flag.unwrap_or_else(|| config.resolve(default))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok());
    let paths = config.paths.clone();

    match cli.command {
        Command::Ingest(a) => {
            let corpus = pick(a.corpus, &config, &paths.corpus);
            let out = pick(a.out, &config, &paths.parts_dir);
            let format = a.format.map(|f| f.parse::<CorpusFormat>()).transpose()?;
            let summary = pipeline::ingest(&corpus, format, &out, &config.elsi_query.to_query()?)?;
            emit("ingest", summary)
        }
        Command::LdaFit(a) => {
            let corpus = a
                .corpus
                .unwrap_or_else(|| config.resolve(&paths.parts_dir).join("sb.jsonl"));
            let mut lda = config.lda.clone();
            lda.topics = a.topics.unwrap_or(lda.topics);
            lda.iterations = a.iterations.unwrap_or(lda.iterations);
            lda.burn_in = a.burn_in.unwrap_or(lda.burn_in);
            lda.alpha = a.alpha.unwrap_or(lda.alpha);
            lda.beta = a.beta.unwrap_or(lda.beta);
            lda.seed = a.seed.unwrap_or(lda.seed);
            let summary = pipeline::lda_fit(
                &corpus,
                &config.tokenizer_config()?,
                &config.vocabulary,
                &lda,
                &pick(a.vocab_out, &config, &paths.vocabulary),
                &pick(a.model_out, &config, &paths.model),
            )?;
            emit("lda-fit", summary)
        }
        Command::Label(a) => {
            let corpus = a
                .corpus
                .unwrap_or_else(|| config.resolve(&paths.parts_dir).join("sb.jsonl"));
            let summary = pipeline::label(
                &corpus,
                &pick(a.model, &config, &paths.model),
                &pick(a.vocab, &config, &paths.vocabulary),
                &config.tokenizer_config()?,
                &pick(a.out, &config, &paths.labels),
            )?;
            emit("label", summary)
        }
        Command::TrainHead(a) => {
            let mut train = config.train.clone();
            train.learning_rate = a.lr.unwrap_or(train.learning_rate);
            train.epochs = a.epochs.unwrap_or(train.epochs);
            train.batch_size = a.batch_size.unwrap_or(train.batch_size);
            train.seed = a.seed.unwrap_or(train.seed);
            let summary = pipeline::train_head(
                &pick(a.embeddings, &config, &paths.embeddings),
                &pick(a.labels, &config, &paths.labels),
                &train,
                a.holdout,
                &pick(a.out, &config, &paths.head),
                a.split_out.as_deref(),
            )?;
            emit("train-head", summary)
        }
        Command::BuildIndex(a) => {
            let summary = pipeline::build_index(
                &pick(a.embeddings, &config, &paths.elsi_embeddings),
                &pick(a.head, &config, &paths.head),
                a.labels.as_deref(),
                &pick(a.out, &config, &paths.index),
            )?;
            emit("build-index", summary)
        }
        Command::Recommend(a) => {
            let results = pipeline::recommend_queries(
                &pick(a.head, &config, &paths.head),
                &pick(a.index, &config, &paths.index),
                &a.query_embedding,
                a.k,
                a.fallback_global,
            )?;
            for r in results {
                println!("{}", serde_json::to_string(&r)?);
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let report = pipeline::evaluate_head(
                &pick(a.head, &config, &paths.head),
                &pick(a.embeddings, &config, &paths.embeddings),
                &pick(a.labels, &config, &paths.labels),
                a.split.as_deref(),
            )?;
            emit("evaluate", report)
        }
        Command::Serve(a) => {
            let head_path = pick(a.head, &config, &paths.head);
            let index_path = pick(a.index, &config, &paths.index);
            let head = read_head(&head_path)?;
            let index = read_index(&index_path)?;
            let state = AppState::new(head, index)?
                .with_bridge(a.bridge_url.or(config.encoder_bridge_url.clone()))
                .with_fallback_global(a.fallback_global);
            let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            runtime
                .block_on(service::serve(state, a.bind))
                .with_context(|| format!("serving on {}", a.bind))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
