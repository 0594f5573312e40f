use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use timeline_core::artifacts::{self, TopicsFile};
use timeline_core::hsbm::LevelChoice;
use timeline_core::ingest::{write_snapshot, IngestConfig, Source};
use timeline_core::pipeline::{self, ModelConfig, PipelineConfig, PipelineError, Stage, CONFIG_EXIT_CODE};
use timeline_core::sentiment::{Denominator, SentimentLexicon};
use timeline_core::series::{LoessConfig, Weighting, DEFAULT_T_MAX};
use timeline_core::text::{Corpus, Stoplist};
use timeline_core::Linkage;

#[derive(Parser)]
#[command(name = "timeline", version, about = "Collective symptom timelines from forum narratives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retrieve posts from an API or snapshot and keep whitelisted flairs
    Fetch(FetchArgs),
    /// Split posts into day-annotated segments
    Annotate(AnnotateArgs),
    /// Tokenize segments into a bag-of-words corpus
    Prep(PrepArgs),
    /// Infer block-model topics
    Model(ModelArgs),
    /// Per-day emotion counts and proportions
    Sentiment(SentimentArgs),
    /// Per-day topic and emotion series with smoothed curves
    Series(SeriesArgs),
    /// Correlation heatmap, dendrogram and 2-D embedding
    Correlate(CorrelateArgs),
    /// Every stage from a configuration file
    Run(RunArgs),
}

#[derive(Args)]
struct FetchArgs {
    /// API base URL or snapshot path
    #[arg(long)]
    source: String,
    #[arg(long = "flair", num_args = 1..)]
    flairs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    after: i64,
    #[arg(long, default_value_t = i64::MAX)]
    before: i64,
    #[arg(long, default_value = "COVID19positive")]
    subreddit: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Also write the day-mention histogram
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    segments: PathBuf,
    /// Stoplist file; the bundled English list when omitted
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = ModelConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = ModelConfig::default().sweeps)]
    sweeps: usize,
    #[arg(long, default_value_t = ModelConfig::default().merge_passes)]
    merge_passes: usize,
    /// Hierarchy level number or "auto"
    #[arg(long, default_value = "auto")]
    level: LevelChoice,
    #[arg(long)]
    out: PathBuf,
    /// Also write the top words of every topic
    #[arg(long)]
    wordclouds: Option<PathBuf>,
}

#[derive(Args)]
struct SentimentArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// Comma-separated terms removed from the lexicon
    #[arg(long, value_delimiter = ',', default_value = "feeling,positive,negative")]
    exclude: Vec<String>,
    #[arg(long, default_value = "memberships")]
    denominator: Denominator,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    sentiment: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    tmax: u32,
    #[arg(long, default_value = "unweighted")]
    weighting: Weighting,
    #[arg(long, default_value_t = LoessConfig::default().span)]
    span: f64,
    #[arg(long, default_value_t = LoessConfig::default().degree)]
    degree: usize,
    #[arg(long, default_value_t = LoessConfig::default().grid_points)]
    grid_points: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    curves: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "average")]
    linkage: Linkage,
    #[arg(long, default_value_t = 0)]
    mds_seed: u64,
    #[arg(long)]
    out_heatmap: PathBuf,
    #[arg(long)]
    out_tree: PathBuf,
    #[arg(long)]
    out_mds: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    level: Option<LevelChoice>,
    #[arg(long)]
    tmax: Option<u32>,
    #[arg(long)]
    linkage: Option<Linkage>,
}

fn read(stage: Stage, path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::stage(stage, format!("reading {}: {e}", path.display())))
}

fn write(stage: Stage, path: &Path, contents: &str) -> Result<(), PipelineError> {
    artifacts::write_atomic(path, contents.as_bytes())
        .map_err(|e| PipelineError::stage(stage, format!("writing {}: {e}", path.display())))
}

fn read_segments(stage: Stage, path: &Path) -> Result<Vec<timeline_core::DaySegment>, PipelineError> {
    artifacts::parse_segments_jsonl(&read(stage, path)?)
        .map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

fn read_corpus(stage: Stage, path: &Path) -> Result<Corpus, PipelineError> {
    Corpus::from_json(&read(stage, path)?).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

fn fetch(args: FetchArgs) -> Result<(), PipelineError> {
    let config = IngestConfig {
        source: Source::parse(&args.source),
        subreddit: args.subreddit,
        flair_whitelist: if args.flairs.is_empty() { timeline_core::ingest::default_flairs() } else { args.flairs },
        window: (args.after, args.before),
        ..IngestConfig::local("")
    };
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let fetched = pipeline::fetch_stage(&config)?;
    write_snapshot(&args.out, &fetched.posts).map_err(|e| PipelineError::stage(Stage::Fetch, e))?;
    log::info!("fetched {} posts, kept {}, skipped {} records", fetched.fetched, fetched.posts.len(), fetched.skipped);
    Ok(())
}

fn annotate(args: AnnotateArgs) -> Result<(), PipelineError> {
    let outcome = timeline_core::ingest::fetch_posts(&IngestConfig::local(&args.input))
        .map_err(|e| PipelineError::stage(Stage::Annotate, e))?;
    let (segments, report) = pipeline::annotate_stage(&outcome.posts)?;
    write(Stage::Annotate, &args.out, &artifacts::segments_jsonl(&segments))?;
    write(Stage::Annotate, &args.report, &artifacts::to_json_pretty(&report))?;
    if let Some(path) = &args.histogram {
        write(Stage::Annotate, path, &artifacts::day_histogram_csv(&report))?;
    }
    Ok(())
}

fn prep(args: PrepArgs) -> Result<(), PipelineError> {
    let segments = read_segments(Stage::Prep, &args.segments)?;
    let stoplist = match &args.stopwords {
        Some(p) => Stoplist::load(p).map_err(|e| PipelineError::stage(Stage::Prep, e))?,
        None => Stoplist::english(),
    };
    let corpus = pipeline::prep_stage(&segments, &stoplist)?;
    write(Stage::Prep, &args.out, &artifacts::to_json_pretty(&corpus))
}

fn model(args: ModelArgs) -> Result<(), PipelineError> {
    let config = ModelConfig {
        seed: args.seed,
        sweeps: args.sweeps,
        merge_passes: args.merge_passes,
        level: args.level,
        ..ModelConfig::default()
    };
    config.infer_config().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let corpus = read_corpus(Stage::Model, &args.corpus)?;
    let modelled = pipeline::model_stage(&corpus, &config)?;
    write(Stage::Model, &args.out, &artifacts::to_json_pretty(&modelled.topics))?;
    if let Some(path) = &args.wordclouds {
        write(Stage::Model, path, &artifacts::to_json_pretty(&modelled.wordclouds))?;
    }
    Ok(())
}

fn sentiment(args: SentimentArgs) -> Result<(), PipelineError> {
    let exclusions = args.exclude.iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect();
    let lexicon =
        SentimentLexicon::load(&args.lexicon, &exclusions).map_err(|e| PipelineError::stage(Stage::Sentiment, e))?;
    let corpus = read_corpus(Stage::Sentiment, &args.corpus)?;
    let segments = read_segments(Stage::Sentiment, &args.segments)?;
    let days = pipeline::sentiment_stage(&corpus, &segments, &lexicon);
    write(Stage::Sentiment, &args.out, &artifacts::sentiment_csv(&days, args.denominator))
}

fn series(args: SeriesArgs) -> Result<(), PipelineError> {
    if args.tmax < 1 {
        return Err(PipelineError::Config("--tmax must be at least 1".into()));
    }
    let text = read(Stage::Series, &args.topics)?;
    let topics: TopicsFile = serde_json::from_str(&text)
        .map_err(|e| PipelineError::stage(Stage::Series, format!("{}: {e}", args.topics.display())))?;
    let emotions = artifacts::parse_sentiment_csv(&read(Stage::Series, &args.sentiment)?)
        .map_err(|e| PipelineError::stage(Stage::Series, format!("{}: {e}", args.sentiment.display())))?;
    let segments = read_segments(Stage::Series, &args.segments)?;
    let smoothing = LoessConfig { span: args.span, degree: args.degree, grid_points: args.grid_points };
    let (series, curves) = pipeline::series_stage(&topics, &segments, &emotions, args.tmax, args.weighting, &smoothing)?;
    write(Stage::Series, &args.out, &artifacts::series_csv(&series))?;
    write(Stage::Series, &args.curves, &artifacts::curves_csv(&curves))
}

fn correlate(args: CorrelateArgs) -> Result<(), PipelineError> {
    let columns = artifacts::parse_series_csv(&read(Stage::Correlate, &args.series)?)
        .map_err(|e| PipelineError::stage(Stage::Correlate, format!("{}: {e}", args.series.display())))?;
    let out = pipeline::correlate_stage(&columns, args.linkage, args.mds_seed)?;
    write(Stage::Correlate, &args.out_heatmap, &out.heatmap)?;
    write(Stage::Correlate, &args.out_tree, &artifacts::to_json_pretty(&out.tree))?;
    write(Stage::Correlate, &args.out_mds, &out.mds)
}

fn run(args: RunArgs) -> Result<(), PipelineError> {
    let mut config = PipelineConfig::load(&args.config)?;
    if let Some(source) = args.source {
        config.source = source;
    }
    if let Some(lexicon) = args.lexicon {
        config.lexicon = lexicon;
    }
    if let Some(out_dir) = args.out_dir {
        config.out_dir = out_dir;
    }
    if let Some(seed) = args.seed {
        config.model.seed = seed;
    }
    if let Some(sweeps) = args.sweeps {
        config.model.sweeps = sweeps;
    }
    if let Some(level) = args.level {
        config.model.level = level;
    }
    if let Some(t_max) = args.tmax {
        config.t_max = t_max;
    }
    if let Some(linkage) = args.linkage {
        config.linkage = linkage;
    }
    let manifest = pipeline::run_pipeline(&config)?;
    let c = &manifest.counts;
    log::info!(
        "done: {} posts kept, {} segments, {} documents, {} topics, {} days covered",
        c.posts_kept,
        c.segments,
        c.documents_modelled,
        c.topics,
        c.days_covered
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CONFIG_EXIT_CODE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Fetch(a) => fetch(a),
        Command::Annotate(a) => annotate(a),
        Command::Prep(a) => prep(a),
        Command::Model(a) => model(a),
        Command::Sentiment(a) => sentiment(a),
        Command::Series(a) => series(a),
        Command::Correlate(a) => correlate(a),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
