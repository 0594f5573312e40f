//! Configuration, stage functions and the end-to-end run with its manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{annotate_corpus, AnnotationReport, DaySegment};
use crate::artifacts::{self, SeriesColumns, TopicsFile, TreeFile, WordCloud};
use crate::correlate::{cluster, mds, nearest_sentiment_coloring, CorrelationMatrix, Linkage};
use crate::hsbm::{extract_topics, infer, select_level, BipartiteGraph, InferConfig, LevelChoice};
use crate::ingest::{default_flairs, fetch_posts, filter_flair, IngestConfig, RawPost, Source};
use crate::sentiment::{Denominator, EmotionCounts, SentimentLexicon, DEFAULT_EXCLUSIONS, EMOTIONS};
use crate::series::{build_series, even_grid, loess, DailySeries, DocumentRef, LoessConfig, SmoothedCurve, Weighting};
use crate::text::{build_corpus, Corpus, Stoplist};

pub const TOOL_NAME: &str = "timeline";
pub const CONFIG_EXIT_CODE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fetch,
    Annotate,
    Prep,
    Model,
    Sentiment,
    Series,
    Correlate,
}

pub const STAGES: [Stage; 7] =
    [Stage::Fetch, Stage::Annotate, Stage::Prep, Stage::Model, Stage::Sentiment, Stage::Series, Stage::Correlate];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Annotate => "annotate",
            Stage::Prep => "prep",
            Stage::Model => "model",
            Stage::Sentiment => "sentiment",
            Stage::Series => "series",
            Stage::Correlate => "correlate",
        }
    }

    /// Process exit status when this stage fails.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }

    /// Files the stage writes into the output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Fetch => &[],
            Stage::Annotate => &["segments.jsonl", "report.json", "day_histogram.csv"],
            Stage::Prep => &["corpus.json"],
            Stage::Model => &["topics.json", "wordclouds.json"],
            Stage::Sentiment => &["sentiment.csv"],
            Stage::Series => &["series.csv", "curves.csv"],
            Stage::Correlate => &["heatmap.csv", "tree.json", "mds.csv"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub fn stage(stage: Stage, err: impl ToString) -> Self {
        PipelineError::Stage { stage, message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => CONFIG_EXIT_CODE,
            PipelineError::Stage { stage, .. } => stage.exit_code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub seed: u64,
    pub sweeps: usize,
    pub merge_passes: usize,
    pub beta: f64,
    pub level: LevelChoice,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let infer = InferConfig::default();
        ModelConfig {
            seed: infer.seed,
            sweeps: infer.sweeps,
            merge_passes: infer.merge_passes,
            beta: infer.beta,
            level: LevelChoice::Auto,
        }
    }
}

impl ModelConfig {
    pub fn infer_config(&self) -> InferConfig {
        InferConfig { seed: self.seed, sweeps: self.sweeps, merge_passes: self.merge_passes, beta: self.beta }
    }
}

/// Everything a run needs. Read from TOML; relative paths are resolved
/// against the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Snapshot path or API base URL.
    pub source: String,
    pub subreddit: String,
    pub flairs: Vec<String>,
    /// Inclusive window in Unix seconds.
    pub after: i64,
    pub before: i64,
    /// Stoplist file; the bundled English list when absent.
    pub stopwords: Option<PathBuf>,
    pub lexicon: PathBuf,
    pub out_dir: PathBuf,
    pub t_max: u32,
    pub exclusions: Vec<String>,
    pub denominator: Denominator,
    pub weighting: Weighting,
    pub model: ModelConfig,
    pub loess: LoessConfig,
    pub linkage: Linkage,
    pub mds_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: String::new(),
            subreddit: "COVID19positive".to_string(),
            flairs: default_flairs(),
            after: 0,
            before: i64::MAX,
            stopwords: None,
            lexicon: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            t_max: crate::series::DEFAULT_T_MAX,
            exclusions: DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect(),
            denominator: Denominator::default(),
            weighting: Weighting::default(),
            model: ModelConfig::default(),
            loess: LoessConfig::default(),
            linkage: Linkage::default(),
            mds_seed: 0,
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.as_os_str().is_empty() || path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parse a configuration file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Source::Local(p) = Source::parse(&self.source) {
            if !self.source.is_empty() {
                self.source = resolve(base, &p).display().to_string();
            }
        }
        self.stopwords = self.stopwords.as_deref().map(|p| resolve(base, p));
        self.lexicon = resolve(base, &self.lexicon);
        self.out_dir = resolve(base, &self.out_dir);
    }

    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            source: Source::parse(&self.source),
            subreddit: self.subreddit.clone(),
            flair_whitelist: self.flairs.clone(),
            window: (self.after, self.before),
            ..IngestConfig::local("")
        }
    }

    pub fn exclusion_set(&self) -> BTreeSet<String> {
        self.exclusions.iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.source.is_empty() {
            return err("source is required".into());
        }
        if let Source::Local(p) = Source::parse(&self.source) {
            if !p.is_file() {
                return err(format!("snapshot {} does not exist", p.display()));
            }
        }
        if self.lexicon.as_os_str().is_empty() {
            return err("lexicon is required".into());
        }
        if !self.lexicon.is_file() {
            return err(format!("lexicon {} does not exist", self.lexicon.display()));
        }
        if let Some(p) = &self.stopwords {
            if !p.is_file() {
                return err(format!("stopword list {} does not exist", p.display()));
            }
        }
        if self.flairs.is_empty() {
            return err("at least one flair is required".into());
        }
        if self.t_max < 1 {
            return err("t_max must be at least 1".into());
        }
        if !(self.loess.span > 0.0 && self.loess.span <= 1.0) {
            return err(format!("loess span must be in (0, 1], got {}", self.loess.span));
        }
        if self.loess.grid_points == 0 {
            return err("loess grid_points must be at least 1".into());
        }
        self.ingest_config().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.model.infer_config().validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

// Stage functions shared by the subcommands and the full run.

pub struct Fetched {
    pub fetched: usize,
    pub skipped: usize,
    pub posts: Vec<RawPost>,
}

pub fn fetch_stage(config: &IngestConfig) -> Result<Fetched, PipelineError> {
    let outcome = fetch_posts(config).map_err(|e| PipelineError::stage(Stage::Fetch, e))?;
    let posts = filter_flair(&outcome.posts, &config.flair_whitelist);
    Ok(Fetched { fetched: outcome.posts.len(), skipped: outcome.skips.skipped, posts })
}

pub fn annotate_stage(posts: &[RawPost]) -> Result<(Vec<DaySegment>, AnnotationReport), PipelineError> {
    let (segments, report) = annotate_corpus(posts);
    if segments.is_empty() {
        return Err(PipelineError::stage(Stage::Annotate, "no documents: no post carries a day or date marker"));
    }
    Ok((segments, report))
}

pub fn prep_stage(segments: &[DaySegment], stoplist: &Stoplist) -> Result<Corpus, PipelineError> {
    let corpus = build_corpus(segments, stoplist);
    if corpus.bags.is_empty() {
        return Err(PipelineError::stage(Stage::Prep, "no documents: every segment is empty after stopword removal"));
    }
    Ok(corpus)
}

pub struct Modelled {
    pub topics: TopicsFile,
    pub wordclouds: Vec<WordCloud>,
}

pub fn model_stage(corpus: &Corpus, config: &ModelConfig) -> Result<Modelled, PipelineError> {
    let err = |e: crate::hsbm::HsbmError| PipelineError::stage(Stage::Model, e);
    let graph = BipartiteGraph::from_bags(&corpus.bags, corpus.vocabulary.len());
    let run = infer(&graph, &config.infer_config()).map_err(err)?;
    let level = select_level(&run.state, config.level).map_err(err)?;
    let model = extract_topics(&graph, &run.state, level).map_err(err)?;
    log::info!(
        "model: {} levels, {} topics at level {level}, description length {}",
        run.state.num_levels(),
        model.num_topics(),
        run.state.description_length
    );
    Ok(Modelled {
        wordclouds: artifacts::wordclouds(&model, &corpus.vocabulary),
        topics: TopicsFile::new(
            &model,
            &run.state,
            config.level,
            &corpus.vocabulary,
            DocumentRef::from_corpus(corpus),
            run.trace,
        ),
    })
}

pub fn sentiment_stage(corpus: &Corpus, segments: &[DaySegment], lexicon: &SentimentLexicon) -> Vec<EmotionCounts> {
    crate::sentiment::score_corpus(corpus, segments, lexicon)
}

pub fn proportions(days: &[EmotionCounts], denominator: Denominator) -> Vec<(u32, Option<[f64; 10]>)> {
    days.iter().map(|c| (c.day, c.proportions(denominator))).collect()
}

/// Per-day series plus a smoothed curve for every series with enough days
/// to fit.
pub fn series_stage(
    topics: &TopicsFile,
    segments: &[DaySegment],
    emotions: &[(u32, Option<[f64; 10]>)],
    t_max: u32,
    weighting: Weighting,
    smoothing: &LoessConfig,
) -> Result<(DailySeries, Vec<(String, SmoothedCurve)>), PipelineError> {
    let err = |e: crate::series::SeriesError| PipelineError::stage(Stage::Series, e);
    if topics.documents.len() != topics.topic_given_doc.len() {
        return Err(PipelineError::stage(Stage::Series, "topics file lists a different number of documents and rows"));
    }
    let series =
        build_series(&topics.topic_given_doc, &topics.documents, segments, emotions, t_max, weighting).map_err(err)?;
    let grid = even_grid(1.0, t_max as f64, smoothing.grid_points);
    let mut curves = Vec::new();
    let labelled = (0..series.num_topics)
        .map(|k| (artifacts::topic_label(k), series.topic_points(k)))
        .chain(EMOTIONS.iter().map(|e| (e.name().to_string(), series.sentiment_points(e.index()))));
    for (label, points) in labelled {
        if points.len() < smoothing.degree + 1 {
            log::warn!("series {label}: {} day(s) is too few to smooth", points.len());
            continue;
        }
        curves.push((label, loess(&points, smoothing.span, smoothing.degree, &grid).map_err(err)?));
    }
    Ok((series, curves))
}

pub fn series_columns(series: &DailySeries) -> SeriesColumns {
    let days: Vec<u32> = series.days().collect();
    let mut labels = Vec::new();
    let mut kinds = Vec::new();
    let mut values = Vec::new();
    for k in 0..series.num_topics {
        labels.push(artifacts::topic_label(k));
        kinds.push(crate::correlate::LabelKind::Topic);
        values.push(series.topics.iter().map(|r| r.as_ref().map(|r| r[k])).collect());
    }
    for e in EMOTIONS {
        labels.push(e.name().to_string());
        kinds.push(crate::correlate::LabelKind::Sentiment);
        values.push(series.sentiments.iter().map(|r| r.map(|r| r[e.index()])).collect());
    }
    SeriesColumns { days, labels, kinds, values }
}

pub struct Correlated {
    pub heatmap: String,
    pub tree: TreeFile,
    pub mds: String,
}

pub fn correlate_stage(columns: &SeriesColumns, linkage: Linkage, mds_seed: u64) -> Result<Correlated, PipelineError> {
    let err = |e: crate::correlate::CorrelateError| PipelineError::stage(Stage::Correlate, e);
    let full = CorrelationMatrix::from_series(columns.labels.clone(), columns.kinds.clone(), &columns.values);
    let (matrix, dropped) = full.complete();
    if !dropped.is_empty() {
        log::warn!("correlate: dropped {} series with undefined correlations: {}", dropped.len(), dropped.join(", "));
    }
    let d = matrix.dissimilarities();
    let tree = cluster(&matrix.labels, &d, linkage).map_err(err)?;
    let embedding = mds(&matrix.labels, &d, mds_seed).map_err(err)?;
    let nearest = nearest_sentiment_coloring(&embedding, &matrix.kinds);
    Ok(Correlated {
        heatmap: artifacts::heatmap_csv(&matrix, &tree.leaf_order),
        mds: artifacts::mds_csv(&embedding, &matrix.kinds, &nearest),
        tree: TreeFile::new(&tree, dropped),
    })
}

// Full run.

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub posts_fetched: usize,
    pub records_skipped: usize,
    pub posts_kept: usize,
    pub posts_annotated: usize,
    pub segments: usize,
    pub documents_modelled: usize,
    pub vocabulary: usize,
    pub topics: usize,
    pub sentiment_days: usize,
    /// Days in `1..=t_max` with at least one modelled document.
    pub days_covered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    /// SHA-256 of every local input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub counts: RunCounts,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    /// Existing outputs of the failed stage and later ones, left from an
    /// earlier run.
    pub stale: Vec<String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

struct Run<'a> {
    config: &'a PipelineConfig,
    manifest: RunManifest,
}

impl Run<'_> {
    fn write(&self, stage: Stage, name: &str, contents: &str) -> Result<(), PipelineError> {
        let path = self.config.out_dir.join(name);
        artifacts::write_atomic(&path, contents.as_bytes())
            .map_err(|e| PipelineError::stage(stage, format!("writing {}: {e}", path.display())))
    }

    fn timed<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        log::info!("stage {stage}");
        let start = Instant::now();
        let out = f(self)?;
        self.manifest.stages.push(StageRecord {
            stage,
            seconds: start.elapsed().as_secs_f64(),
            outputs: stage.outputs().iter().map(|s| s.to_string()).collect(),
        });
        Ok(out)
    }

    fn stages(&mut self) -> Result<(), PipelineError> {
        let config = self.config;
        let posts = self.timed(Stage::Fetch, |run| {
            let fetched = fetch_stage(&config.ingest_config())?;
            run.manifest.counts.posts_fetched = fetched.fetched;
            run.manifest.counts.records_skipped = fetched.skipped;
            run.manifest.counts.posts_kept = fetched.posts.len();
            Ok(fetched.posts)
        })?;
        let segments = self.timed(Stage::Annotate, |run| {
            let (segments, report) = annotate_stage(&posts)?;
            run.write(Stage::Annotate, "segments.jsonl", &artifacts::segments_jsonl(&segments))?;
            run.write(Stage::Annotate, "report.json", &artifacts::to_json_pretty(&report))?;
            run.write(Stage::Annotate, "day_histogram.csv", &artifacts::day_histogram_csv(&report))?;
            run.manifest.counts.posts_annotated = report.annotated_posts;
            run.manifest.counts.segments = segments.len();
            Ok(segments)
        })?;
        let corpus = self.timed(Stage::Prep, |run| {
            let stoplist = match &config.stopwords {
                Some(p) => Stoplist::load(p).map_err(|e| PipelineError::stage(Stage::Prep, e))?,
                None => Stoplist::english(),
            };
            let corpus = prep_stage(&segments, &stoplist)?;
            run.write(Stage::Prep, "corpus.json", &artifacts::to_json_pretty(&corpus))?;
            run.manifest.counts.documents_modelled = corpus.bags.len();
            run.manifest.counts.vocabulary = corpus.vocabulary.len();
            Ok(corpus)
        })?;
        let topics = self.timed(Stage::Model, |run| {
            let modelled = model_stage(&corpus, &config.model)?;
            run.write(Stage::Model, "topics.json", &artifacts::to_json_pretty(&modelled.topics))?;
            run.write(Stage::Model, "wordclouds.json", &artifacts::to_json_pretty(&modelled.wordclouds))?;
            run.manifest.counts.topics = modelled.topics.num_topics;
            Ok(modelled.topics)
        })?;
        let emotions = self.timed(Stage::Sentiment, |run| {
            let lexicon = SentimentLexicon::load(&config.lexicon, &config.exclusion_set())
                .map_err(|e| PipelineError::stage(Stage::Sentiment, e))?;
            let days = sentiment_stage(&corpus, &segments, &lexicon);
            run.write(Stage::Sentiment, "sentiment.csv", &artifacts::sentiment_csv(&days, config.denominator))?;
            run.manifest.counts.sentiment_days = days.len();
            Ok(proportions(&days, config.denominator))
        })?;
        let series = self.timed(Stage::Series, |run| {
            let (series, curves) =
                series_stage(&topics, &segments, &emotions, config.t_max, config.weighting, &config.loess)?;
            run.write(Stage::Series, "series.csv", &artifacts::series_csv(&series))?;
            run.write(Stage::Series, "curves.csv", &artifacts::curves_csv(&curves))?;
            run.manifest.counts.days_covered = series.documents.iter().filter(|&&n| n > 0).count();
            Ok(series)
        })?;
        self.timed(Stage::Correlate, |run| {
            let out = correlate_stage(&series_columns(&series), config.linkage, config.mds_seed)?;
            run.write(Stage::Correlate, "heatmap.csv", &out.heatmap)?;
            run.write(Stage::Correlate, "tree.json", &artifacts::to_json_pretty(&out.tree))?;
            run.write(Stage::Correlate, "mds.csv", &out.mds)
        })
    }
}

/// Run every stage in order, writing artifacts and `manifest.json` into the
/// output directory. A failing stage stops the run; earlier outputs stay,
/// and outputs of the failed and later stages that predate this run are
/// listed as stale in the manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", config.out_dir.display())))?;
    let mut inputs = BTreeMap::new();
    let mut hash = |path: &Path| -> Result<(), PipelineError> {
        let digest = sha256_file(path).map_err(|e| PipelineError::Config(format!("reading {}: {e}", path.display())))?;
        inputs.insert(path.display().to_string(), digest);
        Ok(())
    };
    if let Source::Local(p) = Source::parse(&config.source) {
        hash(&p)?;
    }
    hash(&config.lexicon)?;
    if let Some(p) = &config.stopwords {
        hash(p)?;
    }
    let mut run = Run {
        config,
        manifest: RunManifest {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            inputs,
            counts: RunCounts::default(),
            stages: Vec::new(),
            failed_stage: None,
            error: None,
            stale: Vec::new(),
        },
    };
    let result = run.stages();
    if let Err(PipelineError::Stage { stage, message }) = &result {
        run.manifest.failed_stage = Some(*stage);
        run.manifest.error = Some(message.clone());
        run.manifest.stale = STAGES
            .iter()
            .filter(|s| *s >= stage)
            .flat_map(|s| s.outputs())
            .filter(|name| config.out_dir.join(name).exists())
            .map(|name| name.to_string())
            .collect();
    }
    let manifest_path = config.out_dir.join("manifest.json");
    artifacts::write_atomic(&manifest_path, artifacts::to_json_pretty(&run.manifest).as_bytes())
        .map_err(|e| PipelineError::Config(format!("writing {}: {e}", manifest_path.display())))?;
    result.map(|()| run.manifest)
}
