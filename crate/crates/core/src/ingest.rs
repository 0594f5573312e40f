//! Forum post ingestion: Pushshift-style JSON API or a local JSONL snapshot.
//!
//! Snapshot lines carry the keys `id`, `author`, `link_flair_text`, `title`,
//! `selftext` and `created_utc`. The remote API answers `GET` requests with
//! query parameters `subreddit`, `after`, `before` and `size` and returns a
//! JSON body with a `data` array of records in the same shape.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// One forum submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub author: String,
    #[serde(rename = "link_flair_text")]
    pub flair: String,
    pub title: String,
    #[serde(rename = "selftext")]
    pub body: String,
    pub created_utc: i64,
}

impl RawPost {
    /// Body text with deleted/removed markers mapped to the empty string.
    pub fn narrative(&self) -> &str {
        match self.body.trim() {
            "[deleted]" | "[removed]" => "",
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Remote(String),
    Local(PathBuf),
}

impl Source {
    /// `http://` and `https://` prefixes select the remote API, anything else is a path.
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            Source::Remote(s.to_string())
        } else {
            Source::Local(PathBuf::from(s))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub source: Source,
    pub subreddit: String,
    pub flair_whitelist: Vec<String>,
    /// Inclusive `[start, end]` window in Unix seconds.
    pub window: (i64, i64),
    pub page_size: usize,
    pub delay_ms: u64,
    pub max_attempts: u32,
}

impl IngestConfig {
    pub fn local(path: impl Into<PathBuf>) -> Self {
        IngestConfig {
            source: Source::Local(path.into()),
            subreddit: "COVID19positive".to_string(),
            flair_whitelist: default_flairs(),
            window: (0, i64::MAX),
            page_size: 100,
            delay_ms: 1000,
            max_attempts: 3,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.window.0 > self.window.1 {
            return Err(IngestError::Config(format!(
                "window start {} is after end {}",
                self.window.0, self.window.1
            )));
        }
        if self.page_size == 0 {
            return Err(IngestError::Config("page size must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(IngestError::Config("max attempts must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn default_flairs() -> Vec<String> {
    vec!["Tested Positive - Me".to_string(), "Tested Positive".to_string()]
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid ingest configuration: {0}")]
    Config(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fetch failed after {attempts} attempt(s): {message}")]
    Fetch { attempts: u32, message: String },
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, IngestError::Io { .. } | IngestError::Fetch { .. })
    }
}

/// Records that could not be turned into a [`RawPost`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub skipped: usize,
    /// Line numbers (local) or page-relative positions (remote), capped at 100 entries.
    pub examples: Vec<String>,
}

impl SkipReport {
    fn record(&mut self, what: String) {
        self.skipped += 1;
        if self.examples.len() < 100 {
            self.examples.push(what);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchOutcome {
    pub posts: Vec<RawPost>,
    pub skips: SkipReport,
    pub requests: usize,
}

/// Parse one JSON record. Missing flair/author/title become empty strings,
/// `created_utc` may be an integer, a float, or a numeric string.
pub fn parse_record(value: &Value) -> Option<RawPost> {
    let obj = value.as_object()?;
    let id = match obj.get("id")? {
        Value::String(s) if !s.trim().is_empty() => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let text = |key: &str| -> Option<String> {
        match obj.get(key) {
            None | Some(Value::Null) => Some(String::new()),
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => None,
        }
    };
    let created_utc = match obj.get("created_utc")? {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f.floor() as i64))?,
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|f| f.is_finite())?.floor() as i64,
        _ => return None,
    };
    if created_utc < 0 {
        return None;
    }
    Some(RawPost {
        id,
        author: text("author")?,
        flair: text("link_flair_text")?,
        title: text("title")?,
        body: text("selftext")?,
        created_utc,
    })
}

/// Fetch every post in the configured window, deduplicated by id (latest
/// retrieval wins) and sorted by `(created_utc, id)`.
pub fn fetch_posts(config: &IngestConfig) -> Result<FetchOutcome, IngestError> {
    config.validate()?;
    let mut outcome = match &config.source {
        Source::Local(path) => load_snapshot(path)?,
        Source::Remote(base) => fetch_remote(base, config)?,
    };
    let (start, end) = config.window;
    outcome.posts.retain(|p| p.created_utc >= start && p.created_utc <= end);
    Ok(outcome)
}

fn finish(by_id: BTreeMap<String, RawPost>) -> Vec<RawPost> {
    let mut posts: Vec<RawPost> = by_id.into_values().collect();
    posts.sort_by(|a, b| (a.created_utc, &a.id).cmp(&(b.created_utc, &b.id)));
    posts
}

fn load_snapshot(path: &Path) -> Result<FetchOutcome, IngestError> {
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut by_id = BTreeMap::new();
    let mut skips = SkipReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(&line).ok().as_ref().and_then(parse_record) {
            Some(post) => {
                by_id.insert(post.id.clone(), post);
            }
            None => skips.record(format!("line {}", lineno + 1)),
        }
    }
    Ok(FetchOutcome { posts: finish(by_id), skips, requests: 0 })
}

fn fetch_remote(base: &str, config: &IngestConfig) -> Result<FetchOutcome, IngestError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into();
    let (start, end) = config.window;
    // `after`/`before` are exclusive on the server side; step back one second
    // on each page so posts sharing the boundary timestamp are not lost.
    let mut after = start.saturating_sub(1);
    let before = end.saturating_add(1);
    let mut by_id = BTreeMap::new();
    let mut skips = SkipReport::default();
    let mut requests = 0usize;
    loop {
        if requests > 0 && config.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(config.delay_ms));
        }
        let page = get_page(&agent, base, config, after, before)?;
        requests += 1;
        let mut fresh = 0usize;
        let mut max_ts = after;
        for (i, record) in page.iter().enumerate() {
            match parse_record(record) {
                Some(post) => {
                    max_ts = max_ts.max(post.created_utc);
                    if by_id.insert(post.id.clone(), post).is_none() {
                        fresh += 1;
                    }
                }
                None => skips.record(format!("request {requests} record {i}")),
            }
        }
        if page.is_empty() || fresh == 0 {
            break;
        }
        let next = max_ts - 1;
        if next <= after {
            // every record on the page shared one timestamp
            after = max_ts;
        } else {
            after = next;
        }
        if after >= before {
            break;
        }
    }
    Ok(FetchOutcome { posts: finish(by_id), skips, requests })
}

fn get_page(
    agent: &ureq::Agent,
    base: &str,
    config: &IngestConfig,
    after: i64,
    before: i64,
) -> Result<Vec<Value>, IngestError> {
    let mut last = String::new();
    for attempt in 1..=config.max_attempts {
        let result = agent
            .get(base)
            .query("subreddit", &config.subreddit)
            .query("after", after.to_string())
            .query("before", before.to_string())
            .query("size", config.page_size.to_string())
            .query("sort", "asc")
            .call();
        match result {
            Ok(mut response) => match response.body_mut().read_json::<Value>() {
                Ok(body) => match body.get("data").and_then(Value::as_array) {
                    Some(data) => return Ok(data.clone()),
                    None => last = "response has no `data` array".to_string(),
                },
                Err(e) => last = e.to_string(),
            },
            Err(e) => last = e.to_string(),
        }
        log::warn!("fetch attempt {attempt}/{} failed: {last}", config.max_attempts);
        if attempt < config.max_attempts {
            std::thread::sleep(Duration::from_millis(config.delay_ms));
        }
    }
    Err(IngestError::Fetch { attempts: config.max_attempts, message: last })
}

/// Keep posts with an exactly matching flair (both sides trimmed) and a
/// non-empty narrative body.
pub fn filter_flair(posts: &[RawPost], whitelist: &[String]) -> Vec<RawPost> {
    posts
        .iter()
        .filter(|p| whitelist.iter().any(|w| w.trim() == p.flair.trim()))
        .filter(|p| !p.narrative().is_empty())
        .cloned()
        .collect()
}

pub fn write_snapshot(path: &Path, posts: &[RawPost]) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for post in posts {
        let line = serde_json::to_string(post).expect("RawPost serializes");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, flair: &str, body: &str) -> RawPost {
        RawPost {
            id: id.into(),
            author: "a".into(),
            flair: flair.into(),
            title: String::new(),
            body: body.into(),
            created_utc: 10,
        }
    }

    fn snapshot(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn local_snapshot_skips_malformed() {
        let f = snapshot(&[
            r#"{"id":"b","author":"x","link_flair_text":"Tested Positive","title":"t","selftext":"s","created_utc":20}"#,
            r#"{"id":"a","author":"x","link_flair_text":null,"title":"t","selftext":"s","created_utc":10.7}"#,
            r#"{"id":"c" "broken"#,
            r#"{"id":"d","author":"y","link_flair_text":"Question","title":"","selftext":"","created_utc":"30"}"#,
        ]);
        let out = fetch_posts(&IngestConfig::local(f.path())).unwrap();
        let ids: Vec<_> = out.posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "d"]);
        assert_eq!(out.posts[0].created_utc, 10);
        assert_eq!(out.posts[0].flair, "");
        assert_eq!(out.skips.skipped, 1);
        assert_eq!(out.skips.examples, ["line 3"]);
    }

    #[test]
    fn window_excluding_everything_is_empty() {
        let f = snapshot(&[
            r#"{"id":"a","author":"x","link_flair_text":"","title":"","selftext":"s","created_utc":10}"#,
        ]);
        let mut cfg = IngestConfig::local(f.path());
        cfg.window = (100, 200);
        assert!(fetch_posts(&cfg).unwrap().posts.is_empty());
    }

    #[test]
    fn duplicate_ids_keep_latest_line() {
        let f = snapshot(&[
            r#"{"id":"a","author":"x","link_flair_text":"","title":"old","selftext":"s","created_utc":10}"#,
            r#"{"id":"a","author":"x","link_flair_text":"","title":"new","selftext":"s","created_utc":11}"#,
        ]);
        let out = fetch_posts(&IngestConfig::local(f.path())).unwrap();
        assert_eq!(out.posts.len(), 1);
        assert_eq!(out.posts[0].title, "new");
    }

    #[test]
    fn negative_timestamps_and_missing_ids_are_malformed() {
        for raw in [
            r#"{"id":"a","created_utc":-5}"#,
            r#"{"author":"x","created_utc":5}"#,
            r#"{"id":"","created_utc":5}"#,
            r#"{"id":"a","title":3,"created_utc":5}"#,
            r#"[1,2]"#,
        ] {
            let v: Value = serde_json::from_str(raw).unwrap();
            assert!(parse_record(&v).is_none(), "{raw}");
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = IngestConfig::local("x");
        cfg.window = (5, 1);
        assert!(matches!(fetch_posts(&cfg), Err(IngestError::Config(_))));
        let mut cfg = IngestConfig::local("x");
        cfg.page_size = 0;
        assert!(matches!(cfg.validate(), Err(IngestError::Config(_))));
    }

    #[test]
    fn missing_file_is_retryable_io_error() {
        let err = fetch_posts(&IngestConfig::local("/nonexistent/snapshot.jsonl")).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn flair_filter_is_exact() {
        let posts = vec![
            post("1", "Tested Positive - Me", "day 1 fever"),
            post("2", "Question", "anyone else?"),
            post("3", "Tested Positive", "cough"),
            post("4", "tested positive", "lowercase flair"),
        ];
        let kept = filter_flair(&posts, &default_flairs());
        let ids: Vec<_> = kept.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["1", "3"]);
    }

    #[test]
    fn flair_filter_drops_empty_bodies() {
        let posts = vec![
            post("1", "Tested Positive", "   \n\t"),
            post("2", "Tested Positive", "[deleted]"),
            post("3", "Tested Positive", "[removed]"),
            post("4", " Tested Positive ", "ok"),
        ];
        let kept = filter_flair(&posts, &default_flairs());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "4");
        assert!(filter_flair(&posts, &[]).is_empty());
    }

    #[test]
    fn snapshot_round_trip_uses_pushshift_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let posts = vec![post("1", "Tested Positive", "body")];
        write_snapshot(&path, &posts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"link_flair_text\":\"Tested Positive\""));
        assert!(text.contains("\"selftext\":\"body\""));
        let back = fetch_posts(&IngestConfig::local(&path)).unwrap();
        assert_eq!(back.posts, posts);
    }
}
