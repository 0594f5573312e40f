//! On-disk formats of every pipeline artifact. Floats are written with the
//! shortest representation that reads back to the same value.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotationReport, DaySegment};
use crate::correlate::{ClusterTree, CorrelationMatrix, LabelKind, Merge, MdsEmbedding};
use crate::hsbm::{BlockState, LevelChoice, TopicModel};
use crate::sentiment::{Denominator, Emotion, EmotionCounts, EMOTIONS};
use crate::series::{DailySeries, DocumentRef, SmoothedCurve};
use crate::text::Vocabulary;

/// Words listed per topic in the word-cloud file.
pub const WORDCLOUD_SIZE: usize = 30;
const SUMMARY_WORDS: usize = 10;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{what}, line {line}: {message}")]
    Line { what: &'static str, line: usize, message: String },
    #[error("{what}: {message}")]
    Invalid { what: &'static str, message: String },
}

fn line_err(what: &'static str, line: usize, message: impl ToString) -> FormatError {
    FormatError::Line { what, line, message: message.to_string() }
}

/// Write through a temporary file in the same directory and rename, so a
/// failed write never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn parse_opt(what: &'static str, line: usize, field: &str) -> Result<Option<f64>, FormatError> {
    if field.is_empty() || field == "NA" {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|e| line_err(what, line, format!("bad number {field:?}: {e}")))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().from_reader(text.as_bytes())
}

// segments.jsonl

pub fn segments_jsonl(segments: &[DaySegment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&serde_json::to_string(s).expect("segment serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_segments_jsonl(text: &str) -> Result<Vec<DaySegment>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| line_err("segments", i + 1, e)))
        .collect()
}

// day_histogram.csv

/// `day,mention_count,fraction_of_posts_mentioning`; the fraction divides
/// the number of posts with a segment on that day by the annotated posts.
pub fn day_histogram_csv(report: &AnnotationReport) -> String {
    let mut w = csv_writer();
    w.write_record(["day", "mention_count", "fraction_of_posts_mentioning"]).unwrap();
    for (&day, &count) in &report.histogram {
        let fraction = count as f64 / report.annotated_posts as f64;
        w.write_record([day.to_string(), count.to_string(), num(fraction)]).unwrap();
    }
    finish(w)
}

// sentiment.csv

/// `day,category,count,proportion`; an undefined proportion is written as `NA`.
pub fn sentiment_csv(days: &[EmotionCounts], denominator: Denominator) -> String {
    let mut w = csv_writer();
    w.write_record(["day", "category", "count", "proportion"]).unwrap();
    for counts in days {
        let proportions = counts.proportions(denominator);
        for e in EMOTIONS {
            let p = proportions.map_or_else(|| "NA".to_string(), |p| num(p[e.index()]));
            w.write_record([counts.day.to_string(), e.name().to_string(), counts.counts[e.index()].to_string(), p])
                .unwrap();
        }
    }
    finish(w)
}

/// Per-day proportions from a sentiment file; a day is undefined if any of
/// its categories is `NA`.
pub fn parse_sentiment_csv(text: &str) -> Result<Vec<(u32, Option<[f64; 10]>)>, FormatError> {
    const WHAT: &str = "sentiment";
    let mut days: BTreeMap<u32, (Option<[f64; 10]>, [bool; 10])> = BTreeMap::new();
    let mut reader = csv_reader(text);
    let headers = reader.headers().map_err(|e| line_err(WHAT, 1, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["day", "category", "count", "proportion"] {
        return Err(line_err(WHAT, 1, "expected header day,category,count,proportion"));
    }
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| line_err(WHAT, line, e))?;
        let day: u32 = record[0].parse().map_err(|e| line_err(WHAT, line, format!("bad day: {e}")))?;
        let emotion: Emotion = record[1].parse().map_err(|e| line_err(WHAT, line, e))?;
        let value = parse_opt(WHAT, line, &record[3])?;
        let entry = days.entry(day).or_insert((Some([0.0; 10]), [false; 10]));
        entry.1[emotion.index()] = true;
        match (value, entry.0.as_mut()) {
            (Some(v), Some(row)) => row[emotion.index()] = v,
            _ => entry.0 = None,
        }
    }
    days.into_iter()
        .map(|(day, (row, seen))| {
            if seen.iter().all(|&s| s) {
                Ok((day, row))
            } else {
                Err(FormatError::Invalid { what: WHAT, message: format!("day {day} lacks some categories") })
            }
        })
        .collect()
}

// series.csv

pub fn topic_label(k: usize) -> String {
    format!("topic_{}", k + 1)
}

/// Wide table `day,documents,topic_1..topic_K,anger..trust`; an empty cell
/// marks a missing day.
pub fn series_csv(series: &DailySeries) -> String {
    let mut w = csv_writer();
    let mut header = vec!["day".to_string(), "documents".to_string()];
    header.extend((0..series.num_topics).map(topic_label));
    header.extend(EMOTIONS.iter().map(|e| e.name().to_string()));
    w.write_record(&header).unwrap();
    for (i, day) in series.days().enumerate() {
        let mut row = vec![day.to_string(), series.documents[i].to_string()];
        match &series.topics[i] {
            Some(values) => row.extend(values.iter().map(|&v| num(v))),
            None => row.extend((0..series.num_topics).map(|_| String::new())),
        }
        match &series.sentiments[i] {
            Some(values) => row.extend(values.iter().map(|&v| num(v))),
            None => row.extend((0..10).map(|_| String::new())),
        }
        w.write_record(&row).unwrap();
    }
    finish(w)
}

/// Columns of a series table, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesColumns {
    pub days: Vec<u32>,
    pub labels: Vec<String>,
    pub kinds: Vec<LabelKind>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn parse_series_csv(text: &str) -> Result<SeriesColumns, FormatError> {
    const WHAT: &str = "series";
    let mut reader = csv_reader(text);
    let headers = reader.headers().map_err(|e| line_err(WHAT, 1, e))?.clone();
    if headers.len() < 2 || &headers[0] != "day" || &headers[1] != "documents" {
        return Err(line_err(WHAT, 1, "expected header starting with day,documents"));
    }
    let labels: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let kinds = labels
        .iter()
        .map(|l| {
            if l.parse::<Emotion>().is_ok() {
                Ok(LabelKind::Sentiment)
            } else if l.starts_with("topic_") {
                Ok(LabelKind::Topic)
            } else {
                Err(line_err(WHAT, 1, format!("unknown column {l:?}")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut days = Vec::new();
    let mut values = vec![Vec::new(); labels.len()];
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| line_err(WHAT, line, e))?;
        days.push(record[0].parse().map_err(|e| line_err(WHAT, line, format!("bad day: {e}")))?);
        for (c, column) in values.iter_mut().enumerate() {
            column.push(parse_opt(WHAT, line, &record[c + 2])?);
        }
    }
    Ok(SeriesColumns { days, labels, kinds, values })
}

// curves.csv

pub fn curves_csv(curves: &[(String, SmoothedCurve)]) -> String {
    let mut w = csv_writer();
    w.write_record(["series", "x", "y"]).unwrap();
    for (label, curve) in curves {
        for (x, y) in curve.grid.iter().zip(&curve.fitted) {
            w.write_record([label.clone(), num(*x), num(*y)]).unwrap();
        }
    }
    finish(w)
}

// heatmap.csv

/// Correlations with rows and columns both in dendrogram leaf order.
pub fn heatmap_csv(matrix: &CorrelationMatrix, order: &[usize]) -> String {
    let mut w = csv_writer();
    let mut header = vec!["label".to_string()];
    header.extend(order.iter().map(|&i| matrix.labels[i].clone()));
    w.write_record(&header).unwrap();
    for &i in order {
        let mut row = vec![matrix.labels[i].clone()];
        row.extend(order.iter().map(|&j| opt(matrix.values[i][j])));
        w.write_record(&row).unwrap();
    }
    finish(w)
}

// tree.json

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub labels: Vec<String>,
    pub linkage: crate::correlate::Linkage,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<String>,
    /// Labels left out because some correlation with them is undefined.
    pub dropped: Vec<String>,
}

impl TreeFile {
    pub fn new(tree: &ClusterTree, dropped: Vec<String>) -> Self {
        TreeFile {
            labels: tree.labels.clone(),
            linkage: tree.linkage,
            merges: tree.merges.clone(),
            leaf_order: tree.leaf_labels().into_iter().map(str::to_string).collect(),
            dropped,
        }
    }
}

// mds.csv

/// `label,kind,x,y,nearest_sentiment`; sentiments list themselves as nearest.
pub fn mds_csv(embedding: &MdsEmbedding, kinds: &[LabelKind], nearest: &BTreeMap<String, String>) -> String {
    let mut w = csv_writer();
    w.write_record(["label", "kind", "x", "y", "nearest_sentiment"]).unwrap();
    for (i, label) in embedding.labels.iter().enumerate() {
        let colour = match kinds[i] {
            LabelKind::Sentiment => label.clone(),
            LabelKind::Topic => nearest.get(label).cloned().unwrap_or_default(),
        };
        let [x, y] = embedding.coords[i];
        w.write_record([label.clone(), kinds[i].name().to_string(), num(x), num(y), colour]).unwrap();
    }
    finish(w)
}

// topics.json and wordclouds.json

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub document_blocks: usize,
    pub word_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedWord {
    pub word: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub label: String,
    pub block: u32,
    pub tokens: u64,
    pub top_words: Vec<WeightedWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsFile {
    pub level: usize,
    pub level_choice: LevelChoice,
    pub num_topics: usize,
    pub description_length: f64,
    pub hierarchy: Vec<LevelSummary>,
    pub topics: Vec<TopicSummary>,
    pub vocabulary: Vec<String>,
    pub documents: Vec<DocumentRef>,
    pub word_given_topic: Vec<Vec<f64>>,
    pub topic_given_doc: Vec<Vec<f64>>,
    /// Block assignments per level, finest first.
    pub partitions: Vec<Vec<u32>>,
    /// Best description length after initialization and after each sweep.
    pub trace: Vec<f64>,
}

impl TopicsFile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &TopicModel,
        state: &BlockState,
        level_choice: LevelChoice,
        vocabulary: &Vocabulary,
        documents: Vec<DocumentRef>,
        trace: Vec<f64>,
    ) -> Self {
        let topics = (0..model.num_topics())
            .map(|k| TopicSummary {
                label: topic_label(k),
                block: model.topic_blocks[k],
                tokens: model.topic_mass[k],
                top_words: weighted_words(model, vocabulary, k, SUMMARY_WORDS),
            })
            .collect();
        TopicsFile {
            level: model.level,
            level_choice,
            num_topics: model.num_topics(),
            description_length: state.description_length,
            hierarchy: state
                .levels
                .iter()
                .enumerate()
                .map(|(level, l)| {
                    let (document_blocks, word_blocks) = l.block_counts();
                    LevelSummary { level, document_blocks, word_blocks }
                })
                .collect(),
            topics,
            vocabulary: vocabulary.tokens.clone(),
            documents,
            word_given_topic: model.word_given_topic.clone(),
            topic_given_doc: model.topic_given_doc.clone(),
            partitions: state.partitions(),
            trace,
        }
    }
}

fn weighted_words(model: &TopicModel, vocabulary: &Vocabulary, k: usize, n: usize) -> Vec<WeightedWord> {
    model
        .top_words(k, n)
        .into_iter()
        .map(|(w, probability)| WeightedWord { word: vocabulary.token(w).to_string(), probability })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloud {
    pub topic: String,
    pub words: Vec<WeightedWord>,
}

pub fn wordclouds(model: &TopicModel, vocabulary: &Vocabulary) -> Vec<WordCloud> {
    (0..model.num_topics())
        .map(|k| WordCloud { topic: topic_label(k), words: weighted_words(model, vocabulary, k, WORDCLOUD_SIZE) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::SegmentFormat;

    #[test]
    fn histogram_fractions() {
        let report = AnnotationReport {
            histogram: [(1, 2), (2, 1)].into_iter().collect(),
            annotated_posts: 2,
            ..Default::default()
        };
        assert_eq!(day_histogram_csv(&report), "day,mention_count,fraction_of_posts_mentioning\n1,2,1\n2,1,0.5\n");
        assert_eq!(day_histogram_csv(&AnnotationReport::default()), "day,mention_count,fraction_of_posts_mentioning\n");
    }

    #[test]
    fn sentiment_round_trip() {
        let mut a = EmotionCounts { day: 1, ..Default::default() };
        a.counts[3] = 2;
        a.counts[8] = 1;
        a.emotion_carrying_total = 2;
        let b = EmotionCounts { day: 4, ..Default::default() };
        let text = sentiment_csv(&[a, b], Denominator::Memberships);
        assert!(text.starts_with("day,category,count,proportion\n1,anger,0,0\n"));
        assert!(text.contains("1,fear,2,0.6666666666666666\n"));
        assert!(text.contains("4,trust,0,NA\n"));
        let back = parse_sentiment_csv(&text).unwrap();
        assert_eq!(back[0], (1, a.proportions(Denominator::Memberships)));
        assert_eq!(back[1], (4, None));
    }

    #[test]
    fn series_round_trip() {
        let series = DailySeries {
            t_max: 3,
            num_topics: 2,
            documents: vec![2, 0, 1],
            topics: vec![Some(vec![0.1, 0.9]), None, Some(vec![1.0 / 3.0, 2.0 / 3.0])],
            sentiments: vec![None, None, Some([0.1; 10])],
        };
        let text = series_csv(&series);
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "day,documents,topic_1,topic_2,anger,anticipation,disgust,fear,joy,negative,positive,sadness,surprise,trust"
        );
        assert_eq!(text.lines().nth(2).unwrap(), "2,0,,,,,,,,,,,,");
        let cols = parse_series_csv(&text).unwrap();
        assert_eq!(cols.days, [1, 2, 3]);
        assert_eq!(cols.values[1], [Some(0.9), None, Some(2.0 / 3.0)]);
        assert_eq!(cols.kinds[0], LabelKind::Topic);
        assert_eq!(cols.kinds[2], LabelKind::Sentiment);
        assert_eq!(cols.values[2], [None, None, Some(0.1)]);
    }

    #[test]
    fn malformed_files_name_the_line() {
        let err = parse_series_csv("day,documents,topic_1\n1,2,x\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_sentiment_csv("day,category,count,proportion\n1,fear,1,0.5\n").is_err());
        assert!(parse_segments_jsonl("{}\n").is_err());
    }

    #[test]
    fn segments_round_trip() {
        let segs = vec![DaySegment {
            post_id: "p1".into(),
            author: "a".into(),
            day: None,
            text: "hi, \"there\"".into(),
            format: SegmentFormat::TitleOnly,
        }];
        let text = segments_jsonl(&segs);
        assert_eq!(
            text,
            "{\"post_id\":\"p1\",\"author\":\"a\",\"day\":null,\"text\":\"hi, \\\"there\\\"\",\"format\":\"title_only\"}\n"
        );
        assert_eq!(parse_segments_jsonl(&text).unwrap(), segs);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456789.125, 0.0, 0.1081015281015281] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
            assert_eq!(serde_json::from_str::<f64>(&serde_json::to_string(&v).unwrap()).unwrap(), v);
        }
    }
}
