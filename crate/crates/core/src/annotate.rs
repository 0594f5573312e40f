//! Day annotation of journal-style posts.
//!
//! A post is split at every day marker. Two marker grammars exist and a post
//! uses exactly one of them:
//!
//! * relative markers, `Day 3`, `day #4`, `Days 3-5` (ranges resolve to the
//!   midpoint, rounding half up);
//! * calendar dates, `March 3`, `3 Mar`, `3/14`, `3/14/2020`, converted to a
//!   day offset from the first date mentioned in the post (that date is day 1).
//!
//! Text ahead of the first marker is annotated with the day named in the
//! title if there is one, otherwise it gets no day. Posts without any marker
//! and without a title day are discarded.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RawPost;

/// Year assumed for dates written without one.
pub const DEFAULT_YEAR: i32 = 2020;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostFormat {
    DailyJournal,
    AbsoluteDate,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentFormat {
    DailyJournal,
    AbsoluteDate,
    TitleOnly,
}

/// A span of one post annotated with a single day. `day == None` marks text
/// written before any day reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySegment {
    pub post_id: String,
    pub author: String,
    pub day: Option<u32>,
    pub text: String,
    pub format: SegmentFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("post {0} has no day or date marker and no title day")]
    NotAnnotatable(String),
}

/// Piece of a post body: either a consumed marker or the text between markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece<'a> {
    Marker { text: &'a str, day: u32 },
    Text { text: &'a str, day: Option<u32> },
}

impl Piece<'_> {
    pub fn as_str(&self) -> &str {
        match self {
            Piece::Marker { text, .. } | Piece::Text { text, .. } => text,
        }
    }
}

/// Per-corpus annotation statistics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub daily_journal: usize,
    pub absolute_date: usize,
    pub none: usize,
    pub segments: usize,
    /// Distinct `(post, day)` pairs over all emitted segments.
    pub day_mentions: usize,
    /// Day number to the number of distinct posts with a segment on that day.
    pub histogram: BTreeMap<u32, usize>,
    /// Posts that produced at least one segment.
    pub annotated_posts: usize,
    pub distinct_authors: usize,
    /// `Day 0` markers, re-mapped to day 1.
    pub day_zero_markers: usize,
    /// Calendar dates earlier than the post's first date, clamped to day 1.
    pub clamped_dates: usize,
    pub discarded_post_ids: Vec<String>,
}

impl AnnotationReport {
    pub fn posts(&self) -> usize {
        self.daily_journal + self.absolute_date + self.none
    }
}

fn day_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bdays?\s*#?\s*(\d{1,4})(?:\s*(?:[-–—]+|to)\s*(\d{1,4}))?\b").unwrap()
    })
}

const MONTH: &str = r"(jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\.?";

fn date_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let pattern = format!(
            r"(?i)\b(?:{MONTH}\s+(\d{{1,2}})(?:st|nd|rd|th)?(?:,?\s+(\d{{4}}))?|(\d{{1,2}})(?:st|nd|rd|th)?\s+(?:of\s+)?{MONTH}(?:,?\s+(\d{{4}}))?|(\d{{1,2}})/(\d{{1,2}})(?:/(\d{{4}}|\d{{2}}))?)\b",
        );
        Regex::new(&pattern).unwrap()
    })
}

fn month_number(name: &str) -> u32 {
    let lower = name.to_ascii_lowercase();
    const NAMES: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
    NAMES.iter().position(|m| lower.starts_with(m)).expect("regex only admits month names") as u32 + 1
}

/// Round-half-up midpoint of a day range.
pub fn range_midpoint(a: u32, b: u32) -> u32 {
    (a + b).div_ceil(2)
}

#[derive(Debug, Clone, Copy)]
struct DayMarker {
    start: usize,
    end: usize,
    day: u32,
    zero: bool,
}

fn day_markers(text: &str) -> Vec<DayMarker> {
    day_regex()
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).unwrap();
            let a: u32 = c[1].parse().unwrap();
            let raw = match c.get(2) {
                Some(b) => range_midpoint(a, b.as_str().parse().unwrap()),
                None => a,
            };
            DayMarker { start: whole.start(), end: whole.end(), day: raw.max(1), zero: raw == 0 }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct DateMarker {
    start: usize,
    end: usize,
    date: NaiveDate,
}

fn date_markers(text: &str) -> Vec<DateMarker> {
    date_regex()
        .captures_iter(text)
        .filter_map(|c| {
            let whole = c.get(0).unwrap();
            let num = |i: usize| c.get(i).map(|m| m.as_str().parse::<u32>().unwrap());
            let year = |i: usize| {
                c.get(i).map_or(DEFAULT_YEAR, |m| {
                    let y: i32 = m.as_str().parse().unwrap();
                    if m.as_str().len() == 2 { 2000 + y } else { y }
                })
            };
            let (y, m, d) = if let Some(month) = c.get(1) {
                (year(3), month_number(month.as_str()), num(2)?)
            } else if let Some(month) = c.get(5) {
                (year(6), month_number(month.as_str()), num(4)?)
            } else {
                (year(9), num(7)?, num(8)?)
            };
            NaiveDate::from_ymd_opt(y, m, d).map(|date| DateMarker { start: whole.start(), end: whole.end(), date })
        })
        .collect()
}

/// Day named in a title, if any (first relative marker).
pub fn title_day(title: &str) -> Option<u32> {
    day_markers(title).first().map(|m| m.day)
}

pub fn classify_format(post: &RawPost) -> PostFormat {
    if day_regex().is_match(&post.body) || day_regex().is_match(&post.title) {
        PostFormat::DailyJournal
    } else if !date_markers(&post.body).is_empty() {
        PostFormat::AbsoluteDate
    } else {
        PostFormat::None
    }
}

#[derive(Debug, Default)]
struct Flags {
    day_zero: usize,
    clamped: usize,
}

/// Lossless decomposition of the post body into markers and text pieces.
/// Concatenating `Piece::as_str` over the result reproduces the body exactly.
pub fn split_pieces(post: &RawPost) -> Vec<Piece<'_>> {
    split_with_flags(post, &mut Flags::default())
}

fn split_with_flags<'a>(post: &'a RawPost, flags: &mut Flags) -> Vec<Piece<'a>> {
    let body = post.body.as_str();
    let markers: Vec<(usize, usize, u32)> = match classify_format(post) {
        PostFormat::DailyJournal => day_markers(body)
            .into_iter()
            .map(|m| {
                flags.day_zero += m.zero as usize;
                (m.start, m.end, m.day)
            })
            .collect(),
        PostFormat::AbsoluteDate => {
            let dates = date_markers(body);
            let first = dates[0].date;
            dates
                .into_iter()
                .map(|m| {
                    let offset = (m.date - first).num_days();
                    if offset < 0 {
                        flags.clamped += 1;
                    }
                    (m.start, m.end, (offset.max(0) + 1) as u32)
                })
                .collect()
        }
        PostFormat::None => Vec::new(),
    };
    let mut pieces = Vec::with_capacity(2 * markers.len() + 1);
    let mut cursor = 0;
    let mut current = title_day(&post.title);
    for (start, end, day) in markers {
        if start > cursor {
            pieces.push(Piece::Text { text: &body[cursor..start], day: current });
        }
        pieces.push(Piece::Marker { text: &body[start..end], day });
        current = Some(day);
        cursor = end;
    }
    if cursor < body.len() {
        pieces.push(Piece::Text { text: &body[cursor..], day: current });
    }
    pieces
}

/// Separator punctuation left between a marker and its text (`Day 1: ...`).
fn clean_segment_text(raw: &str) -> &str {
    raw.trim()
        .trim_start_matches(|c: char| matches!(c, ':' | '-' | '–' | '—' | ',' | '.' | ')' | ';') || c.is_whitespace())
        .trim_end()
}

pub fn annotate(post: &RawPost) -> Result<Vec<DaySegment>, AnnotateError> {
    annotate_with_flags(post, &mut Flags::default())
}

fn annotate_with_flags(post: &RawPost, flags: &mut Flags) -> Result<Vec<DaySegment>, AnnotateError> {
    let format = classify_format(post);
    if format == PostFormat::None {
        return Err(AnnotateError::NotAnnotatable(post.id.clone()));
    }
    let pieces = split_with_flags(post, flags);
    let has_body_marker = pieces.iter().any(|p| matches!(p, Piece::Marker { .. }));
    let seg_format = match format {
        PostFormat::AbsoluteDate => SegmentFormat::AbsoluteDate,
        _ if has_body_marker => SegmentFormat::DailyJournal,
        _ => SegmentFormat::TitleOnly,
    };
    Ok(pieces
        .into_iter()
        .filter_map(|p| match p {
            Piece::Text { text, day } => Some((clean_segment_text(text), day)),
            Piece::Marker { .. } => None,
        })
        .filter(|(text, _)| !text.is_empty())
        .map(|(text, day)| DaySegment {
            post_id: post.id.clone(),
            author: post.author.clone(),
            day,
            text: text.to_string(),
            format: seg_format,
        })
        .collect())
}

pub fn annotate_corpus(posts: &[RawPost]) -> (Vec<DaySegment>, AnnotationReport) {
    let mut report = AnnotationReport::default();
    let mut segments = Vec::new();
    let mut authors = BTreeSet::new();
    let mut flags = Flags::default();
    for post in posts {
        match classify_format(post) {
            PostFormat::DailyJournal => report.daily_journal += 1,
            PostFormat::AbsoluteDate => report.absolute_date += 1,
            PostFormat::None => report.none += 1,
        }
        match annotate_with_flags(post, &mut flags) {
            Ok(segs) => {
                if segs.is_empty() {
                    continue;
                }
                report.annotated_posts += 1;
                authors.insert(post.author.clone());
                let days: BTreeSet<u32> = segs.iter().filter_map(|s| s.day).collect();
                report.day_mentions += days.len();
                for day in days {
                    *report.histogram.entry(day).or_default() += 1;
                }
                segments.extend(segs);
            }
            Err(AnnotateError::NotAnnotatable(id)) => report.discarded_post_ids.push(id),
        }
    }
    report.segments = segments.len();
    report.distinct_authors = authors.len();
    report.day_zero_markers = flags.day_zero;
    report.clamped_dates = flags.clamped;
    (segments, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(title: &str, body: &str) -> RawPost {
        RawPost {
            id: "p".into(),
            author: "u".into(),
            flair: "Tested Positive".into(),
            title: title.into(),
            body: body.into(),
            created_utc: 0,
        }
    }

    fn days_texts(segs: &[DaySegment]) -> Vec<(Option<u32>, &str)> {
        segs.iter().map(|s| (s.day, s.text.as_str())).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_format(&post("", "Day 1: fever. Day 2: cough.")), PostFormat::DailyJournal);
        assert_eq!(
            classify_format(&post("", "March 3 I felt off. March 5 got worse.")),
            PostFormat::AbsoluteDate
        );
        assert_eq!(classify_format(&post("", "I tested positive, feeling scared.")), PostFormat::None);
        // relative markers win over dates
        assert_eq!(classify_format(&post("", "March 3 was day 2 for me")), PostFormat::DailyJournal);
        assert_eq!(classify_format(&post("Day 7 update", "tired")), PostFormat::DailyJournal);
    }

    #[test]
    fn daily_journal_split() {
        let segs = annotate(&post("", "Day 1: fever started. Day 2: cough worse.")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(1), "fever started."), (Some(2), "cough worse.")]);
        assert!(segs.iter().all(|s| s.format == SegmentFormat::DailyJournal));
    }

    #[test]
    fn title_day_covers_unmarked_body() {
        let segs = annotate(&post("Day 7 update", "Still tired, no fever.")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(7), "Still tired, no fever.")]);
        assert_eq!(segs[0].format, SegmentFormat::TitleOnly);
    }

    #[test]
    fn range_uses_midpoint() {
        let segs = annotate(&post("", "Days 3-5 I mostly slept.")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(4), "I mostly slept.")]);
        assert_eq!(range_midpoint(3, 4), 4);
        assert_eq!(range_midpoint(1, 2), 2);
        assert_eq!(range_midpoint(2, 2), 2);
        let segs = annotate(&post("", "day 6 to 9: awful")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(8), "awful")]);
    }

    #[test]
    fn absolute_dates_offset_from_first() {
        let segs = annotate(&post("", "March 3 chills. March 5 worse.")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(1), "chills."), (Some(3), "worse.")]);
        assert!(segs.iter().all(|s| s.format == SegmentFormat::AbsoluteDate));
    }

    #[test]
    fn date_forms() {
        let segs = annotate(&post("", "Got sick 3/30. On april 2nd fever. 4 Apr, 2020 better. 4/10/20 done")).unwrap();
        assert_eq!(
            days_texts(&segs),
            [(None, "Got sick"), (Some(1), "On"), (Some(4), "fever."), (Some(6), "better."), (Some(12), "done")]
        );
    }

    #[test]
    fn invalid_calendar_dates_are_not_markers() {
        assert_eq!(classify_format(&post("", "ratio 2/30 and 13/5")), PostFormat::None);
    }

    #[test]
    fn prefix_without_title_day_is_na() {
        let segs = annotate(&post("My story", "Tested Monday. Day 1: fever")).unwrap();
        assert_eq!(days_texts(&segs), [(None, "Tested Monday."), (Some(1), "fever")]);
        let segs = annotate(&post("Day 4 of this", "Tested Monday. Day 5: fever")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(4), "Tested Monday."), (Some(5), "fever")]);
    }

    #[test]
    fn unannotatable_post_is_discarded() {
        assert_eq!(
            annotate(&post("help", "I tested positive, feeling scared.")),
            Err(AnnotateError::NotAnnotatable("p".into()))
        );
    }

    #[test]
    fn day_zero_maps_to_one() {
        let (segs, report) = annotate_corpus(&[post("", "Day 0 exposure. Day 1 fever")]);
        assert_eq!(days_texts(&segs), [(Some(1), "exposure."), (Some(1), "fever")]);
        assert_eq!(report.day_zero_markers, 1);
        assert_eq!(report.histogram, BTreeMap::from([(1, 1)]));
    }

    #[test]
    fn flashbacks_kept_as_written() {
        let segs = annotate(&post("", "Day 5 bad. Day 2 was fine actually. Day 6 better")).unwrap();
        let days: Vec<_> = segs.iter().map(|s| s.day.unwrap()).collect();
        assert_eq!(days, [5, 2, 6]);
        let (_, report) = annotate_corpus(&[post("", "April 5 ok. April 2 sick.")]);
        assert_eq!(report.clamped_dates, 1);
    }

    #[test]
    fn words_containing_day_are_not_markers() {
        assert_eq!(classify_format(&post("", "today 5 people called, someday 3")), PostFormat::None);
    }

    #[test]
    fn empty_segments_dropped() {
        let segs = annotate(&post("", "Day 1: Day 2: cough")).unwrap();
        assert_eq!(days_texts(&segs), [(Some(2), "cough")]);
    }

    #[test]
    fn corpus_fixture_counts() {
        let mut a = post("", "Day 1 fever. Day 2 cough.");
        a.id = "a".into();
        let mut b = post("", "Tested on Friday. March 3 chills started.");
        b.id = "b".into();
        b.author = "v".into();
        let mut c = post("", "Scared, no details.");
        c.id = "c".into();
        let (segs, report) = annotate_corpus(&[a, b, c]);
        assert_eq!(segs.len(), 4);
        assert_eq!((report.daily_journal, report.absolute_date, report.none), (1, 1, 1));
        assert_eq!(report.segments, 4);
        assert_eq!(report.discarded_post_ids, ["c"]);
        assert_eq!(report.annotated_posts, 2);
        assert_eq!(report.distinct_authors, 2);
        assert_eq!(report.histogram, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(report.day_mentions, 3);
    }

    #[test]
    fn empty_corpus() {
        let (segs, report) = annotate_corpus(&[]);
        assert!(segs.is_empty());
        assert_eq!(report, AnnotationReport::default());
    }

    #[test]
    fn single_marker_post() {
        let (segs, report) = annotate_corpus(&[post("", "Day 1")]);
        assert!(segs.is_empty());
        assert_eq!(report.histogram.len(), 0);
        let (segs, report) = annotate_corpus(&[post("", "Day 1 sore throat")]);
        assert_eq!(segs.len(), 1);
        assert_eq!(report.histogram, BTreeMap::from([(1, 1)]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn body_strategy() -> impl Strategy<Value = String> {
            let chunk = prop_oneof![
                Just("Day 1".to_string()),
                Just("day 3-5: ".to_string()),
                Just("Day #12".to_string()),
                Just("March 3".to_string()),
                Just("4/2".to_string()),
                Just(" fever ".to_string()),
                Just("cough, ".to_string()),
                Just("–".to_string()),
                Just("\n".to_string()),
                "[a-z ]{0,8}",
            ];
            prop::collection::vec(chunk, 0..12).prop_map(|v| v.concat())
        }

        proptest! {
            #[test]
            fn split_is_lossless(title in "(Day 2 )?[a-z ]{0,6}", body in body_strategy()) {
                let p = post(&title, &body);
                let rebuilt: String = split_pieces(&p).iter().map(Piece::as_str).collect();
                prop_assert_eq!(rebuilt, body);
                if let Ok(segs) = annotate(&p) {
                    for s in &segs {
                        prop_assert!(!s.text.trim().is_empty());
                        prop_assert!(s.day.is_none_or(|d| d >= 1));
                        prop_assert!(p.body.contains(&s.text));
                    }
                }
            }

            #[test]
            fn report_partitions_posts(bodies in prop::collection::vec(body_strategy(), 0..8)) {
                let posts: Vec<_> = bodies.iter().map(|b| post("", b)).collect();
                let (_, report) = annotate_corpus(&posts);
                prop_assert_eq!(report.posts(), posts.len());
            }
        }
    }
}
