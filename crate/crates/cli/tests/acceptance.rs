//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use timeline_core::annotate::{annotate_corpus, split_pieces, SegmentFormat};
use timeline_core::correlate::{cluster, mds, pearson, to_dissimilarity, CorrelationMatrix, LabelKind, Linkage};
use timeline_core::hsbm::{description_length, extract_topics, infer, BipartiteGraph, BlockState, InferConfig};
use timeline_core::ingest::{fetch_posts, IngestConfig};
use timeline_core::metrics::nmi;
use timeline_core::pipeline::STAGES;
use timeline_core::sentiment::{default_exclusions, score_corpus, Denominator, SentimentLexicon};
use timeline_core::series::{even_grid, loess};
use timeline_core::text::{build_corpus, BagOfWords, Stoplist};
use timeline_core::DaySegment;

type Outcome = Result<String, String>;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn check(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn annotation_grammar() -> Outcome {
    let start = Instant::now();
    let posts = fetch_posts(&IngestConfig::local(data("annotation_fixture.jsonl"))).map_err(|e| e.to_string())?;
    check(posts.posts.len() == 15, || format!("fixture has {} posts", posts.posts.len()))?;
    let (segments, report) = annotate_corpus(&posts.posts);

    use SegmentFormat::{AbsoluteDate as A, DailyJournal as J, TitleOnly as T};
    let expected: Vec<(&str, Option<u32>, &str, SegmentFormat)> = vec![
        ("p01", Some(1), "fever and chills.", J),
        ("p01", Some(2), "cough.", J),
        ("p02", None, "Background first.", J),
        ("p02", Some(3), "headache.", J),
        ("p03", Some(4), "tired all week.", J),
        ("p03", Some(8), "better.", J),
        ("p04", Some(4), "aches.", J),
        ("p05", Some(6), "Lost my smell today.", T),
        ("p06", Some(2), "Woke up sick.", J),
        ("p06", Some(4), "worse.", J),
        ("p07", Some(1), "fever started.", A),
        ("p07", Some(3), "cough.", A),
        ("p07", Some(6), "smell gone.", A),
        ("p08", Some(1), "sick.", A),
        ("p08", Some(1), "was when I was exposed.", A),
        ("p11", Some(1), "exposed.", J),
        ("p11", Some(1), "fever.", J),
        ("p12", Some(5), "fever gone.", J),
        ("p12", Some(2), "was the worst.", J),
        ("p13", Some(1), "tired.", A),
        ("p13", Some(3), "better.", A),
        ("p14", Some(7), "nausea.", J),
        ("p15", None, "Feeling fine until", J),
    ];
    let got: Vec<(&str, Option<u32>, &str, SegmentFormat)> =
        segments.iter().map(|s: &DaySegment| (s.post_id.as_str(), s.day, s.text.as_str(), s.format)).collect();
    if got != expected {
        let first = got.iter().zip(&expected).position(|(a, b)| a != b).unwrap_or(got.len().min(expected.len()));
        return Err(format!(
            "segment {first} differs: got {:?}, expected {:?} ({} vs {} segments)",
            got.get(first),
            expected.get(first),
            got.len(),
            expected.len()
        ));
    }
    check((report.daily_journal, report.absolute_date, report.none) == (10, 3, 2), || {
        format!("format counts {:?}", (report.daily_journal, report.absolute_date, report.none))
    })?;
    let histogram: BTreeMap<u32, usize> = [(1, 5), (2, 3), (3, 3), (4, 3), (5, 1), (6, 2), (7, 1), (8, 1)].into();
    check(report.histogram == histogram, || format!("histogram {:?}", report.histogram))?;
    check(
        (report.annotated_posts, report.day_mentions, report.distinct_authors) == (13, 19, 12),
        || format!("posts/mentions/authors {:?}", (report.annotated_posts, report.day_mentions, report.distinct_authors)),
    )?;
    check((report.day_zero_markers, report.clamped_dates) == (1, 1), || "day-zero/clamp flags".into())?;
    check(report.discarded_post_ids == ["p09", "p10"], || format!("discarded {:?}", report.discarded_post_ids))?;
    let csv = timeline_core::artifacts::day_histogram_csv(&report);
    check(csv.lines().nth(1) == Some(&*format!("1,5,{}", 5.0 / 13.0)), || format!("histogram csv {csv}"))?;
    for post in &posts.posts {
        let joined: String = split_pieces(post).iter().map(|p| p.as_str()).collect();
        check(joined == post.body, || format!("split of {} is lossy", post.id))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{} segments, {:?}", segments.len(), start.elapsed()))
}

fn planted_graph() -> BipartiteGraph {
    let bags: Vec<BagOfWords> = (0..20)
        .map(|d| {
            let base = if d < 10 { 0 } else { 2 };
            BagOfWords { segment: d, counts: vec![(base, 15), (base + 1, 15)] }
        })
        .collect();
    BipartiteGraph::from_bags(&bags, 4)
}

fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let graph = planted_graph();
    let planted = [0, 0, 1, 1];
    let mut recovered = 0;
    for seed in 0..10 {
        let run = infer(&graph, &InferConfig { seed, ..InferConfig::default() }).map_err(|e| e.to_string())?;
        let words: Vec<u32> = (0..4).map(|w| run.state.levels[0].assignment[graph.word_node(w)]).collect();
        if nmi(&words, &planted) >= 0.95 {
            recovered += 1;
        }
        check(run.trace.windows(2).all(|w| w[1] <= w[0]), || format!("seed {seed}: trace increases"))?;
        let model = extract_topics(&graph, &run.state, 0).map_err(|e| e.to_string())?;
        for row in model.word_given_topic.iter().chain(&model.topic_given_doc) {
            let sum: f64 = row.iter().sum();
            check((sum - 1.0).abs() <= 1e-9, || format!("seed {seed}: row sums to {sum}"))?;
        }
    }
    check(recovered >= 9, || format!("recovered in {recovered}/10 seeds"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{recovered}/10 seeds, {:?}", start.elapsed()))
}

fn description_length_ordering() -> Outcome {
    let graph = planted_graph();
    let mut planted: Vec<u32> = (0..20).map(|d| if d < 10 { 0 } else { 1 }).collect();
    planted.extend([2, 2, 3, 3]);
    let mut merged = vec![0u32; 20];
    merged.extend([1, 1, 1, 1]);
    let sigma = |p: Vec<u32>| -> Result<f64, String> {
        let state = BlockState::from_partitions(&graph, vec![p]).map_err(|e| e.to_string())?;
        description_length(&graph, &state).map_err(|e| e.to_string())
    };
    let (a, b) = (sigma(planted)?, sigma(merged)?);
    check(a < b, || format!("planted {a} >= merged {b}"))?;
    Ok(format!("planted {a:.4} < merged {b:.4} nats"))
}

fn sentiment_suite() -> Outcome {
    let lexicon = SentimentLexicon::load(&data("toy_emolex.txt"), &default_exclusions()).map_err(|e| e.to_string())?;
    let seg = |day: u32, text: &str| DaySegment {
        post_id: format!("x{day}"),
        author: "a".into(),
        day: Some(day),
        text: text.into(),
        format: SegmentFormat::DailyJournal,
    };
    let base = ["fever cough hope", "scared tired good", "calm grateful", "wait", "chair table"];
    let plain: Vec<DaySegment> = base.iter().enumerate().map(|(i, t)| seg(i as u32 + 1, t)).collect();
    let mut with_excluded = plain.clone();
    with_excluded.extend((0..10).map(|i| seg(i % 5 + 1, "feeling positive negative")));
    let stoplist = Stoplist::parse("");
    let total_excluded: usize = with_excluded
        .iter()
        .flat_map(|s| s.text.split_whitespace())
        .filter(|t| ["feeling", "positive", "negative"].contains(t))
        .count();
    check(total_excluded == 30, || format!("fixture holds {total_excluded} excluded tokens"))?;
    let a = score_corpus(&build_corpus(&plain, &stoplist), &plain, &lexicon);
    let b = score_corpus(&build_corpus(&with_excluded, &stoplist), &with_excluded, &lexicon);
    check(a == b, || "excluded terms changed the counts".into())?;

    let golden = fetch_posts(&IngestConfig::local(data("synthetic_posts.jsonl"))).map_err(|e| e.to_string())?;
    let (segments, _) = annotate_corpus(&golden.posts);
    let corpus = build_corpus(&segments, &Stoplist::english());
    let mut days = score_corpus(&corpus, &segments, &lexicon);
    days.extend(b);
    let mut checked = 0;
    for counts in &days {
        if let Some(p) = counts.proportions(Denominator::Memberships) {
            let sum: f64 = p.iter().sum();
            check((sum - 1.0).abs() <= 1e-9, || format!("day {} sums to {sum}", counts.day))?;
            checked += 1;
        } else {
            check(counts.memberships() == 0, || format!("day {} undefined with hits", counts.day))?;
        }
    }
    Ok(format!("{checked} non-empty days sum to 1, {total_excluded} excluded tokens contribute 0"))
}

fn numerical_oracles() -> Outcome {
    let s = |v: &[f64]| v.iter().copied().map(Some).collect::<Vec<_>>();
    for (x, y, rho) in [
        (vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], 1.0),
        (vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0], -1.0),
        (vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 3.0, 2.0, 4.0], 0.8),
    ] {
        let r = pearson(&s(&x), &s(&y)).ok_or("undefined correlation")?;
        check((r - rho).abs() <= 1e-12, || format!("pearson {r} != {rho}"))?;
    }
    let d: Vec<f64> = [1.0, 0.0, -1.0].into_iter().map(to_dissimilarity).collect();
    check(d == [0.0, 1.0, 2.0], || format!("dissimilarities {d:?}"))?;

    let points: Vec<(f64, f64)> = (1..=14).map(|x| (x as f64, 2.0 * x as f64 + 1.0)).collect();
    let grid = even_grid(1.0, 14.0, 200);
    for (span, degree) in [(0.75, 2), (0.3, 1), (1.0, 2)] {
        let curve = loess(&points, span, degree, &grid).map_err(|e| e.to_string())?;
        let worst = grid.iter().zip(&curve.fitted).map(|(x, y)| (y - (2.0 * x + 1.0)).abs()).fold(0.0, f64::max);
        check(worst <= 1e-9, || format!("loess span {span} degree {degree}: error {worst}"))?;
    }

    let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let unit = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let emb = mds(&labels, &unit, 0).map_err(|e| e.to_string())?;
    for i in 0..3 {
        for j in 0..3 {
            let [xi, yi] = emb.coords[i];
            let [xj, yj] = emb.coords[j];
            let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            check((dist - unit[i][j]).abs() <= 1e-6, || format!("distance {i}-{j} = {dist}"))?;
        }
    }
    check(emb.stress < 1e-9, || format!("stress {}", emb.stress))?;
    check(emb.stress_history.windows(2).all(|w| w[1] <= w[0]), || "stress increased".into())?;
    Ok(format!("mds stress {:e} after {} iterations", emb.stress, emb.iterations))
}

fn clustering() -> Outcome {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 1.0, 4.0, 3.0, 5.0];
    let series: Vec<Vec<Option<f64>>> = [a.to_vec(), a.map(|v| 3.0 * v + 1.0).to_vec(), a.map(|v| -v).to_vec(), a.map(|v| 7.0 - 2.0 * v).to_vec()]
        .into_iter()
        .map(|v| v.into_iter().map(Some).collect())
        .collect();
    let labels: Vec<String> = ["topic_1", "topic_2", "anger", "fear"].map(String::from).to_vec();
    let kinds = vec![LabelKind::Topic, LabelKind::Topic, LabelKind::Sentiment, LabelKind::Sentiment];
    let matrix = CorrelationMatrix::from_series(labels.clone(), kinds, &series);
    let d = matrix.dissimilarities();
    let tree = cluster(&labels, &d, Linkage::Average).map_err(|e| e.to_string())?;
    let root = tree.merges.last().ok_or("no merges")?;
    let n = labels.len();
    let members = |node: usize| -> Vec<usize> {
        let mut stack = vec![node];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.extend([tree.merges[x - n].left, tree.merges[x - n].right]);
            }
        }
        out.sort();
        out
    };
    let sides = [members(root.left), members(root.right)];
    check(sides.contains(&vec![0, 1]) && sides.contains(&vec![2, 3]), || format!("top split {sides:?}"))?;
    check(tree.merges.windows(2).all(|w| w[1].height >= w[0].height), || "merge heights not monotone".into())?;
    check(tree.merges[0].height.abs() < 1e-12 && tree.merges[1].height.abs() < 1e-12, || "within-pair height".into())?;
    let mixed = CorrelationMatrix::from_series(
        vec!["x".into(), "y".into(), "z".into()],
        vec![LabelKind::Topic; 3],
        &[a.map(Some).to_vec(), b.map(Some).to_vec(), a.map(|v| Some(v * v)).to_vec()],
    );
    let t = cluster(&mixed.labels, &mixed.dissimilarities(), Linkage::Average).map_err(|e| e.to_string())?;
    check(t.merges.windows(2).all(|w| w[1].height >= w[0].height), || "mixed heights not monotone".into())?;
    Ok(format!("top split {:?}, heights {:?}", sides, tree.merges.iter().map(|m| m.height).collect::<Vec<_>>()))
}

fn golden_run() -> Outcome {
    let start = Instant::now();
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for dir in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_timeline"))
            .args(["run", "--config"])
            .arg(data("pipeline.toml"))
            .arg("--out-dir")
            .arg(dir.path())
            .env("RUST_LOG", "warn")
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), || format!("run exited with {status}"))?;
    }
    let names: Vec<&str> = STAGES.iter().flat_map(|s| s.outputs().iter().copied()).collect();
    for name in &names {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(name)).map_err(|e| format!("{name}: {e}"));
        check(read(&dirs[0])? == read(&dirs[1])?, || format!("{name} differs between runs"))?;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{} files identical, {:?}", names.len(), start.elapsed()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("annotation grammar suite", annotation_grammar),
        ("hsbm planted recovery", planted_recovery),
        ("description-length ordering", description_length_ordering),
        ("sentiment suite", sentiment_suite),
        ("numerical oracles", numerical_oracles),
        ("clustering", clustering),
        ("end-to-end golden run", golden_run),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", criteria.len());
}
