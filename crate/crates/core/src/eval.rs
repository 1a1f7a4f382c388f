//! Artist-stratified splits, nearest-neighbor retrieval and per-task
//! precision reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tagspace::TagCorpus;

pub const DEFAULT_CUTOFF: usize = 100;

/// Default fractions proportional to the reference 122766 / 6461 / 14358
/// train / validation / test track counts.
pub fn default_fractions() -> [f64; 3] {
    let total = 122766.0 + 6461.0 + 14358.0;
    [122766.0 / total, 6461.0 / total, 14358.0 / total]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles artists with the seed and assigns each greedily to the split
/// whose track count is furthest below its target fraction. No artist ever
/// spans two splits.
pub fn stratified_split(corpus: &TagCorpus, fractions: &[f64; 3], seed: u64) -> Result<SplitSpec> {
    if fractions.iter().any(|&f| f <= 0.0) {
        return Err(Error::Param("split fractions must be positive".into()));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Param(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let mut artist_tracks: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for track in corpus.tracks() {
        let artist = corpus
            .artist_of(track)
            .ok_or_else(|| Error::Data(format!("track {track} has no artist")))?;
        artist_tracks.entry(artist).or_default().push(track);
    }
    if artist_tracks.len() < 3 {
        return Err(Error::Data(format!(
            "need at least 3 artists to stratify, found {}",
            artist_tracks.len()
        )));
    }
    let mut artists: Vec<&str> = artist_tracks.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..artists.len()).rev() {
        let j = rng.gen_range(0..=i);
        artists.swap(i, j);
    }
    let total: usize = artist_tracks.values().map(|t| t.len()).sum();
    let mut splits: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut counts = [0usize; 3];
    for artist in artists {
        // the split furthest below its target track count; this keeps every
        // partial assignment within one artist of the ideal sizes
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            let deficit = fractions[s] * total as f64 - counts[s] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = s;
            }
        }
        let tracks = &artist_tracks[artist];
        counts[best] += tracks.len();
        splits[best].extend(tracks.iter().map(|t| t.to_string()));
    }
    let [mut train, mut validation, mut test] = splits;
    train.sort();
    validation.sort();
    test.sort();
    Ok(SplitSpec {
        train,
        validation,
        test,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Param(format!("unknown metric {other:?}"))),
        }
    }
}

fn distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na * nb)
            }
        }
    }
}

/// The k nearest non-query tracks, distance ties broken by track-id order.
pub fn knn_retrieve(
    pool: &[(String, Vec<f64>)],
    query: &str,
    k: usize,
    metric: Metric,
) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Param("k must be positive".into()));
    }
    let query_vec = pool
        .iter()
        .find(|(id, _)| id == query)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Lookup(format!("query track {query} is not in the pool")))?;
    let mut scored: Vec<(f64, &str)> = pool
        .iter()
        .filter(|(id, _)| id != query)
        .map(|(id, v)| (distance(query_vec, v, metric), id.as_str()))
        .collect();
    if scored.len() < k {
        return Err(Error::Data(format!(
            "pool of {} non-query tracks cannot answer k = {k}",
            scored.len()
        )));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)));
    Ok(scored[..k].iter().map(|(_, id)| id.to_string()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Genres,
    Styles,
    Moods,
    Themes,
    Artist,
    Album,
}

pub const ALL_TASKS: [Task; 6] = [
    Task::Genres,
    Task::Styles,
    Task::Moods,
    Task::Themes,
    Task::Artist,
    Task::Album,
];

impl Task {
    pub fn tag_set(&self) -> Option<&'static str> {
        match self {
            Task::Genres => Some("genres"),
            Task::Styles => Some("styles"),
            Task::Moods => Some("moods"),
            Task::Themes => Some("themes"),
            Task::Artist | Task::Album => None,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Task::Genres => "genres",
            Task::Styles => "styles",
            Task::Moods => "moods",
            Task::Themes => "themes",
            Task::Artist => "artist",
            Task::Album => "album",
        };
        write!(f, "{s}")
    }
}

fn is_relevant(corpus: &TagCorpus, query: &str, other: &str, task: Task) -> bool {
    match task {
        Task::Artist => corpus.artist_of(query) == corpus.artist_of(other),
        Task::Album => corpus.album_of(query) == corpus.album_of(other),
        _ => {
            let set = task.tag_set().unwrap();
            let query_tags: BTreeSet<&str> = corpus.track_tags(query, set).into_iter().collect();
            corpus
                .track_tags(other, set)
                .iter()
                .any(|t| query_tags.contains(t))
        }
    }
}

/// Fraction of retrieved tracks relevant to the query. Returns None when the
/// query has no tags in the task's tag set (the query is excluded from
/// averages rather than scored zero).
pub fn precision_at_k(
    retrieved: &[String],
    query: &str,
    task: Task,
    corpus: &TagCorpus,
) -> Result<Option<f64>> {
    if retrieved.is_empty() {
        return Err(Error::Param("retrieved list is empty".into()));
    }
    if let Some(set) = task.tag_set() {
        if corpus.track_tags(query, set).is_empty() {
            return Ok(None);
        }
    }
    let hits = retrieved
        .iter()
        .filter(|r| is_relevant(corpus, query, r, task))
        .count();
    Ok(Some(hits as f64 / retrieved.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskResult {
    pub mean_precision: f64,
    /// Queries contributing to the mean.
    pub queries: usize,
    /// Queries excluded for lacking tags in the task's tag set.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub tag_set: String,
    pub lsi_topics: usize,
    /// One slot per entry of [`ALL_TASKS`]; None when no query was valid.
    pub tasks: [Option<TaskResult>; 6],
}

/// Mean precision@k over every valid query per task; the pool is the given
/// embedding set itself.
pub fn evaluate(
    pool: &[(String, Vec<f64>)],
    corpus: &TagCorpus,
    k: usize,
    metric: Metric,
) -> Result<[Option<TaskResult>; 6]> {
    if pool.is_empty() {
        return Err(Error::Data("evaluation pool is empty".into()));
    }
    if pool.len() < 2 {
        return Err(Error::Data("evaluation pool needs at least 2 tracks".into()));
    }
    let k = k.min(pool.len() - 1);
    let mut sums = [0.0; 6];
    let mut queries = [0usize; 6];
    let mut excluded = [0usize; 6];
    for (query, _) in pool {
        let retrieved = knn_retrieve(pool, query, k, metric)?;
        for (t, task) in ALL_TASKS.iter().enumerate() {
            match precision_at_k(&retrieved, query, *task, corpus)? {
                Some(p) => {
                    sums[t] += p;
                    queries[t] += 1;
                }
                None => excluded[t] += 1,
            }
        }
    }
    let mut out = [None; 6];
    for t in 0..6 {
        if queries[t] > 0 {
            out[t] = Some(TaskResult {
                mean_precision: sums[t] / queries[t] as f64,
                queries: queries[t],
                excluded: excluded[t],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub cutoff: usize,
    pub rows: Vec<EvalRow>,
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "tag_set",
    "lsi_topics",
    "prec_genres",
    "prec_styles",
    "prec_moods",
    "prec_themes",
    "prec_artists",
    "prec_album",
];

fn prec_cell(slot: &Option<TaskResult>) -> String {
    match slot {
        Some(r) => format!("{:.6}", r.mean_precision),
        None => "-".to_string(),
    }
}

impl EvaluationReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("tagtriplet-report 1\n");
        let _ = writeln!(out, "# precision at cut-off {}", self.cutoff);
        out.push_str(&REPORT_COLUMNS.join("\t"));
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}\t{}", row.tag_set, row.lsi_topics);
            for slot in &row.tasks {
                let _ = write!(out, "\t{}", prec_cell(slot));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text rendering of the same rows.
    pub fn to_text(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![REPORT_COLUMNS.iter().map(|c| c.to_string()).collect()];
        for row in &self.rows {
            let mut line = vec![row.tag_set.clone(), row.lsi_topics.to_string()];
            line.extend(row.tasks.iter().map(prec_cell));
            cells.push(line);
        }
        let mut widths = vec![0usize; REPORT_COLUMNS.len()];
        for line in &cells {
            for (i, c) in line.iter().enumerate() {
                widths[i] = widths[i].max(c.len());
            }
        }
        let mut out = format!("precision at cut-off {}\n", self.cutoff);
        for line in &cells {
            let rendered: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
                .collect();
            out.push_str(rendered.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// All 15 nonempty combinations of the four standard tag sets: 4 singles,
/// 6 pairs, 4 triples and the quadruple.
pub fn tag_set_combos() -> Vec<Vec<String>> {
    let sets = crate::tagspace::STANDARD_TAG_SETS;
    let mut combos = Vec::new();
    for mask in 1u32..(1 << sets.len()) {
        let combo: Vec<String> = sets
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, s)| s.to_string())
            .collect();
        combos.push(combo);
    }
    combos.sort_by_key(|c| (c.len(), c.join("+")));
    combos
}

pub fn combo_label(combo: &[String]) -> String {
    combo.join("+")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagspace::TagAssignment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_from(rows: &[(&str, &str, &str, &str, &str)]) -> TagCorpus {
        let assignments = rows
            .iter()
            .map(|(track, artist, album, set, tag)| TagAssignment {
                track_id: track.to_string(),
                artist_id: artist.to_string(),
                album_id: album.to_string(),
                tag_set: set.to_string(),
                tag: tag.to_string(),
            })
            .collect();
        TagCorpus::from_assignments(assignments).unwrap()
    }

    /// One track per artist/album, single genre tag per track.
    fn simple_corpus(n: usize, genre_of: impl Fn(usize) -> String) -> TagCorpus {
        let rows: Vec<TagAssignment> = (0..n)
            .map(|i| TagAssignment {
                track_id: format!("t{i:03}"),
                artist_id: format!("ar{i:03}"),
                album_id: format!("al{i:03}"),
                tag_set: "genres".to_string(),
                tag: genre_of(i),
            })
            .collect();
        TagCorpus::from_assignments(rows).unwrap()
    }

    #[test]
    fn three_artists_get_one_split_each() {
        let corpus = corpus_from(&[
            ("t1", "a1", "l1", "genres", "rock"),
            ("t2", "a2", "l2", "genres", "rock"),
            ("t3", "a3", "l3", "genres", "rock"),
        ]);
        let thirds = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let split = stratified_split(&corpus, &thirds, 5).unwrap();
        assert_eq!(split.train.len(), 1);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn too_few_artists_is_an_error() {
        let corpus = corpus_from(&[
            ("t1", "a1", "l1", "genres", "rock"),
            ("t2", "a2", "l2", "genres", "rock"),
        ]);
        assert!(matches!(
            stratified_split(&corpus, &default_fractions(), 0),
            Err(Error::Data(_))
        ));
    }

    fn multi_artist_corpus(n_artists: usize, seed: u64) -> TagCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut track = 0;
        for a in 0..n_artists {
            let n_tracks = rng.gen_range(1..8);
            for _ in 0..n_tracks {
                rows.push(TagAssignment {
                    track_id: format!("t{track:04}"),
                    artist_id: format!("ar{a:03}"),
                    album_id: format!("al{a:03}"),
                    tag_set: "genres".to_string(),
                    tag: format!("g{}", a % 4),
                });
                track += 1;
            }
        }
        TagCorpus::from_assignments(rows).unwrap()
    }

    #[test]
    fn splits_are_disjoint_artist_pure_and_complete() {
        for seed in 0..20 {
            let corpus = multi_artist_corpus(30, seed);
            let split = stratified_split(&corpus, &default_fractions(), seed).unwrap();
            let mut all: Vec<&String> = split
                .train
                .iter()
                .chain(&split.validation)
                .chain(&split.test)
                .collect();
            all.sort();
            let expected: Vec<&String> = corpus.tracks().iter().collect();
            assert_eq!(all, expected);
            for (name, part) in [
                ("train", &split.train),
                ("validation", &split.validation),
                ("test", &split.test),
            ] {
                let artists: BTreeSet<&str> =
                    part.iter().map(|t| corpus.artist_of(t).unwrap()).collect();
                for other in [&split.train, &split.validation, &split.test] {
                    if std::ptr::eq(part, other) {
                        continue;
                    }
                    for t in other.iter() {
                        assert!(
                            !artists.contains(corpus.artist_of(t).unwrap()),
                            "artist leaks out of {name} at seed {seed}"
                        );
                    }
                }
            }
        }
    }

    /// Reference greedy assigner written independently of the implementation:
    /// walks the same shuffled artist order and tracks per-split deficits.
    fn oracle_split_sizes(corpus: &TagCorpus, fractions: &[f64; 3], seed: u64) -> [usize; 3] {
        let mut artist_tracks: BTreeMap<&str, usize> = BTreeMap::new();
        for track in corpus.tracks() {
            *artist_tracks
                .entry(corpus.artist_of(track).unwrap())
                .or_default() += 1;
        }
        let mut artists: Vec<&str> = artist_tracks.keys().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..artists.len()).rev() {
            let j = rng.gen_range(0..=i);
            artists.swap(i, j);
        }
        let total: usize = artist_tracks.values().sum();
        let mut counts = [0usize; 3];
        for artist in artists {
            let deficits: Vec<f64> = (0..3)
                .map(|s| fractions[s] * total as f64 - counts[s] as f64)
                .collect();
            // min_by on the reversed comparison keeps the lowest index on ties
            let best = (0..3)
                .min_by(|&a, &b| deficits[b].partial_cmp(&deficits[a]).unwrap())
                .unwrap();
            counts[best] += artist_tracks[artist];
        }
        counts
    }

    #[test]
    fn split_sizes_match_reference_greedy_assigner() {
        let fractions = default_fractions();
        for seed in 0..10 {
            let corpus = multi_artist_corpus(100, seed);
            let split = stratified_split(&corpus, &fractions, seed).unwrap();
            let oracle = oracle_split_sizes(&corpus, &fractions, seed);
            assert_eq!(
                [split.train.len(), split.validation.len(), split.test.len()],
                oracle,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let corpus = multi_artist_corpus(40, 3);
        let a = stratified_split(&corpus, &default_fractions(), 11).unwrap();
        let b = stratified_split(&corpus, &default_fractions(), 11).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&corpus, &default_fractions(), 12).unwrap();
        assert_ne!(a, c);
    }

    fn pool_of(vecs: &[(&str, Vec<f64>)]) -> Vec<(String, Vec<f64>)> {
        vecs.iter().map(|(id, v)| (id.to_string(), v.clone())).collect()
    }

    #[test]
    fn total_tie_returns_tracks_in_id_order() {
        let pool = pool_of(&[
            ("t3", vec![1.0, 0.0]),
            ("t1", vec![1.0, 0.0]),
            ("t2", vec![1.0, 0.0]),
            ("t0", vec![1.0, 0.0]),
        ]);
        let got = knn_retrieve(&pool, "t2", 2, Metric::Euclidean).unwrap();
        assert_eq!(got, vec!["t0", "t1"]);
    }

    #[test]
    fn forced_ordering_on_a_line() {
        let pool = pool_of(&[
            ("q", vec![0.0]),
            ("d1", vec![1.0]),
            ("d3", vec![3.0]),
            ("d2", vec![2.0]),
        ]);
        let got = knn_retrieve(&pool, "q", 2, Metric::Euclidean).unwrap();
        assert_eq!(got, vec!["d1", "d2"]);
    }

    #[test]
    fn knn_errors_on_missing_query_and_small_pool() {
        let pool = pool_of(&[("a", vec![0.0]), ("b", vec![1.0])]);
        assert!(matches!(
            knn_retrieve(&pool, "zz", 1, Metric::Euclidean),
            Err(Error::Lookup(_))
        ));
        assert!(matches!(
            knn_retrieve(&pool, "a", 2, Metric::Euclidean),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn knn_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..5 {
            let pool: Vec<(String, Vec<f64>)> = (0..200)
                .map(|i| {
                    (
                        format!("t{i:03}"),
                        (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let query = format!("t{:03}", rng.gen_range(0..200));
            for metric in [Metric::Euclidean, Metric::Cosine] {
                let got = knn_retrieve(&pool, &query, 10, metric).unwrap();
                // brute force: score everything and sort
                let qv = &pool.iter().find(|(id, _)| *id == query).unwrap().1;
                let mut all: Vec<(f64, String)> = pool
                    .iter()
                    .filter(|(id, _)| *id != query)
                    .map(|(id, v)| (distance(qv, v, metric), id.clone()))
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
                let expected: Vec<String> = all[..10].iter().map(|(_, id)| id.clone()).collect();
                assert_eq!(got, expected, "trial {trial} {metric:?}");
            }
        }
    }

    #[test]
    fn cosine_on_unit_vectors_equals_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pool: Vec<(String, Vec<f64>)> = (0..60)
            .map(|i| {
                let mut v: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                (format!("t{i:02}"), v)
            })
            .collect();
        for (query, _) in pool.iter().take(10) {
            assert_eq!(
                knn_retrieve(&pool, query, 15, Metric::Euclidean).unwrap(),
                knn_retrieve(&pool, query, 15, Metric::Cosine).unwrap()
            );
        }
    }

    #[test]
    fn precision_full_and_zero_relevance() {
        let corpus = corpus_from(&[
            ("q", "a1", "l1", "genres", "rock"),
            ("r1", "a2", "l2", "genres", "rock"),
            ("r2", "a3", "l3", "genres", "rock"),
            ("x1", "a4", "l4", "genres", "jazz"),
            ("x2", "a5", "l5", "genres", "jazz"),
        ]);
        let hits = vec!["r1".to_string(), "r2".to_string()];
        assert_eq!(
            precision_at_k(&hits, "q", Task::Genres, &corpus).unwrap(),
            Some(1.0)
        );
        let misses = vec!["x1".to_string(), "x2".to_string()];
        assert_eq!(
            precision_at_k(&misses, "q", Task::Genres, &corpus).unwrap(),
            Some(0.0)
        );
    }

    #[test]
    fn untagged_query_is_excluded_not_zero() {
        let corpus = corpus_from(&[
            ("q", "a1", "l1", "moods", "calm"),
            ("r1", "a2", "l2", "genres", "rock"),
        ]);
        let hits = vec!["r1".to_string()];
        assert_eq!(precision_at_k(&hits, "q", Task::Genres, &corpus).unwrap(), None);
        // artist and album tasks are always defined
        assert_eq!(
            precision_at_k(&hits, "q", Task::Artist, &corpus).unwrap(),
            Some(0.0)
        );
    }

    #[test]
    fn precision_matches_brute_force_count_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sets = ["genres", "styles", "moods", "themes"];
        let mut rows = Vec::new();
        for i in 0..60 {
            let artist = format!("ar{}", i % 12);
            let album = format!("al{}", i % 20);
            for set in sets {
                for t in 0..rng.gen_range(1..4) {
                    rows.push(TagAssignment {
                        track_id: format!("t{i:02}"),
                        artist_id: artist.clone(),
                        album_id: album.clone(),
                        tag_set: set.to_string(),
                        tag: format!("{set}-{}", (t + i + rng.gen_range(0..5)) % 7),
                    });
                }
            }
        }
        let corpus = TagCorpus::from_assignments(rows).unwrap();
        let retrieved: Vec<String> = (10..30).map(|i| format!("t{i:02}")).collect();
        for task in ALL_TASKS {
            let got = precision_at_k(&retrieved, "t00", task, &corpus).unwrap().unwrap();
            // exhaustive relevance counting, written against the raw corpus
            let mut hits = 0;
            for r in &retrieved {
                let relevant = match task {
                    Task::Artist => corpus.artist_of("t00") == corpus.artist_of(r),
                    Task::Album => corpus.album_of("t00") == corpus.album_of(r),
                    _ => {
                        let set = task.tag_set().unwrap();
                        let qt = corpus.track_tags("t00", set);
                        corpus.track_tags(r, set).iter().any(|t| qt.contains(t))
                    }
                };
                if relevant {
                    hits += 1;
                }
            }
            assert_eq!(got, hits as f64 / retrieved.len() as f64, "{task}");
        }
    }

    #[test]
    fn perfectly_separated_clusters_score_one() {
        let corpus = simple_corpus(40, |i| {
            if i < 20 { "rock".into() } else { "jazz".into() }
        });
        let pool: Vec<(String, Vec<f64>)> = (0..40)
            .map(|i| {
                let center = if i < 20 { 10.0 } else { -10.0 };
                (format!("t{i:03}"), vec![center + (i as f64) * 0.01, 0.0])
            })
            .collect();
        let results = evaluate(&pool, &corpus, 10, Metric::Euclidean).unwrap();
        let genres = results[0].unwrap();
        assert_eq!(genres.mean_precision, 1.0);
        assert_eq!(genres.queries, 40);
    }

    #[test]
    fn random_embeddings_approach_the_analytic_baseline() {
        // c equally sized single-tag groups under random ranking: expected
        // precision is (group_size - 1) / (pool - 1)
        let c = 4;
        let n = 200;
        let corpus = simple_corpus(n, |i| format!("g{}", i % c));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pool: Vec<(String, Vec<f64>)> = (0..n)
            .map(|i| {
                (
                    format!("t{i:03}"),
                    (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let k = 50;
        let results = evaluate(&pool, &corpus, k, Metric::Euclidean).unwrap();
        let genres = results[0].unwrap();
        let expectation = (n as f64 / c as f64 - 1.0) / (n as f64 - 1.0);
        // binomial standard error of the mean over n queries
        let se = (expectation * (1.0 - expectation) / (k * n) as f64).sqrt();
        assert!(
            (genres.mean_precision - expectation).abs() < 3.0 * se.max(0.01),
            "got {} expected {expectation}",
            genres.mean_precision
        );
    }

    #[test]
    fn precision_invariant_under_global_scaling() {
        let corpus = simple_corpus(30, |i| format!("g{}", i % 3));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pool: Vec<(String, Vec<f64>)> = (0..30)
            .map(|i| {
                (
                    format!("t{i:03}"),
                    (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let scaled: Vec<(String, Vec<f64>)> = pool
            .iter()
            .map(|(id, v)| (id.clone(), v.iter().map(|x| x * 7.0).collect()))
            .collect();
        assert_eq!(
            evaluate(&pool, &corpus, 10, Metric::Euclidean).unwrap(),
            evaluate(&scaled, &corpus, 10, Metric::Euclidean).unwrap()
        );
    }

    #[test]
    fn sorted_ranking_precision_is_monotone_in_k() {
        // planted ranking: all relevant tracks first
        let corpus = simple_corpus(20, |i| {
            if i < 8 { "hit".into() } else { "miss".into() }
        });
        let retrieved: Vec<String> = (1..20).map(|i| format!("t{i:03}")).collect();
        let mut prev = 1.0;
        for k in 1..retrieved.len() {
            let p = precision_at_k(&retrieved[..k], "t000", Task::Genres, &corpus)
                .unwrap()
                .unwrap();
            assert!(p <= prev + 1e-12, "k={k}: {p} > {prev}");
            prev = p;
        }
    }

    #[test]
    fn report_layout_reproduces_hand_entered_row() {
        let row = EvalRow {
            tag_set: "genres".to_string(),
            lsi_topics: 3,
            tasks: [
                Some(TaskResult {
                    mean_precision: 0.3971,
                    queries: 14358,
                    excluded: 0,
                }),
                Some(TaskResult {
                    mean_precision: 0.0129,
                    queries: 14358,
                    excluded: 0,
                }),
                None,
                None,
                Some(TaskResult {
                    mean_precision: 0.0402,
                    queries: 14358,
                    excluded: 0,
                }),
                Some(TaskResult {
                    mean_precision: 0.0050,
                    queries: 14358,
                    excluded: 0,
                }),
            ],
        };
        let report = EvaluationReport {
            cutoff: 100,
            rows: vec![row],
        };
        let tsv = report.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "tagtriplet-report 1");
        assert_eq!(
            lines[2],
            "tag_set\tlsi_topics\tprec_genres\tprec_styles\tprec_moods\tprec_themes\tprec_artists\tprec_album"
        );
        assert_eq!(
            lines[3],
            "genres\t3\t0.397100\t0.012900\t-\t-\t0.040200\t0.005000"
        );
        let text = report.to_text();
        assert!(text.contains("0.397100"));
    }

    #[test]
    fn fifteen_tag_set_combinations() {
        let combos = tag_set_combos();
        assert_eq!(combos.len(), 15);
        assert_eq!(combos.iter().filter(|c| c.len() == 1).count(), 4);
        assert_eq!(combos.iter().filter(|c| c.len() == 2).count(), 6);
        assert_eq!(combos.iter().filter(|c| c.len() == 3).count(), 4);
        assert_eq!(combos.iter().filter(|c| c.len() == 4).count(), 1);
        let labels: BTreeSet<String> = combos.iter().map(|c| combo_label(c)).collect();
        assert_eq!(labels.len(), 15);
        assert!(labels.contains("genres+styles+moods+themes"));
    }
}
