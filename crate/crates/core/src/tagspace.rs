//! Multi-label tag ingestion and the sparse tag-track incidence matrix.
//!
//! Tracks carry tags from named tag-sets (genres, styles, moods, themes or
//! user-defined). Tag identity is the pair (tag_set, tag), so the same label
//! string in two tag-sets yields two distinct matrix rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The four tag-set names used by the stock corpora.
pub const STANDARD_TAG_SETS: [&str; 4] = ["genres", "styles", "moods", "themes"];

/// One (track, tag_set, tag) annotation with the track's artist and album.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TagAssignment {
    pub track_id: String,
    pub artist_id: String,
    pub album_id: String,
    pub tag_set: String,
    pub tag: String,
}

/// Immutable multi-label corpus with deterministic 0-based indices.
///
/// Track and tag indices are lexicographic on identifier strings so that two
/// ingestions of the same file are byte-identical when re-serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct TagCorpus {
    assignments: Vec<TagAssignment>,
    tracks: Vec<String>,
    tags: Vec<(String, String)>,
    track_pos: BTreeMap<String, usize>,
    tag_pos: BTreeMap<(String, String), usize>,
    artist_of: BTreeMap<String, String>,
    album_of: BTreeMap<String, String>,
}

impl TagCorpus {
    /// Builds a corpus from raw assignments: deduplicates (track, tag_set, tag)
    /// triples and derives the lexicographic indices.
    pub fn from_assignments(assignments: Vec<TagAssignment>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::EmptyCorpus("no tag assignments".into()));
        }
        let mut artist_of = BTreeMap::new();
        let mut album_of = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for a in assignments {
            if a.track_id.is_empty() || a.tag_set.is_empty() || a.tag.is_empty() {
                return Err(Error::Data(
                    "track_id, tag_set and tag must be non-empty".into(),
                ));
            }
            if let Some(prev) = artist_of.get(&a.track_id) {
                if prev != &a.artist_id {
                    return Err(Error::Data(format!(
                        "track {} has conflicting artist ids {prev} and {}",
                        a.track_id, a.artist_id
                    )));
                }
            }
            if let Some(prev) = album_of.get(&a.track_id) {
                if prev != &a.album_id {
                    return Err(Error::Data(format!(
                        "track {} has conflicting album ids {prev} and {}",
                        a.track_id, a.album_id
                    )));
                }
            }
            artist_of.insert(a.track_id.clone(), a.artist_id.clone());
            album_of.insert(a.track_id.clone(), a.album_id.clone());
            if seen.insert((a.track_id.clone(), a.tag_set.clone(), a.tag.clone())) {
                kept.push(a);
            }
        }
        kept.sort();
        let tracks: Vec<String> = kept
            .iter()
            .map(|a| a.track_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let tags: Vec<(String, String)> = kept
            .iter()
            .map(|a| (a.tag_set.clone(), a.tag.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let track_pos = tracks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let tag_pos = tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(TagCorpus {
            assignments: kept,
            tracks,
            tags,
            track_pos,
            tag_pos,
            artist_of,
            album_of,
        })
    }

    pub fn assignments(&self) -> &[TagAssignment] {
        &self.assignments
    }

    pub fn tracks(&self) -> &[String] {
        &self.tracks
    }

    pub fn tags(&self) -> &[(String, String)] {
        &self.tags
    }

    pub fn track_index(&self, track_id: &str) -> Option<usize> {
        self.track_pos.get(track_id).copied()
    }

    pub fn artist_of(&self, track_id: &str) -> Option<&str> {
        self.artist_of.get(track_id).map(|s| s.as_str())
    }

    pub fn album_of(&self, track_id: &str) -> Option<&str> {
        self.album_of.get(track_id).map(|s| s.as_str())
    }

    /// Tag-set names present in the corpus, lexicographic.
    pub fn tag_set_names(&self) -> Vec<String> {
        self.tags
            .iter()
            .map(|(s, _)| s.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Tags of one track within one tag-set, lexicographic.
    pub fn track_tags(&self, track_id: &str, tag_set: &str) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|a| a.track_id == track_id && a.tag_set == tag_set)
            .map(|a| a.tag.as_str())
            .collect()
    }

    /// Serializes back to the TSV ingestion format; round-trip exact.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for a in &self.assignments {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                a.track_id, a.artist_id, a.album_id, a.tag_set, a.tag
            );
        }
        out
    }
}

/// Reads a tab-separated tag file: `track_id  artist_id  album_id  tag_set  tag`
/// per row, `#`-prefixed comment lines, no header.
pub fn parse_tag_file(path: &Path) -> Result<TagCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tag_text(&text, path)
}

pub fn parse_tag_text(text: &str, path: &Path) -> Result<TagCorpus> {
    let mut assignments = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 5 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].is_empty() || cols[3].is_empty() || cols[4].is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "track_id, tag_set and tag must be non-empty".into(),
            });
        }
        assignments.push(TagAssignment {
            track_id: cols[0].to_string(),
            artist_id: cols[1].to_string(),
            album_id: cols[2].to_string(),
            tag_set: cols[3].to_string(),
            tag: cols[4].to_string(),
        });
    }
    if assignments.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "{} contains no tag assignments",
            path.display()
        )));
    }
    TagCorpus::from_assignments(assignments)
}

/// Restricts the corpus to tracks carrying at least one tag in EVERY required
/// tag-set. Tags that lose all their tracks drop out of the tag index.
pub fn intersect_tagsets(corpus: &TagCorpus, required: &[String]) -> Result<TagCorpus> {
    if required.is_empty() {
        return Err(Error::Param("required tag-set list is empty".into()));
    }
    let mut surviving: Option<BTreeSet<&str>> = None;
    for set in required {
        let covered: BTreeSet<&str> = corpus
            .assignments
            .iter()
            .filter(|a| &a.tag_set == set)
            .map(|a| a.track_id.as_str())
            .collect();
        surviving = Some(match surviving {
            None => covered,
            Some(prev) => prev.intersection(&covered).copied().collect(),
        });
    }
    let surviving = surviving.unwrap();
    if surviving.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no track has tags in all of: {}",
            required.join(", ")
        )));
    }
    let kept: Vec<TagAssignment> = corpus
        .assignments
        .iter()
        .filter(|a| surviving.contains(a.track_id.as_str()))
        .cloned()
        .collect();
    TagCorpus::from_assignments(kept)
}

/// Sparse binary incidence matrix: rows are tags, columns are tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct TagTrackMatrix {
    /// Per-column sorted row indices of the nonzero cells.
    col_rows: Vec<Vec<usize>>,
    row_labels: Vec<(String, String)>,
    col_labels: Vec<String>,
}

impl TagTrackMatrix {
    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_rows.iter().map(|c| c.len()).sum()
    }

    /// Sorted row indices of the ones in column `j`.
    pub fn column(&self, j: usize) -> &[usize] {
        &self.col_rows[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.col_rows[j].binary_search(&i).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn row_labels(&self) -> &[(String, String)] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    /// y = W * x  (y has `rows` entries, x has `cols`).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(y.len(), self.rows());
        y.fill(0.0);
        for (j, rows) in self.col_rows.iter().enumerate() {
            let xj = x[j];
            if xj != 0.0 {
                for &i in rows {
                    y[i] += xj;
                }
            }
        }
    }

    /// y = W^T * x  (y has `cols` entries, x has `rows`).
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows());
        debug_assert_eq!(y.len(), self.cols());
        for (j, rows) in self.col_rows.iter().enumerate() {
            y[j] = rows.iter().map(|&i| x[i]).sum();
        }
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut dense = ndarray::Array2::zeros((self.rows(), self.cols()));
        for (j, rows) in self.col_rows.iter().enumerate() {
            for &i in rows {
                dense[[i, j]] = 1.0;
            }
        }
        dense
    }
}

/// Builds the binary tag-track matrix over the union of tags of the selected
/// tag-sets. Tracks with no tag in any selected set are left out, so the
/// matrix has no all-zero column.
pub fn build_matrix(corpus: &TagCorpus, tag_sets: &[String]) -> Result<TagTrackMatrix> {
    if tag_sets.is_empty() {
        return Err(Error::Param("tag-set selection is empty".into()));
    }
    let selected: BTreeSet<&str> = tag_sets.iter().map(|s| s.as_str()).collect();
    let row_labels: Vec<(String, String)> = corpus
        .tags
        .iter()
        .filter(|(s, _)| selected.contains(s.as_str()))
        .cloned()
        .collect();
    if row_labels.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no assignments for tag-sets: {}",
            tag_sets.join(", ")
        )));
    }
    let row_pos: BTreeMap<&(String, String), usize> =
        row_labels.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut per_track: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for a in &corpus.assignments {
        if selected.contains(a.tag_set.as_str()) {
            let key = (a.tag_set.clone(), a.tag.clone());
            per_track
                .entry(a.track_id.as_str())
                .or_default()
                .push(row_pos[&key]);
        }
    }
    let col_labels: Vec<String> = per_track.keys().map(|t| t.to_string()).collect();
    let col_rows: Vec<Vec<usize>> = per_track
        .into_values()
        .map(|mut rows| {
            rows.sort_unstable();
            rows.dedup();
            rows
        })
        .collect();
    Ok(TagTrackMatrix {
        col_rows,
        row_labels,
        col_labels,
    })
}

/// Per-tag-set counts mirroring the corpus overview table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSetStats {
    pub tag_set: String,
    pub unique_tags: usize,
    /// Distinct unordered tag subsets observed per track within the set.
    pub tag_combinations: usize,
    pub labelled_albums: usize,
    pub labelled_tracks: usize,
}

pub fn corpus_stats(corpus: &TagCorpus) -> Vec<TagSetStats> {
    let mut stats = Vec::new();
    for set in corpus.tag_set_names() {
        let mut tags = BTreeSet::new();
        let mut per_track: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for a in corpus.assignments.iter().filter(|a| a.tag_set == set) {
            tags.insert(a.tag.as_str());
            per_track
                .entry(a.track_id.as_str())
                .or_default()
                .insert(a.tag.as_str());
        }
        let combos: BTreeSet<&BTreeSet<&str>> = per_track.values().collect();
        let albums: BTreeSet<&str> = per_track
            .keys()
            .filter_map(|t| corpus.album_of(t))
            .collect();
        stats.push(TagSetStats {
            tag_set: set,
            unique_tags: tags.len(),
            tag_combinations: combos.len(),
            labelled_albums: albums.len(),
            labelled_tracks: per_track.len(),
        });
    }
    stats
}

pub fn stats_to_tsv(stats: &[TagSetStats]) -> String {
    let mut out = String::from("tag_set\tunique_tags\ttag_combinations\tlabelled_albums\tlabelled_tracks\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            s.tag_set, s.unique_tags, s.tag_combinations, s.labelled_albums, s.labelled_tracks
        );
    }
    out
}

/// Aligned-column plain text, one column per tag-set.
pub fn stats_to_text(stats: &[TagSetStats]) -> String {
    let rows: [(&str, fn(&TagSetStats) -> usize); 4] = [
        ("Unique Tags", |s| s.unique_tags),
        ("Tag Combinations", |s| s.tag_combinations),
        ("Labelled Albums", |s| s.labelled_albums),
        ("Labelled Tracks", |s| s.labelled_tracks),
    ];
    let label_w = rows.iter().map(|(n, _)| n.len()).max().unwrap();
    let col_w: Vec<usize> = stats
        .iter()
        .map(|s| {
            rows.iter()
                .map(|(_, f)| f(s).to_string().len())
                .chain(std::iter::once(s.tag_set.len()))
                .max()
                .unwrap()
        })
        .collect();
    let mut out = format!("{:label_w$}", "");
    for (s, w) in stats.iter().zip(&col_w) {
        let _ = write!(out, "  {:>w$}", s.tag_set);
    }
    out.push('\n');
    for (name, f) in rows {
        let _ = write!(out, "{name:label_w$}");
        for (s, w) in stats.iter().zip(&col_w) {
            let _ = write!(out, "  {:>w$}", f(s));
        }
        out.push('\n');
    }
    out
}
