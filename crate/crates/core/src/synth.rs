//! Seeded synthetic corpora with planted cluster structure, used wherever
//! real audio and tags are unavailable.
//!
//! Each cluster owns a feature centroid and per-tag-set tag pools; tracks are
//! noisy copies of their centroid with tags drawn from the pools. Artists and
//! albums nest inside clusters, so artist-stratified splits keep the cluster
//! balance.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audiofeat::{self, FeatureMode};
use crate::error::{Error, Result};
use crate::tagspace::{TagAssignment, TagCorpus, STANDARD_TAG_SETS};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_clusters: usize,
    pub tracks_per_cluster: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    /// Pool size per tag set and cluster.
    pub tags_per_cluster: usize,
    pub artists_per_cluster: usize,
    pub tracks_per_album: usize,
    /// Fraction of each pool drawn from a shared inter-cluster pool, giving
    /// the graded-similarity regime instead of fully disjoint tag blocks.
    pub tag_overlap: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_clusters: 4,
            tracks_per_cluster: 100,
            feature_dim: 32,
            noise_sigma: 0.1,
            tags_per_cluster: 5,
            artists_per_cluster: 5,
            tracks_per_album: 4,
            tag_overlap: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0
            || self.tracks_per_cluster == 0
            || self.feature_dim == 0
            || self.tags_per_cluster == 0
            || self.artists_per_cluster == 0
            || self.tracks_per_album == 0
        {
            return Err(Error::Param("all synthetic counts must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Param("noise sigma must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.tag_overlap) {
            return Err(Error::Param("tag overlap must be in [0, 1]".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic corpus plus per-track feature vectors, aligned on sorted
/// track ids.
pub fn generate(spec: &SynthSpec) -> Result<(TagCorpus, Vec<(String, Vec<f64>)>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // distinct unit centroids
    let mut centroids = Vec::with_capacity(spec.n_clusters);
    for _ in 0..spec.n_clusters {
        let mut v: Vec<f64> = (0..spec.feature_dim).map(|_| normal(&mut rng)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        centroids.push(v);
    }
    // per-cluster tag pools, front-loaded with shared tags
    let n_shared = ((spec.tags_per_cluster as f64) * spec.tag_overlap).round() as usize;
    let n_shared = n_shared.min(spec.tags_per_cluster.saturating_sub(1));
    let mut pools: Vec<Vec<Vec<String>>> = Vec::new(); // [set][cluster][tag]
    for set in STANDARD_TAG_SETS {
        let mut per_cluster = Vec::new();
        for c in 0..spec.n_clusters {
            let mut pool = Vec::with_capacity(spec.tags_per_cluster);
            for t in 0..n_shared {
                pool.push(format!("{set}-shared-{t}"));
            }
            for t in n_shared..spec.tags_per_cluster {
                pool.push(format!("{set}-c{c}-{t}"));
            }
            per_cluster.push(pool);
        }
        pools.push(per_cluster);
    }
    let mut assignments = Vec::new();
    let mut features = Vec::new();
    for c in 0..spec.n_clusters {
        for j in 0..spec.tracks_per_cluster {
            let track_id = format!("t{c:02}-{j:04}");
            let artist = format!("ar{c:02}-{:03}", j % spec.artists_per_cluster);
            let album = format!("al{c:02}-{:03}", j / spec.tracks_per_album);
            let mut vec = centroids[c].clone();
            for v in &mut vec {
                *v += spec.noise_sigma * normal(&mut rng);
            }
            for (s, set) in STANDARD_TAG_SETS.iter().enumerate() {
                let pool = &pools[s][c];
                // the cluster's primary tag, so same-cluster tracks always
                // share at least one tag per set
                let mut tags = vec![pool[pool.len() - 1].clone()];
                if pool.len() > 1 {
                    let extra = &pool[rng.gen_range(0..pool.len() - 1)];
                    if !tags.contains(extra) {
                        tags.push(extra.clone());
                    }
                }
                for tag in tags {
                    assignments.push(TagAssignment {
                        track_id: track_id.clone(),
                        artist_id: artist.clone(),
                        album_id: album.clone(),
                        tag_set: set.to_string(),
                        tag,
                    });
                }
            }
            features.push((track_id, vec));
        }
    }
    features.sort_by(|a, b| a.0.cmp(&b.0));
    let corpus = TagCorpus::from_assignments(assignments)?;
    Ok((corpus, features))
}

/// Writes the generated corpus and features in the standard on-disk layout:
/// `tags.tsv`, one feature file per track under `features/` and a
/// `features.tsv` manifest.
pub fn write_outputs(
    dir: &Path,
    corpus: &TagCorpus,
    features: &[(String, Vec<f64>)],
) -> Result<()> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let tags_path = dir.join("tags.tsv");
    fs::write(&tags_path, corpus.to_tsv()).map_err(|e| Error::io(&tags_path, e))?;
    let mut entries = Vec::with_capacity(features.len());
    for (track_id, values) in features {
        let file = feat_dir.join(format!("{track_id}.feat"));
        audiofeat::save_features(&file, track_id, FeatureMode::Flatten, values)?;
        entries.push((track_id.clone(), PathBuf::from(format!("features/{track_id}.feat"))));
    }
    audiofeat::save_manifest(&dir.join("features.tsv"), &entries)
}
