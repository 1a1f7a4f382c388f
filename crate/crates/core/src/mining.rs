//! Online triplet selection inside mini-batches.
//!
//! Tag-relatedness (cosine similarity of l2-normalized LSI vectors) is
//! thresholded into candidate positive and negative pairs, same-album positive
//! pairs are filtered out and one triplet per anchor is picked from the
//! current embedding distances.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_THETA_POS: f64 = 0.8;
pub const DEFAULT_THETA_NEG: f64 = 0.2;
pub const DEFAULT_BATCH_SIZE: usize = 600;

/// A mini-batch of tracks with aligned tag-space and embedding-space views.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub track_ids: Vec<String>,
    /// B×k, rows l2-normalized.
    pub lsi_vectors: Array2<f64>,
    /// B×d current encoder outputs.
    pub embeddings: Array2<f64>,
    pub album_ids: Vec<String>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.track_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.track_ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.track_ids.len();
        if self.lsi_vectors.nrows() != b
            || self.embeddings.nrows() != b
            || self.album_ids.len() != b
        {
            return Err(Error::Data(format!(
                "mini-batch field lengths disagree: {} ids, {} lsi rows, {} embedding rows, {} albums",
                b,
                self.lsi_vectors.nrows(),
                self.embeddings.nrows(),
                self.album_ids.len()
            )));
        }
        Ok(())
    }
}

/// Thresholded pair candidates over one mini-batch.
#[derive(Debug, Clone)]
pub struct PairCandidates {
    /// B×B cosine similarities with a zeroed diagonal.
    pub similarity: Array2<f64>,
    pub positive_mask: Array2<bool>,
    pub negative_mask: Array2<bool>,
}

/// One selected (anchor, positive, negative) index triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// How the final positive and negative are picked from embedding distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiningStrategy {
    /// Nearest positive, farthest negative (argmin / argmax as written).
    PaperLiteral,
    /// Farthest positive, nearest negative (conventional hard mining).
    BatchHard,
    /// Uniform pick among candidates, seeded.
    Random(u64),
}

impl Default for MiningStrategy {
    fn default() -> Self {
        MiningStrategy::PaperLiteral
    }
}

impl std::str::FromStr for MiningStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(MiningStrategy::PaperLiteral),
            "batch-hard" => Ok(MiningStrategy::BatchHard),
            other => {
                if let Some(seed) = other
                    .strip_prefix("random(")
                    .and_then(|r| r.strip_suffix(')'))
                {
                    seed.parse::<u64>()
                        .map(MiningStrategy::Random)
                        .map_err(|_| Error::Param(format!("bad random seed in {other:?}")))
                } else {
                    Err(Error::Param(format!(
                        "unknown mining strategy {other:?} (expected paper-literal, batch-hard or random(SEED))"
                    )))
                }
            }
        }
    }
}

/// Pairwise cosine similarity of unit-norm rows; symmetric, zero diagonal.
pub fn pairwise_similarity(lsi_vectors: &Array2<f64>) -> Result<Array2<f64>> {
    let b = lsi_vectors.nrows();
    for i in 0..b {
        let norm: f64 = lsi_vectors.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Param(format!(
                "lsi vector row {i} has norm {norm}, expected 1"
            )));
        }
    }
    let mut sim = lsi_vectors.dot(&lsi_vectors.t());
    for i in 0..b {
        sim[[i, i]] = 0.0;
        for j in (i + 1)..b {
            // enforce exact symmetry
            let avg = 0.5 * (sim[[i, j]] + sim[[j, i]]);
            sim[[i, j]] = avg;
            sim[[j, i]] = avg;
        }
    }
    Ok(sim)
}

/// Thresholds the similarity matrix into candidate masks. Positives
/// additionally pass the album filter; negatives are not album-filtered so
/// hard negatives from the same album stay available.
pub fn select_pairs(batch: &MiniBatch, theta_pos: f64, theta_neg: f64) -> Result<PairCandidates> {
    batch.validate()?;
    if theta_neg >= theta_pos {
        return Err(Error::Param(format!(
            "theta_neg ({theta_neg}) must be below theta_pos ({theta_pos})"
        )));
    }
    if batch.len() < 3 {
        return Err(Error::Param(format!(
            "batch size {} too small for triplet selection (need >= 3)",
            batch.len()
        )));
    }
    let b = batch.len();
    let similarity = pairwise_similarity(&batch.lsi_vectors)?;
    let mut positive_mask = Array2::from_elem((b, b), false);
    let mut negative_mask = Array2::from_elem((b, b), false);
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            if similarity[[i, j]] >= theta_pos && batch.album_ids[i] != batch.album_ids[j] {
                positive_mask[[i, j]] = true;
            } else if similarity[[i, j]] < theta_neg {
                negative_mask[[i, j]] = true;
            }
        }
    }
    Ok(PairCandidates {
        similarity,
        positive_mask,
        negative_mask,
    })
}

fn squared_distance(embeddings: &Array2<f64>, i: usize, j: usize) -> f64 {
    embeddings
        .row(i)
        .iter()
        .zip(embeddings.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Picks at most one triplet per anchor from the candidate masks. Anchors
/// lacking positives or negatives yield nothing; ties break on the lowest
/// batch index.
pub fn select_triplets(
    batch: &MiniBatch,
    pairs: &PairCandidates,
    strategy: MiningStrategy,
) -> Result<Vec<Triplet>> {
    batch.validate()?;
    let b = batch.len();
    if pairs.similarity.nrows() != b {
        return Err(Error::Param(
            "pair candidates were computed on a different batch".into(),
        ));
    }
    let mut triplets = Vec::new();
    for anchor in 0..b {
        let positives: Vec<usize> = (0..b).filter(|&j| pairs.positive_mask[[anchor, j]]).collect();
        let negatives: Vec<usize> = (0..b).filter(|&j| pairs.negative_mask[[anchor, j]]).collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let (positive, negative) = match strategy {
            MiningStrategy::PaperLiteral => (
                arg_best(&positives, |j| squared_distance(&batch.embeddings, anchor, j), false),
                arg_best(&negatives, |j| squared_distance(&batch.embeddings, anchor, j), true),
            ),
            MiningStrategy::BatchHard => (
                arg_best(&positives, |j| squared_distance(&batch.embeddings, anchor, j), true),
                arg_best(&negatives, |j| squared_distance(&batch.embeddings, anchor, j), false),
            ),
            MiningStrategy::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (anchor as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                (
                    positives[rng.gen_range(0..positives.len())],
                    negatives[rng.gen_range(0..negatives.len())],
                )
            }
        };
        triplets.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(triplets)
}

/// Index with minimal (or maximal) key; candidates are in ascending index
/// order and strict comparison keeps the first, which is the tie-break rule.
fn arg_best(candidates: &[usize], key: impl Fn(usize) -> f64, maximize: bool) -> usize {
    let mut best = candidates[0];
    let mut best_key = key(best);
    for &j in &candidates[1..] {
        let kj = key(j);
        let better = if maximize { kj > best_key } else { kj < best_key };
        if better {
            best = j;
            best_key = kj;
        }
    }
    best
}

/// Seeded Fisher-Yates shuffle of track indices partitioned into consecutive
/// batches. A final short batch is kept only if it still holds >= 3 tracks.
pub fn make_batches(n_tracks: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 3 {
        return Err(Error::Param(format!(
            "batch size {batch_size} too small (need >= 3)"
        )));
    }
    if n_tracks < 3 {
        return Err(Error::Data(format!(
            "{n_tracks} tracks are too few to form any batch"
        )));
    }
    let mut order: Vec<usize> = (0..n_tracks).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n_tracks).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if let Some(last) = batches.last() {
        if last.len() < 3 {
            batches.pop();
        }
    }
    Ok(batches)
}

/// Debug dump rows: `epoch, batch, anchor_id, positive_id, negative_id,
/// sim_ap, sim_an, d2_ap, d2_an`.
pub fn triplets_tsv(
    epoch: usize,
    batch_index: usize,
    batch: &MiniBatch,
    pairs: &PairCandidates,
    triplets: &[Triplet],
) -> String {
    let mut out = String::new();
    for t in triplets {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            epoch,
            batch_index,
            batch.track_ids[t.anchor],
            batch.track_ids[t.positive],
            batch.track_ids[t.negative],
            pairs.similarity[[t.anchor, t.positive]],
            pairs.similarity[[t.anchor, t.negative]],
            squared_distance(&batch.embeddings, t.anchor, t.positive),
            squared_distance(&batch.embeddings, t.anchor, t.negative),
        );
    }
    out
}
