//! Latent semantic model over the tag-track matrix.
//!
//! Fits a truncated SVD `W ≈ U_k Σ_k V_k^T`, represents each track by its
//! singular-value-weighted right-singular coordinates and exposes fold-in for
//! unseen tracks plus per-topic tag loading reports. Topics come out sorted by
//! decreasing singular value, so the ordinal number of a topic reflects its
//! importance in reconstructing the data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::tagspace::TagTrackMatrix;
use crate::textio;

/// Relative threshold below which a singular value is treated as zero.
const RANK_TOL: f64 = 1e-12;
/// Convergence: relative singular-value change per iteration.
const CONV_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 10_000;
/// Small-problem cutoff below which the dense Gram route is used directly.
const DENSE_CUTOFF: usize = 300;

/// Anything that can act as the matrix `W` in `W x` and `W^T x`.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// y = W * x
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// y = W^T * x
    fn apply_t(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for TagTrackMatrix {
    fn rows(&self) -> usize {
        TagTrackMatrix::rows(self)
    }
    fn cols(&self) -> usize {
        TagTrackMatrix::cols(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_t(x, y)
    }
}

impl LinearOperator for Array2<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }
    fn cols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = Array1::from(x.to_vec());
        let yv = self.dot(&xv);
        y.copy_from_slice(yv.as_slice().unwrap());
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        let xv = Array1::from(x.to_vec());
        let yv = self.t().dot(&xv);
        y.copy_from_slice(yv.as_slice().unwrap());
    }
}

/// Truncated SVD factors with sign-fixed, importance-ordered topics.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// m×k left singular vectors (tag loadings).
    pub u: Array2<f64>,
    /// k largest singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    /// n×k right singular vectors (track coordinates).
    pub v: Array2<f64>,
}

/// Computes the k largest singular triplets of `W`.
///
/// The decomposition runs on the Gram matrix of the smaller side: dense
/// Jacobi eigenrotation when that side is small, blocked subspace iteration
/// with Rayleigh-Ritz extraction otherwise. Each topic's sign is fixed so its
/// largest-magnitude tag loading is positive, which makes the result
/// deterministic.
pub fn truncated_svd<M: LinearOperator>(w: &M, k: usize) -> Result<SvdFactors> {
    let (m, n) = (w.rows(), w.cols());
    if k == 0 || k > m.min(n) {
        return Err(Error::Param(format!(
            "k = {k} out of range 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    let small_is_cols = n <= m;
    let side = m.min(n);

    // Eigen-decompose the side×side Gram matrix (dense route) or a Ritz
    // projection of it (iterative route).
    let (eigvals, eigvecs) = if side <= DENSE_CUTOFF {
        let gram = build_gram(w, small_is_cols);
        jacobi_eigen(&gram)
    } else {
        subspace_iterate(w, small_is_cols, k)?
    };

    let scale = eigvals.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let mut singular_values = Vec::with_capacity(k);
    let mut small = Array2::zeros((side, k));
    for j in 0..k {
        singular_values.push(eigvals[j].max(0.0).sqrt());
        for i in 0..side {
            small[[i, j]] = eigvecs[[i, j]];
        }
    }

    let big_dim = m.max(n);
    let mut x = vec![0.0; side];
    let mut y = vec![0.0; big_dim];

    // The square root of a Gram eigenvalue only resolves sigma down to about
    // sqrt(machine eps) times the largest value. Recompute small ones
    // directly as |W v|, which stays accurate near zero, then restore the
    // descending order.
    for j in 0..k {
        if singular_values[j] <= 1e-6 * scale.max(1.0) {
            for i in 0..side {
                x[i] = small[[i, j]];
            }
            if small_is_cols {
                w.apply(&x, &mut y);
            } else {
                w.apply_t(&x, &mut y);
            }
            singular_values[j] = y.iter().map(|t| t * t).sum::<f64>().sqrt();
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| singular_values[b].partial_cmp(&singular_values[a]).unwrap());
    if order.iter().enumerate().any(|(i, &j)| i != j) {
        let old_vals = singular_values.clone();
        let old_small = small.clone();
        for (dst, &src) in order.iter().enumerate() {
            singular_values[dst] = old_vals[src];
            for i in 0..side {
                small[[i, dst]] = old_small[[i, src]];
            }
        }
    }

    // Recover the other factor as W v / sigma (or W^T u / sigma). Columns for
    // numerically zero singular values are filled by Gram-Schmidt against the
    // ones already placed, keeping the factor orthonormal.
    let mut big = Array2::zeros((big_dim, k));
    for j in 0..k {
        if singular_values[j] > RANK_TOL * scale.max(1.0) {
            for i in 0..side {
                x[i] = small[[i, j]];
            }
            if small_is_cols {
                w.apply(&x, &mut y);
            } else {
                w.apply_t(&x, &mut y);
            }
            for i in 0..big_dim {
                big[[i, j]] = y[i] / singular_values[j];
            }
            // one re-orthogonalization pass against earlier columns
            reorthogonalize(&mut big, j);
        } else {
            fill_orthonormal(&mut big, j);
        }
    }

    let (mut u, mut v) = if small_is_cols { (big, small) } else { (small, big) };
    fix_signs(&mut u, &mut v);
    Ok(SvdFactors {
        u,
        singular_values,
        v,
    })
}

fn build_gram<M: LinearOperator>(w: &M, small_is_cols: bool) -> Array2<f64> {
    let side = w.rows().min(w.cols());
    let big = w.rows().max(w.cols());
    let mut gram = Array2::zeros((side, side));
    let mut e = vec![0.0; side];
    let mut mid = vec![0.0; big];
    let mut out = vec![0.0; side];
    for j in 0..side {
        e.fill(0.0);
        e[j] = 1.0;
        if small_is_cols {
            w.apply(&e, &mut mid);
            w.apply_t(&mid, &mut out);
        } else {
            w.apply_t(&e, &mut mid);
            w.apply(&mid, &mut out);
        }
        for i in 0..side {
            gram[[i, j]] = out[i];
        }
    }
    // symmetrize against round-off
    for i in 0..side {
        for j in (i + 1)..side {
            let avg = 0.5 * (gram[[i, j]] + gram[[j, i]]);
            gram[[i, j]] = avg;
            gram[[j, i]] = avg;
        }
    }
    gram
}

/// Blocked subspace iteration on the Gram operator with Rayleigh-Ritz
/// extraction. Deterministic: the start block comes from a fixed-seed RNG.
fn subspace_iterate<M: LinearOperator>(
    w: &M,
    small_is_cols: bool,
    k: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    use rand::Rng;
    use rand::SeedableRng;
    let side = w.rows().min(w.cols());
    let big = w.rows().max(w.cols());
    let p = (k + 10).min(side);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7a6_517e5);
    let mut q = Array2::from_shape_fn((side, p), |_| {
        // Box-Muller keeps us independent of rand_distr
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    orthonormalize(&mut q);

    let mut x = vec![0.0; side];
    let mut mid = vec![0.0; big];
    let mut out = vec![0.0; side];
    let mut prev = vec![f64::INFINITY; k];
    let mut last_change = f64::INFINITY;
    for _iter in 0..MAX_ITERS {
        // Z = Gram * Q
        let mut z = Array2::zeros((side, p));
        for c in 0..p {
            for i in 0..side {
                x[i] = q[[i, c]];
            }
            if small_is_cols {
                w.apply(&x, &mut mid);
                w.apply_t(&mid, &mut out);
            } else {
                w.apply_t(&x, &mut mid);
                w.apply(&mid, &mut out);
            }
            for i in 0..side {
                z[[i, c]] = out[i];
            }
        }
        // Rayleigh-Ritz on the current subspace: T = Q^T Z
        let t = q.t().dot(&z);
        let mut t_sym = t.clone();
        for i in 0..p {
            for j in 0..p {
                t_sym[[i, j]] = 0.5 * (t[[i, j]] + t[[j, i]]);
            }
        }
        let (ritz_vals, ritz_vecs) = jacobi_eigen(&t_sym);
        last_change = (0..k)
            .map(|j| {
                let cur = ritz_vals[j].max(0.0).sqrt();
                let delta = (cur - prev[j]).abs();
                delta / cur.max(1e-300)
            })
            .fold(0.0_f64, f64::max);
        for (j, pv) in prev.iter_mut().enumerate() {
            *pv = ritz_vals[j].max(0.0).sqrt();
        }
        if last_change < CONV_TOL {
            let rotated = q.dot(&ritz_vecs);
            return Ok((ritz_vals, rotated));
        }
        q = z;
        orthonormalize(&mut q);
    }
    Err(Error::Convergence {
        iterations: MAX_ITERS,
        residual: last_change,
    })
}

/// Modified Gram-Schmidt with a second pass; degenerate columns fall back to
/// unit basis vectors so the block keeps full column rank.
fn orthonormalize(q: &mut Array2<f64>) {
    let (rows, cols) = (q.nrows(), q.ncols());
    let mut fallback = 0usize;
    for c in 0..cols {
        for _pass in 0..2 {
            for prev in 0..c {
                let dot: f64 = (0..rows).map(|i| q[[i, c]] * q[[i, prev]]).sum();
                for i in 0..rows {
                    q[[i, c]] -= dot * q[[i, prev]];
                }
            }
        }
        let norm: f64 = (0..rows).map(|i| q[[i, c]] * q[[i, c]]).sum::<f64>().sqrt();
        if norm > 1e-150 {
            for i in 0..rows {
                q[[i, c]] /= norm;
            }
        } else {
            // deterministic replacement
            loop {
                for i in 0..rows {
                    q[[i, c]] = if i == fallback % rows { 1.0 } else { 0.0 };
                }
                fallback += 1;
                for prev in 0..c {
                    let dot: f64 = (0..rows).map(|i| q[[i, c]] * q[[i, prev]]).sum();
                    for i in 0..rows {
                        q[[i, c]] -= dot * q[[i, prev]];
                    }
                }
                let n2: f64 = (0..rows).map(|i| q[[i, c]] * q[[i, c]]).sum::<f64>().sqrt();
                if n2 > 0.5 {
                    for i in 0..rows {
                        q[[i, c]] /= n2;
                    }
                    break;
                }
            }
        }
    }
}

fn reorthogonalize(mat: &mut Array2<f64>, col: usize) {
    let rows = mat.nrows();
    for prev in 0..col {
        let dot: f64 = (0..rows).map(|i| mat[[i, col]] * mat[[i, prev]]).sum();
        for i in 0..rows {
            mat[[i, col]] -= dot * mat[[i, prev]];
        }
    }
    let norm: f64 = (0..rows)
        .map(|i| mat[[i, col]] * mat[[i, col]])
        .sum::<f64>()
        .sqrt();
    if norm > 1e-150 {
        for i in 0..rows {
            mat[[i, col]] /= norm;
        }
    }
}

fn fill_orthonormal(mat: &mut Array2<f64>, col: usize) {
    let rows = mat.nrows();
    for basis in 0..rows {
        for i in 0..rows {
            mat[[i, col]] = if i == basis { 1.0 } else { 0.0 };
        }
        for prev in 0..col {
            let dot: f64 = (0..rows).map(|i| mat[[i, col]] * mat[[i, prev]]).sum();
            for i in 0..rows {
                mat[[i, col]] -= dot * mat[[i, prev]];
            }
        }
        let norm: f64 = (0..rows)
            .map(|i| mat[[i, col]] * mat[[i, col]])
            .sum::<f64>()
            .sqrt();
        if norm > 0.5 {
            for i in 0..rows {
                mat[[i, col]] /= norm;
            }
            return;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues in nonincreasing order with matching eigenvector
/// columns.
fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut vecs: Array2<f64> = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let scale: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[[p, i]];
                    let mqi = m[[q, i]];
                    m[[p, i]] = c * mpi - s * mqi;
                    m[[q, i]] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = vecs[[i, p]];
                    let viq = vecs[[i, q]];
                    vecs[[i, p]] = c * vip - s * viq;
                    vecs[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let sorted = Array2::from_shape_fn((n, n), |(i, j)| vecs[[i, order[j]]]);
    (vals, sorted)
}

/// Flips each topic so its largest-magnitude tag loading is positive.
/// Ties break on the lowest row index.
fn fix_signs(u: &mut Array2<f64>, v: &mut Array2<f64>) {
    for j in 0..u.ncols() {
        let mut best = 0usize;
        for i in 1..u.nrows() {
            if u[[i, j]].abs() > u[[best, j]].abs() {
                best = i;
            }
        }
        if u[[best, j]] < 0.0 {
            for i in 0..u.nrows() {
                u[[i, j]] = -u[[i, j]];
            }
            for i in 0..v.nrows() {
                v[[i, j]] = -v[[i, j]];
            }
        }
    }
}

/// A track's coordinates in the topic space.
#[derive(Debug, Clone, PartialEq)]
pub struct LsiVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl LsiVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Fitted latent semantic model.
#[derive(Debug, Clone)]
pub struct LsiModel {
    k: usize,
    tag_factors: Array2<f64>,
    singular_values: Vec<f64>,
    /// n×k; row i holds the sigma-weighted right-singular coordinates of
    /// track i, i.e. column i of `Sigma_k V_k^T`.
    track_vectors: Array2<f64>,
    tag_index: Vec<(String, String)>,
    track_index: Vec<String>,
    track_pos: BTreeMap<String, usize>,
}

impl LsiModel {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m(&self) -> usize {
        self.tag_index.len()
    }
    pub fn n(&self) -> usize {
        self.track_index.len()
    }
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }
    pub fn tag_factors(&self) -> &Array2<f64> {
        &self.tag_factors
    }
    pub fn track_vectors(&self) -> &Array2<f64> {
        &self.track_vectors
    }
    pub fn tag_index(&self) -> &[(String, String)] {
        &self.tag_index
    }
    pub fn track_index(&self) -> &[String] {
        &self.track_index
    }

    /// The stored concept vector of a training track.
    pub fn track_vector(&self, track_id: &str, normalize: bool) -> Result<LsiVector> {
        let &row = self
            .track_pos
            .get(track_id)
            .ok_or_else(|| Error::Lookup(format!("unknown track id {track_id:?}")))?;
        let mut values: Vec<f64> = (0..self.k).map(|j| self.track_vectors[[row, j]]).collect();
        if normalize {
            let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return Err(Error::Degenerate(format!(
                    "track {track_id:?} has a zero concept vector"
                )));
            }
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(LsiVector {
            values,
            normalized: normalize,
        })
    }

    /// Projects an unseen tag-incidence vector into the topic space.
    ///
    /// Folding in a training track's own incidence column reproduces its
    /// stored vector, since `U_k^T w_i = Sigma_k V_k^T e_i` for in-span
    /// columns.
    pub fn fold_in(&self, tag_incidence: &[f64]) -> Result<LsiVector> {
        if tag_incidence.len() != self.m() {
            return Err(Error::Param(format!(
                "incidence vector length {} does not match tag count {}",
                tag_incidence.len(),
                self.m()
            )));
        }
        if tag_incidence.iter().all(|&x| x == 0.0) {
            return Err(Error::Degenerate("all-zero tag incidence vector".into()));
        }
        let values: Vec<f64> = (0..self.k)
            .map(|j| {
                (0..self.m())
                    .map(|i| self.tag_factors[[i, j]] * tag_incidence[i])
                    .sum()
            })
            .collect();
        Ok(LsiVector {
            values,
            normalized: false,
        })
    }

    /// Largest-magnitude positive and negative tag loadings of one topic.
    pub fn topic_top_terms(&self, topic_ordinal: usize, top_n: usize) -> Result<TopicReport> {
        if topic_ordinal >= self.k {
            return Err(Error::Param(format!(
                "topic ordinal {topic_ordinal} out of range 0..{}",
                self.k
            )));
        }
        if top_n == 0 {
            return Err(Error::Param("top_n must be positive".into()));
        }
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (i, (set, tag)) in self.tag_index.iter().enumerate() {
            let loading = self.tag_factors[[i, topic_ordinal]];
            if loading > 0.0 {
                positive.push((set.clone(), tag.clone(), loading));
            } else if loading < 0.0 {
                negative.push((set.clone(), tag.clone(), loading));
            }
        }
        positive.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());
        negative.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());
        positive.truncate(top_n);
        negative.truncate(top_n);
        Ok(TopicReport {
            topic_ordinal,
            singular_value: self.singular_values[topic_ordinal],
            positive_loadings: positive,
            negative_loadings: negative,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("tagtriplet-lsi-model 1\n");
        let _ = writeln!(out, "dims\t{}\t{}\t{}", self.m(), self.n(), self.k);
        out.push_str("singular_values");
        for s in &self.singular_values {
            let _ = write!(out, "\t{}", textio::fmt_f64(*s));
        }
        out.push('\n');
        for (i, (set, tag)) in self.tag_index.iter().enumerate() {
            let _ = write!(out, "tag\t{set}\t{tag}");
            for j in 0..self.k {
                let _ = write!(out, "\t{}", textio::fmt_f64(self.tag_factors[[i, j]]));
            }
            out.push('\n');
        }
        for (i, track) in self.track_index.iter().enumerate() {
            let _ = write!(out, "track\t{track}");
            for j in 0..self.k {
                let _ = write!(out, "\t{}", textio::fmt_f64(self.track_vectors[[i, j]]));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        textio::check_version(lines.next(), "tagtriplet-lsi-model", 1, path)?;
        let bad = |line: usize, msg: &str| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {msg}"),
        };
        let dims_line = lines.next().ok_or_else(|| bad(2, "missing dims"))?;
        let dims: Vec<&str> = dims_line.split('\t').collect();
        if dims.len() != 4 || dims[0] != "dims" {
            return Err(bad(2, "expected dims\\tm\\tn\\tk"));
        }
        let m = textio::parse_usize(dims[1], path, 2)?;
        let n = textio::parse_usize(dims[2], path, 2)?;
        let k = textio::parse_usize(dims[3], path, 2)?;
        let sv_line = lines.next().ok_or_else(|| bad(3, "missing singular values"))?;
        let sv: Vec<&str> = sv_line.split('\t').collect();
        if sv.len() != k + 1 || sv[0] != "singular_values" {
            return Err(bad(3, "bad singular_values line"));
        }
        let mut singular_values = Vec::with_capacity(k);
        for s in &sv[1..] {
            singular_values.push(textio::parse_f64(s, path, 3)?);
        }
        let mut tag_index = Vec::with_capacity(m);
        let mut tag_factors = Array2::zeros((m, k));
        let mut track_index = Vec::with_capacity(n);
        let mut track_vectors = Array2::zeros((n, k));
        let mut lineno = 3;
        for i in 0..m {
            lineno += 1;
            let line = lines.next().ok_or_else(|| bad(lineno, "missing tag row"))?;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 + k || f[0] != "tag" {
                return Err(bad(lineno, "bad tag row"));
            }
            tag_index.push((f[1].to_string(), f[2].to_string()));
            for j in 0..k {
                tag_factors[[i, j]] = textio::parse_f64(f[3 + j], path, lineno)?;
            }
        }
        for i in 0..n {
            lineno += 1;
            let line = lines.next().ok_or_else(|| bad(lineno, "missing track row"))?;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 2 + k || f[0] != "track" {
                return Err(bad(lineno, "bad track row"));
            }
            track_index.push(f[1].to_string());
            for j in 0..k {
                track_vectors[[i, j]] = textio::parse_f64(f[2 + j], path, lineno)?;
            }
        }
        let track_pos = track_index
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(LsiModel {
            k,
            tag_factors,
            singular_values,
            track_vectors,
            tag_index,
            track_index,
            track_pos,
        })
    }
}

/// Fits the latent model: truncated SVD of the incidence matrix, track rows as
/// sigma-weighted right-singular coordinates. Trailing numerically-zero
/// singular values are dropped, so the fitted k may be smaller than requested
/// on rank-deficient input.
pub fn fit_lsi(w: &TagTrackMatrix, k: usize) -> Result<LsiModel> {
    let factors = truncated_svd(w, k)?;
    let scale = factors.singular_values[0].max(1.0);
    let keep = factors
        .singular_values
        .iter()
        .take_while(|&&s| s > RANK_TOL * scale)
        .count();
    if keep == 0 {
        return Err(Error::Degenerate("matrix is numerically zero".into()));
    }
    let n = w.cols();
    let m = w.rows();
    let mut track_vectors = Array2::zeros((n, keep));
    for i in 0..n {
        for j in 0..keep {
            track_vectors[[i, j]] = factors.singular_values[j] * factors.v[[i, j]];
        }
    }
    let mut tag_factors = Array2::zeros((m, keep));
    for i in 0..m {
        for j in 0..keep {
            tag_factors[[i, j]] = factors.u[[i, j]];
        }
    }
    let track_index: Vec<String> = w.col_labels().to_vec();
    let track_pos = track_index
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(LsiModel {
        k: keep,
        tag_factors,
        singular_values: factors.singular_values[..keep].to_vec(),
        track_vectors,
        tag_index: w.row_labels().to_vec(),
        track_index,
        track_pos,
    })
}

/// One topic's strongest positive and negative tag loadings.
#[derive(Debug, Clone)]
pub struct TopicReport {
    pub topic_ordinal: usize,
    pub singular_value: f64,
    pub positive_loadings: Vec<(String, String, f64)>,
    pub negative_loadings: Vec<(String, String, f64)>,
}

/// Plain-text table with the positive block above the negative block.
pub fn topic_report_text(report: &TopicReport) -> String {
    let mut out = format!(
        "topic #{} (singular value {:.6})\n",
        report.topic_ordinal, report.singular_value
    );
    out.push_str("  positive loadings:\n");
    for (set, tag, loading) in &report.positive_loadings {
        let _ = writeln!(out, "    {loading:+.6}  {set}:{tag}");
    }
    out.push_str("  negative loadings:\n");
    for (set, tag, loading) in &report.negative_loadings {
        let _ = writeln!(out, "    {loading:+.6}  {set}:{tag}");
    }
    out
}
