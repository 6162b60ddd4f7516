//! Unsupervised classification head: kernel PCA with out-of-sample projection,
//! k-means on the training embedding, and kNN assignment of test points.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::seed;

/// Eigenvalues below this share of the centered trace count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Train-side state needed to embed new points.
#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub dim: usize,
    /// Top `dim` eigenvalues of the centered Gram, descending, clamped at 0.
    pub eigenvalues: Vec<f64>,
    /// N×dim unit eigenvectors (zero columns past the numerical rank).
    pub eigenvectors: DMatrix<f64>,
    pub gram_row_means: Vec<f64>,
    pub gram_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub ids: Vec<String>,
    /// N×d coordinates.
    pub points: DMatrix<f64>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<u8>,
    /// k×d.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub objective: f64,
}

fn ids_or_index(ids: Option<Vec<String>>, n: usize) -> Result<Vec<String>> {
    match ids {
        Some(ids) if ids.len() != n => Err(Error::DimensionMismatch(format!(
            "{} ids for {n} embedding rows",
            ids.len()
        ))),
        Some(ids) => Ok(ids),
        None => Ok((0..n).map(|i| i.to_string()).collect()),
    }
}

/// Fits kPCA on the train Gram. `ids` label the rows (defaults to indices).
pub fn kpca_fit(
    kernel: &KernelMatrix,
    dim: usize,
    ids: Option<Vec<String>>,
) -> Result<(KpcaModel, Embedding)> {
    kpca_fit_gram(&kernel.gram, dim, ids)
}

pub fn kpca_fit_gram(
    gram: &DMatrix<f64>,
    dim: usize,
    ids: Option<Vec<String>>,
) -> Result<(KpcaModel, Embedding)> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Gram is {}x{}",
            n,
            gram.ncols()
        )));
    }
    if dim == 0 || dim >= n {
        return Err(Error::InvalidArgument(format!(
            "kPCA dimension {dim} must be in 1..{n} for {n} training samples"
        )));
    }
    let ids = ids_or_index(ids, n)?;
    let sym = (gram + gram.transpose()) * 0.5;
    let row_means: Vec<f64> = (0..n).map(|i| sym.row(i).sum() / n as f64).collect();
    let mean = row_means.iter().sum::<f64>() / n as f64;
    let centered = DMatrix::from_fn(n, n, |i, j| {
        sym[(i, j)] - row_means[i] - row_means[j] + mean
    });
    let trace = centered.trace();

    let eig = SymmetricEigen::new(centered);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let cutoff = RANK_TOLERANCE * trace.max(0.0);
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut vectors = DMatrix::zeros(n, dim);
    for (c, &k) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff || lambda <= 0.0 {
            eigenvalues.push(0.0);
            continue;
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(c, &v);
        eigenvalues.push(lambda);
    }
    let rank = eigenvalues.iter().filter(|&&l| l > 0.0).count();
    if rank < dim {
        log::warn!("kPCA dimension {dim} exceeds numerical rank {rank}; padding with zero columns");
    }
    let mut points = vectors.clone();
    for (c, &l) in eigenvalues.iter().enumerate() {
        points.column_mut(c).scale_mut(l.sqrt());
    }
    let model = KpcaModel {
        dim,
        eigenvalues,
        eigenvectors: vectors,
        gram_row_means: row_means,
        gram_mean: mean,
    };
    Ok((model, Embedding { ids, points }))
}

/// Projects test points given the N×M train×test cross kernel.
pub fn kpca_project(
    model: &KpcaModel,
    cross: &DMatrix<f64>,
    ids: Option<Vec<String>>,
) -> Result<Embedding> {
    let n = model.gram_row_means.len();
    if cross.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "cross kernel has {} rows, model was fitted on {n} samples",
            cross.nrows()
        )));
    }
    let m = cross.ncols();
    let ids = ids_or_index(ids, m)?;
    let mut centered = cross.clone();
    for j in 0..m {
        let col_mean = cross.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] += model.gram_mean - col_mean - model.gram_row_means[i];
        }
    }
    let mut points = centered.transpose() * &model.eigenvectors;
    for (c, &l) in model.eigenvalues.iter().enumerate() {
        let scale = if l > 0.0 { 1.0 / l.sqrt() } else { 0.0 };
        points.column_mut(c).scale_mut(scale);
    }
    Ok(Embedding { ids, points })
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| (points[(i, d)] - centers[(c, d)]).powi(2))
        .sum()
}

fn plus_plus_seeds<R: Rng>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centers = DMatrix::zeros(k, points.ncols());
    centers.set_row(0, &points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

fn nearest_center(
    points: &DMatrix<f64>,
    i: usize,
    centers: &DMatrix<f64>,
    current: Option<usize>,
) -> usize {
    let mut best = current.unwrap_or(0);
    let mut best_d = sq_dist(points, i, centers, best);
    for c in 0..centers.nrows() {
        let d = sq_dist(points, i, centers, c);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn update_centers(points: &DMatrix<f64>, labels: &[usize], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut centers = DMatrix::zeros(k, points.ncols());
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for d in 0..points.ncols() {
            centers[(c, d)] += points[(i, d)];
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            centers.row_mut(c).scale_mut(1.0 / cnt as f64);
        }
    }
    (centers, counts)
}

/// Moves the farthest point of a multi-member cluster into each empty cluster.
fn fill_empty(points: &DMatrix<f64>, labels: &mut [usize], k: usize) -> DMatrix<f64> {
    loop {
        let (centers, counts) = update_centers(points, labels, k);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return centers;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &c) in labels.iter().enumerate() {
            if counts[c] > 1 {
                let d = sq_dist(points, i, &centers, c);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return centers,
        }
    }
}

fn lloyd(points: &DMatrix<f64>, k: usize, seed: u64) -> ClusterAssignment {
    let n = points.nrows();
    let mut rng = seed::rng(seed);
    let mut centers = plus_plus_seeds(points, k, &mut rng);
    let mut labels: Vec<usize> = (0..n)
        .map(|i| nearest_center(points, i, &centers, None))
        .collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        centers = fill_empty(points, &mut labels, k);
        let next: Vec<usize> = (0..n)
            .map(|i| nearest_center(points, i, &centers, Some(labels[i])))
            .collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    centers = fill_empty(points, &mut labels, k);
    let objective = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points, i, &centers, c))
        .sum();
    ClusterAssignment {
        labels: labels.into_iter().map(|c| c as u8).collect(),
        centroids: centers,
        objective,
    }
}

/// k-means++ seeding, Lloyd iterations, best of `restarts` by WCSS.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    if k == 0 || k > u8::MAX as usize + 1 {
        return Err(Error::InvalidArgument(format!("cannot form {k} clusters")));
    }
    if points.nrows() < k {
        return Err(Error::InvalidArgument(format!(
            "{} points cannot form {k} clusters",
            points.nrows()
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument(
            "k-means needs at least one restart".into(),
        ));
    }
    let runs: Vec<ClusterAssignment> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, k, seed::derive(seed, &[r as u64])))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.objective < runs[best].objective {
            best = r;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one restart"))
}

/// Majority vote over the `k` nearest training points; ties go to the nearest.
pub fn knn_assign(
    train: &DMatrix<f64>,
    labels: &[u8],
    test: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<u8>> {
    let n = train.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} training points",
            labels.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} with {n} training points"
        )));
    }
    if test.ncols() != train.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "train embedding has {} columns, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    Ok((0..test.nrows())
        .into_par_iter()
        .map(|j| {
            let mut by_dist: Vec<(f64, usize)> = (0..n)
                .map(|i| {
                    let d: f64 = (0..train.ncols())
                        .map(|c| (train[(i, c)] - test[(j, c)]).powi(2))
                        .sum();
                    (d, i)
                })
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = std::collections::BTreeMap::<u8, usize>::new();
            for &(_, i) in &by_dist[..k] {
                *votes.entry(labels[i]).or_default() += 1;
            }
            let top = *votes.values().max().expect("k >= 1");
            let nearest = labels[by_dist[0].1];
            if votes[&nearest] == top {
                nearest
            } else {
                *votes
                    .iter()
                    .find(|(_, &v)| v == top)
                    .expect("some label has the top count")
                    .0
            }
        })
        .collect())
}

/// Per attribute: mean, max and min over the window (N × 3V).
pub fn manual_features(cohort: &Cohort) -> Result<Vec<Vec<f64>>> {
    cohort
        .samples()
        .iter()
        .map(|s| {
            let values = s.complete_values("manual features")?;
            let t = s.n_steps();
            let mut row = Vec::with_capacity(3 * s.n_attrs());
            for v in 0..s.n_attrs() {
                let series = &values[v * t..(v + 1) * t];
                row.push(series.iter().sum::<f64>() / t as f64);
                row.push(series.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                row.push(series.iter().copied().fold(f64::INFINITY, f64::min));
            }
            Ok(row)
        })
        .collect()
}

/// Head settings shared by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub dim: usize,
    pub n_clusters: usize,
    pub k_nn: usize,
    pub restarts: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            n_clusters: 2,
            k_nn: 5,
            restarts: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadOutcome {
    pub model: KpcaModel,
    pub train_embedding: Embedding,
    pub train_clusters: ClusterAssignment,
    pub test_embedding: Option<Embedding>,
    pub test_clusters: Option<Vec<u8>>,
}

/// kPCA on the train Gram, k-means on the train embedding, kNN for test points.
pub fn run_head(
    kernel: &KernelMatrix,
    cfg: &HeadConfig,
    train_ids: Option<Vec<String>>,
    test_ids: Option<Vec<String>>,
    seed: u64,
) -> Result<HeadOutcome> {
    let (model, train_embedding) = kpca_fit(kernel, cfg.dim, train_ids)?;
    let train_clusters = kmeans(&train_embedding.points, cfg.n_clusters, cfg.restarts, seed)?;
    let (test_embedding, test_clusters) = match &kernel.cross {
        Some(cross) => {
            let emb = kpca_project(&model, cross, test_ids)?;
            let assigned = knn_assign(
                &train_embedding.points,
                &train_clusters.labels,
                &emb.points,
                cfg.k_nn,
            )?;
            (Some(emb), Some(assigned))
        }
        None => (None, None),
    };
    Ok(HeadOutcome {
        model,
        train_embedding,
        train_clusters,
        test_embedding,
        test_clusters,
    })
}

/// CSV `id,label,cluster,e1,...,ed`; missing labels print as `NA`.
pub fn write_embedding<W: Write>(
    out: &mut W,
    emb: &Embedding,
    labels: &[Option<u8>],
    clusters: &[u8],
    dims: usize,
) -> std::io::Result<()> {
    let dims = dims.min(emb.dim());
    write!(out, "id,label,cluster")?;
    for c in 1..=dims {
        write!(out, ",e{c}")?;
    }
    writeln!(out)?;
    for (i, (id, cluster)) in emb.ids.iter().zip(clusters).enumerate() {
        let label = labels
            .get(i)
            .copied()
            .flatten()
            .map_or("NA".to_string(), |l| l.to_string());
        write!(out, "{id},{label},{cluster}")?;
        for c in 0..dims {
            write!(out, ",{}", emb.points[(i, c)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_embedding_file(
    path: impl AsRef<Path>,
    emb: &Embedding,
    labels: &[Option<u8>],
    clusters: &[u8],
    dims: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_embedding(&mut buf, emb, labels, clusters, dims).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
