//! Learned pattern similarity.
//!
//! Each tree draws a segment length `l`, a lag `p` and a (predictor, target)
//! attribute pair. A sample becomes a matrix of segment rows: the predictor
//! window `x_pred(t .. t+l)` and the target value `x_tgt(t + l + p - 1)`.
//! A random regression tree is grown on the pooled rows of the training set;
//! a sample is then summarised by how many of its rows land in each leaf, and
//! two samples are compared with histogram intersection over the concatenated
//! leaf counts, normalized by the total leaf count.
//!
//! Missing data: rows with an unobserved target are left out of training, and
//! a row with an unobserved value at a split feature follows the child that
//! received more training rows.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, MtSample};
use crate::error::{Error, Result};
use crate::kernels::{assemble_cross, assemble_symmetric, KernelMatrix};
use crate::seed;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpsConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate thresholds sampled per node.
    pub n_thresholds: usize,
    /// Nodes with fewer training rows are not split.
    pub min_split_rows: usize,
    pub min_segment_share: f64,
    pub max_segment_share: f64,
    pub max_lag_share: f64,
}

impl Default for LpsConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 6,
            n_thresholds: 20,
            min_split_rows: 8,
            min_segment_share: 0.15,
            max_segment_share: 0.5,
            max_lag_share: 0.2,
        }
    }
}

impl LpsConfig {
    fn segment_range(&self, t: usize) -> (usize, usize) {
        let lo = ((self.min_segment_share * t as f64).ceil() as usize).max(1);
        let hi = ((self.max_segment_share * t as f64).ceil() as usize).max(lo);
        (lo, hi)
    }

    fn max_lag(&self, t: usize) -> usize {
        ((self.max_lag_share * t as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRow {
    pub predictors: Vec<Option<f64>>,
    pub target: Option<f64>,
}

/// One row per start position `t ∈ [0, T - l - p]` (zero-based).
pub fn build_segment_matrix(
    x: &MtSample,
    l: usize,
    p: usize,
    v_pred: usize,
    v_tgt: usize,
) -> Result<Vec<SegmentRow>> {
    let t_len = x.n_steps();
    if l == 0 || p == 0 || l + p > t_len {
        return Err(Error::InvalidArgument(format!(
            "segment length {l} plus lag {p} must fit in a window of {t_len}; use a larger window"
        )));
    }
    if v_pred >= x.n_attrs() || v_tgt >= x.n_attrs() {
        return Err(Error::InvalidArgument("attribute out of range".into()));
    }
    Ok((0..=t_len - l - p)
        .map(|t| SegmentRow {
            predictors: (t..t + l).map(|s| x.get(v_pred, s)).collect(),
            target: x.get(v_tgt, t + l + p - 1),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Side taken by rows whose split feature is unobserved.
        missing_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        id: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpsTree {
    pub segment_length: usize,
    pub lag: usize,
    pub predictor_attr: usize,
    pub target_attr: usize,
    pub nodes: Vec<Node>,
    pub n_leaves: usize,
}

impl LpsTree {
    fn leaf_of(&self, row: &[Option<f64>]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { id } => return *id,
                Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                } => {
                    let go_left = match row[*feature] {
                        Some(x) => x <= *threshold,
                        None => *missing_left,
                    };
                    k = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match &nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Concatenated per-tree leaf counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagRepresentation {
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpsForest {
    pub format_version: u32,
    pub n_attrs: usize,
    pub window_length: usize,
    pub trees: Vec<LpsTree>,
}

/// Training rows of one tree: predictor windows and observed targets.
struct TrainingRows {
    predictors: Vec<Vec<Option<f64>>>,
    targets: Vec<f64>,
}

fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    if n > 0.0 {
        sum_sq - sum * sum / n
    } else {
        0.0
    }
}

fn grow_tree<R: Rng>(
    rows: &TrainingRows,
    l: usize,
    cfg: &LpsConfig,
    rng: &mut R,
) -> (Vec<Node>, usize) {
    let mut nodes = Vec::new();
    let mut n_leaves = 0;
    // (node slot, rows at node, depth)
    nodes.push(Node::Leaf { id: usize::MAX });
    let mut stack: Vec<(usize, Vec<usize>, usize)> =
        vec![(0, (0..rows.targets.len()).collect(), 0)];
    while let Some((slot, at, depth)) = stack.pop() {
        let split = if depth < cfg.max_depth && at.len() >= cfg.min_split_rows {
            best_split(rows, &at, l, cfg, rng)
        } else {
            None
        };
        match split {
            None => {
                nodes[slot] = Node::Leaf { id: n_leaves };
                n_leaves += 1;
            }
            Some((feature, threshold)) => {
                let (mut left, mut right, mut missing) = (Vec::new(), Vec::new(), Vec::new());
                for &r in &at {
                    match rows.predictors[r][feature] {
                        Some(x) if x <= threshold => left.push(r),
                        Some(_) => right.push(r),
                        None => missing.push(r),
                    }
                }
                let missing_left = left.len() >= right.len();
                if missing_left {
                    left.extend(missing);
                } else {
                    right.extend(missing);
                }
                let (li, ri) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { id: usize::MAX });
                nodes.push(Node::Leaf { id: usize::MAX });
                nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left: li,
                    right: ri,
                };
                // Right pushed first so the left subtree is numbered first.
                stack.push((ri, right, depth + 1));
                stack.push((li, left, depth + 1));
            }
        }
    }
    (nodes, n_leaves)
}

/// One random feature, `n_thresholds` random thresholds, best SSE reduction.
fn best_split<R: Rng>(
    rows: &TrainingRows,
    at: &[usize],
    l: usize,
    cfg: &LpsConfig,
    rng: &mut R,
) -> Option<(usize, f64)> {
    let feature = rng.random_range(0..l);
    let obs: Vec<(f64, f64)> = at
        .iter()
        .filter_map(|&r| rows.predictors[r][feature].map(|x| (x, rows.targets[r])))
        .collect();
    if obs.len() < 2 {
        return None;
    }
    let (lo, hi) = obs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| {
            (a.min(x), b.max(x))
        });
    if hi <= lo {
        return None;
    }
    let (s, ss) = obs
        .iter()
        .fold((0.0, 0.0), |(s, ss), &(_, y)| (s + y, ss + y * y));
    let n = obs.len() as f64;
    let parent = sse(s, ss, n);
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..cfg.n_thresholds {
        let thr = rng.random_range(lo..hi);
        let (mut ls, mut lss, mut ln) = (0.0, 0.0, 0.0);
        for &(x, y) in &obs {
            if x <= thr {
                ls += y;
                lss += y * y;
                ln += 1.0;
            }
        }
        if ln == 0.0 || ln == n {
            continue;
        }
        let gain = parent - sse(ls, lss, ln) - sse(s - ls, ss - lss, n - ln);
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, thr));
        }
    }
    match best {
        Some((gain, thr)) if gain > 1e-12 * parent.abs().max(f64::MIN_POSITIVE) => {
            Some((feature, thr))
        }
        _ => None,
    }
}

fn train_tree(
    samples: &[MtSample],
    n_attrs: usize,
    window: usize,
    cfg: &LpsConfig,
    seed: u64,
) -> Result<LpsTree> {
    let mut rng = seed::rng(seed);
    let (lo, hi) = cfg.segment_range(window);
    let l = rng.random_range(lo..=hi);
    let p = rng
        .random_range(1..=cfg.max_lag(window))
        .min(window.saturating_sub(l).max(1));
    let predictor_attr = rng.random_range(0..n_attrs);
    let target_attr = rng.random_range(0..n_attrs);
    let mut rows = TrainingRows {
        predictors: Vec::new(),
        targets: Vec::new(),
    };
    for s in samples {
        for row in build_segment_matrix(s, l, p, predictor_attr, target_attr)? {
            if let Some(y) = row.target {
                rows.predictors.push(row.predictors);
                rows.targets.push(y);
            }
        }
    }
    let (nodes, n_leaves) = grow_tree(&rows, l, cfg, &mut rng);
    Ok(LpsTree {
        segment_length: l,
        lag: p,
        predictor_attr,
        target_attr,
        nodes,
        n_leaves,
    })
}

pub fn lps_train(train: &Cohort, cfg: &LpsConfig, seed: u64) -> Result<LpsForest> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("LPS needs at least one tree".into()));
    }
    if train.len() < 2 {
        return Err(Error::InvalidArgument(
            "LPS needs at least two training samples".into(),
        ));
    }
    let window = train.window_length();
    let (lo, _) = cfg.segment_range(window);
    if lo + 1 > window {
        return Err(Error::InvalidArgument(format!(
            "window of {window} steps is too short for LPS segments; use a larger window"
        )));
    }
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|j| {
            train_tree(
                train.samples(),
                train.n_attrs(),
                window,
                cfg,
                seed::derive(seed, &[j as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LpsForest {
        format_version: FOREST_FORMAT_VERSION,
        n_attrs: train.n_attrs(),
        window_length: window,
        trees,
    })
}

impl LpsForest {
    /// Σ_j R_j, the length of a representation.
    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.n_leaves).sum()
    }

    pub fn represent(&self, x: &MtSample) -> Result<BagRepresentation> {
        if x.n_attrs() != self.n_attrs {
            return Err(Error::DimensionMismatch(format!(
                "forest trained on {} attributes, sample has {}",
                self.n_attrs,
                x.n_attrs()
            )));
        }
        let mut counts = vec![0u32; self.total_leaves()];
        let mut offset = 0;
        for tree in &self.trees {
            let rows = build_segment_matrix(
                x,
                tree.segment_length,
                tree.lag,
                tree.predictor_attr,
                tree.target_attr,
            )?;
            if rows.is_empty() {
                return Err(Error::InvalidArgument(
                    "sample has no segment rows for a tree; use a larger window".into(),
                ));
            }
            for row in &rows {
                counts[offset + tree.leaf_of(&row.predictors)] += 1;
            }
            offset += tree.n_leaves;
        }
        Ok(BagRepresentation { counts })
    }

    pub fn kernel(&self, a: &BagRepresentation, b: &BagRepresentation) -> Result<f64> {
        lps_kernel(a, b, self.total_leaves())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let forest: LpsForest =
            serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if forest.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "LPS forest version {} (expected {FOREST_FORMAT_VERSION})",
                forest.format_version
            )));
        }
        Ok(forest)
    }
}

/// Histogram intersection normalized by the total leaf count.
pub fn lps_kernel(
    a: &BagRepresentation,
    b: &BagRepresentation,
    total_leaves: usize,
) -> Result<f64> {
    if a.counts.len() != b.counts.len() || a.counts.len() != total_leaves {
        return Err(Error::DimensionMismatch(format!(
            "representations of length {} and {} (expected {total_leaves})",
            a.counts.len(),
            b.counts.len()
        )));
    }
    let inter: u64 = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&x, &y)| x.min(y) as u64)
        .sum();
    Ok(inter as f64 / total_leaves as f64)
}

/// Train Gram and optional train×test cross kernel.
pub fn lps_gram(forest: &LpsForest, train: &Cohort, test: Option<&Cohort>) -> Result<KernelMatrix> {
    let represent = |c: &Cohort| -> Result<Vec<BagRepresentation>> {
        c.samples()
            .par_iter()
            .map(|s| forest.represent(s))
            .collect()
    };
    let tr = represent(train)?;
    let gram = assemble_symmetric(tr.len(), |i, j| forest.kernel(&tr[i], &tr[j]))?;
    let cross: Option<DMatrix<f64>> = test
        .map(|t| {
            let te = represent(t)?;
            assemble_cross(tr.len(), te.len(), |i, j| forest.kernel(&tr[i], &te[j]))
        })
        .transpose()?;
    Ok(KernelMatrix::new(gram, cross, "lps"))
}
