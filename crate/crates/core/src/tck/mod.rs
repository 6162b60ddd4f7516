//! Time series cluster kernel.
//!
//! An ensemble of [`gmm`] mixtures, one per `(q1, q2)` with `q1` an
//! initialization index and `q2 ∈ [2, C]` a component count. Each member sees
//! a random time segment, attribute subset and sample subset, and random prior
//! hyperparameters. The kernel averages, over members, the cosine similarity of
//! the members' posterior vectors.

pub mod gmm;

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, MtSample};
use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::seed;
pub use gmm::{
    fit_diaggmm, initial_params, DiagGmmParams, GmmFit, GmmPrior, MaskedData, PriorHyper,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAX_ATTEMPTS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TckConfig {
    /// Q: initializations per component count.
    pub n_init: usize,
    /// C: maximal component count; derived from N when absent.
    pub max_components: Option<usize>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TckConfig {
    fn default() -> Self {
        Self {
            n_init: 30,
            max_components: None,
            max_iter: 30,
            tol: 1e-6,
        }
    }
}

impl TckConfig {
    pub fn components_for(&self, n: usize) -> usize {
        self.max_components
            .unwrap_or_else(|| (n.div_ceil(25) + 2).clamp(2, 40))
    }
}

/// One fitted ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TckMember {
    pub init_index: usize,
    pub n_components: usize,
    pub segment_start: usize,
    pub segment_len: usize,
    pub attributes: Vec<usize>,
    pub train_subset: Vec<usize>,
    pub prior: PriorHyper,
    pub params: DiagGmmParams,
    /// Posteriors of every training sample, N×G row-major.
    pub train_posteriors: Vec<f64>,
    pub objective: Vec<f64>,
    pub reseeds: Vec<usize>,
}

impl TckMember {
    pub fn posterior(&self, sample: &MtSample) -> Vec<f64> {
        self.params
            .posterior(sample, &self.attributes, self.segment_start)
    }

    pub fn objective_is_monotone(&self) -> bool {
        self.objective.windows(2).enumerate().all(|(i, w)| {
            self.reseeds.contains(&i) || w[1] >= w[0] - gmm::ASCENT_TOLERANCE * w[0].abs().max(1.0)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TckModel {
    pub format_version: u32,
    pub n_init: usize,
    pub max_components: usize,
    pub n_attrs: usize,
    pub window_length: usize,
    pub n_train: usize,
    /// Members in canonical `(q1, q2)` order; skipped members are absent.
    pub members: Vec<TckMember>,
    /// Members that failed every attempt.
    pub skipped: usize,
}

impl TckModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TckModel =
            serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "TCK model version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

fn draw_member<R: Rng>(
    rng: &mut R,
    samples: &[MtSample],
    n_attrs: usize,
    window: usize,
) -> (PriorHyper, usize, usize, Vec<usize>, Vec<usize>) {
    let hyper = PriorHyper {
        strength: (rng.random_range(0.1f64.ln()..=10f64.ln())).exp(),
        smoothing_width: rng.random_range(1..=3),
        a0: rng.random_range(0.01..=1.0),
        b0_scale: rng.random_range(0.01..=0.1),
    };
    let t_min = window.min(6);
    let len = rng.random_range(t_min..=window);
    let start = rng.random_range(0..=window - len);
    let v_min = n_attrs.min(2);
    let n_attr_pick = rng.random_range(v_min..=n_attrs);
    let mut attrs = index::sample(rng, n_attrs, n_attr_pick).into_vec();
    attrs.sort_unstable();
    let n = samples.len();
    let n_min = (0.8 * n as f64).ceil() as usize;
    let n_pick = rng.random_range(n_min.max(1)..=n);
    let mut subset = index::sample(rng, n, n_pick).into_vec();
    subset.sort_unstable();
    (hyper, start, len, attrs, subset)
}

fn fit_member(
    samples: &[MtSample],
    n_attrs: usize,
    window: usize,
    q1: usize,
    q2: usize,
    cfg: &TckConfig,
    seed: u64,
) -> Option<TckMember> {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng_for(seed, &[q1 as u64, q2 as u64, attempt]);
        let (prior_hyper, start, len, attrs, subset) =
            draw_member(&mut rng, samples, n_attrs, window);
        let data = MaskedData::from_samples(samples, &subset, &attrs, start, len);
        let prior = GmmPrior::from_data(&data, prior_hyper);
        let init = gmm::initial_params(&data, &prior, q2, &mut rng);
        match gmm::fit_diaggmm(&data, &prior, init, &mut rng, cfg.max_iter, cfg.tol) {
            Ok(fit) => {
                let mut member = TckMember {
                    init_index: q1,
                    n_components: q2,
                    segment_start: start,
                    segment_len: len,
                    attributes: attrs,
                    train_subset: subset,
                    prior: prior_hyper,
                    params: fit.params,
                    train_posteriors: Vec::new(),
                    objective: fit.objective,
                    reseeds: fit.reseeds,
                };
                member.train_posteriors =
                    samples.iter().flat_map(|s| member.posterior(s)).collect();
                if member.train_posteriors.iter().all(|p| p.is_finite()) {
                    return Some(member);
                }
                log::warn!("TCK member ({q1}, {q2}) produced non-finite posteriors");
            }
            Err(e) => log::warn!("TCK member ({q1}, {q2}) attempt {attempt} failed: {e}"),
        }
    }
    None
}

/// Rows of `posteriors` (n×g) scaled to unit l2 norm.
fn unit_rows(posteriors: &[f64], n: usize, g: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_row_slice(n, g, posteriors);
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    m
}

/// Trains the ensemble and returns the N×N kernel (diagonal exactly one).
pub fn tck_train(train: &Cohort, cfg: &TckConfig, seed: u64) -> Result<(KernelMatrix, TckModel)> {
    let n = train.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "TCK needs at least two training samples".into(),
        ));
    }
    if cfg.n_init == 0 {
        return Err(Error::InvalidArgument(
            "TCK needs at least one initialization".into(),
        ));
    }
    let c = cfg.components_for(n);
    if c < 2 {
        return Err(Error::InvalidArgument("TCK needs C >= 2".into()));
    }
    let grid: Vec<(usize, usize)> = (0..cfg.n_init)
        .flat_map(|q1| (2..=c).map(move |q2| (q1, q2)))
        .collect();
    let samples = train.samples();
    let (n_attrs, window) = (train.n_attrs(), train.window_length());
    let fitted: Vec<Option<TckMember>> = grid
        .par_iter()
        .map(|&(q1, q2)| fit_member(samples, n_attrs, window, q1, q2, cfg, seed))
        .collect();
    let skipped = fitted.iter().filter(|m| m.is_none()).count();
    let members: Vec<TckMember> = fitted.into_iter().flatten().collect();
    if members.is_empty() {
        return Err(Error::Degenerate("every TCK member failed to fit".into()));
    }
    if skipped > 0 {
        log::warn!("{skipped} TCK members skipped after {MAX_ATTEMPTS} attempts");
    }

    let mut k = DMatrix::zeros(n, n);
    for m in &members {
        let u = unit_rows(&m.train_posteriors, n, m.n_components);
        k.gemm(1.0, &u, &u.transpose(), 1.0);
    }
    k /= members.len() as f64;
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = if i == j {
                1.0
            } else {
                k[(i, j)].clamp(0.0, 1.0)
            };
        }
    }
    let model = TckModel {
        format_version: MODEL_FORMAT_VERSION,
        n_init: cfg.n_init,
        max_components: c,
        n_attrs,
        window_length: window,
        n_train: n,
        members,
        skipped,
    };
    Ok((KernelMatrix::new(k, None, "tck"), model))
}

/// Out-of-sample kernel between the training set and `test`, N×M.
pub fn tck_test(model: &TckModel, test: &Cohort) -> Result<DMatrix<f64>> {
    if test.n_attrs() != model.n_attrs || test.window_length() != model.window_length {
        return Err(Error::DimensionMismatch(format!(
            "TCK model trained on {}x{}, test cohort is {}x{}",
            model.n_attrs,
            model.window_length,
            test.n_attrs(),
            test.window_length()
        )));
    }
    let m = test.len();
    let mut k = DMatrix::zeros(model.n_train, m);
    let contributions: Vec<(DMatrix<f64>, DMatrix<f64>)> = model
        .members
        .par_iter()
        .map(|member| {
            let g = member.n_components;
            let post: Vec<f64> = test
                .samples()
                .iter()
                .flat_map(|s| member.posterior(s))
                .collect();
            (
                unit_rows(&member.train_posteriors, model.n_train, g),
                unit_rows(&post, m, g),
            )
        })
        .collect();
    for (u, w) in &contributions {
        k.gemm(1.0, u, &w.transpose(), 1.0);
    }
    k /= model.members.len() as f64;
    k.apply(|x| *x = x.clamp(0.0, 1.0));
    Ok(k)
}
