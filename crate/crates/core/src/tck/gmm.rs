//! Diagonal-covariance Gaussian mixtures over masked MTS, fitted by MAP-EM.
//!
//! Each component has a time-varying mean curve per attribute and a
//! time-constant variance per attribute. Unobserved cells drop out of the
//! likelihood: their factor is `N(·)^0 = 1`.
//!
//! Prior (up to constants), which the M-step maximizes exactly:
//!
//! * mixture weights: flat;
//! * `μ_gv(t) | σ²_gv ~ N(m̃_v(t), σ²_gv / λ)` without the normalizer, where
//!   `m̃_v` is the empirical mean curve smoothed by a Gaussian window;
//! * `σ²_gv` with density `∝ (σ²)^{-a₀} exp(-b₀_v / σ²)`, bounded below by a
//!   variance floor.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::MtSample;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Components whose total responsibility falls below this are re-seeded.
pub const EMPTY_COMPONENT: f64 = 1e-8;
/// Relative slack allowed in the MAP objective ascent check.
pub const ASCENT_TOLERANCE: f64 = 1e-10;
const VARIANCE_FLOOR_SHARE: f64 = 1e-4;

/// Dense restriction of a set of samples to an attribute subset and a time segment.
#[derive(Debug, Clone)]
pub struct MaskedData {
    pub n: usize,
    pub n_attrs: usize,
    pub n_steps: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MaskedData {
    pub fn new(
        n: usize,
        n_attrs: usize,
        n_steps: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != n * n_attrs * n_steps || mask.len() != values.len() {
            return Err(Error::DimensionMismatch("masked data buffer size".into()));
        }
        Ok(Self {
            n,
            n_attrs,
            n_steps,
            values,
            mask,
        })
    }

    pub fn from_samples(
        samples: &[MtSample],
        indices: &[usize],
        attrs: &[usize],
        start: usize,
        len: usize,
    ) -> Self {
        let (va, tl) = (attrs.len(), len);
        let mut values = Vec::with_capacity(indices.len() * va * tl);
        let mut mask = Vec::with_capacity(values.capacity());
        for &i in indices {
            let s = &samples[i];
            for &v in attrs {
                for t in start..start + len {
                    match s.get(v, t) {
                        Some(x) => {
                            values.push(x);
                            mask.push(true);
                        }
                        None => {
                            values.push(0.0);
                            mask.push(false);
                        }
                    }
                }
            }
        }
        Self {
            n: indices.len(),
            n_attrs: va,
            n_steps: tl,
            values,
            mask,
        }
    }

    #[inline]
    pub fn cell(&self, n: usize, v: usize, t: usize) -> Option<f64> {
        let k = (n * self.n_attrs + v) * self.n_steps + t;
        self.mask[k].then(|| self.values[k])
    }
}

/// Prior hyperparameters drawn per ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    /// Strength λ of the mean-curve prior.
    pub strength: f64,
    /// Standard deviation, in steps, of the Gaussian smoothing window.
    pub smoothing_width: usize,
    pub a0: f64,
    /// `b₀_v = b0_scale · var_v`.
    pub b0_scale: f64,
}

/// Data-dependent prior quantities for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    pub hyper: PriorHyper,
    /// Smoothed empirical mean curves, V×T.
    pub mean_curves: Vec<f64>,
    pub attr_variance: Vec<f64>,
    pub b0: Vec<f64>,
    pub variance_floor: Vec<f64>,
}

impl GmmPrior {
    pub fn from_data(data: &MaskedData, hyper: PriorHyper) -> Self {
        let (va, tl) = (data.n_attrs, data.n_steps);
        let mut mean_curves = vec![0.0; va * tl];
        let mut attr_variance = vec![1.0; va];
        let width = hyper.smoothing_width.max(1) as f64;
        for v in 0..va {
            let mut sums = vec![0.0; tl];
            let mut counts = vec![0.0; tl];
            let (mut s1, mut s2, mut c) = (0.0, 0.0, 0.0);
            for n in 0..data.n {
                for t in 0..tl {
                    if let Some(x) = data.cell(n, v, t) {
                        sums[t] += x;
                        counts[t] += 1.0;
                        s1 += x;
                        s2 += x * x;
                        c += 1.0;
                    }
                }
            }
            let mean = if c > 0.0 { s1 / c } else { 0.0 };
            if c >= 2.0 {
                let var = (s2 / c - mean * mean).max(0.0);
                if var > 1e-12 * (1.0 + mean * mean) {
                    attr_variance[v] = var;
                }
            }
            for t in 0..tl {
                let (mut num, mut den) = (0.0, 0.0);
                for s in 0..tl {
                    let d = t as f64 - s as f64;
                    let w = (-d * d / (2.0 * width * width)).exp();
                    num += w * sums[s];
                    den += w * counts[s];
                }
                mean_curves[v * tl + t] = if den > 0.0 { num / den } else { mean };
            }
        }
        let b0 = attr_variance.iter().map(|&s| hyper.b0_scale * s).collect();
        let variance_floor = attr_variance
            .iter()
            .map(|&s| VARIANCE_FLOOR_SHARE * s)
            .collect();
        Self {
            hyper,
            mean_curves,
            attr_variance,
            b0,
            variance_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGmmParams {
    pub n_components: usize,
    pub n_attrs: usize,
    pub n_steps: usize,
    /// Mixture weights θ, length G.
    pub weights: Vec<f64>,
    /// Mean curves μ, G×V×T.
    pub means: Vec<f64>,
    /// Variances σ², G×V.
    pub variances: Vec<f64>,
}

impl DiagGmmParams {
    pub fn validate(&self) -> Result<()> {
        let (g, v, t) = (self.n_components, self.n_attrs, self.n_steps);
        if self.weights.len() != g || self.means.len() != g * v * t || self.variances.len() != g * v
        {
            return Err(Error::Format("DiagGMM parameter sizes".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::Format(format!("mixture weights sum to {sum}")));
        }
        if self.variances.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Format("non-positive variance".into()));
        }
        Ok(())
    }

    #[inline]
    fn mean(&self, g: usize, v: usize, t: usize) -> f64 {
        self.means[(g * self.n_attrs + v) * self.n_steps + t]
    }

    /// `ln θ_g + Σ_{v,t} r_v(t) ln N(x_v(t) | μ_gv(t), σ²_gv)` for every g,
    /// with `cell(v, t)` giving the observed value or `None`.
    fn log_joint(&self, cell: impl Fn(usize, usize) -> Option<f64>, out: &mut [f64]) {
        let (va, tl) = (self.n_attrs, self.n_steps);
        for (g, slot) in out.iter_mut().enumerate().take(self.n_components) {
            let mut acc = self.weights[g].ln();
            for v in 0..va {
                let var = self.variances[g * va + v];
                let (mut sq, mut cnt) = (0.0, 0.0);
                for t in 0..tl {
                    if let Some(x) = cell(v, t) {
                        let d = x - self.mean(g, v, t);
                        sq += d * d;
                        cnt += 1.0;
                    }
                }
                acc -= 0.5 * (cnt * (LN_2PI + var.ln()) + sq / var);
            }
            *slot = acc;
        }
    }

    /// Posterior over components for one sample restricted to `attrs` and the
    /// segment starting at `start`.
    pub fn posterior(&self, sample: &MtSample, attrs: &[usize], start: usize) -> Vec<f64> {
        let mut lj = vec![0.0; self.n_components];
        self.log_joint(|v, t| sample.get(attrs[v], start + t), &mut lj);
        normalize_log(&mut lj);
        lj
    }
}

/// Turns log joint values into normalized probabilities in place and returns
/// the log normalizer.
fn normalize_log(lj: &mut [f64]) -> f64 {
    let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        log::warn!("all mixture components underflowed; using a uniform posterior");
        let u = 1.0 / lj.len() as f64;
        lj.fill(u);
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for x in lj.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in lj.iter_mut() {
        *x /= sum;
    }
    m + sum.ln()
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub params: DiagGmmParams,
    /// Responsibilities of the fitted samples, n×G row-major.
    pub posteriors: Vec<f64>,
    /// MAP objective at each E-step, in order.
    pub objective: Vec<f64>,
    /// Indices into `objective` right after which a component was re-seeded.
    pub reseeds: Vec<usize>,
    pub converged: bool,
}

impl GmmFit {
    /// True if the objective never decreased between re-seeds (relative
    /// slack [`ASCENT_TOLERANCE`]).
    pub fn is_monotone(&self) -> bool {
        self.objective.windows(2).enumerate().all(|(i, w)| {
            self.reseeds.contains(&i) || w[1] >= w[0] - ASCENT_TOLERANCE * w[0].abs().max(1.0)
        })
    }
}

/// Smoothed curve of one sample: `(r x + λ m̃) / (r + λ)` per cell.
fn seeded_curve(data: &MaskedData, prior: &GmmPrior, n: usize, out: &mut [f64]) {
    let lambda = prior.hyper.strength;
    for v in 0..data.n_attrs {
        for t in 0..data.n_steps {
            let m = prior.mean_curves[v * data.n_steps + t];
            out[v * data.n_steps + t] = match data.cell(n, v, t) {
                Some(x) => (x + lambda * m) / (1.0 + lambda),
                None => m,
            };
        }
    }
}

pub fn initial_params<R: Rng>(
    data: &MaskedData,
    prior: &GmmPrior,
    g: usize,
    rng: &mut R,
) -> DiagGmmParams {
    let block = data.n_attrs * data.n_steps;
    let mut means = vec![0.0; g * block];
    let picks: Vec<usize> = if data.n >= g {
        index::sample(rng, data.n, g).into_vec()
    } else {
        (0..g).map(|_| rng.random_range(0..data.n)).collect()
    };
    for (k, &n) in picks.iter().enumerate() {
        seeded_curve(data, prior, n, &mut means[k * block..(k + 1) * block]);
    }
    let variances = (0..g)
        .flat_map(|_| prior.attr_variance.iter().copied())
        .collect();
    DiagGmmParams {
        n_components: g,
        n_attrs: data.n_attrs,
        n_steps: data.n_steps,
        weights: vec![1.0 / g as f64; g],
        means,
        variances,
    }
}

fn log_prior(params: &DiagGmmParams, prior: &GmmPrior) -> f64 {
    let (va, tl) = (params.n_attrs, params.n_steps);
    let lambda = prior.hyper.strength;
    let mut total = 0.0;
    for g in 0..params.n_components {
        for v in 0..va {
            let var = params.variances[g * va + v];
            let dev: f64 = (0..tl)
                .map(|t| (params.mean(g, v, t) - prior.mean_curves[v * tl + t]).powi(2))
                .sum();
            total += -lambda * dev / (2.0 * var) - prior.hyper.a0 * var.ln() - prior.b0[v] / var;
        }
    }
    total
}

/// E-step: responsibilities into `post` (n×G); returns the log likelihood.
fn e_step(params: &DiagGmmParams, data: &MaskedData, post: &mut [f64]) -> f64 {
    let g = params.n_components;
    let mut ll = 0.0;
    for n in 0..data.n {
        let row = &mut post[n * g..(n + 1) * g];
        params.log_joint(|v, t| data.cell(n, v, t), row);
        ll += normalize_log(row);
    }
    ll
}

/// M-step; returns the components whose total responsibility is empty.
fn m_step(
    params: &mut DiagGmmParams,
    data: &MaskedData,
    prior: &GmmPrior,
    post: &[f64],
) -> Vec<usize> {
    let (g_count, va, tl) = (params.n_components, data.n_attrs, data.n_steps);
    let lambda = prior.hyper.strength;
    let mut empty = Vec::new();
    let totals: Vec<f64> = (0..g_count)
        .map(|g| (0..data.n).map(|n| post[n * g_count + g]).sum())
        .collect();
    let grand: f64 = totals.iter().sum();
    for (g, &total) in totals.iter().enumerate() {
        params.weights[g] = total / grand;
        if total < EMPTY_COMPONENT {
            empty.push(g);
        }
    }
    let mut w_sum = vec![0.0; tl];
    let mut wx_sum = vec![0.0; tl];
    for g in 0..g_count {
        for v in 0..va {
            w_sum.fill(0.0);
            wx_sum.fill(0.0);
            for n in 0..data.n {
                let p = post[n * g_count + g];
                for t in 0..tl {
                    if let Some(x) = data.cell(n, v, t) {
                        w_sum[t] += p;
                        wx_sum[t] += p * x;
                    }
                }
            }
            let base = (g * va + v) * tl;
            let mut dev = 0.0;
            for t in 0..tl {
                let m = prior.mean_curves[v * tl + t];
                let mu = (wx_sum[t] + lambda * m) / (w_sum[t] + lambda);
                params.means[base + t] = mu;
                dev += (mu - m) * (mu - m);
            }
            let (mut sq, mut cnt) = (0.0, 0.0);
            for n in 0..data.n {
                let p = post[n * g_count + g];
                for t in 0..tl {
                    if let Some(x) = data.cell(n, v, t) {
                        let d = x - params.means[base + t];
                        sq += p * d * d;
                        cnt += p;
                    }
                }
            }
            let var = (sq + lambda * dev + 2.0 * prior.b0[v]) / (cnt + 2.0 * prior.hyper.a0);
            params.variances[g * va + v] = var.max(prior.variance_floor[v]);
        }
    }
    empty
}

/// MAP-EM from `init` until the relative objective gain drops below `tol`
/// or `max_iter` M-steps have run.
pub fn fit_diaggmm<R: Rng>(
    data: &MaskedData,
    prior: &GmmPrior,
    init: DiagGmmParams,
    rng: &mut R,
    max_iter: usize,
    tol: f64,
) -> Result<GmmFit> {
    if data.n == 0 {
        return Err(Error::InvalidArgument(
            "cannot fit a mixture to zero samples".into(),
        ));
    }
    let g = init.n_components;
    if g == 0 {
        return Err(Error::InvalidArgument(
            "mixture needs at least one component".into(),
        ));
    }
    let mut params = init;
    let mut post = vec![0.0; data.n * g];
    let mut objective = Vec::new();
    let mut reseeds = Vec::new();
    let mut reseeded = vec![false; g];
    let mut converged = false;
    for iter in 0..=max_iter {
        let obj = e_step(&params, data, &mut post) + log_prior(&params, prior);
        if !obj.is_finite() {
            return Err(Error::Degenerate(format!("MAP objective became {obj}")));
        }
        if let Some(&prev) = objective.last() {
            let after_reseed = reseeds.last() == Some(&(objective.len() - 1));
            debug_assert!(
                after_reseed || obj >= prev - ASCENT_TOLERANCE * f64::abs(prev).max(1.0),
                "MAP objective decreased: {prev} -> {obj}"
            );
            objective.push(obj);
            if !after_reseed && obj - prev < tol * f64::abs(prev).max(1.0) {
                converged = true;
                break;
            }
        } else {
            objective.push(obj);
        }
        if iter == max_iter {
            break;
        }
        let empty = m_step(&mut params, data, prior, &post);
        if !empty.is_empty() {
            let block = data.n_attrs * data.n_steps;
            for &e in &empty {
                if reseeded[e] {
                    log::warn!("mixture component {e} emptied again; keeping it");
                    continue;
                }
                reseeded[e] = true;
                let n = rng.random_range(0..data.n);
                seeded_curve(
                    data,
                    prior,
                    n,
                    &mut params.means[e * block..(e + 1) * block],
                );
                for v in 0..data.n_attrs {
                    params.variances[e * data.n_attrs + v] = prior.attr_variance[v];
                }
                params.weights[e] = 1.0 / data.n as f64;
            }
            let s: f64 = params.weights.iter().sum();
            params.weights.iter_mut().for_each(|w| *w /= s);
            reseeds.push(objective.len() - 1);
        }
    }
    Ok(GmmFit {
        params,
        posteriors: post,
        objective,
        reseeds,
        converged,
    })
}

/// Closed-form MAP solution for a single component on complete data, used
/// to check the EM updates.
#[cfg(test)]
pub(crate) fn single_component_map(data: &MaskedData, prior: &GmmPrior) -> (Vec<f64>, Vec<f64>) {
    let (va, tl) = (data.n_attrs, data.n_steps);
    let lambda = prior.hyper.strength;
    let mut means = vec![0.0; va * tl];
    let mut vars = vec![0.0; va];
    for v in 0..va {
        let mut dev = 0.0;
        for t in 0..tl {
            let xs: Vec<f64> = (0..data.n).filter_map(|n| data.cell(n, v, t)).collect();
            let m = prior.mean_curves[v * tl + t];
            let mu = (xs.iter().sum::<f64>() + lambda * m) / (xs.len() as f64 + lambda);
            means[v * tl + t] = mu;
            dev += (mu - m).powi(2);
        }
        let (mut sq, mut cnt) = (0.0, 0.0);
        for n in 0..data.n {
            for t in 0..tl {
                if let Some(x) = data.cell(n, v, t) {
                    sq += (x - means[v * tl + t]).powi(2);
                    cnt += 1.0;
                }
            }
        }
        vars[v] = ((sq + lambda * dev + 2.0 * prior.b0[v]) / (cnt + 2.0 * prior.hyper.a0))
            .max(prior.variance_floor[v]);
    }
    (means, vars)
}
