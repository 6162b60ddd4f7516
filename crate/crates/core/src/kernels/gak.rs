//! Global alignment kernel, computed in the log domain.
//!
//! The kernel sums, over all monotone alignments of the two time axes, the
//! product of local similarities along the alignment. The local similarity is
//! `ω(s, t) · κ / (2 - κ)` with `κ = exp(-‖x_s - y_t‖² / (2σ²))` and the
//! triangular time weight `ω(s, t) = 1 - |s - t| / (triangular + 1)`, so cells
//! with `|s - t| > triangular` carry zero weight. A plain 0/1 band does not
//! keep the Gram positive semi-definite; the triangular weight does.

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, MtSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GakParams {
    pub sigma: f64,
    pub triangular: usize,
}

impl GakParams {
    pub fn new(sigma: f64, triangular: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || triangular == 0 {
            return Err(Error::InvalidArgument(format!(
                "GAK needs sigma > 0 and triangular >= 1, got ({sigma}, {triangular})"
            )));
        }
        Ok(Self { sigma, triangular })
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Bandwidth `2 · median pairwise Frobenius distance · sqrt(median length)`
/// and band `max(1, round(0.2 · median length))`, from the training set.
pub fn fit_gak_params(train: &Cohort) -> Result<GakParams> {
    if train.len() < 2 {
        return Err(Error::InvalidArgument(
            "GAK parameters need at least two training samples".into(),
        ));
    }
    let values = train
        .samples()
        .iter()
        .map(|s| s.complete_values("gak"))
        .collect::<Result<Vec<_>>>()?;
    let mut dists = Vec::with_capacity(values.len() * (values.len() - 1) / 2);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let d2: f64 = values[i]
                .iter()
                .zip(values[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    let med = median(&mut dists);
    if med <= 0.0 {
        return Err(Error::Degenerate(
            "median pairwise distance is zero; GAK bandwidth undefined".into(),
        ));
    }
    // Every sample in a cohort has the same length.
    let length = train.window_length() as f64;
    let triangular = ((0.2 * length).round() as usize).max(1);
    GakParams::new(2.0 * med * length.sqrt(), triangular)
}

/// `ln(exp(a) + exp(b) + exp(c))` without overflow.
#[inline]
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Log GAK between two complete samples.
pub fn log_gak(x: &MtSample, y: &MtSample, params: &GakParams) -> Result<f64> {
    let a = x.complete_values("gak")?;
    let b = y.complete_values("gak")?;
    if x.n_attrs() != y.n_attrs() {
        return Err(Error::DimensionMismatch(format!(
            "GAK on {} and {} attributes",
            x.n_attrs(),
            y.n_attrs()
        )));
    }
    let fx = frames(a, x.n_attrs(), x.n_steps());
    let fy = frames(b, y.n_attrs(), y.n_steps());
    log_gak_frames(&fx, &fy, x.n_attrs(), params)
}

/// Transposes a row-major V×T grid into T frames of V values.
fn frames(values: &[f64], n_attrs: usize, n_steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for v in 0..n_attrs {
        for t in 0..n_steps {
            out[t * n_attrs + v] = values[v * n_steps + t];
        }
    }
    out
}

/// Log GAK on frame-major data (`T` consecutive frames of `dim` values).
pub fn log_gak_frames(x: &[f64], y: &[f64], dim: usize, params: &GakParams) -> Result<f64> {
    let (tx, ty) = (x.len() / dim.max(1), y.len() / dim.max(1));
    if tx == 0 || ty == 0 {
        return Err(Error::InvalidArgument("GAK on an empty series".into()));
    }
    let band = params.triangular;
    if tx.abs_diff(ty) > band {
        return Err(Error::Degenerate(format!(
            "band {band} excludes the end point of a {tx}x{ty} alignment lattice"
        )));
    }
    let inv_two_sigma2 = 1.0 / (2.0 * params.sigma * params.sigma);
    let log_weight: Vec<f64> = (0..=band)
        .map(|d| (1.0 - d as f64 / (band + 1) as f64).ln())
        .collect();
    let width = ty + 1;
    // Row 0 and column 0 are the virtual origin boundary.
    let mut prev = vec![f64::NEG_INFINITY; width];
    let mut cur = vec![f64::NEG_INFINITY; width];
    prev[0] = 0.0;
    for i in 1..=tx {
        cur.fill(f64::NEG_INFINITY);
        let xi = &x[(i - 1) * dim..i * dim];
        let lo = i.saturating_sub(band).max(1);
        let hi = (i + band).min(ty);
        for j in lo..=hi {
            let yj = &y[(j - 1) * dim..j * dim];
            let d2: f64 = xi.iter().zip(yj).map(|(p, q)| (p - q) * (p - q)).sum();
            let g = d2 * inv_two_sigma2;
            let local = -g - (2.0 - (-g).exp()).ln() + log_weight[i.abs_diff(j)];
            cur[j] = local + log_sum_exp3(prev[j], cur[j - 1], prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[ty])
}
