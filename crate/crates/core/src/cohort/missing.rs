//! Missingness injection under MCAR, MAR and MNAR mechanisms.
//!
//! MAR and MNAR use a logistic masking probability `sigmoid(a - slope * s)`:
//! for MAR `s` is the mean z-score of the other attributes at the same step
//! (abnormal co-measurements make a test more likely to be ordered), for MNAR
//! `s` is the cell's own z-score (low values are more likely left unmeasured).
//! The intercept `a` is found by bisection so that the expected masked
//! fraction over the cohort's cells equals the requested rate.

use rand::Rng;

use super::{Cohort, MIN_OBSERVED};
use crate::error::{Error, Result};
use crate::seed;

const LOGISTIC_SLOPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Mechanism::Mcar),
            "mar" => Ok(Mechanism::Mar),
            "mnar" => Ok(Mechanism::Mnar),
            _ => Err(Error::InvalidArgument(format!(
                "unknown missingness mechanism `{s}` (expected mcar, mar or mnar)"
            ))),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "mcar",
            Mechanism::Mar => "mar",
            Mechanism::Mnar => "mnar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    pub rate: f64,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept `a` such that the mean of `sigmoid(a - slope * s)` over `scores` is `rate`.
fn calibrate_intercept(scores: &[f64], rate: f64) -> f64 {
    let expected = |a: f64| {
        scores
            .iter()
            .map(|&s| sigmoid(a - LOGISTIC_SLOPE * s))
            .sum::<f64>()
            / scores.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Masks cells of a fully observed cohort. Stored values are untouched; only
/// masks change. Samples left with fewer than two observed cells are dropped.
pub fn apply_missingness(cohort: &Cohort, spec: &MissingnessSpec) -> Result<Cohort> {
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(Error::InvalidArgument(format!(
            "missingness rate must lie in [0, 1), got {}",
            spec.rate
        )));
    }
    if !cohort.is_complete() {
        return Err(Error::InvalidArgument(
            "missingness can only be applied to a fully observed cohort".into(),
        ));
    }
    if spec.rate == 0.0 || cohort.is_empty() {
        return Ok(cohort.clone());
    }
    let (v_count, t_count) = (cohort.n_attrs(), cohort.window_length());

    // Per-attribute z-score statistics over the whole cohort.
    let stats: Vec<(f64, f64)> = (0..v_count)
        .map(|v| {
            let xs: Vec<f64> = cohort
                .samples()
                .iter()
                .flat_map(|s| (0..t_count).map(move |t| s.raw_value(v, t)))
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .collect();
    let z = |s: &super::MtSample, v: usize, t: usize| (s.raw_value(v, t) - stats[v].0) / stats[v].1;

    // One score per cell, sample-major then attribute then step.
    let scores: Vec<f64> = match spec.mechanism {
        Mechanism::Mcar => Vec::new(),
        Mechanism::Mar => cohort
            .samples()
            .iter()
            .flat_map(|s| {
                (0..v_count).flat_map(move |v| {
                    (0..t_count).map(move |t| {
                        if v_count == 1 {
                            return 0.0;
                        }
                        let others: f64 =
                            (0..v_count).filter(|&u| u != v).map(|u| z(s, u, t)).sum();
                        others / (v_count - 1) as f64
                    })
                })
            })
            .collect(),
        Mechanism::Mnar => cohort
            .samples()
            .iter()
            .flat_map(|s| (0..v_count).flat_map(move |v| (0..t_count).map(move |t| z(s, v, t))))
            .collect(),
    };
    let intercept = match spec.mechanism {
        Mechanism::Mcar => 0.0,
        _ => calibrate_intercept(&scores, spec.rate),
    };

    let mut rng = seed::rng(spec.seed);
    let cells = v_count * t_count;
    let mut samples = Vec::with_capacity(cohort.len());
    for (i, s) in cohort.samples().iter().enumerate() {
        let mask: Vec<bool> = (0..cells)
            .map(|k| {
                let p = match spec.mechanism {
                    Mechanism::Mcar => spec.rate,
                    _ => sigmoid(intercept - LOGISTIC_SLOPE * scores[i * cells + k]),
                };
                rng.random::<f64>() >= p
            })
            .collect();
        let masked = s.with_mask(mask);
        if masked.n_observed() >= MIN_OBSERVED {
            samples.push(masked);
        }
    }
    Ok(cohort.with_samples(samples))
}
