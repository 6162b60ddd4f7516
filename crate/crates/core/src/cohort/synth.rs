//! Synthetic postoperative cohorts.
//!
//! Controls follow per-attribute stationary baselines: a patient-level offset
//! plus AR(1) day-to-day noise, scaled so each attribute has its own mean and
//! marginal standard deviation. Cases are drawn the same way and then receive
//! an additive bump on a subset of attributes: it starts at a random onset day
//! in `[3, T/2]`, ramps up linearly over three days and then stays on a plateau
//! of `effect_size` marginal standard deviations, loosely following a CRP
//! response to an infection.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Cohort, MtSample};
use crate::error::{Error, Result};
use crate::seed;

/// Names used for the first attributes of a synthetic cohort.
pub const CLINICAL_ATTRIBUTES: [&str; 11] = [
    "CRP",
    "WBC",
    "Hemoglobin",
    "Albumin",
    "Sodium",
    "Potassium",
    "Creatinine",
    "Thrombocytes",
    "ALAT",
    "Amylase",
    "Glucose",
];

/// Share of the marginal variance carried by the patient-level offset.
const PATIENT_VARIANCE_SHARE: f64 = 0.3;
/// Lag-one autocorrelation of the daily noise.
const AR_COEFFICIENT: f64 = 0.5;
const RAMP_DAYS: usize = 3;
const FIRST_ONSET_DAY: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_cases: usize,
    pub n_controls: usize,
    pub n_attrs: usize,
    pub n_days: usize,
    pub effect_size: f64,
    pub seed: u64,
    /// Attributes carrying the case signal; defaults to the first `ceil(V/2)`.
    pub affected: Option<Vec<usize>>,
}

impl SynthConfig {
    pub fn new(
        n_cases: usize,
        n_controls: usize,
        n_attrs: usize,
        n_days: usize,
        effect_size: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_cases,
            n_controls,
            n_attrs,
            n_days,
            effect_size,
            seed,
            affected: None,
        }
    }

    pub fn affected_attributes(&self) -> Vec<usize> {
        self.affected
            .clone()
            .unwrap_or_else(|| (0..self.n_attrs.div_ceil(2)).collect())
    }

    /// Per-attribute (mean, marginal standard deviation) of the control baseline.
    pub fn baselines(&self) -> Vec<(f64, f64)> {
        let mut rng = seed::rng_for(self.seed, &[0]);
        (0..self.n_attrs)
            .map(|_| {
                let mean = 10.0 + 90.0 * rng.random::<f64>();
                let sd = mean * (0.1 + 0.2 * rng.random::<f64>());
                (mean, sd)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_cases == 0 || self.n_controls == 0 || self.n_attrs == 0 || self.n_days == 0 {
            return Err(Error::InvalidArgument(
                "synthetic cohort counts must all be positive".into(),
            ));
        }
        if !(self.effect_size >= 0.0 && self.effect_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "effect size must be finite and non-negative, got {}",
                self.effect_size
            )));
        }
        if self
            .affected_attributes()
            .iter()
            .any(|&a| a >= self.n_attrs)
        {
            return Err(Error::InvalidArgument(
                "affected attribute out of range".into(),
            ));
        }
        Ok(())
    }
}

pub fn generate_synthetic_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let (v_count, t_count) = (cfg.n_attrs, cfg.n_days);
    let baselines = cfg.baselines();
    let affected = cfg.affected_attributes();
    let mut rng = seed::rng_for(cfg.seed, &[1]);

    let patient_sd = PATIENT_VARIANCE_SHARE.sqrt();
    let daily_sd = (1.0 - PATIENT_VARIANCE_SHARE).sqrt();
    let innovation_sd = (1.0 - AR_COEFFICIENT * AR_COEFFICIENT).sqrt();
    let last_onset = (t_count / 2).max(FIRST_ONSET_DAY);

    let n = cfg.n_cases + cfg.n_controls;
    let width = n.to_string().len().max(4);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let is_case = i < cfg.n_cases;
        let mut values = vec![0.0; v_count * t_count];
        for (v, &(mean, sd)) in baselines.iter().enumerate() {
            let offset: f64 = rng.sample::<f64, _>(StandardNormal) * patient_sd;
            let mut ar: f64 = rng.sample(StandardNormal);
            for t in 0..t_count {
                if t > 0 {
                    let z: f64 = rng.sample(StandardNormal);
                    ar = AR_COEFFICIENT * ar + innovation_sd * z;
                }
                values[v * t_count + t] = mean + sd * (offset + daily_sd * ar);
            }
        }
        // The onset draw happens for every patient so that cases and controls
        // consume the RNG identically.
        let onset = rng.random_range(FIRST_ONSET_DAY..=last_onset);
        if is_case && cfg.effect_size > 0.0 {
            for &v in &affected {
                let amplitude = cfg.effect_size * baselines[v].1;
                for t in 0..t_count {
                    let day = t + 1;
                    if day >= onset {
                        let ramp = ((day - onset + 1) as f64 / RAMP_DAYS as f64).min(1.0);
                        values[v * t_count + t] += amplitude * ramp;
                    }
                }
            }
        }
        let id = format!("p{:0width$}", i + 1);
        samples.push(MtSample::complete(
            id,
            Some(is_case as u8),
            v_count,
            t_count,
            values,
        )?);
    }

    let names = (0..v_count)
        .map(|v| match CLINICAL_ATTRIBUTES.get(v) {
            Some(name) => name.to_string(),
            None => format!("attr{}", v + 1),
        })
        .collect();
    Cohort::new(names, t_count, samples)
}
