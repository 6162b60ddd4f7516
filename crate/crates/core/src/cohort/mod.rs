//! Incomplete MTS cohorts: the sample/cohort data model, long-CSV ingestion,
//! the synthetic generator, missingness injection, splitting and window
//! truncation.

mod io;
mod missing;
mod synth;

pub use io::{load_cohort, read_cohort, write_cohort, write_cohort_to, LoadOptions, LoadedCohort};
pub use missing::{apply_missingness, Mechanism, MissingnessSpec};
pub use synth::{generate_synthetic_cohort, SynthConfig, CLINICAL_ATTRIBUTES};

use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Samples with fewer observed cells than this are removed from a cohort.
pub const MIN_OBSERVED: usize = 2;

/// One patient: a V×T grid of values with a matching observation mask.
///
/// Values under a zero mask are kept (so that missingness injection can be
/// inspected) but every accessor that feeds a computation goes through
/// [`MtSample::get`], which hides them.
#[derive(Debug, Clone, PartialEq)]
pub struct MtSample {
    id: String,
    label: Option<u8>,
    n_attrs: usize,
    n_steps: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MtSample {
    pub fn new(
        id: impl Into<String>,
        label: Option<u8>,
        n_attrs: usize,
        n_steps: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let id = id.into();
        if values.len() != n_attrs * n_steps || mask.len() != n_attrs * n_steps {
            return Err(Error::DimensionMismatch(format!(
                "sample {id}: expected {n_attrs}x{n_steps} values and mask, got {} and {}",
                values.len(),
                mask.len()
            )));
        }
        if let Some(l) = label {
            if l > 1 {
                return Err(Error::InvalidArgument(format!(
                    "sample {id}: label must be 0 or 1, got {l}"
                )));
            }
        }
        if values
            .iter()
            .zip(&mask)
            .any(|(v, &observed)| observed && !v.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "sample {id}: observed values must be finite"
            )));
        }
        Ok(Self {
            id,
            label,
            n_attrs,
            n_steps,
            values,
            mask,
        })
    }

    /// A fully observed sample.
    pub fn complete(
        id: impl Into<String>,
        label: Option<u8>,
        n_attrs: usize,
        n_steps: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(id, label, n_attrs, n_steps, values, mask)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn n_attrs(&self) -> usize {
        self.n_attrs
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    fn idx(&self, attr: usize, step: usize) -> usize {
        debug_assert!(attr < self.n_attrs && step < self.n_steps);
        attr * self.n_steps + step
    }

    /// The value at (attr, step), or `None` when the cell is unobserved.
    #[inline]
    pub fn get(&self, attr: usize, step: usize) -> Option<f64> {
        let i = self.idx(attr, step);
        self.mask[i].then(|| self.values[i])
    }

    #[inline]
    pub fn is_observed(&self, attr: usize, step: usize) -> bool {
        self.mask[self.idx(attr, step)]
    }

    /// Stored value regardless of the mask. Only meaningful for inspecting
    /// synthetic ground truth; never use it inside a model.
    pub fn raw_value(&self, attr: usize, step: usize) -> f64 {
        self.values[self.idx(attr, step)]
    }

    /// Row-major values. Unobserved cells hold arbitrary numbers.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Row-major values of a complete sample.
    pub fn complete_values(&self, kernel: &'static str) -> Result<&[f64]> {
        if self.is_complete() {
            Ok(&self.values)
        } else {
            Err(Error::IncompleteData { kernel })
        }
    }

    pub(crate) fn with_mask(&self, mask: Vec<bool>) -> Self {
        debug_assert_eq!(mask.len(), self.mask.len());
        Self {
            mask,
            ..self.clone()
        }
    }

    /// Keeps the first `days` columns.
    pub(crate) fn truncated(&self, days: usize) -> Self {
        let mut values = Vec::with_capacity(self.n_attrs * days);
        let mut mask = Vec::with_capacity(self.n_attrs * days);
        for a in 0..self.n_attrs {
            let start = a * self.n_steps;
            values.extend_from_slice(&self.values[start..start + days]);
            mask.extend_from_slice(&self.mask[start..start + days]);
        }
        Self {
            id: self.id.clone(),
            label: self.label,
            n_attrs: self.n_attrs,
            n_steps: days,
            values,
            mask,
        }
    }
}

/// A set of samples sharing attribute names and window length.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    attribute_names: Vec<String>,
    window_length: usize,
    samples: Vec<MtSample>,
    imputed: bool,
}

impl Cohort {
    pub fn new(
        attribute_names: Vec<String>,
        window_length: usize,
        samples: Vec<MtSample>,
    ) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::InvalidArgument(
                "window length must be positive".into(),
            ));
        }
        let n_attrs = attribute_names.len();
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.n_attrs != n_attrs || s.n_steps != window_length {
                return Err(Error::DimensionMismatch(format!(
                    "sample {} is {}x{}, cohort is {}x{}",
                    s.id, s.n_attrs, s.n_steps, n_attrs, window_length
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sample id {}",
                    s.id
                )));
            }
        }
        Ok(Self {
            attribute_names,
            window_length,
            samples,
            imputed: false,
        })
    }

    pub(crate) fn mark_imputed(mut self) -> Self {
        self.imputed = true;
        self
    }

    /// True for the output of [`crate::impute::impute`].
    pub fn is_imputed(&self) -> bool {
        self.imputed
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn n_attrs(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn samples(&self) -> &[MtSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id()).collect()
    }

    /// Labels of all samples, or `None` if any sample is unlabelled.
    pub fn labels(&self) -> Option<Vec<u8>> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.samples.iter().all(MtSample::is_complete)
    }

    /// Fraction of unobserved cells.
    pub fn missing_fraction(&self) -> f64 {
        let total = self.len() * self.n_attrs() * self.window_length;
        if total == 0 {
            return 0.0;
        }
        let observed: usize = self.samples.iter().map(MtSample::n_observed).sum();
        1.0 - observed as f64 / total as f64
    }

    pub(crate) fn with_samples(&self, samples: Vec<MtSample>) -> Self {
        Self {
            samples,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            attribute_names: self.attribute_names.clone(),
            window_length: self.window_length,
            samples: Vec::new(),
            imputed: self.imputed,
        }
    }

    /// Builds a cohort from a subset of sample indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        self.with_samples(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    /// Unstratified seeded split; the train side gets `round(fraction * N)` samples.
    pub fn train_test_split(&self, train_fraction: f64, seed: u64) -> Result<(Cohort, Cohort)> {
        self.split(train_fraction, seed, false)
    }

    /// Like [`Cohort::train_test_split`] but preserves the label ratio on both
    /// sides. Unlabelled samples form their own stratum.
    pub fn stratified_split(&self, train_fraction: f64, seed: u64) -> Result<(Cohort, Cohort)> {
        self.split(train_fraction, seed, true)
    }

    fn split(&self, train_fraction: f64, seed: u64, stratify: bool) -> Result<(Cohort, Cohort)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let mut rng = seed::rng(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        if stratify {
            for stratum in [Some(1u8), Some(0), None] {
                let mut idx: Vec<usize> = (0..self.len())
                    .filter(|&i| self.samples[i].label == stratum)
                    .collect();
                idx.shuffle(&mut rng);
                let n_train = (train_fraction * idx.len() as f64).round() as usize;
                test.extend_from_slice(&idx[n_train..]);
                idx.truncate(n_train);
                train.extend(idx);
            }
        } else {
            let mut idx: Vec<usize> = (0..self.len()).collect();
            idx.shuffle(&mut rng);
            let n_train = (train_fraction * idx.len() as f64).round() as usize;
            test.extend_from_slice(&idx[n_train..]);
            idx.truncate(n_train);
            train = idx;
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "split of {} samples at fraction {train_fraction} leaves a side empty",
                self.len()
            )));
        }
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Keeps the first `days` steps of every sample and drops samples left
    /// with fewer than [`MIN_OBSERVED`] observed cells.
    pub fn truncate_window(&self, days: usize) -> Result<Cohort> {
        if days == 0 || days > self.window_length {
            return Err(Error::InvalidArgument(format!(
                "window {days} outside [1, {}]",
                self.window_length
            )));
        }
        if days == self.window_length {
            return Ok(self.clone());
        }
        let samples: Vec<MtSample> = self
            .samples
            .iter()
            .map(|s| s.truncated(days))
            .filter(|s| s.n_observed() >= MIN_OBSERVED)
            .collect();
        let dropped = self.len() - samples.len();
        if dropped > 0 {
            log::debug!("truncation to {days} days dropped {dropped} samples");
        }
        Ok(Cohort {
            window_length: days,
            ..self.with_samples(samples)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Cohort {
        let samples = (0..n)
            .map(|i| {
                MtSample::complete(
                    format!("s{i}"),
                    Some((i % 2) as u8),
                    2,
                    4,
                    (0..8).map(|k| (i * 8 + k) as f64).collect(),
                )
                .unwrap()
            })
            .collect();
        Cohort::new(vec!["a".into(), "b".into()], 4, samples).unwrap()
    }

    #[test]
    fn rejects_mismatched_dimensions_and_duplicate_ids() {
        assert!(MtSample::new("x", None, 2, 2, vec![0.0; 4], vec![true; 3]).is_err());
        let s = MtSample::complete("x", None, 1, 2, vec![1.0, 2.0]).unwrap();
        assert!(Cohort::new(vec!["a".into()], 2, vec![s.clone(), s.clone()]).is_err());
        assert!(Cohort::new(vec!["a".into()], 3, vec![s]).is_err());
    }

    #[test]
    fn masked_cells_are_hidden() {
        let s = MtSample::new(
            "x",
            None,
            1,
            3,
            vec![1.0, 99.0, 3.0],
            vec![true, false, true],
        )
        .unwrap();
        assert_eq!(s.get(0, 0), Some(1.0));
        assert_eq!(s.get(0, 1), None);
        assert_eq!(s.n_observed(), 2);
        assert!(s.complete_values("linear").is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let c = toy(10);
        let (train, test) = c.train_test_split(0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut ids: Vec<&str> = train.ids().into_iter().chain(test.ids()).collect();
        ids.sort();
        let mut all = c.ids();
        all.sort();
        assert_eq!(ids, all);
        let (train2, test2) = c.train_test_split(0.8, 3).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_rejects_empty_side() {
        let c = toy(2);
        assert!(c.train_test_split(0.9, 1).is_err());
        assert!(c.train_test_split(1.0, 1).is_err());
        assert!(c.train_test_split(0.0, 1).is_err());
    }

    #[test]
    fn stratified_split_keeps_ratio() {
        let c = toy(20);
        let (train, test) = c.stratified_split(0.8, 5).unwrap();
        let pos = |c: &Cohort| c.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert_eq!((pos(&train), pos(&test)), (8, 2));
    }

    #[test]
    fn truncation_identity_and_width() {
        let c = toy(3);
        assert_eq!(c.truncate_window(4).unwrap(), c);
        let t = c.truncate_window(2).unwrap();
        assert_eq!(t.window_length(), 2);
        assert!(t.samples().iter().all(|s| s.mask().len() == 4));
        assert_eq!(t.samples()[0].raw_values(), &[0.0, 1.0, 4.0, 5.0]);
        assert!(c.truncate_window(0).is_err());
        assert!(c.truncate_window(5).is_err());
    }

    #[test]
    fn truncation_drops_late_observed_samples() {
        let mut mask = vec![false; 20];
        for m in &mut mask[14..20] {
            *m = true;
        }
        let late = MtSample::new("late", Some(1), 1, 20, vec![1.0; 20], mask).unwrap();
        let early = MtSample::complete("early", Some(0), 1, 20, vec![1.0; 20]).unwrap();
        let c = Cohort::new(vec!["crp".into()], 20, vec![late, early]).unwrap();
        let t = c.truncate_window(7).unwrap();
        assert_eq!(t.ids(), vec!["early"]);
    }

    #[test]
    fn nested_truncation_composes() {
        let c = toy(4);
        let a = c.truncate_window(3).unwrap().truncate_window(2).unwrap();
        assert_eq!(a, c.truncate_window(2).unwrap());
    }
}
