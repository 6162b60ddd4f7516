//! Imputation for the kernels that need complete data.
//!
//! Three fill rules (train mean, last observation carried forward, zero),
//! each optionally "bias corrected" by stacking the observation mask as V
//! extra attributes (1 = observed, 0 = imputed).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, MtSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImputationMethod {
    Mean,
    Locf,
    Zero,
}

impl ImputationMethod {
    pub fn name(self) -> &'static str {
        match self {
            ImputationMethod::Mean => "mean",
            ImputationMethod::Locf => "locf",
            ImputationMethod::Zero => "zero",
        }
    }
}

/// A fill rule plus the bias-correction flag, e.g. `locf+bc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Imputation {
    pub method: ImputationMethod,
    pub bias_correct: bool,
}

impl Imputation {
    pub const ALL: [Imputation; 6] = [
        Imputation::new(ImputationMethod::Mean, false),
        Imputation::new(ImputationMethod::Mean, true),
        Imputation::new(ImputationMethod::Locf, false),
        Imputation::new(ImputationMethod::Locf, true),
        Imputation::new(ImputationMethod::Zero, false),
        Imputation::new(ImputationMethod::Zero, true),
    ];

    pub const fn new(method: ImputationMethod, bias_correct: bool) -> Self {
        Self {
            method,
            bias_correct,
        }
    }
}

impl fmt::Display for Imputation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method.name())?;
        if self.bias_correct {
            f.write_str("+bc")?;
        }
        Ok(())
    }
}

impl From<Imputation> for String {
    fn from(i: Imputation) -> String {
        i.to_string()
    }
}

impl TryFrom<String> for Imputation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Imputation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (base, bias_correct) = match lower.strip_suffix("+bc") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let method = match base {
            "mean" => ImputationMethod::Mean,
            "locf" => ImputationMethod::Locf,
            "zero" | "0" => ImputationMethod::Zero,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown imputation `{s}` (expected mean, locf or zero, optionally with +bc)"
                )))
            }
        };
        Ok(Self::new(method, bias_correct))
    }
}

/// A fitted imputer. Means come from training-set observed cells only.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSpec {
    pub imputation: Imputation,
    n_attrs: usize,
    /// Per-attribute mean over all observed training cells; empty for `Zero`.
    pub train_attribute_means: Vec<f64>,
}

impl ImputationSpec {
    pub fn method(&self) -> ImputationMethod {
        self.imputation.method
    }

    pub fn bias_correct(&self) -> bool {
        self.imputation.bias_correct
    }
}

pub fn fit_imputer(train: &Cohort, imputation: Imputation) -> Result<ImputationSpec> {
    let means = match imputation.method {
        ImputationMethod::Zero => Vec::new(),
        ImputationMethod::Mean | ImputationMethod::Locf => attribute_means(train)?,
    };
    Ok(ImputationSpec {
        imputation,
        n_attrs: train.n_attrs(),
        train_attribute_means: means,
    })
}

fn attribute_means(train: &Cohort) -> Result<Vec<f64>> {
    (0..train.n_attrs())
        .map(|v| {
            let (mut sum, mut count) = (0.0, 0usize);
            for s in train.samples() {
                for t in 0..s.n_steps() {
                    if let Some(x) = s.get(v, t) {
                        sum += x;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                Err(Error::UnobservedAttribute(
                    train.attribute_names()[v].clone(),
                ))
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect()
}

/// Completes a cohort. Observed cells are copied verbatim.
///
/// Already-imputed input is returned unchanged for the plain variants and
/// rejected for the bias-corrected ones, which would otherwise stack the
/// indicator block twice.
pub fn impute(spec: &ImputationSpec, cohort: &Cohort) -> Result<Cohort> {
    if cohort.n_attrs() != spec.n_attrs {
        return Err(Error::DimensionMismatch(format!(
            "imputer fitted on {} attributes, cohort has {}",
            spec.n_attrs,
            cohort.n_attrs()
        )));
    }
    if cohort.is_imputed() {
        if spec.bias_correct() {
            return Err(Error::InvalidArgument(
                "bias-corrected imputation needs a raw incomplete cohort".into(),
            ));
        }
        return Ok(cohort.clone());
    }
    let samples = cohort
        .samples()
        .iter()
        .map(|s| impute_sample(spec, s))
        .collect::<Result<Vec<_>>>()?;
    let mut names = cohort.attribute_names().to_vec();
    if spec.bias_correct() {
        names.extend(
            cohort
                .attribute_names()
                .iter()
                .map(|n| format!("{n}:observed")),
        );
    }
    Ok(Cohort::new(names, cohort.window_length(), samples)?.mark_imputed())
}

fn impute_sample(spec: &ImputationSpec, s: &MtSample) -> Result<MtSample> {
    let (v_count, t_count) = (s.n_attrs(), s.n_steps());
    let out_attrs = if spec.bias_correct() {
        2 * v_count
    } else {
        v_count
    };
    let mut values = Vec::with_capacity(out_attrs * t_count);
    for v in 0..v_count {
        let mut last: Option<f64> = None;
        for t in 0..t_count {
            let x = match s.get(v, t) {
                Some(x) => {
                    last = Some(x);
                    x
                }
                None => match spec.method() {
                    ImputationMethod::Zero => 0.0,
                    ImputationMethod::Mean => spec.train_attribute_means[v],
                    ImputationMethod::Locf => last.unwrap_or(spec.train_attribute_means[v]),
                },
            };
            values.push(x);
        }
    }
    if spec.bias_correct() {
        values.extend(s.mask().iter().map(|&m| if m { 1.0 } else { 0.0 }));
    }
    MtSample::complete(s.id(), s.label(), out_attrs, t_count, values)
}
