//! Metrics and the repeated-split evaluation driver.
//!
//! Each run draws a fresh 80/20 split; every window truncates both sides;
//! every method fits its imputation and kernel on the train side only, embeds
//! with kPCA, clusters with k-means and assigns test points with kNN.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    knn_assign, manual_features, run_head, write_embedding, HeadConfig, HeadOutcome,
};
use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::impute::{fit_imputer, impute, Imputation, ImputationSpec};
use crate::kernels::{
    fit_gak_params, gram_matrix, linear_gram_vectors, BaselineKernel, GakParams, KernelMatrix,
};
use crate::lps::{lps_gram, lps_train, LpsConfig, LpsForest};
use crate::seed;
use crate::tck::{tck_test, tck_train, TckConfig, TckModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predictions for {} labels",
                pred.len(),
                truth.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "labels must be 0 or 1, got ({p}, {t})"
                    )))
                }
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Zero when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

fn confusion_with_positive(pred: &[u8], truth: &[u8]) -> Result<Confusion> {
    let c = Confusion::from_labels(pred, truth)?;
    if c.tp + c.fn_ == 0 {
        return Err(Error::InvalidArgument(
            "truth has no positive sample".into(),
        ));
    }
    Ok(c)
}

pub fn precision_recall(pred: &[u8], truth: &[u8]) -> Result<(f64, f64)> {
    let c = confusion_with_positive(pred, truth)?;
    if c.tp + c.fp == 0 {
        log::warn!("no predicted positives; precision defined as 0");
    }
    Ok((c.precision(), c.recall()))
}

/// Harmonic mean `2PR/(P+R)`, or `PR/(P+R)` when `literal` is set.
pub fn f1_from(precision: f64, recall: f64, literal: bool) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        return 0.0;
    }
    let factor = if literal { 1.0 } else { 2.0 };
    factor * precision * recall / sum
}

pub fn f1(pred: &[u8], truth: &[u8]) -> Result<f64> {
    let (p, r) = precision_recall(pred, truth)?;
    Ok(f1_from(p, r, false))
}

/// The variant without the factor 2.
pub fn paper_literal_f1(pred: &[u8], truth: &[u8]) -> Result<f64> {
    let (p, r) = precision_recall(pred, truth)?;
    Ok(f1_from(p, r, true))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn scores(pred: &[u8], truth: &[u8], literal: bool) -> Result<Scores> {
    let c = confusion_with_positive(pred, truth)?;
    let (precision, recall) = (c.precision(), c.recall());
    Ok(Scores {
        precision,
        recall,
        f1: f1_from(precision, recall, literal),
    })
}

/// Scores under whichever cluster-to-class mapping gives the higher F1
/// (the identity on ties).
pub fn clustering_scores(assignment: &[u8], truth: &[u8], literal: bool) -> Result<Scores> {
    let direct = scores(assignment, truth, literal)?;
    let flipped: Vec<u8> = assignment.iter().map(|&a| 1 - a.min(1)).collect();
    let flipped = scores(&flipped, truth, literal)?;
    Ok(if flipped.f1 > direct.f1 {
        flipped
    } else {
        direct
    })
}

pub fn clustering_f1(assignment: &[u8], truth: &[u8]) -> Result<f64> {
    Ok(clustering_scores(assignment, truth, false)?.f1)
}

/// Kernel family of a method. `Manual` is the linear kernel over per-attribute
/// mean, max and min features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Gak,
    Tck,
    Lps,
    Manual,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Gak => "gak",
            KernelKind::Tck => "tck",
            KernelKind::Lps => "lps",
            KernelKind::Manual => "manual",
        }
    }

    /// Whether the kernel handles missing cells itself.
    pub fn handles_missing(self) -> bool {
        matches!(self, KernelKind::Tck | KernelKind::Lps)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "gak" => Ok(KernelKind::Gak),
            "tck" => Ok(KernelKind::Tck),
            "lps" => Ok(KernelKind::Lps),
            "manual" => Ok(KernelKind::Manual),
            _ => Err(Error::InvalidArgument(format!(
                "unknown kernel `{s}` (expected linear, gak, tck, lps or manual)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kernel: KernelKind,
    #[serde(default)]
    pub impute: Option<Imputation>,
}

impl MethodSpec {
    pub fn new(kernel: KernelKind, impute: Option<Imputation>) -> Self {
        Self { kernel, impute }
    }

    pub fn imputation_label(&self) -> String {
        self.impute.map_or("none".to_string(), |i| i.to_string())
    }

    /// `kernel` or `kernel/imputation`, used for seeding and display.
    pub fn label(&self) -> String {
        match self.impute {
            Some(i) => format!("{}/{i}", self.kernel),
            None => self.kernel.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.impute.is_none() && !self.kernel.handles_missing() {
            return Err(Error::IncompleteData {
                kernel: self.kernel.name(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodSpec>,
    pub windows: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// Preserve the label ratio in each split.
    pub stratified: bool,
    pub head: HeadConfig,
    /// Adds `{method}:supervised` rows: kNN with the true labels on the same embedding.
    pub supervised_baseline: bool,
    /// Adds rows for the linear kernel on mean/max/min features.
    pub manual_baseline: bool,
    pub manual_imputation: Imputation,
    pub paper_literal_f1: bool,
    /// Offset of the linear kernel.
    pub linear_offset: f64,
    /// Keep 2-D embedding dumps of the first run.
    pub dump_embeddings: bool,
    pub tck: TckConfig,
    pub lps: LpsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut methods = vec![
            MethodSpec::new(KernelKind::Tck, None),
            MethodSpec::new(KernelKind::Lps, None),
        ];
        for kernel in [KernelKind::Gak, KernelKind::Linear] {
            methods.extend(
                Imputation::ALL
                    .iter()
                    .map(|&i| MethodSpec::new(kernel, Some(i))),
            );
        }
        Self {
            methods,
            windows: (7..=20).collect(),
            runs: 10,
            seed: 1,
            train_fraction: 0.8,
            stratified: false,
            head: HeadConfig::default(),
            supervised_baseline: false,
            manual_baseline: false,
            manual_imputation: "mean".parse().expect("valid imputation"),
            paper_literal_f1: false,
            linear_offset: 0.0,
            dump_embeddings: false,
            tck: TckConfig::default(),
            lps: LpsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Every problem with the config, given the cohort window if known.
    pub fn problems(&self, cohort_window: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        if self.methods.is_empty() && !self.manual_baseline {
            out.push("no methods configured".to_string());
        }
        for m in &self.methods {
            if let Err(e) = m.validate() {
                out.push(format!("method {m}: {e}"));
            }
        }
        if self.runs == 0 {
            out.push("runs must be at least 1".to_string());
        }
        if self.windows.is_empty() {
            out.push("no windows configured".to_string());
        }
        for &w in &self.windows {
            if w == 0 || cohort_window.is_some_and(|t| w > t) {
                out.push(format!(
                    "window {w} outside [1, {}]",
                    cohort_window.map_or("T".to_string(), |t| t.to_string())
                ));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            out.push(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        if self.head.n_clusters != 2 {
            out.push("n_clusters must be 2 for binary F1".to_string());
        }
        if self.head.dim == 0 || self.head.k_nn == 0 || self.head.restarts == 0 {
            out.push("head dim, k_nn and restarts must be positive".to_string());
        }
        out
    }

    pub fn validate(&self, cohort_window: Option<usize>) -> Result<()> {
        let problems = self.problems(cohort_window);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Methods in grid order, the manual baseline last.
    pub fn grid_methods(&self) -> Vec<MethodSpec> {
        let mut methods = self.methods.clone();
        if self.manual_baseline {
            methods.push(MethodSpec::new(
                KernelKind::Manual,
                Some(self.manual_imputation),
            ));
        }
        methods
    }

    pub fn n_cells(&self) -> usize {
        self.runs * self.windows.len() * self.grid_methods().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub imputation: String,
    pub window: usize,
    pub run: usize,
    pub split: Split,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub imputation: String,
    pub window: usize,
    pub split: Split,
    pub n_runs: usize,
    pub mean_f1: f64,
    /// Sample standard deviation over sqrt(runs); absent for a single run.
    pub se_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub imputation: String,
    pub window: usize,
    pub run: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub method: String,
    pub imputation: String,
    pub window: usize,
    pub split: Split,
    /// `id,label,cluster,e1,e2` CSV text.
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<CellFailure>,
    #[serde(skip)]
    pub embeddings: Vec<EmbeddingDump>,
}

fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut order = Vec::new();
    let mut groups: HashMap<(String, String, usize, Split), Vec<f64>> = HashMap::new();
    for r in rows {
        let key = (r.method.clone(), r.imputation.clone(), r.window, r.split);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r.f1);
    }
    order
        .into_iter()
        .map(|key| {
            let values = &groups[&key];
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let se = (n > 1).then(|| {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                var.sqrt() / (n as f64).sqrt()
            });
            let (method, imputation, window, split) = key;
            Aggregate {
                method,
                imputation,
                window,
                split,
                n_runs: n,
                mean_f1: mean,
                se_f1: se,
            }
        })
        .collect()
}

impl ExperimentReport {
    pub fn from_rows(rows: Vec<MetricRow>, failures: Vec<CellFailure>) -> Self {
        Self {
            aggregates: aggregate(&rows),
            rows,
            failures,
            embeddings: Vec::new(),
        }
    }

    pub fn aggregate_for(
        &self,
        method: &str,
        imputation: &str,
        window: usize,
        split: Split,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.method == method
                && a.imputation == imputation
                && a.window == window
                && a.split == split
        })
    }

    pub fn write_rows_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "method,imputation,window,run,split,precision,recall,f1"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method, r.imputation, r.window, r.run, r.split, r.precision, r.recall, r.f1
            )?;
        }
        Ok(())
    }

    pub fn write_aggregates_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "method,imputation,window,split,mean_f1,se_f1")?;
        for a in &self.aggregates {
            let se = a.se_f1.map_or("NA".to_string(), |s| s.to_string());
            writeln!(
                out,
                "{},{},{},{},{},{se}",
                a.method, a.imputation, a.window, a.split, a.mean_f1
            )?;
        }
        Ok(())
    }

    pub fn write_failures_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "imputation", "window", "run", "error"])?;
        for f in &self.failures {
            w.write_record([
                f.method.as_str(),
                f.imputation.as_str(),
                &f.window.to_string(),
                &f.run.to_string(),
                f.error.as_str(),
            ])?;
        }
        w.flush()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Parses a rows CSV as written by [`ExperimentReport::write_rows_csv`].
pub fn read_rows_csv<R: Read>(reader: R, source: &Path) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", source.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>()
        != [
            "method",
            "imputation",
            "window",
            "run",
            "split",
            "precision",
            "recall",
            "f1",
        ]
    {
        return Err(Error::Parse {
            path: source.to_path_buf(),
            line: 1,
            msg: "expected header method,imputation,window,run,split,precision,recall,f1".into(),
        });
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Everything fitted on the train side of one cell.
#[derive(Debug, Clone)]
pub struct CellState {
    pub imputation: Option<ImputationSpec>,
    pub gak: Option<GakParams>,
    pub tck: Option<TckModel>,
    pub lps: Option<LpsForest>,
    pub head: HeadOutcome,
}

fn method_kernel(
    train: &Cohort,
    test: &Cohort,
    method: &MethodSpec,
    cfg: &ExperimentConfig,
    seed: u64,
    state: &mut (
        Option<ImputationSpec>,
        Option<GakParams>,
        Option<TckModel>,
        Option<LpsForest>,
    ),
) -> Result<KernelMatrix> {
    method.validate()?;
    let (train, test) = match method.impute {
        Some(imp) => {
            let spec = fit_imputer(train, imp)?;
            let pair = (impute(&spec, train)?, impute(&spec, test)?);
            state.0 = Some(spec);
            pair
        }
        None => (train.clone(), test.clone()),
    };
    match method.kernel {
        KernelKind::Linear => gram_matrix(
            &BaselineKernel::Linear {
                c: cfg.linear_offset,
            },
            &train,
            Some(&test),
        ),
        KernelKind::Gak => {
            let params = fit_gak_params(&train)?;
            state.1 = Some(params);
            gram_matrix(&BaselineKernel::Gak(params), &train, Some(&test))
        }
        KernelKind::Tck => {
            let (mut km, model) = tck_train(&train, &cfg.tck, seed)?;
            km.cross = Some(tck_test(&model, &test)?);
            state.2 = Some(model);
            Ok(km)
        }
        KernelKind::Lps => {
            let forest = lps_train(&train, &cfg.lps, seed)?;
            let km = lps_gram(&forest, &train, Some(&test))?;
            state.3 = Some(forest);
            Ok(km)
        }
        KernelKind::Manual => {
            let (a, b) = (manual_features(&train)?, manual_features(&test)?);
            let mut km = linear_gram_vectors(&a, Some(&b));
            km.method_tag = "manual".into();
            Ok(km)
        }
    }
}

fn owned_ids(c: &Cohort) -> Vec<String> {
    c.ids().into_iter().map(str::to_string).collect()
}

/// Fits one method on `train` and embeds/assigns `test`.
pub fn fit_method(
    train: &Cohort,
    test: &Cohort,
    method: &MethodSpec,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<CellState> {
    let mut state = (None, None, None, None);
    let km = method_kernel(train, test, method, cfg, seed, &mut state)?;
    let head = run_head(
        &km,
        &cfg.head,
        Some(owned_ids(train)),
        Some(owned_ids(test)),
        seed,
    )?;
    Ok(CellState {
        imputation: state.0,
        gak: state.1,
        tck: state.2,
        lps: state.3,
        head,
    })
}

fn truth(c: &Cohort) -> Result<Vec<u8>> {
    c.labels()
        .ok_or_else(|| Error::InvalidArgument("evaluation needs a fully labelled cohort".into()))
}

/// Leave-one-out kNN on the training embedding with the true labels.
fn loo_knn(points: &nalgebra::DMatrix<f64>, labels: &[u8], k: usize) -> Result<Vec<u8>> {
    let n = points.nrows();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let rest = points.select_rows(&keep);
            let rest_labels: Vec<u8> = keep.iter().map(|&j| labels[j]).collect();
            let query = points.rows(i, 1).into_owned();
            Ok(knn_assign(&rest, &rest_labels, &query, k.min(n - 1))?[0])
        })
        .collect()
}

struct CellOutcome {
    rows: Vec<MetricRow>,
    failure: Option<CellFailure>,
    embeddings: Vec<EmbeddingDump>,
}

fn dump(emb: &crate::cluster::Embedding, cohort: &Cohort, clusters: &[u8]) -> String {
    let labels: Vec<Option<u8>> = cohort.samples().iter().map(|s| s.label()).collect();
    let mut out = Vec::new();
    write_embedding(&mut out, emb, &labels, clusters, 2).expect("writing to memory");
    String::from_utf8(out).expect("CSV is UTF-8")
}

fn run_cell(
    train: &Cohort,
    test: &Cohort,
    method: &MethodSpec,
    window: usize,
    run: usize,
    cfg: &ExperimentConfig,
) -> Result<(Vec<MetricRow>, Vec<EmbeddingDump>)> {
    let seed = seed::derive(
        cfg.seed,
        &[run as u64, window as u64, seed::label_hash(&method.label())],
    );
    let state = fit_method(train, test, method, cfg, seed)?;
    let (y_train, y_test) = (truth(train)?, truth(test)?);
    let head = &state.head;
    let test_clusters = head.test_clusters.as_ref().expect("cross kernel present");
    let literal = cfg.paper_literal_f1;
    let imputation = method.imputation_label();
    let row = |name: String, split: Split, s: Scores| MetricRow {
        method: name,
        imputation: imputation.clone(),
        window,
        run,
        split,
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
    };
    let name = method.kernel.to_string();
    let mut rows = vec![
        row(
            name.clone(),
            Split::Train,
            clustering_scores(&head.train_clusters.labels, &y_train, literal)?,
        ),
        row(
            name.clone(),
            Split::Test,
            clustering_scores(test_clusters, &y_test, literal)?,
        ),
    ];
    if cfg.supervised_baseline {
        let train_emb = &head.train_embedding.points;
        let test_emb = &head
            .test_embedding
            .as_ref()
            .expect("cross kernel present")
            .points;
        let loo = loo_knn(train_emb, &y_train, cfg.head.k_nn)?;
        let sup = knn_assign(
            train_emb,
            &y_train,
            test_emb,
            cfg.head.k_nn.min(y_train.len()),
        )?;
        let name = format!("{name}:supervised");
        rows.push(row(
            name.clone(),
            Split::Train,
            scores(&loo, &y_train, literal)?,
        ));
        rows.push(row(name, Split::Test, scores(&sup, &y_test, literal)?));
    }
    let mut dumps = Vec::new();
    if cfg.dump_embeddings && run == 0 {
        let entry = |split, csv| EmbeddingDump {
            method: name.clone(),
            imputation: imputation.clone(),
            window,
            split,
            csv,
        };
        dumps.push(entry(
            Split::Train,
            dump(&head.train_embedding, train, &head.train_clusters.labels),
        ));
        let test_emb = head.test_embedding.as_ref().expect("cross kernel present");
        dumps.push(entry(Split::Test, dump(test_emb, test, test_clusters)));
    }
    Ok((rows, dumps))
}

/// Runs the (run × window × method) grid. Cell failures become
/// [`CellFailure`] entries; only config or cohort problems abort.
pub fn run_experiment(cohort: &Cohort, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate(Some(cohort.window_length()))?;
    truth(cohort)?;
    let methods = cfg.grid_methods();
    let splits = (0..cfg.runs)
        .map(|run| {
            let s = seed::derive(cfg.seed, &[run as u64]);
            if cfg.stratified {
                cohort.stratified_split(cfg.train_fraction, s)
            } else {
                cohort.train_test_split(cfg.train_fraction, s)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let windowed: Vec<Vec<std::result::Result<(Cohort, Cohort), String>>> = splits
        .par_iter()
        .map(|(train, test)| {
            cfg.windows
                .iter()
                .map(|&w| {
                    let pair = train
                        .truncate_window(w)
                        .and_then(|a| Ok((a, test.truncate_window(w)?)));
                    pair.map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let (n_windows, n_methods) = (cfg.windows.len(), methods.len());
    let cells: Vec<(usize, usize, usize)> = (0..cfg.runs)
        .flat_map(|r| (0..n_windows).flat_map(move |w| (0..n_methods).map(move |m| (r, w, m))))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(run, wi, mi)| {
            let (window, method) = (cfg.windows[wi], &methods[mi]);
            let result = match &windowed[run][wi] {
                Ok((train, test)) => {
                    run_cell(train, test, method, window, run, cfg).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.clone()),
            };
            match result {
                Ok((rows, embeddings)) => {
                    log::info!("run {run} window {window} {method}: done");
                    CellOutcome {
                        rows,
                        failure: None,
                        embeddings,
                    }
                }
                Err(e) => {
                    log::warn!("run {run} window {window} {method}: {e}");
                    CellOutcome {
                        rows: Vec::new(),
                        failure: Some(CellFailure {
                            method: method.kernel.to_string(),
                            imputation: method.imputation_label(),
                            window,
                            run,
                            error: e,
                        }),
                        embeddings: Vec::new(),
                    }
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut embeddings = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        failures.extend(o.failure);
        embeddings.extend(o.embeddings);
    }
    let mut report = ExperimentReport::from_rows(rows, failures);
    report.embeddings = embeddings;
    Ok(report)
}
