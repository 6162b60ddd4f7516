//! The `mtsk` command line: synthetic cohorts, kernel matrices, experiment
//! runs and report aggregation.
//!
//! Exit codes: 0 on success, 1 when some experiment cells failed, 2 on usage
//! or input errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use mtsk_core::cohort::{
    apply_missingness, generate_synthetic_cohort, load_cohort, write_cohort, LoadOptions,
    Mechanism, MissingnessSpec, SynthConfig,
};
use mtsk_core::eval::{
    read_rows_csv, run_experiment, ExperimentConfig, ExperimentReport, KernelKind,
};
use mtsk_core::impute::{fit_imputer, impute, Imputation};
use mtsk_core::kernels::{
    fit_gak_params, gram_matrix, psd_report, read_matrix, write_matrix, BaselineKernel,
};
use mtsk_core::lps::{lps_gram, lps_train, LpsConfig};
use mtsk_core::tck::{tck_test, tck_train, TckConfig};
use mtsk_core::Cohort;

#[derive(Debug, Parser)]
#[command(
    name = "mtsk",
    version,
    about = "Kernels and clustering for incomplete multivariate time series"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MTSK_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and write it as long CSV.
    Synth(SynthArgs),
    /// Compute a Gram matrix (and optional train×test cross kernel).
    Kernel(KernelArgs),
    /// Run an experiment described by a TOML config.
    Run(RunArgs),
    /// Aggregate a per-run report CSV into means and standard errors.
    Report(ReportArgs),
    /// Check a matrix file for symmetry and positive semi-definiteness.
    CheckPsd(CheckPsdArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub cases: usize,
    #[arg(long)]
    pub controls: usize,
    #[arg(long, default_value_t = 11)]
    pub attrs: usize,
    #[arg(long, default_value_t = 20)]
    pub days: usize,
    #[arg(long, default_value_t = 1.5)]
    pub effect: f64,
    /// Missingness mechanism: mcar, mar or mnar.
    #[arg(long, default_value = "mcar")]
    pub missing: Mechanism,
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub method: KernelKind,
    /// `none`, or mean/locf/zero with an optional `+bc` suffix.
    #[arg(long, default_value = "none")]
    pub impute: String,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Outputs go to `<prefix>_gram.csv`, `<prefix>_cross.csv` and `<prefix>_model.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Truncate both cohorts to the first N days.
    #[arg(long)]
    pub window: Option<usize>,
    /// TCK initializations per component count.
    #[arg(long)]
    pub tck_inits: Option<usize>,
    #[arg(long)]
    pub lps_trees: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Print the planned grid and exit without writing anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Per-run report CSV written by `mtsk run`.
    pub rows: PathBuf,
    /// Aggregate CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckPsdArgs {
    pub matrix: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mtsk_core::Error),
    #[error("{0} experiment cells failed")]
    Partial(usize),
    #[error("matrix failed the PSD check")]
    NotPsd,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Partial(_) | CliError::NotPsd => 1,
            CliError::Usage(_) | CliError::Core(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(mtsk_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Parses arguments, runs the command on a pool of the requested size and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Kernel(a) => cmd_kernel(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::CheckPsd(a) => cmd_check_psd(&a, out),
    })
}

fn say(out: &mut (dyn Write + Send), msg: std::fmt::Arguments<'_>) -> CliResult<()> {
    out.write_fmt(msg)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

pub fn cmd_synth(a: &SynthArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    if !(0.0..1.0).contains(&a.rate) {
        return Err(CliError::Usage(format!(
            "--rate must lie in [0, 1), got {}",
            a.rate
        )));
    }
    if a.cases == 0 || a.controls == 0 || a.attrs == 0 || a.days == 0 {
        return Err(CliError::Usage(
            "--cases, --controls, --attrs and --days must be positive".into(),
        ));
    }
    let cohort = generate_synthetic_cohort(&SynthConfig::new(
        a.cases, a.controls, a.attrs, a.days, a.effect, a.seed,
    ))?;
    let cohort = apply_missingness(
        &cohort,
        &MissingnessSpec {
            mechanism: a.missing,
            rate: a.rate,
            seed: mtsk_core::seed::derive(a.seed, &[2]),
        },
    )?;
    write_cohort(&cohort, &a.out)?;
    say(
        out,
        format_args!(
            "wrote {} samples ({}x{}) to {}, missing fraction {:.4}",
            cohort.len(),
            cohort.n_attrs(),
            cohort.window_length(),
            a.out.display(),
            cohort.missing_fraction()
        ),
    )
}

fn parse_impute(s: &str) -> CliResult<Option<Imputation>> {
    if s.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|e: mtsk_core::Error| CliError::Usage(e.to_string()))
    }
}

fn load_pair(a: &KernelArgs) -> CliResult<(Cohort, Option<Cohort>)> {
    let train = load_cohort(&a.train, &LoadOptions::default())?.cohort;
    let test = match &a.test {
        Some(p) => {
            let opts = LoadOptions {
                attributes: Some(train.attribute_names().to_vec()),
                window_length: Some(train.window_length()),
            };
            Some(load_cohort(p, &opts)?.cohort)
        }
        None => None,
    };
    match a.window {
        Some(w) => Ok((
            train.truncate_window(w)?,
            test.map(|t| t.truncate_window(w)).transpose()?,
        )),
        None => Ok((train, test)),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| CliError::Core(mtsk_core::Error::Format(e.to_string())))
}

pub fn cmd_kernel(a: &KernelArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let imputation = parse_impute(&a.impute)?;
    if imputation.is_none() && !a.method.handles_missing() {
        return Err(CliError::Usage(format!(
            "--impute none is not allowed for {}: {}",
            a.method,
            mtsk_core::Error::IncompleteData {
                kernel: a.method.name()
            }
        )));
    }
    if a.method == KernelKind::Manual {
        return Err(CliError::Usage(
            "the manual-feature baseline is only available in `mtsk run`".into(),
        ));
    }
    let (train, test) = load_pair(a)?;
    let (train, test) = match imputation {
        Some(imp) => {
            let spec = fit_imputer(&train, imp)?;
            (
                impute(&spec, &train)?,
                test.map(|t| impute(&spec, &t)).transpose()?,
            )
        }
        None => (train, test),
    };
    let (km, model): (_, Vec<u8>) = match a.method {
        KernelKind::Linear => (
            gram_matrix(&BaselineKernel::Linear { c: 0.0 }, &train, test.as_ref())?,
            Vec::new(),
        ),
        KernelKind::Gak => {
            let params = fit_gak_params(&train)?;
            (
                gram_matrix(&BaselineKernel::Gak(params), &train, test.as_ref())?,
                to_json(&params)?,
            )
        }
        KernelKind::Tck => {
            let cfg = TckConfig {
                n_init: a.tck_inits.unwrap_or(TckConfig::default().n_init),
                ..Default::default()
            };
            let (mut km, model) = tck_train(&train, &cfg, a.seed)?;
            km.cross = test.as_ref().map(|t| tck_test(&model, t)).transpose()?;
            (km, to_json(&model)?)
        }
        KernelKind::Lps => {
            let cfg = LpsConfig {
                n_trees: a.lps_trees.unwrap_or(LpsConfig::default().n_trees),
                ..Default::default()
            };
            let forest = lps_train(&train, &cfg, a.seed)?;
            (lps_gram(&forest, &train, test.as_ref())?, to_json(&forest)?)
        }
        KernelKind::Manual => unreachable!("rejected above"),
    };
    let tag = match imputation {
        Some(i) => format!("{}/{i}", km.method_tag),
        None => km.method_tag.clone(),
    };
    let gram_path = with_suffix(&a.out_prefix, "_gram.csv");
    write_matrix(&gram_path, &tag, &km.gram)?;
    say(out, format_args!("wrote {}", gram_path.display()))?;
    if let Some(cross) = &km.cross {
        let p = with_suffix(&a.out_prefix, "_cross.csv");
        write_matrix(&p, &tag, cross)?;
        say(out, format_args!("wrote {}", p.display()))?;
    }
    if !model.is_empty() {
        let p = with_suffix(&a.out_prefix, "_model.json");
        write_file(&p, &model)?;
        say(out, format_args!("wrote {}", p.display()))?;
    }
    Ok(())
}

/// Synthetic cohort section of a run config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub cases: usize,
    pub controls: usize,
    pub attrs: usize,
    pub days: usize,
    #[serde(default = "default_effect")]
    pub effect: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mechanism")]
    pub missing: String,
    #[serde(default)]
    pub rate: f64,
    pub missing_seed: Option<u64>,
}

fn default_effect() -> f64 {
    1.5
}

fn default_seed() -> u64 {
    1
}

fn default_mechanism() -> String {
    "mcar".into()
}

/// TOML run config: a cohort source, an output directory and the experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Long-format cohort CSV, relative to the config file.
    pub input: Option<PathBuf>,
    pub synthetic: Option<SynthSection>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut cfg: RunConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.input = cfg.input.map(|p| base.join(p));
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    /// Every problem found before any work starts.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut window = None;
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => {
                out.push("set either `input` or `[synthetic]`, not both".to_string())
            }
            (None, None) => out.push("set `input` or a `[synthetic]` section".to_string()),
            (Some(p), None) if !p.is_file() => {
                out.push(format!("input file {} does not exist", p.display()))
            }
            (None, Some(s)) => {
                window = Some(s.days);
                if let Err(e) = s.missing.parse::<Mechanism>() {
                    out.push(e.to_string());
                }
                if !(0.0..1.0).contains(&s.rate) {
                    out.push(format!("synthetic rate {} outside [0, 1)", s.rate));
                }
                if s.cases == 0 || s.controls == 0 || s.attrs == 0 || s.days == 0 {
                    out.push("synthetic counts must be positive".to_string());
                }
            }
            _ => {}
        }
        if self.output_dir.is_file() {
            out.push(format!(
                "output_dir {} is a file",
                self.output_dir.display()
            ));
        }
        out.extend(self.experiment.problems(window));
        out
    }

    pub fn cohort(&self) -> CliResult<Cohort> {
        if let Some(p) = &self.input {
            let loaded = load_cohort(p, &LoadOptions::default())?;
            if loaded.excluded > 0 {
                log::warn!(
                    "{} patients excluded for having fewer than two observations",
                    loaded.excluded
                );
            }
            return Ok(loaded.cohort);
        }
        let s = self.synthetic.as_ref().expect("validated");
        let cohort = generate_synthetic_cohort(&SynthConfig::new(
            s.cases, s.controls, s.attrs, s.days, s.effect, s.seed,
        ))?;
        let mechanism = s
            .missing
            .parse()
            .map_err(|e: mtsk_core::Error| CliError::Usage(e.to_string()))?;
        Ok(apply_missingness(
            &cohort,
            &MissingnessSpec {
                mechanism,
                rate: s.rate,
                seed: s
                    .missing_seed
                    .unwrap_or_else(|| mtsk_core::seed::derive(s.seed, &[2])),
            },
        )?)
    }
}

pub fn cmd_run(a: &RunArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let cfg = RunConfigFile::load(&a.config)?;
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(CliError::Usage(format!(
            "invalid config {}:\n  {}",
            a.config.display(),
            problems.join("\n  ")
        )));
    }
    let exp = &cfg.experiment;
    if a.dry_run {
        let methods: Vec<String> = exp.grid_methods().iter().map(|m| m.label()).collect();
        say(
            out,
            format_args!("methods ({}): {}", methods.len(), methods.join(", ")),
        )?;
        say(
            out,
            format_args!("windows ({}): {:?}", exp.windows.len(), exp.windows),
        )?;
        say(out, format_args!("runs: {}", exp.runs))?;
        say(out, format_args!("cells: {}", exp.n_cells()))?;
        let per_cell = if exp.supervised_baseline { 4 } else { 2 };
        say(
            out,
            format_args!(
                "metric rows (if all cells succeed): at most {}",
                exp.n_cells() * per_cell
            ),
        )?;
        return Ok(());
    }
    let cohort = cfg.cohort()?;
    exp.validate(Some(cohort.window_length()))?;
    let report = run_experiment(&cohort, exp)?;
    write_report(&report, &cfg.output_dir)?;
    say(
        out,
        format_args!(
            "{} metric rows, {} failed cells, written to {}",
            report.rows.len(),
            report.failures.len(),
            cfg.output_dir.display()
        ),
    )?;
    if !report.failures.is_empty() {
        for f in &report.failures {
            say(
                out,
                format_args!(
                    "  failed: {} {} window {} run {}: {}",
                    f.method, f.imputation, f.window, f.run, f.error
                ),
            )?;
        }
        return Err(CliError::Partial(report.failures.len()));
    }
    Ok(())
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_report(report: &ExperimentReport, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut rows = Vec::new();
    report
        .write_rows_csv(&mut rows)
        .map_err(|e| io_err(dir, e))?;
    write_file(&dir.join("report.csv"), &rows)?;
    let mut agg = Vec::new();
    report
        .write_aggregates_csv(&mut agg)
        .map_err(|e| io_err(dir, e))?;
    write_file(&dir.join("aggregates.csv"), &agg)?;
    write_file(&dir.join("report.json"), report.to_json()?.as_bytes())?;
    if !report.failures.is_empty() {
        let mut f = Vec::new();
        report
            .write_failures_csv(&mut f)
            .map_err(|e| io_err(dir, e))?;
        write_file(&dir.join("failures.csv"), &f)?;
    }
    if !report.embeddings.is_empty() {
        let edir = dir.join("embeddings");
        fs::create_dir_all(&edir).map_err(|e| io_err(&edir, e))?;
        for d in &report.embeddings {
            let name = format!(
                "{}_{}_w{}_{}.csv",
                file_stem(&d.method),
                file_stem(&d.imputation),
                d.window,
                d.split
            );
            write_file(&edir.join(name), d.csv.as_bytes())?;
        }
    }
    Ok(())
}

pub fn cmd_report(a: &ReportArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let file = fs::File::open(&a.rows).map_err(|e| io_err(&a.rows, e))?;
    let rows = read_rows_csv(file, &a.rows)?;
    let report = ExperimentReport::from_rows(rows, Vec::new());
    let mut buf = Vec::new();
    report
        .write_aggregates_csv(&mut buf)
        .map_err(|e| io_err(&a.rows, e))?;
    match &a.out {
        Some(p) => write_file(p, &buf),
        None => out
            .write_all(&buf)
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

pub fn cmd_check_psd(a: &CheckPsdArgs, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let (tag, m) = read_matrix(&a.matrix)?;
    if m.nrows() != m.ncols() {
        return Err(CliError::Usage(format!(
            "{} is {}x{}, not square",
            a.matrix.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    let r = psd_report(&m);
    say(
        out,
        format_args!(
            "{tag}: n={} max_asymmetry={:e} min_eigenvalue={:e} trace={:e} symmetric={} psd={}",
            m.nrows(),
            r.max_asymmetry,
            r.min_eigenvalue,
            r.trace,
            r.symmetric(),
            r.psd()
        ),
    )?;
    if r.passes() {
        Ok(())
    } else {
        Err(CliError::NotPsd)
    }
}
