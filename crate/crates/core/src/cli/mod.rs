//! The `distortcox` command line: `fit`, `simulate`, `km` and `bandwidth`.
//!
//! Each workflow reads an optional config file, lets flags override it,
//! writes CSV tables (plus a text report and the fully resolved config) into
//! the output directory and returns the report text.

pub mod config;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibration;
use crate::cox::{self, FitOptions};
use crate::data::{self, fmt17, ColumnMapping, Dataset, DataError, Table};
use crate::kernel::{self, Bandwidth, BandwidthGrid, CvCurve};
use crate::km::{km_estimate, KMCurve};
use crate::numeric::{normal_quantile, normal_sf};
use crate::simulation::{self, BandwidthPolicy, DistortionSpec, Method, SimulationConfig, SimulationSummary};
use crate::{Error, Result};

use config::{parse_bandwidth_choice, BandwidthChoice, ConfigDoc, FitMethod, SimulateSpec, FIT_KEYS};

const DEFAULT_OUTPUT: &str = "distortcox-out";

#[derive(Debug, Parser)]
#[command(name = "distortcox", version, about = "Cox regression with a multiplicatively distorted covariate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// config file (flat `key = value` with `[section]` headers)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// input CSV
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// worker threads for `simulate` (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// also write an SVG plot where one applies
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the Cox model to a CSV file
    Fit(ColumnArgs),
    /// Run a Monte Carlo study described by a config file
    Simulate(SimulateArgs),
    /// Kaplan-Meier curves, optionally stratified
    Km(ColumnArgs),
    /// Cross-validation curve for the confounder bandwidth
    Bandwidth(ColumnArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ColumnArgs {
    #[arg(long)]
    pub time: Option<String>,
    #[arg(long)]
    pub event: Option<String>,
    /// distorted covariate
    #[arg(long)]
    pub covariate: Option<String>,
    /// confounder driving the distortion
    #[arg(long)]
    pub confounder: Option<String>,
    /// adjustment covariates, comma separated
    #[arg(long, value_delimiter = ',')]
    pub adjust: Option<Vec<String>>,
    /// undistorted covariate, used by `--method oracle`
    #[arg(long)]
    pub truth: Option<String>,
    /// proposed | naive | oracle
    #[arg(long)]
    pub method: Option<String>,
    /// `auto` or a positive number
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    /// stratification column for `km`
    #[arg(long)]
    pub stratum: Option<String>,
    /// bandwidth grid for `bandwidth`, comma separated
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub replications: Option<usize>,
}

/// What a workflow produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: String,
    pub files: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Fit(cols) => cmd_fit(&cli.common, cols),
        Command::Simulate(args) => cmd_simulate(&cli.common, args),
        Command::Km(cols) => cmd_km(&cli.common, cols),
        Command::Bandwidth(cols) => cmd_bandwidth(&cli.common, cols),
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let context = context.into();
    move |source| Error::Io { context, source }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(format!("writing {}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

/// Settings shared by `fit`, `km` and `bandwidth`, after merging config and flags.
struct Resolved {
    doc: Option<ConfigDoc>,
    cols: ColumnArgs,
    input: Option<PathBuf>,
    output: PathBuf,
    id: Option<String>,
}

impl Resolved {
    fn new(common: &CommonArgs, flags: &ColumnArgs) -> Result<Self> {
        let doc = common.config.as_deref().map(ConfigDoc::load).transpose()?;
        let mut cols = ColumnArgs::default();
        let mut input = None;
        let mut output = None;
        let mut id = None;
        if let Some(doc) = &doc {
            doc.check_keys(FIT_KEYS)?;
            let c = Some("columns");
            let a = Some("analysis");
            cols.time = doc.string(c, "time")?;
            cols.event = doc.string(c, "event")?;
            cols.covariate = doc.string(c, "covariate")?;
            cols.confounder = doc.string(c, "confounder")?;
            cols.adjust = doc.strings(c, "adjust")?;
            cols.truth = doc.string(c, "truth")?;
            cols.stratum = doc.string(c, "stratum")?;
            cols.method = doc.string(a, "method")?;
            if let Some(m) = &cols.method {
                if FitMethod::parse(m).is_none() {
                    return Err(Error::config(doc.line_of(a, "method"), format!("[analysis] method: unknown method '{m}'")));
                }
            }
            cols.bandwidth = match doc.bandwidth_choice("analysis")? {
                Some(BandwidthChoice::Auto) => Some("auto".into()),
                Some(BandwidthChoice::Value(h)) => Some(format!("{:?}", h.value())),
                None => None,
            };
            cols.ci_level = doc.float(a, "ci_level")?;
            cols.grid = doc.floats(a, "grid")?;
            input = doc.string(Some("input"), "path")?.map(|p| doc.resolve_path(&p));
            output = doc.string(Some("output"), "dir")?.map(|p| doc.resolve_path(&p));
            id = doc.string(None, "id")?;
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if flags.$field.is_some() { cols.$field = flags.$field.clone(); } )* };
        }
        take!(time, event, covariate, confounder, adjust, truth, method, bandwidth, ci_level, stratum, grid);
        if common.input.is_some() {
            input = common.input.clone();
        }
        if common.output.is_some() {
            output = common.output.clone();
        }
        Ok(Self { doc, cols, input, output: output.unwrap_or_else(|| DEFAULT_OUTPUT.into()), id })
    }

    fn required(&self, value: &Option<String>, section: &str, key: &str) -> Result<String> {
        value.clone().ok_or_else(|| {
            let line = self.doc.as_ref().and_then(|d| d.line_of(Some(section), key));
            Error::config(line, format!("no {key} column given (use --{key} or [{section}] {key})"))
        })
    }

    fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| Error::config(None, "no input file given (use --input or [input] path)"))
    }

    fn time(&self) -> Result<String> {
        Ok(self.cols.time.clone().unwrap_or_else(|| "time".into()))
    }

    fn event(&self) -> Result<String> {
        Ok(self.cols.event.clone().unwrap_or_else(|| "event".into()))
    }

    fn mapping(&self) -> Result<ColumnMapping> {
        Ok(ColumnMapping {
            time: self.time()?,
            event: self.event()?,
            covariate: self.required(&self.cols.covariate, "columns", "covariate")?,
            confounder: self.required(&self.cols.confounder, "columns", "confounder")?,
            adjust: self.cols.adjust.clone().unwrap_or_default(),
            truth: self.cols.truth.clone(),
        })
    }

    fn method(&self) -> Result<FitMethod> {
        match &self.cols.method {
            None => Ok(FitMethod::Proposed),
            Some(m) => FitMethod::parse(m).ok_or_else(|| Error::config(None, format!("unknown method '{m}'"))),
        }
    }

    fn bandwidth(&self) -> Result<BandwidthChoice> {
        match &self.cols.bandwidth {
            None => Ok(BandwidthChoice::Auto),
            Some(s) => parse_bandwidth_choice(s)
                .ok_or_else(|| Error::config(None, format!("bandwidth must be \"auto\" or a positive number, got '{s}'"))),
        }
    }

    fn ci_level(&self) -> Result<f64> {
        let level = self.cols.ci_level.unwrap_or(0.95);
        if level > 0.0 && level < 1.0 {
            Ok(level)
        } else {
            Err(Error::config(None, format!("ci_level must lie in (0, 1), got {level}")))
        }
    }

    fn grid(&self, u: &[f64]) -> Result<BandwidthGrid> {
        Ok(match &self.cols.grid {
            Some(values) => BandwidthGrid::new(values)?,
            None => BandwidthGrid::around_silverman(u)?,
        })
    }
}

/// One row of the coefficient table.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Result of fitting one dataset with one method.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub method: FitMethod,
    pub rows: Vec<CoefficientRow>,
    /// bandwidth used for calibration (`proposed` only)
    pub bandwidth: Option<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub n: usize,
    pub n_events: usize,
    pub ci_level: f64,
}

/// Bandwidth selection (if asked), calibration, fit and variance.
pub fn fit_dataset(
    dataset: &Dataset,
    method: FitMethod,
    bandwidth: BandwidthChoice,
    grid: Option<&BandwidthGrid>,
    ci_level: f64,
) -> Result<FitReport> {
    let n = dataset.n();
    let x_tilde = dataset.x_tilde();
    let (x, h, x_hat) = match method {
        FitMethod::Naive => (x_tilde.clone(), None, None),
        FitMethod::Oracle => (dataset.x_true().ok_or(DataError::NoTruth)?, None, None),
        FitMethod::Proposed => {
            let u = dataset.u();
            let h = match bandwidth {
                BandwidthChoice::Value(h) => h,
                BandwidthChoice::Auto => match grid {
                    Some(g) => kernel::select_bandwidth(&u, g)?,
                    None => kernel::select_bandwidth(&u, &BandwidthGrid::around_silverman(&u)?)?,
                },
            };
            let cal = calibration::calibrate(&u, &x_tilde, h)?;
            (cal.x_hat.clone(), Some(h), Some(cal.x_hat))
        }
    };
    let cox_data = dataset.cox_data(&x)?;
    let fit = cox::fit(&cox_data, &FitOptions::default())?;
    let var = match &x_hat {
        Some(x_hat) => cox::sandwich_variance(&fit, &x_tilde, x_hat, n)?,
        None => cox::model_variance(&fit, n)?,
    };
    let z_crit = normal_quantile(0.5 + 0.5 * ci_level);
    let rows = dataset
        .parameter_names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let estimate = fit.theta_hat[k];
            let se = var.std_errors[k];
            let z = estimate / se;
            CoefficientRow {
                name,
                estimate,
                se,
                z,
                p_value: 2.0 * normal_sf(z.abs()),
                ci_lower: estimate - z_crit * se,
                ci_upper: estimate + z_crit * se,
            }
        })
        .collect();
    Ok(FitReport {
        method,
        rows,
        bandwidth: h.map(Bandwidth::value),
        loglik: fit.loglik,
        iterations: fit.iterations,
        n,
        n_events: cox_data.n_events(),
        ci_level,
    })
}

pub fn coefficients_csv(report: &FitReport) -> String {
    let mut out = String::from("name,estimate,se,z,p_value,ci_lower,ci_upper\n");
    for r in &report.rows {
        let cells = [r.estimate, r.se, r.z, r.p_value, r.ci_lower, r.ci_upper].map(fmt17);
        let _ = writeln!(out, "{},{}", r.name, cells.join(","));
    }
    out
}

fn fit_text(report: &FitReport, input: &Path, rejected: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "distortcox fit: method {}", report.method.label());
    let _ = writeln!(out, "input: {}", input.display());
    let _ = writeln!(out, "subjects: {} ({} events, {} rows dropped)", report.n, report.n_events, rejected);
    if let Some(h) = report.bandwidth {
        let _ = writeln!(out, "bandwidth: {h:.4}");
    }
    let _ = writeln!(out, "log partial likelihood: {:.4} after {} Newton steps", report.loglik, report.iterations);
    let _ = writeln!(out);
    let pct = format!("{:.0}% CI", 100.0 * report.ci_level);
    let _ = writeln!(out, "{:<12} {:>9} {:>9} {:>8} {:>8}  {}", "", "EST", "SE", "z", "P-value", pct);
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>9.4} {:>9.4} {:>8.3} {:>8.4}  ({:.3}, {:.3})",
            r.name, r.estimate, r.se, r.z, r.p_value, r.ci_lower, r.ci_upper
        );
    }
    out
}

fn toml_str(s: &str) -> String {
    format!("{s:?}")
}

fn toml_list<T: std::fmt::Debug>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Config file that replays this run with the bandwidth pinned.
fn fit_resolved(r: &Resolved, input: &Path, mapping: &ColumnMapping, report: &FitReport) -> String {
    let mut out = String::new();
    if let Some(id) = &r.id {
        let _ = writeln!(out, "id = {}", toml_str(id));
    }
    let _ = writeln!(out, "[input]\npath = {}", toml_str(&input.display().to_string()));
    let _ = writeln!(out, "[columns]");
    let _ = writeln!(out, "time = {}", toml_str(&mapping.time));
    let _ = writeln!(out, "event = {}", toml_str(&mapping.event));
    let _ = writeln!(out, "covariate = {}", toml_str(&mapping.covariate));
    let _ = writeln!(out, "confounder = {}", toml_str(&mapping.confounder));
    let _ = writeln!(out, "adjust = {}", toml_list(&mapping.adjust));
    if let Some(t) = &mapping.truth {
        let _ = writeln!(out, "truth = {}", toml_str(t));
    }
    let _ = writeln!(out, "[analysis]");
    let _ = writeln!(out, "method = {}", toml_str(report.method.label()));
    match report.bandwidth {
        Some(h) => {
            let _ = writeln!(out, "bandwidth = {h:?}");
        }
        None => {
            let _ = writeln!(out, "bandwidth = \"auto\"");
        }
    }
    let _ = writeln!(out, "ci_level = {:?}", report.ci_level);
    let _ = writeln!(out, "[output]\ndir = {}", toml_str(&r.output.display().to_string()));
    out
}

pub fn cmd_fit(common: &CommonArgs, flags: &ColumnArgs) -> Result<Outcome> {
    let r = Resolved::new(common, flags)?;
    let input = r.input()?.to_path_buf();
    let mapping = r.mapping()?;
    let method = r.method()?;
    if method == FitMethod::Oracle && mapping.truth.is_none() {
        return Err(DataError::NoTruth.into());
    }
    let ingested = data::ingest_csv(&input, &mapping)?;
    let grid = match (&r.cols.grid, method) {
        (Some(g), FitMethod::Proposed) => Some(BandwidthGrid::new(g)?),
        _ => None,
    };
    let report = fit_dataset(&ingested.dataset, method, r.bandwidth()?, grid.as_ref(), r.ci_level()?)?;

    prepare_dir(&r.output)?;
    let coef_path = r.output.join("coefficients.csv");
    let report_path = r.output.join("report.txt");
    let resolved_path = r.output.join("resolved.toml");
    let mut text = fit_text(&report, &input, ingested.rejected.len());
    for rej in ingested.rejected.iter().take(20) {
        let _ = writeln!(text, "dropped row {}: column '{}' value '{}'", rej.row, rej.column, rej.value);
    }
    let resolved = fit_resolved(&r, &input, &mapping, &report);
    let _ = write!(text, "\nresolved configuration:\n{resolved}");
    write_file(&coef_path, &coefficients_csv(&report))?;
    write_file(&report_path, &text)?;
    write_file(&resolved_path, &resolved)?;
    Ok(Outcome { report: text, files: vec![coef_path, report_path, resolved_path] })
}

pub const SUMMARY_HEADER: &str =
    "config_id,n,cr_target,cr_achieved,distortion,method,parameter,bias,sd,se,mse,cp,replications,failures";

pub fn summary_csv(id: &str, config: &SimulationConfig, summary: &SimulationSummary) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for row in &summary.rows {
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            config.n,
            fmt17(config.target_cr),
            fmt17(summary.achieved_cr),
            config.distortion.label(),
            row.method.label(),
            row.parameter,
            fmt17(row.bias),
            row.sd.map(fmt17).unwrap_or_default(),
            fmt17(row.se),
            fmt17(row.mse),
            fmt17(row.cp),
            summary.replications,
            summary.replication_failures,
        );
    }
    out
}

fn summary_text(id: &str, config: &SimulationConfig, summary: &SimulationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "distortcox simulate: {id}");
    let _ = writeln!(out, "n = {}, {}, target CR {:.3}", config.n, config.distortion, config.target_cr);
    let _ = writeln!(
        out,
        "tau = {:.6}, achieved CR {:.3}, {} replications ({} failed), mean bandwidth {:.4}",
        summary.tau_used, summary.achieved_cr, summary.replications, summary.replication_failures, summary.mean_bandwidth
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<10} {:<8} {:>7} {:>6} {:>6} {:>6} {:>6}", "method", "param", "Bias", "SD", "SE", "MSE", "CP");
    for row in &summary.rows {
        let sd = row.sd.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<10} {:<8} {:>7.3} {:>6} {:>6.3} {:>6.3} {:>6.3}",
            row.method.label(),
            row.parameter,
            row.bias,
            sd,
            row.se,
            row.mse,
            row.cp
        );
    }
    out
}

/// Config file that replays a study exactly, with `τ` pinned.
pub fn simulate_resolved(id: &str, config: &SimulationConfig, tau: f64, output: &Path) -> String {
    let mut out = format!("id = {}\n[design]\n", toml_str(id));
    let _ = writeln!(out, "n = {}", config.n);
    let _ = writeln!(out, "beta0 = {}", toml_list(&config.beta0));
    let _ = writeln!(out, "gamma0 = {:?}", config.gamma0);
    let _ = writeln!(out, "z_corr = {:?}", config.z_corr);
    let _ = writeln!(out, "x_mean = {:?}", config.x_mean);
    let _ = writeln!(out, "x_sd = {:?}", config.x_sd);
    let _ = writeln!(out, "u_lo = {:?}", config.u_lo);
    let _ = writeln!(out, "u_hi = {:?}", config.u_hi);
    let _ = writeln!(out, "[distortion]\nkind = {}", toml_str(config.distortion.label()));
    match &config.distortion {
        DistortionSpec::Identity => {}
        DistortionSpec::LinearShift { shift, scale } => {
            let _ = writeln!(out, "shift = {shift:?}\nscale = {scale:?}");
        }
        DistortionSpec::Quadratic { coef, shift } => {
            let _ = writeln!(out, "coef = {coef:?}\nshift = {shift:?}");
        }
        DistortionSpec::Table { knots } => {
            let u: Vec<f64> = knots.iter().map(|k| k.0).collect();
            let phi: Vec<f64> = knots.iter().map(|k| k.1).collect();
            let _ = writeln!(out, "knots_u = {}\nknots_phi = {}", toml_list(&u), toml_list(&phi));
        }
    }
    let _ = writeln!(out, "[study]");
    let _ = writeln!(out, "target_cr = {:?}", config.target_cr);
    let _ = writeln!(out, "tau = {tau:?}");
    let _ = writeln!(out, "replications = {}", config.replications);
    let _ = writeln!(out, "seed = {}", config.seed);
    let _ = writeln!(out, "ci_level = {:?}", config.ci_level);
    match config.bandwidth_policy {
        BandwidthPolicy::CvPerReplication => {
            let _ = writeln!(out, "bandwidth = \"auto\"");
        }
        BandwidthPolicy::Fixed(h) => {
            let _ = writeln!(out, "bandwidth = {:?}", h.value());
        }
    }
    let _ = writeln!(out, "[output]\ndir = {}", toml_str(&output.display().to_string()));
    out
}

/// Runs `f` on a dedicated pool when a thread count is given.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config(None, "--threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config(None, format!("cannot start {t} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_simulate(common: &CommonArgs, args: &SimulateArgs) -> Result<Outcome> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::config(None, "simulate needs --config <file>"))?;
    let SimulateSpec { id, mut config, tau, output } = ConfigDoc::load(path)?.simulation_config()?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    config.validate()?;
    let output = common.output.clone().or(output).unwrap_or_else(|| DEFAULT_OUTPUT.into());

    let summary = with_threads(common.threads, || -> Result<SimulationSummary> {
        let tau = match tau {
            Some(t) => t,
            None => simulation::calibrate_tau(&config)?.tau,
        };
        Ok(simulation::run_study_with_tau(&config, tau)?)
    })??;

    prepare_dir(&output)?;
    let csv_path = output.join("summary.csv");
    let report_path = output.join("report.txt");
    let resolved_path = output.join("resolved.toml");
    let resolved = simulate_resolved(&id, &config, summary.tau_used, &output);
    let mut text = summary_text(&id, &config, &summary);
    let _ = write!(text, "\nresolved configuration:\n{resolved}");
    write_file(&csv_path, &summary_csv(&id, &config, &summary))?;
    write_file(&report_path, &text)?;
    write_file(&resolved_path, &resolved)?;
    Ok(Outcome { report: text, files: vec![csv_path, report_path, resolved_path] })
}

pub const KM_HEADER: &str = "stratum,time,survival,at_risk,n_events";

/// Step-function rows, starting with `(0, 1)` for each stratum.
pub fn km_csv(curves: &[(String, KMCurve)]) -> String {
    let mut out = format!("{KM_HEADER}\n");
    for (label, c) in curves {
        let _ = writeln!(out, "{label},0,1,{},0", c.n);
        for k in 0..c.times.len() {
            let _ = writeln!(out, "{label},{},{},{},{}", fmt17(c.times[k]), fmt17(c.survival[k]), c.at_risk[k], c.n_events[k]);
        }
    }
    out
}

pub fn cmd_km(common: &CommonArgs, flags: &ColumnArgs) -> Result<Outcome> {
    let r = Resolved::new(common, flags)?;
    let input = r.input()?.to_path_buf();
    let (time, event) = (r.time()?, r.event()?);
    let file = fs::File::open(&input).map_err(|source| DataError::Io { path: input.display().to_string(), source })?;
    let (rows, rejected) = data::read_time_event(file, &time, &event, r.cols.stratum.as_deref())?;

    let mut labels: Vec<String> = rows.iter().map(|row| row.stratum.clone().unwrap_or_else(|| "all".into())).collect();
    labels.sort();
    labels.dedup();
    let mut curves = Vec::with_capacity(labels.len());
    for label in labels {
        let keep: Vec<_> = rows
            .iter()
            .filter(|row| row.stratum.as_deref().unwrap_or("all") == label)
            .collect();
        let t: Vec<f64> = keep.iter().map(|row| row.time).collect();
        let e: Vec<bool> = keep.iter().map(|row| row.event).collect();
        curves.push((label, km_estimate(&t, &e)?));
    }

    prepare_dir(&r.output)?;
    let csv_path = r.output.join("km.csv");
    write_file(&csv_path, &km_csv(&curves))?;
    let mut files = vec![csv_path];
    let mut text = format!("distortcox km: {} ({} rows used, {} dropped)\n", input.display(), rows.len(), rejected.len());
    for (label, c) in &curves {
        let last = c.survival.last().copied().unwrap_or(1.0);
        let _ = writeln!(text, "{label}: n = {}, events = {}, final survival {:.4}", c.n, c.n_events.iter().sum::<usize>(), last);
    }
    if common.svg {
        let t_max = rows.iter().map(|row| row.time).fold(0.0, f64::max);
        let series: Vec<svg::StepSeries<'_>> = curves
            .iter()
            .map(|(label, c)| svg::StepSeries {
                label,
                points: c.times.iter().copied().zip(c.survival.iter().copied()).collect(),
            })
            .collect();
        let svg_path = r.output.join("km.svg");
        write_file(&svg_path, &svg::step_plot(&series, t_max, &time))?;
        files.push(svg_path);
    }
    Ok(Outcome { report: text, files })
}

pub const BANDWIDTH_HEADER: &str = "h,cv_score,selected";

pub fn bandwidth_csv(curve: &CvCurve) -> String {
    let mut out = format!("{BANDWIDTH_HEADER}\n");
    for (k, (h, s)) in curve.bandwidths.iter().zip(&curve.scores).enumerate() {
        let _ = writeln!(out, "{},{},{}", fmt17(h.value()), fmt17(*s), u8::from(k == curve.selected_index));
    }
    out
}

pub fn cmd_bandwidth(common: &CommonArgs, flags: &ColumnArgs) -> Result<Outcome> {
    let r = Resolved::new(common, flags)?;
    let input = r.input()?.to_path_buf();
    let confounder = r.required(&r.cols.confounder, "columns", "confounder")?;
    let table = Table::open(&input)?;
    let col = table.column(&confounder)?;
    let mut u = Vec::with_capacity(table.rows.len());
    for (k, rec) in table.rows.iter().enumerate() {
        let raw = rec.get(col).unwrap_or("");
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
            continue;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => u.push(v),
            Ok(_) => {}
            Err(_) => {
                return Err(DataError::Parse { row: k + 1, column: confounder, value: raw.to_string() }.into());
            }
        }
    }
    if u.is_empty() {
        return Err(DataError::EmptyAfterFiltering { dropped: table.rows.len() }.into());
    }
    let curve = kernel::cv_curve(&u, &r.grid(&u)?)?;

    prepare_dir(&r.output)?;
    let csv_path = r.output.join("bandwidth.csv");
    write_file(&csv_path, &bandwidth_csv(&curve))?;
    let text = format!(
        "distortcox bandwidth: {} ({} values of '{}')\ngrid: {} bandwidths from {:.4} to {:.4}\nselected h = {} (CV = {})\n",
        input.display(),
        u.len(),
        confounder,
        curve.bandwidths.len(),
        curve.bandwidths[0].value(),
        curve.bandwidths[curve.bandwidths.len() - 1].value(),
        fmt17(curve.selected.value()),
        fmt17(curve.scores[curve.selected_index]),
    );
    Ok(Outcome { report: text, files: vec![csv_path] })
}

impl From<Method> for FitMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Proposed => FitMethod::Proposed,
            Method::Naive => FitMethod::Naive,
            Method::Oracle => FitMethod::Oracle,
        }
    }
}
