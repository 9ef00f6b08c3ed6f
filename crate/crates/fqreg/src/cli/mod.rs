//! Command-line toolchain: configuration, run orchestration, and report
//! emission.
//!
//! Four subcommands cover the pipeline:
//! * `fqreg fit` — fit the functional quantile model to curves + design
//!   CSVs at one or more quantile levels; writes binary draws, summary /
//!   band / flag / Geweke CSVs, a manifest, and a run log per level.
//! * `fqreg simulate` — generate synthetic two-group replicates, fit the
//!   configured methods, and emit a replicate-averaged metric table.
//! * `fqreg report` — recompute summaries from a stored draws file.
//! * `fqreg basis --export` — write the wavelet design basis for a grid.
//!
//! Configuration is a TOML file; any key can be overridden on the command
//! line with `--set section.key=value`. Every run writes `manifest.json`
//! (deterministic: config hash, seed, per-file SHA-256) and `run.log`
//! (wall-clock timings; the one file excluded from byte-for-byte
//! reproducibility). Reruns with the same config, seed, and thread count —
//! or a different `--threads` value — produce byte-identical outputs.

pub mod io;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::dists::QuantileLevel;
use crate::error::{Error, Result};
use crate::gibbs::bayes_qr::ScalarQrSpec;
use crate::gibbs::{
    run_chain, BasisSpec, FitOutput, GlobalScale, McmcSpec, ModelSpec, PosteriorDraws,
    PriorFamily, PriorSpec, ScaleHyper, SigmaPrior,
};
use crate::inference::{self, simultaneous_band, summarize_draws, InferenceResult};
use crate::simgen::{
    self, aggregate_metrics, generate_dataset, score_replicate, MetricRow, ReplicateMetrics,
    SimSetting,
};
use crate::wavelet::{next_pow2, BasisTransform, WaveletSpec};

/// Declarative run configuration (TOML on disk).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub io: IoConfig,
    pub model: ModelConfig,
    pub mcmc: McmcConfig,
    pub inference: InferenceConfig,
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Curves CSV: first row the grid, then one row per subject.
    pub curves: Option<PathBuf>,
    /// Design CSV: one row per subject, no header.
    pub design: Option<PathBuf>,
    /// Output directory.
    pub output: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig { curves: None, design: None, output: PathBuf::from("fqreg_out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Quantile levels to fit.
    pub taus: Vec<f64>,
    /// Shrinkage family: "horseshoe", "lasso", or "ridge".
    pub prior: String,
    /// Group-scale treatment: "half_cauchy" or a fixed positive number.
    pub global_scale: ScaleSetting,
    /// Hyperprior on the half-Cauchy scale: "vague" or a fixed positive
    /// number. Ignored when `global_scale` is numeric.
    pub hyper_scale: ScaleSetting,
    /// Daubechies vanishing moments (filter length 2p); 0 selects the
    /// identity basis (one coefficient per location, no smoothing).
    pub wavelet: usize,
    /// Decomposition levels; 0 picks the default for the padded length.
    pub levels: usize,
    /// Inverse-gamma prior on the observation scales.
    pub sigma_a0: f64,
    pub sigma_b0: f64,
}

/// A config knob that is either a mode name or a fixed number; both
/// `global_scale = "half_cauchy"` and `global_scale = 2.5` parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSetting {
    Fixed(f64),
    Named(String),
}

impl ScaleSetting {
    fn named(s: &str) -> Self {
        ScaleSetting::Named(s.to_string())
    }

    /// The fixed value, accepting numeric strings like `"2.5"` too.
    fn fixed_value(&self) -> Option<f64> {
        match self {
            ScaleSetting::Fixed(v) => Some(*v),
            ScaleSetting::Named(s) => s.parse().ok(),
        }
    }

    fn is(&self, name: &str) -> bool {
        matches!(self, ScaleSetting::Named(s) if s == name)
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            taus: vec![0.5],
            prior: "horseshoe".to_string(),
            global_scale: ScaleSetting::named("half_cauchy"),
            hyper_scale: ScaleSetting::named("vague"),
            wavelet: 4,
            levels: 0,
            sigma_a0: 0.01,
            sigma_b0: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub chains: u64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { iterations: 8000, burn_in: 2000, thin: 3, chains: 1, seed: 20260816 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Levels reported in the band CSV and the metric table.
    pub alphas: Vec<f64>,
    /// Level of the simultaneous band in the summary CSV and of the
    /// flagging rule.
    pub band_alpha: f64,
    /// Fold change defining practical significance; with +/-1 group coding
    /// the group difference is twice the coefficient, so the threshold on
    /// the coefficient scale is `log2(fold_change) / 2`.
    pub fold_change: f64,
    /// Explicit coefficient-scale threshold; overrides `fold_change`.
    pub effect_threshold: Option<f64>,
    /// Minimum run of consecutive flagged locations to report.
    pub min_run: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            alphas: simgen::REPORT_ALPHAS.to_vec(),
            band_alpha: 0.05,
            fold_change: 1.5,
            effect_threshold: None,
            min_run: inference::DEFAULT_MIN_RUN,
        }
    }
}

impl InferenceConfig {
    pub fn effect_threshold(&self) -> f64 {
        self.effect_threshold.unwrap_or(0.5 * self.fold_change.log2())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// "symmetric_heavy_tailed" or "right_skewed".
    pub setting: String,
    pub replicates: usize,
    /// Methods to fit: "fqr" (functional model) and/or "qr" (per-location).
    pub methods: Vec<String>,
    /// 1-based design column scored against the true effect curve.
    pub score_covariate: usize,
    /// Effect magnitude defining a true/flagged detection.
    pub detection_delta: f64,
    /// Monte Carlo draws for the quantile truth oracle.
    pub truth_samples: usize,
    pub truth_seed: u64,
    /// Write each replicate's curves/design CSVs under `replicates/`.
    pub write_datasets: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            setting: "symmetric_heavy_tailed".to_string(),
            replicates: 2,
            methods: vec!["fqr".to_string(), "qr".to_string()],
            score_covariate: 2,
            detection_delta: simgen::DETECTION_DELTA,
            truth_samples: simgen::TRUTH_MC_SAMPLES,
            truth_seed: 7,
            write_datasets: false,
        }
    }
}

impl RunConfig {
    /// Loads a config file (or pure defaults) and applies `--set` overrides.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?;
                text.parse()
                    .map_err(|e| Error::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Value::Table(toml::map::Map::new()),
        };
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e| Error::config(format!("configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for &tau in &self.model.taus {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::config(format!("model.taus entries must lie in (0,1), got {tau}")));
            }
        }
        if self.model.taus.is_empty() {
            return Err(Error::config("model.taus must not be empty".to_string()));
        }
        for &a in &self.inference.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(format!(
                    "inference.alphas entries must lie in (0,1), got {a}"
                )));
            }
        }
        let ba = self.inference.band_alpha;
        if !(ba > 0.0 && ba < 1.0) {
            return Err(Error::config(format!("inference.band_alpha must lie in (0,1), got {ba}")));
        }
        if !(self.inference.fold_change > 1.0) {
            return Err(Error::config(format!(
                "inference.fold_change must exceed 1, got {}",
                self.inference.fold_change
            )));
        }
        for p in [&self.io.curves, &self.io.design].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::config(format!("referenced path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }

    /// Canonical serialized form of the analysis settings. The `io` section
    /// is deliberately excluded: run identity must not depend on where the
    /// inputs live or the outputs land, only on what is computed.
    pub fn analysis_canonical(&self) -> String {
        #[derive(Serialize)]
        struct Analysis<'a> {
            model: &'a ModelConfig,
            mcmc: &'a McmcConfig,
            inference: &'a InferenceConfig,
            simulate: &'a SimulateConfig,
        }
        toml::to_string(&Analysis {
            model: &self.model,
            mcmc: &self.mcmc,
            inference: &self.inference,
            simulate: &self.simulate,
        })
        .expect("config serializes")
    }

    /// Run identifier: hash of the command name, the analysis settings, and
    /// any input-content digests the command mixes in.
    pub fn run_id(&self, command: &str) -> String {
        self.run_id_with_inputs(command, &[])
    }

    /// Run identifier with input-content digests (label, sha256) mixed in,
    /// so the id follows the data rather than its path.
    pub fn run_id_with_inputs(&self, command: &str, inputs: &[(&str, &str)]) -> String {
        let mut text = format!("{command}\n{}", self.analysis_canonical());
        for (label, digest) in inputs {
            let _ = write!(text, "\n{label} {digest}");
        }
        io::sha256_hex(text.as_bytes())
    }

    pub fn mcmc_spec(&self) -> McmcSpec {
        McmcSpec {
            n_iter: self.mcmc.iterations,
            burn_in: self.mcmc.burn_in,
            thin: self.mcmc.thin,
            n_chains: self.mcmc.chains,
            seed: self.mcmc.seed,
        }
    }

    fn prior_spec(&self) -> Result<PriorSpec> {
        let family = match self.model.prior.as_str() {
            "horseshoe" => PriorFamily::Horseshoe,
            "lasso" => PriorFamily::Lasso,
            "ridge" => PriorFamily::Ridge,
            other => {
                return Err(Error::config(format!(
                    "unknown prior {other:?}; expected horseshoe, lasso, or ridge"
                )))
            }
        };
        let global = if self.model.global_scale.is("half_cauchy") {
            let hyper = if self.model.hyper_scale.is("vague") {
                ScaleHyper::Vague
            } else {
                ScaleHyper::Fixed(self.model.hyper_scale.fixed_value().ok_or_else(|| {
                    Error::config(format!(
                        "model.hyper_scale must be \"vague\" or a number, got {:?}",
                        self.model.hyper_scale
                    ))
                })?)
            };
            GlobalScale::HalfCauchy(hyper)
        } else {
            GlobalScale::Fixed(self.model.global_scale.fixed_value().ok_or_else(|| {
                Error::config(format!(
                    "model.global_scale must be \"half_cauchy\" or a number, got {:?}",
                    self.model.global_scale
                ))
            })?)
        };
        Ok(PriorSpec { family, global })
    }

    /// Builds the model for one quantile level on a grid of length `t`.
    pub fn model_spec(&self, tau: f64, t: usize) -> Result<ModelSpec> {
        let basis = if self.model.wavelet == 0 {
            BasisSpec::Identity
        } else {
            let levels = if self.model.levels == 0 {
                WaveletSpec::default_levels(next_pow2(t))
            } else {
                self.model.levels
            };
            BasisSpec::Wavelet(WaveletSpec::new(self.model.wavelet, levels))
        };
        let spec = ModelSpec {
            tau: QuantileLevel::new(tau)?,
            basis,
            prior: self.prior_spec()?,
            sigma_prior: SigmaPrior { a0: self.model.sigma_a0, b0: self.model.sigma_b0 },
            mcmc: self.mcmc_spec(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Applies one `--set section.key=value` override to a parsed TOML tree.
fn apply_set(root: &mut toml::Value, setting: &str) -> Result<()> {
    let (path, raw) = setting
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--set expects key=value, got {setting:?}")))?;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("--set key must be dotted identifiers, got {path:?}")));
    }
    // Parse the right-hand side as a TOML value; fall back to a string so
    // bare words like `horseshoe` work without quotes.
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(t)) => t.get("v").cloned().expect("key v present"),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("--set {path}: {part} is not a table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let leaf = parts[parts.len() - 1];
    node.as_table_mut()
        .ok_or_else(|| Error::config(format!("--set {path}: parent is not a table")))?
        .insert(leaf.to_string(), parsed);
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "fqreg",
    version,
    about = "Bayesian quantile regression for functional responses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set mcmc.seed=7 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads (default: one per core). Results are identical at any
    /// thread count.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the functional quantile model to curves and design CSVs.
    Fit(FitArgs),
    /// Generate synthetic replicates, fit methods, and score them.
    Simulate(SimulateArgs),
    /// Summarize a stored draws file (bands, scores, flags).
    Report(ReportArgs),
    /// Export basis matrices.
    Basis(BasisArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Curves CSV (overrides io.curves).
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Design CSV (overrides io.design).
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Output directory (overrides io.output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory (overrides io.output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Binary draws file to summarize.
    #[arg(long)]
    pub draws: PathBuf,
    /// Grid CSV (single row). Defaults to `grid.csv` beside the draws file's
    /// directory or its parent; falls back to location indices.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Output directory (default: the draws file's directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a CSV mirror of the binary draws.
    #[arg(long)]
    pub draws_csv: bool,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Write the basis files (required; this subcommand only exports).
    #[arg(long)]
    pub export: bool,
    /// Grid length the basis is built for.
    #[arg(long, default_value_t = 501)]
    pub length: usize,
    /// Daubechies vanishing moments.
    #[arg(long, default_value_t = 4)]
    pub wavelet: usize,
    /// Decomposition levels; 0 picks the default for the padded length.
    #[arg(long, default_value_t = 0)]
    pub levels: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
}

/// Top-level entry point: parse, dispatch, translate errors to exit codes
/// (0 success, 2 configuration, 3 data, 4 numerical).
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
        Command::Basis(args) => cmd_basis(args),
    }
}

/// Runs `f` inside a dedicated rayon pool when a thread count is requested.
fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", path.display())))
}

/// Directory name for one quantile level, e.g. `tau_0.9`.
fn tau_dir(tau: f64) -> String {
    format!("tau_{tau}")
}

fn write_run_log(root: &Path, lines: &[String]) -> Result<()> {
    let mut body = String::new();
    for l in lines {
        writeln!(body, "{l}").expect("string write");
    }
    fs::write(root.join("run.log"), body)
        .map_err(|e| Error::data(format!("cannot write run.log: {e}")))
}

/// Inference outputs for one draws set, written into `dir`.
fn write_inference_outputs(
    dir: &Path,
    draws: &PosteriorDraws,
    cfg: &InferenceConfig,
    run_id: &str,
    manifest: &mut io::Manifest,
    root: &Path,
    rel_prefix: &str,
) -> Result<InferenceResult> {
    let inf = summarize_draws(
        draws,
        cfg.band_alpha,
        cfg.effect_threshold(),
        cfg.min_run,
    )?;
    let p = inf.covariates.len();
    let mut bands = Vec::new();
    for a in 0..p {
        let view = draws.b.index_axis(ndarray::Axis(1), a);
        for &alpha in &cfg.alphas {
            bands.push((a, alpha, simultaneous_band(view, alpha)?));
        }
    }
    io::write_summary(&dir.join("summary.csv"), &inf, run_id)?;
    io::write_bands(&dir.join("bands.csv"), &inf.grid, &bands, run_id)?;
    io::write_flags(&dir.join("flags.csv"), &inf, run_id)?;
    for name in ["summary.csv", "bands.csv", "flags.csv"] {
        manifest.add_file(root, &format!("{rel_prefix}{name}"))?;
    }
    Ok(inf)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.common.config.as_deref(), &args.common.set)?;
    if let Some(p) = args.curves {
        cfg.io.curves = Some(p);
    }
    if let Some(p) = args.design {
        cfg.io.design = Some(p);
    }
    if let Some(p) = args.output {
        cfg.io.output = p;
    }
    cfg.validate()?;
    with_pool(args.common.threads, move || fit_inner(&cfg))
}

fn fit_inner(cfg: &RunConfig) -> Result<()> {
    let curves_path = cfg
        .io
        .curves
        .as_deref()
        .ok_or_else(|| Error::config("io.curves is not set (use --curves or the config file)".to_string()))?;
    let design_path = cfg
        .io
        .design
        .as_deref()
        .ok_or_else(|| Error::config("io.design is not set (use --design or the config file)".to_string()))?;

    let data = io::read_curves(curves_path)?;
    let design = io::read_design(
        design_path,
        data.n_subjects(),
        &curves_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
    )?;

    let curves_hash = io::file_sha256(curves_path)?;
    let design_hash = io::file_sha256(design_path)?;
    let run_id =
        cfg.run_id_with_inputs("fit", &[("curves", &curves_hash), ("design", &design_hash)]);
    let root = cfg.io.output.clone();
    ensure_dir(&root)?;
    let mut manifest = io::Manifest::new("fit", &run_id, cfg.mcmc.seed);
    let mut log = vec![format!("command: fit"), format!("run: {run_id}")];

    io::write_grid(&root.join("grid.csv"), data.grid(), &run_id)?;
    manifest.add_file(&root, "grid.csv")?;

    for &tau in &cfg.model.taus {
        let model = cfg.model_spec(tau, data.n_locations())?;
        let started = std::time::Instant::now();
        let FitOutput { draws, geweke } = run_chain(&data, &design, &model)?;
        let secs = started.elapsed().as_secs_f64();

        let sub = tau_dir(tau);
        let dir = root.join(&sub);
        ensure_dir(&dir)?;
        io::write_draws(&dir.join("draws.bin"), &draws)?;
        io::write_geweke(&dir.join("geweke.csv"), &geweke, &draws.grid, &run_id)?;
        manifest.add_file(&root, &format!("{sub}/draws.bin"))?;
        manifest.add_file(&root, &format!("{sub}/geweke.csv"))?;
        let inf = write_inference_outputs(
            &dir,
            &draws,
            &cfg.inference,
            &run_id,
            &mut manifest,
            &root,
            &format!("{sub}/"),
        )?;
        let n_flagged: usize = inf.covariates.iter().map(|c| c.regions.len()).sum();
        log.push(format!(
            "tau {tau}: {} draws, {} flagged regions, {} jitter retries, {:.1}s",
            draws.b.dim().0,
            n_flagged,
            draws.meta.jitter_retries,
            secs
        ));
    }

    manifest.write(&root)?;
    write_run_log(&root, &log)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Fqr,
    Qr,
}

impl Method {
    fn parse(s: &str) -> Result<Method> {
        match s {
            "fqr" => Ok(Method::Fqr),
            "qr" => Ok(Method::Qr),
            other => Err(Error::config(format!("unknown method {other:?}; expected fqr or qr"))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Method::Fqr => "bayes_fqr",
            Method::Qr => "bayes_qr",
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.common.config.as_deref(), &args.common.set)?;
    if let Some(p) = args.output {
        cfg.io.output = p;
    }
    with_pool(args.common.threads, move || simulate_inner(&cfg))
}

fn simulate_inner(cfg: &RunConfig) -> Result<()> {
    let setting = SimSetting::parse(&cfg.simulate.setting)?;
    let methods: Vec<Method> =
        cfg.simulate.methods.iter().map(|m| Method::parse(m)).collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::config("simulate.methods must not be empty".to_string()));
    }
    if cfg.simulate.replicates == 0 {
        return Err(Error::config("simulate.replicates must be at least 1".to_string()));
    }
    let cov = cfg.simulate.score_covariate;
    if cov == 0 || cov > 2 {
        return Err(Error::config(format!(
            "simulate.score_covariate must be 1 or 2 for the two-column design, got {cov}"
        )));
    }
    let cov_idx = cov - 1;

    let run_id = cfg.run_id("simulate");
    let root = cfg.io.output.clone();
    ensure_dir(&root)?;
    let mut manifest = io::Manifest::new("simulate", &run_id, cfg.mcmc.seed);
    let mut log = vec![format!("command: simulate"), format!("run: {run_id}")];
    let grid = simgen::sim_grid();
    let alphas = &cfg.inference.alphas;
    let delta = cfg.simulate.detection_delta;

    let mut all_rows: Vec<MetricRow> = Vec::new();
    let mut replicate_lines: Vec<String> = Vec::new();

    for &tau in &cfg.model.taus {
        let truth = simgen::true_effect_curve(
            setting,
            tau,
            cfg.simulate.truth_seed,
            cfg.simulate.truth_samples,
        )?;
        let mut per_method: Vec<(Method, Vec<ReplicateMetrics>)> =
            methods.iter().map(|&m| (m, Vec::new())).collect();

        for r in 0..cfg.simulate.replicates {
            let rep_seed = cfg.mcmc.seed.wrapping_add(r as u64);
            let (data, design) = generate_dataset(setting, rep_seed);
            if cfg.simulate.write_datasets {
                let rep_dir = root.join(format!("replicates/rep_{r:03}"));
                ensure_dir(&rep_dir)?;
                io::write_curves(&rep_dir.join("curves.csv"), &data, &run_id)?;
                io::write_design(&rep_dir.join("design.csv"), &design, &run_id)?;
                manifest.add_file(&root, &format!("replicates/rep_{r:03}/curves.csv"))?;
                manifest.add_file(&root, &format!("replicates/rep_{r:03}/design.csv"))?;
            }

            for (method, reps) in per_method.iter_mut() {
                let started = std::time::Instant::now();
                let draws = fit_method(cfg, *method, tau, rep_seed, &data, &design)?;
                let secs = started.elapsed().as_secs_f64();
                let view = draws.b.index_axis(ndarray::Axis(1), cov_idx);
                let scores = inference::simbas(view)?;
                let metrics =
                    score_replicate(view, &scores, &truth.effect, &grid, alphas, delta)?;
                log.push(format!(
                    "tau {tau} replicate {r} {}: IMSE {:.3}, IVar {:.3}, {:.1}s",
                    method.name(),
                    metrics.imse,
                    metrics.ivar,
                    secs
                ));
                let mut line = format!(
                    "{},{},{},{},{}",
                    method.name(),
                    io::fmt_f64(tau),
                    r,
                    io::fmt_f64(metrics.imse),
                    io::fmt_f64(metrics.ivar)
                );
                for (j, _) in alphas.iter().enumerate() {
                    line.push(',');
                    line.push_str(&io::fmt_opt(metrics.rates[j].sensitivity));
                    line.push(',');
                    line.push_str(&io::fmt_opt(metrics.rates[j].fpr));
                }
                replicate_lines.push(line);
                reps.push(metrics);
            }
        }

        for (method, reps) in &per_method {
            all_rows.extend(aggregate_metrics(method.name(), tau, alphas, reps));
        }
    }

    io::write_metrics(&root.join("metrics.csv"), &all_rows, &run_id)?;
    manifest.add_file(&root, "metrics.csv")?;

    // Per-replicate detail alongside the averaged table.
    {
        let mut header = String::from("method,tau,replicate,imse,ivar");
        for a in alphas {
            let a = io::fmt_f64(*a);
            write!(header, ",sensitivity_{a},fpr_{a}").expect("string write");
        }
        let mut body = format!("# run {run_id}\n{header}\n");
        for l in &replicate_lines {
            writeln!(body, "{l}").expect("string write");
        }
        fs::write(root.join("metrics_replicates.csv"), body)
            .map_err(|e| Error::data(format!("cannot write metrics_replicates.csv: {e}")))?;
        manifest.add_file(&root, "metrics_replicates.csv")?;
    }

    manifest.write(&root)?;
    write_run_log(&root, &log)?;
    Ok(())
}

/// Fits one method to one replicate, returning merged posterior draws.
fn fit_method(
    cfg: &RunConfig,
    method: Method,
    tau: f64,
    seed: u64,
    data: &FunctionalDataset,
    design: &Array2<f64>,
) -> Result<PosteriorDraws> {
    let mut mcmc = cfg.mcmc_spec();
    mcmc.seed = seed;
    match method {
        Method::Fqr => {
            let mut model = cfg.model_spec(tau, data.n_locations())?;
            model.mcmc = mcmc;
            Ok(run_chain(data, design, &model)?.draws)
        }
        Method::Qr => {
            let mut spec = ScalarQrSpec::new(QuantileLevel::new(tau)?, mcmc);
            spec.sigma_prior = SigmaPrior { a0: cfg.model.sigma_a0, b0: cfg.model.sigma_b0 };
            crate::gibbs::bayes_qr::run_scalar_qr(data, design, &spec)
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref(), &args.common.set)?;
    with_pool(args.common.threads, move || report_inner(&cfg, &args))
}

fn report_inner(cfg: &RunConfig, args: &ReportArgs) -> Result<()> {
    let mut draws = io::read_draws(&args.draws)?;
    let draws_dir = args.draws.parent().unwrap_or(Path::new(".")).to_path_buf();

    // Attach a grid: explicit flag, else grid.csv beside the draws file or
    // one directory up (the layout `fit` writes), else keep indices.
    let grid_path = args.grid.clone().or_else(|| {
        [draws_dir.join("grid.csv"), draws_dir.join("../grid.csv")]
            .into_iter()
            .find(|p| p.exists())
    });
    if let Some(gp) = grid_path {
        let grid = io::read_grid(&gp)?;
        if grid.len() != draws.grid.len() {
            return Err(Error::data(format!(
                "grid length {} does not match draws locations {}",
                grid.len(),
                draws.grid.len()
            )));
        }
        draws.grid = grid;
    }

    let out = args.output.clone().unwrap_or(draws_dir);
    ensure_dir(&out)?;
    // Reports derive their identity from the draws file plus the inference
    // settings, so re-running is byte-identical.
    let draws_hash = io::file_sha256(&args.draws)?;
    let run_id = cfg.run_id_with_inputs("report", &[("draws", &draws_hash)]);
    let mut manifest = io::Manifest::new("report", &run_id, cfg.mcmc.seed);
    write_inference_outputs(&out, &draws, &cfg.inference, &run_id, &mut manifest, &out, "")?;
    if args.draws_csv {
        io::write_draws_csv(&out.join("draws.csv"), &draws, &run_id)?;
        manifest.add_file(&out, "draws.csv")?;
    }
    manifest.write(&out)?;
    write_run_log(&out, &[format!("command: report"), format!("run: {run_id}")])?;
    Ok(())
}

fn cmd_basis(args: BasisArgs) -> Result<()> {
    if !args.export {
        return Err(Error::config(
            "nothing to do: pass --export to write the basis files".to_string(),
        ));
    }
    if args.wavelet == 0 {
        return Err(Error::config("basis export requires wavelet >= 1".to_string()));
    }
    let levels = if args.levels == 0 {
        WaveletSpec::default_levels(next_pow2(args.length))
    } else {
        args.levels
    };
    let spec = WaveletSpec::new(args.wavelet, levels);
    let basis = BasisTransform::build(args.length, spec)?;
    ensure_dir(&args.output)?;
    let run_id = io::sha256_hex(
        format!("basis\nlength={} wavelet={} levels={levels}", args.length, args.wavelet)
            .as_bytes(),
    );

    let phi = basis.phi();
    let mut body = format!("# run {run_id}\n");
    for row in phi.rows() {
        let cells: Vec<String> = row.iter().map(|v| io::fmt_f64(*v)).collect();
        writeln!(body, "{}", cells.join(",")).expect("string write");
    }
    fs::write(args.output.join("basis_matrix.csv"), body)
        .map_err(|e| Error::data(format!("cannot write basis_matrix.csv: {e}")))?;

    let mut groups = format!("# run {run_id}\nname,level,start,end,size\n");
    for g in basis.groups() {
        writeln!(
            groups,
            "{},{},{},{},{}",
            g.name,
            g.level,
            g.range.start,
            g.range.end,
            g.range.len()
        )
        .expect("string write");
    }
    fs::write(args.output.join("basis_groups.csv"), groups)
        .map_err(|e| Error::data(format!("cannot write basis_groups.csv: {e}")))?;

    let mut manifest = io::Manifest::new("basis", &run_id, 0);
    manifest.add_file(&args.output, "basis_matrix.csv")?;
    manifest.add_file(&args.output, "basis_groups.csv")?;
    manifest.write(&args.output)?;
    Ok(())
}
