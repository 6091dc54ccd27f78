//! Command-line front-end: reads one JSON experiment config, runs a command
//! and writes its reports into the output directory.
//!
//! Exit codes: 0 success, 1 scientific failure, 2 configuration or user
//! error, 3 numerical failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use levy_em::diagnostics::{cf_check, cf_exponent, compensation_check, self_similarity_ks, DiagnosticsError};
use levy_em::em_engine::coupled_em_family;
use levy_em::levy_measures::LevyMeasure;
use levy_em::levy_sampler::{sample_noise_grid, LevyProcess};
use levy_em::rate_lab::{estimate_strong_error, RateError};
use levy_em::rng;
use levy_em::sde_model::{validate_assumptions_seeded, AlphaCirParams, ModelError, SdeModel};
use levy_em::yw_kit::{run_lemma_batch, LemmaTolerance, PsiVariant, YwError, YwFunction, YwParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "levy-em", version, about = "Euler-Maruyama strong-rate experiments for Levy-driven SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model against the coefficient assumptions.
    Validate(CommonArgs),
    /// Estimate the strong error at each level and fit the rate.
    Rate(CommonArgs),
    /// Verify the Yamada-Watanabe jump inequalities on random draws.
    VerifyYw(CommonArgs),
    /// Run the distribution checks of the increment sampler.
    SampleCheck(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Root seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Also write the coupled paths of the first Monte Carlo path (rate only).
    #[arg(long)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelConfig>,
    pub driver: Option<LevyMeasure<f64>>,
    pub zeta: Option<f64>,
    pub small_jump_cutoff: Option<f64>,
    #[serde(default)]
    pub levels: Vec<usize>,
    pub n_fine: Option<usize>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub verify_yw: Option<VerifyYwConfig>,
    pub sample_check: Option<SampleCheckConfig>,
}

fn default_paths() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyYwConfig {
    pub draws: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<PsiVariant<f64>>,
    pub delta: f64,
    pub epsilon: f64,
    pub u: UValue,
    /// Defaults to the driver.
    pub measure: Option<LevyMeasure<f64>>,
}

fn default_variants() -> Vec<PsiVariant<f64>> {
    vec![PsiVariant::ClosedForm]
}

/// A finite positive number or the string `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum UValue {
    Finite(f64),
    Named(InfName),
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub enum InfName {
    #[serde(rename = "inf")]
    Inf,
}

impl UValue {
    fn value(self) -> f64 {
        match self {
            UValue::Finite(u) => u,
            UValue::Named(InfName::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCheckConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_samples() -> usize {
    100_000
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        config_err(e)
    }
}

impl From<RateError> for CliError {
    fn from(e: RateError) -> Self {
        match e {
            RateError::Fit(_) => CliError::Numerical(e.to_string()),
            _ => config_err(e),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Quadrature(_) => CliError::Numerical(e.to_string()),
            _ => config_err(e),
        }
    }
}

impl From<YwError> for CliError {
    fn from(e: YwError) -> Self {
        match e {
            YwError::Quadrature(_) => CliError::Numerical(e.to_string()),
            _ => config_err(e),
        }
    }
}

/// A parsed config with command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dump_paths: bool,
}

impl Context {
    pub fn load(args: &CommonArgs) -> Result<Self, CliError> {
        let text = fs::read_to_string(&args.config).map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", args.config.display())))?;
        let seed = args.seed.unwrap_or(config.seed);
        let output_dir = args
            .output_dir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            config,
            seed,
            output_dir,
            dump_paths: args.dump_paths,
        })
    }

    fn driver_measure(&self) -> Option<LevyMeasure<f64>> {
        self.config.driver
    }

    fn driver(&self) -> Result<Option<LevyProcess<f64>>, CliError> {
        let Some(measure) = self.driver_measure() else {
            return Ok(None);
        };
        measure.validate().map_err(config_err)?;
        let defaults = LevyProcess::with_defaults(measure).map_err(config_err)?;
        LevyProcess::new(
            measure,
            self.config.zeta.unwrap_or(defaults.zeta),
            self.config.small_jump_cutoff.unwrap_or(defaults.small_jump_cutoff),
        )
        .map(Some)
        .map_err(config_err)
    }

    pub fn model(&self) -> Result<SdeModel<f64>, CliError> {
        let m = self.config.model.as_ref().ok_or_else(|| config_err("missing model"))?;
        build_model(m, self.driver()?)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.output_dir).map_err(|source| CliError::Io {
            path: self.output_dir.clone(),
            source,
        })?;
        let path = self.output_dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

struct Params<'a> {
    preset: &'a str,
    map: &'a BTreeMap<String, f64>,
    allowed: &'static [&'static str],
}

impl Params<'_> {
    fn check_names(&self) -> Result<(), CliError> {
        match self.map.keys().find(|k| !self.allowed.contains(&k.as_str())) {
            Some(k) => Err(config_err(format!(
                "unknown parameter `{k}` for preset {}; expected one of {:?}",
                self.preset, self.allowed
            ))),
            None => Ok(()),
        }
    }

    fn get(&self, name: &str) -> Result<f64, CliError> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| config_err(format!("preset {} needs parameter `{name}`", self.preset)))
    }

    fn get_or(&self, name: &str, default: f64) -> f64 {
        self.map.get(name).copied().unwrap_or(default)
    }
}

/// Builds a preset model; `driver` replaces the preset's default driver.
pub fn build_model(m: &ModelConfig, driver: Option<LevyProcess<f64>>) -> Result<SdeModel<f64>, CliError> {
    let allowed: &'static [&'static str] = match m.preset.as_str() {
        "cir" => &["a", "c", "sigma0", "x0", "horizon"],
        "alpha_cir" => &["a", "c", "sigma0", "eta", "alpha", "x0", "horizon", "clamp", "sigma_exponent"],
        "linear_jump_ou" => &["a", "c", "sigma0", "h0", "x0", "horizon", "beta"],
        other => return Err(config_err(format!("unknown preset `{other}`"))),
    };
    let p = Params {
        preset: &m.preset,
        map: &m.params,
        allowed,
    };
    p.check_names()?;
    let x0 = p.get_or("x0", 1.0);
    let horizon = p.get_or("horizon", 1.0);
    Ok(match m.preset.as_str() {
        "cir" => {
            if driver.is_some() {
                return Err(config_err("the cir preset has no jump driver"));
            }
            SdeModel::cir(p.get("a")?, p.get("c")?, p.get("sigma0")?, x0, horizon)?
        }
        "alpha_cir" => {
            let mut params = AlphaCirParams::new(
                p.get("a")?,
                p.get("c")?,
                p.get("sigma0")?,
                p.get("eta")?,
                p.get("alpha")?,
                x0,
                horizon,
            );
            params.clamp = m.params.get("clamp").copied();
            params.sigma_exponent = p.get_or("sigma_exponent", 0.5);
            match driver {
                Some(d) => SdeModel::alpha_cir_with_driver(params, d)?,
                None => SdeModel::alpha_cir(params)?,
            }
        }
        _ => {
            let driver = driver.ok_or_else(|| config_err("linear_jump_ou needs a driver"))?;
            SdeModel::linear_jump_ou(
                p.get("a")?,
                p.get("c")?,
                p.get("sigma0")?,
                p.get("h0")?,
                x0,
                horizon,
                driver,
                m.params.get("beta").copied(),
            )?
        }
    })
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("levy-em: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let (Command::Validate(args) | Command::Rate(args) | Command::VerifyYw(args) | Command::SampleCheck(args)) = &cli.command;
    let ctx = Context::load(args)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = args.threads {
            if n == 0 {
                return Err(config_err("--threads must be at least 1"));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Numerical(e.to_string()))?
    };
    pool.install(|| match &cli.command {
        Command::Validate(_) => cmd_validate(&ctx),
        Command::Rate(_) => cmd_rate(&ctx),
        Command::VerifyYw(_) => cmd_verify_yw(&ctx),
        Command::SampleCheck(_) => cmd_sample_check(&ctx),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise");
    s.push('\n');
    s
}

/// Writes `validation.json`; exit 0 iff every clause passes.
pub fn cmd_validate(ctx: &Context) -> Result<i32, CliError> {
    let model = ctx.model()?;
    let report = validate_assumptions_seeded(&model, ctx.seed);
    let path = ctx.write("validation.json", &to_json(&report))?;
    let failed: Vec<&str> = report.clauses.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("{}: all clauses pass ({})", report.model, path.display());
        Ok(EXIT_OK)
    } else {
        println!("{}: failed clauses {} ({})", report.model, failed.join(", "), path.display());
        Ok(EXIT_FAILED)
    }
}

#[derive(Serialize)]
struct RateSummary<'a> {
    model: &'a str,
    fitted_slope: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    predicted_exponent: Option<f64>,
    regime: Option<&'static str>,
    seed: u64,
    paths: usize,
    n_fine: usize,
    nonfinite_paths: usize,
    oracle_error: Option<(f64, f64)>,
    monotone_within_two_stderr: bool,
    warnings: &'a [String],
}

/// Writes `rate.csv` and `rate.json` (and `paths.csv` with `--dump-paths`).
pub fn cmd_rate(ctx: &Context) -> Result<i32, CliError> {
    let model = ctx.model()?;
    let n_fine = ctx.config.n_fine.ok_or_else(|| config_err("rate needs n_fine"))?;
    let levels = &ctx.config.levels;
    let report = estimate_strong_error(&model, levels, n_fine, ctx.config.paths, ctx.seed)?;

    let mut csv = String::from("n,mean_abs_error,stderr,l2_error\n");
    for l in &report.levels {
        writeln!(csv, "{},{},{},{}", l.n, l.mean_abs_error, l.stderr, l.l2_error).unwrap();
    }
    ctx.write("rate.csv", &csv)?;
    let summary = RateSummary {
        model: report.model,
        fitted_slope: report.fit.map(|f| f.slope),
        ci_low: report.fit.map(|f| f.ci_low),
        ci_high: report.fit.map(|f| f.ci_high),
        predicted_exponent: report.prediction.map(|p| p.exponent),
        regime: report.prediction.map(|p| p.regime.label()),
        seed: report.seed,
        paths: report.paths,
        n_fine,
        nonfinite_paths: report.nonfinite_paths,
        oracle_error: report.oracle_error,
        monotone_within_two_stderr: report.is_monotone(),
        warnings: &report.warnings,
    };
    ctx.write("rate.json", &to_json(&summary))?;
    if ctx.dump_paths {
        let noise = sample_noise_grid(&model.driver, model.horizon, n_fine, rng::path_seed_id(ctx.seed, 0)).map_err(config_err)?;
        let family = coupled_em_family(&model, &noise, levels).map_err(config_err)?;
        let mut out = String::from("t,level,value\n");
        for (level, path) in &family {
            for (i, v) in path.values.iter().enumerate() {
                writeln!(out, "{},{},{}", path.grid.time(i), level, v).unwrap();
            }
        }
        ctx.write("paths.csv", &out)?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match (summary.fitted_slope, summary.predicted_exponent) {
        (Some(s), Some(p)) => println!("{}: fitted slope {s:.4}, predicted exponent {p:.4}", report.model),
        (Some(s), None) => println!("{}: fitted slope {s:.4}", report.model),
        _ => println!("{}: no slope fitted", report.model),
    }
    if report.nonfinite_fraction() > 1e-3 {
        eprintln!("levy-em: {} of {} paths became non-finite", report.nonfinite_paths, report.paths);
        return Ok(EXIT_FAILED);
    }
    Ok(EXIT_OK)
}

/// Writes `verify_yw.csv`; exit 0 iff no draw violates either inequality.
pub fn cmd_verify_yw(ctx: &Context) -> Result<i32, CliError> {
    let cfg = ctx.config.verify_yw.as_ref().ok_or_else(|| config_err("verify-yw needs a verify_yw section"))?;
    let measure = cfg
        .measure
        .or(ctx.driver_measure())
        .ok_or_else(|| config_err("verify-yw needs a measure or a driver"))?;
    measure.validate().map_err(config_err)?;
    let u = cfg.u.value();
    let tol = LemmaTolerance::default();
    let mut csv = String::from("variant,delta,epsilon,lemma,draws,failures,max_violation\n");
    let mut failures = 0;
    for variant in &cfg.variants {
        let f = YwFunction::new(YwParams::new(cfg.delta, cfg.epsilon, *variant))?;
        let batch = run_lemma_batch(&f, &measure, u, cfg.draws, ctx.seed, &tol)?;
        if cfg.draws == 0 {
            continue;
        }
        for s in batch {
            failures += s.failures;
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                variant.label(),
                cfg.delta,
                cfg.epsilon,
                s.lemma.label(),
                s.draws,
                s.failures,
                s.max_violation
            )
            .unwrap();
        }
    }
    let path = ctx.write("verify_yw.csv", &csv)?;
    println!("{failures} violations ({})", path.display());
    Ok(if failures == 0 { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct SampleCheckReport {
    measure: LevyMeasure<f64>,
    dt: f64,
    samples: usize,
    seed: u64,
    mean: f64,
    mean_std_error: f64,
    mean_within_4_stderr: bool,
    /// `(u, deviation / stderr)` pairs; empty when no exponent is available.
    cf_deviations: Vec<(f64, f64)>,
    cf_within_3_stderr: Option<bool>,
    self_similarity_ks: Option<f64>,
    self_similarity_pass: Option<bool>,
}

/// Writes `sample_check.json`; exit 0 iff every applicable check passes.
pub fn cmd_sample_check(ctx: &Context) -> Result<i32, CliError> {
    let process = ctx.driver()?.ok_or_else(|| config_err("sample-check needs a driver"))?;
    let cfg = ctx.config.sample_check.clone().unwrap_or(SampleCheckConfig {
        samples: default_samples(),
        dt: default_dt(),
    });
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(config_err(format!("dt must be positive, got {}", cfg.dt)));
    }
    let m = compensation_check(&process, cfg.dt, cfg.samples, ctx.seed)?;
    let us: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
    let cf = match cf_exponent(&process.measure, 1.0) {
        Ok(_) => Some(cf_check(&process, cfg.dt, &us, cfg.samples, ctx.seed.wrapping_add(1))?),
        Err(DiagnosticsError::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let ks = match process.measure {
        LevyMeasure::Stable { .. } if process.small_jump_cutoff == 0.0 => Some(self_similarity_ks(
            &process,
            cfg.dt,
            cfg.samples,
            10 * cfg.samples,
            ctx.seed.wrapping_add(2),
        )?),
        _ => None,
    };
    let limit = 1.63 / (cfg.samples as f64).sqrt();
    let report = SampleCheckReport {
        measure: process.measure,
        dt: cfg.dt,
        samples: cfg.samples,
        seed: ctx.seed,
        mean: m.mean,
        mean_std_error: m.std_error,
        mean_within_4_stderr: m.z_score().abs() <= 4.0,
        cf_deviations: cf
            .iter()
            .flatten()
            .map(|p| (p.u, p.deviation() / p.std_error))
            .collect(),
        cf_within_3_stderr: cf.as_ref().map(|pts| pts.iter().all(|p| p.within(3.0))),
        self_similarity_ks: ks,
        self_similarity_pass: ks.map(|k| k < limit),
    };
    let path = ctx.write("sample_check.json", &to_json(&report))?;
    let pass = report.mean_within_4_stderr
        && report.cf_within_3_stderr.unwrap_or(true)
        && report.self_similarity_pass.unwrap_or(true);
    println!("sample check {} ({})", if pass { "passed" } else { "failed" }, path.display());
    Ok(if pass { EXIT_OK } else { EXIT_FAILED })
}
