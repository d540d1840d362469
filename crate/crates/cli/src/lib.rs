//! Command-line front end for causal mediation analysis.
//!
//! Subcommands:
//! - `fit` fits the outcome and mediator models and reports causal effects.
//! - `sens` adds a latent confounder. `--delta` runs one bias prior and
//!   `--delta-grid` runs a sweep.
//! - `oracle` runs a reference estimator.
//! - `compare` joins an engine summary with an oracle summary.
//!
//! Every run writes its artifacts into `--out`. Each artifact embeds the
//! seed and the resolved configuration.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use causalmed::gformula::{write_effects_csv, EffectOptions};
use causalmed::oracle::{closed_form_linear, quasi_bayes, OracleMethod, QuasiBayesOptions};
use causalmed::pipeline::{fit, fit_sensitivity, FitResult};
use causalmed::sensitivity::{delta_sweep, SensitivitySpec};
use causalmed::{Error, ErrorCategory, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{RunConfig, DEFAULT_NSIM};
use report::{FitSummary, OracleSummary, StoredSummary, SweepSummary};

#[derive(Debug, Parser)]
#[command(
    name = "causalmed",
    version,
    about = "Bayesian causal mediation analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit both models and estimate natural and controlled effects.
    Fit(RunArgs),
    /// Sensitivity analysis for a latent mediator-outcome confounder.
    #[command(visible_alias = "sweep")]
    Sens(RunArgs),
    /// Reference estimators: quasi_bayes or closed_form.
    Oracle(RunArgs),
    /// Side-by-side table of an engine summary and an oracle summary.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with the same keys as the flags. Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// `summary.json` written by `fit` or `sens`.
    #[arg(long)]
    pub engine: PathBuf,
    /// `summary.json` written by `oracle`.
    #[arg(long)]
    pub oracle: PathBuf,
    /// Directory for `compare.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a successful command hands back to the caller.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Human-readable report for stdout.
    pub text: String,
    /// Convergence and data warnings for stderr.
    pub warnings: Vec<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Fit(args) => with_config(args, cmd_fit),
        Command::Sens(args) => with_config(args, cmd_sens),
        Command::Oracle(args) => with_config(args, cmd_oracle),
        Command::Compare(args) => cmd_compare(&args),
    }
}

/// Parses `args` (without the program name), runs, prints, and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(
        std::iter::once("causalmed".into()).chain(args.into_iter().map(Into::into)),
    ) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_config(args: RunArgs, f: fn(&RunConfig, &Run) -> Result<Outcome>) -> Result<Outcome> {
    let cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?.overlay(args.run),
        None => args.run,
    };
    let (seed, generated) = match cfg.seed {
        Some(s) => (s, false),
        None => (generated_seed(), true),
    };
    let run = Run {
        seed,
        started: Instant::now(),
        out: cfg.out_dir(),
    };
    let pool = match cfg.threads {
        Some(0) => return Err(Error::Config("--threads must be at least 1".into())),
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let mut out = match pool {
        Some(p) => p.install(|| f(&cfg, &run)),
        None => f(&cfg, &run),
    }?;
    if generated {
        out.warnings
            .insert(0, format!("no --seed given; using generated seed {seed}"));
    }
    Ok(out)
}

fn generated_seed() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

struct Run {
    seed: u64,
    started: Instant,
    out: PathBuf,
}

impl Run {
    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|source| Error::Io {
            path: self.out.clone(),
            source,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("JSON encoding: {e}")))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Comment line that opens every CSV artifact.
fn csv_preamble(command: &str, seed: u64, echo: &RunConfig) -> Vec<u8> {
    let json = serde_json::to_string(echo).unwrap_or_default();
    format!("# causalmed {command} seed={seed} config={json}\n").into_bytes()
}

fn write_csv_with<F>(path: &Path, preamble: &[u8], body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = preamble.to_vec();
    body(&mut buf)?;
    write_bytes(path, &buf)
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    parameter: &'a str,
    rhat: f64,
    ess: f64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    seed_generated: bool,
    config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_rhat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_ess: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    diagnostics: Vec<Diagnostic<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergences: Option<usize>,
    warnings: Vec<String>,
    threads: usize,
    runtime_seconds: f64,
}

impl<'a> RunMeta<'a> {
    fn new(command: &'a str, cfg: &RunConfig, run: &Run, warnings: Vec<String>) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: run.seed,
            seed_generated: cfg.seed.is_none(),
            config: cfg.resolved(run.seed),
            max_rhat: None,
            min_ess: None,
            diagnostics: Vec::new(),
            divergences: None,
            warnings,
            threads: rayon::current_num_threads(),
            runtime_seconds: run.started.elapsed().as_secs_f64(),
        }
    }

    fn with_fit(mut self, fit: &'a FitResult) -> Self {
        self.max_rhat = Some(fit.max_rhat());
        self.min_ess = Some(fit.min_ess());
        self.diagnostics = fit
            .coefficients
            .iter()
            .map(|c| Diagnostic {
                parameter: &c.parameter,
                rhat: c.rhat,
                ess: c.ess,
            })
            .collect();
        self.divergences = Some(fit.draws.total_divergences());
        self
    }
}

fn write_fit_artifacts(
    command: &str,
    cfg: &RunConfig,
    run: &Run,
    result: &FitResult,
) -> Result<Outcome> {
    run.prepare()?;
    let echo = cfg.echo(run.seed);
    let preamble = csv_preamble(command, run.seed, &echo);
    let summary = FitSummary::new(command, run.seed, echo, result);
    write_json(&run.path("summary.json"), &summary)?;
    write_csv_with(&run.path("effects.csv"), &preamble, |buf| {
        write_effects_csv(&result.effects, buf)
    })?;
    write_csv_with(&run.path("draws.csv"), &preamble, |buf| {
        result.draws.write_csv(buf)
    })?;
    let meta = RunMeta::new(command, cfg, run, result.warnings.clone()).with_fit(result);
    write_json(&run.path("run_meta.json"), &meta)?;
    Ok(Outcome {
        text: summary.render(),
        warnings: result.warnings.clone(),
    })
}

fn reject_sensitivity_flags(cfg: &RunConfig, command: &str) -> Result<()> {
    if cfg.delta.is_some() || cfg.delta_grid.is_some() || cfg.sensitivity.is_some() {
        return Err(Error::Config(format!(
            "--delta, --delta-grid and --sensitivity belong to `sens`, not `{command}`"
        )));
    }
    Ok(())
}

fn cmd_fit(cfg: &RunConfig, run: &Run) -> Result<Outcome> {
    reject_sensitivity_flags(cfg, "fit")?;
    let data = cfg.load_data()?;
    let analysis = cfg.analysis(&data, run.seed)?;
    let result = fit(&data, &analysis)?;
    write_fit_artifacts("fit", cfg, run, &result)
}

fn cmd_sens(cfg: &RunConfig, run: &Run) -> Result<Outcome> {
    let base = cfg.sensitivity.clone().unwrap_or_default();
    if cfg.delta.is_some() && cfg.delta_grid.is_some() {
        return Err(Error::Config(
            "give either --delta or --delta-grid, not both".into(),
        ));
    }
    let data = cfg.load_data()?;
    let analysis = cfg.analysis(&data, run.seed)?;
    let grid = match (&cfg.delta_grid, cfg.delta) {
        (Some(g), _) => Some(g.clone()),
        (None, None) if !base.delta_grid.is_empty() => Some(base.delta_grid.clone()),
        _ => None,
    };
    if let Some(grid) = grid {
        return run_sweep(cfg, run, &data, &analysis, &base, &grid);
    }
    let sens: SensitivitySpec = match (cfg.delta, &cfg.sensitivity) {
        (Some(d), _) => base.at_delta(d),
        (None, Some(s)) => s.clone(),
        (None, None) => {
            return Err(Error::Config(
                "sens needs --delta, --delta-grid or a --sensitivity bias prior".into(),
            ))
        }
    };
    let result = fit_sensitivity(&data, &analysis, &sens)?;
    write_fit_artifacts("sens", cfg, run, &result)
}

fn run_sweep(
    cfg: &RunConfig,
    run: &Run,
    data: &causalmed::data::Dataset,
    analysis: &causalmed::pipeline::AnalysisConfig,
    base: &SensitivitySpec,
    grid: &[f64],
) -> Result<Outcome> {
    let result = delta_sweep(data, analysis, base, grid)?;
    run.prepare()?;
    let echo = cfg.echo(run.seed);
    let preamble = csv_preamble("sens", run.seed, &echo);
    write_csv_with(&run.path("sweep.csv"), &preamble, |buf| {
        result.write_csv(buf)
    })?;
    let summary = SweepSummary {
        command: "sens".into(),
        seed: run.seed,
        config: echo,
        scale: analysis.scale,
        level: analysis.level,
        sweep: report::sweep_entries(&result.summaries),
    };
    write_json(&run.path("summary.json"), &summary)?;
    let warnings: Vec<String> = summary
        .sweep
        .iter()
        .filter_map(|e| {
            e.error
                .as_ref()
                .map(|err| format!("delta {}: {err}", e.delta))
        })
        .collect();
    write_json(
        &run.path("run_meta.json"),
        &RunMeta::new("sens", cfg, run, warnings.clone()),
    )?;
    Ok(Outcome {
        text: summary.render(),
        warnings,
    })
}

fn cmd_oracle(cfg: &RunConfig, run: &Run) -> Result<Outcome> {
    reject_sensitivity_flags(cfg, "oracle")?;
    let method = cfg.method.unwrap_or(OracleMethod::QuasiBayes);
    let spec = cfg.spec()?;
    method.check(&spec)?;
    let data = cfg.load_data()?;
    // validates level and scale against the spec
    let analysis = cfg.analysis(&data, run.seed)?;
    let result = match method {
        OracleMethod::ClosedForm => closed_form_linear(&data, analysis.level)?,
        OracleMethod::QuasiBayes => quasi_bayes(
            &data,
            &spec,
            &QuasiBayesOptions {
                nsim: cfg.nsim.unwrap_or(DEFAULT_NSIM),
                seed: run.seed,
                level: analysis.level,
                scale: analysis.scale,
                effects: EffectOptions {
                    expectation_scale: true,
                    ..analysis.effects
                },
                robust_se: cfg.robust_se,
                zero_variance: false,
            },
        )?,
    };
    run.prepare()?;
    let summary = OracleSummary {
        command: "oracle".into(),
        method,
        seed: run.seed,
        config: RunConfig {
            method: Some(method),
            nsim: (method == OracleMethod::QuasiBayes).then(|| cfg.nsim.unwrap_or(DEFAULT_NSIM)),
            ..cfg.echo(run.seed)
        },
        scale: result.summary.scale,
        level: result.summary.level,
        effects: result.summary.rows,
    };
    write_json(&run.path("summary.json"), &summary)?;
    write_json(
        &run.path("run_meta.json"),
        &RunMeta::new("oracle", cfg, run, Vec::new()),
    )?;
    Ok(Outcome {
        text: summary.render(),
        warnings: Vec::new(),
    })
}

fn read_summary(path: &Path) -> Result<StoredSummary> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn cmd_compare(args: &CompareArgs) -> Result<Outcome> {
    let engine = read_summary(&args.engine)?;
    let oracle = read_summary(&args.oracle)?;
    let rows = report::compare(&engine, &oracle)?;
    let left = format!("engine ({})", engine.command);
    let right = format!(
        "oracle ({})",
        oracle
            .method
            .map(|m| m.to_string())
            .unwrap_or(oracle.command.clone())
    );
    let mut text = report::compare_table(&rows, &left, &right);
    let flagged: Vec<String> = rows
        .iter()
        .filter(|r| r.exceeds)
        .map(|r| r.effect.clone())
        .collect();
    if flagged.is_empty() {
        text.push_str("all effects agree within tolerance\n");
    } else {
        text.push_str(&format!("outside tolerance (!): {}\n", flagged.join(", ")));
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        write_bytes(&dir.join("compare.csv"), &bytes)?;
    }
    Ok(Outcome {
        text,
        warnings: Vec::new(),
    })
}
