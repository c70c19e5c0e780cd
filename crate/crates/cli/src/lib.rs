//! The `udebias` command line: simulations, two-sample tests and real-data
//! partition tests, each writing `summary.csv`, `report.json` and a
//! `manifest.json` from which the run can be repeated.

pub mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::ffi::OsString;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use udebias::covshift::{run_test, Method, TestConfig, VarianceCenter};
use udebias::dataio::{self, FlipMode, PartitionKind, PartitionSpec, DEFAULT_REPETITIONS};
use udebias::nuisance::{ClassifierKind, NuisanceConfig, RegressorKind};
use udebias::simlab::{run_trials_methods, Setting};

use config::{read_json, FileConfig, PartitionCommandConfig, Resolved, RunManifest, SimulateConfig, TestCommandConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INSUFFICIENT: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "udebias", version, about = "Debiased two-sample U-statistic tests of conditional-distribution equality")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "UDEBIAS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo trials on a synthetic Gaussian shift model.
    Simulate(SimulateArgs),
    /// Test two CSV samples for equal conditional distributions.
    Test(TestArgs),
    /// Repeated partition tests on one CSV table.
    PartitionTest(PartitionArgs),
    /// Re-run a command from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "udebias-out")]
    out: PathBuf,
    /// Cross-fitting folds of the first sample.
    #[arg(long)]
    x_folds: Option<usize>,
    /// Cross-fitting folds of the second sample.
    #[arg(long)]
    u_folds: Option<usize>,
    /// Fraction of each sample reserved for fitting the score.
    #[arg(long)]
    score_fraction: Option<f64>,
    /// Clip interval for the fitted density ratio, as `lo,hi`.
    #[arg(long, value_parser = parse_interval)]
    gamma_clip: Option<(f64, f64)>,
    /// logistic, lasso-logistic, stability+logistic or oracle:<model>.
    #[arg(long)]
    gamma_solver: Option<ClassifierKind>,
    #[arg(long)]
    score_solver: Option<ClassifierKind>,
    /// ols, ridge, ridge:<penalty>, lasso or oracle:<model>.
    #[arg(long)]
    alpha_solver: Option<RegressorKind>,
    /// Fit α̂ on the covariates selected for the score only.
    #[arg(long)]
    alpha_on_score_support: Option<bool>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    setting: Option<Setting>,
    /// Points per sample entering cross-fitting.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated: debiased, plugin.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Simulate under the alternative.
    #[arg(long)]
    alt: bool,
    /// Covariate dimension of the high-dimensional setting.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args, Debug)]
struct TestFlags {
    #[arg(long)]
    alpha_level: Option<f64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    variance_center: Option<CenterArg>,
    /// Response column; the last column when absent.
    #[arg(long)]
    response: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CenterArg {
    Null,
    Estimate,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    flags: TestFlags,
    #[arg(long)]
    sample_f: Option<PathBuf>,
    #[arg(long)]
    sample_g: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Random,
    ExpTilt,
    Covariate,
    Response,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    flags: TestFlags,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    kind: Option<KindArg>,
    /// Split column for `--kind covariate`.
    #[arg(long)]
    column: Option<String>,
    /// Tilt vector for `--kind exp-tilt`, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    tilt: Option<Vec<f64>>,
    /// Tilt standardized covariates.
    #[arg(long)]
    standardize_tilt: bool,
    #[arg(long)]
    flip_fraction: Option<f64>,
    #[arg(long)]
    flip_mode: Option<FlipArg>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FlipArg {
    Symmetric,
    Global,
}

#[derive(Args, Debug)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; the manifest's directory when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A configuration or validation failure.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    Ok((lo, hi))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use udebias::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_)
                | E::MissingColumn(_)
                | E::NonNumericColumn(_)
                | E::DegenerateSplit(_)
                | E::Io { .. }
                | E::Csv(_)
                | E::Dimension(_) => EXIT_CONFIG,
                E::InsufficientData(_) | E::EmptySample(_) | E::EmptyInput(_) | E::InvalidFoldCount { .. } => EXIT_INSUFFICIENT,
                E::DegenerateVariance(_) => EXIT_DEGENERATE,
                E::Component { .. } | E::FoldTraining { .. } => continue,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .context("cannot start the worker pool")?;
    let threads = pool.current_num_threads();
    let (resolved, out) = match cli.command {
        Command::Simulate(a) => {
            let out = a.common.out.clone();
            (Resolved::Simulate(resolve_simulate(a)?), out)
        }
        Command::Test(a) => {
            let out = a.common.out.clone();
            (Resolved::Test(resolve_test(a)?), out)
        }
        Command::PartitionTest(a) => {
            let out = a.common.out.clone();
            (Resolved::PartitionTest(resolve_partition(a)?), out)
        }
        Command::Rerun(a) => {
            let text = fs::read_to_string(&a.manifest).map_err(|e| usage(format!("cannot read {}: {e}", a.manifest.display())))?;
            let manifest: RunManifest =
                serde_json::from_str(&text).map_err(|e| usage(format!("invalid manifest {}: {e}", a.manifest.display())))?;
            let out = a
                .out
                .unwrap_or_else(|| a.manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            (manifest.resolved, out)
        }
    };
    pool.install(|| execute(resolved, &out, threads))
}

fn apply_common(test: &mut TestConfig, c: &CommonArgs) {
    if let Some(v) = c.seed {
        test.seed = v;
    }
    if let Some(v) = c.x_folds {
        test.x_folds = v;
    }
    if let Some(v) = c.u_folds {
        test.u_folds = v;
    }
    if let Some(v) = c.score_fraction {
        test.score_fraction = v;
    }
    if let Some(v) = c.gamma_clip {
        test.gamma_clip = v;
    }
    apply_nuisance(&mut test.nuisance, c);
}

fn apply_nuisance(n: &mut NuisanceConfig, c: &CommonArgs) {
    if let Some(v) = &c.gamma_solver {
        n.gamma = v.clone();
    }
    if let Some(v) = &c.score_solver {
        n.score = v.clone();
    }
    if let Some(v) = &c.alpha_solver {
        n.alpha = v.clone();
    }
    if let Some(v) = c.alpha_on_score_support {
        n.alpha_on_score_support = v;
    }
}

fn apply_flags(test: &mut TestConfig, f: &TestFlags) {
    if let Some(v) = f.alpha_level {
        test.alpha_level = v;
    }
    if let Some(v) = f.method {
        test.method = v;
    }
    if let Some(v) = f.variance_center {
        test.variance_center = match v {
            CenterArg::Null => VarianceCenter::Null,
            CenterArg::Estimate => VarianceCenter::Estimate,
        };
    }
}

fn resolve_simulate(a: SimulateArgs) -> anyhow::Result<SimulateConfig> {
    let mut cfg: SimulateConfig = read_json(a.common.config.as_deref()).map_err(|e| usage(e.to_string()))?;
    let c = &a.common;
    let s = &mut cfg.sim;
    if let Some(v) = a.setting {
        s.setting = v;
    }
    if let Some(v) = a.n {
        s.n_crossfit = v;
    }
    if let Some(v) = a.trials {
        s.trials = v;
    }
    if a.alt {
        s.alternative = true;
    }
    if let Some(v) = a.dim {
        s.dim_override = Some(v);
    }
    if let Some(v) = c.seed {
        s.seed = v;
    }
    if let Some(v) = c.x_folds {
        s.x_folds = v;
    }
    if let Some(v) = c.u_folds {
        s.u_folds = v;
    }
    if let Some(v) = c.score_fraction {
        s.score_fraction = v;
    }
    if let Some(v) = c.gamma_clip {
        s.gamma_clip = v;
    }
    if c.gamma_solver.is_some() || c.score_solver.is_some() || c.alpha_solver.is_some() || c.alpha_on_score_support.is_some() {
        let mut n = s.nuisance_config();
        apply_nuisance(&mut n, c);
        s.nuisance = Some(n);
    }
    if let Some(v) = a.method {
        cfg.methods = v;
    }
    if cfg.methods.is_empty() {
        return Err(usage("at least one --method is required"));
    }
    cfg.sim.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn resolve_test(a: TestArgs) -> anyhow::Result<TestCommandConfig> {
    let file: FileConfig = read_json(a.common.config.as_deref()).map_err(|e| usage(e.to_string()))?;
    let mut test = file.test.unwrap_or_default();
    apply_common(&mut test, &a.common);
    apply_flags(&mut test, &a.flags);
    test.validate().map_err(|e| usage(e.to_string()))?;
    let sample_f = a.sample_f.or(file.sample_f).ok_or_else(|| usage("--sample-f is required"))?;
    let sample_g = a.sample_g.or(file.sample_g).ok_or_else(|| usage("--sample-g is required"))?;
    Ok(TestCommandConfig { sample_f, sample_g, response: a.flags.response.or(file.response), test })
}

fn resolve_partition(a: PartitionArgs) -> anyhow::Result<PartitionCommandConfig> {
    let file: FileConfig = read_json(a.common.config.as_deref()).map_err(|e| usage(e.to_string()))?;
    let mut test = file.test.unwrap_or_default();
    apply_common(&mut test, &a.common);
    apply_flags(&mut test, &a.flags);
    test.validate().map_err(|e| usage(e.to_string()))?;
    let data = a.data.or(file.data).ok_or_else(|| usage("--data is required"))?;

    let mut spec = match (a.kind, file.partition) {
        (None, Some(spec)) => spec,
        (None, None) => return Err(usage("--kind is required")),
        (Some(kind), previous) => {
            let kind = match kind {
                KindArg::Random => PartitionKind::Random,
                KindArg::ExpTilt => PartitionKind::ExpTilt {
                    tilt: a.tilt.clone().ok_or_else(|| usage("--kind exp-tilt requires --tilt"))?,
                    standardize: a.standardize_tilt,
                },
                KindArg::Covariate => PartitionKind::CovariateSplit {
                    column: a.column.clone().ok_or_else(|| usage("--kind covariate requires --column"))?,
                },
                KindArg::Response => PartitionKind::ResponseSplit,
            };
            match previous {
                Some(p) => PartitionSpec { kind, ..p },
                None => PartitionSpec::new(kind, 0),
            }
        }
    };
    if let Some(v) = a.common.seed {
        spec.seed = v;
    }
    if let Some(v) = a.flip_fraction {
        spec.flip_fraction = v;
    }
    if let Some(v) = a.flip_mode {
        spec.flip_mode = match v {
            FlipArg::Symmetric => FlipMode::Symmetric,
            FlipArg::Global => FlipMode::Global,
        };
    }
    if !(0.0..0.5).contains(&spec.flip_fraction) {
        return Err(usage(format!("flip fraction {} outside [0, 0.5)", spec.flip_fraction)));
    }
    let repetitions = a.reps.or(file.repetitions).unwrap_or(DEFAULT_REPETITIONS);
    if repetitions == 0 {
        return Err(usage("reps must be ≥ 1"));
    }
    Ok(PartitionCommandConfig { data, response: a.flags.response.or(file.response), partition: spec, repetitions, test })
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create_file(path: &Path) -> anyhow::Result<fs::File> {
    fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))
}

fn resolve_response(path: &Path, response: &Option<String>) -> anyhow::Result<String> {
    match response {
        Some(r) => Ok(r.clone()),
        None => dataio::csv_header(path)?
            .pop()
            .ok_or_else(|| usage(format!("{} has an empty header", path.display()))),
    }
}

fn execute(resolved: Resolved, out: &Path, threads: usize) -> anyhow::Result<()> {
    let started = unix_now();
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let summary = out.join("summary.csv");
    let report = out.join("report.json");
    let mut outputs = vec![summary.clone(), report.clone()];

    match &resolved {
        Resolved::Simulate(cfg) => {
            let result = run_trials_methods(&cfg.sim, &cfg.methods)?;
            if result.outcomes.is_empty() {
                return Err(anyhow!(
                    "all {} trials failed; first: {}",
                    cfg.sim.trials,
                    result.failures.first().map_or("", |f| f.message.as_str())
                ));
            }
            result.write_summary_csv(create_file(&summary)?)?;
            let trials = out.join("trials.csv");
            result.write_trials_csv(create_file(&trials)?)?;
            outputs.push(trials);
            #[derive(Serialize)]
            struct SimReport<'a> {
                model: String,
                bias_reference: &'static str,
                rows: &'a [udebias::simlab::SummaryRow],
                failures: &'a [udebias::simlab::TrialFailure],
            }
            write_json(
                &report,
                &SimReport {
                    model: cfg.sim.model()?.to_string(),
                    bias_reference: "bias = mean(theta_hat) - 0.5 under both hypotheses",
                    rows: &result.rows,
                    failures: &result.failures,
                },
            )?;
            println!("{:>6} {:>9} {:>11} {:>9} {:>9} {:>7} {:>8}", "n", "method", "hypothesis", "bias", "rejects", "trials", "failures");
            for r in &result.rows {
                println!(
                    "{:>6} {:>9} {:>11} {:>9.4} {:>9.3} {:>7} {:>8}",
                    r.n,
                    r.method.to_string(),
                    if r.alternative { "alternative" } else { "null" },
                    r.bias,
                    r.rejection_rate,
                    r.trials,
                    r.failures
                );
            }
        }
        Resolved::Test(cfg) => {
            let response = resolve_response(&cfg.sample_f, &cfg.response)?;
            let f = dataio::load_csv(&cfg.sample_f, &response)?;
            let g = dataio::load_csv(&cfg.sample_g, &response)?;
            if f.columns != g.columns {
                return Err(usage(format!(
                    "the samples have different covariates: {:?} and {:?}",
                    f.columns, g.columns
                )));
            }
            let r = run_test(&f.points(), &g.points(), &cfg.test)?;
            let mut w = csv::Writer::from_writer(create_file(&summary)?);
            w.write_record(["method", "theta_hat", "standard_error", "t_stat", "p_value", "reject", "m", "n"])?;
            w.write_record([
                cfg.test.method.to_string(),
                r.theta_hat.to_string(),
                r.standard_error().to_string(),
                r.t_stat.to_string(),
                r.p_value.to_string(),
                r.reject.to_string(),
                r.m.to_string(),
                r.n.to_string(),
            ])?;
            w.flush()?;
            write_json(&report, &r)?;
            println!("theta_hat = {:.6}", r.theta_hat);
            println!("T         = {:.4}", r.t_stat);
            println!("p-value   = {:.6}", r.p_value);
            println!("reject at {}: {}", r.alpha_level, r.reject);
        }
        Resolved::PartitionTest(cfg) => {
            let response = resolve_response(&cfg.data, &cfg.response)?;
            let ds = dataio::load_csv(&cfg.data, &response)?;
            let r = dataio::repeated_partition_test(&ds, &cfg.partition, &cfg.test, cfg.repetitions)?;
            r.write_repetitions_csv(create_file(&summary)?)?;
            write_json(&report, &r)?;
            println!("partition            {}", r.partition);
            println!("repetitions          {} ({} failed)", r.repetitions, r.failures);
            println!("mean theta_hat       {:.4}", r.mean_theta);
            println!("median std. error    {:.4}", r.median_standard_error);
            println!("aggregated p-value   {:.4}", r.aggregated_p_value);
            println!("rejection proportion {:.3}", r.rejection_rate);
        }
    }

    let name = resolved.name();
    let manifest_path = out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        seed: resolved.seed(),
        resolved,
        version: config::version_string(),
        threads,
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
    };
    write_json(&manifest_path, &manifest)?;
    eprintln!("{name}: wrote {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_parsing() {
        assert_eq!(parse_interval("0.02, 50").unwrap(), (0.02, 50.0));
        assert!(parse_interval("0.02").is_err());
        assert!(parse_interval("a,1").is_err());
    }

    #[test]
    fn error_classes() {
        let e: anyhow::Error = udebias::Error::InsufficientData("x".into()).into();
        assert_eq!(exit_code(&e), EXIT_INSUFFICIENT);
        let e: anyhow::Error = udebias::Error::DegenerateVariance(0.0).into();
        assert_eq!(exit_code(&e), EXIT_DEGENERATE);
        let e: anyhow::Error = udebias::Error::MissingColumn("y".into()).into();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        let e: anyhow::Error = udebias::Error::Singular.into();
        assert_eq!(exit_code(&e), EXIT_RUNTIME);
        assert_eq!(exit_code(&usage("bad")), EXIT_CONFIG);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
