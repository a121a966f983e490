use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use binagg::aggregation::{label_bound, NoiseMode};
use binagg::gdp::{self, GdpBudget, RandomSource};
use binagg::harness::config::FileConfig;
use binagg::harness::experiments::{self, EquivalenceReport};
use binagg::harness::report::ExperimentKind;
use binagg::harness::{
    load_dataset, simulate_dataset, ClipPolicy, DatasetSpec, ExperimentConfig, ExperimentReport,
    SimulationConfig,
};
use binagg::pipeline::{self, PipelineConfig};
use binagg::{BudgetAllocation, Error};

#[derive(Parser)]
#[command(
    name = "binagg",
    version,
    about = "Differentially private linear regression and synthetic data by binning and aggregation"
)]
struct Cli {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed. Falls back to the config file, then BINAGG_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a private linear regression on a CSV file.
    Fit(FitArgs),
    /// Generate a private synthetic dataset from a CSV file.
    Synth(SynthArgs),
    /// Simulated-data studies.
    Simulate(SimulateArgs),
    /// Coverage study (same as `simulate --report coverage`).
    Coverage(StudyArgs),
    /// Compare aggregated synthetic sums with direct releases.
    Equivalence(StudyArgs),
    /// Convert between privacy parameterisations.
    ConvertBudget(ConvertArgs),
}

#[derive(Args, Clone, Default)]
struct PipelineArgs {
    /// Total GDP budget.
    #[arg(long)]
    mu: Option<f64>,
    /// Budget ratios bin:count:features:label, e.g. 1:3:3:3.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[f64; 4]>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_count: Option<i64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Calibrate feature noise to the L2 norm of the sensitivity vector.
    #[arg(long)]
    strict_l2: bool,
    /// Divide the bias correction by the number of bins.
    #[arg(long)]
    algorithm2_literal: bool,
    #[arg(long)]
    intercept: bool,
}

impl PipelineArgs {
    fn as_config(&self) -> FileConfig {
        FileConfig {
            total_mu: self.mu,
            ratios: self.ratios,
            theta: self.theta,
            max_depth: self.max_depth,
            min_count: self.min_count,
            alpha: self.alpha,
            strict_l2_mode: self.strict_l2.then_some(true),
            algorithm2_literal_debias: self.algorithm2_literal.then_some(true),
            intercept: self.intercept.then_some(true),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Comma-separated input with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column; all other columns are features.
    #[arg(long, default_value = "y")]
    label: String,
    /// Feature bounds, e.g. 0:1,0:1 (one interval per feature column).
    #[arg(long, value_delimiter = ',', value_parser = parse_interval, allow_hyphen_values = true)]
    bounds: Vec<(f64, f64)>,
    /// Label bounds, e.g. 0:7.
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    label_bounds: Option<(f64, f64)>,
    /// Drop out-of-bound rows instead of clipping them.
    #[arg(long)]
    reject: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Turn off all noise (debugging only; the output is not private).
    #[arg(long)]
    no_noise: bool,
    /// Print the fit as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append the bin index of each record.
    #[arg(long)]
    include_bin: bool,
    /// Clamp records into their bins and the label bound. This breaks the
    /// distributional equivalence of aggregated sums.
    #[arg(long)]
    clamp: bool,
    /// Shuffle record order.
    #[arg(long)]
    shuffle: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long = "d", default_value_t = 5)]
    d: usize,
    #[arg(long = "n", default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Label clipping interval; defaults depend on d.
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    label_bounds: Option<(f64, f64)>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output prefix for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Dataset,
    Coverage,
    ErrorCurve,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    study: StudyArgs,
    #[arg(long, value_enum, default_value = "dataset")]
    report: ReportKind,
    /// Sample sizes for the error curve, e.g. 512,2048,8192.
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<usize>,
    /// Multiply the feature domain and label bounds.
    #[arg(long, default_value_t = 1.0)]
    inflate: f64,
    /// Sweep over these theta values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sweep_theta: Vec<f64>,
    /// Sweep over these budget ratios, e.g. 1:3:3:3,1:1:1:1.
    #[arg(long, value_delimiter = ',', value_parser = parse_ratios)]
    sweep_ratios: Vec<[f64; 4]>,
}

#[derive(Args)]
struct ConvertArgs {
    /// GDP parameter to convert.
    #[arg(long)]
    mu: Option<f64>,
    /// Report delta at this epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Report epsilon at this delta.
    #[arg(long)]
    delta: Option<f64>,
    /// Convert a pure epsilon-DP guarantee to GDP.
    #[arg(long)]
    pure_epsilon: Option<f64>,
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    Ok((lo, hi))
}

fn parse_ratios(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad ratio `{p}`")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| format!("expected four ratios a:b:c:d, got `{s}`"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::Load { .. } | Error::Io(_) | Error::EmptyResult => 2,
        Error::InsufficientBins { .. } | Error::Singular { .. } => 3,
    }
}

struct Context {
    file: FileConfig,
    seed: u64,
}

fn print_budget(b: &BudgetAllocation, n: Option<usize>) -> Result<(), Error> {
    let total = b.total();
    println!(
        "budget: mu = {:.6} (bin {:.6}, count {:.6}, features {:.6}, label {:.6})",
        total.value(),
        b.mu_bin.value(),
        b.mu_c.value(),
        b.mu_s.value(),
        b.mu_t.value()
    );
    if let Some(n) = n {
        let delta = 1.0 / (n as f64).powf(1.1);
        let eps = gdp::gdp_to_epsilon(total, delta)?;
        println!("equivalent: ({eps:.6}, {delta:.3e})-DP with delta = 1/n^1.1");
    }
    Ok(())
}

fn dataset_spec(ctx: &Context, a: &DataArgs) -> Result<DatasetSpec, Error> {
    let feature_bounds = Some(a.bounds.clone())
        .filter(|b| !b.is_empty())
        .or_else(|| ctx.file.bounds.clone())
        .ok_or_else(|| Error::InvalidArgument("feature bounds are required (--bounds)".into()))?;
    let label_bounds = a
        .label_bounds
        .or(ctx.file.label_bounds)
        .ok_or_else(|| Error::InvalidArgument("label bounds are required (--label-bounds)".into()))?;
    Ok(DatasetSpec {
        path: a.data.clone(),
        label_column: a.label.clone(),
        feature_bounds,
        label_bounds,
        clip: if a.reject { ClipPolicy::Reject } else { ClipPolicy::Clip },
    })
}

fn pipeline_config(ctx: &Context, a: &PipelineArgs) -> Result<PipelineConfig, Error> {
    let cfg = ctx.file.clone().overlay(a.as_config()).pipeline();
    // fail early on budgets that cannot be allocated
    cfg.budgets()?;
    Ok(cfg)
}

fn fit(ctx: &Context, a: &FitArgs) -> Result<(), Error> {
    let spec = dataset_spec(ctx, &a.data)?;
    let data = load_dataset(&spec)?;
    let mut cfg = pipeline_config(ctx, &a.pipeline)?;
    if a.no_noise {
        cfg.noise = NoiseMode::Disabled;
        eprintln!("warning: noise disabled, output is not differentially private");
    }
    let bound = label_bound(spec.label_bounds.0, spec.label_bounds.1)?;
    let mut rng = RandomSource::new(ctx.seed, 0);
    let out = pipeline::run_regression(
        &data.x,
        &data.y,
        &spec.domain()?,
        bound,
        &cfg,
        None,
        &mut rng,
    )?;
    let mut names = data.feature_names.clone();
    if cfg.intercept {
        names.push("(intercept)".into());
    }
    let se = out.fit.standard_errors();
    if a.json {
        let coefs: Vec<_> = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                serde_json::json!({
                    "name": name,
                    "estimate": out.fit.beta[j],
                    "std_error": se[j],
                    "ci_lower": out.fit.intervals[j].0,
                    "ci_upper": out.fit.intervals[j].1,
                    "naive_estimate": out.naive_beta[j],
                })
            })
            .collect();
        let doc = serde_json::json!({
            "rows": data.y.len(),
            "clipped_rows": data.clipped_rows,
            "rejected_rows": data.rejected_rows,
            "bins": out.fit.bins,
            "discarded_bins": out.discarded,
            "total_mu": out.budgets.total().value(),
            "alpha": out.fit.alpha,
            "coefficients": coefs,
        });
        println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?);
        return Ok(());
    }
    print_budget(&out.budgets, Some(data.y.len()))?;
    println!(
        "rows: {} (clipped {}, rejected {}); bins: {} (discarded {})",
        data.y.len(),
        data.clipped_rows,
        data.rejected_rows,
        out.fit.bins,
        out.discarded
    );
    let level = 100.0 * (1.0 - out.fit.alpha);
    println!(
        "{:<14} {:>12} {:>12} {:>12} {:>12}",
        "coefficient",
        "estimate",
        "std_error",
        format!("{level:.0}% lower"),
        format!("{level:.0}% upper")
    );
    for (j, name) in names.iter().enumerate() {
        println!(
            "{:<14} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            name, out.fit.beta[j], se[j], out.fit.intervals[j].0, out.fit.intervals[j].1
        );
    }
    Ok(())
}

fn synth(ctx: &Context, a: &SynthArgs) -> Result<(), Error> {
    let spec = dataset_spec(ctx, &a.data)?;
    let data = load_dataset(&spec)?;
    let cfg = pipeline_config(ctx, &a.pipeline)?;
    if cfg.intercept {
        return Err(Error::InvalidArgument("--intercept does not apply to synth".into()));
    }
    let bound = label_bound(spec.label_bounds.0, spec.label_bounds.1)?;
    let mut rng = RandomSource::new(ctx.seed, 0);
    let (mut ds, budgets) =
        pipeline::run_synthesis(&data.x, &data.y, &spec.domain()?, bound, &cfg, &mut rng)?;
    if a.clamp {
        ds.clamp(bound);
    }
    if a.shuffle {
        ds.shuffle(&mut rng);
    }
    match &a.out {
        Some(path) => {
            ds.write_csv(std::fs::File::create(path)?, a.include_bin)?;
            print_budget(&budgets, Some(data.y.len()))?;
            println!("wrote {} records in {} bins to {}", ds.len(), ds.bins(), path.display());
        }
        None => ds.write_csv(std::io::stdout().lock(), a.include_bin)?,
    }
    Ok(())
}

fn experiment_config(ctx: &Context, s: &StudyArgs, default_reps: usize) -> Result<ExperimentConfig, Error> {
    let simulation = SimulationConfig {
        n: s.n,
        d: s.d,
        sigma: s.sigma,
        label_bounds: s.label_bounds.or(ctx.file.label_bounds),
        clip_labels: true,
    };
    simulation.validate()?;
    Ok(ExperimentConfig {
        simulation,
        pipeline: pipeline_config(ctx, &s.pipeline)?,
        reps: s.reps.or(ctx.file.reps).unwrap_or(default_reps),
        base_seed: ctx.seed,
        ..Default::default()
    })
}

fn finish_report(report: &ExperimentReport, out: Option<&Path>) -> Result<(), Error> {
    for g in report.groups() {
        let get = |m: &str| report.aggregate(&g, m, None).unwrap_or(f64::NAN);
        println!("[{g}]");
        println!(
            "repetitions: {}, failed: {} ({:.2}%), mean bins: {:.1}",
            get("repetitions"),
            get("failures"),
            100.0 * get("failure_rate"),
            get("mean_bins")
        );
        match report.kind {
            ExperimentKind::Coverage => print!("{}", report.coverage_table(&g)),
            ExperimentKind::ErrorCurve => println!(
                "mean relative l2 error: binagg {:.6}, ols {:.6}",
                get("mean_rel_l2_error"),
                get("mean_ols_rel_l2_error")
            ),
        }
    }
    if let Some(prefix) = out {
        report.write_files(prefix)?;
    }
    Ok(())
}

fn study(ctx: &Context, a: &SimulateArgs) -> Result<(), Error> {
    let s = &a.study;
    match a.report {
        ReportKind::Dataset => {
            let cfg = experiment_config(ctx, s, 1)?;
            let mut rng = RandomSource::new(ctx.seed, 0);
            let data = simulate_dataset(&cfg.simulation, &mut rng)?;
            let write = |w: &mut dyn Write| -> Result<(), Error> {
                let mut w = csv::Writer::from_writer(w);
                let mut header: Vec<String> = (1..=s.d).map(|j| format!("x_{j}")).collect();
                header.push("y".into());
                w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
                for r in 0..data.y.len() {
                    let mut row: Vec<String> = data.x.row(r).iter().map(|v| v.to_string()).collect();
                    row.push(data.y[r].to_string());
                    w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
                }
                w.flush()?;
                Ok(())
            };
            let beta: Vec<String> = data.beta.iter().map(|b| format!("{b:.6}")).collect();
            eprintln!("true beta: {}; clipped labels: {}", beta.join(", "), data.clipped);
            match &s.out {
                Some(p) => write(&mut std::fs::File::create(p)?),
                None => write(&mut std::io::stdout().lock()),
            }
        }
        ReportKind::Coverage | ReportKind::ErrorCurve => {
            let (kind, default_reps) = match a.report {
                ReportKind::Coverage => (ExperimentKind::Coverage, 2000),
                _ => (ExperimentKind::ErrorCurve, 100),
            };
            let mut cfg = experiment_config(ctx, s, default_reps)?;
            if !a.n_grid.is_empty() {
                cfg.n_grid = a.n_grid.clone();
            }
            cfg.bound_inflation = a.inflate;
            print_budget(&cfg.pipeline.budgets()?, None)?;
            let report = if a.sweep_theta.is_empty() && a.sweep_ratios.is_empty() {
                match kind {
                    ExperimentKind::Coverage => experiments::coverage_experiment(&cfg)?,
                    ExperimentKind::ErrorCurve => experiments::error_curve_experiment(&cfg)?,
                }
            } else {
                experiments::sweep(&cfg, kind, &a.sweep_theta, &a.sweep_ratios)?
            };
            finish_report(&report, s.out.as_deref())
        }
    }
}

fn equivalence(ctx: &Context, s: &StudyArgs) -> Result<(), Error> {
    let cfg = experiment_config(ctx, s, 5000)?;
    print_budget(&cfg.pipeline.budgets()?, None)?;
    let report: EquivalenceReport = experiments::equivalence_experiment(&cfg)?;
    let failed = report.checks.iter().filter(|c| !c.passed()).count();
    let worst_z = report.checks.iter().map(|c| c.mean_z.abs()).fold(0.0, f64::max);
    let worst_var = report
        .checks
        .iter()
        .map(|c| (c.var_ratio - 1.0).abs())
        .fold(0.0, f64::max);
    let worst_ks = report
        .checks
        .iter()
        .map(|c| c.ks_statistic / c.ks_critical)
        .fold(0.0, f64::max);
    println!(
        "bins: {}, seeds: {}, checks: {}, failed at 1% each: {}, family verdict (Bonferroni 1%): {}",
        report.bins,
        report.seeds,
        report.checks.len(),
        failed,
        if report.family_passed(0.01) { "pass" } else { "fail" }
    );
    println!(
        "max |mean z|: {worst_z:.3}, max |variance ratio - 1|: {worst_var:.4}, max KS / critical: {worst_ks:.3}"
    );
    if let Some(prefix) = &s.out {
        report.write_files(prefix)?;
    }
    Ok(())
}

fn convert(a: &ConvertArgs) -> Result<(), Error> {
    if let Some(eps) = a.pure_epsilon {
        let mu = gdp::pure_dp_to_gdp(eps)?;
        println!("mu = {:.10}", mu.value());
        return Ok(());
    }
    let mu = GdpBudget::new(
        a.mu
            .ok_or_else(|| Error::InvalidArgument("--mu or --pure-epsilon is required".into()))?,
    )?;
    match (a.epsilon, a.delta) {
        (Some(eps), None) => {
            let p = gdp::gdp_to_approx_dp(mu, eps)?;
            println!("epsilon = {}", p.epsilon);
            println!("delta = {:.10}", p.delta);
        }
        (None, Some(delta)) => {
            println!("epsilon = {:.10}", gdp::gdp_to_epsilon(mu, delta)?);
            println!("delta = {delta}");
        }
        (None, None) => {
            println!("pure epsilon = {:.10}", gdp::gdp_to_pure_dp(mu));
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument("give --epsilon or --delta, not both".into()))
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file.seed_or_env()?,
    };
    let ctx = Context { file, seed };
    match &cli.command {
        Command::Fit(a) => fit(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Simulate(a) => study(&ctx, a),
        Command::Coverage(s) => {
            let cfg = experiment_config(&ctx, s, 2000)?;
            print_budget(&cfg.pipeline.budgets()?, None)?;
            finish_report(&experiments::coverage_experiment(&cfg)?, s.out.as_deref())
        }
        Command::Equivalence(s) => equivalence(&ctx, s),
        Command::ConvertBudget(a) => convert(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
