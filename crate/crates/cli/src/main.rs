use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use shblab::harness::{
    self, emit_plot, preset, AggregateResult, Baseline, BatchSpec, ExperimentConfig, ExperimentResult, Method,
    Preset, ProblemSpec,
};
use shblab::lowerbound::{fit_threshold, min_psi, PsiModel};
use shblab::multistage::{batch_threshold, critical_t_range, plan_stages};
use shblab::problems::{generate_diagonal_lb, generate_feasible_system, generate_regression};

const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "shblab", version, about = "Stochastic heavy-ball experiments on quadratics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a problem and save it as text
    Gen(GenArgs),
    /// Run one experiment from flags or a config file
    Run(RunArgs),
    /// Print the multi-stage plan for a horizon and condition number
    Plan(PlanArgs),
    /// Norm-growth analysis and the batch-threshold regression
    Lowerbound(LowerboundArgs),
    /// Plot aggregate CSV files as SVG
    Plot(PlotArgs),
    /// Run (or list) a named preset
    Preset(PresetArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Regression,
    Feasible,
    Diagonal,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, value_enum, default_value = "regression")]
    kind: Kind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 100.0)]
    kappa: f64,
    /// Variance r of the additive Gaussian target noise
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Seed of the problem generator
    #[arg(long, default_value_t = 0)]
    problem_seed: u64,
    /// Load the problem from a file instead of generating it
    #[arg(long)]
    problem_file: Option<PathBuf>,
}

impl ProblemArgs {
    fn spec(&self) -> ProblemSpec {
        if let Some(path) = &self.problem_file {
            return ProblemSpec::File(path.clone());
        }
        match self.kind {
            Kind::Regression => ProblemSpec::Regression {
                n: self.n,
                d: self.d,
                kappa: self.kappa,
                noise: self.noise,
                seed: self.problem_seed,
            },
            Kind::Feasible => ProblemSpec::Feasible { n: self.n, d: self.d, kappa: self.kappa, seed: self.problem_seed },
            Kind::Diagonal => ProblemSpec::Diagonal { n: self.n, kappa: self.kappa },
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "regression")]
    kind: Kind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 100.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Read the experiment from a `key = value` file; other flags are ignored
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Method spec, e.g. `shb-const(a=0.5)`; repeat or comma-separate for several
    #[arg(long, default_value = "shb-const")]
    method: Vec<String>,
    /// Step fraction for a bare `shb-const`
    #[arg(long)]
    a: Option<f64>,
    /// tau for a bare `shb-exp`
    #[arg(long)]
    tau: Option<f64>,
    /// Phase split c for a bare `twophase`
    #[arg(long)]
    phase_split: Option<f64>,
    /// Integer batch size or a fraction of n such as 0.9
    #[arg(long, default_value = "0.9")]
    batch: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, alias = "seed", value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.0)]
    w0: f64,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long, default_value = "run")]
    name: String,
    /// Output directory for CSV files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG of the aggregates into the output directory
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    iters: usize,
    #[arg(long)]
    kappa: f64,
    /// Smoothness; the strong-convexity constant is L/kappa
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Sample count, to report the batch threshold and horizon range
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Batch sizes to fit over (default 5, 10, ..., 95)
    #[arg(long, value_delimiter = ',')]
    b_values: Vec<usize>,
    #[arg(long, default_value_t = 2048)]
    grid: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Only report the two-sample minimum for this momentum
    #[arg(long)]
    beta: Option<f64>,
    /// Write the per-batch CSV here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate CSV files; the label is the parent directory name
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    kappa: f64,
    /// Comma-separated baselines: kap, sqrt-kap
    #[arg(long, value_delimiter = ',', default_value = "kap,sqrt-kap")]
    baseline: Vec<String>,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name; omit with --list
    name: Option<String>,
    #[arg(long)]
    list: bool,
    /// Print the configs without running them
    #[arg(long)]
    dry_run: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.chain().any(|c| c.downcast_ref::<shblab::Error>().is_some_and(shblab::Error::is_config_error));
            ExitCode::from(if config { EXIT_CONFIG } else { 1 })
        }
    }
}

fn dispatch(cmd: Cmd) -> anyhow::Result<ExitCode> {
    match cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Run(a) => run(a),
        Cmd::Plan(a) => plan(a),
        Cmd::Lowerbound(a) => lowerbound(a),
        Cmd::Plot(a) => plot(a),
        Cmd::Preset(a) => run_preset(a),
    }
}

fn gen(a: GenArgs) -> anyhow::Result<ExitCode> {
    let p = match a.kind {
        Kind::Regression => generate_regression(a.n, a.d, a.kappa, a.noise, a.seed)?,
        Kind::Feasible => generate_feasible_system(a.n, a.d, a.kappa, a.seed)?,
        Kind::Diagonal => generate_diagonal_lb(a.n, a.kappa)?,
    };
    p.save(&a.out)?;
    println!(
        "wrote {} problem n={} d={} L={:.6e} mu={:.6e} kappa={:.6} to {}",
        p.kind().as_str(),
        p.n(),
        p.d(),
        p.smoothness(),
        p.strong_convexity(),
        p.kappa(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Applies `--a`, `--tau` and `--phase-split` to bare method names.
fn method_with_overrides(spec: &str, a: &RunArgs) -> anyhow::Result<Method> {
    let mut m: Method = spec.parse()?;
    if !spec.contains('(') {
        match &mut m {
            Method::ShbConst { a: x } => *x = a.a.unwrap_or(*x),
            Method::ShbExp { tau, .. } => *tau = a.tau.unwrap_or(*tau),
            Method::TwoPhase { c } => *c = a.phase_split.unwrap_or(*c),
            _ => {}
        }
    }
    m.validate()?;
    Ok(m)
}

fn run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg = ExperimentConfig::from_text(&text)?;
            if a.out.is_some() {
                cfg.output_dir = a.out.clone();
            }
            cfg
        }
        None => {
            let methods = a
                .method
                .iter()
                .flat_map(|m| split_methods(m))
                .map(|m| method_with_overrides(&m, &a))
                .collect::<anyhow::Result<Vec<_>>>()?;
            ExperimentConfig {
                name: a.name.clone(),
                problem: a.problem.spec(),
                methods,
                batch: a.batch.parse::<BatchSpec>()?,
                horizon: a.iters,
                seeds: a.seeds.clone(),
                record_every: a.record_every,
                w0: a.w0,
                output_dir: a.out.clone(),
            }
        }
    };
    let res = harness::run_experiment(&cfg)?;
    report(&res);
    if a.plot {
        if let Some(dir) = &cfg.output_dir {
            write_plot(&res, &dir.join(&cfg.name).join("plot.svg"))?;
        }
    }
    Ok(exit_for(&res))
}

/// Splits a comma-separated method list, keeping commas inside parentheses.
fn split_methods(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let (mut depth, mut cur) = (0, String::new());
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.into_iter().map(|m| m.trim().to_string()).filter(|m| !m.is_empty()).collect()
}

fn report(res: &ExperimentResult) {
    println!("# {} (kappa = {:.4})", res.name, res.kappa);
    println!("{:<40} {:>14} {:>14} {:>9}", "method", "initial", "final", "diverged");
    for (agg, runs) in res.aggregates.iter().zip(&res.trajectories) {
        println!(
            "{:<40} {:>14.6e} {:>14.6e} {:>6}/{}",
            agg.label,
            agg.initial_grad_norm(),
            agg.final_grad_norm(),
            agg.n_diverged(),
            runs.len()
        );
    }
}

fn exit_for(res: &ExperimentResult) -> ExitCode {
    if res.all_diverged() {
        eprintln!("all runs diverged");
        ExitCode::from(EXIT_ALL_DIVERGED)
    } else {
        ExitCode::SUCCESS
    }
}

fn write_plot(res: &ExperimentResult, path: &Path) -> anyhow::Result<()> {
    emit_plot(&res.aggregates, &[Baseline::Kap, Baseline::SqrtKap], res.kappa, &res.name, path)?;
    println!("plot: {}", path.display());
    Ok(())
}

fn plan(a: PlanArgs) -> anyhow::Result<ExitCode> {
    if !(a.kappa >= 1.0) {
        return Err(shblab::Error::InvalidArgument(format!("kappa must be >= 1, got {}", a.kappa)).into());
    }
    let plan = plan_stages(a.iters, a.l, a.l / a.kappa)?;
    print!("{plan}");
    if let Some(n) = a.n {
        let b_star = batch_threshold(n, a.kappa, plan.final_a());
        println!("# batch threshold b* = {b_star:.3} (n = {n}, a_I = {})", plan.final_a());
        if let Some(b) = a.batch {
            let r = critical_t_range(n, b, a.kappa)?;
            let state = if r.is_empty() { "empty" } else { "non-empty" };
            println!("# horizon range for b = {b}: [{:.6e}, {:.6e}] ({state})", r.lo, r.hi);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn lowerbound(a: LowerboundArgs) -> anyhow::Result<ExitCode> {
    if let Some(beta) = a.beta {
        let (theta, v) = min_psi(&PsiModel::two_sample(beta), a.grid);
        println!("beta = {beta}: min psi = {v:.6} at theta = {theta:.6}");
        return Ok(ExitCode::SUCCESS);
    }
    let b_values = if a.b_values.is_empty() { (1..=19).map(|i| 5 * i).collect() } else { a.b_values.clone() };
    let fit = fit_threshold(a.n, &b_values, a.grid, a.tol)?;
    match &a.out {
        Some(path) => std::fs::write(path, fit.to_csv()).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", fit.to_csv()),
    }
    println!("# slope = {:.6}, intercept = {:.6}", fit.slope, fit.intercept);
    Ok(ExitCode::SUCCESS)
}

fn plot(a: PlotArgs) -> anyhow::Result<ExitCode> {
    let aggs = a
        .inputs
        .iter()
        .map(|p| {
            let label = p
                .parent()
                .and_then(Path::file_name)
                .or_else(|| p.file_stem())
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            AggregateResult::read_csv(label, p)
        })
        .collect::<shblab::Result<Vec<_>>>()?;
    let baselines = a
        .baseline
        .iter()
        .map(|b| match b.trim() {
            "kap" => Ok(Baseline::Kap),
            "sqrt-kap" => Ok(Baseline::SqrtKap),
            other => Err(shblab::Error::InvalidArgument(format!("unknown baseline `{other}`"))),
        })
        .collect::<shblab::Result<Vec<_>>>()?;
    emit_plot(&aggs, &baselines, a.kappa, &a.title, &a.out)?;
    println!("plot: {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_preset(a: PresetArgs) -> anyhow::Result<ExitCode> {
    let Some(name) = a.name.as_deref().filter(|_| !a.list) else {
        for n in harness::PRESET_NAMES {
            println!("{n}");
        }
        return Ok(ExitCode::SUCCESS);
    };
    match preset(name)? {
        Preset::LowerBound(job) => {
            if a.dry_run {
                println!("lowerbound n={} b={:?} grid={} tol={}", job.n, job.b_values, job.grid_size, job.tol);
                return Ok(ExitCode::SUCCESS);
            }
            std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let fit = fit_threshold(job.n, &job.b_values, job.grid_size, job.tol)?;
            let path = a.out.join("lowerbound_fit.csv");
            std::fs::write(&path, fit.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            println!("slope = {:.6}, intercept = {:.6} ({})", fit.slope, fit.intercept, path.display());
            Ok(ExitCode::SUCCESS)
        }
        Preset::Experiments(cfgs) => {
            if a.dry_run {
                for cfg in &cfgs {
                    println!("{}", cfg.to_text());
                }
                return Ok(ExitCode::SUCCESS);
            }
            let mut any_alive = false;
            for mut cfg in cfgs {
                cfg.output_dir = Some(a.out.clone());
                let res = harness::run_experiment(&cfg)?;
                report(&res);
                any_alive |= !res.all_diverged();
                if a.plot {
                    write_plot(&res, &a.out.join(&cfg.name).join("plot.svg"))?;
                }
            }
            if !any_alive {
                eprintln!("all runs diverged");
                return Ok(ExitCode::from(EXIT_ALL_DIVERGED));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
