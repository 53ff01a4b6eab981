//! `ellsmooth` command-line tool: solver runs, comparisons, rate tables,
//! stochastic runs and the inequality checks.

mod experiment;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ellsmooth::problems::norm;
use ellsmooth::sgd::min_true_grad_sq;
use ellsmooth::verify::{check_certificate, check_gradient, check_lemma1, check_lemma2, check_optimality_sampled, check_trajectory};
use ellsmooth::{
    rate, sgd_rate, sgd_solve, solve, CheckReport, EllModel, Error, RateQuery, Setting, SgdConfig, Status, StepRule,
    StochasticOracle, Trace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use experiment::{parse_ell, parse_point, parse_problem, preset, read_json_arg, ExperimentSpec, Stopping, Summary};

#[derive(Parser)]
#[command(name = "ellsmooth", version, about = "Gradient descent under generalized smoothness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Problem: builtin name, inline JSON such as '{"name":"exp_drift","mu":0.1}', or a JSON file.
    #[arg(long)]
    problem: Option<String>,
    /// ell model: "certified" or a descriptor such as '{"family":"affine","L0":3.3,"L1":1}'.
    #[arg(long, default_value = "certified")]
    ell: String,
    /// Starting point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// integral, lower-bound, fixed-initial, fixed:<gamma> or scaled:<divisor>.
    #[arg(long, default_value = "integral")]
    rule: String,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Halve steps whose endpoint leaves the domain.
    #[arg(long)]
    safeguard: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Nonconvex,
    Convex,
    Sgd,
}

#[derive(Subcommand)]
enum Command {
    /// Run gradient descent and write the trace as CSV.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Experiment spec JSON (inline or file); replaces the run flags.
        #[arg(long)]
        spec: Option<String>,
        /// Trace CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run several specs on one problem and tabulate the outcomes.
    Compare {
        /// Experiment spec JSON (inline or file); repeat, or pass a JSON array.
        #[arg(long)]
        spec: Vec<String>,
        /// Built-in comparison: log_barrier or exp_sum.
        #[arg(long)]
        preset: Option<String>,
        /// JSON table destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iteration bounds for a given ell model.
    Rates {
        #[arg(long, value_enum)]
        setting: SettingArg,
        #[arg(long)]
        ell: String,
        #[arg(long)]
        epsilon: f64,
        /// f(x0) - f*.
        #[arg(long)]
        gap: Option<f64>,
        /// ‖x0 - x*‖.
        #[arg(long)]
        radius: Option<f64>,
        /// Uniform bound on ‖∇f‖.
        #[arg(long)]
        grad_bound: Option<f64>,
        /// ‖∇f(x0)‖.
        #[arg(long)]
        grad0: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Mini-batch stochastic gradient descent.
    Sgd {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "certified")]
        ell: String,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Iteration count T; defaults to the rate bound when f* is known.
        #[arg(long)]
        big_t: Option<usize>,
        #[arg(long)]
        batch: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run seeds seed..seed+n and report the success rate.
        #[arg(long)]
        seeds: Option<u64>,
        /// Trace CSV destination (single seed only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the smoothness inequalities on a problem, or check a trace.
    Verify {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "certified")]
        ell: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace CSV produced by `solve --rule integral`; checked instead of sampling.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also run the first check with a constant model at ℓ(0), which should fail.
        #[arg(long)]
        negative_control: bool,
        #[arg(long)]
        json: bool,
    },
}

/// Malformed input; exits with code 2.
#[derive(Debug)]
struct SpecError(String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SpecError {}

fn spec_err(e: impl fmt::Display) -> anyhow::Error {
    SpecError(e.to_string()).into()
}

/// Errors from the library that reflect bad input rather than a failed run.
fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Domain(_)
            | Error::InvalidParameter(_)
            | Error::InvalidModel(_)
            | Error::UnknownProblem(_)
            | Error::OutsideDomain
            | Error::DimensionMismatch { .. }
            | Error::MissingCertificate
            | Error::MissingConstant(_)
            | Error::NotApplicable(_)
            | Error::InfiniteRatio
            | Error::Format(_)
    )
}

fn lib_err(e: Error) -> anyhow::Error {
    if is_input_error(&e) {
        spec_err(e)
    } else {
        e.into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SpecError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Solve { run, spec, out, json } => cmd_solve(run, spec, out, json),
        Command::Compare { spec, preset, out } => cmd_compare(spec, preset, out),
        Command::Rates { setting, ell, epsilon, gap, radius, grad_bound, grad0, sigma, delta, json } => {
            let model: EllModel = serde_json::from_value(read_json_arg(&ell).map_err(spec_err)?).map_err(spec_err)?;
            let setting = match setting {
                SettingArg::Nonconvex => Setting::Nonconvex,
                SettingArg::Convex => Setting::Convex,
                SettingArg::Sgd => Setting::SgdNonconvex,
            };
            let mut q = RateQuery::new(setting, model, epsilon);
            q.gap = gap;
            q.radius = radius;
            q.grad_bound = grad_bound;
            q.grad0 = grad0;
            q.sigma = sigma;
            q.delta = delta;
            cmd_rates(&q, json)
        }
        Command::Sgd { problem, ell, x0, sigma, epsilon, delta, big_t, batch, seed, seeds, out } => {
            let args = SgdArgs { problem, ell, x0, sigma, epsilon, delta, big_t, batch, seed, seeds, out };
            cmd_sgd(args)
        }
        Command::Verify { problem, ell, samples, seed, trace, negative_control, json } => {
            cmd_verify(&problem, &ell, samples, seed, trace.as_deref(), negative_control, json)
        }
    }
}

fn spec_from_flags(run: RunArgs, out: Option<PathBuf>) -> Result<ExperimentSpec> {
    let problem = run.problem.ok_or_else(|| spec_err("--problem is required without --spec"))?;
    let x0 = run.x0.ok_or_else(|| spec_err("--x0 is required without --spec"))?;
    Ok(ExperimentSpec {
        problem: parse_problem(&problem).map_err(spec_err)?,
        ell: parse_ell(&run.ell).map_err(spec_err)?,
        x0: parse_point(&x0).map_err(spec_err)?,
        rule: run.rule,
        stopping: Stopping { gap_tol: run.gap_tol, grad_tol: run.grad_tol, max_iters: run.max_iters },
        safeguard: run.safeguard,
        output: out,
        label: None,
    })
}

fn load_specs(arg: &str) -> Result<Vec<ExperimentSpec>> {
    let v = read_json_arg(arg).map_err(spec_err)?;
    if v.is_array() {
        serde_json::from_value(v).map_err(spec_err)
    } else {
        Ok(vec![serde_json::from_value(v).map_err(spec_err)?])
    }
}

fn run_spec(spec: &ExperimentSpec) -> Result<(Summary, Trace)> {
    let r = spec.resolve().map_err(|e| match e.downcast::<Error>() {
        Ok(le) => lib_err(le),
        Err(other) => spec_err(format!("{other:#}")),
    })?;
    let trace = solve(&r.problem, &r.x0, &r.config).map_err(lib_err)?;
    if let Some(path) = &r.output {
        write_trace(&trace, path)?;
    }
    Ok((Summary::of(&r.label, &trace), trace))
}

fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    trace.write_csv(BufWriter::new(file))?;
    Ok(())
}

fn cmd_solve(run: RunArgs, spec: Option<String>, out: Option<PathBuf>, json: bool) -> Result<ExitCode> {
    let mut spec = match spec {
        Some(s) => {
            let mut specs = load_specs(&s)?;
            if specs.len() != 1 {
                return Err(spec_err("solve takes exactly one spec"));
            }
            specs.remove(0)
        }
        None => spec_from_flags(run, None)?,
    };
    if out.is_some() {
        spec.output = out;
    }
    let (summary, _) = run_spec(&spec)?;
    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!("{} {} {:.12e} {:.6e}", summary.status, summary.iterations, summary.f_final, summary.grad_final);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(specs: Vec<String>, preset_name: Option<String>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut all = Vec::new();
    if let Some(name) = preset_name {
        all.extend(preset(&name).map_err(spec_err)?);
    }
    for s in &specs {
        all.extend(load_specs(s)?);
    }
    if all.len() < 2 {
        return Err(spec_err("compare needs at least two specs"));
    }
    if all.iter().any(|s| s.problem != all[0].problem) {
        return Err(spec_err("all specs in a comparison must use the same problem"));
    }
    let rows: Vec<Summary> = all.par_iter().map(|s| run_spec(s).map(|(summary, _)| summary)).collect::<Result<_>>()?;

    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    println!("{:<width$}  {:<14} {:>10} {:>22} {:>14}", "rule", "status", "iterations", "f_final", "grad_final");
    for r in &rows {
        println!("{:<width$}  {:<14} {:>10} {:>22.12e} {:>14.6e}", r.label, r.status, r.iterations, r.f_final, r.grad_final);
    }
    let table = serde_json::json!({ "problem": all[0].problem, "rows": rows });
    match out {
        Some(path) => serde_json::to_writer_pretty(File::create(&path)?, &table)?,
        None => println!("{}", serde_json::to_string(&table)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_rates(q: &RateQuery, json: bool) -> Result<ExitCode> {
    let report = rate(q).map_err(lib_err)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(ExitCode::SUCCESS);
    }
    println!("model      {}", q.model);
    println!("iterations {:.6e}  ({})", report.iterations, report.formula_id);
    if let Some(e) = report.explicit_iterations {
        println!("explicit   {e:.6e}");
    }
    if let (Some(b), Some(n)) = (report.batch, report.total_samples) {
        println!("batch      {b}");
        println!("samples    {n:.6e}");
    }
    for b in &report.branches {
        let kind = if b.explicit { "explicit" } else { "up to constants" };
        println!("  {:<36} {:>14.6e}  {kind}", b.id, b.value);
        for t in &b.terms {
            println!("    {:<50} {:>14.6e}", t.name, t.value);
        }
    }
    for n in &report.applicability_notes {
        println!("note: {n}");
    }
    Ok(ExitCode::SUCCESS)
}

struct SgdArgs {
    problem: String,
    ell: String,
    x0: String,
    sigma: f64,
    epsilon: f64,
    delta: f64,
    big_t: Option<usize>,
    batch: Option<u64>,
    seed: u64,
    seeds: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SgdSummary {
    seeds: u64,
    iterations: usize,
    batch: u64,
    successes: u64,
    success_rate: f64,
}

fn explicit_ell(arg: &str) -> Result<Option<EllModel>> {
    match parse_ell(arg).map_err(spec_err)? {
        serde_json::Value::String(s) if s == "certified" => Ok(None),
        v => Ok(Some(serde_json::from_value(v).map_err(spec_err)?)),
    }
}

fn cmd_sgd(a: SgdArgs) -> Result<ExitCode> {
    let problem = parse_problem(&a.problem).map_err(spec_err)?.build().map_err(lib_err)?;
    let x0 = parse_point(&a.x0).map_err(spec_err)?;
    problem.check_dim(&x0).map_err(lib_err)?;
    let ell = explicit_ell(&a.ell)?;
    let model = ell.clone().or_else(|| problem.certified_ell.clone()).ok_or_else(|| lib_err(Error::MissingCertificate))?;
    let r = model.doubling_ratio().map_err(lib_err)?;
    if !r.is_finite() {
        return Err(spec_err(format!(
            "{model} has sup l(2s)/l(s) = infinity, so the step gamma(|g|)/(5r) is undefined"
        )));
    }
    let iterations = match a.big_t {
        Some(t) => t,
        None => {
            let f_star = problem.f_star.ok_or_else(|| spec_err("--big-t is required when f* is unknown"))?;
            let q = RateQuery::new(Setting::SgdNonconvex, model.clone(), a.epsilon)
                .gap(problem.value(&x0) - f_star)
                .noise(a.sigma, a.delta);
            sgd_rate(&q).map_err(lib_err)?.iterations.ceil().max(1.0) as usize
        }
    };
    let mut cfg = SgdConfig::new(a.epsilon, a.delta, iterations);
    cfg.batch_override = a.batch;
    cfg.ell = ell;

    let run_seed = |seed: u64| -> Result<Trace> {
        let mut oracle = StochasticOracle::new(problem.clone(), a.sigma, seed).map_err(lib_err)?;
        sgd_solve(&mut oracle, &x0, &cfg).map_err(lib_err)
    };

    match a.seeds {
        None => {
            let trace = run_seed(a.seed)?;
            if let Some(path) = &a.out {
                write_trace(&trace, path)?;
            }
            let last = trace.last();
            println!(
                "{}",
                serde_json::json!({
                    "status": trace.status.as_str(),
                    "iterations": trace.iterations(),
                    "batch": last.batch,
                    "f_final": last.f_val,
                    "grad_final": norm(&problem.gradient(&last.x).unwrap_or_default()),
                    "min_grad_sq": min_true_grad_sq(&trace),
                })
            );
        }
        Some(n) => {
            if n == 0 {
                return Err(spec_err("--seeds must be >= 1"));
            }
            let hits: Vec<bool> = (a.seed..a.seed + n)
                .into_par_iter()
                .map(|s| run_seed(s).map(|t| min_true_grad_sq(&t) <= a.epsilon))
                .collect::<Result<_>>()?;
            let successes = hits.iter().filter(|&&h| h).count() as u64;
            let batch = a.batch.unwrap_or_else(|| ellsmooth::batch_size(a.sigma, a.epsilon, iterations, a.delta));
            let summary =
                SgdSummary { seeds: n, iterations, batch, successes, success_rate: successes as f64 / n as f64 };
            println!("{}", serde_json::to_string(&summary)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    #[serde(flatten)]
    report: &'a CheckReport,
    negative_control: bool,
}

fn cmd_verify(
    problem_arg: &str,
    ell_arg: &str,
    samples: usize,
    seed: u64,
    trace_path: Option<&Path>,
    negative_control: bool,
    json: bool,
) -> Result<ExitCode> {
    let mut problem = parse_problem(problem_arg).map_err(spec_err)?.build().map_err(lib_err)?;
    if let Some(m) = explicit_ell(ell_arg)? {
        problem = problem.with_certificate(m);
    }
    let mut reports: Vec<(CheckReport, bool)> = Vec::new();
    match trace_path {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(spec_err)?;
            let ell = problem.certified_ell.clone();
            let trace = Trace::read_csv(file, StepRule::PaperIntegral, ell, Status::MaxIters).map_err(lib_err)?;
            for r in check_trajectory(&trace, &problem).map_err(lib_err)? {
                reports.push((r, false));
            }
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            reports.push((check_gradient(&problem, samples, &mut rng).map_err(lib_err)?, false));
            if problem.certified_ell.is_none() {
                bail!(spec_err(format!("{} has no certified ell; pass --ell", problem.name)));
            }
            reports.push((check_certificate(&problem, samples, &mut rng).map_err(lib_err)?, false));
            reports.push((check_lemma1(&problem, samples, &mut rng).map_err(lib_err)?, false));
            reports.push((check_lemma2(&problem, samples, &mut rng).map_err(lib_err)?, false));
            let points = (samples / 20).max(1);
            reports.push((check_optimality_sampled(&problem, points, 20, &mut rng).map_err(lib_err)?, false));
            if negative_control {
                let l0 = problem.certified_ell.as_ref().map(|m| m.at_zero()).unwrap_or(1.0);
                let wrong = problem.clone().with_certificate(EllModel::constant(l0).map_err(lib_err)?);
                let mut r = check_lemma1(&wrong, samples, &mut rng).map_err(lib_err)?;
                r.check_id = format!("negative_control_{}", r.check_id);
                reports.push((r, true));
            }
        }
    }

    let failed = reports.iter().any(|(r, control)| !control && !r.passed());
    if json {
        let rows: Vec<VerifyRow> = reports.iter().map(|(r, c)| VerifyRow { report: r, negative_control: *c }).collect();
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        let stdout = std::io::stdout();
        let mut w = stdout.lock();
        for (r, control) in &reports {
            let verdict = match (control, r.passed()) {
                (false, true) => "ok",
                (false, false) => "VIOLATED",
                (true, false) => "ok (control caught)",
                (true, true) => "control not caught",
            };
            writeln!(w, "{:<40} {:>7} samples {:>6} violations  worst {:+.3e}  {verdict}", r.check_id, r.samples, r.violations, r.worst_margin)?;
        }
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
