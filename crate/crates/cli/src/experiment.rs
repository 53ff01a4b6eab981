//! Experiment specifications: JSON or flags resolved to a problem and solver
//! configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ellsmooth::{EllModel, Problem, ProblemDescriptor, SolverConfig, StepRule, Trace};
use serde::{Deserialize, Serialize};

/// Default iteration cap. Large enough to show the fixed-step baseline
/// stalling past 20 000 iterations.
pub const DEFAULT_MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stopping {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemDescriptor,
    /// `"certified"` or an ell descriptor object.
    #[serde(default = "certified")]
    pub ell: serde_json::Value,
    pub x0: Vec<f64>,
    #[serde(default = "integral_rule")]
    pub rule: String,
    #[serde(default)]
    pub stopping: Stopping,
    #[serde(default)]
    pub safeguard: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Row label in comparisons; defaults to the rule and ell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn certified() -> serde_json::Value {
    serde_json::Value::String("certified".into())
}

fn integral_rule() -> String {
    "integral".into()
}

/// Reads a JSON argument given inline or as a file path.
pub fn read_json_arg(arg: &str) -> Result<serde_json::Value> {
    let text = if arg.trim_start().starts_with(['{', '[', '"']) {
        arg.to_string()
    } else {
        fs::read_to_string(Path::new(arg)).with_context(|| format!("cannot read {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {arg}"))
}

/// A problem argument: inline JSON, a JSON file, or a bare builtin name.
pub fn parse_problem(arg: &str) -> Result<ProblemDescriptor> {
    if !arg.trim_start().starts_with('{') && !Path::new(arg).exists() {
        return Ok(ProblemDescriptor { name: arg.to_string(), params: Default::default() });
    }
    Ok(serde_json::from_value(read_json_arg(arg)?)?)
}

/// An ell argument: `certified`, inline JSON or a JSON file.
pub fn parse_ell(arg: &str) -> Result<serde_json::Value> {
    if arg == "certified" {
        return Ok(certified());
    }
    read_json_arg(arg)
}

pub fn parse_point(arg: &str) -> Result<Vec<f64>> {
    arg.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad coordinate '{s}' in --x0")))
        .collect()
}

fn resolve_ell(v: &serde_json::Value) -> Result<Option<EllModel>> {
    match v {
        serde_json::Value::String(s) if s == "certified" => Ok(None),
        serde_json::Value::Null => Ok(None),
        other => Ok(Some(serde_json::from_value(other.clone()).context("invalid ell descriptor")?)),
    }
}

/// Rule names: `integral`, `lower-bound`, `fixed-initial` (`1/ℓ(2‖∇f(x0)‖)`),
/// `fixed:<gamma>` and `scaled:<divisor>`.
pub fn parse_rule(name: &str, ell: Option<&EllModel>, problem: &Problem, x0: &[f64]) -> Result<StepRule> {
    let number = |s: &str| s.parse::<f64>().with_context(|| format!("bad number in rule '{name}'"));
    Ok(match name {
        "integral" => StepRule::PaperIntegral,
        "lower-bound" => StepRule::LowerBound,
        "fixed-initial" => {
            let m = ell.ok_or_else(|| anyhow!("rule fixed-initial needs an ell model"))?;
            let g0 = ellsmooth::problems::norm(&problem.gradient(x0)?);
            StepRule::FixedStep(1.0 / m.value(2.0 * g0))
        }
        _ => match name.split_once(':') {
            Some(("fixed", v)) => StepRule::FixedStep(number(v)?),
            Some(("scaled", v)) => StepRule::ScaledIntegral { divisor: number(v)? },
            _ => bail!("unknown rule '{name}' (expected integral, lower-bound, fixed-initial, fixed:<gamma> or scaled:<divisor>)"),
        },
    })
}

pub struct Resolved {
    pub problem: Problem,
    pub x0: Vec<f64>,
    pub config: SolverConfig,
    pub label: String,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn resolve(&self) -> Result<Resolved> {
        let problem = self.problem.build()?;
        problem.check_dim(&self.x0)?;
        if !problem.contains(&self.x0) {
            bail!("x0 lies outside the domain of {}", problem.name);
        }
        let ell = resolve_ell(&self.ell)?;
        let effective = ell.clone().or_else(|| problem.certified_ell.clone());
        let rule = parse_rule(&self.rule, effective.as_ref(), &problem, &self.x0)?;
        let max_iters = self.stopping.max_iters.unwrap_or(DEFAULT_MAX_ITERS);
        let mut config = SolverConfig::new(rule, max_iters).safeguard(self.safeguard);
        config.f_gap_tol = self.stopping.gap_tol;
        config.grad_tol = self.stopping.grad_tol;
        config.ell = ell;
        let label = self.label.clone().unwrap_or_else(|| match (&effective, rule) {
            (_, StepRule::FixedStep(g)) => format!("fixed step {g:.6e}"),
            (Some(m), _) => format!("{} with {m}", self.rule),
            (None, _) => self.rule.clone(),
        });
        Ok(Resolved { problem, x0: self.x0.clone(), config, label, output: self.output.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub label: String,
    pub status: String,
    pub iterations: usize,
    pub f_final: f64,
    pub grad_final: f64,
}

impl Summary {
    pub fn of(label: &str, t: &Trace) -> Self {
        let last = t.last();
        Self {
            label: label.to_string(),
            status: t.status.as_str().to_string(),
            iterations: t.iterations(),
            f_final: last.f_val,
            grad_final: last.grad_norm,
        }
    }
}

fn spec(problem: &str, ell: serde_json::Value, x0: f64, rule: &str, gap_tol: f64, max_iters: usize) -> ExperimentSpec {
    ExperimentSpec {
        problem: ProblemDescriptor { name: problem.into(), params: Default::default() },
        ell,
        x0: vec![x0],
        rule: rule.into(),
        stopping: Stopping { gap_tol: Some(gap_tol), grad_tol: None, max_iters: Some(max_iters) },
        safeguard: false,
        output: None,
        label: None,
    }
}

/// The two benchmark comparisons on the log barrier and the exponential sum.
pub fn preset(name: &str) -> Result<Vec<ExperimentSpec>> {
    let j = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap();
    Ok(match name {
        "log_barrier" => vec![
            spec("log_barrier", certified(), 1e-7, "integral", 1e-5, DEFAULT_MAX_ITERS),
            spec("log_barrier", certified(), 1e-7, "fixed-initial", 1e-5, DEFAULT_MAX_ITERS),
            spec("log_barrier", j(r#"{"family":"affine","L0":800,"L1":2}"#), 1e-7, "integral", 1e-5, DEFAULT_MAX_ITERS),
        ],
        "exp_sum" => vec![
            spec("exp_sum", certified(), 0.0, "integral", 1e-5, DEFAULT_MAX_ITERS),
            spec("exp_sum", j(r#"{"family":"power","rho":2,"L0":3.3,"L1":1}"#), 0.0, "integral", 1e-5, DEFAULT_MAX_ITERS),
            spec("exp_sum", certified(), 0.0, "fixed-initial", 1e-5, DEFAULT_MAX_ITERS),
        ],
        other => bail!("unknown preset '{other}' (expected log_barrier or exp_sum)"),
    })
}
