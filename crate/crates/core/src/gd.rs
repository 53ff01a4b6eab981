//! Gradient descent with the q-function step size and baseline rules.

use crate::ell::EllModel;
use crate::error::{Error, Result};
use crate::problems::{norm, Problem};
use crate::qcalc::QEvaluator;
use crate::trace::{Record, Status, StepRule, Trace};

/// Gradient norms above this are treated as divergence.
pub const DIVERGENCE_GRAD: f64 = 1e150;

/// Maximum number of step halvings when the safeguard is on.
pub const SAFEGUARD_HALVINGS: u32 = 60;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `f - f_star ≤ tol`.
    pub f_gap_tol: Option<f64>,
    /// Stop when `‖∇f‖² ≤ tol`.
    pub grad_tol: Option<f64>,
    pub step_rule: StepRule,
    /// Halve a step whose endpoint has non-finite `f`.
    pub safeguard: bool,
    /// Overrides the problem's certificate.
    pub ell: Option<EllModel>,
}

impl SolverConfig {
    pub fn new(step_rule: StepRule, max_iters: usize) -> Self {
        Self { max_iters, f_gap_tol: None, grad_tol: None, step_rule, safeguard: false, ell: None }
    }

    pub fn gap_tol(mut self, tol: f64) -> Self {
        self.f_gap_tol = Some(tol);
        self
    }

    pub fn grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = Some(tol);
        self
    }

    pub fn with_ell(mut self, ell: EllModel) -> Self {
        self.ell = Some(ell);
        self
    }

    pub fn safeguard(mut self, on: bool) -> Self {
        self.safeguard = on;
        self
    }
}

fn positive_tol(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(t) if !(t.is_finite() && t > 0.0) => Err(Error::InvalidParameter(format!("{name} must be > 0, got {t}"))),
        _ => Ok(()),
    }
}

/// Step of the q-function rule at `x` together with the gradient there.
pub fn paper_step(problem: &Problem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let ell = problem.certified_ell.clone().ok_or(Error::MissingCertificate)?;
    let grad = problem.gradient(x)?;
    let gamma = QEvaluator::new(ell).optimal_step(norm(&grad))?;
    Ok((gamma, grad))
}

struct Stepper {
    rule: StepRule,
    q: Option<QEvaluator>,
}

impl Stepper {
    fn new(rule: StepRule, ell: Option<EllModel>) -> Result<Self> {
        match rule {
            StepRule::FixedStep(g) if !(g.is_finite() && g > 0.0) => {
                Err(Error::InvalidParameter(format!("fixed step must be > 0, got {g}")))
            }
            StepRule::ScaledIntegral { divisor } if !(divisor.is_finite() && divisor > 0.0) => {
                Err(Error::InvalidParameter(format!("divisor must be > 0, got {divisor}")))
            }
            StepRule::FixedStep(_) => Ok(Self { rule, q: None }),
            _ => Ok(Self { rule, q: Some(QEvaluator::new(ell.ok_or(Error::MissingCertificate)?)) }),
        }
    }

    fn step(&self, g: f64) -> Result<f64> {
        match (self.rule, &self.q) {
            (StepRule::FixedStep(gamma), _) => Ok(gamma),
            (StepRule::PaperIntegral, Some(q)) => q.optimal_step(g),
            (StepRule::LowerBound, Some(q)) => Ok(1.0 / q.model().value(2.0 * g)),
            (StepRule::ScaledIntegral { divisor }, Some(q)) => Ok(q.optimal_step(g)? / divisor),
            _ => unreachable!("model-based rules always carry an evaluator"),
        }
    }
}

/// Runs `x_{k+1} = x_k - γ_k ∇f(x_k)` from `x0`.
///
/// Stopping rules are checked at every iterate in the order gap, gradient,
/// iteration cap. The run is `Diverged` when `f` is not finite, the
/// gradient norm exceeds [`DIVERGENCE_GRAD`], or an iterate leaves the
/// domain; the offending iterate is recorded with `f = +∞`.
pub fn solve(problem: &Problem, x0: &[f64], cfg: &SolverConfig) -> Result<Trace> {
    problem.check_dim(x0)?;
    if !problem.contains(x0) {
        return Err(Error::OutsideDomain);
    }
    if !problem.value(x0).is_finite() {
        return Err(Error::Domain("f(x0) is not finite".into()));
    }
    positive_tol("f_gap_tol", cfg.f_gap_tol)?;
    positive_tol("grad_tol", cfg.grad_tol)?;
    let gap_target = match cfg.f_gap_tol {
        Some(tol) => Some(
            problem
                .f_star
                .map(|fs| fs + tol)
                .ok_or_else(|| Error::InvalidParameter(format!("gap tolerance needs f_star, unknown for {}", problem.name)))?,
        ),
        None => None,
    };
    let ell = cfg.ell.clone().or_else(|| problem.certified_ell.clone());
    let rule_ell = match cfg.step_rule {
        StepRule::FixedStep(_) => None,
        _ => ell.clone(),
    };
    let stepper = Stepper::new(cfg.step_rule, rule_ell.clone())?;

    let mut records = Vec::new();
    let mut x = x0.to_vec();
    let mut k = 0;
    let status = loop {
        let f = problem.value(&x);
        if !f.is_finite() {
            records.push(terminal(k, x, f, f64::NAN));
            break Status::Diverged;
        }
        let grad = problem.gradient(&x)?;
        let g = norm(&grad);
        // Also catches NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(g <= DIVERGENCE_GRAD) {
            records.push(terminal(k, x, f, g));
            break Status::Diverged;
        }
        let stop = if gap_target.is_some_and(|t| f <= t) {
            Some(Status::ConvergedGap)
        } else if cfg.grad_tol.is_some_and(|t| g * g <= t) {
            Some(Status::ConvergedGrad)
        } else if k >= cfg.max_iters {
            Some(Status::MaxIters)
        } else {
            None
        };
        if let Some(s) = stop {
            records.push(terminal(k, x, f, g));
            break s;
        }

        let mut gamma = stepper.step(g)?;
        let mut next: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - gamma * gi).collect();
        let mut hit = false;
        if cfg.safeguard {
            let mut halvings = 0;
            while !problem.value(&next).is_finite() && halvings < SAFEGUARD_HALVINGS {
                gamma *= 0.5;
                halvings += 1;
                hit = true;
                next = x.iter().zip(&grad).map(|(xi, gi)| xi - gamma * gi).collect();
            }
        }
        records.push(Record {
            k,
            x,
            f_val: f,
            grad_norm: g,
            step: gamma,
            safeguard_hit: hit,
            batch: None,
            true_grad_norm: None,
        });
        x = next;
        k += 1;
    };
    Ok(Trace { records, status, rule: cfg.step_rule, ell: rule_ell })
}

fn terminal(k: usize, x: Vec<f64>, f_val: f64, grad_norm: f64) -> Record {
    Record { k, x, f_val, grad_norm, step: 0.0, safeguard_hit: false, batch: None, true_grad_norm: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{exp_sum, log_barrier, quadratic};

    #[test]
    fn quadratic_converges_in_one_step() {
        let p = quadratic(3.0, 2).unwrap();
        let cfg = SolverConfig::new(StepRule::PaperIntegral, 100).grad_tol(1e-20);
        let t = solve(&p, &[4.0, -1.0], &cfg).unwrap();
        assert_eq!(t.status, Status::ConvergedGrad);
        assert_eq!(t.iterations(), 1);
        assert_eq!(t.records[1].x, vec![0.0, 0.0]);
        assert_eq!(t.records[0].step, 1.0 / 3.0);
        assert_eq!(t.records[1].step, 0.0);
    }

    #[test]
    fn paper_step_examples() {
        let p = quadratic(5.0, 1).unwrap();
        assert_eq!(paper_step(&p, &[123.0]).unwrap().0, 0.2);
        let (gamma, grad) = paper_step(&exp_sum(), &[0.5]).unwrap();
        assert_eq!(grad, vec![0.0]);
        assert_eq!(gamma, 1.0 / 3.3);
        let (gamma, grad) = paper_step(&log_barrier(), &[1e-7]).unwrap();
        let g = grad[0].abs();
        assert_eq!(g, 1.0 / 1e-7 - 1.0 / (0.1 - 1e-7));
        let ell = |s: f64| 800.0 + 2.0 * s * s;
        assert!(gamma >= 1.0 / ell(2.0 * g) && gamma <= 1.0 / ell(g));
    }

    #[test]
    fn stopping_precedence_gap_first() {
        // At x* both the gap and gradient rules fire; gap wins.
        let p = exp_sum();
        let cfg = SolverConfig::new(StepRule::PaperIntegral, 10).gap_tol(1e-5).grad_tol(1e-5);
        let t = solve(&p, &[0.5], &cfg).unwrap();
        assert_eq!(t.status, Status::ConvergedGap);
        assert_eq!(t.iterations(), 0);
        let t = solve(&p, &[0.5], &SolverConfig::new(StepRule::PaperIntegral, 0)).unwrap();
        assert_eq!(t.status, Status::MaxIters);
    }

    #[test]
    fn input_validation() {
        let p = log_barrier();
        let cfg = SolverConfig::new(StepRule::PaperIntegral, 10);
        assert!(matches!(solve(&p, &[0.2], &cfg), Err(Error::OutsideDomain)));
        assert!(matches!(solve(&p, &[0.01, 0.02], &cfg), Err(Error::DimensionMismatch { .. })));
        let no_fstar = crate::problems::neg_log(Some(1.0)).unwrap();
        assert!(solve(&no_fstar, &[1.0], &cfg.clone().gap_tol(1e-3)).is_err());
        let no_cert = crate::problems::toy_net();
        assert!(matches!(solve(&no_cert, &[1.0, 1.0], &cfg), Err(Error::MissingCertificate)));
        assert!(solve(&p, &[0.01], &SolverConfig::new(StepRule::FixedStep(-1.0), 3)).is_err());
    }

    #[test]
    fn wrong_certificate_diverges_and_safeguard_recovers() {
        let p = log_barrier();
        let cfg = SolverConfig::new(StepRule::PaperIntegral, 10_000)
            .gap_tol(1e-5)
            .with_ell(EllModel::affine(800.0, 2.0).unwrap());
        let t = solve(&p, &[1e-7], &cfg).unwrap();
        assert_eq!(t.status, Status::Diverged);
        assert_eq!(t.last().f_val, f64::INFINITY);
        let t = solve(&p, &[1e-7], &cfg.clone().safeguard(true)).unwrap();
        assert_ne!(t.status, Status::Diverged);
        assert!(t.records.iter().any(|r| r.safeguard_hit));
    }

    #[test]
    fn runs_are_bit_identical() {
        let p = log_barrier();
        let cfg = SolverConfig::new(StepRule::PaperIntegral, 1000).gap_tol(1e-5);
        let a = solve(&p, &[1e-7], &cfg).unwrap();
        let b = solve(&p, &[1e-7], &cfg).unwrap();
        assert_eq!(a, b);
    }
}
