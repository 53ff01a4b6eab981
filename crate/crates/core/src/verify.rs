//! Sampling checks of the smoothness inequalities and of solver traces.
//!
//! Every check returns a [`CheckReport`] whose `violations` counts samples
//! with slack below `-tolerance`, the tolerance being scaled per sample by
//! the magnitude of the bound involved.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ell::EllModel;
use crate::error::{Error, Result};
use crate::problems::{dist, dot, norm, Problem};
use crate::qcalc::QEvaluator;
use crate::trace::{StepRule, Trace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_id: String,
    pub samples: usize,
    pub violations: usize,
    /// Most negative slack observed (`+∞` with no samples).
    pub worst_margin: f64,
    /// Base tolerance; per-sample tolerances scale it by the bound size.
    pub tolerance: f64,
}

impl CheckReport {
    pub fn new(check_id: &str, tolerance: f64) -> Self {
        Self { check_id: check_id.to_string(), samples: 0, violations: 0, worst_margin: f64::INFINITY, tolerance }
    }

    /// Records one sample with slack `margin` against tolerance `tol`.
    pub fn record(&mut self, margin: f64, tol: f64) {
        self.samples += 1;
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(margin >= -tol) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
    }

    pub fn merge(&mut self, other: &CheckReport) {
        self.samples += other.samples;
        self.violations += other.violations;
        if other.worst_margin < self.worst_margin || other.worst_margin.is_nan() {
            self.worst_margin = other.worst_margin;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Base tolerance of the Lemma-type samplers.
pub const SAMPLER_TOL: f64 = 1e-8;

fn evaluator(problem: &Problem) -> Result<QEvaluator> {
    Ok(QEvaluator::new(problem.certified_ell.clone().ok_or(Error::MissingCertificate)?))
}

/// Draws `y` in the sample box with `‖y - x‖ < limit` by shrinking a uniform
/// draw towards `x`; the box is convex, so `y` stays inside it.
fn pair_point<R: Rng + ?Sized>(problem: &Problem, x: &[f64], limit: f64, rng: &mut R) -> Vec<f64> {
    let y0 = problem.sample_point(rng);
    let d = dist(&y0, x);
    if d == 0.0 {
        return y0;
    }
    let radius = rng.random::<f64>() * d.min(limit);
    x.iter().zip(&y0).map(|(xi, yi)| xi + (yi - xi) * radius / d).collect()
}

/// `‖∇f(y) - ∇f(x)‖ ≤ q⁻¹(‖y - x‖; ‖∇f(x)‖)` for pairs with
/// `‖y - x‖ < 0.9 q_max(‖∇f(x)‖)`.
pub fn check_lemma1<R: Rng + ?Sized>(problem: &Problem, n_samples: usize, rng: &mut R) -> Result<CheckReport> {
    let q = evaluator(problem)?;
    let mut rep = CheckReport::new("gradient_variation", SAMPLER_TOL);
    for _ in 0..n_samples {
        let x = problem.sample_point(rng);
        let gx = problem.gradient(&x)?;
        let a = norm(&gx);
        let y = pair_point(problem, &x, 0.9 * q.q_max(a)?, rng);
        let gy = problem.gradient(&y)?;
        let diff: Vec<f64> = gy.iter().zip(&gx).map(|(u, v)| u - v).collect();
        let bound = q.q_inverse(dist(&y, &x), a)?;
        rep.record(bound - norm(&diff), SAMPLER_TOL * (1.0 + bound));
    }
    Ok(rep)
}

/// Upper model `f(x) + ⟨∇f(x), y - x⟩ + ∫₀^{‖y-x‖} q⁻¹(τ; ‖∇f(x)‖) dτ`.
fn upper_model(q: &QEvaluator, fx: f64, gx: &[f64], x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let step: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let lin = dot(gx, &step);
    let curv = q.q_inverse_integral(norm(&step), norm(gx))?;
    Ok((fx + lin + curv, fx.abs() + lin.abs() + curv))
}

/// `f(y)` lies below the upper model at `x`.
pub fn check_lemma2<R: Rng + ?Sized>(problem: &Problem, n_samples: usize, rng: &mut R) -> Result<CheckReport> {
    let q = evaluator(problem)?;
    let mut rep = CheckReport::new("upper_model", SAMPLER_TOL);
    for _ in 0..n_samples {
        let x = problem.sample_point(rng);
        let gx = problem.gradient(&x)?;
        let y = pair_point(problem, &x, 0.9 * q.q_max(norm(&gx))?, rng);
        let (bound, scale) = upper_model(&q, problem.value(&x), &gx, &x, &y)?;
        rep.record(bound - problem.value(&y), SAMPLER_TOL * (1.0 + scale));
    }
    Ok(rep)
}

/// The step `x - γ∇f(x)` minimises the upper model at `x`, and the minimum
/// equals `f(x)` minus the descent decrement. Perturbations alternate
/// between the ray along `-∇f(x)` (step scaled by `1 ± 0.5`) and random
/// directions.
pub fn check_optimality<R: Rng + ?Sized>(
    problem: &Problem,
    x: &[f64],
    n_perturbations: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    let q = evaluator(problem)?;
    let gx = problem.gradient(x)?;
    let a = norm(&gx);
    if a == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let fx = problem.value(x);
    let gamma = q.optimal_step(a)?;
    let limit = 0.9 * q.q_max(a)?;
    let y_star: Vec<f64> = x.iter().zip(&gx).map(|(xi, gi)| xi - gamma * gi).collect();
    let (u_star, scale) = upper_model(&q, fx, &gx, x, &y_star)?;
    let tol = SAMPLER_TOL * (1.0 + scale);
    let mut rep = CheckReport::new("optimal_step", SAMPLER_TOL);
    let expected = fx - q.descent_decrement(a)?;
    rep.record(-(u_star - expected).abs(), tol);

    let reach = limit.min(3.0 * gamma * a);
    for i in 0..n_perturbations {
        let y: Vec<f64> = if i % 2 == 0 {
            let mut t = gamma * (0.5 + rng.random::<f64>());
            if t * a >= limit {
                t = rng.random::<f64>() * limit / a;
            }
            x.iter().zip(&gx).map(|(xi, gi)| xi - t * gi).collect()
        } else {
            let dir: Vec<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let dn = norm(&dir);
            let radius = rng.random::<f64>() * reach;
            x.iter().zip(&dir).map(|(xi, di)| xi + radius * di / dn).collect()
        };
        let (u, _) = upper_model(&q, fx, &gx, x, &y)?;
        rep.record(u - u_star, tol);
    }
    Ok(rep)
}

/// [`check_optimality`] at `n_points` sampled points with non-zero gradient.
pub fn check_optimality_sampled<R: Rng + ?Sized>(
    problem: &Problem,
    n_points: usize,
    n_perturbations: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    let mut total = CheckReport::new("optimal_step", SAMPLER_TOL);
    for _ in 0..n_points {
        let x = problem.sample_point(rng);
        match check_optimality(problem, &x, n_perturbations, rng) {
            Ok(r) => total.merge(&r),
            Err(Error::ZeroGradient) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(total)
}

/// Hessian norm against the certificate: `‖∇²f(x)‖ ≤ ℓ(‖∇f(x)‖)(1 + 1e-8)`.
pub fn check_certificate<R: Rng + ?Sized>(problem: &Problem, n_samples: usize, rng: &mut R) -> Result<CheckReport> {
    let ell = problem.certified_ell.clone().ok_or(Error::MissingCertificate)?;
    if !problem.has_hess_norm() {
        return Err(Error::NotApplicable(format!("{} has no Hessian norm oracle", problem.name)));
    }
    let mut rep = CheckReport::new("certificate", 1e-8);
    for _ in 0..n_samples {
        let x = problem.sample_point(rng);
        let g = norm(&problem.gradient(&x)?);
        let bound = ell.value(g);
        let h = problem.hess_norm(&x).unwrap_or(f64::NAN);
        rep.record(bound - h, 1e-8 * bound);
    }
    Ok(rep)
}

/// Central differences against the analytic gradient, with per-coordinate
/// step `1e-4·min(1, distance to the domain boundary)`.
pub fn check_gradient<R: Rng + ?Sized>(problem: &Problem, n_samples: usize, rng: &mut R) -> Result<CheckReport> {
    let mut rep = CheckReport::new("finite_difference_gradient", 1e-6);
    for _ in 0..n_samples {
        let x = problem.sample_point(rng);
        let g = problem.gradient(&x)?;
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let room = (x[i] - problem.domain.lower[i]).min(problem.domain.upper[i] - x[i]).min(1.0);
            let h = 1e-4 * room;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (problem.value(&xp) - problem.value(&xm)) / (xp[i] - xm[i]);
        }
        let err: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
        let tol = 1e-6f64.max(1e-6 * norm(&g));
        rep.record(-norm(&err), tol);
    }
    Ok(rep)
}

/// Re-walks a trace of the integral step rule and checks the per-step
/// descent, the prefix bound on `min g²/ℓ(2g)` (needs `f_star`), gradient
/// norm monotonicity (convex problems) and distance contraction towards
/// `x_star` (convex problems with a known minimiser).
pub fn check_trajectory(trace: &Trace, problem: &Problem) -> Result<Vec<CheckReport>> {
    if trace.rule != StepRule::PaperIntegral {
        return Err(Error::TraceMismatch(format!("trace uses {:?}, not the integral step rule", trace.rule)));
    }
    let ell: EllModel = trace
        .ell
        .clone()
        .or_else(|| problem.certified_ell.clone())
        .ok_or(Error::MissingCertificate)?;
    let q = QEvaluator::new(ell.clone());
    let recs = &trace.records;
    if recs.is_empty() {
        return Err(Error::TraceMismatch("empty trace".into()));
    }
    for r in recs {
        if r.x.len() != problem.dim {
            return Err(Error::TraceMismatch(format!("record {} has dimension {}, problem has {}", r.k, r.x.len(), problem.dim)));
        }
        let f = problem.value(&r.x);
        if !(f == r.f_val || (f - r.f_val).abs() <= 1e-12 * f.abs().max(1.0)) {
            return Err(Error::TraceMismatch(format!("record {}: f = {} but trace says {}", r.k, f, r.f_val)));
        }
    }
    for r in &recs[..recs.len() - 1] {
        let gamma = q.optimal_step(r.grad_norm)?;
        if (gamma - r.step).abs() > 1e-9 * gamma {
            return Err(Error::TraceMismatch(format!("record {}: step {} but the rule gives {}", r.k, r.step, gamma)));
        }
    }

    let mut out = Vec::new();
    let mut descent = CheckReport::new("descent_per_step", 1e-12);
    for w in recs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let margin = a.f_val - a.step * a.grad_norm * a.grad_norm / 4.0 - b.f_val;
        descent.record(margin, 1e-12 * a.f_val.abs().max(1.0));
    }
    out.push(descent);

    if let Some(f_star) = problem.f_star {
        let mut prefix = CheckReport::new("prefix_bound", 1e-9);
        let gap = recs[0].f_val - f_star;
        let mut best = f64::INFINITY;
        for (i, r) in recs.iter().enumerate() {
            best = best.min(r.grad_norm * r.grad_norm / ell.value(2.0 * r.grad_norm));
            let bound = 4.0 * gap / (i + 1) as f64;
            prefix.record(bound - best, 1e-9 * bound.abs());
        }
        out.push(prefix);
    }

    if problem.convex {
        let mut mono = CheckReport::new("grad_norm_monotone", 1e-10);
        for w in recs.windows(2) {
            mono.record(w[0].grad_norm - w[1].grad_norm, 1e-10 * w[0].grad_norm);
        }
        out.push(mono);

        if let (Some(x_star), Some(f_star)) = (&problem.x_star, problem.f_star) {
            let mut contraction = CheckReport::new("distance_contraction", 1e-12);
            for w in recs.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let before = 0.5 * dist(&a.x, x_star).powi(2);
                let after = 0.5 * dist(&b.x, x_star).powi(2);
                let rhs = before - (a.f_val - f_star) / ell.value(2.0 * a.grad_norm);
                contraction.record(rhs - after, 1e-12 * before.max(1.0));
            }
            out.push(contraction);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gd::{solve, SolverConfig};
    use crate::problems::{exp_sum, log_barrier, quadratic, toy_net};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn quadratic_gradient_variation_is_tight() {
        let rep = check_lemma1(&quadratic(2.0, 2).unwrap(), 200, &mut rng()).unwrap();
        assert!(rep.passed());
        assert!(rep.worst_margin.abs() < 1e-9);
    }

    #[test]
    fn upper_model_reduces_to_quadratic_bound() {
        let p = quadratic(2.0, 1).unwrap();
        let q = QEvaluator::new(EllModel::constant(2.0).unwrap());
        let (u, _) = upper_model(&q, 1.0, &[2.0], &[1.0], &[0.25]).unwrap();
        assert!((u - (1.0 + 2.0 * -0.75 + 0.75 * 0.75)).abs() < 1e-15);
        let (u, _) = upper_model(&q, 1.0, &[2.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(u, 1.0);
        assert!(check_lemma2(&p, 100, &mut rng()).unwrap().passed());
    }

    #[test]
    fn negative_control_finds_violations() {
        let wrong = log_barrier().with_certificate(EllModel::constant(800.0).unwrap());
        assert!(check_lemma1(&wrong, 200, &mut rng()).unwrap().violations > 0);
    }

    #[test]
    fn optimality_on_quadratic() {
        let p = quadratic(4.0, 2).unwrap();
        let rep = check_optimality(&p, &[1.0, -2.0], 100, &mut rng()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(matches!(check_optimality(&p, &[0.0, 0.0], 10, &mut rng()), Err(Error::ZeroGradient)));
    }

    #[test]
    fn certificate_and_gradient_checks() {
        let mut r = rng();
        for p in [log_barrier(), exp_sum(), quadratic(3.0, 2).unwrap()] {
            assert!(check_certificate(&p, 300, &mut r).unwrap().passed(), "{}", p.name);
            assert!(check_gradient(&p, 100, &mut r).unwrap().passed(), "{}", p.name);
        }
        assert!(check_gradient(&toy_net(), 100, &mut r).unwrap().passed());
        assert!(matches!(check_certificate(&toy_net(), 10, &mut r), Err(Error::MissingCertificate)));
    }

    #[test]
    fn trajectory_checks_on_quadratic() {
        let p = quadratic(1.0, 1).unwrap();
        let t = solve(&p, &[3.0], &SolverConfig::new(StepRule::PaperIntegral, 5).grad_tol(1e-30)).unwrap();
        let reps = check_trajectory(&t, &p).unwrap();
        assert_eq!(reps.len(), 4);
        assert!(reps.iter().all(|r| r.passed()));
    }

    #[test]
    fn trajectory_rejects_other_rules() {
        let p = log_barrier();
        let t = solve(&p, &[1e-7], &SolverConfig::new(StepRule::FixedStep(1e-9), 3)).unwrap();
        assert!(matches!(check_trajectory(&t, &p), Err(Error::TraceMismatch(_))));
        let mut t = solve(&p, &[1e-7], &SolverConfig::new(StepRule::PaperIntegral, 3)).unwrap();
        t.records[1].step *= 2.0;
        assert!(matches!(check_trajectory(&t, &p), Err(Error::TraceMismatch(_))));
    }

    #[test]
    fn report_counting() {
        let mut r = CheckReport::new("x", 1e-3);
        r.record(0.5, 1e-3);
        r.record(-1e-4, 1e-3);
        r.record(-1.0, 1e-3);
        r.record(f64::NAN, 1e-3);
        assert_eq!(r.samples, 4);
        assert_eq!(r.violations, 2);
        assert!(r.worst_margin.is_nan());
    }
}
