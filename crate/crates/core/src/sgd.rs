//! Mini-batch stochastic gradient descent with the ratio-scaled step.

use crate::ell::EllModel;
use crate::error::{Error, Result};
use crate::gd::DIVERGENCE_GRAD;
use crate::problems::{norm, StochasticOracle};
use crate::qcalc::QEvaluator;
use crate::trace::{Record, Status, StepRule, Trace};

#[derive(Debug, Clone)]
pub struct SgdConfig {
    /// Target for `‖∇f‖²`.
    pub epsilon: f64,
    /// Failure probability in `(0, 1)`.
    pub delta: f64,
    /// Iteration budget.
    pub iterations: usize,
    pub batch_override: Option<u64>,
    /// Stop once the sampled gradient has `‖g‖² ≤ ε/4`.
    pub early_stop: bool,
    /// Overrides the problem's certificate.
    pub ell: Option<EllModel>,
}

impl SgdConfig {
    pub fn new(epsilon: f64, delta: f64, iterations: usize) -> Self {
        Self { epsilon, delta, iterations, batch_override: None, early_stop: false, ell: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if self.batch_override == Some(0) {
            return Err(Error::InvalidParameter("batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// `B = max{⌈32 (1 + √(3 ln(T/δ)))² σ²/ε⌉, 1}`.
pub fn batch_size(sigma: f64, epsilon: f64, t: usize, delta: f64) -> u64 {
    let root = 1.0 + (3.0 * (t as f64 / delta).ln()).sqrt();
    let b = (32.0 * root * root * sigma * sigma / epsilon).ceil();
    if b >= 1.0 { b as u64 } else { 1 }
}

/// Runs `x_{k+1} = x_k - γ_k g_k` with `g_k` the batch mean and
/// `γ_k = γ(‖g_k‖)/(5r)`, `r` the doubling ratio of ℓ.
///
/// Records carry `‖g_k‖` as the gradient norm and the exact gradient norm
/// separately. The final record samples one more batch at the last iterate.
pub fn sgd_solve(oracle: &mut StochasticOracle, x0: &[f64], cfg: &SgdConfig) -> Result<Trace> {
    cfg.validate()?;
    let problem = oracle.problem.clone();
    problem.check_dim(x0)?;
    if !problem.contains(x0) || !problem.value(x0).is_finite() {
        return Err(Error::OutsideDomain);
    }
    let ell = cfg.ell.clone().or_else(|| problem.certified_ell.clone()).ok_or(Error::MissingCertificate)?;
    let r = ell.doubling_ratio()?;
    if !r.is_finite() {
        return Err(Error::InfiniteRatio);
    }
    let divisor = 5.0 * r;
    let q = QEvaluator::new(ell.clone());
    let batch = cfg.batch_override.unwrap_or_else(|| batch_size(oracle.sigma, cfg.epsilon, cfg.iterations, cfg.delta));

    let mut records = Vec::new();
    let mut x = x0.to_vec();
    let mut k = 0;
    let status = loop {
        let f = problem.value(&x);
        if !f.is_finite() {
            records.push(record(k, x, f, f64::NAN, 0.0, batch, None));
            break Status::Diverged;
        }
        let true_g = norm(&problem.gradient(&x)?);
        let g_vec = oracle.sample_gradient(&x, batch)?;
        let g = norm(&g_vec);
        // Also catches NaN.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(g <= DIVERGENCE_GRAD) {
            records.push(record(k, x, f, g, 0.0, batch, Some(true_g)));
            break Status::Diverged;
        }
        if cfg.early_stop && g * g <= cfg.epsilon / 4.0 {
            records.push(record(k, x, f, g, 0.0, batch, Some(true_g)));
            break Status::SurrogateStop;
        }
        if k >= cfg.iterations {
            records.push(record(k, x, f, g, 0.0, batch, Some(true_g)));
            break Status::MaxIters;
        }
        let gamma = q.optimal_step(g)? / divisor;
        let next = x.iter().zip(&g_vec).map(|(xi, gi)| xi - gamma * gi).collect();
        records.push(record(k, x, f, g, gamma, batch, Some(true_g)));
        x = next;
        k += 1;
    };
    Ok(Trace { records, status, rule: StepRule::ScaledIntegral { divisor }, ell: Some(ell) })
}

fn record(k: usize, x: Vec<f64>, f_val: f64, grad_norm: f64, step: f64, batch: u64, true_g: Option<f64>) -> Record {
    Record { k, x, f_val, grad_norm, step, safeguard_hit: false, batch: Some(batch), true_grad_norm: true_g }
}

/// `min_k ‖∇f(x_k)‖²` over a stochastic trace, from the exact gradients.
pub fn min_true_grad_sq(trace: &Trace) -> f64 {
    trace.records.iter().filter_map(|r| r.true_grad_norm).map(|g| g * g).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{exp_sum, quadratic};

    #[test]
    fn batch_size_values() {
        assert_eq!(batch_size(0.0, 0.01, 100, 0.1), 1);
        // 32 (1 + sqrt(3 ln 1000))² · 100 = 98 649.05…; pinned with mpmath at 50 digits.
        assert_eq!(batch_size(1.0, 0.01, 100, 0.1), 98_650);
        let b1 = batch_size(1.0, 0.01, 100, 0.1) as f64;
        let b2 = batch_size(2.0, 0.01, 100, 0.1) as f64;
        assert!((b2 / b1 - 4.0).abs() < 1e-4);
    }

    #[test]
    fn quadratic_contracts_by_four_fifths() {
        let mut o = StochasticOracle::new(quadratic(1.0, 1).unwrap(), 0.0, 1).unwrap();
        let t = sgd_solve(&mut o, &[1.0], &SgdConfig::new(0.1, 0.2, 5)).unwrap();
        let mut x = 1.0;
        for r in &t.records[..5] {
            assert_eq!(r.step, 0.2);
            assert!((r.x[0] - x).abs() <= 1e-15);
            x *= 0.8;
        }
        assert_eq!(t.status, Status::MaxIters);
        assert_eq!(t.iterations(), 5);
    }

    #[test]
    fn rejects_infinite_ratio_and_bad_config() {
        let mut o = StochasticOracle::new(exp_sum(), 0.0, 1).unwrap();
        let mut cfg = SgdConfig::new(0.1, 0.2, 5);
        cfg.ell = Some(EllModel::exp_growth(1.0, 1.0).unwrap());
        assert!(matches!(sgd_solve(&mut o, &[0.0], &cfg), Err(Error::InfiniteRatio)));
        assert!(sgd_solve(&mut o, &[0.0], &SgdConfig::new(0.1, 1.5, 5)).is_err());
        assert!(sgd_solve(&mut o, &[0.0], &SgdConfig::new(0.0, 0.5, 5)).is_err());
    }

    #[test]
    fn surrogate_stop() {
        let mut o = StochasticOracle::new(quadratic(1.0, 1).unwrap(), 0.0, 1).unwrap();
        let mut cfg = SgdConfig::new(0.1, 0.2, 1000);
        cfg.early_stop = true;
        let t = sgd_solve(&mut o, &[1.0], &cfg).unwrap();
        assert_eq!(t.status, Status::SurrogateStop);
        assert!(t.last().grad_norm.powi(2) <= 0.025);
    }
}
