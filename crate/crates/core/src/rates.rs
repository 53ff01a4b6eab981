//! Iteration and sample complexity bounds for the q-function step.
//!
//! Every branch is evaluated with its explicit constants unless marked
//! constants-free. Reported iteration counts are real-valued; callers round
//! up when budgeting.

use serde::Serialize;

use crate::ell::EllModel;
use crate::error::{Error, Result};
use crate::sgd::batch_size;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Nonconvex,
    Convex,
    SgdNonconvex,
}

/// Problem constants for a rate query. `gap` is `f(x0) - f*`, `radius` is
/// `‖x0 - x*‖`, `grad_bound` bounds `‖∇f‖` everywhere, `grad0` is
/// `‖∇f(x0)‖`; `sigma` and `delta` are the noise level and failure
/// probability for the stochastic setting.
#[derive(Debug, Clone)]
pub struct RateQuery {
    pub setting: Setting,
    pub model: EllModel,
    pub epsilon: f64,
    pub gap: Option<f64>,
    pub radius: Option<f64>,
    pub grad_bound: Option<f64>,
    pub grad0: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
}

impl RateQuery {
    pub fn new(setting: Setting, model: EllModel, epsilon: f64) -> Self {
        Self { setting, model, epsilon, gap: None, radius: None, grad_bound: None, grad0: None, sigma: None, delta: None }
    }

    pub fn gap(mut self, v: f64) -> Self {
        self.gap = Some(v);
        self
    }

    pub fn radius(mut self, v: f64) -> Self {
        self.radius = Some(v);
        self
    }

    pub fn grad_bound(mut self, v: f64) -> Self {
        self.grad_bound = Some(v);
        self
    }

    pub fn grad0(mut self, v: f64) -> Self {
        self.grad0 = Some(v);
        self
    }

    pub fn noise(mut self, sigma: f64, delta: f64) -> Self {
        self.sigma = Some(sigma);
        self.delta = Some(delta);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        for (name, v) in [
            ("Delta", self.gap),
            ("R", self.radius),
            ("M", self.grad_bound),
            ("M0", self.grad0),
            ("sigma", self.sigma),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
                }
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidParameter(format!("delta must be in (0, 1), got {d}")));
            }
        }
        Ok(())
    }

    fn need(&self, v: Option<f64>, what: &str) -> Result<f64> {
        v.ok_or_else(|| Error::MissingConstant(what.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

/// One candidate bound. `explicit` is false for bounds stated only up to
/// universal constants, which are evaluated with constant 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub id: String,
    pub value: f64,
    pub explicit: bool,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Minimum over the applicable branches.
    pub iterations: f64,
    /// Branch attaining `iterations`.
    pub formula_id: String,
    /// Terms of the winning branch plus any summary terms.
    pub terms: Vec<Term>,
    pub branches: Vec<Branch>,
    /// Minimum over branches with explicit constants.
    pub explicit_iterations: Option<f64>,
    pub applicability_notes: Vec<String>,
    pub batch: Option<u64>,
    pub total_samples: Option<f64>,
}

fn term(name: &str, value: f64) -> Term {
    Term { name: name.to_string(), value }
}

fn branch(id: &str, explicit: bool, terms: Vec<Term>) -> Branch {
    let value = terms.iter().map(|t| t.value).fold(0.0, f64::max);
    Branch { id: id.to_string(), value, explicit, terms }
}

impl RateReport {
    fn from_branches(branches: Vec<Branch>, notes: Vec<String>) -> Result<Self> {
        let best = branches
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .ok_or_else(|| Error::NotApplicable(format!("no bound applies: {}", notes.join("; "))))?
            .clone();
        let explicit_iterations =
            branches.iter().filter(|b| b.explicit).map(|b| b.value).min_by(|a, b| a.total_cmp(b));
        Ok(Self {
            iterations: best.value,
            formula_id: best.id,
            terms: best.terms,
            branches,
            explicit_iterations,
            applicability_notes: notes,
            batch: None,
            total_samples: None,
        })
    }
}

/// Number of steps after which `min_k ‖∇f(x_k)‖² ≤ ε` is guaranteed.
pub fn nonconvex_rate(q: &RateQuery) -> Result<RateReport> {
    q.validate()?;
    let eps = q.epsilon;
    let delta = q.need(q.gap, "Delta (initial gap f(x0) - f*)")?;
    let mut notes = Vec::new();
    let m = &q.model;
    let b = if m.is_flat() {
        let l = m.at_zero();
        branch("nonconvex_constant", true, vec![term("4 L Delta / eps", 4.0 * l * delta / eps)])
    } else {
        match *m {
            EllModel::Constant { .. } => unreachable!("constant models are flat"),
            EllModel::Affine { l0, l1 } => {
                // Smallest T with 8 L1 Δ/T + sqrt(4 L0 Δ/T) = sqrt(ε), solved
                // as a quadratic in u = 1/sqrt(T).
                let a = 8.0 * l1 * delta;
                let bb = (4.0 * l0 * delta).sqrt();
                let t = if delta == 0.0 {
                    0.0
                } else {
                    let u = 2.0 * eps.sqrt() / (bb + (bb * bb + 4.0 * a * eps.sqrt()).sqrt());
                    1.0 / (u * u)
                };
                let mut br = branch("nonconvex_affine", true, vec![term("T solving 8 L1 Delta/T + sqrt(4 L0 Delta/T) = sqrt(eps)", t)]);
                br.terms.push(term("8 L0 Delta / eps (reference)", 8.0 * l0 * delta / eps));
                br.terms.push(term("32 L1 Delta / sqrt(eps) (reference)", 32.0 * l1 * delta / eps.sqrt()));
                br.value = t;
                br
            }
            EllModel::Power { rho, l0, l1 } if rho <= 2.0 => branch(
                "nonconvex_power",
                true,
                vec![
                    term("8 L0 Delta / eps", 8.0 * l0 * delta / eps),
                    term("32 L1 Delta / eps^((2-rho)/2)", 32.0 * l1 * delta / eps.powf((2.0 - rho) / 2.0)),
                ],
            ),
            EllModel::Power { rho, l0, l1 } => {
                let mm = q.need(q.grad_bound, "M (uniform gradient bound), required for rho > 2")?;
                branch(
                    "nonconvex_power_bounded_gradient",
                    true,
                    vec![
                        term("8 L0 Delta / eps", 8.0 * l0 * delta / eps),
                        term("64 L1 Delta (2M)^(rho-2)", 64.0 * l1 * delta * (2.0 * mm).powf(rho - 2.0)),
                    ],
                )
            }
            EllModel::ExpGrowth { l0, l1 } => {
                let mm = q.need(q.grad_bound, "M (uniform gradient bound), required for exponential growth")?;
                branch(
                    "nonconvex_exp_growth",
                    true,
                    vec![
                        term("8 L0 Delta / eps", 8.0 * l0 * delta / eps),
                        term("32 L1 Delta e^(2M)", 32.0 * l1 * delta * (2.0 * mm).exp()),
                    ],
                )
            }
            EllModel::Custom(_) => match m.psi2_invertible() {
                Ok(()) => {
                    let s = eps.sqrt();
                    branch("nonconvex_psi2", true, vec![term("4 Delta l(2 sqrt(eps)) / eps", 4.0 * delta * m.value(2.0 * s) / eps)])
                }
                Err(e) => {
                    notes.push(format!("not applicable: {e}"));
                    return RateReport::from_branches(Vec::new(), notes);
                }
            },
        }
    };
    RateReport::from_branches(vec![b], notes)
}

/// Number of steps after which `f(x_T) - f* ≤ ε` is guaranteed for convex
/// problems. Branches whose constants are missing are skipped with a note.
pub fn convex_rate(q: &RateQuery) -> Result<RateReport> {
    q.validate()?;
    let eps = q.epsilon;
    let r = q.need(q.radius, "R (initial distance to a minimiser)")?;
    let r2 = r * r;
    let m = &q.model;
    let mut branches = Vec::new();
    let mut notes = Vec::new();

    if m.is_flat() {
        let l = m.at_zero();
        branches.push(branch("convex_constant", true, vec![term("L R^2 / eps", l * r2 / eps)]));
    } else {
        let power = match *m {
            EllModel::Affine { l0, l1 } => Some((1.0, l0, l1)),
            EllModel::Power { rho, l0, l1 } => Some((rho, l0, l1)),
            _ => None,
        };
        if let Some((rho, l0, l1)) = power {
            if rho <= 1.0 {
                notes.push("small-rho bound uses constant 16; the summary table lists 4".into());
                branches.push(branch(
                    "convex_power_small_rho",
                    true,
                    vec![
                        term("2 L0 R^2 / eps", 2.0 * l0 * r2 / eps),
                        term(
                            "16 L1^(2/(2-rho)) R^2 / eps^(2(1-rho)/(2-rho))",
                            16.0 * l1.powf(2.0 / (2.0 - rho)) * r2 / eps.powf(2.0 * (1.0 - rho) / (2.0 - rho)),
                        ),
                    ],
                ));
            } else if rho < 2.0 {
                match q.gap {
                    Some(d) => {
                        // (T+1)^{(2-ρ)/2} ≤ 2^{ρ+1} L1 R^{2-ρ} Δ^{ρ-1} raised to 2/(2-ρ).
                        let c = 2f64.powf(2.0 * (rho + 1.0) / (2.0 - rho));
                        notes.push(format!(
                            "mid-rho bound uses constant 2^(2(rho+1)/(2-rho)) = {c:.6}; the constant 16 is only valid at rho = 1"
                        ));
                        branches.push(branch(
                            "convex_power_mid_rho",
                            true,
                            vec![
                                term("2 L0 R^2 / eps", 2.0 * l0 * r2 / eps),
                                term(
                                    "C L1^(2/(2-rho)) R^2 Delta^(2(rho-1)/(2-rho))",
                                    c * l1.powf(2.0 / (2.0 - rho)) * r2 * d.powf(2.0 * (rho - 1.0) / (2.0 - rho)),
                                ),
                            ],
                        ));
                    }
                    None => notes.push("mid-rho bound skipped: needs Delta".into()),
                }
            }
            let by_gap = if rho <= 2.0 {
                q.gap.map(|d| l1 * d.powf(rho / 2.0) * r.powf(2.0 - rho) / eps.powf(1.0 - rho / 2.0))
            } else {
                None
            };
            let by_grad0 = q.grad0.map(|m0| l1 * m0.powf(rho) * r2 / eps);
            let inner = match (by_gap, by_grad0) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            match inner {
                Some(v) => branches.push(branch(
                    if rho <= 2.0 { "convex_power_alt" } else { "convex_power_alt_large_rho" },
                    false,
                    vec![term("L0 R^2 / eps", l0 * r2 / eps), term("min{L1 Delta^(rho/2) R^(2-rho) / eps^(1-rho/2), L1 M0^rho R^2 / eps}", v)],
                )),
                None => notes.push("constants-free power bound skipped: needs Delta or M0".into()),
            }
        }
    }

    match q.grad0 {
        Some(m0) => branches.push(branch(
            "convex_monotone_gradient",
            true,
            vec![term("l(2 M0) R^2 / (2 eps)", m.value(2.0 * m0) * r2 / (2.0 * eps))],
        )),
        None => notes.push("monotone-gradient bound skipped: needs M0".into()),
    }

    let mut report = RateReport::from_branches(branches, notes)?;
    report.terms.push(term("dominant: l(0) R^2 / eps", m.at_zero() * r2 / eps));
    Ok(report)
}

/// Iterations, batch size and total stochastic gradients for the
/// ratio-scaled SGD on power-type models with `ρ ≤ 2`.
pub fn sgd_rate(q: &RateQuery) -> Result<RateReport> {
    q.validate()?;
    let sigma = q.need(q.sigma, "sigma")?;
    let delta = q.need(q.delta, "delta (failure probability)")?;
    let gap = q.need(q.gap, "Delta (initial gap f(x0) - f*)")?;
    let (rho, l0, l1) = match q.model {
        _ if q.model.is_flat() => (0.0, q.model.at_zero(), 0.0),
        EllModel::Affine { l0, l1 } => (1.0, l0, l1),
        EllModel::Power { rho, l0, l1 } if rho <= 2.0 => (rho, l0, l1),
        _ => {
            return Err(Error::NotApplicable(format!(
                "{} is not covered by the stochastic analysis (needs power growth with rho <= 2)",
                q.model
            )))
        }
    };
    let r = q.model.doubling_ratio()?;
    let base = nonconvex_rate(&RateQuery { setting: Setting::Nonconvex, ..q.clone() })?;
    let t = base.iterations * 45.0 * r / 4.0;
    let t_int = t.ceil().max(1.0) as usize;
    let b = batch_size(sigma, q.epsilon, t_int, delta);
    let eps = q.epsilon;
    let order = sigma * sigma * l0 * gap / (eps * eps)
        + sigma * sigma * l1 * gap / eps.powf((4.0 - rho) / 2.0)
        + l0 * gap / eps
        + l1 * gap / eps.powf((2.0 - rho) / 2.0);
    let sgd_branch = branch(
        "sgd_nonconvex",
        true,
        vec![term("T = (45 r / 4) x deterministic bound", t), term("r", r)],
    );
    let mut report = RateReport::from_branches(vec![sgd_branch], base.applicability_notes)?;
    report.iterations = t;
    report.terms.push(term("B", b as f64));
    report.terms.push(term("order of total samples (constants-free)", order));
    report.batch = Some(b);
    report.total_samples = Some(b as f64 * t);
    Ok(report)
}

/// Dispatches on the query's setting.
pub fn rate(q: &RateQuery) -> Result<RateReport> {
    match q.setting {
        Setting::Nonconvex => nonconvex_rate(q),
        Setting::Convex => convex_rate(q),
        Setting::SgdNonconvex => sgd_rate(q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nc(m: EllModel, eps: f64) -> RateQuery {
        RateQuery::new(Setting::Nonconvex, m, eps)
    }

    #[test]
    fn nonconvex_constant_example() {
        let r = nonconvex_rate(&nc(EllModel::constant(1.0).unwrap(), 0.01).gap(1.0)).unwrap();
        assert!((r.iterations - 400.0).abs() < 1e-9);
        assert_eq!(r.formula_id, "nonconvex_constant");
    }

    #[test]
    fn nonconvex_power_two() {
        let (l0, l1, d, e) = (800.0, 2.0, 3.0, 1e-3);
        let r = nonconvex_rate(&nc(EllModel::power(2.0, l0, l1).unwrap(), e).gap(d)).unwrap();
        assert_eq!(r.iterations, f64::max(8.0 * l0 * d / e, 32.0 * l1 * d));
    }

    #[test]
    fn nonconvex_large_rho_needs_bound() {
        let q = nc(EllModel::power(3.0, 1.0, 1.0).unwrap(), 0.1).gap(1.0);
        assert!(matches!(nonconvex_rate(&q), Err(Error::MissingConstant(_))));
        let r = nonconvex_rate(&q.grad_bound(2.0)).unwrap();
        assert_eq!(r.iterations, f64::max(80.0, 64.0 * 4.0));
        assert!(nonconvex_rate(&nc(EllModel::constant(1.0).unwrap(), 0.1)).is_err());
    }

    #[test]
    fn nonconvex_affine_solves_the_equation() {
        let (l0, l1, d, e) = (3.3, 1.0, 2.0, 0.01);
        let r = nonconvex_rate(&nc(EllModel::affine(l0, l1).unwrap(), e).gap(d)).unwrap();
        let t = r.iterations;
        let lhs = 8.0 * l1 * d / t + (4.0 * l0 * d / t).sqrt();
        assert!((lhs - e.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nonconvex_exp_growth_and_custom() {
        let q = nc(EllModel::exp_growth(1.0, 1.0).unwrap(), 0.1).gap(1.0).grad_bound(1.0);
        let r = nonconvex_rate(&q).unwrap();
        assert_eq!(r.iterations, f64::max(80.0, 32.0 * 2f64.exp()));
        let c = EllModel::custom(|s| 2.0 + s, Some(2.0)).unwrap();
        let r = nonconvex_rate(&nc(c, 0.25).gap(1.0)).unwrap();
        assert_eq!(r.iterations, 4.0 * 3.0 / 0.25);
        let bad = EllModel::custom(|s| 1.0 + s * s * s, Some(8.0)).unwrap();
        assert!(matches!(nonconvex_rate(&nc(bad, 0.25).gap(1.0)), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn convex_constant_and_dominance() {
        let q = RateQuery::new(Setting::Convex, EllModel::constant(2.0).unwrap(), 0.01).radius(3.0);
        let r = convex_rate(&q).unwrap();
        assert_eq!(r.iterations, 2.0 * 9.0 / 0.01);
        assert_eq!(r.explicit_iterations, Some(r.iterations));
        assert!(convex_rate(&RateQuery::new(Setting::Convex, EllModel::constant(2.0).unwrap(), 0.01)).is_err());
    }

    #[test]
    fn convex_affine_branches() {
        let (l0, l1, r, d, m0, e) = (3.3, 1.0, 2.0, 1.5, 4.0, 1e-3);
        let q = RateQuery::new(Setting::Convex, EllModel::affine(l0, l1).unwrap(), e).radius(r).gap(d).grad0(m0);
        let rep = convex_rate(&q).unwrap();
        let alt = rep.branches.iter().find(|b| b.id == "convex_power_alt").unwrap();
        let expected = f64::max(l0 * r * r / e, f64::min(l1 * d.sqrt() * r / e.sqrt(), l1 * m0 * r * r / e));
        assert!((alt.value - expected).abs() < 1e-9 * expected);
        assert!(!alt.explicit);
        let small = rep.branches.iter().find(|b| b.id == "convex_power_small_rho").unwrap();
        assert_eq!(small.value, f64::max(2.0 * l0 * r * r / e, 16.0 * l1 * l1 * r * r));
        assert!(rep.applicability_notes.iter().any(|n| n.contains("16")));
    }

    #[test]
    fn convex_mid_rho_constant() {
        let q = RateQuery::new(Setting::Convex, EllModel::power(1.5, 1.0, 1.0).unwrap(), 1e-6).radius(1.0).gap(1.0);
        let rep = convex_rate(&q).unwrap();
        let b = rep.branches.iter().find(|b| b.id == "convex_power_mid_rho").unwrap();
        assert_eq!(b.terms[1].value, 1024.0);
    }

    #[test]
    fn convex_dominant_term_for_small_eps() {
        let m = EllModel::power(2.0, 800.0, 2.0).unwrap();
        let q = RateQuery::new(Setting::Convex, m, 1e-9).radius(0.05).gap(1.0).grad0(10.0);
        let rep = convex_rate(&q).unwrap();
        let dom = 800.0 * 0.0025 / 1e-9;
        assert!(rep.iterations <= 2.0 * dom && rep.iterations >= 0.5 * dom);
    }

    #[test]
    fn sgd_rate_values() {
        let q = RateQuery::new(Setting::SgdNonconvex, EllModel::constant(1.0).unwrap(), 0.1).gap(0.5).noise(0.0, 0.2);
        let rep = sgd_rate(&q).unwrap();
        assert_eq!(rep.batch, Some(1));
        assert_eq!(rep.total_samples, Some(rep.iterations));
        assert!((rep.iterations - 20.0 * 45.0 / 4.0).abs() < 1e-9);
        let bad = RateQuery::new(Setting::SgdNonconvex, EllModel::power(3.0, 1.0, 1.0).unwrap(), 0.1).gap(1.0).noise(1.0, 0.1);
        assert!(matches!(sgd_rate(&bad), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn sgd_dominant_term_is_noise_term() {
        let (l0, l1, d) = (1.0, 1.0, 1.0);
        let q = |e: f64| RateQuery::new(Setting::SgdNonconvex, EllModel::power(1.0, l0, l1).unwrap(), e).gap(d).noise(1.0, 0.1);
        let rep = sgd_rate(&q(1e-8)).unwrap();
        let order = rep.terms.iter().find(|t| t.name.starts_with("order")).unwrap().value;
        let lead = l0 * d / 1e-16;
        assert!((order - lead) / lead < 1e-3);
    }
}
