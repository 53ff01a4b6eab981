//! Smoothness-bound functions `ℓ`: a function of the gradient norm that
//! bounds the Hessian spectral norm, `‖∇²f(x)‖ ≤ ℓ(‖∇f(x)‖)`.
//!
//! Four closed families are provided, plus user-supplied closures:
//!
//! | family       | ℓ(s)              | doubling ratio r |
//! |--------------|-------------------|------------------|
//! | `Constant`   | L                 | 1                |
//! | `Affine`     | L0 + L1 s         | 2                |
//! | `Power`      | L0 + L1 s^ρ       | 2^ρ              |
//! | `ExpGrowth`  | L0 + L1 s² e^s    | ∞                |
//!
//! Every model is positive and non-decreasing. Local Lipschitz continuity of
//! a custom ℓ is not checked; that is the caller's responsibility.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::solve_increasing;

/// Relative tolerance of the ψ₂ root solve.
pub const PSI2_RTOL: f64 = 1e-10;

/// Upper end of the construction-time grid check for custom models.
const GRID_MAX: f64 = 1e6;
const GRID_POINTS: usize = 1024;

pub type EllFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied ℓ. Construct through [`EllModel::custom`].
#[derive(Clone)]
pub struct CustomEll {
    func: EllFn,
    ratio: Option<f64>,
    finite_q_max: Option<bool>,
}

impl CustomEll {
    /// Declare whether `∫₀^∞ dv/ℓ(a+v)` is finite, bypassing the numerical
    /// divergence test in `QEvaluator::q_max`.
    pub fn with_finite_q_max(mut self, finite: bool) -> Self {
        self.finite_q_max = Some(finite);
        self
    }

    pub fn finite_q_max(&self) -> Option<bool> {
        self.finite_q_max
    }

    pub fn explicit_ratio(&self) -> Option<f64> {
        self.ratio
    }
}

/// A non-decreasing positive smoothness bound ℓ.
#[derive(Clone)]
pub enum EllModel {
    Constant { l: f64 },
    Affine { l0: f64, l1: f64 },
    Power { rho: f64, l0: f64, l1: f64 },
    ExpGrowth { l0: f64, l1: f64 },
    Custom(CustomEll),
}

/// Custom models compare equal only when they share the same function.
impl PartialEq for EllModel {
    fn eq(&self, other: &Self) -> bool {
        use EllModel::*;
        match (self, other) {
            (Constant { l: a }, Constant { l: b }) => a == b,
            (Affine { l0: a0, l1: a1 }, Affine { l0: b0, l1: b1 }) => a0 == b0 && a1 == b1,
            (Power { rho: ra, l0: a0, l1: a1 }, Power { rho: rb, l0: b0, l1: b1 }) => ra == rb && a0 == b0 && a1 == b1,
            (ExpGrowth { l0: a0, l1: a1 }, ExpGrowth { l0: b0, l1: b1 }) => a0 == b0 && a1 == b1,
            (Custom(a), Custom(b)) => {
                Arc::ptr_eq(&a.func, &b.func) && a.ratio == b.ratio && a.finite_q_max == b.finite_q_max
            }
            _ => false,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// Log-spaced grid on `[0, GRID_MAX]` with an explicit zero.
fn check_grid() -> impl Iterator<Item = f64> {
    let lo = -6.0f64;
    let hi = GRID_MAX.log10();
    std::iter::once(0.0).chain((0..GRID_POINTS - 1).map(move |i| {
        let t = i as f64 / (GRID_POINTS - 2) as f64;
        10f64.powf(lo + (hi - lo) * t)
    }))
}

impl EllModel {
    pub fn constant(l: f64) -> Result<Self> {
        check_positive("L", l)?;
        Ok(Self::Constant { l })
    }

    pub fn affine(l0: f64, l1: f64) -> Result<Self> {
        check_positive("L0", l0)?;
        check_nonneg("L1", l1)?;
        Ok(Self::Affine { l0, l1 })
    }

    pub fn power(rho: f64, l0: f64, l1: f64) -> Result<Self> {
        check_nonneg("rho", rho)?;
        check_positive("L0", l0)?;
        check_nonneg("L1", l1)?;
        Ok(Self::Power { rho, l0, l1 })
    }

    pub fn exp_growth(l0: f64, l1: f64) -> Result<Self> {
        check_positive("L0", l0)?;
        check_nonneg("L1", l1)?;
        Ok(Self::ExpGrowth { l0, l1 })
    }

    /// Wrap a closure as an ℓ model. The closure is checked for positivity
    /// and monotonicity on a 1024-point log grid over `[0, 10⁶]`; the
    /// doubling ratio is never estimated and must be supplied here if SGD
    /// is to be used.
    pub fn custom<F>(func: F, ratio: Option<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let Some(r) = ratio {
            if r.is_nan() || r < 1.0 {
                return Err(Error::InvalidModel(format!("doubling ratio must be >= 1, got {r}")));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for s in check_grid() {
            let v = func(s);
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidModel(format!("ell({s}) = {v} is not positive")));
            }
            if v < prev {
                return Err(Error::InvalidModel(format!("ell decreases near s = {s}")));
            }
            prev = v;
        }
        Ok(Self::Custom(CustomEll { func: Arc::new(func), ratio, finite_q_max: None }))
    }

    /// Re-run the parameter checks, for models built from the public variants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { l } => Self::constant(l).map(|_| ()),
            Self::Affine { l0, l1 } => Self::affine(l0, l1).map(|_| ()),
            Self::Power { rho, l0, l1 } => Self::power(rho, l0, l1).map(|_| ()),
            Self::ExpGrowth { l0, l1 } => Self::exp_growth(l0, l1).map(|_| ()),
            Self::Custom(_) => Ok(()),
        }
    }

    /// Unchecked ℓ(s). Callers guarantee `s >= 0`.
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Constant { l } => *l,
            Self::Affine { l0, l1 } => l0 + l1 * s,
            Self::Power { rho, l0, l1 } => l0 + l1 * s.powf(*rho),
            Self::ExpGrowth { l0, l1 } => l0 + l1 * s * s * s.exp(),
            Self::Custom(c) => (c.func)(s),
        }
    }

    /// ℓ(s), rejecting negative or non-finite arguments.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::Domain(format!("ell argument must be finite and >= 0, got {s}")));
        }
        Ok(self.value(s))
    }

    /// ℓ(0), the smallest value of the model.
    pub fn at_zero(&self) -> f64 {
        self.value(0.0)
    }

    /// `r = sup_{s≥0} ℓ(2s)/ℓ(s)`.
    pub fn doubling_ratio(&self) -> Result<f64> {
        Ok(match self {
            Self::Constant { .. } => 1.0,
            Self::Affine { l1, .. } => {
                if *l1 > 0.0 {
                    2.0
                } else {
                    1.0
                }
            }
            Self::Power { rho, l1, .. } => {
                if *l1 > 0.0 {
                    2f64.powf(*rho)
                } else {
                    1.0
                }
            }
            Self::ExpGrowth { l1, .. } => {
                if *l1 > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                }
            }
            Self::Custom(c) => c.ratio.ok_or(Error::RatioUnavailable)?,
        })
    }

    /// Does ℓ stay at its value at zero for every argument?
    pub fn is_flat(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Affine { l1, .. } | Self::ExpGrowth { l1, .. } => *l1 == 0.0,
            Self::Power { rho, l1, .. } => *l1 == 0.0 || *rho == 0.0,
            Self::Custom(_) => false,
        }
    }

    /// ψ₂(x) = x² / ℓ(2x).
    pub fn psi2(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain(format!("psi2 argument must be finite and >= 0, got {x}")));
        }
        Ok(self.psi2_unchecked(x))
    }

    fn psi2_unchecked(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        match *self {
            // ℓ(2x)/x directly, so x² never overflows.
            Self::Power { rho, l0, l1 } if l1 > 0.0 => x / (l0 / x + l1 * 2f64.powf(rho) * x.powf(rho - 1.0)),
            _ => x * (x / self.value(2.0 * x)),
        }
    }

    /// Checks that ψ₂ is increasing, so that ψ₂⁻¹ exists on its image.
    pub fn psi2_invertible(&self) -> Result<()> {
        if self.is_flat() {
            return Ok(());
        }
        match self {
            Self::Constant { .. } | Self::Affine { .. } => Ok(()),
            Self::Power { rho, .. } if *rho <= 2.0 => Ok(()),
            Self::Power { rho, .. } => Err(Error::NotInvertible(format!(
                "psi2 rises then falls for power growth rho = {rho} > 2"
            ))),
            Self::ExpGrowth { .. } => {
                Err(Error::NotInvertible("psi2 rises then falls for exponential growth".into()))
            }
            Self::Custom(_) => {
                let mut prev = 0.0;
                for x in check_grid().skip(1) {
                    let v = self.psi2_unchecked(x);
                    if v < prev * (1.0 - 1e-12) {
                        return Err(Error::NotInvertible(format!("psi2 decreases near x = {x}")));
                    }
                    prev = v;
                }
                Ok(())
            }
        }
    }

    /// `sup_{x≥0} ψ₂(x)` where known in closed form; custom models report
    /// the largest grid value as an estimate.
    pub fn psi2_sup(&self) -> f64 {
        if self.is_flat() {
            return f64::INFINITY;
        }
        match self {
            Self::Constant { .. } | Self::Affine { .. } => f64::INFINITY,
            Self::Power { rho, l1, .. } => {
                if *rho < 2.0 {
                    f64::INFINITY
                } else if *rho == 2.0 {
                    1.0 / (4.0 * l1)
                } else {
                    self.grid_psi2_max()
                }
            }
            Self::ExpGrowth { .. } | Self::Custom(_) => self.grid_psi2_max(),
        }
    }

    fn grid_psi2_max(&self) -> f64 {
        check_grid().map(|x| self.psi2_unchecked(x)).fold(0.0, f64::max)
    }

    /// ψ₂⁻¹(y) by doubling bracket expansion and bisection.
    pub fn psi2_inverse(&self, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::Domain(format!("psi2_inverse argument must be finite and >= 0, got {y}")));
        }
        self.psi2_invertible()?;
        if y == 0.0 {
            return Ok(0.0);
        }
        let sup = self.psi2_sup();
        if y >= sup {
            return Err(Error::OutOfImage { value: y, sup });
        }
        if let Self::Constant { l } = self {
            return Ok((l * y).sqrt());
        }
        let guess = (y * self.at_zero()).sqrt();
        solve_increasing(|x| self.psi2_unchecked(x), y, guess, PSI2_RTOL)
            .map_err(|_| Error::OutOfImage { value: y, sup })
    }

    /// JSON-friendly descriptor; `None` for custom models.
    pub fn descriptor(&self) -> Option<EllDescriptor> {
        Some(match *self {
            Self::Constant { l } => EllDescriptor::Constant { l },
            Self::Affine { l0, l1 } => EllDescriptor::Affine { l0, l1 },
            Self::Power { rho, l0, l1 } => EllDescriptor::Power { rho, l0, l1 },
            Self::ExpGrowth { l0, l1 } => EllDescriptor::ExpGrowth { l0, l1 },
            Self::Custom(_) => return None,
        })
    }
}

impl fmt::Debug for EllModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Custom(c) => f
                .debug_struct("Custom")
                .field("ratio", &c.ratio)
                .field("finite_q_max", &c.finite_q_max)
                .finish_non_exhaustive(),
            other => fmt::Display::fmt(other, f),
        }
    }
}

impl fmt::Display for EllModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { l } => write!(f, "constant(L={l})"),
            Self::Affine { l0, l1 } => write!(f, "affine(L0={l0}, L1={l1})"),
            Self::Power { rho, l0, l1 } => write!(f, "power(rho={rho}, L0={l0}, L1={l1})"),
            Self::ExpGrowth { l0, l1 } => write!(f, "exp_growth(L0={l0}, L1={l1})"),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

/// Serialized form of the closed families, e.g.
/// `{"family": "power", "rho": 2.0, "L0": 800.0, "L1": 2.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EllDescriptor {
    Constant {
        #[serde(rename = "L")]
        l: f64,
    },
    Affine {
        #[serde(rename = "L0")]
        l0: f64,
        #[serde(rename = "L1")]
        l1: f64,
    },
    Power {
        rho: f64,
        #[serde(rename = "L0")]
        l0: f64,
        #[serde(rename = "L1")]
        l1: f64,
    },
    ExpGrowth {
        #[serde(rename = "L0")]
        l0: f64,
        #[serde(rename = "L1")]
        l1: f64,
    },
}

impl TryFrom<EllDescriptor> for EllModel {
    type Error = Error;

    fn try_from(d: EllDescriptor) -> Result<Self> {
        match d {
            EllDescriptor::Constant { l } => Self::constant(l),
            EllDescriptor::Affine { l0, l1 } => Self::affine(l0, l1),
            EllDescriptor::Power { rho, l0, l1 } => Self::power(rho, l0, l1),
            EllDescriptor::ExpGrowth { l0, l1 } => Self::exp_growth(l0, l1),
        }
    }
}

impl Serialize for EllModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.descriptor() {
            Some(d) => d.serialize(serializer),
            None => Err(serde::ser::Error::custom("custom ell models cannot be serialized")),
        }
    }
}

impl<'de> Deserialize<'de> for EllModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let d = EllDescriptor::deserialize(deserializer)?;
        EllModel::try_from(d).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn families() -> Vec<EllModel> {
        vec![
            EllModel::constant(2.5).unwrap(),
            EllModel::affine(3.3, 1.0).unwrap(),
            EllModel::power(2.0, 800.0, 2.0).unwrap(),
            EllModel::power(0.5, 1.0, 4.0).unwrap(),
            EllModel::power(3.0, 1.0, 1.0).unwrap(),
            EllModel::exp_growth(1.0, 0.5).unwrap(),
        ]
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(EllModel::power(2.0, 800.0, 2.0).unwrap().eval(0.0).unwrap(), 800.0);
        assert_eq!(EllModel::constant(7.0).unwrap().eval(123.0).unwrap(), 7.0);
        assert!((EllModel::affine(3.3, 1.0).unwrap().eval(2.0).unwrap() - 5.3).abs() < 1e-15);
        let e = EllModel::exp_growth(1.0, 2.0).unwrap();
        assert!((e.eval(1.0).unwrap() - (1.0 + 2.0 * 1f64.exp())).abs() < 1e-14);
    }

    #[test]
    fn eval_rejects_bad_arguments() {
        let m = EllModel::constant(1.0).unwrap();
        assert!(matches!(m.eval(-1.0), Err(Error::Domain(_))));
        assert!(matches!(m.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(m.eval(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn constructors_reject_invalid_parameters() {
        assert!(EllModel::constant(0.0).is_err());
        assert!(EllModel::affine(0.0, 1.0).is_err());
        assert!(EllModel::affine(1.0, -1.0).is_err());
        assert!(EllModel::power(-0.5, 1.0, 1.0).is_err());
        assert!(EllModel::exp_growth(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn custom_models_are_grid_checked() {
        assert!(EllModel::custom(|s| 1.0 + s, Some(2.0)).is_ok());
        assert!(EllModel::custom(|s| 1.0 / (1.0 + s), None).is_err());
        assert!(EllModel::custom(|s| s, None).is_err());
        assert!(EllModel::custom(|s| if s > 5.0 { 1.0 } else { 2.0 }, None).is_err());
        assert!(EllModel::custom(|s| 1.0 + s, Some(0.5)).is_err());
    }

    #[test]
    fn doubling_ratios() {
        assert_eq!(EllModel::constant(3.0).unwrap().doubling_ratio().unwrap(), 1.0);
        assert_eq!(EllModel::affine(1.0, 2.0).unwrap().doubling_ratio().unwrap(), 2.0);
        assert_eq!(EllModel::power(1.5, 1.0, 2.0).unwrap().doubling_ratio().unwrap(), 2f64.powf(1.5));
        assert_eq!(EllModel::exp_growth(1.0, 1.0).unwrap().doubling_ratio().unwrap(), f64::INFINITY);
        let c = EllModel::custom(|s| 1.0 + s, None).unwrap();
        assert!(matches!(c.doubling_ratio(), Err(Error::RatioUnavailable)));
        let c = EllModel::custom(|s| 1.0 + s, Some(2.0)).unwrap();
        assert_eq!(c.doubling_ratio().unwrap(), 2.0);
    }

    #[test]
    fn affine_ratio_matches_grid_supremum() {
        // Monotone-limit oracle: (L0 + 2 L1 s)/(L0 + L1 s) increases towards 2.
        let (l0, l1) = (3.3, 1.7);
        let sup = (0..=1000)
            .map(|i| 1e6 * i as f64 / 1000.0)
            .map(|s| (l0 + 2.0 * l1 * s) / (l0 + l1 * s))
            .fold(0.0, f64::max);
        let r = EllModel::affine(l0, l1).unwrap().doubling_ratio().unwrap();
        assert!(sup <= r && r - sup < 1e-5);
    }

    #[test]
    fn psi2_values() {
        let c = EllModel::constant(4.0).unwrap();
        assert_eq!(c.psi2(3.0).unwrap(), 9.0 / 4.0);
        for m in families() {
            assert_eq!(m.psi2(0.0).unwrap(), 0.0);
        }
        let p = EllModel::power(2.0, 800.0, 2.0).unwrap();
        let ell20 = 800.0 + 2.0 * 20.0 * 20.0;
        assert_eq!(ell20, 1600.0);
        assert!((p.psi2(10.0).unwrap() - 100.0 / 1600.0).abs() < 1e-16);
        assert!(p.psi2(-1.0).is_err());
    }

    #[test]
    fn psi2_inverse_constant() {
        let c = EllModel::constant(5.0).unwrap();
        assert!((c.psi2_inverse(2.0).unwrap() - 10f64.sqrt()).abs() < 1e-14);
        assert_eq!(c.psi2_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi2_inverse_affine_matches_quadratic_formula() {
        // x²/(L0 + 2 L1 x) = z  <=>  x = L1 z + sqrt(L1² z² + L0 z).
        let (l0, l1) = (3.3, 1.0);
        let m = EllModel::affine(l0, l1).unwrap();
        for &z in &[1e-6, 1e-3, 0.1, 1.0, 10.0, 1e4] {
            let exact = l1 * z + (l1 * l1 * z * z + l0 * z).sqrt();
            let x = m.psi2_inverse(z).unwrap();
            assert!((x - exact).abs() <= 1e-9 * exact, "z={z}: {x} vs {exact}");
            assert!(x <= 2.0 * l1 * z + (l0 * z).sqrt());
        }
    }

    #[test]
    fn psi2_inverse_rejects_out_of_image() {
        // Grid-maximisation oracle for the supremum of x²/(1 + 4x²).
        let p = EllModel::power(2.0, 1.0, 1.0).unwrap();
        let grid_sup = (1..=100_000).map(|i| i as f64 * 0.1).map(|x| x * x / (1.0 + 4.0 * x * x)).fold(0.0, f64::max);
        assert!(grid_sup < 0.25 && grid_sup > 0.2499);
        assert!(matches!(p.psi2_inverse(0.25), Err(Error::OutOfImage { .. })));
        assert!(matches!(p.psi2_inverse(0.3), Err(Error::OutOfImage { .. })));
        assert!(p.psi2_inverse(0.2).is_ok());
    }

    #[test]
    fn psi2_inverse_rejects_non_invertible() {
        assert!(matches!(EllModel::exp_growth(1.0, 1.0).unwrap().psi2_inverse(0.01), Err(Error::NotInvertible(_))));
        assert!(matches!(EllModel::power(3.0, 1.0, 1.0).unwrap().psi2_inverse(0.01), Err(Error::NotInvertible(_))));
        let bumpy = EllModel::custom(|s| 1.0 + s.powi(4), None).unwrap();
        assert!(matches!(bumpy.psi2_inverse(0.01), Err(Error::NotInvertible(_))));
        let fine = EllModel::custom(|s| 1.0 + s.sqrt(), None).unwrap();
        let x = fine.psi2_inverse(2.0).unwrap();
        assert!((fine.psi2(x).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn json_descriptor_roundtrip() {
        let m: EllModel = serde_json::from_str(r#"{"family": "power", "rho": 2.0, "L0": 800.0, "L1": 2.0}"#).unwrap();
        assert!(matches!(m, EllModel::Power { rho, l0, l1 } if rho == 2.0 && l0 == 800.0 && l1 == 2.0));
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"family":"power","rho":2.0,"L0":800.0,"L1":2.0}"#);
        let c: EllModel = serde_json::from_str(r#"{"family": "constant", "L": 1.5}"#).unwrap();
        assert_eq!(c.at_zero(), 1.5);
        let e: EllModel = serde_json::from_str(r#"{"family": "exp_growth", "L0": 1, "L1": 1}"#).unwrap();
        assert!(matches!(e, EllModel::ExpGrowth { .. }));
        assert!(serde_json::from_str::<EllModel>(r#"{"family": "affine", "L0": -1, "L1": 1}"#).is_err());
        assert!(serde_json::from_str::<EllModel>(r#"{"family": "cubic", "L0": 1}"#).is_err());
        let custom = EllModel::custom(|s| 1.0 + s, None).unwrap();
        assert!(serde_json::to_string(&custom).is_err());
    }

    fn model_strategy() -> impl Strategy<Value = EllModel> {
        prop_oneof![
            (0.01f64..1e3).prop_map(|l| EllModel::constant(l).unwrap()),
            (0.01f64..1e3, 0.0f64..10.0).prop_map(|(a, b)| EllModel::affine(a, b).unwrap()),
            (0.0f64..4.0, 0.01f64..1e3, 0.0f64..10.0).prop_map(|(r, a, b)| EllModel::power(r, a, b).unwrap()),
            (0.01f64..1e3, 0.0f64..10.0).prop_map(|(a, b)| EllModel::exp_growth(a, b).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn monotone_and_positive(m in model_strategy(), s1 in 0.0f64..50.0, ds in 0.0f64..50.0) {
            let s2 = s1 + ds;
            let (a, b) = (m.eval(s1).unwrap(), m.eval(s2).unwrap());
            prop_assert!(a <= b);
            prop_assert!(a >= m.at_zero() && m.at_zero() > 0.0);
        }

        #[test]
        fn ratio_bounds_doubling(m in model_strategy(), s in 0.0f64..200.0) {
            let r = m.doubling_ratio().unwrap();
            if r.is_finite() {
                let q = m.value(2.0 * s) / m.value(s);
                prop_assert!(q <= r * (1.0 + 1e-12), "ratio {} exceeds {}", q, r);
            }
        }

        #[test]
        fn psi2_inverse_roundtrip(m in model_strategy(), frac in 0.0f64..0.999, scale in -6.0f64..6.0) {
            if m.psi2_invertible().is_ok() {
                let sup = m.psi2_sup();
                let y = if sup.is_finite() { frac * sup } else { frac * 10f64.powf(scale) };
                // Preimages beyond the float range cannot be represented.
                if m.psi2(f64::MAX / 4.0).unwrap() <= y {
                    return Ok(());
                }
                let x = m.psi2_inverse(y).unwrap();
                let back = m.psi2(x).unwrap();
                prop_assert!((back - y).abs() <= 1e-8 * y, "y={} back={}", y, back);
            }
        }
    }
}
