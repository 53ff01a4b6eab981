//! Benchmark objectives with analytic gradients, open box domains, ℓ
//! certificates and known minimisers, plus a noisy gradient oracle.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ell::EllModel;
use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Relative inset of the sampling box from the domain boundary.
pub const SAMPLE_INSET: f64 = 1e-6;

/// Product of open intervals `(lower_i, upper_i)`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OpenBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::uniform(dim, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Strict containment; NaN coordinates are outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l < v && v < u)
    }

    /// The box shrunk by `inset·(upper - lower)` on each side.
    pub fn inset(&self, inset: f64) -> Self {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        for i in 0..self.dim() {
            let w = upper[i] - lower[i];
            lower[i] += inset * w;
            upper[i] -= inset * w;
        }
        Self { lower, upper }
    }

    /// Uniform draw; the box must be bounded.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect()
    }
}

/// An objective with its oracles and the facts known about it.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub dim: usize,
    pub domain: OpenBox,
    /// Bounded box used by samplers.
    pub sample_box: OpenBox,
    pub certified_ell: Option<EllModel>,
    pub f_star: Option<f64>,
    pub x_star: Option<Vec<f64>>,
    pub convex: bool,
    f: ScalarFn,
    grad: VectorFn,
    hess_norm: Option<ScalarFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("certified_ell", &self.certified_ell)
            .field("f_star", &self.f_star)
            .field("x_star", &self.x_star)
            .field("convex", &self.convex)
            .finish()
    }
}

impl Problem {
    /// A problem from raw oracles. `f` and `grad` are only called on points
    /// inside `domain`.
    pub fn new<F, G>(name: impl Into<String>, domain: OpenBox, sample_box: OpenBox, f: F, grad: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim: domain.dim(),
            domain,
            sample_box,
            certified_ell: None,
            f_star: None,
            x_star: None,
            convex: false,
            f: Arc::new(f),
            grad: Arc::new(grad),
            hess_norm: None,
        }
    }

    pub fn with_hess_norm<H>(mut self, h: H) -> Self
    where
        H: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.hess_norm = Some(Arc::new(h));
        self
    }

    pub fn with_certificate(mut self, ell: EllModel) -> Self {
        self.certified_ell = Some(ell);
        self
    }

    pub fn with_minimum(mut self, x_star: Option<Vec<f64>>, f_star: f64) -> Self {
        self.x_star = x_star;
        self.f_star = Some(f_star);
        self
    }

    pub fn convex(mut self, convex: bool) -> Self {
        self.convex = convex;
        self
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: x.len() })
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.domain.contains(x)
    }

    /// `f(x)`, or `+∞` when `x` is not strictly inside the domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            (self.f)(x)
        } else {
            f64::INFINITY
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if !self.contains(x) {
            return Err(Error::OutsideDomain);
        }
        Ok((self.grad)(x))
    }

    /// Spectral norm of the Hessian where an oracle exists and `x` is inside.
    pub fn hess_norm(&self, x: &[f64]) -> Option<f64> {
        match &self.hess_norm {
            Some(h) if self.contains(x) => Some(h(x)),
            _ => None,
        }
    }

    pub fn has_hess_norm(&self) -> bool {
        self.hess_norm.is_some()
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_box.sample(rng)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Names accepted by [`builtin`].
pub const BUILTINS: [&str; 6] = ["log_barrier", "exp_sum", "exp_drift", "toy_net", "quadratic", "neg_log"];

/// JSON form `{"name": "exp_drift", "mu": 0.01, "L1": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl ProblemDescriptor {
    pub fn build(&self) -> Result<Problem> {
        builtin(&self.name, &self.params)
    }
}

struct Params<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, f64>,
}

impl Params<'_> {
    fn allow(&self, keys: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParameter(format!("'{}' does not take parameter '{k}'", self.name))),
            None => Ok(()),
        }
    }

    fn positive(&self, key: &str, default: Option<f64>) -> Result<Option<f64>> {
        match self.map.get(key).copied().or(default) {
            Some(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
            Some(v) => Err(Error::InvalidParameter(format!("{key} must be finite and > 0, got {v}"))),
            None => Ok(None),
        }
    }
}

/// Builds a named benchmark problem. Unknown parameter keys are rejected.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Problem> {
    let p = Params { name, map: params };
    match name {
        "log_barrier" => {
            p.allow(&[])?;
            Ok(log_barrier())
        }
        "exp_sum" => {
            p.allow(&[])?;
            Ok(exp_sum())
        }
        "exp_drift" => {
            p.allow(&["mu", "L1"])?;
            let mu = p.positive("mu", Some(0.01))?.unwrap();
            let l1 = p.positive("L1", Some(1.0))?.unwrap();
            exp_drift(mu, l1)
        }
        "toy_net" => {
            p.allow(&[])?;
            Ok(toy_net())
        }
        "quadratic" => {
            p.allow(&["L", "dim"])?;
            let l = p.positive("L", Some(1.0))?.unwrap();
            let dim = p.positive("dim", Some(1.0))?.unwrap();
            if dim.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("dim must be an integer, got {dim}")));
            }
            quadratic(l, dim as usize)
        }
        "neg_log" => {
            p.allow(&["L0"])?;
            neg_log(p.positive("L0", None)?)
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// `f(x) = -ln x - ln(0.1 - x)` on `(0, 0.1)`.
pub fn log_barrier() -> Problem {
    let domain = OpenBox::uniform(1, 0.0, 0.1);
    let sample_box = domain.inset(SAMPLE_INSET);
    Problem::new("log_barrier", domain, sample_box, |x| -x[0].ln() - (0.1 - x[0]).ln(), |x| {
        vec![-1.0 / x[0] + 1.0 / (0.1 - x[0])]
    })
    .with_hess_norm(|x| 1.0 / (x[0] * x[0]) + 1.0 / ((0.1 - x[0]) * (0.1 - x[0])))
    .with_certificate(EllModel::power(2.0, 800.0, 2.0).unwrap())
    .with_minimum(Some(vec![0.05]), -2.0 * 0.05f64.ln())
    .convex(true)
}

/// `f(x) = e^x + e^{1-x}`.
pub fn exp_sum() -> Problem {
    Problem::new(
        "exp_sum",
        OpenBox::unbounded(1),
        OpenBox::uniform(1, -5.0, 6.0),
        |x| x[0].exp() + (1.0 - x[0]).exp(),
        |x| vec![x[0].exp() - (1.0 - x[0]).exp()],
    )
    .with_hess_norm(|x| x[0].exp() + (1.0 - x[0]).exp())
    .with_certificate(EllModel::affine(3.3, 1.0).unwrap())
    .with_minimum(Some(vec![0.5]), 2.0 * 0.5f64.exp())
    .convex(true)
}

/// `f(x) = -μx + e^{L1 x}`, minimised at `ln(μ/L1)/L1`.
pub fn exp_drift(mu: f64, l1: f64) -> Result<Problem> {
    let x_star = (mu / l1).ln() / l1;
    let f_star = -mu * x_star + mu / l1;
    let half = 5.0 / l1;
    Ok(Problem::new(
        "exp_drift",
        OpenBox::unbounded(1),
        OpenBox::uniform(1, x_star - half, x_star + half),
        move |x| -mu * x[0] + (l1 * x[0]).exp(),
        move |x| vec![-mu + l1 * (l1 * x[0]).exp()],
    )
    .with_hess_norm(move |x| l1 * l1 * (l1 * x[0]).exp())
    .with_certificate(EllModel::affine(l1 * mu, l1)?)
    .with_minimum(Some(vec![x_star]), f_star)
    .convex(true))
}

/// `f(x, y) = ln(1 + e^{-xy})`. No global certificate exists.
pub fn toy_net() -> Problem {
    fn sigma_neg(t: f64) -> f64 {
        // 1/(1+e^t), stable for large |t|.
        if t > 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        }
    }
    Problem::new(
        "toy_net",
        OpenBox::unbounded(2),
        OpenBox::uniform(2, -5.0, 5.0),
        |x| {
            let t = -x[0] * x[1];
            if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() }
        },
        |x| {
            let s = sigma_neg(x[0] * x[1]);
            vec![-s * x[1], -s * x[0]]
        },
    )
    .with_hess_norm(|x| {
        let (a, b) = (x[0], x[1]);
        let s = sigma_neg(a * b);
        let c = s * (1.0 - s);
        // [[c b², c a b - s], [c a b - s, c a²]]
        let (p, q, r) = (c * b * b, c * a * b - s, c * a * a);
        let mean = 0.5 * (p + r);
        let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        (mean + rad).abs().max((mean - rad).abs())
    })
}

/// `f(x) = (L/2)‖x‖²`.
pub fn quadratic(l: f64, dim: usize) -> Result<Problem> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be >= 1".into()));
    }
    Ok(Problem::new(
        "quadratic",
        OpenBox::unbounded(dim),
        OpenBox::uniform(dim, -10.0, 10.0),
        move |x| 0.5 * l * x.iter().map(|v| v * v).sum::<f64>(),
        move |x| x.iter().map(|v| l * v).collect(),
    )
    .with_hess_norm(move |_| l)
    .with_certificate(EllModel::constant(l)?)
    .with_minimum(Some(vec![0.0; dim]), 0.0)
    .convex(true))
}

/// `f(x) = -ln x` on `(0, ∞)`; `f'' = (f')²`, so `Power(2, L0, 1)` is a
/// certificate for every `L0 > 0`. Unbounded below.
pub fn neg_log(l0: Option<f64>) -> Result<Problem> {
    let p = Problem::new(
        "neg_log",
        OpenBox::uniform(1, 0.0, f64::INFINITY),
        OpenBox::uniform(1, 1e-2, 1e2),
        |x| -x[0].ln(),
        |x| vec![-1.0 / x[0]],
    )
    .with_hess_norm(|x| 1.0 / (x[0] * x[0]))
    .convex(true);
    Ok(match l0 {
        Some(l0) => p.with_certificate(EllModel::power(2.0, l0, 1.0)?),
        None => p,
    })
}

/// Gradient oracle with additive Gaussian noise.
///
/// Each coordinate gets independent `N(0, σ²/(4d))` noise. Then
/// `‖ξ‖²/σ² = χ²_d/(4d)` and `E exp(‖ξ‖²/σ²) = (1 - 1/(2d))^{-d/2} ≤ √2 < e`
/// for every dimension, so the light-tail condition holds with parameter σ.
/// The generator is ChaCha8 seeded from a 64-bit seed.
#[derive(Debug, Clone)]
pub struct StochasticOracle {
    pub problem: Problem,
    pub sigma: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl StochasticOracle {
    pub fn new(problem: Problem, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { problem, sigma, seed, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Standard deviation of each noise coordinate of a single draw.
    pub fn coordinate_std(&self) -> f64 {
        self.sigma / (4.0 * self.problem.dim as f64).sqrt()
    }

    /// Mean of `batch` independent noisy gradients at `x`.
    pub fn sample_gradient(&mut self, x: &[f64], batch: u64) -> Result<Vec<f64>> {
        if batch == 0 {
            return Err(Error::InvalidParameter("batch must be >= 1".into()));
        }
        let grad = self.problem.gradient(x)?;
        if self.sigma == 0.0 {
            return Ok(grad);
        }
        let std = self.coordinate_std();
        let mut sum = vec![0.0; grad.len()];
        for _ in 0..batch {
            for (s, g) in sum.iter_mut().zip(&grad) {
                let z: f64 = self.rng.sample(StandardNormal);
                *s += g + std * z;
            }
        }
        let b = batch as f64;
        Ok(sum.into_iter().map(|s| s / b).collect())
    }
}

/// `E exp(‖ξ‖²/σ²)` for the noise model in dimension `d`.
pub fn noise_mgf_bound(d: usize) -> f64 {
    (1.0 - 1.0 / (2.0 * d as f64)).powf(-(d as f64) / 2.0)
}
