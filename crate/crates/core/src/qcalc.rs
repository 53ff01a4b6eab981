//! The q-function `q(s;a) = ∫₀^s dv/ℓ(a+v)`, its inverse, and the step
//! size and descent decrement derived from it.
//!
//! `q(·;a)` is strictly increasing with `q(0;a) = 0`, bounded above by
//! `q_max(a) = ∫₀^∞ dv/ℓ(a+v)`. Its inverse bounds how fast the gradient can
//! change along a segment, and minimising the resulting upper model of `f`
//! along `-∇f(x)` gives the step
//!
//! ```text
//! γ(g) = ∫₀¹ dv / ℓ(g + g v),        g = ‖∇f(x)‖,
//! ```
//!
//! with guaranteed decrease `g² ∫₀¹ (1-v)/ℓ(g + g v) dv`.
//!
//! Integrals are evaluated by adaptive Simpson quadrature over geometrically
//! growing panels `[0,1], [1,2], [2,4], …`, so long ranges keep a relative
//! accuracy close to `quad_rtol`. Constant and affine models use closed forms.

use crate::ell::EllModel;
use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;

/// Evaluates q-function quantities for one ℓ model.
#[derive(Debug, Clone)]
pub struct QEvaluator {
    model: EllModel,
    pub quad_rtol: f64,
    pub quad_max_depth: u32,
    pub root_rtol: f64,
}

fn check_arg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl QEvaluator {
    pub fn new(model: EllModel) -> Self {
        Self { model, quad_rtol: 1e-10, quad_max_depth: 50, root_rtol: 1e-12 }
    }

    pub fn model(&self) -> &EllModel {
        &self.model
    }

    fn quad<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        adaptive_simpson(f, lo, hi, self.quad_rtol, self.quad_max_depth).into_result()
    }

    /// `∫_lo^hi dv/ℓ(a+v)` over geometric panels.
    fn inv_ell_integral(&self, a: f64, lo: f64, hi: f64) -> Result<f64> {
        let f = |v: f64| 1.0 / self.model.value(a + v);
        let mut total = 0.0;
        let mut left = lo;
        while left < hi {
            let right = if left < 1.0 { hi.min(1.0) } else { hi.min(2.0 * left) };
            total += self.quad(f, left, right)?;
            left = right;
        }
        Ok(total)
    }

    /// q(s;a).
    pub fn q(&self, s: f64, a: f64) -> Result<f64> {
        check_arg("s", s)?;
        check_arg("a", a)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        if self.model.is_flat() {
            return Ok(s / self.model.at_zero());
        }
        match self.model {
            EllModel::Affine { l0, l1 } => Ok((l1 * s / (l0 + l1 * a)).ln_1p() / l1),
            _ => self.inv_ell_integral(a, 0.0, s),
        }
    }

    /// q_max(a) = sup_s q(s;a), possibly `+∞`.
    pub fn q_max(&self, a: f64) -> Result<f64> {
        check_arg("a", a)?;
        if self.model.is_flat() {
            return Ok(f64::INFINITY);
        }
        match &self.model {
            EllModel::Constant { .. } | EllModel::Affine { .. } => Ok(f64::INFINITY),
            EllModel::Power { rho, .. } if *rho <= 1.0 => Ok(f64::INFINITY),
            EllModel::Power { rho, l0, l1 } => self.power_q_max(*rho, *l0, *l1, a),
            EllModel::ExpGrowth { l1, .. } => self.exp_growth_q_max(*l1, a),
            EllModel::Custom(c) => match c.finite_q_max() {
                Some(false) => Ok(f64::INFINITY),
                Some(true) => self.custom_q_max(a, true),
                None => self.custom_q_max(a, false),
            },
        }
    }

    /// Head `[a, U]` by panels, tail `[U, ∞)` mapped onto `t ∈ (0, 1]` with
    /// `u = U t^{-1/(ρ-1)}`, which leaves a bounded smooth integrand.
    fn power_q_max(&self, rho: f64, l0: f64, l1: f64, a: f64) -> Result<f64> {
        let width = (l0 / l1).powf(1.0 / rho).max(1.0);
        let head = self.inv_ell_integral(a, 0.0, width)?;
        let u = a + width;
        let k = rho / (rho - 1.0);
        let lead = u / (rho - 1.0);
        let top = l1 * u.powf(rho);
        let tail = self.quad(|t: f64| lead / (l0 * t.powf(k) + top), 0.0, 1.0)?;
        Ok(head + tail)
    }

    /// Integrates until the tail bound `∫_W^∞ e^{-u}/(L1 u²) du ≤ e^{-W}/(L1 W²)`
    /// is negligible.
    fn exp_growth_q_max(&self, l1: f64, a: f64) -> Result<f64> {
        let mut reach = 1.0;
        let mut total = self.inv_ell_integral(a, 0.0, reach)?;
        loop {
            let w = a + reach;
            let tail = (-w).exp() / (l1 * w * w);
            if tail <= 1e-3 * self.quad_rtol * total {
                return Ok(total);
            }
            total += self.inv_ell_integral(a, reach, 2.0 * reach)?;
            reach *= 2.0;
        }
    }

    /// Partial integrals over `[0, 16^j]`. Increments that stop shrinking
    /// mean divergence; a geometric tail below tolerance means convergence;
    /// anything else is reported as inconclusive unless the caller already
    /// declared the integral finite.
    fn custom_q_max(&self, a: f64, declared_finite: bool) -> Result<f64> {
        let mut reach = 16.0;
        let mut total = self.inv_ell_integral(a, 0.0, reach)?;
        let mut prev_inc = f64::NAN;
        let mut flat_run = 0;
        for _ in 0..50 {
            let inc = self.inv_ell_integral(a, reach, 16.0 * reach)?;
            total += inc;
            reach *= 16.0;
            if inc <= 1e-3 * self.quad_rtol * total {
                return Ok(total);
            }
            if prev_inc.is_finite() {
                let ratio = inc / prev_inc;
                if ratio < 1.0 {
                    let tail = inc * ratio / (1.0 - ratio);
                    if ratio <= 0.5 && tail <= self.quad_rtol * total {
                        return Ok(total + tail);
                    }
                }
                if ratio >= 0.999 {
                    flat_run += 1;
                    if flat_run >= 4 && !declared_finite {
                        return Ok(f64::INFINITY);
                    }
                } else {
                    flat_run = 0;
                }
            }
            prev_inc = inc;
        }
        Err(Error::QMaxInconclusive)
    }

    /// q⁻¹(t;a): doubling bracket expansion from the lower bound `t·ℓ(a)`,
    /// then Newton steps (derivative `1/ℓ(a+s)`) kept inside the bracket,
    /// falling back to bisection.
    pub fn q_inverse(&self, t: f64, a: f64) -> Result<f64> {
        check_arg("t", t)?;
        check_arg("a", a)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let q_max = self.q_max(a)?;
        if t >= q_max {
            return Err(Error::BeyondQMax { t, q_max });
        }
        if self.model.is_flat() {
            return Ok(self.model.at_zero() * t);
        }
        if let EllModel::Affine { l0, l1 } = self.model {
            return Ok((l0 + l1 * a) * (l1 * t).exp_m1() / l1);
        }

        // q(s) <= s/ℓ(a), so the root is at least t·ℓ(a).
        let mut lo = t * self.model.value(a);
        let mut q_lo = self.inv_ell_integral(a, 0.0, lo)?;
        if (q_lo - t).abs() <= self.root_rtol * t {
            return Ok(lo);
        }
        let mut hi = 2.0 * lo;
        let mut q_hi = q_lo + self.inv_ell_integral(a, lo, hi)?;
        let mut expansions = 0;
        while q_hi < t {
            lo = hi;
            q_lo = q_hi;
            hi *= 2.0;
            expansions += 1;
            if !hi.is_finite() || expansions > 2100 {
                return Err(Error::NoBracket(format!("q(s;{a}) never reaches {t}")));
            }
            q_hi = q_lo + self.inv_ell_integral(a, lo, hi)?;
        }

        let mut s = lo;
        let mut q_s = q_lo;
        for _ in 0..300 {
            let newton = s + (t - q_s) * self.model.value(a + s);
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if next <= lo || next >= hi {
                break;
            }
            let q_next = q_lo + self.inv_ell_integral(a, lo, next)?;
            if (q_next - t).abs() <= self.root_rtol * t {
                return Ok(next);
            }
            if q_next < t {
                lo = next;
                q_lo = q_next;
            } else {
                hi = next;
            }
            s = lo;
            q_s = q_lo;
        }
        Ok(s)
    }

    /// Step size `γ(g) = ∫₀¹ dv/ℓ(g + g v)`, which lies in
    /// `[1/ℓ(2g), 1/ℓ(g)]`. At `g = 0` the integrand is constant and the
    /// step is `1/ℓ(0)`.
    pub fn optimal_step(&self, g: f64) -> Result<f64> {
        check_arg("g", g)?;
        if g == 0.0 || self.model.is_flat() {
            return Ok(1.0 / self.model.at_zero());
        }
        match self.model {
            EllModel::Affine { l0, l1 } => Ok((l1 * g / (l0 + l1 * g)).ln_1p() / (l1 * g)),
            _ => self.quad(|v: f64| 1.0 / self.model.value(g + g * v), 0.0, 1.0),
        }
    }

    /// Guaranteed decrease of the upper model at the optimal step:
    /// `g² ∫₀¹ (1-v)/ℓ(g + g v) dv`.
    pub fn descent_decrement(&self, g: f64) -> Result<f64> {
        check_arg("g", g)?;
        if g == 0.0 {
            return Ok(0.0);
        }
        if self.model.is_flat() {
            return Ok(g * g / (2.0 * self.model.at_zero()));
        }
        let integral = self.quad(|v: f64| (1.0 - v) / self.model.value(g + g * v), 0.0, 1.0)?;
        Ok(g * g * integral)
    }

    /// `∫₀^d q⁻¹(τ;a) dτ`, the curvature term of the upper model of `f`,
    /// by quadrature over numerically inverted q.
    pub fn q_inverse_integral(&self, d: f64, a: f64) -> Result<f64> {
        check_arg("d", d)?;
        check_arg("a", a)?;
        if d == 0.0 {
            return Ok(0.0);
        }
        let q_max = self.q_max(a)?;
        if d >= q_max {
            return Err(Error::BeyondQMax { t: d, q_max });
        }
        if self.model.is_flat() {
            return Ok(0.5 * self.model.at_zero() * d * d);
        }
        let first_error = std::cell::RefCell::new(None);
        let integrand = |tau: f64| match self.q_inverse(tau, a) {
            Ok(v) => v,
            Err(e) => {
                first_error.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let result = adaptive_simpson(integrand, 0.0, d, self.quad_rtol, self.quad_max_depth);
        if let Some(e) = first_error.into_inner() {
            return Err(e);
        }
        result.into_result()
    }
}
