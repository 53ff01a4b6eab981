//! Gradient methods under generalized smoothness `‖∇²f(x)‖ ≤ ℓ(‖∇f(x)‖)`.
//!
//! The step size `γ(g) = ∫₀¹ dv/ℓ(g + g v)` is computed by quadrature from
//! an [`EllModel`]; see [`qcalc`] for the underlying q-function, [`gd`] and
//! [`sgd`] for the solvers, [`rates`] for complexity bounds and [`verify`]
//! for sampling checks of the inequalities behind them.

pub mod ell;
pub mod error;
pub mod gd;
pub mod numeric;
pub mod problems;
pub mod qcalc;
pub mod rates;
pub mod sgd;
pub mod trace;
pub mod verify;

pub use ell::{CustomEll, EllDescriptor, EllModel};
pub use error::{Error, Result};
pub use gd::{paper_step, solve, SolverConfig};
pub use problems::{builtin, Problem, ProblemDescriptor, StochasticOracle};
pub use qcalc::QEvaluator;
pub use rates::{convex_rate, nonconvex_rate, rate, sgd_rate, RateQuery, RateReport, Setting};
pub use sgd::{batch_size, sgd_solve, SgdConfig};
pub use trace::{Record, Status, StepRule, Trace};
pub use verify::CheckReport;
