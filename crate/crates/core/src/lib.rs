//! Bounds for delay evolution equations `u̇ = A(t)u + G(t, u(t−τ)) + f(t)`.
//!
//! The crate integrates the vector system and its scalar comparison equation
//! by the method of steps, evaluates the integral quantities behind the
//! explicit envelopes, and checks the hypotheses of the stability
//! certificates.
//!
//! ```
//! use delaybound::{solve_comparison, BoundData, ScalarFn, StepControl};
//!
//! let bd = BoundData::new(
//!     ScalarFn::constant(0.0),
//!     ScalarFn::constant(1.0),
//!     ScalarFn::constant(0.0),
//!     2.0,
//!     1.0,
//!     ScalarFn::constant(1.0),
//! )
//! .unwrap();
//! let h = solve_comparison(&bd, 2.0, &StepControl::default()).unwrap();
//! assert!((h.eval(2.0).unwrap() - 13.0 / 3.0).abs() < 1e-8);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod certificates;
pub mod comparison;
pub mod error;
pub mod integrals;
pub mod linalg;
pub mod model;
mod num;
pub mod quadrature;
mod steps;
pub mod system;
pub mod tail;

pub use certificates::{
    check_corollary1, check_mu_certificate, check_theorem1, check_theorem2, classify_longterm, linear_certificate,
    Certificate, CheckOptions, Constants, Envelope, LongTerm, Margin, Theorem, Verdict,
};
pub use comparison::{bound_theorem2, envelope_lemma1, solve_comparison, solve_comparison_perturbed, zeta, ScalarTrajectory};
pub use error::{Error, Result, SolveError};
pub use integrals::{
    h_tau, kernel_integral, nu, omega_sup, running_sup_integral, sigma, tail_integral, uniform_grid, BoundContext,
    EnvelopeValue, OmegaSup, RunningSup, TailIntegral,
};
pub use linalg::{gamma_from_matrix, log_norm, norm, Mat};
pub use model::{
    default_rotation, verify_growth_majorant, BoundData, GrowthReport, HistoryFn, MatrixFn, NonlinearMap, Nonlinearity,
    ProblemSpec, ScalarFn, VectorFn,
};
pub use quadrature::{integrate, integrate_with, Integral, Primitive, QuadratureSettings};
pub use steps::{SolveStats, StepControl};
pub use system::{norm_curve, residual_check, solve_system, ResidualReport, VectorTrajectory};
pub use tail::{GammaTail, TailBound, TailModel};
