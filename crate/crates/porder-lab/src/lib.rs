//! porder-lab: a convergence-rate analysis toolkit.
//!
//! The crate measures how fast iterative methods converge when classical
//! Q/R-order theory gives ambiguous or vacuous answers: sublinear
//! fractional-power rates of Newton's method near flat roots, linearithmic
//! and anti-linearithmic decay, gradient descent on radially symmetric
//! objectives, and K-point inverse-interpolation root finders on functions
//! with merely Hölder-continuous derivatives.
//!
//! The pieces fit together in a pipeline:
//!
//! * [`numerics`]: extended-precision values ([`numerics::XReal`]) and
//!   log-domain error magnitudes ([`numerics::LogError`]), so that errors
//!   like `C^(k ln k)` remain representable for hundreds of iterations.
//! * [`solvers`]: fixed-point, Newton, radial gradient-descent, and K-point
//!   inverse-interpolation drivers producing iterate histories.
//! * [`rate`]: error sequences, rate-model fitting, and the estimators that
//!   turn a history into a classified convergence rate.
//! * [`spectral`]: small dense spectral analysis (spectral radius, dominant
//!   projector, general-position check) for linear fixed-point maps.
//! * [`testbed`]: a catalog of designed test problems with closed-form rate
//!   predictions, synthetic counterexample sequences, and the characteristic
//!   roots of K-point methods.
//! * [`experiments`]: a registry of named experiments that reproduce the
//!   designed studies end to end and emit CSV/JSON artifacts.
//!
//! ```
//! use porder_lab::rate::{classify_psi, ClassifyConfig, ErrorSequence};
//!
//! // A geometric error sequence xi_k = 0.7^k classifies as Power(1)
//! // (psi(k) = k) with base 0.7.
//! let seq = ErrorSequence::from_lambdas(
//!     "geometric",
//!     (0..120).map(|k| (k, 0.7_f64.ln().abs() * k as f64)),
//! );
//! let report = classify_psi(&seq, &ClassifyConfig::default()).unwrap();
//! assert!((report.p_base - 0.7).abs() < 1e-6);
//! ```

pub mod experiments;
pub mod numerics;
pub mod rate;
pub mod solvers;
pub mod spectral;
pub mod testbed;

/// The user guide, one chapter per submodule.
///
/// These pages are the same markdown files the rendered book in `book/` is
/// built from, so the code in them is compiled and run by `cargo test`;
/// the book cannot drift from the crate.
pub mod guide {
    #[doc = include_str!("guide/orders.md")]
    pub mod orders {}

    #[doc = include_str!("guide/estimators.md")]
    pub mod estimators {}

    #[doc = include_str!("guide/solvers.md")]
    pub mod solvers {}

    #[doc = include_str!("guide/testbed.md")]
    pub mod testbed {}

    #[doc = include_str!("guide/experiments.md")]
    pub mod experiments {}

    #[doc = include_str!("guide/spectral.md")]
    pub mod spectral {}
}
