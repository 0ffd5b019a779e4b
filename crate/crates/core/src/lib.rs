//! Online zeroth-order optimization on Hadamard manifolds.
//!
//! The crate provides the manifold interface with Euclidean and SPD
//! instantiations, a two-point time-varying gradient oracle, the projected
//! gradient-free iterate with constant, optimal and doubling schedules, the
//! analytical tracking and regret bounds, and a drifting Karcher-mean study on
//! SPD matrices.
//!
//! Multi-run work fans out over rayon when the `parallel` feature is on (the
//! default); every parallel path has a sequential twin selected with
//! [`par::Execution::Sequential`] and both produce identical results.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
mod error;
pub mod karcher;
pub mod manifold;
pub mod optimizer;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod suites;

pub use error::{GeoError, Result};
pub use manifold::{
    make_euclidean, project_ball, Euclidean, GeodesicBall, Manifold, ManifoldDescriptor,
    ManifoldPoint, Spd, TangentVector,
};
pub use rng::RandomStream;
