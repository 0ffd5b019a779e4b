//! Hadamard-manifold interface in ambient coordinates.
//!
//! Points and tangent vectors are stored as flat coordinate vectors of the
//! embedding space (length `n`). Every geometry-dependent routine in the crate
//! is written against [`Manifold`]; [`Euclidean`] and [`Spd`] are the two
//! instantiations.

mod euclidean;
pub mod spd;

pub use euclidean::{make_euclidean, Euclidean};
pub use spd::{Spd, SymEig};

use nalgebra::DVector;

use crate::error::{contract, GeoError, Result};
use crate::rng::RandomStream;

/// Absolute tolerance on manifold-membership predicates.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldDescriptor {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    /// Lower bound on sectional curvature, `κ ≤ 0`.
    pub curvature_lower_bound: f64,
}

impl ManifoldDescriptor {
    pub fn new(ambient_dim: usize, intrinsic_dim: usize, kappa: f64) -> Result<Self> {
        if intrinsic_dim == 0 || intrinsic_dim > ambient_dim {
            return Err(contract(format!(
                "need 1 <= d <= n, got d = {intrinsic_dim}, n = {ambient_dim}"
            )));
        }
        if !(kappa <= 0.0) {
            return Err(contract(format!(
                "curvature bound must be <= 0, got {kappa}"
            )));
        }
        Ok(Self {
            ambient_dim,
            intrinsic_dim,
            curvature_lower_bound: kappa,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub coords: DVector<f64>,
}

impl ManifoldPoint {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub coords: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, coords: DVector<f64>) -> Self {
        Self { base, coords }
    }

    pub fn zero_at(base: &ManifoldPoint) -> Self {
        Self::new(base.clone(), DVector::zeros(base.dim()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.base.clone(), &self.coords * s)
    }

    /// `self + s * other`; both vectors must share a base point.
    pub fn axpy(&self, s: f64, other: &TangentVector) -> Result<Self> {
        ensure_based_at(other, &self.base)?;
        Ok(Self::new(
            self.base.clone(),
            &self.coords + &other.coords * s,
        ))
    }

    pub fn is_based_at(&self, x: &ManifoldPoint) -> bool {
        same_point(&self.base, x)
    }
}

fn same_point(a: &ManifoldPoint, b: &ManifoldPoint) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let scale = 1.0 + a.coords.amax().max(b.coords.amax());
    (&a.coords - &b.coords).amax() <= 1e-12 * scale
}

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GeoError::DimensionMismatch { expected, found })
    }
}

pub(crate) fn ensure_based_at(v: &TangentVector, x: &ManifoldPoint) -> Result<()> {
    if v.is_based_at(x) {
        Ok(())
    } else {
        Err(GeoError::BaseMismatch)
    }
}

/// A Hadamard manifold embedded in `ℝⁿ`.
///
/// Implementations must be pure: no interior mutability, safe to share across
/// threads.
pub trait Manifold: Send + Sync {
    fn descriptor(&self) -> ManifoldDescriptor;

    fn check_point(&self, x: &ManifoldPoint) -> Result<()>;

    fn check_tangent(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<()>;

    /// Riemannian metric `⟨u, v⟩ₓ`.
    fn inner(&self, x: &ManifoldPoint, u: &TangentVector, v: &TangentVector) -> Result<f64>;

    fn exp(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint>;

    fn log(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector>;

    /// Parallel transport along the geodesic from `x` to `y`.
    fn transport(
        &self,
        x: &ManifoldPoint,
        y: &ManifoldPoint,
        v: &TangentVector,
    ) -> Result<TangentVector>;

    /// `P u₀` with `u₀ ~ N(0, Iₙ)` and `P` the ambient orthogonal projection
    /// onto `TₓM`.
    fn sample_tangent_gaussian(&self, x: &ManifoldPoint, rng: &mut RandomStream) -> TangentVector;

    /// An orthonormal basis of `TₓM` with respect to the Riemannian metric.
    fn tangent_basis(&self, x: &ManifoldPoint) -> Result<Vec<TangentVector>>;

    fn norm(&self, v: &TangentVector) -> Result<f64> {
        Ok(self.inner(&v.base, v, v)?.max(0.0).sqrt())
    }

    fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
        self.norm(&self.log(x, y)?)
    }

    fn intrinsic_dim(&self) -> usize {
        self.descriptor().intrinsic_dim
    }
}

/// Closed geodesic ball `{x : dist(x, center) ≤ radius}`; convex in a
/// Hadamard manifold, diameter `2·radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicBall {
    pub center: ManifoldPoint,
    pub radius: f64,
}

impl GeodesicBall {
    pub fn new(center: ManifoldPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(contract(format!("ball radius must be > 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// A ball that never clips.
    pub fn unbounded(center: ManifoldPoint) -> Self {
        Self {
            center,
            radius: f64::INFINITY,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains<M: Manifold + ?Sized>(&self, manifold: &M, x: &ManifoldPoint) -> Result<bool> {
        Ok(manifold.distance(&self.center, x)? <= self.radius * (1.0 + 1e-12))
    }
}

/// Metric projection onto a geodesic ball: identity inside, radial pull-back
/// along the geodesic from the center outside.
pub fn project_ball<M: Manifold + ?Sized>(
    manifold: &M,
    ball: &GeodesicBall,
    x: &ManifoldPoint,
) -> Result<ManifoldPoint> {
    if !ball.radius.is_finite() {
        return Ok(x.clone());
    }
    let v = manifold.log(&ball.center, x)?;
    let dist = manifold.norm(&v)?;
    if dist <= ball.radius {
        return Ok(x.clone());
    }
    manifold.exp(&ball.center, &v.scaled(ball.radius / dist))
}
