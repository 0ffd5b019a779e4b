use nalgebra::DVector;

use super::{
    ensure_based_at, ensure_dim, Manifold, ManifoldDescriptor, ManifoldPoint, TangentVector,
};
use crate::error::{contract, Result};
use crate::rng::RandomStream;

/// Flat `ℝⁿ`: `κ = 0`, straight-line geodesics, identity transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Euclidean {
    dim: usize,
}

pub fn make_euclidean(n: usize) -> Result<Euclidean> {
    Euclidean::new(n)
}

impl Euclidean {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(contract("Euclidean dimension must be >= 1"));
        }
        Ok(Self { dim: n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, coords: &[f64]) -> Result<ManifoldPoint> {
        ensure_dim(self.dim, coords.len())?;
        Ok(ManifoldPoint::from_slice(coords))
    }

    pub fn vector(&self, base: &ManifoldPoint, coords: &[f64]) -> Result<TangentVector> {
        ensure_dim(self.dim, coords.len())?;
        Ok(TangentVector::new(
            base.clone(),
            DVector::from_column_slice(coords),
        ))
    }
}

impl Manifold for Euclidean {
    fn descriptor(&self) -> ManifoldDescriptor {
        ManifoldDescriptor {
            ambient_dim: self.dim,
            intrinsic_dim: self.dim,
            curvature_lower_bound: 0.0,
        }
    }

    fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        ensure_dim(self.dim, x.dim())
    }

    fn check_tangent(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<()> {
        self.check_point(x)?;
        ensure_dim(self.dim, v.coords.len())?;
        ensure_based_at(v, x)
    }

    fn inner(&self, x: &ManifoldPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        self.check_tangent(x, u)?;
        self.check_tangent(x, v)?;
        Ok(u.coords.dot(&v.coords))
    }

    fn exp(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        self.check_tangent(x, v)?;
        Ok(ManifoldPoint::new(&x.coords + &v.coords))
    }

    fn log(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(TangentVector::new(x.clone(), &y.coords - &x.coords))
    }

    fn transport(
        &self,
        x: &ManifoldPoint,
        y: &ManifoldPoint,
        v: &TangentVector,
    ) -> Result<TangentVector> {
        self.check_tangent(x, v)?;
        self.check_point(y)?;
        Ok(TangentVector::new(y.clone(), v.coords.clone()))
    }

    fn sample_tangent_gaussian(&self, x: &ManifoldPoint, rng: &mut RandomStream) -> TangentVector {
        let coords = DVector::from_fn(self.dim, |_, _| rng.standard_normal());
        TangentVector::new(x.clone(), coords)
    }

    fn tangent_basis(&self, x: &ManifoldPoint) -> Result<Vec<TangentVector>> {
        self.check_point(x)?;
        Ok((0..self.dim)
            .map(|i| {
                let mut e = DVector::zeros(self.dim);
                e[i] = 1.0;
                TangentVector::new(x.clone(), e)
            })
            .collect())
    }

    fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok((&y.coords - &x.coords).norm())
    }
}
