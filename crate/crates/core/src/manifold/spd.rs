//! Symmetric positive-definite matrices with the affine-invariant metric
//! `⟨M, N⟩_X = tr(X⁻¹ M X⁻¹ N)`.
//!
//! Points and tangent vectors are `m × m` matrices flattened column-major to
//! length `m²`. All matrix functions (square root, inverse square root, exp,
//! log) go through one symmetric eigendecomposition, [`SymEig`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{
    ensure_based_at, ensure_dim, Manifold, ManifoldDescriptor, ManifoldPoint, TangentVector,
    MEMBERSHIP_TOL,
};
use crate::error::{contract, GeoError, Result};
use crate::rng::RandomStream;

/// Eigenvalues at or below this fraction of the largest one are rejected.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Default sectional-curvature lower bound of SPD(m) under the
/// affine-invariant metric.
pub const SPD_DEFAULT_KAPPA: f64 = -0.5;

/// Symmetric eigendecomposition `A = Q Λ Qᵀ` with eigenvalues sorted in
/// descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymEig {
    /// Decomposes the symmetric part of `a`.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let sym = symmetrize(a);
        let eig = SymmetricEigen::new(sym);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    /// `Q f(Λ) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (c, lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(*lambda);
            scaled.column_mut(c).scale_mut(s);
        }
        symmetrize(&(scaled * q.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    fn ensure_positive_definite(&self, what: &str) -> Result<()> {
        let max = self.max_eigenvalue();
        let min = self.min_eigenvalue();
        if !(max > 0.0) || !(min > EIGEN_FLOOR * max) || !min.is_finite() || !max.is_finite() {
            return Err(GeoError::Domain(format!(
                "{what} is not positive definite (eigenvalues in [{min:e}, {max:e}])"
            )));
        }
        Ok(())
    }
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

/// An SPD matrix together with its square root and inverse square root, the
/// precomputation shared by every affine-invariant formula based at it.
#[derive(Debug, Clone)]
pub struct SpdAnchor {
    pub matrix: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl SpdAnchor {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        check_spd_matrix(x)?;
        let eig = SymEig::new(x);
        eig.ensure_positive_definite("point")?;
        Ok(Self {
            matrix: symmetrize(x),
            sqrt: eig.map(f64::sqrt),
            inv_sqrt: eig.map(|l| 1.0 / l.sqrt()),
        })
    }

    /// `X^{-1/2} Y X^{-1/2}`.
    pub fn whiten(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.inv_sqrt * y * &self.inv_sqrt))
    }

    /// `X^{1/2} W X^{1/2}`.
    pub fn unwhiten(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.sqrt * w * &self.sqrt))
    }

    /// `log(X^{-1/2} Y X^{-1/2})`, the logarithm map in whitened coordinates.
    pub fn whitened_log(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let eig = SymEig::new(&self.whiten(y));
        eig.ensure_positive_definite("point")?;
        Ok(eig.map(f64::ln))
    }

    pub fn distance_to(&self, y: &DMatrix<f64>) -> Result<f64> {
        let eig = SymEig::new(&self.whiten(y));
        eig.ensure_positive_definite("point")?;
        Ok(eig
            .eigenvalues
            .iter()
            .map(|l| l.ln().powi(2))
            .sum::<f64>()
            .sqrt())
    }

    pub fn log_to(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.unwhiten(&self.whitened_log(y)?))
    }

    pub fn exp(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.exp_whitened(&self.whiten(v))
    }

    /// `X^{1/2} exp(W) X^{1/2}` for a whitened tangent `W`.
    pub fn exp_whitened(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.unwhiten(&SymEig::new(w).map(f64::exp))
    }

    pub fn inner(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
        self.whiten(u).dot(&self.whiten(v))
    }
}

fn check_spd_matrix(x: &DMatrix<f64>) -> Result<()> {
    if !x.is_square() {
        return Err(GeoError::Domain("matrix is not square".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::Domain("matrix has non-finite entries".into()));
    }
    if asymmetry(x) > MEMBERSHIP_TOL * (1.0 + x.amax()) {
        return Err(GeoError::Domain("matrix is not symmetric".into()));
    }
    Ok(())
}

/// SPD(m) with the affine-invariant metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spd {
    m: usize,
    kappa: f64,
}

impl Spd {
    pub fn new(m: usize) -> Result<Self> {
        Self::with_curvature_bound(m, SPD_DEFAULT_KAPPA)
    }

    pub fn with_curvature_bound(m: usize, kappa: f64) -> Result<Self> {
        if m == 0 {
            return Err(contract("matrix size must be >= 1"));
        }
        if m > 64 {
            return Err(contract(format!(
                "matrix size {m} exceeds the supported m <= 64"
            )));
        }
        if !(kappa <= 0.0) {
            return Err(contract(format!(
                "curvature bound must be <= 0, got {kappa}"
            )));
        }
        Ok(Self { m, kappa })
    }

    pub fn matrix_size(&self) -> usize {
        self.m
    }

    pub fn to_matrix(&self, coords: &DVector<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.m * self.m, coords.len())?;
        Ok(DMatrix::from_column_slice(
            self.m,
            self.m,
            coords.as_slice(),
        ))
    }

    pub fn point(&self, x: &DMatrix<f64>) -> Result<ManifoldPoint> {
        ensure_dim(self.m, x.nrows())?;
        check_spd_matrix(x)?;
        Ok(ManifoldPoint::new(flatten(&symmetrize(x))))
    }

    pub fn vector(&self, base: &ManifoldPoint, v: &DMatrix<f64>) -> Result<TangentVector> {
        ensure_dim(self.m, v.nrows())?;
        Ok(TangentVector::new(base.clone(), flatten(&symmetrize(v))))
    }

    pub fn anchor(&self, x: &ManifoldPoint) -> Result<SpdAnchor> {
        SpdAnchor::new(&self.to_matrix(&x.coords)?)
    }

    fn tangent_matrix(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<DMatrix<f64>> {
        self.check_tangent(x, v)?;
        self.to_matrix(&v.coords)
    }

    /// Affine-invariant distance `‖log(X^{-1/2} Y X^{-1/2})‖_F`.
    pub fn spd_distance(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        check_spd_matrix(y)?;
        SpdAnchor::new(x)?.distance_to(y)
    }

    /// Riemannian gradient of `f(X) = (1/2N) Σ dist(X, Aᵢ)²`, i.e.
    /// `−(1/N) Σ Log_X(Aᵢ)`.
    pub fn karcher_grad(
        &self,
        x: &ManifoldPoint,
        matrices: &[DMatrix<f64>],
    ) -> Result<TangentVector> {
        let anchor = self.anchor(x)?;
        let w = karcher_whitened_grad(&anchor, matrices)?;
        Ok(TangentVector::new(x.clone(), flatten(&anchor.unwhiten(&w))))
    }

    pub fn karcher_cost(&self, x: &ManifoldPoint, matrices: &[DMatrix<f64>]) -> Result<f64> {
        let anchor = self.anchor(x)?;
        karcher_cost_at(&anchor, matrices)
    }
}

/// Karcher cost evaluated at a precomputed anchor.
pub fn karcher_cost_at(anchor: &SpdAnchor, matrices: &[DMatrix<f64>]) -> Result<f64> {
    if matrices.is_empty() {
        return Err(contract("Karcher cost needs at least one matrix"));
    }
    let mut total = 0.0;
    for a in matrices {
        total += anchor.distance_to(a)?.powi(2);
    }
    Ok(total / (2.0 * matrices.len() as f64))
}

/// Whitened Karcher gradient `−(1/N) Σ log(X^{-1/2} Aᵢ X^{-1/2})`; its
/// Frobenius norm is the Riemannian gradient norm at `X`.
pub fn karcher_whitened_grad(
    anchor: &SpdAnchor,
    matrices: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    if matrices.is_empty() {
        return Err(contract("Karcher gradient needs at least one matrix"));
    }
    let m = anchor.matrix.nrows();
    let mut sum = DMatrix::zeros(m, m);
    for a in matrices {
        sum += anchor.whitened_log(a)?;
    }
    Ok(sum * (-1.0 / matrices.len() as f64))
}

pub(crate) fn flatten(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

impl Manifold for Spd {
    fn descriptor(&self) -> ManifoldDescriptor {
        ManifoldDescriptor {
            ambient_dim: self.m * self.m,
            intrinsic_dim: self.m * (self.m + 1) / 2,
            curvature_lower_bound: self.kappa,
        }
    }

    fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        let mat = self.to_matrix(&x.coords)?;
        check_spd_matrix(&mat)?;
        SymEig::new(&mat).ensure_positive_definite("point")
    }

    fn check_tangent(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<()> {
        ensure_dim(self.m * self.m, x.dim())?;
        let mat = self.to_matrix(&v.coords)?;
        if asymmetry(&mat) > MEMBERSHIP_TOL * (1.0 + mat.amax()) {
            return Err(GeoError::Domain("tangent vector is not symmetric".into()));
        }
        ensure_based_at(v, x)
    }

    fn inner(&self, x: &ManifoldPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        let um = self.tangent_matrix(x, u)?;
        let vm = self.tangent_matrix(x, v)?;
        Ok(self.anchor(x)?.inner(&um, &vm))
    }

    fn exp(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        let vm = self.tangent_matrix(x, v)?;
        let y = self.anchor(x)?.exp(&vm);
        Ok(ManifoldPoint::new(flatten(&y)))
    }

    fn log(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
        let anchor = self.anchor(x)?;
        let ym = self.to_matrix(&y.coords)?;
        check_spd_matrix(&ym)?;
        Ok(TangentVector::new(x.clone(), flatten(&anchor.log_to(&ym)?)))
    }

    /// `Γ(V) = E V Eᵀ` with `E = X^{1/2} (X^{-1/2} Y X^{-1/2})^{1/2} X^{-1/2}`.
    fn transport(
        &self,
        x: &ManifoldPoint,
        y: &ManifoldPoint,
        v: &TangentVector,
    ) -> Result<TangentVector> {
        let vm = self.tangent_matrix(x, v)?;
        let anchor = self.anchor(x)?;
        let ym = self.to_matrix(&y.coords)?;
        check_spd_matrix(&ym)?;
        let eig = SymEig::new(&anchor.whiten(&ym));
        eig.ensure_positive_definite("point")?;
        let e = &anchor.sqrt * eig.map(f64::sqrt) * &anchor.inv_sqrt;
        let moved = symmetrize(&(&e * vm * e.transpose()));
        Ok(TangentVector::new(y.clone(), flatten(&moved)))
    }

    /// `(G + Gᵀ)/2` with i.i.d. standard normal `G`: the ambient orthogonal
    /// projection of a Gaussian onto the symmetric matrices.
    fn sample_tangent_gaussian(&self, x: &ManifoldPoint, rng: &mut RandomStream) -> TangentVector {
        let g = DMatrix::from_fn(self.m, self.m, |_, _| rng.standard_normal());
        TangentVector::new(x.clone(), flatten(&symmetrize(&g)))
    }

    fn tangent_basis(&self, x: &ManifoldPoint) -> Result<Vec<TangentVector>> {
        let anchor = self.anchor(x)?;
        let m = self.m;
        let mut basis = Vec::with_capacity(m * (m + 1) / 2);
        for j in 0..m {
            for i in 0..=j {
                let mut b = DMatrix::zeros(m, m);
                if i == j {
                    b[(i, i)] = 1.0;
                } else {
                    b[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
                    b[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
                }
                basis.push(TangentVector::new(x.clone(), flatten(&anchor.unwhiten(&b))));
            }
        }
        Ok(basis)
    }

    fn distance(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
        let ym = self.to_matrix(&y.coords)?;
        check_spd_matrix(&ym)?;
        self.anchor(x)?.distance_to(&ym)
    }
}
