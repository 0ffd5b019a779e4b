//! Time-varying objectives, the two-point gradient-free oracle and its
//! Monte-Carlo diagnostics.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DVector;

use crate::bounds::{oracle_noise, ProblemConstants};
use crate::error::{contract, ensure_positive, Result};
use crate::manifold::{Euclidean, Manifold, ManifoldPoint, TangentVector};
use crate::par::{try_map_indexed, Execution};
use crate::rng::RandomStream;

/// Time measured in half-steps: even `t` is iteration `t/2`, odd `t` is the
/// intermediate instant `t/2 + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeIndex(u64);

impl TimeIndex {
    pub fn from_half_steps(t: u64) -> Self {
        Self(t)
    }

    /// The integer time `k`.
    pub fn at(k: u64) -> Self {
        Self(2 * k)
    }

    /// The intermediate time `k + 1/2`.
    pub fn after(k: u64) -> Self {
        Self(2 * k + 1)
    }

    pub fn half_steps(self) -> u64 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0.is_multiple_of(2)
    }

    /// Integer part of `t/2`.
    pub fn iteration(self) -> u64 {
        self.0 / 2
    }

    pub fn next(self) -> Self {
        Self(self.0 + 1)
    }

    /// Continuous time `t/2`.
    pub fn as_f64(self) -> f64 {
        self.0 as f64 * 0.5
    }
}

/// A family of objectives `f_t : M → ℝ` indexed on half-steps.
pub trait TimeVaryingObjective: Sync {
    type Space: Manifold;

    fn manifold(&self) -> &Self::Space;

    /// Declared constants; they are assumptions about the family, not checked.
    fn constants(&self) -> &ProblemConstants;

    fn eval(&self, t: TimeIndex, x: &ManifoldPoint) -> Result<f64>;

    /// Exact Riemannian gradient, when the objective knows it.
    fn gradient(&self, _t: TimeIndex, _x: &ManifoldPoint) -> Option<Result<TangentVector>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    /// `g = ((f_{k⁺}(Exp_x(ηu)) − f_k(x)) / η)·u`.
    pub value: TangentVector,
    pub point_eval_k: f64,
    pub point_eval_kplus: f64,
    pub direction: TangentVector,
}

/// Draws `u` at `x` and returns the two-point estimate at integer time `k`.
pub fn estimate_gradient<O: TimeVaryingObjective + ?Sized>(
    obj: &O,
    k: TimeIndex,
    x: &ManifoldPoint,
    eta: f64,
    rng: &mut RandomStream,
) -> Result<OracleSample> {
    ensure_positive("eta", eta)?;
    let u = obj.manifold().sample_tangent_gaussian(x, rng);
    estimate_gradient_along(obj, k, x, eta, u)
}

/// The oracle with a caller-supplied direction `u`.
pub fn estimate_gradient_along<O: TimeVaryingObjective + ?Sized>(
    obj: &O,
    k: TimeIndex,
    x: &ManifoldPoint,
    eta: f64,
    u: TangentVector,
) -> Result<OracleSample> {
    ensure_positive("eta", eta)?;
    if !k.is_integer() {
        return Err(contract(format!(
            "oracle time must be an integer step, got t = {}",
            k.0
        )));
    }
    let m = obj.manifold();
    m.check_tangent(x, &u)?;
    let fk = obj.eval(k, x)?;
    let probe = m.exp(x, &u.scaled(eta))?;
    let fkp = obj.eval(k.next(), &probe)?;
    Ok(OracleSample {
        value: u.scaled((fkp - fk) / eta),
        point_eval_k: fk,
        point_eval_kplus: fkp,
        direction: u,
    })
}

/// `(Lη/2)(d+3)^{3/2} + (δ/η)√d`.
pub fn bias_bound(c: &ProblemConstants, eta: f64) -> Result<f64> {
    ensure_positive("eta", eta)?;
    let d = c.d as f64;
    Ok(0.5 * c.l * eta * (d + 3.0).powf(1.5) + c.delta / eta * d.sqrt())
}

/// `(L²η²/2)(d+6)³ + 2Lδ(d+4)² + (2δ²/η²)d + 2(d+4)‖grad f‖²`.
pub fn second_moment_bound(c: &ProblemConstants, eta: f64, grad_norm: f64) -> Result<f64> {
    ensure_positive("eta", eta)?;
    if !(grad_norm >= 0.0) {
        return Err(contract(format!("grad_norm must be >= 0, got {grad_norm}")));
    }
    Ok(oracle_noise(c, eta) + 2.0 * (c.d as f64 + 4.0) * grad_norm * grad_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSource {
    Analytic,
    FiniteDifference,
}

/// The gradient at `(t, x)` from the objective if available, else central
/// differences along an orthonormal tangent basis with step `1e-5·(1+‖x‖)`.
pub fn reference_gradient<O: TimeVaryingObjective + ?Sized>(
    obj: &O,
    t: TimeIndex,
    x: &ManifoldPoint,
) -> Result<(TangentVector, GradientSource)> {
    if let Some(g) = obj.gradient(t, x) {
        return Ok((g?, GradientSource::Analytic));
    }
    let m = obj.manifold();
    let h = 1e-5 * (1.0 + x.coords.norm());
    let mut grad = TangentVector::zero_at(x);
    for b in m.tangent_basis(x)? {
        let fp = obj.eval(t, &m.exp(x, &b.scaled(h))?)?;
        let fm = obj.eval(t, &m.exp(x, &b.scaled(-h))?)?;
        grad = grad.axpy((fp - fm) / (2.0 * h), &b)?;
    }
    Ok((grad, GradientSource::FiniteDifference))
}

pub const MIN_DIAGNOSTIC_SAMPLES: usize = 1000;
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub samples: usize,
    pub eta: f64,
    pub reference: GradientSource,
    pub grad_norm: f64,
    /// `‖mean(g) − grad f_{k⁺}(x)‖`.
    pub bias_estimate: f64,
    pub bias_se: f64,
    pub bias_bound: f64,
    /// Mean of `‖g‖²`.
    pub second_moment_estimate: f64,
    pub second_moment_se: f64,
    pub second_moment_bound: f64,
}

impl DiagnosticReport {
    pub fn bias_pass(&self) -> bool {
        self.bias_estimate <= self.bias_bound + 3.0 * self.bias_se
    }

    pub fn second_moment_pass(&self) -> bool {
        self.second_moment_estimate <= self.second_moment_bound + 3.0 * self.second_moment_se
    }

    pub fn passed(&self) -> bool {
        self.bias_pass() && self.second_moment_pass()
    }
}

struct Moments {
    sum: DVector<f64>,
    sum_sq: DVector<f64>,
    norm2: f64,
    norm4: f64,
}

/// Monte-Carlo check of the oracle bias and second-moment bounds at `x` and
/// integer time `k`, using the objective's declared constants.
pub fn verify_oracle_bounds<O: TimeVaryingObjective + ?Sized>(
    obj: &O,
    x: &ManifoldPoint,
    k: TimeIndex,
    eta: f64,
    samples: usize,
    rng: &mut RandomStream,
    exec: Execution,
) -> Result<DiagnosticReport> {
    if samples < MIN_DIAGNOSTIC_SAMPLES {
        return Err(contract(format!(
            "need at least {MIN_DIAGNOSTIC_SAMPLES} samples, got {samples}"
        )));
    }
    ensure_positive("eta", eta)?;
    let m = obj.manifold();
    let basis = m.tangent_basis(x)?;
    let (grad, reference) = reference_gradient(obj, k.next(), x)?;
    let grad_coords = coordinates(m, x, &basis, &grad)?;

    let family = rng.fork_seed();
    let chunks = samples.div_ceil(CHUNK);
    let d = basis.len();
    let parts = try_map_indexed(exec, chunks, |j| {
        let mut local = RandomStream::substream(family, j as u64);
        let count = CHUNK.min(samples - j * CHUNK);
        let mut acc = Moments {
            sum: DVector::zeros(d),
            sum_sq: DVector::zeros(d),
            norm2: 0.0,
            norm4: 0.0,
        };
        for _ in 0..count {
            let s = estimate_gradient(obj, k, x, eta, &mut local)?;
            let c = coordinates(m, x, &basis, &s.value)?;
            let n2 = c.norm_squared();
            acc.sum_sq += c.component_mul(&c);
            acc.sum += c;
            acc.norm2 += n2;
            acc.norm4 += n2 * n2;
        }
        Ok(acc)
    })?;

    let mut total = Moments {
        sum: DVector::zeros(d),
        sum_sq: DVector::zeros(d),
        norm2: 0.0,
        norm4: 0.0,
    };
    for p in parts {
        total.sum += p.sum;
        total.sum_sq += p.sum_sq;
        total.norm2 += p.norm2;
        total.norm4 += p.norm4;
    }
    let n = samples as f64;
    let mean = &total.sum / n;
    let var_sum: f64 = (0..d)
        .map(|i| (total.sum_sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0))
        .sum();
    let m2 = total.norm2 / n;
    let var_n2 = (total.norm4 / n - m2 * m2).max(0.0) * n / (n - 1.0);

    let c = obj.constants();
    let grad_norm = grad_coords.norm();
    Ok(DiagnosticReport {
        samples,
        eta,
        reference,
        grad_norm,
        bias_estimate: (&mean - &grad_coords).norm(),
        bias_se: (var_sum / n).sqrt(),
        bias_bound: bias_bound(c, eta)?,
        second_moment_estimate: m2,
        second_moment_se: (var_n2 / n).sqrt(),
        second_moment_bound: second_moment_bound(c, eta, grad_norm)?,
    })
}

fn coordinates<M: Manifold + ?Sized>(
    m: &M,
    x: &ManifoldPoint,
    basis: &[TangentVector],
    v: &TangentVector,
) -> Result<DVector<f64>> {
    let mut c = DVector::zeros(basis.len());
    for (i, b) in basis.iter().enumerate() {
        c[i] = m.inner(x, b, v)?;
    }
    Ok(c)
}

/// `f_t(x) = ½L‖x − a_t‖²` on `ℝⁿ`, with `a_t = a` at integer times and
/// `a + s` at intermediate times.
#[derive(Debug, Clone)]
pub struct ShiftingQuadratic {
    space: Euclidean,
    l: f64,
    anchor: DVector<f64>,
    shift: DVector<f64>,
    constants: ProblemConstants,
}

impl ShiftingQuadratic {
    pub fn new(l: f64, anchor: DVector<f64>, shift: DVector<f64>) -> Result<Self> {
        ensure_positive("L", l)?;
        if anchor.len() != shift.len() {
            return Err(contract("anchor and shift lengths differ"));
        }
        let space = Euclidean::new(anchor.len())?;
        let constants = ProblemConstants {
            l,
            sigma: l,
            delta: 0.0,
            v: shift.norm(),
            kappa: 0.0,
            r: 1.0,
            d: anchor.len(),
            g: 1.0,
        };
        Ok(Self {
            space,
            l,
            anchor,
            shift,
            constants,
        })
    }

    /// Static quadratic: `f_t(x) = ½L‖x − a‖²` for every `t`.
    pub fn fixed(l: f64, anchor: DVector<f64>) -> Result<Self> {
        let zero = DVector::zeros(anchor.len());
        Self::new(l, anchor, zero)
    }

    /// Shift chosen along `x − a` so that `f_{k⁺}(x) − f_k(x) = δ` exactly at
    /// the test point `x`; declares that `δ`.
    pub fn calibrated(l: f64, anchor: DVector<f64>, x: &DVector<f64>, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(contract("delta must be >= 0"));
        }
        let offset = x - &anchor;
        let r = offset.norm();
        let dir = if r > 0.0 {
            &offset / r
        } else {
            let mut e = DVector::zeros(anchor.len());
            e[0] = 1.0;
            e
        };
        // ½L((r+τ)² − r²) = δ
        let tau = -r + (r * r + 2.0 * delta / l).sqrt();
        let mut q = Self::new(l, anchor, -dir * tau)?;
        q.constants.delta = delta;
        Ok(q)
    }

    pub fn anchor_at(&self, t: TimeIndex) -> DVector<f64> {
        if t.is_integer() {
            self.anchor.clone()
        } else {
            &self.anchor + &self.shift
        }
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = constants;
        self
    }
}

impl TimeVaryingObjective for ShiftingQuadratic {
    type Space = Euclidean;

    fn manifold(&self) -> &Euclidean {
        &self.space
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn eval(&self, t: TimeIndex, x: &ManifoldPoint) -> Result<f64> {
        self.space.check_point(x)?;
        Ok(0.5 * self.l * (&x.coords - self.anchor_at(t)).norm_squared())
    }

    fn gradient(&self, t: TimeIndex, x: &ManifoldPoint) -> Option<Result<TangentVector>> {
        Some(
            self.space
                .check_point(x)
                .map(|_| TangentVector::new(x.clone(), (&x.coords - self.anchor_at(t)) * self.l)),
        )
    }
}

/// Time-invariant `f(x) = ⟨a, x⟩ + b` on `ℝⁿ`.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    space: Euclidean,
    a: DVector<f64>,
    b: f64,
    constants: ProblemConstants,
}

impl LinearObjective {
    pub fn new(a: DVector<f64>, b: f64) -> Result<Self> {
        let space = Euclidean::new(a.len())?;
        let constants = ProblemConstants {
            l: 0.0,
            sigma: 0.0,
            delta: 0.0,
            v: 0.0,
            kappa: 0.0,
            r: 1.0,
            d: a.len(),
            g: a.norm().max(f64::MIN_POSITIVE),
        };
        Ok(Self {
            space,
            a,
            b,
            constants,
        })
    }

    pub fn constant(n: usize, b: f64) -> Result<Self> {
        Self::new(DVector::zeros(n), b)
    }
}

impl TimeVaryingObjective for LinearObjective {
    type Space = Euclidean;

    fn manifold(&self) -> &Euclidean {
        &self.space
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn eval(&self, _t: TimeIndex, x: &ManifoldPoint) -> Result<f64> {
        self.space.check_point(x)?;
        Ok(self.a.dot(&x.coords) + self.b)
    }

    fn gradient(&self, _t: TimeIndex, x: &ManifoldPoint) -> Option<Result<TangentVector>> {
        Some(Ok(TangentVector::new(x.clone(), self.a.clone())))
    }
}

/// Wraps an objective and records every evaluation time.
#[derive(Debug)]
pub struct CountingObjective<O> {
    inner: O,
    count: AtomicUsize,
    times: Mutex<Vec<TimeIndex>>,
}

impl<O> CountingObjective<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
            times: Mutex::new(Vec::new()),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn times(&self) -> Vec<TimeIndex> {
        self.times.lock().expect("poisoned").clone()
    }
}

impl<O: TimeVaryingObjective> TimeVaryingObjective for CountingObjective<O> {
    type Space = O::Space;

    fn manifold(&self) -> &O::Space {
        self.inner.manifold()
    }

    fn constants(&self) -> &ProblemConstants {
        self.inner.constants()
    }

    fn eval(&self, t: TimeIndex, x: &ManifoldPoint) -> Result<f64> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.times.lock().expect("poisoned").push(t);
        self.inner.eval(t, x)
    }

    fn gradient(&self, t: TimeIndex, x: &ManifoldPoint) -> Option<Result<TangentVector>> {
        self.inner.gradient(t, x)
    }
}

/// Replaces the declared constants of an objective, e.g. to state a wrong
/// smoothness constant on purpose.
#[derive(Debug, Clone)]
pub struct Declared<O> {
    pub inner: O,
    pub constants: ProblemConstants,
}

impl<O: TimeVaryingObjective> TimeVaryingObjective for Declared<O> {
    type Space = O::Space;

    fn manifold(&self) -> &O::Space {
        self.inner.manifold()
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn eval(&self, t: TimeIndex, x: &ManifoldPoint) -> Result<f64> {
        self.inner.eval(t, x)
    }

    fn gradient(&self, t: TimeIndex, x: &ManifoldPoint) -> Option<Result<TangentVector>> {
        self.inner.gradient(t, x)
    }
}
