//! Verification suites shared by the command line and the acceptance tests.
//!
//! Each suite draws its randomness from indexed substreams of one seed, so a
//! suite result is identical under parallel and sequential execution.

use nalgebra::{DMatrix, DVector};

use crate::bounds::{optimal_eta, zeta, ProblemConstants};
use crate::error::Result;
use crate::manifold::spd::{flatten, symmetrize};
use crate::manifold::{
    project_ball, Euclidean, GeodesicBall, Manifold, ManifoldPoint, Spd, SymEig,
};
use crate::oracle::{
    verify_oracle_bounds, Declared, DiagnosticReport, ShiftingQuadratic, TimeIndex,
};
use crate::par::{try_map_indexed, Execution};
use crate::rng::RandomStream;

/// Relative tolerance of the roundtrip and isometry checks.
pub const GEOMETRY_TOL: f64 = 1e-8;
/// Additive slack of the comparison-triangle check.
pub const TRIANGLE_SLACK: f64 = 1e-6;

/// A named pass/fail line.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometryReport {
    pub trials: usize,
    pub roundtrip_violations: usize,
    pub max_roundtrip_error: f64,
    pub transport_violations: usize,
    pub max_transport_error: f64,
    pub projection_violations: usize,
    pub max_projection_excess: f64,
    pub triangle_violations: usize,
    pub max_triangle_excess: f64,
}

impl GeometryReport {
    pub fn passed(&self) -> bool {
        self.roundtrip_violations == 0
            && self.transport_violations == 0
            && self.projection_violations == 0
            && self.triangle_violations == 0
    }

    pub fn lines(&self) -> Vec<CheckLine> {
        let line = |name: &str, v: usize, worst: f64| CheckLine {
            name: name.into(),
            passed: v == 0,
            detail: format!(
                "{v} violations in {} trials, worst {worst:.3e}",
                self.trials
            ),
        };
        vec![
            line(
                "exp/log roundtrip",
                self.roundtrip_violations,
                self.max_roundtrip_error,
            ),
            line(
                "transport isometry",
                self.transport_violations,
                self.max_transport_error,
            ),
            line(
                "projection nonexpansive",
                self.projection_violations,
                self.max_projection_excess,
            ),
            line(
                "comparison triangle",
                self.triangle_violations,
                self.max_triangle_excess,
            ),
        ]
    }

    fn merge(mut self, o: &GeometryReport) -> Self {
        self.trials += o.trials;
        self.roundtrip_violations += o.roundtrip_violations;
        self.transport_violations += o.transport_violations;
        self.projection_violations += o.projection_violations;
        self.triangle_violations += o.triangle_violations;
        self.max_roundtrip_error = self.max_roundtrip_error.max(o.max_roundtrip_error);
        self.max_transport_error = self.max_transport_error.max(o.max_transport_error);
        self.max_projection_excess = self.max_projection_excess.max(o.max_projection_excess);
        self.max_triangle_excess = self.max_triangle_excess.max(o.max_triangle_excess);
        self
    }
}

fn geometry_trial<M: Manifold>(
    manifold: &M,
    sample: &(dyn Fn(&mut RandomStream) -> ManifoldPoint + Sync),
    rng: &mut RandomStream,
) -> Result<GeometryReport> {
    let kappa = manifold.descriptor().curvature_lower_bound;
    let mut r = GeometryReport {
        trials: 1,
        ..Default::default()
    };
    let (p, q, s) = (sample(rng), sample(rng), sample(rng));

    let v = manifold.log(&p, &q)?;
    let dist = manifold.distance(&p, &q)?;
    let back = manifold.exp(&p, &v)?;
    let err = manifold.distance(&back, &q)? / (1.0 + dist);
    let norm_err = (manifold.norm(&v)? - dist).abs() / (1.0 + dist);
    r.max_roundtrip_error = err.max(norm_err);
    r.roundtrip_violations = usize::from(r.max_roundtrip_error > GEOMETRY_TOL);

    let u = manifold.sample_tangent_gaussian(&p, rng);
    let w = manifold.sample_tangent_gaussian(&p, rng);
    let before = manifold.inner(&p, &u, &w)?;
    let after = manifold.inner(
        &q,
        &manifold.transport(&p, &q, &u)?,
        &manifold.transport(&p, &q, &w)?,
    )?;
    r.max_transport_error = (after - before).abs() / (1.0 + before.abs());
    r.transport_violations = usize::from(r.max_transport_error > GEOMETRY_TOL);

    let radius = rng.uniform_in(0.1, 2.0);
    let ball = GeodesicBall::new(s.clone(), radius)?;
    let (pp, pq) = (
        project_ball(manifold, &ball, &p)?,
        project_ball(manifold, &ball, &q)?,
    );
    let excess = manifold.distance(&pp, &pq)? - dist;
    let idem = manifold.distance(&project_ball(manifold, &ball, &pp)?, &pp)?;
    r.max_projection_excess = excess.max(idem).max(0.0);
    r.projection_violations = usize::from(excess > GEOMETRY_TOL || idem > GEOMETRY_TOL);

    // sides b = |PQ|, c = |PS|, a = |QS|; angle at P through the logs
    let to_s = manifold.log(&p, &s)?;
    let c = manifold.norm(&to_s)?;
    let a = manifold.distance(&q, &s)?;
    let rhs = zeta(kappa, c) * dist * dist + c * c - 2.0 * manifold.inner(&p, &v, &to_s)?;
    r.max_triangle_excess = (a * a - rhs).max(0.0);
    r.triangle_violations = usize::from(a * a > rhs + TRIANGLE_SLACK);
    Ok(r)
}

fn geometry_suite<M: Manifold>(
    manifold: &M,
    sample: &(dyn Fn(&mut RandomStream) -> ManifoldPoint + Sync),
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<GeometryReport> {
    let parts = try_map_indexed(exec, trials, |i| {
        let mut rng = RandomStream::substream(seed, i as u64);
        geometry_trial(manifold, sample, &mut rng)
    })?;
    Ok(parts
        .iter()
        .fold(GeometryReport::default(), |acc, p| acc.merge(p)))
}

/// `exp(S)` for a random symmetric `S` with `N(0, scale²)` entries.
pub fn random_spd(m: usize, scale: f64, rng: &mut RandomStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.standard_normal() * scale);
    SymEig::new(&symmetrize(&g)).map(f64::exp)
}

/// Geometry checks on random triangles in SPD(m).
pub fn geometry_suite_spd(
    m: usize,
    kappa: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<GeometryReport> {
    let spd = Spd::with_curvature_bound(m, kappa)?;
    let sample =
        move |rng: &mut RandomStream| ManifoldPoint::new(flatten(&random_spd(m, 0.5, rng)));
    geometry_suite(&spd, &sample, trials, seed, exec)
}

/// Geometry checks on random triangles in `ℝⁿ`.
pub fn geometry_suite_euclidean(
    n: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<GeometryReport> {
    let e = Euclidean::new(n)?;
    let sample = move |rng: &mut RandomStream| {
        ManifoldPoint::new(DVector::from_fn(n, |_, _| 2.0 * rng.standard_normal()))
    };
    geometry_suite(&e, &sample, trials, seed, exec)
}

/// One oracle certification case on a shifting Euclidean quadratic.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub d: usize,
    pub delta: f64,
    pub eta_label: &'static str,
    pub report: DiagnosticReport,
}

impl OracleCase {
    pub fn line(&self) -> CheckLine {
        let r = &self.report;
        CheckLine {
            name: format!(
                "oracle d={} delta={} eta={}",
                self.d, self.delta, self.eta_label
            ),
            passed: r.passed(),
            detail: format!(
                "bias {:.4e} <= {:.4e} (+3se {:.1e}); E|g|^2 {:.4e} <= {:.4e} (+3se {:.1e})",
                r.bias_estimate,
                r.bias_bound,
                3.0 * r.bias_se,
                r.second_moment_estimate,
                r.second_moment_bound,
                3.0 * r.second_moment_se
            ),
        }
    }
}

/// Smoothness of the quadratics in the oracle suite.
pub const ORACLE_SUITE_L: f64 = 1.5;
/// Temporal variation used to pick `η̄` when the case itself has `δ = 0`.
pub const ORACLE_SUITE_ETA_DELTA: f64 = 0.001;

fn quadratic_constants(l: f64, delta: f64, d: usize) -> ProblemConstants {
    ProblemConstants {
        l,
        sigma: l,
        delta,
        v: 0.0,
        kappa: 0.0,
        r: 1.0,
        d,
        g: 1.0,
    }
}

fn test_point(d: usize) -> DVector<f64> {
    DVector::from_fn(d, |i, _| if i % 2 == 0 { 0.5 } else { -0.25 })
}

/// Bias and second-moment certification for `d ∈ {2, 6}`, `δ ∈ {0, 0.001}`,
/// `η ∈ {η̄, 0.1}`.
pub fn oracle_suite(samples: usize, seed: u64, exec: Execution) -> Result<Vec<OracleCase>> {
    let mut cases = Vec::new();
    let mut index = 0;
    for d in [2usize, 6] {
        for delta in [0.0, 0.001] {
            let eta_bar = optimal_eta(&quadratic_constants(
                ORACLE_SUITE_L,
                ORACLE_SUITE_ETA_DELTA,
                d,
            ))?;
            for (eta_label, eta) in [("eta_bar", eta_bar), ("0.1", 0.1)] {
                let x = test_point(d);
                let q =
                    ShiftingQuadratic::calibrated(ORACLE_SUITE_L, DVector::zeros(d), &x, delta)?;
                let mut rng = RandomStream::substream(seed, index);
                index += 1;
                let report = verify_oracle_bounds(
                    &q,
                    &ManifoldPoint::new(x),
                    TimeIndex::at(0),
                    eta,
                    samples,
                    &mut rng,
                    exec,
                )?;
                cases.push(OracleCase {
                    d,
                    delta,
                    eta_label,
                    report,
                });
            }
        }
    }
    Ok(cases)
}

/// Dimension of the negative control.
pub const NEGATIVE_CONTROL_D: usize = 50;

/// Static quadratic at its minimizer in `ℝ⁵⁰` with `δ = 0`, `η = 0.1`, whose
/// declared smoothness is half the true one. The second-moment check must
/// fail.
pub fn negative_control(samples: usize, seed: u64, exec: Execution) -> Result<DiagnosticReport> {
    let d = NEGATIVE_CONTROL_D;
    let q = ShiftingQuadratic::fixed(ORACLE_SUITE_L, DVector::zeros(d))?;
    let understated = Declared {
        inner: q,
        constants: quadratic_constants(0.5 * ORACLE_SUITE_L, 0.0, d),
    };
    let mut rng = RandomStream::new(seed);
    verify_oracle_bounds(
        &understated,
        &ManifoldPoint::new(DVector::zeros(d)),
        TimeIndex::at(0),
        0.1,
        samples,
        &mut rng,
        exec,
    )
}

/// Empirical `E‖u‖` and `E‖u‖⁴` of tangent samples against `√d` and `(d+4)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingMoments {
    pub d: usize,
    pub samples: usize,
    pub mean_norm: f64,
    pub mean_norm_se: f64,
    pub mean_norm4: f64,
    pub mean_norm4_se: f64,
}

impl SamplingMoments {
    pub fn passed(&self) -> bool {
        let d = self.d as f64;
        self.mean_norm <= d.sqrt() + 3.0 * self.mean_norm_se
            && self.mean_norm4 <= (d + 4.0).powi(2) + 3.0 * self.mean_norm4_se
    }
}

/// Moments of `u` drawn at `x`, norms in the metric at `x`.
pub fn sampling_moments<M: Manifold>(
    manifold: &M,
    x: &ManifoldPoint,
    samples: usize,
    seed: u64,
) -> Result<SamplingMoments> {
    let mut rng = RandomStream::new(seed);
    let (mut s1, mut s2, mut s4, mut s8) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let u = manifold.sample_tangent_gaussian(x, &mut rng);
        let n = manifold.norm(&u)?;
        let n4 = n.powi(4);
        s1 += n;
        s2 += n * n;
        s4 += n4;
        s8 += n4 * n4;
    }
    let k = samples as f64;
    let se = |sum: f64, sum_sq: f64| ((sum_sq / k - (sum / k).powi(2)).max(0.0) / k).sqrt();
    Ok(SamplingMoments {
        d: manifold.intrinsic_dim(),
        samples,
        mean_norm: s1 / k,
        mean_norm_se: se(s1, s2),
        mean_norm4: s4 / k,
        mean_norm4_se: se(s4, s8),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_geometry_suites_pass_and_agree() {
        let a = geometry_suite_spd(3, -0.5, 200, 1, Execution::Parallel).unwrap();
        let b = geometry_suite_spd(3, -0.5, 200, 1, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.passed(), "{a:?}");
        let e = geometry_suite_euclidean(4, 200, 1, Execution::Sequential).unwrap();
        assert!(e.passed(), "{e:?}");
    }

    #[test]
    fn flat_triangle_uses_unit_zeta() {
        // with κ = 0 the check is the exact law of cosines
        let e = geometry_suite_euclidean(3, 100, 5, Execution::Sequential).unwrap();
        assert!(e.max_triangle_excess <= 1e-9);
    }

    #[test]
    fn zero_curvature_bound_breaks_spd_triangle_check() {
        // SPD is curved, so claiming κ = 0 must produce violations
        let r = geometry_suite_spd(3, 0.0, 500, 2, Execution::Parallel).unwrap();
        assert!(r.triangle_violations > 0);
    }
}
