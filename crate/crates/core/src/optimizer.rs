//! The projected gradient-free iterate `x_{k+1} = P_X[Exp_{x_k}(−α_k g_k)]`
//! and its step-size schedules.

use crate::bounds::{optimal_alpha, oracle_noise, ProblemConstants};
use crate::error::{contract, ensure_positive, GeoError, Result};
use crate::manifold::{project_ball, GeodesicBall, Manifold, ManifoldPoint, TangentVector};
use crate::oracle::{
    estimate_gradient, reference_gradient, OracleSample, TimeIndex, TimeVaryingObjective,
};
use crate::rng::RandomStream;

/// Safety factor applied to strict upper limits on the step size.
pub const STEP_SAFETY: f64 = 0.99;

pub const DEFAULT_CBAR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmParams {
    pub alpha: f64,
    pub eta: f64,
    pub cbar: f64,
}

impl AlgorithmParams {
    pub fn new(alpha: f64, eta: f64, cbar: f64) -> Result<Self> {
        ensure_positive("alpha", alpha)?;
        ensure_positive("eta", eta)?;
        ensure_positive("cbar", cbar)?;
        Ok(Self { alpha, eta, cbar })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    OptimalConstant,
    DoublingRegret,
}

/// One doubling period: iterations `2^m − 1 ..= 2^{m+1} − 2`, length `2^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingPeriod {
    pub m: u32,
    pub length: u64,
    pub alpha: f64,
    pub eta: f64,
    /// `α√(oracle_noise(η)·ζ(κ,R))`.
    pub d_k: f64,
    pub rho: f64,
}

impl DoublingPeriod {
    pub fn first_iteration(&self) -> u64 {
        self.length - 1
    }

    pub fn last_iteration(&self) -> u64 {
        2 * self.length - 2
    }
}

/// Periods precomputed by [`make_doubling_schedule`]; covers every `k < 2^48 − 1`.
pub const DOUBLING_PERIODS: u32 = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct DoublingSchedule {
    pub cbar: f64,
    periods: Vec<DoublingPeriod>,
}

impl DoublingSchedule {
    pub fn periods(&self) -> &[DoublingPeriod] {
        &self.periods
    }

    pub fn period_of(&self, k: u64) -> &DoublingPeriod {
        let m = period_index(k) as usize;
        &self.periods[m.min(self.periods.len() - 1)]
    }
}

/// `m` with `k ∈ [2^m − 1, 2^{m+1} − 2]`.
pub fn period_index(k: u64) -> u32 {
    63 - (k + 1).leading_zeros()
}

/// Period length `T_k = 2^m` at iteration `k`.
pub fn period_length(k: u64) -> u64 {
    1u64 << period_index(k)
}

fn rho_of(c: &ProblemConstants, alpha: f64) -> f64 {
    let z = c.zeta_r();
    (2.0 * (c.d as f64 + 4.0) * c.l * c.l * z * alpha * alpha - c.sigma * alpha + 1.0).sqrt()
}

fn doubling_period(c: &ProblemConstants, cbar: f64, m: u32) -> Result<DoublingPeriod> {
    let infeasible = |reason: String| GeoError::InfeasiblePeriod { period: m, reason };
    let d = c.d as f64;
    let (l, delta, z) = (c.l, c.delta, c.zeta_r());
    let t = (1u64 << m) as f64;

    let a_bar = 4.0 * l * l * delta * delta * z * z * ((d + 4.0).powi(4) - d * (d + 6.0).powi(3));
    let b_bar = -4.0 * l * delta * (d + 4.0).powi(2) * z * cbar * cbar / t;
    let c_bar = cbar.powi(4) / (t * t);
    let alpha_cap = c.sigma / (2.0 * l * l * (d + 4.0) * z);

    let alpha = if delta == 0.0 {
        STEP_SAFETY * alpha_cap
    } else {
        if a_bar.abs() < 1e-30 {
            return Err(infeasible(format!(
                "leading coefficient {a_bar:e} is too close to zero"
            )));
        }
        let disc = b_bar * b_bar - 4.0 * a_bar * c_bar;
        if disc < 0.0 {
            return Err(infeasible(format!("step-size discriminant {disc:e} < 0")));
        }
        // (−b − √disc)/(2a) rewritten without cancellation
        let y2 = 2.0 * c_bar / (-b_bar + disc.sqrt());
        if !(y2 > 0.0) {
            return Err(infeasible(format!(
                "no positive step-size root (y2 = {y2:e})"
            )));
        }
        STEP_SAFETY * y2.sqrt().min(alpha_cap)
    };

    let qa = 0.5 * l * l * (d + 6.0).powi(3) * z;
    let qb = 2.0 * l * delta * (d + 4.0).powi(2) * z - cbar * cbar / (alpha * alpha * t);
    let qc = 2.0 * delta * delta * d * z;
    if qb >= 0.0 {
        return Err(infeasible(format!(
            "precision coefficient {qb:e} is not negative"
        )));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(infeasible(format!("precision discriminant {disc:e} < 0")));
    }
    let x1 = (-qb + disc.sqrt()) / (2.0 * qa);
    let x2 = if qc == 0.0 { 0.0 } else { qc / (qa * x1) };
    let eta = 0.5 * (x2.sqrt() + x1.sqrt());
    let d_k = alpha * (oracle_noise(c, eta) * z).sqrt();
    Ok(DoublingPeriod {
        m,
        length: 1u64 << m,
        alpha,
        eta,
        d_k,
        rho: rho_of(c, alpha),
    })
}

/// Per-period step sizes and precisions keeping `D_k ≤ c̄/√T_k`.
pub fn make_doubling_schedule(c: &ProblemConstants, cbar: f64) -> Result<DoublingSchedule> {
    c.validate()?;
    ensure_positive("cbar", cbar)?;
    let periods = (0..DOUBLING_PERIODS)
        .map(|m| doubling_period(c, cbar, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(DoublingSchedule { cbar, periods })
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant(AlgorithmParams),
    OptimalConstant(AlgorithmParams),
    Doubling(DoublingSchedule),
}

impl StepSchedule {
    pub fn constant(alpha: f64, eta: f64) -> Result<Self> {
        Ok(Self::Constant(AlgorithmParams::new(
            alpha,
            eta,
            DEFAULT_CBAR,
        )?))
    }

    /// `(ᾱ, η̄)` for the given constants.
    pub fn optimal(c: &ProblemConstants) -> Result<Self> {
        let opt = optimal_alpha(c)?;
        Ok(Self::OptimalConstant(AlgorithmParams::new(
            opt.alpha,
            opt.eta,
            DEFAULT_CBAR,
        )?))
    }

    pub fn doubling(c: &ProblemConstants, cbar: f64) -> Result<Self> {
        Ok(Self::Doubling(make_doubling_schedule(c, cbar)?))
    }

    pub fn kind(&self) -> ScheduleKind {
        match self {
            Self::Constant(_) => ScheduleKind::Constant,
            Self::OptimalConstant(_) => ScheduleKind::OptimalConstant,
            Self::Doubling(_) => ScheduleKind::DoublingRegret,
        }
    }

    pub fn params_at(&self, k: u64) -> AlgorithmParams {
        match self {
            Self::Constant(p) | Self::OptimalConstant(p) => *p,
            Self::Doubling(s) => {
                let p = s.period_of(k);
                AlgorithmParams {
                    alpha: p.alpha,
                    eta: p.eta,
                    cbar: s.cbar,
                }
            }
        }
    }

    /// Contraction factor `ρ` of the step used at iteration `k`.
    pub fn rho_at(&self, c: &ProblemConstants, k: u64) -> f64 {
        rho_of(c, self.params_at(k).alpha)
    }

    /// Constant kinds must use `α ∈ (0, σ/(2L²(d+4)ζ(κ,R)))`.
    pub fn validate_for(&self, c: &ProblemConstants) -> Result<()> {
        c.validate()?;
        if let Self::Constant(p) | Self::OptimalConstant(p) = self {
            let max = c.alpha_max();
            if !(p.alpha > 0.0 && p.alpha < max) {
                return Err(GeoError::Config(format!(
                    "alpha = {} outside the admissible range (0, {max})",
                    p.alpha
                )));
            }
        }
        Ok(())
    }
}

/// `P_X[Exp_x(−α g)]`.
pub fn step<M: Manifold + ?Sized>(
    manifold: &M,
    x: &ManifoldPoint,
    g: &TangentVector,
    alpha: f64,
    ball: &GeodesicBall,
) -> Result<ManifoldPoint> {
    ensure_positive("alpha", alpha)?;
    manifold.check_tangent(x, g)?;
    let moved = manifold.exp(x, &g.scaled(-alpha))?;
    project_ball(manifold, ball, &moved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// Two-point gradient-free oracle.
    ZerothOrder,
    /// Exact gradient of `f_k` at the current iterate.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub arm: Arm,
    /// `x_0, …, x_T`.
    pub iterates: Vec<ManifoldPoint>,
    /// Direction `g_k` applied at each step.
    pub directions: Vec<TangentVector>,
    /// Oracle draws; empty for the first-order arm.
    pub oracle_samples: Vec<OracleSample>,
    pub params_used: Vec<AlgorithmParams>,
    pub seed: u64,
    pub stream: u64,
}

impl RunRecord {
    pub fn horizon(&self) -> usize {
        self.params_used.len()
    }
}

/// Runs `t` iterations from `x0`.
pub fn run<O: TimeVaryingObjective + ?Sized>(
    obj: &O,
    x0: &ManifoldPoint,
    ball: &GeodesicBall,
    schedule: &StepSchedule,
    t: usize,
    arm: Arm,
    rng: &mut RandomStream,
) -> Result<RunRecord> {
    if t == 0 {
        return Err(contract("horizon T must be >= 1"));
    }
    let m = obj.manifold();
    let c = obj.constants();
    schedule.validate_for(c)?;
    if c.d != m.intrinsic_dim() {
        return Err(GeoError::Config(format!(
            "declared d = {} but the manifold has dimension {}",
            c.d,
            m.intrinsic_dim()
        )));
    }
    m.check_point(x0)?;
    if !ball.contains(m, x0)? {
        return Err(contract("x0 lies outside the constraint ball"));
    }

    let (seed, stream) = (rng.seed(), rng.stream());
    let mut iterates = Vec::with_capacity(t + 1);
    let mut directions = Vec::with_capacity(t);
    let mut oracle_samples = Vec::new();
    let mut params_used = Vec::with_capacity(t);
    let mut x = x0.clone();
    for k in 0..t as u64 {
        let p = schedule.params_at(k);
        let g = match arm {
            Arm::ZerothOrder => {
                let s = estimate_gradient(obj, TimeIndex::at(k), &x, p.eta, rng)?;
                let g = s.value.clone();
                oracle_samples.push(s);
                g
            }
            Arm::FirstOrder => reference_gradient(obj, TimeIndex::at(k), &x)?.0,
        };
        let next = step(m, &x, &g, p.alpha, ball)?;
        iterates.push(std::mem::replace(&mut x, next));
        directions.push(g);
        params_used.push(p);
    }
    iterates.push(x);
    Ok(RunRecord {
        arm,
        iterates,
        directions,
        oracle_samples,
        params_used,
        seed,
        stream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::make_euclidean;
    use crate::oracle::{CountingObjective, LinearObjective, ShiftingQuadratic};
    use nalgebra::DVector;

    #[test]
    fn period_lookup() {
        let lengths: Vec<u64> = (0..8).map(period_length).collect();
        assert_eq!(lengths, vec![1, 2, 2, 4, 4, 4, 4, 8]);
        assert_eq!(period_length(5), 4);
        assert_eq!(period_index(2u64.pow(20) - 2), 19);
    }

    #[test]
    fn step_examples() {
        let e2 = make_euclidean(2).unwrap();
        let x = e2.point(&[0.0, 0.0]).unwrap();
        let unbounded = GeodesicBall::unbounded(x.clone());
        let g = e2.vector(&x, &[1.0, 0.0]).unwrap();
        assert_eq!(
            step(&e2, &x, &g, 0.5, &unbounded)
                .unwrap()
                .coords
                .as_slice(),
            &[-0.5, 0.0]
        );

        let ball = GeodesicBall::new(x.clone(), 1.0).unwrap();
        let g = e2.vector(&x, &[-4.0, 0.0]).unwrap();
        assert_eq!(
            step(&e2, &x, &g, 1.0, &ball).unwrap().coords.as_slice(),
            &[1.0, 0.0]
        );

        let y = e2.point(&[0.2, 0.1]).unwrap();
        let zero = TangentVector::zero_at(&y);
        assert_eq!(step(&e2, &y, &zero, 0.3, &ball).unwrap(), y);
    }

    #[test]
    fn step_rejects_foreign_direction() {
        let e2 = make_euclidean(2).unwrap();
        let x = e2.point(&[0.0, 0.0]).unwrap();
        let other = e2.point(&[1.0, 0.0]).unwrap();
        let g = e2.vector(&other, &[1.0, 0.0]).unwrap();
        let ball = GeodesicBall::unbounded(x.clone());
        assert_eq!(step(&e2, &x, &g, 0.1, &ball), Err(GeoError::BaseMismatch));
    }

    fn quad_constants(d: usize) -> ProblemConstants {
        ProblemConstants {
            l: 1.0,
            sigma: 1.0,
            delta: 1e-9,
            v: 0.0,
            kappa: 0.0,
            r: 4.0,
            d,
            g: 4.0,
        }
    }

    #[test]
    fn constant_objective_never_moves() {
        let obj = CountingObjective::new(LinearObjective::constant(3, 1.0).unwrap());
        let x0 = ManifoldPoint::from_slice(&[0.1, 0.2, 0.3]);
        let ball = GeodesicBall::new(x0.clone(), 1.0).unwrap();
        let sched = StepSchedule::constant(0.01, 0.1).unwrap();
        let c = ProblemConstants {
            d: 3,
            ..quad_constants(3)
        };
        let obj = crate::oracle::Declared {
            inner: obj,
            constants: c,
        };
        let mut rng = RandomStream::new(1);
        let rec = run(&obj, &x0, &ball, &sched, 50, Arm::ZerothOrder, &mut rng).unwrap();
        assert!(rec.iterates.iter().all(|x| *x == x0));
        assert_eq!(obj.inner.count(), 100);
    }

    #[test]
    fn replay_is_deterministic() {
        let q = ShiftingQuadratic::fixed(1.0, DVector::from_column_slice(&[1.0, -1.0]))
            .unwrap()
            .with_constants(quad_constants(2));
        let x0 = ManifoldPoint::from_slice(&[0.0, 0.0]);
        let ball = GeodesicBall::new(x0.clone(), 2.0).unwrap();
        let sched = StepSchedule::constant(0.02, 0.01).unwrap();
        let go = || {
            let mut rng = RandomStream::substream(9, 4);
            run(&q, &x0, &ball, &sched, 200, Arm::ZerothOrder, &mut rng).unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a, b);
        assert_eq!((a.seed, a.stream), (9, 4));
        assert_eq!(a.iterates.len(), 201);
        let e2 = make_euclidean(2).unwrap();
        for k in 0..200 {
            let next = step(
                &e2,
                &a.iterates[k],
                &a.oracle_samples[k].value,
                a.params_used[k].alpha,
                &ball,
            )
            .unwrap();
            assert_eq!(next, a.iterates[k + 1]);
            assert!(ball.contains(&e2, &next).unwrap());
        }
    }

    #[test]
    fn optimal_constant_tracks_static_quadratic() {
        // any V >= 0 bounds a static minimizer; V = 0 would push the optimal step to 0
        let c = ProblemConstants {
            v: 1e-3,
            ..quad_constants(3)
        };
        let q = ShiftingQuadratic::fixed(1.0, DVector::from_column_slice(&[0.5, 0.0, -0.5]))
            .unwrap()
            .with_constants(c);
        let sched = StepSchedule::optimal(&c).unwrap();
        let p = sched.params_at(0);
        let delta = crate::bounds::delta_bound(&c, p.alpha, p.eta)
            .unwrap()
            .delta;
        let x0 = ManifoldPoint::from_slice(&[0.0, 0.0, 0.0]);
        let ball = GeodesicBall::new(x0.clone(), 2.0).unwrap();
        let mut rng = RandomStream::new(5);
        let rec = run(&q, &x0, &ball, &sched, 2000, Arm::ZerothOrder, &mut rng).unwrap();
        let last = rec.iterates.last().unwrap();
        let err = (&last.coords - DVector::from_column_slice(&[0.5, 0.0, -0.5])).norm();
        assert!(
            err < 10.0 * delta,
            "err {err}, delta {delta}, alpha {}",
            p.alpha
        );
        assert!(err < 0.1 * 0.5f64.sqrt(), "err {err}");
    }

    #[test]
    fn run_contract_errors() {
        let c = quad_constants(2);
        let q = ShiftingQuadratic::fixed(1.0, DVector::zeros(2))
            .unwrap()
            .with_constants(c);
        let x0 = ManifoldPoint::from_slice(&[0.0, 0.0]);
        let ball = GeodesicBall::new(x0.clone(), 1.0).unwrap();
        let mut rng = RandomStream::new(5);
        let ok = StepSchedule::constant(0.01, 0.01).unwrap();
        assert!(matches!(
            run(&q, &x0, &ball, &ok, 0, Arm::ZerothOrder, &mut rng),
            Err(GeoError::Contract(_))
        ));
        let big = StepSchedule::constant(c.alpha_max() * 1.5, 0.01).unwrap();
        assert!(matches!(
            run(&q, &x0, &ball, &big, 5, Arm::ZerothOrder, &mut rng),
            Err(GeoError::Config(_))
        ));
        let wrong_d = q.clone().with_constants(ProblemConstants { d: 3, ..c });
        assert!(matches!(
            run(&wrong_d, &x0, &ball, &ok, 5, Arm::ZerothOrder, &mut rng),
            Err(GeoError::Config(_))
        ));
    }

    #[test]
    fn doubling_feasibility_regression() {
        let mut c = ProblemConstants::karcher_defaults(6);
        c.kappa = crate::bounds::curvature_for_zeta(1.5, c.r).unwrap();
        let s = make_doubling_schedule(&c, 1.0).unwrap();
        for p in &s.periods()[..=12] {
            assert!(
                p.d_k <= 1.0 / (p.length as f64).sqrt() + 1e-12,
                "period {}",
                p.m
            );
            assert!(p.rho < 1.0);
        }
    }

    #[test]
    fn doubling_handles_zero_delta() {
        let c = ProblemConstants {
            delta: 0.0,
            ..ProblemConstants::karcher_defaults(6)
        };
        let s = make_doubling_schedule(&c, 1.0).unwrap();
        for p in s.periods() {
            assert!(p.eta > 0.0);
            assert!(p.d_k <= 1.0 / (p.length as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn doubling_params_are_piecewise_constant() {
        let c = ProblemConstants::karcher_defaults(6);
        let s = StepSchedule::doubling(&c, 1.0).unwrap();
        assert_eq!(s.kind(), ScheduleKind::DoublingRegret);
        for m in 0..10u32 {
            let lo = (1u64 << m) - 1;
            let hi = (1u64 << (m + 1)) - 2;
            let p = s.params_at(lo);
            for k in lo..=hi {
                assert_eq!(s.params_at(k), p);
            }
            assert_ne!(s.params_at(hi + 1), p);
        }
    }
}
