//! Drifting Karcher-mean tracking on SPD matrices.
//!
//! Each of the `N` measurements starts at a random base matrix `Āᵢ` and moves
//! along the geodesic `Aᵢ(φ) = Exp_{Āᵢ}(φ·Dᵢ)` with a fixed unit direction
//! `Dᵢ`; `φ` is a function of continuous time `s = t/2`. The objective at
//! half-step `t` is `f_t(X) = (1/2N) Σ dist(X, Aᵢ(φ(t/2)))²`.

use nalgebra::{DMatrix, DVector};

use crate::bounds::{regret_upper_bounds, ProblemConstants, RegretBounds, RegretInputs};
use crate::error::{contract, GeoError, Result};
use crate::manifold::spd::{flatten, symmetrize, SpdAnchor};
use crate::manifold::{GeodesicBall, Manifold, ManifoldPoint, Spd, SymEig, TangentVector};
use crate::optimizer::{run, Arm, RunRecord, StepSchedule};
use crate::oracle::{TimeIndex, TimeVaryingObjective};
use crate::par::{try_map_indexed, Execution};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    /// `φ(s) = ω s`.
    ConstantSpeed(f64),
    /// `φ(s) = 2ω√(s+1)`, speed `ω/√(s+1)`.
    DecayingSpeed(f64),
}

impl Drift {
    pub fn omega(self) -> f64 {
        match self {
            Self::ConstantSpeed(w) | Self::DecayingSpeed(w) => w,
        }
    }

    pub fn with_omega(self, omega: f64) -> Self {
        match self {
            Self::ConstantSpeed(_) => Self::ConstantSpeed(omega),
            Self::DecayingSpeed(_) => Self::DecayingSpeed(omega),
        }
    }

    pub fn phi(self, s: f64) -> f64 {
        match self {
            Self::ConstantSpeed(w) => w * s,
            Self::DecayingSpeed(w) => 2.0 * w * (s + 1.0).sqrt(),
        }
    }

    /// Geodesic distance travelled by each measurement up to time `s`.
    pub fn travelled(self, s: f64) -> f64 {
        (self.phi(s) - self.phi(0.0)).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KarcherInstance {
    pub m: usize,
    pub n: usize,
    pub horizon: usize,
    pub drift: Drift,
    pub eigenvalue_range: (f64, f64),
    pub seed: u64,
    pub run_index: u64,
    /// Distance of `x₀` from the ball center.
    pub init_distance: f64,
    /// Probe points used by [`calibrate_omega`].
    pub probes: usize,
}

impl KarcherInstance {
    pub fn new(m: usize, n: usize, horizon: usize, drift: Drift) -> Self {
        Self {
            m,
            n,
            horizon,
            drift,
            eigenvalue_range: (1.0, 2.0),
            seed: 0,
            run_index: 0,
            init_distance: 1.0,
            probes: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GeoError::Config(msg));
        if self.m == 0 || self.m > 64 {
            return bad(format!("m must be in 1..=64, got {}", self.m));
        }
        if self.n == 0 {
            return bad("N must be >= 1".into());
        }
        if self.horizon == 0 {
            return bad("T must be >= 1".into());
        }
        let w = self.drift.omega();
        if !(w >= 0.0 && w.is_finite()) {
            return bad(format!("omega must be >= 0, got {w}"));
        }
        let (lo, hi) = self.eigenvalue_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "need 0 < lambda_min <= lambda_max, got [{lo}, {hi}]"
            ));
        }
        if !(self.init_distance > 0.0 && self.init_distance.is_finite()) {
            return bad(format!(
                "init_distance must be > 0, got {}",
                self.init_distance
            ));
        }
        if self.probes == 0 {
            return bad("probes must be >= 1".into());
        }
        Ok(())
    }

    /// Intrinsic dimension `m(m+1)/2`.
    pub fn dim(&self) -> usize {
        self.m * (self.m + 1) / 2
    }
}

/// `Ā^{1/2} Q diag(e^{φw}) Qᵀ Ā^{1/2}` for a whitened unit direction `Q diag(w) Qᵀ`.
#[derive(Debug, Clone)]
struct DriftingMatrix {
    base: DMatrix<f64>,
    base_sqrt: DMatrix<f64>,
    direction: SymEig,
}

impl DriftingMatrix {
    fn at(&self, phi: f64) -> DMatrix<f64> {
        if phi == 0.0 {
            return self.base.clone();
        }
        let e = self.direction.map(|w| (phi * w).exp());
        symmetrize(&(&self.base_sqrt * e * &self.base_sqrt))
    }
}

#[derive(Debug, Clone)]
pub struct KarcherObjective {
    space: Spd,
    constants: ProblemConstants,
    drift: Drift,
    measurements: Vec<DriftingMatrix>,
    center: ManifoldPoint,
    base_spread: f64,
}

impl KarcherObjective {
    pub fn drift(&self) -> Drift {
        self.drift
    }

    pub fn with_drift(&self, drift: Drift) -> Self {
        Self {
            drift,
            ..self.clone()
        }
    }

    pub fn with_constants(&self, constants: ProblemConstants) -> Self {
        Self {
            constants,
            ..self.clone()
        }
    }

    pub fn phi(&self, t: TimeIndex) -> f64 {
        self.drift.phi(t.as_f64())
    }

    pub fn bases(&self) -> Vec<DMatrix<f64>> {
        self.measurements.iter().map(|d| d.base.clone()).collect()
    }

    pub fn matrices_at(&self, t: TimeIndex) -> Vec<DMatrix<f64>> {
        let phi = self.phi(t);
        self.measurements.iter().map(|d| d.at(phi)).collect()
    }

    /// Karcher mean of the base matrices.
    pub fn center(&self) -> &ManifoldPoint {
        &self.center
    }

    /// `maxᵢ dist(center, Āᵢ)`.
    pub fn base_spread(&self) -> f64 {
        self.base_spread
    }

    /// A ball around the center holding every measurement up to `t_max`,
    /// hence every minimizer.
    pub fn domain_ball(&self, t_max: TimeIndex, init_distance: f64) -> Result<GeodesicBall> {
        let travelled = (0..=t_max.half_steps())
            .map(|t| self.drift.travelled(TimeIndex::from_half_steps(t).as_f64()))
            .fold(0.0, f64::max);
        GeodesicBall::new(
            self.center.clone(),
            (self.base_spread + travelled).max(init_distance),
        )
    }
}

impl TimeVaryingObjective for KarcherObjective {
    type Space = Spd;

    fn manifold(&self) -> &Spd {
        &self.space
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn eval(&self, t: TimeIndex, x: &ManifoldPoint) -> Result<f64> {
        let anchor = self.space.anchor(x)?;
        cost_at(&anchor, &self.matrices_at(t))
    }

    fn gradient(&self, t: TimeIndex, x: &ManifoldPoint) -> Option<Result<TangentVector>> {
        Some(self.space.karcher_grad(x, &self.matrices_at(t)))
    }
}

fn cost_at(anchor: &SpdAnchor, mats: &[DMatrix<f64>]) -> Result<f64> {
    crate::manifold::spd::karcher_cost_at(anchor, mats)
}

/// Cost and whitened gradient from one set of whitened logarithms.
fn cost_and_whitened_grad(
    anchor: &SpdAnchor,
    mats: &[DMatrix<f64>],
) -> Result<(f64, DMatrix<f64>)> {
    let m = anchor.matrix.nrows();
    let mut sum = DMatrix::zeros(m, m);
    let mut sq = 0.0;
    for a in mats {
        let l = anchor.whitened_log(a)?;
        sq += l.norm_squared();
        sum += l;
    }
    let n = mats.len() as f64;
    Ok((sq / (2.0 * n), sum * (-1.0 / n)))
}

fn random_orthogonal(m: usize, rng: &mut RandomStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.standard_normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn random_unit_symmetric(m: usize, rng: &mut RandomStream) -> DMatrix<f64> {
    loop {
        let g = symmetrize(&DMatrix::from_fn(m, m, |_, _| rng.standard_normal()));
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Random base matrices `Qᵢ diag(λ) Qᵢᵀ` with log-uniform eigenvalues and
/// random unit drift directions.
pub fn generate_instance(
    inst: &KarcherInstance,
    constants: ProblemConstants,
    rng: &mut RandomStream,
) -> Result<KarcherObjective> {
    inst.validate()?;
    let space = Spd::with_curvature_bound(inst.m, constants.kappa.min(0.0))?;
    let (lo, hi) = inst.eigenvalue_range;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut measurements = Vec::with_capacity(inst.n);
    for _ in 0..inst.n {
        let q = random_orthogonal(inst.m, rng);
        let lambda = DVector::from_fn(inst.m, |_, _| rng.uniform_in(llo, lhi).exp());
        let base = symmetrize(&(&q * DMatrix::from_diagonal(&lambda) * q.transpose()));
        let base_sqrt = SymEig::new(&base).map(f64::sqrt);
        let direction = SymEig::new(&random_unit_symmetric(inst.m, rng));
        measurements.push(DriftingMatrix {
            base,
            base_sqrt,
            direction,
        });
    }
    let bases: Vec<_> = measurements.iter().map(|d| d.base.clone()).collect();
    let warm = log_euclidean_mean(&bases);
    let center = solve_minimizer(
        &space,
        &bases,
        &warm,
        &SolverOptions::for_constants(&constants),
    )?
    .point;
    let anchor = space.anchor(&center)?;
    let mut base_spread: f64 = 0.0;
    for b in &bases {
        base_spread = base_spread.max(anchor.distance_to(b)?);
    }
    Ok(KarcherObjective {
        space,
        constants,
        drift: inst.drift,
        measurements,
        center,
        base_spread,
    })
}

fn log_euclidean_mean(mats: &[DMatrix<f64>]) -> ManifoldPoint {
    let m = mats[0].nrows();
    let mut sum = DMatrix::zeros(m, m);
    for a in mats {
        sum += SymEig::new(a).map(f64::ln);
    }
    let mean = SymEig::new(&(sum / mats.len() as f64)).map(f64::exp);
    ManifoldPoint::new(flatten(&mean))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub step: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SolverOptions {
    /// Step `1/L`, gradient-norm tolerance `1e-10`, at most `10⁵` iterations.
    pub fn for_constants(c: &ProblemConstants) -> Self {
        Self {
            step: 1.0 / c.l,
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub point: ManifoldPoint,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Riemannian gradient descent on the Karcher cost of `mats` from `warm`.
pub fn solve_minimizer(
    space: &Spd,
    mats: &[DMatrix<f64>],
    warm: &ManifoldPoint,
    opts: &SolverOptions,
) -> Result<Minimizer> {
    if mats.is_empty() {
        return Err(contract("need at least one matrix"));
    }
    let mut x = space.to_matrix(&warm.coords)?;
    for it in 0..=opts.max_iterations {
        let anchor = SpdAnchor::new(&x)?;
        let (value, w) = cost_and_whitened_grad(&anchor, mats)?;
        let grad_norm = w.norm();
        if grad_norm <= opts.tolerance {
            return Ok(Minimizer {
                point: ManifoldPoint::new(flatten(&x)),
                value,
                grad_norm,
                iterations: it,
            });
        }
        x = anchor.exp_whitened(&(w * -opts.step));
    }
    Err(GeoError::Solver(format!(
        "gradient norm above {} after {} iterations",
        opts.tolerance, opts.max_iterations
    )))
}

/// Minimizer of `f_t`, warm-started.
pub fn true_minimizer(
    obj: &KarcherObjective,
    t: TimeIndex,
    warm: &ManifoldPoint,
) -> Result<Minimizer> {
    solve_minimizer(
        &obj.space,
        &obj.matrices_at(t),
        warm,
        &SolverOptions::for_constants(&obj.constants),
    )
}

/// Minimizers at half-steps `0 ..= last`, each warm-started from the previous.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerPath {
    pub points: Vec<ManifoldPoint>,
    pub values: Vec<f64>,
}

pub fn minimizer_path(obj: &KarcherObjective, last: TimeIndex) -> Result<MinimizerPath> {
    let mut points = Vec::with_capacity(last.half_steps() as usize + 1);
    let mut values = Vec::with_capacity(points.capacity());
    let mut warm = obj.center.clone();
    for t in 0..=last.half_steps() {
        let sol = true_minimizer(obj, TimeIndex::from_half_steps(t), &warm)?;
        warm = sol.point.clone();
        points.push(sol.point);
        values.push(sol.value);
    }
    Ok(MinimizerPath { points, values })
}

struct ProbeSet {
    anchors: Vec<SpdAnchor>,
    times: Vec<TimeIndex>,
}

/// Random points within `max(base_spread, init_distance)` of the center, each
/// paired with a step on the grid `j·T/probes`, plus any `extra` points (probed
/// at step 0 only).
fn probe_set(
    obj: &KarcherObjective,
    inst: &KarcherInstance,
    extra: &[ManifoldPoint],
    rng: &mut RandomStream,
) -> Result<ProbeSet> {
    let radius = obj.base_spread.max(inst.init_distance);
    let center = obj.space.anchor(&obj.center)?;
    let mut anchors = Vec::with_capacity(inst.probes + extra.len());
    let mut times = Vec::with_capacity(anchors.capacity());
    for j in 0..inst.probes {
        let dir = random_unit_symmetric(inst.m, rng);
        let r = radius * rng.uniform();
        anchors.push(SpdAnchor::new(&center.exp_whitened(&(dir * r)))?);
        times.push(TimeIndex::at((j * inst.horizon / inst.probes) as u64));
    }
    for x in extra {
        anchors.push(obj.space.anchor(x)?);
        times.push(TimeIndex::at(0));
    }
    Ok(ProbeSet { anchors, times })
}

/// Worst `|f_{k⁺} − f_k|` over the probe points, each checked at its own step
/// and at step 0, where a decaying drift is fastest.
fn probe_delta(obj: &KarcherObjective, probes: &ProbeSet) -> Result<f64> {
    let start = (
        obj.matrices_at(TimeIndex::at(0)),
        obj.matrices_at(TimeIndex::after(0)),
    );
    let mut worst: f64 = 0.0;
    for (anchor, &t) in probes.anchors.iter().zip(&probes.times) {
        let gap = cost_at(anchor, &start.1)? - cost_at(anchor, &start.0)?;
        worst = worst.max(gap.abs());
        if t.half_steps() > 0 {
            let gap = cost_at(anchor, &obj.matrices_at(t.next()))?
                - cost_at(anchor, &obj.matrices_at(t))?;
            worst = worst.max(gap.abs());
        }
    }
    Ok(worst)
}

/// Largest `|f_{k⁺}(x) − f_k(x)|` over the instance's probe points.
pub fn empirical_delta(
    obj: &KarcherObjective,
    inst: &KarcherInstance,
    rng: &mut RandomStream,
) -> Result<f64> {
    let probes = probe_set(obj, inst, &[], rng)?;
    probe_delta(obj, &probes)
}

pub const CALIBRATION_STEPS: usize = 60;

/// Drift speed `ω` whose probed temporal variation lies in
/// `[0.8, 1.0]·delta_target`.
pub fn calibrate_omega(
    obj: &KarcherObjective,
    inst: &KarcherInstance,
    delta_target: f64,
    rng: &mut RandomStream,
) -> Result<f64> {
    calibrate_omega_with(obj, inst, delta_target, &[], rng)
}

/// [`calibrate_omega`] with additional probe points, e.g. the starting iterate.
pub fn calibrate_omega_with(
    obj: &KarcherObjective,
    inst: &KarcherInstance,
    delta_target: f64,
    extra: &[ManifoldPoint],
    rng: &mut RandomStream,
) -> Result<f64> {
    if !(delta_target > 0.0 && delta_target.is_finite()) {
        return Err(contract(format!(
            "delta target must be > 0, got {delta_target}"
        )));
    }
    let probes = probe_set(obj, inst, extra, rng)?;
    let measure = |w: f64| probe_delta(&obj.with_drift(obj.drift.with_omega(w)), &probes);
    let (lo_ok, hi_ok) = (0.8 * delta_target, delta_target);
    let inside = |d: f64| d >= lo_ok && d <= hi_ok;

    let mut steps = 0;
    let w0 = 1e-3;
    let d0 = measure(w0)?;
    if inside(d0) {
        return Ok(w0);
    }
    // variation is close to linear in ω, so a secant guess usually lands
    let mut guess = if d0 > 0.0 {
        w0 * 0.9 * delta_target / d0
    } else {
        2.0 * w0
    };
    let (mut lo, mut hi) = if d0 < lo_ok {
        (w0, f64::INFINITY)
    } else {
        (0.0, w0)
    };
    while steps < CALIBRATION_STEPS {
        steps += 1;
        if !(guess > lo && guess < hi) {
            guess = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * lo.max(w0)
            };
        }
        let d = measure(guess)?;
        if inside(d) {
            return Ok(guess);
        }
        if d < lo_ok {
            lo = guess;
        } else {
            hi = guess;
        }
        guess = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * guess
        };
    }
    Err(GeoError::Calibration(format!(
        "temporal variation not within [{lo_ok}, {hi_ok}] after {CALIBRATION_STEPS} steps"
    )))
}

/// Per-iteration errors, cumulative regrets and path variation for rows
/// `k = 0 ..= K`, where the record holds `K + 1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTrace {
    /// `e_k = dist(x_k, x⋆_{k⁺})`.
    pub e: Vec<f64>,
    /// `ē_k = dist(x_{k+1}, x⋆_{k⁺})`.
    pub ebar: Vec<f64>,
    pub reg_track: Vec<f64>,
    pub reg_est: Vec<f64>,
    /// `Σ_{j<k} dist(x⋆_{j⁺}, x⋆_{(j+1)⁺})`.
    pub vt_cum: Vec<f64>,
    /// `max_k |f_{k⁺}(x_k) − f_k(x_k)|`.
    pub delta_hat: f64,
    /// `max_k dist(x⋆_{k+1}, x⋆_{k⁺})`.
    pub v_hat: f64,
    /// `max_k ‖grad f_{k⁺}(x_k)‖`.
    pub g_hat: f64,
}

pub fn evaluate_run(
    record: &RunRecord,
    obj: &KarcherObjective,
    mins: &MinimizerPath,
) -> Result<MetricsTrace> {
    let steps = record.horizon();
    if steps == 0 || record.iterates.len() != steps + 1 {
        return Err(contract("run record is empty or inconsistent"));
    }
    let rows = steps;
    let k_last = rows - 1;
    if mins.points.len() < 2 * k_last + 2 || mins.values.len() != mins.points.len() {
        return Err(contract(format!(
            "need minimizers at half-steps 0..={}, got {}",
            2 * k_last + 1,
            mins.points.len()
        )));
    }
    let space = &obj.space;
    let mut trace = MetricsTrace {
        e: Vec::with_capacity(rows),
        ebar: Vec::with_capacity(rows),
        reg_track: Vec::with_capacity(rows),
        reg_est: Vec::with_capacity(rows),
        vt_cum: Vec::with_capacity(rows),
        delta_hat: 0.0,
        v_hat: 0.0,
        g_hat: 0.0,
    };
    let (mut reg_track, mut reg_est, mut vt) = (0.0, 0.0, 0.0);
    let mut next_anchor = space.anchor(&record.iterates[0])?;
    for k in 0..rows {
        let anchor = next_anchor;
        next_anchor = space.anchor(&record.iterates[k + 1])?;
        let t = TimeIndex::at(k as u64);
        let plus = 2 * k + 1;
        let star = space.to_matrix(&mins.points[plus].coords)?;
        let mats_plus = obj.matrices_at(t.next());
        let (f_plus, grad) = cost_and_whitened_grad(&anchor, &mats_plus)?;
        let f_now = cost_at(&anchor, &obj.matrices_at(t))?;
        let f_next = cost_at(&next_anchor, &mats_plus)?;

        trace.e.push(anchor.distance_to(&star)?);
        trace.ebar.push(next_anchor.distance_to(&star)?);
        reg_track += (f_plus - mins.values[plus]).max(0.0);
        reg_est += (f_next - mins.values[plus]).max(0.0);
        trace.reg_track.push(reg_track);
        trace.reg_est.push(reg_est);
        trace.vt_cum.push(vt);
        if k < k_last {
            vt += space.distance(&mins.points[plus], &mins.points[plus + 2])?;
            let v = space.distance(&mins.points[plus + 1], &mins.points[plus])?;
            trace.v_hat = trace.v_hat.max(v);
        }
        trace.delta_hat = trace.delta_hat.max((f_plus - f_now).abs());
        trace.g_hat = trace.g_hat.max(grad.norm());
    }
    Ok(trace)
}

/// One arm averaged over runs, rows `k = 0 ..= K`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTrace {
    pub arm: Arm,
    pub e_mean: Vec<f64>,
    pub e_stderr: Vec<f64>,
    pub ebar_mean: Vec<f64>,
    pub reg_track: Vec<f64>,
    pub reg_est: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
    pub vt_cum: Vec<f64>,
}

impl AveragedTrace {
    pub fn rows(&self) -> usize {
        self.e_mean.len()
    }

    /// Mean of `e_mean` over the last `fraction` of rows.
    pub fn tail_mean(&self, fraction: f64) -> f64 {
        let n = self.rows();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        self.e_mean[n - take..].iter().sum::<f64>() / take as f64
    }

    fn average(arm: Arm, traces: &[MetricsTrace], record: &RunRecord) -> Self {
        let runs = traces.len() as f64;
        let rows = traces[0].e.len();
        let mean = |f: &dyn Fn(&MetricsTrace) -> &Vec<f64>| -> Vec<f64> {
            (0..rows)
                .map(|k| traces.iter().map(|t| f(t)[k]).sum::<f64>() / runs)
                .collect()
        };
        let e_mean = mean(&|t| &t.e);
        let e_stderr = (0..rows)
            .map(|k| {
                if traces.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = traces.iter().map(|t| (t.e[k] - e_mean[k]).powi(2)).sum();
                (ss / (runs - 1.0)).sqrt() / runs.sqrt()
            })
            .collect();
        let params = &record.params_used[..rows];
        Self {
            arm,
            e_stderr,
            ebar_mean: mean(&|t| &t.ebar),
            reg_track: mean(&|t| &t.reg_track),
            reg_est: mean(&|t| &t.reg_est),
            vt_cum: mean(&|t| &t.vt_cum),
            alpha: params.iter().map(|p| p.alpha).collect(),
            eta: params
                .iter()
                .map(|p| if arm == Arm::FirstOrder { 0.0 } else { p.eta })
                .collect(),
            e_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    pub run_index: u64,
    pub omega: f64,
    pub ball_radius: f64,
    pub delta_hat: f64,
    pub v_hat: f64,
    pub g_hat: f64,
    /// `δ̂ ≤ δ`, `V̂ ≤ V` and `Ĝ ≤ G` for the declared constants.
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// Template; `run_index` is set per run.
    pub instance: KarcherInstance,
    pub constants: ProblemConstants,
    pub schedule: StepSchedule,
    pub runs: usize,
    /// When set, `ω` is recalibrated per run to this temporal variation.
    pub delta_target: Option<f64>,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub zeroth: AveragedTrace,
    pub first: AveragedTrace,
    pub runs: Vec<RunDiagnostics>,
}

impl StudyResult {
    pub fn all_certified(&self) -> bool {
        self.runs.iter().all(|r| r.certified)
    }
}

struct SingleRun {
    zeroth: (MetricsTrace, RunRecord),
    first: (MetricsTrace, RunRecord),
    diag: RunDiagnostics,
}

fn single_run(cfg: &StudyConfig, index: u64) -> Result<SingleRun> {
    let inst = KarcherInstance {
        run_index: index,
        ..cfg.instance
    };
    let seed = inst.seed;
    let mut gen_rng = RandomStream::substream(seed, 3 * index);
    let mut obj = generate_instance(&inst, cfg.constants, &mut gen_rng)?;
    let center = obj.space.anchor(&obj.center)?;
    let dir = random_unit_symmetric(inst.m, &mut gen_rng);
    let x0 = ManifoldPoint::new(flatten(&center.exp_whitened(&(dir * inst.init_distance))));
    if let Some(target) = cfg.delta_target {
        let mut probe_rng = RandomStream::substream(seed, 3 * index + 1);
        let omega = calibrate_omega_with(
            &obj,
            &inst,
            target,
            std::slice::from_ref(&x0),
            &mut probe_rng,
        )?;
        obj = obj.with_drift(inst.drift.with_omega(omega));
    }
    // K + 1 steps give rows k = 0..=K with K = horizon
    let steps = inst.horizon + 1;
    let last = TimeIndex::after(inst.horizon as u64);
    let ball = obj.domain_ball(last.next(), inst.init_distance)?;
    let mins = minimizer_path(&obj, last)?;

    let mut oracle_rng = RandomStream::substream(seed, 3 * index + 2);
    let zo = run(
        &obj,
        &x0,
        &ball,
        &cfg.schedule,
        steps,
        Arm::ZerothOrder,
        &mut oracle_rng,
    )?;
    let fo = run(
        &obj,
        &x0,
        &ball,
        &cfg.schedule,
        steps,
        Arm::FirstOrder,
        &mut oracle_rng,
    )?;
    let zo_trace = evaluate_run(&zo, &obj, &mins)?;
    let fo_trace = evaluate_run(&fo, &obj, &mins)?;

    let c = &cfg.constants;
    let delta_hat = zo_trace.delta_hat.max(fo_trace.delta_hat);
    let g_hat = zo_trace.g_hat.max(fo_trace.g_hat);
    let v_hat = zo_trace.v_hat;
    let diag = RunDiagnostics {
        run_index: index,
        omega: obj.drift.omega(),
        ball_radius: ball.radius,
        delta_hat,
        v_hat,
        g_hat,
        certified: delta_hat <= c.delta * (1.0 + 1e-9) && v_hat <= c.v && g_hat <= c.g,
    };
    Ok(SingleRun {
        zeroth: (zo_trace, zo),
        first: (fo_trace, fo),
        diag,
    })
}

/// Independent runs (fresh instance each) of both arms, averaged pointwise.
pub fn averaged_study(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.runs == 0 {
        return Err(GeoError::Config("runs must be >= 1".into()));
    }
    cfg.instance.validate()?;
    cfg.constants.validate()?;
    if cfg.constants.d != cfg.instance.dim() {
        return Err(GeoError::Config(format!(
            "declared d = {} but m = {} gives d = {}",
            cfg.constants.d,
            cfg.instance.m,
            cfg.instance.dim()
        )));
    }
    let results = try_map_indexed(cfg.exec, cfg.runs, |i| single_run(cfg, i as u64))?;
    let zo: Vec<_> = results.iter().map(|r| r.zeroth.0.clone()).collect();
    let fo: Vec<_> = results.iter().map(|r| r.first.0.clone()).collect();
    Ok(StudyResult {
        zeroth: AveragedTrace::average(Arm::ZerothOrder, &zo, &results[0].zeroth.1),
        first: AveragedTrace::average(Arm::FirstOrder, &fo, &results[0].first.1),
        runs: results.iter().map(|r| r.diag).collect(),
    })
}

/// Regret bounds at horizon `t` from an averaged zeroth-order trace.
pub fn regret_bounds_at(
    c: &ProblemConstants,
    schedule: &StepSchedule,
    trace: &AveragedTrace,
    t: usize,
) -> Result<RegretBounds> {
    if t == 0 || t >= trace.rows() {
        return Err(contract(format!("horizon {t} outside 1..{}", trace.rows())));
    }
    let cbar = schedule.params_at(0).cbar;
    let inputs = RegretInputs {
        rho0: schedule.rho_at(c, 0),
        rho1: schedule.rho_at(c, 1),
        rho_t: schedule.rho_at(c, t as u64),
        rho_t1: schedule.rho_at(c, t as u64 + 1),
        cbar,
        e0: trace.e_mean[0],
        e_t: trace.e_mean[t],
        ebar0: trace.ebar_mean[0],
        ebar_t: trace.ebar_mean[t],
        v_t: trace.vt_cum[t],
    };
    regret_upper_bounds(c, &inputs, t as u64)
}

/// Measured tracking regret over the first `t` iterations.
pub fn measured_regret(trace: &AveragedTrace, t: usize) -> f64 {
    trace.reg_track[t - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn small(
        m: usize,
        n: usize,
        horizon: usize,
        drift: Drift,
    ) -> (KarcherInstance, KarcherObjective) {
        let inst = KarcherInstance {
            probes: 200,
            seed: 4,
            ..KarcherInstance::new(m, n, horizon, drift)
        };
        let c = ProblemConstants::karcher_defaults(inst.dim());
        let mut rng = RandomStream::new(4);
        let obj = generate_instance(&inst, c, &mut rng).unwrap();
        (inst, obj)
    }

    #[test]
    fn frozen_drift_is_static() {
        let (inst, obj) = small(3, 4, 20, Drift::ConstantSpeed(0.0));
        let mut rng = RandomStream::new(1);
        assert_eq!(empirical_delta(&obj, &inst, &mut rng).unwrap(), 0.0);
        assert_eq!(obj.matrices_at(TimeIndex::at(7)), obj.bases());
    }

    #[test]
    fn single_matrix_minimizer_is_the_matrix() {
        let (_, obj) = small(3, 1, 10, Drift::ConstantSpeed(0.0));
        let unit = obj.with_constants(ProblemConstants {
            l: 1.0,
            ..*obj.constants()
        });
        let warm = ManifoldPoint::new(flatten(&DMatrix::identity(3, 3)));
        let sol = true_minimizer(&unit, TimeIndex::at(0), &warm).unwrap();
        assert!(sol.iterations <= 2, "{}", sol.iterations);
        let a = &obj.bases()[0];
        assert!(
            obj.space
                .spd_distance(a, &obj.space.to_matrix(&sol.point.coords).unwrap())
                .unwrap()
                < 1e-9
        );
    }

    #[test]
    fn two_point_mean_is_midpoint() {
        let space = Spd::new(3).unwrap();
        let a = DMatrix::identity(3, 3);
        let b = DMatrix::from_diagonal(&DVector::from_column_slice(&[E * E, 1.0, 1.0]));
        let warm = ManifoldPoint::new(flatten(&DMatrix::from_diagonal(
            &DVector::from_column_slice(&[2.0, 1.5, 0.7]),
        )));
        let c = ProblemConstants::karcher_defaults(6);
        let sol =
            solve_minimizer(&space, &[a, b], &warm, &SolverOptions::for_constants(&c)).unwrap();
        let expected = flatten(&DMatrix::from_diagonal(&DVector::from_column_slice(&[
            E, 1.0, 1.0,
        ])));
        assert!((&sol.point.coords - expected).amax() < 1e-9);
    }

    #[test]
    fn minimizer_certificate_and_secant_inequality() {
        let (_, obj) = small(3, 10, 10, Drift::ConstantSpeed(0.0));
        let sol = true_minimizer(&obj, TimeIndex::at(0), obj.center()).unwrap();
        assert!(sol.grad_norm <= 1e-10);
        let mut rng = RandomStream::new(8);
        let center = obj.space.anchor(&sol.point).unwrap();
        for _ in 0..100 {
            let w = random_unit_symmetric(3, &mut rng) * (2.0 * rng.uniform());
            let x = ManifoldPoint::new(flatten(&center.exp_whitened(&w)));
            let g = obj.gradient(TimeIndex::at(0), &x).unwrap().unwrap();
            let to_star = obj.space.log(&x, &sol.point).unwrap();
            let lhs = -obj.space.inner(&x, &g, &to_star).unwrap();
            let dist = obj.space.distance(&x, &sol.point).unwrap();
            assert!(
                lhs >= 0.5 * dist * dist - 1e-8,
                "{lhs} vs {}",
                0.5 * dist * dist
            );
        }
    }

    #[test]
    fn drift_moves_at_stated_speed() {
        let (_, obj) = small(3, 3, 10, Drift::ConstantSpeed(0.2));
        let a0 = obj.matrices_at(TimeIndex::at(0));
        let a1 = obj.matrices_at(TimeIndex::at(3));
        for (x, y) in a0.iter().zip(&a1) {
            assert!((obj.space.spd_distance(x, y).unwrap() - 0.6).abs() < 1e-9);
        }
        let d = Drift::DecayingSpeed(0.5);
        assert!((d.travelled(3.0) - (2.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn clairvoyant_record_has_zero_error() {
        let (inst, obj) = small(2, 3, 6, Drift::ConstantSpeed(0.01));
        let last = TimeIndex::after(inst.horizon as u64);
        let mins = minimizer_path(&obj, last).unwrap();
        // x_k = x⋆_{k⁺} for every k, and x_{k+1} = x⋆_{k⁺} only when static
        let steps = inst.horizon + 1;
        let iterates: Vec<_> = (0..=steps)
            .map(|k| mins.points[(2 * k + 1).min(2 * inst.horizon + 1)].clone())
            .collect();
        let record = RunRecord {
            arm: Arm::FirstOrder,
            iterates,
            directions: Vec::new(),
            oracle_samples: Vec::new(),
            params_used: vec![
                crate::optimizer::AlgorithmParams::new(0.1, 0.1, 1.0).unwrap();
                steps
            ],
            seed: 0,
            stream: 0,
        };
        let trace = evaluate_run(&record, &obj, &mins).unwrap();
        assert!(trace.e.iter().all(|e| *e < 1e-8));
        assert!(trace.reg_track.iter().all(|r| *r < 1e-12));
        for w in trace.reg_est.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn one_step_metrics_match_direct_arithmetic() {
        let (_, obj) = small(2, 2, 1, Drift::ConstantSpeed(0.05));
        let mins = minimizer_path(&obj, TimeIndex::after(1)).unwrap();
        let space = obj.space;
        let x0 = obj.center().clone();
        let x1 = mins.points[0].clone();
        let x2 = mins.points[3].clone();
        let record = RunRecord {
            arm: Arm::FirstOrder,
            iterates: vec![x0.clone(), x1.clone(), x2.clone()],
            directions: Vec::new(),
            oracle_samples: Vec::new(),
            params_used: vec![crate::optimizer::AlgorithmParams::new(0.1, 0.1, 1.0).unwrap(); 2],
            seed: 0,
            stream: 0,
        };
        let trace = evaluate_run(&record, &obj, &mins).unwrap();
        let f = |t: u64, x: &ManifoldPoint| obj.eval(TimeIndex::from_half_steps(t), x).unwrap();
        assert!((trace.e[0] - space.distance(&x0, &mins.points[1]).unwrap()).abs() < 1e-12);
        assert!((trace.ebar[1] - space.distance(&x2, &mins.points[3]).unwrap()).abs() < 1e-12);
        let r0 = f(1, &x0) - mins.values[1];
        let r1 = f(3, &x1) - mins.values[3];
        assert!((trace.reg_track[1] - (r0 + r1)).abs() < 1e-10);
        assert!(
            (trace.vt_cum[1] - space.distance(&mins.points[1], &mins.points[3]).unwrap()).abs()
                < 1e-12
        );
        assert!(
            (trace.delta_hat
                - (f(1, &x0) - f(0, &x0))
                    .abs()
                    .max((f(3, &x1) - f(2, &x1)).abs()))
            .abs()
                < 1e-12
        );
    }

    #[test]
    fn calibration_hits_window() {
        let (inst, obj) = small(3, 10, 200, Drift::ConstantSpeed(0.0));
        let mut rng = RandomStream::new(3);
        let w = calibrate_omega(&obj, &inst, 0.001, &mut rng).unwrap();
        let mut rng = RandomStream::new(3);
        let d = empirical_delta(&obj.with_drift(Drift::ConstantSpeed(w)), &inst, &mut rng).unwrap();
        assert!((0.0008..=0.001).contains(&d), "{d}");
        let mut rng = RandomStream::new(3);
        let w2 = calibrate_omega(&obj, &inst, 0.002, &mut rng).unwrap();
        assert!((w2 / w - 2.0).abs() < 0.5, "{w} {w2}");
    }

    #[test]
    fn study_is_deterministic_across_modes() {
        let inst = KarcherInstance {
            probes: 100,
            seed: 11,
            ..KarcherInstance::new(2, 3, 30, Drift::ConstantSpeed(0.0))
        };
        let c = ProblemConstants::karcher_defaults(3);
        let cfg = StudyConfig {
            instance: inst,
            constants: c,
            schedule: StepSchedule::optimal(&c).unwrap(),
            runs: 3,
            delta_target: Some(0.001),
            exec: Execution::Parallel,
        };
        let a = averaged_study(&cfg).unwrap();
        let b = averaged_study(&StudyConfig {
            exec: Execution::Sequential,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a.zeroth, b.zeroth);
        assert_eq!(a.first, b.first);
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.zeroth.rows(), 31);
        assert!(a.first.eta.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn single_run_study_equals_evaluate_run() {
        let inst = KarcherInstance {
            probes: 50,
            seed: 2,
            ..KarcherInstance::new(2, 2, 10, Drift::ConstantSpeed(0.01))
        };
        let c = ProblemConstants::karcher_defaults(3);
        let cfg = StudyConfig {
            instance: inst,
            constants: c,
            schedule: StepSchedule::optimal(&c).unwrap(),
            runs: 1,
            delta_target: None,
            exec: Execution::Sequential,
        };
        let study = averaged_study(&cfg).unwrap();
        let single = single_run(&cfg, 0).unwrap();
        assert_eq!(study.zeroth.e_mean, single.zeroth.0.e);
        assert!(study.zeroth.e_stderr.iter().all(|s| *s == 0.0));
    }
}
