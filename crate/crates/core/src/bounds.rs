//! Analytical tracking, complexity and regret bounds.
//!
//! Every function here is a closed-form evaluation over [`ProblemConstants`];
//! the curvature factor is always `ζ(κ, R)` except inside [`psi`], which uses
//! the error-dependent `ζ(κ, e)`.

use crate::error::{contract, ensure_positive, GeoError, Result};

/// Problem constants: smoothness `L`, strong convexity `σ`, temporal
/// variation `δ`, minimizer drift `V`, curvature bound `κ`, domain diameter
/// `R`, intrinsic dimension `d` and gradient bound `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub l: f64,
    pub sigma: f64,
    pub delta: f64,
    pub v: f64,
    pub kappa: f64,
    pub r: f64,
    pub d: usize,
    pub g: f64,
}

/// `ζ` targeted by [`ProblemConstants::karcher_defaults`].
pub const KARCHER_ZETA: f64 = 1.5;

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GeoError::Config(msg));
        if !(self.sigma > 0.0 && self.sigma <= self.l && self.l.is_finite()) {
            return bad(format!(
                "need 0 < sigma <= L, got sigma = {}, L = {}",
                self.sigma, self.l
            ));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.v >= 0.0 && self.v.is_finite()) {
            return bad(format!("V must be >= 0, got {}", self.v));
        }
        if !(self.kappa <= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be <= 0, got {}", self.kappa));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("R must be > 0, got {}", self.r));
        }
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad(format!("G must be > 0, got {}", self.g));
        }
        Ok(())
    }

    /// Karcher-study constants for intrinsic dimension `d`: `L = 1.5`,
    /// `σ = 1`, `δ = 0.001`, `V = 0.5`, `κ = −1/2`, and `R` chosen so that
    /// `ζ(κ, R) = 1.5`. `G = L·R`.
    pub fn karcher_defaults(d: usize) -> Self {
        let kappa = -0.5;
        let r = radius_for_zeta(kappa, KARCHER_ZETA).expect("valid zeta target");
        let l = 1.5;
        Self {
            l,
            sigma: 1.0,
            delta: 0.001,
            v: 0.5,
            kappa,
            r,
            d,
            g: l * r,
        }
    }

    pub fn zeta_r(&self) -> f64 {
        zeta(self.kappa, self.r)
    }

    fn df(&self) -> f64 {
        self.d as f64
    }

    /// Upper end of the admissible step range `σ / (2L²(d+4)ζ(κ,R))`.
    pub fn alpha_max(&self) -> f64 {
        self.sigma / (2.0 * self.l * self.l * (self.df() + 4.0) * self.zeta_r())
    }
}

/// Curvature distortion `ζ(κ, e) = e√|κ| / tanh(e√|κ|)`, extended by 1 at
/// `κ = 0` or `e = 0`.
pub fn zeta(kappa: f64, e: f64) -> f64 {
    let x = e.max(0.0) * kappa.abs().sqrt();
    if x < 1e-8 {
        1.0 + x * x / 3.0
    } else {
        x / x.tanh()
    }
}

/// Solves `x / tanh x = target` for `x ≥ 0`.
fn invert_x_coth(target: f64) -> Result<f64> {
    if !(target >= 1.0 && target.is_finite()) {
        return Err(contract(format!("zeta target must be >= 1, got {target}")));
    }
    if target == 1.0 {
        return Ok(0.0);
    }
    // x / tanh x > x, so x < target
    let (mut lo, mut hi) = (0.0f64, target);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zeta(-1.0, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The diameter `R` for which `ζ(κ, R) = target`.
pub fn radius_for_zeta(kappa: f64, target: f64) -> Result<f64> {
    if !(kappa < 0.0) {
        return Err(contract("radius_for_zeta needs kappa < 0"));
    }
    Ok(invert_x_coth(target)? / kappa.abs().sqrt())
}

/// The curvature bound `κ` for which `ζ(κ, r) = target`.
pub fn curvature_for_zeta(target: f64, r: f64) -> Result<f64> {
    ensure_positive("r", r)?;
    let x = invert_x_coth(target)?;
    Ok(-(x / r).powi(2))
}

/// `(L²η²/2)(d+6)³ + 2Lδ(d+4)² + 2δ²d/η²`, the gradient-free part of the
/// oracle second-moment bound.
pub fn oracle_noise(c: &ProblemConstants, eta: f64) -> f64 {
    let d = c.df();
    0.5 * c.l * c.l * eta * eta * (d + 6.0).powi(3)
        + 2.0 * c.l * c.delta * (d + 4.0).powi(2)
        + 2.0 * c.delta * c.delta * d / (eta * eta)
}

/// `Lη(d+3)^{3/2} + 2δ√d/η`, twice the oracle bias bound.
fn bias_term(c: &ProblemConstants, eta: f64) -> f64 {
    let d = c.df();
    c.l * eta * (d + 3.0).powf(1.5) + 2.0 * c.delta * d.sqrt() / eta
}

fn rho_squared(c: &ProblemConstants, zeta: f64, alpha: f64) -> f64 {
    2.0 * (c.df() + 4.0) * c.l * c.l * zeta * alpha * alpha - c.sigma * alpha + 1.0
}

/// One-step contraction `ψ(e)` of the conditional expected squared tracking
/// error, with `ζ = ζ(κ, e)`.
pub fn psi(e: f64, c: &ProblemConstants, alpha: f64, eta: f64) -> f64 {
    let z = zeta(c.kappa, e);
    rho_squared(c, z, alpha) * e * e
        + alpha * bias_term(c, eta) * e
        + oracle_noise(c, eta) * z * alpha * alpha
}

/// Contraction factor `ρ = √(2(d+4)L²ζ(κ,R)α² − σα + 1)`.
pub fn rho(c: &ProblemConstants, alpha: f64) -> Result<f64> {
    c.validate()?;
    if !(alpha > 0.0 && alpha < c.alpha_max()) {
        return Err(GeoError::Domain(format!(
            "rho would be >= 1: alpha = {alpha} outside (0, {})",
            c.alpha_max()
        )));
    }
    Ok(rho_squared(c, c.zeta_r(), alpha).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub alpha: f64,
    pub eta: f64,
    pub zeta_r: f64,
    pub rho: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// `√(oracle_noise(η)·ζ(κ,R))`; equals `θ₂`.
    pub theta_bar: f64,
    /// `D = α·max(θ₁, θ₂)`.
    pub d_term: f64,
    pub v: f64,
    /// Asymptotic tracking radius `Δ = (D + 2V)/(1 − ρ)`.
    pub delta: f64,
}

impl BoundReport {
    pub fn theta_order_holds(&self) -> bool {
        self.theta2 > self.theta1
    }
}

/// Tracking-error radius for a constant step `α` and precision `η`.
pub fn delta_bound(c: &ProblemConstants, alpha: f64, eta: f64) -> Result<BoundReport> {
    ensure_positive("eta", eta)?;
    let rho = rho(c, alpha)?;
    let zeta_r = c.zeta_r();
    let theta1 = bias_term(c, eta) / (2.0 * rho);
    let theta2 = (oracle_noise(c, eta) * zeta_r).sqrt();
    let d_term = alpha * theta1.max(theta2);
    Ok(BoundReport {
        alpha,
        eta,
        zeta_r,
        rho,
        theta1,
        theta2,
        theta_bar: theta2,
        d_term,
        v: c.v,
        delta: (d_term + 2.0 * c.v) / (1.0 - rho),
    })
}

/// `η̄ = (4δ²d / (L²(d+6)³))^{1/4}`, the minimizer of the oracle noise term.
pub fn optimal_eta(c: &ProblemConstants) -> Result<f64> {
    c.validate()?;
    if c.delta == 0.0 {
        return Err(GeoError::Degenerate(
            "delta = 0 makes the optimal eta zero; pick any small eta > 0".into(),
        ));
    }
    let d = c.df();
    Ok((4.0 * c.delta * c.delta * d / (c.l * c.l * (d + 6.0).powi(3))).powf(0.25))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalAlpha {
    pub alpha: f64,
    pub eta: f64,
    pub report: BoundReport,
    /// True when no quadratic root was admissible and the grid minimizer was
    /// returned instead.
    pub from_grid: bool,
    pub grid_alpha: f64,
    pub grid_delta: f64,
    /// Spacing of the cross-check grid.
    pub grid_step: f64,
}

pub const ALPHA_GRID_POINTS: usize = 10_000;

/// Real roots of `a x² + b x + c = 0`, computed without cancellation.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-300 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Step size minimizing `Δ` at `η = η̄`: the admissible root of the
/// stationarity quadratic, cross-checked against a grid minimization.
pub fn optimal_alpha(c: &ProblemConstants) -> Result<OptimalAlpha> {
    let eta = optimal_eta(c)?;
    let zeta = c.zeta_r();
    let theta = (oracle_noise(c, eta) * zeta).sqrt();
    let (v, sigma) = (c.v, c.sigma);
    let lz = c.l * c.l * zeta * (c.df() + 4.0);
    let a = (8.0 * v * lz + sigma * theta).powi(2) - 8.0 * theta * theta * lz;
    let b = -4.0 * v * (theta * sigma * sigma + 8.0 * v * lz * sigma + 8.0 * theta * lz);
    let cc = (2.0 * sigma * v + 2.0 * theta).powi(2) - 4.0 * theta * theta;

    let alpha_max = c.alpha_max();
    let mut best: Option<BoundReport> = None;
    for root in quadratic_roots(a, b, cc) {
        if root > 0.0 && root < alpha_max {
            let report = delta_bound(c, root, eta)?;
            if best.is_none_or(|b| report.delta < b.delta) {
                best = Some(report);
            }
        }
    }

    let grid_step = alpha_max / (ALPHA_GRID_POINTS + 1) as f64;
    let (mut grid_alpha, mut grid_delta) = (f64::NAN, f64::INFINITY);
    for i in 1..=ALPHA_GRID_POINTS {
        let alpha = grid_step * i as f64;
        let delta = delta_bound(c, alpha, eta)?.delta;
        if delta < grid_delta {
            grid_alpha = alpha;
            grid_delta = delta;
        }
    }

    let (report, from_grid) = match best {
        Some(r) => (r, false),
        None => (delta_bound(c, grid_alpha, eta)?, true),
    };
    Ok(OptimalAlpha {
        alpha: report.alpha,
        eta,
        report,
        from_grid,
        grid_alpha,
        grid_delta,
        grid_step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexityBound {
    /// The starting error is already within `Δ`.
    Immediate,
    Iterations(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    pub bound: ComplexityBound,
    /// `log[(D + (1−ρ)ε) / ((1−ρ)e₀ − 2V)] / log ρ`, kept for comparison.
    pub printed_formula: f64,
}

/// Iterations needed for the envelope `E[e_{k+1}] ≤ ρE[e_k] + D + 2V` started
/// at `e0` to enter `Δ + ε`.
pub fn complexity_k(
    c: &ProblemConstants,
    report: &BoundReport,
    e0: f64,
    epsilon: f64,
) -> Result<Complexity> {
    ensure_positive("epsilon", epsilon)?;
    if !(e0 >= 0.0) {
        return Err(contract(format!("e0 must be >= 0, got {e0}")));
    }
    let rho = report.rho;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(GeoError::Domain(format!("rho = {rho} is not in (0, 1)")));
    }
    let gap = (1.0 - rho) * e0 - report.d_term - 2.0 * c.v;
    let printed_formula =
        ((report.d_term + (1.0 - rho) * epsilon) / ((1.0 - rho) * e0 - 2.0 * c.v)).ln() / rho.ln();
    let bound = if gap <= 0.0 {
        ComplexityBound::Immediate
    } else {
        let k = (((1.0 - rho) * epsilon / gap).ln() / rho.ln()).ceil();
        ComplexityBound::Iterations(k.max(1.0) as u64)
    };
    Ok(Complexity {
        bound,
        printed_formula,
    })
}

/// `√2/(√2 − 1)`, the √T constant of the doubling-schedule regret bounds.
pub const SQRT_T_CONSTANT: f64 = std::f64::consts::SQRT_2 / (std::f64::consts::SQRT_2 - 1.0);

/// Schedule-side and measured inputs of the regret bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretInputs {
    pub rho0: f64,
    pub rho1: f64,
    pub rho_t: f64,
    pub rho_t1: f64,
    pub cbar: f64,
    pub e0: f64,
    pub e_t: f64,
    pub ebar0: f64,
    pub ebar_t: f64,
    pub v_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretBounds {
    pub track: f64,
    pub est: f64,
}

pub fn regret_upper_bounds(
    c: &ProblemConstants,
    inp: &RegretInputs,
    t: u64,
) -> Result<RegretBounds> {
    c.validate()?;
    if t == 0 {
        return Err(contract("T must be >= 1"));
    }
    for rho in [inp.rho0, inp.rho1, inp.rho_t, inp.rho_t1] {
        if !(0.0..1.0).contains(&rho) {
            return Err(GeoError::Domain(format!("rho = {rho} is not < 1")));
        }
    }
    ensure_positive("cbar", inp.cbar)?;
    let sqrt_term = inp.cbar * SQRT_T_CONSTANT * (t as f64).sqrt();
    let m_track = inp.rho0.max(inp.rho_t);
    let m_est = inp.rho1.max(inp.rho_t1);
    Ok(RegretBounds {
        track: c.g / (1.0 - m_track) * (inp.e0 - inp.rho_t * inp.e_t + sqrt_term + inp.v_t),
        est: c.g / (1.0 - m_est)
            * (inp.ebar0 - inp.rho_t1 * inp.ebar_t + sqrt_term + m_est * inp.v_t),
    })
}
