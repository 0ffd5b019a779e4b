use std::path::Path;

use geotrack_core::bounds::{
    complexity_k, delta_bound, optimal_alpha, regret_upper_bounds, ComplexityBound, RegretInputs,
};
use geotrack_core::karcher::{
    averaged_study, measured_regret, regret_bounds_at, StudyConfig, StudyResult,
};
use geotrack_core::optimizer::StepSchedule;
use geotrack_core::suites::{
    geometry_suite_euclidean, geometry_suite_spd, negative_control, oracle_suite, sampling_moments,
    CheckLine, NEGATIVE_CONTROL_D,
};
use geotrack_core::{Euclidean, ManifoldPoint, Spd};
use nalgebra::{DMatrix, DVector};

use crate::cli::{BoundsArgs, ManifoldArg, PlotArgs, VerifyArgs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{read_series_file, write_diagnostics_file, write_trace_file};
use crate::plot::render_svg;

pub const ZEROTH_CSV: &str = "zeroth_order.csv";
pub const FIRST_CSV: &str = "first_order.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const PLOT_SVG: &str = "tracking_error.svg";
const TAIL_FRACTION: f64 = 0.1;

fn print_constants(cfg: &ExperimentConfig) {
    let c = &cfg.constants;
    println!(
        "constants: L={} sigma={} delta={} V={} kappa={} R={} G={} d={}",
        c.l, c.sigma, c.delta, c.v, c.kappa, c.r, c.g, c.d
    );
}

pub fn params(cfg: &ExperimentConfig) -> CliResult<()> {
    print_constants(cfg);
    let c = &cfg.constants;
    println!("zeta(kappa,R) = {:.6}", c.zeta_r());
    println!("admissible alpha: (0, {:.6e})", c.alpha_max());
    if c.delta == 0.0 {
        eprintln!(
            "warning: delta = 0, eta_bar is degenerate (the bound keeps improving as eta -> 0)"
        );
        return Ok(());
    }
    let opt = optimal_alpha(c)?;
    println!("eta_bar   = {:.6}", opt.eta);
    println!("alpha_bar = {:.6}", opt.alpha);
    println!("Delta(alpha_bar, eta_bar) = {:.6}", opt.report.delta);
    println!("rho = {:.9}", opt.report.rho);
    println!(
        "grid check: alpha = {:.6}, Delta = {:.6} over {} points{}",
        opt.grid_alpha,
        opt.grid_delta,
        geotrack_core::bounds::ALPHA_GRID_POINTS,
        if opt.from_grid {
            " (grid value used)"
        } else {
            ""
        }
    );
    Ok(())
}

pub fn bounds(cfg: &ExperimentConfig, args: &BoundsArgs) -> CliResult<()> {
    print_constants(cfg);
    let c = &cfg.constants;
    let schedule = cfg.step_schedule()?;
    let e0 = args.e0.unwrap_or(c.r);
    if let StepSchedule::Doubling(d) = &schedule {
        println!("doubling schedule, cbar = {}", d.cbar);
        println!(
            "{:>3} {:>6} {:>14} {:>14} {:>14} {:>14} {:>12}",
            "m", "T_m", "alpha", "eta", "D_m", "cbar/sqrt(T)", "rho"
        );
        for p in d.periods().iter().take(13) {
            println!(
                "{:>3} {:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>12.9}",
                p.m,
                p.length,
                p.alpha,
                p.eta,
                p.d_k,
                d.cbar / (p.length as f64).sqrt(),
                p.rho
            );
        }
        if let Some(t) = args.horizon {
            let inputs = RegretInputs {
                rho0: schedule.rho_at(c, 0),
                rho1: schedule.rho_at(c, 1),
                rho_t: schedule.rho_at(c, t),
                rho_t1: schedule.rho_at(c, t + 1),
                cbar: d.cbar,
                e0,
                e_t: 0.0,
                ebar0: e0,
                ebar_t: 0.0,
                v_t: c.v * t as f64,
            };
            let b = regret_upper_bounds(c, &inputs, t)?;
            println!(
                "regret bounds at T={t} (e0={e0}, V_T=V*T): track {:.6e}, est {:.6e}",
                b.track, b.est
            );
        }
        return Ok(());
    }
    let p = schedule.params_at(0);
    let r = delta_bound(c, p.alpha, p.eta)?;
    println!("alpha = {}, eta = {}", p.alpha, p.eta);
    println!("zeta(kappa,R) = {:.6}", r.zeta_r);
    println!("rho = {:.9}", r.rho);
    println!(
        "theta1 = {:.6e}, theta2 = {:.6e}, theta_bar = {:.6e}",
        r.theta1, r.theta2, r.theta_bar
    );
    println!("D = {:.6e}", r.d_term);
    println!("Delta = {:.6}", r.delta);
    let k = complexity_k(c, &r, e0, args.epsilon)?;
    match k.bound {
        ComplexityBound::Immediate => println!("K(e0={e0}, eps={}) = immediate", args.epsilon),
        ComplexityBound::Iterations(n) => println!(
            "K(e0={e0}, eps={}) = {n} (printed-formula value {:.4})",
            args.epsilon, k.printed_formula
        ),
    }
    Ok(())
}

fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let probe = dir.join(".geotrack-write-check");
    std::fs::write(&probe, b"").map_err(|e| CliError::io(dir.display(), e))?;
    std::fs::remove_file(&probe).map_err(|e| CliError::io(probe.display(), e))
}

pub fn study_config(cfg: &ExperimentConfig) -> CliResult<StudyConfig> {
    let c = cfg.constants;
    Ok(StudyConfig {
        instance: cfg.instance()?,
        constants: c,
        schedule: cfg.step_schedule()?,
        runs: cfg.runs,
        delta_target: (cfg.omega.is_none() && c.delta > 0.0).then_some(c.delta),
        exec: cfg.exec,
    })
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<StudyResult> {
    let study = study_config(cfg)?;
    prepare_out_dir(&cfg.out)?;
    print_constants(cfg);
    println!(
        "study: m={} N={} T={} runs={} seed={} drift={:?} schedule={:?}",
        cfg.m, cfg.n, cfg.horizon, cfg.runs, cfg.seed, cfg.drift, cfg.schedule
    );
    let result = averaged_study(&study)?;
    write_trace_file(&result.zeroth, &cfg.out.join(ZEROTH_CSV))?;
    write_trace_file(&result.first, &cfg.out.join(FIRST_CSV))?;
    write_diagnostics_file(&result.runs, &cfg.out.join(RUNS_CSV))?;

    let uncertified = result.runs.iter().filter(|r| !r.certified).count();
    if uncertified > 0 {
        eprintln!(
            "warning: {uncertified} of {} runs exceed the declared delta, V or G (see {RUNS_CSV})",
            result.runs.len()
        );
    }
    let c = &study.constants;
    let (zo, fo) = (
        result.zeroth.tail_mean(TAIL_FRACTION),
        result.first.tail_mean(TAIL_FRACTION),
    );
    match &study.schedule {
        StepSchedule::Doubling(_) => {
            let t = cfg.horizon;
            let bound = regret_bounds_at(c, &study.schedule, &result.zeroth, t)?;
            println!(
                "summary: Reg_T = {:.6} <= bound {:.6e}; tail mean e: zeroth {zo:.6e}, first {fo:.6e}",
                measured_regret(&result.zeroth, t),
                bound.track
            );
        }
        s => {
            let p = s.params_at(0);
            let delta = delta_bound(c, p.alpha, p.eta)?.delta;
            println!(
                "summary: tail mean e (last 10%): zeroth {zo:.6e}, first {fo:.6e}; Delta = {delta:.6} ({})",
                if zo <= delta { "within bound" } else { "ABOVE bound" }
            );
        }
    }
    println!("wrote {}", cfg.out.display());
    Ok(result)
}

fn report(lines: &[CheckLine]) -> usize {
    for l in lines {
        println!("{l}");
    }
    lines.iter().filter(|l| !l.passed).count()
}

pub fn verify(cfg: &ExperimentConfig, args: &VerifyArgs) -> CliResult<()> {
    let seed = cfg.seed;
    let mut failed = 0;

    println!(
        "-- geometry ({:?}, {} triangles)",
        cfg.manifold, args.trials
    );
    let geometry = match cfg.manifold {
        ManifoldArg::Spd => {
            geometry_suite_spd(cfg.m, cfg.constants.kappa, args.trials, seed, cfg.exec)?
        }
        ManifoldArg::Euclidean => geometry_suite_euclidean(cfg.m, args.trials, seed, cfg.exec)?,
    };
    failed += report(&geometry.lines());

    println!("-- tangent sampling moments");
    let moments = match cfg.manifold {
        ManifoldArg::Spd => {
            let spd = Spd::new(cfg.m)?;
            sampling_moments(
                &spd,
                &spd.point(&DMatrix::identity(cfg.m, cfg.m))?,
                args.samples,
                seed,
            )?
        }
        ManifoldArg::Euclidean => {
            let e = Euclidean::new(cfg.m)?;
            sampling_moments(
                &e,
                &ManifoldPoint::new(DVector::zeros(cfg.m)),
                args.samples,
                seed,
            )?
        }
    };
    failed += report(&[CheckLine {
        name: format!("Gaussian moments d={}", moments.d),
        passed: moments.passed(),
        detail: format!(
            "E|u| {:.4} <= {:.4}, E|u|^4 {:.2} <= {:.2}",
            moments.mean_norm,
            (moments.d as f64).sqrt(),
            moments.mean_norm4,
            (moments.d as f64 + 4.0).powi(2)
        ),
    }]);

    println!("-- oracle bounds ({} samples per case)", args.samples);
    let cases = oracle_suite(args.samples, seed.wrapping_add(1), cfg.exec)?;
    failed += report(&cases.iter().map(|c| c.line()).collect::<Vec<_>>());
    if args.negative_control {
        let r = negative_control(args.samples, seed.wrapping_add(2), cfg.exec)?;
        failed += report(&[CheckLine {
            name: format!("oracle negative control d={NEGATIVE_CONTROL_D} with L/2"),
            passed: r.passed(),
            detail: format!(
                "E|g|^2 {:.4e} <= {:.4e} (+3se {:.1e}); bias {:.3e} <= {:.3e}",
                r.second_moment_estimate,
                r.second_moment_bound,
                3.0 * r.second_moment_se,
                r.bias_estimate,
                r.bias_bound
            ),
        }]);
    }

    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} checks failed")));
    }
    println!("all suites PASS");
    Ok(())
}

pub fn plot(cfg: &ExperimentConfig, args: &PlotArgs) -> CliResult<()> {
    let series = args
        .csv
        .iter()
        .map(|p| read_series_file(p))
        .collect::<CliResult<Vec<_>>>()?;
    let svg = render_svg(&series)?;
    let path = args.svg.clone().unwrap_or_else(|| cfg.out.join(PLOT_SVG));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
    }
    std::fs::write(&path, svg).map_err(|e| CliError::io(path.display(), e))?;
    println!("wrote {}", path.display());
    Ok(())
}
