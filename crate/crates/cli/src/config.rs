//! Configuration file plus command-line overrides.

use std::path::{Path, PathBuf};

use geotrack_core::bounds::{radius_for_zeta, ProblemConstants};
use geotrack_core::karcher::{Drift, KarcherInstance};
use geotrack_core::optimizer::{StepSchedule, DEFAULT_CBAR};
use geotrack_core::par::Execution;
use serde::Deserialize;

use crate::cli::{DriftArg, ManifoldArg, Overrides, ScheduleArg};
use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub manifold: Option<ManifoldArg>,
    pub m: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub drift: Option<DriftArg>,
    pub omega: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    #[serde(rename = "V")]
    pub v: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: Option<ScheduleArg>,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub cbar: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleChoice {
    Constant { alpha: f64, eta: f64 },
    Optimal,
    Doubling { cbar: f64 },
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub manifold: ManifoldArg,
    pub m: usize,
    pub n: usize,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub drift: DriftArg,
    pub omega: Option<f64>,
    pub constants: ProblemConstants,
    pub schedule: ScheduleChoice,
    pub out: PathBuf,
    pub exec: Execution,
}

pub const DEFAULT_SEED: u64 = 20240601;

impl ExperimentConfig {
    pub fn resolve(file: FileConfig, o: &Overrides) -> CliResult<Self> {
        let (ex, cs, sc) = (file.experiment, file.constants, file.schedule);
        let manifold = o.manifold.or(ex.manifold).unwrap_or(ManifoldArg::Spd);
        let m = o.m.or(ex.m).unwrap_or(3);
        if m == 0 {
            return Err(CliError::Config("m must be >= 1".into()));
        }
        let d = match manifold {
            ManifoldArg::Spd => m * (m + 1) / 2,
            ManifoldArg::Euclidean => m,
        };

        let base = ProblemConstants::karcher_defaults(d);
        let kappa = o.kappa.or(cs.kappa).unwrap_or(base.kappa);
        let r = match o.r.or(cs.r) {
            Some(r) => r,
            // keep ζ(κ, R) at its default when only κ moves
            None if kappa != base.kappa && kappa < 0.0 => radius_for_zeta(kappa, 1.5)?,
            None => base.r,
        };
        let l = o.l.or(cs.l).unwrap_or(base.l);
        let constants = ProblemConstants {
            l,
            sigma: o.sigma.or(cs.sigma).unwrap_or(base.sigma),
            delta: o.delta.or(cs.delta).unwrap_or(base.delta),
            v: o.v.or(cs.v).unwrap_or(base.v),
            kappa,
            r,
            d,
            g: o.g.or(cs.g).unwrap_or(l * r),
        };
        constants.validate()?;

        let cbar = o.cbar.or(sc.cbar).unwrap_or(DEFAULT_CBAR);
        let schedule = match o.schedule.or(sc.kind).unwrap_or(ScheduleArg::Optimal) {
            ScheduleArg::Optimal => ScheduleChoice::Optimal,
            ScheduleArg::Doubling => ScheduleChoice::Doubling { cbar },
            ScheduleArg::Constant => {
                let (Some(alpha), Some(eta)) = (o.alpha.or(sc.alpha), o.eta.or(sc.eta)) else {
                    return Err(CliError::Config(
                        "constant schedule needs alpha and eta".into(),
                    ));
                };
                ScheduleChoice::Constant { alpha, eta }
            }
        };
        if !(cbar > 0.0 && cbar.is_finite()) {
            return Err(CliError::Config(format!("cbar must be > 0, got {cbar}")));
        }

        let omega = o.omega.or(ex.omega);
        if let Some(w) = omega {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(CliError::Config(format!("omega must be >= 0, got {w}")));
            }
        }
        let cfg = Self {
            manifold,
            m,
            n: o.n.or(ex.n).unwrap_or(10),
            horizon: o.t.or(ex.t).unwrap_or(2000),
            runs: o.runs.or(ex.runs).unwrap_or(20),
            seed: o.seed.or(ex.seed).unwrap_or(DEFAULT_SEED),
            drift: o.drift.or(ex.drift).unwrap_or(DriftArg::ConstantSpeed),
            omega,
            constants,
            schedule,
            out: o
                .out
                .clone()
                .or(file.output.dir)
                .unwrap_or_else(|| PathBuf::from(".")),
            exec: if o.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        };
        if cfg.runs == 0 {
            return Err(CliError::Config("runs must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn step_schedule(&self) -> CliResult<StepSchedule> {
        let s = match self.schedule {
            ScheduleChoice::Constant { alpha, eta } => StepSchedule::constant(alpha, eta)?,
            ScheduleChoice::Optimal => StepSchedule::optimal(&self.constants)?,
            ScheduleChoice::Doubling { cbar } => StepSchedule::doubling(&self.constants, cbar)?,
        };
        s.validate_for(&self.constants)?;
        Ok(s)
    }

    pub fn instance(&self) -> CliResult<KarcherInstance> {
        if self.manifold != ManifoldArg::Spd {
            return Err(CliError::Config(
                "the tracking study runs on manifold = spd".into(),
            ));
        }
        let omega = self.omega.unwrap_or(0.0);
        let drift = match self.drift {
            DriftArg::ConstantSpeed => Drift::ConstantSpeed(omega),
            DriftArg::DecayingSpeed => Drift::DecayingSpeed(omega),
        };
        let inst = KarcherInstance {
            seed: self.seed,
            ..KarcherInstance::new(self.m, self.n, self.horizon, drift)
        };
        inst.validate()?;
        Ok(inst)
    }
}
