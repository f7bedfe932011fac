//! Scenario documents. One TOML file describes one scenario; every table is
//! optional at parse time and demanded by the subcommand that needs it.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use subq_core::ft::LangevinParams;
use subq_core::schrodinger::{EvolutionSettings, InitialState, Potential};
use subq_core::thermo::RampSettings;
use subq_core::variational::MinimizeSettings;
use subq_core::vft::{MeanMode, PerturbationShape};
use subq_core::{Boundary, Constants, Grid};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub constants: ConstantsSpec,
    pub grid: Option<GridSpec>,
    pub potential: Option<Potential>,
    pub initial: Option<InitialState>,
    pub evolution: Option<EvolutionSpec>,
    pub ensemble: Option<EnsembleSpec>,
    pub langevin: Option<LangevinSpec>,
    pub ramp: Option<RampSpec>,
    pub perturbation: Option<PerturbationSpec>,
    pub variational: Option<VariationalSpec>,
    #[serde(default)]
    pub checks: Checks,
    pub validate: Option<ValidateSpec>,
    pub output: Option<OutputSpec>,
    /// Directory of the file the config was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub hbar: f64,
    pub mass: f64,
    pub omega: f64,
    pub kb: f64,
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0, omega: 1.0, kb: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
    pub boundary: Boundary,
    pub origin: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub snapshot_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub paths: usize,
    /// Mandatory; kept optional here so its absence is reported by name.
    pub seed: Option<u64>,
    /// Histogram range and bin count for equivariance checks.
    pub range: Option<[f64; 2]>,
    pub bins: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSpec {
    pub stiffness: f64,
    pub drag: f64,
    pub kt: f64,
    pub v_drag: f64,
    pub dt: f64,
    pub duration: f64,
    /// Steady-state windows; omitted means no steady-state study.
    #[serde(default)]
    pub windows: Vec<f64>,
    /// Relaxation before the first steady-state window.
    pub relax: Option<f64>,
    /// Paths for the steady-state study (defaults to the ensemble size).
    pub steady_paths: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RampSpec {
    pub omega_start: f64,
    pub omega_end: f64,
    pub dt: f64,
    pub samples_per_time: f64,
    /// First entry is the slow ramp, last the fast negative control.
    pub ramp_times: Vec<f64>,
}

impl RampSpec {
    pub fn settings(&self, ramp_time: f64) -> RampSettings {
        RampSettings {
            omega_start: self.omega_start,
            omega_end: self.omega_end,
            ramp_time,
            dt: self.dt,
            samples_per_time: self.samples_per_time,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub shape: PerturbationShape,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub mean_mode: MeanMode,
    /// Second shape used for the momentum-route comparison.
    pub routes_shape: Option<PerturbationShape>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Analytic ground energy and accepted deviation, when one is known.
    pub expected_energy: Option<Expected>,
}

fn default_tol() -> f64 {
    MinimizeSettings::default().tol
}
fn default_residual_tol() -> f64 {
    MinimizeSettings::default().residual_tol
}
fn default_max_iterations() -> usize {
    MinimizeSettings::default().max_iterations
}

impl VariationalSpec {
    pub fn settings(&self) -> MinimizeSettings {
        MinimizeSettings { tol: self.tol, residual_tol: self.residual_tol, max_iterations: self.max_iterations }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub value: f64,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CrossMomentumTier {
    /// Zero at every instant (stationary states).
    Instantaneous,
    /// Zero for a uniform phase gradient.
    UniformPhase,
    /// Zero when averaged over the evolution window of one period.
    PeriodAverage,
}

/// Known reference values that upgrade a scenario's checks.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    pub u_at_origin: Option<f64>,
    pub u_bar_over_hbar_omega: Option<f64>,
    pub cross_momentum: Option<CrossMomentumTier>,
    #[serde(default)]
    pub on_shell_action: bool,
    /// Run the residual convergence study at one refinement level.
    #[serde(default)]
    pub refinement: bool,
    /// Hydrodynamic residuals and action routes; off for runs whose density
    /// passes through nodes.
    #[serde(default = "yes")]
    pub residuals: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Self { u_at_origin: None, u_bar_over_hbar_omega: None, cross_momentum: None, on_shell_action: false, refinement: false, residuals: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    /// Scenario files, relative to this config.
    pub scenarios: Vec<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

fn missing(key: &str) -> CliError {
    CliError::Schema(format!("missing `{key}`"))
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_str(&text).map_err(|e| match e {
            CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Schema(format!("`schema` is {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        if let Some(e) = &self.ensemble {
            if e.seed.is_none() {
                return Err(CliError::Schema("`ensemble.seed` is required for stochastic runs".into()));
            }
        }
        if self.langevin.is_some() && self.ensemble.is_none() {
            return Err(CliError::Schema("`[langevin]` needs an `[ensemble]` table with a seed".into()));
        }
        if let Some(g) = &self.grid {
            if g.n < 16 || !(g.length > 0.0) {
                return Err(CliError::Schema("`grid.n` must be ≥ 16 and `grid.length` positive".into()));
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<Constants, CliError> {
        let k = self.constants;
        Constants::new(k.hbar, k.mass, k.omega, k.kb).map_err(|e| CliError::Schema(format!("`constants`: {e}")))
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let s = self.grid.ok_or_else(|| missing("grid"))?;
        let g = Grid::new(s.n, s.length, s.boundary).map_err(|e| CliError::Schema(format!("`grid`: {e}")))?;
        Ok(match s.origin {
            Some(o) => g.with_origin(o),
            None => g,
        })
    }

    pub fn potential(&self) -> Result<&Potential, CliError> {
        self.potential.as_ref().ok_or_else(|| missing("potential"))
    }

    pub fn initial(&self) -> Result<&InitialState, CliError> {
        self.initial.as_ref().ok_or_else(|| missing("initial"))
    }

    pub fn evolution(&self) -> Result<EvolutionSettings, CliError> {
        let e = self.evolution.ok_or_else(|| missing("evolution"))?;
        Ok(EvolutionSettings::new(e.dt, e.steps).every(e.snapshot_every))
    }

    /// Ensemble size and seed.
    pub fn ensemble(&self) -> Result<(EnsembleSpec, u64), CliError> {
        let e = self.ensemble.ok_or_else(|| missing("ensemble"))?;
        let seed = e.seed.ok_or_else(|| missing("ensemble.seed"))?;
        Ok((e, seed))
    }

    pub fn langevin(&self) -> Result<(LangevinParams, &LangevinSpec), CliError> {
        let l = self.langevin.as_ref().ok_or_else(|| missing("langevin"))?;
        let (e, seed) = self.ensemble()?;
        let p = LangevinParams {
            stiffness: l.stiffness,
            drag: l.drag,
            kt: l.kt,
            v_drag: l.v_drag,
            dt: l.dt,
            duration: l.duration,
            n_paths: e.paths,
            seed,
        };
        Ok((p, l))
    }

    pub fn ramp(&self) -> Result<&RampSpec, CliError> {
        self.ramp.as_ref().ok_or_else(|| missing("ramp"))
    }

    pub fn perturbation(&self) -> Result<&PerturbationSpec, CliError> {
        self.perturbation.as_ref().ok_or_else(|| missing("perturbation"))
    }

    pub fn variational(&self) -> Result<VariationalSpec, CliError> {
        self.variational.ok_or_else(|| missing("variational"))
    }

    /// Scenario files listed under `[validate]`, resolved against the config's directory.
    pub fn corpus(&self) -> Result<Vec<PathBuf>, CliError> {
        let v = self.validate.as_ref().ok_or_else(|| missing("validate"))?;
        Ok(v.scenarios.iter().map(|s| self.base_dir.join(s)).collect())
    }
}
