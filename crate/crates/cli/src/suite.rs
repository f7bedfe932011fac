//! Invariant checks for one scenario. Thresholds are fixed here; scenarios only
//! supply reference values that are known in closed form.

use crate::config::{CrossMomentumTier, ScenarioConfig};
use crate::error::CliError;
use serde::Serialize;
use subq_core::fields::{self, decompose};
use subq_core::ft::{self, SteadyWindow, TftRatio, TftSummary};
use subq_core::madelung::{self, EquivarianceSummary};
use subq_core::schrodinger::{self, Evolution, EvolutionSettings, Potential};
use subq_core::thermo::{self, RampRun};
use subq_core::variational::{self, GroundState};
use subq_core::vft::{self, Perturbation, RatioFields, VftReport};
use subq_core::{ComplexField, Constants, Grid, MadelungBundle};

pub const QP_FORMS: f64 = 1e-6;
pub const MEAN_GRAD_U: f64 = 1e-7;
pub const MOMENTUM_IDENTITY: f64 = 1e-8;
pub const U_REFERENCE: f64 = 1e-6;
pub const U_BAR_REFERENCE: f64 = 1e-4;
pub const CROSS_STATIONARY: f64 = 1e-10;
pub const CROSS_UNIFORM: f64 = 1e-9;
/// Period average relative to `max(peak, 1)`.
pub const CROSS_AVERAGE: f64 = 1e-6;
pub const NORM_DRIFT: f64 = 1e-10;
pub const ENERGY_DRIFT: f64 = 1e-10;
pub const RESIDUAL: f64 = 1e-3;
pub const REFINEMENT_BAND: (f64, f64) = (3.0, 5.0);
pub const CONSERVATIVE_WORK: f64 = 1e-6;
pub const ACTION_ROUTES: f64 = 1e-6;
pub const ON_SHELL_ACTION: f64 = 1e-5;
pub const BOLTZMANN_CHAIN: f64 = 1e-6;
pub const CHAIN_ROUTES: f64 = 1e-8;
pub const TV_DISTANCE: f64 = 0.02;
pub const TFT_SLOPE: f64 = 0.05;
pub const MOMENT_SIGMA: f64 = 3.0;
pub const ADIABATIC_DRIFT: f64 = 1e-3;
pub const FAST_RAMP_FACTOR: f64 = 10.0;
pub const NONCONSERVATIVE_ROUTES: f64 = 0.05;
pub const VFT_ROUTES: f64 = 1e-10;
pub const VFT_RATIO: f64 = 1e-6;
pub const VFT_DECAY_BAND: (f64, f64) = (3.0, 5.0);
pub const GROUND_ORACLE: f64 = 1e-3;
pub const STATIONARY_HJ: f64 = 1e-3;
/// Density floor (relative to max P) for the stationary HJ check.
pub const STATIONARY_HJ_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Below,
    Above,
    Within,
}

#[derive(Clone, Debug, Serialize)]
pub struct Invariant {
    pub scenario: String,
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    /// Single bound, or the lower bound of a band.
    pub threshold: f64,
    pub upper: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Default)]
pub struct Checklist {
    scenario: String,
    pub items: Vec<Invariant>,
}

impl Checklist {
    pub fn new(scenario: &str) -> Self {
        Self { scenario: scenario.to_string(), items: Vec::new() }
    }

    fn push(&mut self, name: &str, value: f64, comparison: Comparison, threshold: f64, upper: Option<f64>, passed: bool) {
        self.items.push(Invariant {
            scenario: self.scenario.clone(),
            name: name.to_string(),
            value,
            comparison,
            threshold,
            upper,
            passed: passed && value.is_finite(),
        });
    }

    pub fn below(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, Comparison::Below, threshold, None, value < threshold);
    }

    pub fn above(&mut self, name: &str, value: f64, threshold: f64) {
        self.push(name, value, Comparison::Above, threshold, None, value > threshold);
    }

    pub fn within(&mut self, name: &str, value: f64, band: (f64, f64)) {
        self.push(name, value, Comparison::Within, band.0, Some(band.1), value > band.0 && value < band.1);
    }

    pub fn failures(&self) -> Vec<String> {
        self.items.iter().filter(|i| !i.passed).map(|i| format!("{}/{}", i.scenario, i.name)).collect()
    }
}

/// Grid, constants, potential and the initial state of a scenario.
pub struct Prepared {
    pub c: Constants,
    pub g: Grid,
    pub v: Potential,
    pub psi: ComplexField,
    pub bundle: MadelungBundle,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared, CliError> {
    prepare_on(cfg, cfg.grid()?)
}

fn prepare_on(cfg: &ScenarioConfig, g: Grid) -> Result<Prepared, CliError> {
    let c = cfg.constants()?;
    let v = cfg.potential()?.clone();
    let psi = cfg.initial()?.prepare(&v, &c, &g)?;
    let bundle = decompose(&psi, &c, &g)?;
    Ok(Prepared { c, g, v, psi, bundle })
}

pub struct Evolved {
    pub ev: Evolution,
    pub frames: Vec<MadelungBundle>,
    pub frame_dt: f64,
}

pub fn evolve(p: &Prepared, s: &EvolutionSettings) -> Result<Evolved, CliError> {
    let ev = schrodinger::evolve(&p.psi, &p.v, s, &p.c, &p.g)?;
    let frames = ev.frames.iter().map(|f| decompose(f, &p.c, &p.g)).collect::<Result<Vec<_>, _>>()?;
    Ok(Evolved { ev, frames, frame_dt: s.dt * s.snapshot_every as f64 })
}

/// Identities of a single state.
pub fn state_checks(cfg: &ScenarioConfig, p: &Prepared, cl: &mut Checklist) -> Result<(), CliError> {
    let (b, c, g) = (&p.bundle, &p.c, &p.g);
    let q = madelung::quantum_potential(b, c, g)?;
    cl.below("quantum_potential_forms", q.max_relative_difference, QP_FORMS);
    cl.below("mean_grad_u", madelung::mean_grad_u(b, c, g)?.abs(), MEAN_GRAD_U);
    let mi = madelung::total_momentum_identity(&p.psi, b, c, g)?;
    cl.below("momentum_identity", mi.max_relative_difference, MOMENTUM_IDENTITY);
    if let Some(u0) = cfg.checks.u_at_origin {
        let j = (0..g.n()).min_by(|&a, &b| g.x(a).abs().total_cmp(&g.x(b).abs())).unwrap_or(0);
        cl.below("u_at_origin", (q.r_form[j] - u0).abs(), U_REFERENCE);
    }
    if let Some(want) = cfg.checks.u_bar_over_hbar_omega {
        let (num, den) = (0..g.n())
            .filter(|&j| b.mask().get(j))
            .fold((0.0, 0.0), |(a, d), j| (a + b.p()[j] * q.r_form[j], d + b.p()[j]));
        cl.below("u_bar_over_hbar_omega", (num / den / (c.hbar() * c.omega()) - want).abs(), U_BAR_REFERENCE);
    }
    match cfg.checks.cross_momentum {
        Some(CrossMomentumTier::Instantaneous) | Some(CrossMomentumTier::UniformPhase) => {
            let h = madelung::osmotic_fields(b, c, g)?;
            let x = madelung::cross_momentum_term(b, &h, c, g)?;
            let bound =
                if cfg.checks.cross_momentum == Some(CrossMomentumTier::Instantaneous) { CROSS_STATIONARY } else { CROSS_UNIFORM };
            cl.below("cross_momentum", x.direct.abs().max(x.substituted.abs()), bound);
        }
        _ => {}
    }
    Ok(())
}

/// Factor between residuals at the scenario grid and one refinement level.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Residuals {
    pub continuity: f64,
    pub hamilton_jacobi: f64,
    pub quantum_force: f64,
}

pub fn residuals(p: &Prepared, e: &Evolved) -> Result<Residuals, CliError> {
    Ok(Residuals {
        continuity: madelung::continuity_residual(&e.frames, e.frame_dt, &p.c, &p.g)?.value,
        hamilton_jacobi: madelung::hj_residual(&e.frames, 0.0, e.frame_dt, &p.v, &p.c, &p.g)?.value,
        quantum_force: madelung::quantum_force_residual(&e.frames, 0.0, e.frame_dt, &p.v, &p.c, &p.g)?.value,
    })
}

/// Norm and energy conservation of the integrator.
pub fn integration_checks(p: &Prepared, e: &Evolved, cl: &mut Checklist) -> Result<(), CliError> {
    cl.below("norm_drift", e.ev.max_norm_drift, NORM_DRIFT);
    if !p.v.is_time_dependent() {
        let last = e.ev.frames.last().expect("evolution keeps the initial frame");
        let t_last = *e.ev.times.last().unwrap_or(&0.0);
        let e0 = schrodinger::hamiltonian_energy(&p.psi, &p.v, 0.0, &p.c, &p.g)?;
        let e1 = schrodinger::hamiltonian_energy(last, &p.v, t_last, &p.c, &p.g)?;
        cl.below("energy_drift", ((e1 - e0) / e0.abs().max(f64::MIN_POSITIVE)).abs(), ENERGY_DRIFT);
    }
    Ok(())
}

/// Checks that need the evolved frames, including [`integration_checks`].
pub fn evolution_checks(cfg: &ScenarioConfig, p: &Prepared, e: &Evolved, cl: &mut Checklist) -> Result<Option<Residuals>, CliError> {
    let (c, g) = (&p.c, &p.g);
    integration_checks(p, e, cl)?;
    if !p.v.is_time_dependent() {
        let w = thermo::conservative_work(&e.frames, e.frame_dt, c, g)?;
        cl.below("conservative_work", w.factorised.abs(), CONSERVATIVE_WORK);
    }
    let chain = thermo::thermodynamic_chain(e.frames[0].p(), e.frames.last().unwrap().p(), c, g)?;
    cl.below("kt_equals_hbar_omega", (thermo::thermostat_kt(c.hbar(), c.omega())? - c.hbar() * c.omega()).abs(), f64::MIN_POSITIVE);
    cl.below("boltzmann_chain", chain.boltzmann_residual, BOLTZMANN_CHAIN);
    cl.below("chain_ratio", chain.ratio_mismatch, CHAIN_ROUTES);
    if cfg.checks.cross_momentum == Some(CrossMomentumTier::PeriodAverage) {
        let avg = madelung::cross_momentum_time_average(&e.frames[..e.frames.len() - 1], c, g)?;
        cl.below("cross_momentum_period_average", avg.mean.abs() / avg.max_instantaneous.max(1.0), CROSS_AVERAGE);
    }
    if !cfg.checks.residuals || e.frames.len() < 2 * variational::ENDPOINT_FRAMES + 1 {
        return Ok(None);
    }
    let a = variational::action_value(&e.frames, 0.0, e.frame_dt, &p.v, c, g)?;
    cl.below("action_routes", a.relative_difference, ACTION_ROUTES);
    if cfg.checks.on_shell_action {
        cl.below("on_shell_action", a.value.abs() / a.scale, ON_SHELL_ACTION);
    }
    let r = residuals(p, e)?;
    cl.below("continuity_residual", r.continuity, RESIDUAL);
    cl.below("hj_residual", r.hamilton_jacobi, RESIDUAL);
    cl.below("quantum_force_residual", r.quantum_force, RESIDUAL);
    if cfg.checks.refinement {
        let s = cfg.evolution()?;
        let gs = cfg.grid.expect("grid checked by prepare");
        let fine_n = match gs.boundary {
            subq_core::Boundary::Periodic => 2 * gs.n,
            subq_core::Boundary::DirichletZero => 2 * gs.n - 1,
        };
        let mut fine_grid = Grid::new(fine_n, gs.length, gs.boundary)?;
        if let Some(o) = gs.origin {
            fine_grid = fine_grid.with_origin(o);
        }
        let fine = prepare_on(cfg, fine_grid)?;
        let fs = EvolutionSettings::new(0.5 * s.dt, 2 * s.n_steps).every(s.snapshot_every);
        let fe = evolve(&fine, &fs)?;
        let rf = residuals(&fine, &fe)?;
        cl.within("continuity_refinement_ratio", r.continuity / rf.continuity, REFINEMENT_BAND);
        cl.within("hj_refinement_ratio", r.hamilton_jacobi / rf.hamilton_jacobi, REFINEMENT_BAND);
        cl.below("fine_quantum_force_residual", rf.quantum_force, RESIDUAL);
    }
    Ok(Some(r))
}

pub struct TrajectoryResult {
    pub initial: Vec<f64>,
    pub last: Vec<f64>,
    pub summary: EquivarianceSummary,
}

/// Bohmian ensemble through the evolved frames.
pub fn trajectory_checks(cfg: &ScenarioConfig, p: &Prepared, e: &Evolved, cl: &mut Checklist) -> Result<TrajectoryResult, CliError> {
    let (table, seed) = cfg.ensemble()?;
    let g = &p.g;
    let mut frames = &e.frames[..];
    if frames.len() % 2 == 0 {
        frames = &frames[..frames.len() - 1];
    }
    let v: Vec<Vec<f64>> = frames.iter().map(|b| b.grad_s().iter().map(|s| s / p.c.mass()).collect()).collect();
    let x0 = madelung::sample_trajectories(frames[0].p(), table.paths, seed, g)?;
    let ens = madelung::integrate_trajectories(&x0, &v, e.frame_dt, usize::MAX, g)?;
    let (lo, hi) = table.range.map(|r| (r[0], r[1])).unwrap_or(g.bounds());
    let summary = madelung::equivariance_summary(&ens, frames.last().unwrap().p(), g, lo, hi, table.bins.unwrap_or(40))?;
    cl.below("equivariance_tv", summary.tv_distance, TV_DISTANCE);
    Ok(TrajectoryResult { initial: ens.initial().to_vec(), last: ens.last().to_vec(), summary })
}

pub struct FtResult {
    pub summary: TftSummary,
    pub histogram: ft::DissipationHistogram,
    pub ratio: TftRatio,
    pub steady: Vec<SteadyWindow>,
}

pub fn ft_checks(cfg: &ScenarioConfig, cl: &mut Checklist) -> Result<FtResult, CliError> {
    let (p, table) = cfg.langevin()?;
    let ens = ft::simulate_dragged_trap(&p)?;
    let d = ft::dissipation_values(&ens, p.kt)?;
    let (summary, histogram, ratio) = ft::tft_summary(&d, p.duration)?;
    cl.below("tft_slope", (summary.fit.slope - 1.0).abs(), TFT_SLOPE);
    cl.below("gaussian_moment_sigma", summary.moments.z_score().abs(), MOMENT_SIGMA);
    let mut steady = Vec::new();
    if !table.windows.is_empty() {
        let sp = ft::LangevinParams {
            duration: table.relax.unwrap_or(10.0 * p.tau()),
            n_paths: table.steady_paths.unwrap_or(p.n_paths),
            ..p
        };
        steady = ft::steady_state_ft(&sp, &table.windows)?;
        // slopes must fall towards one from above as the window grows
        let s: Vec<f64> = steady.iter().map(|w| w.fit.slope).collect();
        let step = s.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        if s.len() > 1 {
            cl.above("steady_state_min_decrease", step, 0.0);
        }
        cl.above("steady_state_last_excess", s[s.len() - 1] - 1.0, 0.0);
    }
    Ok(FtResult { summary, histogram, ratio, steady })
}

pub fn thermo_checks(cfg: &ScenarioConfig, cl: &mut Checklist) -> Result<Vec<RampRun>, CliError> {
    let table = cfg.ramp()?;
    let c = cfg.constants()?;
    let g = cfg.grid()?;
    if table.ramp_times.len() < 2 {
        return Err(CliError::Schema("`ramp.ramp_times` needs a slow and a fast entry".into()));
    }
    let runs = table.ramp_times.iter().map(|&t| thermo::ramp_study(&table.settings(t), &c, &g)).collect::<Result<Vec<_>, _>>()?;
    let slow = runs.iter().max_by(|a, b| a.ramp_time.total_cmp(&b.ramp_time)).unwrap();
    let fast = runs.iter().min_by(|a, b| a.ramp_time.total_cmp(&b.ramp_time)).unwrap();
    cl.below("adiabatic_drift_slow", slow.invariant_drift, ADIABATIC_DRIFT);
    cl.above("adiabatic_fast_over_bound", fast.invariant_drift / ADIABATIC_DRIFT, FAST_RAMP_FACTOR);
    cl.below("nonconservative_routes", slow.work.relative_difference(), NONCONSERVATIVE_ROUTES);
    Ok(runs)
}

pub struct VftResult {
    pub reports: Vec<VftReport>,
    pub routes: Option<vft::TotalMomentum>,
}

pub fn vft_checks(cfg: &ScenarioConfig, p: &Prepared, cl: &mut Checklist) -> Result<VftResult, CliError> {
    let table = cfg.perturbation()?;
    let (b, c, g) = (&p.bundle, &p.c, &p.g);
    let mut eps = table.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut reports = Vec::new();
    for &e in &eps {
        let pert = Perturbation::from_shape(&table.shape, e, b, g)?;
        reports.push(vft::vft_report(b, &pert, table.mean_mode, c, g)?);
    }
    for (k, r) in reports.iter().enumerate() {
        cl.below(&format!("vft_invariants_eps{k}"), r.invariant_error(), VFT_RATIO);
        if table.shape == vft::PerturbationShape::UniformRelative {
            cl.below(&format!("vft_uniform_ratio_eps{k}"), (r.ratio - (-r.forms.epsilon * r.a_tilde).exp()).abs(), VFT_RATIO);
            if let Some(a) = cfg.checks.u_bar_over_hbar_omega {
                cl.below(&format!("vft_reference_ratio_eps{k}"), (r.ratio - (-r.forms.epsilon * a).exp()).abs(), VFT_RATIO);
            }
        }
    }
    for (k, w) in reports.windows(2).enumerate() {
        // pairwise gaps scale as ε²; rescale to a halving step
        let step = w[0].forms.epsilon / w[1].forms.epsilon;
        let decay = w[0].forms.max_pairwise / w[1].forms.max_pairwise;
        cl.within(&format!("vft_form_decay_{k}"), 4.0 * decay / (step * step), VFT_DECAY_BAND);
    }
    let routes = match &table.routes_shape {
        Some(shape) => {
            let pert = Perturbation::from_shape(shape, *eps.last().unwrap_or(&0.01), b, g)?;
            // synthetic ratio fields with p(−A)/p(A) = δP
            let dp = pert.delta_p(b);
            let (lo, _) = g.bounds();
            let plus: Vec<f64> = g.xs().iter().map(|x| 0.2 + 0.1 * (3.0 * (x - lo)).cos()).collect();
            let minus: Vec<f64> = plus.iter().zip(&dp).map(|(a, d)| a * d).collect();
            let t = vft::delta_p_tot(b, &pert, Some(RatioFields { p_plus: &plus, p_minus: &minus }), c, g)?;
            cl.below("vft_routes_ab", t.max_ab, VFT_ROUTES);
            if let Some(gap) = t.max_a_log_sum {
                cl.below("vft_routes_log_sum", gap, VFT_ROUTES);
            }
            Some(t)
        }
        None => None,
    };
    Ok(VftResult { reports, routes })
}

pub struct VariationalResult {
    pub ground: GroundState,
    pub oracle: f64,
    pub hj_gap: f64,
}

pub fn variational_checks(cfg: &ScenarioConfig, cl: &mut Checklist) -> Result<VariationalResult, CliError> {
    let table = cfg.variational()?;
    let c = cfg.constants()?;
    let g = cfg.grid()?;
    let v = cfg.potential()?;
    let ground = variational::minimize_ground_state(v, &c, &g, &table.settings())?;
    let oracle = schrodinger::diagonalize_reference(v, 0.0, 1, &c, &g)?[0].energy;
    cl.below("ground_vs_oracle", (ground.energy - oracle).abs(), GROUND_ORACLE);
    if let Some(x) = table.expected_energy {
        cl.below("ground_vs_expected", (ground.energy - x.value).abs(), x.tol);
    }
    let hj_gap = variational::stationary_hj_gap(&ground, v, &c, &g, STATIONARY_HJ_FLOOR)?;
    cl.below("stationary_hj", hj_gap, STATIONARY_HJ);
    let norm: f64 = fields::integrate(&ground.p, &g)?;
    cl.below("ground_norm", (norm - 1.0).abs(), 1e-12);
    Ok(VariationalResult { ground, oracle, hj_gap })
}
