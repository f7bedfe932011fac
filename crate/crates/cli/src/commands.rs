//! Subcommands. Each one runs its part of the suite, writes its artifacts and
//! `invariants.json`, and returns the checklist so the caller can set the exit code.

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::ArtifactWriter;
use crate::suite::{self, Checklist, Invariant};
use serde::Serialize;
use std::path::{Path, PathBuf};
use subq_core::madelung;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Analyze,
    Trajectories,
    Thermo,
    Ft,
    Vft,
    Variational,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Analyze => "analyze",
            Command::Trajectories => "trajectories",
            Command::Thermo => "thermo",
            Command::Ft => "ft",
            Command::Vft => "vft",
            Command::Variational => "variational",
            Command::Validate => "validate",
        }
    }
}

pub struct Outcome {
    pub dir: PathBuf,
    pub checklist: Checklist,
}

impl Outcome {
    pub fn failures(&self) -> Vec<String> {
        self.checklist.failures()
    }
}

/// `--out`, then `SUBQ_OUT`, then `[output].dir`, then `out/<name>`.
pub fn output_dir(cli: Option<&Path>, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("SUBQ_OUT").filter(|s| !s.is_empty()) {
        return PathBuf::from(p);
    }
    match &cfg.output {
        Some(o) if o.dir.is_absolute() => o.dir.clone(),
        Some(o) => cfg.base_dir.join(&o.dir),
        None => PathBuf::from("out").join(&cfg.name),
    }
}

pub fn run(cmd: Command, cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut w = ArtifactWriter::new(out)?;
    let mut cl = Checklist::new(&cfg.name);
    match cmd {
        Command::Evolve => evolve(cfg, &mut w, &mut cl)?,
        Command::Analyze => analyze(cfg, &mut w, &mut cl)?,
        Command::Trajectories => trajectories(cfg, &mut w, &mut cl)?,
        Command::Thermo => thermo(cfg, &mut w, &mut cl)?,
        Command::Ft => ft(cfg, &mut w, &mut cl)?,
        Command::Vft => vft(cfg, &mut w, &mut cl)?,
        Command::Variational => variational(cfg, &mut w, &mut cl)?,
        Command::Validate => validate(cfg, &mut w, &mut cl)?,
    }
    w.json("invariants.json", &cl.items)?;
    let dir = w.finish(&cfg.name, cmd.name())?;
    Ok(Outcome { dir, checklist: cl })
}

#[derive(Serialize)]
struct EvolveSummary {
    frames: usize,
    frame_dt: f64,
    max_norm_drift: f64,
    solver_iterations: usize,
    warnings: Vec<String>,
}

fn evolve(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let p = suite::prepare(cfg)?;
    let e = suite::evolve(&p, &cfg.evolution()?)?;
    suite::integration_checks(&p, &e, cl)?;
    let xs = p.g.xs();
    let rows = e.ev.times.iter().zip(&e.ev.frames).flat_map(|(&t, f)| {
        xs.iter().zip(f).map(move |(&x, z)| vec![t, x, z.re, z.im, z.norm_sqr()])
    });
    w.csv("frames.csv", &["t", "x", "re", "im", "P"], rows)?;
    w.json(
        "summary.json",
        &EvolveSummary {
            frames: e.ev.frames.len(),
            frame_dt: e.frame_dt,
            max_norm_drift: e.ev.max_norm_drift,
            solver_iterations: e.ev.solver_iterations,
            warnings: e.ev.warnings.clone(),
        },
    )
}

fn analyze(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let p = suite::prepare(cfg)?;
    suite::state_checks(cfg, &p, cl)?;
    let h = madelung::osmotic_fields(&p.bundle, &p.c, &p.g)?;
    let b = &p.bundle;
    let rows = (0..p.g.n()).map(|j| {
        vec![p.g.x(j), b.p()[j], b.s()[j], h.quantum_potential[j], h.u[j], h.k_u[j], if b.mask().get(j) { 1.0 } else { 0.0 }]
    });
    w.csv("hydro.csv", &["x", "P", "S", "U", "u", "k_u", "mask"], rows)?;
    let residuals = match cfg.evolution {
        Some(_) => {
            let e = suite::evolve(&p, &cfg.evolution()?)?;
            suite::evolution_checks(cfg, &p, &e, cl)?
        }
        None => None,
    };
    w.json("residuals.json", &residuals)
}

fn trajectories(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let p = suite::prepare(cfg)?;
    let e = suite::evolve(&p, &cfg.evolution()?)?;
    let t = suite::trajectory_checks(cfg, &p, &e, cl)?;
    w.csv("paths.csv", &["x0", "x_final"], t.initial.iter().zip(&t.last).map(|(a, b)| vec![*a, *b]))?;
    w.json("summary.json", &t.summary)
}

fn thermo(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let runs = suite::thermo_checks(cfg, cl)?;
    let rows = runs.iter().flat_map(|r| {
        (0..r.times.len()).map(move |k| vec![r.ramp_time, r.times[k], r.omegas[k], r.energies[k], r.virial[k]])
    });
    w.csv("ramp.csv", &["ramp_time", "t", "omega", "energy", "virial"], rows)?;
    #[derive(Serialize)]
    struct Run {
        ramp_time: f64,
        invariant_drift: f64,
        energy_route: f64,
        ump_route: f64,
        relative_difference: f64,
    }
    let s: Vec<Run> = runs
        .iter()
        .map(|r| Run {
            ramp_time: r.ramp_time,
            invariant_drift: r.invariant_drift,
            energy_route: r.work.energy_route,
            ump_route: r.work.ump_route,
            relative_difference: r.work.relative_difference(),
        })
        .collect();
    w.json("summary.json", &s)
}

fn ft(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let r = suite::ft_checks(cfg, cl)?;
    let h = &r.histogram;
    let rows = (0..h.counts_pos.len())
        .map(|k| vec![h.bin_edges[k], h.bin_edges[k + 1], h.counts_pos[k] as f64, h.counts_neg[k] as f64]);
    w.csv("histogram.csv", &["lower", "upper", "n_pos", "n_neg"], rows)?;
    let rows = r.ratio.points.iter().map(|q| vec![q.a, q.ln_ratio, q.ci_lo, q.ci_hi, q.n_pos as f64, q.n_neg as f64]);
    w.csv("tft.csv", &["a", "ln_ratio", "ci_lo", "ci_hi", "n_pos", "n_neg"], rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        transient: &'a subq_core::ft::TftSummary,
        excluded_bins: &'a [f64],
        steady: &'a [subq_core::ft::SteadyWindow],
    }
    w.json("summary.json", &Summary { transient: &r.summary, excluded_bins: &r.ratio.excluded, steady: &r.steady })
}

fn vft(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let p = suite::prepare(cfg)?;
    let r = suite::vft_checks(cfg, &p, cl)?;
    let rows = r.reports.iter().map(|x| {
        let f = &x.forms;
        vec![
            f.epsilon,
            x.ratio,
            x.at,
            f.linear_form,
            f.mean_log_form,
            f.log_mean_form,
            f.energy_form,
            f.literal_mean_form,
            f.literal_energy_form,
            f.max_pairwise,
            f.delta_u_gap,
        ]
    });
    let header = [
        "epsilon",
        "ratio",
        "at",
        "linear_form",
        "mean_log_form",
        "log_mean_form",
        "energy_form",
        "literal_mean_form",
        "literal_energy_form",
        "max_pairwise",
        "delta_u_gap",
    ];
    w.csv("sweep.csv", &header, rows)?;
    #[derive(Serialize)]
    struct Report<'a> {
        reports: &'a [subq_core::vft::VftReport],
        routes: &'a Option<subq_core::vft::TotalMomentum>,
    }
    w.json("report.json", &Report { reports: &r.reports, routes: &r.routes })
}

fn variational(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let r = suite::variational_checks(cfg, cl)?;
    let g = cfg.grid()?;
    let rows = r.ground.trace.iter().map(|t| vec![t.iteration as f64, t.energy, t.gradient_norm]);
    w.csv("trace.csv", &["iteration", "energy", "gradient_norm"], rows)?;
    let rows = (0..g.n()).map(|j| vec![g.x(j), r.ground.phi[j], r.ground.p[j]]);
    w.csv("ground_state.csv", &["x", "phi", "P"], rows)?;
    #[derive(Serialize)]
    struct Summary {
        energy: f64,
        oracle: f64,
        iterations: usize,
        stationary_hj_gap: f64,
    }
    w.json("summary.json", &Summary { energy: r.ground.energy, oracle: r.oracle, iterations: r.ground.iterations, stationary_hj_gap: r.hj_gap })
}

/// Every check that the scenario's tables make applicable.
pub fn scenario_checks(cfg: &ScenarioConfig, cl: &mut Checklist) -> Result<(), CliError> {
    let has_state = cfg.grid.is_some() && cfg.potential.is_some() && cfg.initial.is_some();
    if has_state {
        let p = suite::prepare(cfg)?;
        suite::state_checks(cfg, &p, cl)?;
        if cfg.evolution.is_some() {
            let e = suite::evolve(&p, &cfg.evolution()?)?;
            suite::evolution_checks(cfg, &p, &e, cl)?;
            if cfg.ensemble.is_some() && cfg.langevin.is_none() {
                suite::trajectory_checks(cfg, &p, &e, cl)?;
            }
        }
        if cfg.perturbation.is_some() {
            suite::vft_checks(cfg, &p, cl)?;
        }
    }
    if cfg.langevin.is_some() {
        suite::ft_checks(cfg, cl)?;
    }
    if cfg.ramp.is_some() {
        suite::thermo_checks(cfg, cl)?;
    }
    if cfg.variational.is_some() {
        suite::variational_checks(cfg, cl)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Validation<'a> {
    scenarios: Vec<String>,
    passed: usize,
    failed: Vec<String>,
    invariants: &'a [Invariant],
}

fn validate(cfg: &ScenarioConfig, w: &mut ArtifactWriter, cl: &mut Checklist) -> Result<(), CliError> {
    let mut names = Vec::new();
    for path in cfg.corpus()? {
        let sc = ScenarioConfig::from_path(&path)?;
        log::info!("validating {}", sc.name);
        let mut local = Checklist::new(&sc.name);
        scenario_checks(&sc, &mut local)?;
        names.push(sc.name.clone());
        cl.items.extend(local.items);
    }
    let failed = cl.failures();
    let passed = cl.items.len() - failed.len();
    w.json("validation.json", &Validation { scenarios: names, passed, failed, invariants: &cl.items })
}
