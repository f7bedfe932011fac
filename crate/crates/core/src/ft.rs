//! Fluctuation-theorem testbed: an overdamped colloid in a dragged harmonic
//! trap, dissipation histograms and the transient and steady-state ratio
//! estimators.

use crate::error::{Error, Result};
use crate::madelung::TrajectoryEnsemble;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest accepted `k·dt/γ`.
pub const MAX_STEP_RATIO: f64 = 0.1;
/// Above this `k·dt/γ` a warning is logged.
pub const WARN_STEP_RATIO: f64 = 0.02;
/// Two-sided 95% normal quantile used for every confidence interval here.
pub const Z95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinParams {
    pub stiffness: f64,
    pub drag: f64,
    pub kt: f64,
    pub v_drag: f64,
    pub dt: f64,
    pub duration: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl LangevinParams {
    /// Relaxation time `γ/k`.
    pub fn tau(&self) -> f64 {
        self.drag / self.stiffness
    }

    /// Validates and returns any warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [("stiffness", self.stiffness), ("drag", self.drag), ("kt", self.kt), ("dt", self.dt), ("duration", self.duration)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.v_drag.is_finite() {
            return Err(Error::InvalidArgument("v_drag must be finite".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("need at least one path".into()));
        }
        let ratio = self.stiffness * self.dt / self.drag;
        if ratio > MAX_STEP_RATIO {
            return Err(Error::UnstableStep(format!("k·dt/γ = {ratio} exceeds {MAX_STEP_RATIO}")));
        }
        let mut w = Vec::new();
        if ratio > WARN_STEP_RATIO {
            let msg = format!("k·dt/γ = {ratio:.3} is not small; Euler–Maruyama bias may be visible");
            log::warn!("{msg}");
            w.push(msg);
        }
        Ok(w)
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Per-path state of one trajectory.
struct Path {
    x0: f64,
    x: f64,
    work: f64,
    heat: f64,
    recorded: Vec<(f64, f64)>,
}

fn run_path(p: &LangevinParams, index: u64, record_steps: &[usize], total: usize) -> Path {
    let mut r = rng::stream(p.seed, "langevin", index);
    let (k, g, v, dt) = (p.stiffness, p.drag, p.v_drag, p.dt);
    let amp = (2.0 * p.kt * dt / g).sqrt();
    let z0: f64 = StandardNormal.sample(&mut r);
    let x0 = z0 * (p.kt / k).sqrt();
    let mut x = x0;
    let mut work = 0.0;
    let mut heat = 0.0;
    let mut recorded = Vec::with_capacity(record_steps.len());
    let mut next = 0;
    while next < record_steps.len() && record_steps[next] == 0 {
        recorded.push((x, 0.0));
        next += 1;
    }
    for n in 0..total {
        let t = n as f64 * dt;
        let f = x - v * t;
        let z: f64 = StandardNormal.sample(&mut r);
        let x1 = x - k / g * f * dt + amp * z;
        work -= k * f * v * dt;
        // Stratonovich heat at the new time; exact for a quadratic trap
        let t1 = t + dt;
        heat += k * (0.5 * (x + x1) - v * t1) * (x1 - x);
        x = x1;
        while next < record_steps.len() && record_steps[next] == n + 1 {
            recorded.push((x, work));
            next += 1;
        }
    }
    Path { x0, x, work, heat, recorded }
}

/// Trap energy `½k(x − v t)²`.
fn trap_energy(p: &LangevinParams, x: f64, t: f64) -> f64 {
    0.5 * p.stiffness * (x - p.v_drag * t).powi(2)
}

/// A run with positions and accumulated work recorded at chosen times.
#[derive(Clone, Debug, Serialize)]
pub struct LangevinRun {
    pub ensemble: TrajectoryEnsemble,
    /// `work_at[k][i]`: work done on path `i` up to `ensemble.times[k]`.
    pub work_at: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Overdamped Euler–Maruyama ensemble in a trap dragged at constant speed,
/// recording positions and work at `record_times` (rounded to steps; `0` and
/// `duration` are always included).
///
/// Work uses the left-point rule `−k(x − v t)v dt`, heat the Stratonovich
/// midpoint `∂ₓV ∘ dx`, and the energy change is exact, so the first law holds
/// to `O(dt)` per path.
pub fn simulate_recorded(p: &LangevinParams, record_times: &[f64]) -> Result<LangevinRun> {
    let warnings = p.validate()?;
    let total = p.steps(p.duration);
    let mut steps: Vec<usize> = record_times.iter().map(|t| p.steps(*t).min(total)).collect();
    steps.push(0);
    steps.push(total);
    steps.sort_unstable();
    steps.dedup();
    let paths: Vec<Path> = (0..p.n_paths as u64).into_par_iter().map(|i| run_path(p, i, &steps, total)).collect();
    let times: Vec<f64> = steps.iter().map(|&s| s as f64 * p.dt).collect();
    let t_end = total as f64 * p.dt;
    let mut snapshots = vec![Vec::with_capacity(p.n_paths); steps.len()];
    let mut work_at = vec![Vec::with_capacity(p.n_paths); steps.len()];
    let mut work = Vec::with_capacity(p.n_paths);
    let mut heat = Vec::with_capacity(p.n_paths);
    let mut energy_change = Vec::with_capacity(p.n_paths);
    for path in &paths {
        for (k, &(x, w)) in path.recorded.iter().enumerate() {
            snapshots[k].push(x);
            work_at[k].push(w);
        }
        work.push(path.work);
        heat.push(path.heat);
        energy_change.push(trap_energy(p, path.x, t_end) - trap_energy(p, path.x0, 0.0));
    }
    let excluded = vec![false; p.n_paths];
    Ok(LangevinRun { ensemble: TrajectoryEnsemble { times, snapshots, work, heat, energy_change, excluded }, work_at, warnings })
}

pub fn simulate_dragged_trap(p: &LangevinParams) -> Result<TrajectoryEnsemble> {
    simulate_recorded(p, &[]).map(|r| r.ensemble)
}

/// Integrated dissipation `Ω̄_t·t = ΔW/kT` per path.
pub fn dissipation_values(ens: &TrajectoryEnsemble, kt: f64) -> Result<Vec<f64>> {
    if !(kt > 0.0) {
        return Err(Error::InvalidArgument("kT must be positive".into()));
    }
    Ok(ens.work.iter().map(|w| w / kt).collect())
}

/// Mirrored histogram: bin `k` covers `[k w, (k+1) w)` on the positive side and
/// `(−(k+1) w, −k w)` on the negative side; exact zeros count as positive.
#[derive(Clone, Debug, Serialize)]
pub struct DissipationHistogram {
    /// Non-negative edges `0, w, 2w, …`; the negative side mirrors them.
    pub bin_edges: Vec<f64>,
    pub counts_pos: Vec<u64>,
    pub counts_neg: Vec<u64>,
    pub n_total: u64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis width `2·IQR·n^{-1/3}` of the pooled sample.
pub fn freedman_diaconis_width(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let w = 2.0 * iqr / (values.len() as f64).cbrt();
    (w > 0.0 && w.is_finite()).then_some(w)
}

impl DissipationHistogram {
    /// Bins of `width`, or the Freedman–Diaconis width when `None`.
    pub fn new(values: &[f64], width: Option<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite dissipation value".into()));
        }
        let w = match width {
            Some(w) if w > 0.0 => w,
            Some(w) => return Err(Error::InvalidArgument(format!("bin width must be positive, got {w}"))),
            None => freedman_diaconis_width(values).unwrap_or(1.0),
        };
        let amax = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let nb = ((amax / w).floor() as usize + 1).max(1);
        let mut counts_pos = vec![0u64; nb];
        let mut counts_neg = vec![0u64; nb];
        for &v in values {
            let k = ((v.abs() / w).floor() as usize).min(nb - 1);
            if v >= 0.0 {
                counts_pos[k] += 1;
            } else {
                counts_neg[k] += 1;
            }
        }
        let bin_edges = (0..=nb).map(|k| k as f64 * w).collect();
        Ok(Self { bin_edges, counts_pos, counts_neg, n_total: values.len() as u64 })
    }

    pub fn width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TftPoint {
    /// Bin centre `A`.
    pub a: f64,
    pub ln_ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TftRatio {
    pub points: Vec<TftPoint>,
    /// Centres of bins dropped because one side was empty.
    pub excluded: Vec<f64>,
}

/// Wilson score interval for a binomial fraction.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let f = successes as f64 / n;
    let z2 = z * z;
    let centre = (f + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (f * (1.0 - f) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn logit(f: f64) -> f64 {
    (f / (1.0 - f)).ln()
}

/// `ln[p(A)/p(−A)]` per mirrored bin with a 95% interval from the Wilson bound
/// on `n₊/(n₊ + n₋)` mapped through the logit.
pub fn tft_ratio(h: &DissipationHistogram) -> TftRatio {
    let w = h.width();
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for k in 0..h.counts_pos.len() {
        let (np, nn) = (h.counts_pos[k], h.counts_neg[k]);
        let a = (k as f64 + 0.5) * w;
        if np == 0 || nn == 0 {
            if np + nn > 0 {
                excluded.push(a);
            }
            continue;
        }
        let (lo, hi) = wilson_interval(np, np + nn, Z95);
        points.push(TftPoint { a, ln_ratio: (np as f64 / nn as f64).ln(), ci_lo: logit(lo), ci_hi: logit(hi), n_pos: np, n_neg: nn });
    }
    TftRatio { points, excluded }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    pub n_bins: usize,
}

impl SlopeFit {
    pub fn ci95(&self) -> (f64, f64) {
        (self.slope - Z95 * self.std_error, self.slope + Z95 * self.std_error)
    }
}

/// Weighted least-squares slope through the origin, each bin weighted by the
/// inverse of its delta-method variance `1/n₊ + 1/n₋`.
pub fn fit_slope(r: &TftRatio) -> Result<SlopeFit> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in &r.points {
        let wgt = 1.0 / (1.0 / p.n_pos as f64 + 1.0 / p.n_neg as f64);
        sxy += wgt * p.a * p.ln_ratio;
        sxx += wgt * p.a * p.a;
    }
    if r.points.is_empty() || sxx == 0.0 {
        return Err(Error::Degenerate("no bins with both signs populated".into()));
    }
    Ok(SlopeFit { slope: sxy / sxx, std_error: 1.0 / sxx.sqrt(), n_bins: r.points.len() })
}

/// Sample moments and the Gaussian corollary `var = 2·mean`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentCheck {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// `var − 2·mean`.
    pub gap: f64,
    /// Standard error of `gap` for Gaussian data.
    pub gap_sigma: f64,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        self.gap / self.gap_sigma
    }
}

pub fn moment_check(values: &[f64]) -> Result<MomentCheck> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument("need at least three values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let variance = m2 / (n - 1.0);
    let skewness = if m2 > 0.0 { (m3 / n) / (m2 / n).powf(1.5) } else { 0.0 };
    let gap_sigma = (2.0 * variance * variance / (n - 1.0) + 4.0 * variance / n).sqrt();
    Ok(MomentCheck { mean, variance, skewness, gap: variance - 2.0 * mean, gap_sigma })
}

/// Everything the transient estimator reports for one ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct TftSummary {
    pub n_paths: usize,
    pub duration: f64,
    pub moments: MomentCheck,
    pub fit: SlopeFit,
    /// Fit after halving the bin width.
    pub fit_half_width: SlopeFit,
    pub bin_width: f64,
    pub excluded_bins: usize,
}

pub fn tft_summary(values: &[f64], duration: f64) -> Result<(TftSummary, DissipationHistogram, TftRatio)> {
    let h = DissipationHistogram::new(values, None)?;
    let r = tft_ratio(&h);
    let fit = fit_slope(&r)?;
    let half = DissipationHistogram::new(values, Some(0.5 * h.width()))?;
    let fit_half_width = fit_slope(&tft_ratio(&half))?;
    let s = TftSummary {
        n_paths: values.len(),
        duration,
        moments: moment_check(values)?,
        fit,
        fit_half_width,
        bin_width: h.width(),
        excluded_bins: r.excluded.len(),
    };
    Ok((s, h, r))
}

/// Steady-state estimate for one averaging window.
#[derive(Clone, Debug, Serialize)]
pub struct SteadyWindow {
    /// Window length in units of time.
    pub window: f64,
    /// Mean time-averaged entropy production `σ` (per unit time, kT units).
    pub sigma_mean: f64,
    /// Fitted slope of `ln[P_t(σ)/P_t(−σ)]` against `σ·t`.
    pub fit: SlopeFit,
    /// `2·mean/var` of `σ·t`, the slope a Gaussian would give.
    pub gaussian_slope: f64,
}

/// Windowed entropy production `σ = W_window/(kT·t)` after a relaxation stage of
/// `p.duration`.
pub fn steady_state_ft(p: &LangevinParams, windows: &[f64]) -> Result<Vec<SteadyWindow>> {
    if windows.is_empty() || windows.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("windows must be positive".into()));
    }
    let relax = p.duration;
    let longest = windows.iter().cloned().fold(0.0, f64::max);
    let run_params = LangevinParams { duration: relax + longest, ..*p };
    let mut marks = vec![relax];
    marks.extend(windows.iter().map(|w| relax + w));
    let run = simulate_recorded(&run_params, &marks)?;
    let idx = |t: f64| -> usize {
        let s = run_params.steps(t);
        run.ensemble.times.iter().position(|x| run_params.steps(*x) == s).unwrap_or(0)
    };
    let k0 = idx(relax);
    let mut out = Vec::with_capacity(windows.len());
    for &w in windows {
        let k1 = idx(relax + w);
        let values: Vec<f64> = run.work_at[k1].iter().zip(&run.work_at[k0]).map(|(a, b)| (a - b) / p.kt).collect();
        let h = DissipationHistogram::new(&values, None)?;
        let fit = fit_slope(&tft_ratio(&h))?;
        let m = moment_check(&values)?;
        out.push(SteadyWindow { window: w, sigma_mean: m.mean / w, fit, gaussian_slope: 2.0 * m.mean / m.variance });
    }
    Ok(out)
}

/// Closed-form mean and variance of the work (kT units) over a window of length
/// `t` for the linear trap, started in equilibrium (`steady = false`) or in the
/// dragged steady state (`steady = true`).
pub fn linear_trap_work_moments(p: &LangevinParams, t: f64, steady: bool) -> (f64, f64) {
    let tau = p.tau();
    let rate = p.drag * p.v_drag * p.v_drag / p.kt;
    let relax = tau * (1.0 - (-t / tau).exp());
    let mean = if steady { rate * t } else { rate * (t - relax) };
    (mean, 2.0 * rate * (t - relax))
}
