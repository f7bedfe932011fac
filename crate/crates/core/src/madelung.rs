//! Hydrodynamic fields of a Madelung bundle, the residuals that tie them back to
//! the Schrödinger equation, and Bohmian trajectory ensembles.

use crate::error::{Error, Result};
use crate::fields::{self, Constants, Grid, MadelungBundle, Mask, RealField};
use crate::rng;
use crate::schrodinger::Potential;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// The three equivalent forms of the quantum potential on the bundle's mask.
#[derive(Clone, Debug, Serialize)]
pub struct QuantumPotential {
    /// `−(ℏ²/2m)∇²R/R`.
    pub r_form: RealField,
    /// `(ℏ²/4m)[½(∇P/P)² − ∇²P/P]`.
    pub p_form: RealField,
    /// `−m u²/2 + (ℏ/2)∇·u`.
    pub u_form: RealField,
    #[serde(skip)]
    pub mask: Mask,
    /// Largest pairwise P-weighted relative RMS difference between forms.
    pub max_relative_difference: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HydroFields {
    pub quantum_potential: RealField,
    /// Osmotic velocity `δp/m`.
    pub u: RealField,
    /// `−∇R/R`.
    pub k_u: RealField,
    /// `−(ℏ/2)∇P/P`.
    pub delta_p: RealField,
    /// `∇S/m`.
    pub v: RealField,
    #[serde(skip)]
    pub mask: Mask,
    pub coverage: f64,
}

fn require_support(b: &MadelungBundle) -> Result<()> {
    if b.mask().count() < 8 {
        return Err(Error::Degenerate("amplitude below node floor almost everywhere".into()));
    }
    Ok(())
}

fn masked(mut f: RealField, mask: &Mask) -> RealField {
    for (j, v) in f.iter_mut().enumerate() {
        if !mask.get(j) {
            *v = 0.0;
        }
    }
    f
}

/// `(∇P/P, ∇²P/P)` on the mask.
fn density_log_derivatives(b: &MadelungBundle, g: &Grid) -> Result<(RealField, RealField)> {
    let p = b.p();
    let d1 = fields::gradient(p, g)?;
    let d2 = fields::laplacian(p, g)?;
    let m = b.mask();
    let q1 = (0..g.n()).map(|j| if m.get(j) { d1[j] / p[j] } else { 0.0 }).collect();
    let q2 = (0..g.n()).map(|j| if m.get(j) { d2[j] / p[j] } else { 0.0 }).collect();
    Ok((q1, q2))
}

/// `∇ᵏR/R` for `k = 1..=order` on the mask.
fn amplitude_log_derivatives(b: &MadelungBundle, g: &Grid, order: usize) -> Result<Vec<RealField>> {
    let r = b.r();
    let m = b.mask();
    (1..=order)
        .map(|k| {
            let d = fields::piecewise_derivative(r, m, g, k)?;
            Ok((0..g.n()).map(|j| if m.get(j) { d[j] / r[j] } else { 0.0 }).collect())
        })
        .collect()
}

pub fn quantum_potential(b: &MadelungBundle, c: &Constants, g: &Grid) -> Result<QuantumPotential> {
    b.validate(g)?;
    require_support(b)?;
    let (hb, m) = (c.hbar(), c.mass());
    let mask = b.mask().clone();
    let rl = amplitude_log_derivatives(b, g, 2)?;
    let (q1, q2) = density_log_derivatives(b, g)?;
    let n = g.n();
    let r_form = masked((0..n).map(|j| -hb * hb / (2.0 * m) * rl[1][j]).collect(), &mask);
    let p_form = masked((0..n).map(|j| hb * hb / (4.0 * m) * (0.5 * q1[j] * q1[j] - q2[j])).collect(), &mask);
    let u_form = masked(
        (0..n)
            .map(|j| {
                let u = -hb / (2.0 * m) * q1[j];
                let div_u = -hb / (2.0 * m) * (q2[j] - q1[j] * q1[j]);
                -0.5 * m * u * u + 0.5 * hb * div_u
            })
            .collect(),
        &mask,
    );
    let floor = c.kt();
    let p = b.p();
    let d = [
        fields::weighted_relative_rms(&p_form, &r_form, p, &mask, g, floor)?,
        fields::weighted_relative_rms(&u_form, &r_form, p, &mask, g, floor)?,
        fields::weighted_relative_rms(&u_form, &p_form, p, &mask, g, floor)?,
    ];
    let max_relative_difference = d.iter().cloned().fold(0.0, f64::max);
    Ok(QuantumPotential { r_form, p_form, u_form, mask, max_relative_difference })
}

pub fn osmotic_fields(b: &MadelungBundle, c: &Constants, g: &Grid) -> Result<HydroFields> {
    b.validate(g)?;
    require_support(b)?;
    let (hb, m) = (c.hbar(), c.mass());
    let mask = b.mask().clone();
    // ∇P/P = 2∇R/R; the amplitude route keeps quotients accurate in low-density tails
    let rl = amplitude_log_derivatives(b, g, 2)?;
    let delta_p: RealField = rl[0].iter().map(|q| -hb * q).collect();
    let u = delta_p.iter().map(|d| d / m).collect();
    let k_u = masked(rl[0].iter().map(|q| -q).collect(), &mask);
    let v = b.grad_s().iter().map(|s| s / m).collect();
    let quantum_potential = masked(rl[1].iter().map(|q| -hb * hb / (2.0 * m) * q).collect(), &mask);
    let coverage = mask.coverage();
    Ok(HydroFields { quantum_potential, u, k_u, delta_p, v, mask, coverage })
}

/// `∇U = −(ℏ²/2m)(R‴/R − R″R′/R²)` on the mask.
pub fn grad_quantum_potential(b: &MadelungBundle, c: &Constants, g: &Grid) -> Result<RealField> {
    require_support(b)?;
    let rl = amplitude_log_derivatives(b, g, 3)?;
    let k = -c.hbar() * c.hbar() / (2.0 * c.mass());
    Ok(masked((0..g.n()).map(|j| k * (rl[2][j] - rl[1][j] * rl[0][j])).collect(), b.mask()))
}

/// `∫P∇U dx`, accumulated as `−(ℏ²/2m)∫(R R‴ − R″R′) dx` over the mask.
pub fn mean_grad_u(b: &MadelungBundle, c: &Constants, g: &Grid) -> Result<f64> {
    require_support(b)?;
    let m = b.mask();
    let r = b.r();
    let d1 = fields::piecewise_derivative(r, m, g, 1)?;
    let d2 = fields::piecewise_derivative(r, m, g, 2)?;
    let d3 = fields::piecewise_derivative(r, m, g, 3)?;
    let k = -c.hbar() * c.hbar() / (2.0 * c.mass());
    let f: RealField = (0..g.n()).map(|j| if m.get(j) { k * (r[j] * d3[j] - d2[j] * d1[j]) } else { 0.0 }).collect();
    fields::integrate(&f, g)
}

/// Norm of a space-time residual evaluated on interior frames.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualNorm {
    /// RMS over frames of the masked spatial L² norm.
    pub value: f64,
    pub per_frame: Vec<f64>,
    pub mean_coverage: f64,
}

fn check_frames(frames: &[MadelungBundle], dt: f64) -> Result<()> {
    if frames.len() < 3 {
        return Err(Error::InvalidArgument("need at least three frames for centred differences".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("frame spacing must be positive".into()));
    }
    Ok(())
}

/// Points valid in all three frames of a centred difference.
fn stencil_mask(frames: &[MadelungBundle], n: usize) -> Mask {
    frames[n - 1].mask().and(frames[n].mask()).and(frames[n + 1].mask())
}

fn summarize(per_frame: Vec<f64>, coverage: Vec<f64>) -> ResidualNorm {
    let value = (per_frame.iter().map(|v| v * v).sum::<f64>() / per_frame.len() as f64).sqrt();
    let mean_coverage = coverage.iter().sum::<f64>() / coverage.len() as f64;
    ResidualNorm { value, per_frame, mean_coverage }
}

/// `‖∂P/∂t + ∇·(vP)‖₂` with centred time differences; frames are `dt` apart.
pub fn continuity_residual(frames: &[MadelungBundle], dt: f64, c: &Constants, g: &Grid) -> Result<ResidualNorm> {
    check_frames(frames, dt)?;
    let mut per = Vec::new();
    let mut cov = Vec::new();
    for n in 1..frames.len() - 1 {
        let b = &frames[n];
        let j: RealField = b.p().iter().zip(b.grad_s()).map(|(p, s)| p * s / c.mass()).collect();
        let dj = fields::gradient(&j, g)?;
        let res: RealField =
            (0..g.n()).map(|k| (frames[n + 1].p()[k] - frames[n - 1].p()[k]) / (2.0 * dt) + dj[k]).collect();
        let mask = stencil_mask(frames, n);
        per.push(fields::masked_l2(&res, &mask, g));
        cov.push(mask.coverage());
    }
    Ok(summarize(per, cov))
}

/// `∂S/∂t` by centred differences, wrapped to one phase branch.
fn action_rate(prev: &MadelungBundle, next: &MadelungBundle, dt: f64, hbar: f64) -> RealField {
    prev.s()
        .iter()
        .zip(next.s())
        .map(|(a, b)| hbar * fields::wrap_phase((b - a) / hbar) / (2.0 * dt))
        .collect()
}

/// `‖∂S/∂t + (∇S)²/2m + V + U‖₂` on the mask. Frame `k` sits at time `t0 + k·dt`.
pub fn hj_residual(
    frames: &[MadelungBundle],
    t0: f64,
    dt: f64,
    v: &Potential,
    c: &Constants,
    g: &Grid,
) -> Result<ResidualNorm> {
    check_frames(frames, dt)?;
    let mut per = Vec::new();
    let mut cov = Vec::new();
    for n in 1..frames.len() - 1 {
        let b = &frames[n];
        let u = osmotic_fields(b, c, g)?.quantum_potential;
        let vs = v.sample(g, t0 + n as f64 * dt, c)?;
        let st = action_rate(&frames[n - 1], &frames[n + 1], dt, c.hbar());
        let res: RealField =
            (0..g.n()).map(|k| st[k] + b.grad_s()[k].powi(2) / (2.0 * c.mass()) + vs[k] + u[k]).collect();
        let mask = stencil_mask(frames, n);
        per.push(fields::masked_l2(&res, &mask, g));
        cov.push(mask.coverage());
    }
    Ok(summarize(per, cov))
}

/// `‖m(∂v/∂t + v∇v) + ∇(V + U)‖₂` on the mask, with the material derivative
/// taken on the Eulerian grid.
pub fn quantum_force_residual(
    frames: &[MadelungBundle],
    t0: f64,
    dt: f64,
    v: &Potential,
    c: &Constants,
    g: &Grid,
) -> Result<ResidualNorm> {
    check_frames(frames, dt)?;
    let mut per = Vec::new();
    let mut cov = Vec::new();
    let m = c.mass();
    for n in 1..frames.len() - 1 {
        let b = &frames[n];
        let gu = grad_quantum_potential(b, c, g)?;
        let gv = v.gradient_sample(g, t0 + n as f64 * dt, c)?;
        let res: RealField = (0..g.n())
            .map(|k| {
                let dvdt = (frames[n + 1].grad_s()[k] - frames[n - 1].grad_s()[k]) / (2.0 * dt * m);
                let vel = b.grad_s()[k] / m;
                let adv = vel * b.lap_s()[k] / m;
                m * (dvdt + adv) + gv[k] + gu[k]
            })
            .collect();
        let mask = stencil_mask(frames, n);
        per.push(fields::masked_l2(&res, &mask, g));
        cov.push(mask.coverage());
    }
    Ok(summarize(per, cov))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CrossMomentum {
    /// `∫P ∇S·δp dx` over the mask.
    pub direct: f64,
    /// `−(ℏ/2)∫∇S·∇P dx`.
    pub substituted: f64,
}

pub fn cross_momentum_term(b: &MadelungBundle, hydro: &HydroFields, c: &Constants, g: &Grid) -> Result<CrossMomentum> {
    g.check(&hydro.delta_p)?;
    let m = b.mask();
    let f: RealField =
        (0..g.n()).map(|j| if m.get(j) { b.p()[j] * b.grad_s()[j] * hydro.delta_p[j] } else { 0.0 }).collect();
    let dp = fields::gradient(b.p(), g)?;
    let h: RealField = (0..g.n()).map(|j| -0.5 * c.hbar() * b.grad_s()[j] * dp[j]).collect();
    Ok(CrossMomentum { direct: fields::integrate(&f, g)?, substituted: fields::integrate(&h, g)? })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossMomentumAverage {
    pub mean: f64,
    pub max_instantaneous: f64,
    pub samples: usize,
}

/// Time average of the cross-momentum integral over frames spanning exactly one
/// period (endpoint excluded), using the rectangle rule.
pub fn cross_momentum_time_average(frames: &[MadelungBundle], c: &Constants, g: &Grid) -> Result<CrossMomentumAverage> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    let mut sum = 0.0;
    let mut peak = 0.0_f64;
    for b in frames {
        let h = osmotic_fields(b, c, g)?;
        let v = cross_momentum_term(b, &h, c, g)?.direct;
        sum += v;
        peak = peak.max(v.abs());
    }
    Ok(CrossMomentumAverage { mean: sum / frames.len() as f64, max_instantaneous: peak, samples: frames.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentumIdentity {
    /// `ℏ²|∇ψ/ψ|²`.
    pub lhs: RealField,
    /// `(ℏ∇R/R)² + (∇S)²`.
    pub rhs: RealField,
    /// Pointwise `|lhs − rhs|/max(|lhs|, |rhs|, (2πℏ/L)²)` on the mask.
    pub max_relative_difference: f64,
}

pub fn total_momentum_identity(
    psi: &[num_complex::Complex64],
    b: &MadelungBundle,
    c: &Constants,
    g: &Grid,
) -> Result<MomentumIdentity> {
    g.check(psi)?;
    let hb = c.hbar();
    let dpsi = fields::gradient_complex(psi, g)?;
    let rl = amplitude_log_derivatives(b, g, 1)?;
    let m = b.mask();
    let mut lhs = vec![0.0; g.n()];
    let mut rhs = vec![0.0; g.n()];
    // both sides vanish where ψ is locally real and flat; measure against the
    // squared momentum of the longest mode there
    let floor = (2.0 * std::f64::consts::PI * hb / g.length()).powi(2);
    let mut worst = 0.0_f64;
    for j in 0..g.n() {
        if m.get(j) {
            lhs[j] = hb * hb * (dpsi[j] / psi[j]).norm_sqr();
            rhs[j] = (hb * rl[0][j]).powi(2) + b.grad_s()[j].powi(2);
            let scale = lhs[j].abs().max(rhs[j].abs()).max(floor);
            worst = worst.max((lhs[j] - rhs[j]).abs() / scale);
        }
    }
    Ok(MomentumIdentity { lhs, rhs, max_relative_difference: worst })
}

/// Paths with positions recorded at chosen times plus per-path accumulators.
/// Bohmian ensembles leave the accumulators at zero.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryEnsemble {
    pub times: Vec<f64>,
    /// `snapshots[k][i]` is the position of path `i` at `times[k]`.
    pub snapshots: Vec<Vec<f64>>,
    pub work: Vec<f64>,
    pub heat: Vec<f64>,
    pub energy_change: Vec<f64>,
    /// Paths that left a Dirichlet domain; their data are frozen at exit.
    pub excluded: Vec<bool>,
}

impl TrajectoryEnsemble {
    pub fn n_paths(&self) -> usize {
        self.excluded.len()
    }
    pub fn n_excluded(&self) -> usize {
        self.excluded.iter().filter(|&&e| e).count()
    }
    pub fn initial(&self) -> &[f64] {
        &self.snapshots[0]
    }
    pub fn last(&self) -> &[f64] {
        self.snapshots.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
    /// Final positions of paths that stayed inside the domain.
    pub fn retained_final(&self) -> Vec<f64> {
        self.last().iter().zip(&self.excluded).filter(|(_, e)| !**e).map(|(x, _)| *x).collect()
    }
}

/// Density cells for piecewise-linear inverse-CDF sampling.
struct Cdf {
    x0: Vec<f64>,
    p0: Vec<f64>,
    p1: Vec<f64>,
    h: f64,
    cum: Vec<f64>,
}

impl Cdf {
    fn new(p: &[f64], g: &Grid) -> Result<Self> {
        g.check(p)?;
        if p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument("density must be finite and non-negative".into()));
        }
        let n = g.n();
        let cells = if g.is_periodic() { n } else { n - 1 };
        let h = g.spacing();
        let mut x0 = Vec::with_capacity(cells);
        let mut p0 = Vec::with_capacity(cells);
        let mut p1 = Vec::with_capacity(cells);
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        for j in 0..cells {
            let a = p[j];
            let b = p[(j + 1) % n];
            x0.push(g.x(j));
            p0.push(a);
            p1.push(b);
            cum.push(cum[j] + 0.5 * h * (a + b));
        }
        let total = *cum.last().unwrap_or(&0.0);
        if !(total > 0.0) {
            return Err(Error::Degenerate("density has zero mass".into()));
        }
        Ok(Self { x0, p0, p1, h, cum })
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position at cumulative fraction `q ∈ [0, 1)`.
    fn quantile(&self, q: f64) -> f64 {
        let target = q * self.total();
        let j = match self.cum.binary_search_by(|c| c.total_cmp(&target)) {
            Ok(i) => i.min(self.x0.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.x0.len() - 1),
        };
        let rem = target - self.cum[j];
        let (a, b, h) = (self.p0[j], self.p1[j], self.h);
        let slope = (b - a) / h;
        // solve a s + slope s²/2 = rem for s ∈ [0, h]
        let s = if slope.abs() < 1e-300 * h || (slope * rem).abs() < 1e-14 * a * a {
            if a > 0.0 { rem / a } else { 0.0 }
        } else {
            let disc = (a * a + 2.0 * slope * rem).max(0.0);
            2.0 * rem / (a + disc.sqrt())
        };
        self.x0[j] + s.clamp(0.0, h)
    }

    /// Cumulative fraction at `x`.
    fn cdf(&self, x: f64) -> f64 {
        let j = ((x - self.x0[0]) / self.h).floor();
        if j < 0.0 {
            return 0.0;
        }
        let j = j as usize;
        if j >= self.x0.len() {
            return 1.0;
        }
        let s = (x - self.x0[j]).clamp(0.0, self.h);
        let (a, b) = (self.p0[j], self.p1[j]);
        (self.cum[j] + a * s + 0.5 * (b - a) / self.h * s * s) / self.total()
    }
}

/// Draws `count` positions from `P` by inverse-CDF sampling of its piecewise-linear
/// interpolant.
pub fn sample_trajectories(p0: &[f64], count: usize, seed: u64, g: &Grid) -> Result<Vec<f64>> {
    let cdf = Cdf::new(p0, g)?;
    let mut r = rng::stream(seed, "bohmian-initial", 0);
    Ok((0..count).map(|_| cdf.quantile(r.random::<f64>())).collect())
}

/// Integrates `dx/dt = v(x, t)` by RK4 over velocity frames spaced `frame_dt`
/// apart. Each RK4 step spans two frame intervals so the midpoint falls on a
/// frame; the number of frames must therefore be odd. Positions are recorded
/// every `record_every` steps and at the end.
pub fn integrate_trajectories(
    positions: &[f64],
    v_frames: &[RealField],
    frame_dt: f64,
    record_every: usize,
    g: &Grid,
) -> Result<TrajectoryEnsemble> {
    advect(positions, v_frames, None, frame_dt, record_every, g).map(|(e, _)| e)
}

/// As [`integrate_trajectories`], also accumulating `∫Λ dt` along each path for
/// the supplied compression-factor frames.
pub fn advect(
    positions: &[f64],
    v_frames: &[RealField],
    lambda_frames: Option<&[RealField]>,
    frame_dt: f64,
    record_every: usize,
    g: &Grid,
) -> Result<(TrajectoryEnsemble, Vec<f64>)> {
    if v_frames.len() < 3 || v_frames.len() % 2 == 0 {
        return Err(Error::InvalidArgument(format!("need an odd number (≥ 3) of frames, got {}", v_frames.len())));
    }
    if let Some(l) = lambda_frames {
        if l.len() != v_frames.len() {
            return Err(Error::InvalidArgument("compression frames must match velocity frames".into()));
        }
    }
    for f in v_frames {
        g.check(f)?;
    }
    let record_every = record_every.max(1);
    let steps = (v_frames.len() - 1) / 2;
    let big = 2.0 * frame_dt;
    let sample = |frames: &[RealField], k: usize, x: f64| fields::interpolate_cubic(&frames[k], g, x);
    let deriv = |k: usize, x: f64| -> Option<(f64, f64)> {
        let v = sample(v_frames, k, x)?;
        let l = match lambda_frames {
            Some(lf) => sample(lf, k, x)?,
            None => 0.0,
        };
        Some((v, l))
    };
    let per_path: Vec<(Vec<f64>, f64, bool)> = positions
        .par_iter()
        .map(|&x0| {
            let mut x = x0;
            let mut acc = 0.0;
            let mut gone = false;
            let mut rec = vec![x0];
            for s in 0..steps {
                if !gone {
                    let k = 2 * s;
                    let step = (|| {
                        let (v1, l1) = deriv(k, x)?;
                        let (v2, l2) = deriv(k + 1, x + 0.5 * big * v1)?;
                        let (v3, l3) = deriv(k + 1, x + 0.5 * big * v2)?;
                        let (v4, l4) = deriv(k + 2, x + big * v3)?;
                        Some((big / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4), big / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)))
                    })();
                    match step {
                        Some((dx, dl)) => {
                            x += dx;
                            acc += dl;
                            if !g.is_periodic() && fields::interpolate_cubic(&v_frames[k + 2], g, x).is_none() {
                                gone = true;
                            }
                        }
                        None => gone = true,
                    }
                }
                if (s + 1) % record_every == 0 || s + 1 == steps {
                    rec.push(x);
                }
            }
            (rec, acc, gone)
        })
        .collect();
    let mut times = vec![0.0];
    for s in 0..steps {
        if (s + 1) % record_every == 0 || s + 1 == steps {
            times.push((s + 1) as f64 * big);
        }
    }
    let npaths = positions.len();
    let mut snapshots = vec![Vec::with_capacity(npaths); times.len()];
    let mut acc = Vec::with_capacity(npaths);
    let mut excluded = Vec::with_capacity(npaths);
    for (rec, a, gone) in per_path {
        for (k, x) in rec.into_iter().enumerate() {
            snapshots[k].push(x);
        }
        acc.push(a);
        excluded.push(gone);
    }
    let zeros = vec![0.0; npaths];
    Ok((
        TrajectoryEnsemble { times, snapshots, work: zeros.clone(), heat: zeros.clone(), energy_change: zeros, excluded },
        acc,
    ))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EquivarianceSummary {
    pub tv_distance: f64,
    pub ks_statistic: f64,
    /// Asymptotic Kolmogorov p-value.
    pub ks_p_value: f64,
    pub n_samples: usize,
    pub n_excluded: usize,
}

/// Total-variation distance between the sample histogram on `nbins` equal bins
/// over `[lo, hi]` (plus one overflow bin) and the mass of `P` in those bins.
pub fn histogram_tv(samples: &[f64], p: &[f64], g: &Grid, lo: f64, hi: f64, nbins: usize) -> Result<f64> {
    if !(hi > lo) || nbins == 0 || samples.is_empty() {
        return Err(Error::InvalidArgument("histogram needs lo < hi, bins and samples".into()));
    }
    let cdf = Cdf::new(p, g)?;
    let w = (hi - lo) / nbins as f64;
    let mut counts = vec![0usize; nbins + 1];
    let wrap = |x: f64| -> f64 {
        if g.is_periodic() {
            let (a, _) = g.bounds();
            a + (x - a).rem_euclid(g.length())
        } else {
            x
        }
    };
    for &x in samples {
        let x = wrap(x);
        if x >= lo && x < hi {
            counts[(((x - lo) / w) as usize).min(nbins - 1)] += 1;
        } else {
            counts[nbins] += 1;
        }
    }
    let nt = samples.len() as f64;
    let mut tv = 0.0;
    let mut inside = 0.0;
    for (b, &n) in counts.iter().enumerate().take(nbins) {
        let mass = cdf.cdf(lo + (b + 1) as f64 * w) - cdf.cdf(lo + b as f64 * w);
        inside += mass;
        tv += (n as f64 / nt - mass).abs();
    }
    tv += (counts[nbins] as f64 / nt - (1.0 - inside)).abs();
    Ok(0.5 * tv)
}

/// Kolmogorov–Smirnov statistic of the samples against the piecewise-linear `P`.
pub fn ks_statistic(samples: &[f64], p: &[f64], g: &Grid) -> Result<(f64, f64)> {
    let cdf = Cdf::new(p, g)?;
    let mut s: Vec<f64> = samples
        .iter()
        .map(|&x| if g.is_periodic() { g.origin() + (x - g.origin()).rem_euclid(g.length()) } else { x })
        .collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf.cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok((d, kolmogorov_p(d * n.sqrt())))
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_p(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let t = 2.0 * (if k % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += t;
        if t.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

pub fn equivariance_summary(ens: &TrajectoryEnsemble, p: &[f64], g: &Grid, lo: f64, hi: f64, nbins: usize) -> Result<EquivarianceSummary> {
    let kept = ens.retained_final();
    let tv = histogram_tv(&kept, p, g, lo, hi, nbins)?;
    let (ks, pv) = ks_statistic(&kept, p, g)?;
    Ok(EquivarianceSummary { tv_distance: tv, ks_statistic: ks, ks_p_value: pv, n_samples: kept.len(), n_excluded: ens.n_excluded() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{decompose, make_grid, Boundary, ComplexField};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn gaussian(g: &Grid, sigma: f64, p0: f64) -> ComplexField {
        let a = (2.0 * PI * sigma * sigma).powf(-0.25);
        g.xs().iter().map(|x| Complex64::from_polar(a * (-x * x / (4.0 * sigma * sigma)).exp(), p0 * x)).collect()
    }

    #[test]
    fn harmonic_ground_quantum_potential() {
        let g = make_grid(512, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let psi: ComplexField = g.xs().iter().map(|x| Complex64::new((-x * x / 2.0).exp() / PI.powf(0.25), 0.0)).collect();
        let b = decompose(&psi, &c, &g).unwrap();
        let q = quantum_potential(&b, &c, &g).unwrap();
        let j0 = g.n() / 2;
        assert!(g.x(j0).abs() < 1e-12);
        assert!((q.r_form[j0] - 0.5).abs() < 1e-6);
        assert!(q.max_relative_difference < 1e-6, "{}", q.max_relative_difference);
    }

    #[test]
    fn gaussian_osmotic_velocity() {
        let g = make_grid(512, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let sigma = 0.8;
        let b = decompose(&gaussian(&g, sigma, 0.0), &c, &g).unwrap();
        let h = osmotic_fields(&b, &c, &g).unwrap();
        for j in 0..g.n() {
            if b.mask().get(j) {
                let x = g.x(j);
                assert!((h.u[j] - x / (2.0 * sigma * sigma)).abs() < 1e-8, "{x}");
                assert!((h.k_u[j] - h.delta_p[j] / c.hbar()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn boosted_packet_cross_momentum_vanishes() {
        let g = make_grid(512, 30.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let b = decompose(&gaussian(&g, 1.0, 0.7), &c, &g).unwrap();
        let h = osmotic_fields(&b, &c, &g).unwrap();
        let x = cross_momentum_term(&b, &h, &c, &g).unwrap();
        assert!(x.direct.abs() < 1e-9 && x.substituted.abs() < 1e-9);
    }

    #[test]
    fn sampling_matches_density() {
        let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
        let p: Vec<f64> = g.xs().iter().map(|x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt()).collect();
        let xs = sample_trajectories(&p, 20000, 3, &g).unwrap();
        let (d, pv) = ks_statistic(&xs, &p, &g).unwrap();
        assert!(pv > 0.01, "D = {d}, p = {pv}");
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03);
    }

    #[test]
    fn uniform_flow_translates_paths() {
        let g = make_grid(64, 10.0, Boundary::Periodic).unwrap();
        let frames = vec![vec![0.5; 64]; 21];
        let e = integrate_trajectories(&[0.0, 1.0], &frames, 0.1, 1, &g).unwrap();
        assert!((e.last()[0] - 1.0).abs() < 1e-12 && (e.last()[1] - 2.0).abs() < 1e-12);
        assert!(integrate_trajectories(&[0.0], &frames[..20], 0.1, 1, &g).is_err());
    }
}
