//! Thermodynamic bookkeeping of the sub-quantum picture: heat and action
//! fluctuation, thermostat temperature, the Boltzmann-type density ratio, the
//! adiabatic invariant and work integrals.

use crate::error::{Error, Result};
use crate::fields::{self, ComplexField, Constants, Grid, MadelungBundle, Mask, RealField, NODE_FLOOR};
use crate::madelung::{self, TrajectoryEnsemble};
use crate::schrodinger::{self, EvolutionSettings, Potential};
use serde::Serialize;

/// `kT = ℏω`.
pub fn thermostat_kt(hbar: f64, omega: f64) -> Result<f64> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::InvalidConstants(format!("hbar must be positive, got {hbar}")));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidConstants(format!("degenerate oscillator: omega = {omega}")));
    }
    Ok(hbar * omega)
}

/// Points where `P ≥ floor²·max P`, i.e. where `R` clears the node floor.
pub fn active_mask(p: &[f64]) -> Mask {
    let r: Vec<f64> = p.iter().map(|v| v.max(0.0).sqrt()).collect();
    Mask::from_amplitude(&r)
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionFluctuation {
    /// `δS` on the mask, zero elsewhere.
    pub values: RealField,
    #[serde(skip)]
    pub mask: Mask,
    /// Additive constant `C` in `δS = −(ℏ/2) ln P + C`.
    pub gauge: f64,
}

fn check_density(p: &[f64], mask: &Mask, g: &Grid) -> Result<()> {
    g.check(p)?;
    g.check(mask.flags())?;
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    let floor = NODE_FLOOR * NODE_FLOOR * pmax;
    for j in 0..g.n() {
        if mask.get(j) && !(p[j] >= floor && p[j] > 0.0) {
            return Err(Error::Degenerate(format!("density {} below node floor at index {j}", p[j])));
        }
    }
    if mask.count() == 0 {
        return Err(Error::Degenerate("empty active mask".into()));
    }
    Ok(())
}

/// `δS = −(ℏ/2) ln P + C` with `C` chosen so that `∫P δS dx = 0` over the mask.
/// Without a mask the active mask of `P` is used.
pub fn delta_s_field(p: &[f64], mask: Option<&Mask>, c: &Constants, g: &Grid) -> Result<ActionFluctuation> {
    let mask = mask.cloned().unwrap_or_else(|| active_mask(p));
    check_density(p, &mask, g)?;
    let w = fields::quadrature_weights(g);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..g.n() {
        if mask.get(j) {
            num += w[j] * p[j] * p[j].ln();
            den += w[j] * p[j];
        }
    }
    let gauge = 0.5 * c.hbar() * num / den;
    delta_s_in_gauge(p, &mask, gauge, c, g)
}

/// `δS` with a prescribed additive constant, e.g. one fixed on a reference frame.
pub fn delta_s_in_gauge(p: &[f64], mask: &Mask, gauge: f64, c: &Constants, g: &Grid) -> Result<ActionFluctuation> {
    check_density(p, mask, g)?;
    let values = (0..g.n()).map(|j| if mask.get(j) { -0.5 * c.hbar() * p[j].ln() + gauge } else { 0.0 }).collect();
    Ok(ActionFluctuation { values, mask: mask.clone(), gauge })
}

/// `δp = ∇δS` on the mask.
pub fn delta_p_from_action(ds: &ActionFluctuation, g: &Grid) -> Result<RealField> {
    fields::masked_derivative(&ds.values, &ds.mask, g, 1)
}

/// `δp = −(ℏ/2)∇P/P`, evaluated as `−ℏ∇R/R` with `R = √P` to keep the quotient
/// accurate in low-density tails.
pub fn delta_p_direct(p: &[f64], mask: &Mask, c: &Constants, g: &Grid) -> Result<RealField> {
    g.check(p)?;
    let r: RealField = p.iter().map(|v| v.max(0.0).sqrt()).collect();
    let dr = fields::piecewise_derivative(&r, mask, g, 1)?;
    Ok((0..g.n()).map(|j| if mask.get(j) { -c.hbar() * dr[j] / r[j] } else { 0.0 }).collect())
}

/// Heat applied between a reference density and a later one.
#[derive(Clone, Debug, Serialize)]
pub struct HeatAccount {
    /// `δS(t) − δS(0)` on the common mask.
    pub delta_s: RealField,
    /// `2ω·delta_s`.
    pub delta_q: RealField,
    pub kt: f64,
    pub omega: f64,
    #[serde(skip)]
    pub mask: Mask,
}

impl HeatAccount {
    /// The `δS` gauge is fixed once on `p0` and reused for `pt`.
    pub fn between(p0: &[f64], pt: &[f64], c: &Constants, g: &Grid) -> Result<Self> {
        let mask = active_mask(p0).and(&active_mask(pt));
        let s0 = delta_s_field(p0, Some(&mask), c, g)?;
        let st = delta_s_in_gauge(pt, &mask, s0.gauge, c, g)?;
        let omega = c.omega();
        let delta_s: RealField = st.values.iter().zip(&s0.values).map(|(a, b)| a - b).collect();
        let delta_q = delta_s.iter().map(|s| 2.0 * omega * s).collect();
        Ok(Self { delta_s, delta_q, kt: thermostat_kt(c.hbar(), omega)?, omega, mask })
    }

    /// Largest violation of `ΔQ = 2ωδS` and `kT = ℏω`.
    pub fn invariant_error(&self, c: &Constants) -> f64 {
        let q = self
            .delta_q
            .iter()
            .zip(&self.delta_s)
            .map(|(q, s)| (q - 2.0 * self.omega * s).abs())
            .fold(0.0, f64::max);
        q.max((self.kt - c.hbar() * self.omega).abs())
    }
}

/// `E_tot = ℏω + δp²/2m`.
pub fn total_energy(delta_p_rms: f64, c: &Constants) -> f64 {
    c.hbar() * c.omega() + delta_p_rms * delta_p_rms / (2.0 * c.mass())
}

/// `∫P δp²/2m dx`, the fluctuation part of the mean kinetic energy.
pub fn fluctuation_energy(b: &MadelungBundle, c: &Constants, g: &Grid) -> Result<f64> {
    let h = madelung::osmotic_fields(b, c, g)?;
    let f: RealField = (0..g.n())
        .map(|j| if h.mask.get(j) { b.p()[j] * h.delta_p[j].powi(2) / (2.0 * c.mass()) } else { 0.0 })
        .collect();
    fields::integrate(&f, g)
}

/// `‖ln(P_t/P_0) + (ΔQ + ΔW̄)/kT‖₂` over the mask; `work = None` is the
/// conservative case.
pub fn boltzmann_ratio_check(
    p_t: &[f64],
    p_0: &[f64],
    dq: &[f64],
    kt: f64,
    work: Option<f64>,
    mask: &Mask,
    g: &Grid,
) -> Result<f64> {
    g.check(p_t)?;
    g.check(p_0)?;
    g.check(dq)?;
    if !(kt > 0.0) {
        return Err(Error::InvalidArgument("kT must be positive".into()));
    }
    let w = work.unwrap_or(0.0);
    let mut res = vec![0.0; g.n()];
    for j in 0..g.n() {
        if mask.get(j) {
            if !(p_t[j] > 0.0 && p_0[j] > 0.0) {
                return Err(Error::Degenerate(format!("density vanishes at index {j}")));
            }
            res[j] = (p_t[j] / p_0[j]).ln() + (dq[j] + w) / kt;
        }
    }
    Ok(fields::masked_l2(&res, mask, g))
}

/// Self-consistency of the `δS → δp → P_t/P_0` chain for a pair of densities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainCheck {
    /// Largest `|∇δS − (−ℏ/2)∇P/P|` on the eroded mask of `P_t`, relative to `max |δp|`.
    pub gradient_mismatch: f64,
    /// Boltzmann-ratio residual with the chain's own heat.
    pub boltzmann_residual: f64,
    /// Largest `|exp(−2[δS(t) − δS(0)]/ℏ) − P_t/P_0|/(P_t/P_0)`.
    pub ratio_mismatch: f64,
}

pub fn thermodynamic_chain(p0: &[f64], pt: &[f64], c: &Constants, g: &Grid) -> Result<ChainCheck> {
    let acct = HeatAccount::between(p0, pt, c, g)?;
    let boltzmann_residual = boltzmann_ratio_check(pt, p0, &acct.delta_q, acct.kt, None, &acct.mask, g)?;
    let mut ratio_mismatch = 0.0_f64;
    for j in 0..g.n() {
        if acct.mask.get(j) {
            let want = pt[j] / p0[j];
            let got = (-2.0 * acct.delta_s[j] / c.hbar()).exp();
            ratio_mismatch = ratio_mismatch.max((got - want).abs() / want);
        }
    }
    let st = delta_s_field(pt, None, c, g)?;
    let grad = delta_p_from_action(&st, g)?;
    let direct = delta_p_direct(pt, &st.mask, c, g)?;
    let inner = st.mask.eroded(8, g.is_periodic());
    let scale = direct.iter().enumerate().filter(|(j, _)| inner.get(*j)).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let gradient_mismatch = (0..g.n())
        .filter(|&j| inner.get(j))
        .map(|j| (grad[j] - direct[j]).abs())
        .fold(0.0, f64::max)
        / scale.max(f64::MIN_POSITIVE);
    Ok(ChainCheck { gradient_mismatch, boltzmann_residual, ratio_mismatch })
}

/// `|I(T) − I(0)|/I(0)` with `I = E/ω`.
pub fn adiabatic_invariant_residual(e_series: &[f64], omega_series: &[f64]) -> Result<f64> {
    if e_series.len() != omega_series.len() {
        return Err(Error::LengthMismatch { expected: e_series.len(), got: omega_series.len() });
    }
    if e_series.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if omega_series.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument("frequencies must be positive".into()));
    }
    let i0 = e_series[0] / omega_series[0];
    let i1 = e_series[e_series.len() - 1] / omega_series[omega_series.len() - 1];
    if i0 == 0.0 {
        return Err(Error::Degenerate("zero initial action".into()));
    }
    Ok(((i1 - i0) / i0).abs())
}

/// Both sides of `ΔW = dĒ − 2ωδS = −δ_tE·dω/ω`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NonconservativeWork {
    /// `dĒ − 2ωδS`.
    pub energy_route: f64,
    /// `−δ_tE·dω/ω`.
    pub ump_route: f64,
}

impl NonconservativeWork {
    pub fn relative_difference(&self) -> f64 {
        let scale = self.energy_route.abs().max(self.ump_route.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.energy_route - self.ump_route).abs() / scale
        }
    }
}

pub fn nonconservative_work(de_bar: f64, omega: f64, delta_s: f64, delta_te: f64, d_omega: f64) -> Result<NonconservativeWork> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument("omega must be positive".into()));
    }
    Ok(NonconservativeWork { energy_route: de_bar - 2.0 * omega * delta_s, ump_route: -delta_te * d_omega / omega })
}

/// A ground state carried through a linear frequency ramp.
#[derive(Clone, Debug, Serialize)]
pub struct RampRun {
    pub ramp_time: f64,
    pub times: Vec<f64>,
    pub omegas: Vec<f64>,
    pub energies: Vec<f64>,
    /// `⟨ω ∂H/∂ω⟩` at each sample.
    pub virial: Vec<f64>,
    /// `|I(T) − I(0)|/I(0)`.
    pub invariant_drift: f64,
    /// Step sums of both routes of the nonconservative work.
    pub work: NonconservativeWork,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSettings {
    pub omega_start: f64,
    pub omega_end: f64,
    pub ramp_time: f64,
    pub dt: f64,
    /// Samples kept per unit time.
    pub samples_per_time: f64,
}

/// Evolves the discrete ground state of `ω_start` through the ramp and measures
/// the adiabatic invariant and the two work routes.
///
/// Per sample interval, the energy route adds `ΔE − ω̄ ΔI` (with `2δS = ΔI`)
/// and the UMP route adds `−δ_tE Δω/ω̄` with `δ_tE = −⟨ω∂H/∂ω⟩`, both at the
/// interval midpoint.
pub fn ramp_study(rs: &RampSettings, c: &Constants, g: &Grid) -> Result<RampRun> {
    if !(rs.dt > 0.0 && rs.ramp_time > 0.0 && rs.samples_per_time > 0.0) {
        return Err(Error::InvalidArgument("ramp needs positive dt, duration and sampling".into()));
    }
    let pot = Potential::RampedHarmonic { omega_start: rs.omega_start, omega_end: rs.omega_end, ramp_time: rs.ramp_time };
    let n_steps = (rs.ramp_time / rs.dt).round() as usize;
    let dt = rs.ramp_time / n_steps as f64;
    let every = ((1.0 / (rs.samples_per_time * dt)).round() as usize).max(1);
    let ground = schrodinger::diagonalize_reference(&pot, 0.0, 1, c, g)?;
    let psi0: ComplexField = ground[0].state.iter().map(|&v| num_complex::Complex64::new(v, 0.0)).collect();
    let settings = EvolutionSettings::new(dt, n_steps).every(every);
    let ev = schrodinger::evolve(&psi0, &pot, &settings, c, g)?;
    let mut omegas = Vec::with_capacity(ev.times.len());
    let mut energies = Vec::with_capacity(ev.times.len());
    let mut virial = Vec::with_capacity(ev.times.len());
    for (t, psi) in ev.times.iter().zip(&ev.frames) {
        let w = pot.omega_at(*t).unwrap_or(rs.omega_end);
        let dh = pot.omega_derivative(g, *t, c)?;
        let dens: RealField = psi.iter().zip(&dh).map(|(z, d)| z.norm_sqr() * w * d).collect();
        omegas.push(w);
        energies.push(schrodinger::hamiltonian_energy(psi, &pot, *t, c, g)?);
        virial.push(fields::integrate(&dens, g)?);
    }
    let mut energy_route = 0.0;
    let mut ump_route = 0.0;
    for k in 0..ev.times.len() - 1 {
        let wm = 0.5 * (omegas[k] + omegas[k + 1]);
        let di = energies[k + 1] / omegas[k + 1] - energies[k] / omegas[k];
        let dte = -0.5 * (virial[k] + virial[k + 1]);
        let step = nonconservative_work(energies[k + 1] - energies[k], wm, 0.5 * di, dte, omegas[k + 1] - omegas[k])?;
        energy_route += step.energy_route;
        ump_route += step.ump_route;
    }
    let invariant_drift = adiabatic_invariant_residual(&energies, &omegas)?;
    Ok(RampRun {
        ramp_time: rs.ramp_time,
        times: ev.times,
        omegas,
        energies,
        virial,
        invariant_drift,
        work: NonconservativeWork { energy_route, ump_route },
    })
}

/// `Λ = ∇·v` on the valid runs of `mask`.
pub fn phase_compression(v: &[f64], mask: &Mask, g: &Grid) -> Result<RealField> {
    fields::masked_derivative(v, mask, g, 1)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DensityReconstruction {
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
    pub n_paths: usize,
}

/// Advects `starts` with `v = ∇S/m` from the frames and compares
/// `P(0, x₀)·exp(−∫Λ dt)` with the last frame's density at the path's end.
/// `Λ = ∇²S/m` comes from the bundle. Frames are `frame_dt` apart and must be
/// odd in number.
pub fn density_along_paths(
    frames: &[MadelungBundle],
    frame_dt: f64,
    starts: &[f64],
    c: &Constants,
    g: &Grid,
) -> Result<DensityReconstruction> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no start points".into()));
    }
    let mut vs = Vec::with_capacity(frames.len());
    let mut ls = Vec::with_capacity(frames.len());
    for b in frames {
        vs.push(b.grad_s().iter().map(|s| s / c.mass()).collect::<RealField>());
        ls.push(b.lap_s().iter().map(|s| s / c.mass()).collect::<RealField>());
    }
    let (ens, integral) = madelung::advect(starts, &vs, Some(&ls), frame_dt, usize::MAX, g)?;
    let p0 = frames[0].p();
    let pt = frames[frames.len() - 1].p();
    let mut worst = 0.0_f64;
    let mut sum = 0.0;
    let mut count = 0;
    for (i, (&x0, &xt)) in ens.initial().iter().zip(ens.last()).enumerate() {
        if ens.excluded[i] {
            continue;
        }
        let (Some(a), Some(b)) = (fields::interpolate_cubic(p0, g, x0), fields::interpolate_cubic(pt, g, xt)) else {
            continue;
        };
        let predicted = a * (-integral[i]).exp();
        let e = (predicted - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(e);
        sum += e;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Degenerate("every path left the domain".into()));
    }
    Ok(DensityReconstruction { max_relative_error: worst, mean_relative_error: sum / count as f64, n_paths: count })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WorkIntegral {
    /// `−∫ds (∫J dx)(∫P F_e dx)`: mean flux times mean force.
    pub factorised: f64,
    /// `−∫ds ∫J·F_e dx`.
    pub pointwise: f64,
}

/// Work done by `F_e` on a flow with density frames `p` and currents `j`,
/// using the trapezoid rule across frames `dt` apart.
pub fn work_integral(p: &[RealField], j: &[RealField], f_e: &[RealField], dt: f64, g: &Grid) -> Result<WorkIntegral> {
    if p.len() != j.len() || p.len() != f_e.len() {
        return Err(Error::LengthMismatch { expected: p.len(), got: j.len().min(f_e.len()) });
    }
    if p.len() < 2 {
        return Err(Error::InvalidArgument("need at least two frames".into()));
    }
    let mut fact = Vec::with_capacity(p.len());
    let mut point = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let flux = fields::integrate(&j[k], g)?;
        let pf: RealField = p[k].iter().zip(&f_e[k]).map(|(a, b)| a * b).collect();
        let jf: RealField = j[k].iter().zip(&f_e[k]).map(|(a, b)| a * b).collect();
        fact.push(-flux * fields::integrate(&pf, g)?);
        point.push(-fields::integrate(&jf, g)?);
    }
    let trap = |v: &[f64]| dt * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]));
    Ok(WorkIntegral { factorised: trap(&fact), pointwise: trap(&point) })
}

/// [`work_integral`] for solver frames with `J = P∇S/m` and `F_e = −∇U`.
pub fn conservative_work(frames: &[MadelungBundle], dt: f64, c: &Constants, g: &Grid) -> Result<WorkIntegral> {
    let mut p = Vec::with_capacity(frames.len());
    let mut j = Vec::with_capacity(frames.len());
    let mut f = Vec::with_capacity(frames.len());
    for b in frames {
        let gu = madelung::grad_quantum_potential(b, c, g)?;
        p.push(b.p().to_vec());
        j.push(b.p().iter().zip(b.grad_s()).map(|(p, s)| p * s / c.mass()).collect());
        f.push(gu.iter().map(|v| -v).collect());
    }
    work_integral(&p, &j, &f, dt, g)
}

/// Per-path dissipation bookkeeping of a thermostatted trajectory.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DissipationRecord {
    /// Integrated dissipation `ΔW/kT`.
    pub omega_bar_t: f64,
    pub delta_h: f64,
    /// Heat absorbed from the reservoir.
    pub delta_q: f64,
    pub delta_w: f64,
    pub duration: f64,
}

impl DissipationRecord {
    pub fn new(delta_h: f64, delta_q: f64, delta_w: f64, duration: f64, kt: f64) -> Result<Self> {
        if !(kt > 0.0) {
            return Err(Error::InvalidArgument("kT must be positive".into()));
        }
        Ok(Self { omega_bar_t: delta_w / kt, delta_h, delta_q, delta_w, duration })
    }

    /// `|(ΔH − ΔQ)/kT − Ω̄_t|`.
    pub fn first_law_gap(&self, kt: f64) -> f64 {
        ((self.delta_h - self.delta_q) / kt - self.omega_bar_t).abs()
    }
}

pub fn dissipation_records(ens: &TrajectoryEnsemble, kt: f64) -> Result<Vec<DissipationRecord>> {
    let duration = ens.times.last().copied().unwrap_or(0.0) - ens.times.first().copied().unwrap_or(0.0);
    (0..ens.n_paths())
        .map(|i| DissipationRecord::new(ens.energy_change[i], ens.heat[i], ens.work[i], duration, kt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_grid, Boundary};
    use std::f64::consts::PI;

    fn gauss(g: &Grid, s: f64) -> RealField {
        g.xs().iter().map(|x| (-x * x / (2.0 * s * s)).exp() / (2.0 * PI * s * s).sqrt()).collect()
    }

    #[test]
    fn kt_examples() {
        assert_eq!(thermostat_kt(1.0, 1.0).unwrap(), 1.0);
        assert!((thermostat_kt(1.0546e-34, 1e15).unwrap() - 1.0546e-19).abs() < 1e-30);
        assert!(thermostat_kt(1.0, 0.0).is_err());
    }

    #[test]
    fn uniform_density_has_no_fluctuation() {
        let g = make_grid(64, 8.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let p = vec![1.0 / 8.0; 64];
        let ds = delta_s_field(&p, None, &c, &g).unwrap();
        assert!(ds.values.iter().all(|v| v.abs() < 1e-14));
        assert!(delta_p_from_action(&ds, &g).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gaussian_fluctuation_gradient() {
        let g = make_grid(512, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let s = 0.9;
        let ds = delta_s_field(&gauss(&g, s), None, &c, &g).unwrap();
        let w = fields::quadrature_weights(&g);
        let p = gauss(&g, s);
        let mean: f64 = (0..g.n()).filter(|&j| ds.mask.get(j)).map(|j| w[j] * p[j] * ds.values[j]).sum();
        assert!(mean.abs() < 1e-12);
        let dp = delta_p_from_action(&ds, &g).unwrap();
        for j in 0..g.n() {
            if ds.mask.eroded(4, true).get(j) {
                assert!((dp[j] - g.x(j) / (2.0 * s * s)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn boltzmann_negative_control() {
        let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let (p0, pt) = (gauss(&g, 1.0), gauss(&g, 1.3));
        let acct = HeatAccount::between(&p0, &pt, &c, &g).unwrap();
        assert!(acct.invariant_error(&c) < 1e-14);
        let ok = boltzmann_ratio_check(&pt, &p0, &acct.delta_q, acct.kt, None, &acct.mask, &g).unwrap();
        assert!(ok < 1e-10);
        let bad: RealField = acct.delta_q.iter().map(|q| 1.1 * q).collect();
        let r = boltzmann_ratio_check(&pt, &p0, &bad, acct.kt, None, &acct.mask, &g).unwrap();
        assert!(r > 1e-2);
        assert_eq!(boltzmann_ratio_check(&p0, &p0, &vec![0.0; 256], 1.0, None, &acct.mask, &g).unwrap(), 0.0);
    }

    #[test]
    fn energies_and_work_examples() {
        let c = Constants::natural();
        assert_eq!(total_energy(0.0, &c), 1.0);
        assert_eq!(total_energy(1.0, &c), 1.5);
        let w = nonconservative_work(0.0, 1.0, 0.0, 0.3, 0.1).unwrap();
        assert!((w.ump_route + 0.03).abs() < 1e-15);
        let w = nonconservative_work(0.4, 1.0, 0.2, 0.7, 0.0).unwrap();
        assert_eq!(w.energy_route, 0.0);
        assert_eq!(w.ump_route, 0.0);
    }

    #[test]
    fn compression_of_linear_flow() {
        let g = make_grid(64, 10.0, Boundary::DirichletZero).unwrap();
        let m = Mask::all(64);
        let v: RealField = g.xs().iter().map(|x| 0.3 * x).collect();
        assert!(phase_compression(&v, &m, &g).unwrap().iter().all(|l| (l - 0.3).abs() < 1e-12));
        assert!(phase_compression(&vec![2.0; 64], &m, &g).unwrap().iter().all(|l| l.abs() < 1e-12));
    }

    #[test]
    fn invariant_residual_constant_frequency() {
        assert_eq!(adiabatic_invariant_residual(&[0.5, 0.5, 0.5], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(adiabatic_invariant_residual(&[0.5], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dissipation_record_first_law() {
        let r = DissipationRecord::new(1.5, 0.5, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(r.omega_bar_t, 0.5);
        assert!(r.first_law_gap(2.0) < 1e-15);
    }
}
