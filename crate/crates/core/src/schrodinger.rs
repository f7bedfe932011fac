//! Reference quantum evolution.
//!
//! One discrete Hamiltonian per grid kind is shared by time stepping, energy
//! evaluation and the eigen-solver: Fourier-collocation kinetic energy on
//! periodic grids, the three-point Laplacian with `ψ = 0` walls on Dirichlet
//! grids. Crank–Nicolson on periodic grids is solved by right-preconditioned
//! GMRES; on Dirichlet grids by a tridiagonal sweep.

use crate::error::{Error, Result};
use crate::fields::{self, Boundary, ComplexField, Constants, Grid, RealField};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64::new(0.0, 1.0);
const GMRES_TOL: f64 = 1e-16;
const GMRES_RESTART: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `½ k x²`.
    Harmonic { k_spring: f64 },
    /// `V = 0` between walls at `0` and `length`; needs a matching Dirichlet grid.
    Box { length: f64 },
    /// `½ k (x − v t)²`.
    DraggedHarmonic { k_spring: f64, v_drag: f64 },
    /// `½ m ω(t)² x²` with `ω` ramped linearly from `omega_start` to `omega_end`
    /// over `ramp_time`, constant afterwards.
    RampedHarmonic { omega_start: f64, omega_end: f64, ramp_time: f64 },
    /// `a x⁴`.
    Quartic { coefficient: f64 },
    /// Grid-aligned, time-independent samples.
    Tabulated { values: Vec<f64> },
}

impl Potential {
    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Potential::DraggedHarmonic { .. } | Potential::RampedHarmonic { .. })
    }

    /// Ramp frequency at time `t` (ramped potentials only).
    pub fn omega_at(&self, t: f64) -> Option<f64> {
        match *self {
            Potential::RampedHarmonic { omega_start, omega_end, ramp_time } => {
                let s = if ramp_time > 0.0 { (t / ramp_time).clamp(0.0, 1.0) } else { 1.0 };
                Some(omega_start + (omega_end - omega_start) * s)
            }
            _ => None,
        }
    }

    fn check(&self, g: &Grid) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            Potential::Box { length } => {
                if g.boundary() != Boundary::DirichletZero || (g.length() - length).abs() > 1e-12 * length {
                    return bad(format!("box of length {length} needs a Dirichlet grid of that length"));
                }
            }
            Potential::Tabulated { values } => g.check(values)?,
            Potential::RampedHarmonic { omega_start, omega_end, ramp_time } => {
                if !(*omega_start > 0.0 && *omega_end > 0.0 && *ramp_time >= 0.0) {
                    return bad("ramp frequencies must be positive".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `V(x, t)` on the grid.
    pub fn sample(&self, g: &Grid, t: f64, c: &Constants) -> Result<RealField> {
        self.check(g)?;
        let xs = g.xs();
        Ok(match self {
            Potential::Free | Potential::Box { .. } => vec![0.0; g.n()],
            Potential::Harmonic { k_spring } => xs.iter().map(|x| 0.5 * k_spring * x * x).collect(),
            Potential::DraggedHarmonic { k_spring, v_drag } => {
                xs.iter().map(|x| 0.5 * k_spring * (x - v_drag * t).powi(2)).collect()
            }
            Potential::RampedHarmonic { .. } => {
                let w = self.omega_at(t).unwrap_or(0.0);
                xs.iter().map(|x| 0.5 * c.mass() * w * w * x * x).collect()
            }
            Potential::Quartic { coefficient } => xs.iter().map(|x| coefficient * x.powi(4)).collect(),
            Potential::Tabulated { values } => values.clone(),
        })
    }

    /// `∇V` on the grid. Closed forms where available, sixth-order differences of
    /// the samples otherwise (never spectral: `x²` is not periodic).
    pub fn gradient_sample(&self, g: &Grid, t: f64, c: &Constants) -> Result<RealField> {
        self.check(g)?;
        let xs = g.xs();
        Ok(match self {
            Potential::Free | Potential::Box { .. } => vec![0.0; g.n()],
            Potential::Harmonic { k_spring } => xs.iter().map(|x| k_spring * x).collect(),
            Potential::DraggedHarmonic { k_spring, v_drag } => xs.iter().map(|x| k_spring * (x - v_drag * t)).collect(),
            Potential::RampedHarmonic { .. } => {
                let w = self.omega_at(t).unwrap_or(0.0);
                xs.iter().map(|x| c.mass() * w * w * x).collect()
            }
            Potential::Quartic { coefficient } => xs.iter().map(|x| 4.0 * coefficient * x.powi(3)).collect(),
            Potential::Tabulated { values } => fields::fd_derivative(values, g.spacing(), 1),
        })
    }

    /// `∂V/∂t` on the grid.
    pub fn time_derivative(&self, g: &Grid, t: f64, c: &Constants) -> Result<RealField> {
        self.check(g)?;
        let xs = g.xs();
        Ok(match *self {
            Potential::DraggedHarmonic { k_spring, v_drag } => {
                xs.iter().map(|x| -k_spring * v_drag * (x - v_drag * t)).collect()
            }
            Potential::RampedHarmonic { omega_start, omega_end, ramp_time } => {
                let rate = if t < ramp_time && ramp_time > 0.0 { (omega_end - omega_start) / ramp_time } else { 0.0 };
                let w = self.omega_at(t).unwrap_or(0.0);
                xs.iter().map(|x| c.mass() * w * rate * x * x).collect()
            }
            _ => vec![0.0; g.n()],
        })
    }

    /// `∂H/∂ω = m ω x²` for the ramped oscillator.
    pub fn omega_derivative(&self, g: &Grid, t: f64, c: &Constants) -> Result<RealField> {
        let w = self
            .omega_at(t)
            .ok_or_else(|| Error::InvalidArgument("∂H/∂ω defined for ramped potentials only".into()))?;
        Ok(g.xs().iter().map(|x| c.mass() * w * x * x).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CrankNicolson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSettings {
    pub dt: f64,
    pub n_steps: usize,
    /// Keep every k-th state (the initial state is always kept).
    pub snapshot_every: usize,
    pub scheme: Scheme,
}

impl EvolutionSettings {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        Self { dt, n_steps, snapshot_every: 1, scheme: Scheme::CrankNicolson }
    }

    pub fn every(mut self, k: usize) -> Self {
        self.snapshot_every = k;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidArgument("snapshot cadence must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Evolution {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub frames: Vec<ComplexField>,
    /// Largest `|∫|ψ|² − 1|` seen over all steps.
    pub max_norm_drift: f64,
    pub solver_iterations: usize,
    pub warnings: Vec<String>,
}

/// Kinetic energy of each Fourier mode, `ℏ²k²/2m`.
fn kinetic_spectrum(c: &Constants, g: &Grid) -> RealField {
    let f = c.hbar() * c.hbar() / (2.0 * c.mass());
    g.wavenumbers().iter().map(|k| f * k * k).collect()
}

/// `Hψ` for a sampled potential.
pub fn apply_hamiltonian(psi: &[Complex64], v: &[f64], c: &Constants, g: &Grid) -> Result<ComplexField> {
    g.check(psi)?;
    g.check(v)?;
    let n = g.n();
    match g.boundary() {
        Boundary::Periodic => {
            let t = kinetic_spectrum(c, g);
            let hat = fields::fft(psi);
            let th: ComplexField = hat.iter().zip(&t).map(|(z, e)| z * e).collect();
            let kin = fields::ifft(&th);
            Ok((0..n).map(|j| kin[j] + v[j] * psi[j]).collect())
        }
        Boundary::DirichletZero => {
            let a = c.hbar() * c.hbar() / (2.0 * c.mass() * g.spacing().powi(2));
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for j in 1..n - 1 {
                out[j] = -a * (psi[j - 1] - 2.0 * psi[j] + psi[j + 1]) + v[j] * psi[j];
            }
            Ok(out)
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES with right preconditioning. Returns the solution and the
/// number of inner iterations used.
fn gmres<A, M>(apply_a: A, apply_minv: M, b: &[Complex64], x0: ComplexField) -> Result<(ComplexField, usize)>
where
    A: Fn(&[Complex64]) -> ComplexField,
    M: Fn(&[Complex64]) -> ComplexField,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return Ok((vec![Complex64::new(0.0, 0.0); n], 0));
    }
    let m = GMRES_RESTART;
    let mut iters = 0;
    let mut last_beta = f64::INFINITY;
    for _ in 0..20 {
        let ax = apply_a(&x);
        let r: ComplexField = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        // stop at the tolerance or once restarts no longer make progress
        if beta <= GMRES_TOL * bnorm || (beta > 0.5 * last_beta && beta < 1e-12 * bnorm) {
            return Ok((x, iters));
        }
        last_beta = beta;
        let mut basis: Vec<ComplexField> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![Complex64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![Complex64::new(0.0, 0.0); m];
        let mut rhs = vec![Complex64::new(0.0, 0.0); m + 1];
        rhs[0] = Complex64::new(beta, 0.0);
        let mut k = 0;
        while k < m {
            iters += 1;
            let z = apply_minv(&basis[k]);
            let mut w = apply_a(&z);
            for i in 0..=k {
                let hik = dot(&basis[i], &w);
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&basis[i]) {
                    *wj -= hik * vj;
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = Complex64::new(wn, 0.0);
            for i in 0..k {
                let (a, bb) = (h[i][k], h[i + 1][k]);
                h[i][k] = cs[i] * a + sn[i] * bb;
                h[i + 1][k] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let nu = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = Complex64::new(1.0, 0.0);
            } else {
                cs[k] = a.norm() / nu;
                sn[k] = (a / a.norm()) * bb.conj() / nu;
            }
            h[k][k] = cs[k] * a + sn[k] * bb;
            h[k + 1][k] = Complex64::new(0.0, 0.0);
            rhs[k + 1] = -sn[k].conj() * rhs[k];
            rhs[k] = cs[k] * rhs[k];
            k += 1;
            if rhs[k].norm() <= GMRES_TOL * bnorm || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        let mut y = vec![Complex64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut s = rhs[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut comb = vec![Complex64::new(0.0, 0.0); n];
        for (yi, vi) in y.iter().zip(&basis) {
            for (c, v) in comb.iter_mut().zip(vi) {
                *c += yi * v;
            }
        }
        let dx = apply_minv(&comb);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    let ax = apply_a(&x);
    let res = norm(&b.iter().zip(&ax).map(|(p, q)| p - q).collect::<Vec<_>>()) / bnorm;
    if res < 1e-11 {
        Ok((x, iters))
    } else {
        Err(Error::NoConvergence(format!("GMRES stalled at relative residual {res:.3e}")))
    }
}

/// Solves the complex tridiagonal system with constant off-diagonal `off`.
pub(crate) fn thomas(diag: &[Complex64], off: Complex64, rhs: &[Complex64]) -> ComplexField {
    let m = diag.len();
    let mut cp = vec![Complex64::new(0.0, 0.0); m];
    let mut dp = vec![Complex64::new(0.0, 0.0); m];
    cp[0] = off / diag[0];
    dp[0] = rhs[0] / diag[0];
    for i in 1..m {
        let den = diag[i] - off * cp[i - 1];
        cp[i] = off / den;
        dp[i] = (rhs[i] - off * dp[i - 1]) / den;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); m];
    x[m - 1] = dp[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// One Crank–Nicolson step with the potential sampled at the half step.
fn cn_step(psi: &[Complex64], v: &[f64], dt: f64, c: &Constants, g: &Grid) -> Result<(ComplexField, usize)> {
    let tau = dt / (2.0 * c.hbar());
    let n = g.n();
    let hpsi = apply_hamiltonian(psi, v, c, g)?;
    let rhs: ComplexField = (0..n).map(|j| psi[j] - I * tau * hpsi[j]).collect();
    match g.boundary() {
        Boundary::Periodic => {
            let t = kinetic_spectrum(c, g);
            let apply_a = |z: &[Complex64]| -> ComplexField {
                let hz = apply_hamiltonian(z, v, c, g).expect("aligned");
                z.iter().zip(hz).map(|(a, b)| a + I * tau * b).collect()
            };
            let apply_minv = |z: &[Complex64]| -> ComplexField {
                let y: ComplexField = z.iter().zip(v).map(|(a, vj)| a / (1.0 + I * tau * vj)).collect();
                let mut hat = fields::fft(&y);
                for (h, e) in hat.iter_mut().zip(&t) {
                    *h /= 1.0 + I * tau * e;
                }
                fields::ifft(&hat)
            };
            let x0 = apply_minv(&rhs);
            gmres(apply_a, apply_minv, &rhs, x0)
        }
        Boundary::DirichletZero => {
            let a = c.hbar() * c.hbar() / (2.0 * c.mass() * g.spacing().powi(2));
            let diag: ComplexField = (1..n - 1).map(|j| 1.0 + I * tau * (2.0 * a + v[j])).collect();
            let off = -I * tau * a;
            let x = thomas(&diag, off, &rhs[1..n - 1]);
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            out[1..n - 1].copy_from_slice(&x);
            Ok((out, 0))
        }
    }
}

/// Crank–Nicolson evolution of a normalized state.
pub fn evolve(psi0: &[Complex64], v: &Potential, s: &EvolutionSettings, c: &Constants, g: &Grid) -> Result<Evolution> {
    g.check(psi0)?;
    s.validate()?;
    let n0 = fields::norm_sq(psi0, g)?;
    if (n0 - 1.0).abs() > fields::NORM_TOL {
        return Err(Error::NotNormalized(n0));
    }
    let mut warnings = Vec::new();
    let v0 = v.sample(g, 0.0, c)?;
    let kmax = match g.boundary() {
        Boundary::Periodic => std::f64::consts::PI / g.spacing(),
        Boundary::DirichletZero => 2.0 / g.spacing(),
    };
    let emax = c.hbar() * c.hbar() * kmax * kmax / (2.0 * c.mass()) + v0.iter().cloned().fold(0.0, f64::max);
    let phase = s.dt * emax / c.hbar();
    if phase > std::f64::consts::PI {
        let w = format!("dt = {} resolves the spectrum poorly (dt·E_max/ħ = {phase:.2})", s.dt);
        log::warn!("{w}");
        warnings.push(w);
    }

    let mut psi = psi0.to_vec();
    let mut times = vec![0.0];
    let mut frames = vec![psi.clone()];
    let mut drift = (n0 - 1.0).abs();
    let mut iters = 0;
    let mut vmid = v0;
    for step in 0..s.n_steps {
        let t = step as f64 * s.dt;
        if v.is_time_dependent() {
            vmid = v.sample(g, t + 0.5 * s.dt, c)?;
        }
        let (next, it) = cn_step(&psi, &vmid, s.dt, c, g)?;
        iters += it;
        psi = next;
        drift = drift.max((fields::norm_sq(&psi, g)? - 1.0).abs());
        if (step + 1) % s.snapshot_every == 0 {
            times.push((step + 1) as f64 * s.dt);
            frames.push(psi.clone());
        }
    }
    Ok(Evolution { times, frames, max_norm_drift: drift, solver_iterations: iters, warnings })
}

/// `⟨ψ|H|ψ⟩` with the same discrete kinetic operator the propagator uses.
pub fn hamiltonian_energy(psi: &[Complex64], v: &Potential, t: f64, c: &Constants, g: &Grid) -> Result<f64> {
    let vs = v.sample(g, t, c)?;
    let hpsi = apply_hamiltonian(psi, &vs, c, g)?;
    Ok(dot(psi, &hpsi).re * g.spacing())
}

/// Pointwise Lagrange density `ℏ Im(ψ*ψ̇) + (ℏ²/2m)|∇ψ|² + V|ψ|²` and its integral.
pub fn lagrangian_density(
    psi: &[Complex64],
    psi_dot: &[Complex64],
    v: &Potential,
    t: f64,
    c: &Constants,
    g: &Grid,
) -> Result<(RealField, f64)> {
    g.check(psi)?;
    g.check(psi_dot)?;
    let vs = v.sample(g, t, c)?;
    let d = fields::gradient_complex(psi, g)?;
    let k = c.hbar() * c.hbar() / (2.0 * c.mass());
    let dens: RealField = (0..g.n())
        .map(|j| c.hbar() * (psi[j].conj() * psi_dot[j]).im + k * d[j].norm_sqr() + vs[j] * psi[j].norm_sqr())
        .collect();
    let total = fields::integrate(&dens, g)?;
    Ok((dens, total))
}

#[derive(Clone, Debug, Serialize)]
pub struct Eigenpair {
    pub energy: f64,
    /// Real eigenfunction with `∫φ² dx = 1`.
    pub state: RealField,
}

fn fix_sign(v: &mut [f64]) {
    let vmax = v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * vmax) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Lowest `count` eigenpairs of the discrete Hamiltonian at time `t`.
///
/// Periodic grids diagonalize the dense collocation matrix; Dirichlet grids use
/// Sturm-sequence bisection and inverse iteration on the tridiagonal operator.
pub fn diagonalize_reference(v: &Potential, t: f64, count: usize, c: &Constants, g: &Grid) -> Result<Vec<Eigenpair>> {
    let vs = v.sample(g, t, c)?;
    let n = g.n();
    let h = g.spacing();
    match g.boundary() {
        Boundary::Periodic => {
            if count > n {
                return Err(Error::InvalidArgument(format!("requested {count} states from {n} points")));
            }
            let mut e0 = vec![Complex64::new(0.0, 0.0); n];
            e0[0] = Complex64::new(1.0, 0.0);
            let col: Vec<f64> = apply_hamiltonian(&e0, &vec![0.0; n], c, g)?.iter().map(|z| z.re).collect();
            let m = DMatrix::from_fn(n, n, |i, j| {
                let d = (i + n - j) % n;
                let sym = 0.5 * (col[d] + col[(n - d) % n]);
                sym + if i == j { vs[i] } else { 0.0 }
            });
            let eig = SymmetricEigen::new(m);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            Ok(order
                .into_iter()
                .take(count)
                .map(|k| {
                    let mut st: Vec<f64> = eig.eigenvectors.column(k).iter().map(|x| x / h.sqrt()).collect();
                    fix_sign(&mut st);
                    Eigenpair { energy: eig.eigenvalues[k], state: st }
                })
                .collect())
        }
        Boundary::DirichletZero => {
            let m = n - 2;
            if count > m {
                return Err(Error::InvalidArgument(format!("requested {count} states from {m} interior points")));
            }
            let a = c.hbar() * c.hbar() / (2.0 * c.mass() * h * h);
            let diag: Vec<f64> = (1..n - 1).map(|j| 2.0 * a + vs[j]).collect();
            let off = -a;
            let below = |lam: f64| -> usize {
                let mut cnt = 0;
                let mut q = diag[0] - lam;
                if q < 0.0 {
                    cnt += 1;
                }
                for d in diag.iter().skip(1) {
                    let qq = if q == 0.0 { 1e-300 } else { q };
                    q = d - lam - off * off / qq;
                    if q < 0.0 {
                        cnt += 1;
                    }
                }
                cnt
            };
            let lo0 = diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * a.abs();
            let hi0 = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * a.abs();
            let mut out = Vec::with_capacity(count);
            for k in 0..count {
                let (mut lo, mut hi) = (lo0, hi0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if below(mid) > k {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
                        break;
                    }
                }
                let lam = 0.5 * (lo + hi);
                let shift = lam + 1e-10 * lam.abs().max(1e-12);
                let dz: ComplexField = diag.iter().map(|d| Complex64::new(d - shift, 0.0)).collect();
                let mut x: ComplexField = (0..m).map(|i| Complex64::new(1.0 + 0.1 * ((i * 7919) % 13) as f64, 0.0)).collect();
                for _ in 0..4 {
                    x = thomas(&dz, Complex64::new(off, 0.0), &x);
                    let nx = norm(&x);
                    x.iter_mut().for_each(|z| *z /= nx);
                }
                let mut st = vec![0.0; n];
                for i in 0..m {
                    st[i + 1] = x[i].re / h.sqrt();
                }
                fix_sign(&mut st);
                out.push(Eigenpair { energy: lam, state: st });
            }
            Ok(out)
        }
    }
}

/// One eigenstate of the scenario potential with a complex amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpositionTerm {
    pub n: usize,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Initial wavefunction recipes. Every recipe is normalized on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `(2πσ²)^{-1/4} exp(−(x−x₀)²/4σ² + i p₀ x/ℏ)`.
    Gaussian {
        sigma: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        p0: f64,
    },
    /// n-th eigenstate of the discrete Hamiltonian at `t = 0`.
    Eigenstate { n: usize },
    /// `e^{ikx}`; `k L / 2π` must be an integer.
    PlaneWave { k: f64 },
    Superposition { terms: Vec<SuperpositionTerm> },
}

impl InitialState {
    pub fn prepare(&self, v: &Potential, c: &Constants, g: &Grid) -> Result<ComplexField> {
        let psi: ComplexField = match self {
            InitialState::Gaussian { sigma, x0, p0 } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidArgument(format!("gaussian width must be positive, got {sigma}")));
                }
                g.xs()
                    .iter()
                    .map(|x| Complex64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), p0 * x / c.hbar()))
                    .collect()
            }
            InitialState::Eigenstate { n } => {
                let e = diagonalize_reference(v, 0.0, n + 1, c, g)?;
                e[*n].state.iter().map(|x| Complex64::new(*x, 0.0)).collect()
            }
            InitialState::PlaneWave { k } => {
                let turns = k * g.length() / (2.0 * std::f64::consts::PI);
                if !g.is_periodic() || (turns - turns.round()).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!("plane wave k = {k} does not fit the periodic grid")));
                }
                g.xs().iter().map(|x| Complex64::from_polar(1.0, k * x)).collect()
            }
            InitialState::Superposition { terms } => {
                let top = terms
                    .iter()
                    .map(|t| t.n)
                    .max()
                    .ok_or_else(|| Error::InvalidArgument("superposition needs at least one term".into()))?;
                let e = diagonalize_reference(v, 0.0, top + 1, c, g)?;
                let mut psi = vec![Complex64::new(0.0, 0.0); g.n()];
                for t in terms {
                    let a = Complex64::new(t.re, t.im);
                    for (z, s) in psi.iter_mut().zip(&e[t.n].state) {
                        *z += a * s;
                    }
                }
                psi
            }
        };
        // zero walls stay exactly zero
        let mut psi = fields::normalize(&psi, g)?;
        if g.boundary() == Boundary::DirichletZero {
            let n = g.n();
            psi[0] = Complex64::new(0.0, 0.0);
            psi[n - 1] = Complex64::new(0.0, 0.0);
            psi = fields::normalize(&psi, g)?;
        } else {
            let top = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let edge = psi[0].norm().max(psi[g.n() - 1].norm());
            if edge > 1e-10 * top {
                log::warn!("initial state reaches the periodic seam at {:.1e} of its peak; spectral derivatives will see a jump", edge / top);
            }
        }
        Ok(psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_grid;
    use std::f64::consts::PI;

    fn to_complex(v: &[f64]) -> ComplexField {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn harmonic_spectrum() {
        let g = make_grid(128, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let e = diagonalize_reference(&Potential::Harmonic { k_spring: 1.0 }, 0.0, 4, &c, &g).unwrap();
        for (k, p) in e.iter().enumerate() {
            assert!((p.energy - (k as f64 + 0.5)).abs() < 1e-9, "E{k} = {}", p.energy);
        }
        let norm: f64 = e[0].state.iter().map(|x| x * x).sum::<f64>() * g.spacing();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_spectrum_is_second_order() {
        let c = Constants::natural();
        let err = |n: usize| {
            let g = make_grid(n, 1.0, Boundary::DirichletZero).unwrap();
            let e = diagonalize_reference(&Potential::Box { length: 1.0 }, 0.0, 3, &c, &g).unwrap();
            (e[2].energy - 9.0 * PI * PI / 2.0).abs()
        };
        let r = err(101) / err(201);
        assert!((r - 4.0).abs() < 0.1, "ratio {r}");
    }

    #[test]
    fn free_periodic_levels_on_grid_wavenumbers() {
        let g = make_grid(64, 2.0 * PI, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let e = diagonalize_reference(&Potential::Free, 0.0, 3, &c, &g).unwrap();
        assert!(e[0].energy.abs() < 1e-10);
        assert!((e[1].energy - 0.5).abs() < 1e-10 && (e[2].energy - 0.5).abs() < 1e-10);
    }

    #[test]
    fn plane_wave_energy() {
        let g = make_grid(64, 10.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let k = 2.0 * PI * 2.0 / 10.0;
        let psi: ComplexField = g.xs().iter().map(|x| Complex64::from_polar(1.0 / 10f64.sqrt(), k * x)).collect();
        let e = hamiltonian_energy(&psi, &Potential::Free, 0.0, &c, &g).unwrap();
        assert!((e - k * k / 2.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_state_keeps_modulus_and_norm() {
        let g = make_grid(128, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let v = Potential::Harmonic { k_spring: 1.0 };
        let phi = diagonalize_reference(&v, 0.0, 1, &c, &g).unwrap().remove(0);
        let psi0 = to_complex(&phi.state);
        let ev = evolve(&psi0, &v, &EvolutionSettings::new(1e-3, 1000).every(1000), &c, &g).unwrap();
        let last = ev.frames.last().unwrap();
        for j in 0..g.n() {
            assert!((last[j].norm() - psi0[j].norm()).abs() < 1e-7);
        }
        assert!(ev.max_norm_drift < 1e-10);
    }

    #[test]
    fn dirichlet_evolution_conserves_energy_exactly() {
        let g = make_grid(201, 1.0, Boundary::DirichletZero).unwrap();
        let c = Constants::natural();
        let v = Potential::Box { length: 1.0 };
        let e = diagonalize_reference(&v, 0.0, 2, &c, &g).unwrap();
        let psi0: ComplexField = (0..g.n())
            .map(|j| Complex64::new(e[0].state[j], 0.0) * 0.8f64.sqrt() + Complex64::new(0.0, e[1].state[j]) * 0.2f64.sqrt())
            .collect();
        let e0 = hamiltonian_energy(&psi0, &v, 0.0, &c, &g).unwrap();
        let ev = evolve(&psi0, &v, &EvolutionSettings::new(1e-4, 500).every(500), &c, &g).unwrap();
        let e1 = hamiltonian_energy(ev.frames.last().unwrap(), &v, 0.0, &c, &g).unwrap();
        assert!(((e1 - e0) / e0).abs() < 1e-10);
        assert!(ev.max_norm_drift < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = make_grid(64, 10.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let psi = vec![Complex64::new(1.0, 0.0); 64];
        assert!(matches!(
            evolve(&psi, &Potential::Free, &EvolutionSettings::new(1e-3, 1), &c, &g),
            Err(Error::NotNormalized(_))
        ));
        assert!(Potential::Box { length: 1.0 }.sample(&g, 0.0, &c).is_err());
    }
}
