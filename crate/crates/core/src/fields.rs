//! Uniform 1D grids, differential operators and the amplitude/phase split.
//!
//! Periodic grids differentiate spectrally. Dirichlet grids use sixth-order
//! finite differences with one-sided closure near the walls; the same stencil
//! machinery differentiates masked segments where quotients like `∇P/P` are
//! only defined away from nodes.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

pub type RealField = Vec<f64>;
pub type ComplexField = Vec<Complex64>;

/// Relative amplitude below which a point is treated as a node.
pub const NODE_FLOOR: f64 = 1e-6;
/// Accepted deviation of `∫|ψ|² dx` from one.
pub const NORM_TOL: f64 = 1e-6;
/// Smallest admissible grid.
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    DirichletZero,
}

/// Physical constants. All strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constants {
    hbar: f64,
    mass: f64,
    omega: f64,
    kb: f64,
}

impl Constants {
    pub fn new(hbar: f64, mass: f64, omega: f64, kb: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("mass", mass), ("omega", omega), ("kB", kb)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConstants(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { hbar, mass, omega, kb })
    }

    /// ℏ = m = ω = k = 1.
    pub fn natural() -> Self {
        Self { hbar: 1.0, mass: 1.0, omega: 1.0, kb: 1.0 }
    }

    pub fn with_omega(self, omega: f64) -> Result<Self> {
        Self::new(self.hbar, self.mass, omega, self.kb)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn kb(&self) -> f64 {
        self.kb
    }
    /// Thermostat energy `kT = ℏω`.
    pub fn kt(&self) -> f64 {
        self.hbar * self.omega
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    n: usize,
    length: f64,
    spacing: f64,
    boundary: Boundary,
    origin: f64,
}

/// Builds a grid. Periodic grids are centred on zero, Dirichlet grids span `[0, length]`.
pub fn make_grid(n: usize, length: f64, boundary: Boundary) -> Result<Grid> {
    Grid::new(n, length, boundary)
}

impl Grid {
    pub fn new(n: usize, length: f64, boundary: Boundary) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_POINTS} points, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        let (spacing, origin) = match boundary {
            Boundary::Periodic => (length / n as f64, -0.5 * length),
            Boundary::DirichletZero => (length / (n - 1) as f64, 0.0),
        };
        Ok(Self { n, length, spacing, boundary, origin })
    }

    /// Moves the left end of the grid to `origin`.
    pub fn with_origin(mut self, origin: f64) -> Self {
        self.origin = origin;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn origin(&self) -> f64 {
        self.origin
    }
    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn x(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.spacing
    }

    pub fn xs(&self) -> RealField {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Lower and upper coordinate of the domain.
    pub fn bounds(&self) -> (f64, f64) {
        (self.origin, self.origin + self.length)
    }

    /// Angular wavenumbers in FFT order; the Nyquist mode carries `+π/h`.
    pub fn wavenumbers(&self) -> RealField {
        let dk = 2.0 * PI / self.length;
        (0..self.n)
            .map(|j| if j <= self.n / 2 { j as f64 * dk } else { (j as f64 - self.n as f64) * dk })
            .collect()
    }

    pub fn check<T>(&self, f: &[T]) -> Result<()> {
        if f.len() == self.n {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: self.n, got: f.len() })
        }
    }
}

/// Validity flags for quotient evaluation (false at or near nodes).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn all(n: usize) -> Self {
        Mask(vec![true; n])
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Mask(flags)
    }

    /// Valid where `r ≥ NODE_FLOOR·max r`.
    pub fn from_amplitude(r: &[f64]) -> Self {
        let rmax = r.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let floor = NODE_FLOOR * rmax;
        Mask(r.iter().map(|&v| rmax > 0.0 && v.abs() >= floor).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }
    pub fn flags(&self) -> &[bool] {
        &self.0
    }
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&b| b)
    }

    /// Fraction of points that are valid.
    pub fn coverage(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.0.len() as f64
        }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    /// Drops `k` points from both ends of every valid run.
    pub fn eroded(&self, k: usize, periodic: bool) -> Mask {
        let mut out = vec![false; self.0.len()];
        for seg in self.segments(periodic) {
            if seg.len() == self.0.len() && periodic {
                return self.clone();
            }
            if seg.len() > 2 * k {
                for &j in &seg[k..seg.len() - k] {
                    out[j] = true;
                }
            }
        }
        Mask(out)
    }

    /// Maximal runs of consecutive valid indices. On periodic grids a run may
    /// wrap from the last index to the first.
    pub fn segments(&self, periodic: bool) -> Vec<Vec<usize>> {
        let n = self.0.len();
        if n == 0 {
            return Vec::new();
        }
        if self.is_full() {
            return vec![(0..n).collect()];
        }
        let start = if periodic {
            // begin scanning just after an invalid point so wrapped runs stay whole
            let first_bad = self.0.iter().position(|&b| !b).unwrap_or(0);
            (first_bad + 1) % n
        } else {
            0
        };
        let mut segs = Vec::new();
        let mut cur = Vec::new();
        for step in 0..n {
            let j = if periodic { (start + step) % n } else { step };
            if self.0[j] {
                cur.push(j);
            } else if !cur.is_empty() {
                segs.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            segs.push(cur);
        }
        segs
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Forward DFT (unnormalized).
pub fn fft(f: &[Complex64]) -> ComplexField {
    let (fwd, _) = plans(f.len());
    let mut buf = f.to_vec();
    fwd.process(&mut buf);
    buf
}

/// Inverse DFT including the `1/n` factor.
pub fn ifft(f: &[Complex64]) -> ComplexField {
    let (_, inv) = plans(f.len());
    let mut buf = f.to_vec();
    inv.process(&mut buf);
    let s = 1.0 / f.len() as f64;
    buf.iter_mut().for_each(|z| *z *= s);
    buf
}

/// Applies a Fourier multiplier `m(k, is_nyquist)` to a periodic field.
pub fn spectral_multiply<F>(f: &[Complex64], g: &Grid, m: F) -> ComplexField
where
    F: Fn(f64, bool) -> Complex64,
{
    let ks = g.wavenumbers();
    let nyq = if g.n() % 2 == 0 { Some(g.n() / 2) } else { None };
    let mut hat = fft(f);
    for (j, z) in hat.iter_mut().enumerate() {
        *z *= m(ks[j], Some(j) == nyq);
    }
    ifft(&hat)
}

fn spectral_derivative(f: &[Complex64], g: &Grid, order: u32) -> ComplexField {
    spectral_multiply(f, g, |k, nyq| {
        if nyq && order % 2 == 1 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k).powu(order)
        }
    })
}

/// Finite-difference weights for derivatives `0..=m` at `z` from nodes `x`
/// (Fornberg's recursion). Returns `c[j][k]`, the weight of node `j` in the
/// `k`-th derivative.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

fn stencil_widths(order: usize) -> (usize, usize) {
    // (central, one-sided); both sixth-order accurate
    match order {
        1 => (7, 7),
        2 => (7, 8),
        _ => (9, 9),
    }
}

/// Sixth-order finite-difference derivative of an open (non-periodic) sample run.
/// Runs shorter than the stencil fall back to the widest stencil that fits.
pub fn fd_derivative(f: &[f64], h: f64, order: usize) -> RealField {
    let len = f.len();
    if len < 2 || order == 0 {
        return if order == 0 { f.to_vec() } else { vec![0.0; len] };
    }
    let (wc, wb) = stencil_widths(order);
    let wc = wc.min(len);
    let wb = wb.min(len);
    let scale = h.powi(order as i32);
    let weights = |offsets: &[f64]| -> Vec<f64> {
        fornberg_weights(0.0, offsets, order).into_iter().map(|c| c[order] / scale).collect()
    };
    let half = (wc - 1) / 2;
    let central: Vec<f64> = {
        let offs: Vec<f64> = (0..wc).map(|i| i as f64 - half as f64).collect();
        weights(&offs)
    };
    let mut out = vec![0.0; len];
    for (j, o) in out.iter_mut().enumerate() {
        if j >= half && j + half < len && wc % 2 == 1 {
            *o = central.iter().zip(&f[j - half..=j + half]).map(|(w, v)| w * v).sum();
        } else {
            let start = if j < len / 2 { 0 } else { len - wb };
            let offs: Vec<f64> = (start..start + wb).map(|i| i as f64 - j as f64).collect();
            let w = weights(&offs);
            *o = w.iter().zip(&f[start..start + wb]).map(|(w, v)| w * v).sum();
        }
    }
    out
}

/// `order`-th derivative of a real field (1 ≤ order ≤ 3).
pub fn derivative(f: &[f64], g: &Grid, order: usize) -> Result<RealField> {
    g.check(f)?;
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("derivative order {order} not in 1..=3")));
    }
    Ok(match g.boundary() {
        Boundary::Periodic => {
            let z: ComplexField = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            spectral_derivative(&z, g, order as u32).iter().map(|z| z.re).collect()
        }
        Boundary::DirichletZero => fd_derivative(f, g.spacing(), order),
    })
}

pub fn gradient(f: &[f64], g: &Grid) -> Result<RealField> {
    derivative(f, g, 1)
}

pub fn laplacian(f: &[f64], g: &Grid) -> Result<RealField> {
    derivative(f, g, 2)
}

/// `order`-th derivative of a complex field.
pub fn derivative_complex(f: &[Complex64], g: &Grid, order: usize) -> Result<ComplexField> {
    g.check(f)?;
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("derivative order {order} not in 1..=3")));
    }
    Ok(match g.boundary() {
        Boundary::Periodic => spectral_derivative(f, g, order as u32),
        Boundary::DirichletZero => {
            let re: Vec<f64> = f.iter().map(|z| z.re).collect();
            let im: Vec<f64> = f.iter().map(|z| z.im).collect();
            let dre = fd_derivative(&re, g.spacing(), order);
            let dim = fd_derivative(&im, g.spacing(), order);
            dre.into_iter().zip(dim).map(|(a, b)| Complex64::new(a, b)).collect()
        }
    })
}

pub fn gradient_complex(f: &[Complex64], g: &Grid) -> Result<ComplexField> {
    derivative_complex(f, g, 1)
}

pub fn laplacian_complex(f: &[Complex64], g: &Grid) -> Result<ComplexField> {
    derivative_complex(f, g, 2)
}

/// Derivative restricted to valid runs of `mask`; zero elsewhere. A full mask on a
/// periodic grid differentiates spectrally, otherwise each run is differentiated
/// as an open interval.
pub fn masked_derivative(f: &[f64], mask: &Mask, g: &Grid, order: usize) -> Result<RealField> {
    g.check(f)?;
    g.check(mask.flags())?;
    if mask.is_full() {
        return derivative(f, g, order);
    }
    let mut out = vec![0.0; g.n()];
    for seg in mask.segments(g.is_periodic()) {
        let vals: Vec<f64> = seg.iter().map(|&j| f[j]).collect();
        let d = fd_derivative(&vals, g.spacing(), order);
        for (&j, v) in seg.iter().zip(d) {
            out[j] = v;
        }
    }
    Ok(out)
}

/// Derivative of a field that is smooth on each valid run but may have kinks at
/// nodes (such as `R = |ψ|`). A single run uses the global operator; several runs
/// are differentiated separately so kinks never enter a stencil.
pub fn piecewise_derivative(f: &[f64], mask: &Mask, g: &Grid, order: usize) -> Result<RealField> {
    if mask.segments(g.is_periodic()).len() <= 1 {
        let mut d = derivative(f, g, order)?;
        for (j, v) in d.iter_mut().enumerate() {
            if !mask.get(j) {
                *v = 0.0;
            }
        }
        Ok(d)
    } else {
        masked_derivative(f, mask, g, order)
    }
}

/// `∇f/f` as the derivative of `ln f` on valid runs. Requires `f > 0` on the mask.
pub fn log_gradient(f: &[f64], mask: &Mask, g: &Grid) -> Result<RealField> {
    g.check(f)?;
    let mut lnf = vec![0.0; g.n()];
    for j in 0..g.n() {
        if mask.get(j) {
            if f[j] <= 0.0 {
                return Err(Error::Degenerate(format!("non-positive value {} at index {j}", f[j])));
            }
            lnf[j] = f[j].ln();
        }
    }
    masked_derivative(&lnf, mask, g, 1)
}

/// Riemann sum on periodic grids, trapezoid on Dirichlet grids.
pub fn integrate(f: &[f64], g: &Grid) -> Result<f64> {
    g.check(f)?;
    let s: f64 = f.iter().sum();
    Ok(match g.boundary() {
        Boundary::Periodic => s * g.spacing(),
        Boundary::DirichletZero => (s - 0.5 * (f[0] + f[g.n() - 1])) * g.spacing(),
    })
}

/// Quadrature weight of each sample, consistent with [`integrate`].
pub fn quadrature_weights(g: &Grid) -> RealField {
    let mut w = vec![g.spacing(); g.n()];
    if g.boundary() == Boundary::DirichletZero {
        w[0] *= 0.5;
        w[g.n() - 1] *= 0.5;
    }
    w
}

pub fn norm_sq(psi: &[Complex64], g: &Grid) -> Result<f64> {
    let d: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    integrate(&d, g)
}

pub fn normalize(psi: &[Complex64], g: &Grid) -> Result<ComplexField> {
    let n = norm_sq(psi, g)?;
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Degenerate("cannot normalize a zero field".into()));
    }
    let s = 1.0 / n.sqrt();
    Ok(psi.iter().map(|z| z * s).collect())
}

/// `(∫P(a−b)²)^½ / max((∫P b²)^½, floor)` over the mask.
pub fn weighted_relative_rms(a: &[f64], b: &[f64], p: &[f64], mask: &Mask, g: &Grid, floor: f64) -> Result<f64> {
    g.check(a)?;
    g.check(b)?;
    let w = quadrature_weights(g);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..g.n() {
        if mask.get(j) {
            num += w[j] * p[j] * (a[j] - b[j]).powi(2);
            den += w[j] * p[j] * b[j] * b[j];
        }
    }
    Ok(num.sqrt() / den.sqrt().max(floor))
}

/// L² norm over valid points.
pub fn masked_l2(f: &[f64], mask: &Mask, g: &Grid) -> f64 {
    let w = quadrature_weights(g);
    (0..f.len()).filter(|&j| mask.get(j)).map(|j| w[j] * f[j] * f[j]).sum::<f64>().sqrt()
}

/// Four-point Lagrange (cubic) interpolation. Periodic grids wrap; Dirichlet
/// grids return `None` outside `[x₀, x_{n−1}]`.
pub fn interpolate_cubic(f: &[f64], g: &Grid, x: f64) -> Option<f64> {
    let n = g.n();
    let h = g.spacing();
    let mut s = (x - g.origin()) / h;
    if g.is_periodic() {
        s = s.rem_euclid(n as f64);
    } else if !(0.0..=(n - 1) as f64).contains(&s) {
        return None;
    }
    let mut j = s.floor() as isize;
    if !g.is_periodic() {
        j = j.clamp(1, n as isize - 3);
    }
    let t = s - j as f64;
    let idx = |k: isize| -> f64 {
        let m = j + k;
        if g.is_periodic() {
            f[m.rem_euclid(n as isize) as usize]
        } else {
            f[m as usize]
        }
    };
    let (fm, f0, f1, f2) = (idx(-1), idx(0), idx(1), idx(2));
    let wm = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
    Some(wm * fm + w0 * f0 + w1 * f1 + w2 * f2)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_phase(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Amplitude/phase split `ψ = R e^{iS/ℏ}` with derived phase gradients.
///
/// `grad_s` is the current-based `∇S = ℏ Im(ψ*∇ψ)/|ψ|²` on the mask and is held
/// flat across masked runs; `lap_s` is zero off the mask.
#[derive(Clone, Debug, Serialize)]
pub struct MadelungBundle {
    r: RealField,
    s: RealField,
    p: RealField,
    grad_s: RealField,
    lap_s: RealField,
    mask: Mask,
    hbar: f64,
}

impl MadelungBundle {
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    pub fn grad_s(&self) -> &[f64] {
        &self.grad_s
    }
    pub fn lap_s(&self) -> &[f64] {
        &self.lap_s
    }
    pub fn mask(&self) -> &Mask {
        &self.mask
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Builds a bundle from an amplitude and a phase given directly, differentiating
    /// `S` on the grid. On periodic grids `S` must itself be periodic.
    pub fn from_amplitude_phase(r: RealField, s: RealField, c: &Constants, g: &Grid) -> Result<Self> {
        g.check(&r)?;
        g.check(&s)?;
        let grad_s = gradient(&s, g)?;
        let lap_s = laplacian(&s, g)?;
        let p: RealField = r.iter().map(|v| v * v).collect();
        let mask = Mask::from_amplitude(&r);
        let b = Self { r, s, p, grad_s, lap_s, mask, hbar: c.hbar() };
        b.validate(g)?;
        Ok(b)
    }

    /// Checks `P = R²` and unit normalization.
    pub fn validate(&self, g: &Grid) -> Result<()> {
        g.check(&self.r)?;
        g.check(&self.s)?;
        g.check(&self.p)?;
        let pmax = self.p.iter().cloned().fold(0.0, f64::max);
        if pmax <= 0.0 {
            return Err(Error::InvalidBundle("density vanishes everywhere".into()));
        }
        for j in 0..g.n() {
            if self.p[j] < 0.0 || (self.p[j] - self.r[j] * self.r[j]).abs() > 1e-12 * pmax {
                return Err(Error::InvalidBundle(format!("P ≠ R² at index {j}")));
            }
        }
        let norm = integrate(&self.p, g)?;
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidBundle(format!("∫P dx = {norm}")));
        }
        Ok(())
    }
}

/// Splits a normalized wavefunction into `(R, S, P)`.
///
/// `S` integrates the current-based `∇S` outward from the density maximum `x₀`,
/// where `S(x₀) = ℏ arg ψ(x₀)`. Steps inside valid runs use the trapezoid rule
/// with an end correction from `∇²S`; steps touching a node bridge with the
/// local phase difference. The integral then picks, at each point, the branch of
/// `ℏ arg ψ` nearest to it, so `S` carries no quadrature error.
pub fn decompose(psi: &[Complex64], c: &Constants, g: &Grid) -> Result<MadelungBundle> {
    g.check(psi)?;
    let norm = norm_sq(psi, g)?;
    if norm == 0.0 {
        return Err(Error::Degenerate("wavefunction vanishes everywhere".into()));
    }
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm));
    }
    let hbar = c.hbar();
    let n = g.n();
    let h = g.spacing();
    let p: RealField = psi.iter().map(|z| z.norm_sqr()).collect();
    let r: RealField = p.iter().map(|v| v.sqrt()).collect();
    let mask = Mask::from_amplitude(&r);
    let d1 = gradient_complex(psi, g)?;
    let d2 = laplacian_complex(psi, g)?;

    let mut grad_s = vec![f64::NAN; n];
    let mut lap_s = vec![0.0; n];
    for j in 0..n {
        if mask.get(j) {
            let w = d1[j] / psi[j];
            grad_s[j] = hbar * w.im;
            lap_s[j] = hbar * (d2[j] / psi[j] - w * w).im;
        }
    }
    fill_flat(&mut grad_s);

    let j0 = (0..n).fold(0, |best, j| if p[j] > p[best] { j } else { best });
    let mut s = vec![0.0; n];
    s[j0] = hbar * psi[j0].arg();
    let step = |a: usize, b: usize| -> f64 {
        // increment S[b] − S[a] for neighbours a, b = a ± 1
        let sign = if b > a { 1.0 } else { -1.0 };
        if mask.get(a) && mask.get(b) {
            let (lo, hi) = (a.min(b), a.max(b));
            sign * (0.5 * h * (grad_s[lo] + grad_s[hi]) - h * h / 12.0 * (lap_s[hi] - lap_s[lo]))
        } else {
            hbar * wrap_phase((psi[b] * psi[a].conj()).arg())
        }
    };
    for j in j0 + 1..n {
        s[j] = s[j - 1] + step(j - 1, j);
    }
    for j in (0..j0).rev() {
        s[j] = s[j + 1] + step(j + 1, j);
    }
    // the integral only selects the branch; the value is the local phase on that branch
    let turn = 2.0 * PI * hbar;
    for j in 0..n {
        let local = hbar * psi[j].arg();
        s[j] = local + turn * ((s[j] - local) / turn).round();
    }
    Ok(MadelungBundle { r, s, p, grad_s, lap_s, mask, hbar })
}

fn fill_flat(v: &mut [f64]) {
    let n = v.len();
    let Some(first) = v.iter().position(|x| !x.is_nan()) else {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    };
    let first_val = v[first];
    for x in v.iter_mut().take(first) {
        *x = first_val;
    }
    let mut last = first_val;
    for x in v.iter_mut().take(n).skip(first) {
        if x.is_nan() {
            *x = last;
        } else {
            last = *x;
        }
    }
}

/// `ψ = R e^{iS/ℏ}`.
pub fn compose(b: &MadelungBundle) -> Result<ComplexField> {
    if b.r.len() != b.s.len() || b.r.len() != b.p.len() {
        return Err(Error::InvalidBundle("component lengths differ".into()));
    }
    if b.r.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidBundle("amplitude must be finite and non-negative".into()));
    }
    Ok(b.r.iter().zip(&b.s).map(|(&r, &s)| Complex64::from_polar(r, s / b.hbar)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_grid() -> Grid {
        make_grid(512, 20.0, Boundary::Periodic).unwrap()
    }

    #[test]
    fn grid_spacing_examples() {
        assert!((make_grid(256, 20.0, Boundary::Periodic).unwrap().spacing() - 0.078125).abs() < 1e-15);
        assert!((make_grid(101, 10.0, Boundary::DirichletZero).unwrap().spacing() - 0.1).abs() < 1e-15);
        assert!(make_grid(8, 1.0, Boundary::Periodic).is_err());
        assert!(make_grid(64, -1.0, Boundary::Periodic).is_err());
    }

    #[test]
    fn constants_reject_nonpositive() {
        assert!(Constants::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Constants::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert_eq!(Constants::natural().kt(), 1.0);
    }

    #[test]
    fn spectral_sine_is_exact() {
        let g = make_grid(128, 2.0 * PI, Boundary::Periodic).unwrap();
        let k = 5.0;
        let f: Vec<f64> = g.xs().iter().map(|x| (k * x).sin()).collect();
        let d = gradient(&f, &g).unwrap();
        let l = laplacian(&f, &g).unwrap();
        for (j, x) in g.xs().iter().enumerate() {
            assert!((d[j] - k * (k * x).cos()).abs() < 1e-10);
            assert!((l[j] + k * k * (k * x).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_derivatives() {
        let g = gauss_grid();
        let f: Vec<f64> = g.xs().iter().map(|x| (-x * x / 2.0).exp()).collect();
        let d = gradient(&f, &g).unwrap();
        let l = laplacian(&f, &g).unwrap();
        for (j, &x) in g.xs().iter().enumerate() {
            assert!((d[j] + x * f[j]).abs() < 1e-8);
            assert!((l[j] - (x * x - 1.0) * f[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        for b in [Boundary::Periodic, Boundary::DirichletZero] {
            let g = make_grid(64, 3.0, b).unwrap();
            let f = vec![2.5; 64];
            assert!(gradient(&f, &g).unwrap().iter().all(|v| v.abs() < 1e-10));
            assert!(laplacian(&f, &g).unwrap().iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn dirichlet_fd_is_sixth_order() {
        let err = |n: usize| {
            let g = make_grid(n, 1.0, Boundary::DirichletZero).unwrap();
            let f: Vec<f64> = g.xs().iter().map(|x| (PI * x).sin()).collect();
            let d = laplacian(&f, &g).unwrap();
            g.xs().iter().zip(&d).map(|(x, v)| (v + PI * PI * (PI * x).sin()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 30.0, "ratio {ratio}");
    }

    #[test]
    fn fornberg_reproduces_central_second_difference() {
        let c = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((c[0][2] - 1.0).abs() < 1e-14 && (c[1][2] + 2.0).abs() < 1e-14);
        assert!((c[0][1] + 0.5).abs() < 1e-14 && (c[2][1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrate_examples() {
        let g = make_grid(100, 7.0, Boundary::Periodic).unwrap();
        assert!((integrate(&vec![1.0; 100], &g).unwrap() - 7.0).abs() < 1e-12);
        let gd = make_grid(101, 7.0, Boundary::DirichletZero).unwrap();
        assert!((integrate(&vec![1.0; 101], &gd).unwrap() - 7.0).abs() < 1e-12);
        let g = gauss_grid();
        let pn: Vec<f64> = g.xs().iter().map(|x| (-x * x).exp() / PI.sqrt()).collect();
        assert!((integrate(&pn, &g).unwrap() - 1.0).abs() < 1e-10);
        let odd: Vec<f64> = g.xs().iter().map(|x| x * (-x * x).exp()).collect();
        assert!(integrate(&odd, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mask_segments_wrap_on_periodic_grid() {
        let flags = vec![true, true, false, false, true, true];
        let m = Mask::from_flags(flags);
        let segs = m.segments(true);
        assert_eq!(segs, vec![vec![4, 5, 0, 1]]);
        assert_eq!(m.segments(false), vec![vec![0, 1], vec![4, 5]]);
    }

    #[test]
    fn plane_wave_decomposition() {
        let g = make_grid(128, 10.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let k = 2.0 * PI * 3.0 / 10.0;
        let psi: ComplexField = g.xs().iter().map(|x| Complex64::from_polar(1.0 / 10f64.sqrt(), k * x)).collect();
        let b = decompose(&psi, &c, &g).unwrap();
        for j in 0..g.n() {
            assert!((b.r()[j] - 1.0 / 10f64.sqrt()).abs() < 1e-12);
            assert!((b.grad_s()[j] - k).abs() < 1e-10);
        }
    }

    #[test]
    fn boosted_gaussian_has_uniform_phase_gradient() {
        let g = gauss_grid();
        let c = Constants::natural();
        let p0 = 1.3;
        let psi: ComplexField = g
            .xs()
            .iter()
            .map(|x| Complex64::from_polar((-x * x / 2.0).exp() / PI.powf(0.25), p0 * x))
            .collect();
        let b = decompose(&psi, &c, &g).unwrap();
        for j in 0..g.n() {
            if b.mask().get(j) {
                assert!((b.grad_s()[j] - p0).abs() < 1e-8, "j={j} {}", b.grad_s()[j]);
            }
        }
        let back = compose(&b).unwrap();
        for j in 0..g.n() {
            if b.mask().get(j) {
                assert!((back[j] - psi[j]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_unnormalized() {
        let g = gauss_grid();
        let psi = vec![Complex64::new(1.0, 0.0); g.n()];
        assert!(matches!(decompose(&psi, &Constants::natural(), &g), Err(Error::NotNormalized(_))));
        let zero = vec![Complex64::new(0.0, 0.0); g.n()];
        assert!(matches!(decompose(&zero, &Constants::natural(), &g), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let g = make_grid(32, 4.0, Boundary::DirichletZero).unwrap();
        let f: Vec<f64> = g.xs().iter().map(|x| x * x * x - 2.0 * x).collect();
        let x = 1.2345;
        assert!((interpolate_cubic(&f, &g, x).unwrap() - (x * x * x - 2.0 * x)).abs() < 1e-12);
        assert!(interpolate_cubic(&f, &g, 4.5).is_none());
    }
}
