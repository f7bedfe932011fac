//! Vacuum fluctuation ratio: the mean quantum-potential shift produced by an
//! amplitude perturbation, the ratio forms built from it, and the external
//! and total momentum fluctuations.
//!
//! Logarithmic derivatives `∇f/f` are always taken as derivatives of `ln|f|`
//! on contiguous mask runs, so sums of logarithms differentiate linearly.

use crate::error::{Error, Result};
use crate::fields::{self, Constants, Grid, MadelungBundle, Mask, RealField, NODE_FLOOR};
use crate::madelung;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Amplitude perturbation `ε·δR`.
#[derive(Clone, Debug, Serialize)]
pub struct Perturbation {
    pub delta_r: RealField,
    pub epsilon: f64,
}

/// Declarative perturbation generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationShape {
    /// `δR = R`, a uniform relative change.
    UniformRelative,
    /// `δR = R_max·exp(−(x − centre)²/2w²)`.
    Bump { centre: f64, width: f64 },
    /// `δR = R·Σ aₖ sin(kπ(x − x₀)/L)` with seeded coefficients `aₖ ∈ [−1, 1]/k²`.
    RandomSmooth { modes: usize, seed: u64 },
}

impl Perturbation {
    pub fn new(delta_r: RealField, epsilon: f64) -> Self {
        Self { delta_r, epsilon }
    }

    pub fn from_shape(shape: &PerturbationShape, epsilon: f64, b: &MadelungBundle, g: &Grid) -> Result<Self> {
        let r = b.r();
        let delta_r = match *shape {
            PerturbationShape::UniformRelative => r.to_vec(),
            PerturbationShape::Bump { centre, width } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidArgument("bump width must be positive".into()));
                }
                let rmax = r.iter().cloned().fold(0.0, f64::max);
                g.xs().iter().map(|x| rmax * (-(x - centre).powi(2) / (2.0 * width * width)).exp()).collect()
            }
            PerturbationShape::RandomSmooth { modes, seed } => {
                let mut s = rng::stream(seed, "vft-perturbation", 0);
                let a: Vec<f64> = (1..=modes).map(|k| (2.0 * s.random::<f64>() - 1.0) / (k * k) as f64).collect();
                let (x0, l) = (g.bounds().0, g.length());
                g.xs()
                    .iter()
                    .zip(r)
                    .map(|(x, rv)| {
                        let y = std::f64::consts::PI * (x - x0) / l;
                        rv * a.iter().enumerate().map(|(k, ak)| ak * ((k + 1) as f64 * y).sin()).sum::<f64>()
                    })
                    .collect()
            }
        };
        Ok(Self { delta_r, epsilon })
    }

    /// `ε·δR`.
    pub fn scaled(&self) -> RealField {
        self.delta_r.iter().map(|d| self.epsilon * d).collect()
    }

    /// `δP = (R + εδR)² − R²`, exactly.
    pub fn delta_p(&self, b: &MadelungBundle) -> RealField {
        b.r().iter().zip(&self.delta_r).map(|(r, d)| (2.0 * r + self.epsilon * d) * self.epsilon * d).collect()
    }

    fn check(&self, b: &MadelungBundle, g: &Grid) -> Result<()> {
        g.check(&self.delta_r)?;
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be finite".into()));
        }
        for j in 0..g.n() {
            if b.mask().get(j) && b.r()[j] + self.epsilon * self.delta_r[j] < 0.0 {
                return Err(Error::InvalidArgument(format!("perturbed amplitude negative at index {j}")));
            }
        }
        Ok(())
    }
}

/// How `δR̄/R` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// `δŪ = −⟨εδR/R⟩_P·Ū` with a scalar P-weighted mean.
    #[default]
    Scalar,
    /// `δŪ = −∫P (εδR/R) U dx`.
    Pointwise,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaU {
    /// `Ū = ∫P U dx`.
    pub u_bar: f64,
    /// P-weighted mean of `εδR/R`.
    pub mean_ratio: f64,
    /// Formula route.
    pub formula: f64,
    /// `∫P (U′ − U) dx` with `U′ = −(ℏ²/2m)∇²R/(R + εδR)`: the amplitude in the
    /// denominator is perturbed, `∇²R` is not.
    pub direct: f64,
    /// `U′ − U` on the mask.
    #[serde(skip)]
    pub pointwise: RealField,
}

fn weighted_mean(f: &[f64], p: &[f64], mask: &Mask, g: &Grid) -> f64 {
    let w = fields::quadrature_weights(g);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..g.n() {
        if mask.get(j) {
            num += w[j] * p[j] * f[j];
            den += w[j] * p[j];
        }
    }
    num / den
}

pub fn delta_u_from_perturbation(
    b: &MadelungBundle,
    pert: &Perturbation,
    mode: MeanMode,
    c: &Constants,
    g: &Grid,
) -> Result<DeltaU> {
    pert.check(b, g)?;
    let mask = b.mask();
    let u = madelung::quantum_potential(b, c, g)?.r_form;
    let p = b.p();
    let r = b.r();
    let u_bar = weighted_mean(&u, p, mask, g);
    let rel: RealField = (0..g.n()).map(|j| if mask.get(j) { pert.epsilon * pert.delta_r[j] / r[j] } else { 0.0 }).collect();
    let mean_ratio = weighted_mean(&rel, p, mask, g);
    let formula = match mode {
        MeanMode::Scalar => -mean_ratio * u_bar,
        MeanMode::Pointwise => -weighted_mean(&rel.iter().zip(&u).map(|(a, b)| a * b).collect::<Vec<_>>(), p, mask, g),
    };
    // U·R = −(ℏ²/2m)∇²R is held fixed
    let pointwise: RealField = (0..g.n())
        .map(|j| if mask.get(j) { u[j] * r[j] / (r[j] + pert.epsilon * pert.delta_r[j]) - u[j] } else { 0.0 })
        .collect();
    let direct = weighted_mean(&pointwise, p, mask, g);
    Ok(DeltaU { u_bar, mean_ratio, formula, direct, pointwise })
}

/// `p(A)/p(−A) = exp(δŪ/ℏω)`.
pub fn vft_ratio(delta_u_bar: f64, c: &Constants) -> f64 {
    (delta_u_bar / c.kt()).exp()
}

/// The ratio forms evaluated from one perturbation.
#[derive(Clone, Debug, Serialize)]
pub struct RatioForms {
    pub epsilon: f64,
    /// `exp(−⟨δR/R⟩·Ã)`.
    pub linear_form: f64,
    /// `exp(−Ã·⟨ln((R+δR)/R)⟩)`.
    pub mean_log_form: f64,
    /// `exp(−Ã·ln⟨(R+δR)/R⟩)`.
    pub log_mean_form: f64,
    /// `exp(−Ã·ln(1 − δŪ/Ū))` with the direct `δŪ`.
    pub energy_form: f64,
    /// As printed: `exp(−Ã·⟨(R+δR)/R⟩)`.
    pub literal_mean_form: f64,
    /// As printed: `exp(−Ã)·(1 − δŪ/Ū)`.
    pub literal_energy_form: f64,
    /// Largest pairwise difference among `linear_form`, `mean_log_form`, `log_mean_form`, `energy_form`.
    pub max_pairwise: f64,
    /// `|δŪ_formula − δŪ_direct|`.
    pub delta_u_gap: f64,
}

pub fn ratio_forms_consistency(b: &MadelungBundle, pert: &Perturbation, c: &Constants, g: &Grid) -> Result<RatioForms> {
    let du = delta_u_from_perturbation(b, pert, MeanMode::Scalar, c, g)?;
    let a_tilde = du.u_bar / c.kt();
    let mask = b.mask();
    let (p, r) = (b.p(), b.r());
    let ratio: RealField =
        (0..g.n()).map(|j| if mask.get(j) { 1.0 + pert.epsilon * pert.delta_r[j] / r[j] } else { 1.0 }).collect();
    let mean_log = weighted_mean(&ratio.iter().map(|v| v.ln()).collect::<Vec<_>>(), p, mask, g);
    let mean = weighted_mean(&ratio, p, mask, g);
    let linear_form = (-du.mean_ratio * a_tilde).exp();
    let mean_log_form = (-a_tilde * mean_log).exp();
    let log_mean_form = (-a_tilde * mean.ln()).exp();
    let energy_form = (-a_tilde * (1.0 - du.direct / du.u_bar).ln()).exp();
    let forms = [linear_form, mean_log_form, log_mean_form, energy_form];
    let mut max_pairwise = 0.0_f64;
    for i in 0..forms.len() {
        for k in i + 1..forms.len() {
            max_pairwise = max_pairwise.max((forms[i] - forms[k]).abs());
        }
    }
    Ok(RatioForms {
        epsilon: pert.epsilon,
        linear_form,
        mean_log_form,
        log_mean_form,
        energy_form,
        literal_mean_form: (-a_tilde * mean).exp(),
        literal_energy_form: (-a_tilde).exp() * (1.0 - du.direct / du.u_bar),
        max_pairwise,
        delta_u_gap: (du.formula - du.direct).abs(),
    })
}

/// A field's logarithmic derivative with sign-crossings masked out.
#[derive(Clone, Debug, Serialize)]
pub struct LogDerivative {
    pub values: RealField,
    #[serde(skip)]
    pub mask: Mask,
    /// Number of sign changes between adjacent valid points (each splits a run).
    pub sign_changes: usize,
}

/// Points of `within` where `|f| ≥ floor²·max|f|`, with sign changes split off,
/// and the number of sign changes found.
pub fn log_mask(f: &[f64], within: &Mask, g: &Grid) -> Result<(Mask, usize)> {
    g.check(f)?;
    let fmax = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let floor = NODE_FLOOR * NODE_FLOOR * fmax;
    let mut flags: Vec<bool> = (0..g.n()).map(|j| within.get(j) && fmax > 0.0 && f[j].abs() >= floor).collect();
    let mut sign_changes = 0;
    let n = g.n();
    let pairs = if g.is_periodic() { n } else { n - 1 };
    for j in 0..pairs {
        let k = (j + 1) % n;
        if flags[j] && flags[k] && f[j].signum() != f[k].signum() {
            sign_changes += 1;
            flags[k] = false;
        }
    }
    Ok((Mask::from_flags(flags), sign_changes))
}

/// `∇ln|f|` on the runs of `mask`; `f` must not vanish there.
pub fn log_derivative_on(f: &[f64], mask: &Mask, g: &Grid) -> Result<RealField> {
    if mask.count() == 0 {
        return Ok(vec![0.0; g.n()]);
    }
    let abs: RealField = f.iter().map(|v| v.abs()).collect();
    fields::log_gradient(&abs, mask, g)
}

/// `∇ln|f|` on points where `|f| ≥ floor²·max|f|`, intersected with `within`.
/// Sign changes split runs so no stencil straddles a zero.
pub fn log_derivative(f: &[f64], within: &Mask, g: &Grid) -> Result<LogDerivative> {
    let (mask, sign_changes) = log_mask(f, within, g)?;
    let values = log_derivative_on(f, &mask, g)?;
    Ok(LogDerivative { values, mask, sign_changes })
}

/// Both routes of the external momentum fluctuation.
#[derive(Clone, Debug, Serialize)]
pub struct ExternalMomentum {
    /// `−(ℏ/2)∇δP/δP`.
    pub route_1: RealField,
    /// `(ℏ/2)[∇p(A)/p(A) − ∇p(−A)/p(−A)]`, when the pair is supplied.
    pub route_2: Option<RealField>,
    #[serde(skip)]
    pub mask: Mask,
    pub sign_changes: usize,
}

/// The `p(A)` and `p(−A)` fields of the ratio; positive on the mask.
pub struct RatioFields<'a> {
    pub p_plus: &'a [f64],
    pub p_minus: &'a [f64],
}

pub fn delta_p_ext(delta_p: &[f64], pair: Option<RatioFields>, within: &Mask, c: &Constants, g: &Grid) -> Result<ExternalMomentum> {
    let hb = c.hbar();
    if delta_p.iter().all(|v| *v == 0.0) {
        return Ok(ExternalMomentum {
            route_1: vec![0.0; g.n()],
            route_2: pair.map(|_| vec![0.0; g.n()]),
            mask: within.clone(),
            sign_changes: 0,
        });
    }
    let ld = log_derivative(delta_p, within, g)?;
    let route_1: RealField = ld.values.iter().map(|v| -0.5 * hb * v).collect();
    let mut mask = ld.mask.clone();
    let route_2 = match pair {
        None => None,
        Some(rf) => {
            let a = log_derivative(rf.p_plus, &mask, g)?;
            let b = log_derivative(rf.p_minus, &a.mask, g)?;
            mask = b.mask.clone();
            Some((0..g.n()).map(|j| if mask.get(j) { 0.5 * hb * (a.values[j] - b.values[j]) } else { 0.0 }).collect())
        }
    };
    Ok(ExternalMomentum { route_1, route_2, mask, sign_changes: ld.sign_changes })
}

/// Routes of the total momentum fluctuation.
#[derive(Clone, Debug, Serialize)]
pub struct TotalMomentum {
    /// `m u + δp_ext`.
    pub route_a: RealField,
    /// `−(ℏ/2)∇(PδP)/(PδP)`.
    pub route_b: RealField,
    /// `−(ℏ/2)[3∇R/R + ∇δR/δR]`, first order in `ε`.
    pub route_c: RealField,
    /// `−(ℏ/2)∇[ln P + ln p(−A) − ln p(A)]`, when the pair is supplied.
    pub log_sum: Option<RealField>,
    /// `−(ℏ/2)∇ln{P + p(−A) − p(A)}` as printed, when the pair is supplied.
    pub literal_log_of_sum: Option<RealField>,
    #[serde(skip)]
    pub mask: Mask,
    pub max_ab: f64,
    /// Largest `|A − C|` relative to `max |A|`.
    pub max_ac_relative: f64,
    pub max_a_log_sum: Option<f64>,
}

fn max_abs_diff(a: &[f64], b: &[f64], mask: &Mask) -> f64 {
    (0..a.len()).filter(|&j| mask.get(j)).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max)
}

pub fn delta_p_tot(
    b: &MadelungBundle,
    pert: &Perturbation,
    pair: Option<RatioFields>,
    c: &Constants,
    g: &Grid,
) -> Result<TotalMomentum> {
    pert.check(b, g)?;
    let hb = c.hbar();
    let n = g.n();
    let dp = pert.delta_p(b);
    let p = b.p();
    let mask = b.mask().clone();
    let zero_pert = dp.iter().all(|v| *v == 0.0);
    let (route_a, route_b, route_c, mb) = if zero_pert {
        // the conservative limit is the osmotic momentum itself
        let h = madelung::osmotic_fields(b, c, g)?;
        let mu: RealField = h.delta_p.iter().zip(mask.flags()).map(|(d, &k)| if k { *d } else { 0.0 }).collect();
        (mu.clone(), mu.clone(), mu, mask.clone())
    } else {
        // every logarithm is differentiated on one common mask so sums stay linear
        let prod: RealField = p.iter().zip(&dp).map(|(a, d)| a * d).collect();
        let (m1, _) = log_mask(p, &mask, g)?;
        let (m2, _) = log_mask(&dp, &m1, g)?;
        let (m3, _) = log_mask(&prod, &m2, g)?;
        let (m, _) = log_mask(&pert.delta_r, &m3, g)?;
        let lpv = log_derivative_on(p, &m, g)?;
        let ldp = log_derivative_on(&dp, &m, g)?;
        let lprod = log_derivative_on(&prod, &m, g)?;
        let lr = log_derivative_on(b.r(), &m, g)?;
        let ldr = log_derivative_on(&pert.delta_r, &m, g)?;
        let pick = |f: &dyn Fn(usize) -> f64| -> RealField { (0..n).map(|j| if m.get(j) { f(j) } else { 0.0 }).collect() };
        let route_a = pick(&|j| -0.5 * hb * lpv[j] - 0.5 * hb * ldp[j]);
        let route_b = pick(&|j| -0.5 * hb * lprod[j]);
        let route_c = pick(&|j| -0.5 * hb * (3.0 * lr[j] + ldr[j]));
        (route_a, route_b, route_c, m)
    };
    let max_ab = max_abs_diff(&route_a, &route_b, &mb);
    let scale = (0..n).filter(|&j| mb.get(j)).map(|j| route_a[j].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let inner = mb.eroded(4, g.is_periodic());
    let max_ac_relative = max_abs_diff(&route_a, &route_c, &inner) / scale;
    let (log_sum, literal_log_of_sum, max_a_log_sum) = match pair {
        None => (None, None, None),
        Some(rf) => {
            let (mp, _) = log_mask(rf.p_plus, &mb, g)?;
            let (ms, _) = log_mask(rf.p_minus, &mp, g)?;
            let lplus = log_derivative_on(rf.p_plus, &ms, g)?;
            let lminus = log_derivative_on(rf.p_minus, &ms, g)?;
            let lpv = log_derivative_on(p, &ms, g)?;
            // route A again, on the pair's mask
            let ldp = if zero_pert { vec![0.0; n] } else { log_derivative_on(&dp, &ms, g)? };
            let a_ms: RealField = (0..n).map(|j| -0.5 * hb * (lpv[j] + ldp[j])).collect();
            let log_sum: RealField =
                (0..n).map(|j| if ms.get(j) { -0.5 * hb * (lpv[j] + lminus[j] - lplus[j]) } else { 0.0 }).collect();
            let arg: RealField = (0..n).map(|j| p[j] + rf.p_minus[j] - rf.p_plus[j]).collect();
            let lprinted = log_derivative(&arg, &mask, g)?;
            let printed = lprinted.values.iter().map(|v| -0.5 * hb * v).collect();
            let gap = max_abs_diff(&a_ms, &log_sum, &ms);
            (Some(log_sum), Some(printed), Some(gap))
        }
    };
    Ok(TotalMomentum { route_a, route_b, route_c, log_sum, literal_log_of_sum, mask: mb, max_ab, max_ac_relative, max_a_log_sum })
}

/// Everything the VFT evaluation reports for one state and perturbation.
#[derive(Clone, Debug, Serialize)]
pub struct VftReport {
    pub u_bar: f64,
    pub delta_u_bar: f64,
    pub delta_u_direct: f64,
    pub a_tilde: f64,
    pub at: f64,
    pub ratio: f64,
    pub mean_ratio: f64,
    pub mode: MeanMode,
    pub forms: RatioForms,
    pub delta_p_ext: RealField,
    pub delta_p_tot: RealField,
    pub max_ab: f64,
    pub max_ac_relative: f64,
    /// `∇(½ δU δt)` with `δt = 1/ω` and pointwise `δU`.
    pub ext_action_gradient: RealField,
    /// `(ℏ/2)∇(δU/ℏω)`.
    pub at_gradient: RealField,
}

impl VftReport {
    /// Largest deviation from `At = δŪ/ℏω`, `ratio = e^{At}`, `At = −⟨δR/R⟩Ã`.
    pub fn invariant_error(&self) -> f64 {
        let e1 = (self.ratio - self.at.exp()).abs();
        let e2 = match self.mode {
            MeanMode::Scalar => (self.at + self.mean_ratio * self.a_tilde).abs(),
            MeanMode::Pointwise => 0.0,
        };
        e1.max(e2)
    }
}

pub fn vft_report(b: &MadelungBundle, pert: &Perturbation, mode: MeanMode, c: &Constants, g: &Grid) -> Result<VftReport> {
    let du = delta_u_from_perturbation(b, pert, mode, c, g)?;
    let forms = ratio_forms_consistency(b, pert, c, g)?;
    let tot = delta_p_tot(b, pert, None, c, g)?;
    let ext = delta_p_ext(&pert.delta_p(b), None, b.mask(), c, g)?;
    let kt = c.kt();
    let dt = 1.0 / c.omega();
    let half: RealField = du.pointwise.iter().map(|v| 0.5 * v * dt).collect();
    let at_field: RealField = du.pointwise.iter().map(|v| 0.5 * c.hbar() * v / kt).collect();
    let at = du.formula / kt;
    Ok(VftReport {
        u_bar: du.u_bar,
        delta_u_bar: du.formula,
        delta_u_direct: du.direct,
        a_tilde: du.u_bar / kt,
        at,
        ratio: vft_ratio(du.formula, c),
        mean_ratio: du.mean_ratio,
        mode,
        forms,
        delta_p_ext: ext.route_1,
        delta_p_tot: tot.route_a,
        max_ab: tot.max_ab,
        max_ac_relative: tot.max_ac_relative,
        ext_action_gradient: fields::masked_derivative(&half, b.mask(), g, 1)?,
        at_gradient: fields::masked_derivative(&at_field, b.mask(), g, 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{decompose, make_grid, Boundary, ComplexField};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn box_ground(n: usize) -> (Grid, Constants, MadelungBundle) {
        let g = make_grid(n, 1.0, Boundary::DirichletZero).unwrap();
        let c = Constants::new(1.0, 1.0, PI * PI / 2.0, 1.0).unwrap();
        let psi: ComplexField = g.xs().iter().map(|x| Complex64::new(2f64.sqrt() * (PI * x).sin(), 0.0)).collect();
        let b = decompose(&psi, &c, &g).unwrap();
        (g, c, b)
    }

    #[test]
    fn ratio_examples() {
        let c = Constants::natural();
        assert_eq!(vft_ratio(0.0, &c), 1.0);
        assert!((vft_ratio(1.0, &c) - std::f64::consts::E).abs() < 1e-15);
        assert!((vft_ratio(-0.3, &c) * vft_ratio(0.3, &c) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_perturbation_is_conservative_limit() {
        let (g, c, b) = box_ground(401);
        let pert = Perturbation::new(vec![0.0; g.n()], 1.0);
        let du = delta_u_from_perturbation(&b, &pert, MeanMode::Scalar, &c, &g).unwrap();
        assert_eq!(du.formula, 0.0);
        assert_eq!(du.direct, 0.0);
        let f = ratio_forms_consistency(&b, &pert, &c, &g).unwrap();
        for v in [f.linear_form, f.mean_log_form, f.log_mean_form, f.energy_form] {
            assert_eq!(v, 1.0);
        }
        let t = delta_p_tot(&b, &pert, None, &c, &g).unwrap();
        let h = madelung::osmotic_fields(&b, &c, &g).unwrap();
        for j in 0..g.n() {
            if t.mask.eroded(4, false).get(j) {
                assert!((t.route_a[j] - c.mass() * h.u[j]).abs() < 1e-6 * (1.0 + h.u[j].abs()), "{j} {} {}", t.route_a[j], h.u[j]);
            }
        }
    }

    #[test]
    fn box_uniform_relative_ratio() {
        let (g, c, b) = box_ground(401);
        let pert = Perturbation::from_shape(&PerturbationShape::UniformRelative, 0.01, &b, &g).unwrap();
        let du = delta_u_from_perturbation(&b, &pert, MeanMode::Scalar, &c, &g).unwrap();
        assert!((du.formula + 0.01 * du.u_bar).abs() < 1e-12);
        let r = vft_ratio(du.formula, &c);
        assert!((r - (-0.01f64).exp()).abs() < 1e-6, "{r}");
    }

    #[test]
    fn negative_mean_perturbation_raises_u() {
        let (g, c, b) = box_ground(201);
        let pert = Perturbation::from_shape(&PerturbationShape::UniformRelative, -0.05, &b, &g).unwrap();
        assert!(delta_u_from_perturbation(&b, &pert, MeanMode::Scalar, &c, &g).unwrap().formula > 0.0);
        let bad = Perturbation::from_shape(&PerturbationShape::UniformRelative, -2.0, &b, &g).unwrap();
        assert!(delta_u_from_perturbation(&b, &bad, MeanMode::Scalar, &c, &g).is_err());
    }

    #[test]
    fn external_momentum_examples() {
        let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let all = Mask::all(g.n());
        let flat = delta_p_ext(&vec![0.3; g.n()], None, &all, &c, &g).unwrap();
        assert!(flat.route_1.iter().all(|v| v.abs() < 1e-12));
        let s = 1.2;
        let gauss: RealField = g.xs().iter().map(|x| (-x * x / (2.0 * s * s)).exp()).collect();
        let e = delta_p_ext(&gauss, None, &all, &c, &g).unwrap();
        for j in 0..g.n() {
            if e.mask.eroded(4, true).get(j) {
                assert!((e.route_1[j] - g.x(j) / (2.0 * s * s)).abs() < 1e-8);
            }
        }
        let sym = delta_p_ext(&gauss, Some(RatioFields { p_plus: &gauss, p_minus: &gauss }), &all, &c, &g).unwrap();
        assert!(sym.route_2.unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn proportional_delta_p_doubles_osmotic_momentum() {
        let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
        let c = Constants::natural();
        let psi: ComplexField = g.xs().iter().map(|x| Complex64::new((-x * x / 2.0).exp() / PI.powf(0.25), 0.0)).collect();
        let b = decompose(&psi, &c, &g).unwrap();
        // (R + εR)² − R² ∝ P
        let pert = Perturbation::from_shape(&PerturbationShape::UniformRelative, 0.1, &b, &g).unwrap();
        let t = delta_p_tot(&b, &pert, None, &c, &g).unwrap();
        for j in 0..g.n() {
            if t.mask.eroded(4, true).get(j) {
                assert!((t.route_a[j] - 2.0 * g.x(j)).abs() < 1e-8);
            }
        }
        assert!(t.max_ab < 1e-10);
    }
}
