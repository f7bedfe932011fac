use num_complex::Complex64;
use std::f64::consts::PI;
use subq_core::fields::{decompose, make_grid, Boundary, ComplexField, Constants, Grid};
use subq_core::schrodinger::{evolve, EvolutionSettings, Potential};
use subq_core::thermo::{self, RampSettings};

fn packet(g: &Grid, sigma: f64) -> ComplexField {
    let a = (2.0 * PI * sigma * sigma).powf(-0.25);
    g.xs().iter().map(|x| Complex64::new(a * (-x * x / (4.0 * sigma * sigma)).exp(), 0.0)).collect()
}

#[test]
fn free_gaussian_chain_is_self_consistent() {
    let g = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let ev = evolve(&packet(&g, 1.0), &Potential::Free, &EvolutionSettings::new(1e-3, 1000).every(1000), &c, &g).unwrap();
    let p0 = decompose(&ev.frames[0], &c, &g).unwrap();
    let pt = decompose(&ev.frames[1], &c, &g).unwrap();
    let chain = thermo::thermodynamic_chain(p0.p(), pt.p(), &c, &g).unwrap();
    println!("{chain:?}");
    assert!(chain.boltzmann_residual < 1e-6);
    assert!(chain.ratio_mismatch < 1e-8);
    assert!(chain.gradient_mismatch < 1e-8);
}

#[test]
fn harmonic_ground_fluctuation_energy() {
    let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let psi: ComplexField = g.xs().iter().map(|x| Complex64::new((-x * x / 2.0).exp() / PI.powf(0.25), 0.0)).collect();
    let b = decompose(&psi, &c, &g).unwrap();
    let e = thermo::fluctuation_energy(&b, &c, &g).unwrap();
    assert!((e - 0.25).abs() < 1e-8, "{e}");
}

#[test]
fn adiabatic_ramp_sweep() {
    let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let mut drifts = Vec::new();
    for t in [2.0, 20.0, 200.0] {
        let rs = RampSettings { omega_start: 1.0, omega_end: 2.0, ramp_time: t, dt: 0.01, samples_per_time: 10.0 };
        let run = thermo::ramp_study(&rs, &c, &g).unwrap();
        println!("T={t} drift={:.3e} routes {:?} rel {:.3e}", run.invariant_drift, run.work, run.work.relative_difference());
        drifts.push(run.invariant_drift);
        if t == 200.0 {
            assert!(run.work.relative_difference() < 0.05);
        }
    }
    assert!(drifts[2] < 1e-3);
    assert!(drifts[0] > 10.0 * 1e-3);
    assert!(drifts[0] > drifts[1] && drifts[1] > drifts[2]);
}

#[test]
fn free_flow_density_reconstruction() {
    let g = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let ev = evolve(&packet(&g, 1.0), &Potential::Free, &EvolutionSettings::new(1e-3, 1000).every(10), &c, &g).unwrap();
    let frames: Vec<_> = ev.frames.iter().map(|f| decompose(f, &c, &g).unwrap()).collect();
    let starts: Vec<f64> = (0..41).map(|i| -3.0 + 0.15 * i as f64).collect();
    let r = thermo::density_along_paths(&frames, 0.01, &starts, &c, &g).unwrap();
    println!("{r:?}");
    assert!(r.max_relative_error < 1e-3);
}

#[test]
fn conservative_work_vanishes() {
    let g = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let ev = evolve(&packet(&g, 1.0), &Potential::Free, &EvolutionSettings::new(1e-3, 1000).every(50), &c, &g).unwrap();
    let frames: Vec<_> = ev.frames.iter().map(|f| decompose(f, &c, &g).unwrap()).collect();
    let w = thermo::conservative_work(&frames, 0.05, &c, &g).unwrap();
    println!("{w:?}");
    assert!(w.factorised.abs() < 1e-6);
}
