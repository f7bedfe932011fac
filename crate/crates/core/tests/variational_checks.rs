use num_complex::Complex64;
use std::f64::consts::PI;
use subq_core::fields::{decompose, make_grid, Boundary, ComplexField, Constants, Grid, MadelungBundle};
use subq_core::schrodinger::{diagonalize_reference, evolve, EvolutionSettings, Potential};
use subq_core::variational::*;
use subq_core::Error;

fn frames(psi0: &[Complex64], v: &Potential, g: &Grid, dt: f64, steps: usize) -> Vec<MadelungBundle> {
    let c = Constants::natural();
    let ev = evolve(psi0, v, &EvolutionSettings::new(dt, steps), &c, g).unwrap();
    ev.frames.iter().map(|f| decompose(f, &c, g).unwrap()).collect()
}

fn free_gaussian(g: &Grid) -> ComplexField {
    let a = (2.0 * PI).powf(-0.25);
    g.xs().iter().map(|x| Complex64::new(a * (-x * x / 4.0).exp(), 0.0)).collect()
}

#[test]
fn ground_state_energies_match_oracles() {
    let c = Constants::natural();
    let s = MinimizeSettings::default();

    let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
    let v = Potential::Harmonic { k_spring: 1.0 };
    let gs = minimize_ground_state(&v, &c, &g, &s).unwrap();
    let oracle = diagonalize_reference(&v, 0.0, 1, &c, &g).unwrap()[0].energy;
    eprintln!("harmonic {} oracle {oracle} iterations {}", gs.energy, gs.iterations);
    assert!((gs.energy - 0.5).abs() < 1e-4);
    assert!((gs.energy - oracle).abs() < 1e-8);
    assert!(stationary_hj_gap(&gs, &v, &c, &g, 1e-6).unwrap() < 1e-3);

    let g = make_grid(201, 1.0, Boundary::DirichletZero).unwrap();
    let v = Potential::Box { length: 1.0 };
    let gs = minimize_ground_state(&v, &c, &g, &s).unwrap();
    eprintln!("box {} exact {}", gs.energy, PI * PI / 2.0);
    assert!((gs.energy - PI * PI / 2.0).abs() < 1e-3);
    let gap = stationary_hj_gap(&gs, &v, &c, &g, 1e-6).unwrap();
    eprintln!("box V+U−E gap {gap:.3e}");
    assert!(gap < 1e-3);

    let g = make_grid(256, 12.0, Boundary::Periodic).unwrap();
    let v = Potential::Quartic { coefficient: 1.0 };
    let gs = minimize_ground_state(&v, &c, &g, &s).unwrap();
    let oracle = diagonalize_reference(&v, 0.0, 1, &c, &g).unwrap()[0].energy;
    eprintln!("quartic {} oracle {oracle}", gs.energy);
    assert!((gs.energy - oracle).abs() < 1e-3);
    assert!(stationary_hj_gap(&gs, &v, &c, &g, 1e-6).unwrap() < 1e-3);
}

#[test]
fn box_energy_refines_at_second_order() {
    let c = Constants::natural();
    let v = Potential::Box { length: 1.0 };
    let e: Vec<f64> = [51, 101, 201]
        .iter()
        .map(|&n| {
            let g = make_grid(n, 1.0, Boundary::DirichletZero).unwrap();
            minimize_ground_state(&v, &c, &g, &MinimizeSettings::default()).unwrap().energy
        })
        .collect();
    let r = refinement_ratio([e[0], e[1], e[2]]);
    eprintln!("box energies {e:?} ratio {r}");
    assert!((r - 4.0).abs() < 0.1);
}

#[test]
fn inverted_well_is_rejected() {
    let c = Constants::natural();
    let g = make_grid(128, 10.0, Boundary::Periodic).unwrap();
    let r = minimize_ground_state(&Potential::Harmonic { k_spring: -1.0 }, &c, &g, &MinimizeSettings::default());
    assert!(matches!(r, Err(Error::NonConfining(_))));
}

#[test]
fn stationary_ground_state_action_vanishes() {
    let c = Constants::natural();
    let g = make_grid(128, 20.0, Boundary::Periodic).unwrap();
    let v = Potential::Harmonic { k_spring: 1.0 };
    let st = &diagonalize_reference(&v, 0.0, 1, &c, &g).unwrap()[0].state;
    let psi: ComplexField = st.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let dt = 2.0 * PI / 2000.0;
    let fr = frames(&psi, &v, &g, dt, 2000);
    let a = action_value(&fr, 0.0, dt, &v, &c, &g).unwrap();
    eprintln!("ground state A {:.3e} ψ-form {:.3e} rel {:.3e}", a.value, a.psi_form, a.relative_difference);
    assert!(a.value.abs() < 1e-6 * a.scale);
    assert!(a.relative_difference < 1e-6);
}

#[test]
fn plane_wave_action_vanishes() {
    let c = Constants::natural();
    let g = make_grid(64, 10.0, Boundary::Periodic).unwrap();
    let k = 2.0 * PI * 3.0 / g.length();
    let a0 = 1.0 / g.length().sqrt();
    let psi: ComplexField = g.xs().iter().map(|x| Complex64::from_polar(a0, k * x)).collect();
    let fr = frames(&psi, &Potential::Free, &g, 1e-3, 100);
    let a = action_value(&fr, 0.0, 1e-3, &Potential::Free, &c, &g).unwrap();
    eprintln!("plane wave A {:.3e} rel {:.3e}", a.value, a.relative_difference);
    assert!(a.value.abs() < 1e-6 * a.scale);
    assert!(a.relative_difference < 1e-6);
}

#[test]
fn off_shell_action_is_nonzero_and_routes_agree() {
    let c = Constants::natural();
    let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
    let dt = 2.5e-3;
    let fr: Vec<MadelungBundle> = (0..160)
        .map(|n| {
            let t = n as f64 * dt;
            let psi: ComplexField = g
                .xs()
                .iter()
                .map(|&x| {
                    let r = (-(x - 0.3 * t).powi(2) / 3.0).exp() * (1.0 + 0.2 * (1.3 * x).cos());
                    let s = 0.4 * (2.0 * PI * x / 20.0).sin() + 0.7 * t * t;
                    Complex64::from_polar(r, s)
                })
                .collect();
            let psi = subq_core::fields::normalize(&psi, &g).unwrap();
            decompose(&psi, &c, &g).unwrap()
        })
        .collect();
    let v = Potential::Harmonic { k_spring: 1.0 };
    let a = action_value(&fr, 0.0, dt, &v, &c, &g).unwrap();
    eprintln!("off-shell A {:.6e} ψ-form {:.6e} rel {:.3e}", a.value, a.psi_form, a.relative_difference);
    assert!(a.value.abs() > 1e-2 * a.scale);
    assert!(a.relative_difference < 1e-6);
}

#[test]
fn solver_frames_are_stationary() {
    let c = Constants::natural();
    let g = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    let dt = 1e-3;
    let fr = frames(&free_gaussian(&g), &Potential::Free, &g, dt, 200);
    let h = HydroHistory::from_frames(&fr, 0.0, dt).unwrap();
    let eta = test_perturbation(h.len(), 0.0, 2.0, 11, &g).unwrap();
    let es = el_residual_s(&h, &eta, 1e-3, &Potential::Free, &c, &g).unwrap();
    let ep = el_residual_p(&h, &eta, 1e-3, &Potential::Free, &c, &g).unwrap();
    eprintln!("S: {:.3e} vs {:.3e}; P: {:.3e} vs {:.3e}", es.directional, es.assembled, ep.directional, ep.assembled);
    assert!(es.directional.abs() < 1e-4 && ep.directional.abs() < 1e-4);
    assert!(es.mismatch() < 1e-8 && ep.mismatch() < 1e-6);
}

#[test]
fn corrupted_phase_matches_bracket() {
    let c = Constants::natural();
    let g = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    let dt = 1e-3;
    let fr = frames(&free_gaussian(&g), &Potential::Free, &g, dt, 200);
    let mut h = HydroHistory::from_frames(&fr, 0.0, dt).unwrap();
    let xs = g.xs();
    // 0.1 sin(kx), k the periodic wavenumber nearest 1
    let k = 2.0 * PI * 6.0 / g.length();
    for n in 0..h.len() {
        for j in 0..g.n() {
            h.s[n][j] += 0.1 * (k * xs[j]).sin();
            h.grad_s[n][j] += 0.1 * k * (k * xs[j]).cos();
        }
    }
    let eta = test_perturbation(h.len(), 0.0, 2.0, 5, &g).unwrap();
    let es = el_residual_s(&h, &eta, 1e-3, &Potential::Free, &c, &g).unwrap();
    let ep = el_residual_p(&h, &eta, 1e-3, &Potential::Free, &c, &g).unwrap();
    eprintln!("S: {:.6e} vs {:.6e}; P: {:.6e} vs {:.6e}", es.directional, es.assembled, ep.directional, ep.assembled);
    assert!(es.directional.abs() > 1e-4);
    assert!(es.mismatch() < 1e-4 && ep.mismatch() < 1e-4);
}

#[test]
fn density_variation_converges_at_second_order() {
    let c = Constants::natural();
    let g = make_grid(256, 40.0, Boundary::Periodic).unwrap();
    let dt = 2e-3;
    let fr = frames(&free_gaussian(&g), &Potential::Free, &g, dt, 50);
    let h = HydroHistory::from_frames(&fr, 0.0, dt).unwrap();
    // large-amplitude η so the O(ε²) term dominates round-off
    let eta: Vec<_> = test_perturbation(h.len(), 0.0, 2.0, 9, &g)
        .unwrap()
        .into_iter()
        .map(|f| f.iter().map(|x| 0.05 * x).collect::<Vec<f64>>())
        .collect();
    let errs: Vec<f64> = [1e-1, 1e-2]
        .iter()
        .map(|&e| el_residual_p(&h, &eta, e, &Potential::Free, &c, &g).unwrap().mismatch())
        .collect();
    let tiny = el_residual_p(&h, &eta, 1e-4, &Potential::Free, &c, &g).unwrap().mismatch();
    eprintln!("ε-sweep mismatches {errs:?}, ε=1e-4 {tiny:.3e}");
    let r = errs[0] / errs[1];
    assert!(r > 80.0 && r < 120.0, "ratio {r}");
    assert!(tiny < errs[1]);
}

#[test]
fn perturbation_on_endpoint_is_rejected() {
    let c = Constants::natural();
    let g = make_grid(128, 20.0, Boundary::Periodic).unwrap();
    let fr = frames(&free_gaussian(&g), &Potential::Free, &g, 1e-2, 10);
    let h = HydroHistory::from_frames(&fr, 0.0, 1e-2).unwrap();
    let mut eta = test_perturbation(h.len(), 0.0, 1.0, 1, &g).unwrap();
    eta[1][64] = 1e-3;
    assert!(matches!(el_residual_s(&h, &eta, 1e-3, &Potential::Free, &c, &g), Err(Error::InvalidArgument(_))));
}
