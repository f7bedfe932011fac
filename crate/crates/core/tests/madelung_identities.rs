use std::f64::consts::PI;
use subq_core::fields::{decompose, make_grid, Boundary, Constants, Grid, MadelungBundle};
use subq_core::madelung::{self, equivariance_summary, integrate_trajectories, sample_trajectories};
use subq_core::schrodinger::{evolve, EvolutionSettings, InitialState, Potential, SuperpositionTerm};
use subq_core::thermo;

struct Case {
    name: &'static str,
    g: Grid,
    c: Constants,
    v: Potential,
    init: InitialState,
}

fn corpus() -> Vec<Case> {
    let nat = Constants::natural();
    let harmonic = Potential::Harmonic { k_spring: 1.0 };
    let wide = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    vec![
        Case { name: "free gaussian", g: wide, c: nat, v: Potential::Free, init: InitialState::Gaussian { sigma: 1.0, x0: 0.0, p0: 0.0 } },
        Case { name: "boosted gaussian", g: wide, c: nat, v: Potential::Free, init: InitialState::Gaussian { sigma: 1.0, x0: 0.0, p0: 0.7 } },
        Case {
            name: "harmonic ground",
            g: make_grid(256, 20.0, Boundary::Periodic).unwrap(),
            c: nat,
            v: harmonic.clone(),
            init: InitialState::Eigenstate { n: 0 },
        },
        Case {
            name: "harmonic superposition",
            g: wide,
            c: nat,
            v: harmonic.clone(),
            init: InitialState::Superposition {
                terms: vec![SuperpositionTerm { n: 0, re: 0.8f64.sqrt(), im: 0.0 }, SuperpositionTerm { n: 2, re: 0.0, im: 0.2f64.sqrt() }],
            },
        },
        Case { name: "coherent state", g: wide, c: nat, v: harmonic, init: InitialState::Gaussian { sigma: 0.5f64.sqrt(), x0: 1.5, p0: 0.0 } },
        Case {
            name: "box ground",
            g: make_grid(401, 1.0, Boundary::DirichletZero).unwrap(),
            c: Constants::new(1.0, 1.0, PI * PI / 2.0, 1.0).unwrap(),
            v: Potential::Box { length: 1.0 },
            init: InitialState::Eigenstate { n: 0 },
        },
        Case {
            name: "quartic ground",
            g: make_grid(256, 12.0, Boundary::Periodic).unwrap(),
            c: nat,
            v: Potential::Quartic { coefficient: 1.0 },
            init: InitialState::Eigenstate { n: 0 },
        },
    ]
}

fn bundle(case: &Case) -> MadelungBundle {
    let psi = case.init.prepare(&case.v, &case.c, &case.g).unwrap();
    decompose(&psi, &case.c, &case.g).unwrap()
}

#[test]
fn quantum_potential_forms_agree_on_corpus() {
    for case in corpus() {
        let q = madelung::quantum_potential(&bundle(&case), &case.c, &case.g).unwrap();
        eprintln!("{}: {:.3e}", case.name, q.max_relative_difference);
        assert!(q.max_relative_difference < 1e-6, "{}", case.name);
    }
}

#[test]
fn mean_quantum_force_vanishes_on_corpus() {
    for case in corpus() {
        let m = madelung::mean_grad_u(&bundle(&case), &case.c, &case.g).unwrap();
        eprintln!("{}: {m:.3e}", case.name);
        assert!(m.abs() < 1e-7, "{}", case.name);
    }
}

#[test]
fn reference_quantum_potential_values() {
    let cases = corpus();
    let h = &cases[2];
    let b = bundle(h);
    let q = madelung::quantum_potential(&b, &h.c, &h.g).unwrap();
    let j0 = h.g.n() / 2;
    assert!((q.r_form[j0] - 0.5).abs() < 1e-6, "{}", q.r_form[j0]);

    let bx = &cases[5];
    let b = bundle(bx);
    let q = madelung::quantum_potential(&b, &bx.c, &bx.g).unwrap();
    let (num, den) = (0..bx.g.n())
        .filter(|&j| b.mask().get(j))
        .fold((0.0, 0.0), |(a, d), j| (a + b.p()[j] * q.r_form[j], d + b.p()[j]));
    let ratio = num / den / (bx.c.hbar() * bx.c.omega());
    eprintln!("box Ū/ℏω = {ratio}");
    assert!((ratio - 1.0).abs() < 1e-4);
}

#[test]
fn cross_momentum_tiers() {
    let cases = corpus();
    // stationary: zero at every instant
    let b = bundle(&cases[2]);
    let h = madelung::osmotic_fields(&b, &cases[2].c, &cases[2].g).unwrap();
    let x = madelung::cross_momentum_term(&b, &h, &cases[2].c, &cases[2].g).unwrap();
    assert!(x.direct.abs() < 1e-10 && x.substituted.abs() < 1e-10);
    // uniform phase gradient: the integrand is a total derivative
    let b = bundle(&cases[1]);
    let h = madelung::osmotic_fields(&b, &cases[1].c, &cases[1].g).unwrap();
    let x = madelung::cross_momentum_term(&b, &h, &cases[1].c, &cases[1].g).unwrap();
    assert!(x.direct.abs() < 1e-9 && x.substituted.abs() < 1e-9);
    // superposition: nonzero instantaneously, zero over one beat period π
    let s = &cases[3];
    let psi = s.init.prepare(&s.v, &s.c, &s.g).unwrap();
    let steps = 2000;
    let ev = evolve(&psi, &s.v, &EvolutionSettings::new(PI / steps as f64, steps - 1), &s.c, &s.g).unwrap();
    let frames: Vec<_> = ev.frames.iter().map(|f| decompose(f, &s.c, &s.g).unwrap()).collect();
    let avg = madelung::cross_momentum_time_average(&frames, &s.c, &s.g).unwrap();
    eprintln!("{avg:?}");
    assert!(avg.max_instantaneous > 1e-2);
    assert!(avg.mean.abs() < 1e-6 * avg.max_instantaneous.max(1.0));
}

#[test]
fn conservative_work_vanishes_on_evolving_corpus() {
    for case in corpus().into_iter().filter(|c| c.g.is_periodic()) {
        let psi = case.init.prepare(&case.v, &case.c, &case.g).unwrap();
        let ev = evolve(&psi, &case.v, &EvolutionSettings::new(1e-3, 500).every(50), &case.c, &case.g).unwrap();
        let frames: Vec<_> = ev.frames.iter().map(|f| decompose(f, &case.c, &case.g).unwrap()).collect();
        let w = thermo::conservative_work(&frames, 0.05, &case.c, &case.g).unwrap();
        eprintln!("{}: {:.3e}", case.name, w.factorised);
        assert!(w.factorised.abs() < 1e-6, "{}", case.name);
    }
}

#[test]
fn bohmian_ensemble_stays_equivariant() {
    let g = make_grid(512, 40.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let psi = InitialState::Gaussian { sigma: 1.0, x0: 0.0, p0: 0.0 }.prepare(&Potential::Free, &c, &g).unwrap();
    let ev = evolve(&psi, &Potential::Free, &EvolutionSettings::new(1e-3, 2000).every(10), &c, &g).unwrap();
    let frames: Vec<_> = ev.frames.iter().map(|f| decompose(f, &c, &g).unwrap()).collect();
    let v: Vec<Vec<f64>> = frames.iter().map(|b| b.grad_s().iter().map(|s| s / c.mass()).collect()).collect();
    let x0 = sample_trajectories(frames[0].p(), 100_000, 17, &g).unwrap();
    let ens = integrate_trajectories(&x0, &v, 0.01, 10, &g).unwrap();
    let s = equivariance_summary(&ens, frames.last().unwrap().p(), &g, -8.0, 8.0, 40).unwrap();
    eprintln!("{s:?}");
    assert!(s.tv_distance < 0.02);
    assert!(s.ks_p_value > 0.01);
}

#[test]
fn total_momentum_identity_holds_pointwise() {
    for case in corpus() {
        let psi = case.init.prepare(&case.v, &case.c, &case.g).unwrap();
        let b = decompose(&psi, &case.c, &case.g).unwrap();
        let mi = madelung::total_momentum_identity(&psi, &b, &case.c, &case.g).unwrap();
        eprintln!("{}: {:.3e}", case.name, mi.max_relative_difference);
        assert!(mi.max_relative_difference < 1e-8, "{}", case.name);
    }
}

#[test]
fn total_momentum_identity_on_random_smooth_state() {
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let modes: Vec<(f64, f64, f64, f64)> =
        (1..=4).map(|_| (r.random::<f64>() - 0.5, r.random::<f64>() - 0.5, r.random::<f64>(), r.random::<f64>())).collect();
    let psi: Vec<Complex64> = g
        .xs()
        .iter()
        .map(|&x| {
            let (mut a, mut s) = (-x * x / 3.0, 0.0);
            for (k, m) in modes.iter().enumerate() {
                let q = 2.0 * PI * (k + 1) as f64 / 20.0;
                a += 0.3 * m.0 * (q * x + m.2).cos();
                s += m.1 * (q * x + m.3).sin();
            }
            Complex64::from_polar(a.exp(), s)
        })
        .collect();
    let psi = subq_core::fields::normalize(&psi, &g).unwrap();
    let b = decompose(&psi, &c, &g).unwrap();
    let mi = madelung::total_momentum_identity(&psi, &b, &c, &g).unwrap();
    eprintln!("random smooth: {:.3e}", mi.max_relative_difference);
    assert!(mi.max_relative_difference < 1e-8);
}
