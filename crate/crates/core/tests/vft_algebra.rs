use num_complex::Complex64;
use std::f64::consts::PI;
use subq_core::fields::{decompose, make_grid, Boundary, ComplexField, Constants, Grid, MadelungBundle};
use subq_core::vft::{self, MeanMode, Perturbation, PerturbationShape, RatioFields};

fn box_ground(n: usize) -> (Grid, Constants, MadelungBundle) {
    let g = make_grid(n, 1.0, Boundary::DirichletZero).unwrap();
    let c = Constants::new(1.0, 1.0, PI * PI / 2.0, 1.0).unwrap();
    let psi: ComplexField = g.xs().iter().map(|x| Complex64::new(2f64.sqrt() * (PI * x).sin(), 0.0)).collect();
    let b = decompose(&psi, &c, &g).unwrap();
    (g, c, b)
}

fn harmonic_ground() -> (Grid, Constants, MadelungBundle) {
    let g = make_grid(256, 20.0, Boundary::Periodic).unwrap();
    let c = Constants::natural();
    let psi: ComplexField = g.xs().iter().map(|x| Complex64::new((-x * x / 2.0).exp() / PI.powf(0.25), 0.0)).collect();
    let b = decompose(&psi, &c, &g).unwrap();
    (g, c, b)
}

#[test]
fn box_bump_momentum_routes() {
    let (g, c, b) = box_ground(401);
    let shape = PerturbationShape::Bump { centre: 0.4, width: 0.08 };
    let mut ac = Vec::new();
    for eps in [0.02, 0.01, 0.005] {
        let pert = Perturbation::from_shape(&shape, eps, &b, &g).unwrap();
        // synthetic ratio fields with p(−A)/p(A) = δP
        let dp = pert.delta_p(&b);
        let p_plus: Vec<f64> = g.xs().iter().map(|x| 0.2 + 0.1 * (3.0 * x).cos()).collect();
        let p_minus: Vec<f64> = p_plus.iter().zip(&dp).map(|(a, d)| a * d).collect();
        let t = vft::delta_p_tot(&b, &pert, Some(RatioFields { p_plus: &p_plus, p_minus: &p_minus }), &c, &g).unwrap();
        println!("eps {eps}: |A−B| {:.2e} |A−C|/|A| {:.2e} |A−logsum| {:.2e}", t.max_ab, t.max_ac_relative, t.max_a_log_sum.unwrap());
        assert!(t.max_ab < 1e-10);
        assert!(t.max_a_log_sum.unwrap() < 1e-10);
        ac.push(t.max_ac_relative);
    }
    let r1 = ac[0] / ac[1];
    let r2 = ac[1] / ac[2];
    assert!(r1 > 1.8 && r1 < 2.2 && r2 > 1.8 && r2 < 2.2, "first order: {r1} {r2}");
}

#[test]
fn ratio_forms_converge_quadratically() {
    for (name, (g, c, b), shape) in [
        ("box", box_ground(401), PerturbationShape::UniformRelative),
        ("box-bump", box_ground(401), PerturbationShape::Bump { centre: 0.5, width: 0.2 }),
        ("harmonic", harmonic_ground(), PerturbationShape::UniformRelative),
    ] {
        let mut d = Vec::new();
        let mut du = Vec::new();
        for eps in [0.02, 0.01, 0.005] {
            let pert = Perturbation::from_shape(&shape, eps, &b, &g).unwrap();
            let f = vft::ratio_forms_consistency(&b, &pert, &c, &g).unwrap();
            println!("{name} eps {eps}: {f:?}");
            d.push(f.max_pairwise);
            du.push(f.delta_u_gap);
        }
        for k in 0..2 {
            let r = d[k] / d[k + 1];
            assert!(r > 3.5 && r < 4.5, "{name} forms ratio {r}");
            let r = du[k] / du[k + 1];
            assert!(r > 3.5 && r < 4.5, "{name} δU ratio {r}");
        }
    }
}

#[test]
fn box_example_ratio() {
    let (g, c, b) = box_ground(401);
    let pert = Perturbation::from_shape(&PerturbationShape::UniformRelative, 0.01, &b, &g).unwrap();
    let rep = vft::vft_report(&b, &pert, MeanMode::Scalar, &c, &g).unwrap();
    println!("Ã {} ratio {}", rep.a_tilde, rep.ratio);
    assert!((rep.a_tilde - 1.0).abs() < 1e-4);
    assert!((rep.ratio - (-0.01f64).exp()).abs() < 1e-6);
    assert!(rep.invariant_error() < 1e-14);
    let gap = rep.ext_action_gradient.iter().zip(&rep.at_gradient).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-12);
}
