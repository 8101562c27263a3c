use faer::Col;
use kgscatter::dynamics::*;
use kgscatter::linalg::{self, c64, CMat, CVec};
use kgscatter::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> CVec {
    Col::from_fn(n, |_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn well(x: f64, n: usize, amplitude: f64) -> KgOperators {
    let grid = Grid1D::new(x, n).unwrap();
    let eps2 = build_epsilon2(&grid, &CoefficientSet::flat(&grid, 1.0)).unwrap();
    let v = Profile::GaussianWell { amplitude, width: 1.0, center: 0.0 };
    let split = PotentialSplit::from_profiles(&grid, Some(&v), None, None);
    build_generator(&grid, &eps2, &split, 1.0).unwrap()
}

fn forms(ops: &KgOperators) -> ConservedForms {
    ConservedForms { energy: ops.energy_gram.clone(), charge: linalg::scale(&ops.symplectic(), c64::new(0.0, 1.0)) }
}

fn times(t_max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| t_max * k as f64 / steps as f64).collect()
}

#[test]
fn free_flow_conserves_and_stays_bounded() {
    let ops = well(10.0, 48, 0.0);
    let p = Propagator::new(&ops.generator).unwrap();
    assert_eq!(p.method(), PropagatorMethod::Spectral);
    assert!(p.reconstruction_residual(&ops.generator) <= 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let f = random_state(ops.dim(), &mut rng);
        let r = conservation_report(&p, &forms(&ops), &f, &times(50.0, 40)).unwrap();
        assert!(r.h_drift <= 1e-8, "{}", r.h_drift);
        assert!(r.q_drift <= 1e-8, "{}", r.q_drift);
        assert_eq!(r.growth_class, GrowthClass::Bounded);
    }
}

#[test]
fn closed_form_free_propagator() {
    let ops = well(10.0, 40, 0.0);
    let p = Propagator::free_klein_gordon(&ops.free_eps2).unwrap();
    assert!(p.reconstruction_residual(&ops.free_generator) <= 1e-12);
    let want = linalg::expm(&linalg::scale(&ops.free_generator, c64::new(0.0, -2.5))).unwrap();
    assert!(linalg::norm(&(p.matrix(2.5).unwrap() - &want)) <= 1e-10 * linalg::norm(&want));
}

#[test]
fn group_law_and_identity() {
    let ops = well(10.0, 48, 2.0);
    let p = Propagator::new(&ops.generator).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_state(ops.dim(), &mut rng);
    assert_eq!(p.evolve(&f, 0.0).unwrap(), f);
    let (s, t) = (1.7, -0.6);
    let a = p.evolve(&f, s + t).unwrap();
    let b = p.evolve(&p.evolve(&f, t).unwrap(), s).unwrap();
    assert!(linalg::vnorm(&(a - b)) <= 1e-10 * linalg::vnorm(&f));
    let m = p.matrix(0.8).unwrap();
    let want = linalg::expm(&linalg::scale(&ops.generator, c64::new(0.0, -0.8))).unwrap();
    assert!(linalg::norm(&(m - &want)) <= 1e-9 * linalg::norm(&want));
}

#[test]
fn complex_pair_grows_exponentially_and_overflows() {
    let ops = well(10.0, 64, 3.0);
    let p = Propagator::new(&ops.generator).unwrap();
    let rate = p.eigenvalues().iter().map(|z| z.im).fold(0.0, f64::max);
    assert!(rate > 1e-3, "expected a complex pair, max Im = {rate}");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = random_state(ops.dim(), &mut rng);
    let t_max = 20.0 / rate;
    let r = conservation_report(&p, &forms(&ops), &f, &times(t_max, 40)).unwrap();
    match r.growth_class {
        GrowthClass::Exponential { rate: fitted } => assert!((fitted - rate).abs() < 0.1 * rate, "{fitted} {rate}"),
        ref other => panic!("{other:?}"),
    }
    // indefinite energy is still conserved, relative to the growth of the state
    let scale = r.norm_curve.iter().fold(0.0f64, |m, x| m.max(*x)).powi(2);
    assert!(r.h_drift <= 1e-8 * scale.max(1.0));
    let err = p.evolve(&f, 1e4 / rate).unwrap_err();
    assert!(matches!(err, DynamicsError::OverflowAtExponentialGrowth { .. }));
}

#[test]
fn jordan_block_grows_linearly_via_schur() {
    let a = CMat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) | (1, 1) => c64::new(1.0, 0.0),
        (0, 1) => c64::new(1.0, 0.0),
        _ => c64::ZERO,
    });
    let p = Propagator::new(&a).unwrap();
    assert_eq!(p.method(), PropagatorMethod::Schur);
    assert!(p.reconstruction_residual(&a) <= 1e-10);
    let f = Col::from_fn(2, |i| c64::new(i as f64, 0.0));
    let u = p.evolve(&f, 5.0).unwrap();
    // exp(-itA) e2 = exp(-it) (-it, 1)
    let phase = c64::from_polar(1.0, -5.0);
    assert!((u[0] - phase * c64::new(0.0, -5.0)).norm() < 1e-10);
    assert!((u[1] - phase).norm() < 1e-10);
    let m = CMat::from_fn(2, 2, |i, j| if i + j == 1 { c64::ONE } else { c64::ZERO });
    let r = conservation_report(&p, &ConservedForms { energy: m.clone(), charge: m }, &f, &times(60.0, 60)).unwrap();
    assert_eq!(r.growth_class, GrowthClass::Polynomial { degree: 1 });
    assert!(p.filter(&f, &|_| 1.0, 1e-9).is_err());
}

#[test]
fn conjugate_operator_commutator() {
    let grid = Grid1D::new(60.0, 512).unwrap();
    let a = build_conjugate_operator(&grid, 1.0).unwrap();
    assert!(linalg::hermiticity_residual(&a) <= 1e-12 * linalg::norm(&a));
    let eps2 = build_epsilon2(&grid, &CoefficientSet::flat(&grid, 1.0)).unwrap();
    let eps = linalg::hermitian_apply(&eps2, f64::sqrt).unwrap();
    let comm = linalg::scale(&linalg::commutator(&eps, &a), c64::new(0.0, 1.0));
    let h = grid.spacing();
    for xi in [0.5, 1.0, 2.0] {
        let u = gaussian(&grid, 0.0, xi, 8.0);
        let got = linalg::dot(&u, &(&comm * &u)).re / linalg::dot(&u, &u).re;
        // lattice symbol of eps' * D / (D^2 + m^2)
        let omega = 2.0 / h * (xi * h / 2.0).sin();
        let e_h = (omega * omega + 1.0).sqrt();
        let lattice = omega * (xi * h / 2.0).cos() / e_h * ((xi * h).sin() / h) / (omega * omega + 1.0);
        assert!((got - lattice).abs() <= 5e-3 * lattice, "xi {xi}: {got} vs {lattice}");
        let e = (xi * xi + 1.0f64).sqrt();
        let continuum = xi * xi / e.powi(3);
        if xi <= 1.0 {
            assert!((got - continuum).abs() <= 0.05 * continuum, "xi {xi}: {got} vs {continuum}");
        }
    }
}

#[test]
fn conjugate_expectation_grows_under_free_flow() {
    let grid = Grid1D::new(40.0, 256).unwrap();
    let a = build_conjugate_operator(&grid, 1.0).unwrap();
    let eps2 = build_epsilon2(&grid, &CoefficientSet::flat(&grid, 1.0)).unwrap();
    let eps = linalg::hermitian_apply(&eps2, f64::sqrt).unwrap();
    let p = Propagator::new(&eps).unwrap();
    for (xi, sign) in [(1.0, 1.0), (-1.0, 1.0)] {
        let u = gaussian(&grid, -5.0 * xi, xi, 3.0);
        let expect: Vec<f64> =
            [0.0, 5.0, 10.0].iter().map(|t| {
                let w = p.evolve(&u, *t).unwrap();
                linalg::dot(&w, &(&a * &w)).re / linalg::dot(&w, &w).re
            }).collect();
        assert!(sign * (expect[1] - expect[0]) > 0.0 && sign * (expect[2] - expect[1]) > 0.0, "{expect:?}");
    }
}

fn free_velocity_setup() -> (Grid1D, KgOperators, Propagator, CVec) {
    let ops = well(60.0, 512, 0.0);
    let grid = ops.grid.clone();
    let p = Propagator::new(&ops.free_l).unwrap();
    let w = gaussian(&grid, 0.0, 1.5, 3.0);
    let zero = Col::<c64>::zeros(grid.points);
    (grid, ops, p, linalg::concat(&w, &zero))
}

#[test]
fn velocity_bounds_on_free_packet() {
    let (grid, ops, p, u) = free_velocity_setup();
    let window = EnergyWindow { lo: 1.3, hi: 3.0, ramp: 0.1 };
    let theta0 = 0.1 * window.min_group_speed(1.0);
    assert!((theta0 - 0.0553).abs() < 1e-3);
    let t = times(48.0, 24);
    let d = velocity_diagnostics(&grid, &p, &u, &window, &[1.2, 2.0], theta0, &t, ops.m_grid).unwrap();
    let norm = d.norm;
    assert!(d.horizon >= 48.0, "{}", d.horizon);
    assert!(d.tail_mass[0].last().unwrap() <= &(0.05 * norm), "{:?}", d.tail_mass[0]);
    assert!(d.inner_mass.last().unwrap() <= &(0.05 * norm), "{:?}", d.inner_mass);
    assert!(d.tail_trend.iter().all(|b| *b));
    assert!(d.inner_trend);
    assert!(d.filtered_norm > 0.5 * norm);
}

#[test]
fn velocity_refusals() {
    let (grid, ops, p, u) = free_velocity_setup();
    let near = EnergyWindow { lo: 0.9, hi: 1.5, ramp: 0.1 };
    let err = velocity_diagnostics(&grid, &p, &u, &near, &[1.2], 0.01, &[0.0, 10.0], ops.m_grid).unwrap_err();
    assert!(matches!(err, DynamicsError::FilterTouchesThreshold { .. }));
    let ok = EnergyWindow { lo: 1.3, hi: 3.0, ramp: 0.1 };
    let err = velocity_diagnostics(&grid, &p, &u, &ok, &[1.2], 0.05, &[0.0, 55.0], ops.m_grid).unwrap_err();
    assert!(matches!(err, DynamicsError::HorizonExceeded { .. }));
}

#[test]
fn mourre_estimate_on_free_model() {
    let ops = well(60.0, 512, 0.0);
    let p = Propagator::new(&ops.free_l).unwrap();
    let a = build_conjugate_operator(&ops.grid, 1.0).unwrap();
    let k = CMat::zeros(ops.dim(), ops.dim());
    for lambda0 in [1.5, -1.5] {
        let r = mourre_probe(&ops.grid, &ops.free_l, &p, &k, &a, lambda0, 0.1, ops.m_grid, 8, 5).unwrap();
        assert!(r.c0_hat >= 0.3, "{r:?}");
        assert!(r.defect <= 0.1 * r.c0_hat, "{r:?}");
    }
    let err = mourre_probe(&ops.grid, &ops.free_l, &p, &k, &a, 1.02, 0.05, ops.m_grid, 4, 5).unwrap_err();
    assert!(matches!(err, DynamicsError::WindowTouchesThreshold { .. }));
}
