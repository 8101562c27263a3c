use faer::Col;
use kgscatter::linalg::{self, c64, CMat, CVec};
use kgscatter::model::*;
use kgscatter::scattering::*;
use kgscatter::scenario::stock;

fn small(name: &str) -> KgOperators {
    stock(name).unwrap().with_points(128).build().unwrap()
}

fn free_energy_norm(ops: &KgOperators, f: &CVec) -> f64 {
    linalg::dot(f, &(&ops.free_gram * f)).re.sqrt()
}

fn packets() -> [WavePacketSpec; 2] {
    [WavePacketSpec::upper(-3.0, 1.5, 2.0), WavePacketSpec::upper(0.0, 1.2, 2.0)]
}

#[test]
fn free_wave_operator_is_identity() {
    let model = ScatteringModel::new(small("free")).unwrap();
    assert_eq!(model.decomposition.rank, 0);
    let r = short_range_wave_operator(&model, &packets(), 8.0, Direction::Outgoing).unwrap();
    for p in &r.packets {
        assert!(free_energy_norm(&model.ops, &(&p.f_out - &p.f_in)) <= 1e-10);
    }
    let d = &r.defects;
    for x in [d.unitarity, d.symplectic, d.intertwining, d.completeness, d.inverse.unwrap()] {
        assert!(x <= 1e-10, "{d:?}");
    }
    let w = short_range_wave_matrix(&model, 8.0).unwrap();
    assert!(linalg::norm(&(w - linalg::identity(model.ops.dim()))) <= 1e-9);
}

/// Point spectrum chosen directly from a fresh eigendecomposition.
fn oracle_projector(ops: &KgOperators) -> (usize, CMat) {
    let eig = linalg::eigen(&ops.generator).unwrap();
    let inv = linalg::inverse(&eig.vectors).unwrap();
    let n = ops.grid.points;
    let xs = ops.grid.nodes();
    let radius = eig.values.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let chosen: Vec<usize> = (0..eig.values.len())
        .filter(|&i| {
            let z = eig.values[i];
            if z.im.abs() > 1e-8 * radius {
                return true;
            }
            let v = eig.vectors.col(i);
            let total: f64 = (0..2 * n).map(|k| v[k].norm_sqr()).sum();
            let inside: f64 = (0..2 * n).filter(|k| xs[k % n].abs() <= 10.0).map(|k| v[k].norm_sqr()).sum();
            z.re.abs() < ops.m_grid && inside / total >= 0.9
        })
        .collect();
    let p = CMat::from_fn(2 * n, 2 * n, |i, j| chosen.iter().map(|&k| eig.vectors[(i, k)] * inv[(k, j)]).sum());
    (chosen.len(), p)
}

#[test]
fn decomposition_geometry() {
    for (name, complex) in [("free", 0), ("bound_state_well", 0), ("supercritical_well", 2)] {
        let ops = small(name);
        let (rank, want) = oracle_projector(&ops);
        let model = ScatteringModel::new(ops).unwrap();
        let d = &model.decomposition;
        assert_eq!(d.rank, rank, "{name}");
        assert_eq!(d.point_eigenvalues.iter().filter(|z| z.im.abs() > 1e-8).count(), complex, "{name}");
        assert!(linalg::norm(&(&d.p_pp - &want)) <= 1e-8 * linalg::norm(&want).max(1.0), "{name}");
        for r in [d.dagger_residual, d.idempotence_residual, d.product_residual, d.h_orthogonality, d.omega_orthogonality] {
            assert!(r <= 1e-8, "{name}: {d:?}");
        }
        assert!(linalg::norm(&(&d.p_pp + &d.p_scatt - linalg::identity(model.ops.dim()))) <= 1e-12);
    }
    assert_eq!(ScatteringModel::new(small("bound_state_well")).unwrap().decomposition.rank, 1);
}

#[test]
fn packet_and_horizon_checks() {
    let model = ScatteringModel::new(small("free")).unwrap();
    let grid = model.ops.grid;
    assert!(WavePacketSpec::upper(0.0, 1.5, 2.0).validate(&grid).is_ok());
    for bad in [
        WavePacketSpec::upper(12.0, 1.5, 2.0),
        WavePacketSpec::upper(0.0, 0.3, 2.0),
        WavePacketSpec::upper(0.0, 6.0, 2.0),
        WavePacketSpec::upper(0.0, 1.5, -1.0),
    ] {
        assert!(matches!(bad.validate(&grid), Err(ScatteringError::InvalidPacket(_))), "{bad:?}");
    }
    let err = short_range_wave_operator(&model, &packets(), 30.0, Direction::Outgoing).unwrap_err();
    assert!(matches!(err, ScatteringError::HorizonExceeded { .. }));
    let long = ScatteringModel::new(stock("long_range_tail").unwrap().with_points(128).build().unwrap()).unwrap();
    let err = short_range_wave_operator(&long, &[], 1.0, Direction::Outgoing).unwrap_err();
    assert!(matches!(err, ScatteringError::ShortRangeViolated { .. }));
}

#[test]
fn incoming_direction_mirrors_outgoing() {
    let model = ScatteringModel::new(small("free")).unwrap();
    let r = short_range_wave_operator(&model, &packets(), 8.0, Direction::Incoming).unwrap();
    assert_eq!(r.direction, Direction::Incoming);
    assert!(r.defects.unitarity <= 1e-10);
}

fn tail() -> impl Fn(f64) -> f64 + Sync {
    |x: f64| 0.2 * (1.0 + x * x).powf(-0.25)
}

#[test]
fn eikonal_phases() {
    let grid = Grid1D::new(80.0, 512).unwrap();
    let region = EikonalRegion::band(&grid, 0.7);
    let zero = |_: f64| 0.0;
    let free = eikonal_phase_1d(&grid, &zero, 1.0, Dispersion::Lattice, region).unwrap();
    let linear = linear_phase(&grid);
    let scale = linear.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for branch in [1.0, -1.0] {
        let err = free.branch(branch).iter().zip(&linear).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-12 * scale, "{err}");
    }
    let v = tail();
    for dispersion in [Dispersion::Lattice, Dispersion::Continuum] {
        let phase = eikonal_phase_1d(&grid, &v, 1.0, dispersion, region).unwrap();
        assert!(phase.residual <= EIKONAL_TOLERANCE, "{}", phase.residual);
        assert!(phase.region_points > 1000);
        let growth = correction_growth_exponent(&grid, &v, 1.0, dispersion, 1.0, 1.0);
        assert!((growth - 0.5).abs() <= 0.15, "{growth}");
    }
    let deep = |_: f64| 1.0;
    let err = eikonal_phase_1d(&grid, &deep, 1.0, Dispersion::Continuum, region).unwrap_err();
    assert!(matches!(err, ScatteringError::BranchCollapse { .. }), "{err:?}");
}

#[test]
fn fio_identity_and_derivative() {
    let grid = Grid1D::new(20.0, 128).unwrap();
    let (x0, xi0, sigma) = (1.0, 1.5, 2.0);
    let u = gaussian(&grid, x0, xi0, sigma);
    let phase = linear_phase(&grid);
    let same = fio_apply(&grid, &phase, None, &u).unwrap();
    assert!(linalg::vnorm(&(&same - &u)) <= 1e-8 * linalg::vnorm(&u));
    let ik = |_: f64, xi: f64| c64::new(0.0, xi);
    let du = fio_apply(&grid, &phase, Some(&ik), &u).unwrap();
    let xs = grid.nodes();
    let want = Col::from_fn(xs.len(), |j| c64::new(-(xs[j] - x0) / (2.0 * sigma * sigma), xi0) * u[j]);
    assert!(linalg::vnorm(&(&du - &want)) <= 1e-8 * linalg::vnorm(&want));
    let rough = Col::from_fn(xs.len(), |j| c64::new(if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0));
    assert!(matches!(fio_apply(&grid, &phase, None, &rough), Err(ScatteringError::BandwidthExceeded { .. })));
}

#[test]
fn fio_near_unitary_on_outgoing_band() {
    let grid = Grid1D::new(80.0, 512).unwrap();
    let v = tail();
    let phase = eikonal_phase_1d(&grid, &v, 1.0, Dispersion::Lattice, EikonalRegion::band(&grid, 0.7)).unwrap();
    for (x0, xi0) in [(20.0, 1.0), (-20.0, -1.0), (0.0, 1.5)] {
        let u = gaussian(&grid, x0, xi0, 5.0);
        let ratio = linalg::vnorm(&fio_apply(&grid, &phase.plus, None, &u).unwrap()) / linalg::vnorm(&u);
        assert!((0.9..=1.1).contains(&ratio), "{x0} {xi0}: {ratio}");
    }
}

fn free_modifier(ops: &KgOperators, sign: i8) -> Modifier {
    let zero = |_: f64| 0.0;
    let phase = eikonal_phase_1d(&ops.grid, &zero, ops.m_inf, Dispersion::Lattice, EikonalRegion::band(&ops.grid, 0.7)).unwrap();
    build_modifier_t(ops, &phase, sign).unwrap()
}

#[test]
fn modifier_degenerates_without_long_range_part() {
    let ops = small("free");
    for sign in [1i8, -1] {
        let t = free_modifier(&ops, sign);
        let id = linalg::identity(ops.dim());
        assert!(linalg::norm(&(&t.matrix * &t.matrix - &id)) <= 1e-8 * linalg::norm(&id));
        let j = hat_j(&ops, sign as f64);
        for spec in packets() {
            let f = packet_state(&ops, &spec).unwrap();
            assert!(free_energy_norm(&ops, &(&t.matrix * &f - &j * &f)) <= 1e-8);
        }
    }
}

#[test]
fn long_range_operator_matches_short_range_when_tail_vanishes() {
    let ops = small("bound_state_well");
    let t = free_modifier(&ops, 1);
    let model = ScatteringModel::new(ops).unwrap();
    let pk = packets();
    let a = short_range_wave_operator(&model, &pk, 8.0, Direction::Outgoing).unwrap();
    let b = long_range_wave_operator(&model, &t, &pk, 8.0, Direction::Outgoing).unwrap();
    for (p, q) in a.packets.iter().zip(&b.packets) {
        assert!(free_energy_norm(&model.ops, &(&p.f_out - &q.f_out)) <= 1e-8);
    }
    assert!((a.defects.unitarity - b.defects.unitarity).abs() <= 1e-8);
}

#[test]
fn phase_must_be_certified() {
    let ops = small("free");
    let zero = |_: f64| 0.0;
    let mut phase = eikonal_phase_1d(&ops.grid, &zero, 1.0, Dispersion::Lattice, EikonalRegion::band(&ops.grid, 0.7)).unwrap();
    phase.residual = 1e-3;
    assert!(matches!(build_modifier_t(&ops, &phase, 1), Err(ScatteringError::PhaseNotCertified { .. })));
}

#[test]
fn long_range_modifier_is_decisive() {
    let spec = stock("long_range_tail").unwrap();
    let ops = spec.build().unwrap();
    let v = spec.potential.long_range_fn(ops.adjust_radius);
    let phase = eikonal_phase_1d(&ops.grid, &*v, 1.0, Dispersion::Lattice, EikonalRegion::band(&ops.grid, 0.7)).unwrap();
    let t = build_modifier_t(&ops, &phase, 1).unwrap();
    let model = ScatteringModel::new(ops).unwrap();
    let pk = [WavePacketSpec::upper(0.0, 1.0, 5.0), WavePacketSpec::upper(0.0, 1.3, 5.0)];
    let modified = long_range_wave_operator(&model, &t, &pk, 60.0, Direction::Outgoing).unwrap();
    let plain = unmodified_wave_operator(&model, &pk, 60.0, Direction::Outgoing).unwrap();
    assert!(modified.defects.convergence_ratio <= 0.7, "{:?}", modified.defects);
    assert!(plain.packets.iter().all(|p| p.convergence_ratio >= 0.9), "{:?}", plain.defects);
    assert!(modified.defects.symplectic <= 2.0 * modified.defects.unitarity, "{:?}", modified.defects);
    let proxy = hat_j_proxy(&model.ops, &t);
    let f = packet_state(&model.ops, &pk[0]).unwrap();
    let curve = modifier_residual_curve(&model, &t, &proxy, &f, &[10.0, 20.0, 40.0]).unwrap();
    assert!(curve[0] > curve[1] && curve[1] > curve[2], "{curve:?}");
    let err = long_range_wave_operator(&model, &t, &pk, 200.0, Direction::Outgoing).unwrap_err();
    assert!(matches!(err, ScatteringError::HorizonExceeded { .. }));
}
