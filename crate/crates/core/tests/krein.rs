use faer::Col;
use kgscatter::krein::*;
use kgscatter::linalg::{self, c64, re, CMat, CVec};
use proptest::prelude::*;

fn mat2(a: [[f64; 2]; 2]) -> CMat {
    CMat::from_fn(2, 2, |i, j| re(a[i][j]))
}

fn e(n: usize, i: usize) -> CVec {
    Col::from_fn(n, |k| if k == i { c64::ONE } else { c64::ZERO })
}

#[test]
fn polar_data_of_indefinite_gram() {
    let m = mat2([[2.0, 1.0], [1.0, -1.0]]);
    let g = build_gram(&m).unwrap();
    assert_eq!(g.neg_index(), 1);
    let j = g.fundamental_symmetry();
    assert!(linalg::norm(&(j * g.modulus() - &m)) <= 1e-12);
    assert!(linalg::norm(&(j * j - linalg::identity(2))) <= 1e-12);
    assert!(linalg::hermiticity_residual(j) <= 1e-14);
    // oracle: |M| has the absolute eigenvalues of M
    let want: Vec<f64> = linalg::hermitian_eigenvalues(&m).unwrap().iter().map(|x| x.abs()).collect();
    let mut got = linalg::hermitian_eigenvalues(g.modulus()).unwrap();
    got.sort_by(f64::total_cmp);
    let mut want = want;
    want.sort_by(f64::total_cmp);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert!((g.inversion_condition() - want[0]).abs() <= 1e-12);
}

#[test]
fn dagger_examples() {
    let a = CMat::from_fn(3, 3, |i, j| c64::new((i + 2 * j) as f64, (i as f64) - (j as f64)));
    let g = build_gram(&linalg::identity(3)).unwrap();
    assert!(linalg::norm(&(g.dagger(&a).unwrap() - a.adjoint())) <= 1e-14);
    let g = build_gram(&linalg::diag_real(&[1.0, -1.0])).unwrap();
    let got = g.dagger(&mat2([[0.0, 1.0], [0.0, 0.0]])).unwrap();
    assert!(linalg::norm(&(got - mat2([[0.0, 0.0], [-1.0, 0.0]]))) <= 1e-15);
    assert!(matches!(g.dagger(&linalg::identity(3)), Err(KreinError::DimensionMismatch { .. })));
}

#[test]
fn subspace_examples() {
    let g = build_gram(&linalg::diag_real(&[1.0, -1.0])).unwrap();
    assert_eq!(g.classify_subspace(&[e(2, 0)]).unwrap().kind, SubspaceKind::UniformlyPositive);
    let null = &e(2, 0) + &e(2, 1);
    let c = g.classify_subspace(&[null.clone()]).unwrap();
    assert_eq!(c.kind, SubspaceKind::Neutral);
    assert!(!c.krein_subspace);
    let g3 = build_gram(&linalg::diag_real(&[1.0, -1.0, 1.0])).unwrap();
    let c = g3.classify_subspace(&[e(3, 0), e(3, 1)]).unwrap();
    assert_eq!(c.kind, SubspaceKind::Indefinite);
    assert!(c.krein_subspace);
    let err = g.classify_subspace(&[null.clone(), linalg_scale(&null, 2.0)]).unwrap_err();
    assert!(matches!(err, KreinError::RankDeficientBasis { rank: 1, len: 2 }));
    let r = build_gram(&linalg::identity(2)).unwrap().projection_check(&linalg::identity(2)).unwrap();
    assert!(r.positive && r.idempotent_residual <= 1e-14 && r.selfadjoint_residual <= 1e-14, "{r:?}");
    // the identity is an orthogonal projection for any Gram, but not a positive one here
    let r = g.projection_check(&linalg::identity(2)).unwrap();
    assert!(!r.positive && r.selfadjoint_residual <= 1e-14);
}

fn linalg_scale(u: &CVec, s: f64) -> CVec {
    Col::from_fn(u.nrows(), |i| u[i] * s)
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
}

fn matrix(n: usize, v: &[(f64, f64)]) -> CMat {
    CMat::from_fn(n, n, |i, j| c64::new(v[i * n + j].0, v[i * n + j].1))
}

fn vector(v: &[(f64, f64)]) -> CVec {
    Col::from_fn(v.len(), |i| c64::new(v[i].0, v[i].1))
}

/// `diag(signs) + 0.3 H` with `H` hermitian, `|H| <= n`.
fn indefinite_gram(n: usize, v: &[(f64, f64)], negative: usize) -> CMat {
    let h = linalg::hermitian_part(&matrix(n, v));
    let mut m = linalg::scale_re(&h, 0.3 / n as f64);
    for i in 0..n {
        m[(i, i)] += re(if i < negative { -1.0 } else { 1.0 });
    }
    m
}

const N: usize = 5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dagger_is_an_antimultiplicative_involution(
        gv in entries(N), av in entries(N), bv in entries(N), k in 0usize..=N, alpha in (-2.0..2.0f64, -2.0..2.0f64)
    ) {
        let g = build_gram(&indefinite_gram(N, &gv, k)).unwrap();
        prop_assert_eq!(g.neg_index(), k);
        let (a, b) = (matrix(N, &av), matrix(N, &bv));
        let scale = linalg::norm(&a) * linalg::norm(&b) + 1.0;
        let ab = g.dagger(&(&a * &b)).unwrap();
        let ba = g.dagger(&b).unwrap() * g.dagger(&a).unwrap();
        prop_assert!(linalg::norm(&(ab - ba)) <= 1e-10 * scale);
        let twice = g.dagger(&g.dagger(&a).unwrap()).unwrap();
        prop_assert!(linalg::norm(&(twice - &a)) <= 1e-10 * scale);
        let z = c64::new(alpha.0, alpha.1);
        let lhs = g.dagger(&linalg::scale(&a, z)).unwrap();
        let rhs = linalg::scale(&g.dagger(&a).unwrap(), z.conj());
        prop_assert!(linalg::norm(&(lhs - rhs)) <= 1e-10 * scale);
    }

    #[test]
    fn dagger_two_formula_cross_check(kv in entries(N), av in entries(N)) {
        let k = linalg::scale_re(&linalg::hermitian_part(&matrix(N, &kv)), 0.9 / N as f64);
        let one_plus_k = linalg::identity(N) + &k;
        let g = build_gram(&one_plus_k).unwrap();
        let a = matrix(N, &av);
        let astar = a.adjoint().to_owned();
        let other = &astar + linalg::inverse(&one_plus_k).unwrap() * linalg::commutator(&astar, &k);
        prop_assert!(linalg::norm(&(g.dagger(&a).unwrap() - other)) <= 1e-10);
    }

    #[test]
    fn inner_product_symmetry_and_bound(gv in entries(N), uv in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2 * N), k in 0usize..=N) {
        let g = build_gram(&indefinite_gram(N, &gv, k)).unwrap();
        let (u, v) = (vector(&uv[..N]), vector(&uv[N..]));
        let uv_ = g.inner(&u, &v).unwrap();
        let vu = g.inner(&v, &u).unwrap();
        prop_assert!((uv_ - vu.conj()).norm() <= 1e-12);
        prop_assert!(uv_.norm() <= linalg::spectral_norm(g.gram()) * linalg::vnorm(&u) * linalg::vnorm(&v) * (1.0 + 1e-12));
        // the same pair seen through the fundamental symmetry: [u, v] = (u | J|M| v)
        let via_polar = linalg::dot(&u, &(g.fundamental_symmetry() * g.modulus() * &v));
        prop_assert!((uv_ - via_polar).norm() <= 1e-10);
    }

    #[test]
    fn cauchy_schwarz_on_positive_subspaces(gv in entries(N), bv in entries(2), cv in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4)) {
        let g = build_gram(&indefinite_gram(N, &gv, 1)).unwrap();
        // spans inside the positive directions e_2..e_N, slightly perturbed
        let basis: Vec<CVec> = (0..2).map(|j| {
            let mut b = e(N, j + 2);
            b[1] += c64::new(0.1 * bv[j].0, 0.1 * bv[j].1);
            b
        }).collect();
        let class = g.classify_subspace(&basis).unwrap();
        prop_assume!(matches!(class.kind, SubspaceKind::Positive | SubspaceKind::UniformlyPositive));
        prop_assert!(class.kind == SubspaceKind::UniformlyPositive || !class.krein_subspace);
        let u = linalg_scale(&basis[0], cv[0].0) + linalg_scale(&basis[1], cv[1].0);
        let v = linalg_scale(&basis[0], cv[2].1) + linalg_scale(&basis[1], cv[3].1);
        let uv_ = g.inner(&u, &v).unwrap().norm_sqr();
        let uu = g.inner(&u, &u).unwrap().re;
        let vv = g.inner(&v, &v).unwrap().re;
        prop_assert!(uv_ <= uu * vv * (1.0 + 1e-10) + 1e-14);
    }
}
