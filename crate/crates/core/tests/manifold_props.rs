use approx::assert_relative_eq;
use geotrack_core::manifold::spd::karcher_cost_at;
use geotrack_core::manifold::SymEig;
use geotrack_core::suites::random_spd;
use geotrack_core::{project_ball, Euclidean, GeodesicBall, Manifold, RandomStream, Spd};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spd_pair(m: usize, seed: u64) -> (Spd, DMatrix<f64>, DMatrix<f64>, RandomStream) {
    let mut rng = RandomStream::new(seed);
    let x = random_spd(m, 0.6, &mut rng);
    let y = random_spd(m, 0.6, &mut rng);
    (Spd::new(m).unwrap(), x, y, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spd_exp_log_roundtrip(seed in any::<u64>(), m in 2usize..6) {
        let (spd, x, y, _) = spd_pair(m, seed);
        let (px, py) = (spd.point(&x).unwrap(), spd.point(&y).unwrap());
        let v = spd.log(&px, &py).unwrap();
        let back = spd.exp(&px, &v).unwrap();
        let d = spd.distance(&px, &py).unwrap();
        prop_assert!(spd.distance(&back, &py).unwrap() <= 1e-8 * (1.0 + d));
        prop_assert!((spd.norm(&v).unwrap() - d).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn spd_distance_is_congruence_invariant(seed in any::<u64>(), m in 2usize..5) {
        let (spd, x, y, mut rng) = spd_pair(m, seed);
        let a = loop {
            let a = DMatrix::from_fn(m, m, |_, _| rng.standard_normal());
            if a.determinant().abs() > 0.1 {
                break a;
            }
        };
        let before = spd.spd_distance(&x, &y).unwrap();
        let after = spd.spd_distance(&(&a * &x * a.transpose()), &(&a * &y * a.transpose())).unwrap();
        prop_assert!((before - after).abs() <= 1e-7 * (1.0 + before));
    }

    #[test]
    fn spd_distance_is_inversion_invariant(seed in any::<u64>()) {
        let (spd, x, y, _) = spd_pair(3, seed);
        let inv = |a: &DMatrix<f64>| SymEig::new(a).map(|l| 1.0 / l);
        let before = spd.spd_distance(&x, &y).unwrap();
        prop_assert!((before - spd.spd_distance(&inv(&x), &inv(&y)).unwrap()).abs() <= 1e-8 * (1.0 + before));
    }

    #[test]
    fn karcher_cost_is_strongly_geodesically_convex(seed in any::<u64>(), t in 0.05f64..0.95) {
        let (spd, x, y, mut rng) = spd_pair(3, seed);
        let mats: Vec<_> = (0..5).map(|_| random_spd(3, 0.6, &mut rng)).collect();
        let (px, py) = (spd.point(&x).unwrap(), spd.point(&y).unwrap());
        let mid = spd.exp(&px, &spd.log(&px, &py).unwrap().scaled(t)).unwrap();
        let f = |p| karcher_cost_at(&spd.anchor(p).unwrap(), &mats).unwrap();
        let d = spd.distance(&px, &py).unwrap();
        let rhs = (1.0 - t) * f(&px) + t * f(&py) - 0.5 * t * (1.0 - t) * d * d;
        prop_assert!(f(&mid) <= rhs + 1e-9);
    }

    #[test]
    fn euclidean_projection_is_nonexpansive(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
        r in 0.1f64..3.0,
    ) {
        let e = Euclidean::new(3).unwrap();
        let ball = GeodesicBall::new(e.point(&[0.0, 0.0, 0.0]).unwrap(), r).unwrap();
        let (pa, pb) = (e.point(&a).unwrap(), e.point(&b).unwrap());
        let (qa, qb) = (project_ball(&e, &ball, &pa).unwrap(), project_ball(&e, &ball, &pb).unwrap());
        prop_assert!(e.distance(&qa, &qb).unwrap() <= e.distance(&pa, &pb).unwrap() + 1e-12);
        prop_assert!(ball.contains(&e, &qa).unwrap());
        prop_assert!(e.distance(&project_ball(&e, &ball, &qa).unwrap(), &qa).unwrap() <= 1e-12);
    }
}

#[test]
fn spd_tangent_basis_is_orthonormal_away_from_identity() {
    let mut rng = RandomStream::new(11);
    let spd = Spd::new(3).unwrap();
    let x = spd.point(&random_spd(3, 0.8, &mut rng)).unwrap();
    let basis = spd.tangent_basis(&x).unwrap();
    assert_eq!(basis.len(), 6);
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert_relative_eq!(spd.inner(&x, u, v).unwrap(), expected, epsilon = 1e-10);
        }
    }
}

#[test]
fn geodesic_midpoint_of_commuting_pair_is_geometric_mean() {
    let spd = Spd::new(2).unwrap();
    let x = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
    let y = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![9.0, 1.0]));
    let (px, py) = (spd.point(&x).unwrap(), spd.point(&y).unwrap());
    let mid = spd
        .exp(&px, &spd.log(&px, &py).unwrap().scaled(0.5))
        .unwrap();
    let mid = spd.to_matrix(&mid.coords).unwrap();
    assert_relative_eq!(mid[(0, 0)], 3.0, epsilon = 1e-12);
    assert_relative_eq!(mid[(1, 1)], 2.0, epsilon = 1e-12);
    assert_relative_eq!(mid[(0, 1)], 0.0, epsilon = 1e-12);
}
