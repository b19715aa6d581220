use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn frozen() -> Norm {
    Norm::new(frozen_norm_spec(), 3).unwrap()
}

fn linear_candidate(m: Mat3, shift: [f64; 2]) -> CandidateRetraction {
    let map: PlaneMap = Arc::new(move |x: &[f64; 3]| {
        let y = mat_vec(&m, x);
        [y[0] + shift[0], y[1] + shift[1]]
    });
    CandidateRetraction::new(map, 0.0, 0.1, 0.1).unwrap()
}

#[test]
fn flat_patch_points() {
    let body = ConvexBodySpec::new(3);
    assert_abs_diff_eq!(body.body_fn(&[0.0, 0.0, 2.0]), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(body.body_fn(&[1.5, -1.5, 2.0]), 1.0, epsilon = 1e-12);
    let control = body.body_fn(&[1.6, 0.0, 2.0]);
    assert!(control > 1.0, "{control}");
    assert!(body.gauge(&[1.6, 0.0, 2.0], 1e-13).unwrap() > 1.0);
    let reports = flat_patch_check(&body, 9).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.passed()), "{reports:?}");
    assert!(flat_patch_check(&ConvexBodySpec::new(2), 9).is_err());
}

#[test]
fn averaging_a_projection_returns_it() {
    let p = projection_matrix(0.0, 0.0);
    let t = average_derivative(&linear_candidate(p, [0.0, 0.0]), 12, 1e-6).unwrap();
    for (row, want) in t.matrix.iter().zip(&p) {
        for (a, b) in row.iter().zip(want) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
        }
    }
    let shifted = average_derivative(&linear_candidate(p, [0.01, 0.0]), 12, 1e-6).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(shifted.matrix[i][j], t.matrix[i][j], epsilon = 1e-8);
        }
    }
    assert_eq!(t.matrix[2], [0.0; 3]);
}

#[test]
fn stencil_outside_slab_is_a_domain_error() {
    let c = linear_candidate(projection_matrix(0.0, 0.0), [0.0, 0.0]);
    assert!(matches!(
        average_derivative(&c, 4, 0.5),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn averaging_is_linear_in_psi() {
    let norm = frozen();
    let a = synthetic_candidate(&norm, 0.01).unwrap();
    let b = linear_candidate(projection_matrix(0.3, -0.2), [0.0, 0.0]);
    let (ma, mb) = (a.map.clone(), b.map.clone());
    let sum_map: PlaneMap = Arc::new(move |x: &[f64; 3]| {
        let (u, v) = (ma(x), mb(x));
        [u[0] + v[0], u[1] + v[1]]
    });
    let sum = CandidateRetraction::new(sum_map, 0.0, a.margin, a.thickness).unwrap();
    let (ta, tb, ts) = (
        average_derivative(&a, 16, 1e-6).unwrap(),
        average_derivative(&b, 16, 1e-6).unwrap(),
        average_derivative(&sum, 16, 1e-6).unwrap(),
    );
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(
                ts.matrix[i][j],
                ta.matrix[i][j] + tb.matrix[i][j],
                epsilon = 1e-8
            );
        }
    }
}

#[test]
fn synthetic_candidate_meets_its_budget() {
    let norm = frozen();
    let c = synthetic_candidate(&norm, 0.01).unwrap();
    let reports = c.validate(&norm, 4000, 3).unwrap();
    assert!(reports.iter().all(|r| r.passed()), "{reports:?}");
    let t = average_derivative(&c, 24, 1e-6).unwrap();
    let d = t.plane_defects(&norm);
    assert!(d[0] <= 0.02 * 1.01 && d[1] <= 0.02 * 1.01, "{d:?}");
    // the wobble is not flat at the boundary of C, so the defect is not trivial
    assert!(d[0] > 1e-4);
    assert!(t.defect_reports(&norm, 0.01).iter().all(|r| r.passed()));
}

#[test]
fn claimed_lip_is_checked() {
    // the orthogonal projection is 1-Lipschitz for the Euclidean norm
    let p = linear_candidate(projection_matrix(0.0, 0.0), [0.0, 0.0]).claiming_lip();
    let e = Norm::euclidean(3);
    let mut c = p.clone();
    c.xi = 0.1;
    let r = c.validate(&e, 300, 1).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|x| x.passed()), "{r:?}");
    // under the frozen norm the same map is not (1 + xi)-Lipschitz for small xi
    let mut c = p;
    c.xi = 0.01;
    let r = c.validate(&frozen(), 300, 1).unwrap();
    assert!(!r[1].passed(), "{r:?}");
}

#[test]
fn exact_operator_norms() {
    let l1 = Norm::new(NormSpec::Pnorm { p: 1.0 }, 3).unwrap();
    // |P_z|_1 = max(1, |z1| + |z2|)
    assert_abs_diff_eq!(
        exact_operator_norm(&l1, &projection_matrix(0.3, 0.4)).unwrap(),
        1.0,
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(
        exact_operator_norm(&l1, &projection_matrix(1.0, -0.5)).unwrap(),
        1.5,
        epsilon = 1e-15
    );
    // Euclidean: the largest singular value is sqrt(1 + z1^2 + z2^2)
    let e = Norm::euclidean(3);
    let z = (0.3f64, 0.4f64);
    let want = (1.0 + z.0 * z.0 + z.1 * z.1).sqrt();
    assert_abs_diff_eq!(
        exact_operator_norm(&e, &projection_matrix(z.0, z.1)).unwrap(),
        want,
        epsilon = 1e-12
    );
    let linf = Norm::new(NormSpec::Pnorm { p: f64::INFINITY }, 3).unwrap();
    // extreme point (1,1,-1) maps to (1+z1, 1+z2, 0)
    assert_abs_diff_eq!(
        exact_operator_norm(&linf, &projection_matrix(0.3, 0.4)).unwrap(),
        1.4,
        epsilon = 1e-15
    );
    let mk = Norm::new(
        NormSpec::Minkowski {
            profile: "paper-phi".into(),
        },
        3,
    )
    .unwrap();
    assert!(exact_operator_norm(&mk, &projection_matrix(0.0, 0.0)).is_none());
}

#[test]
fn euclidean_and_l1_minimum_is_one() {
    let cfg = ProjectionSearchConfig::default();
    let e = min_projection_norm(&Norm::euclidean(3), &cfg).unwrap();
    assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-6);
    assert!(e.z[0].abs() < 1e-2 && e.z[1].abs() < 1e-2, "{:?}", e.z);
    assert!(e.stable);
    let l1 = Norm::new(NormSpec::Pnorm { p: 1.0 }, 3).unwrap();
    let r = min_projection_norm(&l1, &cfg).unwrap();
    assert!(
        r.value <= 1.0 + 1e-12 && r.value > 1.0 - 1e-3,
        "{}",
        r.value
    );
    assert_abs_diff_eq!(r.upper.unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(
        exact_min_projection(&l1, &cfg).unwrap().1,
        1.0,
        epsilon = 1e-12
    );
}

#[test]
fn frozen_norm_is_not_one_complemented() {
    let norm = frozen();
    let cfg = ProjectionSearchConfig::default();
    let r = min_projection_norm(&norm, &cfg).unwrap();
    assert_eq!(r.starts.len(), 8);
    assert!(r.stable && r.spread <= 1e-3, "{}", r.spread);
    assert!(r.value > 1.02);
    // frozen from the search itself
    assert_abs_diff_eq!(r.value, 1.206064, epsilon = 1e-5);
    // the exact minimum bounds the sampled minimum from above
    let (_, exact) = exact_min_projection(&norm, &cfg).unwrap();
    assert_abs_diff_eq!(exact, 1.217869, epsilon = 1e-5);
    assert!(r.value <= exact + 1e-9);
    assert!(r.value <= r.upper.unwrap() + 1e-12);
    assert!(projection_reports(&r, 0.02, 1e-3)
        .iter()
        .all(|x| x.passed()));
}

#[test]
fn tension_needs_a_small_budget() {
    let norm = frozen();
    let cfg = ProjectionSearchConfig::default();
    let t = AveragedOperator {
        matrix: projection_matrix(-0.9, -0.7),
    };
    let r = projection_tension(&t, &norm, 1.2, 0.01, &cfg);
    assert!(r.passed(), "{r:?}");
    let r = projection_tension(&t, &norm, 1.2, 0.06, &cfg);
    assert_eq!(r.status, crate::report::Status::HypothesisViolated);
    let z = t.induced_projection().unwrap();
    assert_abs_diff_eq!(z[0], -0.9, epsilon = 1e-15);
    assert_abs_diff_eq!(z[1], -0.7, epsilon = 1e-15);
}

#[test]
fn induced_projection_inverts_t_on_the_plane() {
    let t = AveragedOperator {
        matrix: [[2.0, 1.0, 0.5], [0.0, 1.0, -1.0], [0.0; 3]],
    };
    let z = t.induced_projection().unwrap();
    let p = projection_matrix(z[0], z[1]);
    // P = (T on the plane)^{-1} T
    let inv = [[0.5, -0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
    let want = mat_mul(&inv, &t.matrix);
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(p[i][j], want[i][j], epsilon = 1e-15);
        }
    }
}

proptest! {
    #[test]
    fn projection_algebra_is_exact(z1 in -50.0f64..50.0, z2 in -50.0f64..50.0) {
        let p = projection_matrix(z1, z2);
        prop_assert_eq!(mat_mul(&p, &p), p);
        prop_assert_eq!(mat_vec(&p, &[1.0, 0.0, 0.0]), [1.0, 0.0, 0.0]);
        prop_assert_eq!(mat_vec(&p, &[0.0, 1.0, 0.0]), [0.0, 1.0, 0.0]);
        prop_assert_eq!(mat_vec(&p, &[0.0, 0.0, 1.0]), [-z1, -z2, 0.0]);
    }

    #[test]
    fn sampled_norm_is_below_exact(z1 in -2.0f64..2.0, z2 in -2.0f64..2.0) {
        let cfg = ProjectionSearchConfig { directions: 512, ..Default::default() };
        let sampler = OperatorNormSampler::new(&cfg);
        let norm = frozen();
        let p = projection_matrix(z1, z2);
        let (s, _) = sampler.eval(&norm, &p);
        let e = exact_operator_norm(&norm, &p).unwrap();
        prop_assert!(s <= e * (1.0 + 1e-12));
        prop_assert!(s >= 0.8 * e);
    }
}
