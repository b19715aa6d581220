use super::*;
use crate::manifold::{GraphProfile, ManifoldSpec};
use crate::normed_space::NormSpec;
use crate::report::Status;

fn circle() -> Manifold {
    Manifold::new(ManifoldSpec::circle(1.0)).unwrap()
}

fn linf2() -> Norm {
    Norm::new(NormSpec::Pnorm { p: f64::INFINITY }, 2).unwrap()
}

fn circle_partition() -> PartitionOfUnity {
    let m = circle();
    let opts = CoverOptions {
        inner_fraction: 0.5,
        ..CoverOptions::default()
    };
    let cover = build_cover(&m, 2, 0.3, &opts).unwrap();
    build_partition(&m, cover, &linf2(), &PartitionOptions::default()).unwrap()
}

#[test]
fn cutoff_values() {
    for r in [5.0, 10.0] {
        let c = FlatteningCutoff::new(r).unwrap();
        assert_eq!(c.mu(r), 1.0);
        assert_eq!(c.mu(r * r), 0.0);
        assert!((c.mu(r.powf(1.5)) - 0.5).abs() <= 1e-15);
        assert_eq!(c.mu(0.0), 1.0);
        let mut prev = 1.0;
        for k in 0..200 {
            let v = c.mu(r * 0.5 + k as f64 * r * r / 150.0);
            assert!(v <= prev);
            prev = v;
        }
    }
    assert!(FlatteningCutoff::new(1.0).is_err());
}

#[test]
fn partition_sums_to_one_and_respects_patches() {
    let pou = circle_partition();
    assert!(pou.h >= 1.0);
    let m = circle();
    let pts = m.random_points(4.0, 10_000, 2, "pou-test");
    for p in &pts {
        let w = pou.weights(p).unwrap();
        let total: f64 = w.iter().map(|x| x.alpha).sum();
        assert!((total - 1.0).abs() <= 1e-10);
        assert!(w.iter().all(|x| (0.0..=1.0).contains(&x.alpha)));
    }
    // alpha_i vanishes outside U_i
    for p in pts.iter().take(2000) {
        let inside: Vec<usize> = pou.cover().locate(&m, p).into_iter().map(|x| x.0).collect();
        for i in 0..pou.m() {
            if !inside.contains(&i) {
                assert_eq!(pou.alpha(i, p).unwrap(), 0.0);
            }
        }
    }
}

#[test]
fn single_chart_partition() {
    let m = Manifold::new(ManifoldSpec::graph(1, GraphProfile::Flat, 4.0)).unwrap();
    let cover = build_cover(&m, 1, 2.0, &CoverOptions::default()).unwrap();
    assert_eq!(cover.m(), 1);
    let pou =
        build_partition(&m, cover, &Norm::euclidean(2), &PartitionOptions::default()).unwrap();
    assert_eq!(pou.h_sample.value, 0.0);
    assert_eq!(pou.h, 1.0);
    assert_eq!(pou.alpha(0, &[0.3, 0.0]).unwrap(), 1.0);
}

#[test]
fn glue_examples() {
    let pou = circle_partition();
    let m = circle();
    let norm = linf2();
    let pts = probe_set(&m, 4.0, 300, 3, "glue-test", &[0.005]);
    let f = |x: &[f64]| x[0] * x[1] + 0.3 * x[0];
    let eps = 1e-3;
    let same = glue("glue", &pou, &norm, &f, &|_, x| f(x), eps, &pts).unwrap();
    assert!(
        same[0].sampled_value <= 1e-15 && same[1].sampled_value <= 1e-10,
        "{same:?}"
    );
    let shifted = glue("glue", &pou, &norm, &f, &|_, x| f(x) + eps / 2.0, eps, &pts).unwrap();
    assert!((shifted[0].sampled_value - eps / 2.0).abs() <= 1e-15);
    assert!(shifted[1].sampled_value <= 1e-9);
    let mixed = glue(
        "glue",
        &pou,
        &norm,
        &f,
        &|i, x| f(x) + if i % 2 == 0 { eps / 2.0 } else { -eps / 2.0 },
        eps,
        &pts,
    )
    .unwrap();
    assert!(mixed.iter().all(|r| r.passed()), "{mixed:?}");
    assert!(mixed[1].sampled_value > 0.0);
    let bad = glue("glue", &pou, &norm, &f, &|_, x| f(x) + 2.0 * eps, eps, &pts).unwrap();
    assert_eq!(bad[0].status, Status::HypothesisViolated);
}

#[test]
fn flatten_distance_on_wave() {
    let m = Manifold::new(ManifoldSpec::graph(
        1,
        GraphProfile::Wave {
            amplitude: 0.2,
            frequency: 1.0,
        },
        200.0,
    ))
    .unwrap();
    let norm = Norm::euclidean(2);
    let x0 = m.basepoint().to_vec();
    let x0c = x0.clone();
    let nc = norm.clone();
    let f = LipschitzFunction::new(
        "dist",
        &x0,
        Some(1.0),
        crate::lipschitz::DomainTag::Ambient,
        move |x| nc.dist(x, &x0c),
    );
    let pts = probe_set(&m, 200.0, 1500, 4, "flatten-test", &[0.05]);
    let (phi, rep) = flatten("flatten", &f, 10.0, 1.0, &norm, &pts).unwrap();
    assert!(rep.passed(), "{rep:?}");
    assert!(rep.sampled_value > 0.9);
    // agrees with f on B_R and vanishes beyond R^2
    for p in &pts {
        let t = dist2(p, &x0);
        if t <= 10.0 {
            assert_eq!(phi.eval(p), f.eval(p));
        }
        if t >= 100.0 {
            assert_eq!(phi.eval(p), 0.0);
        }
    }
}

#[test]
fn gamma_basics_on_circle() {
    let m = circle();
    let norm = linf2();
    let op = build_gamma(&m, &norm, 2, &GammaOptions::default()).unwrap();
    let c = &op.constants;
    assert!(c.pitch <= c.eps);
    assert!(op.pitch.modulus <= c.eps);
    let suite = random_lip_suite(
        &SuiteSpec {
            seed: 9,
            count: 4,
            anchors: 8,
            radius: 2.0,
        },
        &m,
        &norm,
    )
    .unwrap();
    let zero = LipschitzFunction::new(
        "zero",
        m.basepoint(),
        Some(0.0),
        crate::lipschitz::DomainTag::Ambient,
        |_| 0.0,
    );
    let ez = op.bind(&zero).unwrap();
    let pts = m.random_points(4.0, 30, 5, "gamma-test");
    for p in &pts {
        assert_eq!(ez.gamma(p).unwrap(), 0.0);
    }
    for f in &suite {
        let e = op.bind(f).unwrap();
        assert_eq!(e.gamma(m.basepoint()).unwrap(), 0.0);
    }
    let rec = op.record();
    let json = serde_json::to_string(&rec).unwrap();
    let back: GammaRecord = serde_json::from_str(&json).unwrap();
    let again = GammaOperator::from_record(&back).unwrap();
    let (e1, e2) = (op.bind(&suite[3]).unwrap(), again.bind(&suite[3]).unwrap());
    for p in &pts {
        assert_eq!(
            e1.gamma(p).unwrap().to_bits(),
            e2.gamma(p).unwrap().to_bits()
        );
    }
}
