//! Verification suites: each turns an [`ExperimentConfig`] into bound reports.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    build_gamma, build_partition, flatten, glue, probe_set, verify_gamma, FlatteningCutoff,
    GammaOperator, PartitionOptions, VerifyOptions,
};
use crate::config::ExperimentConfig;
use crate::counterexample::{
    average_derivative, flat_patch_check, min_projection_norm, projection_reports,
    synthetic_candidate, AveragedOperator, ProjectionSearchResult,
};
use crate::error::{Error, Result};
use crate::interpolation::{grid_error_check, HypercubeMesh, VertexIndex};
use crate::lipschitz::{
    combination, max_quotient, random_lip_suite, DomainTag, LipschitzFunction, SuiteSpec,
};
use crate::manifold::sample_retraction_lip;
use crate::manifold::{
    build_cover, lemma1_defect, lemma2_defect, verify_tangent_identity, ChartInverse, CoverOptions,
    Manifold, ManifoldSpec,
};
use crate::mollification::{smooth_eval, MollifierKernel, SmoothingOperator};
use crate::normed_space::{equivalence_k, ConvexBodySpec, Norm};
use crate::report::{fmt_num, refs, BoundReport};
use crate::rng;
use crate::vecops::{dist2, fmt_point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Kernel,
    Lemma1,
    Lemma2,
    Grid,
    Glue,
    Flatten,
    Smoothing,
    Gamma,
    Counterexample,
    All,
}

impl Suite {
    pub const EACH: [Suite; 9] = [
        Suite::Kernel,
        Suite::Lemma1,
        Suite::Lemma2,
        Suite::Grid,
        Suite::Glue,
        Suite::Flatten,
        Suite::Smoothing,
        Suite::Gamma,
        Suite::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernel => "kernel",
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Grid => "grid",
            Suite::Glue => "glue",
            Suite::Flatten => "flatten",
            Suite::Smoothing => "smoothing",
            Suite::Gamma => "gamma",
            Suite::Counterexample => "counterexample",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .iter()
            .chain([Suite::All].iter())
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

/// Runs one suite (or all of them in order) and applies the slack overrides.
pub fn run_suite(cfg: &ExperimentConfig, suite: Suite) -> Result<Vec<BoundReport>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let list: Vec<Suite> = if suite == Suite::All {
        Suite::EACH.to_vec()
    } else {
        vec![suite]
    };
    for s in list {
        let t = Instant::now();
        let mut reps = match s {
            Suite::Kernel => kernel_suite(cfg)?,
            Suite::Lemma1 => lemma1_suite(cfg)?,
            Suite::Lemma2 => lemma2_suite(cfg)?,
            Suite::Grid => grid_suite(cfg)?,
            Suite::Glue => glue_suite(cfg)?,
            Suite::Flatten => flatten_suite(cfg)?,
            Suite::Smoothing => smoothing_suite(cfg)?,
            Suite::Gamma => gamma_suite(cfg)?,
            Suite::Counterexample => counterexample_suite(cfg)?.reports,
            Suite::All => unreachable!("expanded above"),
        };
        let secs = t.elapsed().as_secs_f64();
        log::info!("suite {s}: {} rows in {secs:.1}s", reps.len());
        for r in &mut reps {
            if r.seconds.is_none() {
                r.seconds = Some(secs);
            }
        }
        out.extend(reps);
    }
    cfg.apply_slack(&mut out);
    Ok(out)
}

fn manifold(spec: &ManifoldSpec) -> Result<Manifold> {
    Manifold::new(spec.clone())
}

fn norm_for(spec: &crate::normed_space::NormSpec, m: &Manifold) -> Result<Norm> {
    Norm::new(spec.clone(), m.ambient_dim())
}

fn sub_seed(seed: u64, tag: &str) -> u64 {
    rng::stream(seed, rng::purpose(tag), 0).gen()
}

/// Kernel mass, the gradient bound `G / s`, and the constant identity.
pub fn kernel_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let kc = &cfg.kernel;
    let mut out = Vec::new();
    for &dim in &kc.dims {
        for &s in &kc.scales {
            let k = MollifierKernel::new(dim, s, kc.quad)?;
            let tag = format!("N={dim} s={s}");
            let mass = k.mass();
            out.push(
                BoundReport::new(
                    "kernel",
                    "kernel_mass",
                    refs::KERNEL_MASS,
                    0.0,
                    (mass.value - 1.0).abs(),
                    0.0,
                    1e-6,
                )
                .with_witness(format!("{tag} rule_gap={}", fmt_num(mass.error))),
            );
            let gm = k.gradient_mass();
            out.push(
                BoundReport::new(
                    "kernel",
                    "kernel_gradient_mass",
                    refs::COMPUTE_G,
                    k.constants().g / s,
                    gm.value,
                    1e-3,
                    0.0,
                )
                .with_witness(format!("{tag} rule_gap={}", fmt_num(gm.error))),
            );
        }
        let c = crate::mollification::kernel_constants(dim)?;
        out.push(
            BoundReport::new(
                "kernel",
                "kernel_identity",
                refs::KERNEL_CONSTANTS,
                0.0,
                (c.identity_ratio() - 1.0).abs(),
                0.0,
                1e-6,
            )
            .with_witness(format!("N={dim}")),
        );
    }
    Ok(out)
}

/// `r` for circles and spheres, where the tangent defect has a closed form.
fn round_radius(spec: &ManifoldSpec) -> Option<f64> {
    match spec {
        ManifoldSpec::Circle { radius, .. } | ManifoldSpec::Sphere2 { radius, .. } => Some(*radius),
        _ => None,
    }
}

/// Tangent identity, the tangent defect against its chord oracle, and chart
/// round trips.
pub fn lemma1_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let g = &cfg.geometry;
    let seed = sub_seed(cfg.seed, "lemma1-suite");
    let mut out = Vec::new();
    for spec in &g.manifolds {
        let m = manifold(spec)?;
        let label = spec.label();

        let mut worst = (0.0f64, String::new());
        for x in m.random_points(g.radius, g.tangent_points, seed, "tangent-identity") {
            let frame = m.tangent_frame(&x)?;
            for v in &frame.vectors {
                let d = verify_tangent_identity(&m, &x, v, g.tangent_step)?;
                if d > worst.0 {
                    worst = (d, format!("{label} {}", fmt_point(&x)));
                }
            }
        }
        if worst.1.is_empty() {
            worst.1 = label.to_string();
        }
        out.push(
            BoundReport::new(
                "lemma1",
                "tangent_identity",
                refs::TANGENT_IDENTITY,
                0.0,
                worst.0,
                0.0,
                1e-6,
            )
            .with_witness(worst.1),
        );

        let est = lemma1_defect(&m, g.radius, g.lemma1_delta, g.lemma1_pairs, seed)?;
        let witness = format!("{label} {} {}", fmt_point(&est.x), fmt_point(&est.y));
        if let Some(r) = round_radius(spec) {
            // on a round sphere of radius r the ratio is sin(theta/2) = chord / 2r
            let oracle = g.lemma1_delta / (2.0 * r);
            out.push(
                BoundReport::new(
                    "lemma1",
                    "lemma1_oracle_gap",
                    refs::LEMMA1,
                    g.lemma1_oracle_tol * oracle,
                    (est.value - oracle).abs(),
                    0.0,
                    0.0,
                )
                .with_witness(witness),
            );
        }

        let x0 = m.basepoint().to_vec();
        let d = m.intrinsic_dim();
        let mut worst = (0.0f64, String::new());
        for c in 0..g.charts {
            let center = if c == 0 {
                x0.clone()
            } else {
                m.random_points(g.radius, g.charts, seed ^ 0xc4a7, "chart-centers")
                    .get(c)
                    .cloned()
                    .unwrap_or_else(|| x0.clone())
            };
            let chart = ChartInverse::new(m.tangent_frame(&center)?, 4.0 * g.chart_halfwidth);
            for k in 0..g.chart_points as u64 {
                let h = rng::halton(k + 1, d);
                let u: Vec<f64> = h
                    .iter()
                    .map(|t| (2.0 * t - 1.0) * g.chart_halfwidth)
                    .collect();
                let y = m.retract(&chart.frame.affine(&u))?;
                let back = chart.coords(&m, &y)?;
                let err = dist2(&back, &u);
                if err > worst.0 {
                    worst = (err, format!("{label} chart={c} u={}", fmt_point(&u)));
                }
            }
        }
        if worst.1.is_empty() {
            worst.1 = label.to_string();
        }
        out.push(
            BoundReport::new(
                "lemma1",
                "chart_round_trip",
                refs::CHART_INVERSE,
                0.0,
                worst.0,
                0.0,
                1e-8,
            )
            .with_witness(worst.1),
        );
    }
    Ok(out)
}

/// The translation defect must not grow as `delta` shrinks.
pub fn lemma2_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let g = &cfg.geometry;
    let seed = sub_seed(cfg.seed, "lemma2-suite");
    let mut deltas = g.lemma2_deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let mut out = Vec::new();
    for spec in &g.manifolds {
        let m = manifold(spec)?;
        let cap = 0.5 * m.tube_radius();
        let mut prev: Option<(f64, f64)> = None;
        for &delta in &deltas {
            let est = lemma2_defect(&m, g.radius, delta, delta.min(cap), g.lemma2_samples, seed)?;
            if let Some((pd, pv)) = prev {
                out.push(
                    BoundReport::new(
                        "lemma2",
                        "lemma2_monotone",
                        refs::LEMMA2,
                        pv,
                        est.value,
                        g.lemma2_slack,
                        0.0,
                    )
                    .with_witness(format!("{} delta={delta} previous={pd}", spec.label())),
                );
            }
            prev = Some((delta, est.value));
        }
    }
    Ok(out)
}

/// Vertex exactness, affine reproduction, face consistency and the
/// interpolation lemma for `g(u) = |u|^2 / 2`.
pub fn grid_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let gc = &cfg.grid;
    let seed = sub_seed(cfg.seed, "grid-suite");
    let mut out = Vec::new();
    for &d in &gc.dims {
        let mesh = HypercubeMesh::new(d, gc.halfwidth, gc.delta)?;
        let tag = rng::purpose("grid-suite-points");
        let mut r = rng::stream(seed, tag, d as u64);
        let a: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let b: f64 = r.gen_range(-1.0..1.0);
        let smooth = |u: &[f64]| -> f64 {
            u.iter()
                .zip(&a)
                .map(|(x, c)| (c * x + 0.3).sin() + x * x)
                .sum::<f64>()
                + b
        };
        let affine = |u: &[f64]| -> f64 { u.iter().zip(&a).map(|(x, c)| c * x).sum::<f64>() + b };
        let vals = |f: &dyn Fn(&[f64]) -> f64, k: &VertexIndex| -> Result<f64> {
            Ok(f(&mesh.vertex_coords(k)))
        };

        let lo = (-gc.halfwidth / mesh.xi).ceil() as i64;
        let hi = (gc.halfwidth / mesh.xi).floor() as i64;
        let mut vertex_err = 0.0f64;
        let mut face_err = 0.0f64;
        let mut affine_err = 0.0f64;
        for _ in 0..gc.points {
            let mut k: VertexIndex = [0; 3];
            for slot in k.iter_mut().take(d) {
                *slot = r.gen_range(lo..=hi);
            }
            let v = mesh.vertex_coords(&k);
            vertex_err = vertex_err.max((mesh.eval(&v, |q| vals(&smooth, q))? - smooth(&v)).abs());

            let u: Vec<f64> = (0..d)
                .map(|_| r.gen_range(-gc.halfwidth..gc.halfwidth))
                .collect();
            affine_err = affine_err.max((mesh.eval(&u, |q| vals(&affine, q))? - affine(&u)).abs());

            // put one coordinate on an interior face and compare the two cells
            let j = r.gen_range(0..d);
            if hi - lo >= 2 {
                let mut w = u.clone();
                let face = r.gen_range(lo + 1..hi);
                w[j] = mesh.xi * face as f64;
                let right = mesh.cell(&w)?;
                let mut left = right;
                left[j] = face - 1;
                let mut above = right;
                above[j] = face;
                let p = mesh.eval_in_cell(&left, &w, |q| vals(&smooth, q))?;
                let q = mesh.eval_in_cell(&above, &w, |q| vals(&smooth, q))?;
                face_err = face_err.max((p - q).abs());
            }
        }
        let tag = format!("d={d}");
        out.push(
            BoundReport::new(
                "grid",
                "lambda_vertex",
                refs::LAMBDA_ON_CUBE,
                0.0,
                vertex_err,
                0.0,
                1e-12,
            )
            .with_witness(tag.clone()),
        );
        out.push(
            BoundReport::new(
                "grid",
                "lambda_affine",
                refs::LAMBDA_ON_CUBE,
                0.0,
                affine_err,
                0.0,
                1e-12,
            )
            .with_witness(tag.clone()),
        );
        out.push(
            BoundReport::new(
                "grid",
                "lambda_face",
                refs::LAMBDA_PIECEWISE,
                0.0,
                face_err,
                0.0,
                1e-12,
            )
            .with_witness(tag.clone()),
        );

        let g = |u: &[f64]| 0.5 * u.iter().map(|x| x * x).sum::<f64>();
        let grad = |u: &[f64]| u.to_vec();
        // Dg is the identity, so its modulus over sqrt(d) delta is sqrt(d) delta
        let eps = (d as f64).sqrt() * gc.delta;
        let opts = crate::interpolation::GridCheckOptions { seed, ..gc.check };
        for mut rep in grid_error_check(
            "grid",
            &g,
            Some(&grad),
            d,
            gc.halfwidth,
            eps,
            gc.delta,
            &opts,
        )? {
            rep.witness = format!("{tag} {}", rep.witness);
            out.push(rep);
        }
    }
    Ok(out)
}

/// The gluing lemma on seeded perturbations of suite functions.
pub fn glue_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let gc = &cfg.glue;
    let m = manifold(&gc.manifold)?;
    let norm = norm_for(&gc.norm, &m)?;
    let seed = sub_seed(cfg.seed, "glue-suite");
    let opts = CoverOptions {
        inner_fraction: 0.5,
        ..CoverOptions::default()
    };
    let cover = build_cover(&m, gc.n, gc.halfwidth, &opts)?;
    let pou = build_partition(&m, cover, &norm, &PartitionOptions::default())?;
    let radius = (gc.n * gc.n) as f64;
    let suite = random_lip_suite(
        &SuiteSpec {
            seed,
            count: gc.instances,
            anchors: 8,
            radius: 2.0,
        },
        &m,
        &norm,
    )?;
    let dim = m.ambient_dim();
    let mut out = Vec::new();
    for (k, f) in suite.iter().enumerate() {
        let eps = gc.eps * (1.0 + (k % 3) as f64);
        let mut r = rng::stream(seed, rng::purpose("glue-waves"), k as u64);
        // per-chart waves eps/2 sin(w.x + b) with |w|_* <= 1 keep the premise
        let waves: Vec<(Vec<f64>, f64)> = (0..pou.m())
            .map(|_| {
                let w = rng::gaussian_vec(&mut r, dim);
                let scale = norm.dual_norm_upper(&w).max(1e-12);
                (w.iter().map(|c| c / scale).collect(), r.gen_range(0.0..6.3))
            })
            .collect();
        let fv = |x: &[f64]| f.eval(x);
        let piece = |i: usize, x: &[f64]| {
            let (w, b) = &waves[i];
            f.eval(x) + 0.5 * eps * (crate::vecops::dot(w, x) + b).sin()
        };
        let pts = probe_set(
            &m,
            radius,
            gc.points,
            seed ^ k as u64,
            "glue-probes",
            &[0.005],
        );
        for rep in glue("glue", &pou, &norm, &fv, &piece, eps, &pts)? {
            out.push(rep.with_f(k));
        }
    }
    Ok(out)
}

/// Exact cutoff values and the flattening norm bound on suite functions.
pub fn flatten_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let fc = &cfg.flatten;
    let m = manifold(&fc.manifold)?;
    let norm = norm_for(&fc.norm, &m)?;
    let k = equivalence_k(&norm, 20_000, 1)?;
    let seed = sub_seed(cfg.seed, "flatten-suite");
    let suite = random_lip_suite(
        &SuiteSpec {
            seed,
            count: fc.functions,
            anchors: 8,
            radius: 2.0,
        },
        &m,
        &norm,
    )?;
    let mut out = Vec::new();
    for &r in &fc.radii {
        let cut = FlatteningCutoff::new(r)?;
        let w = format!("R={r}");
        out.push(
            BoundReport::new(
                "flatten",
                "cutoff_at_r",
                refs::CUTOFF,
                0.0,
                (cut.mu(r) - 1.0).abs(),
                0.0,
                0.0,
            )
            .with_witness(w.clone()),
        );
        out.push(
            BoundReport::new(
                "flatten",
                "cutoff_at_r2",
                refs::CUTOFF,
                0.0,
                cut.mu(r * r).abs(),
                0.0,
                0.0,
            )
            .with_witness(w.clone()),
        );
        // R^{3/2} is not exact in floating point, so this row allows one rounding
        out.push(
            BoundReport::new(
                "flatten",
                "cutoff_at_r15",
                refs::CUTOFF,
                0.0,
                (cut.mu(r.powf(1.5)) - 0.5).abs(),
                0.0,
                1e-15,
            )
            .with_witness(w.clone()),
        );
        let pts = probe_set(
            &m,
            1.5 * r * r,
            fc.points,
            seed ^ r.to_bits(),
            "flatten-probes",
            &[0.05],
        );
        let x0 = m.basepoint();
        let outside: Vec<&Vec<f64>> = pts.iter().filter(|p| dist2(p, x0) >= r * r).collect();
        if outside.is_empty() {
            return Err(Error::Sampling(format!(
                "flatten probes beyond R^2 = {}",
                r * r
            )));
        }
        for (i, f) in suite.iter().enumerate() {
            let (phi, rep) = flatten("flatten", f, r, k, &norm, &pts)?;
            let witness = format!("{w} {}", rep.witness);
            out.push(rep.with_f(i).with_witness(witness));
            let tail = outside
                .iter()
                .map(|p| phi.eval(p).abs())
                .fold(0.0, f64::max);
            out.push(
                BoundReport::new(
                    "flatten",
                    "flatten_support",
                    refs::FLATTEN,
                    0.0,
                    tail,
                    0.0,
                    0.0,
                )
                .with_f(i)
                .with_witness(format!("{w} probes={}", outside.len())),
            );
        }
    }
    Ok(out)
}

/// Smoothing of suite functions: constants, affine data, displacement, the
/// `S_n` bounds and linearity.
pub fn smoothing_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let sc = &cfg.smoothing;
    let m = manifold(&cfg.manifold)?;
    let norm = norm_for(&cfg.norm, &m)?;
    let seed = sub_seed(cfg.seed, "smoothing-suite");
    let k = equivalence_k(&norm, 20_000, 1)?;
    let mut out = Vec::new();

    // constants survive smoothing, and so do affine functions on a flat plane
    let x0 = m.basepoint().to_vec();
    let kern = MollifierKernel::new(
        m.ambient_dim(),
        sc.kernel_scale.min(0.5 * m.tube_radius()),
        cfg.kernel.quad,
    )?;
    let three = LipschitzFunction::new("three", &x0, Some(0.0), DomainTag::Ambient, |_| 3.0);
    let mut const_err = 0.0f64;
    for p in m.random_points(3.0, 20, seed, "smoothing-const") {
        // LipschitzFunction re-bases to zero, so add the constant back
        const_err = const_err.max((smooth_eval(&three, &m, &kern, &p)?.value + 3.0 - 3.0).abs());
    }
    out.push(BoundReport::new(
        "smoothing",
        "smooth_constant",
        refs::SMOOTH_EVAL,
        0.0,
        const_err,
        0.0,
        1e-6,
    ));

    let plane = Manifold::new(ManifoldSpec::graph(
        2,
        crate::manifold::GraphProfile::Flat,
        3.0,
    ))?;
    let pk = MollifierKernel::new(3, 0.1, cfg.kernel.quad)?;
    let lin = LipschitzFunction::new(
        "linear",
        plane.basepoint(),
        Some(1.0),
        DomainTag::Ambient,
        |x| 0.6 * x[0] - 0.8 * x[1] + 0.5 * x[2],
    );
    let mut affine_err = 0.0f64;
    for p in plane.random_points(2.0, 20, seed, "smoothing-affine") {
        affine_err =
            affine_err.max((smooth_eval(&lin, &plane, &pk, &p)?.value - lin.eval(&p)).abs());
    }
    out.push(BoundReport::new(
        "smoothing",
        "smooth_affine_plane",
        refs::SMOOTH_EVAL,
        0.0,
        affine_err,
        0.0,
        1e-6,
    ));

    let suite = random_lip_suite(
        &SuiteSpec {
            seed: cfg.seed,
            count: sc.functions.max(2),
            anchors: 8,
            radius: 2.0,
        },
        &m,
        &norm,
    )?;
    for &n in &sc.n {
        let nf = n as f64;
        let radius = nf * nf;
        let lip = sample_retraction_lip(&m, radius, sc.lip_pairs, seed)?
            .value
            .max(1.0);
        let l_n = sc.inflation * lip;
        let op = SmoothingOperator::build(&m, k, l_n, n, &sc.options)?;
        out.push(
            BoundReport::new(
                "smoothing",
                "delta_defect",
                refs::CALIBRATE_DELTA,
                op.calibration.threshold,
                op.calibration.defect,
                0.0,
                0.0,
            )
            .with_n(n)
            .with_witness(format!("delta={}", fmt_num(op.delta()))),
        );
        let probes = probe_set(
            &m,
            radius + m.delta_n(),
            sc.probes,
            seed ^ n as u64,
            "smoothing-probes",
            &[0.01, 0.1],
        );
        for (i, f) in suite.iter().enumerate() {
            let sf = op.smoothed(f)?;
            let vals: Vec<f64> = probes
                .par_iter()
                .map(|p| sf.eval(p))
                .collect::<Result<_>>()?;
            let hats: Vec<f64> = probes
                .par_iter()
                .map(|p| op.hat(f, p))
                .collect::<Result<_>>()?;
            let fs: Vec<f64> = probes.iter().map(|p| f.eval(p)).collect();
            let (mut uni, mut disp) = ((0.0f64, 0usize), (0.0f64, 0usize));
            for j in 0..probes.len() {
                let u = (vals[j] - fs[j]).abs();
                let h = (hats[j] - fs[j]).abs();
                if u > uni.0 {
                    uni = (u, j);
                }
                if h > disp.0 {
                    disp = (h, j);
                }
            }
            let (lip, a, b) = max_quotient(&probes, &vals, &norm).unwrap_or((0.0, 0, 0));
            out.push(
                BoundReport::new(
                    "smoothing",
                    "sn_base",
                    refs::APPLY_SN,
                    0.0,
                    sf.eval(m.basepoint())?.abs(),
                    0.0,
                    0.0,
                )
                .with_n(n)
                .with_f(i),
            );
            out.push(
                BoundReport::new(
                    "smoothing",
                    "sn_uniform",
                    refs::APPLY_SN,
                    1.0 / nf,
                    uni.0,
                    0.0,
                    1e-9,
                )
                .with_n(n)
                .with_f(i)
                .with_witness(fmt_point(&probes[uni.1])),
            );
            out.push(
                BoundReport::new(
                    "smoothing",
                    "smooth_displacement",
                    refs::SMOOTHING_OPERATOR,
                    k * op.l_n * op.s_n,
                    disp.0,
                    0.0,
                    1e-12,
                )
                .with_n(n)
                .with_f(i)
                .with_witness(fmt_point(&probes[disp.1])),
            );
            out.push(
                BoundReport::new(
                    "smoothing",
                    "sn_lip",
                    refs::SMOOTHING_OPERATOR,
                    1.0 + 1.0 / nf,
                    lip,
                    0.05,
                    0.0,
                )
                .with_n(n)
                .with_f(i)
                .with_witness(format!(
                    "{} {}",
                    fmt_point(&probes[a]),
                    fmt_point(&probes[b])
                )),
            );
        }
        // linearity on a seeded combination of the first two members
        let mut r = rng::stream(seed, rng::purpose("smoothing-linearity"), n as u64);
        let (ca, cb) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let h = combination(&[(ca, suite[0].clone()), (cb, suite[1].clone())])?;
        let mut resid = 0.0f64;
        let mut scale = 0.0f64;
        for p in probes.iter().take(40) {
            let lhs = op.apply(&h, p)?;
            let rhs = ca * op.apply(&suite[0], p)? + cb * op.apply(&suite[1], p)?;
            resid = resid.max((lhs - rhs).abs());
            scale = scale.max(rhs.abs());
        }
        out.push(
            BoundReport::new(
                "smoothing",
                "sn_linearity",
                refs::APPLY_SN,
                0.0,
                resid,
                0.0,
                1e-9 * (1.0 + scale),
            )
            .with_n(n)
            .with_witness(format!("a={} b={}", fmt_num(ca), fmt_num(cb))),
        );
    }
    Ok(out)
}

/// Builds `Gamma_n` for each `n` and checks every bound of the assembly.
pub fn gamma_suite(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let m = manifold(&cfg.manifold)?;
    let norm = norm_for(&cfg.norm, &m)?;
    let mut out = Vec::new();
    for &n in &cfg.n {
        let op = build_gamma(&m, &norm, n, &cfg.gamma.options)?;
        out.extend(verify_operator(&op, cfg, cfg.seed)?);
    }
    Ok(out)
}

/// Every gamma bound (operator constants, rank certificate, per-function
/// bounds) for an already built operator, on the unit suite drawn from
/// `suite_seed`. The suite seed also replaces `gamma.verify.seed`.
pub fn verify_operator(
    op: &GammaOperator,
    cfg: &ExperimentConfig,
    suite_seed: u64,
) -> Result<Vec<BoundReport>> {
    let suite = random_lip_suite(
        &SuiteSpec {
            seed: suite_seed,
            count: cfg.suite_size,
            anchors: 8,
            radius: 2.0,
        },
        op.manifold(),
        op.norm(),
    )?;
    let verify = VerifyOptions {
        seed: suite_seed,
        ..cfg.gamma.verify.clone()
    };
    verify_gamma(op, &suite, &verify)
}

/// Everything the counterexample suite computes, for the CLI tables.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleRun {
    pub reports: Vec<BoundReport>,
    pub search: ProjectionSearchResult,
    pub averaged: AveragedOperator,
    pub defects: [f64; 2],
    pub xi: f64,
}

pub fn counterexample_suite(cfg: &ExperimentConfig) -> Result<CounterexampleRun> {
    let cc = &cfg.counterexample;
    let norm = Norm::new(cc.norm.clone(), 3)?;
    let mut reports = flat_patch_check(&ConvexBodySpec::new(3), cc.grid)?;
    let search = min_projection_norm(&norm, &cc.search)?;
    reports.extend(projection_reports(&search, cc.margin, cc.search.stability));
    let cand = synthetic_candidate(&norm, cc.xi)?;
    reports.extend(cand.validate(&norm, cc.validate_samples, sub_seed(cfg.seed, "candidate"))?);
    let averaged = average_derivative(&cand, cc.quad_nodes, cc.fd_step)?;
    reports.extend(averaged.defect_reports(&norm, cc.xi));
    let defects = averaged.plane_defects(&norm);
    Ok(CounterexampleRun {
        reports,
        search,
        averaged,
        defects,
        xi: cc.xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::EACH.iter().chain([Suite::All].iter()) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), *s);
        }
        assert!(matches!("Kernel".parse::<Suite>(), Err(Error::Config(_))));
    }

    #[test]
    fn empty_n_is_rejected_before_running() {
        let cfg = ExperimentConfig {
            n: vec![],
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            run_suite(&cfg, Suite::Kernel),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn slack_overrides_reach_suite_rows() {
        let mut cfg = ExperimentConfig::default();
        cfg.kernel.dims = vec![1];
        cfg.kernel.scales = vec![0.1];
        cfg.slack.insert("kernel_gradient_mass".into(), 0.25);
        let reps = run_suite(&cfg, Suite::Kernel).unwrap();
        let g = reps
            .iter()
            .find(|r| r.bound_name == "kernel_gradient_mass")
            .unwrap();
        assert_eq!(g.slack, 0.25);
        assert!(reps.iter().all(|r| r.seconds.is_some()));
    }

    #[test]
    fn geometry_rows_per_manifold() {
        let cfg = ExperimentConfig::default();
        let l1 = run_suite(&cfg, Suite::Lemma1).unwrap();
        // the torus has no closed-form oracle row
        assert_eq!(
            l1.iter()
                .filter(|r| r.bound_name == "lemma1_oracle_gap")
                .count(),
            2
        );
        assert_eq!(
            l1.iter()
                .filter(|r| r.bound_name == "chart_round_trip")
                .count(),
            3
        );
        let l2 = run_suite(&cfg, Suite::Lemma2).unwrap();
        assert_eq!(l2.len(), 6);
    }
}
