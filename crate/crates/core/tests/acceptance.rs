//! One pass/fail line per acceptance criterion. Tolerances are pinned here
//! rather than read back from the reports, so a loosened report cannot pass.

use std::path::Path;
use std::time::{Duration, Instant};

use lipfree::config::ExperimentConfig;
use lipfree::counterexample::frozen_norm_spec;
use lipfree::report::{sort_reports, write_csv, BoundReport, Status};
use lipfree::suites::{counterexample_suite, run_suite, Suite};

const KERNEL_MASS_TOL: f64 = 1e-6;
const KERNEL_G_SLACK: f64 = 1e-3;
const KERNEL_IDENTITY_TOL: f64 = 1e-6;
const TANGENT_TOL: f64 = 1e-6;
const LEMMA1_REL: f64 = 0.01;
/// `sin(theta / 2) = chord / 2r` for chord 0.1 on the unit circle and sphere.
const LEMMA1_ORACLE: f64 = 0.05;
const LEMMA2_SLACK: f64 = 0.01;
const CHART_TOL: f64 = 1e-8;
const LAMBDA_TOL: f64 = 1e-12;
const GRID_SLACK: f64 = 0.01;
const GLUE_SLACK: f64 = 0.01;
const FLATTEN_SLACK: f64 = 0.01;
/// `mu(R^{3/2})` goes through `powf` and two logarithms.
const CUTOFF_MID_TOL: f64 = 1e-15;
const CIRCLE_SLACK: f64 = 0.05;
const UNIFORM_TOL: f64 = 1e-4;
const LINEARITY_TOL: f64 = 1e-8;
const SPHERE_SLACK: f64 = 0.10;
const FLAT_BODY_TOL: f64 = 1e-10;
const FLAT_GAUGE_TOL: f64 = 1e-8;
const PROJECTION_FLOOR: f64 = 1.02;
const PROJECTION_STABILITY: f64 = 1e-3;
const T_DEFECT_BOUND: f64 = 0.02 * 1.01;

struct Ledger {
    lines: Vec<(usize, bool, String)>,
}

impl Ledger {
    fn record(
        &mut self,
        criterion: usize,
        checks: &[(bool, String)],
        elapsed: Duration,
        limit: Duration,
    ) {
        let mut ok = elapsed <= limit;
        let mut notes = vec![format!(
            "{:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            limit.as_secs()
        )];
        for (pass, what) in checks {
            ok &= *pass;
            notes.push(format!("{}{what}", if *pass { "" } else { "FAILED " }));
        }
        let line = format!(
            "criterion {criterion}: {} | {}",
            if ok { "PASS" } else { "FAIL" },
            notes.join("; ")
        );
        println!("{line}");
        self.lines.push((criterion, ok, line));
    }
}

fn rows<'a>(reports: &'a [BoundReport], name: &str) -> Vec<&'a BoundReport> {
    reports.iter().filter(|r| r.bound_name == name).collect()
}

/// `(every row within its pinned bound, row count, worst sampled value)`.
fn all_within(
    reports: &[BoundReport],
    name: &str,
    bound: impl Fn(&BoundReport) -> f64,
) -> (bool, usize, f64) {
    let rs = rows(reports, name);
    let ok = !rs.is_empty()
        && rs
            .iter()
            .all(|r| r.status != Status::HypothesisViolated && r.sampled_value <= bound(r));
    let worst = rs.iter().map(|r| r.sampled_value).fold(0.0, f64::max);
    (ok, rs.len(), worst)
}

fn check(
    reports: &[BoundReport],
    name: &str,
    expect: usize,
    bound: impl Fn(&BoundReport) -> f64,
) -> (bool, String) {
    let (ok, count, worst) = all_within(reports, name, bound);
    (
        ok && count >= expect,
        format!("{name} x{count} worst {worst:.3e}"),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn csv_bytes(mut reports: Vec<BoundReport>) -> Vec<u8> {
    sort_reports(&mut reports);
    let mut out = Vec::new();
    write_csv(&mut out, &reports, false).unwrap();
    out
}

fn sphere_config() -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/sphere.toml"))
        .unwrap()
}

/// The reports of criteria 1 to 7, keyed for the determinism rerun.
fn all_runs(circle: &ExperimentConfig, sphere: &ExperimentConfig) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for s in [
        Suite::Kernel,
        Suite::Lemma1,
        Suite::Lemma2,
        Suite::Grid,
        Suite::Glue,
        Suite::Flatten,
        Suite::Gamma,
        Suite::Counterexample,
    ] {
        out.push((s.to_string(), csv_bytes(run_suite(circle, s).unwrap())));
    }
    out.push((
        "gamma-sphere".into(),
        csv_bytes(run_suite(sphere, Suite::Gamma).unwrap()),
    ));
    out
}

fn main() {
    // runs without the libtest harness so the criterion lines always show;
    // honour `--list` and name filters the way a harness test would
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args
        .iter()
        .any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str()))
    {
        return;
    }

    let cfg = ExperimentConfig::default();
    let sphere = sphere_config();
    assert_eq!(cfg.n, [5, 10, 20]);
    assert_eq!(cfg.suite_size, 10);
    let mut ledger = Ledger { lines: Vec::new() };
    let mut first: Vec<(String, Vec<u8>)> = Vec::new();

    // 1. kernel
    let (k, t) = timed(|| run_suite(&cfg, Suite::Kernel).unwrap());
    assert_eq!(cfg.kernel.dims, [1, 2, 3]);
    assert_eq!(cfg.kernel.scales, [0.05, 0.1, 0.5]);
    ledger.record(
        1,
        &[
            check(&k, "kernel_mass", 9, |_| KERNEL_MASS_TOL),
            check(&k, "kernel_gradient_mass", 9, |r| {
                r.paper_value * (1.0 + KERNEL_G_SLACK)
            }),
            check(&k, "kernel_identity", 3, |_| KERNEL_IDENTITY_TOL),
        ],
        t,
        Duration::from_secs(10),
    );
    first.push(("kernel".into(), csv_bytes(k)));

    // 2. geometry
    let ((l1, l2), t) = timed(|| {
        (
            run_suite(&cfg, Suite::Lemma1).unwrap(),
            run_suite(&cfg, Suite::Lemma2).unwrap(),
        )
    });
    assert_eq!(cfg.geometry.tangent_points, 50);
    assert_eq!(cfg.geometry.chart_points, 100);
    assert_eq!(cfg.geometry.lemma1_delta, 0.1);
    ledger.record(
        2,
        &[
            check(&l1, "tangent_identity", 3, |_| TANGENT_TOL),
            check(&l1, "lemma1_oracle_gap", 2, |_| LEMMA1_REL * LEMMA1_ORACLE),
            check(&l2, "lemma2_monotone", 6, |r| {
                r.paper_value * (1.0 + LEMMA2_SLACK)
            }),
            check(&l1, "chart_round_trip", 3, |_| CHART_TOL),
        ],
        t,
        Duration::from_secs(60),
    );
    first.push(("lemma1".into(), csv_bytes(l1)));
    first.push(("lemma2".into(), csv_bytes(l2)));

    // 3. interpolation
    let (g, t) = timed(|| run_suite(&cfg, Suite::Grid).unwrap());
    let grid_lip = |r: &BoundReport| {
        let d: f64 = if r.witness.starts_with("d=2") {
            2.0
        } else {
            1.0
        };
        (1.0 + d.sqrt()) * d.sqrt() * 0.1 * (1.0 + GRID_SLACK)
    };
    ledger.record(
        3,
        &[
            check(&g, "lambda_vertex", 2, |_| LAMBDA_TOL),
            check(&g, "lambda_affine", 2, |_| LAMBDA_TOL),
            check(&g, "lambda_face", 2, |_| LAMBDA_TOL),
            check(&g, "grid_lip_defect", 2, grid_lip),
            // paper_value is sqrt(d) delta times the sampled Lip of g
            check(&g, "grid_sup_defect", 2, |r| {
                r.paper_value * (1.0 + GRID_SLACK)
            }),
        ],
        t,
        Duration::from_secs(30),
    );
    first.push(("grid".into(), csv_bytes(g)));

    // 4. glue and flatten
    let ((gl, fl), t) = timed(|| {
        (
            run_suite(&cfg, Suite::Glue).unwrap(),
            run_suite(&cfg, Suite::Flatten).unwrap(),
        )
    });
    assert_eq!(cfg.flatten.radii, [5.0, 10.0]);
    ledger.record(
        4,
        &[
            check(&gl, "glue_lip", 20, |r| r.paper_value * (1.0 + GLUE_SLACK)),
            check(&gl, "glue_sup", 20, |r| r.paper_value * (1.0 + GLUE_SLACK)),
            check(&fl, "cutoff_at_r", 2, |_| 0.0),
            check(&fl, "cutoff_at_r2", 2, |_| 0.0),
            check(&fl, "cutoff_at_r15", 2, |_| CUTOFF_MID_TOL),
            check(&fl, "flatten_lip", 20, |r| {
                r.paper_value * (1.0 + FLATTEN_SLACK)
            }),
            check(&fl, "flatten_support", 20, |_| 0.0),
        ],
        t,
        Duration::from_secs(60),
    );
    first.push(("glue".into(), csv_bytes(gl)));
    first.push(("flatten".into(), csv_bytes(fl)));

    // 5. gamma on the circle in (R^2, l_inf)
    let (gm, t) = timed(|| run_suite(&cfg, Suite::Gamma).unwrap());
    let worst_uniform = |n: usize| {
        gm.iter()
            .filter(|r| r.bound_name == "gamma_uniform" && r.n == Some(n))
            .map(|r| r.sampled_value)
            .fold(0.0, f64::max)
    };
    let decreasing =
        worst_uniform(20) <= worst_uniform(10) && worst_uniform(10) <= worst_uniform(5);
    let rank_ok = rows(&gm, "gamma_rank").iter().all(|r| {
        let total: f64 = r
            .witness
            .split_whitespace()
            .find_map(|w| w.strip_prefix("total_vertices="))
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        r.sampled_value <= r.paper_value && r.paper_value <= total
    });
    let slack = |r: &BoundReport| r.paper_value * (1.0 + CIRCLE_SLACK) + 1e-9;
    let mut c5 = vec![
        check(&gm, "gamma_lip", 30, |r| {
            r.paper_value * (1.0 + CIRCLE_SLACK)
        }),
        check(&gm, "gamma_uniform", 30, |r| {
            4.0 / r.n.unwrap() as f64 + UNIFORM_TOL
        }),
        (
            decreasing,
            format!(
                "uniform defect decreasing in n ({:.2e} {:.2e} {:.2e})",
                worst_uniform(5),
                worst_uniform(10),
                worst_uniform(20)
            ),
        ),
    ];
    for name in [
        "sn_lip",
        "sn_uniform",
        "qprime_sn_uniform",
        "qprime_sn_lip",
        "q_uniform",
        "q_lip",
    ] {
        c5.push(check(&gm, name, 30, slack));
    }
    c5.push(check(&gm, "gamma_linearity", 30, |_| LINEARITY_TOL));
    c5.push((
        rank_ok,
        "rank <= touched functionals <= total vertex count".into(),
    ));
    // M lies in B_2(x0), so on the circle this is vacuous; flatten_support
    // above tests the same cutoff on an unbounded graph
    c5.push(check(&gm, "gamma_support", 30, |_| 0.0));
    ledger.record(5, &c5, t, Duration::from_secs(600));
    first.push(("gamma".into(), csv_bytes(gm)));

    // 6. sphere smoke
    assert_eq!(sphere.n, [3]);
    assert_eq!(sphere.suite_size, 3);
    let (sp, t) = timed(|| run_suite(&sphere, Suite::Gamma).unwrap());
    let slack = |r: &BoundReport| r.paper_value * (1.0 + SPHERE_SLACK) + 1e-9;
    let mut c6 = vec![
        check(&sp, "gamma_lip", 3, |r| {
            r.paper_value * (1.0 + SPHERE_SLACK)
        }),
        check(&sp, "gamma_uniform", 3, |r| {
            4.0 / r.n.unwrap() as f64 + UNIFORM_TOL
        }),
    ];
    for name in [
        "sn_lip",
        "sn_uniform",
        "qprime_sn_uniform",
        "qprime_sn_lip",
        "q_uniform",
        "q_lip",
    ] {
        c6.push(check(&sp, name, 3, slack));
    }
    c6.push(check(&sp, "gamma_linearity", 3, |_| LINEARITY_TOL));
    c6.push((
        sp.iter().all(|r| r.passed()),
        format!("all {} rows pass", sp.len()),
    ));
    ledger.record(6, &c6, t, Duration::from_secs(1200));
    first.push(("gamma-sphere".into(), csv_bytes(sp)));

    // 7. counterexample
    assert_eq!(cfg.counterexample.norm, frozen_norm_spec());
    assert_eq!(cfg.counterexample.grid, 9);
    assert_eq!(cfg.counterexample.search.starts, 8);
    let (ce, t) = timed(|| counterexample_suite(&cfg).unwrap());
    let mut cer = ce.reports.clone();
    cfg.apply_slack(&mut cer);
    let starts = &ce.search.starts;
    let spread = starts.iter().map(|s| s.value).fold(f64::MIN, f64::max)
        - starts.iter().map(|s| s.value).fold(f64::MAX, f64::min);
    ledger.record(
        7,
        &[
            check(&cer, "flat_patch_body", 1, |_| FLAT_BODY_TOL),
            check(&cer, "flat_patch_gauge", 1, |_| FLAT_GAUGE_TOL),
            (
                ce.search.value > PROJECTION_FLOOR,
                format!("min projection {:.6} > {PROJECTION_FLOOR}", ce.search.value),
            ),
            (
                starts.len() == 8 && spread <= PROJECTION_STABILITY,
                format!("{} starts, spread {spread:.2e}", starts.len()),
            ),
            (ce.xi == 0.01, "xi = 0.01".into()),
            check(&cer, "t_defect_e1", 1, |_| T_DEFECT_BOUND),
            check(&cer, "t_defect_e2", 1, |_| T_DEFECT_BOUND),
            check(&cer, "candidate_displacement", 1, |_| ce.xi),
        ],
        t,
        Duration::from_secs(300),
    );
    first.push(("counterexample".into(), csv_bytes(cer)));

    // 8. rerun everything in a wider pool; the CSVs must match byte for byte
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let (second, t) = timed(|| pool.install(|| all_runs(&cfg, &sphere)));
    let mut c8 = Vec::new();
    for (name, bytes) in &first {
        let again = second.iter().find(|(n, _)| n == name).map(|(_, b)| b);
        let same = again == Some(bytes);
        c8.push((same, format!("{name} {} bytes", bytes.len())));
    }
    ledger.record(8, &c8, t, Duration::from_secs(3600));

    let failed: Vec<&String> = ledger
        .lines
        .iter()
        .filter(|(_, ok, _)| !ok)
        .map(|(_, _, l)| l)
        .collect();
    assert_eq!(ledger.lines.len(), 8);
    println!("acceptance: {}/8 criteria pass", 8 - failed.len());
    assert!(
        failed.is_empty(),
        "failed criteria:\n{}",
        failed
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
