use std::path::Path;
use std::process::{Command, Output};

use lipfree::report::{read_csv, Series, SCHEMA_ID};

fn lipfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipfree"))
        .args(args)
        .env("LIPFREE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn kernel_dim_two_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = lipfree(&["verify", "kernel", "--dim", "2", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let text = std::fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    assert!(text.starts_with("schema_id,"));
    assert!(text.lines().nth(1).unwrap().starts_with(SCHEMA_ID));
    let rows = read_csv(text.as_bytes()).unwrap();
    // three scales give mass and G/s rows, plus one constant identity row
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.passed()));
    assert_eq!(
        rows.iter()
            .filter(|r| r.bound_name == "kernel_mass")
            .count(),
        3
    );
    assert_eq!(
        rows.iter()
            .filter(|r| r.bound_name == "kernel_gradient_mass")
            .count(),
        3
    );

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("kernel.summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["total"], 7);
    assert_eq!(summary["failed"], 0);
    assert_eq!(summary["config"]["kernel"]["dims"][0], 2);
}

#[test]
fn empty_n_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lipfree(&[
        "verify",
        "kernel",
        "--n",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n list is empty"));
}

#[test]
fn config_problems_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nbogus = 2\n").unwrap();
    assert_eq!(
        code(&lipfree(&[
            "verify",
            "kernel",
            "--config",
            bad.to_str().unwrap()
        ])),
        2
    );
    assert_eq!(code(&lipfree(&["verify", "everything"])), 2);
    assert_eq!(code(&lipfree(&["verify", "kernel", "--dim", "4"])), 2);
    assert_eq!(
        code(&lipfree(&["verify", "gamma", "--manifold", "klein"])),
        2
    );
    assert_eq!(
        code(&lipfree(&[
            "verify",
            "kernel",
            "--config",
            "/nonexistent/c.toml"
        ])),
        2
    );
}

#[test]
fn bound_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // a two-node rule cannot integrate the kernel to 1e-6
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[kernel]\ndims = [3]\nscales = [0.1]\n[kernel.quad]\nnodes = 2\ncheck_nodes = 3\n",
    )
    .unwrap();
    let o = lipfree(&[
        "verify",
        "kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL kernel/kernel_mass"));
}

#[test]
fn shipped_configs_parse() {
    for name in ["default.toml", "sphere.toml"] {
        let o = lipfree(&[
            "verify",
            "kernel",
            "--dim",
            "1",
            "--config",
            configs().join(name).to_str().unwrap(),
            "--out",
            tempfile::tempdir().unwrap().path().to_str().unwrap(),
        ]);
        assert_eq!(
            code(&o),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn default_config_matches_the_shipped_file() {
    let o = lipfree(&["config"]);
    assert_eq!(code(&o), 0);
    let shipped = std::fs::read_to_string(configs().join("default.toml")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), shipped);
}

#[test]
fn gamma_build_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    let report = dir.path().join("gv.csv");
    let o = lipfree(&["gamma", "build", "--n", "5", "--out", op.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        code(&lipfree(&[
            "gamma",
            "build",
            "--n",
            "5,10",
            "--out",
            op.to_str().unwrap()
        ])),
        2
    );

    let o = lipfree(&[
        "gamma",
        "verify",
        "--op",
        op.to_str().unwrap(),
        "--suite-seed",
        "7",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = read_csv(std::fs::File::open(&report).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.n == Some(5)));
    let per_f = rows
        .iter()
        .filter(|r| r.bound_name == "gamma_uniform")
        .count();
    assert_eq!(per_f, 10);

    // the record is tied to its constants; tampering is caught on rebuild
    let text = std::fs::read_to_string(&op).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["constants"]["m"] = serde_json::json!(3);
    std::fs::write(&op, v.to_string()).unwrap();
    assert_eq!(
        code(&lipfree(&[
            "gamma",
            "verify",
            "--op",
            op.to_str().unwrap(),
            "--report",
            report.to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn counterexample_run_prints_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = lipfree(&[
        "counterexample",
        "run",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for header in [
        "flat patch (grid 9x9)",
        "frozen norm:",
        "projection search",
        "T defects",
    ] {
        assert!(text.contains(header), "missing {header}");
    }
    assert!(dir.path().join("counterexample.csv").exists());
    let trace: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("counterexample.trace.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(trace["search"]["starts"].as_array().unwrap().len(), 8);
}

#[test]
fn plot_data_labels_each_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for seed in ["3", "4"] {
        let out = dir.path().join(format!("seed{seed}"));
        let o = lipfree(&[
            "verify",
            "smoothing",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        let renamed = dir.path().join(format!("seed{seed}.csv"));
        std::fs::rename(out.join("smoothing.csv"), &renamed).unwrap();
        files.push(renamed);
    }
    let json = dir.path().join("series.json");
    let mut args = vec!["plot-data"];
    args.extend(files.iter().map(|p| p.to_str().unwrap()));
    args.extend(["--out", json.to_str().unwrap()]);
    assert_eq!(code(&lipfree(&args)), 0);
    let series: Vec<Series> =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let labels: std::collections::BTreeSet<_> = series.iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), ["seed3", "seed4"]);
    let lip = series
        .iter()
        .find(|s| s.label == "seed3" && s.bound_name == "sn_lip")
        .unwrap();
    assert_eq!(lip.points.iter().map(|p| p.n).collect::<Vec<_>>(), [5, 10]);

    // a header-only report has no series
    let empty = dir.path().join("empty.csv");
    let header = std::fs::read_to_string(&files[0])
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(&empty, header + "\n").unwrap();
    let o = lipfree(&["plot-data", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "[]");
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_lipfree"))
        .args(["config"])
        .env("LIPFREE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
