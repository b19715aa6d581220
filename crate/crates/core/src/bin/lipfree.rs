use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lipfree::assembly::{build_gamma, GammaOperator, GammaRecord};
use lipfree::config::ExperimentConfig;
use lipfree::error::{Error, Result};
use lipfree::manifold::{Manifold, ManifoldSpec};
use lipfree::normed_space::{Norm, NormSpec};
use lipfree::report::{
    fmt_num, plot_series, read_csv, sort_reports, summarize, write_csv, BoundReport, Status,
    Summary,
};
use lipfree::suites::{counterexample_suite, run_suite, verify_operator, Suite};

#[derive(Parser)]
#[command(
    name = "lipfree",
    version,
    about = "Builds the finite-rank operators and checks their bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite and write a CSV report plus a JSON summary.
    Verify(VerifyArgs),
    /// Build or re-check a persisted operator.
    #[command(subcommand)]
    Gamma(GammaCommand),
    /// The counterexample tables.
    #[command(subcommand)]
    Counterexample(CounterexampleCommand),
    /// Turn report CSVs into (n, bound, sampled) series.
    PlotData {
        /// One or more report CSVs; each becomes a labelled group.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration.
    Config,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated list replacing the configured n values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    n: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// circle, sphere or torus (unit radius; torus 2 / 0.5).
    #[arg(long)]
    manifold: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    suite: String,
    #[command(flatten)]
    common: Common,
    /// Restrict the kernel suite to one dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fill the seconds column.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum GammaCommand {
    Build {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    Verify {
        #[arg(long = "op")]
        op: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        suite_seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CounterexampleCommand {
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the CSV report and a JSON trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(t) = std::env::var("LIPFREE_THREADS") {
        match t.parse::<usize>() {
            Ok(k) if k > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                {
                    log::warn!("could not size the worker pool: {e}");
                }
            }
            _ => {
                eprintln!("error: LIPFREE_THREADS must be a positive integer, got `{t}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

/// 1 on any failed bound, else 3 when a premise did not hold, else 0.
fn report_code(reports: &[BoundReport]) -> u8 {
    if reports.iter().any(|r| r.status == Status::Fail) {
        1
    } else if reports
        .iter()
        .any(|r| r.status == Status::HypothesisViolated)
    {
        3
    } else {
        0
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) -> Result<()> {
    if let Some(n) = &c.n {
        cfg.n = n.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(name) = &c.manifold {
        let (m, norm) = match name.as_str() {
            "circle" => (
                ManifoldSpec::circle(1.0),
                NormSpec::Pnorm { p: f64::INFINITY },
            ),
            "sphere" => (ManifoldSpec::sphere(1.0), NormSpec::Euclidean),
            "torus" => (ManifoldSpec::torus(2.0, 0.5), NormSpec::Euclidean),
            other => return Err(Error::Config(format!("unknown manifold `{other}`"))),
        };
        cfg.manifold = m;
        cfg.norm = norm;
    }
    cfg.validate()
}

fn write_report(path: &Path, reports: &[BoundReport], timings: bool) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = BufWriter::new(File::create(path)?);
    write_csv(f, reports, timings)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    suite: String,
    #[serde(flatten)]
    summary: Summary,
    config: &'a ExperimentConfig,
}

fn print_summary(s: &Summary) {
    println!(
        "{} rows: {} passed, {} failed, {} hypothesis violations",
        s.total, s.passed, s.failed, s.hypothesis_violations
    );
    for f in &s.failures {
        println!("  FAIL {f}");
    }
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Verify(args) => verify(args),
        Command::Gamma(GammaCommand::Build { common, out }) => {
            let mut cfg = load_config(common.config.as_deref())?;
            apply_common(&mut cfg, &common)?;
            if cfg.n.len() != 1 {
                return Err(Error::Config("gamma build takes exactly one n".into()));
            }
            let m = Manifold::new(cfg.manifold.clone())?;
            let norm = Norm::new(cfg.norm.clone(), m.ambient_dim())?;
            let op = build_gamma(&m, &norm, cfg.n[0], &cfg.gamma.options)?;
            let c = &op.constants;
            println!(
                "built n={} on {}: charts={} K={} L_n={} H={} eps={} vertices={}",
                c.n,
                m.spec().label(),
                c.m,
                fmt_num(c.k),
                fmt_num(c.l_n),
                fmt_num(c.h),
                fmt_num(c.eps),
                fmt_num(op.constants.vertex_count)
            );
            write_json(&out, &op.record())?;
            Ok(0)
        }
        Command::Gamma(GammaCommand::Verify {
            op,
            config,
            suite_seed,
            report,
        }) => {
            let cfg = load_config(config.as_deref())?;
            let text = fs::read_to_string(&op)?;
            let rec: GammaRecord = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", op.display())))?;
            let operator = GammaOperator::from_record(&rec)?;
            let mut reports = verify_operator(&operator, &cfg, suite_seed.unwrap_or(cfg.seed))?;
            cfg.apply_slack(&mut reports);
            sort_reports(&mut reports);
            let path = report.unwrap_or_else(|| cfg.output.dir.join("gamma_verify.csv"));
            write_report(&path, &reports, cfg.output.timings)?;
            print_summary(&summarize(&reports));
            println!("report: {}", path.display());
            Ok(report_code(&reports))
        }
        Command::Counterexample(CounterexampleCommand::Run { config, out }) => {
            counterexample(config, out)
        }
        Command::PlotData { reports, out } => {
            let mut series = Vec::new();
            for p in &reports {
                let rows = read_csv(File::open(p)?)?;
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                series.extend(plot_series(&label, &rows));
            }
            let text =
                serde_json::to_string_pretty(&series).map_err(|e| Error::Io(e.to_string()))?;
            match out {
                Some(p) => fs::write(p, text + "\n")?,
                None => std::io::stdout().write_all((text + "\n").as_bytes())?,
            }
            Ok(0)
        }
        Command::Config => {
            print!("{}", ExperimentConfig::default().to_toml()?);
            Ok(0)
        }
    }
}

fn verify(args: VerifyArgs) -> Result<u8> {
    let suite: Suite = args.suite.parse()?;
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common)?;
    if let Some(d) = args.dim {
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!("--dim must be 1, 2 or 3, got {d}")));
        }
        cfg.kernel.dims = vec![d];
    }
    let timings = args.timings || cfg.output.timings;
    let mut reports = run_suite(&cfg, suite)?;
    sort_reports(&mut reports);
    let dir = args.out.unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    let csv = dir.join(format!("{suite}.csv"));
    write_report(&csv, &reports, timings)?;
    let summary = summarize(&reports);
    print_summary(&summary);
    write_json(
        &dir.join(format!("{suite}.summary.json")),
        &SummaryFile {
            suite: suite.to_string(),
            summary,
            config: &cfg,
        },
    )?;
    println!("report: {}", csv.display());
    Ok(report_code(&reports))
}

fn counterexample(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<u8> {
    let cfg = load_config(config.as_deref())?;
    let mut run = counterexample_suite(&cfg)?;
    cfg.apply_slack(&mut run.reports);

    println!(
        "flat patch (grid {}x{})",
        cfg.counterexample.grid, cfg.counterexample.grid
    );
    for r in run
        .reports
        .iter()
        .filter(|r| r.bound_name.starts_with("flat_patch"))
    {
        println!(
            "  {:<20} max defect {:>12}  tol {:>8}  {}",
            r.bound_name,
            fmt_num(r.sampled_value),
            fmt_num(r.tolerance),
            status(r)
        );
    }

    let norm_text =
        serde_json::to_string(&run.search.norm).map_err(|e| Error::Io(e.to_string()))?;
    println!("frozen norm: {norm_text}");

    println!("projection search (|P_z| over z, P_z = I - z e3^T)");
    println!(
        "  {:>5}  {:>12} {:>12}  {:>12}  {:>6}",
        "start", "z1", "z2", "value", "evals"
    );
    for (i, s) in run.search.starts.iter().enumerate() {
        println!(
            "  {:>5}  {:>12} {:>12}  {:>12}  {:>6}",
            i,
            fmt_num(s.z[0]),
            fmt_num(s.z[1]),
            fmt_num(s.value),
            s.evaluations
        );
    }
    println!(
        "  minimum {} at z = ({}, {}); spread {} ({})",
        fmt_num(run.search.value),
        fmt_num(run.search.z[0]),
        fmt_num(run.search.z[1]),
        fmt_num(run.search.spread),
        if run.search.stable {
            "stable"
        } else {
            "unstable"
        }
    );
    if let Some(u) = run.search.upper {
        println!("  exact |P_z| at that z: {}", fmt_num(u));
    }

    println!("T defects (xi = {})", fmt_num(run.xi));
    for r in run
        .reports
        .iter()
        .filter(|r| r.bound_name.starts_with("t_defect") || r.bound_name.starts_with("candidate"))
    {
        println!(
            "  {:<22} {:>12} <= {:>12}  {}",
            r.bound_name,
            fmt_num(r.sampled_value),
            fmt_num(r.paper_value),
            status(r)
        );
    }

    let mut reports = run.reports.clone();
    sort_reports(&mut reports);
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        write_report(
            &dir.join("counterexample.csv"),
            &reports,
            cfg.output.timings,
        )?;
        write_json(&dir.join("counterexample.trace.json"), &run)?;
    }
    print_summary(&summarize(&reports));
    Ok(report_code(&reports))
}

fn status(r: &BoundReport) -> &'static str {
    match r.status {
        Status::Pass => "pass",
        Status::Fail => "FAIL",
        Status::HypothesisViolated => "premise not met",
    }
}
