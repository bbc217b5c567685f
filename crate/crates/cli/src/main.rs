use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use reach_cli::bench::{bench_platoon, BenchStatus, loglog_slope, write_csv};
use reach_cli::config::{Algorithm, RunConfig};
use reach_cli::project::Polygon;
use reach_cli::report::{ProjectionRecord, Report};
use reach_cli::run::{execute, project_record, RunOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "reach", version, about = "Backward reachable sets of perturbed linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a backward reachable set from a JSON configuration.
    Run {
        config: PathBuf,
        /// Run the oracle checks that apply to the result.
        #[arg(long)]
        validate: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for result.json and projections; defaults to the
        /// configured output, else the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time an algorithm over growing system sizes.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Project the sets of a report onto a coordinate plane.
    Project {
        result: PathBuf,
        /// 1-based dimensions, e.g. 1,2.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 128)]
        angles: usize,
        /// Output directory; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    Platoon {
        #[arg(long, default_value = "ae-tp-outer")]
        algo: String,
        /// Numbers of trucks.
        #[arg(long, value_delimiter = ',', default_value = "5,17,33")]
        sizes: Vec<usize>,
        /// Per-size timeout in seconds.
        #[arg(long, default_value_t = 100.0)]
        timeout: f64,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// CSV output path.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

fn cmd_run(config: &Path, validate: bool, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = RunConfig::from_path(config)?;
    let (report, _) = execute(&cfg, &RunOptions { validate, seed })?;
    match out.or_else(|| cfg.output.clone()) {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("result.json");
            report.write(&path)?;
            for proj in &report.projections {
                write_projection(proj, &dir, "projection")?;
            }
            eprintln!("wrote {}", path.display());
        }
        None => writeln!(std::io::stdout(), "{}", report.to_json()?)?,
    }
    for c in &report.validation {
        eprintln!("{}: {} (value {:.3e})", c.check, if c.passed { "pass" } else { "FAIL" }, c.value);
    }
    if report.result.all_empty() {
        eprintln!("result is empty");
        return Ok(ExitCode::from(2));
    }
    if report.validation.iter().any(|c| !c.passed) {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_polygon(p: &Polygon, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for v in &p.vertices {
        w.serialize((v[0], v[1]))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV per nonempty polygon and a JSON index next to them.
fn write_projection(proj: &ProjectionRecord, dir: &Path, prefix: &str) -> Result<PathBuf> {
    let [i, j] = proj.dims;
    let single = proj.polygons.len() == 1;
    let mut index = Vec::new();
    for (k, poly) in proj.polygons.iter().enumerate() {
        let file = if poly.empty {
            None
        } else {
            let name = if single { format!("{prefix}_{i}_{j}.csv") } else { format!("{prefix}_{i}_{j}_{k:04}.csv") };
            write_polygon(poly, &dir.join(&name))?;
            Some(name)
        };
        index.push(serde_json::json!({ "set": k, "empty": poly.empty, "file": file }));
    }
    let index_path = dir.join(format!("{prefix}_{i}_{j}.json"));
    let body = serde_json::json!({ "dims": [i, j], "angles": proj.angles, "sets": index });
    std::fs::write(&index_path, serde_json::to_string_pretty(&body)?)?;
    Ok(index_path)
}

fn cmd_project(result: &Path, dims: &[usize], angles: usize, out: Option<PathBuf>) -> Result<ExitCode> {
    let report = Report::read(result).with_context(|| format!("cannot read report {}", result.display()))?;
    let [i, j] = dims else { bail!("--dims takes two dimensions") };
    let n = report.system.n;
    if *i == 0 || *j == 0 || i == j || *i > n || *j > n {
        bail!("--dims must be two distinct values in 1..={n}");
    }
    let proj = project_record(&report.result, &[[*i, *j]], angles)?.remove(0);
    let dir = out.unwrap_or_else(|| result.parent().map(Path::to_path_buf).unwrap_or_default());
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir)?;
    }
    let index = write_projection(&proj, &dir, "projection")?;
    eprintln!("wrote {}", index.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(which: BenchCommand) -> Result<ExitCode> {
    let BenchCommand::Platoon { algo, sizes, timeout, data_dir, out } = which;
    let algorithm = Algorithm::parse(&algo)?;
    if !(timeout > 0.0) {
        bail!("timeout must be positive");
    }
    let rows = bench_platoon(&sizes, algorithm, Duration::from_secs_f64(timeout), data_dir.as_deref())?;
    for r in &rows {
        let time = match r.status {
            BenchStatus::Timeout => "---".to_string(),
            _ => format!("{:.3} s", r.seconds),
        };
        println!("trucks {:>3}  n {:>3}  m {:>3}  {:>12}  {:?}", r.trucks, r.n, r.m, time, r.status);
    }
    match loglog_slope(&rows) {
        Some(s) => println!("log-log slope {s:.2}"),
        None => println!("log-log slope unavailable"),
    }
    write_csv(&rows, &out)?;
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Run { config, validate, seed, out } => cmd_run(&config, validate, seed, out),
        Command::Project { result, dims, angles, out } => cmd_project(&result, &dims, angles, out),
        Command::Bench { which } => cmd_bench(which),
    };
    out.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
