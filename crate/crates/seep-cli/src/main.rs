//! Command-line front end: `seep run` trains a network on a benchmark or a
//! custom problem file, `seep oracle` solves a benchmark with the
//! finite-difference reference solver, and `seep report` summarizes a
//! finished run directory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use seep::bench::config::{self, defaults, Benchmark, ConfigError, RunConfig, Target};
use seep::bench::report;
use seep::bench::run::{run_benchmark_observed, RunError, SLICE_FRACTIONS};
use seep::oracle::{fdm_steady, fdm_transient, reference_table, OracleError, Source, TRANSIENT_K};

#[derive(Parser)]
#[command(name = "seep", version, about = "Groundwater seepage by collocation-trained networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on a benchmark (test1..test4) or a custom problem file
    Run {
        /// Benchmark id, or a path to a problem file
        target: String,
        /// key=value config file applied over the benchmark defaults
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        adam_iters: Option<usize>,
        /// Adam learning rate
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        lbfgs_iters: Option<usize>,
        /// Output directory (default out/<benchmark>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse the collocation points of an earlier run
        #[arg(long)]
        points_file: Option<PathBuf>,
        #[arg(long)]
        deterministic: Option<bool>,
        /// Suppress per-step progress on stderr
        #[arg(long)]
        quiet: bool,
    },
    /// Solve a benchmark on a fixed grid with the reference solver
    Oracle {
        /// Benchmark id (test3 has no grid oracle)
        benchmark: String,
        /// Nodes along the longer side
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        /// Time step for the transient benchmark
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Output directory (default out/<benchmark>-oracle)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a one-screen summary of a run directory's report.json
    Report { dir: PathBuf },
}

/// An error that already knows which process exit code it deserves.
#[derive(Debug)]
struct CodedError {
    code: u8,
    message: String,
}

impl std::fmt::Display for CodedError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CodedError {}

fn coded(code: u8, message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(CodedError { code, message: message.into() })
}

/// 2 rejected configuration, 3 training aborted on a non-finite loss,
/// 4 reference-solver failure, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(c) = err.downcast_ref::<CodedError>() {
        return c.code;
    }
    if let Some(r) = err.downcast_ref::<RunError>() {
        return match r {
            RunError::Config(_) => 2,
            RunError::NonFinite { .. } => 3,
            RunError::Oracle(_) => 4,
            _ => 1,
        };
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if err.downcast_ref::<OracleError>().is_some() {
        return 4;
    }
    1
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run {
            target,
            config,
            seed,
            adam_iters,
            lr,
            lbfgs_iters,
            out,
            points_file,
            deterministic,
            quiet,
        } => {
            let target = Target::parse(&target);
            let mut cfg = defaults(target.clone());
            if let Some(path) = &config {
                config::apply_file(&mut cfg, path)?;
                // The positional target wins over a benchmark line in the
                // file; everything else the file set stands.
                cfg.target = target;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = adam_iters {
                cfg.adam_iters = v;
            }
            if let Some(v) = lr {
                cfg.learning_rate = v;
            }
            if let Some(v) = lbfgs_iters {
                cfg.lbfgs_iters = v;
            }
            if let Some(v) = out {
                cfg.out_dir = v;
            }
            if points_file.is_some() {
                cfg.points_file = points_file;
            }
            if let Some(v) = deterministic {
                cfg.deterministic = v;
            }
            cmd_run(&cfg, quiet)
        }
        Cmd::Oracle { benchmark, resolution, dt, out } => {
            let b = Benchmark::parse(&benchmark)
                .ok_or_else(|| coded(2, format!("unknown benchmark `{benchmark}`")))?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("out/{}-oracle", b.name())));
            cmd_oracle(b, resolution, dt, &out)
        }
        Cmd::Report { dir } => {
            let path = dir.join("report.json");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            println!("{}", report::summarize(&value));
            Ok(())
        }
    }
}

fn cmd_run(cfg: &RunConfig, quiet: bool) -> anyhow::Result<()> {
    if !quiet {
        eprintln!("training {} -> {}", cfg.target.name(), cfg.out_dir.display());
    }
    let report = run_benchmark_observed(cfg, |p| {
        // Adam already reports on a hundred-step cadence; thin the
        // per-iteration second stage to keep stderr readable.
        if quiet || (p.stage == "lbfgs" && p.step % 25 != 0) {
            return;
        }
        eprintln!("  {:>5} {:>6}/{:<6} loss {:.6e}", p.stage, p.step, p.steps, p.total);
    })?;
    let value = serde_json::to_value(&report)?;
    println!("{}", report::summarize(&value));
    println!("report: {}", cfg.out_dir.join("report.json").display());
    Ok(())
}

fn cmd_oracle(b: Benchmark, resolution: usize, dt: f64, out: &std::path::Path) -> anyhow::Result<()> {
    let domain = b.domain();
    std::fs::create_dir_all(out)?;
    let path = out.join("oracle.csv");
    match b {
        Benchmark::Test1 | Benchmark::Test2 => {
            let field = fdm_steady(&domain, resolution)?;
            std::fs::write(&path, field.to_csv(&domain, false))?;
            // Heads at the published monitor points, for a quick read.
            let table = reference_table(b.name())?;
            let source = match b {
                Benchmark::Test1 => Source::Fem,
                _ => Source::Analytical,
            };
            for e in table.entries.iter().filter(|e| e.source == source) {
                println!(
                    "h({}, {}) = {:.6}   [{} {}]",
                    e.location[0],
                    e.location[1],
                    field.value_at(e.location[0], e.location[1]),
                    e.citation,
                    e.value,
                );
            }
        }
        Benchmark::Test3 => {
            return Err(coded(
                4,
                "test3 has no grid oracle; its reference is the embedded experiment table",
            ));
        }
        Benchmark::Test4 => {
            let horizon = domain.horizon.expect("transient benchmark");
            let times: Vec<f64> = SLICE_FRACTIONS.iter().map(|f| f * horizon).collect();
            let snaps = fdm_transient(&domain, TRANSIENT_K, resolution, dt, &times)?;
            let mut csv = String::from("x,y,t,h\n");
            for snap in &snaps {
                let body = snap.to_csv(&domain, true);
                csv.push_str(body.split_once('\n').map(|(_, b)| b).unwrap_or(""));
            }
            std::fs::write(&path, csv)?;
            let cx = 0.5 * (domain.lo[0] + domain.hi[0]);
            let cy = 0.5 * (domain.lo[1] + domain.hi[1]);
            for snap in &snaps {
                println!("h({cx}, {cy}, t={}) = {:.6}", snap.time, snap.value_at(cx, cy));
            }
        }
    }
    println!("oracle field: {}", path.display());
    Ok(())
}
