//! Command-line front end. Exit codes: 0 success, 1 a failed check,
//! non-convergence or trend violation, 2 a bad config or invocation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::experiments::{error_columns, metric_series, report_to_csv, run_experiment};
use crate::kernels::validate_kernel;
use crate::quadrature::assemble_quadrature;
use crate::solver::{poincare_estimate, solve};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nlplap",
    version,
    about = "Nonlocal p-Laplacian solver and homogenization lab"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the kernel hypotheses numerically.
    ValidateKernel(Common),
    /// Solve one Dirichlet problem.
    Solve(Common),
    /// Estimate the Poincaré constant of the energy.
    Poincare(Common),
    /// Run a coefficient-sequence experiment against its weak-* limit.
    Experiment(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write wall-clock timings to timings.json.
    #[arg(long)]
    pub timings: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::ValidateKernel(c) | Self::Solve(c) | Self::Poincare(c) | Self::Experiment(c) => c,
        }
    }
}

enum Failure {
    Config(Error),
    Run(Error),
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e)
}

fn run_err(e: Error) -> Failure {
    Failure::Run(e)
}

/// Parses `args` (program name first) and runs. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let common = cli.command.common();
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool,
            Err(e) => {
                eprintln!("error: cannot start {n} threads: {e}");
                return EXIT_CONFIG;
            }
        };
        return pool.install(|| dispatch(cli));
    }
    dispatch(cli)
}

fn dispatch(cli: &Cli) -> i32 {
    let common = cli.command.common();
    let outcome = Config::load(&common.config)
        .map_err(config_err)
        .and_then(|cfg| {
            fs::create_dir_all(&common.out).map_err(|e| Failure::Config(e.into()))?;
            match &cli.command {
                Command::ValidateKernel(c) => cmd_validate_kernel(&cfg, c),
                Command::Solve(c) => cmd_solve(&cfg, c),
                Command::Poincare(c) => cmd_poincare(&cfg, c),
                Command::Experiment(c) => cmd_experiment(&cfg, c),
            }
        });
    match outcome {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Timings<'a> {
    command: &'a str,
    total_seconds: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    per_index: Vec<(u32, f64)>,
}

fn write_timings(common: &Common, timings: &Timings<'_>) -> std::result::Result<(), Failure> {
    if common.timings {
        write_json(&common.out.join("timings.json"), timings).map_err(run_err)?;
    }
    Ok(())
}

fn cmd_validate_kernel(cfg: &Config, common: &Common) -> std::result::Result<i32, Failure> {
    let kernel = cfg.kernel().map_err(config_err)?;
    let (epsilon, samples) = cfg.validation();
    let report = validate_kernel(&kernel, epsilon, samples).map_err(config_err)?;
    write_json(&common.out.join("kernel_validation.json"), &report).map_err(run_err)?;
    if report.passed() {
        println!(
            "kernel ok: tail {:.6e}, L1 {:.6e}",
            report.tail.value, report.l1.value
        );
        Ok(EXIT_OK)
    } else {
        println!("kernel check failed: {}", report.failures().join(", "));
        Ok(EXIT_FAILED)
    }
}

fn cmd_solve(cfg: &Config, common: &Common) -> std::result::Result<i32, Failure> {
    let clock = Instant::now();
    let kernel = cfg.kernel().map_err(config_err)?;
    let mesh = cfg.mesh().map_err(config_err)?;
    let h = cfg.coefficient().map_err(config_err)?;
    let f = cfg
        .functional()
        .and_then(|s| s.build(&mesh))
        .map_err(config_err)?;
    let opts = cfg.solve_options().map_err(config_err)?;
    let quad = assemble_quadrature(
        &mesh,
        &kernel,
        cfg.quadrature.near_diag_levels,
        cfg.quadrature.gauss_order,
    )
    .map_err(config_err)?;
    let (u, report) = solve(&quad, &h, &f, kernel.p(), &opts).map_err(run_err)?;

    let mut w = csv::Writer::from_path(common.out.join("solution.csv"))
        .map_err(|e| run_err(Error::Parse(e.to_string())))?;
    let csv_err = |e: csv::Error| run_err(Error::Parse(e.to_string()));
    w.write_record(["x", "u"]).map_err(csv_err)?;
    for (x, v) in mesh.nodes().iter().zip(u.values()) {
        w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| run_err(e.into()))?;
    write_json(&common.out.join("solve_report.json"), &report).map_err(run_err)?;
    write_timings(
        common,
        &Timings {
            command: "solve",
            total_seconds: clock.elapsed().as_secs_f64(),
            per_index: vec![],
        },
    )?;
    println!(
        "{} after {} iterations, residual {:.3e}, J = {:.12e}",
        if report.converged {
            "converged"
        } else {
            "NOT converged"
        },
        report.iterations,
        report.final_residual_norm,
        report.objective_value
    );
    Ok(if report.converged {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

fn cmd_poincare(cfg: &Config, common: &Common) -> std::result::Result<i32, Failure> {
    let clock = Instant::now();
    let kernel = cfg.kernel().map_err(config_err)?;
    let mesh = cfg.mesh().map_err(config_err)?;
    let opts = cfg.solve_options().map_err(config_err)?;
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    let quad = assemble_quadrature(
        &mesh,
        &kernel,
        cfg.quadrature.near_diag_levels,
        cfg.quadrature.gauss_order,
    )
    .map_err(config_err)?;
    let report = poincare_estimate(&quad, kernel.p(), &opts, seed).map_err(run_err)?;
    write_json(&common.out.join("poincare.json"), &report).map_err(run_err)?;
    write_timings(
        common,
        &Timings {
            command: "poincare",
            total_seconds: clock.elapsed().as_secs_f64(),
            per_index: vec![],
        },
    )?;
    match report.eigenvalue {
        Some(ev) => println!(
            "poincare estimate {:.12e} (eigenvalue {:.12e})",
            report.estimate, ev
        ),
        None => println!("poincare estimate {:.12e}", report.estimate),
    }
    let ok = report.converged && report.estimate > 0.0;
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_experiment(cfg: &Config, common: &Common) -> std::result::Result<i32, Failure> {
    let clock = Instant::now();
    let spec = cfg.experiment_spec().map_err(config_err)?;
    let report = run_experiment(&spec).map_err(run_err)?;

    fs::write(
        common.out.join("experiment.csv"),
        report_to_csv(&report, false),
    )
    .map_err(|e| run_err(e.into()))?;
    write_json(&common.out.join("experiment.json"), &report).map_err(run_err)?;
    if let Some(first) = report.rows.first() {
        for (name, _) in error_columns(first) {
            let mut text = format!("# j {name}\n");
            for (j, v) in metric_series(&report, &name) {
                let _ = writeln!(text, "{j} {v:.16e}");
            }
            fs::write(common.out.join(format!("plot_{name}.dat")), text)
                .map_err(|e| run_err(e.into()))?;
        }
    }
    write_timings(
        common,
        &Timings {
            command: "experiment",
            total_seconds: clock.elapsed().as_secs_f64(),
            per_index: report.rows.iter().map(|r| (r.j, r.wall_time)).collect(),
        },
    )?;

    let mut failed = Vec::new();
    for r in report.rows.iter().filter(|r| !r.converged) {
        failed.push(format!("solve for j = {} did not converge", r.j));
    }
    if spec.expects_trend() {
        for name in report.trend_violations() {
            failed.push(format!("column {name} does not decrease"));
        }
    } else {
        let bound = 10.0 * spec.solver.tol;
        for r in &report.rows {
            for (name, v) in error_columns(r) {
                if v > bound {
                    failed.push(format!(
                        "column {name} at j = {} is {v:.3e} > {bound:.1e}",
                        r.j
                    ));
                }
            }
        }
    }
    for r in &report.rows {
        let cols: Vec<String> = error_columns(r)
            .iter()
            .map(|(n, v)| format!("{n}={v:.3e}"))
            .collect();
        println!("j={:<4} {}", r.j, cols.join(" "));
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        for f in &failed {
            println!("FAILED: {f}");
        }
        Ok(EXIT_FAILED)
    }
}
