//! `collcp`: coupling reports, force maps, superradiant dynamics and
//! subradiant sweeps from a TOML run configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collcp_core::config::Resolved;
use collcp_core::dynamics::superradiant_boost;
use collcp_core::{couplings, force_map, subradiant_sweep, Error, RunConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "collcp", version, about = "Collective Casimir-Polder forces near a planar surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Shipped configuration (fig2-gold, fig3-siv, figs1-gold).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `geometry.n=6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coupling coefficients as JSON.
    Coeffs,
    /// Two-emitter force and decay map as CSV.
    Map,
    /// Force time series and superradiant boost as CSV.
    Dynamics,
    /// Forces on the subradiant states over a spacing sweep as CSV.
    Subradiant,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::Map => "map",
            Command::Dynamics => "dynamics",
            Command::Subradiant => "subradiant",
        }
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn config(e: Error) -> Self {
        Failure::Config(e.to_string())
    }

    /// Parameter-shaped errors raised while running still count as input
    /// errors.
    fn run(e: Error) -> Self {
        match e {
            Error::Parameter { .. } | Error::Geometry(_) | Error::EmitterCount(_) | Error::InvalidState(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut config = RunConfig::load(cli.config.as_deref(), cli.preset.as_deref(), &cli.set).map_err(Failure::config)?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Config("invalid parameter `threads`: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let resolved = config.resolve().map_err(Failure::config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let hash = config.sha256();
    let preamble = vec![
        format!("config_sha256={hash}"),
        format!("command={}", cli.command.name()),
    ];
    match cli.command {
        Command::Coeffs => coeffs(&config, &resolved, &hash),
        Command::Map => map(&config, &resolved, &hash, &preamble),
        Command::Dynamics => dynamics(&config, &hash, &preamble),
        Command::Subradiant => subradiant(&config, &resolved, &hash, &preamble),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_csv(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sidecar(config: &RunConfig, hash: &str, results: serde_json::Value) -> serde_json::Value {
    json!({ "config_sha256": hash, "config": config, "results": results })
}

fn coeffs(config: &RunConfig, r: &Resolved, hash: &str) -> Result<(), Failure> {
    let c = couplings(&r.geometry, &r.medium, &r.emitter, &r.quadrature).map_err(Failure::run)?;
    let report = json!({
        "couplings": c,
        "gamma_eigenvalues": c.gamma_eigenvalues(),
        "force_unit_newton": r.emitter.force_unit(),
    });
    write_json(&config.output_dir.join("coeffs.json"), &sidecar(config, hash, report))
}

fn map(config: &RunConfig, r: &Resolved, hash: &str, preamble: &[String]) -> Result<(), Failure> {
    let grid = config.map_grid().map_err(Failure::config)?;
    let m = force_map(&grid, &r.medium, &r.emitter, &r.quadrature).map_err(Failure::run)?;
    write_csv(&config.output_dir.join("map.csv"), |w| m.write_csv(w, preamble))?;
    for f in &m.failures {
        eprintln!("warning: point x0_k0={} z0_k0={} failed: {}", f.x0, f.z0, f.reason);
    }
    let summary = json!({ "points": m.points.len(), "failures": m.failures });
    write_json(&config.output_dir.join("map.json"), &sidecar(config, hash, summary))
}

fn dynamics(config: &RunConfig, hash: &str, preamble: &[String]) -> Result<(), Failure> {
    let r = config.check_dynamics().map_err(Failure::config)?;
    let s = superradiant_boost(&r.geometry, &r.medium, &r.emitter, &r.quadrature, &config.evolution)
        .map_err(Failure::run)?;
    write_csv(&config.output_dir.join("dynamics.csv"), |w| s.write_csv(w, preamble))?;
    let fold = |v: &[f64], init: f64, f: fn(f64, f64) -> f64| v.iter().copied().fold(init, f);
    let summary = json!({
        "step_gamma0": s.step,
        "integrator": s.integrator,
        "peak_boost_newton": s.peak_boost_n,
        "peak_time_s": s.peak_time_s,
        "max_trace_err": fold(&s.trace_err, 0.0, f64::max),
        "max_hermiticity_err": fold(&s.hermiticity_err, 0.0, f64::max),
        "min_eigenvalue": fold(&s.min_eigenvalue, f64::INFINITY, f64::min),
    });
    println!("peak boost {:.4e} N at {:.4e} s", s.peak_boost_n, s.peak_time_s);
    write_json(&config.output_dir.join("dynamics.json"), &sidecar(config, hash, summary))
}

fn subradiant(config: &RunConfig, r: &Resolved, hash: &str, preamble: &[String]) -> Result<(), Failure> {
    let x = config.subradiant_grid().map_err(Failure::config)?;
    let s = subradiant_sweep(r.geometry.n, r.geometry.z0, &x, &r.medium, &r.emitter, &r.quadrature)
        .map_err(Failure::run)?;
    write_csv(&config.output_dir.join("subradiant.csv"), |w| s.write_csv(w, preamble))?;
    let summary = json!({ "n": s.n, "z0_k0": s.z0, "columns": s.columns() });
    write_json(&config.output_dir.join("subradiant.json"), &sidecar(config, hash, summary))
}
