use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use gridnash_cli::artifact::{
    atomic_write, cut_summary, load_artifact, write_artifact, EquilibriumArtifact, KktSummary,
    SolverSettings, ARTIFACT_SCHEMA_VERSION,
};
use gridnash_cli::config::{load_config, LoadedGame};
use gridnash_cli::report;
use gridnash_core::analysis::{
    certify_bottlenecks, default_saturation_tol, flow_report, price_groups,
};
use gridnash_core::solver::{
    best_response_dynamics, solve_potential, verify_equilibrium, Equilibrium, SolverOptions,
};

#[derive(Parser)]
#[command(
    name = "gridnash",
    version,
    about = "Solve and certify equilibria of networked Cournot markets with a market maker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Projected gradient ascent on the exact potential.
    Potential,
    /// Round-robin best-response dynamics.
    Br,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a game configuration and write an equilibrium artifact.
    ///
    /// Exit codes: 0 converged, 1 input error, 2 non-convergence (the last
    /// iterate is still written).
    Solve {
        /// Game configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Artifact output path (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "potential")]
        method: Method,
        /// Projected-gradient tolerance (overrides the config).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Seed of the randomized feasible start (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Price tolerance for grouping and pair selection.
        #[arg(long, default_value_t = 1e-4)]
        price_tol: f64,
        /// Absolute saturation tolerance; defaults to 1e-6 x largest capacity.
        #[arg(long)]
        sat_tol: Option<f64>,
    },
    /// Re-verify an artifact and write price-group, line-flow and
    /// cut-certificate reports next to it.
    ///
    /// Exit codes: 0 verified and certified, 1 otherwise.
    Analyze {
        #[arg(long)]
        artifact: PathBuf,
        /// Directory for the report files (defaults to the artifact's).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// First-order verification tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        price_tol: f64,
        #[arg(long)]
        sat_tol: Option<f64>,
    },
    /// Emit a DOT graph of a solved artifact: nodes colored by price group,
    /// edges labeled flow/capacity, saturated lines bold.
    ExportGraph {
        #[arg(long)]
        artifact: PathBuf,
        /// DOT output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        price_tol: f64,
        #[arg(long)]
        sat_tol: Option<f64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Solve {
            config,
            out,
            method,
            tol,
            max_iters,
            seed,
            price_tol,
            sat_tol,
        } => cmd_solve(
            &config, &out, method, tol, max_iters, seed, price_tol, sat_tol,
        ),
        Command::Analyze {
            artifact,
            out_dir,
            tol,
            price_tol,
            sat_tol,
        } => cmd_analyze(&artifact, out_dir.as_deref(), tol, price_tol, sat_tol),
        Command::ExportGraph {
            artifact,
            out,
            price_tol,
            sat_tol,
        } => cmd_export_graph(&artifact, &out, price_tol, sat_tol),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    config_path: &Path,
    out: &Path,
    method: Method,
    tol: Option<f64>,
    max_iters: Option<usize>,
    seed: Option<u64>,
    price_tol: f64,
    sat_tol: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let loaded = load_config(config_path)?;
    let options = SolverOptions {
        tol: tol.unwrap_or(loaded.options.tol),
        max_iters: max_iters.unwrap_or(loaded.options.max_iters),
        seed: seed.unwrap_or(loaded.options.seed),
        ..loaded.options
    };

    let started = Instant::now();
    let eq = match method {
        Method::Potential => solve_potential(&loaded.game, &options),
        Method::Br => best_response_dynamics(&loaded.game, &options),
    }
    .context("solver failed")?;
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let kkt_tol = 10.0 * options.tol;
    let kkt = verify_equilibrium(&loaded.game, &eq.production, &eq.flows, kkt_tol)
        .context("verification failed")?;
    let sat = sat_tol.unwrap_or_else(|| default_saturation_tol(loaded.game.graph()));
    let cuts = if eq.converged && kkt.passed {
        certify_bottlenecks(&loaded.game, &eq, kkt_tol, price_tol, sat)
            .ok()
            .map(|report| cut_summary(&loaded, &report, price_tol, sat))
    } else {
        None
    };

    let artifact = EquilibriumArtifact {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        method: match method {
            Method::Potential => "potential".to_string(),
            Method::Br => "br".to_string(),
        },
        game: loaded.config.clone(),
        solver: SolverSettings {
            tol: options.tol,
            max_iters: options.max_iters,
            seed: options.seed,
        },
        converged: eq.converged,
        iterations: eq.iterations,
        residual: eq.residual,
        production: eq.production.as_slice().to_vec(),
        flows: eq.flows.as_slice().to_vec(),
        consumption: eq.consumption.clone(),
        prices: eq.prices.clone(),
        potential: eq.potential,
        kkt: Some(KktSummary::from(&kkt)),
        cuts,
        wall_time_ms,
    };
    write_artifact(out, &artifact)?;

    print_solve_summary(&loaded, &eq, &artifact);
    if eq.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "did not converge after {} iterations (residual {:.3e}); last iterate written",
            eq.iterations, eq.residual
        );
        Ok(ExitCode::from(2))
    }
}

fn print_solve_summary(loaded: &LoadedGame, eq: &Equilibrium, artifact: &EquilibriumArtifact) {
    println!(
        "{}: {} markets, {} producers, {} lines",
        artifact.method,
        loaded.game.markets(),
        loaded.game.producers(),
        loaded.game.line_count()
    );
    println!(
        "converged: {} ({} iterations, residual {:.3e})",
        eq.converged, eq.iterations, eq.residual
    );
    if let Some(cuts) = &artifact.cuts {
        println!(
            "price groups: {} (mean {:.4}); saturated-cut certificates: {}",
            cuts.groups.len(),
            cuts.mean_price,
            if cuts.passed {
                "complete"
            } else {
                "INCOMPLETE"
            }
        );
    }
}

fn cmd_analyze(
    artifact_path: &Path,
    out_dir: Option<&Path>,
    tol: f64,
    price_tol: f64,
    sat_tol: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let artifact = load_artifact(artifact_path)?;
    let loaded = artifact.load_game()?;
    let eq = artifact.equilibrium();
    let sat = sat_tol.unwrap_or_else(|| default_saturation_tol(loaded.game.graph()));

    // Re-verify from scratch; hand-edited or stale artifacts fail here.
    let report = certify_bottlenecks(&loaded.game, &eq, tol, price_tol, sat)
        .context("artifact failed verification")?;
    let lines = flow_report(loaded.game.graph(), &eq.flows, sat)?;

    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| artifact_path.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let stem = artifact_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("artifact");

    let groups_path = dir.join(format!("{stem}.price_groups.csv"));
    let flows_path = dir.join(format!("{stem}.line_flows.csv"));
    let certs_path = dir.join(format!("{stem}.certificates.txt"));
    atomic_write(
        &groups_path,
        report::price_groups_csv(&report.price_groups, &loaded.market_ids).as_bytes(),
    )?;
    atomic_write(
        &flows_path,
        report::line_flows_csv(&lines, &loaded.market_ids).as_bytes(),
    )?;
    atomic_write(
        &certs_path,
        report::certificates_text(&report, &loaded).as_bytes(),
    )?;

    println!(
        "verified (max residual {:.3e} <= {:.3e})",
        report.kkt.max_residual, tol
    );
    println!(
        "price groups: {} (mean {:.4}); straddling pairs: {}; certificates: {}",
        report.price_groups.group_count(),
        report.price_groups.mean_price,
        report.straddling.len(),
        if report.passed {
            "complete"
        } else {
            "INCOMPLETE"
        }
    );
    println!(
        "wrote {}, {}, {}",
        groups_path.display(),
        flows_path.display(),
        certs_path.display()
    );

    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_export_graph(
    artifact_path: &Path,
    out: &Path,
    price_tol: f64,
    sat_tol: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let artifact = load_artifact(artifact_path)?;
    let loaded = artifact.load_game()?;
    let sat = sat_tol.unwrap_or_else(|| default_saturation_tol(loaded.game.graph()));
    let groups = price_groups(&artifact.prices, price_tol)?;
    let dot = report::dot_export(&loaded, &artifact.prices, &artifact.flows, &groups, sat);
    atomic_write(out, dot.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}
