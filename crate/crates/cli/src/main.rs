//! Command-line driver for configured magnetization runs.
//!
//! Exit codes: 0 clean run, 2 configuration problem, 3 linear-solver or
//! integrator failure, 4 invariant violation (including a mesh that
//! fails the stiffness sign condition under `check-mesh`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use llg_core::config::parse_config;
use llg_core::experiment::run_experiment;
use llg_core::fem::assemble_stiffness;
use llg_core::mesh::{check_sign_condition, Mesh};
use llg_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "llg",
    version,
    about = "Finite-element solver for magnetization dynamics with spin torques"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured run and write trace, snapshots, and report
    Run { config: PathBuf },
    /// Validate a mesh file and report the stiffness sign condition
    CheckMesh { mesh: PathBuf },
    /// Run a configured 1D experiment and compare it to the spectral solver
    OracleCompare { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config, false),
        Command::OracleCompare { config } => cmd_run(&config, true),
        Command::CheckMesh { mesh } => cmd_check_mesh(&mesh),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Files named on the command line are configuration input: an
/// unreadable one is a config error, not a generic I/O failure.
fn as_config_input<T>(result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })
}

fn cmd_run(path: &Path, force_oracle: bool) -> Result<ExitCode> {
    let mut config = as_config_input(parse_config(path))?;
    if force_oracle {
        config.compare_oracle = true;
        config.validate()?;
    }
    let base = match path.parent() {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    };
    let outcome = run_experiment(&config, &base)?;
    println!("output: {}", outcome.output_dir.display());
    let invariants = &outcome.report["invariants"];
    if let (Some(initial), Some(last)) = (
        invariants["energy_initial"].as_f64(),
        invariants["energy_final"].as_f64(),
    ) {
        println!("exchange energy: {initial:.6e} -> {last:.6e}");
    }
    if let Some(l2) = outcome.report["oracle"]["l2_difference"].as_f64() {
        println!("oracle L2 difference: {l2:.6e}");
    }
    if outcome.violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &outcome.violations {
            eprintln!("violation: {v}");
        }
        Ok(ExitCode::from(4))
    }
}

fn cmd_check_mesh(path: &Path) -> Result<ExitCode> {
    let mesh = as_config_input(Mesh::read_text(path))?;
    let stiffness = assemble_stiffness(&mesh)?;
    let quality = check_sign_condition(&mesh, &stiffness)?;
    println!(
        "dimension {} | {} nodes | {} elements",
        mesh.dimension(),
        mesh.num_nodes(),
        mesh.num_elements()
    );
    println!(
        "max off-diagonal stiffness: {:.6e}",
        quality.max_offdiagonal_stiffness
    );
    if let (Some(lo), Some(hi)) = (quality.min_angle, quality.max_angle) {
        println!("interior angles: [{lo:.4}, {hi:.4}] rad");
    }
    if quality.satisfies_sign_condition {
        println!("sign condition: satisfied");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("sign condition: violated");
        Ok(ExitCode::from(4))
    }
}
