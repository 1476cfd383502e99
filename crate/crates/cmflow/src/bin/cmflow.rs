//! Command-line driver.
//!
//! Exit codes: 0 converged, 1 usage/other error, 2 inadmissible
//! prescription, 3 convexity lost, 4 t_max reached.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmflow::config::{load_config, RunConfig};
use cmflow::continuation::{admissibility_check, continuation_run, ContinuationParams};
use cmflow::error::Error;
use cmflow::flow::{FlowEngine, FlowOutcome};
use cmflow::io::{export_mesh, load_snapshot, write_diagnostics, write_snapshot};

#[derive(Parser)]
#[command(name = "cmflow", about = "Prescribed-curvature flow solver on support functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow described by a config file.
    Run { config: PathBuf },
    /// Check admissibility of the prescription and exit.
    Check { config: PathBuf },
    /// Solve a weakly admissible prescription by continuation.
    Continue { config: PathBuf },
    /// Export a snapshot as a triangulated OBJ mesh.
    Export { snapshot: PathBuf, obj: PathBuf },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Inadmissible(_) => 2,
        Error::ConvexityLost(_) => 3,
        Error::TMaxExceeded { .. } => 4,
        Error::ContinuationStage { source, .. } => exit_code_for(source),
        _ => 1,
    }
}

fn print_outcome(out: &FlowOutcome) {
    println!(
        "converged: t = {:.6}, steps = {} (+{} rejected), residual = {:.3e}",
        out.state.t, out.accepted_steps, out.rejected_steps, out.residual
    );
    println!(
        "gamma = {:.12e}, mu_final = {:.12e}, conserved drift = {:.3e}",
        out.gamma,
        out.mu_final,
        (out.conserved_final - out.conserved_initial).abs() / out.conserved_initial.abs()
    );
    println!(
        "pinch margin min = {:.3e}, monotone increase max = {:.3e}",
        out.min_pinch_margin, out.max_monotone_increase
    );
}

fn write_artifacts(cfg: &RunConfig, out: &FlowOutcome, dt: Option<f64>) -> cmflow::Result<()> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    write_diagnostics(&out.series, cfg.n, &dir.join("diagnostics.csv"))?;
    write_snapshot(&out.state, dt, &dir.join("snapshot.json"))?;
    let mut solution_state = out.state.clone();
    solution_state.s = out.solution.clone();
    write_snapshot(&solution_state, None, &dir.join("solution.json"))?;
    println!("artifacts written to {}", dir.display());
    Ok(())
}

fn cmd_run(path: &PathBuf) -> cmflow::Result<()> {
    let cfg = load_config(path)?;
    let grid = cfg.build_grid()?;
    let phi = cfg.build_prescription(grid.clone())?;
    let initial = cmflow::testdata::gen_body(&cfg.initial, grid)?;
    let mut engine = FlowEngine::new(&initial, &phi, cfg.flow_params())?;
    let out = engine.run()?;
    let dt = engine.current_dt();
    print_outcome(&out);
    write_artifacts(&cfg, &out, Some(dt))
}

fn cmd_check(path: &PathBuf) -> cmflow::Result<()> {
    let cfg = load_config(path)?;
    let grid = cfg.build_grid()?;
    let phi = cfg.build_prescription(grid)?;
    let report = admissibility_check(&phi, cfg.k)?;
    println!(
        "class = {}, margin = {:.6e} (tol {:.1e}), integral defect = {:.6e} (tol {:.1e})",
        report.class, report.margin, report.conv_tol, report.integral_defect, report.int_tol
    );
    if report.class == cmflow::continuation::AdmissibilityClass::Inadmissible {
        return Err(Error::Inadmissible(
            "prescription fails the admissibility check".into(),
        ));
    }
    Ok(())
}

fn cmd_continue(path: &PathBuf) -> cmflow::Result<()> {
    let cfg = load_config(path)?;
    let grid = cfg.build_grid()?;
    let phi = cfg.build_prescription(grid)?;
    let mut params = ContinuationParams::new(cfg.k);
    params.tau0 = cfg.continuation.tau0;
    params.rho = cfg.continuation.rho;
    params.delta = cfg.continuation.delta;
    params.flow = cfg.flow_params();
    let out = continuation_run(&phi, &params)?;
    for st in &out.stages {
        println!(
            "tau = {:.6}: |z| = {:.6e}, residual = {:.3e}, gamma = {:.6e}, steps = {}",
            st.tau, st.z_norm, st.residual, st.gamma, st.accepted_steps
        );
    }
    println!("final residual against the target prescription: {:.3e}", out.final_residual);
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    let state = cmflow::flow::FlowState {
        s: out.solution.clone(),
        t: 0.0,
        step_index: 0,
        last_mu: 0.0,
        k: cfg.k,
        n: cfg.n,
    };
    write_snapshot(&state, None, &dir.join("solution.json"))?;
    println!("artifacts written to {}", dir.display());
    Ok(())
}

fn cmd_export(snapshot: &PathBuf, obj: &PathBuf) -> cmflow::Result<()> {
    let snap = load_snapshot(snapshot)?;
    export_mesh(&snap.state.s, obj)?;
    println!("mesh written to {}", obj.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Check { config } => cmd_check(config),
        Command::Continue { config } => cmd_continue(config),
        Command::Export { snapshot, obj } => cmd_export(snapshot, obj),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
