//! The four subcommands: certificate report, centralized equilibrium
//! solve, a single traced run, and the four-variant comparison dataset.
//!
//! Every run first solves the equilibrium centrally so the trace's
//! distance column has a target, then drives the distributed iteration.
//! All artifacts land in one output directory; the trace CSV is a pure
//! function of the config document, while the metadata file additionally
//! records wall time and is therefore allowed to differ between runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nashseek::dynamics::{
    consensus_stack, run, EstimateState, RunConfig, RunError, StepSchedule, Termination, Trace,
    TraceRow, WeightingMode,
};
use nashseek::games::Game;
use nashseek::oracle::solve_ne_quadratic;
use nashseek::{NESolution64, StepCertificate64};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;

/// Residual demanded of the centralized solve that produces the distance
/// target; well below any run tolerance the shipped configs use.
const ORACLE_TOL: f64 = 1e-12;

/// Step multiplier of the observational fourth variant in [`cmd_fig1`].
const OVERSHOOT_FACTOR: f64 = 400.0;

/// Prints the certified step size and everything that went into it.
pub fn cmd_certify(config: &ExperimentConfig) -> Result<String, CliError> {
    let exp = config.resolve()?;
    let cert = exp.certificate()?;
    Ok(certificate_report(&exp, &cert))
}

/// Solves the equilibrium centrally and prints it.
pub fn cmd_oracle(config: &ExperimentConfig) -> Result<String, CliError> {
    let exp = config.resolve()?;
    let sol = solve_ne_quadratic(&exp.game, ORACLE_TOL)?;
    Ok(oracle_report(&exp, &sol))
}

/// Files produced by [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trace: PathBuf,
    pub certificate: PathBuf,
    pub oracle: PathBuf,
    pub metadata: PathBuf,
    /// One-line outcome for the console.
    pub summary: String,
}

/// Runs the configured algorithm against the centrally solved target and
/// writes `trace.csv`, `certificate.txt`, `oracle.txt`, and
/// `metadata.toml` into `out_dir`.
///
/// A run that leaves the finite range still writes the truncated trace
/// plus the last finite iterate (`last_finite.txt`) before reporting the
/// divergence as an error.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts, CliError> {
    let started = Instant::now();
    let exp = config.resolve()?;
    let schedule = exp.schedule()?;
    let sol = solve_ne_quadratic(&exp.game, ORACLE_TOL)?;
    let target = consensus_stack(&sol.x_star, exp.graph.n_agents());

    let mut cfg = RunConfig::new(schedule.clone(), exp.mode);
    cfg.max_iters = exp.max_iters;
    cfg.tol = exp.tol;
    cfg.target = Some(target);
    cfg.record = exp.record;

    let init = EstimateState::initial(&exp.game);
    let outcome = run(&exp.graph, &exp.game, &exp.spectral.q, init, &cfg);

    fs::create_dir_all(out_dir).map_err(|source| CliError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let paths = RunArtifacts {
        trace: out_dir.join("trace.csv"),
        certificate: out_dir.join("certificate.txt"),
        oracle: out_dir.join("oracle.txt"),
        metadata: out_dir.join("metadata.toml"),
        summary: String::new(),
    };
    write_file(&paths.certificate, &certificate_text(&exp))?;
    write_file(&paths.oracle, &oracle_report(&exp, &sol))?;

    match outcome {
        Ok(report) => {
            write_file(&paths.trace, &trace_csv(&report.trace))?;
            let (outcome_name, iterations) = match report.termination {
                Termination::Converged { at } => ("converged", at),
                Termination::MaxIters => ("max_iters", exp.max_iters),
            };
            write_file(
                &paths.metadata,
                &metadata_text(
                    &exp,
                    &schedule,
                    outcome_name,
                    iterations,
                    report.trace.rows.last(),
                    started.elapsed().as_secs_f64(),
                ),
            )?;
            let final_dist = report
                .trace
                .rows
                .last()
                .and_then(|r| r.dist_q)
                .map_or_else(|| "-".to_string(), |d| format!("{d:e}"));
            Ok(RunArtifacts {
                summary: format!(
                    "{outcome_name} after {iterations} iterations, final dist_q {final_dist}"
                ),
                ..paths
            })
        }
        Err(RunError::NonFiniteState(rep)) => {
            write_file(&paths.trace, &trace_csv(&rep.trace))?;
            let mut dump = String::new();
            for v in rep.last_finite.iter() {
                writeln!(dump, "{v:e}").expect("string formatting cannot fail");
            }
            write_file(&out_dir.join("last_finite.txt"), &dump)?;
            write_file(
                &paths.metadata,
                &metadata_text(
                    &exp,
                    &schedule,
                    "diverged",
                    rep.iteration,
                    rep.trace.rows.last(),
                    started.elapsed().as_secs_f64(),
                ),
            )?;
            Err(CliError::Diverged {
                iteration: rep.iteration,
            })
        }
        Err(RunError::Dynamics(e)) => Err(CliError::ConfigInvalid {
            key: "algorithm".to_string(),
            reason: format!("rejected by the dynamics layer: {e}"),
        }),
    }
}

/// Files produced by [`cmd_fig1`].
#[derive(Debug, Clone)]
pub struct Fig1Artifacts {
    pub csv: PathBuf,
    /// One console line per variant.
    pub summaries: Vec<String>,
}

/// Runs the four-variant comparison and writes one combined CSV.
///
/// Variants: exact weighting at the certified step, online weighting at
/// the certified step, online weighting with the harmonic schedule, and —
/// observationally — exact weighting at 400 times the certified step. A
/// diverging overshoot run is recorded truncated, not treated as fatal;
/// divergence of any guaranteed variant is.
pub fn cmd_fig1(config: &ExperimentConfig, out_dir: &Path) -> Result<Fig1Artifacts, CliError> {
    let exp = config.resolve()?;
    let cert = exp.certificate()?;
    let sol = solve_ne_quadratic(&exp.game, ORACLE_TOL)?;
    let target = consensus_stack(&sol.x_star, exp.graph.n_agents());

    let variants: [(&str, WeightingMode, StepSchedule<f64>); 4] = [
        ("alg1_fixed", WeightingMode::Exact, StepSchedule::Fixed(cert.alpha)),
        ("alg2_fixed", WeightingMode::Online, StepSchedule::Fixed(cert.alpha)),
        ("alg2_harmonic", WeightingMode::Online, StepSchedule::Harmonic),
        (
            "alg1_400x",
            WeightingMode::Exact,
            StepSchedule::Fixed(OVERSHOOT_FACTOR * cert.alpha),
        ),
    ];

    let mut csv = format!("variant,{}\n", Trace::<f64>::CSV_HEADER);
    let mut summaries = Vec::new();
    for (name, mode, schedule) in variants {
        let mut cfg = RunConfig::new(schedule, mode);
        cfg.max_iters = exp.max_iters;
        cfg.tol = exp.tol;
        cfg.target = Some(target.clone());
        cfg.record = exp.record;
        let init = EstimateState::initial(&exp.game);
        let trace = match run(&exp.graph, &exp.game, &exp.spectral.q, init, &cfg) {
            Ok(report) => {
                let (outcome_name, iterations) = match report.termination {
                    Termination::Converged { at } => ("converged", at),
                    Termination::MaxIters => ("max_iters", exp.max_iters),
                };
                summaries.push(format!(
                    "{name}: {outcome_name} after {iterations} iterations{}",
                    final_dist_note(report.trace.rows.last())
                ));
                report.trace
            }
            Err(RunError::NonFiniteState(rep)) if name == "alg1_400x" => {
                summaries.push(format!(
                    "{name}: left the finite range at iteration {}; trace truncated",
                    rep.iteration
                ));
                rep.trace
            }
            Err(RunError::NonFiniteState(rep)) => {
                return Err(CliError::Diverged {
                    iteration: rep.iteration,
                })
            }
            Err(RunError::Dynamics(e)) => {
                return Err(CliError::ConfigInvalid {
                    key: "algorithm".to_string(),
                    reason: format!("rejected by the dynamics layer: {e}"),
                })
            }
        };
        for row in &trace.rows {
            writeln!(csv, "{name},{}", row.csv_fields()).expect("string formatting cannot fail");
        }
    }

    fs::create_dir_all(out_dir).map_err(|source| CliError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv_path = out_dir.join("fig1.csv");
    write_file(&csv_path, &csv)?;
    Ok(Fig1Artifacts {
        csv: csv_path,
        summaries,
    })
}

fn final_dist_note(row: Option<&TraceRow<f64>>) -> String {
    match row.and_then(|r| r.dist_q) {
        Some(d) => format!(", final dist_q {d:e}"),
        None => String::new(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn trace_csv(trace: &Trace<f64>) -> String {
    let mut buf = Vec::new();
    trace
        .write_csv(&mut buf)
        .expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace CSV is ASCII")
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(out, "{key:<14}{value}").expect("string formatting cannot fail");
}

fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn certificate_report(exp: &Experiment, cert: &StepCertificate64) -> String {
    let mut out = String::new();
    kv(&mut out, "agents", exp.graph.n_agents());
    kv(&mut out, "joint_dim", exp.game.layout().total_dim());
    kv(&mut out, "q", join_floats(exp.spectral.q.iter().copied()));
    kv(&mut out, "sigma_bar", format_args!("{:e}", exp.spectral.sigma_bar));
    kv(&mut out, "mu", format_args!("{:e}", exp.constants.mu));
    kv(&mut out, "ell0", format_args!("{:e}", exp.constants.ell0));
    kv(&mut out, "ell", format_args!("{:e}", exp.constants.ell));
    kv(&mut out, "mu_bar", format_args!("{:e}", cert.mu_bar));
    kv(&mut out, "ell_bar", format_args!("{:e}", cert.ell_bar));
    kv(&mut out, "lambda_min_q", format_args!("{:e}", cert.lambda_min_q));
    kv(&mut out, "alpha_star", format_args!("{:e}", cert.alpha));
    kv(&mut out, "rho", format_args!("{:e}", cert.rho));
    kv(&mut out, "rate", format_args!("{:e}", cert.contraction_factor));
    out
}

/// Certificate section of the run artifacts; an infeasible certificate is
/// reported as text rather than failing runs that don't need one.
fn certificate_text(exp: &Experiment) -> String {
    match exp.certificate() {
        Ok(cert) => certificate_report(exp, &cert),
        Err(e) => format!("no admissible step size: {e}\n"),
    }
}

fn oracle_report(exp: &Experiment, sol: &NESolution64) -> String {
    let mut out = String::new();
    kv(&mut out, "joint_dim", exp.game.layout().total_dim());
    kv(&mut out, "x_star", join_floats(sol.x_star.iter().copied()));
    kv(&mut out, "residual", format_args!("{:e}", sol.residual));
    kv(&mut out, "iterations", sol.iterations);
    out
}

fn metadata_text(
    exp: &Experiment,
    schedule: &StepSchedule<f64>,
    outcome: &str,
    iterations: usize,
    last_row: Option<&TraceRow<f64>>,
    wall_time_s: f64,
) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line("command = \"run\"".to_string());
    line(format!("version = \"{}\"", env!("CARGO_PKG_VERSION")));
    line(format!("wall_time_s = {wall_time_s:e}"));
    line(String::new());
    line("[config]".to_string());
    line(format!(
        "variant = \"{}\"",
        match exp.mode {
            WeightingMode::Exact => "alg1",
            WeightingMode::Online => "alg2",
        }
    ));
    line(format!("step = \"{}\"", exp.step_label()));
    line(format!("alpha0 = {:e}", schedule.at(0)));
    line(format!("max_iters = {}", exp.max_iters));
    line(format!("tol = {:e}", exp.tol));
    line(format!(
        "record = \"{}\"",
        match exp.record {
            nashseek::dynamics::RecordRule::All => "all",
            nashseek::dynamics::RecordRule::Log2 => "log2",
        }
    ));
    if let Some(seed) = exp.graph_seed {
        line(format!("graph_seed = {seed}"));
    }
    if let Some(seed) = exp.game_seed {
        line(format!("game_seed = {seed}"));
    }
    line(String::new());
    line("[result]".to_string());
    line(format!("termination = \"{outcome}\""));
    line(format!("iterations = {iterations}"));
    if let Some(row) = last_row {
        line(format!(
            "final_consensus_residual = {:e}",
            row.consensus_residual
        ));
        if let Some(d) = row.dist_q {
            line(format!("final_dist_q = {d:e}"));
        }
    }
    out
}
