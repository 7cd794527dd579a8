//! `nsscale`: batch driver for the spectral Navier-Stokes laboratory.
//!
//! Subcommands: `run <config.json>`, `validate <config.json>`,
//! `inspect <snapshot>`. Exit codes: 0 success, 1 a task failed, 2 invalid
//! configuration, 3 solver blow-up.

mod config;
mod report;
mod tasks;

use clap::{Parser, Subcommand};
use config::{ExperimentConfig, InitialData};
use nsscale_core::norms::format_real;
use nsscale_core::{field, io as core_io, solver, Error};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nsscale", version, about = "spectral Navier-Stokes laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a full experiment from a JSON configuration.
    Run { config: PathBuf },
    /// Parse and validate a configuration, echoing the canonical form.
    Validate { config: PathBuf },
    /// Print the header and summary statistics of a snapshot file.
    Inspect { snapshot: PathBuf },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg.echo()).unwrap());
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("invalid configuration: {msg}");
                ExitCode::from(2)
            }
        },
        Command::Inspect { snapshot } => match inspect(&snapshot) {
            Ok(()) => ExitCode::SUCCESS,
            Err(msg) => {
                eprintln!("inspect failed: {msg}");
                ExitCode::from(2)
            }
        },
        Command::Run { config } => run(&config),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    ExperimentConfig::from_str(&text)
}

fn worker_cap() -> usize {
    std::env::var("NSSCALE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn inspect(path: &Path) -> Result<(), String> {
    let (header, data) = core_io::read_snapshot(path).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&header).unwrap());
    for (name, values) in header.fields.iter().zip(&data) {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let l2 = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
        println!(
            "{name}: min={} max={} mean={} rms={}",
            format_real(min),
            format_real(max),
            format_real(mean),
            format_real(l2)
        );
    }
    Ok(())
}

fn run(config_path: &Path) -> ExitCode {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("invalid configuration: {msg}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let out_dir = PathBuf::from(&cfg.output_dir);
    if let Err(e) = fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory: {e}");
        return ExitCode::from(2);
    }
    // crash-safety: mark the run incomplete until everything is written
    let manifest_path = out_dir.join("run_manifest.json");
    let write_manifest = |status: &str,
                          outputs: &[(String, String)],
                          task_status: &[(String, String)],
                          wall: Option<f64>,
                          summary: serde_json::Value| {
        let manifest = json!({
            "status": status,
            "version": env!("CARGO_PKG_VERSION"),
            "worker_cap": worker_cap(),
            "config": cfg.echo(),
            "outputs": outputs.iter().map(|(k, v)| json!({"task": k, "file": v})).collect::<Vec<_>>(),
            "tasks": task_status.iter().map(|(k, v)| json!({"task": k, "status": v})).collect::<Vec<_>>(),
            "wall_clock_seconds": wall,
            "summary": summary,
        });
        let _ = fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap());
    };
    write_manifest("incomplete", &[], &[], None, json!({}));

    let grid = cfg.grid().expect("validated");
    let u0 = match &cfg.initial_data {
        InitialData::TaylorGreen { amplitude } => field::taylor_green(grid, *amplitude),
        InitialData::Random { spectrum_slope, k_peak, energy, seed } => {
            field::random_divfree_field(grid, *spectrum_slope, *k_peak, *energy, *seed)
        }
    };
    let solver_cfg = cfg.solver_config();
    let traj = match solver::simulate(&u0, &solver_cfg) {
        Ok(t) => t,
        Err(Error::BlowUp { time, step }) => {
            eprintln!("solver blow-up diagnostic at t = {time} (step {step})");
            write_manifest("blow-up", &[], &[], Some(start.elapsed().as_secs_f64()), json!({}));
            return ExitCode::from(3);
        }
        Err(e) => {
            eprintln!("solver error: {e}");
            write_manifest("failed", &[], &[], Some(start.elapsed().as_secs_f64()), json!({}));
            return ExitCode::from(1);
        }
    };
    let mut outputs: Vec<(String, String)> = Vec::new();
    let mut task_status: Vec<(String, String)> = Vec::new();
    if cfg.save_snapshots {
        let snap_dir = out_dir.join("trajectory");
        match core_io::save_trajectory(&snap_dir, &traj, cfg.initial_data.seed()) {
            Ok(()) => outputs.push(("trajectory".into(), "trajectory/manifest.json".into())),
            Err(e) => task_status.push(("trajectory".into(), format!("failed: {e}"))),
        }
    }
    let mut tagged: Vec<(String, Vec<nsscale_core::norms::ReportRow>)> = Vec::new();
    let mut any_failed = false;
    for (i, task) in cfg.analysis.iter().enumerate() {
        let tag = format!("task_{i}_{}", task.name());
        match tasks::run_task(task, &traj) {
            Ok(rows) => {
                let file = format!("{tag}.csv");
                if let Err(e) = report::write_task_csv(&out_dir.join(&file), &rows) {
                    task_status.push((tag.clone(), format!("failed: {e}")));
                    any_failed = true;
                    continue;
                }
                outputs.push((tag.clone(), file));
                task_status.push((tag.clone(), "ok".into()));
                tagged.push((tag, rows));
            }
            Err(msg) => {
                log::warn!("task {tag} failed: {msg}");
                task_status.push((tag, format!("failed: {msg}")));
                any_failed = true;
            }
        }
    }
    match report::write_consolidated(&out_dir, &tagged) {
        Ok((csv, json_name)) => {
            outputs.push(("report_csv".into(), csv));
            outputs.push(("report_json".into(), json_name));
        }
        Err(e) => {
            eprintln!("failed to write consolidated report: {e}");
            any_failed = true;
        }
    }
    let ok_tasks = task_status.iter().filter(|(_, s)| s == "ok").count();
    let summary = json!({
        "snapshots": traj.len(),
        "initial_energy": nsscale_core::norms::format_real(traj.initial_energy()),
        "final_energy": nsscale_core::norms::format_real(traj.snapshot(traj.len() - 1).energy()),
        "tasks_ok": ok_tasks,
        "tasks_failed": task_status.len() - ok_tasks,
    });
    write_manifest(
        if any_failed { "completed_with_failures" } else { "complete" },
        &outputs,
        &task_status,
        Some(start.elapsed().as_secs_f64()),
        summary,
    );
    if any_failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
