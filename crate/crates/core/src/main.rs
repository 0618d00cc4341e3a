//! Scenario runner CLI.

use clap::{Parser, Subcommand, ValueEnum};
use relaysim::scenario::{
    run_with_options, summarize_dir, write_artifacts, Mode, RunOptions, RunSummary,
    ScenarioConfig, Wire,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "relaysim", version, about = "GNSS relay/replay attack test-bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SignalLevel,
    MessageLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        time_scale: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum)]
        mode_override: Option<ModeArg>,
        #[arg(long, value_enum, default_value = "inproc")]
        transport: TransportArg,
    },
    /// Validate a scenario configuration.
    Validate { config: PathBuf },
    /// Summarize a directory of run artifacts.
    Summarize { dir: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, time_scale, out_dir, mode_override, transport } => {
            let mut cfg = match ScenarioConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(err) => {
                    eprintln!("{err}");
                    return ExitCode::from(1);
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(scale) = time_scale {
                cfg.timeline.time_scale = scale;
            }
            if let Some(mode) = mode_override {
                cfg.mode = match mode {
                    ModeArg::SignalLevel => Mode::SignalLevel,
                    ModeArg::MessageLevel => Mode::MessageLevel,
                };
            }
            if let Err(err) = cfg.validate() {
                eprintln!("{err}");
                return ExitCode::from(1);
            }
            let options = RunOptions {
                wire: match transport {
                    TransportArg::Inproc => Wire::InProc,
                    TransportArg::Tcp => Wire::TcpLoopback,
                },
            };
            let result = match run_with_options(&cfg, options) {
                Ok(result) => result,
                Err(err) => {
                    eprintln!("run failed: {err}");
                    return ExitCode::from(2);
                }
            };
            if let Err(err) = write_artifacts(&result, &out_dir) {
                eprintln!("writing artifacts failed: {err}");
                return ExitCode::from(2);
            }
            print_summary(&result.summary);
            println!("artifacts: {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match ScenarioConfig::load(&config) {
            Ok(cfg) => {
                println!("{}: valid ({} satellites, mode {})", cfg.name, cfg.constellation.len(), cfg.mode);
                ExitCode::SUCCESS
            }
            Err(err) => {
                eprintln!("{err}");
                ExitCode::from(1)
            }
        },
        Command::Summarize { dir } => match summarize_dir(&dir) {
            Ok(summary) => {
                print_summary(&summary);
                ExitCode::SUCCESS
            }
            Err(err) => {
                eprintln!("{err}");
                ExitCode::from(2)
            }
        },
    }
}

fn print_summary(summary: &RunSummary) {
    println!("run: {} ({}, time_scale {})", summary.name, summary.mode, summary.time_scale);
    println!(
        "capture: {}{}",
        if summary.capture_success { "success" } else { "no capture" },
        summary
            .capture_time_s
            .map(|t| format!(" at t={t:.1} s"))
            .unwrap_or_default()
    );
    for phase in &summary.phases {
        println!(
            "  phase {:<12} {:>8.1} .. {:>8.1} s",
            phase.state, phase.t_start_s, phase.t_end_s
        );
    }
    println!(
        "throughput: peak {:.3} Mb/s, mean {:.3} Mb/s (payload {:.3} Mb/s), {} underruns",
        summary.peak_throughput_bps / 1e6,
        summary.mean_throughput_bps / 1e6,
        summary.mean_payload_rate_bps / 1e6,
        summary.underruns
    );
    if let Some(err) = summary.max_spoofed_tracking_error_m {
        println!("max spoofed tracking error: {err:.2} m");
    }
}
