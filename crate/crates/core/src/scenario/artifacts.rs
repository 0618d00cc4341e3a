//! Run artifact files: CSV traces, throughput log, event log and the
//! JSON summary. Files are written atomically (temp file + rename) and
//! the summary is re-derivable from the traces.

use super::run::{ArxRow, PhaseSummary, RunResult, RunSummary};
use crate::relay::ThroughputWindow;
use crate::victim::{events_to_csv, trace_to_csv};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing artifact {0}")]
    Incomplete(String),
    #[error("bad artifact content in {path}: {message}")]
    Malformed { path: String, message: String },
}

pub const VICTIM_TRACE_CSV: &str = "victim_trace.csv";
pub const ARX_PVT_CSV: &str = "arx_pvt.csv";
pub const THROUGHPUT_CSV: &str = "throughput.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const SUMMARY_JSON: &str = "run_summary.json";

fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<(), ArtifactError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let path = dir.join(name);
    let io = |source| ArtifactError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::create(&tmp).map_err(io)?;
    file.write_all(content.as_bytes())
        .map_err(|source| ArtifactError::Io { path: tmp.display().to_string(), source })?;
    file.sync_all().ok();
    drop(file);
    std::fs::rename(&tmp, &path).map_err(io)?;
    Ok(())
}

pub fn arx_rows_to_csv(rows: &[ArxRow]) -> String {
    let mut out = String::from("t_s,x_m,y_m,z_m,clk_bias_s,fix_valid\n");
    for r in rows {
        out.push_str(&format!(
            "{:.3},{:.3},{:.3},{:.3},{:.9},{}\n",
            r.t_s,
            r.position_ecef[0],
            r.position_ecef[1],
            r.position_ecef[2],
            r.clock_bias_s,
            u8::from(r.fix_valid)
        ));
    }
    out
}

pub fn throughput_to_csv(windows: &[ThroughputWindow]) -> String {
    let mut out = String::from("window_start_s,bytes,bits_per_s,payload_bytes\n");
    for w in windows {
        out.push_str(&format!(
            "{:.3},{},{:.1},{}\n",
            w.start_s, w.bytes, w.bits_per_s, w.payload_bytes
        ));
    }
    out
}

/// Persist all artifacts of a run into `dir`.
pub fn write_artifacts(result: &RunResult, dir: &Path) -> Result<(), ArtifactError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| ArtifactError::Io { path: dir.display().to_string(), source })?;
    let prns = result.config.constellation_prns();
    write_atomic(dir, VICTIM_TRACE_CSV, &trace_to_csv(&result.victim_trace, &prns))?;
    write_atomic(dir, ARX_PVT_CSV, &arx_rows_to_csv(&result.arx_rows))?;
    write_atomic(dir, THROUGHPUT_CSV, &throughput_to_csv(&result.throughput))?;
    write_atomic(dir, EVENTS_CSV, &events_to_csv(&result.victim_trace))?;
    let json = serde_json::to_string_pretty(&result.summary).expect("summary serializes");
    write_atomic(dir, SUMMARY_JSON, &json)?;
    Ok(())
}

/// Recompute a summary from a directory of artifacts. The stored JSON
/// is used for run metadata; phases, capture verdict and throughput are
/// re-derived from the CSVs so the summary stays honest.
pub fn summarize_dir(dir: &Path) -> Result<RunSummary, ArtifactError> {
    let read = |name: &str| -> Result<String, ArtifactError> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(ArtifactError::Incomplete(name.to_string()));
        }
        std::fs::read_to_string(&path)
            .map_err(|source| ArtifactError::Io { path: path.display().to_string(), source })
    };

    let stored: RunSummary = serde_json::from_str(&read(SUMMARY_JSON)?).map_err(|e| {
        ArtifactError::Malformed { path: SUMMARY_JSON.into(), message: e.to_string() }
    })?;

    // Re-derive phases and capture from the victim trace.
    let trace_text = read(VICTIM_TRACE_CSV)?;
    let mut phases: Vec<PhaseSummary> = Vec::new();
    let mut capture_time = None;
    let mut first_fix = None;
    for line in trace_text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(ArtifactError::Malformed {
                path: VICTIM_TRACE_CSV.into(),
                message: format!("short row: {line}"),
            });
        }
        let t: f64 = fields[0].parse().map_err(|_| ArtifactError::Malformed {
            path: VICTIM_TRACE_CSV.into(),
            message: format!("bad t_s in {line}"),
        })?;
        let state = fields[1].to_string();
        let valid = fields[6] == "1";
        if valid && first_fix.is_none() {
            first_fix = Some(t);
        }
        if valid && state == "FIX_SPOOFED" && capture_time.is_none() {
            capture_time = Some(t);
        }
        match phases.last_mut() {
            Some(last) if last.state == state => last.t_end_s = t,
            _ => phases.push(PhaseSummary { state, t_start_s: t, t_end_s: t }),
        }
    }

    let throughput_text = read(THROUGHPUT_CSV)?;
    let mut peak = 0.0f64;
    let mut total_bytes = 0u64;
    let mut total_payload = 0u64;
    for line in throughput_text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            continue;
        }
        let bits: f64 = fields[2].parse().unwrap_or(0.0);
        peak = peak.max(bits);
        total_bytes += fields[1].parse::<u64>().unwrap_or(0);
        total_payload += fields[3].parse::<u64>().unwrap_or(0);
    }

    read(EVENTS_CSV)?;
    read(ARX_PVT_CSV)?;

    Ok(RunSummary {
        capture_success: capture_time.is_some(),
        capture_time_s: capture_time,
        first_fix_time_s: first_fix,
        phases,
        peak_throughput_bps: peak,
        total_wire_bytes: total_bytes,
        total_payload_bytes: total_payload,
        ..stored
    })
}
