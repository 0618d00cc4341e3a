//! Deterministic end-to-end scenario execution: legitimate sky at the
//! victim, the ARX node (sampling or extracting), the relay link, the
//! ATX node(s) (replay buffer or regenerator), channel combination, and
//! the victim receiver — all advanced block by block on one simulated
//! clock.

use super::config::{Mode, PrnSelector, ScenarioConfig};
use super::sky::SkyModel;
use crate::receiver::{ObservationSet, PvtSolution, ReceiverConfig, SdrReceiver};
use crate::regen::{RegenConfig, RegenState};
use crate::relay::{
    assemble, AssignmentTable, DelayTarget, Distributor, EnvelopeDecoder, MessageStream,
    RelayMessage, Sequencer, StreamItem, ThroughputMeter, ThroughputWindow,
};
use crate::signal::{combine, jam_window, IQFrame};
use crate::signal_relay::{gap_fill, quantize, ReplayBuffer, SimLink};
use crate::victim::{
    detect_phase_transitions, LockState, VictimConfig, VictimReceiver, VictimTrace,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

/// How relay frames move between the attacker nodes. Timing semantics
/// are always simulated; the TCP option additionally pushes every frame
/// through a real loopback socket and verifies it arrives bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Wire {
    #[default]
    InProc,
    TcpLoopback,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub wire: Wire,
}

enum WireChannel {
    InProc,
    Tcp { tx: std::net::TcpStream, rx: std::net::TcpStream },
}

impl WireChannel {
    fn new(wire: Wire) -> Result<Self, RunError> {
        match wire {
            Wire::InProc => Ok(Self::InProc),
            Wire::TcpLoopback => {
                let listener = std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| {
                    RunError::Stage { stage: "transport", message: e.to_string() }
                })?;
                let addr = listener.local_addr().map_err(|e| RunError::Stage {
                    stage: "transport",
                    message: e.to_string(),
                })?;
                let tx = std::net::TcpStream::connect(addr).map_err(|e| RunError::Stage {
                    stage: "transport",
                    message: e.to_string(),
                })?;
                let (rx, _) = listener.accept().map_err(|e| RunError::Stage {
                    stage: "transport",
                    message: e.to_string(),
                })?;
                tx.set_nodelay(true).ok();
                Ok(Self::Tcp { tx, rx })
            }
        }
    }

    /// Move one frame across the wire; returns the received bytes.
    fn transit(&mut self, bytes: &[u8]) -> Result<Vec<u8>, RunError> {
        match self {
            Self::InProc => Ok(bytes.to_vec()),
            Self::Tcp { tx, rx } => {
                use std::io::{Read, Write};
                tx.write_all(bytes).map_err(|e| RunError::Stage {
                    stage: "transport",
                    message: format!("tcp write: {e}"),
                })?;
                let mut got = vec![0u8; bytes.len()];
                rx.read_exact(&mut got).map_err(|e| RunError::Stage {
                    stage: "transport",
                    message: format!("tcp read: {e}"),
                })?;
                if got != bytes {
                    return Err(RunError::Stage {
                        stage: "transport",
                        message: "tcp loopback corrupted a frame".into(),
                    });
                }
                Ok(got)
            }
        }
    }
}

/// One ARX navigation row.
#[derive(Debug, Clone, Copy)]
pub struct ArxRow {
    pub t_s: f64,
    pub position_ecef: [f64; 3],
    pub clock_bias_s: f64,
    pub fix_valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhaseSummary {
    pub state: String,
    pub t_start_s: f64,
    pub t_end_s: f64,
}

/// Run summary, derivable from the trace artifacts.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub mode: String,
    pub time_scale: f64,
    pub sample_rate_hz: f64,
    pub capture_success: bool,
    pub capture_time_s: Option<f64>,
    pub first_fix_time_s: Option<f64>,
    pub phases: Vec<PhaseSummary>,
    pub peak_throughput_bps: f64,
    pub mean_throughput_bps: f64,
    pub mean_payload_rate_bps: f64,
    pub total_wire_bytes: u64,
    pub total_payload_bytes: u64,
    pub underruns: u64,
    pub max_spoofed_tracking_error_m: Option<f64>,
}

/// Everything a run produces, in memory. `write_artifacts` persists the
/// file forms.
pub struct RunResult {
    pub config: ScenarioConfig,
    pub summary: RunSummary,
    pub victim_trace: VictimTrace,
    pub arx_rows: Vec<ArxRow>,
    pub throughput: Vec<ThroughputWindow>,
    /// Victim observation sets per epoch, for per-satellite analysis.
    pub victim_obs: Vec<(f64, ObservationSet)>,
}

/// Block length of the simulation pipeline, seconds.
const BLOCK_S: f64 = 0.1;

struct AtxNode {
    id: u16,
    link: SimLink,
    decoder: EnvelopeDecoder,
    /// Frames in flight: (arrival time, encoded frame bytes).
    in_flight: std::collections::VecDeque<(f64, Vec<u8>)>,
    regen: RegenState,
    replay: ReplayBuffer,
    sequencer: Sequencer,
}

pub fn run(config: &ScenarioConfig) -> Result<RunResult, RunError> {
    run_with_options(config, RunOptions::default())
}

pub fn run_with_options(
    config: &ScenarioConfig,
    options: RunOptions,
) -> Result<RunResult, RunError> {
    config.validate().map_err(|e| RunError::Stage { stage: "config", message: e.to_string() })?;
    let mut wire = WireChannel::new(options.wire)?;
    let fs = config.sim.sample_rate_hz;
    let block_len = (fs * BLOCK_S).round() as usize;
    let total_eff = config.scaled(config.timeline.total_s);
    let n_blocks = (total_eff / BLOCK_S).ceil() as u64;
    let t_jam = config.scaled(config.timeline.t_jam_s);
    let jam_end = t_jam + config.scaled(config.timeline.jam_duration_s);
    let t_replay = config.scaled(config.timeline.t_replay_s);
    let noise_density = 10f64.powf(-config.sim.cn0_dbhz / 10.0);

    // Independent thermal noise per antenna, same transmitted streams.
    let mut victim_sky = SkyModel::new(
        &config.constellation,
        config.seed,
        noise_density,
        config.seed ^ 0x5649_4354,
    );
    let mut arx_sky = SkyModel::new(
        &config.constellation,
        config.seed,
        noise_density,
        config.seed ^ 0x4152_5800,
    );

    let mut victim = VictimReceiver::new(victim_config(config));

    // ARX receiver only runs at message level.
    let mut arx_rx = match config.mode {
        Mode::MessageLevel => {
            let mut rc = ReceiverConfig::new(fs);
            rc.search_prns = config.constellation_prns();
            rc.max_channels = config.constellation.len().max(4);
            Some(SdrReceiver::new(rc))
        }
        Mode::SignalLevel => None,
    };
    let mut arx_acq_last = f64::NEG_INFINITY;
    let mut arx_rows: Vec<ArxRow> = Vec::new();

    let mut distributor = Distributor::new(
        config.nodes.atx.iter().copied().collect(),
        assignment_table(&config.nodes.assignments[0]),
    )
    .map_err(|e| RunError::Stage { stage: "distribute", message: e.to_string() })?;
    let mut assignments_sent = vec![false; config.nodes.assignments.len()];
    let mut delay_sent = vec![false; config.delay_cmds.len()];
    let mut last_tow_sync_ms: Option<u64> = None;
    let mut last_sat_params_ms: BTreeMap<u8, u64> = BTreeMap::new();

    let mut nodes: Vec<AtxNode> = config
        .nodes
        .atx
        .iter()
        .map(|&id| AtxNode {
            id,
            link: SimLink::new(config.transport.clone()),
            decoder: EnvelopeDecoder::new(),
            in_flight: Default::default(),
            regen: RegenState::new(
                id,
                RegenConfig {
                    sample_rate_hz: fs,
                    gain_db: config.attack.gain_db,
                    step_limit_m: config.attack.step_limit_m,
                    step_limit_enabled: config.attack.step_limit_enabled,
                    step_interval_s: BLOCK_S,
                    stream_delay_margin_s: config.attack.stream_delay_margin_s,
                },
            ),
            replay: ReplayBuffer::new(
                config.attack.buffer_policy,
                (config.attack.buffer_capacity_s * fs) as usize,
            ),
            sequencer: Sequencer::new(),
        })
        .collect();

    let mut meter = ThroughputMeter::new(1.0);
    let mut victim_obs: Vec<(f64, ObservationSet)> = Vec::new();
    let mut signal_seq = Sequencer::new();

    for block_idx in 0..n_blocks {
        let start_index = block_idx * block_len as u64;
        let t0 = start_index as f64 / fs;
        let t_end = t0 + BLOCK_S;

        // Legitimate sky at the victim antenna.
        let victim_pos = config.victim.position_ecef;
        let legit = victim_sky.window(start_index, block_len, fs, victim_pos, [0.0; 3]);
        let mut components = vec![legit];

        // ARX side.
        let (arx_pos, arx_vel) = config.arx_state_at(t0);
        match config.mode {
            Mode::SignalLevel => {
                if t_end > t_replay {
                    let arx_frame =
                        arx_sky.window(start_index, block_len, fs, arx_pos, arx_vel);
                    stream_signal_level(
                        config,
                        &arx_frame,
                        t_replay,
                        &mut nodes,
                        &mut signal_seq,
                        &mut meter,
                        &mut wire,
                    )?;
                }
                // Trajectory truth stands in for the ARX PVT log.
                arx_rows.push(ArxRow {
                    t_s: t0,
                    position_ecef: arx_pos,
                    clock_bias_s: 0.0,
                    fix_valid: true,
                });
            }
            Mode::MessageLevel => {
                let arx_frame = arx_sky.window(start_index, block_len, fs, arx_pos, arx_vel);
                let rx = arx_rx.as_mut().expect("message mode has an ARX receiver");
                if rx.tracked_prns().len() < config.constellation.len()
                    && t0 - arx_acq_last >= 2.0
                {
                    arx_acq_last = t0;
                    rx.acquire_untracked(&arx_frame);
                }
                let out = rx.process_block(&arx_frame);
                let mut streams: Vec<MessageStream> = Vec::new();
                for epoch in &out.epochs {
                    if let Some(sol) = epoch.solution {
                        arx_rows.push(ArxRow {
                            t_s: epoch.t_s,
                            position_ecef: sol.position_ecef,
                            clock_bias_s: sol.clock_bias_s,
                            fix_valid: sol.fix_valid,
                        });
                    }
                    let Ok(extracted) = rx.extract_params(epoch) else { continue };
                    streams.push(extraction_stream(
                        config,
                        &extracted.pvt,
                        extracted.tow_ms,
                        &extracted,
                        &mut last_tow_sync_ms,
                        &mut last_sat_params_ms,
                        &mut assignments_sent,
                        &mut delay_sent,
                    ));
                }
                if !streams.is_empty() {
                    let assembled = assemble(&streams).map_err(|e| RunError::Stage {
                        stage: "assemble",
                        message: e.to_string(),
                    })?;
                    let routed = distributor.distribute(&assembled).map_err(|e| {
                        RunError::Stage { stage: "distribute", message: e.to_string() }
                    })?;
                    for node in nodes.iter_mut() {
                        let Some(stream) = routed.get(&node.id) else { continue };
                        for item in &stream.items {
                            let bytes = node.sequencer.encode(&item.message);
                            let bytes = wire.transit(&bytes)?;
                            let arrival = node.link.send(t0, bytes.len());
                            let payload = bytes.len()
                                - crate::relay::HEADER_LEN
                                - crate::relay::TRAILER_LEN;
                            meter.record(t0, bytes.len(), payload);
                            node.in_flight.push_back((arrival, bytes));
                        }
                    }
                }
            }
        }

        // ATX nodes produce their windows.
        for node in nodes.iter_mut() {
            let frame = atx_window(
                config,
                node,
                start_index,
                block_len,
                fs,
                t0,
                t_replay,
                block_idx,
            )
            .map_err(|e| RunError::Stage { stage: "regen", message: e })?;
            if let Some(frame) = frame {
                components.push(frame);
            }
        }

        // Jamming overlay.
        if t0 < jam_end && t_end > t_jam {
            let from = ((t_jam.max(t0) - t0) * fs).round() as usize;
            let to = (((jam_end.min(t_end)) - t0) * fs).round() as usize;
            let to = to.min(block_len);
            if to > from {
                let mut jam = jam_window(
                    start_index + from as u64,
                    to - from,
                    fs,
                    config.sim.jam_power_db,
                    config.seed ^ 0x4A41_4D00 ^ block_idx,
                );
                // Align into a full block for combining.
                let mut padded = IQFrame::zeroed(start_index, fs, block_len);
                padded.samples[from..to].swap_with_slice(&mut jam.samples);
                components.push(padded);
            }
        }

        let combined = combine(&components).map_err(|e| RunError::Stage {
            stage: "combine",
            message: e.to_string(),
        })?;
        // Per-epoch observations ride along in the trace rows.
        for row in victim.step(&combined) {
            victim_obs.push((row.t_s, row.observations));
        }
    }

    let victim_trace = victim.into_trace();
    let summary = summarize_run(config, &victim_trace, &meter, &nodes, t_replay, total_eff);
    let throughput = meter.series(0.0, total_eff);
    Ok(RunResult {
        config: config.clone(),
        summary,
        victim_trace,
        arx_rows,
        throughput,
        victim_obs,
    })
}

fn victim_config(config: &ScenarioConfig) -> VictimConfig {
    let scale = config.timeline.time_scale;
    let mut rc = ReceiverConfig::new(config.sim.sample_rate_hz);
    rc.search_prns = (1..=32).collect();
    let mut vc = VictimConfig::new(rc, config.victim.position_ecef);
    vc.jam_detect_window_s = (1.0 * scale).max(0.15);
    vc.reacquire_delay_s = 5.0 * scale;
    vc.fix_loss_timeout_s = (1.5 * scale).max(0.4);
    vc.lost_timeout_s = (60.0 * scale).max(20.0);
    vc.step_loss_threshold_m = config.victim.step_loss_threshold_m;
    vc
}

fn assignment_table(entry: &super::config::AssignmentEntry) -> AssignmentTable {
    AssignmentTable::new(
        entry.epoch_tow_ms,
        entry
            .map
            .iter()
            .map(|(node, prns)| {
                (node.parse::<u16>().expect("validated"), prns.iter().copied().collect())
            })
            .collect(),
    )
}

/// Build the outgoing message stream for one extraction epoch.
#[allow(clippy::too_many_arguments)]
fn extraction_stream(
    config: &ScenarioConfig,
    pvt: &PvtSolution,
    tow_ms: u64,
    extracted: &crate::receiver::ExtractedParams,
    last_tow_sync_ms: &mut Option<u64>,
    last_sat_params_ms: &mut BTreeMap<u8, u64>,
    assignments_sent: &mut [bool],
    delay_sent: &mut [bool],
) -> MessageStream {
    let mut stream = MessageStream::new();
    // Stream keys are the extraction epoch; activation times live in
    // the payloads themselves.
    let mut push = |msg: RelayMessage| {
        stream.items.push(StreamItem { tow_ms, message: msg });
    };

    // TOW_SYNC at 1 Hz.
    if last_tow_sync_ms.map_or(true, |t| tow_ms >= t + 1000) {
        *last_tow_sync_ms = Some(tow_ms);
        push(RelayMessage::TowSync { tow_ms });
    }
    // PVT state every extraction epoch.
    push(RelayMessage::PvtState {
        tow_ms,
        position_ecef: pvt.position_ecef,
        velocity_ecef: pvt.velocity_ecef,
        clock_bias_s: pvt.clock_bias_s,
        residual_rms_m: pvt.residual_rms_m as f32,
        fix_valid: pvt.fix_valid,
    });
    // Nav words as they complete.
    for word in &extracted.nav_words {
        let bits: Vec<u8> = (0..30).map(|k| ((word.bits >> (29 - k)) & 1) as u8).collect();
        push(RelayMessage::NavBits {
            tow_ms,
            prn: word.prn,
            first_bit_index: word.stream_bit_index,
            bits,
        });
    }
    // SAT_PARAMS at 1 Hz per satellite.
    for sat in &extracted.sats {
        if last_sat_params_ms.get(&sat.prn).map_or(true, |&t| tow_ms >= t + 1000) {
            last_sat_params_ms.insert(sat.prn, tow_ms);
            push(RelayMessage::SatParams {
                tow_ms,
                prn: sat.prn,
                doppler_hz: sat.doppler_hz as f32,
                code_phase_chips: sat.code_phase_chips as f32,
                cn0_dbhz: sat.cn0_dbhz as f32,
                pseudorange_m: sat.pseudorange_m,
                carrier_phase_rad: sat.carrier_phase_rad as f32,
            });
        }
    }
    // Assignment tables, broadcast ahead of their activation epoch.
    for (i, entry) in config.nodes.assignments.iter().enumerate() {
        if !assignments_sent[i] && tow_ms + 2000 >= entry.epoch_tow_ms {
            assignments_sent[i] = true;
            push(RelayMessage::Assignment(assignment_table(entry)));
        }
    }
    // Scheduled delay commands, sent ahead of their effective time.
    for (i, cmd) in config.delay_cmds.iter().enumerate() {
        if !delay_sent[i] && tow_ms + 3000 >= cmd.effective_tow_ms {
            delay_sent[i] = true;
            let target = match &cmd.prn {
                PrnSelector::Prn(prn) => DelayTarget::Prn(*prn),
                PrnSelector::All(_) => DelayTarget::All,
            };
            push(RelayMessage::DelayCmd {
                effective_tow_ms: cmd.effective_tow_ms,
                target,
                delay_s: cmd.delay_s,
            });
        }
    }
    stream
}

/// Quantize, frame and ship one signal-level window to every node.
#[allow(clippy::too_many_arguments)]
fn stream_signal_level(
    config: &ScenarioConfig,
    arx_frame: &IQFrame,
    t_replay: f64,
    nodes: &mut [AtxNode],
    seq: &mut Sequencer,
    meter: &mut ThroughputMeter,
    wire: &mut WireChannel,
) -> Result<(), RunError> {
    let fs = arx_frame.sample_rate_hz;
    // Only samples from the replay start onward are shipped.
    let t0 = arx_frame.start_time_s();
    let skip = if t0 >= t_replay { 0 } else { ((t_replay - t0) * fs).round() as usize };
    if skip >= arx_frame.len() {
        return Ok(());
    }
    let mut index = arx_frame.start_sample_index + skip as u64;
    for samples in arx_frame.samples[skip..].chunks(config.sim.chunk_samples) {
        let piece = IQFrame {
            start_sample_index: index,
            sample_rate_hz: fs,
            samples: samples.to_vec(),
        };
        let (chunk, _) = quantize(&piece, config.sim.full_scale);
        let msg = RelayMessage::IqChunk(chunk.clone());
        let bytes = seq.encode(&msg);
        let bytes = wire.transit(&bytes)?;
        let produced_at = (index + samples.len() as u64) as f64 / fs;
        for node in nodes.iter_mut() {
            let arrival = node.link.send(produced_at, bytes.len());
            node.replay.push_chunk(arrival, &chunk);
        }
        meter.record(produced_at, bytes.len(), chunk.payload_bytes());
        index += samples.len() as u64;
    }
    Ok(())
}

/// One ATX node's contribution for the current block.
#[allow(clippy::too_many_arguments)]
fn atx_window(
    config: &ScenarioConfig,
    node: &mut AtxNode,
    start_index: u64,
    block_len: usize,
    fs: f64,
    t0: f64,
    t_replay: f64,
    block_idx: u64,
) -> Result<Option<IQFrame>, String> {
    match config.mode {
        Mode::SignalLevel => {
            if t0 + BLOCK_S <= t_replay {
                return Ok(None);
            }
            let mut frame =
                node.replay
                    .emit(start_index, block_len, fs, config.sim.full_scale);
            let power = node.replay.played_power();
            gap_fill(
                &mut frame,
                node.replay.gaps(),
                config.attack.gap_fill,
                power,
                config.seed ^ 0x4741_5000,
            );
            let gain = 10f64.powf(config.attack.gain_db / 20.0);
            for s in &mut frame.samples {
                *s *= gain;
            }
            Ok(Some(frame))
        }
        Mode::MessageLevel => {
            // Deliver frames that have arrived by the block start.
            while let Some((arrival, _)) = node.in_flight.front() {
                if *arrival > t0 {
                    break;
                }
                let (_, bytes) = node.in_flight.pop_front().expect("checked front");
                node.decoder.push(&bytes);
            }
            loop {
                match node.decoder.next() {
                    Ok(Some((_, msg))) => {
                        if let Err(e) = node.regen.apply_message(&msg, t0) {
                            // A stale delay command is an event, not a
                            // run failure.
                            if !matches!(e, crate::regen::RegenError::PastEffectiveTime { .. }) {
                                return Err(e.to_string());
                            }
                        }
                    }
                    Ok(None) => break,
                    Err(e) => return Err(e.to_string()),
                }
            }
            if t0 + BLOCK_S <= t_replay {
                return Ok(None);
            }
            let (frame, _events) = node.regen.regen_step(
                start_index,
                block_len,
                &config.constellation,
                config.seed ^ 0x5245_4700 ^ block_idx,
            );
            Ok(Some(frame))
        }
    }
}

fn summarize_run(
    config: &ScenarioConfig,
    trace: &VictimTrace,
    meter: &ThroughputMeter,
    nodes: &[AtxNode],
    t_replay: f64,
    total_eff: f64,
) -> RunSummary {
    let phases = detect_phase_transitions(trace)
        .into_iter()
        .map(|p| PhaseSummary {
            state: p.state.to_string(),
            t_start_s: p.t_start_s,
            t_end_s: p.t_end_s,
        })
        .collect::<Vec<_>>();

    let mut capture_time = None;
    let mut first_fix = None;
    let mut max_err: Option<f64> = None;
    for row in &trace.rows {
        let Some(sol) = row.solution.filter(|s| s.fix_valid) else { continue };
        if first_fix.is_none() {
            first_fix = Some(row.t_s);
        }
        if row.state == LockState::FixSpoofed {
            capture_time.get_or_insert(row.t_s);
            let (arx_pos, _) = config.arx_state_at(row.t_s);
            let err = ((sol.position_ecef[0] - arx_pos[0]).powi(2)
                + (sol.position_ecef[1] - arx_pos[1]).powi(2)
                + (sol.position_ecef[2] - arx_pos[2]).powi(2))
            .sqrt();
            max_err = Some(max_err.map_or(err, |m: f64| m.max(err)));
        }
    }

    let active_s = (total_eff - t_replay).max(1e-9);
    RunSummary {
        name: config.name.clone(),
        mode: config.mode.to_string(),
        time_scale: config.timeline.time_scale,
        sample_rate_hz: config.sim.sample_rate_hz,
        capture_success: capture_time.is_some(),
        capture_time_s: capture_time,
        first_fix_time_s: first_fix,
        phases,
        peak_throughput_bps: meter.peak_bits_per_s(),
        mean_throughput_bps: meter.total_wire_bytes() as f64 * 8.0 / active_s,
        mean_payload_rate_bps: meter.total_payload_bytes() as f64 * 8.0 / active_s,
        total_wire_bytes: meter.total_wire_bytes(),
        total_payload_bytes: meter.total_payload_bytes(),
        underruns: nodes.iter().map(|n| n.replay.underruns()).sum(),
        max_spoofed_tracking_error_m: max_err,
    }
}
