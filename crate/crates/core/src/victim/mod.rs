//! The targeted receiver: the honest software receiver wrapped in a
//! lock-state machine covering legitimate fix, jamming-induced loss,
//! reacquisition on the strongest signals, spoofed capture, and
//! per-phase trace output.
//!
//! The model adds no proprietary anti-spoofing heuristics; the one
//! explicit rule is the trajectory step threshold, a tunable stand-in
//! for whatever internal mechanism rejects large inter-epoch jumps in
//! real receivers. A fix is labeled spoofed when its solved clock bias
//! exceeds a threshold far above anything legitimate geometry produces:
//! replayed streams necessarily run behind real time, and that lag
//! lands in the victim's clock term.

use crate::receiver::{ObservationSet, PvtSolution, ReceiverConfig, SdrReceiver};
use crate::signal::IQFrame;
use std::collections::BTreeMap;
use std::fmt;

/// Victim lock states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockState {
    Cold,
    Acquiring,
    FixLegit,
    Jammed,
    Reacquiring,
    FixSpoofed,
    Lost,
}

impl fmt::Display for LockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Cold => "COLD",
            Self::Acquiring => "ACQUIRING",
            Self::FixLegit => "FIX_LEGIT",
            Self::Jammed => "JAMMED",
            Self::Reacquiring => "REACQUIRING",
            Self::FixSpoofed => "FIX_SPOOFED",
            Self::Lost => "LOST",
        };
        f.write_str(s)
    }
}

/// The transition edge set; anything else is a state machine bug.
pub fn edge_allowed(from: LockState, to: LockState) -> bool {
    use LockState::*;
    matches!(
        (from, to),
        (Cold, Acquiring)
            | (Acquiring, FixLegit)
            | (Acquiring, FixSpoofed)
            | (Acquiring, Lost)
            | (FixLegit, Jammed)
            | (FixLegit, Reacquiring)
            | (FixSpoofed, Jammed)
            | (FixSpoofed, Reacquiring)
            | (Jammed, Reacquiring)
            | (Jammed, Lost)
            | (Reacquiring, FixLegit)
            | (Reacquiring, FixSpoofed)
            | (Reacquiring, Lost)
            | (Lost, Reacquiring)
    )
}

#[derive(Debug, Clone)]
pub struct VictimConfig {
    pub receiver: ReceiverConfig,
    /// Ground-truth position, recorded for trace consumers only.
    pub true_position: [f64; 3],
    /// C/N0 collapse level that counts as jamming, dB-Hz.
    pub jam_detect_cn0_dbhz: f64,
    /// How long the collapse must persist, seconds.
    pub jam_detect_window_s: f64,
    /// Delay between jamming energy subsiding and reacquisition start.
    pub reacquire_delay_s: f64,
    /// Without a fix or acquirable energy for this long, give up.
    pub lost_timeout_s: f64,
    /// Valid-fix dropout that demotes a FIX state without jamming.
    pub fix_loss_timeout_s: f64,
    /// Inter-epoch position step that breaks a spoofed fix, meters
    /// (strict greater-than).
    pub step_loss_threshold_m: f64,
    /// Clock bias above this labels a fix as spoofed, seconds.
    pub spoof_bias_threshold_s: f64,
    /// Acquisition retry cadence while searching, seconds.
    pub acq_retry_interval_s: f64,
}

impl VictimConfig {
    pub fn new(receiver: ReceiverConfig, true_position: [f64; 3]) -> Self {
        Self {
            receiver,
            true_position,
            jam_detect_cn0_dbhz: 25.0,
            jam_detect_window_s: 1.0,
            reacquire_delay_s: 5.0,
            lost_timeout_s: 60.0,
            fix_loss_timeout_s: 1.0,
            step_loss_threshold_m: 20.0,
            spoof_bias_threshold_s: 0.005,
            acq_retry_interval_s: 0.5,
        }
    }
}

/// One trace row per PVT epoch.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t_s: f64,
    pub state: LockState,
    pub solution: Option<PvtSolution>,
    pub cn0_dbhz: BTreeMap<u8, f64>,
    /// The observation set the epoch was solved from.
    pub observations: ObservationSet,
}

#[derive(Debug, Clone)]
pub struct VictimEvent {
    pub t_s: f64,
    pub event: String,
    pub detail: String,
}

/// Time series of victim state with an event log.
#[derive(Debug, Clone, Default)]
pub struct VictimTrace {
    pub rows: Vec<TraceRow>,
    pub events: Vec<VictimEvent>,
}

/// A labeled interval of the attack timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseInterval {
    pub state: LockState,
    pub t_start_s: f64,
    pub t_end_s: f64,
}

/// Collapse the trace into state intervals.
pub fn detect_phase_transitions(trace: &VictimTrace) -> Vec<PhaseInterval> {
    let mut phases: Vec<PhaseInterval> = Vec::new();
    for row in &trace.rows {
        match phases.last_mut() {
            Some(last) if last.state == row.state => last.t_end_s = row.t_s,
            _ => phases.push(PhaseInterval {
                state: row.state,
                t_start_s: row.t_s,
                t_end_s: row.t_s,
            }),
        }
    }
    phases
}

/// Verdict of the trajectory step rule over a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepVerdict {
    /// True when no spoofed-fix inter-epoch step exceeded the threshold.
    pub lock_retained: bool,
    /// Times of steps that exceeded the threshold.
    pub loss_events: Vec<f64>,
}

/// Post-hoc check of inter-epoch spoofed-trajectory steps against a
/// threshold (strict greater-than).
pub fn step_tolerance_check(trace: &VictimTrace, threshold_m: f64) -> StepVerdict {
    let mut last: Option<(f64, [f64; 3])> = None;
    let mut loss_events = Vec::new();
    for row in &trace.rows {
        if row.state != LockState::FixSpoofed {
            last = None;
            continue;
        }
        let Some(sol) = row.solution.filter(|s| s.fix_valid) else { continue };
        if let Some((_, prev)) = last {
            let step = ((sol.position_ecef[0] - prev[0]).powi(2)
                + (sol.position_ecef[1] - prev[1]).powi(2)
                + (sol.position_ecef[2] - prev[2]).powi(2))
            .sqrt();
            if step > threshold_m {
                loss_events.push(row.t_s);
            }
        }
        last = Some((row.t_s, sol.position_ecef));
    }
    StepVerdict { lock_retained: loss_events.is_empty(), loss_events }
}

pub struct VictimReceiver {
    cfg: VictimConfig,
    rx: SdrReceiver,
    state: LockState,
    trace: VictimTrace,
    cn0_low_since: Option<f64>,
    signal_seen_since: Option<f64>,
    searching_since: Option<f64>,
    last_acq_attempt_s: f64,
    last_valid_fix_t: Option<f64>,
    last_fix_pos: Option<[f64; 3]>,
    /// Input power baseline while holding a fix, for jam attribution.
    baseline_power: f64,
    latest_power: f64,
    collapse_active: bool,
}

impl VictimReceiver {
    pub fn new(cfg: VictimConfig) -> Self {
        let rx = SdrReceiver::new(cfg.receiver.clone());
        Self {
            cfg,
            rx,
            state: LockState::Cold,
            trace: VictimTrace::default(),
            cn0_low_since: None,
            signal_seen_since: None,
            searching_since: None,
            last_acq_attempt_s: f64::NEG_INFINITY,
            last_valid_fix_t: None,
            last_fix_pos: None,
            baseline_power: 0.0,
            latest_power: 0.0,
            collapse_active: false,
        }
    }

    pub fn state(&self) -> LockState {
        self.state
    }

    pub fn trace(&self) -> &VictimTrace {
        &self.trace
    }

    pub fn into_trace(self) -> VictimTrace {
        self.trace
    }

    pub fn receiver(&self) -> &SdrReceiver {
        &self.rx
    }

    fn transition(&mut self, to: LockState, t_s: f64, detail: String) {
        assert!(
            edge_allowed(self.state, to),
            "illegal transition {} -> {to} at {t_s}",
            self.state
        );
        self.trace.events.push(VictimEvent {
            t_s,
            event: format!("{}->{to}", self.state),
            detail,
        });
        self.state = to;
    }

    fn event(&mut self, t_s: f64, event: &str, detail: String) {
        self.trace.events.push(VictimEvent { t_s, event: event.into(), detail });
    }

    /// Process one contiguous block of combined channel output.
    pub fn step(&mut self, block: &IQFrame) -> Vec<TraceRow> {
        let t_block = block.start_time_s();
        self.latest_power = block.mean_power();
        if matches!(self.state, LockState::FixLegit | LockState::FixSpoofed)
            && !self.collapse_active
        {
            self.baseline_power = if self.baseline_power == 0.0 {
                self.latest_power
            } else {
                0.95 * self.baseline_power + 0.05 * self.latest_power
            };
        }
        match self.state {
            LockState::Cold => {
                self.transition(LockState::Acquiring, t_block, "startup".into());
                self.searching_since = Some(t_block);
            }
            _ => {}
        }

        // Acquisition policy by state.
        match self.state {
            LockState::Acquiring | LockState::Reacquiring => {
                if t_block - self.last_acq_attempt_s >= self.cfg.acq_retry_interval_s {
                    self.last_acq_attempt_s = t_block;
                    let hits = self.rx.acquire_untracked(block);
                    if !hits.is_empty() {
                        let strongest = &hits[0];
                        self.event(
                            t_block,
                            "acquired",
                            format!(
                                "{} signals, strongest PRN {} metric {:.1}",
                                hits.len(),
                                strongest.prn,
                                strongest.peak_metric
                            ),
                        );
                    }
                }
            }
            LockState::Jammed | LockState::Lost => {
                if t_block - self.last_acq_attempt_s >= self.cfg.acq_retry_interval_s {
                    self.last_acq_attempt_s = t_block;
                    // Probe only: channels start once reacquisition is
                    // allowed to begin.
                    if self.rx.probe_any(block) {
                        if self.signal_seen_since.is_none() {
                            self.signal_seen_since = Some(t_block);
                            self.event(t_block, "signal_energy", "acquirable energy present".into());
                        }
                    } else {
                        self.signal_seen_since = None;
                    }
                }
                if let Some(since) = self.signal_seen_since {
                    let wait = if self.state == LockState::Jammed {
                        self.cfg.reacquire_delay_s
                    } else {
                        0.0
                    };
                    if t_block - since >= wait {
                        self.transition(LockState::Reacquiring, t_block, "signal stable".into());
                        self.searching_since = Some(t_block);
                        self.signal_seen_since = None;
                    }
                }
            }
            _ => {}
        }

        let out = self.rx.process_block(block);
        let block_end_t = (block.start_sample_index + block.len() as u64) as f64
            / block.sample_rate_hz;

        let mut rows = Vec::new();
        for epoch in &out.epochs {
            let cn0: BTreeMap<u8, f64> =
                self.rx.channels().map(|c| (c.prn, c.cn0_dbhz)).collect();
            let valid = epoch.solution.filter(|s| s.fix_valid);
            if let Some(sol) = valid {
                self.last_valid_fix_t = Some(epoch.t_s);
                self.on_valid_fix(epoch.t_s, &sol);
            }
            rows.push(TraceRow {
                t_s: epoch.t_s,
                state: self.state,
                solution: epoch.solution,
                cn0_dbhz: cn0,
                observations: epoch.observations.clone(),
            });
        }

        self.monitor_jamming(block_end_t);
        self.monitor_fix_loss(block_end_t);
        self.monitor_lost(block_end_t);

        // Rows record the state as of their epoch; a transition made on
        // later evidence in the same block applies from the next block.
        self.trace.rows.extend(rows.iter().cloned());
        rows
    }

    fn on_valid_fix(&mut self, t_s: f64, sol: &PvtSolution) {
        let spoofed = sol.clock_bias_s.abs() > self.cfg.spoof_bias_threshold_s;
        match self.state {
            LockState::Acquiring | LockState::Reacquiring => {
                let to = if spoofed { LockState::FixSpoofed } else { LockState::FixLegit };
                self.transition(
                    to,
                    t_s,
                    format!(
                        "fix at [{:.1}, {:.1}, {:.1}] bias {:.6} s",
                        sol.position_ecef[0],
                        sol.position_ecef[1],
                        sol.position_ecef[2],
                        sol.clock_bias_s
                    ),
                );
                self.searching_since = None;
                self.last_fix_pos = Some(sol.position_ecef);
            }
            LockState::FixSpoofed => {
                // The explicit step-tolerance rule.
                if let Some(prev) = self.last_fix_pos {
                    let step = ((sol.position_ecef[0] - prev[0]).powi(2)
                        + (sol.position_ecef[1] - prev[1]).powi(2)
                        + (sol.position_ecef[2] - prev[2]).powi(2))
                    .sqrt();
                    if step > self.cfg.step_loss_threshold_m {
                        self.event(t_s, "step_loss", format!("step {step:.1} m"));
                        self.rx.drop_all_channels();
                        self.transition(
                            LockState::Reacquiring,
                            t_s,
                            format!("trajectory step {step:.1} m over threshold"),
                        );
                        self.searching_since = Some(t_s);
                        self.last_fix_pos = None;
                        return;
                    }
                }
                self.last_fix_pos = Some(sol.position_ecef);
            }
            LockState::FixLegit => {
                self.last_fix_pos = Some(sol.position_ecef);
            }
            _ => {}
        }
    }

    fn monitor_jamming(&mut self, t_s: f64) {
        if !matches!(self.state, LockState::FixLegit | LockState::FixSpoofed) {
            self.cn0_low_since = None;
            self.collapse_active = false;
            return;
        }
        let channels: Vec<f64> = self.rx.channels().map(|c| c.cn0_dbhz).collect();
        // Collapse = every channel's C/N0 under the threshold, or all
        // channels dead while the input power sits far above the fix
        // baseline (broadband energy took them down faster than the
        // estimator could report).
        let all_low = (!channels.is_empty()
            && channels.iter().all(|&c| c < self.cfg.jam_detect_cn0_dbhz))
            || (channels.is_empty()
                && self.baseline_power > 0.0
                && self.latest_power > 8.0 * self.baseline_power);
        self.collapse_active = all_low;
        if all_low {
            let since = *self.cn0_low_since.get_or_insert(t_s);
            if t_s - since >= self.cfg.jam_detect_window_s {
                self.event(t_s, "jam_detected", "C/N0 collapsed on all channels".into());
                self.rx.drop_all_channels();
                self.transition(LockState::Jammed, t_s, "C/N0 collapse".into());
                self.cn0_low_since = None;
                self.collapse_active = false;
                self.signal_seen_since = None;
                self.last_fix_pos = None;
            }
        } else {
            self.cn0_low_since = None;
        }
    }

    fn monitor_fix_loss(&mut self, t_s: f64) {
        if !matches!(self.state, LockState::FixLegit | LockState::FixSpoofed) {
            return;
        }
        // While a collapse is in progress the jam detector owns the
        // transition.
        if self.collapse_active {
            return;
        }
        let stale = self
            .last_valid_fix_t
            .map(|t| t_s - t > self.cfg.fix_loss_timeout_s)
            .unwrap_or(false);
        if stale {
            self.rx.drop_all_channels();
            self.transition(LockState::Reacquiring, t_s, "fix lost without jamming".into());
            self.searching_since = Some(t_s);
            self.last_fix_pos = None;
        }
    }

    fn monitor_lost(&mut self, t_s: f64) {
        if !matches!(self.state, LockState::Acquiring | LockState::Reacquiring) {
            return;
        }
        if let Some(since) = self.searching_since {
            if t_s - since > self.cfg.lost_timeout_s {
                self.transition(LockState::Lost, t_s, "search timeout".into());
                self.searching_since = None;
                self.signal_seen_since = None;
            }
        }
    }
}

/// Trace CSV: `t_s,state,x_m,y_m,z_m,clk_bias_s,fix_valid,cn0_prn<k>...`
/// with one header row; PRN columns follow the given order.
pub fn trace_to_csv(trace: &VictimTrace, prns: &[u8]) -> String {
    let mut out = String::from("t_s,state,x_m,y_m,z_m,clk_bias_s,fix_valid");
    for prn in prns {
        out.push_str(&format!(",cn0_prn{prn}"));
    }
    out.push('\n');
    for row in &trace.rows {
        let (pos, bias, valid) = match &row.solution {
            Some(s) => (s.position_ecef, s.clock_bias_s, s.fix_valid),
            None => ([f64::NAN; 3], f64::NAN, false),
        };
        out.push_str(&format!(
            "{:.3},{},{:.3},{:.3},{:.3},{:.9},{}",
            row.t_s, row.state, pos[0], pos[1], pos[2], bias, u8::from(valid)
        ));
        for prn in prns {
            match row.cn0_dbhz.get(prn) {
                Some(cn0) => out.push_str(&format!(",{cn0:.1}")),
                None => out.push_str(","),
            }
        }
        out.push('\n');
    }
    out
}

/// Events CSV: `t_s,event,detail`.
pub fn events_to_csv(trace: &VictimTrace) -> String {
    let mut out = String::from("t_s,event,detail\n");
    for e in &trace.events {
        let detail = e.detail.replace(',', ";");
        out.push_str(&format!("{:.3},{},{}\n", e.t_s, e.event, detail));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_set_is_closed() {
        use LockState::*;
        let states = [Cold, Acquiring, FixLegit, Jammed, Reacquiring, FixSpoofed, Lost];
        // Spot checks of forbidden moves.
        assert!(!edge_allowed(Cold, FixLegit));
        assert!(!edge_allowed(Jammed, FixSpoofed));
        assert!(!edge_allowed(FixLegit, FixSpoofed));
        assert!(!edge_allowed(Lost, FixLegit));
        // Every state has at least one way forward except none.
        for s in states {
            assert!(states.iter().any(|&t| edge_allowed(s, t)), "{s} is terminal");
        }
    }

    fn spoofed_row(t: f64, pos: [f64; 3]) -> TraceRow {
        TraceRow {
            t_s: t,
            state: LockState::FixSpoofed,
            solution: Some(PvtSolution {
                position_ecef: pos,
                velocity_ecef: [0.0; 3],
                clock_bias_s: 1.0,
                residual_rms_m: 0.1,
                fix_valid: true,
                num_sats: 8,
            }),
            cn0_dbhz: BTreeMap::new(),
            observations: ObservationSet { receive_epoch_s: t, sats: vec![] },
        }
    }

    #[test]
    fn step_check_is_strict_greater_than() {
        let mut trace = VictimTrace::default();
        trace.rows.push(spoofed_row(0.0, [0.0, 0.0, 0.0]));
        trace.rows.push(spoofed_row(0.1, [20.0, 0.0, 0.0]));
        // Exactly at the threshold: retained.
        let verdict = step_tolerance_check(&trace, 20.0);
        assert!(verdict.lock_retained);
        // One epoch over it: a loss event.
        trace.rows.push(spoofed_row(0.2, [40.1, 0.0, 0.0]));
        let verdict = step_tolerance_check(&trace, 20.0);
        assert!(!verdict.lock_retained);
        assert_eq!(verdict.loss_events, vec![0.2]);
    }

    #[test]
    fn small_steps_retain_lock() {
        let mut trace = VictimTrace::default();
        for k in 0..100 {
            trace.rows.push(spoofed_row(k as f64 * 0.1, [k as f64 * 0.9, 0.0, 0.0]));
        }
        assert!(step_tolerance_check(&trace, 20.0).lock_retained);
    }

    #[test]
    fn phase_detection_collapses_states() {
        let mut trace = VictimTrace::default();
        let seq = [
            (0.0, LockState::Acquiring),
            (0.1, LockState::Acquiring),
            (0.2, LockState::FixLegit),
            (0.3, LockState::FixLegit),
            (0.4, LockState::Jammed),
            (0.5, LockState::Reacquiring),
            (0.6, LockState::FixSpoofed),
        ];
        for (t, s) in seq {
            trace.rows.push(TraceRow {
                t_s: t,
                state: s,
                solution: None,
                cn0_dbhz: BTreeMap::new(),
                observations: ObservationSet { receive_epoch_s: t, sats: vec![] },
            });
        }
        let phases = detect_phase_transitions(&trace);
        let states: Vec<LockState> = phases.iter().map(|p| p.state).collect();
        assert_eq!(
            states,
            vec![
                LockState::Acquiring,
                LockState::FixLegit,
                LockState::Jammed,
                LockState::Reacquiring,
                LockState::FixSpoofed
            ]
        );
        assert_eq!(phases[1].t_start_s, 0.2);
        assert_eq!(phases[1].t_end_s, 0.3);
    }

    #[test]
    fn csv_has_expected_shape() {
        let mut trace = VictimTrace::default();
        trace.rows.push(spoofed_row(1.0, [1.0, 2.0, 3.0]));
        trace.events.push(VictimEvent {
            t_s: 0.5,
            event: "jam_detected".into(),
            detail: "a, b".into(),
        });
        let csv = trace_to_csv(&trace, &[1, 2]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t_s,state,x_m,y_m,z_m,clk_bias_s,fix_valid,cn0_prn1,cn0_prn2"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("1.000,FIX_SPOOFED,1.000,2.000,3.000,1.000000000,1"));
        let ev = events_to_csv(&trace);
        assert_eq!(ev.lines().nth(1).unwrap(), "0.500,jam_detected,a; b");
    }
}
