//! Scenario configuration: TOML schema, validation and defaults.

use crate::signal::SatelliteDef;
use crate::signal_relay::{BufferPolicy, GapFillMode, LinkConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SignalLevel,
    MessageLevel,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::SignalLevel => f.write_str("signal_level"),
            Mode::MessageLevel => f.write_str("message_level"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_s: f64,
    pub position_ecef: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub sample_rate_hz: f64,
    /// Per-satellite carrier-to-noise density at unit signal power.
    pub cn0_dbhz: f64,
    /// Jamming power relative to a unit-amplitude satellite, dB.
    pub jam_power_db: f64,
    /// Quantizer full scale for signal-level relaying.
    pub full_scale: f64,
    /// Samples per IQ_CHUNK frame.
    pub chunk_samples: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 2.048e6,
            cn0_dbhz: 45.0,
            jam_power_db: 45.0,
            full_scale: 64.0,
            chunk_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimParams {
    pub position_ecef: [f64; 3],
    pub step_loss_threshold_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    /// Jamming onset, unscaled scenario seconds.
    pub t_jam_s: f64,
    pub jam_duration_s: f64,
    /// Replay onset, unscaled scenario seconds.
    pub t_replay_s: f64,
    pub total_s: f64,
    /// Multiplier applied to the event timeline at run time.
    pub time_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub epoch_tow_ms: u64,
    /// node id (as string key for TOML) -> assigned PRNs.
    pub map: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTopology {
    pub atx: Vec<u16>,
    pub assignments: Vec<AssignmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub gain_db: f64,
    pub buffer_policy: BufferPolicy,
    pub buffer_capacity_s: f64,
    pub gap_fill: GapFillMode,
    pub step_limit_m: f64,
    pub step_limit_enabled: bool,
    pub stream_delay_margin_s: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            gain_db: 10.0,
            buffer_policy: BufferPolicy::MinimalLatency,
            buffer_capacity_s: 0.5,
            gap_fill: GapFillMode::Noise,
            step_limit_m: 1.0,
            step_limit_enabled: true,
            stream_delay_margin_s: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayCmdEntry {
    pub effective_tow_ms: u64,
    /// PRN number, or "all".
    pub prn: PrnSelector,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrnSelector {
    Prn(u8),
    All(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default)]
    pub sim: SimParams,
    pub victim: VictimParams,
    pub constellation: Vec<SatelliteDef>,
    pub arx_trajectory: Vec<Waypoint>,
    pub nodes: NodeTopology,
    pub timeline: Timeline,
    #[serde(default)]
    pub transport: LinkConfig,
    #[serde(default)]
    pub attack: AttackParams,
    #[serde(default)]
    pub delay_cmds: Vec<DelayCmdEntry>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Scaled timeline values.
    pub fn scaled(&self, unscaled_s: f64) -> f64 {
        unscaled_s * self.timeline.time_scale
    }

    pub fn constellation_prns(&self) -> Vec<u8> {
        self.constellation.iter().map(|s| s.prn).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut err = |msg: String| errors.push(msg);

        if self.timeline.time_scale <= 0.0 {
            err(format!("timeline.time_scale: must be > 0, got {}", self.timeline.time_scale));
        }
        if self.timeline.total_s <= 0.0 {
            err(format!("timeline.total_s: must be > 0, got {}", self.timeline.total_s));
        }
        for (field, value) in [
            ("timeline.t_jam_s", self.timeline.t_jam_s),
            ("timeline.t_replay_s", self.timeline.t_replay_s),
        ] {
            if value < 0.0 || value >= self.timeline.total_s {
                err(format!("{field}: {value} outside [0, total_s)"));
            }
        }
        if self.timeline.jam_duration_s < 0.0 {
            err("timeline.jam_duration_s: negative".into());
        }

        if self.sim.sample_rate_hz < 1.0e6 {
            err(format!(
                "sim.sample_rate_hz: {} below the 1 MS/s minimum",
                self.sim.sample_rate_hz
            ));
        }
        if self.sim.chunk_samples == 0 {
            err("sim.chunk_samples: must be positive".into());
        }

        if self.constellation.is_empty() {
            err("constellation: empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for sat in &self.constellation {
            if !(1..=32).contains(&sat.prn) {
                err(format!("constellation: PRN {} out of range 1..=32", sat.prn));
            }
            if !seen.insert(sat.prn) {
                err(format!("constellation: duplicate PRN {}", sat.prn));
            }
            if sat.orbit.radius_m <= 6.4e6 {
                err(format!(
                    "constellation: PRN {} orbit radius {} below Earth radius",
                    sat.prn, sat.orbit.radius_m
                ));
            }
            if sat.orbit.angular_rate_rad_s <= 0.0 {
                err(format!("constellation: PRN {} angular rate not positive", sat.prn));
            }
        }
        let prns: std::collections::BTreeSet<u8> = seen;

        if self.arx_trajectory.is_empty() {
            err("arx_trajectory: empty".into());
        }
        for pair in self.arx_trajectory.windows(2) {
            if pair[1].t_s <= pair[0].t_s {
                err(format!(
                    "arx_trajectory: non-monotone waypoints at t_s {} then {}",
                    pair[0].t_s, pair[1].t_s
                ));
            }
        }

        if self.nodes.atx.is_empty() {
            err("nodes.atx: empty".into());
        }
        let node_set: std::collections::BTreeSet<u16> = self.nodes.atx.iter().copied().collect();
        if node_set.len() != self.nodes.atx.len() {
            err("nodes.atx: duplicate node ids".into());
        }
        if self.nodes.assignments.is_empty() {
            err("nodes.assignments: empty".into());
        }
        let mut last_epoch: Option<u64> = None;
        for entry in &self.nodes.assignments {
            if let Some(prev) = last_epoch {
                if entry.epoch_tow_ms <= prev {
                    err(format!(
                        "nodes.assignments: epoch_tow_ms {} not increasing after {}",
                        entry.epoch_tow_ms, prev
                    ));
                }
            }
            last_epoch = Some(entry.epoch_tow_ms);
            for (node, assigned) in &entry.map {
                match node.parse::<u16>() {
                    Ok(id) if node_set.contains(&id) => {}
                    Ok(id) => err(format!("nodes.assignments: unknown node {id}")),
                    Err(_) => err(format!("nodes.assignments: bad node key {node:?}")),
                }
                for prn in assigned {
                    if !prns.contains(prn) {
                        err(format!("nodes.assignments: unknown PRN {prn}"));
                    }
                }
            }
        }

        for (start, end) in &self.transport.outages {
            if end <= start {
                err(format!("transport.outages: window ({start}, {end}) not increasing"));
            }
        }
        if self.transport.latency_s < 0.0 {
            err("transport.latency_s: negative".into());
        }

        if self.attack.buffer_capacity_s <= 0.0 {
            err("attack.buffer_capacity_s: must be positive".into());
        }
        if self.attack.step_limit_m <= 0.0 {
            err("attack.step_limit_m: must be positive".into());
        }

        for cmd in &self.delay_cmds {
            match &cmd.prn {
                PrnSelector::Prn(prn) if !prns.contains(prn) => {
                    err(format!("delay_cmds: unknown PRN {prn}"));
                }
                PrnSelector::All(word) if word != "all" => {
                    err(format!("delay_cmds: bad PRN selector {word:?}"));
                }
                _ => {}
            }
            if cmd.delay_s < 0.0 {
                err(format!("delay_cmds: negative delay {}", cmd.delay_s));
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(errors))
        }
    }

    /// Interpolated ARX position and velocity at an unscaled scenario
    /// time (waypoint timeline).
    pub fn arx_state_unscaled(&self, t_s: f64) -> ([f64; 3], [f64; 3]) {
        let wps = &self.arx_trajectory;
        if t_s <= wps[0].t_s {
            return (wps[0].position_ecef, [0.0; 3]);
        }
        for pair in wps.windows(2) {
            if t_s <= pair[1].t_s {
                let dt = pair[1].t_s - pair[0].t_s;
                let w = (t_s - pair[0].t_s) / dt;
                let mut pos = [0.0; 3];
                let mut vel = [0.0; 3];
                for k in 0..3 {
                    pos[k] = pair[0].position_ecef[k]
                        + (pair[1].position_ecef[k] - pair[0].position_ecef[k]) * w;
                    vel[k] = (pair[1].position_ecef[k] - pair[0].position_ecef[k]) / dt;
                }
                return (pos, vel);
            }
        }
        (wps[wps.len() - 1].position_ecef, [0.0; 3])
    }

    /// ARX position/velocity at simulated (scaled) time. Velocities
    /// scale inversely with the timeline compression.
    pub fn arx_state_at(&self, sim_t_s: f64) -> ([f64; 3], [f64; 3]) {
        let scale = self.timeline.time_scale;
        let (pos, vel) = self.arx_state_unscaled(sim_t_s / scale);
        ([pos[0], pos[1], pos[2]], [vel[0] / scale, vel[1] / scale, vel[2] / scale])
    }
}
