//! The software receiver: acquisition, tracking, navigation decoding,
//! PVT solving, and extraction of the parameter set relayed to the
//! transmit nodes. Used both by the adversarial receiver (ARX) and,
//! wrapped in a lock-state machine, by the victim model.

mod acquire;
mod nav_decode;
mod pvt;
mod track;

pub use acquire::{AcquisitionResult, Acquirer, DopplerGrid};
pub use nav_decode::{bits_to_symbols, decode_nav, frame_sync, quick_sync, FrameAlignment};
pub use pvt::{
    pseudorange_for, solve_pvt, ObservationSet, PvtError, PvtSolution, SatObservation,
};
pub use track::{Correlators, LockFlags, NavWordEvent, TrackingChannel, TrackingConfig};

use crate::signal::{EphemerisBlock, IQFrame, NavSubframe, SignalError};
use crate::SPEED_OF_LIGHT;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReceiverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("no valid fix available")]
    NoFix,
}

/// Receiver-wide configuration.
#[derive(Debug, Clone)]
pub struct ReceiverConfig {
    pub sample_rate_hz: f64,
    pub doppler_grid: DopplerGrid,
    pub acquisition_threshold: f64,
    pub tracking: TrackingConfig,
    /// PRNs searched during acquisition.
    pub search_prns: Vec<u8>,
    pub max_channels: usize,
    /// PVT cadence, seconds of simulated time.
    pub pvt_interval_s: f64,
}

impl ReceiverConfig {
    pub fn new(sample_rate_hz: f64) -> Self {
        Self {
            sample_rate_hz,
            doppler_grid: DopplerGrid::default(),
            acquisition_threshold: 12.0,
            tracking: TrackingConfig::default(),
            search_prns: (1..=32).collect(),
            max_channels: 12,
            pvt_interval_s: 0.1,
        }
    }
}

/// Per-satellite extracted parameters relayed at message level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatChannelParams {
    pub prn: u8,
    pub doppler_hz: f64,
    pub code_phase_chips: f64,
    pub cn0_dbhz: f64,
    pub pseudorange_m: f64,
    /// Extracted but intentionally unused downstream.
    pub carrier_phase_rad: f64,
}

/// The full parameter set extracted at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedParams {
    pub tow_ms: u64,
    pub pvt: PvtSolution,
    pub sats: Vec<SatChannelParams>,
    /// Navigation words (auth bits embedded verbatim) observed since the
    /// previous extraction.
    pub nav_words: Vec<NavWordEvent>,
}

/// One PVT epoch produced by `process_block`.
#[derive(Debug, Clone)]
pub struct PvtEpoch {
    pub t_s: f64,
    pub observations: ObservationSet,
    pub solution: Option<PvtSolution>,
}

/// Everything a block of samples produced.
#[derive(Debug, Clone, Default)]
pub struct BlockOutput {
    pub epochs: Vec<PvtEpoch>,
    pub nav_words: Vec<NavWordEvent>,
    pub subframes: Vec<NavSubframe>,
    pub lost_prns: Vec<u8>,
}

pub struct SdrReceiver {
    pub cfg: ReceiverConfig,
    acquirer: Acquirer,
    channels: BTreeMap<u8, TrackingChannel>,
    ephemeris: BTreeMap<u8, EphemerisBlock>,
    next_pvt_sample: u64,
    last_fix: Option<(f64, PvtSolution)>,
    pending_words: Vec<NavWordEvent>,
}

impl SdrReceiver {
    pub fn new(cfg: ReceiverConfig) -> Self {
        let pvt_interval = (cfg.pvt_interval_s * cfg.sample_rate_hz).round() as u64;
        Self {
            cfg,
            acquirer: Acquirer::new(),
            channels: BTreeMap::new(),
            ephemeris: BTreeMap::new(),
            next_pvt_sample: pvt_interval,
            last_fix: None,
            pending_words: Vec::new(),
        }
    }

    pub fn tracked_prns(&self) -> Vec<u8> {
        self.channels.keys().copied().collect()
    }

    pub fn channel(&self, prn: u8) -> Option<&TrackingChannel> {
        self.channels.get(&prn)
    }

    pub fn channels(&self) -> impl Iterator<Item = &TrackingChannel> {
        self.channels.values()
    }

    pub fn frame_locked_count(&self) -> usize {
        self.channels.values().filter(|c| c.lock.frame).count()
    }

    pub fn ephemeris(&self, prn: u8) -> Option<&EphemerisBlock> {
        self.ephemeris.get(&prn)
    }

    pub fn drop_all_channels(&mut self) {
        self.channels.clear();
    }

    /// Run acquisition on the given block for every untracked PRN in the
    /// search list; successful hits start tracking channels that will
    /// consume this same block. Returns results sorted by descending
    /// peak, so channel slots go to the strongest signals regardless of
    /// provenance.
    pub fn acquire_untracked(&mut self, block: &IQFrame) -> Vec<AcquisitionResult> {
        let mut hits = Vec::new();
        let prns: Vec<u8> = self
            .cfg
            .search_prns
            .iter()
            .copied()
            .filter(|p| !self.channels.contains_key(p))
            .collect();
        for prn in prns {
            if let Ok(Some(result)) = self.acquirer.acquire(
                block,
                prn,
                &self.cfg.doppler_grid,
                self.cfg.acquisition_threshold,
            ) {
                hits.push(result);
            }
        }
        hits.sort_by(|a, b| b.peak_metric.total_cmp(&a.peak_metric));
        let slots = self.cfg.max_channels.saturating_sub(self.channels.len());
        hits.truncate(slots);
        for result in &hits {
            let fine = self.acquirer.refine_doppler(block, result);
            let mut ch = TrackingChannel::from_acquisition(
                result,
                self.cfg.sample_rate_hz,
                block.start_sample_index,
                self.cfg.tracking,
            );
            ch.set_doppler(fine);
            self.channels.insert(result.prn, ch);
        }
        hits
    }

    /// Acquisition probe: is any searched PRN acquirable in this block?
    /// No channels are started; stops at the first hit.
    pub fn probe_any(&mut self, block: &IQFrame) -> bool {
        let prns = self.cfg.search_prns.clone();
        for prn in prns {
            if let Ok(Some(_)) = self.acquirer.acquire(
                block,
                prn,
                &self.cfg.doppler_grid,
                self.cfg.acquisition_threshold,
            ) {
                return true;
            }
        }
        false
    }

    /// Track all channels through one contiguous block, decode nav data,
    /// drop dead channels and solve PVT at epoch boundaries.
    pub fn process_block(&mut self, block: &IQFrame) -> BlockOutput {
        let mut out = BlockOutput::default();
        for ch in self.channels.values_mut() {
            ch.push_samples(&block.samples, block.start_sample_index);
            while ch.track_step().is_some() {}
            let (words, subframes) = ch.drain_nav();
            for sf in &subframes {
                self.ephemeris
                    .insert(sf.prn, EphemerisBlock::decode(&sf.payload_bits));
            }
            self.pending_words.extend(words.iter().copied());
            out.nav_words.extend(words);
            out.subframes.extend(subframes);
        }

        let dead: Vec<u8> = self
            .channels
            .iter()
            .filter(|(_, c)| !c.lock.code)
            .map(|(&prn, _)| prn)
            .collect();
        for prn in &dead {
            self.channels.remove(prn);
        }
        out.lost_prns = dead;

        let block_end = block.start_sample_index + block.len() as u64;
        let interval = (self.cfg.pvt_interval_s * self.cfg.sample_rate_hz).round() as u64;
        while self.next_pvt_sample <= block_end {
            let epoch_sample = self.next_pvt_sample;
            self.next_pvt_sample += interval;
            let t_s = epoch_sample as f64 / self.cfg.sample_rate_hz;
            let observations = self.observations_at(epoch_sample);
            let solution = match solve_pvt(&observations) {
                Ok(mut sol) => {
                    if let Some((t_prev, prev)) = self.last_fix {
                        let dt = t_s - t_prev;
                        if dt > 0.0 {
                            for k in 0..3 {
                                sol.velocity_ecef[k] =
                                    (sol.position_ecef[k] - prev.position_ecef[k]) / dt;
                            }
                        }
                    }
                    self.last_fix = Some((t_s, sol));
                    Some(sol)
                }
                Err(_) => None,
            };
            out.epochs.push(PvtEpoch { t_s, observations, solution });
        }
        out
    }

    /// Observations from frame-locked channels at a common epoch.
    fn observations_at(&self, epoch_sample: u64) -> ObservationSet {
        let t_rx = epoch_sample as f64 / self.cfg.sample_rate_hz;
        let mut sats = Vec::new();
        for (prn, ch) in &self.channels {
            if !ch.lock.frame {
                continue;
            }
            let Some(eph) = self.ephemeris.get(prn) else { continue };
            let Some(tau) = ch.transmit_time_at(epoch_sample) else { continue };
            let pseudorange = (t_rx - tau) * SPEED_OF_LIGHT;
            if pseudorange <= 0.0 {
                continue;
            }
            sats.push(SatObservation {
                prn: *prn,
                pseudorange_m: pseudorange,
                sat_pos_ecef: eph.to_orbit().position(tau),
                cn0_dbhz: ch.cn0_dbhz,
            });
        }
        ObservationSet { receive_epoch_s: t_rx, sats }
    }

    /// Extract the relayable parameter set at an epoch with a valid fix.
    /// Channels without frame lock are excluded; nav words accumulated
    /// since the previous extraction are drained into the result.
    pub fn extract_params(&mut self, epoch: &PvtEpoch) -> Result<ExtractedParams, ReceiverError> {
        let pvt = epoch.solution.filter(|s| s.fix_valid).ok_or(ReceiverError::NoFix)?;
        let tow_ms = ((epoch.t_s - pvt.clock_bias_s) * 1000.0).max(0.0) as u64;
        let mut sats = Vec::new();
        for obs in &epoch.observations.sats {
            let Some(ch) = self.channels.get(&obs.prn) else { continue };
            if !ch.lock.frame {
                continue;
            }
            sats.push(SatChannelParams {
                prn: obs.prn,
                doppler_hz: ch.doppler_hz,
                code_phase_chips: ch.code_phase_chips(),
                cn0_dbhz: ch.cn0_dbhz,
                pseudorange_m: obs.pseudorange_m,
                carrier_phase_rad: ch.carrier_phase_rad(),
            });
        }
        Ok(ExtractedParams {
            tow_ms,
            pvt,
            sats,
            nav_words: std::mem::take(&mut self.pending_words),
        })
    }
}
