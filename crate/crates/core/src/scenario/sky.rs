//! Per-receiver sky synthesis: geometry-driven channel taps with
//! carrier-phase continuity across windows, fed from the satellites'
//! transmitted bit streams.

use crate::signal::{
    synthesize_iq, ChannelTap, EphemerisBlock, IQFrame, NavBitWindow, SatBitStream, SatelliteDef,
};
use crate::{CHIPS_PER_BIT, SPEED_OF_LIGHT};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

/// Reference transmit power that maps to 0 dB relative signal power.
const REFERENCE_TX_POWER_DBW: f64 = 14.3;

/// Geometry tap for one satellite seen from a receiver state at time
/// `t`: light-time delay, Doppler from the range rate, and relative
/// power from the satellite's nominal transmit power.
pub fn tap_for(
    sat: &SatelliteDef,
    rx_pos: [f64; 3],
    rx_vel: [f64; 3],
    t: f64,
    extra_power_db: f64,
) -> (ChannelTap, f64) {
    let mut tau = 0.07;
    for _ in 0..3 {
        let sp = sat.position(t - tau);
        tau = dist(sp, rx_pos) / SPEED_OF_LIGHT;
    }
    let sp = sat.position(t - tau);
    let sv = sat.velocity(t - tau);
    let r = [sp[0] - rx_pos[0], sp[1] - rx_pos[1], sp[2] - rx_pos[2]];
    let range = dist(sp, rx_pos);
    let range_rate = (r[0] * (sv[0] - rx_vel[0])
        + r[1] * (sv[1] - rx_vel[1])
        + r[2] * (sv[2] - rx_vel[2]))
        / range;
    let doppler = -range_rate / SPEED_OF_LIGHT * crate::L1_HZ;
    let power_db = sat.tx_power_dbw - REFERENCE_TX_POWER_DBW + extra_power_db;
    (ChannelTap::from_delay(sat.prn, tau, doppler, power_db, t), tau)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Synthesizes what one antenna hears from the constellation, window by
/// window, with per-satellite carrier phase carried across windows.
pub struct SkyModel {
    sats: Vec<SatelliteDef>,
    streams: BTreeMap<u8, SatBitStream>,
    phases: BTreeMap<u8, f64>,
    noise_density: f64,
    seed: u64,
}

impl SkyModel {
    /// `auth_seed` fixes the opaque authentication bits of every
    /// satellite; skies built from the same constellation and auth seed
    /// transmit identical streams.
    pub fn new(
        constellation: &[SatelliteDef],
        auth_seed: u64,
        noise_density: f64,
        noise_seed: u64,
    ) -> Self {
        let streams = constellation
            .iter()
            .map(|sat| {
                let stream =
                    SatBitStream::new(sat.prn, &EphemerisBlock::from_orbit(&sat.orbit), auth_seed)
                        .expect("constellation orbits encode");
                (sat.prn, stream)
            })
            .collect();
        Self {
            sats: constellation.to_vec(),
            streams,
            phases: BTreeMap::new(),
            noise_density,
            seed: noise_seed,
        }
    }

    pub fn stream(&self, prn: u8) -> Option<&SatBitStream> {
        self.streams.get(&prn)
    }

    /// Synthesize one window as heard at `rx_pos`/`rx_vel`.
    pub fn window(
        &mut self,
        start_sample_index: u64,
        num_samples: usize,
        sample_rate_hz: f64,
        rx_pos: [f64; 3],
        rx_vel: [f64; 3],
    ) -> IQFrame {
        let t0 = start_sample_index as f64 / sample_rate_hz;
        let window_s = num_samples as f64 / sample_rate_hz;
        let mut taps = Vec::with_capacity(self.sats.len());
        let mut bits = BTreeMap::new();
        for sat in &self.sats {
            let phase = self.phases.get(&sat.prn).copied().unwrap_or(0.0);
            let (tap, _) = tap_for(sat, rx_pos, rx_vel, t0, 0.0);
            let tap = tap.with_carrier_phase(phase);
            // Bits covering the window plus guard for delay drift.
            let first_bit = ((tap.stream_chip_at(t0) / CHIPS_PER_BIT).floor() - 2.0).max(0.0) as u64;
            let count = (window_s / crate::BIT_DURATION_S).ceil() as usize + 5;
            let stream = &self.streams[&sat.prn];
            bits.insert(sat.prn, NavBitWindow::new(first_bit, stream.symbols(first_bit, count)));
            self.phases
                .insert(sat.prn, (phase + TAU * tap.doppler_hz * window_s) % TAU);
            taps.push(tap);
        }
        let (frame, _) = synthesize_iq(
            &taps,
            &bits,
            start_sample_index,
            num_samples,
            sample_rate_hz,
            self.noise_density,
            self.seed ^ start_sample_index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )
        .expect("sky taps always have bits");
        frame
    }
}
