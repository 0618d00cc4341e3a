//! Baseband IQ synthesis: BPSK-modulated C/A signals with per-tap code
//! phase, Doppler and power, plus wideband noise generation and channel
//! combination.
//!
//! Time bookkeeping: every satellite transmits a bit stream in "stream
//! time"; stream chip `c` corresponds to stream time `c / 1.023e6` and
//! nav bit `floor(c / 20460)`. A tap maps receiver time to stream chips
//! through its delay and Doppler, so code phase, bit boundaries and TOW
//! stay mutually consistent. Samples before stream time zero, or beyond
//! the supplied nav bits, are muted (the signal "is not there").

use super::ca_code::CaCode;
use super::{IQFrame, SignalError};
use crate::{CHIPS_PER_BIT, CHIP_RATE_HZ, CODE_LEN, L1_HZ};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

/// One satellite signal path: PRN, timing, Doppler and relative power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTap {
    pub prn: u8,
    /// Stream delay in seconds at the anchor instant (receive time minus
    /// stream time).
    pub delay_s: f64,
    pub doppler_hz: f64,
    /// Power relative to a unit-amplitude signal, dB.
    pub power_db: f64,
    /// Carrier phase at the anchor instant, radians.
    pub carrier_phase_rad: f64,
    /// Absolute receiver time at which `stream_chip0` applies, seconds.
    anchor_time_s: f64,
    /// Unwrapped stream chip position observed at the anchor instant.
    stream_chip0: f64,
}

impl ChannelTap {
    /// Tap anchored by stream delay: at `anchor_time_s` the received
    /// signal corresponds to stream chip `CHIP_RATE * (anchor - delay)`.
    pub fn from_delay(
        prn: u8,
        delay_s: f64,
        doppler_hz: f64,
        power_db: f64,
        anchor_time_s: f64,
    ) -> Self {
        Self {
            prn,
            delay_s,
            doppler_hz,
            power_db,
            carrier_phase_rad: 0.0,
            anchor_time_s,
            stream_chip0: CHIP_RATE_HZ * (anchor_time_s - delay_s),
        }
    }

    /// Tap anchored by code phase at time zero; nav bit 0 starts at
    /// stream chip 0, so the phase also fixes the bit alignment.
    pub fn from_phase(prn: u8, code_phase_chips: f64, doppler_hz: f64, power_db: f64) -> Self {
        Self {
            prn,
            delay_s: 0.0,
            doppler_hz,
            power_db,
            carrier_phase_rad: 0.0,
            anchor_time_s: 0.0,
            stream_chip0: code_phase_chips,
        }
    }

    pub fn with_carrier_phase(mut self, phase_rad: f64) -> Self {
        self.carrier_phase_rad = phase_rad;
        self
    }

    /// Received chip rate including code Doppler.
    pub fn chip_rate_hz(&self) -> f64 {
        CHIP_RATE_HZ * (1.0 + self.doppler_hz / L1_HZ)
    }

    /// Unwrapped stream chip position at absolute time `t`.
    pub fn stream_chip_at(&self, t: f64) -> f64 {
        self.stream_chip0 + self.chip_rate_hz() * (t - self.anchor_time_s)
    }

    /// Code phase in [0, 1023) at absolute time `t`.
    pub fn code_phase_chips_at(&self, t: f64) -> f64 {
        self.stream_chip_at(t).rem_euclid(CODE_LEN as f64)
    }
}

/// A window of transmitted nav bits as +/-1 symbols, addressed by
/// absolute stream bit index.
#[derive(Debug, Clone, Default)]
pub struct NavBitWindow {
    pub first_bit: u64,
    pub symbols: Vec<i8>,
}

impl NavBitWindow {
    pub fn new(first_bit: u64, symbols: Vec<i8>) -> Self {
        Self { first_bit, symbols }
    }

    /// Constant +1 data over a bit range, for pilots and tests.
    pub fn all_ones(first_bit: u64, count: usize) -> Self {
        Self { first_bit, symbols: vec![1; count] }
    }

    #[inline]
    pub fn symbol(&self, bit_index: i64) -> Option<f64> {
        if bit_index < 0 {
            return None;
        }
        let idx = (bit_index as u64).checked_sub(self.first_bit)?;
        self.symbols.get(idx as usize).map(|&s| f64::from(s))
    }
}

/// Per-PRN muted-sample counts from a synthesis pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthesisReport {
    pub muted_samples: BTreeMap<u8, u64>,
}

impl SynthesisReport {
    pub fn total_muted(&self) -> u64 {
        self.muted_samples.values().sum()
    }
}

/// Synthesize a baseband window from channel taps and per-PRN nav bits.
///
/// Each tap contributes a Doppler-rotated, code-phase-aligned BPSK C/A
/// signal at its stated power; `noise_density` adds complex AWGN with
/// per-sample variance `noise_density * sample_rate_hz` (so a 0 dB tap
/// sees C/N0 of `-10*log10(noise_density)` dB-Hz). Deterministic per
/// (inputs, seed).
pub fn synthesize_iq(
    taps: &[ChannelTap],
    nav_bits: &BTreeMap<u8, NavBitWindow>,
    start_sample_index: u64,
    num_samples: usize,
    sample_rate_hz: f64,
    noise_density: f64,
    seed: u64,
) -> Result<(IQFrame, SynthesisReport), SignalError> {
    if sample_rate_hz < 1.0e6 {
        return Err(SignalError::InvalidArgument(format!(
            "sample_rate_hz {sample_rate_hz} below 1 MS/s"
        )));
    }
    let mut frame = IQFrame::zeroed(start_sample_index, sample_rate_hz, num_samples);
    let mut report = SynthesisReport::default();

    for tap in taps {
        let code = CaCode::new(tap.prn)?;
        let bits = nav_bits
            .get(&tap.prn)
            .ok_or(SignalError::UnknownPrn(tap.prn))?;
        let muted = add_tap(&mut frame.samples, tap, &code, bits, start_sample_index, sample_rate_hz);
        if muted > 0 {
            *report.muted_samples.entry(tap.prn).or_insert(0) += muted;
        }
    }

    if noise_density > 0.0 {
        add_noise(
            &mut frame.samples,
            (noise_density * sample_rate_hz / 2.0).sqrt(),
            seed,
        );
    }
    Ok((frame, report))
}

fn add_tap(
    out: &mut [Complex64],
    tap: &ChannelTap,
    code: &CaCode,
    bits: &NavBitWindow,
    start_sample_index: u64,
    fs: f64,
) -> u64 {
    let amp = 10f64.powf(tap.power_db / 20.0);
    let t0 = start_sample_index as f64 / fs;
    let chip_rate = tap.chip_rate_hz();
    let cps = chip_rate / fs;

    let mut chip = tap.stream_chip_at(t0);
    let mut carrier = Complex64::from_polar(
        amp,
        tap.carrier_phase_rad + TAU * tap.doppler_hz * (t0 - tap.anchor_time_s),
    );
    let rot = Complex64::from_polar(1.0, TAU * tap.doppler_hz / fs);
    let chips = code.chips();

    // Current nav bit cached between bit boundaries.
    let mut bit_index = (chip / CHIPS_PER_BIT).floor() as i64;
    let mut bit_symbol = bits.symbol(bit_index);
    let mut next_boundary = (bit_index + 1) as f64 * CHIPS_PER_BIT;
    let mut muted = 0u64;

    // The baseband value of one stream chip position, or None before
    // stream start / outside the supplied bits.
    let value_at = |chip_idx: i64, bit_sym: Option<f64>| -> Option<f64> {
        if chip_idx < 0 {
            return None;
        }
        let sym = bit_sym?;
        Some(sym * f64::from(chips[(chip_idx % CODE_LEN as i64) as usize]))
    };

    for sample in out.iter_mut() {
        if chip >= next_boundary || chip < next_boundary - CHIPS_PER_BIT {
            bit_index = (chip / CHIPS_PER_BIT).floor() as i64;
            bit_symbol = bits.symbol(bit_index);
            next_boundary = (bit_index + 1) as f64 * CHIPS_PER_BIT;
        }
        // Band-limited chip edges: a sample spanning [chip, chip+cps)
        // takes the interval average of the chip waveform, so code
        // timing stays observable below the sample grid even at
        // commensurate sample rates.
        let left_idx = chip.floor() as i64;
        let frac = chip - left_idx as f64;
        let left = value_at(left_idx, bit_symbol);
        let crossing = frac + cps > 1.0;
        let value = if !crossing {
            left
        } else {
            let right_chip = left_idx + 1;
            let right_sym = if (right_chip as f64) >= next_boundary {
                bits.symbol(bit_index + 1)
            } else {
                bit_symbol
            };
            let right = value_at(right_chip, right_sym);
            let w = (frac + cps - 1.0) / cps;
            match (left, right) {
                (Some(l), Some(r)) => Some(l * (1.0 - w) + r * w),
                (Some(l), None) => Some(l * (1.0 - w)),
                (None, Some(r)) => Some(r * w),
                (None, None) => None,
            }
        };
        match value {
            Some(v) => *sample += carrier.scale(v),
            None => muted += 1,
        }
        carrier *= rot;
        chip += cps;
    }
    muted
}

fn add_noise(out: &mut [Complex64], sigma_per_component: f64, seed: u64) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_per_component).expect("finite sigma");
    for sample in out.iter_mut() {
        sample.re += normal.sample(&mut rng);
        sample.im += normal.sample(&mut rng);
    }
}

/// Wideband Gaussian jamming at the stated power relative to unit signal
/// scale. Deterministic per seed.
pub fn jam(duration_s: f64, sample_rate_hz: f64, power_db: f64, seed: u64) -> IQFrame {
    let n = (duration_s * sample_rate_hz).round() as usize;
    jam_window(0, n, sample_rate_hz, power_db, seed)
}

/// Jamming noise for an arbitrary sample window.
pub fn jam_window(
    start_sample_index: u64,
    num_samples: usize,
    sample_rate_hz: f64,
    power_db: f64,
    seed: u64,
) -> IQFrame {
    let mut frame = IQFrame::zeroed(start_sample_index, sample_rate_hz, num_samples);
    let sigma = (10f64.powf(power_db / 10.0) / 2.0).sqrt();
    add_noise(&mut frame.samples, sigma, seed);
    frame
}

/// Element-wise complex sum of aligned frames.
pub fn combine(frames: &[IQFrame]) -> Result<IQFrame, SignalError> {
    let first = frames
        .first()
        .ok_or_else(|| SignalError::InvalidArgument("combine of zero frames".into()))?;
    let mut out = first.clone();
    for frame in &frames[1..] {
        if frame.sample_rate_hz != out.sample_rate_hz {
            return Err(SignalError::SampleRateMismatch(
                frame.sample_rate_hz,
                out.sample_rate_hz,
            ));
        }
        if frame.start_sample_index != out.start_sample_index {
            return Err(SignalError::SampleIndexMismatch(
                frame.start_sample_index,
                out.start_sample_index,
            ));
        }
        if frame.len() != out.len() {
            return Err(SignalError::LengthMismatch(frame.len(), out.len()));
        }
        for (acc, s) in out.samples.iter_mut().zip(frame.samples.iter()) {
            *acc += s;
        }
    }
    Ok(out)
}
