//! Closed-loop code/carrier tracking: non-coherent early-minus-late DLL
//! (0.5-chip spacing) with carrier aiding, Costas PLL, bit and frame
//! synchronization, and C/N0 estimation.
//!
//! Each `track_step` integrates exactly one code period; the consumed
//! sample count varies with the tracked code rate so integration stays
//! aligned to code-period boundaries. Stream position is counted in
//! nominal stream chips (1023 per period), anchored to absolute stream
//! bits at frame sync, which is what pseudoranges are formed from.

use super::acquire::AcquisitionResult;
use super::nav_decode::{frame_sync, quick_sync, FrameAlignment};
use crate::signal::{CaCode, NavSubframe};
use crate::{BITS_PER_SUBFRAME, CHIP_RATE_HZ, CODE_LEN, CODE_PERIODS_PER_BIT, L1_HZ, WORDS_PER_SUBFRAME};
use num_complex::Complex64;
use std::collections::VecDeque;
use std::f64::consts::TAU;

/// Early/prompt/late correlator outputs of one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlators {
    pub early: Complex64,
    pub prompt: Complex64,
    pub late: Complex64,
}

/// Per-stage lock indicators. Frame lock implies bit lock implies code
/// lock within a lock episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LockFlags {
    pub code: bool,
    pub carrier: bool,
    pub bit: bool,
    pub frame: bool,
}

/// A 30-bit navigation word recovered from a frame-locked channel, in
/// transmitted form, tagged with its absolute stream bit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NavWordEvent {
    pub prn: u8,
    pub stream_bit_index: u64,
    /// The 30 bits, MSB first in the low 30 bits.
    pub bits: u32,
}

/// Tracking loop parameters.
#[derive(Debug, Clone, Copy)]
pub struct TrackingConfig {
    pub dll_bandwidth_hz: f64,
    pub pll_bandwidth_hz: f64,
    /// Prompt power under this multiple of the correlation noise floor
    /// counts as a low-power period.
    pub loss_floor_ratio: f64,
    /// Consecutive low-power periods that clear code lock.
    pub loss_periods: u32,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            dll_bandwidth_hz: 2.0,
            pll_bandwidth_hz: 15.0,
            loss_floor_ratio: 2.0,
            loss_periods: 200,
        }
    }
}

/// Second-order PI loop filter.
#[derive(Debug, Clone, Copy)]
struct LoopFilter {
    kp: f64,
    ki: f64,
    integ: f64,
}

impl LoopFilter {
    fn new(bandwidth_hz: f64, initial: f64) -> Self {
        let omega0 = bandwidth_hz / 0.53;
        Self { kp: 1.414 * omega0, ki: omega0 * omega0, integ: initial }
    }

    fn update(&mut self, error: f64, dt: f64) -> f64 {
        self.integ += self.ki * error * dt;
        self.integ + self.kp * error
    }
}

#[derive(Debug, Clone, Copy)]
struct StreamAnchor {
    /// Completed-period count at the anchor instant.
    period: u64,
    /// Absolute stream chips at the start of that period.
    stream_chips: f64,
}

/// One satellite tracking channel. Single-owner mutable state; distinct
/// channels may advance independently.
#[derive(Debug, Clone)]
pub struct TrackingChannel {
    pub prn: u8,
    fs: f64,
    cfg: TrackingConfig,
    code: Vec<i8>,

    // NCO state
    code_phase_chips: f64,
    code_freq_hz: f64,
    carrier_phase_rad: f64,
    pub doppler_hz: f64,
    dll: LoopFilter,
    pll: LoopFilter,

    // Input
    fifo: VecDeque<Complex64>,
    next_sample_index: u64,

    // Stream position
    periods_done: u64,
    anchor: Option<StreamAnchor>,

    // Bit sync
    transition_hist: [u32; CODE_PERIODS_PER_BIT as usize],
    transitions_seen: u32,
    prev_prompt_i: f64,
    bit_boundary_mod: Option<u32>,
    bit_acc: Complex64,
    bit_acc_periods: u32,
    bit_acc_start_period: u64,

    // Demodulated bit decisions (+/-1) and the period each bit started at.
    bits: Vec<i8>,
    bit_start_periods: Vec<u64>,
    frame: Option<FrameAlignment>,
    scan_cursor: usize,
    emitted_words: usize,
    pending_words: Vec<NavWordEvent>,
    /// Rolling window of the last ten emitted words, for subframe
    /// validation independent of when `drain_nav` is called.
    recent_words: VecDeque<u32>,
    pending_subframes: Vec<NavSubframe>,

    // Quality estimation
    pub cn0_dbhz: f64,
    nwpr_nbp: Complex64,
    nwpr_wbp: f64,
    nwpr_count: u32,
    input_power_ema: f64,
    prompt_power_ema: f64,
    low_power_count: u32,
    pub lock: LockFlags,
}

impl TrackingChannel {
    /// Start a channel from an acquisition result. `start_sample_index`
    /// is the absolute index of the first sample that will be pushed,
    /// which must be the start of the frame the acquisition ran on.
    pub fn from_acquisition(
        acq: &AcquisitionResult,
        fs: f64,
        start_sample_index: u64,
        cfg: TrackingConfig,
    ) -> Self {
        let code = CaCode::new(acq.prn).expect("acquired PRN is valid");
        let aided = CHIP_RATE_HZ * (1.0 + acq.doppler_hz / L1_HZ);
        Self {
            prn: acq.prn,
            fs,
            cfg,
            code: code.chips().to_vec(),
            code_phase_chips: acq.code_phase_chips,
            code_freq_hz: aided,
            carrier_phase_rad: 0.0,
            doppler_hz: acq.doppler_hz,
            dll: LoopFilter::new(cfg.dll_bandwidth_hz, 0.0),
            pll: LoopFilter::new(cfg.pll_bandwidth_hz, TAU * acq.doppler_hz),
            fifo: VecDeque::new(),
            next_sample_index: start_sample_index,
            periods_done: 0,
            anchor: None,
            transition_hist: [0; CODE_PERIODS_PER_BIT as usize],
            transitions_seen: 0,
            prev_prompt_i: 0.0,
            bit_boundary_mod: None,
            bit_acc: Complex64::new(0.0, 0.0),
            bit_acc_periods: 0,
            bit_acc_start_period: 0,
            bits: Vec::new(),
            bit_start_periods: Vec::new(),
            frame: None,
            scan_cursor: 0,
            emitted_words: 0,
            pending_words: Vec::new(),
            recent_words: VecDeque::new(),
            pending_subframes: Vec::new(),
            cn0_dbhz: (acq.peak_metric * 1000.0).max(10.0).log10() * 10.0,
            nwpr_nbp: Complex64::new(0.0, 0.0),
            nwpr_wbp: 0.0,
            nwpr_count: 0,
            input_power_ema: 0.0,
            prompt_power_ema: 0.0,
            low_power_count: 0,
            lock: LockFlags { code: true, carrier: false, bit: false, frame: false },
        }
    }

    /// Feed contiguous samples. Panics on a gap in the sample index
    /// stream, which would silently corrupt stream-time bookkeeping.
    pub fn push_samples(&mut self, samples: &[Complex64], start_index: u64) {
        let expected = self.next_sample_index + self.fifo.len() as u64;
        assert_eq!(start_index, expected, "non-contiguous samples for PRN {}", self.prn);
        self.fifo.extend(samples.iter().copied());
    }

    fn block_size(&self) -> usize {
        let cps = self.code_freq_hz / self.fs;
        ((CODE_LEN as f64 - self.code_phase_chips) / cps).ceil().max(1.0) as usize
    }

    /// Whether enough samples are buffered for the next integration.
    pub fn ready(&self) -> bool {
        self.fifo.len() >= self.block_size()
    }

    /// Absolute index of the next sample the channel will consume.
    pub fn cursor(&self) -> u64 {
        self.next_sample_index
    }

    pub fn set_doppler(&mut self, doppler_hz: f64) {
        self.doppler_hz = doppler_hz;
        self.pll.integ = TAU * doppler_hz;
        self.code_freq_hz = CHIP_RATE_HZ * (1.0 + doppler_hz / L1_HZ);
    }

    /// Integrate one code period and update the loops.
    pub fn track_step(&mut self) -> Option<Correlators> {
        let blk = self.block_size();
        if self.fifo.len() < blk {
            return None;
        }
        let cps = self.code_freq_hz / self.fs;
        let carrier_step = TAU * self.doppler_hz / self.fs;
        let rot = Complex64::from_polar(1.0, -carrier_step);
        let mut phasor = Complex64::from_polar(1.0, -self.carrier_phase_rad);

        let mut early = Complex64::new(0.0, 0.0);
        let mut prompt = Complex64::new(0.0, 0.0);
        let mut late = Complex64::new(0.0, 0.0);
        let mut power = 0.0;
        let mut phase = self.code_phase_chips;
        let code_len = CODE_LEN as f64;

        let (a, b) = self.fifo.as_slices();
        let mut it = a.iter().chain(b.iter());
        for _ in 0..blk {
            let &s = it.next().expect("checked length");
            power += s.norm_sqr();
            let wiped = s * phasor;
            phasor *= rot;

            // Interval-averaged replicas: matched to the band-limited
            // chip waveform, so the discriminator keeps a usable slope
            // at sample rates commensurate with the chip rate.
            let c_p = crate::signal::averaged_chip(&self.code, phase + code_len, cps);
            let c_e = crate::signal::averaged_chip(&self.code, phase + code_len + 0.25, cps);
            let c_l = crate::signal::averaged_chip(&self.code, phase + code_len - 0.25, cps);
            prompt += wiped.scale(c_p);
            early += wiped.scale(c_e);
            late += wiped.scale(c_l);
            phase += cps;
        }
        self.fifo.drain(..blk);
        self.next_sample_index += blk as u64;
        self.carrier_phase_rad = (self.carrier_phase_rad + carrier_step * blk as f64) % TAU;
        self.code_phase_chips = phase - code_len;
        self.periods_done += 1;

        // Loop updates, one-period cadence.
        let dt = 1e-3;
        let e_mag = early.norm();
        let l_mag = late.norm();
        let dll_err = if e_mag + l_mag > 0.0 { 0.5 * (e_mag - l_mag) / (e_mag + l_mag) } else { 0.0 };
        let pll_err = if prompt.re.abs() > 0.0 { (prompt.im / prompt.re).atan() } else { 0.0 };
        let carrier_rad_s = self.pll.update(pll_err, dt);
        self.doppler_hz = carrier_rad_s / TAU;
        let code_corr = self.dll.update(dll_err, dt);
        self.code_freq_hz = CHIP_RATE_HZ * (1.0 + self.doppler_hz / L1_HZ) + code_corr;

        // Loss-of-lock rule: smoothed prompt power against the
        // correlation noise floor of the current input.
        let mean_power = power / blk as f64;
        self.input_power_ema = if self.input_power_ema == 0.0 {
            mean_power
        } else {
            0.95 * self.input_power_ema + 0.05 * mean_power
        };
        self.prompt_power_ema = if self.prompt_power_ema == 0.0 {
            prompt.norm_sqr()
        } else {
            0.9 * self.prompt_power_ema + 0.1 * prompt.norm_sqr()
        };
        let floor = blk as f64 * self.input_power_ema;
        if self.prompt_power_ema < self.cfg.loss_floor_ratio * floor {
            self.low_power_count += 1;
            if self.low_power_count >= self.cfg.loss_periods {
                self.lock = LockFlags::default();
            }
        } else {
            self.low_power_count = 0;
        }
        self.lock.carrier = self.lock.code && pll_err.abs() < 0.5;

        self.update_bit_sync(prompt);
        self.update_cn0(prompt);

        Some(Correlators { early, prompt, late })
    }

    fn update_bit_sync(&mut self, prompt: Complex64) {
        let period = self.periods_done - 1; // period just completed
        let m = CODE_PERIODS_PER_BIT as u64;
        if self.bit_boundary_mod.is_none() {
            if self.prev_prompt_i != 0.0 && prompt.re.signum() != self.prev_prompt_i.signum() {
                self.transition_hist[(period % m) as usize] += 1;
                self.transitions_seen += 1;
            }
            self.prev_prompt_i = prompt.re;
            if self.transitions_seen >= 16 {
                let (best, &count) = self
                    .transition_hist
                    .iter()
                    .enumerate()
                    .max_by_key(|(_, &c)| c)
                    .expect("non-empty");
                if f64::from(count) >= 0.75 * f64::from(self.transitions_seen) {
                    self.bit_boundary_mod = Some(best as u32);
                    self.lock.bit = true;
                } else {
                    // Ambiguous histogram; start over.
                    self.transition_hist = [0; CODE_PERIODS_PER_BIT as usize];
                    self.transitions_seen = 0;
                }
            }
            return;
        }

        let boundary = u64::from(self.bit_boundary_mod.unwrap());
        if period % m == boundary {
            self.bit_acc = Complex64::new(0.0, 0.0);
            self.bit_acc_periods = 0;
            self.bit_acc_start_period = period;
        }
        self.bit_acc += prompt;
        self.bit_acc_periods += 1;
        if self.bit_acc_periods == CODE_PERIODS_PER_BIT && period % m == (boundary + m - 1) % m {
            let decision: i8 = if self.bit_acc.re >= 0.0 { 1 } else { -1 };
            self.bits.push(decision);
            self.bit_start_periods.push(self.bit_acc_start_period);
            self.after_new_bit();
        }
    }

    fn after_new_bit(&mut self) {
        if self.frame.is_none() && self.bits.len() % 10 == 0 {
            // Warm path: anchor on preamble + two parity-valid words
            // with a plausible TOW. Falls back to locating a complete
            // subframe, which needs no time plausibility at all.
            let t_now = self.next_sample_index as f64 / self.fs;
            let align = quick_sync(&self.bits, self.scan_cursor, |tow| {
                let stream_t = f64::from(tow) * crate::SUBFRAME_DURATION_S;
                t_now - stream_t >= 0.0 && t_now - stream_t < 5.0
            })
            .or_else(|| {
                if self.bits.len() >= BITS_PER_SUBFRAME + 2 {
                    frame_sync(&self.bits, self.scan_cursor)
                } else {
                    None
                }
            });
            if let Some(align) = align {
                self.anchor = Some(StreamAnchor {
                    period: self.bit_start_periods[align.start_bit],
                    stream_chips: align.tow_count as f64
                        * f64::from(BITS_PER_SUBFRAME as u32)
                        * f64::from(CODE_PERIODS_PER_BIT)
                        * CODE_LEN as f64,
                });
                self.emitted_words = align.start_bit;
                self.lock.frame = true;
                self.frame = Some(align);
                // Avoid rescanning the prefix on a future re-sync.
                self.scan_cursor = align.start_bit;
            }
        }
        self.emit_completed_words();
    }

    fn emit_completed_words(&mut self) {
        let Some(frame) = self.frame else { return };
        while self.bits.len() >= self.emitted_words + 30 {
            let start = self.emitted_words;
            let mut word = 0u32;
            for k in 0..30 {
                let sym = self.bits[start + k];
                let bit = (sym < 0) != frame.inverted;
                word = (word << 1) | u32::from(bit);
            }
            let bits_from_sf = (start - frame.start_bit) as u64;
            let stream_bit = frame.tow_count as u64 * BITS_PER_SUBFRAME as u64 + bits_from_sf;
            self.pending_words.push(NavWordEvent {
                prn: self.prn,
                stream_bit_index: stream_bit,
                bits: word,
            });
            self.recent_words.push_back(word);
            if self.recent_words.len() > WORDS_PER_SUBFRAME {
                self.recent_words.pop_front();
            }
            self.emitted_words += 30;

            // Completed a subframe: validate and surface it.
            if bits_from_sf % BITS_PER_SUBFRAME as u64 == BITS_PER_SUBFRAME as u64 - 30 {
                self.try_decode_latest_subframe(start + 30);
            }
        }
    }

    fn try_decode_latest_subframe(&mut self, end_bit: usize) {
        let Some(frame) = self.frame else { return };
        if self.recent_words.len() < WORDS_PER_SUBFRAME {
            return;
        }
        let start = end_bit - BITS_PER_SUBFRAME;
        let words: Vec<u32> = self.recent_words.iter().copied().collect();
        let prior = if start >= 2 {
            let d29 = (self.bits[start - 2] < 0) != frame.inverted;
            let d30 = (self.bits[start - 1] < 0) != frame.inverted;
            (d29, d30)
        } else {
            (false, false)
        };
        let words: [u32; 10] = words.try_into().expect("ten words");
        if let Some(sf) = crate::signal::decode_subframe(&words, prior) {
            self.pending_subframes.push(sf);
        }
    }

    fn update_cn0(&mut self, prompt: Complex64) {
        if !self.lock.bit {
            return;
        }
        self.nwpr_nbp += prompt;
        self.nwpr_wbp += prompt.norm_sqr();
        self.nwpr_count += 1;
        if self.nwpr_count == CODE_PERIODS_PER_BIT {
            let m = f64::from(CODE_PERIODS_PER_BIT);
            let mu = self.nwpr_nbp.norm_sqr() / self.nwpr_wbp.max(1e-30) ;
            let ratio = ((mu - 1.0) / (m - mu)).max(1e-6);
            let est = 10.0 * (ratio / 1e-3).log10();
            self.cn0_dbhz = 0.9 * self.cn0_dbhz + 0.1 * est;
            self.nwpr_nbp = Complex64::new(0.0, 0.0);
            self.nwpr_wbp = 0.0;
            self.nwpr_count = 0;
        }
    }

    /// Drain navigation words and validated subframes produced since the
    /// last call.
    pub fn drain_nav(&mut self) -> (Vec<NavWordEvent>, Vec<NavSubframe>) {
        (
            std::mem::take(&mut self.pending_words),
            std::mem::take(&mut self.pending_subframes),
        )
    }

    /// Stream transmit time (seconds) of the signal at the channel
    /// cursor, available once frame-locked.
    pub fn transmit_time_s(&self) -> Option<f64> {
        let anchor = self.anchor.as_ref()?;
        let chips = anchor.stream_chips
            + (self.periods_done - anchor.period) as f64 * CODE_LEN as f64
            + self.code_phase_chips;
        Some(chips / CHIP_RATE_HZ)
    }

    /// Stream transmit time extrapolated to an absolute sample index at
    /// or after the cursor.
    pub fn transmit_time_at(&self, sample_index: u64) -> Option<f64> {
        let tau = self.transmit_time_s()?;
        let dt = (sample_index as f64 - self.next_sample_index as f64) / self.fs;
        Some(tau + dt * self.code_freq_hz / CHIP_RATE_HZ)
    }

    /// Demodulated bit decisions (+/-1) accumulated so far.
    pub fn bit_buffer(&self) -> &[i8] {
        &self.bits
    }

    pub fn code_phase_chips(&self) -> f64 {
        self.code_phase_chips
    }

    pub fn carrier_phase_rad(&self) -> f64 {
        self.carrier_phase_rad
    }

    pub fn code_freq_hz(&self) -> f64 {
        self.code_freq_hz
    }

    pub fn input_power(&self) -> f64 {
        self.input_power_ema
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize_iq, ChannelTap, EphemerisBlock, IQFrame, NavBitWindow, SatBitStream};
    use crate::signal::CircularOrbit;
    use std::collections::BTreeMap;

    fn run_channel(
        tap: ChannelTap,
        bits: BTreeMap<u8, NavBitWindow>,
        fs: f64,
        seconds: f64,
        noise_density: f64,
    ) -> TrackingChannel {
        let n = (fs * seconds) as usize;
        let (frame, _) = synthesize_iq(&[tap], &bits, 0, n, fs, noise_density, 3).unwrap();
        let mut acq = crate::receiver::Acquirer::new();
        let result = acq
            .acquire(&frame, tap.prn, &Default::default(), 12.0)
            .unwrap()
            .expect("acquired");
        let mut ch =
            TrackingChannel::from_acquisition(&result, fs, 0, TrackingConfig::default());
        ch.set_doppler(acq.refine_doppler(&frame, &result));
        ch.push_samples(&frame.samples, 0);
        while ch.track_step().is_some() {}
        ch
    }

    #[test]
    fn noiseless_static_signal_tracks_with_low_drift() {
        let fs = 2.048e6;
        let prn = 11;
        let mut bits = BTreeMap::new();
        bits.insert(prn, NavBitWindow::all_ones(0, 4000));
        let tap = ChannelTap::from_phase(prn, 217.25, 1200.0, 0.0);

        let n = (fs * 1.1) as usize; // ~1100 periods
        let (frame, _) = synthesize_iq(&[tap], &bits, 0, n, fs, 0.0, 0).unwrap();
        let mut acq = crate::receiver::Acquirer::new();
        let result = acq.acquire(&frame, prn, &Default::default(), 12.0).unwrap().unwrap();
        let mut ch = TrackingChannel::from_acquisition(&result, fs, 0, TrackingConfig::default());
        ch.set_doppler(acq.refine_doppler(&frame, &result));
        ch.push_samples(&frame.samples, 0);

        let mut phase_errors = Vec::new();
        while ch.track_step().is_some() {
            if ch.periods_done > 500 {
                // True code phase of the next input sample.
                let t = ch.next_sample_index as f64 / fs;
                let truth = tap.stream_chip_at(t).rem_euclid(1023.0);
                let mut err = ch.code_phase_chips - truth;
                if err > 511.5 {
                    err -= 1023.0;
                }
                if err < -511.5 {
                    err += 1023.0;
                }
                phase_errors.push(err);
            }
        }
        assert!(ch.lock.code);
        assert!(ch.periods_done >= 1000);
        // Settled accuracy and stability over the final 600 periods.
        let max_abs = phase_errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        assert!(max_abs < 0.02, "settled code phase error {max_abs} chips");
        let drift = phase_errors.iter().fold(f64::MIN, |m, &e| m.max(e))
            - phase_errors.iter().fold(f64::MAX, |m, &e| m.min(e));
        assert!(drift < 0.01, "code phase drift {drift} chips over tail");
        assert!((ch.doppler_hz - 1200.0).abs() < 2.0, "doppler {}", ch.doppler_hz);
    }

    #[test]
    fn pure_noise_clears_code_lock_within_timeout() {
        let fs = 1.023e6;
        let prn = 2;
        let mut bits = BTreeMap::new();
        bits.insert(prn, NavBitWindow::all_ones(0, 200));
        let tap = ChannelTap::from_phase(prn, 0.0, 0.0, 0.0);
        // 0.2 s of signal to acquire, then 0.3 s of pure noise.
        let n_sig = (fs * 0.2) as usize;
        let (sig, _) = synthesize_iq(&[tap], &bits, 0, n_sig, fs, 0.0, 0).unwrap();
        let noise = crate::signal::jam_window(n_sig as u64, (fs * 0.3) as usize, fs, 0.0, 5);

        let mut acq = crate::receiver::Acquirer::new();
        let result = acq.acquire(&sig, prn, &Default::default(), 12.0).unwrap().unwrap();
        let mut ch = TrackingChannel::from_acquisition(&result, fs, 0, TrackingConfig::default());
        ch.push_samples(&sig.samples, 0);
        while ch.track_step().is_some() {}
        assert!(ch.lock.code, "locked during signal");
        ch.push_samples(&noise.samples, n_sig as u64);
        while ch.track_step().is_some() {}
        assert!(!ch.lock.code, "code lock must clear on sustained noise");
    }

    #[test]
    fn cn0_estimate_within_3db_after_1s() {
        let fs = 2.048e6;
        let prn = 21;
        // Real nav bits so sign transitions exist for bit sync.
        let orbit = CircularOrbit {
            radius_m: 26_559_800.0,
            inclination_rad: 0.96,
            raan_rad: 0.3,
            anomaly0_rad: 2.0,
            angular_rate_rad_s: 1.4585e-4,
        };
        let stream = SatBitStream::new(prn, &EphemerisBlock::from_orbit(&orbit), 7).unwrap();
        let mut bits = BTreeMap::new();
        bits.insert(prn, NavBitWindow::new(0, stream.symbols(0, 200)));
        let tap = ChannelTap::from_phase(prn, 512.0, -800.0, 0.0);
        let ch = run_channel(tap, bits, fs, 1.5, 10f64.powf(-4.5));
        assert!(ch.lock.bit, "bit sync expected");
        assert!(
            (ch.cn0_dbhz - 45.0).abs() <= 3.0,
            "C/N0 estimate {} dB-Hz, truth 45",
            ch.cn0_dbhz
        );
    }

    #[test]
    fn frame_sync_recovers_words_and_transmit_time() {
        let fs = 2.048e6;
        let prn = 6;
        let orbit = CircularOrbit {
            radius_m: 26_559_800.0,
            inclination_rad: 0.9,
            raan_rad: 1.0,
            anomaly0_rad: 0.5,
            angular_rate_rad_s: 1.4585e-4,
        };
        let stream = SatBitStream::new(prn, &EphemerisBlock::from_orbit(&orbit), 42).unwrap();
        let mut bits = BTreeMap::new();
        bits.insert(prn, NavBitWindow::new(0, stream.symbols(0, 800)));
        // 40 ms delay puts the signal mid-subframe 0 when tracking starts.
        let delay = 0.040;
        let tap = ChannelTap::from_delay(prn, delay, 500.0, 0.0, 0.0);

        // Bit decisions start flowing ~1.2 s in (mid-subframe), so the
        // first complete buffered subframe ends near stream bit 600.
        let seconds = 13.5;
        let n = (fs * seconds) as usize;
        let (frame, _) = synthesize_iq(&[tap], &bits, 0, n, fs, 0.0, 1).unwrap();
        // Acquire past the muted leading samples (signal arrives at
        // `delay`), as the block pipeline would.
        let k0 = (fs * 0.1) as usize;
        let acq_frame = IQFrame {
            start_sample_index: k0 as u64,
            sample_rate_hz: fs,
            samples: frame.samples[k0..k0 + (fs * 0.02) as usize].to_vec(),
        };
        let mut acq = crate::receiver::Acquirer::new();
        let result = acq.acquire(&acq_frame, prn, &Default::default(), 12.0).unwrap().unwrap();
        let mut ch =
            TrackingChannel::from_acquisition(&result, fs, k0 as u64, TrackingConfig::default());
        ch.set_doppler(acq.refine_doppler(&acq_frame, &result));
        ch.push_samples(&frame.samples[k0..], k0 as u64);
        while ch.track_step().is_some() {}

        assert!(ch.lock.frame, "frame sync expected");
        let (words, subframes) = ch.drain_nav();
        assert!(!subframes.is_empty(), "at least one subframe decoded");
        for sf in &subframes {
            assert_eq!(sf.prn, prn);
        }
        // Words must be the exact transmitted bits at their stream index.
        for w in &words {
            for k in 0..30 {
                let bit = (w.bits >> (29 - k)) & 1;
                assert_eq!(
                    bit,
                    u32::from(stream.bit(w.stream_bit_index + k as u64)),
                    "word at stream bit {}",
                    w.stream_bit_index
                );
            }
        }
        // Transmit time must reflect the injected delay.
        let tau = ch.transmit_time_s().unwrap();
        let t_rx = ch.cursor() as f64 / fs;
        let measured_delay = t_rx - tau;
        assert!(
            (measured_delay - delay).abs() < 1e-4,
            "measured delay {measured_delay}, expected {delay}"
        );
    }
}
