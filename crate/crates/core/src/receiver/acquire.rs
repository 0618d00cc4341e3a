//! FFT-based parallel code-phase acquisition over a Doppler grid.

use super::ReceiverError;
use crate::signal::{CaCode, IQFrame};
use crate::{CHIP_RATE_HZ, CODE_LEN};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// Doppler search grid in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerGrid {
    pub min_hz: f64,
    pub max_hz: f64,
    pub step_hz: f64,
}

impl Default for DopplerGrid {
    fn default() -> Self {
        Self { min_hz: -5000.0, max_hz: 5000.0, step_hz: 250.0 }
    }
}

impl DopplerGrid {
    pub fn bins(&self) -> impl Iterator<Item = f64> + '_ {
        let n = ((self.max_hz - self.min_hz) / self.step_hz).round() as usize;
        (0..=n).map(move |k| self.min_hz + k as f64 * self.step_hz)
    }
}

/// Result of a successful acquisition search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionResult {
    pub prn: u8,
    pub doppler_hz: f64,
    /// Code phase of the signal at the first sample of the searched
    /// frame, chips in [0, 1023).
    pub code_phase_chips: f64,
    /// Peak power over mean cell power across the whole search space.
    pub peak_metric: f64,
}

/// Reusable acquisition engine (caches FFT plans).
pub struct Acquirer {
    planner: FftPlanner<f64>,
}

impl Default for Acquirer {
    fn default() -> Self {
        Self::new()
    }
}

impl Acquirer {
    pub fn new() -> Self {
        Self { planner: FftPlanner::new() }
    }

    /// Search one PRN over the Doppler grid using two code periods,
    /// summed non-coherently. Returns `None` when the peak metric stays
    /// below `threshold`.
    pub fn acquire(
        &mut self,
        iq: &IQFrame,
        prn: u8,
        grid: &DopplerGrid,
        threshold: f64,
    ) -> Result<Option<AcquisitionResult>, ReceiverError> {
        if grid.step_hz > 500.0 || grid.step_hz <= 0.0 {
            return Err(ReceiverError::InvalidArgument(format!(
                "doppler step {} outside (0, 500] Hz",
                grid.step_hz
            )));
        }
        let fs = iq.sample_rate_hz;
        let n = (fs * 1e-3).round() as usize;
        if iq.len() < 2 * n {
            return Err(ReceiverError::InvalidArgument(format!(
                "acquisition needs at least two code periods ({} samples), got {}",
                2 * n,
                iq.len()
            )));
        }

        let code = CaCode::new(prn)?;
        let fft = self.planner.plan_fft_forward(n);
        let ifft = self.planner.plan_fft_inverse(n);

        // Reference code spectrum, conjugated; interval-averaged chips
        // match the band-limited timing of the incoming samples.
        let chips_per_sample = CHIP_RATE_HZ / fs;
        let mut ref_fd: Vec<Complex64> = (0..n)
            .map(|i| {
                let v = code.averaged_chip(i as f64 * chips_per_sample, chips_per_sample);
                Complex64::new(v, 0.0)
            })
            .collect();
        fft.process(&mut ref_fd);
        for v in ref_fd.iter_mut() {
            *v = v.conj();
        }

        let mut best = (0.0f64, 0usize, 0.0f64); // power, lag, doppler
        let mut total_power = 0.0f64;
        let mut cells = 0usize;
        let mut power = vec![0.0f64; n];
        for doppler in grid.bins() {
            power.iter_mut().for_each(|p| *p = 0.0);
            for period in 0..2 {
                let mut buf: Vec<Complex64> = wipe(
                    &iq.samples[period * n..(period + 1) * n],
                    doppler,
                    fs,
                    period * n,
                );
                fft.process(&mut buf);
                for (b, r) in buf.iter_mut().zip(ref_fd.iter()) {
                    *b *= r;
                }
                ifft.process(&mut buf);
                for (p, v) in power.iter_mut().zip(buf.iter()) {
                    *p += v.norm_sqr();
                }
            }
            for (lag, &p) in power.iter().enumerate() {
                total_power += p;
                cells += 1;
                if p > best.0 {
                    best = (p, lag, doppler);
                }
            }
        }

        let mean = total_power / cells as f64;
        let metric = best.0 / mean;
        if !(metric >= threshold) {
            // Below threshold, or NaN from an all-zero window.
            return Ok(None);
        }
        let code_phase = (-(best.1 as f64) * chips_per_sample).rem_euclid(CODE_LEN as f64);
        Ok(Some(AcquisitionResult {
            prn,
            doppler_hz: best.2,
            code_phase_chips: code_phase,
            peak_metric: metric,
        }))
    }

    /// Refine the Doppler estimate to a few Hz from the phase slope of
    /// consecutive prompt correlations. BPSK sign flips are removed by
    /// squaring; the acquired estimate must already be within a quarter
    /// of the period rate (+-250 Hz at 1 ms), which the grid guarantees.
    pub fn refine_doppler(&mut self, iq: &IQFrame, acq: &AcquisitionResult) -> f64 {
        let fs = iq.sample_rate_hz;
        let n = (fs * 1e-3).round() as usize;
        let periods = (iq.len() / n).min(10);
        if periods < 3 {
            return acq.doppler_hz;
        }
        let code = match CaCode::new(acq.prn) {
            Ok(c) => c,
            Err(_) => return acq.doppler_hz,
        };
        let chip_rate = CHIP_RATE_HZ * (1.0 + acq.doppler_hz / crate::L1_HZ);
        let cps = chip_rate / fs;
        let mut prompts = Vec::with_capacity(periods);
        for p in 0..periods {
            let mut acc = Complex64::new(0.0, 0.0);
            let base = p * n;
            for i in 0..n {
                let idx = base + i;
                let chip = (acq.code_phase_chips + idx as f64 * cps).floor() as i64;
                let c = f64::from(code.chip(chip));
                let w = Complex64::from_polar(1.0, -TAU * acq.doppler_hz * idx as f64 / fs);
                acc += iq.samples[idx] * w * c;
            }
            prompts.push(acc);
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..prompts.len() - 1 {
            let d = prompts[k + 1] * prompts[k].conj();
            sum += d * d / (d.norm() + 1e-30);
        }
        let delta = sum.arg() / 2.0 / (TAU * 1e-3);
        acq.doppler_hz + delta
    }
}

fn wipe(samples: &[Complex64], doppler_hz: f64, fs: f64, offset: usize) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, -TAU * doppler_hz / fs);
    let mut phasor = Complex64::from_polar(1.0, -TAU * doppler_hz * offset as f64 / fs);
    samples
        .iter()
        .map(|&s| {
            let v = s * phasor;
            phasor *= rot;
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize_iq, ChannelTap, NavBitWindow};
    use std::collections::BTreeMap;

    fn synth_frame(prn: u8, code_phase: f64, doppler: f64, fs: f64, periods: usize) -> IQFrame {
        let mut bits = BTreeMap::new();
        bits.insert(prn, NavBitWindow::all_ones(0, 100));
        let tap = ChannelTap::from_phase(prn, code_phase, doppler, 0.0);
        let n = (fs * 1e-3).round() as usize * periods;
        synthesize_iq(&[tap], &bits, 0, n, fs, 0.0, 0).unwrap().0
    }

    #[test]
    fn acquires_synthesized_signal_within_tolerance() {
        let fs = 2.046e6;
        let frame = synth_frame(7, 512.0, 1000.0, fs, 2);
        let mut acq = Acquirer::new();
        let result = acq
            .acquire(&frame, 7, &DopplerGrid::default(), 12.0)
            .unwrap()
            .expect("signal present");
        assert_eq!(result.prn, 7);
        assert!((result.doppler_hz - 1000.0).abs() <= 250.0, "{}", result.doppler_hz);
        let phase_err = (result.code_phase_chips - 512.0).abs();
        let phase_err = phase_err.min(1023.0 - phase_err);
        assert!(phase_err <= 0.5, "phase err {phase_err}");
        assert!(result.peak_metric >= 12.0);
    }

    #[test]
    fn acquisition_at_1msps_paper_rate() {
        let fs = 1.0e6;
        let frame = synth_frame(3, 100.25, -2500.0, fs, 2);
        let mut acq = Acquirer::new();
        let result = acq
            .acquire(&frame, 3, &DopplerGrid::default(), 12.0)
            .unwrap()
            .expect("signal present");
        assert!((result.doppler_hz + 2500.0).abs() <= 250.0);
        let phase_err = (result.code_phase_chips - 100.25).abs();
        let phase_err = phase_err.min(1023.0 - phase_err);
        assert!(phase_err <= 0.6, "phase err {phase_err}");
    }

    #[test]
    fn absent_prn_not_found() {
        // Thermal noise at 45 dB-Hz; without it the cross-correlation
        // floor itself would stand out against an exactly-zero floor.
        let fs = 2.046e6;
        let mut bits = BTreeMap::new();
        bits.insert(7u8, NavBitWindow::all_ones(0, 100));
        let tap = ChannelTap::from_phase(7, 512.0, 1000.0, 0.0);
        let n = 2 * (fs * 1e-3) as usize;
        let (frame, _) = synthesize_iq(&[tap], &bits, 0, n, fs, 10f64.powf(-4.5), 4).unwrap();
        let mut acq = Acquirer::new();
        let result = acq.acquire(&frame, 8, &DopplerGrid::default(), 12.0).unwrap();
        assert!(result.is_none());
        // The present PRN is still found through the same noise.
        assert!(acq.acquire(&frame, 7, &DopplerGrid::default(), 12.0).unwrap().is_some());
    }

    #[test]
    fn acquisition_is_deterministic() {
        let fs = 2.046e6;
        let mut bits = BTreeMap::new();
        bits.insert(5u8, NavBitWindow::all_ones(0, 100));
        let tap = ChannelTap::from_phase(5, 31.5, 750.0, 0.0);
        let n = 2 * 2046;
        let (frame, _) = synthesize_iq(&[tap], &bits, 0, n, fs, 10f64.powf(-4.5), 9).unwrap();
        let mut acq = Acquirer::new();
        let a = acq.acquire(&frame, 5, &DopplerGrid::default(), 12.0).unwrap();
        let b = acq.acquire(&frame, 5, &DopplerGrid::default(), 12.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_input_rejected() {
        let frame = IQFrame::zeroed(0, 2.046e6, 100);
        let mut acq = Acquirer::new();
        assert!(acq.acquire(&frame, 1, &DopplerGrid::default(), 12.0).is_err());
    }

    #[test]
    fn coarse_step_rejected() {
        let frame = IQFrame::zeroed(0, 2.046e6, 8192);
        let grid = DopplerGrid { min_hz: -5000.0, max_hz: 5000.0, step_hz: 600.0 };
        let mut acq = Acquirer::new();
        assert!(acq.acquire(&frame, 1, &grid, 12.0).is_err());
    }

    #[test]
    fn refine_doppler_converges_to_few_hz() {
        let fs = 2.046e6;
        let frame = synth_frame(9, 300.0, 1083.0, fs, 10);
        let mut acq = Acquirer::new();
        let coarse = acq
            .acquire(&frame, 9, &DopplerGrid::default(), 12.0)
            .unwrap()
            .unwrap();
        let fine = acq.refine_doppler(&frame, &coarse);
        assert!((fine - 1083.0).abs() < 5.0, "fine {fine}");
    }
}
