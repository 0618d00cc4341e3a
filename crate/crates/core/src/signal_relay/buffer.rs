//! ATX-side replay buffering: samples play out in source order on the
//! simulated clock; when the transport cannot keep the buffer fed, the
//! output has gaps and the replayed stream falls behind real time,
//! which is what turns an under-provisioned relay into a jammer.

use super::quantize::QuantizedChunk;
use crate::signal::IQFrame;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferPolicy {
    /// Play samples as soon as they arrive; transport jitter shows up
    /// directly as gaps.
    MinimalLatency,
    /// Hold playback until half the buffer is filled, trading a fixed
    /// added latency for jitter immunity.
    RateConstant,
}

/// A contiguous run of output samples with no data available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapRange {
    pub start_index: u64,
    /// Exclusive.
    pub end_index: u64,
}

impl GapRange {
    pub fn len(&self) -> u64 {
        self.end_index - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.start_index == self.end_index
    }
}

#[derive(Debug, Clone)]
struct ArrivedChunk {
    arrival_s: f64,
    samples: VecDeque<(i16, i16)>,
}

/// One-producer, one-consumer replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    policy: BufferPolicy,
    capacity_samples: usize,
    /// Arrived but not yet admitted (capacity backpressure).
    pending: VecDeque<ArrivedChunk>,
    /// Admitted, unplayed samples.
    queue: VecDeque<ArrivedChunk>,
    fill: usize,
    started: bool,
    underruns: u64,
    gaps: Vec<GapRange>,
    in_gap: bool,
    played_samples: u64,
    played_power_ema: f64,
}

impl ReplayBuffer {
    pub fn new(policy: BufferPolicy, capacity_samples: usize) -> Self {
        Self {
            policy,
            capacity_samples,
            pending: VecDeque::new(),
            queue: VecDeque::new(),
            fill: 0,
            started: false,
            underruns: 0,
            gaps: Vec::new(),
            in_gap: false,
            played_samples: 0,
            played_power_ema: 0.0,
        }
    }

    /// Hand a received chunk to the buffer with its arrival time.
    pub fn push_chunk(&mut self, arrival_s: f64, chunk: &QuantizedChunk) {
        let samples: VecDeque<(i16, i16)> =
            chunk.iq.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        self.pending.push_back(ArrivedChunk { arrival_s, samples });
    }

    fn admit_until(&mut self, t_s: f64) {
        while let Some(head) = self.pending.front() {
            if head.arrival_s > t_s || self.fill + head.samples.len() > self.capacity_samples {
                break;
            }
            let chunk = self.pending.pop_front().expect("checked front");
            self.fill += chunk.samples.len();
            self.queue.push_back(chunk);
        }
    }

    /// Emit `num_samples` starting at absolute output sample index
    /// `start_index`; gap samples come out as zeros and are logged.
    pub fn emit(
        &mut self,
        start_index: u64,
        num_samples: usize,
        sample_rate_hz: f64,
        full_scale: f64,
    ) -> IQFrame {
        let mut frame = IQFrame::zeroed(start_index, sample_rate_hz, num_samples);
        for k in 0..num_samples {
            let idx = start_index + k as u64;
            let t = idx as f64 / sample_rate_hz;
            self.admit_until(t);
            if !self.started {
                let target = match self.policy {
                    BufferPolicy::MinimalLatency => 1,
                    BufferPolicy::RateConstant => self.capacity_samples / 2,
                };
                if self.fill >= target {
                    self.started = true;
                }
            }
            let sample = if self.started { self.pop_sample() } else { None };
            match sample {
                Some((i, q)) => {
                    // Same arithmetic as `dequantize`, so both paths
                    // produce bit-identical samples.
                    let v = Complex64::new(
                        f64::from(i) / 32767.0 * full_scale,
                        f64::from(q) / 32767.0 * full_scale,
                    );
                    frame.samples[k] = v;
                    self.played_samples += 1;
                    self.played_power_ema = if self.played_power_ema == 0.0 {
                        v.norm_sqr()
                    } else {
                        0.999 * self.played_power_ema + 0.001 * v.norm_sqr()
                    };
                    self.close_gap(idx);
                }
                None => self.open_gap(idx),
            }
        }
        frame
    }

    fn pop_sample(&mut self) -> Option<(i16, i16)> {
        loop {
            let head = self.queue.front_mut()?;
            match head.samples.pop_front() {
                Some(s) => {
                    self.fill -= 1;
                    return Some(s);
                }
                None => {
                    self.queue.pop_front();
                }
            }
        }
    }

    fn open_gap(&mut self, idx: u64) {
        if self.in_gap {
            self.gaps.last_mut().expect("in_gap implies a gap").end_index = idx + 1;
        } else {
            self.in_gap = true;
            self.underruns += 1;
            self.gaps.push(GapRange { start_index: idx, end_index: idx + 1 });
        }
    }

    fn close_gap(&mut self, _idx: u64) {
        self.in_gap = false;
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn capacity(&self) -> usize {
        self.capacity_samples
    }

    pub fn underruns(&self) -> u64 {
        self.underruns
    }

    pub fn gaps(&self) -> &[GapRange] {
        &self.gaps
    }

    pub fn played_samples(&self) -> u64 {
        self.played_samples
    }

    /// Smoothed power of recently played samples, the reference level
    /// for noise gap filling.
    pub fn played_power(&self) -> f64 {
        self.played_power_ema
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFillMode {
    Silence,
    Noise,
}

/// Fill logged gaps in an emitted frame: silence leaves zeros, noise
/// inserts Gaussian samples at the last-seen signal power, modeling the
/// jamming effect of intermittent replay.
pub fn gap_fill(
    frame: &mut IQFrame,
    gaps: &[GapRange],
    mode: GapFillMode,
    signal_power: f64,
    seed: u64,
) {
    if mode == GapFillMode::Silence || signal_power <= 0.0 {
        return;
    }
    let sigma = (signal_power / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let frame_start = frame.start_sample_index;
    let frame_end = frame_start + frame.samples.len() as u64;
    for gap in gaps {
        let lo = gap.start_index.max(frame_start);
        let hi = gap.end_index.min(frame_end);
        if lo >= hi {
            continue;
        }
        // Seed per gap segment so filling is independent of emit block
        // boundaries.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ lo);
        for idx in lo..hi {
            let k = (idx - frame_start) as usize;
            frame.samples[k] =
                Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_relay::quantize;

    fn chunk_of(n: usize, value: i16, first: u64) -> QuantizedChunk {
        QuantizedChunk {
            first_sample_index: first,
            sample_rate_hz: 1_000_000,
            iq: vec![value; n * 2],
        }
    }

    #[test]
    fn continuous_feed_plays_gap_free() {
        let fs = 1.0e6;
        let mut buf = ReplayBuffer::new(BufferPolicy::MinimalLatency, 500_000);
        // Chunks of 1000 samples arriving ahead of playback.
        for k in 0..100u64 {
            buf.push_chunk(k as f64 * 0.001, &chunk_of(1000, 100, k * 1000));
        }
        let frame = buf.emit(1000, 90_000, fs, 1.0);
        assert_eq!(buf.underruns(), 0);
        assert!(frame.samples.iter().all(|s| s.re > 0.0));
        assert_eq!(buf.played_samples(), 90_000);
    }

    #[test]
    fn starved_buffer_logs_gaps_and_conserves_samples() {
        let fs = 1.0e6;
        let mut buf = ReplayBuffer::new(BufferPolicy::MinimalLatency, 500_000);
        // Two chunks with a hole between their arrival times.
        buf.push_chunk(0.0, &chunk_of(1000, 50, 0));
        buf.push_chunk(0.005, &chunk_of(1000, 50, 1000));
        let frame = buf.emit(0, 7000, fs, 1.0);
        // Playable: 1000 at t=0, then starvation until 5000, then 1000.
        assert_eq!(buf.played_samples(), 2000);
        assert_eq!(buf.underruns(), 2, "mid-stream gap and trailing gap");
        let gap_samples: u64 = buf.gaps().iter().map(|g| g.len()).sum();
        assert_eq!(gap_samples + buf.played_samples(), 7000);
        let zeros = frame.samples.iter().filter(|s| s.norm_sqr() == 0.0).count();
        assert_eq!(zeros as u64, gap_samples);
    }

    #[test]
    fn rate_constant_prefills_half_capacity() {
        let fs = 1.0e6;
        let mut buf = ReplayBuffer::new(BufferPolicy::RateConstant, 10_000);
        // All data arrives immediately, but below the prefill level
        // nothing plays.
        buf.push_chunk(0.0, &chunk_of(4000, 10, 0));
        let frame = buf.emit(0, 1000, fs, 1.0);
        assert!(frame.samples.iter().all(|s| s.norm_sqr() == 0.0));
        // Prefill reached: playback begins.
        buf.push_chunk(0.0011, &chunk_of(1500, 10, 4000));
        let frame = buf.emit(1000, 1000, fs, 1.0);
        assert!(frame.samples.iter().any(|s| s.norm_sqr() > 0.0));
    }

    #[test]
    fn capacity_backpressure_defers_admission() {
        let fs = 1.0e6;
        let mut buf = ReplayBuffer::new(BufferPolicy::MinimalLatency, 1500);
        buf.push_chunk(0.0, &chunk_of(1000, 10, 0));
        buf.push_chunk(0.0, &chunk_of(1000, 10, 1000));
        let _ = buf.emit(0, 100, fs, 1.0);
        // Second chunk exceeds capacity while the first is unplayed.
        assert!(buf.fill() <= 1500);
        let _ = buf.emit(100, 2000, fs, 1.0);
        assert_eq!(buf.played_samples(), 2000, "backpressured chunk admitted later");
    }

    #[test]
    fn noise_fill_matches_signal_power() {
        let fs = 1.0e6;
        let mut frame = IQFrame::zeroed(0, fs, 50_000);
        let gaps = [GapRange { start_index: 10_000, end_index: 40_000 }];
        gap_fill(&mut frame, &gaps, GapFillMode::Noise, 4.0, 9);
        let gap_power: f64 = frame.samples[10_000..40_000]
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            / 30_000.0;
        assert!((gap_power - 4.0).abs() / 4.0 < 0.05, "{gap_power}");
        assert!(frame.samples[..10_000].iter().all(|s| s.norm_sqr() == 0.0));
        // Silence mode leaves the frame untouched.
        let mut silent = IQFrame::zeroed(0, fs, 1000);
        gap_fill(&mut silent, &gaps, GapFillMode::Silence, 4.0, 9);
        assert!(silent.samples.iter().all(|s| s.norm_sqr() == 0.0));
    }

    #[test]
    fn quantize_dequantize_through_buffer_is_transparent() {
        let fs = 1.0e6;
        let mut source = IQFrame::zeroed(0, fs, 2048);
        for (i, s) in source.samples.iter_mut().enumerate() {
            *s = Complex64::new((i as f64 * 0.01).sin(), (i as f64 * 0.013).cos());
        }
        let full_scale = 2.0;
        let (chunk, _) = quantize(&source, full_scale);
        let mut buf = ReplayBuffer::new(BufferPolicy::MinimalLatency, 10_000);
        buf.push_chunk(0.0, &chunk);
        let out = buf.emit(0, 2048, fs, full_scale);
        let direct = crate::signal_relay::dequantize(&chunk, full_scale);
        assert_eq!(out.samples, direct.samples);
    }
}
