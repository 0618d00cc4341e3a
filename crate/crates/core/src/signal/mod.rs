//! Everything "in the sky": spreading codes, navigation data, satellite
//! geometry and baseband IQ synthesis.
//!
//! All generators are pure functions of their inputs (and an explicit
//! seed where randomness is involved); values are immutable after
//! construction and safe to hand between concurrent pipeline stages.

mod ca_code;
mod nav;
mod orbit;
mod synth;

pub use ca_code::{averaged_chip, CaCode};
pub use nav::{
    check_word, compute_parity, decode_subframe, encode_subframe, encode_word, source_bits,
    EphemerisBlock, NavError, NavSubframe, SatBitStream, AUTH_BITS_LEN, PAYLOAD_BITS_LEN,
};
pub use orbit::{CircularOrbit, SatelliteDef};
pub use synth::{combine, jam, jam_window, synthesize_iq, ChannelTap, NavBitWindow, SynthesisReport};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("PRN {0} out of range 1..=32")]
    InvalidPrn(u8),
    #[error("no nav bits supplied for PRN {0}")]
    UnknownPrn(u8),
    #[error("sample rate mismatch: {0} vs {1}")]
    SampleRateMismatch(f64, f64),
    #[error("sample index mismatch: {0} vs {1}")]
    SampleIndexMismatch(u64, u64),
    #[error("frame length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A timestamped block of complex baseband samples.
///
/// Consecutive frames from one source have contiguous sample indices;
/// `start_sample_index / sample_rate_hz` is the absolute simulation time
/// of the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IQFrame {
    pub start_sample_index: u64,
    pub sample_rate_hz: f64,
    pub samples: Vec<Complex64>,
}

impl IQFrame {
    pub fn zeroed(start_sample_index: u64, sample_rate_hz: f64, len: usize) -> Self {
        Self {
            start_sample_index,
            sample_rate_hz,
            samples: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Absolute time of the first sample, seconds.
    pub fn start_time_s(&self) -> f64 {
        self.start_sample_index as f64 / self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean per-sample power.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}
