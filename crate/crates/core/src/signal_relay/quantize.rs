//! 16-bit IQ quantization for signal-level relaying.

use crate::signal::IQFrame;

/// A block of interleaved signed 16-bit I/Q values, the on-wire form of
/// signal-level relaying.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedChunk {
    pub first_sample_index: u64,
    pub sample_rate_hz: u32,
    /// Interleaved I, Q; always an even number of values.
    pub iq: Vec<i16>,
}

impl QuantizedChunk {
    pub fn sample_count(&self) -> usize {
        self.iq.len() / 2
    }

    /// Payload bytes of the sample data itself (16-bit I + 16-bit Q).
    pub fn payload_bytes(&self) -> usize {
        self.iq.len() * 2
    }
}

/// Round-to-nearest quantization with saturation at +/-32767. Returns
/// the chunk and the number of clipped components.
pub fn quantize(frame: &IQFrame, full_scale: f64) -> (QuantizedChunk, u64) {
    assert!(full_scale > 0.0, "full_scale must be positive");
    let mut clipped = 0u64;
    let mut iq = Vec::with_capacity(frame.samples.len() * 2);
    let mut push = |v: f64| {
        let scaled = (v / full_scale * 32767.0).round();
        if scaled > 32767.0 {
            clipped += 1;
            iq.push(32767i16);
        } else if scaled < -32767.0 {
            clipped += 1;
            iq.push(-32767i16);
        } else {
            iq.push(scaled as i16);
        }
    };
    for s in &frame.samples {
        push(s.re);
        push(s.im);
    }
    (
        QuantizedChunk {
            first_sample_index: frame.start_sample_index,
            sample_rate_hz: frame.sample_rate_hz.round() as u32,
            iq,
        },
        clipped,
    )
}

/// Inverse of [`quantize`].
pub fn dequantize(chunk: &QuantizedChunk, full_scale: f64) -> IQFrame {
    let samples = chunk
        .iq
        .chunks_exact(2)
        .map(|p| {
            num_complex::Complex64::new(
                f64::from(p[0]) / 32767.0 * full_scale,
                f64::from(p[1]) / 32767.0 * full_scale,
            )
        })
        .collect();
    IQFrame {
        start_sample_index: chunk.first_sample_index,
        sample_rate_hz: f64::from(chunk.sample_rate_hz),
        samples,
    }
}
