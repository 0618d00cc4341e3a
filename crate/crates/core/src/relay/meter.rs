//! Windowed throughput accounting for the attacker-node link.

/// One metering window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputWindow {
    pub start_s: f64,
    /// On-wire bytes including frame headers.
    pub bytes: u64,
    pub bits_per_s: f64,
    /// Payload bytes excluding envelope framing.
    pub payload_bytes: u64,
}

/// Accumulates framed-byte counts into fixed windows.
#[derive(Debug, Clone)]
pub struct ThroughputMeter {
    window_s: f64,
    windows: std::collections::BTreeMap<i64, (u64, u64)>,
}

impl ThroughputMeter {
    pub fn new(window_s: f64) -> Self {
        assert!(window_s > 0.0, "window must be positive");
        Self { window_s, windows: Default::default() }
    }

    /// Record one frame sent at time `t_s`.
    pub fn record(&mut self, t_s: f64, wire_bytes: usize, payload_bytes: usize) {
        let idx = (t_s / self.window_s).floor() as i64;
        let e = self.windows.entry(idx).or_insert((0, 0));
        e.0 += wire_bytes as u64;
        e.1 += payload_bytes as u64;
    }

    /// Per-window series over [t_start, t_end), zero-filled where no
    /// traffic was recorded.
    pub fn series(&self, t_start: f64, t_end: f64) -> Vec<ThroughputWindow> {
        let first = (t_start / self.window_s).floor() as i64;
        let last = (t_end / self.window_s).ceil() as i64;
        (first..last)
            .map(|idx| {
                let (wire, payload) = self.windows.get(&idx).copied().unwrap_or((0, 0));
                ThroughputWindow {
                    start_s: idx as f64 * self.window_s,
                    bytes: wire,
                    bits_per_s: wire as f64 * 8.0 / self.window_s,
                    payload_bytes: payload,
                }
            })
            .collect()
    }

    pub fn peak_bits_per_s(&self) -> f64 {
        self.windows
            .values()
            .map(|(wire, _)| *wire as f64 * 8.0 / self.window_s)
            .fold(0.0, f64::max)
    }

    pub fn total_wire_bytes(&self) -> u64 {
        self.windows.values().map(|(w, _)| w).sum()
    }

    pub fn total_payload_bytes(&self) -> u64 {
        self.windows.values().map(|(_, p)| p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relay::{encode_envelope, RelayMessage};
    use crate::signal_relay::QuantizedChunk;

    #[test]
    fn iq_stream_at_1msps_is_32_mbps_payload() {
        // 1 MS/s of 16-bit I+Q is exactly 4,000,000 payload bytes/s.
        let mut meter = ThroughputMeter::new(1.0);
        let chunk_samples = 4096usize;
        let chunks_per_s = 1_000_000.0 / chunk_samples as f64;
        let chunk = QuantizedChunk {
            first_sample_index: 0,
            sample_rate_hz: 1_000_000,
            iq: vec![0i16; chunk_samples * 2],
        };
        let frame = encode_envelope(0, &RelayMessage::IqChunk(chunk.clone()));
        let mut t = 0.0;
        let mut sent = 0usize;
        while t < 1.0 {
            meter.record(t, frame.len(), chunk.payload_bytes());
            sent += 1;
            t += 1.0 / chunks_per_s;
        }
        let payload_rate = meter.total_payload_bytes() as f64;
        let expected = sent as f64 * chunk_samples as f64 * 4.0;
        assert_eq!(payload_rate, expected);
        // One second's worth of chunks carries 4e6 payload bytes = 32 Mb/s.
        assert!((payload_rate - 4_000_000.0).abs() / 4_000_000.0 < 0.02);
        // Envelope framing stays under 2% overhead at this chunk size.
        let overhead = meter.total_wire_bytes() as f64 / payload_rate - 1.0;
        assert!(overhead < 0.02, "framing overhead {overhead}");
    }

    #[test]
    fn empty_stream_gives_zero_series() {
        let meter = ThroughputMeter::new(0.5);
        let series = meter.series(0.0, 2.0);
        assert_eq!(series.len(), 4);
        assert!(series.iter().all(|w| w.bytes == 0 && w.bits_per_s == 0.0));
    }

    #[test]
    fn windows_partition_traffic() {
        let mut meter = ThroughputMeter::new(1.0);
        meter.record(0.2, 100, 80);
        meter.record(0.9, 100, 80);
        meter.record(1.1, 300, 250);
        let series = meter.series(0.0, 2.0);
        assert_eq!(series[0].bytes, 200);
        assert_eq!(series[1].bytes, 300);
        assert_eq!(series[0].bits_per_s, 1600.0);
        assert_eq!(meter.peak_bits_per_s(), 2400.0);
    }
}
