//! Simulated reliable ordered byte link with a rate cap, fixed latency
//! and outage windows. Models the ARX->ATX transport in simulated time:
//! sends serialize FIFO through the capped pipe, so a producer faster
//! than the cap accumulates unbounded lag exactly like a TCP socket
//! whose reader cannot keep up.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// On-wire rate cap in bits/s; `None` means uncapped.
    pub rate_cap_bps: Option<f64>,
    /// One-way latency added after serialization, seconds.
    pub latency_s: f64,
    /// Outage windows (start_s, end_s) during which nothing is
    /// transmitted; transfers pause and resume.
    pub outages: Vec<(f64, f64)>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { rate_cap_bps: None, latency_s: 0.02, outages: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct SimLink {
    cfg: LinkConfig,
    busy_until_s: f64,
    bytes_sent: u64,
}

impl SimLink {
    pub fn new(cfg: LinkConfig) -> Self {
        Self { cfg, busy_until_s: 0.0, bytes_sent: 0 }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    /// Queue `bytes` for transmission at `t_send_s`; returns the
    /// arrival time at the far end.
    pub fn send(&mut self, t_send_s: f64, bytes: usize) -> f64 {
        let start = self.busy_until_s.max(t_send_s);
        let end = match self.cfg.rate_cap_bps {
            None => self.skip_outages(start),
            Some(rate) => self.transmit_through_outages(start, bytes as f64 * 8.0 / rate),
        };
        self.busy_until_s = end;
        self.bytes_sent += bytes as u64;
        end + self.cfg.latency_s
    }

    /// Earliest instant at or after `t` outside every outage window.
    fn skip_outages(&self, t: f64) -> f64 {
        let mut t = t;
        for &(start, end) in &self.cfg.outages {
            if t >= start && t < end {
                t = end;
            }
        }
        t
    }

    /// Advance a transfer needing `duration` seconds of link time,
    /// pausing across outages.
    fn transmit_through_outages(&self, start: f64, duration: f64) -> f64 {
        let mut t = self.skip_outages(start);
        let mut remaining = duration;
        loop {
            // Next outage that begins after t.
            let next = self
                .cfg
                .outages
                .iter()
                .filter(|(s, e)| *s > t && *e > *s)
                .map(|&(s, e)| (s, e))
                .fold(None::<(f64, f64)>, |acc, w| match acc {
                    Some(best) if best.0 <= w.0 => Some(best),
                    _ => Some(w),
                });
            match next {
                Some((outage_start, outage_end)) if t + remaining > outage_start => {
                    remaining -= outage_start - t;
                    t = self.skip_outages(outage_end);
                }
                _ => return t + remaining,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncapped_link_adds_only_latency() {
        let mut link = SimLink::new(LinkConfig {
            rate_cap_bps: None,
            latency_s: 0.05,
            outages: vec![],
        });
        assert_eq!(link.send(1.0, 1_000_000), 1.05);
        assert_eq!(link.send(2.0, 1), 2.05);
    }

    #[test]
    fn capped_link_serializes_fifo() {
        // 8 Mb/s: 1 MB takes exactly one second.
        let mut link = SimLink::new(LinkConfig {
            rate_cap_bps: Some(8e6),
            latency_s: 0.0,
            outages: vec![],
        });
        assert_eq!(link.send(0.0, 1_000_000), 1.0);
        // Queued behind the first transfer even though sent at 0.1.
        assert_eq!(link.send(0.1, 1_000_000), 2.0);
        // After the queue drains, sends start at their own time.
        assert_eq!(link.send(5.0, 500_000), 5.5);
    }

    #[test]
    fn outage_pauses_transfer() {
        let mut link = SimLink::new(LinkConfig {
            rate_cap_bps: Some(8e6),
            latency_s: 0.01,
            outages: vec![(0.5, 1.5)],
        });
        // Needs 1 s of link time starting at 0; pauses during [0.5,1.5).
        assert_eq!(link.send(0.0, 1_000_000), 2.0 + 0.01);
        // A send landing inside the outage waits for its end.
        let mut link2 = SimLink::new(LinkConfig {
            rate_cap_bps: Some(8e6),
            latency_s: 0.0,
            outages: vec![(0.5, 1.5)],
        });
        assert_eq!(link2.send(0.7, 100_000), 1.6);
    }

    #[test]
    fn sustained_overrate_accumulates_lag() {
        let mut link = SimLink::new(LinkConfig {
            rate_cap_bps: Some(8e6),
            latency_s: 0.0,
            outages: vec![],
        });
        // Producing 2 MB/s against an 1 MB/s pipe: arrival lag grows
        // linearly.
        let mut last_arrival = 0.0;
        for k in 0..10 {
            let t = k as f64 * 0.5;
            last_arrival = link.send(t, 1_000_000);
        }
        // 10 MB at 1 MB/s = 10 s of link time.
        assert_eq!(last_arrival, 10.0);
    }
}
