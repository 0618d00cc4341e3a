//! Desk-scale GNSS relay/replay attack test-bench.
//!
//! The crate simulates the full chain of a distributed GNSS meaconing
//! attack without any RF hardware: a synthetic GPS L1 C/A constellation,
//! an adversarial receiver (ARX) that extracts signal and message
//! parameters, a bit-exact relay wire protocol between attacker nodes,
//! adversarial transmitters (ATX) operating either on raw IQ samples or
//! on regenerated signals, and a victim receiver model with a lock-state
//! machine. Scenarios are driven by a simulated clock, so runs are
//! deterministic and complete in minutes.
//!
//! Module map:
//! - [`signal`]: C/A codes, LNAV-style navigation data, satellite
//!   geometry, baseband IQ synthesis, jamming, channel combination.
//! - [`receiver`]: acquisition, DLL/PLL tracking, nav decoding,
//!   pseudorange PVT solving, parameter extraction.
//! - [`relay`]: the ARX->ATX wire protocol, stream assembly by TOW,
//!   satellite assignment/distribution, throughput metering.
//! - [`signal_relay`]: 16-bit IQ quantization, rate-capped transport,
//!   replay buffering with underrun-as-jamming behavior.
//! - [`regen`]: ATX-side message-level signal regeneration with
//!   selective delays, gain control and trajectory step limiting.
//! - [`victim`]: the targeted receiver wrapped in a lock-state machine
//!   with per-phase trace output.
//! - [`scenario`]: scenario configuration, end-to-end execution and
//!   metrics emission; backs the `relaysim` CLI.

pub mod receiver;
pub mod regen;
pub mod relay;
pub mod scenario;
pub mod signal;
pub mod signal_relay;
pub mod victim;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// GPS L1 carrier frequency, Hz.
pub const L1_HZ: f64 = 1_575_420_000.0;

/// C/A code chipping rate, chips/s.
pub const CHIP_RATE_HZ: f64 = 1_023_000.0;

/// C/A code length in chips (one code period = 1 ms).
pub const CODE_LEN: usize = 1023;

/// C/A code periods per navigation data bit (50 bps).
pub const CODE_PERIODS_PER_BIT: u32 = 20;

/// Chips per navigation data bit.
pub const CHIPS_PER_BIT: f64 = (CODE_LEN as u32 * CODE_PERIODS_PER_BIT) as f64;

/// Navigation data bit duration, seconds.
pub const BIT_DURATION_S: f64 = 0.02;

/// Bits per navigation word (24 data + 6 parity).
pub const BITS_PER_WORD: usize = 30;

/// Words per subframe.
pub const WORDS_PER_SUBFRAME: usize = 10;

/// Bits per subframe.
pub const BITS_PER_SUBFRAME: usize = BITS_PER_WORD * WORDS_PER_SUBFRAME;

/// Subframe duration, seconds (300 bits at 50 bps).
pub const SUBFRAME_DURATION_S: f64 = 6.0;

/// TLM preamble pattern, first 8 bits of every subframe.
pub const PREAMBLE: u8 = 0b1000_1011;
