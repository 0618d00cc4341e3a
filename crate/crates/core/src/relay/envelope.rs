//! The bit-exact ARX->ATX wire frame.
//!
//! Layout, all multi-byte integers big-endian, floats IEEE-754 BE:
//!
//! ```text
//! magic   4 bytes  0x47 0x4E 0x53 0x53 ("GNSS")
//! version 1 byte   0x01
//! type    1 byte   message type
//! seq     4 bytes  per-(sender, type) counter
//! len     4 bytes  payload length
//! payload len bytes
//! crc32   4 bytes  IEEE CRC-32 over header + payload
//! ```
//!
//! A minimal frame (empty payload) is 18 bytes.

use super::{AssignmentTable, RelayError};
use crate::signal_relay::QuantizedChunk;
use std::collections::{BTreeMap, BTreeSet};

pub const MAGIC: [u8; 4] = [0x47, 0x4E, 0x53, 0x53];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;
pub const TRAILER_LEN: usize = 4;
/// Maximum payload size accepted on the wire.
pub const MAX_PAYLOAD: usize = 1 << 20;

/// Wire message type codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    IqChunk = 1,
    TowSync = 2,
    PvtState = 3,
    NavBits = 4,
    SatParams = 5,
    Assignment = 6,
    DelayCmd = 7,
    Heartbeat = 8,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::IqChunk),
            2 => Some(Self::TowSync),
            3 => Some(Self::PvtState),
            4 => Some(Self::NavBits),
            5 => Some(Self::SatParams),
            6 => Some(Self::Assignment),
            7 => Some(Self::DelayCmd),
            8 => Some(Self::Heartbeat),
            _ => None,
        }
    }
}

/// Target of a delay command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayTarget {
    Prn(u8),
    All,
}

const DELAY_ALL_SENTINEL: u8 = 0xFF;

/// A typed relay message. Field widths match the wire exactly, so
/// decode(encode(m)) == m bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub enum RelayMessage {
    IqChunk(QuantizedChunk),
    TowSync {
        tow_ms: u64,
    },
    PvtState {
        tow_ms: u64,
        position_ecef: [f64; 3],
        velocity_ecef: [f64; 3],
        clock_bias_s: f64,
        residual_rms_m: f32,
        fix_valid: bool,
    },
    NavBits {
        tow_ms: u64,
        prn: u8,
        /// Absolute stream bit index of the first bit.
        first_bit_index: u64,
        /// Transmitted bits, one per entry (0/1).
        bits: Vec<u8>,
    },
    SatParams {
        tow_ms: u64,
        prn: u8,
        doppler_hz: f32,
        code_phase_chips: f32,
        cn0_dbhz: f32,
        pseudorange_m: f64,
        carrier_phase_rad: f32,
    },
    Assignment(AssignmentTable),
    DelayCmd {
        effective_tow_ms: u64,
        target: DelayTarget,
        delay_s: f64,
    },
    Heartbeat,
}

impl RelayMessage {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Self::IqChunk(_) => MsgType::IqChunk,
            Self::TowSync { .. } => MsgType::TowSync,
            Self::PvtState { .. } => MsgType::PvtState,
            Self::NavBits { .. } => MsgType::NavBits,
            Self::SatParams { .. } => MsgType::SatParams,
            Self::Assignment(_) => MsgType::Assignment,
            Self::DelayCmd { .. } => MsgType::DelayCmd,
            Self::Heartbeat => MsgType::Heartbeat,
        }
    }

    /// The satellite this payload is specific to, if any.
    pub fn prn(&self) -> Option<u8> {
        match self {
            Self::NavBits { prn, .. } | Self::SatParams { prn, .. } => Some(*prn),
            Self::DelayCmd { target: DelayTarget::Prn(prn), .. } => Some(*prn),
            _ => None,
        }
    }

    /// TOW key used for stream assembly and routing.
    pub fn tow_ms(&self) -> Option<u64> {
        match self {
            Self::TowSync { tow_ms }
            | Self::PvtState { tow_ms, .. }
            | Self::NavBits { tow_ms, .. }
            | Self::SatParams { tow_ms, .. } => Some(*tow_ms),
            Self::DelayCmd { effective_tow_ms, .. } => Some(*effective_tow_ms),
            Self::Assignment(table) => Some(table.epoch_tow_ms),
            Self::IqChunk(_) | Self::Heartbeat => None,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Self::IqChunk(chunk) => {
                out.extend_from_slice(&chunk.sample_rate_hz.to_be_bytes());
                out.extend_from_slice(&chunk.first_sample_index.to_be_bytes());
                out.extend_from_slice(&(chunk.sample_count() as u32).to_be_bytes());
                for v in &chunk.iq {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
            Self::TowSync { tow_ms } => out.extend_from_slice(&tow_ms.to_be_bytes()),
            Self::PvtState {
                tow_ms,
                position_ecef,
                velocity_ecef,
                clock_bias_s,
                residual_rms_m,
                fix_valid,
            } => {
                out.extend_from_slice(&tow_ms.to_be_bytes());
                for v in position_ecef.iter().chain(velocity_ecef.iter()) {
                    out.extend_from_slice(&v.to_be_bytes());
                }
                out.extend_from_slice(&clock_bias_s.to_be_bytes());
                out.extend_from_slice(&residual_rms_m.to_be_bytes());
                out.push(u8::from(*fix_valid));
            }
            Self::NavBits { tow_ms, prn, first_bit_index, bits } => {
                out.extend_from_slice(&tow_ms.to_be_bytes());
                out.push(*prn);
                out.extend_from_slice(&first_bit_index.to_be_bytes());
                out.extend_from_slice(&(bits.len() as u16).to_be_bytes());
                let mut byte = 0u8;
                for (i, &b) in bits.iter().enumerate() {
                    byte = (byte << 1) | (b & 1);
                    if i % 8 == 7 {
                        out.push(byte);
                        byte = 0;
                    }
                }
                if bits.len() % 8 != 0 {
                    out.push(byte << (8 - bits.len() % 8));
                }
            }
            Self::SatParams {
                tow_ms,
                prn,
                doppler_hz,
                code_phase_chips,
                cn0_dbhz,
                pseudorange_m,
                carrier_phase_rad,
            } => {
                out.extend_from_slice(&tow_ms.to_be_bytes());
                out.push(*prn);
                out.extend_from_slice(&doppler_hz.to_be_bytes());
                out.extend_from_slice(&code_phase_chips.to_be_bytes());
                out.extend_from_slice(&cn0_dbhz.to_be_bytes());
                out.extend_from_slice(&pseudorange_m.to_be_bytes());
                out.extend_from_slice(&carrier_phase_rad.to_be_bytes());
            }
            Self::Assignment(table) => {
                out.extend_from_slice(&table.epoch_tow_ms.to_be_bytes());
                out.push(table.map.len() as u8);
                for (node, prns) in &table.map {
                    out.extend_from_slice(&node.to_be_bytes());
                    out.push(prns.len() as u8);
                    out.extend(prns.iter());
                }
            }
            Self::DelayCmd { effective_tow_ms, target, delay_s } => {
                out.extend_from_slice(&effective_tow_ms.to_be_bytes());
                out.push(match target {
                    DelayTarget::Prn(prn) => *prn,
                    DelayTarget::All => DELAY_ALL_SENTINEL,
                });
                out.extend_from_slice(&delay_s.to_be_bytes());
            }
            Self::Heartbeat => {}
        }
        out
    }

    pub fn decode_payload(msg_type: MsgType, payload: &[u8]) -> Result<Self, RelayError> {
        let mut r = Reader { buf: payload, pos: 0 };
        let msg = match msg_type {
            MsgType::IqChunk => {
                let sample_rate_hz = r.u32()?;
                let first_sample_index = r.u64()?;
                let count = r.u32()? as usize;
                let mut iq = Vec::with_capacity(count * 2);
                for _ in 0..count * 2 {
                    iq.push(r.i16()?);
                }
                Self::IqChunk(QuantizedChunk { first_sample_index, sample_rate_hz, iq })
            }
            MsgType::TowSync => Self::TowSync { tow_ms: r.u64()? },
            MsgType::PvtState => Self::PvtState {
                tow_ms: r.u64()?,
                position_ecef: [r.f64()?, r.f64()?, r.f64()?],
                velocity_ecef: [r.f64()?, r.f64()?, r.f64()?],
                clock_bias_s: r.f64()?,
                residual_rms_m: r.f32()?,
                fix_valid: r.u8()? != 0,
            },
            MsgType::NavBits => {
                let tow_ms = r.u64()?;
                let prn = r.u8()?;
                let first_bit_index = r.u64()?;
                let count = r.u16()? as usize;
                let mut bits = Vec::with_capacity(count);
                let mut byte = 0u8;
                for i in 0..count {
                    if i % 8 == 0 {
                        byte = r.u8()?;
                    }
                    bits.push((byte >> (7 - i % 8)) & 1);
                }
                Self::NavBits { tow_ms, prn, first_bit_index, bits }
            }
            MsgType::SatParams => Self::SatParams {
                tow_ms: r.u64()?,
                prn: r.u8()?,
                doppler_hz: r.f32()?,
                code_phase_chips: r.f32()?,
                cn0_dbhz: r.f32()?,
                pseudorange_m: r.f64()?,
                carrier_phase_rad: r.f32()?,
            },
            MsgType::Assignment => {
                let epoch_tow_ms = r.u64()?;
                let nodes = r.u8()?;
                let mut map = BTreeMap::new();
                for _ in 0..nodes {
                    let node = r.u16()?;
                    let n = r.u8()?;
                    let mut prns = BTreeSet::new();
                    for _ in 0..n {
                        prns.insert(r.u8()?);
                    }
                    map.insert(node, prns);
                }
                Self::Assignment(AssignmentTable { epoch_tow_ms, map })
            }
            MsgType::DelayCmd => Self::DelayCmd {
                effective_tow_ms: r.u64()?,
                target: match r.u8()? {
                    DELAY_ALL_SENTINEL => DelayTarget::All,
                    prn => DelayTarget::Prn(prn),
                },
                delay_s: r.f64()?,
            },
            MsgType::Heartbeat => Self::Heartbeat,
        };
        if r.pos != payload.len() {
            return Err(RelayError::Malformed("trailing payload bytes"));
        }
        Ok(msg)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RelayError> {
        if self.pos + n > self.buf.len() {
            return Err(RelayError::Malformed("payload too short"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, RelayError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, RelayError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn i16(&mut self) -> Result<i16, RelayError> {
        Ok(i16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, RelayError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, RelayError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, RelayError> {
        Ok(f32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, RelayError> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// IEEE CRC-32 (reflected 0xEDB88320, init and xorout 0xFFFFFFFF).
pub fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &byte in data {
        crc ^= u32::from(byte);
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

/// Encode one frame.
pub fn encode_envelope(seq: u32, msg: &RelayMessage) -> Vec<u8> {
    let payload = msg.encode_payload();
    assert!(payload.len() <= MAX_PAYLOAD, "payload exceeds wire bound");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.msg_type() as u8);
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

/// Decode one frame from the front of `bytes`. Returns the message, its
/// sequence number and the bytes consumed; `NeedMoreBytes` when the
/// buffer holds only a frame prefix.
pub fn decode_envelope(bytes: &[u8]) -> Result<(u32, RelayMessage, usize), RelayError> {
    if bytes.len() < HEADER_LEN {
        return Err(RelayError::NeedMoreBytes);
    }
    if bytes[0..4] != MAGIC {
        return Err(RelayError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
    }
    if bytes[4] != VERSION {
        return Err(RelayError::BadVersion(bytes[4]));
    }
    let msg_type =
        MsgType::from_u8(bytes[5]).ok_or(RelayError::UnknownMsgType(bytes[5]))?;
    let seq = u32::from_be_bytes(bytes[6..10].try_into().unwrap());
    let len = u32::from_be_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(RelayError::PayloadTooLarge(len));
    }
    let total = HEADER_LEN + len + TRAILER_LEN;
    if bytes.len() < total {
        return Err(RelayError::NeedMoreBytes);
    }
    let expected = crc32(&bytes[..HEADER_LEN + len]);
    let got = u32::from_be_bytes(bytes[HEADER_LEN + len..total].try_into().unwrap());
    if expected != got {
        return Err(RelayError::CrcMismatch { expected, got });
    }
    let msg = RelayMessage::decode_payload(msg_type, &bytes[HEADER_LEN..HEADER_LEN + len])?;
    Ok((seq, msg, total))
}

/// Incremental frame decoder over a reliable ordered byte stream.
#[derive(Debug, Default)]
pub struct EnvelopeDecoder {
    buf: Vec<u8>,
    last_seq: BTreeMap<u8, u32>,
}

impl EnvelopeDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Pop the next complete frame. `Ok(None)` means more bytes are
    /// needed. A corrupt or malformed frame is consumed (the decoder
    /// resynchronizes on the next magic) and reported as an error.
    pub fn next(&mut self) -> Result<Option<(u32, RelayMessage)>, RelayError> {
        match decode_envelope(&self.buf) {
            Ok((seq, msg, consumed)) => {
                self.buf.drain(..consumed);
                let t = msg.msg_type() as u8;
                if let Some(&prev) = self.last_seq.get(&t) {
                    if seq <= prev {
                        return Err(RelayError::SequenceRegression { msg_type: t, prev, got: seq });
                    }
                }
                self.last_seq.insert(t, seq);
                Ok(Some((seq, msg)))
            }
            Err(RelayError::NeedMoreBytes) => Ok(None),
            Err(err) => {
                self.resync();
                Err(err)
            }
        }
    }

    /// Drop bytes up to the next plausible frame start.
    fn resync(&mut self) {
        let skip = self.buf[1..]
            .windows(4)
            .position(|w| w == MAGIC)
            .map(|p| p + 1)
            .unwrap_or(self.buf.len());
        self.buf.drain(..skip);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Assigns strictly increasing sequence numbers per message type.
#[derive(Debug, Default, Clone)]
pub struct Sequencer {
    next: BTreeMap<u8, u32>,
}

impl Sequencer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn encode(&mut self, msg: &RelayMessage) -> Vec<u8> {
        let t = msg.msg_type() as u8;
        let seq = self.next.entry(t).or_insert(0);
        let bytes = encode_envelope(*seq, msg);
        *seq += 1;
        bytes
    }
}
