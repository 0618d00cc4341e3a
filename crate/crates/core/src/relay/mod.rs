//! The ARX->ATX relay layer: bit-exact wire protocol, TOW-keyed stream
//! assembly, per-node satellite distribution and throughput metering.

mod distribute;
mod envelope;
mod meter;
mod stream;

pub use distribute::{reassign, AssignmentTable, Distributor};
pub use envelope::{
    crc32, decode_envelope, encode_envelope, DelayTarget, EnvelopeDecoder, MsgType, RelayMessage,
    Sequencer, HEADER_LEN, MAGIC, MAX_PAYLOAD, TRAILER_LEN, VERSION,
};
pub use meter::{ThroughputMeter, ThroughputWindow};
pub use stream::{assemble, MessageStream, StreamItem};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RelayError {
    #[error("bad magic {0:02X?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("payload length {0} exceeds wire bound")]
    PayloadTooLarge(usize),
    #[error("CRC mismatch: expected {expected:08X}, got {got:08X}")]
    CrcMismatch { expected: u32, got: u32 },
    #[error("frame incomplete, more bytes needed")]
    NeedMoreBytes,
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error("sequence regression on type {msg_type}: {prev} -> {got}")]
    SequenceRegression { msg_type: u8, prev: u32, got: u32 },
    #[error("stream order violation: tow {got} after {prev}")]
    StreamOrderViolation { prev: u64, got: u64 },
    #[error("unknown node {0} in assignment table")]
    UnknownNode(u16),
    #[error("assignment epoch not monotone: {new} <= {current}")]
    NonMonotoneEpoch { current: u64, new: u64 },
}
