//! TOW-keyed message streams and their deterministic merge.

use super::envelope::{MsgType, RelayMessage};
use super::RelayError;

/// An ordered sequence of typed payloads keyed by TOW milliseconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageStream {
    pub items: Vec<StreamItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub tow_ms: u64,
    pub message: RelayMessage,
}

impl MessageStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append an item; the TOW key must be non-decreasing.
    pub fn push(&mut self, item: StreamItem) -> Result<(), RelayError> {
        if let Some(last) = self.items.last() {
            if item.tow_ms < last.tow_ms {
                return Err(RelayError::StreamOrderViolation {
                    prev: last.tow_ms,
                    got: item.tow_ms,
                });
            }
        }
        self.items.push(item);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Merge rank of a message type at equal TOW.
fn type_rank(t: MsgType) -> u8 {
    match t {
        MsgType::TowSync => 0,
        MsgType::PvtState => 1,
        MsgType::NavBits => 2,
        MsgType::SatParams => 3,
        MsgType::Assignment => 4,
        MsgType::DelayCmd => 5,
        MsgType::IqChunk => 6,
        MsgType::Heartbeat => 7,
    }
}

/// Merge independently-ordered streams into one stream ordered by
/// tow_ms, ties broken by message-type rank then PRN; any remaining tie
/// falls back to the encoded payload bytes, so the result is a pure
/// function of the input multiset, not of the interleaving.
pub fn assemble(streams: &[MessageStream]) -> Result<MessageStream, RelayError> {
    let mut all = Vec::new();
    for stream in streams {
        let mut prev = None;
        for item in &stream.items {
            if let Some(p) = prev {
                if item.tow_ms < p {
                    return Err(RelayError::StreamOrderViolation { prev: p, got: item.tow_ms });
                }
            }
            prev = Some(item.tow_ms);
            all.push(item.clone());
        }
    }
    all.sort_by_cached_key(|item| {
        (
            item.tow_ms,
            type_rank(item.message.msg_type()),
            item.message.prn().unwrap_or(0),
            item.message.encode_payload(),
        )
    });
    Ok(MessageStream { items: all })
}
