//! Locating and decoding navigation subframes in demodulated bit
//! streams: preamble search, parity-chain validation and polarity
//! resolution.

use crate::signal::{decode_subframe, NavSubframe};
use crate::{BITS_PER_SUBFRAME, WORDS_PER_SUBFRAME};

/// Result of locating a subframe in a channel's bit buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameAlignment {
    /// Buffer index of the first bit of the located subframe.
    pub start_bit: usize,
    /// Whether the demodulated symbols are inverted relative to the
    /// transmitted bits (Costas 180-degree ambiguity).
    pub inverted: bool,
    /// TOW count of the located subframe.
    pub tow_count: u32,
}

fn bit_at(symbols: &[i8], idx: usize, inverted: bool) -> bool {
    (symbols[idx] < 0) != inverted
}

fn words_at(symbols: &[i8], offset: usize, inverted: bool) -> [u32; WORDS_PER_SUBFRAME] {
    let mut words = [0u32; WORDS_PER_SUBFRAME];
    for (w, word) in words.iter_mut().enumerate() {
        for k in 0..30 {
            *word = (*word << 1) | u32::from(bit_at(symbols, offset + w * 30 + k, inverted));
        }
    }
    words
}

fn try_decode_at(symbols: &[i8], offset: usize, inverted: bool) -> Option<NavSubframe> {
    let words = words_at(symbols, offset, inverted);
    // Words 2 and 10 carry solved tails, so the priors entering a
    // subframe are 00 whenever the preceding word was received intact;
    // prefer stream-observed priors when available.
    let prior = if offset >= 2 {
        (
            bit_at(symbols, offset - 2, inverted),
            bit_at(symbols, offset - 1, inverted),
        )
    } else {
        (false, false)
    };
    decode_subframe(&words, prior)
}

/// Find the first decodable subframe at or after `from`.
///
/// Polarity is resolved from the raw transmitted preamble: the solved
/// word tails guarantee word 1 is never complemented on the wire, so a
/// matching raw preamble fixes the symbol polarity before the parity
/// chain confirms the alignment.
pub fn frame_sync(symbols: &[i8], from: usize) -> Option<FrameAlignment> {
    if symbols.len() < BITS_PER_SUBFRAME {
        return None;
    }
    for offset in from..=symbols.len() - BITS_PER_SUBFRAME {
        let Some(inverted) = preamble_polarity(symbols, offset) else { continue };
        if let Some(sf) = try_decode_at(symbols, offset, inverted) {
            return Some(FrameAlignment { start_bit: offset, inverted, tow_count: sf.tow_count });
        }
    }
    None
}

fn preamble_polarity(symbols: &[i8], offset: usize) -> Option<bool> {
    let mut raw = 0u8;
    for k in 0..8 {
        raw = (raw << 1) | u8::from(symbols[offset + k] < 0);
    }
    if raw == crate::PREAMBLE {
        Some(false)
    } else if raw == !crate::PREAMBLE {
        Some(true)
    } else {
        None
    }
}

/// Warm-start sync on just the first two words of a subframe: preamble,
/// two parity-valid words and a TOW that fits a plausibility window.
/// Enough for receivers whose ephemeris is already cached; the chance
/// of a false anchor surviving preamble, 12 parity bits and the TOW
/// gate is negligible.
pub fn quick_sync(
    symbols: &[i8],
    from: usize,
    plausible_tow: impl Fn(u32) -> bool,
) -> Option<FrameAlignment> {
    if symbols.len() < 62 {
        return None;
    }
    for offset in from.max(2)..=symbols.len() - 60 {
        let Some(inverted) = preamble_polarity(symbols, offset) else { continue };
        let prior = (
            bit_at(symbols, offset - 2, inverted),
            bit_at(symbols, offset - 1, inverted),
        );
        let mut words = [0u32; 2];
        for (w, word) in words.iter_mut().enumerate() {
            for k in 0..30 {
                *word = (*word << 1) | u32::from(bit_at(symbols, offset + w * 30 + k, inverted));
            }
        }
        if !crate::signal::check_word(words[0], prior.0, prior.1) {
            continue;
        }
        let d29 = (words[0] >> 1) & 1 == 1;
        let d30 = words[0] & 1 == 1;
        if !crate::signal::check_word(words[1], d29, d30) {
            continue;
        }
        let how = crate::signal::source_bits(words[1], d30);
        let tow_count = how >> 7;
        let subframe_id = ((how >> 2) & 0x7) as u8;
        if !(1..=5).contains(&subframe_id) || !plausible_tow(tow_count) {
            continue;
        }
        return Some(FrameAlignment { start_bit: offset, inverted, tow_count });
    }
    None
}

/// Decode every locatable subframe in a demodulated +/-1 symbol stream.
///
/// Subframes are located by preamble plus full parity validation, in
/// either polarity; once aligned, consecutive subframes are decoded at
/// the same cadence, and a subframe with any parity-failing word is
/// dropped while scanning resumes beyond it.
pub fn decode_nav(symbols: &[i8]) -> Vec<NavSubframe> {
    let mut found = Vec::new();
    let mut offset = 0usize;
    while symbols.len() >= BITS_PER_SUBFRAME && offset <= symbols.len() - BITS_PER_SUBFRAME {
        match frame_sync(symbols, offset) {
            Some(align) => {
                let sf = try_decode_at(symbols, align.start_bit, align.inverted)
                    .expect("frame_sync validated this offset");
                found.push(sf);
                offset = align.start_bit + BITS_PER_SUBFRAME;
            }
            None => break,
        }
    }
    found
}

/// Convert transmitted 0/1 bits to the +/-1 symbol convention used by
/// the demodulator (bit 1 -> -1).
pub fn bits_to_symbols(bits: &[u8]) -> Vec<i8> {
    bits.iter().map(|&b| if b == 1 { -1 } else { 1 }).collect()
}
