//! LNAV-style navigation message: word parity, subframe layout, and the
//! synthetic ephemeris payload.
//!
//! Words are 30 bits (24 data + 6 parity) with the standard LNAV
//! extended-Hamming parity equations; the 24 data bits of a word are
//! complemented on the wire when the last bit of the preceding word is
//! one. The trailing two data bits of words 2 and 10 are solved so
//! those words end in 00, which keeps the transmitted preamble and the
//! following word non-complemented, exactly like the real signal.
//!
//! Subframe layout (10 words, 300 bits, 6 s):
//! - word 1: 8-bit preamble, 6-bit PRN, 10 reserved bits
//! - word 2: 17-bit TOW count (6 s epochs), 2 spare bits, 3-bit subframe
//!   id, 2 solved bits
//! - words 3..10: 158 payload bits, 32 opaque auth bits, 2 solved bits
//!
//! The payload carries a fixed-point encoding of the circular-orbit
//! ephemeris, so any single decoded subframe lets a receiver reconstruct
//! the satellite position. TOW count 0 corresponds to stream time 0.

use super::orbit::CircularOrbit;
use crate::{BITS_PER_SUBFRAME, PREAMBLE, WORDS_PER_SUBFRAME};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Payload bits per subframe available to the ephemeris block.
pub const PAYLOAD_BITS_LEN: usize = 158;

/// Opaque authentication bits carried per subframe.
pub const AUTH_BITS_LEN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum NavError {
    #[error("subframe id {0} out of range 1..=5")]
    InvalidSubframeId(u8),
    #[error("TOW count {0} exceeds 17-bit range")]
    TowOverflow(u32),
    #[error("payload exceeds {PAYLOAD_BITS_LEN} bits")]
    PayloadOverflow,
    #[error("value {0} out of range for field {1}")]
    FieldRange(f64, &'static str),
}

/// Parity bit masks over d1..d24 (bit 23 = d1 ... bit 0 = d24) for
/// D25..D30, from the standard LNAV parity equations.
const PARITY_MASKS: [u32; 6] = [
    0xEC7CD2, // D25 = D29* + d1 d2 d3 d5 d6 d10 d11 d12 d13 d14 d17 d18 d20 d23
    0x763E69, // D26 = D30* + d2 d3 d4 d6 d7 d11 d12 d13 d14 d15 d18 d19 d21 d24
    0xBB1F34, // D27 = D29* + d1 d3 d4 d5 d7 d8 d12 d13 d14 d15 d16 d19 d20 d22
    0x5D8F9A, // D28 = D30* + d2 d4 d5 d6 d8 d9 d13 d14 d15 d16 d17 d20 d21 d23
    0xAEC7CD, // D29 = D30* + d1 d3 d5 d6 d7 d9 d10 d14 d15 d16 d17 d18 d21 d22 d24
    0x2DEA27, // D30 = D29* + d3 d5 d6 d8 d9 d10 d11 d13 d15 d19 d22 d23 d24
];

/// Which parity bits fold in D29* (true) versus D30* (false).
const PARITY_USES_D29: [bool; 6] = [true, false, true, false, false, true];

fn parity32(v: u32) -> bool {
    v.count_ones() % 2 == 1
}

/// Compute the 6 parity bits for a word whose 24 data bits are already
/// in transmitted form, given the last two bits of the preceding word.
pub fn compute_parity(data_bits: u32, prior_d29: bool, prior_d30: bool) -> u8 {
    debug_assert!(data_bits < (1 << 24));
    // Un-complement to source bits; the equations are defined over them.
    let source = if prior_d30 { !data_bits & 0xFF_FFFF } else { data_bits };
    let mut parity = 0u8;
    for (i, &mask) in PARITY_MASKS.iter().enumerate() {
        let prior = if PARITY_USES_D29[i] { prior_d29 } else { prior_d30 };
        let bit = parity32(source & mask) ^ prior;
        parity = (parity << 1) | u8::from(bit);
    }
    parity
}

/// Assemble a transmitted 30-bit word from 24 source data bits.
pub fn encode_word(source_bits: u32, prior_d29: bool, prior_d30: bool) -> u32 {
    debug_assert!(source_bits < (1 << 24));
    let transmitted = if prior_d30 { !source_bits & 0xFF_FFFF } else { source_bits };
    (transmitted << 6) | u32::from(compute_parity(transmitted, prior_d29, prior_d30))
}

/// Check a transmitted 30-bit word against its parity.
pub fn check_word(word: u32, prior_d29: bool, prior_d30: bool) -> bool {
    let data = (word >> 6) & 0xFF_FFFF;
    let parity = (word & 0x3F) as u8;
    compute_parity(data, prior_d29, prior_d30) == parity
}

/// Recover the 24 source data bits of a parity-valid word.
pub fn source_bits(word: u32, prior_d30: bool) -> u32 {
    let data = (word >> 6) & 0xFF_FFFF;
    if prior_d30 {
        !data & 0xFF_FFFF
    } else {
        data
    }
}

/// Fill the two trailing data bits so the assembled word ends in 00.
/// Flipping d24 flips D29 and D30; flipping d23 flips only D30, so the
/// system is always solvable.
fn solve_word_tail(source_bits: u32, prior_d29: bool, prior_d30: bool) -> u32 {
    debug_assert_eq!(source_bits & 0b11, 0, "tail bits must start cleared");
    let w0 = encode_word(source_bits, prior_d29, prior_d30);
    let d29 = (w0 >> 1) & 1;
    let d30 = w0 & 1;
    let f24 = d29;
    let f23 = d30 ^ f24;
    source_bits | (f23 << 1) | f24
}

/// One 300-bit navigation subframe in transmitted form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavSubframe {
    pub subframe_id: u8,
    pub tow_count: u32,
    /// The ten 30-bit words as transmitted (parity chain included).
    pub words: [u32; WORDS_PER_SUBFRAME],
    /// Payload bits from words 3..10, source form.
    pub payload_bits: [u8; PAYLOAD_BITS_LEN],
    /// Opaque authentication bits, source form.
    pub auth_bits: u32,
    pub prn: u8,
}

impl NavSubframe {
    /// Flatten to 300 transmitted bits.
    pub fn to_bits(&self) -> Vec<u8> {
        let mut bits = Vec::with_capacity(BITS_PER_SUBFRAME);
        for word in self.words {
            for k in (0..30).rev() {
                bits.push(((word >> k) & 1) as u8);
            }
        }
        bits
    }
}

/// Encode a subframe. `prior_word_tail` is (D29*, D30*) of the last word
/// before this subframe.
pub fn encode_subframe(
    subframe_id: u8,
    tow_count: u32,
    prn: u8,
    payload_bits: &[u8],
    auth_bits: u32,
    prior_word_tail: (bool, bool),
) -> Result<NavSubframe, NavError> {
    if !(1..=5).contains(&subframe_id) {
        return Err(NavError::InvalidSubframeId(subframe_id));
    }
    if tow_count >= (1 << 17) {
        return Err(NavError::TowOverflow(tow_count));
    }
    if payload_bits.len() > PAYLOAD_BITS_LEN {
        return Err(NavError::PayloadOverflow);
    }

    let mut padded = [0u8; PAYLOAD_BITS_LEN];
    padded[..payload_bits.len()].copy_from_slice(payload_bits);

    // Source data bits per word.
    let mut source = [0u32; WORDS_PER_SUBFRAME];
    source[0] = (u32::from(PREAMBLE) << 16) | (u32::from(prn & 0x3F) << 10);
    source[1] = (tow_count << 7) | (u32::from(subframe_id) << 2);
    // Words 3..10 carry payload then auth bits, MSB first; the last two
    // bits of word 10 are solved below.
    let mut field = Vec::with_capacity(PAYLOAD_BITS_LEN + AUTH_BITS_LEN);
    field.extend_from_slice(&padded);
    for k in (0..AUTH_BITS_LEN).rev() {
        field.push(((auth_bits >> k) & 1) as u8);
    }
    for (w, chunk) in field.chunks(24).enumerate() {
        let bits = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
        source[2 + w] = bits << (24 - chunk.len());
    }

    let (mut d29, mut d30) = prior_word_tail;
    let mut words = [0u32; WORDS_PER_SUBFRAME];
    for (i, src) in source.iter().copied().enumerate() {
        let src = if i == 1 || i == WORDS_PER_SUBFRAME - 1 {
            solve_word_tail(src, d29, d30)
        } else {
            src
        };
        let word = encode_word(src, d29, d30);
        words[i] = word;
        d29 = (word >> 1) & 1 == 1;
        d30 = word & 1 == 1;
    }

    Ok(NavSubframe {
        subframe_id,
        tow_count,
        words,
        payload_bits: padded,
        auth_bits,
        prn,
    })
}

/// Decode a parity-valid word sequence back into a subframe. Returns
/// `None` when the preamble or any parity check fails.
pub fn decode_subframe(words: &[u32; WORDS_PER_SUBFRAME], prior_word_tail: (bool, bool)) -> Option<NavSubframe> {
    let (mut d29, mut d30) = prior_word_tail;
    let mut source = [0u32; WORDS_PER_SUBFRAME];
    for (i, &word) in words.iter().enumerate() {
        if !check_word(word, d29, d30) {
            return None;
        }
        source[i] = source_bits(word, d30);
        d29 = (word >> 1) & 1 == 1;
        d30 = word & 1 == 1;
    }
    if (source[0] >> 16) as u8 != PREAMBLE {
        return None;
    }
    let prn = ((source[0] >> 10) & 0x3F) as u8;
    let tow_count = source[1] >> 7;
    let subframe_id = ((source[1] >> 2) & 0x7) as u8;
    if !(1..=5).contains(&subframe_id) {
        return None;
    }

    let mut field = Vec::with_capacity(192);
    for &src in &source[2..] {
        for k in (0..24).rev() {
            field.push(((src >> k) & 1) as u8);
        }
    }
    let mut payload_bits = [0u8; PAYLOAD_BITS_LEN];
    payload_bits.copy_from_slice(&field[..PAYLOAD_BITS_LEN]);
    let auth_bits = field[PAYLOAD_BITS_LEN..PAYLOAD_BITS_LEN + AUTH_BITS_LEN]
        .iter()
        .fold(0u32, |acc, &b| (acc << 1) | u32::from(b));

    Some(NavSubframe {
        subframe_id,
        tow_count,
        words: *words,
        payload_bits,
        auth_bits,
        prn,
    })
}

/// Fixed-point ephemeris encoding carried in every subframe payload.
///
/// 158 bits: radius u32 (LSB 0.01 m), inclination/RAAN/anomaly u32
/// (LSB 2^-32 turns), angular rate 30 bits (LSB 1e-12 rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EphemerisBlock {
    pub radius_m: f64,
    pub inclination_rad: f64,
    pub raan_rad: f64,
    pub anomaly0_rad: f64,
    pub angular_rate_rad_s: f64,
}

const TURN: f64 = std::f64::consts::TAU;

impl EphemerisBlock {
    pub fn from_orbit(orbit: &CircularOrbit) -> Self {
        Self {
            radius_m: orbit.radius_m,
            inclination_rad: orbit.inclination_rad,
            raan_rad: orbit.raan_rad,
            anomaly0_rad: orbit.anomaly0_rad,
            angular_rate_rad_s: orbit.angular_rate_rad_s,
        }
    }

    pub fn to_orbit(&self) -> CircularOrbit {
        CircularOrbit {
            radius_m: self.radius_m,
            inclination_rad: self.inclination_rad,
            raan_rad: self.raan_rad,
            anomaly0_rad: self.anomaly0_rad,
            angular_rate_rad_s: self.angular_rate_rad_s,
        }
    }

    pub fn encode(&self) -> Result<[u8; PAYLOAD_BITS_LEN], NavError> {
        let radius = self.radius_m / 0.01;
        if !(0.0..=u32::MAX as f64).contains(&radius) {
            return Err(NavError::FieldRange(self.radius_m, "radius_m"));
        }
        let rate = self.angular_rate_rad_s / 1e-12;
        if !(0.0..(1u64 << 30) as f64).contains(&rate) {
            return Err(NavError::FieldRange(self.angular_rate_rad_s, "angular_rate_rad_s"));
        }
        let angle_q = |a: f64| ((a.rem_euclid(TURN) / TURN) * 2f64.powi(32)).round() as u64 as u32;
        let fields: [(u32, usize); 5] = [
            (radius.round() as u32, 32),
            (angle_q(self.inclination_rad), 32),
            (angle_q(self.raan_rad), 32),
            (angle_q(self.anomaly0_rad), 32),
            (rate.round() as u32, 30),
        ];
        let mut bits = [0u8; PAYLOAD_BITS_LEN];
        let mut pos = 0;
        for (value, width) in fields {
            for k in 0..width {
                bits[pos + k] = ((value >> (width - 1 - k)) & 1) as u8;
            }
            pos += width;
        }
        Ok(bits)
    }

    pub fn decode(bits: &[u8; PAYLOAD_BITS_LEN]) -> Self {
        let mut pos = 0;
        let mut take = |width: usize| -> u32 {
            let v = bits[pos..pos + width]
                .iter()
                .fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
            pos += width;
            v
        };
        let radius = take(32);
        let incl = take(32);
        let raan = take(32);
        let anom = take(32);
        let rate = take(30);
        let angle = |q: u32| (q as f64 / 2f64.powi(32)) * TURN;
        Self {
            radius_m: radius as f64 * 0.01,
            inclination_rad: angle(incl),
            raan_rad: angle(raan),
            anomaly0_rad: angle(anom),
            angular_rate_rad_s: rate as f64 * 1e-12,
        }
    }
}

/// The continuous transmitted bit stream of one satellite.
///
/// Subframe k starts at stream bit 300*k and carries tow_count = k; the
/// ephemeris payload repeats every subframe and the auth bits are an
/// opaque per-subframe pseudorandom field derived from (prn, seed).
#[derive(Debug, Clone)]
pub struct SatBitStream {
    prn: u8,
    ephemeris_payload: [u8; PAYLOAD_BITS_LEN],
    auth_seed: u64,
    cache: std::cell::RefCell<std::collections::BTreeMap<u32, NavSubframe>>,
}

impl SatBitStream {
    pub fn new(prn: u8, ephemeris: &EphemerisBlock, auth_seed: u64) -> Result<Self, NavError> {
        Ok(Self {
            prn,
            ephemeris_payload: ephemeris.encode()?,
            auth_seed,
            cache: std::cell::RefCell::new(std::collections::BTreeMap::new()),
        })
    }

    pub fn prn(&self) -> u8 {
        self.prn
    }

    /// The opaque auth bits of subframe `index`, deterministic per
    /// (prn, seed, index).
    pub fn auth_bits(&self, index: u32) -> u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.auth_seed ^ (u64::from(self.prn) << 32) ^ u64::from(index),
        );
        rng.gen()
    }

    /// Subframe by index (tow_count == index).
    pub fn subframe(&self, index: u32) -> NavSubframe {
        if let Some(sf) = self.cache.borrow().get(&index) {
            return sf.clone();
        }
        let prior = self.prior_tail(index);
        let id = (index % 5) as u8 + 1;
        let sf = encode_subframe(id, index, self.prn, &self.ephemeris_payload, self.auth_bits(index), prior)
            .expect("static layout");
        self.cache.borrow_mut().insert(index, sf.clone());
        sf
    }

    /// (D29*, D30*) seen by the first word of subframe `index`.
    fn prior_tail(&self, index: u32) -> (bool, bool) {
        if index == 0 {
            (false, false)
        } else {
            let prev = self.subframe(index - 1);
            let last = prev.words[WORDS_PER_SUBFRAME - 1];
            ((last >> 1) & 1 == 1, last & 1 == 1)
        }
    }

    /// Transmitted bit at absolute stream index.
    pub fn bit(&self, index: u64) -> u8 {
        let sf = self.subframe((index / BITS_PER_SUBFRAME as u64) as u32);
        let within = (index % BITS_PER_SUBFRAME as u64) as usize;
        let word = sf.words[within / 30];
        ((word >> (29 - within % 30)) & 1) as u8
    }

    /// Transmitted bits [first, first+count) as +/-1 symbols
    /// (bit 0 -> +1, bit 1 -> -1).
    pub fn symbols(&self, first: u64, count: usize) -> Vec<i8> {
        (first..first + count as u64)
            .map(|i| if self.bit(i) == 1 { -1 } else { 1 })
            .collect()
    }
}
