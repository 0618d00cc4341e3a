//! GPS L1 C/A spreading code (Gold code) generation.

use super::SignalError;
use crate::CODE_LEN;

/// G2 output tap pairs per PRN (1-based stage numbers). Selecting two
/// stages of the G2 register and XOR-ing them is equivalent to delaying
/// the G2 sequence by the per-PRN code delay.
const G2_TAPS: [(usize, usize); 32] = [
    (2, 6),
    (3, 7),
    (4, 8),
    (5, 9),
    (1, 9),
    (2, 10),
    (1, 8),
    (2, 9),
    (3, 10),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (1, 4),
    (2, 5),
    (3, 6),
    (4, 7),
    (5, 8),
    (6, 9),
    (1, 3),
    (4, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 6),
    (2, 7),
    (3, 8),
    (4, 9),
];

/// One period of a C/A spreading code as +/-1 chips.
///
/// Chip mapping: code bit 0 -> +1, code bit 1 -> -1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaCode {
    prn: u8,
    chips: Vec<i8>,
}

impl CaCode {
    /// Generate the standard C/A code for a PRN in 1..=32.
    ///
    /// G1 feedback taps 3,10; G2 feedback taps 2,3,6,8,9,10; both
    /// registers initialized to all ones. The code chip is
    /// G1 output XOR the PRN-specific G2 tap pair.
    pub fn new(prn: u8) -> Result<Self, SignalError> {
        if !(1..=32).contains(&prn) {
            return Err(SignalError::InvalidPrn(prn));
        }
        let (t1, t2) = G2_TAPS[prn as usize - 1];
        let mut g1 = [1u8; 10];
        let mut g2 = [1u8; 10];
        let mut chips = Vec::with_capacity(CODE_LEN);
        for _ in 0..CODE_LEN {
            let bit = g1[9] ^ g2[t1 - 1] ^ g2[t2 - 1];
            chips.push(if bit == 1 { -1 } else { 1 });

            let g1_fb = g1[2] ^ g1[9];
            let g2_fb = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
            g1.rotate_right(1);
            g1[0] = g1_fb;
            g2.rotate_right(1);
            g2[0] = g2_fb;
        }
        Ok(Self { prn, chips })
    }

    pub fn prn(&self) -> u8 {
        self.prn
    }

    /// The 1023 chips of one code period.
    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    /// Chip at an arbitrary (periodically extended) index.
    pub fn chip(&self, index: i64) -> i8 {
        self.chips[index.rem_euclid(CODE_LEN as i64) as usize]
    }

    /// First ten chips packed as an octal number with code bit 1 for a
    /// -1 chip, matching the published first-10-chips tables.
    pub fn first_10_chips_octal(&self) -> u16 {
        self.chips[..10]
            .iter()
            .fold(0u16, |acc, &c| (acc << 1) | u16::from(c == -1))
    }

    /// Interval-averaged chip value over [pos, pos+span) chips, the
    /// band-limited chip waveform seen by a sampler. See
    /// [`averaged_chip`].
    pub fn averaged_chip(&self, pos: f64, span: f64) -> f64 {
        averaged_chip(&self.chips, pos, span)
    }

    /// Unnormalized circular cross-correlation at every lag.
    pub fn cross_correlation(&self, other: &CaCode) -> Vec<i32> {
        (0..CODE_LEN)
            .map(|lag| {
                (0..CODE_LEN)
                    .map(|i| {
                        i32::from(self.chips[i]) * i32::from(other.chips[(i + lag) % CODE_LEN])
                    })
                    .sum()
            })
            .collect()
    }
}

/// Average of the periodically-extended chip waveform over
/// [pos, pos+span) chips, for span <= 1. Keeps sub-sample code timing
/// observable at any sample rate, including rates commensurate with the
/// chip rate where hard-sampled replicas collapse onto a coarse phase
/// grid.
pub fn averaged_chip(chips: &[i8], pos: f64, span: f64) -> f64 {
    let len = chips.len() as i64;
    let left = pos.floor() as i64;
    let frac = pos - left as f64;
    let l = f64::from(chips[left.rem_euclid(len) as usize]);
    if frac + span <= 1.0 {
        l
    } else {
        let r = f64::from(chips[(left + 1).rem_euclid(len) as usize]);
        let w = (frac + span - 1.0) / span;
        l * (1.0 - w) + r * w
    }
}
