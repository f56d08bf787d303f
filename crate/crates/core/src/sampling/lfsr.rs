//! Fibonacci XOR linear feedback shift registers.

use crate::error::{Error, Result};

/// Fibonacci LFSR over `width` bits.
///
/// Tap `t` reads bit `width - t` of the state. Each clock computes the parity
/// of the tapped bits, shifts the state right by one and inserts the parity at
/// the top; the bit shifted out is the output bit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lfsr {
    width: u32,
    tap_mask: u64,
    state: u64,
}

impl Lfsr {
    pub const DEFAULT_WIDTH: u32 = 16;
    pub const DEFAULT_TAPS: [u32; 4] = [16, 15, 13, 4];
    pub const DEFAULT_SEED: u64 = 0xACE1;

    /// Width-16 register with the default taps.
    pub fn new(seed: u64) -> Result<Self> {
        Self::with_taps(Self::DEFAULT_WIDTH, &Self::DEFAULT_TAPS, seed)
    }

    pub fn with_taps(width: u32, taps: &[u32], seed: u64) -> Result<Self> {
        if !(2..=32).contains(&width) {
            return Err(Error::InvalidLfsr(format!("width {width} not in 2..=32")));
        }
        if !taps.contains(&width) {
            return Err(Error::InvalidLfsr(format!(
                "taps {taps:?} must include the width {width}"
            )));
        }
        let mut tap_mask = 0u64;
        for &t in taps {
            if t == 0 || t > width {
                return Err(Error::InvalidLfsr(format!("tap {t} outside 1..={width}")));
            }
            tap_mask |= 1 << (width - t);
        }
        let state = seed & mask(width);
        if state == 0 {
            return Err(Error::ZeroSeed);
        }
        Ok(Self { width, tap_mask, state })
    }

    /// Register with a known maximal-length tap set for `width`.
    pub fn maximal(width: u32, seed: u64) -> Result<Self> {
        let taps = maximal_taps(width)
            .ok_or_else(|| Error::InvalidLfsr(format!("no maximal tap table entry for width {width}")))?;
        Self::with_taps(width, taps, seed)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// One clock; returns the bit shifted out.
    #[inline]
    pub fn step(&mut self) -> u64 {
        let out = self.state & 1;
        let fb = ((self.state & self.tap_mask).count_ones() & 1) as u64;
        self.state = (self.state >> 1) | (fb << (self.width - 1));
        out
    }

    /// Clocks `width` times and returns the new state as a word in
    /// `1..2^width`.
    #[inline]
    pub fn next_word(&mut self) -> u64 {
        for _ in 0..self.width {
            self.step();
        }
        self.state
    }

    /// Value-style form of [`Lfsr::next_word`].
    pub fn next(mut self) -> (Lfsr, u64) {
        let w = self.next_word();
        (self, w)
    }
}

fn mask(width: u32) -> u64 {
    (1u64 << width) - 1
}

/// Maximal-length Fibonacci tap sets.
pub fn maximal_taps(width: u32) -> Option<&'static [u32]> {
    Some(match width {
        8 => &[8, 6, 5, 4],
        16 => &[16, 15, 13, 4],
        24 => &[24, 23, 22, 17],
        32 => &[32, 22, 2, 1],
        _ => return None,
    })
}

/// SplitMix64 finalizer.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-qubit streams for one execution batch.
///
/// Each qubit's start state is a hash of its seed, the batch index and the
/// qubit index, so equal seeds on two qubits still give distinct streams.
pub fn batch_streams(seeds: &[u64], batch_index: u64, width: u32) -> Result<Vec<Lfsr>> {
    if seeds.contains(&0) {
        return Err(Error::ZeroSeed);
    }
    let m = mask(width.clamp(2, 32));
    let mut used: Vec<u64> = Vec::with_capacity(seeds.len());
    seeds
        .iter()
        .enumerate()
        .map(|(j, &seed)| {
            let mut h = splitmix64(seed ^ splitmix64(batch_index ^ splitmix64(j as u64 + 1)));
            let mut state = h & m;
            while state == 0 || used.contains(&state) {
                h = splitmix64(h);
                state = h & m;
            }
            used.push(state);
            Lfsr::maximal(width, state)
        })
        .collect()
}
