//! Bit-string helpers. Bit strings are slices of 0/1 bytes, most significant bit first.

use crate::error::{Error, Result};

/// Packs a bit string into an integer, first bit most significant.
pub fn bits_to_word(bits: &[u8]) -> Result<u64> {
    if bits.len() > 64 {
        return Err(Error::WrongBitCount {
            expected: 64,
            actual: bits.len(),
        });
    }
    bits.iter().try_fold(0u64, |acc, &b| match b {
        0 | 1 => Ok((acc << 1) | u64::from(b)),
        other => Err(Error::InvalidBit(other)),
    })
}

/// Unpacks the low `len` bits of `word`, most significant first.
pub fn word_to_bits(word: u64, len: usize) -> Vec<u8> {
    (0..len).rev().map(|k| ((word >> k) & 1) as u8).collect()
}

/// Parses a string such as `"0110"` into a bit string.
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.bytes()
        .map(|c| match c {
            b'0' => Ok(0),
            b'1' => Ok(1),
            other => Err(Error::InvalidBit(other)),
        })
        .collect()
}

pub fn format_bits(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}
