//! Gray-labelled BPSK and rectangular/square QAM constellations.
//!
//! Every constellation is a grid built from one or two Gray-coded PAM axes.
//! The in-phase axis carries the most significant label bits. Level `k` of an
//! axis with `L` levels sits at amplitude `2k - (L - 1)` before normalization
//! and carries the label `gray(k)`, so label 0 is always the most negative
//! level. Points are stored indexed by their label, which makes "lowest point
//! index" and "lowest label" the same ordering.
//!
//! Constellations are normalized to unit mean energy; any transmit power
//! scaling happens in the mapper.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::{bits_to_word, word_to_bits};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModScheme {
    Bpsk,
    Qam,
}

impl ModScheme {
    /// The scheme implied by an order: BPSK for 2, QAM above.
    pub fn default_for(order: usize) -> Self {
        if order == 2 {
            ModScheme::Bpsk
        } else {
            ModScheme::Qam
        }
    }
}

impl fmt::Display for ModScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModScheme::Bpsk => f.write_str("bpsk"),
            ModScheme::Qam => f.write_str("qam"),
        }
    }
}

impl FromStr for ModScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ModScheme::Bpsk),
            "qam" => Ok(ModScheme::Qam),
            other => Err(Error::Validation {
                field: "mod_scheme".into(),
                constraint: format!("unknown scheme `{other}` (expected bpsk or qam)"),
            }),
        }
    }
}

#[inline]
fn gray(k: usize) -> usize {
    k ^ (k >> 1)
}

#[inline]
fn gray_inverse(mut g: usize) -> usize {
    let mut k = g;
    while g > 1 {
        g >>= 1;
        k ^= g;
    }
    k
}

/// One Gray-coded PAM axis with `2^bits` levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Axis {
    bits: u32,
}

impl Axis {
    fn levels(self) -> usize {
        1 << self.bits
    }

    /// Unnormalized amplitude of level `k`.
    fn amplitude(self, level: usize) -> f64 {
        (2 * level) as f64 - (self.levels() - 1) as f64
    }

    fn mean_energy(self) -> f64 {
        let l = self.levels() as f64;
        (l * l - 1.0) / 3.0
    }

    /// Label of the level nearest to the unnormalized coordinate `u`.
    /// Exact midpoints resolve to the level with the smaller label.
    fn slice(self, u: f64) -> usize {
        let top = self.levels() - 1;
        if top == 0 {
            return 0;
        }
        let pos = (u + top as f64) / 2.0;
        if pos <= 0.0 {
            return gray(0);
        }
        if pos >= top as f64 {
            return gray(top);
        }
        let lower = pos.floor();
        let frac = pos - lower;
        let lower = lower as usize;
        if frac < 0.5 {
            gray(lower)
        } else if frac > 0.5 {
            gray(lower + 1)
        } else {
            gray(lower).min(gray(lower + 1))
        }
    }
}

/// An M-ary constellation with Gray labels and unit mean energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    scheme: ModScheme,
    in_phase: Axis,
    quadrature: Axis,
    scale: f64,
    points: Vec<Complex64>,
}

impl Constellation {
    /// Builds the constellation for `order` points under `scheme`.
    ///
    /// BPSK requires `order == 2`; QAM requires `4 <= order <= 512`. Square
    /// orders use equal axes, odd bit counts put the extra bit on the in-phase
    /// axis (8-QAM is a 4x2 grid).
    pub fn new(order: usize, scheme: ModScheme) -> Result<Self> {
        if !order.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(order));
        }
        if !(2..=MAX_ORDER).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        let bits = order.trailing_zeros();
        let (in_phase, quadrature) = match scheme {
            ModScheme::Bpsk if order == 2 => (Axis { bits: 1 }, Axis { bits: 0 }),
            ModScheme::Qam if order >= 4 => {
                let a = bits.div_ceil(2);
                (Axis { bits: a }, Axis { bits: bits - a })
            }
            _ => {
                return Err(Error::SchemeMismatch {
                    scheme: scheme.to_string(),
                    order,
                })
            }
        };
        let scale = 1.0 / (in_phase.mean_energy() + quadrature.mean_energy()).sqrt();
        let points = (0..order)
            .map(|label| {
                let i_label = label >> quadrature.bits;
                let q_label = label & (quadrature.levels() - 1);
                Complex64::new(
                    scale * in_phase.amplitude(gray_inverse(i_label)),
                    scale * quadrature.amplitude(gray_inverse(q_label)),
                )
            })
            .collect();
        Ok(Self {
            order,
            scheme,
            in_phase,
            quadrature,
            scale,
            points,
        })
    }

    /// BPSK for order 2, QAM otherwise.
    pub fn with_order(order: usize) -> Result<Self> {
        Self::new(order, ModScheme::default_for(order))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn scheme(&self) -> ModScheme {
        self.scheme
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Label bit strings, in point order.
    pub fn labels(&self) -> Vec<Vec<u8>> {
        (0..self.order)
            .map(|l| word_to_bits(l as u64, self.bits_per_symbol()))
            .collect()
    }

    pub fn is_square(&self) -> bool {
        self.in_phase.bits == self.quadrature.bits
    }

    /// Grid dimensions as (in-phase levels, quadrature levels).
    pub fn grid(&self) -> (usize, usize) {
        (self.in_phase.levels(), self.quadrature.levels())
    }

    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    #[inline]
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Maps a bit string of length log2(M) to its symbol.
    pub fn modulate(&self, bits: &[u8]) -> Result<Complex64> {
        if bits.len() != self.bits_per_symbol() {
            return Err(Error::WrongBitCount {
                expected: self.bits_per_symbol(),
                actual: bits.len(),
            });
        }
        Ok(self.points[bits_to_word(bits)? as usize])
    }

    /// Label of the nearest point (ties resolve to the lowest label).
    #[inline]
    pub fn slice(&self, z: Complex64) -> usize {
        let i = self.in_phase.slice(z.re / self.scale);
        let q = self.quadrature.slice(z.im / self.scale);
        (i << self.quadrature.bits) | q
    }

    /// Bits of the nearest point to `z`.
    pub fn demodulate_hard(&self, z: Complex64) -> Vec<u8> {
        word_to_bits(self.slice(z) as u64, self.bits_per_symbol())
    }

    /// Label of `z` if it is (numerically) one of the points.
    pub fn label_of(&self, z: Complex64) -> Option<usize> {
        let label = self.slice(z);
        let tol = 1e-9 * self.min_distance();
        ((self.points[label] - z).norm() <= tol).then_some(label)
    }
}
