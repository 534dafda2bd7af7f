//! Bit-block to transmit-vector mapping for spatial modulation with several
//! active antennas.
//!
//! A block of `log2(M_T) + M_A * log2(M)` bits is split into an antenna-index
//! field followed by `M_A` symbol fields. The index field selects the first
//! active antenna `i`; the `M_A` symbols occupy antennas `i, i+1, ...` with
//! wraparound past `M_T`. With `M_A = 1` this is conventional spatial
//! modulation. A configuration with every antenna active (`M_A = M_T`) is plain
//! spatial multiplexing and carries no index bits.

use num_complex::Complex64;

use crate::bits::{bits_to_word, word_to_bits};
use crate::error::{Error, Result};
use crate::modem::Constellation;

/// Antenna and modulation parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsmConfig {
    num_tx: usize,
    num_rx: usize,
    num_active: usize,
    mod_order: usize,
    symbol_energy: f64,
}

fn check_order(mod_order: usize) -> Result<()> {
    if !mod_order.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(mod_order));
    }
    if !(2..=crate::modem::MAX_ORDER).contains(&mod_order) {
        return Err(Error::UnsupportedOrder(mod_order));
    }
    Ok(())
}

impl IsmConfig {
    /// Index-modulated configuration: `M_T` a power of two, `1 <= M_A < M_T`.
    pub fn new(num_tx: usize, num_rx: usize, num_active: usize, mod_order: usize) -> Result<Self> {
        if !num_tx.is_power_of_two() || num_tx < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_tx must be a power of two >= 2, got {num_tx}"
            )));
        }
        if num_active == 0 || num_active >= num_tx {
            return Err(Error::InvalidConfig(format!(
                "num_active must satisfy 1 <= num_active < num_tx ({num_tx}), got {num_active}"
            )));
        }
        if num_rx == 0 {
            return Err(Error::InvalidConfig("num_rx must be >= 1".into()));
        }
        check_order(mod_order)?;
        Ok(Self {
            num_tx,
            num_rx,
            num_active,
            mod_order,
            symbol_energy: 1.0,
        })
    }

    /// Conventional spatial modulation (one active antenna).
    pub fn sm(num_tx: usize, num_rx: usize, mod_order: usize) -> Result<Self> {
        Self::new(num_tx, num_rx, 1, mod_order)
    }

    /// Spatial multiplexing over all `num_tx` antennas (V-BLAST). Any antenna
    /// count is allowed as long as `num_tx <= num_rx`.
    pub fn multiplexing(num_tx: usize, num_rx: usize, mod_order: usize) -> Result<Self> {
        if num_tx == 0 || num_tx > num_rx {
            return Err(Error::InvalidConfig(format!(
                "spatial multiplexing needs 1 <= num_tx <= num_rx, got {num_tx}x{num_rx}"
            )));
        }
        check_order(mod_order)?;
        Ok(Self {
            num_tx,
            num_rx,
            num_active: num_tx,
            mod_order,
            symbol_energy: 1.0,
        })
    }

    pub fn with_symbol_energy(mut self, symbol_energy: f64) -> Result<Self> {
        if !(symbol_energy.is_finite() && symbol_energy > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "symbol_energy must be positive, got {symbol_energy}"
            )));
        }
        self.symbol_energy = symbol_energy;
        Ok(self)
    }

    pub fn num_tx(&self) -> usize {
        self.num_tx
    }

    pub fn num_rx(&self) -> usize {
        self.num_rx
    }

    pub fn num_active(&self) -> usize {
        self.num_active
    }

    pub fn mod_order(&self) -> usize {
        self.mod_order
    }

    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }

    pub fn is_multiplexing(&self) -> bool {
        self.num_active == self.num_tx
    }

    /// Bits carried by the antenna index.
    pub fn index_bits(&self) -> usize {
        if self.is_multiplexing() {
            0
        } else {
            self.num_tx.trailing_zeros() as usize
        }
    }

    pub fn symbol_bits(&self) -> usize {
        self.mod_order.trailing_zeros() as usize
    }

    /// Bits per transmitted block, `log2(M_T * M^M_A)` for index modulation.
    pub fn block_bits(&self) -> usize {
        self.index_bits() + self.num_active * self.symbol_bits()
    }

    /// Bits per channel use, numerically equal to `block_bits`.
    pub fn spectral_efficiency(&self) -> f64 {
        self.block_bits() as f64
    }

    /// Number of distinct start positions for the active group.
    pub fn num_positions(&self) -> usize {
        if self.is_multiplexing() {
            1
        } else {
            self.num_tx
        }
    }

    /// Size of the joint (index, symbols) hypothesis space.
    pub fn hypotheses(&self) -> usize {
        self.num_positions() * self.mod_order.pow(self.num_active as u32)
    }

    /// Amplitude applied to each active symbol, `sqrt(E_s / M_A)`.
    pub fn amplitude(&self) -> f64 {
        (self.symbol_energy / self.num_active as f64).sqrt()
    }
}

/// `log2(M_T) + M_A log2(M)`.
pub fn block_bits(cfg: &IsmConfig) -> usize {
    cfg.block_bits()
}

/// A mapped block.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitVector {
    /// Length-`M_T` antenna vector, scaled so that `E[|x|^2] = E_s`.
    pub x: Vec<Complex64>,
    /// First active antenna, 1-based.
    pub antenna_index: usize,
    /// Unit-energy constellation points `s_1 .. s_M_A`.
    pub symbols: Vec<Complex64>,
    /// Constellation labels of `symbols`.
    pub labels: Vec<usize>,
}

/// Rotates `v` so that entry `p` moves to `(p + i - 1) mod len`; `i` is 1-based
/// and `i = 1` is the identity.
pub fn circular_shift(v: &[Complex64], i: usize) -> Result<Vec<Complex64>> {
    let n = v.len();
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, max: n });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (p, &value) in v.iter().enumerate() {
        out[(p + i - 1) % n] = value;
    }
    Ok(out)
}

/// Mapper bound to one configuration and constellation.
#[derive(Debug, Clone)]
pub struct IsmMapper {
    cfg: IsmConfig,
    constellation: Constellation,
    amplitude: f64,
}

impl IsmMapper {
    pub fn new(cfg: IsmConfig, constellation: Constellation) -> Result<Self> {
        if constellation.order() != cfg.mod_order() {
            return Err(Error::ConstellationMismatch {
                constellation: constellation.order(),
                configured: cfg.mod_order(),
            });
        }
        Ok(Self {
            amplitude: cfg.amplitude(),
            cfg,
            constellation,
        })
    }

    pub fn config(&self) -> &IsmConfig {
        &self.cfg
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Splits a block word into (0-based start antenna, symbol labels).
    pub fn split_word(&self, word: u64, labels: &mut [usize]) -> usize {
        let sb = self.cfg.symbol_bits();
        let mask = (1u64 << sb) - 1;
        let na = self.cfg.num_active();
        for (k, label) in labels.iter_mut().enumerate().take(na) {
            *label = ((word >> ((na - 1 - k) * sb)) & mask) as usize;
        }
        (word >> (na * sb)) as usize
    }

    /// Inverse of [`split_word`](Self::split_word).
    pub fn join_word(&self, start: usize, labels: &[usize]) -> u64 {
        let sb = self.cfg.symbol_bits();
        labels
            .iter()
            .fold(start as u64, |acc, &l| (acc << sb) | l as u64)
    }

    /// Writes the antenna vector for `word` into `x` (length `M_T`).
    pub fn write_word(&self, word: u64, x: &mut [Complex64]) {
        let nt = self.cfg.num_tx();
        let sb = self.cfg.symbol_bits();
        let mask = (1u64 << sb) - 1;
        let na = self.cfg.num_active();
        x.fill(Complex64::new(0.0, 0.0));
        let start = (word >> (na * sb)) as usize;
        for k in 0..na {
            let label = ((word >> ((na - 1 - k) * sb)) & mask) as usize;
            x[(start + k) % nt] = self.constellation.point(label) * self.amplitude;
        }
    }

    /// Maps an integer block (first bit most significant).
    pub fn map_word(&self, word: u64) -> TransmitVector {
        let mut labels = vec![0; self.cfg.num_active()];
        let start = self.split_word(word, &mut labels);
        let mut x = vec![Complex64::new(0.0, 0.0); self.cfg.num_tx()];
        self.write_word(word, &mut x);
        TransmitVector {
            x,
            antenna_index: start + 1,
            symbols: labels.iter().map(|&l| self.constellation.point(l)).collect(),
            labels,
        }
    }

    pub fn map_block(&self, bits: &[u8]) -> Result<TransmitVector> {
        let expected = self.cfg.block_bits();
        if bits.len() != expected {
            return Err(Error::WrongBitCount {
                expected,
                actual: bits.len(),
            });
        }
        Ok(self.map_word(bits_to_word(bits)?))
    }

    /// Recovers the block from a 1-based start antenna and exact symbols.
    pub fn demap_block(&self, antenna_index: usize, symbols: &[Complex64]) -> Result<Vec<u8>> {
        let positions = self.cfg.num_positions();
        if antenna_index == 0 || antenna_index > positions {
            return Err(Error::IndexOutOfRange {
                index: antenna_index,
                max: positions,
            });
        }
        if symbols.len() != self.cfg.num_active() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} symbols, got {}",
                self.cfg.num_active(),
                symbols.len()
            )));
        }
        let labels = symbols
            .iter()
            .map(|&s| {
                self.constellation
                    .label_of(s)
                    .ok_or(Error::NotAConstellationPoint(s))
            })
            .collect::<Result<Vec<_>>>()?;
        let word = self.join_word(antenna_index - 1, &labels);
        Ok(word_to_bits(word, self.cfg.block_bits()))
    }
}

pub fn map_block(bits: &[u8], cfg: &IsmConfig, c: &Constellation) -> Result<TransmitVector> {
    IsmMapper::new(*cfg, c.clone())?.map_block(bits)
}

pub fn demap_block(
    antenna_index: usize,
    symbols: &[Complex64],
    cfg: &IsmConfig,
    c: &Constellation,
) -> Result<Vec<u8>> {
    IsmMapper::new(*cfg, c.clone())?.demap_block(antenna_index, symbols)
}
