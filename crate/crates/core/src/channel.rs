//! Flat Rayleigh MIMO channel with additive white Gaussian noise.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sm_mapping::IsmConfig;

pub type ChannelMatrix = DMatrix<Complex64>;

/// Describes how the SNR axis is defined; written into every run manifest.
pub const SNR_CONVENTION: &str =
    "SNR = E_s / sigma_N^2: total transmit energy per channel use over noise variance per receive antenna";

/// Draws one circularly-symmetric complex Gaussian sample with variance `var`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let sigma = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sigma * re, sigma * im)
}

/// `m_r x m_t` matrix of i.i.d. CN(0, 1) fading coefficients.
pub fn sample_channel<R: Rng + ?Sized>(m_r: usize, m_t: usize, rng: &mut R) -> ChannelMatrix {
    // Filled column by column, matching nalgebra's storage order.
    DMatrix::from_fn(m_r, m_t, |_, _| complex_gaussian(rng, 1.0))
}

/// Computes `y = H x + n` with `n ~ CN(0, noise_var I)`.
pub fn apply_channel<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    x: &[Complex64],
    noise_var: f64,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    if h.ncols() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} transmit antennas, vector has {} entries",
            h.ncols(),
            x.len()
        )));
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidNoiseVariance(noise_var));
    }
    let mut y = DVector::from_element(h.nrows(), Complex64::new(0.0, 0.0));
    for (col, &xj) in h.column_iter().zip(x) {
        if xj != Complex64::new(0.0, 0.0) {
            y.axpy(xj, &col, Complex64::new(1.0, 0.0));
        }
    }
    if noise_var > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, noise_var);
        }
    }
    Ok(y)
}

/// Noise variance giving `snr_db` under the E_s / sigma_N^2 convention.
/// `+inf` maps to a noiseless channel.
pub fn noise_var_from_snr(snr_db: f64, cfg: &IsmConfig) -> f64 {
    cfg.symbol_energy() / 10f64.powf(snr_db / 10.0)
}

/// One channel draw plus the noise level it is used with.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: ChannelMatrix,
    pub noise_var: f64,
}

impl ChannelRealization {
    pub fn sample<R: Rng + ?Sized>(m_r: usize, m_t: usize, noise_var: f64, rng: &mut R) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidNoiseVariance(noise_var));
        }
        Ok(Self {
            h: sample_channel(m_r, m_t, rng),
            noise_var,
        })
    }

    pub fn transmit<R: Rng + ?Sized>(&self, x: &[Complex64], rng: &mut R) -> Result<DVector<Complex64>> {
        apply_channel(&self.h, x, self.noise_var, rng)
    }
}
