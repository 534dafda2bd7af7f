//! Link-level simulation of spatial modulation with several simultaneously
//! active transmit antennas, against conventional spatial modulation and
//! V-BLAST baselines, over i.i.d. flat Rayleigh fading.

pub mod bits;
pub mod channel;
pub mod detection;
pub mod error;
pub mod modem;
pub mod montecarlo;
pub mod scenario_io;
pub mod selftest;
pub mod sm_mapping;

pub use error::{Error, Result};
