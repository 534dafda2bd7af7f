//! Python bindings for `ismsim`.
//!
//! Complex vectors are Python lists of `complex`; channel matrices are lists
//! of rows. Library errors surface as `ValueError` (`OSError` for I/O).

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use ismsim::channel::ChannelMatrix;
use ismsim::{detection, modem, montecarlo, scenario_io, sm_mapping};

fn to_py(e: ismsim::Error) -> PyErr {
    match e {
        ismsim::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ChannelMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("channel rows must all have the same length"));
    }
    Ok(ChannelMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Bits go back to Python as a list of ints rather than `bytes`.
fn bit_list(bits: Vec<u8>) -> Vec<u32> {
    bits.into_iter().map(u32::from).collect()
}

fn rows_of(h: &ChannelMatrix) -> Vec<Vec<Complex64>> {
    (0..h.nrows()).map(|i| h.row(i).iter().copied().collect()).collect()
}

/// Gray-coded BPSK or rectangular QAM alphabet with unit average energy.
#[pyclass(frozen, name = "Constellation")]
struct PyConstellation(modem::Constellation);

#[pymethods]
impl PyConstellation {
    #[new]
    #[pyo3(signature = (order, scheme=None))]
    fn new(order: usize, scheme: Option<&str>) -> PyResult<Self> {
        let scheme = match scheme {
            Some(s) => s.parse().map_err(to_py)?,
            None => modem::ModScheme::default_for(order),
        };
        modem::Constellation::new(order, scheme).map(Self).map_err(to_py)
    }

    #[getter]
    fn order(&self) -> usize {
        self.0.order()
    }

    #[getter]
    fn scheme(&self) -> String {
        self.0.scheme().to_string()
    }

    #[getter]
    fn bits_per_symbol(&self) -> usize {
        self.0.bits_per_symbol()
    }

    /// Points indexed by label.
    fn points(&self) -> Vec<Complex64> {
        self.0.points().to_vec()
    }

    fn min_distance(&self) -> f64 {
        self.0.min_distance()
    }

    fn modulate(&self, bits: Vec<u8>) -> PyResult<Complex64> {
        self.0.modulate(&bits).map_err(to_py)
    }

    /// Label of the nearest point.
    fn slice(&self, z: Complex64) -> usize {
        self.0.slice(z)
    }

    fn demodulate_hard(&self, z: Complex64) -> Vec<u32> {
        bit_list(self.0.demodulate_hard(z))
    }

    fn __len__(&self) -> usize {
        self.0.order()
    }

    fn __repr__(&self) -> String {
        format!("Constellation({}, '{}')", self.0.order(), self.0.scheme())
    }
}

#[pyclass(frozen, skip_from_py_object, name = "IsmConfig")]
#[derive(Clone, Copy)]
struct PyIsmConfig(sm_mapping::IsmConfig);

#[pymethods]
impl PyIsmConfig {
    #[new]
    #[pyo3(signature = (num_tx, num_rx, num_active, mod_order, symbol_energy=1.0))]
    fn new(num_tx: usize, num_rx: usize, num_active: usize, mod_order: usize, symbol_energy: f64) -> PyResult<Self> {
        sm_mapping::IsmConfig::new(num_tx, num_rx, num_active, mod_order)
            .and_then(|c| c.with_symbol_energy(symbol_energy))
            .map(Self)
            .map_err(to_py)
    }

    /// Conventional spatial modulation (one active antenna).
    #[staticmethod]
    #[pyo3(signature = (num_tx, num_rx, mod_order, symbol_energy=1.0))]
    fn sm(num_tx: usize, num_rx: usize, mod_order: usize, symbol_energy: f64) -> PyResult<Self> {
        sm_mapping::IsmConfig::sm(num_tx, num_rx, mod_order)
            .and_then(|c| c.with_symbol_energy(symbol_energy))
            .map(Self)
            .map_err(to_py)
    }

    /// Every antenna active, as used by V-BLAST.
    #[staticmethod]
    #[pyo3(signature = (num_tx, num_rx, mod_order, symbol_energy=1.0))]
    fn multiplexing(num_tx: usize, num_rx: usize, mod_order: usize, symbol_energy: f64) -> PyResult<Self> {
        sm_mapping::IsmConfig::multiplexing(num_tx, num_rx, mod_order)
            .and_then(|c| c.with_symbol_energy(symbol_energy))
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn num_tx(&self) -> usize {
        self.0.num_tx()
    }
    #[getter]
    fn num_rx(&self) -> usize {
        self.0.num_rx()
    }
    #[getter]
    fn num_active(&self) -> usize {
        self.0.num_active()
    }
    #[getter]
    fn mod_order(&self) -> usize {
        self.0.mod_order()
    }
    #[getter]
    fn symbol_energy(&self) -> f64 {
        self.0.symbol_energy()
    }
    #[getter]
    fn block_bits(&self) -> usize {
        self.0.block_bits()
    }
    #[getter]
    fn spectral_efficiency(&self) -> f64 {
        self.0.spectral_efficiency()
    }
    #[getter]
    fn hypotheses(&self) -> usize {
        self.0.hypotheses()
    }
    /// Per-symbol amplitude sqrt(E_s / M_A).
    #[getter]
    fn amplitude(&self) -> f64 {
        self.0.amplitude()
    }

    fn __repr__(&self) -> String {
        format!(
            "IsmConfig(num_tx={}, num_rx={}, num_active={}, mod_order={}, symbol_energy={})",
            self.0.num_tx(),
            self.0.num_rx(),
            self.0.num_active(),
            self.0.mod_order(),
            self.0.symbol_energy()
        )
    }
}

#[pyclass(frozen, get_all, name = "TransmitVector")]
struct PyTransmitVector {
    x: Vec<Complex64>,
    antenna_index: usize,
    symbols: Vec<Complex64>,
    labels: Vec<usize>,
}

#[pyclass(frozen, get_all, name = "DetectionResult")]
struct PyDetectionResult {
    antenna_index: usize,
    symbols: Vec<Complex64>,
    labels: Vec<usize>,
    metric: f64,
    hypotheses_searched: usize,
}

impl From<detection::DetectionResult> for PyDetectionResult {
    fn from(r: detection::DetectionResult) -> Self {
        Self {
            antenna_index: r.antenna_index,
            symbols: r.symbols,
            labels: r.labels,
            metric: r.metric,
            hypotheses_searched: r.hypotheses_searched,
        }
    }
}

#[pyfunction]
fn map_block(bits: Vec<u8>, cfg: &PyIsmConfig, c: &PyConstellation) -> PyResult<PyTransmitVector> {
    let tv = sm_mapping::map_block(&bits, &cfg.0, &c.0).map_err(to_py)?;
    Ok(PyTransmitVector {
        x: tv.x,
        antenna_index: tv.antenna_index,
        symbols: tv.symbols,
        labels: tv.labels,
    })
}

#[pyfunction]
fn demap_block(antenna_index: usize, symbols: Vec<Complex64>, cfg: &PyIsmConfig, c: &PyConstellation) -> PyResult<Vec<u32>> {
    sm_mapping::demap_block(antenna_index, &symbols, &cfg.0, &c.0)
        .map(bit_list)
        .map_err(to_py)
}

#[pyfunction]
fn circular_shift(v: Vec<Complex64>, i: usize) -> PyResult<Vec<Complex64>> {
    sm_mapping::circular_shift(&v, i).map_err(to_py)
}

#[pyfunction]
fn noise_var_from_snr(snr_db: f64, cfg: &PyIsmConfig) -> f64 {
    ismsim::channel::noise_var_from_snr(snr_db, &cfg.0)
}

/// Draws an i.i.d. CN(0, 1) channel from a seeded generator.
#[pyfunction]
fn sample_channel(num_rx: usize, num_tx: usize, seed: u64) -> Vec<Vec<Complex64>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rows_of(&ismsim::channel::sample_channel(num_rx, num_tx, &mut rng))
}

#[pyfunction]
fn ml_detect_ism(
    y: Vec<Complex64>,
    h: Vec<Vec<Complex64>>,
    cfg: &PyIsmConfig,
    c: &PyConstellation,
) -> PyResult<PyDetectionResult> {
    detection::ml_detect_ism(&y, &matrix(h)?, &cfg.0, &c.0)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (y, h, num_tx, c, symbol_energy=1.0))]
fn ml_detect_sm(
    y: Vec<Complex64>,
    h: Vec<Vec<Complex64>>,
    num_tx: usize,
    c: &PyConstellation,
    symbol_energy: f64,
) -> PyResult<PyDetectionResult> {
    detection::ml_detect_sm(&y, &matrix(h)?, num_tx, symbol_energy, &c.0)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (y, h, noise_var, c, symbol_energy=1.0))]
fn vblast_mmse_osic(
    y: Vec<Complex64>,
    h: Vec<Vec<Complex64>>,
    noise_var: f64,
    c: &PyConstellation,
    symbol_energy: f64,
) -> PyResult<Vec<Complex64>> {
    detection::vblast_mmse_osic(&y, &matrix(h)?, noise_var, symbol_energy, &c.0).map_err(to_py)
}

#[pyclass(frozen, get_all, skip_from_py_object, name = "BerPoint")]
#[derive(Clone)]
struct PyBerPoint {
    snr_db: f64,
    bits_sent: u64,
    bit_errors: u64,
    ber: f64,
    blocks_sent: u64,
    wall_time_s: f64,
}

impl From<&montecarlo::BerPoint> for PyBerPoint {
    fn from(p: &montecarlo::BerPoint) -> Self {
        Self {
            snr_db: p.snr_db,
            bits_sent: p.bits_sent,
            bit_errors: p.bit_errors,
            ber: p.ber,
            blocks_sent: p.blocks_sent,
            wall_time_s: p.wall_time_s,
        }
    }
}

impl From<&PyBerPoint> for montecarlo::BerPoint {
    fn from(p: &PyBerPoint) -> Self {
        Self {
            snr_db: p.snr_db,
            bits_sent: p.bits_sent,
            bit_errors: p.bit_errors,
            ber: p.ber,
            blocks_sent: p.blocks_sent,
            wall_time_s: p.wall_time_s,
        }
    }
}

#[pymethods]
impl PyBerPoint {
    fn __repr__(&self) -> String {
        format!(
            "BerPoint(snr_db={}, ber={:e}, bit_errors={}, bits_sent={})",
            self.snr_db, self.ber, self.bit_errors, self.bits_sent
        )
    }
}

/// A validated simulation scenario.
#[pyclass(name = "Scenario")]
struct PyScenario(montecarlo::Scenario);

#[pymethods]
impl PyScenario {
    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }
    #[getter]
    fn scheme(&self) -> String {
        self.0.scheme.to_string()
    }
    #[getter]
    fn config(&self) -> PyIsmConfig {
        PyIsmConfig(self.0.cfg)
    }
    #[getter]
    fn snr_points_db(&self) -> Vec<f64> {
        self.0.snr_points_db.clone()
    }
    #[setter]
    fn set_snr_points_db(&mut self, snrs: Vec<f64>) {
        self.0.snr_points_db = snrs;
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.0.master_seed
    }
    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.master_seed = seed;
    }
    #[getter]
    fn min_bit_errors(&self) -> u64 {
        self.0.stop.min_bit_errors
    }
    #[setter]
    fn set_min_bit_errors(&mut self, n: u64) {
        self.0.stop.min_bit_errors = n;
    }
    #[getter]
    fn max_blocks(&self) -> u64 {
        self.0.stop.max_blocks
    }
    #[setter]
    fn set_max_blocks(&mut self, n: u64) {
        self.0.stop.max_blocks = n;
    }
    #[getter]
    fn spectral_efficiency(&self) -> f64 {
        self.0.spectral_efficiency()
    }

    fn __repr__(&self) -> String {
        format!("Scenario('{}', {}, {} bits/s/Hz)", self.0.name, self.0.scheme, self.0.block_bits())
    }
}

/// Parses a TOML scenario document.
#[pyfunction]
fn parse_scenarios(document: &str) -> PyResult<Vec<PyScenario>> {
    Ok(scenario_io::parse_scenarios(document)
        .map_err(to_py)?
        .into_iter()
        .map(PyScenario)
        .collect())
}

/// Runs every SNR point of `scenario` with the GIL released.
#[pyfunction]
#[pyo3(signature = (scenario, workers=None))]
fn run_sweep(py: Python<'_>, scenario: &PyScenario, workers: Option<usize>) -> PyResult<Vec<PyBerPoint>> {
    let sc = scenario.0.clone();
    let curve = py
        .detach(move || {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.unwrap_or(0))
                .build()
                .map_err(|e| ismsim::Error::InvalidConfig(e.to_string()))?;
            pool.install(|| montecarlo::run_sweep(&sc))
        })
        .map_err(to_py)?;
    Ok(curve.points.iter().map(Into::into).collect())
}

#[pyfunction]
fn load_csv(path: std::path::PathBuf) -> PyResult<Vec<PyBerPoint>> {
    Ok(scenario_io::load_csv(&path).map_err(to_py)?.iter().map(Into::into).collect())
}

/// SNR gain in dB of curve `a` over curve `b` at `target_ber`.
#[pyfunction]
fn gain_at_ber(a: Vec<PyRef<'_, PyBerPoint>>, b: Vec<PyRef<'_, PyBerPoint>>, target_ber: f64) -> PyResult<f64> {
    let a: Vec<montecarlo::BerPoint> = a.iter().map(|p| (&**p).into()).collect();
    let b: Vec<montecarlo::BerPoint> = b.iter().map(|p| (&**p).into()).collect();
    montecarlo::gain_at_ber(&a, &b, target_ber).map_err(to_py)
}

#[pymodule]
fn pyismsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstellation>()?;
    m.add_class::<PyIsmConfig>()?;
    m.add_class::<PyTransmitVector>()?;
    m.add_class::<PyDetectionResult>()?;
    m.add_class::<PyBerPoint>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(map_block, m)?)?;
    m.add_function(wrap_pyfunction!(demap_block, m)?)?;
    m.add_function(wrap_pyfunction!(circular_shift, m)?)?;
    m.add_function(wrap_pyfunction!(noise_var_from_snr, m)?)?;
    m.add_function(wrap_pyfunction!(sample_channel, m)?)?;
    m.add_function(wrap_pyfunction!(ml_detect_ism, m)?)?;
    m.add_function(wrap_pyfunction!(ml_detect_sm, m)?)?;
    m.add_function(wrap_pyfunction!(vblast_mmse_osic, m)?)?;
    m.add_function(wrap_pyfunction!(parse_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(gain_at_ber, m)?)?;
    m.add("SNR_CONVENTION", ismsim::channel::SNR_CONVENTION)?;
    Ok(())
}
