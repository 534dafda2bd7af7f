//! Receivers: exhaustive joint maximum-likelihood detection of (start antenna,
//! symbols), its single-antenna special case, and MMSE ordered successive
//! interference cancellation for spatial multiplexing.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::modem::Constellation;
use crate::sm_mapping::IsmConfig;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Output of an ML search.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Detected first active antenna, 1-based.
    pub antenna_index: usize,
    /// Detected unit-energy constellation points.
    pub symbols: Vec<Complex64>,
    pub labels: Vec<usize>,
    /// Squared residual `|y - H x|^2` of the chosen hypothesis.
    pub metric: f64,
    pub hypotheses_searched: usize,
}

/// Reusable buffers for [`MlDetector::detect_word`].
#[derive(Debug, Default, Clone)]
pub struct MlScratch {
    table: Vec<Complex64>,
    stack: Vec<Complex64>,
}

/// Exhaustive ML detector for a fixed antenna layout and constellation.
///
/// Per channel realization the detector tabulates `a * h_j * c_m` for every
/// antenna `j` and point `m`; the search then walks the hypothesis tree in
/// (start antenna, labels) lexicographic order, subtracting one tabulated
/// column per level. Only a strictly smaller residual replaces the incumbent,
/// so ties resolve to the smallest start antenna and then the smallest labels.
#[derive(Debug, Clone)]
pub struct MlDetector {
    num_tx: usize,
    num_active: usize,
    positions: usize,
    amplitude: f64,
    constellation: Constellation,
}

#[derive(Clone, Copy)]
struct Best {
    metric: f64,
    start: usize,
    labels: u64,
}

impl MlDetector {
    pub fn new(cfg: &IsmConfig, constellation: &Constellation) -> Result<Self> {
        if constellation.order() != cfg.mod_order() {
            return Err(Error::ConstellationMismatch {
                constellation: constellation.order(),
                configured: cfg.mod_order(),
            });
        }
        Ok(Self {
            num_tx: cfg.num_tx(),
            num_active: cfg.num_active(),
            positions: cfg.num_positions(),
            amplitude: cfg.amplitude(),
            constellation: constellation.clone(),
        })
    }

    /// Single-active-antenna detector over `num_tx` antennas with all energy
    /// on the active antenna.
    pub fn single_antenna(num_tx: usize, symbol_energy: f64, constellation: &Constellation) -> Self {
        Self {
            num_tx,
            num_active: 1,
            positions: num_tx,
            amplitude: symbol_energy.sqrt(),
            constellation: constellation.clone(),
        }
    }

    pub fn hypotheses(&self) -> usize {
        self.positions * self.constellation.order().pow(self.num_active as u32)
    }

    fn check_dims(&self, y: &[Complex64], h: &ChannelMatrix) -> Result<()> {
        if h.ncols() != self.num_tx {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} columns, detector expects {}",
                h.ncols(),
                self.num_tx
            )));
        }
        if h.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} rows, received vector has {} entries",
                h.nrows(),
                y.len()
            )));
        }
        Ok(())
    }

    /// Runs the search and returns the detected block word and its metric.
    pub fn detect_word(
        &self,
        y: &[Complex64],
        h: &ChannelMatrix,
        scratch: &mut MlScratch,
    ) -> Result<(u64, f64)> {
        self.check_dims(y, h)?;
        let best = self.search(y, h, scratch);
        let sb = self.constellation.bits_per_symbol();
        let word = ((best.start as u64) << (self.num_active * sb)) | best.labels;
        Ok((word, best.metric))
    }

    pub fn detect(&self, y: &[Complex64], h: &ChannelMatrix) -> Result<DetectionResult> {
        self.check_dims(y, h)?;
        let best = self.search(y, h, &mut MlScratch::default());
        let sb = self.constellation.bits_per_symbol();
        let mask = (1u64 << sb) - 1;
        let labels: Vec<usize> = (0..self.num_active)
            .map(|k| ((best.labels >> ((self.num_active - 1 - k) * sb)) & mask) as usize)
            .collect();
        Ok(DetectionResult {
            antenna_index: best.start + 1,
            symbols: labels.iter().map(|&l| self.constellation.point(l)).collect(),
            labels,
            metric: best.metric,
            hypotheses_searched: self.hypotheses(),
        })
    }

    fn search(&self, y: &[Complex64], h: &ChannelMatrix, scratch: &mut MlScratch) -> Best {
        let nr = y.len();
        let order = self.constellation.order();
        let points = self.constellation.points();

        scratch.table.clear();
        scratch.table.reserve(self.num_tx * order * nr);
        for col in h.column_iter() {
            for &p in points {
                let s = p * self.amplitude;
                scratch.table.extend(col.iter().map(|&hv| hv * s));
            }
        }
        scratch.stack.clear();
        scratch.stack.resize(self.num_active * nr, ZERO);
        scratch.stack[..nr].copy_from_slice(y);

        let mut best = Best {
            metric: f64::INFINITY,
            start: 0,
            labels: 0,
        };
        for start in 0..self.positions {
            self.descend(0, start, 0, nr, &scratch.table, &mut scratch.stack, &mut best);
        }
        best
    }

    /// `stack[..nr]` holds the residual after subtracting levels `..level`;
    /// the rest is scratch for deeper levels.
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        level: usize,
        start: usize,
        prefix: u64,
        nr: usize,
        table: &[Complex64],
        stack: &mut [Complex64],
        best: &mut Best,
    ) {
        let order = self.constellation.order();
        let sb = self.constellation.bits_per_symbol();
        let antenna = (start + level) % self.num_tx;
        let columns = &table[antenna * order * nr..(antenna + 1) * order * nr];
        let (residual, deeper) = stack.split_at_mut(nr);

        if level + 1 == self.num_active {
            for (label, column) in columns.chunks_exact(nr).enumerate() {
                let metric: f64 = residual
                    .iter()
                    .zip(column)
                    .map(|(r, c)| (r - c).norm_sqr())
                    .sum();
                if metric < best.metric {
                    *best = Best {
                        metric,
                        start,
                        labels: (prefix << sb) | label as u64,
                    };
                }
            }
        } else {
            for (label, column) in columns.chunks_exact(nr).enumerate() {
                for ((next, r), c) in deeper[..nr].iter_mut().zip(residual.iter()).zip(column) {
                    *next = r - c;
                }
                self.descend(
                    level + 1,
                    start,
                    (prefix << sb) | label as u64,
                    nr,
                    table,
                    deeper,
                    best,
                );
            }
        }
    }
}

/// Joint ML estimate of start antenna and symbols.
pub fn ml_detect_ism(
    y: &[Complex64],
    h: &ChannelMatrix,
    cfg: &IsmConfig,
    c: &Constellation,
) -> Result<DetectionResult> {
    MlDetector::new(cfg, c)?.detect(y, h)
}

/// ML detector for conventional spatial modulation: one active antenna out of
/// `m_t`, transmitted with amplitude `sqrt(E_s)`.
pub fn ml_detect_sm(
    y: &[Complex64],
    h: &ChannelMatrix,
    m_t: usize,
    symbol_energy: f64,
    c: &Constellation,
) -> Result<DetectionResult> {
    MlDetector::single_antenna(m_t, symbol_energy, c).detect(y, h)
}

/// Natural log of the complex Gaussian likelihood `p(y | H, x)` with noise
/// variance `noise_var` per receive antenna.
pub fn log_likelihood(y: &[Complex64], h: &ChannelMatrix, x: &[Complex64], noise_var: f64) -> f64 {
    let residual: f64 = (0..h.nrows())
        .map(|r| {
            let hx: Complex64 = (0..h.ncols()).map(|j| h[(r, j)] * x[j]).sum();
            (y[r] - hx).norm_sqr()
        })
        .sum();
    let m_r = y.len() as f64;
    -m_r * (std::f64::consts::PI * noise_var).ln() - residual / noise_var
}

/// MMSE ordered successive interference cancellation for spatial
/// multiplexing over all columns of `H`.
///
/// Each stage inverts `H_r^H H_r + rho I` for the remaining columns, with
/// `rho = sigma_N^2 M_T / E_s`, detects the stream with the smallest diagonal
/// entry of that inverse (largest post-detection SINR, lowest index on ties),
/// hard-slices its MMSE filter output and cancels its contribution from the
/// received vector.
#[derive(Debug, Clone)]
pub struct VblastDetector {
    num_tx: usize,
    amplitude: f64,
    constellation: Constellation,
}

impl VblastDetector {
    pub fn new(num_tx: usize, symbol_energy: f64, constellation: &Constellation) -> Self {
        Self {
            num_tx,
            amplitude: (symbol_energy / num_tx as f64).sqrt(),
            constellation: constellation.clone(),
        }
    }

    pub fn from_config(cfg: &IsmConfig, constellation: &Constellation) -> Result<Self> {
        if !cfg.is_multiplexing() {
            return Err(Error::InvalidConfig(
                "V-BLAST requires every antenna to be active".into(),
            ));
        }
        if constellation.order() != cfg.mod_order() {
            return Err(Error::ConstellationMismatch {
                constellation: constellation.order(),
                configured: cfg.mod_order(),
            });
        }
        Ok(Self::new(cfg.num_tx(), cfg.symbol_energy(), constellation))
    }

    /// Detected labels, one per transmit antenna.
    pub fn detect_labels(&self, y: &[Complex64], h: &ChannelMatrix, noise_var: f64) -> Result<Vec<usize>> {
        if h.ncols() != self.num_tx || h.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel {}x{}, received vector {}, expected {} streams",
                h.nrows(),
                h.ncols(),
                y.len(),
                self.num_tx
            )));
        }
        if h.ncols() > h.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} streams exceed {} receive antennas",
                h.ncols(),
                h.nrows()
            )));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidNoiseVariance(noise_var));
        }

        let rho = noise_var / (self.amplitude * self.amplitude);
        let mut labels = vec![0; self.num_tx];
        let mut remaining: Vec<usize> = (0..self.num_tx).collect();
        let mut residual = DVector::from_column_slice(y);

        while !remaining.is_empty() {
            let hr = h.select_columns(&remaining);
            let hr_adj = hr.adjoint();
            let gram = &hr_adj * &hr + DMatrix::from_diagonal_element(remaining.len(), remaining.len(), Complex64::new(rho, 0.0));
            let inv = invert_hermitian(gram)?;

            let (pos, _) = inv
                .diagonal()
                .iter()
                .map(|d| d.re)
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, d)| if d < acc.1 { (k, d) } else { acc });

            let matched = &hr_adj * &residual;
            let filtered: Complex64 = inv.row(pos).iter().zip(matched.iter()).map(|(a, b)| a * b).sum();
            let estimate = filtered / self.amplitude;

            let stream = remaining[pos];
            let label = self.constellation.slice(estimate);
            labels[stream] = label;
            let sent = self.constellation.point(label) * self.amplitude;
            residual.axpy(-sent, &h.column(stream), Complex64::new(1.0, 0.0));
            remaining.remove(pos);
        }
        Ok(labels)
    }
}

fn invert_hermitian(m: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => m.try_inverse().ok_or(Error::SingularMatrix),
    }
}

/// MMSE-OSIC V-BLAST detection; returns the detected unit-energy symbols.
pub fn vblast_mmse_osic(
    y: &[Complex64],
    h: &ChannelMatrix,
    noise_var: f64,
    symbol_energy: f64,
    c: &Constellation,
) -> Result<Vec<Complex64>> {
    let det = VblastDetector::new(h.ncols(), symbol_energy, c);
    Ok(det
        .detect_labels(y, h, noise_var)?
        .into_iter()
        .map(|l| c.point(l))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, complex_gaussian, sample_channel};
    use crate::sm_mapping::IsmMapper;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent residual: explicit matrix-vector product over a mapped block.
    fn residual(y: &[Complex64], h: &ChannelMatrix, x: &[Complex64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        (yv - h * xv).norm_squared()
    }

    fn mapper(cfg: IsmConfig) -> IsmMapper {
        IsmMapper::new(cfg, Constellation::with_order(cfg.mod_order()).unwrap()).unwrap()
    }

    #[test]
    fn noiseless_recovery_all_blocks() {
        let cfg = IsmConfig::new(4, 4, 2, 4).unwrap();
        let m = mapper(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = sample_channel(4, 4, &mut rng);
        for word in 0..64u64 {
            let tv = m.map_word(word);
            let y = apply_channel(&h, &tv.x, 0.0, &mut rng).unwrap();
            let r = ml_detect_ism(y.as_slice(), &h, &cfg, m.constellation()).unwrap();
            assert_eq!(r.antenna_index, tv.antenna_index);
            assert_eq!(r.labels, tv.labels);
            assert_eq!(r.hypotheses_searched, 64);
            assert!(r.metric < 1e-20);
        }
    }

    #[test]
    fn all_zero_input_ties_to_first_hypothesis() {
        let cfg = IsmConfig::new(4, 4, 2, 4).unwrap();
        let c = Constellation::with_order(4).unwrap();
        let h = ChannelMatrix::zeros(4, 4);
        let r = ml_detect_ism(&[ZERO; 4], &h, &cfg, &c).unwrap();
        assert_eq!(r.antenna_index, 1);
        assert_eq!(r.labels, vec![0, 0]);
        assert_eq!(r.metric, 0.0);
    }

    #[test]
    fn returned_metric_is_global_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for cfg in [IsmConfig::new(4, 4, 2, 4).unwrap(), IsmConfig::new(8, 4, 3, 2).unwrap()] {
            let m = mapper(cfg);
            for _ in 0..100 {
                let h = sample_channel(4, cfg.num_tx(), &mut rng);
                let y: Vec<Complex64> = (0..4).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
                let r = ml_detect_ism(&y, &h, &cfg, m.constellation()).unwrap();
                let chosen = m.join_word(r.antenna_index - 1, &r.labels);
                let recomputed = residual(&y, &h, &m.map_word(chosen).x);
                assert!((recomputed - r.metric).abs() < 1e-9);
                for w in 0..cfg.hypotheses() as u64 {
                    assert!(r.metric <= residual(&y, &h, &m.map_word(w).x) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn likelihood_argmax_matches_residual_argmin() {
        let cfg = IsmConfig::new(4, 4, 2, 4).unwrap();
        let m = mapper(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let h = sample_channel(4, 4, &mut rng);
            let noise_var = rng.random_range(0.05..2.0);
            let tv = m.map_word(rng.random_range(0..64));
            let y = apply_channel(&h, &tv.x, noise_var, &mut rng).unwrap();
            let (best_word, _) = (0..64u64)
                .map(|w| (w, log_likelihood(y.as_slice(), &h, &m.map_word(w).x, noise_var)))
                .fold((0, f64::NEG_INFINITY), |acc, (w, l)| if l > acc.1 { (w, l) } else { acc });
            let r = ml_detect_ism(y.as_slice(), &h, &cfg, m.constellation()).unwrap();
            assert_eq!(m.join_word(r.antenna_index - 1, &r.labels), best_word);
        }
    }

    #[test]
    fn sm_noiseless_recovery() {
        let c = Constellation::with_order(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = sample_channel(4, 4, &mut rng);
        for i in 0..4 {
            for label in 0..16 {
                let mut x = vec![ZERO; 4];
                x[i] = c.point(label);
                let y = apply_channel(&h, &x, 0.0, &mut rng).unwrap();
                let r = ml_detect_sm(y.as_slice(), &h, 4, 1.0, &c).unwrap();
                assert_eq!((r.antenna_index, r.labels[0]), (i + 1, label));
            }
        }
    }

    #[test]
    fn sm_single_antenna_is_nearest_point() {
        let c = Constellation::with_order(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let h = sample_channel(1, 1, &mut rng);
            let y = [complex_gaussian(&mut rng, 2.0)];
            let r = ml_detect_sm(&y, &h, 1, 1.0, &c).unwrap();
            let h0 = h[(0, 0)];
            let nearest = (0..16)
                .min_by(|&a, &b| (y[0] - h0 * c.point(a)).norm().total_cmp(&(y[0] - h0 * c.point(b)).norm()))
                .unwrap();
            assert_eq!(r.antenna_index, 1);
            assert_eq!(r.labels[0], nearest);
        }
    }

    #[test]
    fn sm_agrees_with_single_active_ism() {
        let cfg = IsmConfig::sm(4, 4, 16).unwrap();
        let m = mapper(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let h = sample_channel(4, 4, &mut rng);
            let tv = m.map_word(rng.random_range(0..64));
            let y = apply_channel(&h, &tv.x, 0.3, &mut rng).unwrap();
            let a = ml_detect_sm(y.as_slice(), &h, 4, 1.0, m.constellation()).unwrap();
            let b = ml_detect_ism(y.as_slice(), &h, &cfg, m.constellation()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dimension_checks() {
        let cfg = IsmConfig::new(4, 4, 2, 4).unwrap();
        let c = Constellation::with_order(4).unwrap();
        let h = ChannelMatrix::zeros(4, 4);
        assert!(matches!(ml_detect_ism(&[ZERO; 3], &h, &cfg, &c), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            ml_detect_ism(&[ZERO; 4], &ChannelMatrix::zeros(4, 8), &cfg, &c),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            vblast_mmse_osic(&[ZERO; 2], &ChannelMatrix::zeros(2, 3), 0.1, 1.0, &c),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            vblast_mmse_osic(&[ZERO; 2], &ChannelMatrix::identity(2, 2), 0.0, 1.0, &c),
            Err(Error::InvalidNoiseVariance(_))
        ));
    }

    fn unitary_dft(n: usize) -> ChannelMatrix {
        let scale = 1.0 / (n as f64).sqrt();
        DMatrix::from_fn(n, n, |r, k| {
            Complex64::from_polar(scale, -2.0 * std::f64::consts::PI * (r * k) as f64 / n as f64)
        })
    }

    #[test]
    fn vblast_unitary_channel_exact() {
        let c = Constellation::with_order(16).unwrap();
        let h = unitary_dft(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = (1.0f64 / 4.0).sqrt();
        for _ in 0..200 {
            let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..16)).collect();
            let x: Vec<Complex64> = labels.iter().map(|&l| c.point(l) * a).collect();
            let y = apply_channel(&h, &x, 0.0, &mut rng).unwrap();
            let out = VblastDetector::new(4, 1.0, &c).detect_labels(y.as_slice(), &h, 1e-12).unwrap();
            assert_eq!(out, labels);
        }
    }

    #[test]
    fn vblast_single_stream_matches_sm() {
        // The biased MMSE output is a positive real multiple of the matched
        // filter output, so a quadrant decision agrees with ML.
        let c = Constellation::with_order(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let h = sample_channel(3, 1, &mut rng);
            let y: Vec<Complex64> = (0..3).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let v = vblast_mmse_osic(&y, &h, 0.2, 1.0, &c).unwrap();
            let s = ml_detect_sm(&y, &h, 1, 1.0, &c).unwrap();
            assert_eq!(v, s.symbols);
        }
    }

    #[test]
    fn vblast_never_beats_joint_ml() {
        // Block error rates over a 2x2 4-QAM corpus; the ML oracle below
        // enumerates all 16 symbol pairs directly.
        let c = Constellation::with_order(4).unwrap();
        let det = VblastDetector::new(2, 1.0, &c);
        let a = (0.5f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut osic_err, mut ml_err) = (0u32, 0u32);
        let trials = 10_000;
        for _ in 0..trials {
            let h = sample_channel(2, 2, &mut rng);
            let labels = [rng.random_range(0..4), rng.random_range(0..4)];
            let x = [c.point(labels[0]) * a, c.point(labels[1]) * a];
            let noise_var = 0.1;
            let y = apply_channel(&h, &x, noise_var, &mut rng).unwrap();
            let osic = det.detect_labels(y.as_slice(), &h, noise_var).unwrap();
            let mut best = (f64::INFINITY, [0, 0]);
            for p in 0..4 {
                for q in 0..4 {
                    let d = residual(y.as_slice(), &h, &[c.point(p) * a, c.point(q) * a]);
                    if d < best.0 {
                        best = (d, [p, q]);
                    }
                }
            }
            osic_err += u32::from(osic != labels);
            ml_err += u32::from(best.1 != labels);
        }
        let n = trials as f64;
        let (p_osic, p_ml) = (osic_err as f64 / n, ml_err as f64 / n);
        let sigma = ((p_osic * (1.0 - p_osic) + p_ml * (1.0 - p_ml)) / n).sqrt();
        assert!(p_osic + 3.0 * sigma >= p_ml, "osic {p_osic} ml {p_ml}");
        assert!(ml_err > 0 && osic_err >= ml_err);
    }

    #[test]
    fn detectors_are_deterministic() {
        let cfg = IsmConfig::new(8, 4, 3, 8).unwrap();
        let m = mapper(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = sample_channel(4, 8, &mut rng);
        let y: Vec<Complex64> = (0..4).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let a = ml_detect_ism(&y, &h, &cfg, m.constellation()).unwrap();
        let b = ml_detect_ism(&y, &h, &cfg, m.constellation()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hypotheses_searched, 8 * 512);
    }
}
