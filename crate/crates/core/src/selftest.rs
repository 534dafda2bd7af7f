//! Quick property checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{apply_channel, complex_gaussian, sample_channel};
use crate::detection::MlDetector;
use crate::modem::Constellation;
use crate::sm_mapping::{IsmConfig, IsmMapper};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, result: Result<String, String>) -> CheckOutcome {
    let (passed, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

/// Antenna/modulation layouts used by the 6, 8 and 12 bit/s/Hz comparisons.
pub fn reference_configs() -> Vec<IsmConfig> {
    let build = [
        IsmConfig::new(4, 4, 2, 4),
        IsmConfig::sm(4, 4, 16),
        IsmConfig::multiplexing(3, 4, 4),
        IsmConfig::new(4, 4, 3, 4),
        IsmConfig::sm(4, 4, 64),
        IsmConfig::multiplexing(4, 4, 4),
        IsmConfig::new(8, 4, 3, 8),
        IsmConfig::new(4, 4, 2, 32),
        IsmConfig::sm(8, 4, 512),
        IsmConfig::multiplexing(4, 4, 8),
    ];
    build.into_iter().map(|c| c.expect("reference config")).collect()
}

fn constellations() -> Result<String, String> {
    for m in [2, 4, 8, 16, 32, 64, 128, 256, 512] {
        let c = Constellation::with_order(m).map_err(|e| e.to_string())?;
        let energy: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        if (energy - 1.0).abs() > 1e-12 {
            return Err(format!("M={m}: mean energy {energy}"));
        }
        for label in c.labels() {
            let z = c.modulate(&label).map_err(|e| e.to_string())?;
            if c.demodulate_hard(z) != label {
                return Err(format!("M={m}: round trip failed"));
            }
        }
    }
    Ok("9 orders".into())
}

fn mapping() -> Result<String, String> {
    let mut blocks = 0u64;
    for cfg in reference_configs() {
        let c = Constellation::with_order(cfg.mod_order()).map_err(|e| e.to_string())?;
        let m = IsmMapper::new(cfg, c).map_err(|e| e.to_string())?;
        let n = 1u64 << cfg.block_bits();
        let mut energy = 0.0;
        for w in 0..n {
            let tv = m.map_word(w);
            energy += tv.x.iter().map(|z| z.norm_sqr()).sum::<f64>();
            if m.join_word(tv.antenna_index - 1, &tv.labels) != w {
                return Err(format!("{cfg:?}: block {w} does not round-trip"));
            }
        }
        if (energy / n as f64 - cfg.symbol_energy()).abs() > 1e-9 {
            return Err(format!("{cfg:?}: power constraint violated"));
        }
        blocks += n;
    }
    Ok(format!("{blocks} blocks"))
}

fn noiseless_ml() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut trials = 0;
    for cfg in reference_configs().into_iter().filter(|c| c.hypotheses() <= 4096) {
        let c = Constellation::with_order(cfg.mod_order()).map_err(|e| e.to_string())?;
        let m = IsmMapper::new(cfg, c.clone()).map_err(|e| e.to_string())?;
        let det = MlDetector::new(&cfg, &c).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let w = rng.random_range(0..1u64 << cfg.block_bits());
            let h = sample_channel(cfg.num_rx(), cfg.num_tx(), &mut rng);
            let y = apply_channel(&h, &m.map_word(w).x, 0.0, &mut rng).map_err(|e| e.to_string())?;
            let r = det.detect(y.as_slice(), &h).map_err(|e| e.to_string())?;
            if m.join_word(r.antenna_index - 1, &r.labels) != w {
                return Err(format!("{cfg:?}: block {w} misdetected without noise"));
            }
            trials += 1;
        }
    }
    Ok(format!("{trials} noiseless detections"))
}

fn ml_optimality() -> Result<String, String> {
    let cfg = IsmConfig::new(4, 4, 2, 4).map_err(|e| e.to_string())?;
    let c = Constellation::with_order(4).map_err(|e| e.to_string())?;
    let m = IsmMapper::new(cfg, c.clone()).map_err(|e| e.to_string())?;
    let det = MlDetector::new(&cfg, &c).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0971);
    for _ in 0..200 {
        let h = sample_channel(4, 4, &mut rng);
        let y: Vec<_> = (0..4).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let r = det.detect(&y, &h).map_err(|e| e.to_string())?;
        for w in 0..64 {
            let hx = apply_channel(&h, &m.map_word(w).x, 0.0, &mut rng).map_err(|e| e.to_string())?;
            let d: f64 = y.iter().zip(hx.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d + 1e-12 < r.metric {
                return Err(format!("hypothesis {w} beats the returned minimum"));
            }
        }
    }
    Ok("200 exhaustive re-scans".into())
}

pub fn run_selftest() -> Vec<CheckOutcome> {
    vec![
        check("constellation invariants", constellations()),
        check("mapper bijection and power", mapping()),
        check("noiseless ML exactness", noiseless_ml()),
        check("ML global optimality", ml_optimality()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
