//! Scenario files, BER CSV output and run manifests.
//!
//! Scenario files are TOML. Each `[[scenario]]` table declares one link:
//!
//! ```toml
//! [[scenario]]
//! name = "ism_4x4_qpsk"
//! scheme = "ism"          # ism | sm | vblast
//! num_tx = 4
//! num_rx = 4
//! num_active = 2          # sm: 1 (default), vblast: num_tx (default)
//! mod_order = 4
//! mod_scheme = "qam"      # optional; bpsk for order 2, qam otherwise
//! snr_db = { start = 0.0, stop = 20.0, step = 2.0 }   # or a list
//! min_bit_errors = 200
//! max_blocks = 10000000
//! seed = 1
//! ```
//!
//! Scenarios sharing a `group` (all scenarios when no group is given) are
//! meant to be compared on one axis and must have equal spectral efficiency,
//! unless the file sets `allow_mixed_efficiency = true` at top level.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::SNR_CONVENTION;
use crate::error::{Error, Result};
use crate::modem::ModScheme;
use crate::montecarlo::{BerCurve, BerPoint, Scenario, Scheme, StoppingRule};
use crate::sm_mapping::IsmConfig;

pub const CSV_HEADER: [&str; 6] = ["snr_db", "bits_sent", "bit_errors", "ber", "blocks_sent", "wall_time_s"];
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_MAX_BLOCKS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl SnrSpec {
    fn expand(&self) -> std::result::Result<Vec<f64>, String> {
        match *self {
            SnrSpec::List(ref v) if v.is_empty() => Err("snr_db list is empty".into()),
            SnrSpec::List(ref v) => Ok(v.clone()),
            SnrSpec::Range { start, stop, step } => {
                if !(step > 0.0) || !step.is_finite() {
                    return Err(format!("step must be positive, got {step}"));
                }
                if !(stop >= start) {
                    return Err(format!("stop ({stop}) must not be below start ({start})"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|k| start + k as f64 * step).collect())
            }
        }
    }
}

/// One `[[scenario]]` table as written in a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub scheme: String,
    pub num_tx: usize,
    pub num_rx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_active: Option<usize>,
    pub mod_order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mod_scheme: Option<String>,
    pub snr_db: SnrSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_bit_errors: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_blocks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl ScenarioSpec {
    fn invalid(&self, field: &str, constraint: impl Into<String>) -> Error {
        Error::Validation {
            field: format!("{}.{field}", self.name),
            constraint: constraint.into(),
        }
    }

    /// Validates the table and applies defaults.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let scheme: Scheme = self
            .scheme
            .parse()
            .map_err(|_| self.invalid("scheme", format!("unknown scheme `{}`", self.scheme)))?;
        if !self.mod_order.is_power_of_two() {
            return Err(self.invalid("mod_order", format!("NotPowerOfTwo: {}", self.mod_order)));
        }
        let cfg = match scheme {
            Scheme::Ism => {
                let na = self
                    .num_active
                    .ok_or_else(|| self.invalid("num_active", "required for scheme ism"))?;
                if na >= self.num_tx {
                    return Err(self.invalid(
                        "num_active",
                        format!("requires num_active < num_tx, got {na} >= {}", self.num_tx),
                    ));
                }
                IsmConfig::new(self.num_tx, self.num_rx, na, self.mod_order)
            }
            Scheme::Sm => {
                if self.num_active.is_some_and(|na| na != 1) {
                    return Err(self.invalid("num_active", "scheme sm uses exactly one active antenna"));
                }
                IsmConfig::sm(self.num_tx, self.num_rx, self.mod_order)
            }
            Scheme::Vblast => {
                if self.num_active.is_some_and(|na| na != self.num_tx) {
                    return Err(self.invalid("num_active", "scheme vblast uses every antenna"));
                }
                IsmConfig::multiplexing(self.num_tx, self.num_rx, self.mod_order)
            }
        }
        .map_err(|e| self.invalid("num_tx", e.to_string()))?;
        let cfg = match self.symbol_energy {
            Some(es) => cfg
                .with_symbol_energy(es)
                .map_err(|e| self.invalid("symbol_energy", e.to_string()))?,
            None => cfg,
        };
        let mod_scheme = match &self.mod_scheme {
            Some(s) => s.parse().map_err(|_| self.invalid("mod_scheme", format!("unknown scheme `{s}`")))?,
            None => ModScheme::default_for(self.mod_order),
        };
        let snr = self.snr_db.expand().map_err(|e| self.invalid("snr_db", e))?;
        let stop = StoppingRule {
            min_bit_errors: self.min_bit_errors.unwrap_or(StoppingRule::default().min_bit_errors),
            max_blocks: self.max_blocks.unwrap_or(DEFAULT_MAX_BLOCKS),
            max_bits: self.max_bits.unwrap_or(u64::MAX),
        };
        if stop.max_blocks == 0 {
            return Err(self.invalid("max_blocks", "must be at least 1"));
        }
        Scenario::new(
            self.name.clone(),
            scheme,
            cfg,
            mod_scheme,
            snr,
            stop,
            self.seed.unwrap_or(DEFAULT_SEED),
        )
    }

    /// Fully explicit table reproducing `sc`.
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            name: sc.name.clone(),
            scheme: sc.scheme.to_string(),
            num_tx: sc.cfg.num_tx(),
            num_rx: sc.cfg.num_rx(),
            num_active: Some(sc.cfg.num_active()),
            mod_order: sc.cfg.mod_order(),
            mod_scheme: Some(sc.mod_scheme.to_string()),
            snr_db: SnrSpec::List(sc.snr_points_db.clone()),
            min_bit_errors: Some(sc.stop.min_bit_errors),
            max_blocks: Some(sc.stop.max_blocks),
            max_bits: (sc.stop.max_bits != u64::MAX).then_some(sc.stop.max_bits),
            seed: Some(sc.master_seed),
            symbol_energy: Some(sc.cfg.symbol_energy()),
            group: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    allow_mixed_efficiency: bool,
    #[serde(default)]
    scenario: Vec<toml::Spanned<ScenarioSpec>>,
}

fn line_of(document: &str, offset: usize) -> usize {
    document[..offset.min(document.len())].matches('\n').count() + 1
}

/// Parses and validates every scenario in a TOML document.
pub fn parse_scenarios(document: &str) -> Result<Vec<Scenario>> {
    let file: ScenarioFile = toml::from_str(document).map_err(|e| Error::Parse {
        line: e.span().map_or(0, |s| line_of(document, s.start)),
        message: e.message().to_string(),
    })?;
    if file.scenario.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no [[scenario]] tables found".into(),
        });
    }

    let mut scenarios = Vec::with_capacity(file.scenario.len());
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for spanned in &file.scenario {
        let line = line_of(document, spanned.span().start);
        let spec = spanned.get_ref();
        let sc = spec.to_scenario().map_err(|e| match e {
            Error::Validation { field, constraint } => Error::Validation {
                field,
                constraint: format!("{constraint} (scenario starting at line {line})"),
            },
            other => other,
        })?;
        if scenarios.iter().any(|s: &Scenario| s.name == sc.name) {
            return Err(Error::Validation {
                field: format!("{}.name", sc.name),
                constraint: format!("duplicate scenario name (line {line})"),
            });
        }
        groups
            .entry(spec.group.clone().unwrap_or_default())
            .or_default()
            .push(scenarios.len());
        scenarios.push(sc);
    }

    if !file.allow_mixed_efficiency {
        for (group, members) in &groups {
            let first = &scenarios[members[0]];
            if let Some(other) = members.iter().map(|&i| &scenarios[i]).find(|s| s.block_bits() != first.block_bits()) {
                return Err(Error::Validation {
                    field: "spectral_efficiency".into(),
                    constraint: format!(
                        "group `{group}` mixes {} bits/s/Hz (`{}`) with {} bits/s/Hz (`{}`); \
                         set allow_mixed_efficiency = true to compare them anyway",
                        first.block_bits(),
                        first.name,
                        other.block_bits(),
                        other.name
                    ),
                });
            }
        }
    }
    Ok(scenarios)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    parse_scenarios(&fs::read_to_string(path)?)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes the curve as CSV. With `record_timing` false the wall-time column
/// is written as 0 so that output depends only on the scenario and seed.
pub fn write_csv<W: Write>(curve: &BerCurve, out: W, record_timing: bool) -> Result<()> {
    if curve.points.is_empty() {
        return Err(Error::Validation {
            field: format!("{}.points", curve.scenario.name),
            constraint: "cannot write an empty curve".into(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for p in &curve.points {
        let wall = if record_timing { p.wall_time_s } else { 0.0 };
        w.write_record([
            format!("{}", p.snr_db),
            p.bits_sent.to_string(),
            p.bit_errors.to_string(),
            format!("{:e}", p.ber),
            p.blocks_sent.to_string(),
            format!("{wall}"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads points back from a CSV written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<BerPoint>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut points = Vec::new();
    for (k, row) in r.deserialize::<BerPoint>().enumerate() {
        points.push(row.map_err(|e| Error::Parse {
            line: k + 2,
            message: e.to_string(),
        })?);
    }
    Ok(points)
}

pub fn load_csv(path: &Path) -> Result<Vec<BerPoint>> {
    read_csv(fs::File::open(path)?)
}

/// Sidecar describing how a CSV was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scheme: String,
    pub num_tx: usize,
    pub num_rx: usize,
    pub num_active: usize,
    pub mod_order: usize,
    pub mod_scheme: String,
    pub spectral_efficiency: f64,
    pub seed: u64,
    pub snr_convention: String,
    pub min_bit_errors: u64,
    pub timing_recorded: bool,
    pub scenario: ScenarioSpec,
}

impl Manifest {
    pub fn new(sc: &Scenario, timing_recorded: bool) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scheme: sc.scheme.to_string(),
            num_tx: sc.cfg.num_tx(),
            num_rx: sc.cfg.num_rx(),
            num_active: sc.cfg.num_active(),
            mod_order: sc.cfg.mod_order(),
            mod_scheme: sc.mod_scheme.to_string(),
            spectral_efficiency: sc.spectral_efficiency(),
            seed: sc.master_seed,
            snr_convention: SNR_CONVENTION.into(),
            min_bit_errors: sc.stop.min_bit_errors,
            timing_recorded,
            scenario: ScenarioSpec::from_scenario(sc),
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        self.scenario.to_scenario()
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Writes `<dir>/<name>.csv` and its manifest; returns the CSV path.
pub fn write_outputs(curve: &BerCurve, dir: &Path, record_timing: bool) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", curve.scenario.name));
    write_csv(curve, fs::File::create(&csv_path)?, record_timing)?;
    let manifest = Manifest::new(&curve.scenario, record_timing);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?;
    fs::write(manifest_path(&csv_path), json + "\n")?;
    Ok(csv_path)
}
