use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ismsim::montecarlo::{efficiency_mismatch, gain_at_ber, run_sweep, BerCurve, Scenario};
use ismsim::scenario_io::{load_csv, load_scenarios, manifest_path, write_outputs, Manifest};
use ismsim::selftest::run_selftest;

const WORKERS_ENV: &str = "ISMSIM_WORKERS";

#[derive(Parser)]
#[command(name = "ismsim", version, about = "Spatial modulation BER simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenarios of a TOML file and write one CSV + manifest per scenario.
    Simulate {
        config: PathBuf,
        /// Only run the named scenario.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override every scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: $ISMSIM_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Override every scenario's block cap.
        #[arg(long)]
        max_blocks: Option<u64>,
        /// Write 0 in the wall_time_s column so output is reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
    },
    /// Re-run a scenario from a manifest written by `simulate`.
    Rerun {
        manifest: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// SNR gain of curve A over curve B at a target BER.
    Gain {
        #[arg(long)]
        curve_a: PathBuf,
        #[arg(long)]
        curve_b: PathBuf,
        #[arg(long)]
        ber: f64,
    },
    /// Run the built-in property checks.
    Selftest,
}

fn worker_pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let from_env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(v.parse::<usize>().with_context(|| format!("{WORKERS_ENV}={v}"))?),
        Err(_) => None,
    };
    let n = workers.or(from_env).unwrap_or(0);
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn run_and_write(pool: &rayon::ThreadPool, sc: &Scenario, out: &PathBuf, timing: bool) -> anyhow::Result<BerCurve> {
    eprintln!(
        "running `{}` ({} {}x{}, M_A={}, M={}, {} bits/s/Hz)",
        sc.name,
        sc.scheme,
        sc.cfg.num_tx(),
        sc.cfg.num_rx(),
        sc.cfg.num_active(),
        sc.cfg.mod_order(),
        sc.block_bits()
    );
    let curve = pool.install(|| run_sweep(sc))?;
    for p in &curve.points {
        eprintln!(
            "  {:>7.2} dB  ber {:.3e}  errors {:>6}  blocks {:>9}  {:.1}s",
            p.snr_db, p.ber, p.bit_errors, p.blocks_sent, p.wall_time_s
        );
    }
    let path = write_outputs(&curve, out, timing)?;
    println!("{}", path.display());
    Ok(curve)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate {
            config,
            scenario,
            out,
            seed,
            workers,
            max_blocks,
            no_timing,
        } => {
            let mut scenarios = load_scenarios(&config).with_context(|| config.display().to_string())?;
            if let Some(name) = &scenario {
                scenarios.retain(|s| &s.name == name);
                if scenarios.is_empty() {
                    bail!("no scenario named `{name}` in {}", config.display());
                }
            }
            for sc in &mut scenarios {
                if let Some(seed) = seed {
                    sc.master_seed = seed;
                }
                if let Some(max_blocks) = max_blocks {
                    sc.stop.max_blocks = max_blocks;
                }
            }
            let pool = worker_pool(workers)?;
            for sc in &scenarios {
                run_and_write(&pool, sc, &out, !no_timing)?;
            }
            Ok(true)
        }
        Command::Rerun { manifest, out, workers } => {
            let m = Manifest::load(&manifest).with_context(|| manifest.display().to_string())?;
            let sc = m.to_scenario()?;
            run_and_write(&worker_pool(workers)?, &sc, &out, m.timing_recorded)?;
            Ok(true)
        }
        Command::Gain { curve_a, curve_b, ber } => {
            let a = load_csv(&curve_a).with_context(|| curve_a.display().to_string())?;
            let b = load_csv(&curve_b).with_context(|| curve_b.display().to_string())?;
            let ma = Manifest::load(&manifest_path(&curve_a)).ok();
            let mb = Manifest::load(&manifest_path(&curve_b)).ok();
            if let (Some(ma), Some(mb)) = (ma, mb) {
                if let (Ok(sa), Ok(sb)) = (ma.to_scenario(), mb.to_scenario()) {
                    if let Some(msg) = efficiency_mismatch(&sa, &sb) {
                        eprintln!("warning: {msg}");
                    }
                }
            }
            let gain = gain_at_ber(&a, &b, ber)?;
            println!("{gain:.4}");
            Ok(true)
        }
        Command::Selftest => {
            let mut ok = true;
            for c in run_selftest() {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
