use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use sbcc::sim::{run_sweep, Profile, SimConfig};

/// Monte Carlo BER/BLER/FER simulator for blockwise SBCCs with sliding
/// window decoding.
#[derive(Debug, Parser)]
#[command(name = "sbcc-sim", version)]
struct Args {
    /// TOML configuration file; built-in desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated Eb/N0 points in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ebn0: Option<Vec<f64>>,
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// baseline | extension | extension+resync | all-on
    #[arg(long)]
    profile: Option<Profile>,
    /// Also write per-block error distributions.
    #[arg(long)]
    emit_block_histogram: bool,
    /// Block length T.
    #[arg(long)]
    block_len: Option<usize>,
    /// Blocks per frame L.
    #[arg(long)]
    frame_len: Option<usize>,
    /// Decode frames in parallel.
    #[arg(long)]
    parallel: bool,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SimConfig::from_toml(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = args.ebn0 {
        cfg.ebn0_db = v;
    }
    if let Some(f) = args.frames {
        cfg.frames = f;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    if let Some(p) = args.profile {
        p.apply(&mut cfg.decoder);
    }
    if let Some(t) = args.block_len {
        cfg.block_len = t;
    }
    if let Some(l) = args.frame_len {
        cfg.frame_len = l;
    }
    cfg.emit_block_histogram |= args.emit_block_histogram;
    cfg.parallel |= args.parallel;
    cfg.validate()?;

    let start = Instant::now();
    let stats = run_sweep(&cfg)?;
    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>8} {:>8} {:>7}",
        "Eb/N0", "BER", "BLER", "FER", "w_avg", "iters", "resync"
    );
    for p in &stats {
        println!(
            "{:>8.3} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.4} {:>8.3} {:>7}",
            p.ebn0_db,
            p.ber(),
            p.bler(),
            p.fer(),
            p.avg_window(),
            p.avg_horizontal_iters(),
            p.resync_count
        );
    }
    eprintln!(
        "wrote {} in {:.1} s",
        cfg.out_dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
