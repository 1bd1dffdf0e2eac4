//! Monte Carlo driver: framed transmission, error accounting and reports.
//!
//! Seeds: the permutors come from `mix64(seed)`; each frame draws its info
//! bits and noise from `frame_seed(seed, ebn0_db, frame_index)`. The Eb/N0
//! value rather than its position in the sweep enters the hash, so reordering
//! the sweep reorders rows without changing them.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{AwgnChannel, ChannelConfig, CODE_RATE};
use crate::encoder::{EncoderChain, SbccCode};
use crate::permutor::BlockPermutor;
use crate::window::{BlockDecision, BlockSource, DecoderConfig, ReceivedBlock, WindowDecoder};
use crate::{Bit, Error};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn frame_seed(master: u64, ebn0_db: f64, frame: u64) -> u64 {
    mix64(mix64(master ^ 0x5BCC) ^ mix64(ebn0_db.to_bits()).rotate_left(17) ^ frame.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Decoder feature presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Baseline,
    Extension,
    #[serde(rename = "extension+resync")]
    ExtensionResync,
    AllOn,
}

impl Profile {
    pub fn apply(self, cfg: &mut DecoderConfig) {
        let (ext, resync, stop) = match self {
            Profile::Baseline => (false, false, false),
            Profile::Extension => (true, false, false),
            Profile::ExtensionResync => (true, true, false),
            Profile::AllOn => (true, true, true),
        };
        cfg.extension = ext;
        cfg.resync = resync;
        cfg.stopping = stop;
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Baseline => "baseline",
            Profile::Extension => "extension",
            Profile::ExtensionResync => "extension+resync",
            Profile::AllOn => "all-on",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "baseline" => Profile::Baseline,
            "extension" => Profile::Extension,
            "extension+resync" => Profile::ExtensionResync,
            "all-on" => Profile::AllOn,
            _ => return Err(Error::InvalidConfig(format!("unknown profile {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Block length `T`.
    pub block_len: usize,
    /// Blocks per frame `L`.
    pub frame_len: usize,
    /// Frame budget per Eb/N0 point.
    pub frames: u64,
    /// Stop a point early once this many frame errors were seen (0: never).
    #[serde(default)]
    pub min_frame_errors: u64,
    /// Stop a point early once this many bit errors were seen (0: never).
    #[serde(default)]
    pub min_bit_errors: u64,
    pub ebn0_db: Vec<f64>,
    pub seed: u64,
    /// Decode frames of a batch on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
    /// Directory holding `p0.txt`, `p1.txt`, `p2.txt`; random permutors when unset.
    #[serde(default)]
    pub permutor_dir: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub emit_block_histogram: bool,
    pub decoder: DecoderConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("sbcc-out")
}

/// Frames decoded between early-stop checks; fixed so serial and parallel
/// runs stop after the same frame.
pub const FRAME_BATCH: u64 = 16;

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            block_len: 512,
            frame_len: 50,
            frames: 100,
            min_frame_errors: 0,
            min_bit_errors: 0,
            ebn0_db: vec![0.5, 1.0, 1.5],
            seed: 1,
            parallel: false,
            permutor_dir: None,
            out_dir: default_out_dir(),
            emit_block_histogram: false,
            decoder: DecoderConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.block_len == 0 || self.frame_len == 0 || self.frames == 0 {
            return Err(Error::InvalidConfig(
                "block_len, frame_len and frames must be at least 1".into(),
            ));
        }
        if self.ebn0_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Eb/N0 list"));
        }
        self.decoder.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SimConfig serializes")
    }

    /// Permutors of the experiment: loaded when `permutor_dir` is set,
    /// otherwise drawn from the master seed.
    pub fn build_code(&self) -> Result<SbccCode, Error> {
        match &self.permutor_dir {
            Some(dir) => {
                let load = |name: &str| BlockPermutor::load(dir.join(name));
                let code = SbccCode::new(load("p0.txt")?, load("p1.txt")?, load("p2.txt")?)?;
                if code.block_len() != self.block_len {
                    return Err(Error::LengthMismatch {
                        what: "loaded permutors",
                        expected: self.block_len,
                        actual: code.block_len(),
                    });
                }
                Ok(code)
            }
            None => SbccCode::random(self.block_len, mix64(self.seed)),
        }
    }
}

/// Options that only the verification harness uses.
#[derive(Clone, Debug, Default)]
pub struct FrameOptions {
    /// Transmitted blocks (absolute index) whose channel LLRs are zeroed.
    pub erase_blocks: Option<Range<usize>>,
}

/// Encoder + channel feeding the window decoder. The encoder runs exactly as
/// far ahead as the decoder pulls; a resync request resets it before the
/// next untransmitted block.
struct FrameSource<'a> {
    chain: EncoderChain<'a>,
    channel: AwgnChannel,
    info_rng: Xoshiro256PlusPlus,
    block_len: usize,
    frame_len: usize,
    sent: Vec<Vec<Bit>>,
    resync_points: Vec<usize>,
    erase: Option<Range<usize>>,
}

impl BlockSource for FrameSource<'_> {
    fn next_block(&mut self) -> Option<ReceivedBlock> {
        let t = self.sent.len();
        if t >= self.frame_len {
            return None;
        }
        let n = self.block_len;
        let u: Vec<Bit> = (0..n).map(|_| self.info_rng.random_range(0..2u8)).collect();
        let block = self.chain.encode_next_block(&u).expect("block length is fixed");
        let mut rx = ReceivedBlock {
            u: self.channel.llrs(&block.u),
            v1: self.channel.llrs(&block.v1),
            v2: self.channel.llrs(&block.v2),
        };
        if self.erase.as_ref().is_some_and(|r| r.contains(&t)) {
            rx.u.fill(0.0);
            rx.v1.fill(0.0);
            rx.v2.fill(0.0);
        }
        self.sent.push(u);
        Some(rx)
    }

    fn resync(&mut self) {
        self.chain.resync_reset();
        self.resync_points.push(self.sent.len());
    }
}

/// Per-block diagnostics of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRecord {
    pub time: usize,
    pub bit_errors: u32,
    pub avg_abs_llr: f64,
    pub ber_est: f64,
    pub used_window: usize,
    pub used_iterations: usize,
    pub stopped_early: bool,
    pub resync_triggered: bool,
    pub flushed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub blocks: Vec<BlockRecord>,
    /// First block index of every chain restarted by resynchronization.
    pub resync_points: Vec<usize>,
}

impl FrameReport {
    pub fn bit_errors(&self) -> u64 {
        self.blocks.iter().map(|b| b.bit_errors as u64).sum()
    }

    pub fn block_errors(&self) -> u64 {
        self.blocks.iter().filter(|b| b.bit_errors > 0).count() as u64
    }
}

/// Encodes, transmits and decodes one frame of `frame_len` blocks.
pub fn run_frame(
    cfg: &SimConfig,
    code: &SbccCode,
    ebn0_db: f64,
    seed: u64,
    opts: &FrameOptions,
) -> Result<FrameReport, Error> {
    let ch = ChannelConfig::new(ebn0_db, CODE_RATE, mix64(seed ^ 0x0A5E))?;
    let mut src = FrameSource {
        chain: EncoderChain::new(code),
        channel: AwgnChannel::new(&ch),
        info_rng: Xoshiro256PlusPlus::seed_from_u64(mix64(seed ^ 0x1F0)),
        block_len: code.block_len(),
        frame_len: cfg.frame_len,
        sent: Vec::with_capacity(cfg.frame_len),
        resync_points: Vec::new(),
        erase: opts.erase_blocks.clone(),
    };
    let mut dec = WindowDecoder::new(code, cfg.decoder.clone())?;
    let decisions = dec.run(&mut src)?;
    let blocks = decisions
        .iter()
        .map(|d| record(d, &src.sent[d.time]))
        .collect();
    Ok(FrameReport {
        blocks,
        resync_points: src.resync_points,
    })
}

fn record(d: &BlockDecision, sent: &[Bit]) -> BlockRecord {
    BlockRecord {
        time: d.time,
        bit_errors: d.bits.iter().zip(sent).filter(|(a, b)| a != b).count() as u32,
        avg_abs_llr: d.avg_abs_llr,
        ber_est: d.ber_est,
        used_window: d.used_window,
        used_iterations: d.used_iterations,
        stopped_early: d.stopped_early,
        resync_triggered: d.resync_triggered,
        flushed: d.flushed,
    }
}

/// Accumulated counters of one Eb/N0 point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointStats {
    pub ebn0_db: f64,
    pub bits: u64,
    pub blocks: u64,
    pub frames: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub frame_errors: u64,
    /// Bit errors summed over frames, indexed by block position in the frame.
    pub per_block_errors: Vec<u64>,
    /// Number of target decisions (flushed blocks excluded).
    pub targets: u64,
    pub window_sum: u64,
    pub iteration_sum: u64,
    pub resync_count: u64,
    /// Bit errors of every frame, in frame order.
    pub frame_bit_errors: Vec<u64>,
    /// Block errors of every frame, in frame order.
    pub frame_block_errors: Vec<u64>,
}

impl PointStats {
    pub fn new(ebn0_db: f64, frame_len: usize) -> Self {
        PointStats {
            ebn0_db,
            per_block_errors: vec![0; frame_len],
            ..Default::default()
        }
    }

    pub fn add_frame(&mut self, report: &FrameReport, block_len: usize) {
        let (bit_errors, block_errors) = (report.bit_errors(), report.block_errors());
        self.frames += 1;
        self.blocks += report.blocks.len() as u64;
        self.bits += (report.blocks.len() * block_len) as u64;
        self.bit_errors += bit_errors;
        self.block_errors += block_errors;
        self.frame_errors += (block_errors > 0) as u64;
        self.frame_bit_errors.push(bit_errors);
        self.frame_block_errors.push(block_errors);
        for b in &report.blocks {
            if b.time >= self.per_block_errors.len() {
                self.per_block_errors.resize(b.time + 1, 0);
            }
            self.per_block_errors[b.time] += b.bit_errors as u64;
            if !b.flushed {
                self.targets += 1;
                self.window_sum += b.used_window as u64;
                self.iteration_sum += b.used_iterations as u64;
            }
            self.resync_count += b.resync_triggered as u64;
        }
    }

    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.bits)
    }

    pub fn bler(&self) -> f64 {
        ratio(self.block_errors, self.blocks)
    }

    pub fn fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames)
    }

    pub fn avg_window(&self) -> f64 {
        ratio(self.window_sum, self.targets)
    }

    pub fn avg_horizontal_iters(&self) -> f64 {
        ratio(self.iteration_sum, self.targets)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Runs frames at one Eb/N0 point until the budget or an error target is hit.
pub fn run_point(cfg: &SimConfig, code: &SbccCode, ebn0_db: f64) -> Result<PointStats, Error> {
    run_point_with(cfg, code, ebn0_db, &FrameOptions::default())
}

pub fn run_point_with(
    cfg: &SimConfig,
    code: &SbccCode,
    ebn0_db: f64,
    opts: &FrameOptions,
) -> Result<PointStats, Error> {
    cfg.validate()?;
    let mut stats = PointStats::new(ebn0_db, cfg.frame_len);
    let mut next = 0u64;
    while next < cfg.frames {
        let end = (next + FRAME_BATCH).min(cfg.frames);
        let run = |f: u64| run_frame(cfg, code, ebn0_db, frame_seed(cfg.seed, ebn0_db, f), opts);
        let reports: Vec<FrameReport> = if cfg.parallel {
            (next..end).into_par_iter().map(run).collect::<Result<_, _>>()?
        } else {
            (next..end).map(run).collect::<Result<_, _>>()?
        };
        for r in &reports {
            stats.add_frame(r, cfg.block_len);
        }
        next = end;
        let frames_done = cfg.min_frame_errors > 0 && stats.frame_errors >= cfg.min_frame_errors;
        let bits_done = cfg.min_bit_errors > 0 && stats.bit_errors >= cfg.min_bit_errors;
        if frames_done || bits_done {
            break;
        }
    }
    Ok(stats)
}

/// Runs every Eb/N0 point of `cfg` and writes the reports to `cfg.out_dir`.
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<PointStats>, Error> {
    cfg.validate()?;
    let code = cfg.build_code()?;
    let mut all = Vec::with_capacity(cfg.ebn0_db.len());
    for &ebn0 in &cfg.ebn0_db {
        all.push(run_point(cfg, &code, ebn0)?);
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("manifest.toml"), cfg.to_toml())?;
    for (name, p) in [("p0.txt", &code.p0), ("p1.txt", &code.p1), ("p2.txt", &code.p2)] {
        p.store(cfg.out_dir.join(name))?;
    }
    emit_reports(&all, &cfg.out_dir, cfg.emit_block_histogram)?;
    Ok(all)
}

pub fn summary_csv(stats: &[PointStats]) -> String {
    let mut s = String::from(
        "ebn0_db,ber,bler,fer,avg_window,avg_horizontal_iters,resync_count,frames,bit_errors,block_errors,frame_errors\n",
    );
    for p in stats {
        writeln!(
            s,
            "{:.4},{:.6e},{:.6e},{:.6e},{:.6},{:.6},{},{},{},{},{}",
            p.ebn0_db,
            p.ber(),
            p.bler(),
            p.fer(),
            p.avg_window(),
            p.avg_horizontal_iters(),
            p.resync_count,
            p.frames,
            p.bit_errors,
            p.block_errors,
            p.frame_errors
        )
        .unwrap();
    }
    s
}

pub fn block_histogram_csv(stats: &PointStats) -> String {
    let mut s = String::from("block_index,bit_errors\n");
    for (i, e) in stats.per_block_errors.iter().enumerate() {
        writeln!(s, "{i},{e}").unwrap();
    }
    s
}

pub fn histogram_file_name(ebn0_db: f64) -> String {
    format!("block_errors_{ebn0_db:.4}dB.csv")
}

/// Writes `summary.csv` and, when requested, one per-block error
/// distribution per point.
pub fn emit_reports(stats: &[PointStats], dir: &Path, block_histograms: bool) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(stats))?;
    if block_histograms {
        for p in stats {
            std::fs::write(dir.join(histogram_file_name(p.ebn0_db)), block_histogram_csv(p))?;
        }
    }
    Ok(())
}
