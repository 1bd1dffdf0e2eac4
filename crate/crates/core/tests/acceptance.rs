//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test --release --test acceptance -- 1 3 9` runs a subset.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use sbcc::encoder::{EncoderChain, SbccCode};
use sbcc::rsc::{
    bcjr_block, bcjr_block_log, uniform_metrics, zero_state_metrics, ComponentState, TrellisTable, NEG_INF,
    NUM_STATES,
};
use sbcc::sim::{run_frame, run_point, run_point_with, run_sweep, FrameOptions, PointStats, Profile, SimConfig};
use sbcc::window::DecoderConfig;
use sbcc::Bit;

/// One-sided 95% quantile of the standard normal.
const Z95: f64 = 1.6448536269514722;

const DESK_POINTS: [f64; 3] = [0.5, 1.0, 1.5];
const DESK_FRAMES: u64 = 2000;
/// Waterfall point for the window-extension comparison.
const EXT_EBN0: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> anyhow::Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn desk_cfg(profile: Profile, ebn0: &[f64]) -> SimConfig {
    let mut cfg = SimConfig {
        block_len: 512,
        frame_len: 50,
        frames: DESK_FRAMES,
        ebn0_db: ebn0.to_vec(),
        seed: 2024,
        ..SimConfig::default()
    };
    profile.apply(&mut cfg.decoder);
    cfg
}

fn desk_point(profile: Profile, ebn0: f64) -> anyhow::Result<PointStats> {
    let cfg = desk_cfg(profile, &[ebn0]);
    let code = cfg.build_code()?;
    Ok(run_point(&cfg, &code, ebn0)?)
}

/// Mean and one-sided z statistic of `x - y` over paired frames.
fn paired_z(x: &[u64], y: &[u64]) -> (f64, f64) {
    let n = x.len() as f64;
    let d: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a as f64 - b as f64).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = if var == 0.0 {
        if mean > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        mean / (var / n).sqrt()
    };
    (mean, z)
}

// ---------------------------------------------------------------------------
// 1: BCJR against exhaustive enumeration

struct Posterior {
    app_a: Vec<f64>,
    app_b: Vec<f64>,
    app_p: Vec<f64>,
    /// Probability of each final state, ignoring `beta`.
    end: [f64; NUM_STATES],
    /// Probability of each initial state given the whole block, ignoring `alpha`.
    start: [f64; NUM_STATES],
}

/// Sums over every start state and every input pair sequence.
fn brute_force(
    t: &TrellisTable,
    la: &[f64],
    lb: &[f64],
    lp: &[f64],
    alpha: &[f64; NUM_STATES],
    beta: &[f64; NUM_STATES],
) -> Posterior {
    let n = la.len();
    let mut zero = vec![[0.0f64; 2]; 3 * n];
    let mut end = [0.0; NUM_STATES];
    let mut start = [0.0; NUM_STATES];
    let w = |l: f64, bit: Bit| if bit == 0 { 1.0 } else { (-l).exp() };
    for s0 in 0..NUM_STATES {
        for word in 0u32..(1 << (2 * n)) {
            let mut s = s0;
            let mut weight = 1.0;
            let mut bits = Vec::with_capacity(3 * n);
            for k in 0..n {
                let a = ((word >> (2 * k)) & 1) as Bit;
                let b = ((word >> (2 * k + 1)) & 1) as Bit;
                let br = t.branch(s, a, b);
                weight *= w(la[k], a) * w(lb[k], b) * w(lp[k], br.parity);
                bits.push((a, b, br.parity));
                s = br.next;
            }
            end[s] += alpha[s0].exp() * weight;
            start[s0] += weight * beta[s].exp();
            let total = alpha[s0].exp() * weight * beta[s].exp();
            for (k, &(a, b, p)) in bits.iter().enumerate() {
                zero[3 * k][a as usize] += total;
                zero[3 * k + 1][b as usize] += total;
                zero[3 * k + 2][p as usize] += total;
            }
        }
    }
    let llr = |j: usize| (zero[j][0] / zero[j][1]).ln();
    Posterior {
        app_a: (0..n).map(|k| llr(3 * k)).collect(),
        app_b: (0..n).map(|k| llr(3 * k + 1)).collect(),
        app_p: (0..n).map(|k| llr(3 * k + 2)).collect(),
        end,
        start,
    }
}

fn boundary(rng: &mut Xoshiro256PlusPlus) -> [f64; NUM_STATES] {
    match rng.random_range(0..4u8) {
        0 => zero_state_metrics(),
        1 => uniform_metrics(),
        2 => {
            let mut m = [NEG_INF; NUM_STATES];
            m[rng.random_range(0..NUM_STATES)] = 0.0;
            m[rng.random_range(0..NUM_STATES)] = rng.random_range(-2.0..2.0);
            m
        }
        _ => std::array::from_fn(|_| rng.random_range(-3.0..3.0)),
    }
}

fn log_dist_gap(log: &[f64; NUM_STATES], prob: &[f64; NUM_STATES]) -> f64 {
    let zl: f64 = log.iter().map(|x| x.exp()).sum();
    let zp: f64 = prob.iter().sum();
    (0..NUM_STATES)
        .map(|s| (log[s].exp() / zl - prob[s] / zp).abs())
        .fold(0.0, f64::max)
}

fn crit_bcjr_oracle() -> anyhow::Result<Outcome> {
    let t = TrellisTable::new();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xB0C1);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    for n in 2..=6usize {
        for _ in 0..100 {
            // Prior plus channel on every port.
            let mut draw = || -> Vec<f64> {
                (0..n)
                    .map(|_| rng.random_range(-4.0..4.0) + rng.random_range(-6.0..6.0))
                    .collect()
            };
            let (la, lb, lp) = (draw(), draw(), draw());
            let (alpha, beta) = (boundary(&mut rng), boundary(&mut rng));
            let bf = brute_force(&t, &la, &lb, &lp, &alpha, &beta);
            for r in [
                bcjr_block(&t, &la, &lb, &lp, &alpha, &beta)?,
                bcjr_block_log(&t, &la, &lb, &lp, &alpha, &beta)?,
            ] {
                for k in 0..n {
                    worst = worst
                        .max((r.app_a[k] - bf.app_a[k]).abs())
                        .max((r.ext_a[k] + la[k] - bf.app_a[k]).abs())
                        .max((r.ext_b[k] + lb[k] - bf.app_b[k]).abs())
                        .max((r.ext_p[k] + lp[k] - bf.app_p[k]).abs());
                }
                worst = worst
                    .max(log_dist_gap(&r.alpha_out, &bf.end))
                    .max(log_dist_gap(&r.beta_in, &bf.start));
            }
            draws += 1;
        }
    }
    outcome(
        worst <= 1e-9,
        format!("{draws} draws, T=2..6, max deviation {worst:.2e} (tol 1e-9)"),
    )
}

// ---------------------------------------------------------------------------
// 2: encoder

/// Coefficients of `num / (1 + D + D^2)` over GF(2) by long division.
fn gf2_series(num: &[u8], len: usize) -> Vec<u8> {
    let den = [1u8, 1, 1];
    let mut rem: Vec<u8> = num.to_vec();
    rem.resize(len + den.len(), 0);
    let mut q = vec![0u8; len];
    for i in 0..len {
        q[i] = rem[i];
        if q[i] == 1 {
            for (j, &d) in den.iter().enumerate() {
                rem[i + j] ^= d;
            }
        }
    }
    q
}

fn random_bits(rng: &mut Xoshiro256PlusPlus, n: usize) -> Vec<Bit> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn xor(x: &[Bit], y: &[Bit]) -> Vec<Bit> {
    x.iter().zip(y).map(|(a, b)| a ^ b).collect()
}

fn crit_encoder() -> anyhow::Result<Outcome> {
    let t = TrellisTable::new();
    let len = 48;
    let mut impulse = vec![0u8; len];
    impulse[0] = 1;
    let zeros = vec![0u8; len];
    let (pa, _) = t.encode_block(ComponentState::ZERO, &impulse, &zeros)?;
    let (pb, _) = t.encode_block(ComponentState::ZERO, &zeros, &impulse)?;
    let impulse_ok = pa == gf2_series(&[1], len) && pb == gf2_series(&[1, 0, 1], len);

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xE2C0);
    let mut linear = 0;
    let mut split = 0;
    let trials = 1000;
    for _ in 0..trials {
        let n = rng.random_range(2..200usize);
        let (a1, b1, a2, b2) = (
            random_bits(&mut rng, n),
            random_bits(&mut rng, n),
            random_bits(&mut rng, n),
            random_bits(&mut rng, n),
        );
        let (p1, s1) = t.encode_block(ComponentState::ZERO, &a1, &b1)?;
        let (p2, s2) = t.encode_block(ComponentState::ZERO, &a2, &b2)?;
        let (p12, s12) = t.encode_block(ComponentState::ZERO, &xor(&a1, &a2), &xor(&b1, &b2))?;
        if p12 == xor(&p1, &p2) && s12.index() == s1.index() ^ s2.index() {
            linear += 1;
        }
        let cut = rng.random_range(1..n);
        let (head, mid) = t.encode_block(ComponentState::ZERO, &a1[..cut], &b1[..cut])?;
        let (tail, end) = t.encode_block(mid, &a1[cut..], &b1[cut..])?;
        if [head, tail].concat() == p1 && end == s1 {
            split += 1;
        }
    }

    // The braided chain is linear too: coded(u1 ^ u2) = coded(u1) ^ coded(u2).
    let code = SbccCode::random(32, 77)?;
    let mut chain_linear = 0;
    for _ in 0..100 {
        let blocks = 5;
        let us: Vec<[Vec<Bit>; 2]> = (0..blocks)
            .map(|_| [random_bits(&mut rng, 32), random_bits(&mut rng, 32)])
            .collect();
        let (mut e1, mut e2, mut e12) = (EncoderChain::new(&code), EncoderChain::new(&code), EncoderChain::new(&code));
        let mut ok = true;
        for [x, y] in &us {
            let c1 = e1.encode_next_block(x)?;
            let c2 = e2.encode_next_block(y)?;
            let c12 = e12.encode_next_block(&xor(x, y))?;
            ok &= c12.v1 == xor(&c1.v1, &c2.v1) && c12.v2 == xor(&c1.v2, &c2.v2);
        }
        chain_linear += ok as usize;
    }
    outcome(
        impulse_ok && linear == trials && split == trials && chain_linear == 100,
        format!(
            "impulse responses over {len} bits {}; linearity {linear}/{trials}; split {split}/{trials}; chain linearity {chain_linear}/100",
            if impulse_ok { "match" } else { "MISMATCH" }
        ),
    )
}

// ---------------------------------------------------------------------------
// 3: high-SNR round trip

fn crit_noiseless() -> anyhow::Result<Outcome> {
    let cfg = SimConfig {
        block_len: 256,
        frame_len: 10,
        frames: 100,
        ebn0_db: vec![10.0],
        seed: 3,
        ..SimConfig::default()
    };
    let code = cfg.build_code()?;
    let p = run_point(&cfg, &code, 10.0)?;
    outcome(
        p.bit_errors == 0 && p.frames == 100,
        format!("{} frames at 10 dB, {} bit errors", p.frames, p.bit_errors),
    )
}

// ---------------------------------------------------------------------------
// 4: desk-scale BER curve

fn crit_curve(curve: &[PointStats]) -> anyhow::Result<Outcome> {
    let bers: Vec<f64> = curve.iter().map(|p| p.ber()).collect();
    let decreasing = bers.windows(2).all(|w| w[1] < w[0]);
    let last = *bers.last().unwrap();
    let enough = curve.iter().all(|p| p.frames >= DESK_FRAMES);
    let pts: Vec<String> = curve
        .iter()
        .map(|p| format!("{:.1} dB: {:.3e}", p.ebn0_db, p.ber()))
        .collect();
    outcome(
        decreasing && last < 1e-4 && enough,
        format!(
            "all-on decoder, {} frames/point; {}; strictly decreasing: {decreasing}; BER(1.5 dB) < 1e-4: {}",
            DESK_FRAMES,
            pts.join(", "),
            last < 1e-4
        ),
    )
}

// ---------------------------------------------------------------------------
// 5: window extension against baseline

fn crit_extension() -> anyhow::Result<Outcome> {
    let base = desk_point(Profile::Baseline, EXT_EBN0)?;
    let ext = desk_point(Profile::Extension, EXT_EBN0)?;
    let in_range = (1e-4..=1e-2).contains(&base.ber());
    let (d_bit, z_bit) = paired_z(&base.frame_bit_errors, &ext.frame_bit_errors);
    let (d_blk, z_blk) = paired_z(&base.frame_block_errors, &ext.frame_block_errors);
    let growth = ext.avg_window() - 3.0;
    outcome(
        in_range && z_bit > Z95 && z_blk > Z95 && growth < 0.1,
        format!(
            "{EXT_EBN0} dB, {} frames; BER {:.3e} -> {:.3e} (z={z_bit:.2}, mean diff {d_bit:.2}); BLER {:.3e} -> {:.3e} (z={z_blk:.2}, mean diff {d_blk:.3}); avg window {:.4}; baseline BER in [1e-4,1e-2]: {in_range}",
            base.frames,
            base.ber(),
            ext.ber(),
            base.bler(),
            ext.bler(),
            ext.avg_window()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6: resynchronization after a genie erasure

fn crit_resync() -> anyhow::Result<Outcome> {
    let mut cfg = SimConfig {
        block_len: 512,
        frame_len: 30,
        frames: 200,
        ebn0_db: vec![4.0],
        seed: 6,
        ..SimConfig::default()
    };
    cfg.decoder.resync = true;
    cfg.decoder.resync_after = 1;
    let w = cfg.decoder.window;
    let erased = 12..15;
    let code = cfg.build_code()?;
    let opts = FrameOptions {
        erase_blocks: Some(erased.clone()),
    };
    let mut clean_frames = 0;
    let mut resynced = 0;
    let mut bad_blocks = 0u64;
    for f in 0..cfg.frames {
        let seed = sbcc::sim::frame_seed(cfg.seed, 4.0, f);
        let rep = run_frame(&cfg, &code, 4.0, seed, &opts)?;
        let Some(&r) = rep.resync_points.iter().find(|&&r| r >= erased.end) else {
            continue;
        };
        resynced += 1;
        let errs: u64 = rep
            .blocks
            .iter()
            .filter(|b| b.time >= r + w)
            .map(|b| (b.bit_errors > 0) as u64)
            .sum();
        bad_blocks += errs;
        clean_frames += (errs == 0) as u64;
    }
    outcome(
        resynced == cfg.frames && bad_blocks == 0,
        format!(
            "4 dB, blocks {}..{} erased; {resynced}/{} frames resynchronized; {clean_frames} clean past resync point + w; {bad_blocks} erroneous blocks there",
            erased.start,
            erased.end - 1,
            cfg.frames
        ),
    )
}

// ---------------------------------------------------------------------------
// 7: stopping rule

fn crit_stopping(all_on: &PointStats) -> anyhow::Result<Outcome> {
    let full = desk_point(Profile::ExtensionResync, all_on.ebn0_db)?;
    let half = DecoderConfig::default().horizontal_iters as f64 / 2.0;
    let iters = all_on.avg_horizontal_iters();
    let ok_ber = all_on.ber() <= 2.0 * full.ber();
    outcome(
        iters < half && ok_ber,
        format!(
            "{} dB, {} frames; avg iterations {:.3} (< {half}); BER {:.3e} with stopping vs {:.3e} without (ratio {:.2}, limit 2)",
            all_on.ebn0_db,
            all_on.frames,
            iters,
            all_on.ber(),
            full.ber(),
            all_on.ber() / full.ber()
        ),
    )
}

// ---------------------------------------------------------------------------
// 8: determinism

fn dir_bytes(dir: &Path) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let e = e?;
        files.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?));
    }
    files.sort();
    Ok(files)
}

fn crit_determinism() -> anyhow::Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let mut cfg = SimConfig {
        block_len: 128,
        frame_len: 12,
        frames: 40,
        ebn0_db: vec![0.5, 1.0],
        seed: 8,
        emit_block_histogram: true,
        ..SimConfig::default()
    };
    Profile::AllOn.apply(&mut cfg.decoder);
    let mut runs = Vec::new();
    for parallel in [false, false, true, true] {
        cfg.parallel = parallel;
        // Same path every time: the manifest records it.
        cfg.out_dir = tmp.path().join("out");
        run_sweep(&cfg)?;
        runs.push(dir_bytes(&cfg.out_dir)?);
        std::fs::remove_dir_all(&cfg.out_dir)?;
    }
    // The manifest records the parallel flag, so compare it only within a mode.
    let strip = |r: &[(String, Vec<u8>)]| -> Vec<(String, Vec<u8>)> {
        r.iter().filter(|(n, _)| n != "manifest.toml").cloned().collect()
    };
    let serial = runs[0] == runs[1];
    let parallel = runs[2] == runs[3];
    let across = strip(&runs[0]) == strip(&runs[2]);
    outcome(
        serial && parallel && across,
        format!(
            "{} files per run; serial runs identical: {serial}; parallel runs identical: {parallel}; serial == parallel reports: {across}",
            runs[0].len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9: boundary settings

fn crit_boundaries() -> anyhow::Result<Outcome> {
    let base = SimConfig {
        block_len: 128,
        frame_len: 20,
        frames: 24,
        ebn0_db: vec![0.75],
        seed: 9,
        ..SimConfig::default()
    };
    let code = base.build_code()?;
    let frames = |cfg: &SimConfig| -> anyhow::Result<Vec<_>> {
        (0..cfg.frames)
            .map(|f| {
                let seed = sbcc::sim::frame_seed(cfg.seed, 0.75, f);
                Ok(run_frame(cfg, &code, 0.75, seed, &FrameOptions::default())?)
            })
            .collect()
    };
    let off = frames(&base)?;

    let mut theta0 = base.clone();
    theta0.decoder.extension = true;
    theta0.decoder.theta = 0.0;
    let theta_same = frames(&theta0)? == off;

    let mut wmax = base.clone();
    wmax.decoder.extension = true;
    wmax.decoder.max_window = wmax.decoder.window;
    let wmax_frames = frames(&wmax)?;
    let no_growth = wmax_frames
        .iter()
        .flat_map(|r| &r.blocks)
        .all(|b| b.used_window == base.decoder.window);
    let wmax_same = wmax_frames == off;

    let mut half = base.clone();
    half.decoder.stopping = true;
    half.decoder.gamma = 0.5;
    let single = frames(&half)?
        .iter()
        .flat_map(|r| &r.blocks)
        .all(|b| b.used_iterations == 1 && b.stopped_early);

    // Sanity: the extension path is live at this operating point.
    let mut live = base.clone();
    live.decoder.extension = true;
    let grew = frames(&live)?.iter().flat_map(|r| &r.blocks).any(|b| b.used_window > 3);

    outcome(
        theta_same && no_growth && wmax_same && single,
        format!(
            "theta=0 identical to extension off: {theta_same}; w_max=w never grows: {no_growth} (identical: {wmax_same}); gamma=0.5 single iteration: {single}; extension active at theta=10: {grew}"
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    // libtest-style flags (e.g. --nocapture) are ignored; bare numbers select criteria.
    let picked: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: u32| picked.is_empty() || picked.contains(&i);
    let mut failed = 0;
    let mut report = |i: u32, name: &str, start: Instant, r: anyhow::Result<Outcome>| {
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(o) => {
                failed += !o.pass as u32;
                println!(
                    "[{}] {i}. {name} ({secs:.1} s): {}",
                    if o.pass { "PASS" } else { "FAIL" },
                    o.detail
                );
            }
            Err(e) => {
                failed += 1;
                println!("[FAIL] {i}. {name} ({secs:.1} s): error: {e:#}");
            }
        }
    };

    macro_rules! run {
        ($i:expr, $name:expr, $f:expr) => {
            if want($i) {
                let s = Instant::now();
                report($i, $name, s, $f);
            }
        };
    }

    run!(1, "BCJR matches exhaustive posterior", crit_bcjr_oracle());
    run!(2, "encoder impulse response, linearity, composition", crit_encoder());
    run!(3, "10 dB round trip", crit_noiseless());

    // The all-on curve feeds both 4 and 7.
    let mut curve: Option<anyhow::Result<Vec<PointStats>>> = None;
    let mut get_curve = || -> anyhow::Result<Vec<PointStats>> {
        if curve.is_none() {
            let cfg = desk_cfg(Profile::AllOn, &DESK_POINTS);
            let code = cfg.build_code();
            curve = Some(code.map_err(Into::into).and_then(|code| {
                DESK_POINTS
                    .iter()
                    .map(|&e| Ok(run_point_with(&cfg, &code, e, &FrameOptions::default())?))
                    .collect()
            }));
        }
        match curve.as_ref().unwrap() {
            Ok(c) => Ok(c.clone()),
            Err(e) => Err(anyhow::anyhow!("{e:#}")),
        }
    };

    run!(4, "desk-scale BER curve", get_curve().and_then(|c| crit_curve(&c)));
    run!(5, "window extension beats baseline", crit_extension());
    run!(6, "resynchronization isolates erased blocks", crit_resync());
    run!(
        7,
        "stopping rule halves iterations within 2x BER",
        get_curve().and_then(|c| crit_stopping(c.last().unwrap()))
    );
    run!(8, "byte-identical reports", crit_determinism());
    run!(9, "boundary settings", crit_boundaries());

    if failed == 0 {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
