//! Sliding window decoder for blockwise SBCCs.
//!
//! The window holds the target block (index 0) and the next `w - 1` received
//! blocks. Each block carries two component decoders. A vertical iteration
//! on a block runs decoder 1 then decoder 2, exchanging information-bit
//! extrinsics through `P0`. Neighbouring blocks are coupled through the
//! parity streams:
//!
//! * the parity-port extrinsic of block `i - 1` (plus its channel LLRs),
//!   interleaved by `P2` / `P1`, is the b-port input of decoder 1 / decoder 2
//!   at block `i`;
//! * the b-port extrinsic of block `i + 1`, de-interleaved, is the
//!   parity-port prior of block `i`;
//! * forward state metrics flow rightward and backward metrics leftward, so
//!   the `2w` BCJR runs cover one continuous trellis per component encoder.
//!
//! A horizontal iteration sweeps vertical iterations over blocks `0..w` and
//! then back over `w-1..=0`. On top of that the decoder implements window
//! extension when leading blocks stay unreliable, resynchronization after
//! `N_r` consecutive failed targets, and an early stop once the soft BER
//! estimate of the target drops to `gamma`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::encoder::SbccCode;
use crate::rsc::{bcjr_block_into, clamp_llr, BcjrResult, BcjrWorkspace, uniform_metrics, zero_state_metrics, NUM_STATES};
use crate::{Bit, Error, Llr, L_MAX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    /// Initial window size `w` in blocks.
    pub window: usize,
    /// Largest window size reachable by extension.
    pub max_window: usize,
    /// Vertical iterations per block visit (`I1`).
    pub vertical_iters: usize,
    /// Maximum horizontal iterations per target (`I2`).
    pub horizontal_iters: usize,
    /// Number of leading window blocks checked against `theta`.
    pub tau: usize,
    /// Average-|LLR| threshold for extension and failed-target detection.
    pub theta: f64,
    /// Consecutive failed targets that trigger resynchronization (`N_r`).
    pub resync_after: usize,
    /// Soft BER threshold of the stopping rule.
    pub gamma: f64,
    pub stopping: bool,
    pub extension: bool,
    pub resync: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            window: 3,
            max_window: 6,
            vertical_iters: 1,
            horizontal_iters: 20,
            tau: 2,
            theta: 10.0,
            resync_after: 1,
            gamma: 1e-7,
            stopping: false,
            extension: false,
            resync: false,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(1 <= self.tau && self.tau <= self.window && self.window <= self.max_window) {
            return bad(format!(
                "need 1 <= tau ({}) <= window ({}) <= max_window ({})",
                self.tau, self.window, self.max_window
            ));
        }
        if self.vertical_iters == 0 || self.horizontal_iters == 0 {
            return bad("iteration counts must be at least 1".into());
        }
        if self.theta.is_nan() || self.theta < 0.0 {
            return bad(format!("theta {} must be >= 0", self.theta));
        }
        if !(0.0..=0.5).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0, 0.5]", self.gamma));
        }
        if self.resync_after == 0 {
            return bad("resync_after must be at least 1".into());
        }
        Ok(())
    }
}

/// Mean of `|l|` over a block of decision LLRs.
pub fn avg_abs_llr(decisions: &[Llr]) -> Result<f64, Error> {
    if decisions.is_empty() {
        return Err(Error::Empty("decision LLRs"));
    }
    Ok(decisions.iter().map(|l| l.abs()).sum::<f64>() / decisions.len() as f64)
}

/// Soft bit error rate estimate `mean(1 / (1 + e^|l|))`.
pub fn ber_est(decisions: &[Llr]) -> Result<f64, Error> {
    if decisions.is_empty() {
        return Err(Error::Empty("decision LLRs"));
    }
    Ok(decisions.iter().map(|l| 1.0 / (1.0 + l.abs().exp())).sum::<f64>() / decisions.len() as f64)
}

/// Hard decision, ties go to 0.
pub fn hard_decision(l: Llr) -> Bit {
    (l < 0.0) as Bit
}

/// Channel LLRs of one received block, streams in natural order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedBlock {
    pub u: Vec<Llr>,
    pub v1: Vec<Llr>,
    pub v2: Vec<Llr>,
}

/// Where the decoder pulls blocks from and sends resync feedback to.
pub trait BlockSource {
    /// Next transmitted block, or `None` once the frame is exhausted.
    fn next_block(&mut self) -> Option<ReceivedBlock>;
    /// Feedback: the encoder restarts a chain at the next untransmitted block.
    fn resync(&mut self);
}

/// Soft state of one block in the window.
///
/// Extrinsics are stored in the natural order of the bits they describe:
/// `ext1_b` is about `v2` of the previous block, `ext2_b` about `v1` of the
/// previous block.
#[derive(Clone, Debug)]
pub struct LlrBank {
    pub time: usize,
    pub chain_start: bool,
    pub ch_u: Vec<Llr>,
    pub ch_v1: Vec<Llr>,
    pub ch_v2: Vec<Llr>,
    pub ext1_a: Vec<Llr>,
    pub ext1_b: Vec<Llr>,
    pub ext1_p: Vec<Llr>,
    pub ext2_a: Vec<Llr>,
    pub ext2_b: Vec<Llr>,
    pub ext2_p: Vec<Llr>,
    /// `ch_u + ext2_a + ext1_a`, clamped.
    pub decision: Vec<Llr>,
    alpha_out: [[f64; NUM_STATES]; 2],
    beta_in: [[f64; NUM_STATES]; 2],
}

impl LlrBank {
    fn new(time: usize, chain_start: bool, rx: ReceivedBlock) -> Self {
        let n = rx.u.len();
        let mut bank = LlrBank {
            time,
            chain_start,
            decision: vec![0.0; n],
            ch_u: rx.u,
            ch_v1: rx.v1,
            ch_v2: rx.v2,
            ext1_a: vec![0.0; n],
            ext1_b: vec![0.0; n],
            ext1_p: vec![0.0; n],
            ext2_a: vec![0.0; n],
            ext2_b: vec![0.0; n],
            ext2_p: vec![0.0; n],
            alpha_out: [uniform_metrics(); 2],
            beta_in: [uniform_metrics(); 2],
        };
        bank.reset_messages();
        bank
    }

    /// Back to channel-only knowledge.
    fn reset_messages(&mut self) {
        for v in [
            &mut self.ext1_a,
            &mut self.ext1_b,
            &mut self.ext1_p,
            &mut self.ext2_a,
            &mut self.ext2_b,
            &mut self.ext2_p,
        ] {
            v.fill(0.0);
        }
        for (d, &c) in self.decision.iter_mut().zip(&self.ch_u) {
            *d = clamp_llr(c);
        }
        self.alpha_out = [uniform_metrics(); 2];
        self.beta_in = [uniform_metrics(); 2];
    }

    fn hard_bits(&self) -> Vec<Bit> {
        self.decision.iter().map(|&l| hard_decision(l)).collect()
    }
}

/// Decided target block plus diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDecision {
    /// Absolute index of the block in the received stream.
    pub time: usize,
    pub bits: Vec<Bit>,
    pub avg_abs_llr: f64,
    pub ber_est: f64,
    /// Logical window size when the decision was taken (`w..=w_max`).
    pub used_window: usize,
    /// Blocks actually present in the window; smaller than `used_window`
    /// only at the end of a frame.
    pub blocks_in_window: usize,
    /// Horizontal iterations spent on this target, including iterations
    /// discarded by window-extension restarts.
    pub used_iterations: usize,
    pub stopped_early: bool,
    pub resync_triggered: bool,
    /// Decided from current LLRs while the window was flushed for
    /// resynchronization rather than as a target.
    pub flushed: bool,
}

#[derive(Clone, Debug)]
enum LeftEdge {
    /// Both b-ports of the first block carry known zeros.
    ChainStart,
    /// Totals of the last decided block, already interleaved into the
    /// b-port order of decoder 1 (`P2`) and decoder 2 (`P1`).
    Decided { b1: Vec<Llr>, b2: Vec<Llr> },
}

/// Working vectors reused across BCJR runs.
#[derive(Clone, Debug, Default)]
struct Scratch {
    nat: Vec<Llr>,
    in_a: Vec<Llr>,
    in_b: Vec<Llr>,
    in_p: Vec<Llr>,
    bcjr: BcjrWorkspace,
    out: BcjrResult,
}

#[derive(Clone, Debug)]
pub struct WindowDecoder<'a> {
    code: &'a SbccCode,
    cfg: DecoderConfig,
    /// Received, undecided blocks; index 0 is the target.
    blocks: VecDeque<LlrBank>,
    w_cur: usize,
    left: LeftEdge,
    alpha_inherit: [[f64; NUM_STATES]; 2],
    fail_count: usize,
    iteration_count: usize,
    received: usize,
    next_chain_start: bool,
    source_exhausted: bool,
    known_zero: Vec<Llr>,
    scratch: Scratch,
}

impl<'a> WindowDecoder<'a> {
    pub fn new(code: &'a SbccCode, cfg: DecoderConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let n = code.block_len();
        Ok(WindowDecoder {
            code,
            w_cur: cfg.window,
            cfg,
            blocks: VecDeque::new(),
            left: LeftEdge::ChainStart,
            alpha_inherit: [zero_state_metrics(); 2],
            fail_count: 0,
            iteration_count: 0,
            received: 0,
            next_chain_start: true,
            source_exhausted: false,
            known_zero: vec![L_MAX; n],
            scratch: Scratch {
                nat: vec![0.0; n],
                in_a: vec![0.0; n],
                in_b: vec![0.0; n],
                in_p: vec![0.0; n],
                ..Scratch::default()
            },
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn window_size(&self) -> usize {
        self.w_cur
    }

    pub fn buffered(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> Option<&LlrBank> {
        self.blocks.get(i)
    }

    pub fn fail_count(&self) -> usize {
        self.fail_count
    }

    pub fn iteration_count(&self) -> usize {
        self.iteration_count
    }

    /// Number of blocks the current iterations run over.
    pub fn active_len(&self) -> usize {
        self.w_cur.min(self.blocks.len())
    }

    /// Appends a received block behind the buffered ones.
    pub fn push_block(&mut self, rx: ReceivedBlock) -> Result<(), Error> {
        let n = self.code.block_len();
        for (what, len) in [("u", rx.u.len()), ("v1", rx.v1.len()), ("v2", rx.v2.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what: match what {
                        "u" => "received u stream",
                        "v1" => "received v1 stream",
                        _ => "received v2 stream",
                    },
                    expected: n,
                    actual: len,
                });
            }
        }
        let bank = LlrBank::new(self.received, self.next_chain_start, rx);
        self.next_chain_start = false;
        self.received += 1;
        self.blocks.push_back(bank);
        Ok(())
    }

    /// Marks the end of the frame: no further blocks will arrive.
    pub fn finish(&mut self) {
        self.source_exhausted = true;
    }

    fn pull<S: BlockSource + ?Sized>(&mut self, src: &mut S) -> Result<bool, Error> {
        if self.source_exhausted {
            return Ok(false);
        }
        match src.next_block() {
            Some(rx) => {
                self.push_block(rx)?;
                Ok(true)
            }
            None => {
                self.source_exhausted = true;
                Ok(false)
            }
        }
    }

    /// Pulls blocks until the window is full or the source runs dry.
    pub fn fill<S: BlockSource + ?Sized>(&mut self, src: &mut S) -> Result<(), Error> {
        while self.blocks.len() < self.w_cur && self.pull(src)? {}
        Ok(())
    }

    /// Runs `I1` rounds of decoder 1 followed by decoder 2 on block `idx`.
    pub fn vertical_iteration(&mut self, idx: usize) -> Result<(), Error> {
        let active = self.active_len();
        if idx >= active {
            return Err(Error::InvalidConfig(format!(
                "block index {idx} outside active window of {active}"
            )));
        }
        for _ in 0..self.cfg.vertical_iters {
            self.run_decoder1(idx, active)?;
            self.run_decoder2(idx, active)?;
        }
        Ok(())
    }

    fn run_decoder1(&mut self, i: usize, active: usize) -> Result<(), Error> {
        let code = self.code;
        let s = &mut self.scratch;
        {
            let b = &self.blocks[i];
            for k in 0..b.ch_u.len() {
                s.in_a[k] = clamp_llr(b.ch_u[k] + b.ext2_a[k]);
            }
            match (i, &self.left) {
                (0, LeftEdge::ChainStart) => s.in_b.copy_from_slice(&self.known_zero),
                (0, LeftEdge::Decided { b1, .. }) => s.in_b.copy_from_slice(b1),
                _ => {
                    let prev = &self.blocks[i - 1];
                    for k in 0..s.nat.len() {
                        s.nat[k] = clamp_llr(prev.ch_v2[k] + prev.ext2_p[k]);
                    }
                    code.p2.apply_into(&s.nat, &mut s.in_b);
                }
            }
            if i + 1 < active {
                let next = &self.blocks[i + 1];
                for k in 0..s.in_p.len() {
                    s.in_p[k] = clamp_llr(b.ch_v1[k] + next.ext2_b[k]);
                }
            } else {
                for k in 0..s.in_p.len() {
                    s.in_p[k] = clamp_llr(b.ch_v1[k]);
                }
            }
        }
        let alpha = if i == 0 { self.alpha_inherit[0] } else { self.blocks[i - 1].alpha_out[0] };
        let beta = if i + 1 < active { self.blocks[i + 1].beta_in[0] } else { uniform_metrics() };
        bcjr_block_into(&code.trellis, &s.in_a, &s.in_b, &s.in_p, &alpha, &beta, &mut s.bcjr, &mut s.out)?;
        let r = &s.out;
        let b = &mut self.blocks[i];
        b.ext1_a.copy_from_slice(&r.ext_a);
        code.p2.apply_inverse_into(&r.ext_b, &mut b.ext1_b);
        b.ext1_p.copy_from_slice(&r.ext_p);
        b.alpha_out[0] = r.alpha_out;
        b.beta_in[0] = r.beta_in;
        Ok(())
    }

    fn run_decoder2(&mut self, i: usize, active: usize) -> Result<(), Error> {
        let code = self.code;
        let s = &mut self.scratch;
        {
            let b = &self.blocks[i];
            for k in 0..s.nat.len() {
                s.nat[k] = clamp_llr(b.ch_u[k] + b.ext1_a[k]);
            }
            code.p0.apply_into(&s.nat, &mut s.in_a);
            match (i, &self.left) {
                (0, LeftEdge::ChainStart) => s.in_b.copy_from_slice(&self.known_zero),
                (0, LeftEdge::Decided { b2, .. }) => s.in_b.copy_from_slice(b2),
                _ => {
                    let prev = &self.blocks[i - 1];
                    for k in 0..s.nat.len() {
                        s.nat[k] = clamp_llr(prev.ch_v1[k] + prev.ext1_p[k]);
                    }
                    code.p1.apply_into(&s.nat, &mut s.in_b);
                }
            }
            if i + 1 < active {
                let next = &self.blocks[i + 1];
                for k in 0..s.in_p.len() {
                    s.in_p[k] = clamp_llr(b.ch_v2[k] + next.ext1_b[k]);
                }
            } else {
                for k in 0..s.in_p.len() {
                    s.in_p[k] = clamp_llr(b.ch_v2[k]);
                }
            }
        }
        let alpha = if i == 0 { self.alpha_inherit[1] } else { self.blocks[i - 1].alpha_out[1] };
        let beta = if i + 1 < active { self.blocks[i + 1].beta_in[1] } else { uniform_metrics() };
        bcjr_block_into(&code.trellis, &s.in_a, &s.in_b, &s.in_p, &alpha, &beta, &mut s.bcjr, &mut s.out)?;
        let r = &s.out;
        let b = &mut self.blocks[i];
        code.p0.apply_inverse_into(&r.ext_a, &mut b.ext2_a);
        code.p1.apply_inverse_into(&r.ext_b, &mut b.ext2_b);
        b.ext2_p.copy_from_slice(&r.ext_p);
        b.alpha_out[1] = r.alpha_out;
        b.beta_in[1] = r.beta_in;
        for k in 0..b.decision.len() {
            b.decision[k] = clamp_llr(b.ch_u[k] + b.ext1_a[k] + b.ext2_a[k]);
        }
        Ok(())
    }

    /// One forward sweep and one backward sweep of vertical iterations.
    pub fn horizontal_iteration(&mut self) -> Result<(), Error> {
        let active = self.active_len();
        if active == 0 {
            return Err(Error::WindowUnderfilled { needed: 1, have: 0 });
        }
        for i in 0..active {
            self.vertical_iteration(i)?;
        }
        for i in (0..active).rev() {
            self.vertical_iteration(i)?;
        }
        self.iteration_count += 1;
        Ok(())
    }

    fn reset_messages(&mut self) {
        for b in self.blocks.iter_mut() {
            b.reset_messages();
        }
    }

    /// Makes block `idx` available, pulling from `src` if needed.
    fn ensure_block<S: BlockSource + ?Sized>(&mut self, idx: usize, src: &mut S) -> Result<bool, Error> {
        while self.blocks.len() <= idx {
            if !self.pull(src)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Iterates on the current window until the target can be decided,
    /// extending the window when the leading blocks stay unreliable.
    pub fn decode_target<S: BlockSource + ?Sized>(&mut self, src: &mut S) -> Result<BlockDecision, Error> {
        if self.blocks.len() < self.w_cur && !self.source_exhausted {
            return Err(Error::WindowUnderfilled {
                needed: self.w_cur,
                have: self.blocks.len(),
            });
        }
        if self.blocks.is_empty() {
            return Err(Error::WindowUnderfilled { needed: 1, have: 0 });
        }
        let mut total_iters = 0;
        let mut stopped_early = false;
        self.iteration_count = 0;
        loop {
            while self.iteration_count < self.cfg.horizontal_iters {
                self.horizontal_iteration()?;
                total_iters += 1;
                if self.cfg.stopping && ber_est(&self.blocks[0].decision)? <= self.cfg.gamma {
                    stopped_early = true;
                    break;
                }
            }
            if stopped_early || !self.cfg.extension || self.w_cur >= self.cfg.max_window {
                break;
            }
            if !self.leading_blocks_unreliable()? {
                break;
            }
            if !self.ensure_block(self.w_cur, src)? {
                break;
            }
            self.w_cur += 1;
            self.iteration_count = 0;
            self.reset_messages();
        }
        let target = &self.blocks[0];
        Ok(BlockDecision {
            time: target.time,
            bits: target.hard_bits(),
            avg_abs_llr: avg_abs_llr(&target.decision)?,
            ber_est: ber_est(&target.decision)?,
            used_window: self.w_cur,
            blocks_in_window: self.active_len(),
            used_iterations: total_iters,
            stopped_early,
            resync_triggered: false,
            flushed: false,
        })
    }

    /// Any of the first `tau` window blocks below the reliability threshold.
    fn leading_blocks_unreliable(&self) -> Result<bool, Error> {
        let n = self.cfg.tau.min(self.active_len());
        for b in self.blocks.iter().take(n) {
            if avg_abs_llr(&b.decision)? < self.cfg.theta {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Updates the consecutive-failure counter with a fresh target decision
    /// and reports whether resynchronization must fire.
    pub fn check_resync(&mut self, decision: &BlockDecision) -> bool {
        if decision.avg_abs_llr < self.cfg.theta {
            self.fail_count += 1;
        } else {
            self.fail_count = 0;
        }
        if self.cfg.resync && self.fail_count >= self.cfg.resync_after {
            self.fail_count = 0;
            true
        } else {
            false
        }
    }

    /// Drops the decided target and hands its boundary information to the
    /// new target.
    pub fn shift_window(&mut self) {
        let Some(old) = self.blocks.pop_front() else {
            return;
        };
        let code = self.code;
        let total = |ch: &[Llr], ext: &[Llr]| ch.iter().zip(ext).map(|(c, e)| clamp_llr(c + e)).collect::<Vec<_>>();
        let b1 = code.p2.apply(&total(&old.ch_v2, &old.ext2_p)).expect("block length");
        let b2 = code.p1.apply(&total(&old.ch_v1, &old.ext1_p)).expect("block length");
        self.alpha_inherit = old.alpha_out;
        self.left = LeftEdge::Decided { b1, b2 };
        self.w_cur = self.cfg.window;
        self.iteration_count = 0;
    }

    /// Decides every buffered block from its current LLRs, signals the
    /// encoder, and restarts from the chain-start state.
    pub fn resynchronize<S: BlockSource + ?Sized>(&mut self, src: &mut S) -> Result<Vec<BlockDecision>, Error> {
        let used_window = self.w_cur;
        let in_window = self.active_len();
        self.blocks.pop_front();
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in self.blocks.drain(..) {
            out.push(BlockDecision {
                time: b.time,
                bits: b.hard_bits(),
                avg_abs_llr: avg_abs_llr(&b.decision)?,
                ber_est: ber_est(&b.decision)?,
                used_window,
                blocks_in_window: in_window,
                used_iterations: 0,
                stopped_early: false,
                resync_triggered: false,
                flushed: true,
            });
        }
        src.resync();
        self.left = LeftEdge::ChainStart;
        self.alpha_inherit = [zero_state_metrics(); 2];
        self.next_chain_start = true;
        self.w_cur = self.cfg.window;
        self.fail_count = 0;
        self.iteration_count = 0;
        Ok(out)
    }

    /// Decides the next target (and, on resync, every other buffered block).
    /// Returns `None` once the source is exhausted and the window is empty.
    pub fn step<S: BlockSource + ?Sized>(&mut self, src: &mut S) -> Result<Option<Vec<BlockDecision>>, Error> {
        self.fill(src)?;
        if self.blocks.is_empty() {
            return Ok(None);
        }
        let mut decision = self.decode_target(src)?;
        if self.check_resync(&decision) {
            decision.resync_triggered = true;
            let mut out = vec![decision];
            out.extend(self.resynchronize(src)?);
            Ok(Some(out))
        } else {
            self.shift_window();
            Ok(Some(vec![decision]))
        }
    }

    /// Decodes everything `src` delivers, in block order.
    pub fn run<S: BlockSource + ?Sized>(&mut self, src: &mut S) -> Result<Vec<BlockDecision>, Error> {
        let mut out = Vec::new();
        while let Some(ds) = self.step(src)? {
            out.extend(ds);
        }
        Ok(out)
    }
}
