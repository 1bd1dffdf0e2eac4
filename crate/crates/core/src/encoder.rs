//! Continuous rate-1/3 blockwise SBCC encoder.
//!
//! At time `t` encoder 1 sees `(u_t, P2(v2_{t-1}))` and emits `v1_t`;
//! encoder 2 sees `(P0(u_t), P1(v1_{t-1}))` and emits `v2_t`. Component
//! states run on across block boundaries and are cleared only at chain start
//! and on resynchronization.

use crate::permutor::BlockPermutor;
use crate::rsc::{ComponentState, TrellisTable};
use crate::{Bit, Error};

/// The fixed code description shared by encoder and decoder.
#[derive(Clone, Debug)]
pub struct SbccCode {
    pub trellis: TrellisTable,
    /// Permutes the information block into encoder 2.
    pub p0: BlockPermutor,
    /// Permutes encoder 1 parity into encoder 2 at the next time unit.
    pub p1: BlockPermutor,
    /// Permutes encoder 2 parity into encoder 1 at the next time unit.
    pub p2: BlockPermutor,
}

impl SbccCode {
    pub fn new(p0: BlockPermutor, p1: BlockPermutor, p2: BlockPermutor) -> Result<Self, Error> {
        for (what, p) in [("permutor P1", &p1), ("permutor P2", &p2)] {
            if p.len() != p0.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: p0.len(),
                    actual: p.len(),
                });
            }
        }
        Ok(SbccCode {
            trellis: TrellisTable::new(),
            p0,
            p1,
            p2,
        })
    }

    /// Three independent random permutors derived from one seed.
    pub fn random(block_len: usize, seed: u64) -> Result<Self, Error> {
        let p = |k: u64| BlockPermutor::random(block_len, crate::sim::mix64(seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        Self::new(p(1)?, p(2)?, p(3)?)
    }

    pub fn block_len(&self) -> usize {
        self.p0.len()
    }
}

/// One time unit of transmitted bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedBlock {
    pub u: Vec<Bit>,
    pub v1: Vec<Bit>,
    pub v2: Vec<Bit>,
}

impl CodedBlock {
    pub fn num_bits(&self) -> usize {
        self.u.len() + self.v1.len() + self.v2.len()
    }
}

#[derive(Clone, Debug)]
pub struct EncoderChain<'a> {
    code: &'a SbccCode,
    state1: ComponentState,
    state2: ComponentState,
    /// `P1(v1_{t-1})`, second input of encoder 2.
    pending_fb1: Vec<Bit>,
    /// `P2(v2_{t-1})`, second input of encoder 1.
    pending_fb2: Vec<Bit>,
    t: usize,
}

impl<'a> EncoderChain<'a> {
    pub fn new(code: &'a SbccCode) -> Self {
        let n = code.block_len();
        EncoderChain {
            code,
            state1: ComponentState::ZERO,
            state2: ComponentState::ZERO,
            pending_fb1: vec![0; n],
            pending_fb2: vec![0; n],
            t: 0,
        }
    }

    /// Number of blocks encoded so far (resets do not rewind it).
    pub fn time(&self) -> usize {
        self.t
    }

    pub fn states(&self) -> (ComponentState, ComponentState) {
        (self.state1, self.state2)
    }

    pub fn encode_next_block(&mut self, u: &[Bit]) -> Result<CodedBlock, Error> {
        let code = self.code;
        if u.len() != code.block_len() {
            return Err(Error::LengthMismatch {
                what: "information block",
                expected: code.block_len(),
                actual: u.len(),
            });
        }
        let (v1, s1) = code.trellis.encode_block(self.state1, u, &self.pending_fb2)?;
        let u_perm = code.p0.apply(u)?;
        let (v2, s2) = code.trellis.encode_block(self.state2, &u_perm, &self.pending_fb1)?;
        self.pending_fb1 = code.p1.apply(&v1)?;
        self.pending_fb2 = code.p2.apply(&v2)?;
        self.state1 = s1;
        self.state2 = s2;
        self.t += 1;
        Ok(CodedBlock { u: u.to_vec(), v1, v2 })
    }

    /// Clears both component states and the pending feedback so the next
    /// block starts a new chain.
    pub fn resync_reset(&mut self) {
        self.state1 = ComponentState::ZERO;
        self.state2 = ComponentState::ZERO;
        self.pending_fb1.fill(0);
        self.pending_fb2.fill(0);
    }
}
