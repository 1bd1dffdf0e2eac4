//! Rate-2/3, 4-state recursive systematic convolutional component code.
//!
//! Generator matrix
//!
//! ```text
//! G(D) = | 1 0   1 / (1 + D + D^2)        |
//!        | 0 1   (1 + D^2) / (1 + D + D^2) |
//! ```
//!
//! realized in observer canonical form with registers `(r1, r2)`:
//!
//! ```text
//! p_k  = a_k ^ b_k ^ r1
//! r1'  = r2 ^ p_k
//! r2'  = b_k ^ p_k
//! ```
//!
//! Input `a` is the row with numerator `1` (the information stream in the
//! braided encoder), input `b` the row with numerator `1 + D^2` (the fed-back
//! parity stream).
//!
//! LLRs follow `L = ln(P(bit = 0) / P(bit = 1))` throughout.

use crate::{Bit, Error, Llr, L_MAX};

/// Number of trellis states.
pub const NUM_STATES: usize = 4;

/// Log-domain stand-in for `ln 0`.
pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// `(next state, parity)` for every `(state, 2a + b)`, built at compile time
/// so the decoding kernel runs on constant indices.
const fn build_tables() -> ([[u8; 4]; NUM_STATES], [[u8; 4]; NUM_STATES]) {
    let mut next = [[0u8; 4]; NUM_STATES];
    let mut parity = [[0u8; 4]; NUM_STATES];
    let mut s = 0;
    while s < NUM_STATES {
        let r1 = (s >> 1) as u8 & 1;
        let r2 = s as u8 & 1;
        let mut i = 0;
        while i < 4 {
            let a = (i >> 1) as u8;
            let b = (i & 1) as u8;
            let p = a ^ b ^ r1;
            next[s][i] = 2 * (r2 ^ p) + (b ^ p);
            parity[s][i] = p;
            i += 1;
        }
        s += 1;
    }
    (next, parity)
}

const NEXT: [[u8; 4]; NUM_STATES] = build_tables().0;
const PARITY: [[u8; 4]; NUM_STATES] = build_tables().1;

/// One trellis branch leaving a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branch {
    pub a: Bit,
    pub b: Bit,
    pub parity: Bit,
    pub next: usize,
}

/// Precomputed transition/output table of the component code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrellisTable {
    /// `branches[s][2 * a + b]`.
    branches: [[Branch; 4]; NUM_STATES],
}

/// Register contents of one component encoder, packed as `2 * r1 + r2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ComponentState(u8);

impl ComponentState {
    pub const ZERO: ComponentState = ComponentState(0);

    pub fn new(value: usize) -> Self {
        assert!(value < NUM_STATES, "state {value} out of range");
        ComponentState(value as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TrellisTable {
    /// Builds the table for the fixed generator matrix.
    pub fn new() -> Self {
        let mut branches = [[Branch {
            a: 0,
            b: 0,
            parity: 0,
            next: 0,
        }; 4]; NUM_STATES];
        for (s, row) in branches.iter_mut().enumerate() {
            for (i, br) in row.iter_mut().enumerate() {
                *br = Branch {
                    a: (i >> 1) as Bit,
                    b: (i & 1) as Bit,
                    parity: PARITY[s][i],
                    next: NEXT[s][i] as usize,
                };
            }
        }
        TrellisTable { branches }
    }

    pub fn num_states(&self) -> usize {
        NUM_STATES
    }

    /// Branch taken from `state` on input pair `(a, b)`.
    #[inline]
    pub fn branch(&self, state: usize, a: Bit, b: Bit) -> Branch {
        self.branches[state][(2 * a + b) as usize]
    }

    /// All four branches leaving `state`.
    pub fn branches_from(&self, state: usize) -> &[Branch; 4] {
        &self.branches[state]
    }

    /// Encodes one block starting from `state`. No tail is appended; the
    /// returned state carries over into the next block.
    pub fn encode_block(
        &self,
        state: ComponentState,
        a: &[Bit],
        b: &[Bit],
    ) -> Result<(Vec<Bit>, ComponentState), Error> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                what: "encoder inputs",
                expected: a.len(),
                actual: b.len(),
            });
        }
        let mut s = state.index();
        let mut parity = Vec::with_capacity(a.len());
        for (&ak, &bk) in a.iter().zip(b) {
            let br = self.branch(s, ak & 1, bk & 1);
            parity.push(br.parity);
            s = br.next;
        }
        Ok((parity, ComponentState(s as u8)))
    }
}

impl Default for TrellisTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Jacobian logarithm `ln(e^x + e^y)`.
#[inline]
pub fn maxstar(x: f64, y: f64) -> f64 {
    if x == NEG_INF {
        return y;
    }
    if y == NEG_INF {
        return x;
    }
    x.max(y) + (-(x - y).abs()).exp().ln_1p()
}

#[inline]
pub fn clamp_llr(x: Llr) -> Llr {
    x.clamp(-L_MAX, L_MAX)
}

/// Output of one soft-in/soft-out pass over a block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BcjrResult {
    pub ext_a: Vec<Llr>,
    pub ext_b: Vec<Llr>,
    pub ext_p: Vec<Llr>,
    /// A-posteriori LLRs of stream `a` (input + extrinsic).
    pub app_a: Vec<Llr>,
    /// Log-domain forward metrics after the last step, max-normalized.
    pub alpha_out: [f64; NUM_STATES],
    /// Log-domain backward metrics at the first step, max-normalized.
    pub beta_in: [f64; NUM_STATES],
}

fn check_inputs(in_a: &[Llr], in_b: &[Llr], in_p: &[Llr]) -> Result<(), Error> {
    for (what, v) in [("b-port LLRs", in_b), ("parity LLRs", in_p)] {
        if v.len() != in_a.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: in_a.len(),
                actual: v.len(),
            });
        }
    }
    if in_a.iter().chain(in_b).chain(in_p).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("BCJR input LLRs"));
    }
    Ok(())
}

fn check_boundary(m: &[f64; NUM_STATES]) -> Result<(), Error> {
    if m.iter().any(|x| x.is_nan() || *x == f64::INFINITY) || m.iter().all(|&x| x == NEG_INF) {
        return Err(Error::NonFinite("boundary state metrics"));
    }
    Ok(())
}

fn normalize_log(m: &mut [f64; NUM_STATES]) {
    let max = m.iter().copied().fold(NEG_INF, f64::max);
    for x in m.iter_mut() {
        *x -= max;
    }
}

/// Log-MAP forward-backward over one block, computed with `maxstar`.
///
/// `in_a`, `in_b`, `in_p` are the total input LLRs (channel plus prior) of
/// the three trellis ports. `alpha_init` and `beta_init` are log-domain state
/// distributions at the block boundaries. Inputs beyond `±L_MAX` are
/// saturated before use.
///
/// This is the reference kernel; [`bcjr_block`] computes the same quantity in
/// the scaled probability domain and is what the window decoder runs.
pub fn bcjr_block_log(
    trellis: &TrellisTable,
    in_a: &[Llr],
    in_b: &[Llr],
    in_p: &[Llr],
    alpha_init: &[f64; NUM_STATES],
    beta_init: &[f64; NUM_STATES],
) -> Result<BcjrResult, Error> {
    check_inputs(in_a, in_b, in_p)?;
    check_boundary(alpha_init)?;
    check_boundary(beta_init)?;
    let n = in_a.len();

    // Branch metric: -L/2 for a one bit, +L/2 for a zero bit.
    let half = |l: f64, bit: Bit| {
        let l = clamp_llr(l);
        if bit == 0 {
            0.5 * l
        } else {
            -0.5 * l
        }
    };
    let gamma = |k: usize, br: &Branch| half(in_a[k], br.a) + half(in_b[k], br.b) + half(in_p[k], br.parity);

    let mut alpha = vec![[NEG_INF; NUM_STATES]; n + 1];
    alpha[0] = *alpha_init;
    normalize_log(&mut alpha[0]);
    for k in 0..n {
        let mut next = [NEG_INF; NUM_STATES];
        for s in 0..NUM_STATES {
            if alpha[k][s] == NEG_INF {
                continue;
            }
            for br in trellis.branches_from(s) {
                next[br.next] = maxstar(next[br.next], alpha[k][s] + gamma(k, br));
            }
        }
        normalize_log(&mut next);
        alpha[k + 1] = next;
    }

    let mut beta = *beta_init;
    normalize_log(&mut beta);
    let mut res = BcjrResult {
        ext_a: vec![0.0; n],
        ext_b: vec![0.0; n],
        ext_p: vec![0.0; n],
        app_a: vec![0.0; n],
        alpha_out: alpha[n],
        beta_in: beta,
    };
    for k in (0..n).rev() {
        let mut num = [[NEG_INF; 2]; 3];
        let mut prev = [NEG_INF; NUM_STATES];
        for s in 0..NUM_STATES {
            for br in trellis.branches_from(s) {
                let g = gamma(k, br);
                prev[s] = maxstar(prev[s], g + beta[br.next]);
                let m = alpha[k][s] + g + beta[br.next];
                num[0][br.a as usize] = maxstar(num[0][br.a as usize], m);
                num[1][br.b as usize] = maxstar(num[1][br.b as usize], m);
                num[2][br.parity as usize] = maxstar(num[2][br.parity as usize], m);
            }
        }
        let app = |i: usize| num[i][0] - num[i][1];
        let app_a = app(0);
        res.ext_a[k] = clamp_llr(app_a - in_a[k]);
        res.ext_b[k] = clamp_llr(app(1) - in_b[k]);
        res.ext_p[k] = clamp_llr(app(2) - in_p[k]);
        res.app_a[k] = clamp_llr(app_a);
        normalize_log(&mut prev);
        beta = prev;
    }
    res.beta_in = beta;
    Ok(res)
}

/// Relative weight `P(1) / P(0) = e^{-L}` of a port, with `L` clamped to
/// `±L_MAX`.
#[inline]
fn one_weight(l: f64) -> f64 {
    (-l.clamp(-L_MAX, L_MAX)).exp()
}

/// Branch weights of one step: `gamma[s][2a + b]`.
#[inline]
fn step_gammas(w: &[f64; 3]) -> [[f64; 4]; NUM_STATES] {
    let wab = [1.0, w[1], w[0], w[0] * w[1]];
    let wp = [1.0, w[2]];
    let mut g = [[0.0; 4]; NUM_STATES];
    for s in 0..NUM_STATES {
        for i in 0..4 {
            g[s][i] = wab[i] * wp[PARITY[s][i] as usize];
        }
    }
    g
}

fn to_prob(m: &[f64; NUM_STATES]) -> [f64; NUM_STATES] {
    let max = m.iter().copied().fold(NEG_INF, f64::max);
    m.map(|x| (x - max).exp())
}

fn to_log(m: &[f64; NUM_STATES]) -> [f64; NUM_STATES] {
    let max = m.iter().copied().fold(0.0, f64::max);
    m.map(|x| (x / max).ln())
}

/// Rescales by a power of two so the largest entry lands in `[1, 2)`.
/// Exact, and cheaper than dividing by the maximum.
#[inline]
fn rescale(m: &mut [f64; NUM_STATES]) {
    let max = m[0].max(m[1]).max(m[2]).max(m[3]);
    let exp = (max.to_bits() >> 52) & 0x7ff;
    // 2^(1023 - exp) as an f64; exp is in [1, 2046] for normal positive values.
    let scale = f64::from_bits((2046 - exp) << 52);
    for x in m.iter_mut() {
        *x *= scale;
    }
}

/// Exact MAP forward-backward over one block.
///
/// Same contract as [`bcjr_block_log`]. The kernel is specialized to the
/// constant branch tables of [`TrellisTable`]. State metrics are carried as
/// probabilities rescaled by powers of two at every step, which keeps the
/// result equal to log-MAP up to rounding while needing one `exp` per port
/// and one `ln` per output per step. Branch weights are built from input
/// LLRs clamped to `±L_MAX`, so within a step they span at most `e^{150}`;
/// since every state reaches all four successors, no metric can underflow.
pub fn bcjr_block(
    trellis: &TrellisTable,
    in_a: &[Llr],
    in_b: &[Llr],
    in_p: &[Llr],
    alpha_init: &[f64; NUM_STATES],
    beta_init: &[f64; NUM_STATES],
) -> Result<BcjrResult, Error> {
    let mut ws = BcjrWorkspace::default();
    let mut res = BcjrResult::default();
    bcjr_block_into(trellis, in_a, in_b, in_p, alpha_init, beta_init, &mut ws, &mut res)?;
    Ok(res)
}

/// Buffers of [`bcjr_block_into`], kept between calls to avoid allocation.
#[derive(Clone, Debug, Default)]
pub struct BcjrWorkspace {
    weights: Vec<[f64; 3]>,
    alpha: Vec<[f64; NUM_STATES]>,
    beta: Vec<[f64; NUM_STATES]>,
}

/// [`bcjr_block`] writing into caller-owned buffers.
#[allow(clippy::too_many_arguments)]
pub fn bcjr_block_into(
    _trellis: &TrellisTable,
    in_a: &[Llr],
    in_b: &[Llr],
    in_p: &[Llr],
    alpha_init: &[f64; NUM_STATES],
    beta_init: &[f64; NUM_STATES],
    ws: &mut BcjrWorkspace,
    res: &mut BcjrResult,
) -> Result<(), Error> {
    check_inputs(in_a, in_b, in_p)?;
    check_boundary(alpha_init)?;
    check_boundary(beta_init)?;
    let n = in_a.len();

    ws.weights.clear();
    ws.weights.extend(
        in_a.iter()
            .zip(in_b)
            .zip(in_p)
            .map(|((&a, &b), &p)| [one_weight(a), one_weight(b), one_weight(p)]),
    );
    let weights = &ws.weights[..];

    // alpha[k]: forward metrics entering step k; beta[k]: backward metrics
    // entering step k from the right. The two recursions are independent and
    // run interleaved.
    ws.alpha.resize(n + 1, [0.0; NUM_STATES]);
    ws.beta.resize(n + 1, [0.0; NUM_STATES]);
    let (alpha, beta) = (&mut ws.alpha[..], &mut ws.beta[..]);
    alpha[0] = to_prob(alpha_init);
    beta[n] = to_prob(beta_init);
    for j in 0..n {
        let ga = step_gammas(&weights[j]);
        let cur = alpha[j];
        let mut next = [0.0; NUM_STATES];
        for s in 0..NUM_STATES {
            for i in 0..4 {
                next[NEXT[s][i] as usize] += cur[s] * ga[s][i];
            }
        }
        rescale(&mut next);
        alpha[j + 1] = next;

        let k = n - 1 - j;
        let gb = step_gammas(&weights[k]);
        let right = beta[k + 1];
        let mut prev = [0.0; NUM_STATES];
        for s in 0..NUM_STATES {
            for i in 0..4 {
                prev[s] += gb[s][i] * right[NEXT[s][i] as usize];
            }
        }
        rescale(&mut prev);
        beta[k] = prev;
    }

    for v in [&mut res.ext_a, &mut res.ext_b, &mut res.ext_p, &mut res.app_a] {
        v.resize(n, 0.0);
    }
    res.alpha_out = to_log(&alpha[n]);
    res.beta_in = to_log(&beta[0]);
    for k in 0..n {
        let g = step_gammas(&weights[k]);
        let (al, be) = (alpha[k], beta[k + 1]);
        // Posterior mass split by input pair and by parity.
        let mut by_ab = [0.0f64; 4];
        let mut by_p = [0.0f64; 2];
        for s in 0..NUM_STATES {
            for i in 0..4 {
                let m = al[s] * g[s][i] * be[NEXT[s][i] as usize];
                by_ab[i] += m;
                by_p[PARITY[s][i] as usize] += m;
            }
        }
        let app_a = ((by_ab[0] + by_ab[1]) / (by_ab[2] + by_ab[3])).ln();
        let app_b = ((by_ab[0] + by_ab[2]) / (by_ab[1] + by_ab[3])).ln();
        let app_p = (by_p[0] / by_p[1]).ln();
        res.ext_a[k] = clamp_llr(app_a - in_a[k]);
        res.ext_b[k] = clamp_llr(app_b - in_b[k]);
        res.ext_p[k] = clamp_llr(app_p - in_p[k]);
        res.app_a[k] = clamp_llr(app_a);
    }
    Ok(())
}

/// Log-domain point mass on the all-zero state.
pub fn zero_state_metrics() -> [f64; NUM_STATES] {
    [0.0, NEG_INF, NEG_INF, NEG_INF]
}

/// Log-domain uniform state distribution.
pub fn uniform_metrics() -> [f64; NUM_STATES] {
    [0.0; NUM_STATES]
}
