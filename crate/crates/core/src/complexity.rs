//! Encoder operation-count model, cycle weighting, the LDPC reference cost
//! and the transmit+compute power figure.
//!
//! Counts are kept as `f64` because the LDPC expression carries a
//! fractional `(n + 1) / 132` factor. Live counters gathered from the
//! instrumented encoder ([`LiveCounts`]) are exact integers.

use std::ops::{Add, Mul};

use serde::Serialize;

use crate::error::{Error, Result};

/// Sink for operations performed by the instrumented encoder paths.
/// The unit impl compiles to nothing.
pub trait OpTally {
    #[inline]
    fn compare(&mut self, _n: u64) {}
    #[inline]
    fn increment(&mut self, _n: u64) {}
    #[inline]
    fn add(&mut self, _n: u64) {}
    #[inline]
    fn shift(&mut self, _n: u64) {}
}

impl OpTally for () {}

/// Per-frame accumulator for the instrumented encoder.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LiveCounts {
    pub comparisons: u64,
    pub increments: u64,
    pub additions: u64,
    pub shifts: u64,
}

impl OpTally for LiveCounts {
    #[inline]
    fn compare(&mut self, n: u64) {
        self.comparisons += n;
    }
    #[inline]
    fn increment(&mut self, n: u64) {
        self.increments += n;
    }
    #[inline]
    fn add(&mut self, n: u64) {
        self.additions += n;
    }
    #[inline]
    fn shift(&mut self, n: u64) {
        self.shifts += n;
    }
}

/// Operation tallies by instruction class.
#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize)]
pub struct OpCounts {
    pub compare: f64,
    pub increment: f64,
    pub add: f64,
    pub memory: f64,
    pub shift: f64,
    pub decrement: f64,
    pub moves: f64,
    pub mod2: f64,
    pub div: f64,
    pub mul: f64,
}

impl OpCounts {
    pub fn cycles(&self, w: &CycleWeights) -> f64 {
        self.compare * w.compare
            + self.increment * w.increment
            + self.add * w.add
            + self.memory * w.memory
            + self.shift * w.shift
            + self.decrement * w.decrement
            + self.moves * w.moves
            + self.mod2 * w.mod2
            + self.div * w.div
            + self.mul * w.mul
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            compare: self.compare + o.compare,
            increment: self.increment + o.increment,
            add: self.add + o.add,
            memory: self.memory + o.memory,
            shift: self.shift + o.shift,
            decrement: self.decrement + o.decrement,
            moves: self.moves + o.moves,
            mod2: self.mod2 + o.mod2,
            div: self.div + o.div,
            mul: self.mul + o.mul,
        }
    }
}

impl Mul<f64> for OpCounts {
    type Output = OpCounts;

    fn mul(self, k: f64) -> OpCounts {
        OpCounts {
            compare: self.compare * k,
            increment: self.increment * k,
            add: self.add * k,
            memory: self.memory * k,
            shift: self.shift * k,
            decrement: self.decrement * k,
            moves: self.moves * k,
            mod2: self.mod2 * k,
            div: self.div * k,
            mul: self.mul * k,
        }
    }
}

/// Average clock cycles per operation class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleWeights {
    pub compare: f64,
    pub increment: f64,
    pub add: f64,
    pub memory: f64,
    pub shift: f64,
    pub decrement: f64,
    pub moves: f64,
    pub mod2: f64,
    pub div: f64,
    pub mul: f64,
}

impl Default for CycleWeights {
    /// Embedded in-order core figures.
    fn default() -> Self {
        CycleWeights {
            compare: 1.0,
            add: 1.0,
            div: 6.0,
            mul: 6.0,
            increment: 0.5,
            shift: 0.5,
            decrement: 0.5,
            mod2: 0.5,
            moves: 0.5,
            memory: 3.0,
        }
    }
}

/// Rank transform with every neighbor comparison evaluated per pixel:
/// `2PN(N+1)(C+I) + PA`.
pub fn lrt_cost_naive(pixels: u64, n: u32) -> OpCounts {
    let pairs = (pixels * n as u64 * (n as u64 + 1)) as f64;
    OpCounts {
        compare: 2.0 * pairs,
        increment: 2.0 * pairs,
        add: pixels as f64,
        ..Default::default()
    }
}

/// Rank transform with pairwise comparison results shared between the two
/// pixels of each pair: `PN(N+1)(C+2I) + PA`.
pub fn lrt_cost(pixels: u64, n: u32) -> OpCounts {
    let pairs = (pixels * n as u64 * (n as u64 + 1)) as f64;
    OpCounts { compare: pairs, increment: 2.0 * pairs, add: pixels as f64, ..Default::default() }
}

/// Number of position symbols emitted for a rank histogram given in
/// descending rank order (highest surviving rank first). The lowest plane
/// is implied and contributes nothing.
pub fn beta_symbols(pixels: u64, histogram_desc: &[u64]) -> Result<u64> {
    let total: u64 = histogram_desc.iter().sum();
    if total != pixels {
        return Err(Error::param(format!(
            "histogram sums to {total}, expected {pixels} coded positions"
        )));
    }
    let planes = histogram_desc.len().saturating_sub(1);
    let mut remaining = pixels;
    let mut beta = 0;
    for &count in &histogram_desc[..planes] {
        beta += remaining;
        remaining -= count;
    }
    Ok(beta)
}

/// Context-modeling cost: `P(C+4I) + (β−P)(C+8I)`.
pub fn context_cost(pixels: u64, beta: u64) -> Result<OpCounts> {
    if beta < pixels {
        return Err(Error::param(format!("beta {beta} below pixel count {pixels}")));
    }
    let p = pixels as f64;
    let rest = (beta - pixels) as f64;
    Ok(OpCounts { compare: p + rest, increment: 4.0 * p + 8.0 * rest, ..Default::default() })
}

/// Worst-case MQ encoder cost: `β(3M + C + A + 2SH + D + MV)`.
pub fn mq_cost(beta: u64) -> OpCounts {
    let b = beta as f64;
    OpCounts {
        memory: 3.0 * b,
        compare: b,
        add: b,
        shift: 2.0 * b,
        decrement: b,
        moves: b,
        ..Default::default()
    }
}

/// LDPC syndrome generation for the `code`-th code:
/// `8P(4A + 7M + D + (n+1)/132 (DIV + MULT + 2A + D))`.
pub fn ldpc_cost(pixels: u64, code: u32) -> OpCounts {
    let f = (code as f64 + 1.0) / 132.0;
    let per_unit = OpCounts {
        add: 4.0 + 2.0 * f,
        memory: 7.0,
        decrement: 1.0 + f,
        div: f,
        mul: f,
        ..Default::default()
    };
    per_unit * (8.0 * pixels as f64)
}

pub fn ldpc_cycles(pixels: u64, code: u32, w: &CycleWeights) -> f64 {
    ldpc_cost(pixels, code).cycles(w)
}

/// LDPC code indices compared against in the cost report.
pub const LDPC_CODES: [u32; 4] = [8, 11, 15, 23];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    /// Technology constant.
    pub k: f64,
    /// Transmit-to-processing power ratio.
    pub alpha: f64,
    /// WZ frame rate in frames per second.
    pub f_wz: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams { k: 1.0, alpha: 50.0, f_wz: 15.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub cycles: f64,
    pub rate_bps: f64,
    pub power: f64,
}

/// `k (f_wz * cycles + alpha * rate)`.
pub fn power(cycles: f64, rate_bps: f64, k: f64, alpha: f64, f_wz: f64) -> PowerEstimate {
    PowerEstimate { cycles, rate_bps, power: k * (f_wz * cycles + alpha * rate_bps) }
}

pub fn power_with(cycles: f64, rate_bps: f64, p: &PowerParams) -> PowerEstimate {
    power(cycles, rate_bps, p.k, p.alpha, p.f_wz)
}

/// What one WZ frame cost the encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderWork {
    /// All pixels of the frame (mean computation touches each once).
    pub pixels: u64,
    /// Pixels whose rank is computed and coded (half in sampled mode).
    pub ranked: u64,
    pub n: u32,
    pub beta: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EncoderCycles {
    pub lrt: f64,
    pub context: f64,
    pub mq: f64,
    pub total: f64,
}

pub fn encoder_cycles(work: &EncoderWork, w: &CycleWeights) -> Result<EncoderCycles> {
    let mut lrt = lrt_cost(work.ranked, work.n);
    lrt.add = work.pixels as f64;
    let lrt = lrt.cycles(w);
    let context = context_cost(work.ranked, work.beta)?.cycles(w);
    let mq = mq_cost(work.beta).cycles(w);
    Ok(EncoderCycles { lrt, context, mq, total: lrt + context + mq })
}
