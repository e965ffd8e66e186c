//! Bitplane serialization of merged rank positions.
//!
//! Surviving rank values are visited from the highest down. For each value
//! the not-yet-coded positions are scanned in raster order and a binary
//! symbol says whether the pixel carries that value. The context of a
//! symbol is the number of already-coded pixels among its 8 neighbors.
//! Pixels left over after the second-lowest value take the lowest value
//! without any symbols being spent on them.

use crate::entropy::merge::MergeMap;
use crate::entropy::mq::{MqDecoder, MqEncoder};
use crate::error::{Error, Result};
use crate::lrt::{RankImage, Sampling, ABSENT};

/// Contexts 0..=8: count of coded 8-neighbors.
pub const CONTEXTS: usize = 9;

/// Coded-status grid with a one-pixel border that is never marked.
#[derive(Debug, Clone)]
pub struct ContextState {
    width: usize,
    stride: usize,
    status: Vec<u8>,
}

impl ContextState {
    pub fn new(width: usize, height: usize) -> Self {
        let stride = width + 2;
        ContextState { width, stride, status: vec![0; stride * (height + 2)] }
    }

    #[inline]
    fn cell(&self, idx: usize) -> usize {
        let (y, x) = (idx / self.width, idx % self.width);
        (y + 1) * self.stride + x + 1
    }

    /// Context of raster position `idx`.
    #[inline]
    pub fn context(&self, idx: usize) -> u8 {
        let c = self.cell(idx);
        let s = &self.status;
        let up = c - self.stride;
        let down = c + self.stride;
        s[up - 1] + s[up] + s[up + 1] + s[c - 1] + s[c + 1] + s[down - 1] + s[down] + s[down + 1]
    }

    #[inline]
    pub fn mark(&mut self, idx: usize) {
        let c = self.cell(idx);
        self.status[c] = 1;
    }

    #[inline]
    pub fn is_coded(&self, idx: usize) -> bool {
        self.status[self.cell(idx)] == 1
    }
}

fn check_merged(r: &RankImage, m: &MergeMap) -> Result<()> {
    if r.max_rank() != m.max_rank() {
        return Err(Error::param("rank image and merge map disagree on max rank"));
    }
    let mut allowed = [false; 256];
    for &v in m.distinct() {
        allowed[v as usize] = true;
    }
    if let Some(&bad) = r.ranks().iter().find(|&&v| v != ABSENT && !allowed[v as usize]) {
        return Err(Error::param(format!("rank {bad} is not a surviving merged value")));
    }
    Ok(())
}

/// Visit every coded symbol in order, letting `emit` see the symbol and its
/// context. Returns the number of symbols.
fn scan_planes(r: &RankImage, m: &MergeMap, mut emit: impl FnMut(u8, u8)) -> u64 {
    let mut cs = ContextState::new(r.width(), r.height());
    let mut remaining: Vec<u32> =
        r.ranks().iter().enumerate().filter(|(_, &v)| v != ABSENT).map(|(i, _)| i as u32).collect();
    let values = m.distinct();
    let mut count = 0u64;
    for &value in &values[..values.len().saturating_sub(1)] {
        remaining.retain(|&i| {
            let i = i as usize;
            let hit = r.ranks()[i] == value;
            emit(hit as u8, cs.context(i));
            count += 1;
            if hit {
                cs.mark(i);
            }
            !hit
        });
    }
    count
}

/// The `(symbol, context)` stream for a merged rank image.
pub fn encode_positions(r: &RankImage, m: &MergeMap) -> Result<Vec<(u8, u8)>> {
    check_merged(r, m)?;
    let mut out = Vec::new();
    scan_planes(r, m, |s, cx| out.push((s, cx)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedRanks {
    pub payload: Vec<u8>,
    /// Number of binary symbols sent through the arithmetic coder.
    pub symbols: u64,
}

/// Position coding and MQ coding in one pass.
pub fn encode_rank_image(r: &RankImage, m: &MergeMap) -> Result<CodedRanks> {
    check_merged(r, m)?;
    let mut enc = MqEncoder::new(CONTEXTS);
    let symbols = scan_planes(r, m, |s, cx| enc.encode(s, cx as usize));
    Ok(CodedRanks { payload: enc.finish(), symbols })
}

/// Inverse of [`encode_rank_image`].
pub fn decode_positions(
    bytes: &[u8],
    width: usize,
    height: usize,
    sampling: Sampling,
    m: &MergeMap,
) -> Result<RankImage> {
    if width == 0 || height == 0 {
        return Err(Error::bitstream("zero-sized rank image"));
    }
    let values = m.distinct();
    let lowest = *values.last().expect("merge map has at least one value");
    let mut ranks = vec![ABSENT; width * height];
    let mut remaining = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            if sampling.keeps(x, y) {
                remaining.push((y * width + x) as u32);
            }
        }
    }
    let mut cs = ContextState::new(width, height);
    let mut dec = MqDecoder::new(bytes, CONTEXTS);
    for &value in &values[..values.len() - 1] {
        remaining.retain(|&i| {
            let i = i as usize;
            let hit = dec.decode(cs.context(i) as usize) == 1;
            if hit {
                cs.mark(i);
                ranks[i] = value;
            }
            !hit
        });
    }
    dec.finish()?;
    for &i in &remaining {
        ranks[i as usize] = lowest;
    }
    Ok(RankImage::from_parts(width, height, m.max_rank(), sampling, ranks))
}
