//! δ-local rank transforms over full, odd and even extended neighborhoods.
//!
//! The rank of a pixel `x` is the number of neighbors `y` with
//! `y < x - δ`. Neighborhoods are the `(2N+1)²-1` square around the pixel,
//! optionally split by the parity of the city-block distance to the center.
//!
//! Pixels outside the frame are taken from a mirror fold of the frame
//! (`…, 2, 1, 0, 1, 2, …`). That keeps every pixel's neighborhood full and
//! maps an out-of-frame neighbor to an in-frame pixel whose offset has the
//! same parity, so the shared-comparison transform below never has to fall
//! back to a fresh comparison at the border.

use crate::complexity::OpTally;
use crate::error::{Error, Result};
use crate::media::Frame;

/// Rank value marking a position that was dropped by sampling.
pub const ABSENT: u8 = u8::MAX;

pub const MAX_NEIGHBORHOOD: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Neighbors at odd city-block distance.
    Odd,
    /// Neighbors at even city-block distance (center excluded).
    Even,
    /// The whole square.
    Full,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Odd => 0,
            Variant::Even => 1,
            Variant::Full => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Variant::Odd),
            1 => Some(Variant::Even),
            2 => Some(Variant::Full),
            _ => None,
        }
    }

    fn admits(self, dy: i32, dx: i32) -> bool {
        let d = dy.abs() + dx.abs();
        match self {
            Variant::Odd => d % 2 == 1,
            Variant::Even => d > 0 && d % 2 == 0,
            Variant::Full => d > 0,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odd" => Ok(Variant::Odd),
            "even" => Ok(Variant::Even),
            "full" => Ok(Variant::Full),
            _ => Err(Error::param(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampling {
    Full,
    /// Checkerboard: only positions with even `x + y` keep their rank.
    Half,
}

impl Sampling {
    pub fn code(self) -> u8 {
        match self {
            Sampling::Full => 0,
            Sampling::Half => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Sampling::Full),
            1 => Some(Sampling::Half),
            _ => None,
        }
    }

    #[inline]
    pub fn keeps(self, x: usize, y: usize) -> bool {
        match self {
            Sampling::Full => true,
            Sampling::Half => (x + y).is_multiple_of(2),
        }
    }
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Sampling::Full),
            "half" => Ok(Sampling::Half),
            _ => Err(Error::param(format!("unknown sampling {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LrtParams {
    pub n: u8,
    pub delta: i8,
    pub variant: Variant,
    pub sampling: Sampling,
}

impl Default for LrtParams {
    fn default() -> Self {
        LrtParams { n: 2, delta: -10, variant: Variant::Odd, sampling: Sampling::Full }
    }
}

impl LrtParams {
    pub fn new(n: u8, delta: i8, variant: Variant, sampling: Sampling) -> Result<Self> {
        let p = LrtParams { n, delta, variant, sampling };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_NEIGHBORHOOD).contains(&self.n) {
            return Err(Error::param(format!("neighborhood size {} outside 1..=4", self.n)));
        }
        Ok(())
    }

    pub fn max_rank(&self) -> u8 {
        max_rank(self.n, self.variant)
    }
}

/// Size of the neighbor set, which is also the largest attainable rank.
pub fn max_rank(n: u8, variant: Variant) -> u8 {
    let base = n as u32 * (n as u32 + 1);
    match variant {
        Variant::Odd | Variant::Even => (2 * base) as u8,
        Variant::Full => (4 * base) as u8,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSpec {
    pub n: u8,
    pub variant: Variant,
    /// `(dy, dx)` pairs in raster order.
    pub offsets: Vec<(i32, i32)>,
}

impl NeighborhoodSpec {
    /// The offsets that come first in raster order; each pair `{o, -o}` is
    /// represented once.
    pub fn forward_half(&self) -> Vec<(i32, i32)> {
        self.offsets.iter().copied().filter(|&(dy, dx)| dy > 0 || (dy == 0 && dx > 0)).collect()
    }
}

pub fn neighborhood_offsets(n: u8, variant: Variant) -> Result<NeighborhoodSpec> {
    if !(1..=MAX_NEIGHBORHOOD).contains(&n) {
        return Err(Error::param(format!("neighborhood size {n} outside 1..=4")));
    }
    let r = n as i32;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if variant.admits(dy, dx) {
                offsets.push((dy, dx));
            }
        }
    }
    Ok(NeighborhoodSpec { n, variant, offsets })
}

/// Number of neighbors lying below `center` by more than `delta`.
pub fn delta_rank(center: u8, neighbors: &[u8], delta: i32) -> u8 {
    let threshold = center as i32 - delta;
    neighbors.iter().filter(|&&y| (y as i32) < threshold).count() as u8
}

/// Mirror-fold a coordinate into `0..len`.
#[inline]
pub(crate) fn fold(c: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = c.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Per-pixel ranks, or [`ABSENT`] where sampling dropped the pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct RankImage {
    width: usize,
    height: usize,
    max_rank: u8,
    sampling: Sampling,
    ranks: Vec<u8>,
}

impl std::fmt::Debug for RankImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RankImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("max_rank", &self.max_rank)
            .field("sampling", &self.sampling)
            .finish_non_exhaustive()
    }
}

impl RankImage {
    /// Build from raw values. Checks the range of present ranks and that the
    /// absent positions follow `sampling`.
    pub fn from_raw(
        width: usize,
        height: usize,
        max_rank: u8,
        sampling: Sampling,
        ranks: Vec<u8>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || ranks.len() != width * height {
            return Err(Error::param("rank image geometry does not match its data"));
        }
        if max_rank == ABSENT {
            return Err(Error::param("max rank collides with the absent marker"));
        }
        for (i, &r) in ranks.iter().enumerate() {
            let keep = sampling.keeps(i % width, i / width);
            if keep && r > max_rank {
                return Err(Error::param(format!("rank {r} above max {max_rank} at {i}")));
            }
            if !keep && r != ABSENT {
                return Err(Error::param(format!("position {i} should be absent")));
            }
        }
        Ok(RankImage { width, height, max_rank, sampling, ranks })
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        max_rank: u8,
        sampling: Sampling,
        ranks: Vec<u8>,
    ) -> Self {
        debug_assert_eq!(ranks.len(), width * height);
        RankImage { width, height, max_rank, sampling, ranks }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn max_rank(&self) -> u8 {
        self.max_rank
    }

    #[inline]
    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    #[inline]
    pub fn ranks(&self) -> &[u8] {
        &self.ranks
    }

    #[inline]
    pub fn raw(&self, x: usize, y: usize) -> u8 {
        self.ranks[y * self.width + x]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<u8> {
        let r = self.raw(x, y);
        (r != ABSENT).then_some(r)
    }

    pub fn present_count(&self) -> usize {
        self.ranks.iter().filter(|&&r| r != ABSENT).count()
    }

    /// Counts of each rank value `0..=max_rank` over present positions.
    pub fn histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.max_rank as usize + 1];
        for &r in self.ranks.iter().filter(|&&r| r != ABSENT) {
            h[r as usize] += 1;
        }
        h
    }

    pub fn same_geometry(&self, other: &RankImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Ranks stretched to 0–255 for viewing; absent positions are black.
    pub fn to_debug_frame(&self) -> Frame {
        let scale = 255.0 / self.max_rank.max(1) as f64;
        let samples = self
            .ranks
            .iter()
            .map(|&r| if r == ABSENT { 0 } else { (r as f64 * scale).round() as u8 })
            .collect();
        Frame::new(self.width, self.height, samples).expect("rank image geometry")
    }

    /// Unscaled ranks with [`ABSENT`] kept as 255, for lossless dumps.
    pub fn to_raw_frame(&self) -> Frame {
        Frame::new(self.width, self.height, self.ranks.clone()).expect("rank image geometry")
    }

    pub fn from_raw_frame(frame: &Frame, max_rank: u8, sampling: Sampling) -> Result<Self> {
        Self::from_raw(frame.width(), frame.height(), max_rank, sampling, frame.samples().to_vec())
    }
}

/// δ-LRT of a frame, sampled afterwards when `p.sampling` is `Half`.
pub fn transform(frame: &Frame, p: &LrtParams) -> RankImage {
    transform_tallied(frame, p, &mut ())
}

/// [`transform`] reporting every comparison and rank increment to `tally`.
///
/// Each pixel owns the comparisons against its forward-half neighbors; the
/// two outcome bits of a comparison feed both endpoints. This performs
/// exactly `P·|half|` comparisons and `P·|S|` increments for frames at
/// least two pixels wide and tall.
pub fn transform_tallied<T: OpTally>(frame: &Frame, p: &LrtParams, tally: &mut T) -> RankImage {
    let spec = neighborhood_offsets(p.n, p.variant).expect("validated params");
    let half = spec.forward_half();
    let (w, h) = (frame.width(), frame.height());
    let px = frame.samples();
    let delta = p.delta as i32;
    let hn = half.len();
    let r = p.n as i32;
    let side = 2 * r + 1;

    let mut slot_of = vec![usize::MAX; (side * side) as usize];
    for (k, &(dy, dx)) in half.iter().enumerate() {
        slot_of[((dy + r) * side + dx + r) as usize] = k;
    }
    let lookup = |dy: i32, dx: i32| -> Option<usize> {
        if dy.abs() > r || dx.abs() > r {
            return None;
        }
        let k = slot_of[((dy + r) * side + dx + r) as usize];
        (k != usize::MAX).then_some(k)
    };

    // bit 0: the forward neighbor counts toward this pixel's rank
    // bit 1: this pixel counts toward the forward neighbor's rank
    let mut slots = vec![0u8; w * h * hn];
    for y in 0..h {
        for x in 0..w {
            let a = px[y * w + x] as i32;
            let base = (y * w + x) * hn;
            for (k, &(dy, dx)) in half.iter().enumerate() {
                let ny = fold(y as isize + dy as isize, h);
                let nx = fold(x as isize + dx as isize, w);
                let b = px[ny * w + nx] as i32;
                slots[base + k] = ((b < a - delta) as u8) | (((a < b - delta) as u8) << 1);
            }
            tally.compare(hn as u64);
        }
    }

    let mut ranks = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let base = idx * hn;
            let mut rank = 0u8;
            for k in 0..hn {
                rank += slots[base + k] & 1;
            }
            for (k, &(dy, dx)) in half.iter().enumerate() {
                let by = y as isize - dy as isize;
                let bx = x as isize - dx as isize;
                let bit = if by >= 0 && bx >= 0 && (by as usize) < h && (bx as usize) < w {
                    (slots[(by as usize * w + bx as usize) * hn + k] >> 1) & 1
                } else {
                    let ry = fold(by, h);
                    let rx = fold(bx, w);
                    let (ddy, ddx) = (ry as i32 - y as i32, rx as i32 - x as i32);
                    if ddy == 0 && ddx == 0 {
                        (delta < 0) as u8
                    } else if let Some(k2) = lookup(ddy, ddx) {
                        slots[base + k2] & 1
                    } else if let Some(k2) = lookup(-ddy, -ddx) {
                        (slots[(ry * w + rx) * hn + k2] >> 1) & 1
                    } else {
                        // only reachable for one-pixel-wide frames, where the
                        // fold cannot preserve offset parity
                        tally.compare(1);
                        ((px[ry * w + rx] as i32) < px[idx] as i32 - delta) as u8
                    }
                };
                rank += bit;
            }
            tally.increment(2 * hn as u64);
            ranks[idx] = rank;
        }
    }

    let full = RankImage::from_parts(w, h, p.max_rank(), Sampling::Full, ranks);
    match p.sampling {
        Sampling::Full => full,
        Sampling::Half => sample_half(&full).expect("full-sampled input"),
    }
}

/// Keep the checkerboard half (`x + y` even) of a fully sampled rank image.
pub fn sample_half(r: &RankImage) -> Result<RankImage> {
    if r.sampling != Sampling::Full {
        return Err(Error::param("rank image is already sampled"));
    }
    let ranks = r
        .ranks
        .iter()
        .enumerate()
        .map(|(i, &v)| if Sampling::Half.keeps(i % r.width, i / r.width) { v } else { ABSENT })
        .collect();
    Ok(RankImage::from_parts(r.width, r.height, r.max_rank, Sampling::Half, ranks))
}

/// Fill absent positions with the lower median of their in-frame axial
/// neighbors. Fully sampled input comes back unchanged.
pub fn interpolate_missing(r: &RankImage) -> RankImage {
    if r.sampling == Sampling::Full {
        return r.clone();
    }
    let (w, h) = (r.width, r.height);
    let mut out = r.ranks.clone();
    let mut buf = [0u8; 4];
    for y in 0..h {
        for x in 0..w {
            if r.raw(x, y) != ABSENT {
                continue;
            }
            let mut k = 0;
            for (dx, dy) in [(0isize, -1isize), (-1, 0), (1, 0), (0, 1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let v = r.raw(nx as usize, ny as usize);
                if v != ABSENT {
                    buf[k] = v;
                    k += 1;
                }
            }
            out[y * w + x] = if k == 0 {
                r.max_rank
            } else {
                let vals = &mut buf[..k];
                vals.sort_unstable();
                vals[(k - 1) / 2]
            };
        }
    }
    RankImage::from_parts(w, h, r.max_rank, Sampling::Full, out)
}
