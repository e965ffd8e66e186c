//! Mean-assisted block motion estimation in the rank domain.
//!
//! Each 16x16 block of the WZ rank image is matched against the rank images
//! of the neighboring key frames. The unconstrained best match (`MV1`) can
//! lock onto a region with the right edge structure but the wrong
//! brightness, so a second search (`MV2`) only admits candidates whose
//! intensity mean is within `T1` of the transmitted block mean. `MV2` wins
//! unless its rank SAD is worse than `MV1`'s by more than `T2`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lrt::{LrtParams, RankImage, ABSENT};
use crate::media::{Frame, MeanGrid};

pub const BLOCK: usize = 16;
pub const SEARCH_RANGE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchThresholds {
    /// Largest admissible |candidate mean − block mean|, exclusive.
    pub t1: f64,
    /// Rank-SAD gap per compared position and unit of |S|.
    pub t2_factor: f64,
    /// Neighbor-set size of the transform, before merging.
    pub max_rank: u8,
}

impl MatchThresholds {
    pub fn new(p: &LrtParams) -> Self {
        MatchThresholds { t1: 5.0, t2_factor: 0.05, max_rank: p.max_rank() }
    }

    /// `T2` for a block whose SAD sums `compared` positions.
    pub fn t2(&self, compared: usize) -> f64 {
        self.t2_factor * self.max_rank as f64 * compared as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MotionVector {
    pub dy: i32,
    pub dx: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dy: 0, dx: 0 };

    pub fn new(dy: i32, dx: i32) -> Self {
        MotionVector { dy, dx }
    }
}

/// A candidate: which reference and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub reference: usize,
    pub mv: MotionVector,
    pub sad: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMotion {
    pub bx: usize,
    pub by: usize,
    /// Unconstrained rank-SAD minimum.
    pub best: Match,
    /// Minimum among mean-gated candidates, if any passed the gate.
    pub gated: Option<Match>,
    pub chosen: Match,
    /// Positions that entered each SAD.
    pub compared: usize,
}

impl BlockMotion {
    pub fn lsad1(&self) -> u64 {
        self.best.sad
    }

    pub fn lsad2(&self) -> Option<u64> {
        self.gated.map(|m| m.sad)
    }

    pub fn used_gate(&self) -> bool {
        self.gated == Some(self.chosen) && self.gated != Some(self.best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub blocks: Vec<BlockMotion>,
}

impl MotionField {
    pub fn blocks_x(&self) -> usize {
        self.width.div_ceil(self.block)
    }

    pub fn blocks_y(&self) -> usize {
        self.height.div_ceil(self.block)
    }

    pub fn get(&self, bx: usize, by: usize) -> &BlockMotion {
        &self.blocks[by * self.blocks_x() + bx]
    }

    /// Per-block debug table.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            bx: usize,
            by: usize,
            mv1_ref: usize,
            mv1_dy: i32,
            mv1_dx: i32,
            lsad1: u64,
            mv2_ref: Option<usize>,
            mv2_dy: Option<i32>,
            mv2_dx: Option<i32>,
            lsad2: Option<u64>,
            chosen_ref: usize,
            chosen_dy: i32,
            chosen_dx: i32,
            gate: bool,
        }
        let mut w = csv::Writer::from_writer(out);
        for b in &self.blocks {
            w.serialize(Row {
                bx: b.bx,
                by: b.by,
                mv1_ref: b.best.reference,
                mv1_dy: b.best.mv.dy,
                mv1_dx: b.best.mv.dx,
                lsad1: b.best.sad,
                mv2_ref: b.gated.map(|m| m.reference),
                mv2_dy: b.gated.map(|m| m.mv.dy),
                mv2_dx: b.gated.map(|m| m.mv.dx),
                lsad2: b.lsad2(),
                chosen_ref: b.chosen.reference,
                chosen_dy: b.chosen.mv.dy,
                chosen_dx: b.chosen.mv.dx,
                gate: b.used_gate(),
            })
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("csv: {other:?}")),
    }
}

/// A key frame prepared for matching.
#[derive(Debug, Clone)]
pub struct Reference {
    pub frame: Frame,
    /// Fully sampled ranks of `frame`.
    pub ranks: RankImage,
    integral: Vec<u64>,
}

impl Reference {
    pub fn new(frame: Frame, ranks: RankImage) -> Result<Self> {
        if ranks.width() != frame.width() || ranks.height() != frame.height() {
            return Err(Error::DimensionMismatch(
                frame.width(),
                frame.height(),
                ranks.width(),
                ranks.height(),
            ));
        }
        if ranks.present_count() != ranks.ranks().len() {
            return Err(Error::param("reference ranks must be fully sampled"));
        }
        let integral = summed_area(&frame);
        Ok(Reference { frame, ranks, integral })
    }

    fn window_sum(&self, x0: usize, y0: usize, w: usize, h: usize) -> u64 {
        let s = self.frame.width() + 1;
        let (x1, y1) = (x0 + w, y0 + h);
        self.integral[y1 * s + x1] + self.integral[y0 * s + x0]
            - self.integral[y0 * s + x1]
            - self.integral[y1 * s + x0]
    }
}

fn summed_area(f: &Frame) -> Vec<u64> {
    let (w, h) = (f.width(), f.height());
    let s = w + 1;
    let mut t = vec![0u64; s * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += f.get(x, y) as u64;
            t[(y + 1) * s + x + 1] = t[y * s + x + 1] + row;
        }
    }
    t
}

/// Σ|a−b| over positions where both are present.
pub fn rank_sad(a: &[u8], b: &[u8]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::param(format!("rank blocks of {} and {} positions", a.len(), b.len())));
    }
    Ok(a.iter()
        .zip(b)
        .filter(|(&x, &y)| x != ABSENT && y != ABSENT)
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum())
}

/// Candidate displacements, nearest first, then by `dy`, then `dx`.
pub fn search_order(range: usize) -> Vec<MotionVector> {
    let r = range as i32;
    let mut v: Vec<MotionVector> =
        (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| MotionVector::new(dy, dx))).collect();
    v.sort_by_key(|m| (m.dy.abs() + m.dx.abs(), m.dy, m.dx));
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub range: usize,
    pub block: usize,
    /// Gate a second search on block means.
    pub mean_assist: bool,
    pub thresholds: MatchThresholds,
}

impl SearchOptions {
    pub fn new(p: &LrtParams) -> Self {
        SearchOptions {
            range: SEARCH_RANGE,
            block: BLOCK,
            mean_assist: true,
            thresholds: MatchThresholds::new(p),
        }
    }
}

/// Full search of every block of `wz` in every reference.
///
/// Only positions where `wz` has a rank enter the SAD; references carry
/// ranks everywhere. Candidate windows that leave the frame are skipped.
/// Ties keep the first candidate in [`search_order`], earlier references
/// first, so a still block settles on the zero vector.
pub fn motion_search(
    wz: &RankImage,
    wz_means: &MeanGrid,
    refs: &[&Reference],
    opts: &SearchOptions,
) -> Result<MotionField> {
    if refs.is_empty() {
        return Err(Error::param("motion search needs at least one reference"));
    }
    for r in refs {
        if r.frame.width() != wz.width() || r.frame.height() != wz.height() {
            return Err(Error::DimensionMismatch(
                wz.width(),
                wz.height(),
                r.frame.width(),
                r.frame.height(),
            ));
        }
    }
    let block = opts.block;
    if wz_means.block_size != block
        || wz_means.width != wz.width()
        || wz_means.height != wz.height()
    {
        return Err(Error::param("block means do not match the search grid"));
    }
    let bxn = wz.width().div_ceil(block);
    let byn = wz.height().div_ceil(block);
    let order = search_order(opts.range);
    let blocks = (0..bxn * byn)
        .into_par_iter()
        .map(|i| {
            let (bx, by) = (i % bxn, i / bxn);
            search_block(wz, wz_means.get(bx, by), refs, bx, by, &order, opts)
        })
        .collect();
    Ok(MotionField { width: wz.width(), height: wz.height(), block, blocks })
}

fn search_block(
    wz: &RankImage,
    wz_mean: u8,
    refs: &[&Reference],
    bx: usize,
    by: usize,
    order: &[MotionVector],
    opts: &SearchOptions,
) -> BlockMotion {
    let (w, h) = (wz.width(), wz.height());
    let x0 = bx * opts.block;
    let y0 = by * opts.block;
    let bw = opts.block.min(w - x0);
    let bh = opts.block.min(h - y0);
    let area = (bw * bh) as f64;

    // (offset within block, rank) for every present position
    let mut pts: Vec<(usize, usize, u8)> = Vec::with_capacity(bw * bh);
    for y in 0..bh {
        for x in 0..bw {
            let v = wz.raw(x0 + x, y0 + y);
            if v != ABSENT {
                pts.push((x, y, v));
            }
        }
    }

    let mut best: Option<Match> = None;
    let mut gated: Option<Match> = None;
    for (ri, r) in refs.iter().enumerate() {
        let ranks = r.ranks.ranks();
        for &mv in order {
            let cx = x0 as i64 + mv.dx as i64;
            let cy = y0 as i64 + mv.dy as i64;
            if cx < 0 || cy < 0 || cx as usize + bw > w || cy as usize + bh > h {
                continue;
            }
            let (cx, cy) = (cx as usize, cy as usize);
            let passes = opts.mean_assist && {
                let mean = r.window_sum(cx, cy, bw, bh) as f64 / area;
                (mean - wz_mean as f64).abs() < opts.thresholds.t1
            };
            let bound = match (passes, gated, best) {
                (true, Some(g), _) => g.sad,
                (true, None, _) => u64::MAX,
                (false, _, Some(b)) => b.sad,
                (false, _, None) => u64::MAX,
            };
            let mut sad = 0u64;
            for &(x, y, v) in &pts {
                sad += v.abs_diff(ranks[(cy + y) * w + cx + x]) as u64;
                if sad >= bound {
                    break;
                }
            }
            if sad >= bound {
                continue;
            }
            let m = Match { reference: ri, mv, sad };
            if best.is_none_or(|b| sad < b.sad) {
                best = Some(m);
            }
            if passes && gated.is_none_or(|g| sad < g.sad) {
                gated = Some(m);
            }
        }
    }
    // the zero vector is always in bounds, so some candidate was seen
    let best = best.expect("zero displacement is always a candidate");
    let t2 = opts.thresholds.t2(pts.len());
    let chosen = match gated {
        Some(g) if (g.sad as f64 - best.sad as f64).abs() <= t2 => g,
        _ => best,
    };
    BlockMotion { bx, by, best, gated, chosen, compared: pts.len() }
}

/// Side information: each block copied from its chosen reference.
pub fn compensate(mf: &MotionField, refs: &[&Frame]) -> Result<Frame> {
    let (w, h) = (mf.width, mf.height);
    for r in refs {
        if r.width() != w || r.height() != h {
            return Err(Error::DimensionMismatch(w, h, r.width(), r.height()));
        }
    }
    let mut out = Frame::filled(w, h, 0);
    for b in &mf.blocks {
        let src = refs
            .get(b.chosen.reference)
            .ok_or_else(|| Error::param(format!("reference {} missing", b.chosen.reference)))?;
        let x0 = b.bx * mf.block;
        let y0 = b.by * mf.block;
        let bw = mf.block.min(w - x0);
        let bh = mf.block.min(h - y0);
        let sx = x0 as i64 + b.chosen.mv.dx as i64;
        let sy = y0 as i64 + b.chosen.mv.dy as i64;
        if sx < 0 || sy < 0 || sx as usize + bw > w || sy as usize + bh > h {
            return Err(Error::param(format!(
                "block ({}, {}) points outside the frame",
                b.bx, b.by
            )));
        }
        let (sx, sy) = (sx as usize, sy as usize);
        for y in 0..bh {
            let from = (sy + y) * w + sx;
            let to = (y0 + y) * w + x0;
            out.samples_mut()[to..to + bw].copy_from_slice(&src.samples()[from..from + bw]);
        }
    }
    Ok(out)
}
