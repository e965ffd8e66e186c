//! Decoder-side reconstruction from transmitted ranks.
//!
//! [`dlrtex`] nudges side-information intensities by `±step` until their
//! local ranks agree with the transmitted ones, stopping as soon as rank
//! agreement gets worse. [`reconstruct_sampled`] handles checkerboard
//! sampled ranks, and [`post_process`] restores block brightness from the
//! transmitted means.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::merge::{build_merge_map, merge_ranks, MergeMap};
use crate::error::{Error, Result};
use crate::lrt::{transform, LrtParams, RankImage, Sampling, ABSENT};
use crate::media::{block_means, psnr_from_mse, Frame, MeanGrid};
use crate::side_info::csv_err;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconParams {
    /// Intensity change applied per iteration.
    pub step: u8,
    pub max_iterations: usize,
    /// Unknown-pixel gate per compared neighbor and unit of |S|.
    pub t3_factor: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams { step: 2, max_iterations: 100, t3_factor: 0.05 }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 {
            return Err(Error::param("step must be at least 1"));
        }
        if self.t3_factor.is_nan() || self.t3_factor < 0.0 {
            return Err(Error::param("t3 factor must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub rank_psnr: f64,
    pub changed: usize,
}

/// Iteration 0 is the input; each later entry is a candidate iterate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub entries: Vec<TraceEntry>,
    /// Iterations whose result was kept.
    pub accepted: usize,
}

impl IterationTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(e).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn final_fidelity(&self) -> f64 {
        self.entries.get(self.accepted).map_or(f64::NAN, |e| e.rank_psnr)
    }
}

/// Rank-domain PSNR over the positions `reference` carries, with the
/// neighbor-set size as peak. Equal images give `+inf`.
pub fn rank_fidelity(reference: &RankImage, estimate: &RankImage) -> Result<f64> {
    if reference.width() != estimate.width() || reference.height() != estimate.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            estimate.width(),
            estimate.height(),
        ));
    }
    if reference.max_rank() != estimate.max_rank() {
        return Err(Error::param("rank images use different neighborhoods"));
    }
    let mut sum = 0u64;
    let mut count = 0u64;
    for (&a, &b) in reference.ranks().iter().zip(estimate.ranks()) {
        if a == ABSENT || b == ABSENT {
            continue;
        }
        let d = a.abs_diff(b) as u64;
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(Error::param("no positions to compare"));
    }
    Ok(psnr_from_mse(sum as f64 / count as f64, reference.max_rank() as f64))
}

/// How the decoder turns intensities into ranks comparable with the
/// transmitted ones: same transform, same merge table, every position.
#[derive(Debug, Clone, PartialEq)]
pub struct RankModel {
    pub params: LrtParams,
    pub map: MergeMap,
}

impl RankModel {
    pub fn new(params: LrtParams, merged: bool) -> Result<Self> {
        params.validate()?;
        let map = if merged {
            build_merge_map(params.max_rank())?
        } else {
            MergeMap::identity(params.max_rank())
        };
        Ok(RankModel { params, map })
    }

    /// Fully sampled, merged ranks of `frame`.
    pub fn ranks(&self, frame: &Frame) -> RankImage {
        let full = transform(frame, &LrtParams { sampling: Sampling::Full, ..self.params });
        merge_ranks(&full, &self.map).expect("map built for these params")
    }
}

/// Iteratively adjust `si` toward the ranks in `reference`.
///
/// All pixels of one iteration move together, each by `+step` where the
/// reference rank is higher than the current one, `-step` where lower,
/// clamped to `[0, 255]`. Positions absent from `reference` are never
/// touched. The loop ends when nothing moves, when rank fidelity drops
/// (the previous iterate is returned) or after `max_iterations`.
pub fn dlrtex(
    reference: &RankImage,
    si: &Frame,
    model: &RankModel,
    p: &ReconParams,
) -> Result<(Frame, IterationTrace)> {
    p.validate()?;
    if reference.width() != si.width() || reference.height() != si.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            si.width(),
            si.height(),
        ));
    }
    if reference.max_rank() != model.params.max_rank() {
        return Err(Error::param("reference ranks were made with another neighborhood"));
    }
    let step = p.step as i16;
    let w = si.width();
    let mut cur = si.clone();
    let mut ranks = model.ranks(&cur);
    let mut fid = rank_fidelity(reference, &ranks)?;
    let mut trace = IterationTrace {
        entries: vec![TraceEntry { iteration: 0, rank_psnr: fid, changed: 0 }],
        accepted: 0,
    };
    for it in 1..=p.max_iterations {
        let mut next = cur.clone();
        let changed: usize = next
            .samples_mut()
            .par_chunks_mut(w)
            .enumerate()
            .map(|(y, row)| {
                let mut changed = 0;
                for (x, px) in row.iter_mut().enumerate() {
                    let target = reference.raw(x, y);
                    if target == ABSENT {
                        continue;
                    }
                    let now = ranks.raw(x, y);
                    let moved = match target.cmp(&now) {
                        std::cmp::Ordering::Greater => (*px as i16 + step).min(255),
                        std::cmp::Ordering::Less => (*px as i16 - step).max(0),
                        std::cmp::Ordering::Equal => continue,
                    } as u8;
                    if moved != *px {
                        *px = moved;
                        changed += 1;
                    }
                }
                changed
            })
            .sum();
        if changed == 0 {
            break;
        }
        let next_ranks = model.ranks(&next);
        let next_fid = rank_fidelity(reference, &next_ranks)?;
        trace.entries.push(TraceEntry { iteration: it, rank_psnr: next_fid, changed });
        if next_fid < fid {
            break;
        }
        cur = next;
        ranks = next_ranks;
        fid = next_fid;
        trace.accepted = it;
    }
    Ok((cur, trace))
}

/// Reconstruction from checkerboard-sampled ranks.
///
/// Pixels with a transmitted rank go through [`dlrtex`]. Each remaining
/// pixel compares the transmitted ranks of its axial neighbors with the
/// side-information ranks at the same places: a small rank SAD means the
/// side information is trustworthy there and its pixel is copied,
/// otherwise the pixel becomes the rounded mean of its reconstructed
/// neighbors.
pub fn reconstruct_sampled(
    sampled: &RankImage,
    si: &Frame,
    si_ranks: &RankImage,
    model: &RankModel,
    p: &ReconParams,
) -> Result<(Frame, IterationTrace)> {
    if sampled.sampling() != Sampling::Half {
        return Err(Error::param("sampled reconstruction needs half-sampled ranks"));
    }
    if si_ranks.width() != sampled.width() || si_ranks.height() != sampled.height() {
        return Err(Error::DimensionMismatch(
            sampled.width(),
            sampled.height(),
            si_ranks.width(),
            si_ranks.height(),
        ));
    }
    let (known, trace) = dlrtex(sampled, si, model, p)?;
    let (w, h) = (si.width(), si.height());
    let mut out = known.clone();
    let s = sampled.max_rank() as f64;
    for y in 0..h {
        for x in 0..w {
            if sampled.raw(x, y) != ABSENT {
                continue;
            }
            let mut sad = 0u32;
            let mut sum = 0u32;
            let mut count = 0u32;
            for (nx, ny) in axial(x, y, w, h) {
                let r = sampled.raw(nx, ny);
                if r == ABSENT {
                    continue;
                }
                sad += r.abs_diff(si_ranks.raw(nx, ny)) as u32;
                sum += known.get(nx, ny) as u32;
                count += 1;
            }
            if count == 0 {
                continue;
            }
            let t3 = p.t3_factor * s * count as f64;
            let v =
                if (sad as f64) < t3 { si.get(x, y) } else { ((sum + count / 2) / count) as u8 };
            out.set(x, y, v);
        }
    }
    Ok((out, trace))
}

fn axial(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let cand = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
    cand.into_iter().filter(move |&(a, b)| a < w && b < h)
}

/// Shift each block so that its mean matches the transmitted one, clamp,
/// then run one more [`dlrtex`] pass against the transmitted ranks.
pub fn post_process(
    decoded: &Frame,
    means: &MeanGrid,
    reference: &RankImage,
    model: &RankModel,
    p: &ReconParams,
) -> Result<(Frame, IterationTrace)> {
    let shifted = apply_block_means(decoded, means)?;
    dlrtex(reference, &shifted, model, p)
}

/// `Y − M_d + M_o` per block, clamped to `[0, 255]`.
pub fn apply_block_means(decoded: &Frame, means: &MeanGrid) -> Result<Frame> {
    if means.width != decoded.width() || means.height != decoded.height() {
        return Err(Error::DimensionMismatch(
            decoded.width(),
            decoded.height(),
            means.width,
            means.height,
        ));
    }
    let bs = means.block_size;
    let own = block_means(decoded, bs);
    let bxn = means.blocks_x();
    Ok(Frame::from_fn(decoded.width(), decoded.height(), |x, y| {
        let i = (y / bs) * bxn + x / bs;
        let shift = means.means[i] as i32 - own.means[i] as i32;
        (decoded.get(x, y) as i32 + shift).clamp(0, 255) as u8
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrt::{sample_half, Variant};

    fn unmerged(p: LrtParams) -> RankModel {
        RankModel::new(p, false).unwrap()
    }

    fn textured(w: usize, h: usize, seed: u32) -> Frame {
        let mut s = seed;
        Frame::from_fn(w, h, |x, y| {
            s = s.wrapping_mul(1_103_515_245).wrapping_add(12_345);
            ((x * 3 + y * 5) as u32 + ((s >> 16) & 0x3F)) as u8
        })
    }

    #[test]
    fn fidelity_closed_forms() {
        let a = RankImage::from_raw(4, 4, 12, Sampling::Full, vec![5; 16]).unwrap();
        assert_eq!(rank_fidelity(&a, &a).unwrap(), f64::INFINITY);
        let mut v = vec![0u8; 16];
        let zero = RankImage::from_raw(4, 4, 12, Sampling::Full, v.clone()).unwrap();
        v[7] = 12;
        let one = RankImage::from_raw(4, 4, 12, Sampling::Full, v).unwrap();
        let f = rank_fidelity(&zero, &one).unwrap();
        assert!((f - 10.0 * 16f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let p = LrtParams::default();
        let f = textured(40, 24, 2);
        let (out, trace) =
            dlrtex(&transform(&f, &p), &f, &unmerged(p), &ReconParams::default()).unwrap();
        assert_eq!(out, f);
        assert_eq!(trace.entries.len(), 1);
        assert_eq!(trace.accepted, 0);
    }

    #[test]
    fn constant_frames_sit_in_the_null_space() {
        let p = LrtParams::default();
        let target = transform(&Frame::filled(16, 16, 110), &p);
        let si = Frame::filled(16, 16, 100);
        let (out, _) = dlrtex(&target, &si, &unmerged(p), &ReconParams::default()).unwrap();
        assert_eq!(out, si);
    }

    #[test]
    fn updates_are_bounded_by_step() {
        let p = LrtParams::default();
        let truth = textured(32, 32, 4);
        let si = Frame::from_fn(32, 32, |x, y| truth.get(x, y).saturating_add(((x ^ y) & 7) as u8));
        let rp = ReconParams::default();
        let (out, trace) = dlrtex(&transform(&truth, &p), &si, &unmerged(p), &rp).unwrap();
        let limit = rp.step as usize * trace.accepted;
        for (a, b) in out.samples().iter().zip(si.samples()) {
            assert!((a.abs_diff(*b) as usize) <= limit);
            assert_eq!(a.abs_diff(*b) % rp.step, 0);
        }
        for pair in trace.entries[..=trace.accepted].windows(2) {
            assert!(pair[1].rank_psnr >= pair[0].rank_psnr);
        }
    }

    #[test]
    fn sampled_unknown_pixels() {
        let p =
            LrtParams { variant: Variant::Even, sampling: Sampling::Half, ..Default::default() };
        let f = textured(16, 16, 7);
        let sampled = transform(&f, &p);
        let si_ranks =
            sample_half(&transform(&f, &LrtParams { sampling: Sampling::Full, ..p })).unwrap();
        let (out, _) =
            reconstruct_sampled(&sampled, &f, &si_ranks, &unmerged(p), &ReconParams::default())
                .unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn unknown_pixel_classification() {
        let p = LrtParams { n: 1, variant: Variant::Even, sampling: Sampling::Half, delta: -10 };
        let a = ABSENT;
        #[rustfmt::skip]
        let sent = RankImage::from_raw(4, 3, 4, Sampling::Half, vec![
            4, a, 4, a,
            a, 4, a, 4,
            4, a, 4, a,
        ]).unwrap();
        // unknown pixel (2,1) has known neighbors 96 above, 100 left, 104 right, 100 below
        #[rustfmt::skip]
        let si = Frame::new(4, 3, vec![
            0, 0, 96, 0,
            0, 100, 250, 104,
            0, 0, 100, 0,
        ]).unwrap();
        let rp = ReconParams { max_iterations: 0, ..Default::default() };

        let disagree = RankImage::from_raw(4, 3, 4, Sampling::Full, vec![0; 12]).unwrap();
        let (out, _) = reconstruct_sampled(&sent, &si, &disagree, &unmerged(p), &rp).unwrap();
        assert_eq!(out.get(2, 1), 100);

        let agree = RankImage::from_raw(4, 3, 4, Sampling::Full, vec![4; 12]).unwrap();
        let (out, _) = reconstruct_sampled(&sent, &si, &agree, &unmerged(p), &rp).unwrap();
        assert_eq!(out.get(2, 1), 250);
        for (x, y) in [(1, 1), (3, 1), (2, 0), (2, 2)] {
            assert_eq!(out.get(x, y), si.get(x, y));
        }
    }

    #[test]
    fn merged_model_is_a_fixed_point_too() {
        let p = LrtParams::default();
        let model = RankModel::new(p, true).unwrap();
        let f = textured(32, 32, 8);
        let sent = merge_ranks(&transform(&f, &p), &model.map).unwrap();
        let (out, trace) = dlrtex(&sent, &f, &model, &ReconParams::default()).unwrap();
        assert_eq!(out, f);
        assert_eq!(trace.accepted, 0);
    }

    #[test]
    fn block_shift_clamps() {
        let decoded = Frame::from_fn(16, 16, |x, y| if x == 0 && y == 0 { 253 } else { 120 });
        let own = block_means(&decoded, 16).means[0];
        let target = MeanGrid { block_size: 16, width: 16, height: 16, means: vec![own + 5] };
        let out = apply_block_means(&decoded, &target).unwrap();
        assert_eq!(out.get(0, 0), 255);
        assert_eq!(out.get(3, 3), 125);
    }
}
