//! Sequence-level encoder, decoder and experiment reports.
//!
//! Frames alternate between key frames, which the decoder receives
//! losslessly, and WZ frames, which are sent as merged rank images plus
//! block means. The encoder never looks at anything the decoder produces.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{
    beta_symbols, encoder_cycles, ldpc_cycles, power_with, CycleWeights, EncoderWork, LiveCounts,
    PowerParams, LDPC_CODES,
};
use crate::entropy::bitstream::{SequenceEntry, SequenceStream, WzBitstream};
use crate::entropy::merge::{build_merge_map, merge_ranks, MergeMap};
use crate::entropy::positions::{decode_positions, encode_rank_image};
use crate::error::{Error, Result};
use crate::lrt::{interpolate_missing, transform_tallied, LrtParams, RankImage, Sampling, Variant};
use crate::media::{
    block_means_tallied, load_pgm, load_y4m, load_yuv420, psnr, store_pgm, Frame, MEAN_BLOCK,
};
use crate::recon::{
    dlrtex, post_process, reconstruct_sampled, IterationTrace, RankModel, ReconParams,
};
use crate::side_info::{
    compensate, csv_err, motion_search, MotionField, Reference, SearchOptions, SEARCH_RANGE,
};

/// Variant used when none is given: odd for full sampling, even for the
/// checkerboard (even offsets keep a rank's support on transmitted pixels).
pub fn default_variant(sampling: Sampling) -> Variant {
    match sampling {
        Sampling::Full => Variant::Odd,
        Sampling::Half => Variant::Even,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameRole {
    Key,
    Wz,
}

pub fn role_of(index: usize, gop: usize) -> FrameRole {
    if index.is_multiple_of(gop) {
        FrameRole::Key
    } else {
        FrameRole::Wz
    }
}

/// Indices of the key frames a WZ frame is predicted from.
pub fn adjacent_keys(index: usize, gop: usize, frames: usize) -> (usize, Option<usize>) {
    let prev = index / gop * gop;
    let next = prev + gop;
    (prev, (next < frames).then_some(next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub lrt: LrtParams,
    pub merge: bool,
    pub block_size: usize,
    pub gop: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { lrt: LrtParams::default(), merge: true, block_size: MEAN_BLOCK, gop: 2 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.lrt.validate()?;
        if self.gop < 2 || self.gop > 255 {
            return Err(Error::param(format!("gop {} outside 2..=255", self.gop)));
        }
        if self.block_size == 0 || self.block_size > 255 {
            return Err(Error::param("mean block size outside 1..=255"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub recon: ReconParams,
    pub search_range: usize,
    pub mean_assist: bool,
    pub postprocess: bool,
    /// Fill absent ranks before motion search in sampled mode instead of
    /// matching on the transmitted positions only. `T2` still scales with
    /// the transmitted count.
    pub interpolate_for_me: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            recon: ReconParams::default(),
            search_range: SEARCH_RANGE,
            mean_assist: true,
            postprocess: true,
            interpolate_for_me: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CodecConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub weights: CycleWeights,
    pub power: PowerParams,
    /// Count lossless key-frame bits in the reported rate.
    pub include_key_bits: bool,
}

/// One coded WZ frame and what it cost the encoder.
#[derive(Debug, Clone)]
pub struct EncodedFrame {
    pub bytes: Vec<u8>,
    pub ranks: RankImage,
    pub symbols: u64,
    pub live: LiveCounts,
    pub work: EncoderWork,
    pub mq_bytes: usize,
    pub mean_bytes: usize,
}

pub fn merge_map_for(lrt: &LrtParams, merge: bool) -> Result<MergeMap> {
    if merge {
        build_merge_map(lrt.max_rank())
    } else {
        Ok(MergeMap::identity(lrt.max_rank()))
    }
}

pub fn encode_frame(frame: &Frame, cfg: &EncoderConfig) -> Result<EncodedFrame> {
    cfg.validate()?;
    if frame.width() > u16::MAX as usize || frame.height() > u16::MAX as usize {
        return Err(Error::param("frame dimensions exceed 65535"));
    }
    let mut live = LiveCounts::default();
    let raw = transform_tallied(frame, &cfg.lrt, &mut live);
    let map = merge_map_for(&cfg.lrt, cfg.merge)?;
    let ranks = merge_ranks(&raw, &map)?;
    let coded = encode_rank_image(&ranks, &map)?;
    let means = block_means_tallied(frame, cfg.block_size, &mut live);
    let stream = WzBitstream {
        width: frame.width(),
        height: frame.height(),
        params: cfg.lrt,
        merged: cfg.merge,
        means,
        payload: coded.payload,
    };
    let bytes = stream.to_bytes()?;
    let work = EncoderWork {
        pixels: frame.len() as u64,
        ranked: ranks.present_count() as u64,
        n: cfg.lrt.n as u32,
        beta: coded.symbols,
    };
    Ok(EncodedFrame {
        mq_bytes: stream.payload.len(),
        mean_bytes: stream.means.means.len(),
        bytes,
        ranks,
        symbols: coded.symbols,
        live,
        work,
    })
}

#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub stream: SequenceStream,
    /// `None` at key-frame positions.
    pub frames: Vec<Option<EncodedFrame>>,
}

impl EncodedSequence {
    pub fn key_indices(&self) -> Vec<usize> {
        self.frames.iter().enumerate().filter(|(_, f)| f.is_none()).map(|(i, _)| i).collect()
    }
}

pub fn encode_sequence(frames: &[Frame], cfg: &EncoderConfig) -> Result<EncodedSequence> {
    cfg.validate()?;
    check_sequence(frames)?;
    let coded: Vec<Option<EncodedFrame>> = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| match role_of(i, cfg.gop) {
            FrameRole::Key => Ok(None),
            FrameRole::Wz => encode_frame(f, cfg).map(Some),
        })
        .collect::<Result<_>>()?;
    let entries = coded
        .iter()
        .map(|c| match c {
            None => SequenceEntry::Key,
            Some(e) => SequenceEntry::Wz(e.bytes.clone()),
        })
        .collect();
    Ok(EncodedSequence { stream: SequenceStream { gop: cfg.gop as u8, entries }, frames: coded })
}

fn check_sequence(frames: &[Frame]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::param("empty sequence"))?;
    for f in frames {
        first.same_geometry(f)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DecodedFrame {
    pub header: WzBitstream,
    pub ranks: RankImage,
    pub motion: MotionField,
    pub si: Frame,
    pub recon: Frame,
    pub recon_trace: IterationTrace,
    pub post: Option<(Frame, IterationTrace)>,
}

impl DecodedFrame {
    pub fn output(&self) -> &Frame {
        self.post.as_ref().map_or(&self.recon, |p| &p.0)
    }
}

/// Decode one WZ record given its neighboring key frames.
pub fn decode_frame(
    bytes: &[u8],
    prev: &Frame,
    next: Option<&Frame>,
    cfg: &DecoderConfig,
) -> Result<DecodedFrame> {
    cfg.recon.validate()?;
    let header = WzBitstream::from_bytes(bytes)?;
    let (w, h) = (header.width, header.height);
    for k in std::iter::once(prev).chain(next) {
        if k.width() != w || k.height() != h {
            return Err(Error::DimensionMismatch(w, h, k.width(), k.height()));
        }
    }
    let model = RankModel::new(header.params, header.merged)?;
    let ranks = decode_positions(&header.payload, w, h, header.params.sampling, &model.map)?;

    let refs: Vec<Reference> = std::iter::once(prev)
        .chain(next)
        .map(|k| Reference::new(k.clone(), model.ranks(k)))
        .collect::<Result<_>>()?;
    let ref_list: Vec<&Reference> = refs.iter().collect();
    let mut opts = SearchOptions::new(&header.params);
    opts.range = cfg.search_range;
    opts.block = header.means.block_size;
    opts.mean_assist = cfg.mean_assist;
    let interpolate = cfg.interpolate_for_me && header.params.sampling == Sampling::Half;
    if interpolate {
        opts.thresholds.t2_factor *= 0.5;
    }
    let me_ranks = if interpolate { interpolate_missing(&ranks) } else { ranks.clone() };
    let motion = motion_search(&me_ranks, &header.means, &ref_list, &opts)?;
    let frames: Vec<&Frame> = refs.iter().map(|r| &r.frame).collect();
    let si = compensate(&motion, &frames)?;

    let (recon, recon_trace) = match header.params.sampling {
        Sampling::Full => dlrtex(&ranks, &si, &model, &cfg.recon)?,
        Sampling::Half => {
            let si_ranks = model.ranks(&si);
            reconstruct_sampled(&ranks, &si, &si_ranks, &model, &cfg.recon)?
        }
    };
    let post = if cfg.postprocess {
        Some(post_process(&recon, &header.means, &ranks, &model, &cfg.recon)?)
    } else {
        None
    };
    Ok(DecodedFrame { header, ranks, motion, si, recon, recon_trace, post })
}

#[derive(Debug, Clone)]
pub struct DecodedSequence {
    pub frames: Vec<Frame>,
    /// Decoder detail per frame, `None` for key frames.
    pub details: Vec<Option<DecodedFrame>>,
}

/// Decode a sequence; `key` supplies the lossless key frame at an index.
pub fn decode_sequence(
    stream: &SequenceStream,
    key: impl Fn(usize) -> Result<Frame> + Sync,
    cfg: &DecoderConfig,
) -> Result<DecodedSequence> {
    let gop = stream.gop as usize;
    if gop < 2 {
        return Err(Error::bitstream(format!("gop {gop} in sequence header")));
    }
    let n = stream.entries.len();
    for (i, e) in stream.entries.iter().enumerate() {
        let expect_key = role_of(i, gop) == FrameRole::Key;
        if expect_key != matches!(e, SequenceEntry::Key) {
            return Err(Error::bitstream(format!("frame {i} has the wrong role for gop {gop}")));
        }
    }
    let keys: Vec<Option<Frame>> = (0..n)
        .into_par_iter()
        .map(|i| match stream.entries[i] {
            SequenceEntry::Key => key(i).map(Some),
            SequenceEntry::Wz(_) => Ok(None),
        })
        .collect::<Result<_>>()?;
    let details: Vec<Option<DecodedFrame>> = (0..n)
        .into_par_iter()
        .map(|i| match &stream.entries[i] {
            SequenceEntry::Key => Ok(None),
            SequenceEntry::Wz(bytes) => {
                let (p, nx) = adjacent_keys(i, gop, n);
                let prev = keys[p].as_ref().expect("key position");
                let next = nx.map(|j| keys[j].as_ref().expect("key position"));
                decode_frame(bytes, prev, next, cfg).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let frames = keys
        .into_iter()
        .zip(&details)
        .map(|(k, d)| k.unwrap_or_else(|| d.as_ref().expect("wz detail").output().clone()))
        .collect();
    Ok(DecodedSequence { frames, details })
}

/// Per-frame outcome of an encode/decode experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub frame: usize,
    pub role: FrameRole,
    /// WZ record size (header, means and MQ payload), or the raw size of a
    /// lossless key frame.
    pub bits: u64,
    pub mq_bits: u64,
    pub mean_bits: u64,
    pub header_bits: u64,
    pub n: u8,
    pub delta: i8,
    pub variant: String,
    pub sampling: String,
    pub merged: bool,
    pub pixels: u64,
    pub ranked: u64,
    pub symbols: u64,
    pub si_psnr: Option<f64>,
    pub recon_psnr: Option<f64>,
    pub post_psnr: Option<f64>,
    pub iterations: usize,
    pub post_iterations: usize,
    pub cycles: f64,
    pub power: f64,
}

/// Extra per-frame numbers from rerunning with a feature switched off.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AblationStats {
    pub bits_unmerged: Option<u64>,
    pub si_psnr_no_mean: Option<f64>,
    pub post_psnr_no_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablations {
    pub merge: bool,
    pub mean_assist: bool,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub stream: Vec<u8>,
    pub stats: Vec<FrameStats>,
    pub ablation: Vec<AblationStats>,
    pub decoded: DecodedSequence,
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Odd => "odd",
        Variant::Even => "even",
        Variant::Full => "full",
    }
}

fn sampling_name(s: Sampling) -> &'static str {
    match s {
        Sampling::Full => "full",
        Sampling::Half => "half",
    }
}

/// Statistics for a decoded sequence, read off the stream itself; PSNRs
/// need the originals. Key-frame rows take their parameters from the first
/// WZ record, or from `cfg` when there is none.
pub fn frame_stats(
    stream: &SequenceStream,
    decoded: &DecodedSequence,
    originals: Option<&[Frame]>,
    cfg: &CodecConfig,
) -> Result<Vec<FrameStats>> {
    let (lrt, merged) = decoded
        .details
        .iter()
        .flatten()
        .next()
        .map_or((cfg.encoder.lrt, cfg.encoder.merge), |d| (d.header.params, d.header.merged));
    stream
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let frame = &decoded.frames[i];
            let pixels = frame.len() as u64;
            let mut s = FrameStats {
                frame: i,
                role: FrameRole::Key,
                bits: pixels * 8,
                mq_bits: 0,
                mean_bits: 0,
                header_bits: 0,
                n: lrt.n,
                delta: lrt.delta,
                variant: variant_name(lrt.variant).into(),
                sampling: sampling_name(lrt.sampling).into(),
                merged,
                pixels,
                ranked: 0,
                symbols: 0,
                si_psnr: None,
                recon_psnr: None,
                post_psnr: None,
                iterations: 0,
                post_iterations: 0,
                cycles: 0.0,
                power: 0.0,
            };
            if let (SequenceEntry::Wz(bytes), Some(d)) = (entry, &decoded.details[i]) {
                let h = &d.header;
                let map = merge_map_for(&h.params, h.merged)?;
                let hist = d.ranks.histogram();
                let desc: Vec<u64> = map.distinct().iter().map(|&v| hist[v as usize]).collect();
                let ranked = d.ranks.present_count() as u64;
                let work = EncoderWork {
                    pixels,
                    ranked,
                    n: h.params.n as u32,
                    beta: beta_symbols(ranked, &desc)?,
                };
                let bits = bytes.len() as u64 * 8;
                let cyc = encoder_cycles(&work, &cfg.weights)?.total;
                s.role = FrameRole::Wz;
                s.n = h.params.n;
                s.delta = h.params.delta;
                s.variant = variant_name(h.params.variant).into();
                s.sampling = sampling_name(h.params.sampling).into();
                s.merged = h.merged;
                s.bits = bits;
                s.mq_bits = h.payload.len() as u64 * 8;
                s.mean_bits = h.means.bits() as u64;
                s.header_bits = bits - s.mq_bits - s.mean_bits;
                s.ranked = ranked;
                s.symbols = work.beta;
                s.iterations = d.recon_trace.accepted;
                s.post_iterations = d.post.as_ref().map_or(0, |p| p.1.accepted);
                s.cycles = cyc;
                s.power = power_with(cyc, bits as f64 * cfg.power.f_wz, &cfg.power).power;
                if let Some(orig) = originals {
                    let o = orig
                        .get(i)
                        .ok_or_else(|| Error::param(format!("reference has no frame {i}")))?;
                    s.si_psnr = Some(psnr(o, &d.si)?);
                    s.recon_psnr = Some(psnr(o, &d.recon)?);
                    s.post_psnr = match &d.post {
                        Some(p) => Some(psnr(o, &p.0)?),
                        None => None,
                    };
                }
            }
            Ok(s)
        })
        .collect()
}

/// Encode, decode with the original key frames, and measure.
pub fn run_experiment(frames: &[Frame], cfg: &CodecConfig) -> Result<Experiment> {
    run_with_ablations(frames, cfg, Ablations::default())
}

pub fn run_with_ablations(
    frames: &[Frame],
    cfg: &CodecConfig,
    ablations: Ablations,
) -> Result<Experiment> {
    let encoded = encode_sequence(frames, &cfg.encoder)?;
    let stream = encoded.stream.to_bytes()?;
    let decoded = decode_sequence(&encoded.stream, |i| Ok(frames[i].clone()), &cfg.decoder)?;
    let stats = frame_stats(&encoded.stream, &decoded, Some(frames), cfg)?;
    let mut ablation = vec![AblationStats::default(); frames.len()];
    if ablations.merge {
        let enc = EncoderConfig { merge: !cfg.encoder.merge, ..cfg.encoder };
        let other = encode_sequence(frames, &enc)?;
        for (a, f) in ablation.iter_mut().zip(&other.frames) {
            a.bits_unmerged = f.as_ref().map(|e| e.bytes.len() as u64 * 8);
        }
        if !cfg.encoder.merge {
            // the main run was the unmerged one
            for (a, s) in ablation.iter_mut().zip(&stats) {
                if a.bits_unmerged.is_some() {
                    a.bits_unmerged = Some(s.bits);
                }
            }
        }
    }
    if ablations.mean_assist {
        let dec = DecoderConfig { mean_assist: false, ..cfg.decoder };
        let other = decode_sequence(&encoded.stream, |i| Ok(frames[i].clone()), &dec)?;
        for (i, (a, d)) in ablation.iter_mut().zip(&other.details).enumerate() {
            if let Some(d) = d {
                a.si_psnr_no_mean = Some(psnr(&frames[i], &d.si)?);
                a.post_psnr_no_mean = Some(psnr(&frames[i], d.output())?);
            }
        }
    }
    Ok(Experiment { stream, stats, ablation, decoded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub wz_frames: usize,
    pub key_frames: usize,
    pub avg_wz_bits: f64,
    /// Rate at the WZ frame rate; includes key bits only when configured.
    pub kbps: f64,
    pub avg_si_psnr: f64,
    pub avg_recon_psnr: f64,
    pub avg_post_psnr: f64,
    pub avg_cycles: f64,
    pub avg_power: f64,
}

fn mean_of(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn summarize(stats: &[FrameStats], cfg: &CodecConfig) -> Result<Summary> {
    let wz: Vec<&FrameStats> = stats.iter().filter(|s| s.role == FrameRole::Wz).collect();
    if wz.is_empty() {
        return Err(Error::param("no WZ frames to summarize"));
    }
    let key_bits: u64 = stats.iter().filter(|s| s.role == FrameRole::Key).map(|s| s.bits).sum();
    let wz_bits: u64 = wz.iter().map(|s| s.bits).sum();
    let counted = wz_bits + if cfg.include_key_bits { key_bits } else { 0 };
    let per_frame = counted as f64 / wz.len() as f64;
    Ok(Summary {
        wz_frames: wz.len(),
        key_frames: stats.len() - wz.len(),
        avg_wz_bits: wz_bits as f64 / wz.len() as f64,
        kbps: per_frame * cfg.power.f_wz / 1000.0,
        avg_si_psnr: mean_of(wz.iter().filter_map(|s| s.si_psnr)),
        avg_recon_psnr: mean_of(wz.iter().filter_map(|s| s.recon_psnr)),
        avg_post_psnr: mean_of(wz.iter().filter_map(|s| s.post_psnr)),
        avg_cycles: mean_of(wz.iter().map(|s| s.cycles)),
        avg_power: mean_of(wz.iter().map(|s| s.power)),
    })
}

const STATS_HEADER: [&str; 21] = [
    "frame",
    "role",
    "bits",
    "mq_bits",
    "mean_bits",
    "header_bits",
    "n",
    "delta",
    "variant",
    "sampling",
    "merged",
    "pixels",
    "ranked",
    "symbols",
    "si_psnr",
    "recon_psnr",
    "post_psnr",
    "iterations",
    "post_iterations",
    "cycles",
    "power",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-frame CSV. Ablation columns appear only when some frame has them.
pub fn write_stats_csv<W: Write>(
    out: W,
    stats: &[FrameStats],
    ablation: &[AblationStats],
) -> Result<()> {
    let any = |f: fn(&AblationStats) -> bool| ablation.iter().any(f);
    let with_unmerged = any(|a| a.bits_unmerged.is_some());
    let with_no_mean = any(|a| a.si_psnr_no_mean.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = STATS_HEADER.to_vec();
    if with_unmerged {
        header.push("bits_unmerged");
    }
    if with_no_mean {
        header.extend(["si_psnr_no_mean", "post_psnr_no_mean"]);
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in stats.iter().enumerate() {
        let mut rec = vec![
            s.frame.to_string(),
            match s.role {
                FrameRole::Key => "key".into(),
                FrameRole::Wz => "wz".into(),
            },
            s.bits.to_string(),
            s.mq_bits.to_string(),
            s.mean_bits.to_string(),
            s.header_bits.to_string(),
            s.n.to_string(),
            s.delta.to_string(),
            s.variant.clone(),
            s.sampling.clone(),
            s.merged.to_string(),
            s.pixels.to_string(),
            s.ranked.to_string(),
            s.symbols.to_string(),
            opt(s.si_psnr),
            opt(s.recon_psnr),
            opt(s.post_psnr),
            s.iterations.to_string(),
            s.post_iterations.to_string(),
            s.cycles.to_string(),
            s.power.to_string(),
        ];
        let a = ablation.get(i).copied().unwrap_or_default();
        if with_unmerged {
            rec.push(opt(a.bits_unmerged));
        }
        if with_no_mean {
            rec.push(opt(a.si_psnr_no_mean));
            rec.push(opt(a.post_psnr_no_mean));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats_csv(path: impl AsRef<Path>) -> Result<Vec<FrameStats>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// One row of the encoder cost report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub frame: usize,
    pub n: u8,
    pub beta: u64,
    pub lrt: f64,
    pub context: f64,
    pub mq: f64,
    pub total: f64,
    pub ldpc_8: f64,
    pub ldpc_11: f64,
    pub ldpc_15: f64,
    pub ldpc_23: f64,
    pub rate_bps: f64,
    pub power_lrt: f64,
    pub power_ldpc_8: f64,
    pub power_ldpc_23: f64,
}

/// Operation-count model evaluated for every WZ frame in `stats`; LDPC
/// power is taken at the same rate.
pub fn cost_report(
    stats: &[FrameStats],
    weights: &CycleWeights,
    power: &PowerParams,
) -> Result<Vec<CostRow>> {
    stats
        .iter()
        .filter(|s| s.role == FrameRole::Wz)
        .map(|s| {
            let work =
                EncoderWork { pixels: s.pixels, ranked: s.ranked, n: s.n as u32, beta: s.symbols };
            let c = encoder_cycles(&work, weights)?;
            let ldpc = LDPC_CODES.map(|code| ldpc_cycles(s.pixels, code, weights));
            let rate = s.bits as f64 * power.f_wz;
            Ok(CostRow {
                frame: s.frame,
                n: s.n,
                beta: s.symbols,
                lrt: c.lrt,
                context: c.context,
                mq: c.mq,
                total: c.total,
                ldpc_8: ldpc[0],
                ldpc_11: ldpc[1],
                ldpc_15: ldpc[2],
                ldpc_23: ldpc[3],
                rate_bps: rate,
                power_lrt: power_with(c.total, rate, power).power,
                power_ldpc_8: power_with(ldpc[0], rate, power).power,
                power_ldpc_23: power_with(ldpc[3], rate, power).power,
            })
        })
        .collect()
}

pub fn write_cost_csv<W: Write>(out: W, rows: &[CostRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a sequence: `.y4m`, raw 4:2:0 `.yuv` (needs `size`), a single
/// `.pgm`, or a directory of `.pgm` files taken in name order.
pub fn load_sequence(path: impl AsRef<Path>, size: Option<(usize, usize)>) -> Result<Vec<Frame>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::format(format!("no .pgm files in {}", path.display())));
        }
        return files.iter().map(load_pgm).collect();
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "y4m" => load_y4m(path),
        "pgm" => Ok(vec![load_pgm(path)?]),
        "yuv" => {
            let (w, h) = size.ok_or_else(|| Error::param("raw .yuv input needs a frame size"))?;
            load_yuv420(path, w, h)
        }
        _ => Err(Error::format(format!("unrecognized input {}", path.display()))),
    }
}

pub fn key_path(dir: impl AsRef<Path>, index: usize) -> PathBuf {
    dir.as_ref().join(format!("key_{index:05}.pgm"))
}

/// Store the key frames of `frames` as PGM files under `dir`.
pub fn write_keys(dir: impl AsRef<Path>, frames: &[Frame], gop: usize) -> Result<()> {
    fs::create_dir_all(dir.as_ref())?;
    for (i, f) in frames.iter().enumerate() {
        if role_of(i, gop) == FrameRole::Key {
            store_pgm(key_path(dir.as_ref(), i), f)?;
        }
    }
    Ok(())
}

pub fn read_key(dir: impl AsRef<Path>, index: usize) -> Result<Frame> {
    let p = key_path(dir, index);
    load_pgm(&p).map_err(|e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::format(format!("missing key frame {}", p.display()))
        }
        other => other,
    })
}

/// Parallelism cap from `LRTDVC_THREADS`, if set to a positive number.
pub fn thread_cap_from_env() -> Result<Option<usize>> {
    match std::env::var("LRTDVC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::param(format!("LRTDVC_THREADS={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}
