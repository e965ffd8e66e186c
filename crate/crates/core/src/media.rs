//! Frame containers, image/sequence file I/O, PSNR and block means.
//!
//! Everything here works on 8-bit luma. Chroma planes of YUV inputs are
//! skipped on read and never written.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::complexity::OpTally;
use crate::error::{Error, Result};

/// Block edge used for the transmitted mean grid.
pub const MEAN_BLOCK: usize = 16;

/// 8-bit grayscale raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("frame dimensions must be non-zero"));
        }
        if samples.len() != width * height {
            return Err(Error::format(format!(
                "expected {} samples for {}x{}, got {}",
                width * height,
                width,
                height,
                samples.len()
            )));
        }
        Ok(Frame { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty frame");
        Frame { width, height, samples: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty frame");
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Frame { width, height, samples }
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
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.samples[y * self.width + x] = v;
    }

    pub fn same_geometry(&self, other: &Frame) -> Result<()> {
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
}

/// One quantized mean per block, raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeanGrid {
    pub block_size: usize,
    pub width: usize,
    pub height: usize,
    pub means: Vec<u8>,
}

impl MeanGrid {
    pub fn blocks_x(&self) -> usize {
        self.width.div_ceil(self.block_size)
    }

    pub fn blocks_y(&self) -> usize {
        self.height.div_ceil(self.block_size)
    }

    pub fn get(&self, bx: usize, by: usize) -> u8 {
        self.means[by * self.blocks_x() + bx]
    }

    /// Payload size when every mean is sent as one byte.
    pub fn bits(&self) -> usize {
        self.means.len() * 8
    }
}

pub fn block_count(width: usize, height: usize, block: usize) -> usize {
    width.div_ceil(block) * height.div_ceil(block)
}

/// Floor of the block average. Partial edge blocks divide by the number of
/// pixels actually present; full 16x16 blocks use a shift.
pub fn block_means(frame: &Frame, block: usize) -> MeanGrid {
    block_means_tallied(frame, block, &mut ())
}

pub fn block_means_tallied<T: OpTally>(frame: &Frame, block: usize, tally: &mut T) -> MeanGrid {
    assert!(block > 0, "block size must be positive");
    let bx_n = frame.width.div_ceil(block);
    let by_n = frame.height.div_ceil(block);
    let mut means = Vec::with_capacity(bx_n * by_n);
    for by in 0..by_n {
        let y0 = by * block;
        let y1 = (y0 + block).min(frame.height);
        for bx in 0..bx_n {
            let x0 = bx * block;
            let x1 = (x0 + block).min(frame.width);
            let mut sum = 0u32;
            for y in y0..y1 {
                let row = &frame.samples[y * frame.width..];
                for &v in &row[x0..x1] {
                    sum += v as u32;
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as u32;
            tally.add(count as u64);
            let mean = if count.is_power_of_two() {
                tally.shift(1);
                sum >> count.trailing_zeros()
            } else {
                sum / count
            };
            means.push(mean as u8);
        }
    }
    MeanGrid { block_size: block, width: frame.width, height: frame.height, means }
}

/// Mean of a rectangular window at full precision.
pub fn window_mean(frame: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> f64 {
    let mut sum = 0u64;
    for y in y0..y0 + h {
        let row = &frame.samples[y * frame.width + x0..y * frame.width + x0 + w];
        sum += row.iter().map(|&v| v as u64).sum::<u64>();
    }
    sum as f64 / (w * h) as f64
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    a.same_geometry(b)?;
    let sse: u64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sse as f64 / a.len() as f64)
}

/// Peak-255 PSNR in dB. Identical frames give `f64::INFINITY`.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let mse = mse(a, b)?;
    Ok(psnr_from_mse(mse, 255.0))
}

pub(crate) fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

// ---------------------------------------------------------------------------
// PGM

struct HeaderScanner<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> HeaderScanner<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.buf[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token().ok_or_else(|| Error::format(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("bad {what}: {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Parse a binary (P5) or ASCII (P2) PGM with maxval 255.
pub fn parse_pgm(buf: &[u8]) -> Result<Frame> {
    let mut sc = HeaderScanner { buf, pos: 0 };
    let binary = match sc.token() {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::format("not a PGM (expected P5 or P2)")),
    };
    let width = sc.number("width")?;
    let height = sc.number("height")?;
    let maxval = sc.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("zero-sized PGM"));
    }
    let count = width * height;
    let samples = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = sc.pos + 1;
        if start > buf.len() || buf.len() - start < count {
            return Err(Error::format("truncated PGM raster"));
        }
        buf[start..start + count].to_vec()
    } else {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v = sc.number("sample").map_err(|_| Error::format("truncated PGM raster"))?;
            if v > 255 {
                return Err(Error::format(format!("sample {v} exceeds maxval")));
            }
            out.push(v as u8);
        }
        out
    };
    Frame::new(width, height, samples)
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.samples);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Frame> {
    parse_pgm(&fs::read(path)?)
}

pub fn store_pgm(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    fs::write(path, encode_pgm(frame))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// YUV4MPEG2

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    Mono,
    C420,
    C422,
    C444,
}

impl Chroma {
    fn parse(tag: &str) -> Result<Self> {
        Ok(match tag {
            "mono" => Chroma::Mono,
            t if t.starts_with("420") => {
                if t.contains("p1") {
                    return Err(Error::format(format!("high bit depth not supported: C{t}")));
                }
                Chroma::C420
            }
            "422" => Chroma::C422,
            "444" => Chroma::C444,
            other => return Err(Error::format(format!("unsupported colorspace C{other}"))),
        })
    }

    fn chroma_bytes(self, w: usize, h: usize) -> usize {
        match self {
            Chroma::Mono => 0,
            Chroma::C420 => 2 * w.div_ceil(2) * h.div_ceil(2),
            Chroma::C422 => 2 * w.div_ceil(2) * h,
            Chroma::C444 => 2 * w * h,
        }
    }
}

fn line_end(buf: &[u8], from: usize) -> Option<usize> {
    buf[from..].iter().position(|&b| b == b'\n').map(|p| from + p)
}

/// Parse a YUV4MPEG2 stream, keeping only the luma plane of each picture.
pub fn parse_y4m(buf: &[u8]) -> Result<Vec<Frame>> {
    if !buf.starts_with(b"YUV4MPEG2") {
        return Err(Error::format("bad Y4M magic"));
    }
    let hdr_end = line_end(buf, 0).ok_or_else(|| Error::format("unterminated Y4M header"))?;
    let header =
        std::str::from_utf8(&buf[..hdr_end]).map_err(|_| Error::format("non-ASCII Y4M header"))?;
    let (mut width, mut height, mut chroma) = (0usize, 0usize, Chroma::C420);
    for tok in header.split_ascii_whitespace().skip(1) {
        let (tag, val) = tok.split_at(1);
        match tag {
            "W" => width = val.parse().map_err(|_| Error::format("bad Y4M width"))?,
            "H" => height = val.parse().map_err(|_| Error::format("bad Y4M height"))?,
            "C" => chroma = Chroma::parse(val)?,
            _ => {}
        }
    }
    if width == 0 || height == 0 {
        return Err(Error::format("Y4M header lacks dimensions"));
    }
    let luma = width * height;
    let picture = luma + chroma.chroma_bytes(width, height);
    let mut frames = Vec::new();
    let mut pos = hdr_end + 1;
    while pos < buf.len() {
        if !buf[pos..].starts_with(b"FRAME") {
            return Err(Error::format(format!("expected FRAME marker at byte {pos}")));
        }
        let fe = line_end(buf, pos).ok_or_else(|| Error::format("unterminated FRAME header"))?;
        pos = fe + 1;
        if buf.len() - pos < picture {
            return Err(Error::format(format!("truncated picture {}", frames.len())));
        }
        frames.push(Frame::new(width, height, buf[pos..pos + luma].to_vec())?);
        pos += picture;
    }
    if frames.is_empty() {
        return Err(Error::format("Y4M stream holds no pictures"));
    }
    Ok(frames)
}

pub fn load_y4m(path: impl AsRef<Path>) -> Result<Vec<Frame>> {
    parse_y4m(&fs::read(path)?)
}

/// Write a monochrome Y4M stream. All frames must share one geometry.
pub fn store_y4m(path: impl AsRef<Path>, frames: &[Frame], fps: u32) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::param("no frames to write"))?;
    let mut out = Vec::new();
    writeln!(out, "YUV4MPEG2 W{} H{} F{}:1 Ip A1:1 Cmono", first.width, first.height, fps)?;
    for f in frames {
        first.same_geometry(f)?;
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(&f.samples);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Raw planar 4:2:0 (I420) input; `width` and `height` come from the caller.
pub fn parse_yuv420(buf: &[u8], width: usize, height: usize) -> Result<Vec<Frame>> {
    if width == 0 || height == 0 {
        return Err(Error::param("raw YUV needs explicit non-zero width and height"));
    }
    let luma = width * height;
    let picture = luma + Chroma::C420.chroma_bytes(width, height);
    if buf.is_empty() || !buf.len().is_multiple_of(picture) {
        return Err(Error::format(format!(
            "raw YUV size {} is not a multiple of the {picture}-byte picture",
            buf.len()
        )));
    }
    buf.chunks_exact(picture).map(|p| Frame::new(width, height, p[..luma].to_vec())).collect()
}

pub fn load_yuv420(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Vec<Frame>> {
    parse_yuv420(&fs::read(path)?, width, height)
}
