#![allow(dead_code)]

use std::path::PathBuf;

use lrtdvc::media::{load_pgm, Frame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NATURAL: [&str; 5] = ["camera", "astronaut", "chelsea", "coffee", "coins"];

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn natural(name: &str) -> Frame {
    load_pgm(data_path(&format!("{name}_qcif.pgm"))).expect("test image")
}

pub fn natural_frames() -> Vec<Frame> {
    NATURAL.iter().map(|n| natural(n)).collect()
}

pub fn crop(f: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> Frame {
    Frame::from_fn(w, h, |x, y| f.get(x0 + x, y0 + y))
}

/// Smoothly interpolated lattice noise, one octave.
struct Octave {
    cell: f64,
    amp: f64,
    side: usize,
    lattice: Vec<f64>,
}

impl Octave {
    fn new(rng: &mut ChaCha8Rng, cell: f64, amp: f64, extent: f64) -> Self {
        let side = (extent / cell) as usize + 3;
        let lattice = (0..side * side).map(|_| rng.gen::<f64>()).collect();
        Octave { cell, amp, side, lattice }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x / self.cell, y / self.cell);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let ease = |t: f64| t * t * (3.0 - 2.0 * t);
        let (sx, sy) = (ease(fx - fx.floor()), ease(fy - fy.floor()));
        let v = |a: usize, b: usize| self.lattice[b * self.side + a];
        let top = v(ix, iy) * (1.0 - sx) + v(ix + 1, iy) * sx;
        let bottom = v(ix, iy + 1) * (1.0 - sx) + v(ix + 1, iy + 1) * sx;
        self.amp * (top * (1.0 - sy) + bottom * sy)
    }
}

/// A continuous texture: several octaves of lattice noise.
pub struct Texture(Vec<Octave>);

impl Texture {
    pub fn new(seed: u64, octaves: &[(f64, f64)], extent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Texture(octaves.iter().map(|&(c, a)| Octave::new(&mut rng, c, a, extent)).collect())
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        self.0.iter().map(|o| o.at(x, y)).sum()
    }
}

/// QCIF sequence: a textured background panning by (1.4, 0.6) px per frame
/// under a textured 48x40 object moving by (2.5, -1.5), plus ±2 sensor noise.
pub fn moving_texture(frames: usize, seed: u64) -> Vec<Frame> {
    let bg = Texture::new(seed, &[(40.0, 110.0), (13.0, 50.0), (5.0, 25.0), (2.0, 12.0)], 400.0);
    let obj = Texture::new(seed + 1, &[(16.0, 90.0), (6.0, 40.0), (2.5, 20.0)], 100.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    (0..frames)
        .map(|t| {
            let t = t as f64;
            let (bx, by) = (20.0 + 1.4 * t, 20.0 + 0.6 * t);
            let (px, py) = (30.0 + 2.5 * t, 80.0 - 1.5 * t);
            Frame::from_fn(176, 144, |x, y| {
                let (xf, yf) = (x as f64, y as f64);
                let inside = xf >= px && xf < px + 48.0 && yf >= py && yf < py + 40.0;
                let v = if inside {
                    obj.at(xf - px + 5.0, yf - py + 5.0) + 40.0
                } else {
                    bg.at(xf + bx, yf + by)
                };
                let noise = rng.gen_range(-2..=2) as f64;
                (v + noise).round().clamp(0.0, 255.0) as u8
            })
        })
        .collect()
}

pub fn add_noise(f: &Frame, amplitude: i32, rng: &mut ChaCha8Rng) -> Frame {
    Frame::from_fn(f.width(), f.height(), |x, y| {
        (f.get(x, y) as i32 + rng.gen_range(-amplitude..=amplitude)).clamp(0, 255) as u8
    })
}

pub mod golden;
