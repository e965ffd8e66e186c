//! Checked-in reference streams. Set `LRTDVC_BLESS=1` to regenerate.

use std::fs;
use std::path::PathBuf;

use lrtdvc::lrt::{LrtParams, RankImage, Sampling, Variant};
use lrtdvc::media::{load_pgm, psnr, store_pgm, Frame};
use lrtdvc::pipeline::{decode_frame, encode_frame, DecoderConfig, EncoderConfig};

use super::{crop, natural};

pub struct Case {
    pub name: &'static str,
    image: &'static str,
    origin: (usize, usize),
    lrt: LrtParams,
    merge: bool,
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "full_odd_n2",
            image: "astronaut",
            origin: (60, 40),
            lrt: LrtParams { n: 2, delta: -10, variant: Variant::Odd, sampling: Sampling::Full },
            merge: true,
        },
        Case {
            name: "half_even_n3",
            image: "coins",
            origin: (30, 50),
            lrt: LrtParams { n: 3, delta: -10, variant: Variant::Even, sampling: Sampling::Half },
            merge: true,
        },
        Case {
            name: "full_odd_n1_nomerge",
            image: "camera",
            origin: (80, 20),
            lrt: LrtParams { n: 1, delta: -5, variant: Variant::Odd, sampling: Sampling::Full },
            merge: false,
        },
    ]
}

pub fn dir(case: &Case) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(case.name)
}

/// Previous key, WZ frame and next key: 64x48 windows stepping by (2, 1).
fn source_frames(case: &Case) -> [Frame; 3] {
    let img = natural(case.image);
    let (x0, y0) = case.origin;
    [0, 1, 2].map(|t| crop(&img, x0 + 2 * t, y0 + t, 64, 48))
}

fn encoder(case: &Case) -> EncoderConfig {
    EncoderConfig { lrt: case.lrt, merge: case.merge, ..Default::default() }
}

fn measure(stream: &[u8], prev: &Frame, wz: &Frame, next: &Frame) -> lrtdvc::Result<[f64; 3]> {
    let d = decode_frame(stream, prev, Some(next), &DecoderConfig::default())?;
    Ok([psnr(wz, &d.si)?, psnr(wz, &d.recon)?, psnr(wz, d.output())?])
}

pub fn bless(case: &Case) {
    let [prev, wz, next] = source_frames(case);
    let d = dir(case);
    fs::create_dir_all(&d).unwrap();
    store_pgm(d.join("prev.pgm"), &prev).unwrap();
    store_pgm(d.join("wz.pgm"), &wz).unwrap();
    store_pgm(d.join("next.pgm"), &next).unwrap();
    let enc = encode_frame(&wz, &encoder(case)).unwrap();
    fs::write(d.join("stream.lrtw"), &enc.bytes).unwrap();
    store_pgm(d.join("ranks.pgm"), &enc.ranks.to_raw_frame()).unwrap();
    let p = measure(&enc.bytes, &prev, &wz, &next).unwrap();
    let text = format!("si_psnr {:?}\nrecon_psnr {:?}\npost_psnr {:?}\n", p[0], p[1], p[2]);
    fs::write(d.join("expected.txt"), text).unwrap();
}

/// Compare one case against its files; `Err` describes the first mismatch.
pub fn check(case: &Case) -> Result<[f64; 3], String> {
    let d = dir(case);
    let load = |n: &str| load_pgm(d.join(n)).map_err(|e| format!("{}: {n}: {e}", case.name));
    let (prev, wz, next) = (load("prev.pgm")?, load("wz.pgm")?, load("next.pgm")?);
    let stream = fs::read(d.join("stream.lrtw")).map_err(|e| e.to_string())?;

    let enc = encode_frame(&wz, &encoder(case)).map_err(|e| e.to_string())?;
    if enc.bytes != stream {
        return Err(format!("{}: encoder output differs from stream.lrtw", case.name));
    }
    let ranks =
        RankImage::from_raw_frame(&load("ranks.pgm")?, case.lrt.max_rank(), case.lrt.sampling)
            .map_err(|e| e.to_string())?;
    let decoded = decode_frame(&stream, &prev, Some(&next), &DecoderConfig::default())
        .map_err(|e| e.to_string())?;
    if decoded.ranks != ranks {
        return Err(format!("{}: decoded ranks differ from ranks.pgm", case.name));
    }

    let text = fs::read_to_string(d.join("expected.txt")).map_err(|e| e.to_string())?;
    let expected: Vec<f64> = text
        .lines()
        .map(|l| l.split_whitespace().nth(1).and_then(|v| v.parse().ok()).ok_or(l.to_string()))
        .collect::<Result<_, _>>()?;
    let got = measure(&stream, &prev, &wz, &next).map_err(|e| e.to_string())?;
    for (g, e) in got.iter().zip(&expected) {
        let same = (g.is_infinite() && g == e) || (g - e).abs() <= 1e-9;
        if !same {
            return Err(format!("{}: psnr {g} vs recorded {e}", case.name));
        }
    }
    Ok(got)
}

pub fn blessing() -> bool {
    std::env::var_os("LRTDVC_BLESS").is_some_and(|v| v == "1")
}
