use lrtdvc::complexity::{
    beta_symbols, context_cost, ldpc_cost, lrt_cost, mq_cost, power, CycleWeights, LiveCounts,
};
use lrtdvc::entropy::mq::MAX_FILL_BYTES;
use lrtdvc::entropy::{
    build_merge_map, decode_positions, encode_positions, merge_ranks, mq_decode, mq_encode,
    MergeMap, MqDecoder, MqEncoder, SequenceEntry, SequenceStream, WzBitstream, CONTEXTS,
};
use lrtdvc::lrt::{
    max_rank, neighborhood_offsets, sample_half, transform, transform_tallied, LrtParams,
    RankImage, Sampling, Variant, ABSENT,
};
use lrtdvc::media::{block_means, psnr, window_mean, Frame, MeanGrid};
use lrtdvc::pipeline::{encode_frame, EncoderConfig};
use lrtdvc::recon::{
    apply_block_means, dlrtex, post_process, reconstruct_sampled, RankModel, ReconParams,
};
use lrtdvc::side_info::{motion_search, MatchThresholds, Reference, SearchOptions};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Odd), Just(Variant::Even), Just(Variant::Full)]
}

fn sampling() -> impl Strategy<Value = Sampling> {
    prop_oneof![Just(Sampling::Full), Just(Sampling::Half)]
}

fn params() -> impl Strategy<Value = LrtParams> {
    (1u8..=4, -20i8..=20, variant(), sampling())
        .prop_map(|(n, delta, variant, sampling)| LrtParams { n, delta, variant, sampling })
}

fn frame(max_w: usize, max_h: usize) -> impl Strategy<Value = Frame> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h).prop_map(move |s| Frame::new(w, h, s).unwrap())
    })
}

/// Smooth-ish content: a random walk along rows keeps ranks away from uniform.
fn smooth_frame(w: usize, h: usize) -> impl Strategy<Value = Frame> {
    (any::<u8>(), prop::collection::vec(-6i16..=6, w * h)).prop_map(move |(start, steps)| {
        let mut v = start as i16;
        let s = steps
            .iter()
            .map(|d| {
                v = (v + d).clamp(0, 255);
                v as u8
            })
            .collect();
        Frame::new(w, h, s).unwrap()
    })
}

fn reflect(c: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let mut c = c;
    loop {
        if c < 0 {
            c = -c;
        } else if c >= len as isize {
            c = 2 * (len as isize - 1) - c;
        } else {
            return c as usize;
        }
    }
}

fn brute_rank(f: &Frame, x: usize, y: usize, p: &LrtParams) -> u8 {
    let r = p.n as isize;
    let centre = f.get(x, y) as i32;
    let mut count = 0;
    for dy in -r..=r {
        for dx in -r..=r {
            let d = dy.abs() + dx.abs();
            let keep = match p.variant {
                Variant::Odd => d % 2 == 1,
                Variant::Even => d > 0 && d % 2 == 0,
                Variant::Full => d > 0,
            };
            if !keep {
                continue;
            }
            let v =
                f.get(reflect(x as isize + dx, f.width()), reflect(y as isize + dy, f.height()));
            if (v as i32) < centre - p.delta as i32 {
                count += 1;
            }
        }
    }
    count
}

fn merged_ranks(f: &Frame, p: &LrtParams) -> (RankImage, MergeMap) {
    let map = build_merge_map(p.max_rank()).unwrap();
    (merge_ranks(&transform(f, p), &map).unwrap(), map)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_matches_brute_force(f in frame(12, 12), p in params()) {
        let r = transform(&f, &p);
        prop_assert_eq!(r.max_rank(), max_rank(p.n, p.variant));
        for y in 0..f.height() {
            for x in 0..f.width() {
                if p.sampling.keeps(x, y) {
                    let v = r.raw(x, y);
                    prop_assert!(v <= r.max_rank());
                    prop_assert_eq!(v, brute_rank(&f, x, y, &p), "at ({}, {})", x, y);
                } else {
                    prop_assert_eq!(r.raw(x, y), ABSENT);
                }
            }
        }
    }

    #[test]
    fn odd_plus_even_is_full(f in frame(10, 10), n in 1u8..=4, delta in -15i8..=15) {
        let at = |variant| transform(&f, &LrtParams { n, delta, variant, sampling: Sampling::Full });
        let (o, e, full) = (at(Variant::Odd), at(Variant::Even), at(Variant::Full));
        for i in 0..f.len() {
            prop_assert_eq!(o.ranks()[i] + e.ranks()[i], full.ranks()[i]);
        }
    }

    #[test]
    fn offsets_are_disjoint_halves(n in 1u8..=4) {
        let odd = neighborhood_offsets(n, Variant::Odd).unwrap().offsets;
        let even = neighborhood_offsets(n, Variant::Even).unwrap().offsets;
        let full = neighborhood_offsets(n, Variant::Full).unwrap().offsets;
        prop_assert_eq!(odd.len(), max_rank(n, Variant::Odd) as usize);
        prop_assert_eq!(even.len(), max_rank(n, Variant::Even) as usize);
        prop_assert!(odd.iter().all(|o| !even.contains(o)));
        let mut union: Vec<_> = odd.iter().chain(&even).copied().collect();
        union.sort();
        prop_assert_eq!(union, full);
    }

    #[test]
    fn live_counts_follow_cost_model(f in frame(20, 20), n in 1u8..=4, odd in any::<bool>()) {
        prop_assume!(f.width() >= 2 && f.height() >= 2);
        let variant = if odd { Variant::Odd } else { Variant::Even };
        let mut live = LiveCounts::default();
        transform_tallied(&f, &LrtParams { n, variant, ..Default::default() }, &mut live);
        let model = lrt_cost(f.len() as u64, n as u32);
        prop_assert_eq!(live.comparisons as f64, model.compare);
        prop_assert_eq!(live.increments as f64, model.increment);
    }

    #[test]
    fn half_sampling_keeps_checkerboard(f in frame(15, 15), n in 1u8..=4) {
        let full = transform(&f, &LrtParams { n, ..Default::default() });
        let half = sample_half(&full).unwrap();
        prop_assert_eq!(half.present_count(), f.len().div_ceil(2));
        for y in 0..f.height() {
            for x in 0..f.width() {
                let want = if (x + y) % 2 == 0 { full.raw(x, y) } else { ABSENT };
                prop_assert_eq!(half.raw(x, y), want);
            }
        }
    }

    #[test]
    fn merging_conserves_mass_and_is_idempotent(f in frame(16, 16), p in params()) {
        let r = transform(&f, &p);
        let (m, map) = merged_ranks(&f, &p);
        let before = r.histogram();
        let after = m.histogram();
        prop_assert_eq!(before.iter().sum::<u64>(), after.iter().sum::<u64>());
        for (v, &c) in after.iter().enumerate() {
            let sources: u64 = (0..before.len()).filter(|&s| map.map(s as u8) == Some(v as u8)).map(|s| before[s]).sum();
            prop_assert_eq!(c, sources);
        }
        prop_assert_eq!(merge_ranks(&m, &map).unwrap(), m.clone());
        for w in map.table().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn positions_roundtrip(f in frame(24, 24), p in params(), merge in any::<bool>()) {
        let r = transform(&f, &p);
        let map = if merge { build_merge_map(p.max_rank()).unwrap() } else { MergeMap::identity(p.max_rank()) };
        let r = merge_ranks(&r, &map).unwrap();
        let stream = encode_positions(&r, &map).unwrap();
        prop_assert!(stream.iter().all(|&(s, cx)| s <= 1 && (cx as usize) < CONTEXTS));
        let bytes = mq_encode(&stream, CONTEXTS);
        let contexts: Vec<u8> = stream.iter().map(|s| s.1).collect();
        let symbols = mq_decode(&bytes, &contexts, CONTEXTS).unwrap();
        prop_assert!(symbols.iter().zip(&stream).all(|(a, b)| *a == b.0));
        let back = decode_positions(&bytes, f.width(), f.height(), p.sampling, &map).unwrap();
        prop_assert_eq!(back, r.clone());

        let hist = r.histogram();
        let desc: Vec<u64> = map.distinct().iter().map(|&v| hist[v as usize]).collect();
        prop_assert_eq!(beta_symbols(r.present_count() as u64, &desc).unwrap(), stream.len() as u64);
    }

    #[test]
    fn mq_roundtrip_with_bounded_fill(
        stream in prop::collection::vec((any::<bool>(), 0u8..CONTEXTS as u8), 0..4000),
        bias in 0u32..100,
    ) {
        // skew the symbols so adaptive states reach both extremes
        let stream: Vec<(u8, u8)> = stream
            .iter()
            .enumerate()
            .map(|(i, &(b, cx))| (u8::from(b && (i as u32 * 37 % 100) >= bias), cx))
            .collect();
        let mut enc = MqEncoder::new(CONTEXTS);
        for &(s, cx) in &stream {
            enc.encode(s, cx as usize);
        }
        let bytes = enc.finish();
        prop_assert_eq!(&bytes, &mq_encode(&stream, CONTEXTS));
        let mut dec = MqDecoder::new(&bytes, CONTEXTS);
        for &(s, cx) in &stream {
            prop_assert_eq!(dec.decode(cx as usize), s);
        }
        prop_assert!(dec.fill_bytes() <= MAX_FILL_BYTES);
        prop_assert!(dec.finish().is_ok());
    }

    #[test]
    fn wz_bitstream_roundtrip(
        w in 1u16..200, h in 1u16..200, p in params(), merged in any::<bool>(),
        payload in prop::collection::vec(any::<u8>(), 0..300), seed in any::<u8>(),
    ) {
        let f = Frame::from_fn(w as usize, h as usize, |x, y| (x * 7 + y * 3) as u8 ^ seed);
        let means = block_means(&f, 16);
        let s = WzBitstream { width: w as usize, height: h as usize, params: p, merged, means, payload };
        let bytes = s.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), s.encoded_len());
        prop_assert_eq!(WzBitstream::from_bytes(&bytes).unwrap(), s);
        prop_assert!(WzBitstream::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sequence_roundtrip(gop in 2u8..=8, frames in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..40), 0..12)) {
        let entries = frames
            .into_iter()
            .enumerate()
            .map(|(i, b)| if i % gop as usize == 0 { SequenceEntry::Key } else { SequenceEntry::Wz(b) })
            .collect();
        let s = SequenceStream { gop, entries };
        prop_assert_eq!(SequenceStream::from_bytes(&s.to_bytes().unwrap()).unwrap(), s);
    }

    #[test]
    fn cost_model_is_homogeneous(p in 1u64..100_000, k in 2u64..8, n in 1u32..=4, code in 1u32..40, extra in 0u64..1000) {
        let w = CycleWeights::default();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        prop_assert!(close(lrt_cost(k * p, n).cycles(&w), k as f64 * lrt_cost(p, n).cycles(&w)));
        prop_assert!(close(ldpc_cost(k * p, code).cycles(&w), k as f64 * ldpc_cost(p, code).cycles(&w)));
        let beta = p + extra;
        prop_assert!(close(context_cost(k * p, k * beta).unwrap().cycles(&w), k as f64 * context_cost(p, beta).unwrap().cycles(&w)));
        prop_assert!(close(mq_cost(k * beta).cycles(&w), k as f64 * mq_cost(beta).cycles(&w)));
        prop_assert!(ldpc_cost(p, code + 1).cycles(&w) > ldpc_cost(p, code).cycles(&w));
    }

    #[test]
    fn power_is_linear(c in 0f64..1e8, r in 0f64..1e7, k in 0.1f64..10.0, alpha in 0f64..100.0, f in 1f64..60.0) {
        let base = power(c, r, k, alpha, f).power;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        prop_assert!(close(power(c, 2.0 * r, k, alpha, f).power, base + k * alpha * r));
        prop_assert!(close(power(2.0 * c, r, k, alpha, f).power, base + k * f * c));
        prop_assert!(close(power(c, r, 2.0 * k, alpha, f).power, 2.0 * base));
    }

    #[test]
    fn encoder_is_deterministic(f in smooth_frame(40, 36), p in params(), merge in any::<bool>()) {
        let cfg = EncoderConfig { lrt: p, merge, ..Default::default() };
        let a = encode_frame(&f, &cfg).unwrap();
        let b = encode_frame(&f, &cfg).unwrap();
        prop_assert_eq!(&a.bytes, &b.bytes);
        prop_assert_eq!(a.symbols, encode_positions(&a.ranks, &if merge {
            build_merge_map(p.max_rank()).unwrap()
        } else {
            MergeMap::identity(p.max_rank())
        }).unwrap().len() as u64);
    }
}

#[derive(Debug)]
struct SearchCase {
    wz: Frame,
    refs: Vec<Frame>,
    params: LrtParams,
    range: usize,
    block: usize,
}

fn search_case() -> impl Strategy<Value = SearchCase> {
    (
        smooth_frame(24, 20),
        smooth_frame(24, 20),
        smooth_frame(24, 20),
        0i32..4,
        0i32..4,
        1u8..=2,
        any::<bool>(),
        1usize..=4,
        prop_oneof![Just(4usize), Just(8)],
    )
        .prop_map(|(a, b, c, sx, sy, n, half, range, block)| {
            // WZ is a shifted copy of `a` with a little of `c` mixed in, so
            // both exact and approximate matches occur
            let wz = Frame::from_fn(24, 20, |x, y| {
                let base = a.get((x + sx as usize) % 24, (y + sy as usize) % 20);
                if (x * 3 + y) % 7 == 0 {
                    c.get(x, y)
                } else {
                    base
                }
            });
            let sampling = if half { Sampling::Half } else { Sampling::Full };
            let variant = if half { Variant::Even } else { Variant::Odd };
            SearchCase {
                wz,
                refs: vec![a, b],
                params: LrtParams { n, delta: -5, variant, sampling },
                range,
                block,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn motion_search_matches_exhaustive_oracle(case in search_case(), assist in any::<bool>()) {
        let SearchCase { wz, refs, params, range, block } = case;
        let model = RankModel::new(params, true).unwrap();
        let (wz_ranks, _) = merged_ranks(&wz, &params);
        let means = block_means(&wz, block);
        let prepared: Vec<Reference> = refs.iter().map(|f| Reference::new(f.clone(), model.ranks(f)).unwrap()).collect();
        let rr: Vec<&Reference> = prepared.iter().collect();
        let opts = SearchOptions { range, block, mean_assist: assist, thresholds: MatchThresholds::new(&params) };
        let field = motion_search(&wz_ranks, &means, &rr, &opts).unwrap();
        let (w, h) = (wz.width() as i64, wz.height() as i64);
        let r = range as i64;
        for b in &field.blocks {
            let (x0, y0) = ((b.bx * block) as i64, (b.by * block) as i64);
            let (bw, bh) = (block.min(w as usize - x0 as usize) as i64, block.min(h as usize - y0 as usize) as i64);
            let mut lsad1 = u64::MAX;
            let mut lsad2 = u64::MAX;
            for (ri, reference) in prepared.iter().enumerate() {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (cx, cy) = (x0 + dx, y0 + dy);
                        if cx < 0 || cy < 0 || cx + bw > w || cy + bh > h {
                            continue;
                        }
                        let mut sad = 0u64;
                        for y in 0..bh {
                            for x in 0..bw {
                                let v = wz_ranks.raw((x0 + x) as usize, (y0 + y) as usize);
                                if v != ABSENT {
                                    sad += v.abs_diff(reference.ranks.raw((cx + x) as usize, (cy + y) as usize)) as u64;
                                }
                            }
                        }
                        lsad1 = lsad1.min(sad);
                        let mean = window_mean(&refs[ri], cx as usize, cy as usize, bw as usize, bh as usize);
                        if assist && (mean - means.get(b.bx, b.by) as f64).abs() < 5.0 {
                            lsad2 = lsad2.min(sad);
                        }
                    }
                }
            }
            prop_assert_eq!(b.lsad1(), lsad1);
            prop_assert_eq!(b.lsad2().unwrap_or(u64::MAX), lsad2);
            // selection rule
            let t2 = opts.thresholds.t2(b.compared);
            let expect = match b.gated {
                Some(g) if (g.sad as f64 - b.best.sad as f64).abs() <= t2 => g,
                _ => b.best,
            };
            prop_assert_eq!(b.chosen, expect);
            if let Some(g) = b.gated {
                let (cx, cy) = ((x0 + g.mv.dx as i64) as usize, (y0 + g.mv.dy as i64) as usize);
                let mean = window_mean(&refs[g.reference], cx, cy, bw as usize, bh as usize);
                prop_assert!((mean - means.get(b.bx, b.by) as f64).abs() < 5.0);
            }
        }
        prop_assert_eq!(motion_search(&wz_ranks, &means, &rr, &opts).unwrap(), field);
    }

    #[test]
    fn dlrtex_steps_are_bounded_and_fidelity_rises(
        truth in smooth_frame(32, 24),
        noise in prop::collection::vec(-8i16..=8, 32 * 24),
        n in 1u8..=3,
        step in 1u8..=4,
        merged in any::<bool>(),
    ) {
        let params = LrtParams { n, delta: -10, ..Default::default() };
        let model = RankModel::new(params, merged).unwrap();
        let target = model.ranks(&truth);
        let si = Frame::from_fn(32, 24, |x, y| (truth.get(x, y) as i16 + noise[y * 32 + x]).clamp(0, 255) as u8);
        let rp = ReconParams { step, ..Default::default() };
        let (out, trace) = dlrtex(&target, &si, &model, &rp).unwrap();
        prop_assert!(trace.accepted < trace.entries.len());
        prop_assert!(trace.entries.len() <= rp.max_iterations + 1);
        let kept = &trace.entries[..=trace.accepted];
        for pair in kept.windows(2) {
            prop_assert!(pair[1].rank_psnr >= pair[0].rank_psnr);
        }
        let bound = step as i32 * trace.accepted as i32;
        for (a, b) in out.samples().iter().zip(si.samples()) {
            prop_assert!((*a as i32 - *b as i32).abs() <= bound);
        }
        let (again, _) = dlrtex(&target, &si, &model, &rp).unwrap();
        prop_assert_eq!(again, out);
    }

    #[test]
    fn dlrtex_leaves_truth_alone(truth in smooth_frame(30, 22), n in 1u8..=4, variant in variant()) {
        let model = RankModel::new(LrtParams { n, delta: -10, variant, sampling: Sampling::Full }, true).unwrap();
        let (out, trace) = dlrtex(&model.ranks(&truth), &truth, &model, &ReconParams::default()).unwrap();
        prop_assert_eq!(out, truth);
        prop_assert_eq!(trace.accepted, 0);
    }

    #[test]
    fn sampled_reconstruction_ignores_absent_side_info(
        truth in smooth_frame(24, 20),
        si in smooth_frame(24, 20),
        junk in prop::collection::vec(any::<u8>(), 24 * 20),
        n in 1u8..=3,
    ) {
        let params = LrtParams { n, delta: -10, variant: Variant::Even, sampling: Sampling::Half };
        let model = RankModel::new(params, true).unwrap();
        let sampled = sample_half(&model.ranks(&truth)).unwrap();
        let si_ranks = model.ranks(&si);
        let rp = ReconParams::default();
        let (base, _) = reconstruct_sampled(&sampled, &si, &si_ranks, &model, &rp).unwrap();
        // even offsets only reach same-parity pixels, so scrambling the
        // other half of the side information must not move present pixels
        let scrambled = Frame::from_fn(24, 20, |x, y| if (x + y) % 2 == 0 { si.get(x, y) } else { junk[y * 24 + x] });
        let (other, _) = reconstruct_sampled(&sampled, &scrambled, &model.ranks(&scrambled), &model, &rp).unwrap();
        for y in 0..20 {
            for x in 0..24 {
                if (x + y) % 2 == 0 {
                    prop_assert_eq!(base.get(x, y), other.get(x, y), "at ({}, {})", x, y);
                }
            }
        }
    }

    #[test]
    fn post_processing_stays_in_range(
        decoded in frame(40, 40),
        shift in -60i16..=60,
        n in 1u8..=3,
    ) {
        let original = Frame::from_fn(decoded.width(), decoded.height(), |x, y| {
            (decoded.get(x, y) as i16 + shift).clamp(0, 255) as u8
        });
        let means: MeanGrid = block_means(&original, 16);
        let shifted = apply_block_means(&decoded, &means).unwrap();
        prop_assert_eq!(shifted.width(), decoded.width());
        let model = RankModel::new(LrtParams { n, ..Default::default() }, true).unwrap();
        let target = model.ranks(&original);
        let (out, trace) = post_process(&decoded, &means, &target, &model, &ReconParams::default()).unwrap();
        prop_assert_eq!(out.len(), decoded.len());
        prop_assert!(trace.entries[0].rank_psnr <= trace.final_fidelity());
        // a uniform shift is undone exactly whenever nothing clipped
        if decoded.samples().iter().all(|&v| (v as i16 + shift) >= 0 && (v as i16 + shift) <= 255)
            && means.means.iter().all(|&m| m > 0 && m < 255)
        {
            prop_assert!(psnr(&original, &shifted).unwrap() >= psnr(&original, &decoded).unwrap());
        }
    }
}

#[test]
fn flat_frames_rank_by_sign_of_delta() {
    for variant in [Variant::Odd, Variant::Full] {
        let flat = Frame::filled(9, 7, 100);
        let below = LrtParams { n: 3, delta: -10, variant, sampling: Sampling::Full };
        let r = transform(&flat, &below);
        assert!(r.ranks().iter().all(|&v| v == below.max_rank()));
        let r = transform(&flat, &LrtParams { delta: 0, ..below });
        assert!(r.ranks().iter().all(|&v| v == 0));
        let sampled = transform(&flat, &LrtParams { sampling: Sampling::Half, ..below });
        assert_eq!(sampled.present_count(), 32);
    }
}
