use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use lrtdvc::entropy::{SequenceEntry, SequenceStream};
use lrtdvc::lrt::{LrtParams, Sampling, Variant};
use lrtdvc::media::{store_pgm, store_y4m, Frame};
use lrtdvc::pipeline::{
    cost_report, decode_sequence, default_variant, encode_sequence, frame_stats, load_sequence,
    read_key, read_stats_csv, run_with_ablations, summarize, thread_cap_from_env, write_cost_csv,
    write_keys, write_stats_csv, Ablations, CodecConfig, CostRow, DecoderConfig, EncoderConfig,
    FrameRole, Summary,
};
use lrtdvc::recon::ReconParams;

#[derive(Parser)]
#[command(
    name = "lrtdvc",
    version,
    about = "Distributed video codec built on local rank transforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a sequence into a stream file plus lossless key frames.
    Encode(EncodeArgs),
    /// Decode a stream using its key frames.
    Decode(DecodeArgs),
    /// Encoder operation counts and power from a stats CSV.
    Cost(CostArgs),
    /// Encode, decode and measure in one go.
    Run(RunArgs),
    /// Rate/quality operating points: sampled and full LRT for N = 1..4.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct InputArgs {
    /// .y4m, .yuv (with --size), .pgm, or a directory of .pgm files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Frame size for raw .yuv input, as WxH.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
}

#[derive(Args)]
struct EncoderArgs {
    #[arg(long, default_value_t = 2)]
    n: u8,
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    delta: i8,
    /// odd, even or full; defaults to odd for full sampling, even for half.
    #[arg(long)]
    variant: Option<Variant>,
    /// full or half.
    #[arg(long, default_value = "full")]
    sampling: Sampling,
    #[arg(long, default_value_t = 2)]
    gop: usize,
    /// Code ranks without merging the low pairs.
    #[arg(long)]
    no_merge: bool,
}

impl EncoderArgs {
    fn config(&self) -> EncoderConfig {
        let lrt = LrtParams {
            n: self.n,
            delta: self.delta,
            variant: self.variant.unwrap_or(default_variant(self.sampling)),
            sampling: self.sampling,
        };
        EncoderConfig { lrt, merge: !self.no_merge, gop: self.gop, ..Default::default() }
    }
}

#[derive(Args)]
struct DecoderArgs {
    /// Intensity step per reconstruction iteration.
    #[arg(long, default_value_t = 2)]
    step: u8,
    /// Side-information trust gate per neighbor and unit of |S| (sampled mode).
    #[arg(long, default_value_t = 0.05)]
    t3: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 16)]
    search_range: usize,
    #[arg(long)]
    no_mean_assist: bool,
    #[arg(long)]
    no_postprocess: bool,
    /// Match motion on transmitted ranks only in sampled mode.
    #[arg(long)]
    no_interp_me: bool,
}

impl DecoderArgs {
    fn config(&self) -> DecoderConfig {
        DecoderConfig {
            recon: ReconParams {
                step: self.step,
                max_iterations: self.max_iter,
                t3_factor: self.t3,
            },
            search_range: self.search_range,
            mean_assist: !self.no_mean_assist,
            postprocess: !self.no_postprocess,
            interpolate_for_me: !self.no_interp_me,
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    /// Stream file to write.
    #[arg(long)]
    out: PathBuf,
    /// Directory receiving the key frames.
    #[arg(long)]
    keys: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Stream file written by `encode`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    keys: PathBuf,
    /// Directory of PGM frames, or a .y4m file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// Original sequence, for PSNR columns.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Frame size of a raw .yuv reference, as WxH.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    /// Per-frame statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Directory receiving one motion-vector CSV per WZ frame.
    #[arg(long)]
    mv_csv: Option<PathBuf>,
    /// Directory receiving one reconstruction trace CSV per WZ frame.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    /// Count key-frame bits in the reported rate.
    #[arg(long)]
    include_key_bits: bool,
}

#[derive(Args)]
struct CostArgs {
    /// Stats CSV from `decode` or `run`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Cost CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// Also measure without merging and without mean assistance.
    #[arg(long)]
    ablate: bool,
    #[arg(long)]
    include_key_bits: bool,
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Also write the decoded frames (directory or .y4m).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    delta: i8,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// Summary CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("empty frame size {s:?}"));
    }
    Ok((w, h))
}

/// Failures split by exit status.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn codec_config(
    enc: EncoderConfig,
    dec: DecoderConfig,
    include_key_bits: bool,
) -> Result<CodecConfig, Failure> {
    enc.validate().map_err(usage)?;
    dec.recon.validate().map_err(usage)?;
    Ok(CodecConfig { encoder: enc, decoder: dec, include_key_bits, ..Default::default() })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_frames(out: &Path, frames: &[Frame]) -> anyhow::Result<()> {
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")) {
        store_y4m(out, frames, 30)?;
    } else {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        for (i, f) in frames.iter().enumerate() {
            store_pgm(out.join(format!("frame_{i:05}.pgm")), f)?;
        }
    }
    Ok(())
}

fn load(input: &InputArgs) -> anyhow::Result<Vec<Frame>> {
    let frames = load_sequence(&input.input, input.size)
        .with_context(|| format!("reading {}", input.input.display()))?;
    info!("read {} frames of {}x{}", frames.len(), frames[0].width(), frames[0].height());
    Ok(frames)
}

fn print_summary(s: &Summary) {
    println!("WZ frames        {}", s.wz_frames);
    println!("key frames       {}", s.key_frames);
    println!("avg WZ bits      {:.1}", s.avg_wz_bits);
    println!("rate (kbps)      {:.2}", s.kbps);
    if !s.avg_si_psnr.is_nan() {
        println!("avg SI PSNR      {:.3}", s.avg_si_psnr);
        println!("avg recon PSNR   {:.3}", s.avg_recon_psnr);
        println!("avg output PSNR  {:.3}", s.avg_post_psnr);
    }
    println!("avg cycles       {:.0}", s.avg_cycles);
    println!("avg power        {:.4e}", s.avg_power);
}

fn encode(a: EncodeArgs) -> Result<(), Failure> {
    let cfg = a.encoder.config();
    cfg.validate().map_err(usage)?;
    let frames = load(&a.input)?;
    let enc = encode_sequence(&frames, &cfg)?;
    let bytes = enc.stream.to_bytes()?;
    create(&a.out)?.write_all(&bytes).with_context(|| format!("writing {}", a.out.display()))?;
    write_keys(&a.keys, &frames, cfg.gop)?;
    let wz: Vec<usize> = enc.frames.iter().flatten().map(|f| f.bytes.len()).collect();
    let avg = wz.iter().sum::<usize>() as f64 * 8.0 / wz.len().max(1) as f64;
    println!(
        "{} frames ({} WZ, {} key), {} bytes, {avg:.0} bits per WZ frame",
        frames.len(),
        wz.len(),
        frames.len() - wz.len(),
        bytes.len()
    );
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<(), Failure> {
    let dec = a.decoder.config();
    dec.recon.validate().map_err(usage)?;
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let stream = SequenceStream::from_bytes(&bytes)?;
    let decoded = decode_sequence(&stream, |i| read_key(&a.keys, i), &dec)?;
    write_frames(&a.out, &decoded.frames)?;
    info!("decoded {} frames", decoded.frames.len());

    let reference = match &a.reference {
        Some(p) => {
            let r = load_sequence(p, a.size).with_context(|| format!("reading {}", p.display()))?;
            if r.len() < decoded.frames.len() {
                return Err(Failure::Data(anyhow!(
                    "reference has {} frames, stream has {}",
                    r.len(),
                    decoded.frames.len()
                )));
            }
            Some(r)
        }
        None => None,
    };
    let cfg =
        CodecConfig { decoder: dec, include_key_bits: a.include_key_bits, ..Default::default() };
    let stats = frame_stats(&stream, &decoded, reference.as_deref(), &cfg)?;
    if let Some(p) = &a.stats {
        write_stats_csv(create(p)?, &stats, &[])?;
    }
    for (dir, what) in [(&a.mv_csv, "mv"), (&a.trace_csv, "trace")] {
        let Some(dir) = dir else { continue };
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, d) in decoded.details.iter().enumerate() {
            let Some(d) = d else { continue };
            let out = create(&dir.join(format!("{what}_{i:05}.csv")))?;
            if what == "mv" {
                d.motion.write_csv(out)?;
            } else {
                d.recon_trace.write_csv(out)?;
            }
        }
    }
    if stream.entries.iter().any(|e| matches!(e, SequenceEntry::Wz(_))) {
        print_summary(&summarize(&stats, &cfg)?);
    }
    Ok(())
}

fn cost(a: CostArgs) -> Result<(), Failure> {
    let stats =
        read_stats_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let cfg = CodecConfig::default();
    let rows = cost_report(&stats, &cfg.weights, &cfg.power)?;
    if rows.is_empty() {
        return Err(Failure::Data(anyhow!("{} has no WZ frames", a.input.display())));
    }
    match &a.out {
        Some(p) => {
            write_cost_csv(create(p)?, &rows)?;
            let n = rows.len() as f64;
            let mean = |f: fn(&CostRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
            println!("frames           {}", rows.len());
            println!("avg LRT cycles   {:.0}", mean(|r| r.total));
            println!("LDPC n=8 cycles  {:.0}", mean(|r| r.ldpc_8));
            println!("LDPC n=23 cycles {:.0}", mean(|r| r.ldpc_23));
            println!("avg LRT power    {:.4e}", mean(|r| r.power_lrt));
        }
        None => write_cost_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = codec_config(a.encoder.config(), a.decoder.config(), a.include_key_bits)?;
    let frames = load(&a.input)?;
    let ablations = Ablations { merge: a.ablate, mean_assist: a.ablate };
    let e = run_with_ablations(&frames, &cfg, ablations)?;
    if let Some(p) = &a.stats {
        write_stats_csv(create(p)?, &e.stats, &e.ablation)?;
    }
    if let Some(out) = &a.out {
        write_frames(out, &e.decoded.frames)?;
    }
    print_summary(&summarize(&e.stats, &cfg)?);
    if a.ablate {
        let wz = e.stats.iter().zip(&e.ablation).filter(|(s, _)| s.role == FrameRole::Wz);
        let (mut merged, mut plain, mut with, mut without, mut k) = (0u64, 0u64, 0.0, 0.0, 0usize);
        for (s, ab) in wz {
            merged += s.bits;
            plain += ab.bits_unmerged.unwrap_or(s.bits);
            with += s.post_psnr.or(s.recon_psnr).unwrap_or(f64::NAN);
            without += ab.post_psnr_no_mean.unwrap_or(f64::NAN);
            k += 1;
        }
        let (on, off) = if cfg.encoder.merge { (merged, plain) } else { (plain, merged) };
        println!("merge saving     {:.2}%", 100.0 * (off as f64 - on as f64) / off as f64);
        println!("mean assist gain {:.3} dB", (with - without) / k as f64);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let dec = a.decoder.config();
    dec.recon.validate().map_err(usage)?;
    let frames = load(&a.input)?;
    let mut lines =
        vec!["sampling,n,variant,kbps,avg_wz_bits,si_psnr,recon_psnr,post_psnr,cycles,power"
            .to_string()];
    for sampling in [Sampling::Half, Sampling::Full] {
        for n in 1..=4 {
            let variant = default_variant(sampling);
            let lrt = LrtParams { n, delta: a.delta, variant, sampling };
            let cfg = codec_config(EncoderConfig { lrt, ..Default::default() }, dec, false)?;
            let e = run_with_ablations(&frames, &cfg, Ablations::default())?;
            let s = summarize(&e.stats, &cfg)?;
            info!("{sampling:?} N={n}: {:.1} kbps, {:.2} dB", s.kbps, s.avg_post_psnr);
            lines.push(format!(
                "{},{n},{},{:.3},{:.1},{:.4},{:.4},{:.4},{:.0},{:.6e}",
                if sampling == Sampling::Half { "half" } else { "full" },
                if variant == Variant::Odd { "odd" } else { "even" },
                s.kbps,
                s.avg_wz_bits,
                s.avg_si_psnr,
                s.avg_recon_psnr,
                s.avg_post_psnr,
                s.avg_cycles,
                s.avg_power
            ));
        }
    }
    let text = lines.join("\n") + "\n";
    match &a.out {
        Some(p) => create(p)?.write_all(text.as_bytes())?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = thread_cap_from_env().map_err(usage)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(anyhow!(e)))?;
    }
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Cost(a) => cost(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
