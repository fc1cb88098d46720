use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand};
use golden_sd::archmodel::dichotomic_divide;
use golden_sd::decoder::decode;
use golden_sd::fxp::{decode_fxp, FxpConfig, FxpFormat};
use golden_sd::harness::{
    compare_fxp_float, json_summary, run_sweep, write_compare_csv, write_csv, SweepConfig, DEFAULT_CLOCK_HZ,
};
use golden_sd::model::{
    snr_to_n0, transmit_seeded, ChannelRealization, Constellation, Mat8, Mode, SymbolVector, SystemModel, Vec8, DIM,
};
use golden_sd::preproc::{array_latency, qr_givens, ArrayKind, ArrayOrganization};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

/// Sphere decoder simulator for the Golden code and uncoded 4x4 MIMO.
#[derive(Debug, Parser)]
#[command(name = "golden-sd", version)]
struct Cli {
    /// Worker threads for Monte Carlo runs (0 = one per core)
    #[arg(long, global = true, env = "GOLDEN_SD_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode one symbol vector, pass it through a channel and print JSON
    Encode(EncodeArgs),
    /// Decode a JSON record produced by `encode` (read from stdin or --input)
    Decode(DecodeArgs),
    /// BER/CER and visited-node sweep, CSV on stdout
    Sweep(SweepArgs),
    /// Paired floating/fixed-point sweep on identical realizations
    CompareFxp(SweepArgs),
    /// Step-by-step trace of the dichotomic divider
    DividerTrace(DividerArgs),
    /// PE count, latency and throughput of a systolic QR array
    QrLatency(LatencyArgs),
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// QAM size: 4, 16 or 64
    #[arg(long = "mod", value_parser = parse_qam, default_value = "16")]
    modulation: Constellation,
    /// golden or uncoded
    #[arg(long, value_parser = parse_mode, default_value = "golden")]
    mode: Mode,
    /// Eight comma-separated PAM coordinates; random when omitted
    #[arg(long, allow_hyphen_values = true)]
    symbols: Option<String>,
    /// SNR in dB; `inf` transmits without noise
    #[arg(long, value_parser = parse_snr_value, default_value = "inf")]
    snr: f64,
    /// Use the identity channel instead of a random one
    #[arg(long)]
    identity: bool,
    /// Random seed; generated and echoed when omitted
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// JSON record to decode (default: stdin)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fixed-point datapath format Qm.f; floating point when omitted
    #[arg(long, value_parser = parse_fmt)]
    fmt: Option<FxpFormat>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// QAM size: 4, 16 or 64
    #[arg(long = "mod", value_parser = parse_qam, default_value = "16")]
    modulation: Constellation,
    /// golden or uncoded
    #[arg(long, value_parser = parse_mode, default_value = "golden")]
    mode: Mode,
    /// SNR points in dB: start:step:stop, a comma list, or one value
    #[arg(long, value_parser = parse_snr_list, default_value = "0:4:20")]
    snr: SnrList,
    /// Maximum codewords per SNR point
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Stop an SNR point after this many codeword errors
    #[arg(long)]
    target_errors: Option<u64>,
    /// Fixed-point datapath format Qm.f (required by compare-fxp)
    #[arg(long, value_parser = parse_fmt)]
    fmt: Option<FxpFormat>,
    /// Extra integer bits on the partial metric
    #[arg(long, default_value_t = 0)]
    guard_bits: u32,
    /// Clock frequency in MHz for the throughput estimate
    #[arg(long, default_value_t = DEFAULT_CLOCK_HZ / 1e6)]
    clock_mhz: f64,
    /// Random seed; generated and echoed when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON summary with the configuration echoed
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DividerArgs {
    /// PAM order Q: 2, 4 or 8
    #[arg(long, default_value_t = 4)]
    q: u32,
    /// Numerator
    #[arg(long, allow_hyphen_values = true)]
    psi: f64,
    /// Positive divisor (diagonal entry of R)
    #[arg(long, allow_hyphen_values = true)]
    r: f64,
    /// Operand format Qm.f
    #[arg(long, value_parser = parse_fmt, default_value = "Q5.7")]
    fmt: FxpFormat,
}

#[derive(Debug, Args)]
struct LatencyArgs {
    /// triangular, linear or single; all three when omitted
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ArrayKind>,
    /// Matrix dimension
    #[arg(long, default_value_t = 8)]
    n: u64,
}

#[derive(Debug, Clone)]
struct SnrList(Vec<f64>);

fn parse_qam(s: &str) -> Result<Constellation, String> {
    let size: u32 = s.parse().map_err(|_| format!("'{s}' is not a QAM size (4, 16 or 64)"))?;
    Constellation::from_qam(size).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: golden_sd::Error| e.to_string())
}

fn parse_fmt(s: &str) -> Result<FxpFormat, String> {
    s.parse().map_err(|e: golden_sd::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<ArrayKind, String> {
    s.parse().map_err(|e: golden_sd::Error| e.to_string())
}

fn parse_snr_value(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("'{s}' is not an SNR in dB")),
    }
}

fn parse_snr_list(s: &str) -> Result<SnrList, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(parse_snr_value).collect::<Result<_, _>>().map(SnrList),
        [start, step, stop] => {
            let (start, step, stop) = (parse_snr_value(start)?, parse_snr_value(step)?, parse_snr_value(stop)?);
            if !(start.is_finite() && step.is_finite() && stop.is_finite()) || step <= 0.0 || stop < start {
                return Err(format!("'{s}' is not an increasing start:step:stop range"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 10_000 {
                return Err(format!("'{s}' has too many points"));
            }
            Ok(SnrList((0..count).map(|i| start + i as f64 * step).collect()))
        }
        _ => Err(format!("'{s}' is not start:step:stop")),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn echo<T: Serialize>(command: &str, config: &T) -> anyhow::Result<()> {
    eprintln!("{command}: {}", serde_json::to_string(config)?);
    Ok(())
}

/// Record exchanged between `encode` and `decode`.
#[derive(Debug, Serialize, Deserialize)]
struct Transmission {
    mode: Mode,
    qam: u32,
    symbols: Option<Vec<i32>>,
    snr_db: Option<f64>,
    n0: f64,
    /// Real 8x8 channel, row-major.
    h_real: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn encode_cmd(a: EncodeArgs) -> anyhow::Result<()> {
    let seed = resolve_seed(a.seed);
    let c = a.modulation;
    let n0 = snr_to_n0(a.snr, &c, a.mode);
    echo(
        "encode",
        &serde_json::json!({
            "mode": a.mode, "qam": c.qam_size(), "snr_db": finite(a.snr), "n0": n0,
            "identity": a.identity, "seed": seed,
        }),
    )?;
    let mut rng = seeded_rng(seed);
    let symbols = match &a.symbols {
        Some(text) => {
            let values: Vec<i32> = text
                .split(',')
                .map(|t| t.trim().parse::<i32>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("symbols '{text}' are not integers"))?;
            let values: [i32; DIM] = values
                .try_into()
                .map_err(|v: Vec<i32>| anyhow::anyhow!("expected {DIM} symbols, got {}", v.len()))?;
            SymbolVector::new(values, &c)?
        }
        None => SymbolVector::random(&c, &mut rng),
    };
    let channel = if a.identity {
        ChannelRealization::identity(a.mode)
    } else {
        ChannelRealization::random(a.mode, &mut rng)
    };
    let model = SystemModel::new(channel, n0);
    let y = transmit_seeded(&symbols, &model, rand::Rng::random(&mut rng));
    let record = Transmission {
        mode: a.mode,
        qam: c.qam_size(),
        symbols: Some(symbols.as_array().to_vec()),
        snr_db: finite(a.snr),
        n0,
        h_real: model.channel.real().row_iter().map(|r| r.iter().copied().collect()).collect(),
        y: y.iter().copied().collect(),
    };
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn seeded_rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

fn decode_cmd(a: DecodeArgs) -> anyhow::Result<()> {
    let mut text = String::new();
    match &a.input {
        Some(path) => {
            File::open(path)
                .with_context(|| format!("cannot open {}", path.display()))?
                .read_to_string(&mut text)?;
        }
        None => {
            io::stdin().read_to_string(&mut text)?;
        }
    }
    let t: Transmission = serde_json::from_str(text.trim()).context("input is not an encode record")?;
    let c = Constellation::from_qam(t.qam)?;
    ensure!(
        t.h_real.len() == DIM && t.h_real.iter().all(|r| r.len() == DIM),
        "h_real must be {DIM}x{DIM}"
    );
    ensure!(t.y.len() == DIM, "y must have {DIM} entries");
    echo(
        "decode",
        &serde_json::json!({ "mode": t.mode, "qam": t.qam, "fmt": a.fmt }),
    )?;
    let h = Mat8::from_fn(|i, j| t.h_real[i][j]);
    let model = SystemModel::new(ChannelRealization::from_real(t.mode, h), t.n0);
    let factors = qr_givens(&model.m);
    let y = Vec8::from_column_slice(&t.y);
    let res = match a.fmt {
        Some(f) => decode_fxp(&y, &factors, &c, f)?,
        None => decode(&y, &factors, &c),
    };
    let mut out = serde_json::json!({
        "s_hat": res.s_hat.as_array(),
        "metric": res.metric,
        "visited_nodes": res.visited_nodes,
        "radius_updates": res.radius_updates,
        "cycles": res.cycles(),
    });
    if let Some(sent) = &t.symbols {
        out["match"] = serde_json::Value::Bool(sent.as_slice() == res.s_hat.as_array());
    }
    println!("{out}");
    Ok(())
}

fn sweep_config(a: &SweepArgs, workers: usize) -> anyhow::Result<SweepConfig> {
    ensure!(a.clock_mhz > 0.0, "clock must be positive");
    let mut cfg = SweepConfig::new(a.mode, a.modulation, a.snr.0.clone(), a.trials, resolve_seed(a.seed));
    cfg.target_errors = a.target_errors;
    cfg.fxp = a.fmt.map(|format| FxpConfig {
        format,
        metric_guard_bits: a.guard_bits,
    });
    cfg.workers = workers;
    cfg.clock_hz = a.clock_mhz * 1e6;
    cfg.validate()?;
    Ok(cfg)
}

fn csv_sink(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs, workers: usize) -> anyhow::Result<()> {
    let cfg = sweep_config(&a, workers)?;
    echo("sweep", &cfg)?;
    let stats = run_sweep(&cfg)?;
    write_csv(&stats, csv_sink(&a.out)?)?;
    write_json(&a.json, &json_summary(&stats)?)
}

fn compare_cmd(a: SweepArgs, workers: usize) -> anyhow::Result<()> {
    if a.fmt.is_none() {
        bail!("compare-fxp needs --fmt");
    }
    let cfg = sweep_config(&a, workers)?;
    echo("compare-fxp", &cfg)?;
    let stats = compare_fxp_float(&cfg)?;
    write_compare_csv(&stats, csv_sink(&a.out)?)?;
    write_json(&a.json, &json_summary(&stats)?)
}

fn divider_cmd(a: DividerArgs) -> anyhow::Result<()> {
    echo(
        "divider-trace",
        &serde_json::json!({ "q": a.q, "psi": a.psi, "r": a.r, "fmt": a.fmt }),
    )?;
    let (psi, sat_psi) = a.fmt.quantize_flagged(a.psi);
    let (r, sat_r) = a.fmt.quantize_flagged(a.r);
    if sat_psi || sat_r {
        eprintln!("warning: operand saturated in {}", a.fmt);
    }
    let trace = dichotomic_divide(psi, r, a.q)?;
    println!("{trace}");
    Ok(())
}

fn latency_cmd(a: LatencyArgs) -> anyhow::Result<()> {
    echo(
        "qr-latency",
        &serde_json::json!({ "kind": a.kind.map(|k| k.to_string()), "n": a.n }),
    )?;
    let kinds = match a.kind {
        Some(k) => vec![k],
        None => vec![ArrayKind::Triangular, ArrayKind::Linear, ArrayKind::SingleElement],
    };
    for kind in kinds {
        let cost = array_latency(&ArrayOrganization::new(kind, a.n)?);
        if a.kind.is_some() {
            println!("{cost}");
        } else {
            println!("{:<14} {cost}", kind.to_string());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Sweep(a) => sweep_cmd(a, cli.workers),
        Command::CompareFxp(a) => compare_cmd(a, cli.workers),
        Command::DividerTrace(a) => divider_cmd(a),
        Command::QrLatency(a) => latency_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
