//! Seeded Monte Carlo engine for BER/CER and visited-node statistics.
//!
//! Every trial draws its own random stream from `(seed, point, trial)`, and
//! trials run in fixed-size batches whose results are folded in trial order.
//! Worker count therefore never changes the output, early stopping included.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archmodel::estimate_throughput;
use crate::decoder::{DecodeResult, SphereDecoder};
use crate::error::{Error, Result};
use crate::fxp::{FxpConfig, FxpDecoder};
use crate::model::{
    snr_to_n0, transmit, ChannelRealization, Constellation, Mode, SymbolVector, SystemModel, Vec8, DIM,
};
use crate::preproc::{qr_givens, QrFactors};

/// Trials per scheduling batch; early stopping is checked between batches.
pub const BATCH_TRIALS: u64 = 1024;

/// Default clock for throughput estimates.
pub const DEFAULT_CLOCK_HZ: f64 = 250e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: Mode,
    pub constellation: Constellation,
    pub snr_points_db: Vec<f64>,
    /// Upper bound on codewords simulated per SNR point.
    pub trials_per_point: u64,
    /// Stop a point early once this many codeword errors were seen.
    pub target_errors: Option<u64>,
    /// Fixed-point datapath; `None` decodes in floating point.
    pub fxp: Option<FxpConfig>,
    pub seed: u64,
    /// Worker threads; 0 lets the thread pool pick.
    pub workers: usize,
    pub clock_hz: f64,
}

impl SweepConfig {
    pub fn new(mode: Mode, constellation: Constellation, snr_points_db: Vec<f64>, trials_per_point: u64, seed: u64) -> Self {
        Self {
            mode,
            constellation,
            snr_points_db,
            trials_per_point,
            target_errors: None,
            fxp: None,
            seed,
            workers: 0,
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials_per_point == 0 {
            return bad("trials per point must be at least 1".into());
        }
        if self.snr_points_db.is_empty() {
            return bad("at least one SNR point is required".into());
        }
        if self.snr_points_db.iter().any(|s| s.is_nan()) {
            return bad("SNR points must be numbers".into());
        }
        if self.snr_points_db.windows(2).any(|w| w[0] >= w[1]) {
            return bad("SNR points must be strictly increasing".into());
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return bad(format!("clock must be positive, got {}", self.clock_hz));
        }
        if self.target_errors == Some(0) {
            return bad("target errors must be at least 1".into());
        }
        if let Some(f) = self.fxp {
            f.format.with_guard_bits(f.metric_guard_bits)?;
        }
        Ok(())
    }
}

/// Results for one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub snr_db: f64,
    pub n0: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub codeword_errors: u64,
    pub ber: f64,
    pub cer: f64,
    pub mean_nodes: f64,
    pub p95_nodes: u64,
    pub max_nodes: u64,
    pub mean_cycles: f64,
    pub est_mbps: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub config: SweepConfig,
    pub points: Vec<PointStats>,
}

/// Paired floating/fixed-point results for one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub snr_db: f64,
    pub float: PointStats,
    pub fxp: PointStats,
    /// Trials whose decisions differ between the two decoders.
    pub divergent: u64,
    pub divergence_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareStats {
    pub config: SweepConfig,
    pub points: Vec<ComparePoint>,
}

/// Seed of one trial's random stream.
pub fn trial_seed(seed: u64, point: usize, trial: u64) -> u64 {
    let mut x = splitmix64(seed);
    x = splitmix64(x ^ point as u64);
    splitmix64(x ^ trial)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One simulated codeword ready for decoding.
#[derive(Debug, Clone)]
pub struct Trial {
    pub symbols: SymbolVector,
    pub y: Vec8,
    pub factors: QrFactors,
}

/// Draws symbols, a block-fading channel and noise for one trial.
pub fn draw_trial(mode: Mode, constellation: &Constellation, n0: f64, seed: u64) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = SymbolVector::random(constellation, &mut rng);
    let model = SystemModel::new(ChannelRealization::random(mode, &mut rng), n0);
    let y = transmit(&symbols, &model, &mut rng);
    Trial {
        symbols,
        y,
        factors: qr_givens(&model.m),
    }
}

/// Gray-mapped bit errors between transmitted and decided symbols.
pub fn bit_errors(constellation: &Constellation, sent: &SymbolVector, decided: &SymbolVector) -> u32 {
    sent.as_array()
        .iter()
        .zip(decided.as_array())
        .map(|(&a, &b)| (constellation.gray_label(a) ^ constellation.gray_label(b)).count_ones())
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    bit_errors: u32,
    codeword_error: bool,
    nodes: u64,
    cycles: u64,
}

impl Outcome {
    fn new(c: &Constellation, sent: &SymbolVector, res: &DecodeResult) -> Self {
        let bit_errors = bit_errors(c, sent, &res.s_hat);
        Self {
            bit_errors,
            codeword_error: res.s_hat != *sent,
            nodes: res.visited_nodes,
            cycles: res.cycles(),
        }
    }
}

#[derive(Debug, Default, Clone)]
struct Tally {
    trials: u64,
    bit_errors: u64,
    codeword_errors: u64,
    nodes: u64,
    cycles: u64,
    histogram: BTreeMap<u64, u64>,
}

impl Tally {
    fn add(&mut self, o: &Outcome) {
        self.trials += 1;
        self.bit_errors += o.bit_errors as u64;
        self.codeword_errors += o.codeword_error as u64;
        self.nodes += o.nodes;
        self.cycles += o.cycles;
        *self.histogram.entry(o.nodes).or_default() += 1;
    }

    /// Nearest-rank percentile of the visited-node counts.
    fn percentile(&self, p: f64) -> u64 {
        let rank = ((p * self.trials as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (&nodes, &count) in &self.histogram {
            seen += count;
            if seen >= rank {
                return nodes;
            }
        }
        0
    }

    fn finish(&self, cfg: &SweepConfig, snr_db: f64, n0: f64, wall: f64) -> Result<PointStats> {
        let trials = self.trials as f64;
        let bits = trials * (DIM as u32 * cfg.constellation.bits_per_dim()) as f64;
        let mean_cycles = self.cycles as f64 / trials;
        Ok(PointStats {
            snr_db,
            n0,
            trials: self.trials,
            bit_errors: self.bit_errors,
            codeword_errors: self.codeword_errors,
            ber: self.bit_errors as f64 / bits,
            cer: self.codeword_errors as f64 / trials,
            mean_nodes: self.nodes as f64 / trials,
            p95_nodes: self.percentile(0.95),
            max_nodes: self.histogram.keys().next_back().copied().unwrap_or(0),
            mean_cycles,
            est_mbps: estimate_throughput(mean_cycles, cfg.clock_hz, &cfg.constellation, cfg.mode)?,
            wall_time_s: wall,
        })
    }
}

struct Worker {
    float: SphereDecoder,
    fxp: Option<FxpDecoder>,
}

impl Worker {
    fn new(cfg: &SweepConfig) -> Self {
        Self {
            float: SphereDecoder::new(cfg.constellation),
            fxp: cfg
                .fxp
                .map(|f| FxpDecoder::new(cfg.constellation, f).expect("validated configuration")),
        }
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Runs `per_trial` over every trial of one point in deterministic batches.
/// `stop` sees the trials so far and decides whether to end the point early.
fn run_point<T: Send>(
    cfg: &SweepConfig,
    pool: &rayon::ThreadPool,
    point: usize,
    per_trial: impl Fn(&mut Worker, Trial) -> T + Sync,
    mut fold: impl FnMut(T) -> u64,
) {
    let n0 = snr_to_n0(cfg.snr_points_db[point], &cfg.constellation, cfg.mode);
    let mut done = 0;
    let mut errors = 0;
    while done < cfg.trials_per_point {
        let batch = BATCH_TRIALS.min(cfg.trials_per_point - done);
        let results: Vec<T> = pool.install(|| {
            (done..done + batch)
                .into_par_iter()
                .map_init(
                    || Worker::new(cfg),
                    |w, t| {
                        let trial = draw_trial(cfg.mode, &cfg.constellation, n0, trial_seed(cfg.seed, point, t));
                        per_trial(w, trial)
                    },
                )
                .collect()
        });
        for r in results {
            errors += fold(r);
        }
        done += batch;
        if cfg.target_errors.is_some_and(|target| errors >= target) {
            break;
        }
    }
}

/// Simulates every SNR point of `cfg` with the configured decoder.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepStats> {
    cfg.validate()?;
    let pool = thread_pool(cfg.workers)?;
    let c = cfg.constellation;
    let mut points = Vec::with_capacity(cfg.snr_points_db.len());
    for (pi, &snr_db) in cfg.snr_points_db.iter().enumerate() {
        let start = Instant::now();
        let mut tally = Tally::default();
        run_point(
            cfg,
            &pool,
            pi,
            |w, t| {
                let res = match w.fxp.as_mut() {
                    Some(fxp) => fxp.decode(&t.y, &t.factors),
                    None => w.float.decode(&t.y, &t.factors),
                };
                Outcome::new(&c, &t.symbols, &res)
            },
            |o| {
                tally.add(&o);
                o.codeword_error as u64
            },
        );
        let n0 = snr_to_n0(snr_db, &c, cfg.mode);
        points.push(tally.finish(cfg, snr_db, n0, start.elapsed().as_secs_f64())?);
    }
    Ok(SweepStats {
        config: cfg.clone(),
        points,
    })
}

/// Decodes the same realizations with the floating and fixed-point decoders.
/// Early stopping follows the floating-point codeword errors.
pub fn compare_fxp_float(cfg: &SweepConfig) -> Result<CompareStats> {
    cfg.validate()?;
    if cfg.fxp.is_none() {
        return Err(Error::InvalidConfig("a fixed-point format is required".into()));
    }
    let pool = thread_pool(cfg.workers)?;
    let c = cfg.constellation;
    let mut points = Vec::with_capacity(cfg.snr_points_db.len());
    for (pi, &snr_db) in cfg.snr_points_db.iter().enumerate() {
        let start = Instant::now();
        let (mut float, mut fixed, mut divergent) = (Tally::default(), Tally::default(), 0u64);
        run_point(
            cfg,
            &pool,
            pi,
            |w, t| {
                let a = w.float.decode(&t.y, &t.factors);
                let b = w.fxp.as_mut().expect("fixed-point decoder").decode(&t.y, &t.factors);
                let differ = a.s_hat != b.s_hat;
                (Outcome::new(&c, &t.symbols, &a), Outcome::new(&c, &t.symbols, &b), differ)
            },
            |(a, b, differ)| {
                float.add(&a);
                fixed.add(&b);
                divergent += differ as u64;
                a.codeword_error as u64
            },
        );
        let wall = start.elapsed().as_secs_f64();
        let n0 = snr_to_n0(snr_db, &c, cfg.mode);
        let trials = float.trials;
        points.push(ComparePoint {
            snr_db,
            float: float.finish(cfg, snr_db, n0, wall)?,
            fxp: fixed.finish(cfg, snr_db, n0, wall)?,
            divergent,
            divergence_fraction: divergent as f64 / trials as f64,
        });
    }
    Ok(CompareStats {
        config: cfg.clone(),
        points,
    })
}

#[derive(Serialize)]
struct CsvRow {
    snr_db: f64,
    trials: u64,
    bit_errors: u64,
    ber: f64,
    cer: f64,
    mean_nodes: f64,
    p95_nodes: u64,
    mean_cycles: f64,
    est_mbps: f64,
}

#[derive(Serialize)]
struct CompareRow {
    snr_db: f64,
    trials: u64,
    ber_float: f64,
    ber_fxp: f64,
    mean_nodes_float: f64,
    mean_nodes_fxp: f64,
    divergence: f64,
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// One row per SNR point, with a header line.
pub fn write_csv<W: Write>(stats: &SweepStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &stats.points {
        w.serialize(CsvRow {
            snr_db: p.snr_db,
            trials: p.trials,
            bit_errors: p.bit_errors,
            ber: p.ber,
            cer: p.cer,
            mean_nodes: p.mean_nodes,
            p95_nodes: p.p95_nodes,
            mean_cycles: p.mean_cycles,
            est_mbps: p.est_mbps,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

pub fn write_compare_csv<W: Write>(stats: &CompareStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &stats.points {
        w.serialize(CompareRow {
            snr_db: p.snr_db,
            trials: p.float.trials,
            ber_float: p.float.ber,
            ber_fxp: p.fxp.ber,
            mean_nodes_float: p.float.mean_nodes,
            mean_nodes_fxp: p.fxp.mean_nodes,
            divergence: p.divergence_fraction,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

pub fn csv_string(stats: &SweepStats) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(stats, &mut buf)?;
    String::from_utf8(buf).map_err(csv_error)
}

/// Pretty JSON summary with the full configuration echoed.
pub fn json_summary<T: Serialize>(stats: &T) -> Result<String> {
    serde_json::to_string_pretty(stats).map_err(csv_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::decode;

    fn cfg(q: u32, snr: Vec<f64>, trials: u64) -> SweepConfig {
        SweepConfig::new(Mode::Golden2x2, Constellation::new(q).unwrap(), snr, trials, 7)
    }

    #[test]
    fn noiseless_sweep_has_no_errors() {
        let stats = run_sweep(&cfg(4, vec![f64::INFINITY], 200)).unwrap();
        let p = &stats.points[0];
        assert_eq!((p.n0, p.bit_errors, p.codeword_errors), (0.0, 0, 0));
        assert_eq!((p.ber, p.cer), (0.0, 0.0));
    }

    #[test]
    fn same_seed_same_stats() {
        let c = cfg(4, vec![5.0, 10.0], 300);
        let a = run_sweep(&c).unwrap();
        let b = run_sweep(&c).unwrap();
        assert_eq!(csv_string(&a).unwrap(), csv_string(&b).unwrap());
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!((x.bit_errors, x.mean_nodes, x.p95_nodes), (y.bit_errors, y.mean_nodes, y.p95_nodes));
        }
    }

    #[test]
    fn micro_run_matches_hand_tally() {
        let c = cfg(4, vec![6.0], 10);
        let stats = run_sweep(&c).unwrap();
        let p = &stats.points[0];
        let n0 = snr_to_n0(6.0, &c.constellation, c.mode);
        let (mut bits, mut words, mut nodes) = (0u64, 0u64, 0u64);
        let mut counts = Vec::new();
        for t in 0..10 {
            let trial = draw_trial(c.mode, &c.constellation, n0, trial_seed(c.seed, 0, t));
            let res = decode(&trial.y, &trial.factors, &c.constellation);
            bits += bit_errors(&c.constellation, &trial.symbols, &res.s_hat) as u64;
            words += (res.s_hat != trial.symbols) as u64;
            nodes += res.visited_nodes;
            counts.push(res.visited_nodes);
        }
        counts.sort();
        assert_eq!(p.trials, 10);
        assert_eq!(p.bit_errors, bits);
        assert_eq!(p.codeword_errors, words);
        assert_eq!(p.ber, bits as f64 / 160.0);
        assert_eq!(p.cer, words as f64 / 10.0);
        assert_eq!(p.mean_nodes, nodes as f64 / 10.0);
        assert_eq!(p.p95_nodes, counts[9]);
        assert!(p.cer >= p.ber);
    }

    #[test]
    fn early_stop_rule() {
        let mut c = cfg(4, vec![0.0, 30.0], 5000);
        c.target_errors = Some(20);
        let stats = run_sweep(&c).unwrap();
        for p in &stats.points {
            assert!(p.trials <= c.trials_per_point);
            assert!(p.codeword_errors >= 20 || p.trials == c.trials_per_point);
        }
        // Low SNR hits the target within the first batch.
        assert_eq!(stats.points[0].trials, BATCH_TRIALS);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(run_sweep(&cfg(4, vec![], 10)).is_err());
        assert!(run_sweep(&cfg(4, vec![10.0, 5.0], 10)).is_err());
        assert!(run_sweep(&cfg(4, vec![10.0, 10.0], 10)).is_err());
        assert!(run_sweep(&cfg(4, vec![10.0], 0)).is_err());
        assert!(compare_fxp_float(&cfg(4, vec![10.0], 10)).is_err());
        let mut c = cfg(4, vec![10.0], 10);
        c.clock_hz = 0.0;
        assert!(run_sweep(&c).is_err());
    }

    #[test]
    fn gray_bit_errors() {
        let c = Constellation::new(4).unwrap();
        let a = SymbolVector::new([1; DIM], &c).unwrap();
        let mut b = [1; DIM];
        b[0] = 3;
        b[5] = -3;
        let b = SymbolVector::new(b, &c).unwrap();
        // 1 -> 3 is one Gray step, 1 -> -3 is two.
        assert_eq!(bit_errors(&c, &a, &b), 3);
    }

    #[test]
    fn csv_header_and_rows() {
        let stats = run_sweep(&cfg(2, vec![10.0, 20.0], 50)).unwrap();
        let text = csv_string(&stats).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "snr_db,trials,bit_errors,ber,cer,mean_nodes,p95_nodes,mean_cycles,est_mbps"
        );
        assert_eq!(lines.count(), 2);
        let json = json_summary(&stats).unwrap();
        assert!(json.contains("\"trials_per_point\": 50"));
    }
}
