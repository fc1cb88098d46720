//! Constellations, Golden-code encoding, complex/real vectorization, channel
//! generation and the real-valued transmit model `y = H G s + z`.
//!
//! All symbols live on the canonical unit-spacing grid: a `Q`-PAM coordinate
//! is one of the odd integers `-(Q-1), ..., -1, 1, ..., Q-1`, so adjacent
//! points are `SPACING = 2` apart.
//!
//! Vectorization is column-major over the transmitted block (channel use 1,
//! then channel use 2), with each complex entry expanded into an adjacent
//! `(Re, Im)` pair. For the Golden code that gives
//! `[Re x11, Im x11, Re x21, Im x21, Re x12, Im x12, Re x22, Im x22]`, and the
//! real channel becomes block-diagonal with two identical 4x4 blocks.

use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real lattice dimension: four complex symbols per decoded vector.
pub const DIM: usize = 8;

/// Distance between adjacent PAM points on the canonical grid.
pub const SPACING: i32 = 2;

/// SNR values at or above this many dB are treated as noiseless.
pub const SNR_CAP_DB: f64 = 300.0;

pub type Mat8 = SMatrix<f64, DIM, DIM>;
pub type Vec8 = SVector<f64, DIM>;

/// A `Q`-PAM alphabet; the matching QAM constellation is its square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Constellation {
    q: u32,
}

impl TryFrom<u32> for Constellation {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        Self::new(q)
    }
}

impl From<Constellation> for u32 {
    fn from(c: Constellation) -> u32 {
        c.q
    }
}

impl Constellation {
    pub fn new(q: u32) -> Result<Self> {
        match q {
            2 | 4 | 8 => Ok(Self { q }),
            _ => Err(Error::UnsupportedOrder(q)),
        }
    }

    /// Builds the PAM alphabet for a square QAM of `size` points (4, 16 or 64).
    pub fn from_qam(size: u32) -> Result<Self> {
        match size {
            4 => Self::new(2),
            16 => Self::new(4),
            64 => Self::new(8),
            _ => Err(Error::UnsupportedQam(size)),
        }
    }

    /// PAM order `Q`.
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn qam_size(&self) -> u32 {
        self.q * self.q
    }

    pub fn spacing(&self) -> f64 {
        SPACING as f64
    }

    /// Largest alphabet point, `Q - 1`.
    pub fn max_point(&self) -> i32 {
        self.q as i32 - 1
    }

    /// Alphabet points in increasing order.
    pub fn points(&self) -> impl Iterator<Item = i32> + Clone {
        let max = self.max_point();
        (-max..=max).step_by(SPACING as usize)
    }

    pub fn contains(&self, s: i32) -> bool {
        s.rem_euclid(2) == 1 && s.abs() <= self.max_point()
    }

    pub fn bits_per_dim(&self) -> u32 {
        self.q.trailing_zeros()
    }

    /// Position of `s` in the increasing point order.
    pub fn index_of(&self, s: i32) -> usize {
        debug_assert!(self.contains(s));
        ((s + self.max_point()) / SPACING) as usize
    }

    pub fn point(&self, index: usize) -> i32 {
        debug_assert!(index < self.q as usize);
        index as i32 * SPACING - self.max_point()
    }

    /// Binary-reflected Gray label of a point along its PAM axis.
    pub fn gray_label(&self, s: i32) -> u32 {
        let idx = self.index_of(s) as u32;
        idx ^ (idx >> 1)
    }

    /// Mean of `s^2` over the uniformly used alphabet, `(Q^2 - 1) / 3`.
    pub fn mean_energy(&self) -> f64 {
        let q = self.q as f64;
        (q * q - 1.0) / 3.0
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> i32 {
        self.point(rng.random_range(0..self.q as usize))
    }
}

/// Transmission scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Golden code on a 2x2 channel over two channel uses.
    #[serde(rename = "golden_2x2")]
    Golden2x2,
    /// Four independent QAM streams on a 4x4 channel, one channel use.
    #[serde(rename = "uncoded_4x4")]
    Uncoded4x4,
}

impl Mode {
    /// Number of receive antennas.
    pub fn receive_antennas(&self) -> usize {
        match self {
            Mode::Golden2x2 => 2,
            Mode::Uncoded4x4 => 4,
        }
    }

    /// Real code generator: the Golden generator, or the identity.
    pub fn generator(&self) -> Mat8 {
        match self {
            Mode::Golden2x2 => *golden_generator(),
            Mode::Uncoded4x4 => Mat8::identity(),
        }
    }

    /// Encodes an arbitrary real coordinate vector.
    pub fn encode_real(&self, v: &Vec8) -> Codeword {
        match self {
            Mode::Golden2x2 => Codeword::Golden(golden_codeword(v, &GoldenConstants::new())),
            Mode::Uncoded4x4 => Codeword::Uncoded(nalgebra::Vector4::from_fn(|k, _| {
                Complex64::new(v[2 * k], v[2 * k + 1])
            })),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Golden2x2 => f.write_str("golden"),
            Mode::Uncoded4x4 => f.write_str("uncoded"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "golden" | "golden_2x2" | "golden2x2" => Ok(Mode::Golden2x2),
            "uncoded" | "uncoded_4x4" | "uncoded4x4" => Ok(Mode::Uncoded4x4),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// Algebraic constants of the Golden code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenConstants {
    pub theta: f64,
    pub sigma_theta: f64,
    pub alpha: Complex64,
    pub sigma_alpha: Complex64,
    pub scale: f64,
}

impl GoldenConstants {
    pub fn new() -> Self {
        let sqrt5 = 5f64.sqrt();
        let theta = (1.0 + sqrt5) / 2.0;
        let sigma_theta = 1.0 - theta;
        Self {
            theta,
            sigma_theta,
            alpha: Complex64::new(1.0, sigma_theta),
            sigma_alpha: Complex64::new(1.0, theta),
            scale: 1.0 / sqrt5,
        }
    }
}

impl Default for GoldenConstants {
    fn default() -> Self {
        Self::new()
    }
}

/// Eight PAM coordinates `(Re a, Im a, Re b, Im b, Re c, Im c, Re d, Im d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolVector([i32; DIM]);

impl SymbolVector {
    pub fn new(values: [i32; DIM], constellation: &Constellation) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !constellation.contains(value) {
                return Err(Error::InvalidSymbol {
                    index,
                    value,
                    q: constellation.q(),
                });
            }
        }
        Ok(Self(values))
    }

    pub(crate) fn from_raw(values: [i32; DIM]) -> Self {
        Self(values)
    }

    pub fn random<R: Rng + ?Sized>(constellation: &Constellation, rng: &mut R) -> Self {
        Self(std::array::from_fn(|_| constellation.random_point(rng)))
    }

    pub fn as_array(&self) -> &[i32; DIM] {
        &self.0
    }

    pub fn to_real(&self) -> Vec8 {
        Vec8::from_fn(|i, _| self.0[i] as f64)
    }

    /// Complex symbols `a, b, c, d`.
    pub fn complex_symbols(&self) -> [Complex64; 4] {
        std::array::from_fn(|k| Complex64::new(self.0[2 * k] as f64, self.0[2 * k + 1] as f64))
    }
}

/// A transmitted block.
#[derive(Debug, Clone, PartialEq)]
pub enum Codeword {
    /// 2x2 Golden codeword; columns are channel uses.
    Golden(Matrix2<Complex64>),
    /// One complex symbol per transmit antenna.
    Uncoded(nalgebra::Vector4<Complex64>),
}

impl Codeword {
    pub fn mode(&self) -> Mode {
        match self {
            Codeword::Golden(_) => Mode::Golden2x2,
            Codeword::Uncoded(_) => Mode::Uncoded4x4,
        }
    }
}

/// Golden codeword for real coordinates `v`, including the `1/sqrt(5)` factor.
pub fn golden_codeword(v: &Vec8, k: &GoldenConstants) -> Matrix2<Complex64> {
    let a = Complex64::new(v[0], v[1]);
    let b = Complex64::new(v[2], v[3]);
    let c = Complex64::new(v[4], v[5]);
    let d = Complex64::new(v[6], v[7]);
    let i = Complex64::i();
    Matrix2::new(
        k.alpha * (a + b * k.theta),
        k.alpha * (c + d * k.theta),
        i * k.sigma_alpha * (c + d * k.sigma_theta),
        k.sigma_alpha * (a + b * k.sigma_theta),
    ) * Complex64::from(k.scale)
}

/// Golden-code encoder for alphabet symbols.
pub fn encode(s: &SymbolVector, constants: &GoldenConstants) -> Codeword {
    Codeword::Golden(golden_codeword(&s.to_real(), constants))
}

pub fn vectorize(x: &Codeword) -> Vec8 {
    let entries: [Complex64; 4] = match x {
        Codeword::Golden(m) => [m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)]],
        Codeword::Uncoded(v) => [v[0], v[1], v[2], v[3]],
    };
    Vec8::from_fn(|i, _| {
        let z = entries[i / 2];
        if i % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

pub fn devectorize(v: &Vec8, mode: Mode) -> Codeword {
    let z = |k: usize| Complex64::new(v[2 * k], v[2 * k + 1]);
    match mode {
        Mode::Golden2x2 => Codeword::Golden(Matrix2::new(z(0), z(2), z(1), z(3))),
        Mode::Uncoded4x4 => Codeword::Uncoded(nalgebra::Vector4::new(z(0), z(1), z(2), z(3))),
    }
}

/// Builds the real Golden generator column by column from encoded unit vectors.
pub fn build_golden_generator() -> Mat8 {
    let k = GoldenConstants::new();
    let mut g = Mat8::zeros();
    for col in 0..DIM {
        let mut e = Vec8::zeros();
        e[col] = 1.0;
        let x = vectorize(&Codeword::Golden(golden_codeword(&e, &k)));
        g.set_column(col, &x);
    }
    g
}

fn golden_generator() -> &'static Mat8 {
    static G: OnceLock<Mat8> = OnceLock::new();
    G.get_or_init(build_golden_generator)
}

/// Real 2x2 block `[[Re h, -Im h], [Im h, Re h]]` of a complex gain.
fn real_block(h: Complex64) -> Matrix2<f64> {
    Matrix2::new(h.re, -h.im, h.im, h.re)
}

/// Real expansion of a square complex matrix acting on `(Re, Im)` pairs.
fn expand<const N: usize>(h: &[[Complex64; N]; N], out: &mut Mat8, offset: usize) {
    for (r, row) in h.iter().enumerate() {
        for (c, &z) in row.iter().enumerate() {
            out.fixed_view_mut::<2, 2>(offset + 2 * r, offset + 2 * c)
                .copy_from(&real_block(z));
        }
    }
}

/// One block-fading channel draw and its real expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    mode: Mode,
    complex: Vec<Complex64>,
    real: Mat8,
}

impl ChannelRealization {
    pub fn golden(h: Matrix2<Complex64>) -> Self {
        let rows = [[h[(0, 0)], h[(0, 1)]], [h[(1, 0)], h[(1, 1)]]];
        let mut real = Mat8::zeros();
        // Same 2x2 channel on both channel uses.
        expand(&rows, &mut real, 0);
        expand(&rows, &mut real, 4);
        Self {
            mode: Mode::Golden2x2,
            complex: rows.iter().flatten().copied().collect(),
            real,
        }
    }

    pub fn uncoded(h: Matrix4<Complex64>) -> Self {
        let rows: [[Complex64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| h[(r, c)]));
        let mut real = Mat8::zeros();
        expand(&rows, &mut real, 0);
        Self {
            mode: Mode::Uncoded4x4,
            complex: rows.iter().flatten().copied().collect(),
            real,
        }
    }

    /// Draws i.i.d. `CN(0, 1)` gains.
    pub fn random<R: Rng + ?Sized>(mode: Mode, rng: &mut R) -> Self {
        let mut gain = || {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        };
        match mode {
            Mode::Golden2x2 => Self::golden(Matrix2::from_fn(|_, _| gain())),
            Mode::Uncoded4x4 => Self::uncoded(Matrix4::from_fn(|_, _| gain())),
        }
    }

    /// Identity channel, handy for noiseless checks.
    pub fn identity(mode: Mode) -> Self {
        match mode {
            Mode::Golden2x2 => Self::golden(Matrix2::identity()),
            Mode::Uncoded4x4 => Self::uncoded(Matrix4::identity()),
        }
    }

    /// Builds a realization straight from its 8x8 real expansion.
    pub fn from_real(mode: Mode, real: Mat8) -> Self {
        Self {
            mode,
            complex: Vec::new(),
            real,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Complex gains in row-major order (empty when built from a real matrix).
    pub fn complex(&self) -> &[Complex64] {
        &self.complex
    }

    pub fn real(&self) -> &Mat8 {
        &self.real
    }
}

/// Real lattice model for one codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub g: Mat8,
    pub channel: ChannelRealization,
    pub m: Mat8,
    pub n0: f64,
}

impl SystemModel {
    pub fn new(channel: ChannelRealization, n0: f64) -> Self {
        let g = channel.mode().generator();
        let m = channel.real() * g;
        Self { g, channel, m, n0 }
    }

    pub fn mode(&self) -> Mode {
        self.channel.mode()
    }
}

/// `y = M s + z`, with `z` i.i.d. `N(0, n0/2)` per real dimension.
pub fn transmit<R: Rng + ?Sized>(s: &SymbolVector, model: &SystemModel, rng: &mut R) -> Vec8 {
    let mut y = model.m * s.to_real();
    if model.n0 > 0.0 {
        let sigma = (model.n0 / 2.0).sqrt();
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
    y
}

pub fn transmit_seeded(s: &SymbolVector, model: &SystemModel, seed: u64) -> Vec8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    transmit(s, model, &mut rng)
}

/// Noise variance per complex received sample for a given SNR.
///
/// SNR is the ratio of mean received signal energy to mean noise energy per
/// codeword, averaged over uniform symbols and `CN(0, 1)` channels. With
/// `n_rx` receive antennas, `E|Ms|^2 = n_rx * 8 * (Q^2 - 1) / 3` while the four
/// complex received samples carry `4 * N0` of noise, so
/// `N0 = 2 * n_rx * (Q^2 - 1) / (3 * snr)`.
pub fn snr_to_n0(snr_db: f64, constellation: &Constellation, mode: Mode) -> f64 {
    if snr_db >= SNR_CAP_DB {
        return 0.0;
    }
    let snr = 10f64.powf(snr_db / 10.0);
    let signal = mode.receive_antennas() as f64 * DIM as f64 * constellation.mean_energy();
    signal / (4.0 * snr)
}
