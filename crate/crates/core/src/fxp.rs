//! Two's-complement fixed-point emulation and the fixed-point decoder.
//!
//! Rounding is to nearest with ties away from zero; every operation
//! saturates at the format bounds instead of wrapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archmodel::divide_raw;
use crate::decoder::{DecodeResult, Datapath, DeltaSign, TreeSearch};
use crate::error::{Error, Result};
use crate::model::{Constellation, Vec8, DIM};
use crate::preproc::{zf_point, QrFactors};

const MIN_BITS: u32 = 8;
const MAX_BITS: u32 = 32;
/// Widest format reachable through metric guard bits.
const MAX_WIDE_BITS: u32 = 40;

/// Word layout: `total_bits` including the sign, `frac_bits` after the point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FxpFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FxpFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(MIN_BITS..=MAX_BITS).contains(&total_bits) {
            return Err(Error::InvalidFormat(format!(
                "total bits must be in {MIN_BITS}..={MAX_BITS}, got {total_bits}"
            )));
        }
        Self::checked(total_bits, frac_bits)
    }

    fn checked(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if frac_bits >= total_bits {
            return Err(Error::InvalidFormat(format!(
                "need at least one integer bit: {frac_bits} fraction bits of {total_bits}"
            )));
        }
        Ok(Self {
            total_bits,
            frac_bits,
        })
    }

    /// Same fraction, `guard` more integer bits.
    pub fn with_guard_bits(self, guard: u32) -> Result<Self> {
        let total = self.total_bits + guard;
        if total > MAX_WIDE_BITS {
            return Err(Error::InvalidFormat(format!(
                "{guard} guard bits widen {self} past {MAX_WIDE_BITS} bits"
            )));
        }
        Self::checked(total, self.frac_bits)
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Integer bits including the sign.
    pub fn int_bits(&self) -> u32 {
        self.total_bits - self.frac_bits
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Value of one least significant bit.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub(crate) fn saturate(&self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    pub(crate) fn quantize_raw(&self, x: f64) -> (i64, bool) {
        let scaled = (x * (self.frac_bits as f64).exp2()).round();
        if scaled.is_nan() {
            return (0, true);
        }
        let max = self.max_raw() as f64;
        let min = self.min_raw() as f64;
        if scaled > max {
            (self.max_raw(), true)
        } else if scaled < min {
            (self.min_raw(), true)
        } else {
            (scaled as i64, false)
        }
    }

    pub fn quantize(&self, x: f64) -> FxpValue {
        self.quantize_flagged(x).0
    }

    /// Quantizes and reports whether the value saturated.
    pub fn quantize_flagged(&self, x: f64) -> (FxpValue, bool) {
        let (raw, saturated) = self.quantize_raw(x);
        (FxpValue { raw, format: *self }, saturated)
    }

    pub fn from_raw(&self, raw: i64) -> FxpValue {
        FxpValue {
            raw: self.saturate(raw as i128),
            format: *self,
        }
    }

    pub(crate) fn add_raw(&self, a: i64, b: i64) -> i64 {
        self.saturate(a as i128 + b as i128)
    }

    pub(crate) fn sub_raw(&self, a: i64, b: i64) -> i64 {
        self.saturate(a as i128 - b as i128)
    }

    /// Product rescaled by `2^-frac` with round-half-away-from-zero.
    pub(crate) fn mul_raw(&self, a: i64, b: i64) -> i64 {
        let p = a as i128 * b as i128;
        if self.frac_bits == 0 {
            return self.saturate(p);
        }
        let half = 1i128 << (self.frac_bits - 1);
        let mag = (p.abs() + half) >> self.frac_bits;
        self.saturate(if p < 0 { -mag } else { mag })
    }
}

impl fmt::Display for FxpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits(), self.frac_bits)
    }
}

impl FromStr for FxpFormat {
    type Err = Error;

    /// Parses `Qm.f`: `m` integer bits including the sign, `f` fraction bits.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidFormat(format!("expected Qm.f, got '{s}'"));
        let body = s.strip_prefix('Q').or_else(|| s.strip_prefix('q')).ok_or_else(bad)?;
        let (m, f) = body.split_once('.').ok_or_else(bad)?;
        let m: u32 = m.parse().map_err(|_| bad())?;
        let f: u32 = f.parse().map_err(|_| bad())?;
        if m == 0 {
            return Err(Error::InvalidFormat(format!("'{s}' has no integer bits")));
        }
        Self::new(m + f, f)
    }
}

impl TryFrom<String> for FxpFormat {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FxpFormat> for String {
    fn from(f: FxpFormat) -> String {
        f.to_string()
    }
}

/// A quantized value tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpValue {
    pub raw: i64,
    pub format: FxpFormat,
}

impl FxpValue {
    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.format.ulp()
    }
}

fn same_format(a: &FxpValue, b: &FxpValue) -> Result<FxpFormat> {
    if a.format != b.format {
        return Err(Error::FormatMismatch {
            left: a.format.to_string(),
            right: b.format.to_string(),
        });
    }
    Ok(a.format)
}

pub fn fxp_add(a: FxpValue, b: FxpValue) -> Result<FxpValue> {
    let f = same_format(&a, &b)?;
    Ok(FxpValue {
        raw: f.add_raw(a.raw, b.raw),
        format: f,
    })
}

pub fn fxp_sub(a: FxpValue, b: FxpValue) -> Result<FxpValue> {
    let f = same_format(&a, &b)?;
    Ok(FxpValue {
        raw: f.sub_raw(a.raw, b.raw),
        format: f,
    })
}

pub fn fxp_mul(a: FxpValue, b: FxpValue) -> Result<FxpValue> {
    let f = same_format(&a, &b)?;
    Ok(FxpValue {
        raw: f.mul_raw(a.raw, b.raw),
        format: f,
    })
}

/// Fixed-point decoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FxpConfig {
    /// Shared datapath format for `y~`, `R` and `psi`.
    pub format: FxpFormat,
    /// Extra integer bits carried by the partial metric only.
    pub metric_guard_bits: u32,
}

impl FxpConfig {
    pub fn new(format: FxpFormat) -> Self {
        Self {
            format,
            metric_guard_bits: 0,
        }
    }
}

/// Datapath over raw two's-complement words; division uses the dichotomic
/// divider, so only the sign of the correction term is ever formed.
#[derive(Debug, Clone, Copy)]
pub struct FxpDatapath {
    format: FxpFormat,
    metric_format: FxpFormat,
}

impl FxpDatapath {
    pub fn new(config: FxpConfig) -> Result<Self> {
        Ok(Self {
            format: config.format,
            metric_format: config.format.with_guard_bits(config.metric_guard_bits)?,
        })
    }

    pub fn format(&self) -> FxpFormat {
        self.format
    }
}

impl Datapath for FxpDatapath {
    type Scalar = i64;

    fn zero(&self) -> i64 {
        0
    }

    fn select(&self, psi_l: i64, r_ll: i64, constellation: &Constellation) -> (i32, DeltaSign) {
        if r_ll <= 0 {
            return (-1, DeltaSign::Zero);
        }
        divide_raw(psi_l, r_ll, constellation.q(), |_| {})
    }

    fn metric_step(&self, t_parent: i64, psi_l: i64, r_ll: i64, s_l: i32) -> i64 {
        let e = self.cancel(psi_l, r_ll, s_l);
        let e2 = self.metric_format.mul_raw(e, e);
        self.metric_format.add_raw(t_parent, e2)
    }

    fn cancel(&self, psi: i64, r: i64, s: i32) -> i64 {
        self.format.saturate(psi as i128 - r as i128 * s as i128)
    }

    fn to_f64(&self, v: i64) -> f64 {
        v as f64 * self.metric_format.ulp()
    }
}

/// Fixed-point sphere decoder: `y~` and `R` are quantized once per
/// codeword, then the search runs entirely on raw words.
#[derive(Debug, Clone)]
pub struct FxpDecoder {
    search: TreeSearch<FxpDatapath>,
}

impl FxpDecoder {
    pub fn new(constellation: Constellation, config: FxpConfig) -> Result<Self> {
        Ok(Self {
            search: TreeSearch::new(FxpDatapath::new(config)?, constellation),
        })
    }

    pub fn decode(&mut self, y: &Vec8, factors: &QrFactors) -> DecodeResult {
        let f = self.search.datapath().format();
        let yt = zf_point(&factors.q, y);
        let yq: [i64; DIM] = std::array::from_fn(|i| f.quantize_raw(yt[i]).0);
        let rq: [[i64; DIM]; DIM] =
            std::array::from_fn(|i| std::array::from_fn(|j| f.quantize_raw(factors.r[(i, j)]).0));
        self.search.search(&yq, &rq)
    }
}

pub fn decode_fxp(
    y: &Vec8,
    factors: &QrFactors,
    constellation: &Constellation,
    format: FxpFormat,
) -> Result<DecodeResult> {
    Ok(FxpDecoder::new(*constellation, FxpConfig::new(format))?.decode(y, factors))
}
