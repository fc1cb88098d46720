//! Bit-level model of the dichotomic divider and the one-node-per-cycle
//! throughput model of the tree-search pipeline.
//!
//! The divider only has to find the alphabet point nearest to `psi / r` and
//! say whether it lies above or below the exact ratio. Working on
//! magnitudes, `log2(Q)` restoring shift-subtract steps produce the
//! integer part of `|psi| / r` (saturating at `Q - 1`): the upper bits pick
//! the pair of odd points and the last bit says whether the ratio sits
//! below (excess) or above (defect) the odd point of that pair. A zero
//! remainder flags exact fits and ties.

use std::fmt;

use crate::decoder::DeltaSign;
use crate::error::{Error, Result};
use crate::fxp::FxpValue;
use crate::model::{Constellation, Mode, DIM};

/// One shift-subtract iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DividerStep {
    /// The divisor is compared shifted left by this many positions.
    pub shift: u32,
    pub subtracted: bool,
    /// Quotient bit produced, most significant first.
    pub bit: u8,
    /// Partial remainder after the step, as a raw word.
    pub remainder: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DividerTrace {
    pub steps: Vec<DividerStep>,
    pub result: i32,
    pub delta_sign: DeltaSign,
}

impl fmt::Display for DividerTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, st) in self.steps.iter().enumerate() {
            writeln!(
                f,
                "step {}: shift={} subtract={} bit={} remainder={}",
                i + 1,
                st.shift,
                if st.subtracted { "yes" } else { "no" },
                st.bit,
                st.remainder
            )?;
        }
        let sign = match self.delta_sign {
            DeltaSign::Negative => "- (defect)",
            DeltaSign::Zero => "0 (exact)",
            DeltaSign::Positive => "+ (excess)",
        };
        write!(f, "s={} delta={}", self.result, sign)
    }
}

/// Core divider on raw words; `on_step` observes every iteration.
///
/// `r` must be positive. Ties between two odd points resolve toward the
/// smaller magnitude, and a zero numerator gives `-1` with a negative sign.
pub(crate) fn divide_raw(psi: i64, r: i64, q: u32, mut on_step: impl FnMut(DividerStep)) -> (i32, DeltaSign) {
    debug_assert!(r > 0);
    debug_assert!(q.is_power_of_two() && q >= 2);
    let steps = q.trailing_zeros();
    let negative = psi < 0;
    let mut rem = (psi as i128).abs();
    let mut quotient: i32 = 0;

    for shift in (0..steps).rev() {
        let d = (r as i128) << shift;
        let take = rem >= d;
        if take {
            rem -= d;
        }
        quotient = (quotient << 1) | take as i32;
        on_step(DividerStep {
            shift,
            subtracted: take,
            bit: take as u8,
            remainder: rem as i64,
        });
    }

    let (magnitude, sign) = if quotient & 1 == 1 {
        // Ratio at or above the odd point: defect, or exact when nothing is left.
        (quotient, if rem == 0 { DeltaSign::Zero } else { DeltaSign::Negative })
    } else if rem != 0 {
        (quotient + 1, DeltaSign::Positive)
    } else if quotient == 0 {
        return (-1, DeltaSign::Negative);
    } else {
        // Exactly between quotient - 1 and quotient + 1.
        (quotient - 1, DeltaSign::Negative)
    };

    if negative {
        (-magnitude, sign.flip())
    } else {
        (magnitude, sign)
    }
}

/// Runs the divider on fixed-point operands and records its trace.
pub fn dichotomic_divide(psi: FxpValue, r_ll: FxpValue, q: u32) -> Result<DividerTrace> {
    Constellation::new(q)?;
    if psi.format != r_ll.format {
        return Err(Error::FormatMismatch {
            left: psi.format.to_string(),
            right: r_ll.format.to_string(),
        });
    }
    if r_ll.raw <= 0 {
        return Err(Error::NonPositiveDivisor(r_ll.raw));
    }
    let mut steps = Vec::with_capacity(q.trailing_zeros() as usize);
    let (result, delta_sign) = divide_raw(psi.raw, r_ll.raw, q, |st| steps.push(st));
    Ok(DividerTrace {
        steps,
        result,
        delta_sign,
    })
}

/// Cycles spent on a codeword whose search visited `nodes` nodes. The ideal
/// pipeline expands one node per cycle; fill and flush are not modelled.
pub fn cycles_for_nodes(nodes: u64) -> u64 {
    nodes
}

/// Decoded bits per eight-coordinate vector.
pub fn bits_per_codeword(constellation: &Constellation, _mode: Mode) -> u32 {
    DIM as u32 * constellation.bits_per_dim()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputModel {
    pub clock_hz: f64,
    pub bits_per_codeword: u32,
    pub mean_cycles_per_codeword: f64,
}

impl ThroughputModel {
    pub fn new(clock_hz: f64, bits_per_codeword: u32, mean_cycles_per_codeword: f64) -> Result<Self> {
        if mean_cycles_per_codeword.is_nan() || mean_cycles_per_codeword <= 0.0 {
            return Err(Error::ZeroCycles(mean_cycles_per_codeword));
        }
        Ok(Self {
            clock_hz,
            bits_per_codeword,
            mean_cycles_per_codeword,
        })
    }

    pub fn bits_per_second(&self) -> f64 {
        self.clock_hz * self.bits_per_codeword as f64 / self.mean_cycles_per_codeword
    }

    pub fn mbps(&self) -> f64 {
        self.bits_per_second() / 1e6
    }
}

/// Decoding throughput in Mbit/s.
pub fn estimate_throughput(
    mean_cycles: f64,
    clock_hz: f64,
    constellation: &Constellation,
    mode: Mode,
) -> Result<f64> {
    Ok(ThroughputModel::new(clock_hz, bits_per_codeword(constellation, mode), mean_cycles)?.mbps())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::nearest_pam;
    use crate::fxp::FxpFormat;

    fn pam(q: u32) -> Constellation {
        Constellation::new(q).unwrap()
    }

    #[test]
    fn step_counts() {
        let f = FxpFormat::new(12, 7).unwrap();
        for (q, n) in [(2, 1), (4, 2), (8, 3)] {
            let t = dichotomic_divide(f.quantize(1.3), f.quantize(0.7), q).unwrap();
            assert_eq!(t.steps.len(), n);
            let shifts: Vec<u32> = t.steps.iter().map(|s| s.shift).collect();
            assert_eq!(shifts, (0..n as u32).rev().collect::<Vec<_>>());
        }
    }

    #[test]
    fn exact_multiple() {
        let f = FxpFormat::new(16, 8).unwrap();
        let t = dichotomic_divide(f.quantize(4.5), f.quantize(1.5), 8).unwrap();
        assert_eq!((t.result, t.delta_sign), (3, DeltaSign::Zero));
        let t = dichotomic_divide(f.quantize(-4.5), f.quantize(1.5), 8).unwrap();
        assert_eq!((t.result, t.delta_sign), (-3, DeltaSign::Zero));
    }

    #[test]
    fn worked_example() {
        let f: FxpFormat = "Q5.7".parse().unwrap();
        let t = dichotomic_divide(f.quantize(5.2), f.quantize(2.0), 4).unwrap();
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.result, 3);
        assert_eq!(t.delta_sign, DeltaSign::Positive);
        let text = t.to_string();
        assert_eq!(text.lines().count(), 3);
        assert!(text.ends_with("s=3 delta=+ (excess)"));
    }

    #[test]
    fn ties_and_zero() {
        let f = FxpFormat::new(16, 8).unwrap();
        let one = f.quantize(1.0);
        assert_eq!(dichotomic_divide(f.quantize(0.0), one, 4).unwrap().result, -1);
        assert_eq!(dichotomic_divide(f.quantize(2.0), one, 4).unwrap().result, 1);
        assert_eq!(dichotomic_divide(f.quantize(-2.0), one, 4).unwrap().result, -1);
        assert_eq!(dichotomic_divide(f.quantize(6.0), one, 8).unwrap().result, 5);
        assert_eq!(dichotomic_divide(f.quantize(9.3), one, 4).unwrap().result, 3);
    }

    #[test]
    fn rejects_bad_operands() {
        let f = FxpFormat::new(16, 8).unwrap();
        assert!(matches!(
            dichotomic_divide(f.quantize(1.0), f.quantize(0.0), 4),
            Err(Error::NonPositiveDivisor(0))
        ));
        assert!(dichotomic_divide(f.quantize(1.0), f.quantize(-1.0), 4).is_err());
        assert!(dichotomic_divide(f.quantize(1.0), f.quantize(1.0), 16).is_err());
        let g = FxpFormat::new(16, 7).unwrap();
        assert!(dichotomic_divide(f.quantize(1.0), g.quantize(1.0), 4).is_err());
    }

    #[test]
    fn reduced_grid_matches_nearest_pam() {
        let f = FxpFormat::new(8, 4).unwrap();
        for q in [2, 4, 8] {
            let c = pam(q);
            for psi in f.min_raw()..=f.max_raw() {
                for r in 1..=f.max_raw() {
                    let t = divide_raw(psi, r, q, |_| {});
                    let d = nearest_pam(psi as f64 / r as f64, &c);
                    assert_eq!(t.0, d.s, "psi={psi} r={r} q={q}");
                    if !d.clamped {
                        assert_eq!(t.1, DeltaSign::of(d.delta), "psi={psi} r={r} q={q}");
                    }
                }
            }
        }
    }

    #[test]
    fn throughput_examples() {
        let c16 = pam(4);
        let mbps = estimate_throughput(24.0, 250e6, &c16, Mode::Uncoded4x4).unwrap();
        assert!((mbps - 166.666_666_666_666_67).abs() < 1e-9);
        let ceiling = estimate_throughput(8.0, 250e6, &c16, Mode::Golden2x2).unwrap();
        assert!((ceiling - 500.0).abs() < 1e-9);
        let q4 = estimate_throughput(24.0, 250e6, &pam(2), Mode::Uncoded4x4).unwrap();
        assert!((q4 * 2.0 - mbps).abs() < 1e-9);
        let doubled = estimate_throughput(24.0, 500e6, &c16, Mode::Uncoded4x4).unwrap();
        assert!((doubled - 2.0 * mbps).abs() < 1e-9);
        assert!(matches!(
            estimate_throughput(0.0, 250e6, &c16, Mode::Golden2x2),
            Err(Error::ZeroCycles(_))
        ));
    }
}
