//! QR preprocessing of the lattice generator and the systolic-array latency
//! table used to size a QR unit.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Mat8, Vec8, DIM};

/// `M = Q R` with `R` upper triangular and a nonnegative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct QrFactors {
    pub q: Mat8,
    pub r: Mat8,
    /// Levels whose diagonal entry vanished (rank-deficient input).
    pub zero_diagonal: Vec<usize>,
}

impl QrFactors {
    pub fn is_rank_deficient(&self) -> bool {
        !self.zero_diagonal.is_empty()
    }
}

/// Givens-rotation QR.
///
/// Columns are processed left to right; within a column the sub-diagonal
/// entries are annihilated bottom-up, each rotation acting on rows `i-1, i`.
/// Diagonal entries are made nonnegative by flipping row signs at the end,
/// and entries that fall below `1e-12 * max(1, max|m|)` are snapped to zero
/// and reported in `zero_diagonal`.
pub fn qr_givens(m: &Mat8) -> QrFactors {
    let mut r = *m;
    let mut qt = Mat8::identity();

    for col in 0..DIM {
        for row in (col + 1..DIM).rev() {
            let a = r[(row - 1, col)];
            let b = r[(row, col)];
            if b == 0.0 {
                continue;
            }
            let rho = a.hypot(b);
            let (c, s) = (a / rho, b / rho);
            rotate_rows(&mut r, row - 1, row, c, s);
            rotate_rows(&mut qt, row - 1, row, c, s);
            r[(row - 1, col)] = rho;
            r[(row, col)] = 0.0;
        }
    }

    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut zero_diagonal = Vec::new();
    for l in 0..DIM {
        if r[(l, l)] < 0.0 {
            for c in 0..DIM {
                r[(l, c)] = -r[(l, c)];
                qt[(l, c)] = -qt[(l, c)];
            }
        }
        if r[(l, l)] <= 1e-12 * scale {
            r[(l, l)] = 0.0;
            zero_diagonal.push(l);
        }
        for row in l + 1..DIM {
            r[(row, l)] = 0.0;
        }
    }

    QrFactors {
        q: qt.transpose(),
        r,
        zero_diagonal,
    }
}

fn rotate_rows(a: &mut Mat8, p: usize, i: usize, c: f64, s: f64) {
    for col in 0..DIM {
        let (x, y) = (a[(p, col)], a[(i, col)]);
        a[(p, col)] = c * x + s * y;
        a[(i, col)] = -s * x + c * y;
    }
}

/// Zero-forcing point `Q^T y`.
pub fn zf_point(q: &Mat8, y: &Vec8) -> Vec8 {
    q.tr_mul(y)
}

/// Systolic array layout for a QR unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Triangular,
    Linear,
    SingleElement,
}

impl FromStr for ArrayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangular" => Ok(ArrayKind::Triangular),
            "linear" => Ok(ArrayKind::Linear),
            "single" | "single_element" | "single-element" => Ok(ArrayKind::SingleElement),
            other => Err(Error::InvalidArray(format!("unknown array kind '{other}'"))),
        }
    }
}

impl fmt::Display for ArrayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrayKind::Triangular => "triangular",
            ArrayKind::Linear => "linear",
            ArrayKind::SingleElement => "single",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayOrganization {
    pub kind: ArrayKind,
    pub n: u64,
}

impl ArrayOrganization {
    pub fn new(kind: ArrayKind, n: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArray(format!("matrix dimension must be >= 2, got {n}")));
        }
        Ok(Self { kind, n })
    }
}

/// Cost of one array organization. Throughput is one QR every
/// `cycles_per_qr` cycles; the linear array only has bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayCost {
    pub pe_count: u64,
    pub latency_min: u64,
    pub latency_max: u64,
    pub cycles_per_qr_min: u64,
    pub cycles_per_qr_max: u64,
}

pub fn array_latency(org: &ArrayOrganization) -> ArrayCost {
    let n = org.n;
    match org.kind {
        ArrayKind::Triangular => {
            let t = n * (n + 1) / 2;
            ArrayCost {
                pe_count: t,
                latency_min: t,
                latency_max: t,
                cycles_per_qr_min: n,
                cycles_per_qr_max: n,
            }
        }
        ArrayKind::Linear => {
            // (2n-1) + (n/2 - 1)(n+1), kept integral for odd n.
            let low = (2 * n - 1) + (n - 2) * (n + 1) / 2;
            let high = 2 * n * n - n;
            ArrayCost {
                pe_count: n,
                latency_min: low,
                latency_max: high,
                cycles_per_qr_min: low,
                cycles_per_qr_max: high,
            }
        }
        ArrayKind::SingleElement => {
            let t = n * n * (n + 1) / 2;
            ArrayCost {
                pe_count: 1,
                latency_min: t,
                latency_max: t,
                cycles_per_qr_min: t,
                cycles_per_qr_max: t,
            }
        }
    }
}

impl fmt::Display for ArrayCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PEs={} ", self.pe_count)?;
        if self.latency_min == self.latency_max {
            write!(f, "latency={} ", self.latency_min)?;
        } else {
            write!(f, "latency={}..{} ", self.latency_min, self.latency_max)?;
        }
        if self.cycles_per_qr_min == self.cycles_per_qr_max {
            write!(f, "throughput=1/{}", self.cycles_per_qr_min)
        } else {
            write!(
                f,
                "throughput=1/{}..1/{}",
                self.cycles_per_qr_max, self.cycles_per_qr_min
            )
        }
    }
}
