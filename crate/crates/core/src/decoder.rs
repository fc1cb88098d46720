//! Depth-first Schnorr-Euchner sphere decoder.
//!
//! The search keeps one interference-cancelled vector per tree level (the
//! psi memory). At level `l` the best child is the alphabet point nearest to
//! `psi_l / R_ll`, found by a division instead of comparing all `Q`
//! candidates. The sign of the rounding correction `delta = s - psi_l / R_ll`
//! then fixes the zig-zag order of the remaining siblings, so children are
//! always produced in non-decreasing distance order. Because of that order a
//! pruned node ends the enumeration at its level and the search backs up to
//! the next sibling of its parent.
//!
//! The traversal is generic over a [`Datapath`], which supplies the
//! arithmetic. [`FloatDatapath`] is the reference; the fixed-point datapath
//! lives in [`crate::fxp`].

use crate::error::{Error, Result};
use crate::model::{Constellation, Mat8, SymbolVector, Vec8, DIM, SPACING};
use crate::preproc::{zf_point, QrFactors};

/// Ratios are clamped to this magnitude before rounding.
const RATIO_LIMIT: f64 = 1e15;

/// Default cap on the number of candidates [`exhaustive_ml`] will enumerate.
pub const EXHAUSTIVE_CAP: u128 = 1 << 24;

/// Sign of the rounding correction. An exact fit follows the positive rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeltaSign {
    Negative,
    Zero,
    Positive,
}

impl DeltaSign {
    pub fn of(delta: f64) -> Self {
        if delta > 0.0 {
            DeltaSign::Positive
        } else if delta < 0.0 {
            DeltaSign::Negative
        } else {
            DeltaSign::Zero
        }
    }

    /// `sign(delta)` as used by the zig-zag rule.
    pub fn step_sign(self) -> i32 {
        match self {
            DeltaSign::Negative => -1,
            DeltaSign::Zero | DeltaSign::Positive => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            DeltaSign::Negative => DeltaSign::Positive,
            DeltaSign::Zero => DeltaSign::Zero,
            DeltaSign::Positive => DeltaSign::Negative,
        }
    }
}

/// Nearest alphabet point to a ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PamDecision {
    pub s: i32,
    /// `s' - ratio`, where `s'` is the nearest odd integer before clamping.
    pub delta: f64,
    pub clamped: bool,
}

/// Rounds `ratio` to the nearest odd integer and clamps it into the alphabet.
///
/// A ratio exactly halfway between two odd integers goes to the one of
/// smaller magnitude, and to `-1` at zero.
pub fn nearest_pam(ratio: f64, constellation: &Constellation) -> PamDecision {
    debug_assert!(!ratio.is_nan());
    let x = ratio.clamp(-RATIO_LIMIT, RATIO_LIMIT);
    let even = 2.0 * (x / 2.0).floor();
    let odd = if x == even {
        if x == 0.0 {
            -1.0
        } else if x > 0.0 {
            x - 1.0
        } else {
            x + 1.0
        }
    } else {
        even + 1.0
    };
    let max = constellation.max_point() as f64;
    let s = odd.clamp(-max, max);
    PamDecision {
        s: s as i32,
        delta: odd - x,
        clamped: s != odd,
    }
}

/// First child at a level and its rounding correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildChoice {
    pub s: i32,
    pub delta: f64,
}

/// Division-based child selection. A zero `r_ll` makes every child
/// equidistant; the search then starts from `-1` with a zero correction.
pub fn child_select(psi_l: f64, r_ll: f64, constellation: &Constellation) -> ChildChoice {
    if r_ll > 0.0 {
        let d = nearest_pam(psi_l / r_ll, constellation);
        ChildChoice {
            s: d.s,
            delta: d.delta,
        }
    } else {
        ChildChoice { s: -1, delta: 0.0 }
    }
}

/// Sibling enumerator for one tree level.
///
/// Walks `s_k = s_{k-1} - (-1)^k sign(delta) (k-1) A` from the first child,
/// skipping points outside the alphabet, so once one side of the alphabet
/// is used up the walk continues on the other side only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zigzag {
    position: i32,
    k: i32,
    taken: u32,
    sign: i32,
    constellation: Constellation,
}

impl Zigzag {
    pub fn new(first: i32, delta: DeltaSign, constellation: Constellation) -> Self {
        debug_assert!(constellation.contains(first));
        Self {
            position: first,
            k: 1,
            taken: 1,
            sign: delta.step_sign(),
            constellation,
        }
    }

    /// Number of alphabet points produced so far, including the first child.
    pub fn taken(&self) -> u32 {
        self.taken
    }
}

impl Iterator for Zigzag {
    type Item = i32;

    fn next(&mut self) -> Option<i32> {
        if self.taken >= self.constellation.q() {
            return None;
        }
        loop {
            self.k += 1;
            let parity = if self.k % 2 == 0 { 1 } else { -1 };
            self.position -= parity * self.sign * (self.k - 1) * SPACING;
            if self.constellation.contains(self.position) {
                self.taken += 1;
                return Some(self.position);
            }
        }
    }
}

/// One sibling step after `first`, for callers that hold an explicit state.
pub fn zigzag_next(state: &mut Zigzag) -> Option<i32> {
    state.next()
}

/// `psi^(l) = psi^(l+1) - R_l s_l` over the whole vector.
pub fn update_psi(psi_next: &Vec8, r: &Mat8, level: usize, s_l: i32) -> Vec8 {
    psi_next - r.column(level) * s_l as f64
}

/// `T^(l) = T^(l+1) + |psi_l - R_ll s_l|^2`.
pub fn metric_step(t_parent: f64, psi_l: f64, r_ll: f64, s_l: i32) -> f64 {
    let e = psi_l - r_ll * s_l as f64;
    t_parent + e * e
}

/// Arithmetic used by the tree search.
pub trait Datapath {
    type Scalar: Copy + PartialOrd + std::fmt::Debug;

    fn zero(&self) -> Self::Scalar;

    /// First child at a level and the sign of its rounding correction.
    fn select(
        &self,
        psi_l: Self::Scalar,
        r_ll: Self::Scalar,
        constellation: &Constellation,
    ) -> (i32, DeltaSign);

    fn metric_step(
        &self,
        t_parent: Self::Scalar,
        psi_l: Self::Scalar,
        r_ll: Self::Scalar,
        s_l: i32,
    ) -> Self::Scalar;

    /// `psi - r * s`.
    fn cancel(&self, psi: Self::Scalar, r: Self::Scalar, s: i32) -> Self::Scalar;

    fn to_f64(&self, v: Self::Scalar) -> f64;
}

/// IEEE double datapath.
#[derive(Debug, Clone, Copy, Default)]
pub struct FloatDatapath;

impl Datapath for FloatDatapath {
    type Scalar = f64;

    fn zero(&self) -> f64 {
        0.0
    }

    fn select(&self, psi_l: f64, r_ll: f64, constellation: &Constellation) -> (i32, DeltaSign) {
        let c = child_select(psi_l, r_ll, constellation);
        (c.s, DeltaSign::of(c.delta))
    }

    fn metric_step(&self, t_parent: f64, psi_l: f64, r_ll: f64, s_l: i32) -> f64 {
        metric_step(t_parent, psi_l, r_ll, s_l)
    }

    fn cancel(&self, psi: f64, r: f64, s: i32) -> f64 {
        psi - r * s as f64
    }

    fn to_f64(&self, v: f64) -> f64 {
        v
    }
}

/// Psi memory: row `l` holds `psi^(l)` (0-based), row `DIM` holds `y~`.
#[derive(Debug, Clone)]
pub struct PsiMemory<S> {
    rows: [[S; DIM]; DIM + 1],
}

impl<S: Copy> PsiMemory<S> {
    pub fn new(fill: S) -> Self {
        Self {
            rows: [[fill; DIM]; DIM + 1],
        }
    }

    pub fn row(&self, level: usize) -> &[S; DIM] {
        &self.rows[level]
    }
}

/// Traversal position: chosen symbols, sibling enumerators and partial
/// metrics for every level at or above the current one.
#[derive(Debug, Clone)]
pub struct NodeCursor<S> {
    pub level: usize,
    pub symbols: [i32; DIM],
    pub siblings: [Option<Zigzag>; DIM],
    /// `metrics[l]` is `T` of the node chosen at level `l`; `metrics[DIM] = 0`.
    pub metrics: [S; DIM + 1],
}

/// Outcome of one tree search.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub s_hat: SymbolVector,
    /// Final metric `T^(1)` of `s_hat`.
    pub metric: f64,
    /// Nodes whose partial metric was evaluated.
    pub visited_nodes: u64,
    /// Number of times the sphere radius shrank.
    pub radius_updates: u64,
}

impl DecodeResult {
    /// Clock cycles under the one-node-per-cycle pipeline.
    pub fn cycles(&self) -> u64 {
        crate::archmodel::cycles_for_nodes(self.visited_nodes)
    }
}

/// Reusable search state bound to a datapath and an alphabet.
#[derive(Debug, Clone)]
pub struct TreeSearch<D: Datapath> {
    datapath: D,
    constellation: Constellation,
    psi: PsiMemory<D::Scalar>,
    cursor: NodeCursor<D::Scalar>,
}

impl<D: Datapath> TreeSearch<D> {
    pub fn new(datapath: D, constellation: Constellation) -> Self {
        let zero = datapath.zero();
        Self {
            datapath,
            constellation,
            psi: PsiMemory::new(zero),
            cursor: NodeCursor {
                level: DIM,
                symbols: [0; DIM],
                siblings: [None; DIM],
                metrics: [zero; DIM + 1],
            },
        }
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn datapath(&self) -> &D {
        &self.datapath
    }

    pub fn psi_memory(&self) -> &PsiMemory<D::Scalar> {
        &self.psi
    }

    /// Searches the tree for `argmin |y~ - R s|^2` given datapath values.
    pub fn search(&mut self, ytilde: &[D::Scalar; DIM], r: &[[D::Scalar; DIM]; DIM]) -> DecodeResult {
        let dp = &self.datapath;
        let c = self.constellation;
        let psi = &mut self.psi.rows;
        let cur = &mut self.cursor;

        psi[DIM] = *ytilde;
        cur.metrics[DIM] = dp.zero();
        cur.siblings = [None; DIM];

        let mut radius: Option<D::Scalar> = None;
        let mut best = [0i32; DIM];
        let mut visited = 0u64;
        let mut updates = 0u64;

        let mut level = DIM - 1;
        let (s, sign) = dp.select(psi[level + 1][level], r[level][level], &c);
        cur.symbols[level] = s;
        cur.siblings[level] = Some(Zigzag::new(s, sign, c));

        'search: loop {
            let s = cur.symbols[level];
            let t = dp.metric_step(cur.metrics[level + 1], psi[level + 1][level], r[level][level], s);
            visited += 1;

            let inside = radius.is_none_or(|rad| t < rad);
            if inside && level > 0 {
                cur.metrics[level] = t;
                for i in 0..=level {
                    psi[level][i] = dp.cancel(psi[level + 1][i], r[i][level], s);
                }
                level -= 1;
                let (s, sign) = dp.select(psi[level + 1][level], r[level][level], &c);
                cur.symbols[level] = s;
                cur.siblings[level] = Some(Zigzag::new(s, sign, c));
                continue;
            }
            if inside {
                cur.metrics[0] = t;
                radius = Some(t);
                best = cur.symbols;
                updates += 1;
            }
            // Leaf reached or node pruned: the remaining siblings here are no
            // closer, so resume at the next sibling of an ancestor.
            loop {
                level += 1;
                if level == DIM {
                    break 'search;
                }
                if let Some(next) = cur.siblings[level].as_mut().and_then(Iterator::next) {
                    cur.symbols[level] = next;
                    break;
                }
            }
        }
        cur.level = DIM;

        DecodeResult {
            s_hat: SymbolVector::from_raw(best),
            metric: dp.to_f64(radius.expect("the first descent always reaches a leaf")),
            visited_nodes: visited,
            radius_updates: updates,
        }
    }
}

/// Floating-point sphere decoder.
#[derive(Debug, Clone)]
pub struct SphereDecoder {
    search: TreeSearch<FloatDatapath>,
}

impl SphereDecoder {
    pub fn new(constellation: Constellation) -> Self {
        Self {
            search: TreeSearch::new(FloatDatapath, constellation),
        }
    }

    pub fn decode(&mut self, y: &Vec8, factors: &QrFactors) -> DecodeResult {
        self.decode_zf(&zf_point(&factors.q, y), &factors.r)
    }

    /// Decodes from an already rotated observation `y~ = Q^T y`.
    pub fn decode_zf(&mut self, ytilde: &Vec8, r: &Mat8) -> DecodeResult {
        let yt: [f64; DIM] = std::array::from_fn(|i| ytilde[i]);
        let rm: [[f64; DIM]; DIM] = std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)]));
        self.search.search(&yt, &rm)
    }
}

pub fn decode(y: &Vec8, factors: &QrFactors, constellation: &Constellation) -> DecodeResult {
    SphereDecoder::new(*constellation).decode(y, factors)
}

/// Exhaustive ML search, enumerating every candidate.
pub fn exhaustive_ml(y: &Vec8, factors: &QrFactors, constellation: &Constellation) -> Result<DecodeResult> {
    exhaustive_ml_capped(y, factors, constellation, EXHAUSTIVE_CAP)
}

/// Exhaustive ML search over at most `cap` candidates. Each level's residual
/// is computed from the full row `y~_l - sum_{j>=l} R_lj s_j` without psi
/// recursion, pruning or division. Ties go to the lexicographically
/// smallest symbol vector.
pub fn exhaustive_ml_capped(
    y: &Vec8,
    factors: &QrFactors,
    constellation: &Constellation,
    cap: u128,
) -> Result<DecodeResult> {
    let candidates = (constellation.q() as u128).pow(DIM as u32);
    if candidates > cap {
        return Err(Error::SearchSpaceTooLarge { candidates, cap });
    }
    let ytilde = zf_point(&factors.q, y);
    let points: Vec<i32> = constellation.points().collect();

    struct Walk<'a> {
        ytilde: &'a Vec8,
        r: &'a Mat8,
        points: &'a [i32],
        s: [i32; DIM],
        best: Option<(f64, [i32; DIM])>,
        visited: u64,
        updates: u64,
    }

    impl Walk<'_> {
        fn descend(&mut self, level: usize, t_parent: f64) {
            for &p in self.points {
                self.s[level] = p;
                let mut e = self.ytilde[level];
                for j in level..DIM {
                    e -= self.r[(level, j)] * self.s[j] as f64;
                }
                let t = t_parent + e * e;
                self.visited += 1;
                if level > 0 {
                    self.descend(level - 1, t);
                    continue;
                }
                let better = match &self.best {
                    None => true,
                    Some((m, b)) => t < *m || (t == *m && self.s < *b),
                };
                if better {
                    self.best = Some((t, self.s));
                    self.updates += 1;
                }
            }
        }
    }

    let mut walk = Walk {
        ytilde: &ytilde,
        r: &factors.r,
        points: &points,
        s: [0; DIM],
        best: None,
        visited: 0,
        updates: 0,
    };
    walk.descend(DIM - 1, 0.0);
    let (metric, s) = walk.best.expect("alphabet is never empty");
    Ok(DecodeResult {
        s_hat: SymbolVector::from_raw(s),
        metric,
        visited_nodes: walk.visited,
        radius_updates: walk.updates,
    })
}
