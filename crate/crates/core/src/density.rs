//! Density functionals on finite windows: Schnirelmann densities, occupation
//! ratios along a finite list of Følner terms, and the Tab(L) lower estimate.
//!
//! Asymptotic quantities (liminf / limsup) are replaced by min / max over the
//! terms actually supplied; reports name the achieving term.

use std::cmp::Ordering;

use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{PointSet1, PointSet2, PrefixSums, RectCounter};
use crate::rational::{cmp_frac, format_ratio, ratio, serde_ratio, Ratio};
use crate::tableau::TableauRegion;

/// `min_{0 <= n < L} |A ∩ [0,n]| / (n+1)` for a set given on `[0, L)`.
pub fn schnirelmann_1d(a: &PointSet1) -> Ratio {
    let mut best = (1u64, 1u64);
    let mut count = 0u64;
    for n in 0..a.window_len() {
        count += a.contains(n).expect("index inside window") as u64;
        if cmp_frac(count, n as u64 + 1, best.0, best.1) == Ordering::Less {
            best = (count, n as u64 + 1);
        }
    }
    ratio(best.0, best.1)
}

/// `min_{n <= N, m <= M} |A ∩ [0,n] x [0,m]| / ((n+1)(m+1))`.
pub fn schnirelmann_2d(a: &PointSet2, n: usize, m: usize) -> Result<Ratio> {
    let w = a.window();
    if w.w < n + 1 || w.h < m + 1 {
        return Err(Error::WindowTooSmall(format!("box [0,{n}]x[0,{m}] exceeds window {w}")));
    }
    let ps = PrefixSums::new(a);
    let mut best = (1u64, 1u64);
    for y in 1..=m as u64 + 1 {
        for x in 1..=n as u64 + 1 {
            let c = ps.count_below(x, y);
            if cmp_frac(c, x * y, best.0, best.1) == Ordering::Less {
                best = (c, x * y);
            }
        }
    }
    Ok(ratio(best.0, best.1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FolnerKind {
    Rect,
    TabL(usize),
}

/// A finite list of origin-anchored tableau regions standing in for a Følner sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolnerSpec {
    pub kind: FolnerKind,
    pub terms: Vec<TableauRegion>,
}

impl FolnerSpec {
    /// Validates the family constraints: box counts, every corner coordinate
    /// at least `r_min`, and term measures nondecreasing.
    pub fn new(kind: FolnerKind, terms: Vec<TableauRegion>, r_min: u64) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            let ok = match kind {
                FolnerKind::Rect => t.len() == 1,
                FolnerKind::TabL(l) => (1..=l).contains(&t.len()),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "term {i} has {} boxes, not allowed for {kind:?}",
                    t.len()
                )));
            }
            if let Some(c) = t.corners().iter().find(|c| c.0 < r_min || c.1 < r_min) {
                return Err(Error::InvalidArgument(format!(
                    "term {i} corner ({}, {}) is below the floor {r_min}",
                    c.0, c.1
                )));
            }
        }
        if terms.windows(2).any(|w| w[0].measure() > w[1].measure()) {
            return Err(Error::InvalidArgument("term measures must be nondecreasing".into()));
        }
        Ok(FolnerSpec { kind, terms })
    }

    /// Square rectangles of the given sides.
    pub fn rect_squares(sides: impl IntoIterator<Item = u64>) -> Result<Self> {
        Self::new(FolnerKind::Rect, sides.into_iter().map(|s| TableauRegion::rect(s, s)).collect(), 1)
    }

    /// The same family with every corner rounded down to a multiple of `d`.
    pub fn divisible_by(&self, d: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("divisor must be positive".into()));
        }
        let terms: Vec<_> = self.terms.iter().map(|t| t.round_down(d)).collect();
        if let Some(i) = terms.iter().position(|t| t.is_empty()) {
            return Err(Error::InvalidArgument(format!("term {i} vanishes after rounding to {d}")));
        }
        Self::new(self.kind, terms, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRatio {
    pub term: usize,
    pub count: u64,
    pub measure: u64,
    #[serde(with = "serde_ratio")]
    pub ratio: Ratio,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityReport {
    pub terms: Vec<TermRatio>,
    #[serde(with = "serde_ratio")]
    pub min: Ratio,
    pub argmin: usize,
    #[serde(with = "serde_ratio")]
    pub max: Ratio,
    pub argmax: usize,
}

impl DensityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("term_index,ratio_num,ratio_den\n");
        for t in &self.terms {
            s.push_str(&format!("{},{},{}\n", t.term, t.ratio.numer(), t.ratio.denom()));
        }
        s
    }
}

/// `|F_n ∩ A| / |F_n|` for every term, with the running extremes.
pub fn prefix_density<C: RectCounter + ?Sized>(a: &C, f: &FolnerSpec) -> Result<DensityReport> {
    if f.terms.is_empty() {
        return Err(Error::InvalidArgument("no Følner terms given".into()));
    }
    let (ew, eh) = a.extent();
    let mut terms = Vec::with_capacity(f.terms.len());
    for (i, t) in f.terms.iter().enumerate() {
        if t.width() > ew || t.height() > eh {
            return Err(Error::WindowTooSmall(format!(
                "term {i} of size {}x{} exceeds {ew}x{eh}",
                t.width(),
                t.height()
            )));
        }
        let count = t.count_in(a);
        let measure = t.measure();
        terms.push(TermRatio { term: i, count, measure, ratio: ratio(count, measure) });
    }
    let argmin = (0..terms.len()).min_by(|&i, &j| terms[i].ratio.cmp(&terms[j].ratio)).unwrap();
    let argmax = (0..terms.len()).max_by(|&i, &j| terms[i].ratio.cmp(&terms[j].ratio).then(j.cmp(&i))).unwrap();
    Ok(DensityReport {
        min: terms[argmin].ratio.clone(),
        max: terms[argmax].ratio.clone(),
        argmin,
        argmax,
        terms,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabEstimate {
    #[serde(with = "serde_ratio")]
    pub value: Ratio,
    pub witness: TableauRegion,
    /// Number of candidate regions compared.
    pub candidates: u64,
}

/// Minimum of `|A ∩ F| / |F|` over unions `F` of at most `l` origin-anchored
/// rectangles whose corner coordinates are multiples of `stride` in `(r, extent]`.
///
/// `extent` defaults to the counter's own extent; for unbounded counters it must be given.
pub fn tab_lower_estimate<C: RectCounter + ?Sized>(
    a: &C,
    r: u64,
    l: usize,
    stride: u64,
    extent: Option<(u64, u64)>,
) -> Result<TabEstimate> {
    if l == 0 || stride == 0 {
        return Err(Error::InvalidArgument("need l >= 1 and stride >= 1".into()));
    }
    let (ew, eh) = extent.unwrap_or_else(|| a.extent());
    if ew == u64::MAX || eh == u64::MAX {
        return Err(Error::InvalidArgument("an explicit extent is needed for this counter".into()));
    }
    let (aw, ah) = a.extent();
    if ew > aw || eh > ah {
        return Err(Error::WindowTooSmall(format!("extent {ew}x{eh} exceeds {aw}x{ah}")));
    }
    let grid = |e: u64| -> Vec<u64> { (r / stride + 1..=e / stride).map(|i| i * stride).collect() };
    let xs = grid(ew);
    let ys = grid(eh);
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::WindowTooSmall(format!("no multiple of {stride} in ({r}, {ew}]x({r}, {eh}]")));
    }
    // counts[i][j] = |A ∩ [0, xs_i) x [0, ys_j)|, with an extra leading column for x = 0
    let table: Vec<Vec<u64>> = std::iter::once(vec![0; ys.len()])
        .chain(xs.par_iter().map(|&x| ys.iter().map(|&y| a.count_below(x, y)).collect::<Vec<_>>()).collect::<Vec<_>>())
        .collect();
    let search = Search { xs: &xs, ys: &ys, table: &table, l };

    // the first (tallest) box fixes the top-level split for the workers
    let starts: Vec<(usize, usize)> =
        (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
    let best = starts
        .par_iter()
        .map(|&(i, j)| {
            let mut st = Best::new();
            let count = table[i + 1][j];
            let meas = xs[i] * ys[j];
            let mut path = vec![(i, j)];
            search.descend(&mut path, count, meas, &mut st);
            st
        })
        .reduce(Best::new, Best::merge);
    let witness = TableauRegion::new(best.path.iter().map(|&(i, j)| (xs[i], ys[j])));
    Ok(TabEstimate { value: ratio(best.num, best.den), witness, candidates: best.seen })
}

struct Search<'a> {
    xs: &'a [u64],
    ys: &'a [u64],
    table: &'a [Vec<u64>],
    l: usize,
}

#[derive(Clone)]
struct Best {
    num: u64,
    den: u64,
    path: Vec<(usize, usize)>,
    seen: u64,
}

impl Best {
    fn new() -> Self {
        Best { num: 1, den: 0, path: Vec::new(), seen: 0 }
    }

    fn better(&self, num: u64, den: u64) -> bool {
        self.den == 0 || cmp_frac(num, den, self.num, self.den) == Ordering::Less
    }

    fn merge(a: Best, b: Best) -> Best {
        let seen = a.seen + b.seen;
        // ties keep the earlier (left) candidate so the witness is deterministic
        let mut w = if b.den != 0 && a.better(b.num, b.den) { b } else { a };
        w.seen = seen;
        w
    }
}

impl Search<'_> {
    fn descend(&self, path: &mut Vec<(usize, usize)>, count: u64, meas: u64, st: &mut Best) {
        st.seen += 1;
        if st.better(count, meas) {
            st.num = count;
            st.den = meas;
            st.path = path.clone();
        }
        if path.len() == self.l {
            return;
        }
        let &(pi, pj) = path.last().unwrap();
        for i in pi + 1..self.xs.len() {
            for j in 0..pj {
                let strip = self.table[i + 1][j] - self.table[pi + 1][j];
                let area = (self.xs[i] - self.xs[pi]) * self.ys[j];
                path.push((i, j));
                self.descend(path, count + strip, meas + area, st);
                path.pop();
            }
        }
    }
}

/// An eventually periodic subset of N: `transient` then `period` repeated forever.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Periodic1 {
    pub transient: Vec<bool>,
    pub period: Vec<bool>,
}

impl Periodic1 {
    pub fn new(transient: Vec<bool>, period: Vec<bool>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidArgument("period must be nonempty".into()));
        }
        Ok(Periodic1 { transient, period })
    }

    /// Multiples of `m`.
    pub fn multiples(m: usize) -> Result<Self> {
        Self::new(Vec::new(), (0..m).map(|i| i == 0).collect())
    }

    pub fn contains(&self, x: u64) -> bool {
        let t = self.transient.len() as u64;
        if x < t {
            self.transient[x as usize]
        } else {
            self.period[((x - t) % self.period.len() as u64) as usize]
        }
    }

    /// `|A ∩ [0, n)|`.
    pub fn count_below(&self, n: u64) -> u64 {
        let t = self.transient.len() as u64;
        if n <= t {
            return self.transient[..n as usize].iter().filter(|&&b| b).count() as u64;
        }
        let head = self.transient.iter().filter(|&&b| b).count() as u64;
        let p = self.period.len() as u64;
        let ones = self.period.iter().filter(|&&b| b).count() as u64;
        let rest = n - t;
        let tail = self.period[..(rest % p) as usize].iter().filter(|&&b| b).count() as u64;
        head + rest / p * ones + tail
    }

    /// Exact natural (hence lower) density.
    pub fn density(&self) -> Ratio {
        ratio(self.period.iter().filter(|&&b| b).count() as u64, self.period.len() as u64)
    }

    pub fn to_pointset(&self, len: usize) -> Result<PointSet1> {
        PointSet1::from_predicate(len, |x| self.contains(x as u64))
    }
}

/// `A x B` for eventually periodic `A`, `B`, counted in closed form.
pub struct ProductSet<'a> {
    pub a: &'a Periodic1,
    pub b: &'a Periodic1,
}

impl RectCounter for ProductSet<'_> {
    fn count_below(&self, x: u64, y: u64) -> u64 {
        self.a.count_below(x) * self.b.count_below(y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductReport {
    #[serde(with = "serde_ratio")]
    pub estimate: Ratio,
    #[serde(with = "serde_ratio")]
    pub expected: Ratio,
    #[serde(with = "serde_ratio")]
    pub gap: Ratio,
    pub witness: TableauRegion,
}

/// Compares the Tab(L) lower estimate of `A x B` with `d(A) d(B)`.
pub fn product_density_check(
    a: &Periodic1,
    b: &Periodic1,
    l: usize,
    r: u64,
    stride: u64,
    extent: u64,
) -> Result<ProductReport> {
    let expected = a.density() * b.density();
    let est = tab_lower_estimate(&ProductSet { a, b }, r, l, stride, Some((extent, extent)))?;
    let gap = (&est.value - &expected).abs();
    Ok(ProductReport { estimate: est.value, expected, gap, witness: est.witness })
}

impl std::fmt::Display for ProductReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "estimate {} expected {} gap {}",
            format_ratio(&self.estimate),
            format_ratio(&self.expected),
            format_ratio(&self.gap)
        )
    }
}
