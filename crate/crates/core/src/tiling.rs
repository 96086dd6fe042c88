//! Q^2-tilings of tableau regions: coarse blocks per corner strip, the
//! refinement by horizontal cuts, and the geometric steps built on it
//! (measurable hulls, point trimming, staircase extraction, bad strips).

use std::fmt::Write as _;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::lattice::PointSet2;
use crate::rational::{ratio, Ratio};
use crate::tableau::{DTableauRegion, Tableau, TableauRegion};
use crate::trimming::{max_alpha, trim, upper_regions_at_most, SmaxSearch, WeightedTableau};
use crate::{Error, Result};

/// Half-open rectangle `[x0,x1) x [y0,y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u64,
    pub x1: u64,
    pub y0: u64,
    pub y1: u64,
}

impl Rect {
    pub fn new(x0: u64, x1: u64, y0: u64, y1: u64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn measure(&self) -> u64 {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.measure() == 0
    }

    pub fn contains(&self, x: u64, y: u64) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }

    pub fn intersect(&self, o: &Rect) -> Rect {
        Rect::new(self.x0.max(o.x0), self.x1.min(o.x1), self.y0.max(o.y0), self.y1.min(o.y1))
    }

    /// `|A ∩ self|`.
    pub fn count(&self, a: &PointSet2) -> u64 {
        a.count_rect(self.x0 as usize, self.x1 as usize, self.y0 as usize, self.y1 as usize)
    }

    /// Measure of `region ∩ self`.
    pub fn measure_in(&self, region: &TableauRegion) -> u64 {
        region
            .strips()
            .into_iter()
            .map(|(a, b, h)| Rect::new(a, b, 0, h).intersect(self).measure())
            .sum()
    }
}

/// Measure of a union of possibly overlapping rectangles, by coordinate
/// compression.
pub fn union_measure(rects: &[Rect]) -> u64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| !r.is_empty()).collect();
    let mut xs: Vec<u64> = rects.iter().flat_map(|r| [r.x0, r.x1]).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut total = 0;
    for w in xs.windows(2) {
        let mut ys: Vec<(u64, u64)> =
            rects.iter().filter(|r| r.x0 <= w[0] && w[1] <= r.x1).map(|r| (r.y0, r.y1)).collect();
        ys.sort_unstable();
        let mut covered = 0;
        let mut cur: Option<(u64, u64)> = None;
        for (a, b) in ys {
            match cur {
                Some((c0, c1)) if a <= c1 => cur = Some((c0, c1.max(b))),
                _ => {
                    if let Some((c0, c1)) = cur {
                        covered += c1 - c0;
                    }
                    cur = Some((a, b));
                }
            }
        }
        if let Some((c0, c1)) = cur {
            covered += c1 - c0;
        }
        total += covered * (w[1] - w[0]);
    }
    total
}

/// A block `C^m_{i,j}` of the unrefined tiling (all indices 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseCell {
    pub m: usize,
    pub i: usize,
    pub j: usize,
    pub rect: Rect,
}

/// A cell of the refined tiling. `(col, row)` is its point in the index
/// tableau; `(m, i, j)` names the coarse block containing it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub rect: Rect,
    pub col: usize,
    pub row: usize,
    pub m: usize,
    pub i: usize,
    pub j: usize,
}

/// The refined Q^2-tiling of a tableau region.
///
/// `cells` is indexed in [`Tableau::cells`] order of `index_tableau`, so cell
/// `k` corresponds to the `k`-th index point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingContext {
    pub f: DTableauRegion,
    pub q: u64,
    pub cells0: Vec<CoarseCell>,
    pub y_ordinates: Vec<u64>,
    pub cells: Vec<Cell>,
    pub index_tableau: Tableau,
}

#[derive(Deserialize)]
struct ContextSeed {
    f: DTableauRegion,
    q: u64,
}

impl TilingContext {
    pub fn build(f: &TableauRegion, q: u64) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!("Q must be at least 2, got {q}")));
        }
        if f.is_empty() {
            return Err(Error::InvalidArgument("cannot tile an empty region".into()));
        }
        let f = DTableauRegion::new(f.clone(), q * q)?;
        let strips = f.region().strips();

        let mut cells0 = Vec::with_capacity(strips.len() * (q * q) as usize);
        let mut ys = vec![];
        for (m, &(w0, w1, h)) in strips.iter().enumerate() {
            let dx = (w1 - w0) / q;
            let dy = h / q;
            for i in 0..q {
                for j in 0..q {
                    let rect = Rect::new(w0 + i * dx, w0 + (i + 1) * dx, j * dy, (j + 1) * dy);
                    cells0.push(CoarseCell { m, i: i as usize, j: j as usize, rect });
                }
            }
            ys.extend((0..=q).map(|j| j * dy));
        }
        ys.sort_unstable();
        ys.dedup();

        let mut profile = Vec::new();
        let mut cells = Vec::new();
        for (m, &(w0, w1, h)) in strips.iter().enumerate() {
            let dx = (w1 - w0) / q;
            let rows = ys.iter().take_while(|&&y| y < h).count();
            for i in 0..q {
                let col = profile.len();
                profile.push(rows);
                for row in 0..rows {
                    let rect = Rect::new(w0 + i * dx, w0 + (i + 1) * dx, ys[row], ys[row + 1]);
                    let j = (ys[row] * q / h) as usize;
                    cells.push(Cell { rect, col, row, m, i: i as usize, j });
                }
            }
        }
        let ctx = TilingContext {
            f,
            q,
            cells0,
            y_ordinates: ys,
            cells,
            index_tableau: Tableau::from_profile(profile)?,
        };
        ctx.check()?;
        Ok(ctx)
    }

    /// Re-verifies the build invariants: exact partition by measure, cell
    /// sides that are positive multiples of Q, refinement of the coarse
    /// blocks, and the adjacency carried by the index map.
    pub fn check(&self) -> Result<()> {
        let q = self.q;
        let f = self.f.region();
        let total: u64 = self.cells.iter().map(|c| c.rect.measure()).sum();
        if total != f.measure() {
            return Err(Error::Contract(format!("cells cover {total} points, region has {}", f.measure())));
        }
        if self.cells.len() != self.index_tableau.measure() {
            return Err(Error::Contract("cell count differs from the index tableau".into()));
        }
        let strips = f.strips();
        for (k, c) in self.cells.iter().enumerate() {
            let r = c.rect;
            let (w, h) = (r.x1 - r.x0, r.y1 - r.y0);
            if w == 0 || h == 0 || w % q != 0 || h % q != 0 {
                return Err(Error::Contract(format!("cell {r:?} does not have sides divisible by {q}")));
            }
            let (_, _, hm) = strips[c.m];
            if r.y1 > hm || self.index_tableau.cell_index(c.col, c.row) != Some(k) {
                return Err(Error::Contract(format!("cell {k} is misplaced")));
            }
            let coarse = &self.cells0[self.coarse_index(c.m, c.i, c.j)].rect;
            if coarse.intersect(&r) != r {
                return Err(Error::Contract(format!("cell {r:?} leaves its coarse block {coarse:?}")));
            }
            if let Some(n) = self.cell_at(c.col + 1, c.row) {
                let o = self.cells[n].rect;
                if o.x0 != r.x1 || o.y0 != r.y0 || o.y1 != r.y1 {
                    return Err(Error::Contract(format!("right neighbour of {r:?} is {o:?}")));
                }
            }
            if let Some(n) = self.cell_at(c.col, c.row + 1) {
                let o = self.cells[n].rect;
                if o.y0 != r.y1 || o.x0 != r.x0 || o.x1 != r.x1 {
                    return Err(Error::Contract(format!("upper neighbour of {r:?} is {o:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn region(&self) -> &TableauRegion {
        self.f.region()
    }

    /// Number of corner strips `ℓ`.
    pub fn ell(&self) -> usize {
        self.region().len()
    }

    pub fn coarse_index(&self, m: usize, i: usize, j: usize) -> usize {
        let q = self.q as usize;
        (m * q + i) * q + j
    }

    /// The cell at index point `(col, row)`, if any.
    pub fn cell_at(&self, col: usize, row: usize) -> Option<usize> {
        self.index_tableau.cell_index(col, row)
    }

    /// Index of the cell containing lattice point `(x, y)`.
    pub fn cell_of(&self, x: u64, y: u64) -> Option<usize> {
        if !self.region().contains(x, y) {
            return None;
        }
        let col = self.cells.iter().find(|c| c.row == 0 && c.rect.x0 <= x && x < c.rect.x1)?.col;
        let row = self.y_ordinates.partition_point(|&v| v <= y) - 1;
        self.cell_at(col, row)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rebuilds from a dump and checks that the stored cells match.
    pub fn from_json(s: &str) -> Result<Self> {
        let seed: ContextSeed = serde_json::from_str(s)?;
        let ctx = Self::build(seed.f.region(), seed.q)?;
        let stored: TilingContext = serde_json::from_str(s)?;
        if stored != ctx {
            return Err(Error::Parse("stored tiling differs from the rebuilt one".into()));
        }
        Ok(ctx)
    }

    fn check_inside(&self, a: &PointSet2) -> Result<()> {
        if let Some((x, y)) = a.iter().find(|&(x, y)| !self.region().contains(x as u64, y as u64)) {
            return Err(Error::InvalidArgument(format!("point ({x}, {y}) lies outside the tiled region")));
        }
        Ok(())
    }
}

/// The part of `f` below every point of `pts`, i.e. `F'` with `F \ F'` the
/// upper set generated by `pts` inside `f`.
pub fn below_points(f: &TableauRegion, pts: impl IntoIterator<Item = (u64, u64)>) -> TableauRegion {
    let mut pts: Vec<(u64, u64)> = pts.into_iter().collect();
    pts.sort_unstable();
    let mut xs: Vec<u64> = f.corners().iter().map(|c| c.0).chain(pts.iter().map(|p| p.0)).collect();
    xs.sort_unstable();
    xs.dedup();
    // piecewise constant height on [xs[k-1], xs[k])
    let mut corners = Vec::new();
    let mut lowest = u64::MAX;
    let mut next = 0;
    let mut prev = 0;
    for &x in &xs {
        if x > prev {
            corners.push((x, f.height_at(prev).min(lowest)));
        }
        while next < pts.len() && pts[next].0 <= x {
            lowest = lowest.min(pts[next].1);
            next += 1;
        }
        prev = x;
    }
    TableauRegion::new(corners)
}

/// The smallest union of refined cells containing the upper set `F \ F'`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hull {
    /// Cells meeting the upper set, in cell order.
    pub cells: Vec<usize>,
    /// Index points outside the hull; a subtableau of the index tableau.
    pub complement: Tableau,
    pub measure: u64,
    pub set_measure: u64,
    /// Coarse blocks meeting both the upper set and `F'`.
    pub mixed_coarse: usize,
}

impl Hull {
    pub fn excess(&self) -> u64 {
        self.measure - self.set_measure
    }
}

/// Hull of `S = F \ F'`. The bounds `|S~ \ S| <= 2|F|/Q` and, per strip,
/// `|S^ \ S| <= 2|U_m|/Q` for the coarse hull are checked on every call.
pub fn measurable_hull(ctx: &TilingContext, f_prime: &TableauRegion) -> Result<Hull> {
    let f = ctx.region();
    if !f_prime.is_subregion(f) {
        return Err(Error::NotUpperSet(format!("{:?} is not contained in the tiled region", f_prime.corners())));
    }
    // a cell lies inside F' iff its top right lattice point does
    let meets_s = |r: &Rect| !f_prime.contains(r.x1 - 1, r.y1 - 1);
    let meets_fp = |r: &Rect| f_prime.contains(r.x0, r.y0);

    let cells: Vec<usize> = (0..ctx.cells.len()).filter(|&k| meets_s(&ctx.cells[k].rect)).collect();
    let mut profile = ctx.index_tableau.profile().to_vec();
    for &k in &cells {
        let c = &ctx.cells[k];
        profile[c.col] = profile[c.col].min(c.row);
    }
    let complement = Tableau::from_profile(profile)?;
    if complement.measure() + cells.len() != ctx.cells.len() {
        return Err(Error::Contract("hull index set is not an upper set".into()));
    }
    let measure: u64 = cells.iter().map(|&k| ctx.cells[k].rect.measure()).sum();
    let set_measure = f.measure() - f_prime.measure();
    let q = ctx.q;
    if (measure - set_measure) * q > 2 * f.measure() {
        return Err(Error::Contract(format!(
            "hull excess {} exceeds 2|F|/Q with |F| = {}, Q = {q}",
            measure - set_measure,
            f.measure()
        )));
    }

    let mut mixed_coarse = 0;
    for (m, &(w0, w1, h)) in f.strips().iter().enumerate() {
        let strip = Rect::new(w0, w1, 0, h);
        let s_here = strip.measure() - strip.measure_in(f_prime);
        let hat: u64 = ctx
            .cells0
            .iter()
            .filter(|c| c.m == m && meets_s(&c.rect))
            .map(|c| {
                if meets_fp(&c.rect) {
                    mixed_coarse += 1;
                }
                c.rect.measure()
            })
            .sum();
        if (hat - s_here) * q > 2 * strip.measure() {
            return Err(Error::Contract(format!("coarse hull excess in strip {m} exceeds 2|U|/Q")));
        }
    }
    Ok(Hull { cells, complement, measure, set_measure, mixed_coarse })
}

/// Result of rounding a trimmed density profile back to points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimmedPoints {
    pub a_prime: PointSet2Dump,
    #[serde(with = "crate::rational::serde_ratio")]
    pub alpha: Ratio,
    #[serde(with = "crate::rational::serde_ratio_vec")]
    pub rho_prime: Vec<Ratio>,
    /// Points kept per cell, in cell order.
    pub counts: Vec<u64>,
    /// Whether the upper-region bound was checked by enumeration.
    pub exhaustive: bool,
}

/// Point list of a set together with its window.
pub type PointSet2Dump = crate::lattice::PointSetJson;

impl TrimmedPoints {
    pub fn set(&self) -> Result<PointSet2> {
        PointSet2::from_json(&self.a_prime)
    }
}

/// The weighted index tableau of `a`: `μ(t)` is the cell size and `ρ(t)` the
/// fraction of the cell occupied by `a`.
pub fn cell_weights(ctx: &TilingContext, a: &PointSet2) -> Result<WeightedTableau> {
    let mu = ctx.cells.iter().map(|c| ratio(c.rect.measure(), 1u64)).collect();
    let rho = ctx.cells.iter().map(|c| ratio(c.rect.count(a), c.rect.measure())).collect();
    WeightedTableau::new(ctx.index_tableau.clone(), mu, rho)
}

/// Thins `a` so that every measurable upper region has density at most
/// `α + 1/Q^2` while the whole region keeps density at least `α`, where `α`
/// is the least density of `a` on a measurable subregion. Both conclusions
/// are re-checked before returning.
pub fn trim_points(ctx: &TilingContext, a: &PointSet2, guard: u128) -> Result<TrimmedPoints> {
    ctx.check_inside(a)?;
    let wt = cell_weights(ctx, a)?;
    let alpha = max_alpha(&wt)?;
    let out = trim(&wt, &alpha, SmaxSearch::Dp)?;

    let mut a_prime = PointSet2::empty(a.window());
    let mut counts = Vec::with_capacity(ctx.cells.len());
    for (c, rp) in ctx.cells.iter().zip(&out.rho_prime) {
        let want = (rp * ratio(c.rect.measure(), 1u64)).ceil().to_integer();
        let want: u64 = want.try_into().map_err(|_| Error::Contract("cell count overflow".into()))?;
        let mut taken = 0;
        'rows: for y in c.rect.y0..c.rect.y1 {
            for x in c.rect.x0..c.rect.x1 {
                if taken == want {
                    break 'rows;
                }
                if a.get(x as usize, y as usize) {
                    a_prime.insert(x as usize, y as usize)?;
                    taken += 1;
                }
            }
        }
        if taken != want {
            return Err(Error::Contract(format!("cell {:?} has fewer than {want} points", c.rect)));
        }
        counts.push(taken);
    }

    let q2 = ratio(1u64, ctx.q * ctx.q);
    let kept: Vec<Ratio> = ctx.cells.iter().zip(&counts).map(|(c, &n)| ratio(n, c.rect.measure())).collect();
    let (upper_ok, exhaustive) = upper_regions_at_most(&wt, &kept, &(&alpha + &q2), guard)?;
    let whole_ok = ratio(a_prime.len() as u64, ctx.region().measure()) >= alpha;
    if !upper_ok || !whole_ok {
        return Err(Error::Contract(format!(
            "trimmed points fail the density bounds (upper regions ok: {upper_ok}, whole region ok: {whole_ok})"
        )));
    }
    Ok(TrimmedPoints { a_prime: a_prime.to_json(), alpha, rho_prime: out.rho_prime, counts, exhaustive })
}

/// Points `a_1, ..., a_J` of a set picked down the corners of its measurable
/// hull, with the disjoint translated regions `G_j` they generate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaircaseResult {
    pub points: Vec<(u64, u64)>,
    /// `G_j` as disjoint rectangles, one list per point.
    pub g_parts: Vec<Vec<Rect>>,
    pub g_measure: u64,
    /// `F'` such that `S = F \ F'` is the upper set generated by the input.
    pub below: TableauRegion,
    pub s_measure: u64,
    pub hull: Hull,
    /// `|S \ G|` lies within `1/|F|` (relative) of the `3|F|/Q` bound.
    pub tight: bool,
}

impl StaircaseResult {
    pub fn g_rects(&self) -> Vec<Rect> {
        self.g_parts.iter().flatten().copied().collect()
    }
}

/// `(a + N^2) ∩ F` below height `cap`, as one rectangle per strip.
fn quadrant(f: &TableauRegion, a: (u64, u64), cap: u64) -> Vec<Rect> {
    f.strips()
        .into_iter()
        .map(|(x0, x1, h)| Rect::new(x0.max(a.0), x1, a.1, h.min(cap)))
        .filter(|r| r.x0 < r.x1 && r.y0 < r.y1)
        .collect()
}

pub fn staircase(ctx: &TilingContext, a_prime: &PointSet2) -> Result<StaircaseResult> {
    if a_prime.is_empty() {
        return Err(Error::InvalidArgument("staircase needs a nonempty set".into()));
    }
    ctx.check_inside(a_prime)?;
    let f = ctx.region();
    let below = below_points(f, a_prime.iter().map(|(x, y)| (x as u64, y as u64)));
    let hull = measurable_hull(ctx, &below)?;
    let t_prime = &hull.complement;
    let in_hull = |col: usize, row: usize| ctx.index_tableau.contains(col, row) && !t_prime.contains(col, row);

    // lower-left corners of the hull's index set, highest first, then leftmost
    let mut corners: Vec<usize> = hull
        .cells
        .iter()
        .copied()
        .filter(|&k| {
            let c = &ctx.cells[k];
            (c.col == 0 || !in_hull(c.col - 1, c.row)) && (c.row == 0 || !in_hull(c.col, c.row - 1))
        })
        .collect();
    corners.sort_by_key(|&k| (std::cmp::Reverse(ctx.cells[k].row), ctx.cells[k].col));

    let mut points = Vec::new();
    let mut g_parts = Vec::new();
    let mut next = corners.first().copied();
    while let Some(k) = next {
        let c = ctx.cells[k];
        let r = c.rect;
        let a = (r.y0..r.y1)
            .flat_map(|y| (r.x0..r.x1).map(move |x| (x, y)))
            .find(|&(x, y)| a_prime.get(x as usize, y as usize))
            .ok_or_else(|| Error::Contract(format!("corner cell {r:?} holds no point")))?;
        let cap = points.last().map_or(u64::MAX, |p: &(u64, u64)| p.1);
        g_parts.push(quadrant(f, a, cap));
        points.push(a);
        next = corners.iter().copied().find(|&k2| ctx.cells[k2].row + 2 <= c.row);
    }

    let q = ctx.q;
    if let Some(w) = points.windows(2).find(|w| w[1].1 + q > w[0].1) {
        return Err(Error::Contract(format!("staircase points {w:?} are closer than Q vertically")));
    }
    let g_rects: Vec<Rect> = g_parts.iter().flatten().copied().collect();
    let g_measure: u64 = g_rects.iter().map(Rect::measure).sum();
    if union_measure(&g_rects) != g_measure {
        return Err(Error::Contract("staircase regions overlap".into()));
    }
    let generated = f.measure() - below_points(f, points.iter().copied()).measure();
    if generated != g_measure {
        return Err(Error::Contract("staircase regions do not cover the upper set of their points".into()));
    }
    let s_measure = hull.set_measure;
    let gap = s_measure - g_measure;
    if gap * q > 3 * f.measure() {
        return Err(Error::Contract(format!("|S \\ G| = {gap} exceeds 3|F|/Q with |F| = {}", f.measure())));
    }
    let tight = 3 * f.measure() - gap * q <= q;
    Ok(StaircaseResult { points, g_parts, g_measure, below, s_measure, hull, tight })
}

/// Strips of relative width `1/Q` along the top of every corner rectangle and
/// the right edge of every column strip.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadRegion {
    pub rows: Vec<Rect>,
    pub cols: Vec<Rect>,
}

impl BadRegion {
    pub fn contains(&self, x: u64, y: u64) -> bool {
        self.rows.iter().chain(&self.cols).any(|r| r.contains(x, y))
    }

    pub fn row_measure(&self) -> u64 {
        union_measure(&self.rows)
    }
}

pub fn bad_regions(ctx: &TilingContext) -> Result<BadRegion> {
    let q = ctx.q;
    let f = ctx.region();
    let strips = f.strips();
    let rows: Vec<Rect> = strips.iter().map(|&(_, w1, h)| Rect::new(0, w1, (q - 1) * h / q, h)).collect();
    let cols: Vec<Rect> =
        strips.iter().map(|&(w0, w1, h)| Rect::new(w0 + (q - 1) * (w1 - w0) / q, w1, 0, h)).collect();
    let bad = BadRegion { rows, cols };
    if bad.row_measure() * q > ctx.ell() as u64 * f.measure() {
        return Err(Error::Contract("bad rows exceed ℓ|F|/Q".into()));
    }
    for (c, &(w0, w1, h)) in bad.cols.iter().zip(&strips) {
        if c.measure() * q != (w1 - w0) * h {
            return Err(Error::Contract(format!("bad column {c:?} is not 1/Q of its strip")));
        }
    }
    Ok(bad)
}

/// `A' \ (bad rows ∪ bad columns)`; checks that at most `(ℓ+1)|F|/Q` points go.
pub fn remove_bad(ctx: &TilingContext, a_prime: &PointSet2, bad: &BadRegion) -> Result<PointSet2> {
    let mut a0 = a_prime.clone();
    for (x, y) in a_prime.iter() {
        if bad.contains(x as u64, y as u64) {
            a0.remove(x, y)?;
        }
    }
    let removed = (a_prime.len() - a0.len()) as u64;
    if removed * ctx.q > (ctx.ell() as u64 + 1) * ctx.region().measure() {
        return Err(Error::Contract(format!("removed {removed} points, more than (ℓ+1)|F|/Q")));
    }
    Ok(a0)
}

/// Optional overlays for [`render_svg`].
#[derive(Default)]
pub struct SvgLayers<'a> {
    pub upper_set_below: Option<&'a TableauRegion>,
    pub hull: Option<&'a Hull>,
    pub g: Option<&'a [Rect]>,
    pub bad: Option<&'a BadRegion>,
    pub points: Option<&'a PointSet2>,
}

/// SVG drawing of the tiling with the given overlays, origin at the bottom left.
pub fn render_svg(ctx: &TilingContext, layers: &SvgLayers) -> String {
    let f = ctx.region();
    let (w, h) = (f.width() as f64, f.height() as f64);
    let scale = 600.0 / w.max(h);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="-1 -1 {:.0} {:.0}">"#,
        w * scale + 2.0,
        h * scale + 2.0,
        w * scale + 2.0,
        h * scale + 2.0
    );
    let rect = |s: &mut String, r: &Rect, style: &str| {
        let _ = writeln!(
            s,
            r#"  <rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            r.x0 as f64 * scale,
            (h - r.y1 as f64) * scale,
            (r.x1 - r.x0) as f64 * scale,
            (r.y1 - r.y0) as f64 * scale
        );
    };
    let group = |s: &mut String, id: &str, rects: &mut dyn Iterator<Item = Rect>, style: &str| {
        let _ = writeln!(s, r#" <g id="{id}">"#);
        for r in rects {
            rect(s, &r, style);
        }
        let _ = writeln!(s, " </g>");
    };
    let strips = f.strips();
    group(&mut s, "region", &mut strips.iter().map(|&(a, b, hh)| Rect::new(a, b, 0, hh)), r##"fill="#f4f4f4""##);
    if let Some(fp) = layers.upper_set_below {
        let mut it = strips.iter().map(|&(a, b, hh)| Rect::new(a, b, fp.height_at(a).min(hh), hh));
        group(&mut s, "upper-set", &mut it, r##"fill="#9ecae1""##);
    }
    if let Some(hull) = layers.hull {
        let mut it = hull.cells.iter().map(|&k| ctx.cells[k].rect);
        group(&mut s, "hull", &mut it, r##"fill="none" stroke="#3182bd" stroke-width="2""##);
    }
    if let Some(g) = layers.g {
        group(&mut s, "staircase", &mut g.iter().copied(), r##"fill="#a1d99b" fill-opacity="0.6""##);
    }
    if let Some(bad) = layers.bad {
        let mut it = bad.rows.iter().chain(&bad.cols).copied();
        group(&mut s, "bad", &mut it, r##"fill="#fc9272" fill-opacity="0.5""##);
    }
    group(&mut s, "cells", &mut ctx.cells.iter().map(|c| c.rect), r##"fill="none" stroke="#999" stroke-width="0.5""##);
    group(&mut s, "blocks", &mut ctx.cells0.iter().map(|c| c.rect), r##"fill="none" stroke="#333" stroke-width="1""##);
    if let Some(p) = layers.points {
        let _ = writeln!(s, r#" <g id="points" fill="black">"#);
        for (x, y) in p.iter() {
            let _ = writeln!(
                s,
                r#"  <circle cx="{:.2}" cy="{:.2}" r="{:.2}"/>"#,
                (x as f64 + 0.5) * scale,
                (h - y as f64 - 0.5) * scale,
                (scale * 0.35).max(0.5)
            );
        }
        let _ = writeln!(s, " </g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Exact density of `a` on a union of disjoint rectangles.
pub fn density_on(a: &PointSet2, rects: &[Rect]) -> Option<Ratio> {
    let m: u64 = rects.iter().map(Rect::measure).sum();
    if m == 0 {
        return None;
    }
    let c: u64 = rects.iter().map(|r| r.count(a)).sum();
    Some(ratio(c, m))
}

/// Fraction of `|F|` that a measure represents.
pub fn relative(ctx: &TilingContext, m: u64) -> Ratio {
    let f = ctx.region().measure();
    if f == 0 {
        Ratio::zero()
    } else if m == f {
        Ratio::one()
    } else {
        ratio(m, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Window;
    use proptest::prelude::*;

    fn ctx(corners: &[(u64, u64)], q: u64) -> TilingContext {
        TilingContext::build(&TableauRegion::new(corners.iter().copied()), q).unwrap()
    }

    fn window_of(c: &TilingContext) -> Window {
        let f = c.region();
        Window::new(f.width() as usize, f.height() as usize).unwrap()
    }

    // every lattice point of F in exactly one cell, and neighbours in the
    // index tableau touch along a full edge
    fn brute_partition(c: &TilingContext) {
        let f = c.region();
        for x in 0..f.width() {
            for y in 0..f.height() {
                let hits = c.cells.iter().filter(|cell| cell.rect.contains(x, y)).count();
                assert_eq!(hits, usize::from(f.contains(x, y)), "point ({x},{y})");
            }
        }
        for cell in &c.cells {
            let r = cell.rect;
            if let Some(n) = c.cell_at(cell.col + 1, cell.row) {
                let holder = c.cells.iter().position(|o| o.rect.contains(r.x1, r.y0)).unwrap();
                let top = c.cells.iter().position(|o| o.rect.contains(r.x1, r.y1 - 1)).unwrap();
                assert_eq!((holder, top), (n, n));
            }
            if let Some(n) = c.cell_at(cell.col, cell.row + 1) {
                let holder = c.cells.iter().position(|o| o.rect.contains(r.x0, r.y1)).unwrap();
                let right = c.cells.iter().position(|o| o.rect.contains(r.x1 - 1, r.y1)).unwrap();
                assert_eq!((holder, right), (n, n));
            }
        }
    }

    #[test]
    fn single_square() {
        let c = ctx(&[(4, 4)], 2);
        assert_eq!(c.cells0.len(), 4);
        assert_eq!(c.cells.len(), 4);
        assert_eq!(c.index_tableau.profile(), &[2, 2]);
        brute_partition(&c);
    }

    #[test]
    fn two_strips_refinement_count() {
        let c = ctx(&[(16, 32), (32, 16)], 4);
        assert_eq!(c.cells0.len(), 32);
        assert_eq!(c.y_ordinates, vec![0, 4, 8, 12, 16, 24, 32]);
        // the two coarse rows of height 8 below y = 16 in strip one are cut at 4 and 12
        assert_eq!(c.cells.len(), 32 + 4 * 2);
        assert_eq!(c.index_tableau.profile(), &[6, 6, 6, 6, 4, 4, 4, 4]);
        brute_partition(&c);
    }

    #[test]
    fn minimal_two_strip_adjacency() {
        let c = ctx(&[(8, 8), (16, 4)], 2);
        assert_eq!(c.y_ordinates, vec![0, 2, 4, 8]);
        assert_eq!(c.index_tableau.profile(), &[3, 3, 2, 2]);
        brute_partition(&c);
        for x in 0..16 {
            for y in 0..8 {
                let k = c.cell_of(x, y);
                assert_eq!(k.is_some(), c.region().contains(x, y));
                if let Some(k) = k {
                    assert!(c.cells[k].rect.contains(x, y));
                }
            }
        }
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(TilingContext::build(&TableauRegion::rect(6, 8), 2).is_err());
        assert!(TilingContext::build(&TableauRegion::rect(8, 8), 1).is_err());
        assert!(TilingContext::build(&TableauRegion::empty(), 2).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ctx(&[(8, 8), (16, 4)], 2);
        let s = c.to_json().unwrap();
        assert_eq!(TilingContext::from_json(&s).unwrap(), c);
        let tampered = s.replacen("\"x1\": 4", "\"x1\": 5", 1);
        assert!(TilingContext::from_json(&tampered).is_err());
    }

    #[test]
    fn union_measure_overlaps() {
        let r = [Rect::new(0, 4, 0, 4), Rect::new(2, 6, 2, 6), Rect::new(10, 11, 0, 1)];
        assert_eq!(union_measure(&r), 16 + 16 - 4 + 1);
        assert_eq!(union_measure(&[]), 0);
    }

    #[test]
    fn below_points_matches_brute_force() {
        let f = TableauRegion::new([(5, 7), (9, 3)]);
        let pts = [(2, 5), (4, 1), (7, 0), (6, 2)];
        let fp = below_points(&f, pts);
        for x in 0..12 {
            for y in 0..10 {
                let above = pts.iter().any(|&(a, b)| a <= x && b <= y);
                assert_eq!(fp.contains(x, y), f.contains(x, y) && !above, "({x},{y})");
            }
        }
    }

    #[test]
    fn hull_of_whole_and_empty() {
        let c = ctx(&[(16, 32), (32, 16)], 4);
        let whole = measurable_hull(&c, &TableauRegion::empty()).unwrap();
        assert_eq!(whole.cells.len(), c.cells.len());
        assert_eq!(whole.excess(), 0);
        let none = measurable_hull(&c, c.region()).unwrap();
        assert!(none.cells.is_empty());
        assert_eq!(none.measure, 0);
    }

    #[test]
    fn hull_boundary_blocks_on_square() {
        let c = ctx(&[(16, 16)], 4);
        let fp = TableauRegion::new([(2, 14), (6, 10), (10, 6), (14, 2)]);
        let h = measurable_hull(&c, &fp).unwrap();
        assert_eq!(h.mixed_coarse, 7);
        assert!((h.mixed_coarse as u64) < 2 * c.q);
    }

    #[test]
    fn hull_rejects_non_subregion() {
        let c = ctx(&[(16, 16)], 4);
        assert!(matches!(measurable_hull(&c, &TableauRegion::rect(20, 1)), Err(Error::NotUpperSet(_))));
    }

    #[test]
    fn trim_points_full_set() {
        let c = ctx(&[(8, 8)], 2);
        let a = PointSet2::full(window_of(&c));
        let t = trim_points(&c, &a, 1 << 20).unwrap();
        assert_eq!(t.alpha, Ratio::one());
        assert_eq!(t.set().unwrap(), a);
    }

    #[test]
    fn trim_points_thins_dense_top() {
        let c = ctx(&[(8, 8)], 2);
        let w = window_of(&c);
        let a = PointSet2::from_predicate(w, |x, y| y >= 4 || (y == 0 && x % 4 == 0));
        let t = trim_points(&c, &a, 1 << 20).unwrap();
        assert_eq!(t.alpha, ratio(1u64, 16u64));
        assert!(t.exhaustive);
        let ap = t.set().unwrap();
        let top = Rect::new(0, 8, 4, 8);
        assert!(top.count(&ap) < top.count(&a));
        assert!(ap.is_subset(&a).unwrap());
        // the same conclusions by direct enumeration of measurable upper regions
        let wt = cell_weights(&c, &ap).unwrap();
        let bound = &t.alpha + ratio(1u64, 4u64);
        for s in c.index_tableau.subtableaux(true, 1 << 20).unwrap() {
            if s == c.index_tableau {
                continue;
            }
            let avg = wt.average(&wt.rho, wt.cells_outside(&s)).unwrap();
            assert!(avg <= bound);
        }
        assert!(ratio(ap.len() as u64, 64u64) >= t.alpha);
    }

    #[test]
    fn trim_points_with_empty_cell() {
        let c = ctx(&[(8, 8)], 2);
        let a = PointSet2::from_predicate(window_of(&c), |x, y| x >= 4 || y >= 4);
        let t = trim_points(&c, &a, 1 << 20).unwrap();
        assert!(t.alpha.is_zero());
        assert!(t.set().unwrap().is_subset(&a).unwrap());
    }

    #[test]
    fn staircase_single_origin_point() {
        let c = ctx(&[(16, 32), (32, 16)], 4);
        let a = PointSet2::from_points(window_of(&c), [(0, 0)]).unwrap();
        let s = staircase(&c, &a).unwrap();
        assert_eq!(s.points, vec![(0, 0)]);
        assert_eq!(s.g_measure, c.region().measure());
        assert_eq!(s.s_measure, c.region().measure());
    }

    #[test]
    fn staircase_descends_past_a_row() {
        let c = ctx(&[(16, 16)], 4);
        let a = PointSet2::from_points(window_of(&c), (0..16).map(|i| (i, 15 - i))).unwrap();
        let s = staircase(&c, &a).unwrap();
        // corners sit in rows 3,2,1,0; picks take rows 3 and 1
        assert_eq!(s.points, vec![(3, 12), (11, 4)]);
        assert_eq!(s.g_parts[1], vec![Rect::new(11, 16, 4, 12)]);
    }

    #[test]
    fn staircase_one_cell() {
        let c = ctx(&[(16, 16)], 4);
        let a = PointSet2::from_points(window_of(&c), [(5, 6), (6, 5), (7, 7)]).unwrap();
        let s = staircase(&c, &a).unwrap();
        assert_eq!(s.points.len(), 1);
    }

    #[test]
    fn bad_regions_strip_fraction() {
        let c = ctx(&[(16, 48), (32, 32), (48, 16)], 4);
        let bad = bad_regions(&c).unwrap();
        let u2 = Rect::new(16, 32, 0, 32);
        assert_eq!(bad.rows[1].intersect(&u2).measure() * 4, u2.measure());
        let one = ctx(&[(16, 16)], 4);
        let b1 = bad_regions(&one).unwrap();
        assert_eq!(b1.row_measure() * 4, 256);
    }

    #[test]
    fn remove_bad_keeps_safe_points() {
        let c = ctx(&[(16, 16)], 4);
        let a = PointSet2::from_points(window_of(&c), [(0, 0), (5, 5), (11, 3)]).unwrap();
        let bad = bad_regions(&c).unwrap();
        assert_eq!(remove_bad(&c, &a, &bad).unwrap(), a);
        let full = PointSet2::full(window_of(&c));
        let a0 = remove_bad(&c, &full, &bad).unwrap();
        assert_eq!(a0.len(), 12 * 12);
    }

    #[test]
    fn svg_has_layers() {
        let c = ctx(&[(8, 8), (16, 4)], 2);
        let a = PointSet2::from_points(window_of(&c), [(1, 1), (9, 2)]).unwrap();
        let s = staircase(&c, &a).unwrap();
        let bad = bad_regions(&c).unwrap();
        let g = s.g_rects();
        let svg = render_svg(
            &c,
            &SvgLayers {
                upper_set_below: Some(&s.below),
                hull: Some(&s.hull),
                g: Some(&g),
                bad: Some(&bad),
                points: Some(&a),
            },
        );
        for id in ["region", "upper-set", "hull", "staircase", "bad", "cells", "points"] {
            assert!(svg.contains(&format!("id=\"{id}\"")), "{id}");
        }
    }

    fn arb_context() -> impl Strategy<Value = (Vec<(u64, u64)>, u64)> {
        (prop::sample::select(vec![2u64, 4]), prop::collection::vec((1u64..4, 1u64..4), 1..4))
            .prop_map(|(q, cs)| (cs.into_iter().map(|(w, h)| (w * q * q, h * q * q)).collect(), q))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tilings_partition_and_bounds((corners, q) in arb_context(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let c = ctx(&corners, q);
            brute_partition(&c);
            let w = window_of(&c);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = c.region().clone();
            let p: f64 = rng.gen_range(0.005..0.2);
            let mut a = PointSet2::empty(w);
            for (x, y) in PointSet2::full(w).iter() {
                if f.contains(x as u64, y as u64) && rng.gen_bool(p) {
                    a.insert(x, y).unwrap();
                }
            }
            prop_assume!(!a.is_empty());
            let below = below_points(&f, a.iter().map(|(x, y)| (x as u64, y as u64)));
            let h = measurable_hull(&c, &below).unwrap();
            // the hull is the union of cells meeting S, checked point by point
            for (k, cell) in c.cells.iter().enumerate() {
                let r = cell.rect;
                let meets = (r.x0..r.x1).any(|x| (r.y0..r.y1).any(|y| !below.contains(x, y)));
                prop_assert_eq!(meets, h.cells.contains(&k));
            }
            let s = staircase(&c, &a).unwrap();
            prop_assert!(s.g_measure <= s.s_measure);
            let bad = bad_regions(&c).unwrap();
            remove_bad(&c, &a, &bad).unwrap();
            let t = trim_points(&c, &a, 1 << 16).unwrap();
            prop_assert!(t.set().unwrap().is_subset(&a).unwrap());
        }
    }
}
