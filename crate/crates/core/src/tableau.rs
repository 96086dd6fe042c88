//! Staircase sets in N^2: tableaux (unions of closed lattice boxes anchored at
//! the origin) and tableau regions (unions of half-open boxes in R^2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{PointSet2, Window};

/// Default cap on the number of profiles an enumeration may produce.
pub const DEFAULT_ENUM_GUARD: u128 = 1_000_000;

/// A tableau stored as its column heights `h_0 >= h_1 >= .. >= h_{W-1} >= 1`.
/// The cells are `{(x, y) : x < W, y < h_x}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tableau {
    profile: Vec<usize>,
}

impl Tableau {
    pub fn empty() -> Self {
        Tableau { profile: Vec::new() }
    }

    /// Accepts any weakly decreasing sequence; trailing zero columns are dropped.
    pub fn from_profile(mut profile: Vec<usize>) -> Result<Self> {
        if profile.windows(2).any(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(format!(
                "profile {profile:?} is not weakly decreasing"
            )));
        }
        while profile.last() == Some(&0) {
            profile.pop();
        }
        Ok(Tableau { profile })
    }

    /// Union of the closed boxes `{0..N} x {0..M}` over the given corners.
    pub fn from_corners(corners: &[(usize, usize)]) -> Self {
        let width = corners.iter().map(|&(n, _)| n + 1).max().unwrap_or(0);
        let mut profile = vec![0; width];
        for &(n, m) in corners {
            for h in profile.iter_mut().take(n + 1) {
                *h = (*h).max(m + 1);
            }
        }
        // columns to the left are at least as tall as any box reaching further right
        for x in (0..width.saturating_sub(1)).rev() {
            profile[x] = profile[x].max(profile[x + 1]);
        }
        Tableau { profile }
    }

    /// The antichain of closed-box corners whose union is this tableau.
    pub fn corners(&self) -> Vec<(usize, usize)> {
        let p = &self.profile;
        (0..p.len())
            .filter(|&x| x + 1 == p.len() || p[x] > p[x + 1])
            .map(|x| (x, p[x] - 1))
            .collect()
    }

    /// The smallest tableau containing every point of `set`.
    pub fn closure_of(set: &PointSet2) -> Self {
        Self::from_corners(&set.points())
    }

    pub fn profile(&self) -> &[usize] {
        &self.profile
    }

    pub fn width(&self) -> usize {
        self.profile.len()
    }

    pub fn height(&self) -> usize {
        self.profile.first().copied().unwrap_or(0)
    }

    /// Column height, zero beyond the last column.
    pub fn col(&self, x: usize) -> usize {
        self.profile.get(x).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    pub fn measure(&self) -> usize {
        self.profile.iter().sum()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        y < self.col(x)
    }

    /// Cells column by column, bottom to top. This is the order used to index
    /// per-cell data such as weights.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.profile.iter().enumerate().flat_map(|(x, &h)| (0..h).map(move |y| (x, y)))
    }

    /// Index of a cell in [`Tableau::cells`] order.
    pub fn cell_index(&self, x: usize, y: usize) -> Option<usize> {
        if !self.contains(x, y) {
            return None;
        }
        Some(self.profile[..x].iter().sum::<usize>() + y)
    }

    pub fn is_subtableau(&self, t: &Tableau) -> bool {
        self.width() <= t.width() && self.profile.iter().zip(&t.profile).all(|(a, b)| a <= b)
    }

    /// `|t| - |self|` when `self ⊆ t`.
    pub fn difference_measure(&self, t: &Tableau) -> Result<usize> {
        if !self.is_subtableau(t) {
            return Err(Error::InvalidArgument("not a subtableau".into()));
        }
        Ok(t.measure() - self.measure())
    }

    pub fn to_pointset(&self, w: Window) -> Result<PointSet2> {
        if self.width() > w.w || self.height() > w.h {
            return Err(Error::WindowTooSmall(format!(
                "tableau of size {}x{} in window {w}",
                self.width(),
                self.height()
            )));
        }
        let mut p = PointSet2::empty(w);
        for (x, &h) in self.profile.iter().enumerate() {
            p.fill_rect(x, x + 1, 0, h);
        }
        Ok(p)
    }

    /// All subtableaux of `self`, largest profile first in lexicographic order.
    pub fn subtableaux(&self, include_empty: bool, guard: u128) -> Result<Subtableaux> {
        let needed = count_subtableaux(self);
        if needed > guard {
            return Err(Error::GuardExceeded { what: "subtableau enumeration", needed, guard });
        }
        Ok(Subtableaux { bound: self.profile.clone(), cur: Some(self.profile.clone()), include_empty })
    }
}

/// Number of subtableaux of `t`, the empty one included. Saturates at `u128::MAX`.
pub fn count_subtableaux(t: &Tableau) -> u128 {
    // ways[h] = number of valid suffixes starting at the current column with height h
    let p = t.profile();
    let Some(&top) = p.first() else { return 1 };
    let mut ways = vec![1u128; top + 1];
    for x in (0..p.len()).rev() {
        // next[h] = sum over h' <= min(h, p[x]) of ways[h'] for the column to the right
        let mut next = vec![0u128; top + 1];
        let mut run = 0u128;
        for (h, slot) in next.iter_mut().enumerate() {
            if h <= p[x] {
                run = run.saturating_add(ways[h]);
            }
            *slot = run;
        }
        ways = next;
    }
    ways[top]
}

/// Restartable stream over subtableau profiles; see [`Tableau::subtableaux`].
#[derive(Clone, Debug)]
pub struct Subtableaux {
    bound: Vec<usize>,
    cur: Option<Vec<usize>>,
    include_empty: bool,
}

impl Iterator for Subtableaux {
    type Item = Tableau;

    fn next(&mut self) -> Option<Tableau> {
        let cur = self.cur.take()?;
        // lexicographic predecessor: lower the rightmost positive entry, then
        // fill everything to its right as high as the bound allows
        if let Some(i) = cur.iter().rposition(|&h| h > 0) {
            let mut nxt = cur.clone();
            nxt[i] -= 1;
            for j in i + 1..nxt.len() {
                nxt[j] = nxt[j - 1].min(self.bound[j]);
            }
            self.cur = Some(nxt);
        }
        let t = Tableau::from_profile(cur).expect("enumeration keeps profiles decreasing");
        if t.is_empty() && !self.include_empty {
            return None;
        }
        Some(t)
    }
}

/// Whether `(w \ set) + {(1,0),(0,1)}` stays inside `N^2 \ set` within `w`.
///
/// By induction on the generators this is the same as `(N^2 \ set) + N^2`
/// staying in the complement, which holds exactly when `set` is a tableau.
pub fn complement_is_additive(set: &PointSet2) -> bool {
    let w = set.window();
    for y in 0..w.h {
        for x in 0..w.w {
            if set.get(x, y) {
                continue;
            }
            if (x + 1 < w.w && set.get(x + 1, y)) || (y + 1 < w.h && set.get(x, y + 1)) {
                return false;
            }
        }
    }
    true
}

/// [`complement_is_additive`] for a tableau drawn in `w`; the window must leave
/// at least one free row and column around it.
pub fn complement_additive_check(t: &Tableau, w: Window) -> Result<bool> {
    if t.width() >= w.w || t.height() >= w.h {
        return Err(Error::WindowTooSmall(format!(
            "tableau {}x{} needs a margin inside {w}",
            t.width(),
            t.height()
        )));
    }
    Ok(complement_is_additive(&t.to_pointset(w)?))
}

/// A union of half-open boxes `[0,W) x [0,H)` in R^2.
///
/// Canonical corners are sorted by `W` increasing, which forces `H` strictly
/// decreasing; dominated and degenerate boxes are removed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableauRegion {
    corners: Vec<(u64, u64)>,
}

impl TableauRegion {
    pub fn new(corners: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut cs: Vec<(u64, u64)> = corners.into_iter().filter(|&(w, h)| w > 0 && h > 0).collect();
        // widest first; keep a box only if it is taller than every wider one
        cs.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
        let mut kept: Vec<(u64, u64)> = Vec::new();
        for c in cs {
            if kept.last().is_none_or(|&(_, h)| c.1 > h) {
                kept.push(c);
            }
        }
        kept.reverse();
        TableauRegion { corners: kept }
    }

    pub fn rect(w: u64, h: u64) -> Self {
        Self::new([(w, h)])
    }

    pub fn empty() -> Self {
        TableauRegion { corners: Vec::new() }
    }

    pub fn corners(&self) -> &[(u64, u64)] {
        &self.corners
    }

    /// Number of boxes in the canonical form.
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    pub fn width(&self) -> u64 {
        self.corners.last().map_or(0, |c| c.0)
    }

    pub fn height(&self) -> u64 {
        self.corners.first().map_or(0, |c| c.1)
    }

    /// Lebesgue measure, which is also the number of lattice points.
    pub fn measure(&self) -> u64 {
        let mut prev = 0;
        let mut total = 0;
        for &(w, h) in &self.corners {
            total += (w - prev) * h;
            prev = w;
        }
        total
    }

    /// Height of the region above abscissa `x` (zero beyond the last box).
    pub fn height_at(&self, x: u64) -> u64 {
        self.corners.iter().find(|c| x < c.0).map_or(0, |c| c.1)
    }

    pub fn contains(&self, x: u64, y: u64) -> bool {
        y < self.height_at(x)
    }

    pub fn is_subregion(&self, o: &TableauRegion) -> bool {
        self.corners.iter().all(|&(w, h)| o.height_at(w - 1) >= h)
    }

    /// Column strips `[W_{m-1}, W_m) x [0, H_m)`; they partition the region.
    pub fn strips(&self) -> Vec<(u64, u64, u64)> {
        let mut prev = 0;
        self.corners
            .iter()
            .map(|&(w, h)| {
                let s = (prev, w, h);
                prev = w;
                s
            })
            .collect()
    }

    /// Same lattice points as a closed-box tableau.
    pub fn to_tableau(&self) -> Tableau {
        Tableau::from_corners(
            &self.corners.iter().map(|&(w, h)| (w as usize - 1, h as usize - 1)).collect::<Vec<_>>(),
        )
    }

    pub fn from_tableau(t: &Tableau) -> Self {
        Self::new(t.corners().into_iter().map(|(x, y)| (x as u64 + 1, y as u64 + 1)))
    }

    /// `|A ∩ region|`, given a counter for origin-anchored rectangles.
    pub fn count_in<C: crate::lattice::RectCounter + ?Sized>(&self, a: &C) -> u64 {
        self.strips().into_iter().map(|(x0, x1, h)| a.count_strip(x0, x1, h)).sum()
    }

    pub fn to_pointset(&self, w: Window) -> PointSet2 {
        let mut p = PointSet2::empty(w);
        for (x0, x1, h) in self.strips() {
            p.fill_rect(x0 as usize, x1 as usize, 0, h as usize);
        }
        p
    }

    /// Rounds every corner down to a multiple of `d`, dropping boxes that vanish.
    pub fn round_down(&self, d: u64) -> Self {
        Self::new(self.corners.iter().map(|&(w, h)| (w / d * d, h / d * d)))
    }
}

/// A tableau region whose side lengths are all divisible by `d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DTableauRegion {
    region: TableauRegion,
    d: u64,
}

impl DTableauRegion {
    pub fn new(region: TableauRegion, d: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("divisor must be positive".into()));
        }
        if let Some(c) = region.corners.iter().find(|c| c.0 % d != 0 || c.1 % d != 0) {
            return Err(Error::InvalidArgument(format!(
                "corner ({}, {}) is not divisible by {d}",
                c.0, c.1
            )));
        }
        Ok(DTableauRegion { region, d })
    }

    pub fn region(&self) -> &TableauRegion {
        &self.region
    }

    pub fn divisor(&self) -> u64 {
        self.d
    }
}
