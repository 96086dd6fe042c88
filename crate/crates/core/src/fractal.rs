//! Multiscale fractal sets built from a pattern in `{0..N}^2`, their exact
//! lower densities, and the snapping arguments that reduce arbitrary boxes
//! to boxes with sides in `{u_k, 2u_k, ..., (N+1)u_k}`.

use serde::{Deserialize, Serialize};

use crate::density::{FolnerKind, FolnerSpec};
use crate::lattice::{PointSet2, RectCounter, Window};
use crate::rational::{ratio, Ratio};
use crate::tableau::{count_subtableaux, Tableau, TableauRegion, DEFAULT_ENUM_GUARD};
use crate::{Error, Result};

/// A pattern `P ∋ (0,0)` of degree `N` with a finite prefix of its scale
/// schedule `u_1 < u_2 < ...`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractalSpec {
    pub n: u64,
    pub pattern: Vec<(u64, u64)>,
    pub schedule: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternJson {
    pub n: u64,
    pub points: Vec<[u64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<u64>>,
}

/// `u_k = (N+2)^k k!` for `k = 1..=depth`.
pub fn default_schedule(n: u64, depth: usize) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(depth);
    let mut u: u64 = 1;
    for k in 1..=depth as u64 {
        u = u
            .checked_mul(n + 2)
            .and_then(|v| v.checked_mul(k))
            .ok_or_else(|| Error::InvalidArgument(format!("schedule overflows at k = {k}")))?;
        out.push(u);
    }
    Ok(out)
}

impl FractalSpec {
    pub fn new(n: u64, pattern: impl IntoIterator<Item = (u64, u64)>, schedule: Vec<u64>) -> Result<Self> {
        let mut pattern: Vec<(u64, u64)> = pattern.into_iter().collect();
        pattern.sort_unstable();
        pattern.dedup();
        if !pattern.contains(&(0, 0)) {
            return Err(Error::InvalidArgument("pattern must contain (0,0)".into()));
        }
        if let Some(p) = pattern.iter().find(|p| p.0 > n || p.1 > n) {
            return Err(Error::InvalidArgument(format!("pattern point {p:?} lies outside {{0..{n}}}^2")));
        }
        if schedule.first().is_some_and(|&u| u == 0) {
            return Err(Error::InvalidArgument("schedule must be positive".into()));
        }
        for (k, w) in schedule.windows(2).enumerate() {
            if w[1] <= (n + 1) * w[0] {
                return Err(Error::InvalidArgument(format!(
                    "u_{} = {} must exceed (N+1) u_{} = {}",
                    k + 2,
                    w[1],
                    k + 1,
                    (n + 1) * w[0]
                )));
            }
        }
        // consecutive ratios nondecreasing
        for (k, w) in schedule.windows(3).enumerate() {
            if (w[2] as u128) * (w[0] as u128) < (w[1] as u128) * (w[1] as u128) {
                return Err(Error::InvalidArgument(format!("scale ratio decreases after u_{}", k + 2)));
            }
        }
        Ok(FractalSpec { n, pattern, schedule })
    }

    pub fn with_default_schedule(n: u64, pattern: impl IntoIterator<Item = (u64, u64)>, depth: usize) -> Result<Self> {
        Self::new(n, pattern, default_schedule(n, depth)?)
    }

    pub fn from_json(j: &PatternJson, depth: usize) -> Result<Self> {
        let pts = j.points.iter().map(|p| (p[0], p[1]));
        match &j.schedule {
            Some(s) => Self::new(j.n, pts, s.clone()),
            None => Self::with_default_schedule(j.n, pts, depth),
        }
    }

    pub fn to_json(&self) -> PatternJson {
        PatternJson {
            n: self.n,
            points: self.pattern.iter().map(|&(x, y)| [x, y]).collect(),
            schedule: Some(self.schedule.clone()),
        }
    }

    pub fn depth(&self) -> usize {
        self.schedule.len()
    }

    /// `u_k`, with `u_0 = 0`.
    pub fn u(&self, k: usize) -> u64 {
        if k == 0 {
            0
        } else {
            self.schedule[k - 1]
        }
    }

    /// Side of the square holding the first `k` layers, `(N+1) u_k`.
    pub fn side(&self, k: usize) -> u64 {
        (self.n + 1) * self.u(k)
    }

    /// Mirror image in the diagonal.
    pub fn transpose(&self) -> Self {
        let mut pattern: Vec<(u64, u64)> = self.pattern.iter().map(|&(x, y)| (y, x)).collect();
        pattern.sort_unstable();
        FractalSpec { n: self.n, pattern, schedule: self.schedule.clone() }
    }

    fn check_depth(&self, depth: usize) -> Result<()> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "depth {depth} is outside 1..={} given by the schedule",
                self.depth()
            )));
        }
        Ok(())
    }

    /// `|P_k ∩ [0,x) x [0,y)|` where `P_k = u_k P + [0,u_k)^2`.
    pub fn layer_count(&self, k: usize, x: u64, y: u64) -> u64 {
        let u = self.u(k);
        let overlap = |p: u64, e: u64| e.saturating_sub(p * u).min(u);
        self.pattern.iter().map(|&(px, py)| overlap(px, x) * overlap(py, y)).sum()
    }

    /// `|A ∩ [0,x) x [0,y)|` for the set truncated to `depth` layers.
    pub fn count(&self, depth: usize, x: u64, y: u64) -> u64 {
        (1..=depth)
            .map(|k| {
                let c = self.side(k - 1);
                self.layer_count(k, x, y) - self.layer_count(k, x.min(c), y.min(c))
            })
            .sum()
    }
}

/// Exact rectangle counts for a truncated fractal, or for a single layer `P_k`.
#[derive(Clone, Debug)]
pub struct FractalCounter<'a> {
    pub spec: &'a FractalSpec,
    pub depth: usize,
    pub layer_only: bool,
    pub transposed: bool,
}

impl<'a> FractalCounter<'a> {
    /// The set `A_1 ∪ ... ∪ A_depth`.
    pub fn new(spec: &'a FractalSpec, depth: usize) -> Result<Self> {
        spec.check_depth(depth)?;
        Ok(FractalCounter { spec, depth, layer_only: false, transposed: false })
    }

    /// The single layer `P_k`.
    pub fn layer(spec: &'a FractalSpec, k: usize) -> Result<Self> {
        spec.check_depth(k)?;
        Ok(FractalCounter { spec, depth: k, layer_only: true, transposed: false })
    }

    pub fn transposed(&self) -> Self {
        FractalCounter { transposed: !self.transposed, ..self.clone() }
    }
}

impl RectCounter for FractalCounter<'_> {
    fn count_below(&self, x: u64, y: u64) -> u64 {
        let (x, y) = if self.transposed { (y, x) } else { (x, y) };
        if self.layer_only {
            self.spec.layer_count(self.depth, x, y)
        } else {
            self.spec.count(self.depth, x, y)
        }
    }

    fn extent(&self) -> (u64, u64) {
        let s = self.spec.side(self.depth);
        (s, s)
    }
}

/// Rasterizes the first `depth` layers into `window`, which must contain
/// `[0,(N+1)u_depth)^2`.
pub fn generate(spec: &FractalSpec, depth: usize, window: Window) -> Result<PointSet2> {
    spec.check_depth(depth)?;
    let side = spec.side(depth);
    if (window.w as u64) < side || (window.h as u64) < side {
        return Err(Error::WindowTooSmall(format!("{window} cannot hold the {side}x{side} fractal square")));
    }
    let mut a = PointSet2::empty(window);
    for k in 1..=depth {
        let u = spec.u(k);
        let c = spec.side(k - 1);
        for &(px, py) in &spec.pattern {
            let (x0, x1, y0, y1) = (px * u, (px + 1) * u, py * u, (py + 1) * u);
            // the block minus the square [0,c)^2, as at most two rectangles
            let rects = [(x0.max(c), x1, y0, y1), (x0, x1.min(c), y0.max(c), y1)];
            for (a0, a1, b0, b1) in rects {
                if a0 < a1 && b0 < b1 {
                    a.fill_rect(a0 as usize, a1 as usize, b0 as usize, b1 as usize);
                }
            }
        }
    }
    Ok(a)
}

/// The layer `P_k` alone.
pub fn generate_layer(spec: &FractalSpec, k: usize, window: Window) -> Result<PointSet2> {
    spec.check_depth(k)?;
    let u = spec.u(k);
    let mut a = PointSet2::empty(window);
    for &(px, py) in &spec.pattern {
        let (x1, y1) = ((px + 1) * u, (py + 1) * u);
        if x1 as usize > window.w || y1 as usize > window.h {
            return Err(Error::WindowTooSmall(format!("{window} cannot hold layer {k}")));
        }
        a.fill_rect((px * u) as usize, x1 as usize, (py * u) as usize, y1 as usize);
    }
    Ok(a)
}

/// Minimum of `|P ∩ I| / |I|` over boxes `I = [0,m] x [0,n]` in `{0..N}^2`,
/// with the minimizing `(m, n)` (first in row-major order on ties).
pub fn rect_density_formula(pattern: &[(u64, u64)], n: u64) -> (Ratio, (u64, u64)) {
    let mut best: Option<(Ratio, (u64, u64))> = None;
    for y in 0..=n {
        for x in 0..=n {
            let hits = pattern.iter().filter(|p| p.0 <= x && p.1 <= y).count() as u64;
            let r = ratio(hits, (x + 1) * (y + 1));
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, (x, y)));
            }
        }
    }
    best.expect("box is nonempty")
}

/// Minimum of `|P ∩ T| / |T|` over nonempty tableaux `T` inside
/// `{0..N} x {0..M}`, with a minimizing tableau.
pub fn tab_density_formula(pattern: &[(u64, u64)], n: u64, m: u64) -> Result<(Ratio, Tableau)> {
    let frame = Tableau::from_profile(vec![(m + 1) as usize; (n + 1) as usize])?;
    let needed = count_subtableaux(&frame);
    if needed > DEFAULT_ENUM_GUARD {
        return Err(Error::GuardExceeded { what: "tableaux in the pattern box", needed, guard: DEFAULT_ENUM_GUARD });
    }
    let mut best: Option<(Ratio, Tableau)> = None;
    for t in frame.subtableaux(false, DEFAULT_ENUM_GUARD)? {
        let hits = pattern.iter().filter(|p| t.contains(p.0 as usize, p.1 as usize)).count() as u64;
        let r = ratio(hits, t.measure() as u64);
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, t));
        }
    }
    Ok(best.expect("box has a nonempty subtableau"))
}

/// Boxes `[0,(x+1)u_k) x [0,(y+1)u_k)` for `x, y ∈ {0..N}`, in nondecreasing measure.
pub fn snapped_rect_terms(spec: &FractalSpec, k: usize) -> Result<FolnerSpec> {
    spec.check_depth(k)?;
    let u = spec.u(k);
    let mut terms: Vec<TableauRegion> = (1..=spec.n + 1)
        .flat_map(|i| (1..=spec.n + 1).map(move |j| TableauRegion::rect(i * u, j * u)))
        .collect();
    terms.sort_by_key(|t| (t.measure(), t.corners()[0]));
    FolnerSpec::new(FolnerKind::Rect, terms, u)
}

/// Which set the snapping arguments count against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMode {
    /// The truncated fractal itself; needs every side at least `u_k` and at
    /// most `u_{k+1}`.
    Fractal,
    /// The single layer `P_k`; needs the region inside `[0,(N+1)u_k)^2`.
    Layer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sides {
    Height,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Cut away everything outside `[0,(N+1)u_k)^2`, which lies in the set.
    Clamp,
    Height,
    Width,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbStep {
    pub axis: Axis,
    /// Strip index in the region at the time of the step (in transposed
    /// coordinates for width steps).
    pub strip: usize,
    pub from: u64,
    pub lower: u64,
    pub upper: u64,
    #[serde(with = "crate::rational::serde_ratio")]
    pub lower_ratio: Ratio,
    #[serde(with = "crate::rational::serde_ratio")]
    pub upper_ratio: Ratio,
    pub chosen: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbTrace {
    pub k: usize,
    pub mode: CountMode,
    pub input: TableauRegion,
    pub output: TableauRegion,
    #[serde(with = "crate::rational::serde_ratio")]
    pub input_ratio: Ratio,
    #[serde(with = "crate::rational::serde_ratio")]
    pub output_ratio: Ratio,
    pub steps: Vec<PerturbStep>,
}

fn region_ratio<C: RectCounter + ?Sized>(c: &C, r: &TableauRegion) -> Ratio {
    ratio(r.count_in(c), r.measure())
}

fn transpose_region(r: &TableauRegion) -> TableauRegion {
    TableauRegion::new(r.corners().iter().map(|&(w, h)| (h, w)))
}

/// Moves each strip height that is not a multiple of `u` to whichever end of
/// its `u`-band gives the smaller density. Inside a band every row of the
/// strip looks the same, so the density is monotone in the height and the
/// better end is never worse than the start. A strip lowered onto its right
/// neighbour merges with it.
fn snap_heights<C: RectCounter + ?Sized>(
    c: &C,
    region: TableauRegion,
    u: u64,
    axis: Axis,
    steps: &mut Vec<PerturbStep>,
) -> Result<TableauRegion> {
    let mut cur = region;
    // raising a strip can merge it into its left neighbour, so indices shift;
    // always take the leftmost strip still off the grid
    while let Some(j) = cur.corners().iter().position(|c| c.1 % u != 0) {
        let cs = cur.corners().to_vec();
        let (_, h) = cs[j];
        let next_h = cs.get(j + 1).map_or(0, |c| c.1);
        let lower = (h / u * u).max(next_h);
        let upper = (h / u + 1) * u;
        let with_height = |v: u64| {
            let mut cs = cs.clone();
            cs[j].1 = v;
            TableauRegion::new(cs)
        };
        let (lo, hi) = (with_height(lower), with_height(upper));
        let now = region_ratio(c, &cur);
        let lo_r = if lo.is_empty() { None } else { Some(region_ratio(c, &lo)) };
        let hi_r = region_ratio(c, &hi);
        let take_lower = lo_r.as_ref().is_some_and(|l| *l < hi_r);
        let best = if take_lower { lo_r.clone().unwrap() } else { hi_r.clone() };
        if best > now {
            return Err(Error::Contract(format!(
                "snapping strip {j} from {h} raised the density from {now} to {best}"
            )));
        }
        steps.push(PerturbStep {
            axis,
            strip: j,
            from: h,
            lower,
            upper,
            lower_ratio: lo_r.unwrap_or_else(|| hi_r.clone()),
            upper_ratio: hi_r,
            chosen: if take_lower { lower } else { upper },
        });
        cur = if take_lower { lo } else { hi };
    }
    Ok(cur)
}

/// Snaps the sides of a tableau region to multiples of `u_k` without raising
/// its density. With [`Sides::Height`] only heights move (a single box then
/// keeps its width).
pub fn perturb_region(
    spec: &FractalSpec,
    depth: usize,
    region: &TableauRegion,
    k: usize,
    sides: Sides,
    mode: CountMode,
) -> Result<PerturbTrace> {
    spec.check_depth(depth)?;
    if k == 0 || k > depth {
        return Err(Error::Hypothesis(format!("scale index {k} must lie in 1..={depth}")));
    }
    if region.is_empty() {
        return Err(Error::InvalidArgument("cannot perturb an empty region".into()));
    }
    let u = spec.u(k);
    let side = spec.side(k);
    let counter = match mode {
        CountMode::Fractal => FractalCounter::new(spec, depth)?,
        CountMode::Layer => FractalCounter::layer(spec, k)?,
    };
    let mut steps = Vec::new();
    let mut cur = region.clone();
    let input_ratio = region_ratio(&counter, region);

    match mode {
        CountMode::Layer => {
            if region.width() > side || region.height() > side {
                return Err(Error::Hypothesis(format!("region exceeds [0,{side})^2")));
            }
        }
        CountMode::Fractal => {
            let low = cur.corners().iter().any(|&(w, h)| h < u || (sides == Sides::Both && w < u));
            if low {
                return Err(Error::Hypothesis(format!("some side is below u_{k} = {u}")));
            }
            let clamp_w = sides == Sides::Both;
            // beyond (N+1)u_k the rows are only constant if layer k+1 exists
            if cur.height() > side || cur.width() > side {
                if k == depth {
                    return Err(Error::Hypothesis(format!(
                        "region leaves [0,{side})^2 but layer {} is not generated",
                        k + 1
                    )));
                }
                let cap = spec.u(k + 1);
                if cur.height() > cap || cur.width() > cap {
                    return Err(Error::Hypothesis(format!("region exceeds [0,u_{})^2", k + 1)));
                }
            }
            let clamped = TableauRegion::new(
                cur.corners().iter().map(|&(w, h)| (if clamp_w { w.min(side) } else { w }, h.min(side))),
            );
            if clamped != cur {
                let (before, after) = (region_ratio(&counter, &cur), region_ratio(&counter, &clamped));
                if after > before {
                    return Err(Error::Contract("clamping raised the density".into()));
                }
                steps.push(PerturbStep {
                    axis: Axis::Clamp,
                    strip: 0,
                    from: cur.height().max(cur.width()),
                    lower: side,
                    upper: side,
                    lower_ratio: after.clone(),
                    upper_ratio: after,
                    chosen: side,
                });
                cur = clamped;
            }
        }
    }

    cur = snap_heights(&counter, cur, u, Axis::Height, &mut steps)?;
    if sides == Sides::Both {
        let t = counter.transposed();
        cur = transpose_region(&snap_heights(&t, transpose_region(&cur), u, Axis::Width, &mut steps)?);
    }
    let output_ratio = region_ratio(&counter, &cur);
    if output_ratio > input_ratio {
        return Err(Error::Contract(format!("snapping raised the density from {input_ratio} to {output_ratio}")));
    }
    Ok(PerturbTrace { k, mode, input: region.clone(), output: cur, input_ratio, output_ratio, steps })
}

/// A single box `[0,w) x [0,h)`.
pub fn perturb_rectangle(
    spec: &FractalSpec,
    depth: usize,
    w: u64,
    h: u64,
    k: usize,
    sides: Sides,
    mode: CountMode,
) -> Result<PerturbTrace> {
    perturb_region(spec, depth, &TableauRegion::rect(w, h), k, sides, mode)
}

/// A region of at most `L` boxes, snapped on both axes against the layer `P_k`.
pub fn perturb_tableau(spec: &FractalSpec, region: &TableauRegion, k: usize) -> Result<PerturbTrace> {
    perturb_region(spec, k, region, k, Sides::Both, CountMode::Layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{prefix_density, tab_lower_estimate};
    use proptest::prelude::*;

    fn diag(depth: usize) -> FractalSpec {
        FractalSpec::with_default_schedule(1, [(0, 0), (1, 1)], depth).unwrap()
    }

    fn corner3(depth: usize) -> FractalSpec {
        FractalSpec::with_default_schedule(2, [(0, 0), (0, 2), (2, 2)], depth).unwrap()
    }

    #[test]
    fn default_schedule_values() {
        assert_eq!(default_schedule(1, 4).unwrap(), vec![3, 18, 162, 1944]);
        assert_eq!(default_schedule(2, 3).unwrap(), vec![4, 32, 384]);
    }

    #[test]
    fn spec_validation() {
        assert!(FractalSpec::new(1, [(1, 1)], vec![3, 18]).is_err());
        assert!(FractalSpec::new(1, [(0, 0), (2, 0)], vec![3, 18]).is_err());
        assert!(FractalSpec::new(1, [(0, 0)], vec![3, 6]).is_err());
        assert!(FractalSpec::new(1, [(0, 0)], vec![3, 30, 200]).is_err());
        assert!(FractalSpec::new(1, [(0, 0)], vec![3, 30, 301]).is_ok());
    }

    #[test]
    fn diagonal_matches_closed_form() {
        let s = diag(3);
        let u = [s.u(1), s.u(2), s.u(3)];
        let side = 2 * u[2] as usize;
        let w = Window::square(side).unwrap();
        let sq = |x: u64, y: u64, a: u64, b: u64| a <= x && x < b && a <= y && y < b;
        let direct = PointSet2::from_predicate(w, |x, y| {
            let (x, y) = (x as u64, y as u64);
            sq(x, y, 0, u[0])
                || sq(x, y, u[0], 2 * u[0])
                || (1..3).any(|k| sq(x, y, u[k], 2 * u[k]) || (sq(x, y, 0, u[k]) && !sq(x, y, 0, 2 * u[k - 1])))
        });
        assert_eq!(generate(&s, 3, w).unwrap(), direct);
    }

    #[test]
    fn single_cell_pattern_fills() {
        let s = FractalSpec::with_default_schedule(0, [(0, 0)], 3).unwrap();
        let u3 = s.u(3) as usize;
        let a = generate(&s, 3, Window::square(u3).unwrap()).unwrap();
        assert_eq!(a.len(), u3 * u3);
    }

    #[test]
    fn depth_one_is_first_layer() {
        let s = corner3(2);
        let w = Window::square(s.side(2) as usize).unwrap();
        assert_eq!(generate(&s, 1, w).unwrap(), generate_layer(&s, 1, w).unwrap());
    }

    #[test]
    fn generate_rejects_small_window() {
        let s = diag(2);
        assert!(generate(&s, 2, Window::square(20).unwrap()).is_err());
    }

    #[test]
    fn layers_stay_in_their_annulus() {
        let s = corner3(3);
        let side = s.side(3) as usize;
        let w = Window::square(side).unwrap();
        for k in 1..=3 {
            let prev = if k > 1 { generate(&s, k - 1, w).unwrap() } else { PointSet2::empty(w) };
            let layer = generate(&s, k, w).unwrap().difference(&prev).unwrap();
            let (lo, hi) = (s.side(k - 1) as usize, s.side(k) as usize);
            assert!(layer.iter().all(|(x, y)| x < hi && y < hi && (x >= lo || y >= lo)));
        }
    }

    #[test]
    fn formulas_on_examples() {
        let d = diag(1);
        assert_eq!(rect_density_formula(&d.pattern, 1).0, ratio(1u64, 2u64));
        assert_eq!(tab_density_formula(&d.pattern, 1, 1).unwrap().0, ratio(1u64, 3u64));
        let c = corner3(1);
        assert_eq!(rect_density_formula(&c.pattern, 2).0, ratio(1u64, 6u64));
        assert_eq!(tab_density_formula(&c.pattern, 2, 2).unwrap().0, ratio(1u64, 6u64));
        let full: Vec<(u64, u64)> = (0..3).flat_map(|x| (0..3).map(move |y| (x, y))).collect();
        assert_eq!(rect_density_formula(&full, 2).0, ratio(1u64, 1u64));
        assert_eq!(tab_density_formula(&full, 2, 2).unwrap().0, ratio(1u64, 1u64));
    }

    #[test]
    fn snapped_height_is_kept() {
        let s = diag(3);
        let u = s.u(2);
        let t = perturb_rectangle(&s, 3, 2 * u, 2 * u, 2, Sides::Height, CountMode::Fractal).unwrap();
        assert_eq!(t.output, t.input);
        assert!(t.steps.is_empty());
    }

    #[test]
    fn raised_strip_merging_left_still_snaps_the_rest() {
        let s = FractalSpec::with_default_schedule(1, [(1, 0), (0, 1), (0, 0)], 3).unwrap();
        // lifting (3,19) to 36 swallows (1,36); the flat (19,1) strip must still move
        let r = TableauRegion::new([(1, 20), (3, 19), (19, 1)]);
        let t = perturb_tableau(&s, &r, 2).unwrap();
        assert_eq!(t.output.corners(), &[(18, 36), (36, 18)]);
        assert!(t.output_ratio <= t.input_ratio);
    }

    #[test]
    fn straddling_rectangle_snaps_down() {
        let s = diag(3);
        let u = s.u(2);
        let w = Window::square(s.side(3) as usize).unwrap();
        let a = generate(&s, 3, w).unwrap();
        let (fw, fh) = (u + 7, u + 11);
        let t = perturb_rectangle(&s, 3, fw, fh, 2, Sides::Both, CountMode::Fractal).unwrap();
        let before = ratio(a.count_rect(0, fw as usize, 0, fh as usize), fw * fh);
        let (ow, oh) = t.output.corners()[0];
        let after = ratio(a.count_rect(0, ow as usize, 0, oh as usize), ow * oh);
        assert_eq!(before, t.input_ratio);
        assert_eq!(after, t.output_ratio);
        assert!(after <= before);
        assert_eq!((ow % u, oh % u), (0, 0));
    }

    #[test]
    fn constant_density_snap_is_neutral() {
        let full: Vec<(u64, u64)> = (0..2).flat_map(|x| (0..2).map(move |y| (x, y))).collect();
        let s = FractalSpec::with_default_schedule(1, full, 3).unwrap();
        let t = perturb_rectangle(&s, 3, 25, 31, 2, Sides::Both, CountMode::Fractal).unwrap();
        assert_eq!(t.input_ratio, t.output_ratio);
    }

    #[test]
    fn tableau_snap_one_box_matches_rectangle() {
        let s = corner3(3);
        let u = s.u(2);
        let r = TableauRegion::rect(u + 5, 2 * u + 9);
        let a = perturb_tableau(&s, &r, 2).unwrap();
        let b = perturb_rectangle(&s, 2, u + 5, 2 * u + 9, 2, Sides::Both, CountMode::Layer).unwrap();
        assert_eq!(a.output, b.output);
    }

    #[test]
    fn tableau_snap_two_boxes() {
        let s = corner3(3);
        let u = s.u(2);
        let r = TableauRegion::new([(u + 3, 3 * u - 5), (2 * u + 17, u + 9)]);
        let t = perturb_tableau(&s, &r, 2).unwrap();
        let w = Window::square(s.side(2) as usize).unwrap();
        let layer = generate_layer(&s, 2, w).unwrap();
        let exact = |reg: &TableauRegion| ratio(reg.count_in(&layer), reg.measure());
        assert_eq!(exact(&r), t.input_ratio);
        assert_eq!(exact(&t.output), t.output_ratio);
        assert!(t.output_ratio <= t.input_ratio);
        assert!(t.output.corners().iter().all(|&(a, b)| a % u == 0 && b % u == 0));
    }

    #[test]
    fn tableau_snap_identity_when_snapped() {
        let s = corner3(3);
        let u = s.u(2);
        let r = TableauRegion::new([(u, 3 * u), (2 * u, u)]);
        let t = perturb_tableau(&s, &r, 2).unwrap();
        assert_eq!(t.output, r);
        assert!(t.steps.is_empty());
    }

    #[test]
    fn perturb_hypotheses() {
        let s = diag(3);
        let u = s.u(2);
        assert!(matches!(
            perturb_rectangle(&s, 3, u, u - 1, 2, Sides::Height, CountMode::Fractal),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            perturb_rectangle(&s, 2, 3 * u, u, 2, Sides::Height, CountMode::Fractal),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            perturb_tableau(&s, &TableauRegion::rect(2 * u + 1, u), 2),
            Err(Error::Hypothesis(_))
        ));
    }

    fn arb_pattern() -> impl Strategy<Value = (u64, Vec<(u64, u64)>)> {
        (0u64..=3).prop_flat_map(|n| {
            let cells = ((n + 1) * (n + 1)) as usize;
            prop::collection::vec(any::<bool>(), cells).prop_map(move |bits| {
                let mut p: Vec<(u64, u64)> = bits
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(i, _)| (i as u64 % (n + 1), i as u64 / (n + 1)))
                    .collect();
                p.push((0, 0));
                (n, p)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn counter_matches_bitmap((n, p) in arb_pattern(), qs in prop::collection::vec((0u64..400, 0u64..400), 8)) {
            let s = FractalSpec::with_default_schedule(n, p, 3).unwrap();
            let side = s.side(3);
            prop_assume!(side <= 2000);
            let w = Window::square(side as usize).unwrap();
            let a = generate(&s, 3, w).unwrap();
            let c = FractalCounter::new(&s, 3).unwrap();
            for (x, y) in qs {
                let (x, y) = (x * side / 400, y * side / 400);
                prop_assert_eq!(c.count_below(x, y), a.count_rect(0, x as usize, 0, y as usize));
                prop_assert_eq!(c.transposed().count_below(y, x), c.count_below(x, y));
            }
        }

        #[test]
        fn tab_formula_below_rect_formula((n, p) in arb_pattern()) {
            let (r, _) = rect_density_formula(&p, n);
            let (t, _) = tab_density_formula(&p, n, n).unwrap();
            prop_assert!(t <= r);
        }

        #[test]
        fn layer_densities_hit_formulas((n, p) in arb_pattern()) {
            let s = FractalSpec::with_default_schedule(n, p.clone(), 3).unwrap();
            let layer = FractalCounter::layer(&s, 3).unwrap();
            let rep = prefix_density(&layer, &snapped_rect_terms(&s, 3).unwrap()).unwrap();
            prop_assert_eq!(&rep.min, &rect_density_formula(&s.pattern, n).0);
            let u = s.u(3);
            let est = tab_lower_estimate(&layer, 0, (n + 1) as usize, u, None).unwrap();
            prop_assert_eq!(&est.value, &tab_density_formula(&s.pattern, n, n).unwrap().0);
            // the full set differs from the layer only inside the previous square
            let full = FractalCounter::new(&s, 3).unwrap();
            let core = s.side(2) * s.side(2);
            for t in &rep.terms {
                let reg = &snapped_rect_terms(&s, 3).unwrap().terms[t.term];
                prop_assert!(reg.count_in(&full).abs_diff(t.count) <= core);
            }
        }

        #[test]
        fn perturbation_never_raises_density(
            (n, p) in arb_pattern(),
            boxes in prop::collection::vec((1u64..1000, 1u64..1000), 1..4),
        ) {
            let s = FractalSpec::with_default_schedule(n, p, 3).unwrap();
            let side = s.side(2);
            let r = TableauRegion::new(boxes.iter().map(|&(a, b)| (a * side / 1000 + 1, b * side / 1000 + 1)));
            let t = perturb_tableau(&s, &r, 2).unwrap();
            prop_assert!(t.output_ratio <= t.input_ratio);
            let u = s.u(2);
            prop_assert!(t.output.corners().iter().all(|&(a, b)| a % u == 0 && b % u == 0));
            prop_assert!(t.output.len() <= r.len());
        }
    }
}
