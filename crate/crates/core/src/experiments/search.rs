//! Counterexample searches for two-dimensional Plünnecke-type inequalities.
//!
//! The Schnirelmann search is finite and gives definitive verdicts on its
//! box. The rectangle-density screen only looks at finite windows of an
//! asymptotic statement, so its verdict is always inconclusive.

use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::tab_lower_estimate;
use crate::fractal::{generate, FractalSpec, PatternJson};
use crate::lattice::{iterated_sumset, sumset, PointSet2, Window};
use crate::rational::{format_ratio, pow, ratio, Ratio};
use crate::{Error, Result};

use super::config_hash;

/// Exhaustive search is limited to boxes with at most this many points.
pub const EXHAUSTIVE_MAX_CELLS: usize = 12;
/// Violations beyond this many are counted but not stored.
pub const MAX_RECORDED: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Every instance in scope was tested and none violates the inequality.
    Clean,
    Violation,
    /// The budget ran out first; resume from `cursor_end`.
    Partial,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Clean => 0,
            Verdict::Violation => 2,
            Verdict::Partial | Verdict::Inconclusive => 3,
        }
    }
}

/// The search space of `σ(A + k'B) >= σ(A)^(1-k'/k) σ(kB)^(k'/k)` for
/// `A, B` inside `[0,N] x [0,M]` with `(0,0) ∈ B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchnirelmannSearch {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub k_prime: usize,
    pub mode: SearchMode,
    /// Only used in random mode.
    #[serde(default)]
    pub seed: u64,
    /// Random mode: number of instances in scope.
    #[serde(default)]
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchnirelmannViolation {
    pub instance: u64,
    pub a: Vec<(usize, usize)>,
    pub b: Vec<(usize, usize)>,
    pub sigma_a: String,
    pub sigma_sum: String,
    pub sigma_kb: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub search: SchnirelmannSearch,
    pub config_hash: String,
    /// Instances in scope: the closed-form count for exhaustive mode.
    pub total_instances: u64,
    pub cursor_start: u64,
    pub cursor_end: u64,
    pub instances_tested: u64,
    pub violation_count: u64,
    /// The first [`MAX_RECORDED`] violations of this run, by instance index.
    pub violations: Vec<SchnirelmannViolation>,
    pub verdict: Verdict,
    /// Wall-clock time of this run; `None` when timing is not wanted.
    pub elapsed_ms: Option<u64>,
}

/// Masks over the box `[0,N] x [0,M]`, bit `y(N+1)+x`.
struct BoxMasks {
    cols: usize,
    cells: usize,
    full: u64,
    /// `keep[dx]`: points that stay in the box after moving right by `dx`.
    keep: Vec<u64>,
    /// `(mask of [0,n] x [0,m], (n+1)(m+1))`.
    prefixes: Vec<(u64, u64)>,
}

impl BoxMasks {
    fn new(n: usize, m: usize) -> Result<Self> {
        let (cols, rows) = (n + 1, m + 1);
        let cells = cols * rows;
        if cells > 64 {
            return Err(Error::InvalidArgument(format!("box with {cells} points exceeds 64")));
        }
        let bit = |x: usize, y: usize| 1u64 << (y * cols + x);
        let full = if cells == 64 { u64::MAX } else { (1u64 << cells) - 1 };
        let keep = (0..cols)
            .map(|dx| (0..rows).flat_map(|y| (0..cols - dx).map(move |x| (x, y))).fold(0, |acc, (x, y)| acc | bit(x, y)))
            .collect();
        let mut prefixes = Vec::with_capacity(cells);
        for pm in 0..rows {
            for pn in 0..cols {
                let mask = (0..=pm).flat_map(|y| (0..=pn).map(move |x| (x, y))).fold(0, |acc, (x, y)| acc | bit(x, y));
                prefixes.push((mask, ((pn + 1) * (pm + 1)) as u64));
            }
        }
        Ok(BoxMasks { cols, cells, full, keep, prefixes })
    }

    fn sum(&self, a: u64, b: u64) -> u64 {
        let mut out = 0;
        let mut rest = b;
        while rest != 0 {
            let p = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let (dx, dy) = (p % self.cols, p / self.cols);
            out |= ((a & self.keep[dx]) << (dy * self.cols + dx)) & self.full;
        }
        out
    }

    fn iterated(&self, b: u64, k: usize) -> u64 {
        (0..k).fold(1, |acc, _| self.sum(acc, b))
    }

    /// `σ_{N,M}` as `(count, area)` of a minimizing prefix box.
    fn sigma(&self, a: u64) -> (u64, u64) {
        let mut best = (1u64, 1u64);
        for &(mask, area) in &self.prefixes {
            let c = (a & mask).count_ones() as u64;
            if c * best.1 < best.0 * area {
                best = (c, area);
            }
        }
        best
    }

    fn points(&self, a: u64) -> Vec<(usize, usize)> {
        (0..self.cells).filter(|&p| a >> p & 1 == 1).map(|p| (p % self.cols, p / self.cols)).collect()
    }
}

fn checked_pow(x: u64, e: u32) -> Option<u128> {
    (x as u128).checked_pow(e)
}

/// `(p1/q1)^k >= (p2/q2)^(k-k') (p3/q3)^k'` by cross-multiplication.
fn cross_ge(s: (u64, u64), a: (u64, u64), kb: (u64, u64), k: u32, kp: u32) -> bool {
    let fast = || -> Option<bool> {
        let lhs = checked_pow(s.0, k)?.checked_mul(checked_pow(a.1, k - kp)?)?.checked_mul(checked_pow(kb.1, kp)?)?;
        let rhs = checked_pow(a.0, k - kp)?.checked_mul(checked_pow(kb.0, kp)?)?.checked_mul(checked_pow(s.1, k)?)?;
        Some(lhs >= rhs)
    };
    fast().unwrap_or_else(|| {
        let p = |x: u64, e: u32| BigUint::from(x).pow(e);
        p(s.0, k) * p(a.1, k - kp) * p(kb.1, kp) >= p(a.0, k - kp) * p(kb.0, kp) * p(s.1, k)
    })
}

impl SchnirelmannSearch {
    fn check(&self) -> Result<BoxMasks> {
        if !(0 < self.k_prime && self.k_prime < self.k) {
            return Err(Error::InvalidArgument(format!("need 0 < k' < k, got k'={}, k={}", self.k_prime, self.k)));
        }
        let masks = BoxMasks::new(self.n, self.m)?;
        if self.mode == SearchMode::Exhaustive && masks.cells > EXHAUSTIVE_MAX_CELLS {
            return Err(Error::GuardExceeded {
                what: "exhaustive box size",
                needed: masks.cells as u128,
                guard: EXHAUSTIVE_MAX_CELLS as u128,
            });
        }
        Ok(masks)
    }

    /// Instances in scope: `2^c 2^(c-1)` for exhaustive mode with `c` box points.
    pub fn total_instances(&self) -> Result<u64> {
        let masks = self.check()?;
        Ok(match self.mode {
            SearchMode::Exhaustive => 1u64 << (2 * masks.cells - 1),
            SearchMode::Random => self.samples,
        })
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Instance `i` of the search as `(A, B)` masks.
fn instance(s: &SchnirelmannSearch, masks: &BoxMasks, i: u64) -> (u64, u64) {
    let c = masks.cells;
    match s.mode {
        // B ranges over masks with bit 0 set
        SearchMode::Exhaustive => (i >> (c - 1), ((i & ((1u64 << (c - 1)) - 1)) << 1) | 1),
        SearchMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(i);
            let da: f64 = rng.gen();
            let db: f64 = rng.gen();
            let (mut a, mut b) = (0u64, 1u64);
            for p in 0..c {
                if rng.gen_bool(da) {
                    a |= 1 << p;
                }
                if p > 0 && rng.gen_bool(db) {
                    b |= 1 << p;
                }
            }
            (a, b)
        }
    }
}

/// Tests instances `[cursor, cursor + budget)` (clipped to the scope).
pub fn search_schnirelmann(s: &SchnirelmannSearch, cursor: u64, budget: Option<u64>, timed: bool) -> Result<SearchReport> {
    let start = Instant::now();
    let masks = s.check()?;
    let total = s.total_instances()?;
    if cursor > total {
        return Err(Error::InvalidArgument(format!("cursor {cursor} is past the {total} instances in scope")));
    }
    let end = budget.map_or(total, |b| cursor.saturating_add(b).min(total));
    let (k, kp) = (s.k as u32, s.k_prime as u32);

    // per-B data depends only on B, so it is cached for exhaustive runs
    let per_b = |b: u64| {
        let kb = masks.iterated(b, s.k);
        (masks.iterated(b, s.k_prime), masks.sigma(kb))
    };
    let cache: Option<Vec<(u64, (u64, u64))>> = (s.mode == SearchMode::Exhaustive)
        .then(|| (0..1u64 << (masks.cells - 1)).into_par_iter().map(|j| per_b((j << 1) | 1)).collect());

    const CHUNK: u64 = 1 << 14;
    let chunks: Vec<u64> = (cursor..end).step_by(CHUNK as usize).collect();
    let found: Vec<(u64, Vec<SchnirelmannViolation>)> = chunks
        .par_iter()
        .map(|&c0| {
            let mut count = 0;
            let mut out = Vec::new();
            for i in c0..(c0 + CHUNK).min(end) {
                let (a, b) = instance(s, &masks, i);
                let (kpb, skb) = match &cache {
                    Some(v) => v[(b >> 1) as usize],
                    None => per_b(b),
                };
                let sa = masks.sigma(a);
                let ss = masks.sigma(masks.sum(a, kpb));
                if !cross_ge(ss, sa, skb, k, kp) {
                    count += 1;
                    if out.len() < MAX_RECORDED {
                        out.push(SchnirelmannViolation {
                            instance: i,
                            a: masks.points(a),
                            b: masks.points(b),
                            sigma_a: format_ratio(&ratio(sa.0, sa.1)),
                            sigma_sum: format_ratio(&ratio(ss.0, ss.1)),
                            sigma_kb: format_ratio(&ratio(skb.0, skb.1)),
                        });
                    }
                }
            }
            (count, out)
        })
        .collect();
    let violation_count = found.iter().map(|f| f.0).sum();
    let violations: Vec<_> = found.into_iter().flat_map(|f| f.1).take(MAX_RECORDED).collect();
    let verdict = if violation_count > 0 {
        Verdict::Violation
    } else if end < total {
        Verdict::Partial
    } else {
        Verdict::Clean
    };
    Ok(SearchReport {
        search: s.clone(),
        config_hash: s.hash(),
        total_instances: total,
        cursor_start: cursor,
        cursor_end: end,
        instances_tested: end - cursor,
        violation_count,
        violations,
        verdict,
        elapsed_ms: timed.then(|| start.elapsed().as_millis() as u64),
    })
}

/// Where to resume a search from its JSON-lines report: the `cursor_end` of
/// the last record with the same configuration, or 0.
pub fn resume_cursor(report: &str, s: &SchnirelmannSearch) -> Result<u64> {
    let hash = s.hash();
    let mut cursor = 0;
    for line in report.lines().filter(|l| !l.trim().is_empty()) {
        let r: SearchReport = serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?;
        if r.config_hash == hash {
            if r.cursor_start != cursor {
                return Err(Error::Parse(format!("report skips from {cursor} to {}", r.cursor_start)));
            }
            cursor = r.cursor_end;
        }
    }
    Ok(cursor)
}

/// Structured `B` sets for the rectangle-density screen, cut to a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "size")]
pub enum BFamily {
    /// `{(0,0), (1,0), (0,1)}`.
    Unit,
    /// Both coordinate axes; `B + B` is all of `N^2`.
    Axes,
    /// `{0,..,s-1}^2`.
    Square(usize),
    /// `{(i,i)} ∪ {(0,0),(1,0),(0,1)}`.
    Diagonal,
}

impl BFamily {
    pub fn build(self, w: Window) -> Result<PointSet2> {
        Ok(match self {
            BFamily::Unit => PointSet2::from_points(w, [(0, 0), (1, 0), (0, 1)])?,
            BFamily::Axes => PointSet2::from_predicate(w, |x, y| x == 0 || y == 0),
            BFamily::Square(s) => PointSet2::from_predicate(w, |x, y| x < s && y < s),
            BFamily::Diagonal => PointSet2::from_predicate(w, |x, y| x == y || x + y <= 1),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenConfig {
    pub patterns: Vec<PatternJson>,
    pub b_family: Vec<BFamily>,
    /// Fractal depths whose squares are the windows; at least three.
    pub depths: Vec<usize>,
    pub k: usize,
    pub k_prime: usize,
    /// Grid points per window side for the rectangle proxy.
    #[serde(default = "default_resolution")]
    pub resolution: u64,
    /// Reference value the proxy of `A + k'B` is compared with when given,
    /// as `proxy^2 >= reference_square` (e.g. `1/3`).
    #[serde(default)]
    pub reference_square: Option<String>,
}

fn default_resolution() -> u64 {
    48
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleResult {
    pub depth: usize,
    pub window: u64,
    pub proxy_a: String,
    pub proxy_sum: String,
    pub proxy_kb: String,
    pub holds: bool,
    pub above_reference: Option<bool>,
    pub proxy_sum_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenEntry {
    pub pattern: PatternJson,
    pub b: BFamily,
    pub scales: Vec<ScaleResult>,
    /// Fails at every screened scale.
    pub persistent_violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub config_hash: String,
    pub entries: Vec<ScreenEntry>,
    pub flagged: usize,
    /// Always [`Verdict::Inconclusive`]: finite windows say nothing definite
    /// about a lower asymptotic density.
    pub verdict: Verdict,
}

/// Rectangle proxy for the lower density of `a` on its window: the least
/// density over origin-anchored rectangles with corners on a
/// `resolution`-point grid and both sides above a quarter of the window.
fn rect_proxy(a: &PointSet2, side: u64, resolution: u64) -> Result<Ratio> {
    let stride = (side / resolution).max(1);
    // sides of at least a quarter window keep the inner layers from dominating
    let r = side / 4;
    Ok(tab_lower_estimate(a, r.saturating_sub(1), 1, stride, Some((side, side)))?.value)
}

pub fn screen_rect_density(cfg: &ScreenConfig) -> Result<ScreenReport> {
    if cfg.depths.len() < 3 {
        return Err(Error::InvalidArgument("the screen needs at least three window scales".into()));
    }
    if !(0 < cfg.k_prime && cfg.k_prime < cfg.k) {
        return Err(Error::InvalidArgument(format!("need 0 < k' < k, got k'={}, k={}", cfg.k_prime, cfg.k)));
    }
    let reference = cfg.reference_square.as_deref().map(crate::rational::parse_ratio).transpose()?;
    let deepest = *cfg.depths.iter().max().unwrap_or(&1);
    let (k, kp) = (cfg.k as u32, cfg.k_prime as u32);
    let mut entries = Vec::new();
    for pat in &cfg.patterns {
        let spec = FractalSpec::from_json(pat, deepest)?;
        for &bf in &cfg.b_family {
            let mut scales = Vec::new();
            for &d in &cfg.depths {
                let side = spec.side(d);
                let w = Window::square(side as usize)?;
                let a = generate(&spec, d, w)?;
                let b = bf.build(w)?;
                let sum = sumset(&a, &iterated_sumset(&b, cfg.k_prime, w), w);
                let kb = iterated_sumset(&b, cfg.k, w);
                let pa = rect_proxy(&a, side, cfg.resolution)?;
                let ps = rect_proxy(&sum, side, cfg.resolution)?;
                let pk = rect_proxy(&kb, side, cfg.resolution)?;
                let holds = pow(&ps, k) >= pow(&pa, k - kp) * pow(&pk, kp);
                scales.push(ScaleResult {
                    depth: d,
                    window: side,
                    proxy_a: format_ratio(&pa),
                    proxy_sum: format_ratio(&ps),
                    proxy_kb: format_ratio(&pk),
                    holds,
                    above_reference: reference.as_ref().map(|r| &ps * &ps >= *r),
                    proxy_sum_value: crate::rational::to_f64(&ps),
                });
            }
            let persistent_violation = scales.iter().all(|s| !s.holds);
            entries.push(ScreenEntry { pattern: pat.clone(), b: bf, scales, persistent_violation });
        }
    }
    let flagged = entries.iter().filter(|e| e.persistent_violation).count();
    Ok(ScreenReport { config_hash: config_hash(cfg), entries, flagged, verdict: Verdict::Inconclusive })
}
