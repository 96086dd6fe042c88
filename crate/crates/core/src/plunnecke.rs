//! Magnification ratios of truncated sumsets and δ-heavy subsets.
//!
//! For `A' ⊆ A` the quantity of interest is `|(A' + nB) \ (C + (n-1)B)|`.
//! It is a union over `a ∈ A'` of per-point sets `N_n(a)`, so every search
//! below works on those lists: exhaustive search toggles one point at a time
//! in Gray-code order with per-element coverage counters, and the flow route
//! solves the minimum-ratio problem by parametric min-cut.

use std::cmp::Ordering;
use std::collections::HashMap;

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::min_expansion;
use crate::lattice::{cyclic_iterated_sumset, cyclic_sumset, iterated_sumset, sumset, PointSet2, PointSetJson, Window};
use crate::rational::{int, pow, ratio, serde_ratio, Ratio, Surd};
use crate::tableau::Tableau;

/// Default cap on `|A|` for exhaustive subset search.
pub const DEFAULT_SUBSET_GUARD: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    /// `N^2` truncated to the common window of the sets.
    Window,
    /// `Z_m x Z_m` with `m` the (square) window side.
    Cyclic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MagnificationInstance {
    pub a: PointSet2,
    pub b: PointSet2,
    pub c: PointSet2,
    pub group: Group,
    pub guard: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceJson {
    pub a: PointSetJson,
    pub b: PointSetJson,
    #[serde(default)]
    pub c: Option<PointSetJson>,
    #[serde(default)]
    pub cyclic: bool,
}

impl MagnificationInstance {
    pub fn new(a: PointSet2, b: PointSet2, c: PointSet2, group: Group) -> Result<Self> {
        let w = a.window();
        if b.window() != w || c.window() != w {
            return Err(Error::WindowMismatch("A, B and C must share a window".into()));
        }
        if group == Group::Cyclic && w.w != w.h {
            return Err(Error::WindowMismatch(format!("cyclic mode needs a square window, got {w}")));
        }
        Ok(MagnificationInstance { a, b, c, group, guard: DEFAULT_SUBSET_GUARD })
    }

    pub fn with_guard(mut self, guard: usize) -> Self {
        self.guard = guard;
        self
    }

    pub fn window(&self) -> Window {
        self.a.window()
    }

    pub fn from_json(j: &InstanceJson) -> Result<Self> {
        let a = PointSet2::from_json(&j.a)?;
        let b = PointSet2::from_json(&j.b)?;
        let c = match &j.c {
            Some(c) => PointSet2::from_json(c)?,
            None => PointSet2::empty(a.window()),
        };
        Self::new(a, b, c, if j.cyclic { Group::Cyclic } else { Group::Window })
    }

    pub fn to_json(&self) -> InstanceJson {
        InstanceJson {
            a: self.a.to_json(),
            b: self.b.to_json(),
            c: Some(self.c.to_json()),
            cyclic: self.group == Group::Cyclic,
        }
    }

    /// Fails if `A + nB` would leave the window (window mode only).
    pub fn check_unclipped(&self, n: usize) -> Result<()> {
        if self.group == Group::Cyclic {
            return Ok(());
        }
        let w = self.window();
        let (Some((ax, ay)), Some((bx, by))) = (self.a.max_coords(), self.b.max_coords()) else {
            return Ok(());
        };
        if ax + n * bx >= w.w || ay + n * by >= w.h {
            return Err(Error::Clipping(format!(
                "A + {n}B reaches ({}, {}) outside window {w}",
                ax + n * bx,
                ay + n * by
            )));
        }
        Ok(())
    }

    fn iterated(&self, k: usize) -> PointSet2 {
        match self.group {
            Group::Window => iterated_sumset(&self.b, k, self.window()),
            Group::Cyclic => cyclic_iterated_sumset(&self.b, k).expect("square window checked"),
        }
    }

    fn sum(&self, x: &PointSet2, y: &PointSet2) -> PointSet2 {
        match self.group {
            Group::Window => sumset(x, y, self.window()),
            Group::Cyclic => cyclic_sumset(x, y).expect("square window checked"),
        }
    }

    /// Per-point lists `N_n(a) = (a + nB) \ (C + (n-1)B)` for the points of
    /// `self.a` in row-major order, over a compact universe.
    fn lists(&self, n: usize) -> Lists {
        let nb = self.iterated(n);
        let blocked = self.sum(&self.c, &self.iterated(n - 1));
        let w = self.window();
        let mut index: HashMap<(usize, usize), u32> = HashMap::new();
        let mut lists = Vec::with_capacity(self.a.len());
        for (ax, ay) in self.a.iter() {
            let mut l = Vec::new();
            for (bx, by) in nb.iter() {
                let (x, y) = match self.group {
                    Group::Window => (ax + bx, ay + by),
                    Group::Cyclic => ((ax + bx) % w.w, (ay + by) % w.h),
                };
                if !w.contains(x, y) || blocked.get(x, y) {
                    continue;
                }
                let next = index.len() as u32;
                l.push(*index.entry((x, y)).or_insert(next));
            }
            lists.push(l);
        }
        Lists { points: self.a.points(), lists, universe: index.len() }
    }

    /// `|(A + nB) \ (C + (n-1)B)|` for the whole of `A`.
    pub fn truncated_size(&self, n: usize) -> u64 {
        let l = self.lists(n);
        l.universe as u64
    }
}

struct Lists {
    points: Vec<(usize, usize)>,
    lists: Vec<Vec<u32>>,
    universe: usize,
}

impl Lists {
    fn coverage(&self, mask: &[bool]) -> u64 {
        let mut hit = vec![false; self.universe];
        let mut c = 0;
        for (i, l) in self.lists.iter().enumerate() {
            if mask[i] {
                for &u in l {
                    c += !std::mem::replace(&mut hit[u as usize], true) as u64;
                }
            }
        }
        c
    }

    fn to_set(&self, w: Window, mask: &[bool]) -> PointSet2 {
        let mut p = PointSet2::empty(w);
        for (i, &(x, y)) in self.points.iter().enumerate() {
            if mask[i] {
                p.insert(x, y).expect("points come from a set in this window");
            }
        }
        p
    }
}

/// `s` precedes `t` when their sorted index lists compare lexicographically.
fn lex_less(s: u64, t: u64) -> bool {
    if s == t {
        return false;
    }
    let d = s ^ t;
    let low = d & d.wrapping_neg();
    let above = !(low | (low - 1));
    if s & low != 0 {
        t & above != 0
    } else {
        s & above == 0
    }
}

#[derive(Clone, Copy, Debug)]
struct Cand {
    mask: u64,
    size: u32,
    cov: u32,
}

/// Visits every nonempty subset of `lists` once and keeps the best accepted one.
fn scan<A, B>(l: &Lists, accept: A, better: B) -> Option<Cand>
where
    A: Fn(u32, u32) -> bool + Sync,
    B: Fn(&Cand, &Cand) -> bool + Sync,
{
    let n = l.lists.len();
    assert!(n <= 63);
    let high = n.min(6);
    let low = n - high;
    let pick = |a: Option<Cand>, b: Option<Cand>| match (a, b) {
        (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    };
    (0u64..1 << high)
        .into_par_iter()
        .map(|hp| {
            let mut cnt = vec![0u32; l.universe];
            let mut cov = 0u32;
            let mut mask = hp << low;
            let mut size = 0u32;
            let toggle = |i: usize, on: bool, cnt: &mut [u32], cov: &mut u32| {
                for &u in &l.lists[i] {
                    let c = &mut cnt[u as usize];
                    if on {
                        *cov += (*c == 0) as u32;
                        *c += 1;
                    } else {
                        *c -= 1;
                        *cov -= (*c == 0) as u32;
                    }
                }
            };
            for i in low..n {
                if mask >> i & 1 == 1 {
                    toggle(i, true, &mut cnt, &mut cov);
                    size += 1;
                }
            }
            let mut best: Option<Cand> = None;
            let mut visit = |c: Cand| {
                if c.mask != 0 && accept(c.size, c.cov) && best.as_ref().is_none_or(|b| better(&c, b)) {
                    best = Some(c);
                }
            };
            visit(Cand { mask, size, cov });
            for step in 1u64..1 << low {
                let bit = step.trailing_zeros() as usize;
                let on = mask >> bit & 1 == 0;
                toggle(bit, on, &mut cnt, &mut cov);
                mask ^= 1 << bit;
                if on {
                    size += 1;
                } else {
                    size -= 1;
                }
                visit(Cand { mask, size, cov });
            }
            best
        })
        .reduce(|| None, pick)
}

fn mask_vec(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Magnification {
    pub n: usize,
    #[serde(with = "serde_ratio")]
    pub d: Ratio,
    pub numerator: u64,
    pub witness: PointSetJson,
}

/// `D_n = min_{∅ ≠ A' ⊆ A} |(A' + nB) \ (C + (n-1)B)| / |A'|` by exhaustive search.
/// Ties go to the lexicographically least witness in row-major point order.
pub fn magnification(inst: &MagnificationInstance, n: usize) -> Result<Magnification> {
    if n == 0 {
        return Err(Error::InvalidArgument("magnification needs n >= 1".into()));
    }
    if inst.a.is_empty() {
        return Err(Error::InvalidArgument("A must be nonempty".into()));
    }
    let size = inst.a.len();
    if size > inst.guard.min(63) {
        return Err(Error::GuardExceeded {
            what: "subset search over A",
            needed: size as u128,
            guard: inst.guard.min(63) as u128,
        });
    }
    inst.check_unclipped(n)?;
    let l = inst.lists(n);
    let best = scan(&l, |_, _| true, |x, y| {
        // compare cov/size, then lex order
        match (x.cov as u64 * y.size as u64).cmp(&(y.cov as u64 * x.size as u64)) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => lex_less(x.mask, y.mask),
        }
    })
    .expect("A is nonempty");
    let mask = mask_vec(best.mask, size);
    Ok(Magnification {
        n,
        d: ratio(best.cov, best.size),
        numerator: best.cov as u64,
        witness: l.to_set(inst.window(), &mask).to_json(),
    })
}

/// Same minimum as [`magnification`], found by parametric min-cut; no size guard.
/// The witness is a minimizer but not necessarily the lexicographically least.
pub fn magnification_flow(inst: &MagnificationInstance, n: usize) -> Result<Magnification> {
    if n == 0 || inst.a.is_empty() {
        return Err(Error::InvalidArgument("need n >= 1 and nonempty A".into()));
    }
    inst.check_unclipped(n)?;
    let l = inst.lists(n);
    let (sel, cov, size) = min_expansion(&l.lists, l.universe);
    Ok(Magnification { n, d: ratio(cov, size), numerator: cov, witness: l.to_set(inst.window(), &sel).to_json() })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneReport {
    #[serde(with = "crate::rational::serde_ratio_vec")]
    pub d: Vec<Ratio>,
    /// `n` such that `D_{n+1}^n > D_n^{n+1}`.
    pub violations: Vec<usize>,
}

/// Checks `D_{n+1}^n <= D_n^{n+1}` for `1 <= n < n_max`.
pub fn check_root_monotone(inst: &MagnificationInstance, n_max: usize) -> Result<MonotoneReport> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be positive".into()));
    }
    inst.check_unclipped(n_max)?;
    let d: Vec<Ratio> = (1..=n_max).map(|n| magnification(inst, n).map(|m| m.d)).collect::<Result<_>>()?;
    let violations = (1..n_max)
        .filter(|&n| pow(&d[n], n as u32) > pow(&d[n - 1], n as u32 + 1))
        .collect();
    Ok(MonotoneReport { d, violations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeavyMode {
    /// Largest `A'` satisfying the bound, by exhaustive search.
    BruteForce,
    /// Union of successive minimum-ratio subsets of what is left, as in the
    /// existence argument; minimum-ratio steps use min-cut, so no size guard.
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaHeavyResult {
    pub a_prime: PointSetJson,
    pub a_prime_len: usize,
    pub a_len: usize,
    /// `δ` as `a + b/sqrt(q)`.
    pub delta: String,
    pub k_prime: usize,
    pub k: usize,
    /// `|(A' + kB) \ (C + (k-1)B)| / |A'|`.
    #[serde(with = "serde_ratio")]
    pub lhs: Ratio,
    /// `|(A + k'B) \ (C + (k'-1)B)| / |A|`, raised to `k/k'` and scaled by
    /// `(1-δ)^(-k/k')` on the right-hand side.
    #[serde(with = "serde_ratio")]
    pub rhs_base: Ratio,
    pub mode: HeavyMode,
}

impl DeltaHeavyResult {
    pub fn a_prime_set(&self) -> Result<PointSet2> {
        PointSet2::from_json(&self.a_prime)
    }
}

/// `x <= (1-δ)^(-k/k') r^(k/k')`, i.e. `x^k' (1-δ)^k <= r^k`.
fn heavy_bound_holds(x: &Ratio, r: &Ratio, delta: &Surd, kp: usize, k: usize) -> bool {
    let q = delta.q;
    let one_minus = Surd::rational(Ratio::one(), q).sub(delta);
    let lhs = one_minus.pow(k as u32).scale(&pow(x, kp as u32));
    let rhs = Surd::rational(pow(r, k as u32), q);
    lhs.cmp_to(&rhs) != Ordering::Greater
}

/// `|A'| > δ|A|`.
fn heavy_enough(sub: usize, all: usize, delta: &Surd) -> bool {
    Surd::rational(int(sub as u64), delta.q).sub(&delta.scale(&int(all as u64))).signum() == Ordering::Greater
}

fn check_delta(delta: &Surd, kp: usize, k: usize) -> Result<()> {
    if !(0 < kp && kp < k) {
        return Err(Error::InvalidArgument(format!("need 0 < k' < k, got k'={kp}, k={k}")));
    }
    let zero = Surd::rational(Ratio::zero(), delta.q);
    let one = Surd::rational(Ratio::one(), delta.q);
    if delta.cmp_to(&zero) != Ordering::Greater || delta.cmp_to(&one) != Ordering::Less {
        return Err(Error::InvalidArgument(format!("δ must lie in (0,1), got {delta}")));
    }
    Ok(())
}

/// A subset `A' ⊆ A` with `|A'| > δ|A|` and
/// `|(A'+kB) \ (C+(k-1)B)| / |A'| <= (1-δ)^(-k/k') (|(A+k'B) \ (C+(k'-1)B)| / |A|)^(k/k')`.
///
/// The result is re-verified before it is returned; a failed verification is
/// reported as [`Error::Contract`].
pub fn delta_heavy(
    inst: &MagnificationInstance,
    k_prime: usize,
    k: usize,
    delta: &Surd,
    mode: HeavyMode,
) -> Result<DeltaHeavyResult> {
    inst.check_unclipped(k)?;
    delta_heavy_inner(inst, k_prime, k, delta, mode)
}

fn delta_heavy_inner(
    inst: &MagnificationInstance,
    kp: usize,
    k: usize,
    delta: &Surd,
    mode: HeavyMode,
) -> Result<DeltaHeavyResult> {
    check_delta(delta, kp, k)?;
    let size = inst.a.len();
    if size == 0 {
        return Err(Error::InvalidArgument("A must be nonempty".into()));
    }
    let base = inst.lists(kp);
    let rhs_base = ratio(base.universe as u64, size as u64);
    let l = inst.lists(k);

    let chosen: Vec<bool> = match mode {
        HeavyMode::BruteForce => {
            if size > inst.guard.min(63) {
                return Err(Error::GuardExceeded {
                    what: "subset search over A",
                    needed: size as u128,
                    guard: inst.guard.min(63) as u128,
                });
            }
            // largest admissible coverage for each subset size
            let max_cov: Vec<i64> = (0..=size)
                .map(|s| {
                    if s == 0 {
                        return -1;
                    }
                    let (mut lo, mut hi) = (-1i64, l.universe as i64);
                    while lo < hi {
                        let mid = (lo + hi + 1) / 2;
                        if heavy_bound_holds(&ratio(mid, s as u64), &rhs_base, delta, kp, k) {
                            lo = mid;
                        } else {
                            hi = mid - 1;
                        }
                    }
                    lo
                })
                .collect();
            let best = scan(
                &l,
                |s, c| c as i64 <= max_cov[s as usize],
                |x, y| x.size > y.size || (x.size == y.size && lex_less(x.mask, y.mask)),
            )
            .ok_or_else(|| Error::Contract("no nonempty subset satisfies the bound".into()))?;
            mask_vec(best.mask, size)
        }
        HeavyMode::Greedy => {
            let all = vec![true; size];
            let full_ok = heavy_bound_holds(&ratio(l.coverage(&all), size as u64), &rhs_base, delta, kp, k);
            if full_ok {
                all
            } else {
                let mut sel = vec![false; size];
                let mut taken = 0usize;
                while !heavy_enough(taken, size, delta) {
                    let rest: Vec<usize> = (0..size).filter(|&i| !sel[i]).collect();
                    if rest.is_empty() {
                        return Err(Error::Contract("greedy construction ran out of points".into()));
                    }
                    let sub: Vec<Vec<u32>> = rest.iter().map(|&i| l.lists[i].clone()).collect();
                    let (pick, _, _) = min_expansion(&sub, l.universe);
                    for (j, &i) in rest.iter().enumerate() {
                        if pick[j] {
                            sel[i] = true;
                            taken += 1;
                        }
                    }
                }
                sel
            }
        }
    };

    let taken = chosen.iter().filter(|&&b| b).count();
    let lhs = ratio(l.coverage(&chosen), taken.max(1) as u64);
    if taken == 0 || !heavy_enough(taken, size, delta) || !heavy_bound_holds(&lhs, &rhs_base, delta, kp, k) {
        return Err(Error::Contract(format!(
            "δ-heavy subset failed verification: |A'|={taken}, |A|={size}, δ={delta}, lhs={lhs}, base={rhs_base}"
        )));
    }
    Ok(DeltaHeavyResult {
        a_prime: l.to_set(inst.window(), &chosen).to_json(),
        a_prime_len: taken,
        a_len: size,
        delta: delta.to_string(),
        k_prime: kp,
        k,
        lhs,
        rhs_base,
        mode,
    })
}

/// The δ-heavy bound truncated to a tableau `T`: the same construction with
/// `C = window \ T`. Since `(0,0) ∈ B`, `C + B = C` inside the window, so the
/// truncated sumsets become `(A' + kB) ∩ T`.
pub fn truncated_heavy_tableau(
    a: &PointSet2,
    b: &PointSet2,
    t: &Tableau,
    k_prime: usize,
    k: usize,
    delta: &Surd,
    mode: HeavyMode,
) -> Result<DeltaHeavyResult> {
    if !b.get(0, 0) {
        return Err(Error::Hypothesis("B must contain (0,0)".into()));
    }
    let w = a.window();
    let c = t.to_pointset(w)?.complement();
    let inst = MagnificationInstance::new(a.clone(), b.clone(), c, Group::Window)?;
    // T lies inside the window, so nothing outside it can matter: no clipping check
    delta_heavy_inner(&inst, k_prime, k, delta, mode)
}

/// `δ` given as an exact rational.
pub fn rational_delta(d: Ratio) -> Surd {
    Surd::rational(d, 1)
}
