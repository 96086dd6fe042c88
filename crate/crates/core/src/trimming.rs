//! Trimming a density function on a weighted tableau so that every upper
//! region averages at most `α` while the whole tableau averages exactly `α`.
//!
//! All searches over subtableaux run as dynamic programs over column profiles;
//! plain enumeration is kept for small shapes and as a test oracle.

use std::ops::Add;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_ratio, parse_ratio, Ratio};
use crate::tableau::{count_subtableaux, Tableau};

/// Shapes with at most this many subtableaux are verified by enumeration.
pub const DEFAULT_VERIFY_GUARD: u128 = 1 << 20;

/// A tableau with a positive measure `μ` and a value map `ρ` into `[0,1]`,
/// both indexed in [`Tableau::cells`] order (column by column, bottom up).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedTableau {
    pub shape: Tableau,
    pub mu: Vec<Ratio>,
    pub rho: Vec<Ratio>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedTableauJson {
    pub profile: Vec<usize>,
    pub mu: Vec<Vec<String>>,
    pub rho: Vec<Vec<String>>,
}

impl WeightedTableau {
    pub fn new(shape: Tableau, mu: Vec<Ratio>, rho: Vec<Ratio>) -> Result<Self> {
        let n = shape.measure();
        if mu.len() != n || rho.len() != n {
            return Err(Error::InvalidArgument(format!(
                "shape has {n} cells but mu has {} and rho has {}",
                mu.len(),
                rho.len()
            )));
        }
        if let Some(i) = mu.iter().position(|m| !m.is_positive()) {
            return Err(Error::InvalidArgument(format!("mu must be positive, cell {i} is {}", mu[i])));
        }
        if let Some(i) = rho.iter().position(|r| r.is_negative() || r > &Ratio::one()) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0,1], cell {i} is {}", rho[i])));
        }
        Ok(WeightedTableau { shape, mu, rho })
    }

    /// Counting measure.
    pub fn counting(shape: Tableau, rho: Vec<Ratio>) -> Result<Self> {
        let mu = vec![Ratio::one(); shape.measure()];
        Self::new(shape, mu, rho)
    }

    pub fn from_json(j: &WeightedTableauJson) -> Result<Self> {
        let shape = Tableau::from_profile(j.profile.clone())?;
        let flat = |v: &Vec<Vec<String>>| -> Result<Vec<Ratio>> {
            if v.len() != shape.width() || v.iter().zip(shape.profile()).any(|(c, &h)| c.len() != h) {
                return Err(Error::InvalidArgument("per-column arrays must match the profile".into()));
            }
            v.iter().flatten().map(|s| parse_ratio(s)).collect()
        };
        Self::new(shape.clone(), flat(&j.mu)?, flat(&j.rho)?)
    }

    pub fn to_json(&self) -> WeightedTableauJson {
        WeightedTableauJson {
            profile: self.shape.profile().to_vec(),
            mu: columns(&self.shape, &self.mu),
            rho: columns(&self.shape, &self.rho),
        }
    }

    /// `A(f, U) = Σ_U μ f / Σ_U μ` for the cells of `U`; `None` if `U` is empty.
    pub fn average(&self, f: &[Ratio], cells: impl IntoIterator<Item = usize>) -> Option<Ratio> {
        let (mut num, mut den) = (Ratio::zero(), Ratio::zero());
        for i in cells {
            num += &self.mu[i] * &f[i];
            den += &self.mu[i];
        }
        (!den.is_zero()).then(|| num / den)
    }

    /// Cell indices of `s` (a subtableau of the shape).
    pub fn cells_of(&self, s: &Tableau) -> Vec<usize> {
        s.cells().map(|(x, y)| self.shape.cell_index(x, y).expect("subtableau of the shape")).collect()
    }

    /// Cell indices of `shape \ s`.
    pub fn cells_outside(&self, s: &Tableau) -> Vec<usize> {
        self.shape
            .cells()
            .enumerate()
            .filter(|&(_, (x, y))| !s.contains(x, y))
            .map(|(i, _)| i)
            .collect()
    }

    /// Restriction to a subtableau.
    pub fn restrict(&self, s: &Tableau) -> WeightedTableau {
        let idx = self.cells_of(s);
        WeightedTableau {
            shape: s.clone(),
            mu: idx.iter().map(|&i| self.mu[i].clone()).collect(),
            rho: idx.iter().map(|&i| self.rho[i].clone()).collect(),
        }
    }

    /// `μ (f - α)` per cell, scaled to integers by a common positive factor.
    fn excess(&self, f: &[Ratio], alpha: &Ratio) -> Weights {
        Weights::from_ratios(&self.shape, self.mu.iter().zip(f).map(|(m, v)| m * (v - alpha)).collect())
    }
}

fn columns(shape: &Tableau, v: &[Ratio]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    for &h in shape.profile() {
        out.push(v[i..i + h].iter().map(format_ratio).collect());
        i += h;
    }
    out
}

/// Integer cell weights, stored column by column, with an `i128` fast path.
enum Weights {
    Small(Grid<i128>),
    Big(Grid<BigInt>),
}

struct Grid<T> {
    profile: Vec<usize>,
    /// prefix[x][h] = sum of the lowest `h` weights in column `x`
    prefix: Vec<Vec<T>>,
    total: T,
}

impl Weights {
    fn from_ratios(shape: &Tableau, w: Vec<Ratio>) -> Weights {
        let den = w.iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
        let ints: Vec<BigInt> = w.iter().map(|r| r.numer() * (&den / r.denom())).collect();
        let bound: BigInt = ints.iter().map(|v| v.abs()).sum();
        let profile = shape.profile().to_vec();
        if bound.bits() < 120 {
            Weights::Small(Grid::new(profile, ints.iter().map(|v| v.to_i128().unwrap()).collect()))
        } else {
            Weights::Big(Grid::new(profile, ints))
        }
    }
}

trait Num: Clone + Ord + Zero + Add<Output = Self> + Send + Sync {}
impl<T: Clone + Ord + Zero + Add<Output = T> + Send + Sync> Num for T {}

impl<T: Num> Grid<T> {
    fn new(profile: Vec<usize>, flat: Vec<T>) -> Self {
        let mut prefix = Vec::with_capacity(profile.len());
        let mut i = 0;
        let mut total = T::zero();
        for &h in &profile {
            let mut col = vec![T::zero()];
            for _ in 0..h {
                let next = col.last().unwrap().clone() + flat[i].clone();
                col.push(next);
                i += 1;
            }
            total = total + col[h].clone();
            prefix.push(col);
        }
        Grid { profile, prefix, total }
    }

    fn height(&self) -> usize {
        self.profile.first().copied().unwrap_or(0)
    }

    /// `Σ_S w` for a subtableau given by its profile.
    fn sum_inside(&self, profile: &[usize]) -> T {
        profile.iter().enumerate().fold(T::zero(), |acc, (x, &h)| acc + self.prefix[x][h].clone())
    }

    /// Minimum of `Σ_S w` over all subtableaux `S` (the empty one included),
    /// and a minimizing profile.
    fn min_subtableau(&self) -> (T, Vec<usize>) {
        let w = self.profile.len();
        let top = self.height();
        // best[x][hp] = min over heights h_x <= hp, h_{x+1} <= h_x, .. of the suffix sum
        let mut best: Vec<Vec<(T, usize)>> = vec![vec![(T::zero(), 0); top + 1]; w + 1];
        for x in (0..w).rev() {
            let cap = self.profile[x];
            let mut row: Vec<(T, usize)> = Vec::with_capacity(top + 1);
            for hp in 0..=top {
                let h = hp.min(cap);
                let here = (self.prefix[x][h].clone() + best[x + 1][h].0.clone(), h);
                let v = match row.last() {
                    Some(prev) if hp <= cap && prev.0 <= here.0 => prev.clone(),
                    Some(prev) if hp > cap => prev.clone(),
                    _ => here,
                };
                row.push(v);
            }
            best[x] = row;
        }
        let mut profile = Vec::with_capacity(w);
        let mut hp = top;
        for row in best.iter().take(w) {
            let h = row[hp].1;
            profile.push(h);
            hp = h;
        }
        (best[0][top].0.clone(), profile)
    }

    /// Among subtableaux `S ≠ I` with `Σ_S w < total`, one with the most
    /// cells, ties broken towards the lexicographically largest profile.
    fn largest_light_subtableau(&self) -> Option<Vec<usize>> {
        let w = self.profile.len();
        let top = self.height();
        let cells: usize = self.profile.iter().sum();
        // suf[x][hp][c] = min suffix sum with h_x <= hp using exactly c cells
        let mut suf: Vec<Vec<Vec<Option<T>>>> = vec![vec![vec![None; cells + 1]; top + 1]; w + 1];
        for hp in 0..=top {
            suf[w][hp][0] = Some(T::zero());
        }
        for x in (0..w).rev() {
            let cap = self.profile[x];
            for hp in 0..=top {
                if hp > cap {
                    suf[x][hp] = suf[x][cap].clone();
                    continue;
                }
                let mut row: Vec<Option<T>> =
                    if hp == 0 { vec![None; cells + 1] } else { suf[x][hp - 1].clone() };
                for c in hp..=cells {
                    if let Some(rest) = &suf[x + 1][hp][c - hp] {
                        let v = self.prefix[x][hp].clone() + rest.clone();
                        if row[c].as_ref().is_none_or(|cur| v < *cur) {
                            row[c] = Some(v);
                        }
                    }
                }
                suf[x][hp] = row;
            }
        }
        let target = (0..cells).rev().find(|&c| suf[0][top][c].as_ref().is_some_and(|v| *v < self.total))?;
        // forward pass: tallest feasible column first
        let mut profile = Vec::with_capacity(w);
        let (mut hp, mut left, mut acc) = (top, target, T::zero());
        for x in 0..w {
            let cap = hp.min(self.profile[x]).min(left);
            let h = (0..=cap)
                .rev()
                .find(|&h| {
                    suf[x + 1][h][left - h]
                        .as_ref()
                        .is_some_and(|rest| acc.clone() + self.prefix[x][h].clone() + rest.clone() < self.total)
                })
                .expect("the count table guarantees a feasible completion");
            acc = acc + self.prefix[x][h].clone();
            profile.push(h);
            left -= h;
            hp = h;
        }
        Some(profile)
    }
}

impl Weights {
    fn min_subtableau(&self) -> (bool, Vec<usize>) {
        match self {
            Weights::Small(g) => {
                let (v, p) = g.min_subtableau();
                (v < 0, p)
            }
            Weights::Big(g) => {
                let (v, p) = g.min_subtableau();
                (v.is_negative(), p)
            }
        }
    }

    /// Whether some `S ⊊ I` has positive weight on `I \ S`.
    /// Whether `Σ_{I\S} w <= 0` for each listed `S`, summed one by one.
    fn upper_sums_nonpositive(&self, subs: impl Iterator<Item = Tableau>) -> bool {
        fn go<T: Num>(g: &Grid<T>, mut subs: impl Iterator<Item = Tableau>) -> bool {
            subs.all(|s| g.total <= g.sum_inside(s.profile()))
        }
        match self {
            Weights::Small(g) => go(g, subs),
            Weights::Big(g) => go(g, subs),
        }
    }

    fn some_upper_region_positive(&self) -> bool {
        match self {
            Weights::Small(g) => g.min_subtableau().0 < g.total,
            Weights::Big(g) => g.min_subtableau().0 < g.total,
        }
    }

    fn largest_light_subtableau(&self) -> Option<Vec<usize>> {
        match self {
            Weights::Small(g) => g.largest_light_subtableau(),
            Weights::Big(g) => g.largest_light_subtableau(),
        }
    }
}

/// `min A(ρ, S)` over nonempty subtableaux `S`, with a minimizer.
pub fn max_alpha_with_witness(wt: &WeightedTableau) -> Result<(Ratio, Tableau)> {
    if wt.shape.is_empty() {
        return Err(Error::InvalidArgument("empty tableau".into()));
    }
    // Dinkelbach: lower α to the average of any subtableau with negative excess
    let mut s = wt.shape.clone();
    let mut alpha = wt.average(&wt.rho, 0..wt.mu.len()).unwrap();
    loop {
        let (neg, p) = wt.excess(&wt.rho, &alpha).min_subtableau();
        if !neg {
            return Ok((alpha, s));
        }
        s = Tableau::from_profile(p)?;
        alpha = wt.average(&wt.rho, wt.cells_of(&s)).expect("negative excess needs cells");
    }
}

/// The largest `α` satisfying `A(ρ, S) >= α` for every nonempty subtableau `S`.
pub fn max_alpha(wt: &WeightedTableau) -> Result<Ratio> {
    max_alpha_with_witness(wt).map(|(a, _)| a)
}

/// [`max_alpha`] by listing every subtableau.
pub fn max_alpha_enumerated(wt: &WeightedTableau, guard: u128) -> Result<Ratio> {
    if wt.shape.is_empty() {
        return Err(Error::InvalidArgument("empty tableau".into()));
    }
    wt.shape
        .subtableaux(false, guard)?
        .map(|s| wt.average(&wt.rho, wt.cells_of(&s)).unwrap())
        .min()
        .ok_or_else(|| Error::InvalidArgument("empty tableau".into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimOutput {
    #[serde(with = "crate::rational::serde_ratio_vec")]
    pub rho_prime: Vec<Ratio>,
    /// The subtableau kept at each level, outermost first.
    pub s_max_trace: Vec<Tableau>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmaxSearch {
    /// Profile dynamic program; no size limit.
    Dp,
    /// Enumerate subtableaux, bounded by the given guard.
    Enumerate(u128),
}

/// The qualifying subtableau kept at one level: among `S ⊊ I` with
/// `A(ρ, I \ S) > α`, the one with the most cells, then the lexicographically
/// largest profile. Such an `S` is maximal under inclusion.
pub fn select_s_max(wt: &WeightedTableau, rho: &[Ratio], alpha: &Ratio, how: SmaxSearch) -> Result<Option<Tableau>> {
    match how {
        SmaxSearch::Dp => {
            let p = wt.excess(rho, alpha).largest_light_subtableau();
            p.map(Tableau::from_profile).transpose()
        }
        SmaxSearch::Enumerate(guard) => {
            let mut best: Option<Tableau> = None;
            for s in wt.shape.subtableaux(true, guard)? {
                if s == wt.shape {
                    continue;
                }
                let avg = wt.average(rho, wt.cells_outside(&s)).unwrap();
                if avg <= *alpha {
                    continue;
                }
                // enumeration runs in descending lex order, so the first of each size wins ties
                if best.as_ref().is_none_or(|b| s.measure() > b.measure()) {
                    best = Some(s);
                }
            }
            Ok(best)
        }
    }
}

/// Returns `ρ' <= ρ` with `A(ρ', I) = α` and `A(ρ', I \ S) <= α` for every
/// subtableau `S ⊊ I`. Requires `0 <= α <= max_alpha(wt)`.
pub fn trim(wt: &WeightedTableau, alpha: &Ratio, how: SmaxSearch) -> Result<TrimOutput> {
    if alpha.is_negative() {
        return Err(Error::InvalidArgument(format!("α must be nonnegative, got {alpha}")));
    }
    let best = max_alpha(wt)?;
    if *alpha > best {
        return Err(Error::Hypothesis(format!(
            "α = {} exceeds the largest admissible value {}",
            format_ratio(alpha),
            format_ratio(&best)
        )));
    }
    let mut rho_prime = wt.rho.clone();
    let mut trace = Vec::new();
    let mut cur = wt.clone();
    // global index of each cell of `cur`
    let mut global: Vec<usize> = (0..wt.mu.len()).collect();
    while !cur.shape.is_empty() {
        let Some(s_max) = select_s_max(&cur, &cur.rho, alpha, how)? else { break };
        let outside = cur.cells_outside(&s_max);
        let avg = cur.average(&cur.rho, outside.iter().copied()).unwrap();
        let factor = alpha / avg;
        for &i in &outside {
            rho_prime[global[i]] = &cur.rho[i] * &factor;
        }
        let kept = cur.cells_of(&s_max);
        global = kept.iter().map(|&i| global[i]).collect();
        cur = cur.restrict(&s_max);
        trace.push(s_max);
    }
    let out = TrimOutput { rho_prime, s_max_trace: trace };
    let report = verify_trim(wt, alpha, &out, DEFAULT_VERIFY_GUARD)?;
    if !report.ok() {
        return Err(Error::Contract(format!("trim output failed its own check: {report:?}")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimCheck {
    pub below_rho: bool,
    pub average_is_alpha: bool,
    pub upper_regions_bounded: bool,
    pub exhaustive: bool,
}

impl TrimCheck {
    pub fn ok(&self) -> bool {
        self.below_rho && self.average_is_alpha && self.upper_regions_bounded
    }
}

/// Checks the three trimming conclusions. Conclusion (iii) is checked by
/// enumerating subtableaux when there are at most `guard` of them, otherwise
/// by the profile dynamic program.
pub fn verify_trim(wt: &WeightedTableau, alpha: &Ratio, out: &TrimOutput, guard: u128) -> Result<TrimCheck> {
    let rp = &out.rho_prime;
    if rp.len() != wt.rho.len() {
        return Err(Error::InvalidArgument("ρ' has the wrong number of cells".into()));
    }
    let below_rho = rp.iter().zip(&wt.rho).all(|(a, b)| !a.is_negative() && a <= b);
    let average_is_alpha = wt.average(rp, 0..rp.len()).as_ref() == Some(alpha);
    let (upper_regions_bounded, exhaustive) = upper_regions_at_most(wt, rp, alpha, guard)?;
    Ok(TrimCheck { below_rho, average_is_alpha, upper_regions_bounded, exhaustive })
}

/// Whether `A(f, I \ S) <= bound` for every subtableau `S ⊊ I`. Enumerates
/// when there are at most `guard` subtableaux, otherwise uses the profile DP.
/// The second flag reports which route ran.
pub fn upper_regions_at_most(wt: &WeightedTableau, f: &[Ratio], bound: &Ratio, guard: u128) -> Result<(bool, bool)> {
    if f.len() != wt.mu.len() {
        return Err(Error::InvalidArgument("value map has the wrong number of cells".into()));
    }
    if count_subtableaux(&wt.shape) <= guard {
        // μ > 0, so A(f, I \ S) <= bound exactly when Σ_{I\S} μ (f - bound) <= 0
        let subs = wt.shape.subtableaux(true, guard)?.filter(|s| *s != wt.shape);
        Ok((wt.excess(f, bound).upper_sums_nonpositive(subs), true))
    } else {
        Ok((!wt.excess(f, bound).some_upper_region_positive(), false))
    }
}
