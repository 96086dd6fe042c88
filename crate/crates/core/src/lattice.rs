//! Finite windows of N and N^2 stored as bit grids, plus the sumset kernels.
//!
//! Every operation computes the true set intersected with its window. For
//! subsets of N^2 this is exact inside the window: coordinates are
//! nonnegative, so points outside a window never contribute to sums inside it.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WORD: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub w: usize,
    pub h: usize,
}

impl Window {
    pub fn new(w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::EmptyWindow { w, h });
        }
        Ok(Window { w, h })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.w && y < self.h
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

fn words_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

fn tail_mask(n: usize) -> u64 {
    match n % WORD {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A finite subset of `{0, .., len-1}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PointSet1 {
    len: usize,
    bits: Vec<u64>,
}

impl PointSet1 {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyWindow { w: 0, h: 1 });
        }
        Ok(PointSet1 { len, bits: vec![0; words_for(len)] })
    }

    pub fn from_indices(len: usize, xs: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::new(len)?;
        for x in xs {
            s.insert(x)?;
        }
        Ok(s)
    }

    pub fn from_predicate(len: usize, f: impl Fn(usize) -> bool) -> Result<Self> {
        Self::from_indices(len, (0..len).filter(|&x| f(x)))
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn insert(&mut self, x: usize) -> Result<()> {
        if x >= self.len {
            return Err(Error::OutOfWindow { x, y: 0, w: self.len, h: 1 });
        }
        self.bits[x / WORD] |= 1 << (x % WORD);
        Ok(())
    }

    /// Membership; querying outside the window is an error rather than `false`.
    pub fn contains(&self, x: usize) -> Result<bool> {
        if x >= self.len {
            return Err(Error::OutOfWindow { x, y: 0, w: self.len, h: 1 });
        }
        Ok(self.bits[x / WORD] >> (x % WORD) & 1 == 1)
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&x| self.bits[x / WORD] >> (x % WORD) & 1 == 1)
    }

    /// `|A ∩ [0, n)|`.
    pub fn count_below(&self, n: usize) -> usize {
        let n = n.min(self.len);
        let full = n / WORD;
        let mut c: usize = self.bits[..full].iter().map(|w| w.count_ones() as usize).sum();
        if n % WORD != 0 {
            c += (self.bits[full] & ((1u64 << (n % WORD)) - 1)).count_ones() as usize;
        }
        c
    }

    /// Height-1 grid with the same points.
    pub fn embed(&self) -> PointSet2 {
        let mut p = PointSet2::empty(Window { w: self.len, h: 1 });
        p.bits.copy_from_slice(&self.bits);
        p
    }

    /// Inverse of [`PointSet1::embed`]; the grid must have height 1.
    pub fn project(p: &PointSet2) -> Result<Self> {
        if p.window.h != 1 {
            return Err(Error::WindowMismatch(format!(
                "projection needs a height-1 grid, got {}",
                p.window
            )));
        }
        Ok(PointSet1 { len: p.window.w, bits: p.bits.clone() })
    }
}

impl fmt::Debug for PointSet1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointSet1")
            .field("len", &self.len)
            .field("points", &self.iter().collect::<Vec<_>>())
            .finish()
    }
}

/// A finite subset of `[0,W) x [0,H)`, stored row-major with one bit per point.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PointSet2 {
    window: Window,
    stride: usize,
    bits: Vec<u64>,
}

impl PointSet2 {
    pub fn empty(window: Window) -> Self {
        let stride = words_for(window.w);
        PointSet2 { window, stride, bits: vec![0; stride * window.h] }
    }

    pub fn full(window: Window) -> Self {
        let mut p = Self::empty(window);
        let tail = tail_mask(window.w);
        for row in p.bits.chunks_mut(p.stride) {
            row.fill(u64::MAX);
            *row.last_mut().unwrap() = tail;
        }
        p
    }

    pub fn from_points(window: Window, pts: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut p = Self::empty(window);
        for (x, y) in pts {
            p.insert(x, y)?;
        }
        Ok(p)
    }

    pub fn from_predicate(window: Window, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut p = Self::empty(window);
        for y in 0..window.h {
            for x in 0..window.w {
                if f(x, y) {
                    p.set(x, y);
                }
            }
        }
        p
    }

    /// Points of `[x0,x1) x [y0,y1)` clipped to the window.
    pub fn rect(window: Window, x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        let mut p = Self::empty(window);
        p.fill_rect(x0, x1, y0, y1);
        p
    }

    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    fn set(&mut self, x: usize, y: usize) {
        self.bits[y * self.stride + x / WORD] |= 1 << (x % WORD);
    }

    pub fn insert(&mut self, x: usize, y: usize) -> Result<()> {
        if !self.window.contains(x, y) {
            return Err(self.oob(x, y));
        }
        self.set(x, y);
        Ok(())
    }

    pub fn remove(&mut self, x: usize, y: usize) -> Result<()> {
        if !self.window.contains(x, y) {
            return Err(self.oob(x, y));
        }
        self.bits[y * self.stride + x / WORD] &= !(1 << (x % WORD));
        Ok(())
    }

    fn oob(&self, x: usize, y: usize) -> Error {
        Error::OutOfWindow { x, y, w: self.window.w, h: self.window.h }
    }

    /// Membership; querying outside the window is an error.
    pub fn contains(&self, x: usize, y: usize) -> Result<bool> {
        if !self.window.contains(x, y) {
            return Err(self.oob(x, y));
        }
        Ok(self.get(x, y))
    }

    /// Membership of the clipped set: `false` outside the window.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.window.contains(x, y) && self.bits[y * self.stride + x / WORD] >> (x % WORD) & 1 == 1
    }

    pub fn fill_rect(&mut self, x0: usize, x1: usize, y0: usize, y1: usize) {
        let x1 = x1.min(self.window.w);
        let y1 = y1.min(self.window.h);
        if x0 >= x1 || y0 >= y1 {
            return;
        }
        for y in y0..y1 {
            let row = &mut self.bits[y * self.stride..(y + 1) * self.stride];
            or_range(row, x0, x1);
        }
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Points in row-major order: by `y`, then by `x`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits.chunks(self.stride).enumerate().flat_map(|(y, row)| {
            row.iter().enumerate().flat_map(move |(wi, &word)| {
                let mut w = word;
                std::iter::from_fn(move || {
                    if w == 0 {
                        return None;
                    }
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some((wi * WORD + b, y))
                })
            })
        })
    }

    pub fn points(&self) -> Vec<(usize, usize)> {
        self.iter().collect()
    }

    /// Largest `x` and `y` coordinates present, if nonempty.
    pub fn max_coords(&self) -> Option<(usize, usize)> {
        let mut out: Option<(usize, usize)> = None;
        for (x, y) in self.iter() {
            out = Some(match out {
                None => (x, y),
                Some((mx, my)) => (mx.max(x), my.max(y)),
            });
        }
        out
    }

    /// `|A ∩ [x0,x1) x [y0,y1)|`.
    pub fn count_rect(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> u64 {
        let x1 = x1.min(self.window.w);
        let y1 = y1.min(self.window.h);
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let mut mask = vec![0u64; self.stride];
        or_range(&mut mask, x0, x1);
        let mut c = 0u64;
        for y in y0..y1 {
            let row = &self.bits[y * self.stride..(y + 1) * self.stride];
            c += row.iter().zip(&mask).map(|(a, m)| (a & m).count_ones() as u64).sum::<u64>();
        }
        c
    }

    fn check_same(&self, o: &PointSet2, op: &str) -> Result<()> {
        if self.window != o.window {
            return Err(Error::WindowMismatch(format!(
                "{op} of sets on {} and {}",
                self.window, o.window
            )));
        }
        Ok(())
    }

    pub fn union(&self, o: &PointSet2) -> Result<PointSet2> {
        self.check_same(o, "union")?;
        let mut r = self.clone();
        r.bits.iter_mut().zip(&o.bits).for_each(|(a, b)| *a |= b);
        Ok(r)
    }

    pub fn intersection(&self, o: &PointSet2) -> Result<PointSet2> {
        self.check_same(o, "intersection")?;
        let mut r = self.clone();
        r.bits.iter_mut().zip(&o.bits).for_each(|(a, b)| *a &= b);
        Ok(r)
    }

    pub fn difference(&self, o: &PointSet2) -> Result<PointSet2> {
        self.check_same(o, "difference")?;
        let mut r = self.clone();
        r.bits.iter_mut().zip(&o.bits).for_each(|(a, b)| *a &= !b);
        Ok(r)
    }

    /// `window \ A`.
    pub fn complement(&self) -> PointSet2 {
        let mut r = self.clone();
        let tail = tail_mask(self.window.w);
        for row in r.bits.chunks_mut(self.stride) {
            row.iter_mut().for_each(|w| *w = !*w);
            *row.last_mut().unwrap() &= tail;
        }
        r
    }

    pub fn is_subset(&self, o: &PointSet2) -> Result<bool> {
        self.check_same(o, "subset test")?;
        Ok(self.bits.iter().zip(&o.bits).all(|(a, b)| a & !b == 0))
    }

    /// The same points placed in another window (clipping if it is smaller).
    pub fn with_window(&self, window: Window) -> PointSet2 {
        let mut r = PointSet2::empty(window);
        let copy_words = self.stride.min(r.stride);
        for y in 0..self.window.h.min(window.h) {
            let src = &self.bits[y * self.stride..y * self.stride + copy_words];
            r.bits[y * r.stride..y * r.stride + copy_words].copy_from_slice(src);
            let last = y * r.stride + r.stride - 1;
            r.bits[last] &= tail_mask(window.w);
        }
        r
    }

    /// `dst |= (self + (dx, dy))`, clipped to `dst`'s window.
    pub fn shift_or_into(&self, dx: usize, dy: usize, dst: &mut PointSet2) {
        if dx >= dst.window.w || dy >= dst.window.h {
            return;
        }
        let rows = self.window.h.min(dst.window.h - dy);
        let tail = tail_mask(dst.window.w);
        for y in 0..rows {
            let src = &self.bits[y * self.stride..(y + 1) * self.stride];
            let d0 = (y + dy) * dst.stride;
            let drow = &mut dst.bits[d0..d0 + dst.stride];
            shift_or_row(src, dx, drow);
            *drow.last_mut().unwrap() &= tail;
        }
    }

    /// The translate `A + (dx, dy)` in the same window.
    pub fn translate(&self, dx: usize, dy: usize) -> PointSet2 {
        let mut r = PointSet2::empty(self.window);
        self.shift_or_into(dx, dy, &mut r);
        r
    }

    pub fn to_json(&self) -> PointSetJson {
        PointSetJson { w: self.window.w, h: self.window.h, points: self.iter().map(|(x, y)| [x, y]).collect() }
    }

    pub fn from_json(j: &PointSetJson) -> Result<Self> {
        Self::from_points(Window::new(j.w, j.h)?, j.points.iter().map(|p| (p[0], p[1])))
    }

    /// Binary PGM (P5). Members are black on white; row 0 of the image is the
    /// top row `y = H-1`, so the origin sits bottom-left as in a plot.
    pub fn write_pgm<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.window.w, self.window.h)?;
        let mut line = vec![0u8; self.window.w];
        for y in (0..self.window.h).rev() {
            for (x, px) in line.iter_mut().enumerate() {
                *px = if self.get(x, y) { 0 } else { 255 };
            }
            out.write_all(&line)?;
        }
        Ok(())
    }
}

impl fmt::Debug for PointSet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointSet2")
            .field("window", &self.window)
            .field("points", &self.points())
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSetJson {
    pub w: usize,
    pub h: usize,
    pub points: Vec<[usize; 2]>,
}

fn or_range(row: &mut [u64], x0: usize, x1: usize) {
    let (w0, w1) = (x0 / WORD, (x1 - 1) / WORD);
    for (wi, word) in row.iter_mut().enumerate().take(w1 + 1).skip(w0) {
        let lo = if wi == w0 { x0 % WORD } else { 0 };
        let hi = if wi == w1 { (x1 - 1) % WORD + 1 } else { WORD };
        let m = if hi - lo == WORD { u64::MAX } else { ((1u64 << (hi - lo)) - 1) << lo };
        *word |= m;
    }
}

#[inline]
fn shift_or_row(src: &[u64], dx: usize, dst: &mut [u64]) {
    let (ws, bs) = (dx / WORD, dx % WORD);
    let n = dst.len();
    for i in ws..n {
        let j = i - ws;
        if j >= src.len() {
            break;
        }
        let mut v = src[j] << bs;
        if bs != 0 && j > 0 {
            v |= src[j - 1] >> (WORD - bs);
        }
        dst[i] |= v;
    }
    // carry from the last source word into the next destination word
    if bs != 0 && src.len() + ws < n {
        dst[src.len() + ws] |= src[src.len() - 1] >> (WORD - bs);
    }
}

/// `(A + B) ∩ w`.
pub fn sumset(a: &PointSet2, b: &PointSet2, w: Window) -> PointSet2 {
    let mut out = PointSet2::empty(w);
    // iterate over the sparser operand, shifting the denser one
    let (pts, grid) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    for (x, y) in pts.iter() {
        grid.shift_or_into(x, y, &mut out);
    }
    out
}

/// `kB ∩ w`, with `0B = {(0,0)}`.
pub fn iterated_sumset(b: &PointSet2, k: usize, w: Window) -> PointSet2 {
    let mut acc = PointSet2::empty(w);
    acc.set(0, 0);
    for _ in 0..k {
        acc = sumset(&acc, b, w);
    }
    acc
}

/// `((A + nB) \ (C + (n-1)B)) ∩ w`.
pub fn truncated_sumset(a: &PointSet2, b: &PointSet2, c: &PointSet2, n: usize, w: Window) -> Result<PointSet2> {
    if n == 0 {
        return Err(Error::InvalidArgument("truncated sumset needs n >= 1".into()));
    }
    let nb = iterated_sumset(b, n, w);
    let plus = sumset(a, &nb, w);
    let n1b = iterated_sumset(b, n - 1, w);
    let minus = sumset(c, &n1b, w);
    plus.difference(&minus)
}

/// `A + B` in the cyclic group `Z_m x Z_m`; both sets live in an `m x m` window.
pub fn cyclic_sumset(a: &PointSet2, b: &PointSet2) -> Result<PointSet2> {
    let win = a.window();
    if win != b.window() || win.w != win.h {
        return Err(Error::WindowMismatch("cyclic sumset needs equal square windows".into()));
    }
    let m = win.w;
    let mut out = PointSet2::empty(win);
    for (bx, by) in b.iter() {
        for (ax, ay) in a.iter() {
            out.set((ax + bx) % m, (ay + by) % m);
        }
    }
    Ok(out)
}

pub fn cyclic_iterated_sumset(b: &PointSet2, k: usize) -> Result<PointSet2> {
    let mut acc = PointSet2::empty(b.window());
    acc.set(0, 0);
    for _ in 0..k {
        acc = cyclic_sumset(&acc, b)?;
    }
    Ok(acc)
}

/// Something that can count its points in origin-anchored rectangles.
///
/// `count_below(x, y) = |A ∩ [0,x) x [0,y)|`. Implementations must be exact.
pub trait RectCounter: Sync {
    fn count_below(&self, x: u64, y: u64) -> u64;

    /// Extent inside which counts are exact; queries beyond it are rejected by callers.
    fn extent(&self) -> (u64, u64) {
        (u64::MAX, u64::MAX)
    }

    /// Points in the half-open column strip `[x0,x1) x [0,y)`.
    fn count_strip(&self, x0: u64, x1: u64, y: u64) -> u64 {
        self.count_below(x1, y) - self.count_below(x0, y)
    }
}

impl RectCounter for PointSet2 {
    fn count_below(&self, x: u64, y: u64) -> u64 {
        self.count_rect(0, x as usize, 0, y as usize)
    }

    fn extent(&self) -> (u64, u64) {
        (self.window.w as u64, self.window.h as u64)
    }
}

/// Summed-area table over a point set for O(1) prefix counts.
pub struct PrefixSums {
    w: usize,
    h: usize,
    table: Vec<u32>,
}

impl PrefixSums {
    pub fn new(p: &PointSet2) -> Self {
        let Window { w, h } = p.window();
        let mut table = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut run = 0u32;
            for x in 0..w {
                run += p.get(x, y) as u32;
                table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + run;
            }
        }
        PrefixSums { w, h, table }
    }
}

impl RectCounter for PrefixSums {
    fn count_below(&self, x: u64, y: u64) -> u64 {
        let x = (x as usize).min(self.w);
        let y = (y as usize).min(self.h);
        self.table[y * (self.w + 1) + x] as u64
    }

    fn extent(&self) -> (u64, u64) {
        (self.w as u64, self.h as u64)
    }
}
