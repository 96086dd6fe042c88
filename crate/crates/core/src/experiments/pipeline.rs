//! Step-by-step replay of the tableau-density Plünnecke argument on one
//! finite instance. Every inequality is re-evaluated from raw counts in exact
//! arithmetic; nothing reported by an upstream module is trusted.

use std::cmp::Ordering;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::density::tab_lower_estimate;
use crate::fractal::{generate, FractalSpec, PatternJson};
use crate::lattice::{iterated_sumset, sumset, PointSet2, PointSetJson, Window};
use crate::plunnecke::{truncated_heavy_tableau, HeavyMode};
use crate::rational::{format_ratio, int, parse_ratio, power_product_ge, ratio, serde_ratio, Ratio, Surd};
use crate::tableau::TableauRegion;
use crate::tiling::{
    bad_regions, below_points, cell_weights, measurable_hull, remove_bad, staircase, trim_points, Rect,
    TilingContext,
};
use crate::trimming::{max_alpha, upper_regions_at_most, DEFAULT_VERIFY_GUARD};
use crate::{Error, Result};

use super::search::BFamily;

#[derive(Clone, Debug)]
pub struct PipelineInput {
    pub a: PointSet2,
    pub b: PointSet2,
    pub k_prime: usize,
    pub k: usize,
    pub l: usize,
    pub q: u64,
    pub term: TableauRegion,
    /// Lower tableau density of `A`; estimated on the term when absent.
    pub alpha: Option<Ratio>,
    /// Lower `Tab(L)` density of `kB`; estimated on the term when absent.
    pub d_kb: Option<Ratio>,
    pub mode: HeavyMode,
    pub guard: u128,
}

impl PipelineInput {
    pub fn new(a: PointSet2, b: PointSet2, k_prime: usize, k: usize, l: usize, q: u64, term: TableauRegion) -> Self {
        PipelineInput {
            a,
            b,
            k_prime,
            k,
            l,
            q,
            term,
            alpha: None,
            d_kb: None,
            mode: HeavyMode::Greedy,
            guard: DEFAULT_VERIFY_GUARD,
        }
    }
}

/// Where a point set of a pipeline configuration comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetSource {
    Points(PointSetJson),
    /// A fractal set, cut to the window.
    Fractal { pattern: PatternJson, depth: usize },
    Family(BFamily),
    Full,
}

impl SetSource {
    pub fn build(&self, w: Window) -> Result<PointSet2> {
        match self {
            SetSource::Points(j) => {
                let p = PointSet2::from_json(j)?;
                if p.window() != w {
                    return Err(Error::WindowMismatch(format!("points are given in {}, expected {w}", p.window())));
                }
                Ok(p)
            }
            SetSource::Fractal { pattern, depth } => {
                let spec = FractalSpec::from_json(pattern, *depth)?;
                let side = (spec.side(*depth) as usize).max(w.w).max(w.h);
                Ok(generate(&spec, *depth, Window::square(side)?)?.with_window(w))
            }
            SetSource::Family(f) => f.build(w),
            SetSource::Full => Ok(PointSet2::full(w)),
        }
    }
}

/// A pipeline run as read from a configuration file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: [usize; 2],
    pub a: SetSource,
    pub b: SetSource,
    pub k: usize,
    pub k_prime: usize,
    pub l: usize,
    pub q: u64,
    /// Corners `(W, H)` of the term.
    pub term: Vec<(u64, u64)>,
    #[serde(default)]
    pub alpha: Option<String>,
    #[serde(default)]
    pub d_kb: Option<String>,
    #[serde(default)]
    pub mode: Option<HeavyMode>,
}

impl PipelineConfig {
    pub fn input(&self) -> Result<PipelineInput> {
        let w = Window::new(self.window[0], self.window[1])?;
        let mut input = PipelineInput::new(
            self.a.build(w)?,
            self.b.build(w)?,
            self.k_prime,
            self.k,
            self.l,
            self.q,
            TableauRegion::new(self.term.iter().copied()),
        );
        input.alpha = self.alpha.as_deref().map(parse_ratio).transpose()?;
        input.d_kb = self.d_kb.as_deref().map(parse_ratio).transpose()?;
        if let Some(m) = self.mode {
            input.mode = m;
        }
        Ok(input)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    /// Must hold on every instance; a failure fails the trace.
    Checked,
    /// Recorded for information. Preconditions of the argument, and bounds
    /// that are only derived from them, are diagnostics when a precondition fails.
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub statement: String,
    pub lhs: String,
    pub rhs: String,
    /// `None` when the side is a maximum that is decided but not computed.
    pub lhs_value: Option<f64>,
    pub rhs_value: Option<f64>,
    pub holds: bool,
    pub kind: StepKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub k_prime: usize,
    pub k: usize,
    pub l: usize,
    pub q: u64,
    pub term: TableauRegion,
    pub term_measure: u64,
    #[serde(with = "serde_ratio")]
    pub alpha: Ratio,
    pub alpha_measured: bool,
    #[serde(with = "serde_ratio")]
    pub alpha_n: Ratio,
    pub delta: String,
    pub a_prime: Option<PointSetJson>,
    pub a0: Option<PointSetJson>,
    pub a0_prime: Option<PointSetJson>,
    /// `F'` with `S = F \ F'`.
    pub s_below: Option<TableauRegion>,
    pub s_measure: u64,
    pub hull_measure: u64,
    pub points: Vec<(u64, u64)>,
    pub g_parts: Vec<Vec<Rect>>,
    pub g_measure: u64,
    pub lambda: String,
    pub lambda_value: f64,
    /// `λ` without clamping `α_n - (L+1)/Q` at zero; negative when `Q` is too small.
    pub lambda_unclamped: f64,
    #[serde(with = "serde_ratio")]
    pub d_kb: Ratio,
    #[serde(with = "serde_ratio")]
    pub empirical_delta: Ratio,
    pub basis_case: bool,
    pub steps: Vec<Step>,
    /// Set when the replay could not continue (e.g. nothing survived a step).
    pub stopped: Option<String>,
}

impl PipelineTrace {
    pub fn ok(&self) -> bool {
        self.stopped.is_none() && self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.kind == StepKind::Checked && !s.holds)
    }

    pub fn step(&self, name: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Copy)]
enum Rel {
    Ge,
    Gt,
    Le,
    Eq,
}

impl Rel {
    fn symbol(self) -> &'static str {
        match self {
            Rel::Ge => ">=",
            Rel::Gt => ">",
            Rel::Le => "<=",
            Rel::Eq => "=",
        }
    }

    fn holds(self, o: Ordering) -> bool {
        match self {
            Rel::Ge => o != Ordering::Less,
            Rel::Gt => o == Ordering::Greater,
            Rel::Le => o != Ordering::Greater,
            Rel::Eq => o == Ordering::Equal,
        }
    }
}

/// A product of powers `base^(e/root)`.
type Powers = Vec<(Surd, u32)>;

fn show_powers(p: &[(Surd, u32)], root: u32) -> String {
    if p.is_empty() {
        return "1".into();
    }
    p.iter()
        .map(|(b, e)| if *e == root { format!("({b})") } else { format!("({b})^({e}/{root})") })
        .collect::<Vec<_>>()
        .join(" * ")
}

fn eval_powers(p: &[(Surd, u32)], root: u32) -> f64 {
    p.iter().map(|(b, e)| b.to_f64().powf(*e as f64 / root as f64)).product()
}

struct Recorder {
    q: u64,
    steps: Vec<Step>,
}

impl Recorder {
    fn kind(checked: bool) -> StepKind {
        if checked {
            StepKind::Checked
        } else {
            StepKind::Diagnostic
        }
    }

    fn cmp(&mut self, name: &str, statement: &str, lhs: &Surd, rel: Rel, rhs: &Surd, kind: StepKind) -> bool {
        let holds = rel.holds(lhs.cmp_to(rhs));
        self.steps.push(Step {
            name: name.into(),
            statement: format!("{statement}  [{}]", rel.symbol()),
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
            lhs_value: Some(lhs.to_f64()),
            rhs_value: Some(rhs.to_f64()),
            holds,
            kind,
        });
        holds
    }

    /// `prod lhs >= prod rhs`, each factor raised to `e/root`; decided on the
    /// `root`-th powers.
    fn powers_ge(&mut self, name: &str, statement: &str, lhs: &[(Surd, u32)], rhs: &[(Surd, u32)], root: u32) -> bool {
        let holds = power_product_ge(lhs, rhs, self.q);
        self.steps.push(Step {
            name: name.into(),
            statement: format!("{statement}  [>=]"),
            lhs: show_powers(lhs, root),
            rhs: show_powers(rhs, root),
            lhs_value: Some(eval_powers(lhs, root)),
            rhs_value: Some(eval_powers(rhs, root)),
            holds,
            kind: StepKind::Checked,
        });
        holds
    }
}

/// The least density of `a` over measurable subregions of the tiling of `term`.
pub fn measurable_alpha(a: &PointSet2, term: &TableauRegion, q: u64) -> Result<Ratio> {
    let ctx = TilingContext::build(term, q)?;
    max_alpha(&cell_weights(&ctx, &a.intersection(&term.to_pointset(a.window()))?)?)
}

/// Index of the first term whose measurable density exceeds `3α/4`, with that
/// density. Later terms are not inspected.
pub fn first_good_term(a: &PointSet2, terms: &[TableauRegion], q: u64, alpha: &Ratio) -> Result<Option<(usize, Ratio)>> {
    let bar = alpha * ratio(3u64, 4u64);
    for (n, t) in terms.iter().enumerate() {
        let an = measurable_alpha(a, t, q)?;
        if an > bar {
            return Ok(Some((n, an)));
        }
    }
    Ok(None)
}

pub fn pipeline_replay(input: &PipelineInput) -> Result<PipelineTrace> {
    let PipelineInput { a, b, k_prime: kp, k, l, q, term: f, .. } = input;
    let (kp, k, l, q) = (*kp, *k, *l, *q);
    if !(0 < kp && kp < k) {
        return Err(Error::InvalidArgument(format!("need 0 < k' < k, got k'={kp}, k={k}")));
    }
    if l == 0 || f.len() > l {
        return Err(Error::InvalidArgument(format!("the term has {} corners, more than L = {l}", f.len())));
    }
    if a.window() != b.window() {
        return Err(Error::WindowMismatch(format!("{} vs {}", a.window(), b.window())));
    }
    if !b.get(0, 0) {
        return Err(Error::Hypothesis("B must contain (0,0)".into()));
    }
    let w = a.window();
    if f.width() > w.w as u64 || f.height() > w.h as u64 {
        return Err(Error::WindowTooSmall(format!("term {:?} does not fit in {w}", f.corners())));
    }
    // corner divisibility is checked here, as a hard error
    let ctx = TilingContext::build(f, q)?;
    let fsz = f.measure();
    let f_pts = f.to_pointset(w);
    let a_in_f = a.intersection(&f_pts)?;

    let (alpha, alpha_measured) = match &input.alpha {
        Some(al) => (al.clone(), false),
        None => (tab_lower_estimate(&a_in_f, q - 1, l, q, Some((f.width(), f.height())))?.value, true),
    };
    let kb = iterated_sumset(b, k, w);
    let d_kb = match &input.d_kb {
        Some(d) => d.clone(),
        None => tab_lower_estimate(&kb, q - 1, l, q, Some((f.width(), f.height())))?.value,
    };

    let sr = |r: Ratio| Surd::rational(r, q);
    let cnt = |num: u64, den: u64| Surd::rational(ratio(num, den), q);
    let one = sr(Ratio::one());
    let delta = Surd::inv_sqrt(q);
    let mut rec = Recorder { q, steps: Vec::new() };
    let qr = int(q);
    let lp1 = int(l as u64 + 1);

    // α^{-1}; absent when α = 0, where the bounds using it are vacuous
    let inv_alpha = (!alpha.is_zero()).then(|| alpha.recip());
    let q_large = match &inv_alpha {
        Some(ia) => rec.cmp(
            "q-large",
            "Q >= 4(L+1)/alpha",
            &sr(qr.clone()),
            Rel::Ge,
            &sr(int(4u64) * &lp1 * ia),
            StepKind::Diagnostic,
        ),
        None => {
            rec.steps.push(Step {
                name: "q-large".into(),
                statement: "Q >= 4(L+1)/alpha  [>=]".into(),
                lhs: q.to_string(),
                rhs: "inf".into(),
                lhs_value: Some(q as f64),
                rhs_value: None,
                holds: false,
                kind: StepKind::Diagnostic,
            });
            false
        }
    };

    let wt = cell_weights(&ctx, &a_in_f)?;
    let trimmed = trim_points(&ctx, &a_in_f, input.guard)?;
    let alpha_n = trimmed.alpha.clone();
    let term_good = rec.cmp(
        "alpha-n-large",
        "alpha_n > 3 alpha / 4",
        &sr(alpha_n.clone()),
        Rel::Gt,
        &sr(&alpha * ratio(3u64, 4u64)),
        StepKind::Diagnostic,
    );
    let derived = Recorder::kind(q_large && term_good);

    let a_prime = trimmed.set()?;
    let q2 = ratio(1u64, q * q);
    let kept: Vec<Ratio> =
        ctx.cells.iter().map(|c| ratio(c.rect.count(&a_prime), c.rect.measure())).collect();
    let (upper_ok, exhaustive) = upper_regions_at_most(&wt, &kept, &(&alpha_n + &q2), input.guard)?;
    rec.steps.push(Step {
        name: "trimmed-upper-regions".into(),
        statement: format!(
            "max over measurable upper regions U of |A' ∩ U|/|U| <= alpha_n + 1/Q^2 (decided by {})  [<=]",
            if exhaustive { "enumeration" } else { "profile DP" }
        ),
        lhs: "max |A' ∩ U|/|U|".into(),
        rhs: format_ratio(&(&alpha_n + &q2)),
        lhs_value: None,
        rhs_value: Some(crate::rational::to_f64(&(&alpha_n + &q2))),
        holds: upper_ok,
        kind: StepKind::Checked,
    });
    rec.cmp("trimmed-density", "|A'|/|F| >= alpha_n", &cnt(a_prime.len() as u64, fsz), Rel::Ge, &sr(alpha_n.clone()), StepKind::Checked);

    let bad = bad_regions(&ctx)?;
    let a0 = remove_bad(&ctx, &a_prime, &bad)?;
    let (a0n, apn) = (a0.len() as u64, a_prime.len() as u64);
    rec.cmp(
        "bad-removal",
        "|A_0| >= |A'| - (L+1)|F|/Q",
        &sr(int(a0n)),
        Rel::Ge,
        &sr(int(apn) - &lp1 * int(fsz) / &qr),
        StepKind::Checked,
    );
    rec.cmp(
        "bad-removal-density",
        "|A_0|/|F| >= alpha_n - (L+1)/Q",
        &cnt(a0n, fsz),
        Rel::Ge,
        &sr(&alpha_n - &lp1 / &qr),
        StepKind::Checked,
    );
    rec.cmp("survivor-density", "|A_0|/|F| > alpha/2", &cnt(a0n, fsz), Rel::Gt, &sr(&alpha / int(2u64)), derived);

    let mut trace = PipelineTrace {
        k_prime: kp,
        k,
        l,
        q,
        term: f.clone(),
        term_measure: fsz,
        alpha: alpha.clone(),
        alpha_measured,
        alpha_n: alpha_n.clone(),
        delta: delta.to_string(),
        a_prime: Some(a_prime.to_json()),
        a0: Some(a0.to_json()),
        a0_prime: None,
        s_below: None,
        s_measure: 0,
        hull_measure: 0,
        points: Vec::new(),
        g_parts: Vec::new(),
        g_measure: 0,
        lambda: String::new(),
        lambda_value: 0.0,
        lambda_unclamped: 0.0,
        d_kb: d_kb.clone(),
        empirical_delta: Ratio::zero(),
        basis_case: false,
        steps: Vec::new(),
        stopped: None,
    };
    if a0.is_empty() {
        trace.stopped = Some("no points survive bad-strip removal".into());
        trace.steps = rec.steps;
        return Ok(trace);
    }

    let heavy = truncated_heavy_tableau(&a0, b, &f.to_tableau(), kp, k, &delta, input.mode)?;
    let a0p = heavy.a_prime_set()?;
    let a0pn = a0p.len() as u64;
    let kpb = iterated_sumset(b, kp, w);
    let s_all = sumset(a, &kpb, w).intersection(&f_pts)?.len() as u64;
    let s_a0 = sumset(&a0, &kpb, w).intersection(&f_pts)?.len() as u64;
    let sum_k = sumset(&a0p, &kb, w).intersection(&f_pts)?;
    let h = sum_k.len() as u64;
    let (kpu, ku) = (kp as u32, k as u32);
    let one_minus = one.sub(&delta);

    rec.cmp(
        "heavy-monotone",
        "|(A+k'B) ∩ F|/|A_0| >= |(A_0+k'B) ∩ F|/|A_0|",
        &cnt(s_all, a0n),
        Rel::Ge,
        &cnt(s_a0, a0n),
        StepKind::Checked,
    );
    rec.powers_ge(
        "heavy-bound",
        "|(A_0+k'B) ∩ F|/|A_0| >= (1-Q^(-1/2)) (|(A'_0+kB) ∩ F|/|A'_0|)^(k'/k)",
        &[(cnt(s_a0, a0n), ku)],
        &[(one_minus.clone(), ku), (cnt(h, a0pn), kpu)],
        ku,
    );
    rec.cmp("heavy-size", "|A'_0| >= Q^(-1/2) |A_0|", &sr(int(a0pn)), Rel::Ge, &delta.scale(&int(a0n)), StepKind::Checked);

    let below = below_points(f, a0p.iter().map(|(x, y)| (x as u64, y as u64)));
    let s = fsz - below.measure();
    let hull = measurable_hull(&ctx, &below)?;
    let st = hull.measure;
    rec.cmp("hull-excess", "|S~ \\ S|/|F| <= 2/Q", &cnt(st - s, fsz), Rel::Le, &cnt(2, q), StepKind::Checked);
    rec.cmp("upper-set-contains", "|S| >= |A'_0|", &sr(int(s)), Rel::Ge, &sr(int(a0pn)), StepKind::Checked);
    rec.cmp(
        "upper-set-density",
        "|S|/|F| >= alpha Q^(-1/2) / 2",
        &cnt(s, fsz),
        Rel::Ge,
        &delta.scale(&(&alpha / int(2u64))),
        derived,
    );
    // 1 + 4δ/α, infinite when α = 0
    let hull_factor = inv_alpha.as_ref().map(|ia| one.add(&delta.scale(&(int(4u64) * ia))));
    if let Some(hf) = &hull_factor {
        rec.cmp("hull-ratio", "|S~|/|S| <= 1 + 4 alpha^(-1) Q^(-1/2)", &cnt(st, s), Rel::Le, hf, derived);
    }
    let a_prime_in_hull: u64 = hull.cells.iter().map(|&c| ctx.cells[c].rect.count(&a_prime)).sum();
    rec.cmp(
        "hull-trimmed-monotone",
        "|A'_0|/|S~| <= |A' ∩ S~|/|S~|",
        &cnt(a0pn, st),
        Rel::Le,
        &cnt(a_prime_in_hull, st),
        StepKind::Checked,
    );
    rec.cmp(
        "hull-trimmed-density",
        "|A' ∩ S~|/|S~| <= alpha_n + 1/Q^2",
        &cnt(a_prime_in_hull, st),
        Rel::Le,
        &sr(&alpha_n + &q2),
        StepKind::Checked,
    );

    // the chain, every link compared on k'-th powers
    let a0_frac = cnt(a0n, fsz).mul(&one_minus);
    let slack = sr(&alpha_n - &lp1 / &qr);
    let p_clamped = slack.positive_part().mul(&one_minus);
    let inv_trim = sr((&alpha_n + &q2).recip());
    let inv_hull = hull_factor.as_ref().and_then(Surd::recip).unwrap_or_else(|| sr(Ratio::zero()));
    let l0: Powers = vec![(cnt(s_all, fsz), ku)];
    let l1: Powers = vec![(a0_frac, ku), (cnt(h, a0pn), kpu)];
    let l2: Powers = vec![(p_clamped.clone(), ku), (cnt(h, a0pn), kpu)];
    let l4: Powers = vec![(p_clamped.clone(), ku), (inv_trim.clone(), kpu), (cnt(h, st), kpu)];
    let l5: Powers = vec![(p_clamped.clone(), ku), (inv_trim.clone(), kpu), (inv_hull.clone(), kpu), (cnt(h, s), kpu)];
    rec.powers_ge("chain-heavy", "(|(A+k'B) ∩ F|/|F|)^(k/k') >= (|A_0|/|F| (1-Q^(-1/2)))^(k/k') |(A'_0+kB) ∩ F|/|A'_0|", &l0, &l1, kpu);
    rec.powers_ge("chain-bad-removal", "... >= ((alpha_n - (L+1)/Q)_+ (1-Q^(-1/2)))^(k/k') |(A'_0+kB) ∩ F|/|A'_0|", &l1, &l2, kpu);
    rec.powers_ge("chain-trimmed", "... >= ... (alpha_n + Q^(-2))^(-1) |(A'_0+kB) ∩ F|/|S~|", &l2, &l4, kpu);
    rec.powers_ge("chain-hull", "... >= ... (1 + 4 alpha^(-1) Q^(-1/2))^(-1) |(A'_0+kB) ∩ F|/|S|", &l4, &l5, kpu);

    let lambda_f: Powers = vec![(p_clamped, ku), (inv_trim.clone(), kpu), (inv_hull.clone(), kpu)];
    trace.lambda = show_powers(&lambda_f, kpu);
    trace.lambda_value = eval_powers(&lambda_f, kpu);
    let raw = slack.mul(&one_minus).to_f64();
    trace.lambda_unclamped =
        raw.signum() * raw.abs().powf(k as f64 / kp as f64) * inv_trim.to_f64() * inv_hull.to_f64();
    rec.powers_ge("lambda-bound", "(|(A+k'B) ∩ F|/|F|)^(k/k') >= lambda |(A'_0+kB) ∩ F|/|S|", &l0, &l5, kpu);

    trace.basis_case = f_pts.is_subset(&kb)?;
    if trace.basis_case {
        rec.cmp("basis-identity", "|(A'_0+kB) ∩ F|/|S| = 1 when kB covers F", &cnt(h, s), Rel::Eq, &one, StepKind::Checked);
    }

    let sc = staircase(&ctx, &a0p)?;
    let pts = sc.points.clone();
    if pts.len() >= 2 {
        let gap = pts.windows(2).map(|p| p[0].1 - p[1].1).min().unwrap_or(0);
        rec.cmp("staircase-gap", "min_j y(a_(j-1)) - y(a_j) >= Q", &sr(int(gap)), Rel::Ge, &sr(qr.clone()), StepKind::Checked);
    }
    let g = sc.g_measure;
    rec.cmp("staircase-coverage", "|S \\ G|/|F| <= 3/Q", &cnt(s - g, fsz), Rel::Le, &cnt(3, q), StepKind::Checked);

    // G_j as rectangles anchored at a_j, one per strip the quadrant meets
    let mut min_side = u64::MAX;
    let mut most = 0;
    for (j, &(x, y)) in pts.iter().enumerate() {
        let cap = if j == 0 { u64::MAX } else { pts[j - 1].1 };
        let boxes: Vec<(u64, u64)> = f
            .corners()
            .iter()
            .filter(|&&(wm, hm)| x < wm && y < hm)
            .map(|&(wm, hm)| (wm - x, hm.min(cap) - y))
            .collect();
        most = most.max(boxes.len());
        min_side = boxes.iter().map(|&(dw, dh)| dw.min(dh)).fold(min_side, u64::min);
    }
    rec.cmp("region-box-count", "max_j #boxes(G_j) <= L", &sr(int(most as u64)), Rel::Le, &sr(int(l as u64)), StepKind::Checked);
    if min_side != u64::MAX {
        rec.cmp("region-box-sides", "min box side over all G_j >= Q", &sr(int(min_side)), Rel::Ge, &sr(qr.clone()), StepKind::Checked);
    }

    let mut per_region = Vec::with_capacity(pts.len());
    for (part, &(ax, ay)) in sc.g_parts.iter().zip(&pts) {
        let gj: u64 = part.iter().map(Rect::measure).sum();
        let all: u64 = part.iter().map(|r| r.count(&sum_k)).sum();
        let own: u64 = part
            .iter()
            .map(|r| kb.count_rect((r.x0 - ax) as usize, (r.x1 - ax) as usize, (r.y0 - ay) as usize, (r.y1 - ay) as usize))
            .sum();
        per_region.push((gj, all, own));
    }
    let worst = per_region.iter().map(|&(gj, _, own)| ratio(own, gj)).min().unwrap_or_else(|| d_kb.clone());
    let emp = if d_kb > worst { &d_kb - &worst } else { Ratio::zero() };
    trace.empirical_delta = emp.clone();
    let target = sr(&d_kb - &emp);
    for (j, &(gj, all, own)) in per_region.iter().enumerate() {
        rec.cmp(
            &format!("region-monotone-{}", j + 1),
            &format!("|(A'_0+kB) ∩ G_{0}|/|G_{0}| >= |(a_{0}+kB) ∩ G_{0}|/|G_{0}|", j + 1),
            &cnt(all, gj),
            Rel::Ge,
            &cnt(own, gj),
            StepKind::Checked,
        );
        rec.cmp(
            &format!("region-density-{}", j + 1),
            &format!("|(a_{0}+kB) ∩ G_{0}|/|G_{0}| >= d(kB) - delta_emp", j + 1),
            &cnt(own, gj),
            Rel::Ge,
            &target,
            StepKind::Checked,
        );
    }
    let in_g: u64 = per_region.iter().map(|&(_, all, _)| all).sum();
    rec.cmp("region-union-density", "|(A'_0+kB) ∩ G|/|G| >= d(kB) - delta_emp", &cnt(in_g, g), Rel::Ge, &target, StepKind::Checked);

    let share = inv_alpha
        .as_ref()
        .map(|ia| one.sub(&delta.scale(&(int(6u64) * ia))))
        .unwrap_or_else(|| sr(Ratio::zero()));
    rec.cmp("staircase-share", "|G|/|S| >= 1 - 6 alpha^(-1) Q^(-1/2)", &cnt(g, s), Rel::Ge, &share, derived);
    rec.cmp("upper-set-sumset", "|(A'_0+kB) ∩ S|/|S| >= |(A'_0+kB) ∩ G|/|S|", &cnt(h, s), Rel::Ge, &cnt(in_g, s), StepKind::Checked);
    rec.cmp(
        "upper-set-sumset-density",
        "|(A'_0+kB) ∩ G|/|S| >= (|G|/|S|)(d(kB) - delta_emp)",
        &cnt(in_g, s),
        Rel::Ge,
        &cnt(g, s).mul(&target),
        StepKind::Checked,
    );
    let share_p = share.positive_part();
    let target_p = target.positive_part();
    rec.cmp(
        "upper-set-sumset-bound",
        "|(A'_0+kB) ∩ S|/|S| >= (1 - 6 alpha^(-1) Q^(-1/2))_+ (d(kB) - delta_emp)",
        &cnt(h, s),
        Rel::Ge,
        &share_p.mul(&target_p),
        derived,
    );
    let mut fin = lambda_f.clone();
    fin.push((share_p, kpu));
    fin.push((target_p, kpu));
    rec.powers_ge(
        "final-bound",
        "(|(A+k'B) ∩ F|/|F|)^(k/k') >= lambda (1 - 6 alpha^(-1) Q^(-1/2))_+ (d(kB) - delta_emp)",
        &l0,
        &fin,
        kpu,
    );

    trace.a0_prime = Some(a0p.to_json());
    trace.s_below = Some(below);
    trace.s_measure = s;
    trace.hull_measure = st;
    trace.points = pts;
    trace.g_parts = sc.g_parts;
    trace.g_measure = g;
    trace.steps = rec.steps;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Window;

    fn unit_b(w: Window) -> PointSet2 {
        PointSet2::from_points(w, [(0, 0), (1, 0), (0, 1)]).unwrap()
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"window":[64,64],"a":{"fractal":{"pattern":{"n":1,"points":[[0,0],[1,1]]},"depth":2}},
            "b":{"family":{"kind":"unit"}},"k":2,"k_prime":1,"l":1,"q":4,"term":[[32,32]],"alpha":"1/3"}"#;
        let cfg: PipelineConfig = serde_json::from_str(text).unwrap();
        let input = cfg.input().unwrap();
        assert_eq!(input.b.len(), 3);
        assert_eq!(input.alpha, Some(ratio(1u64, 3u64)));
        // depth 2 of the diagonal pattern covers [0,36)^2, cut to the window
        assert!(input.a.get(0, 0) && input.a.get(35, 35) && !input.a.get(40, 40));
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_window_is_trivial() {
        let w = Window::square(32).unwrap();
        let a = PointSet2::full(w);
        let mut input = PipelineInput::new(a, unit_b(w), 1, 2, 1, 4, TableauRegion::rect(32, 32));
        input.alpha = Some(Ratio::one());
        let t = pipeline_replay(&input).unwrap();
        assert!(t.ok(), "{:?}", t.failures().collect::<Vec<_>>());
        assert_eq!(t.alpha_n, Ratio::one());
        let fin = t.step("final-bound").unwrap();
        assert!(fin.lhs_value.unwrap() >= fin.rhs_value.unwrap());
        // A + k'B already fills F
        assert_eq!(t.step("chain-heavy").unwrap().lhs_value, Some(1.0));
    }

    #[test]
    fn basis_case_ratio_is_one() {
        let w = Window::square(32).unwrap();
        let a = PointSet2::from_predicate(w, |x, y| (x + y) % 3 == 0);
        let b = PointSet2::from_predicate(w, |x, y| x == 0 || y == 0);
        let t = pipeline_replay(&PipelineInput::new(a, b, 1, 2, 1, 4, TableauRegion::rect(32, 32))).unwrap();
        assert!(t.basis_case);
        let s = t.step("basis-identity").unwrap();
        assert!(s.holds);
        assert_eq!(s.lhs, "1");
        assert!(t.ok(), "{:?}", t.failures().collect::<Vec<_>>());
    }

    #[test]
    fn corners_must_be_divisible() {
        let w = Window::square(32).unwrap();
        let a = PointSet2::full(w);
        let r = pipeline_replay(&PipelineInput::new(a, unit_b(w), 1, 2, 1, 4, TableauRegion::rect(24, 32)));
        assert!(r.is_err());
    }

    #[test]
    fn small_q_is_a_diagnostic() {
        let w = Window::square(64).unwrap();
        let a = PointSet2::from_predicate(w, |x, y| (x * 7 + y * 3) % 5 < 2);
        let f = TableauRegion::new([(32, 64), (64, 32)]);
        let t = pipeline_replay(&PipelineInput::new(a, unit_b(w), 1, 2, 2, 4, f)).unwrap();
        let pre = t.step("q-large").unwrap();
        assert!(!pre.holds);
        assert_eq!(pre.kind, StepKind::Diagnostic);
        assert!(t.ok(), "{:?}", t.failures().collect::<Vec<_>>());
        // (alpha_n - 3/4)_+ = 0 kills lambda
        assert_eq!(t.lambda_value, 0.0);
        assert!(t.lambda_unclamped < 0.0);
    }

    #[test]
    fn first_good_term_picks_the_earliest() {
        let w = Window::square(256).unwrap();
        // a 4x4 hole at the origin; cells of the 16x16 term are 4x4
        let a = PointSet2::from_predicate(w, |x, y| x >= 4 || y >= 4);
        let terms = [TableauRegion::rect(16, 16), TableauRegion::rect(64, 64), TableauRegion::rect(256, 256)];
        let alpha = Ratio::one();
        let got = first_good_term(&a, &terms, 4, &alpha).unwrap();
        let (n, an) = got.unwrap();
        assert_eq!(n, 1);
        assert_eq!(an, ratio(15u64, 16u64));
        for t in &terms[..n] {
            assert!(measurable_alpha(&a, t, 4).unwrap() <= ratio(3u64, 4u64));
        }
    }
}
