//! Seeded verification sweeps over random instance families.
//!
//! Instance `i` of a family is generated from its own ChaCha stream, so runs
//! are reproducible whatever the thread count and a family can be extended
//! without changing earlier instances.

use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::density::schnirelmann_1d;
use crate::lattice::{cyclic_iterated_sumset, cyclic_sumset, truncated_sumset, PointSet1, PointSet2, Window};
use crate::plunnecke::{check_root_monotone, delta_heavy, rational_delta, Group, HeavyMode, MagnificationInstance};
use crate::rational::{format_ratio, parse_ratio, pow, ratio, Ratio};
use crate::{Error, Result};

use super::config_hash;

/// Root-monotonicity of magnification ratios, `D_{n+1}^n <= D_n^{n+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneFamily {
    pub count: u64,
    #[serde(default)]
    pub cyclic_count: u64,
    pub max_size: usize,
    pub window: usize,
    /// Largest `n` whose step `D_n -> D_{n+1}` is checked.
    pub n_max: usize,
}

/// The δ-heavy subset contract, with both search modes on small `A`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeavyFamily {
    pub count: u64,
    /// Rational values of `δ`, e.g. `"1/4"`.
    pub deltas: Vec<String>,
    pub k_max: usize,
    pub max_size: usize,
    pub window: usize,
    /// Instances with `|A|` up to this also run the exhaustive mode.
    pub brute_max: usize,
}

/// `σ(A+B) >= σ(A)^(1-1/k) σ(kB)^(1/k)` on `[0, len)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchnirelmannFamily {
    pub count: u64,
    pub len: usize,
    pub k_max: usize,
}

/// `|A+B| >= |A|^(1-1/k) |kB|^(1/k)` in `Z_m x Z_m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalityFamily {
    pub count: u64,
    pub modulus: usize,
    pub max_size: usize,
    pub k_max: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub seed: u64,
    #[serde(default)]
    pub monotone: Option<MonotoneFamily>,
    #[serde(default)]
    pub heavy: Option<HeavyFamily>,
    #[serde(default)]
    pub schnirelmann: Option<SchnirelmannFamily>,
    #[serde(default)]
    pub cardinality: Option<CardinalityFamily>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub name: String,
    pub instances: u64,
    pub passed: u64,
    /// Family-specific tallies, e.g. how often the two δ-heavy modes were compared.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub tallies: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignFailure {
    pub family: String,
    pub instance: u64,
    pub message: String,
    pub payload: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config_hash: String,
    pub seed: u64,
    pub families: Vec<FamilyReport>,
    /// The first failing instance; families after it are not run.
    pub failure: Option<CampaignFailure>,
}

impl CampaignReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

type Outcome = std::result::Result<Value, (String, Value)>;

fn rng_for(seed: u64, family: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family << 40 | i);
    rng
}

/// Up to `size` distinct points of `[0,w) x [0,h)`, always including `must`.
fn random_set(rng: &mut ChaCha8Rng, win: Window, w: usize, h: usize, size: usize, must: Option<(usize, usize)>) -> PointSet2 {
    let mut all: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
    all.shuffle(rng);
    let mut pts: Vec<(usize, usize)> = must.into_iter().collect();
    pts.extend(all.into_iter().filter(|p| Some(*p) != must).take(size.saturating_sub(pts.len())));
    PointSet2::from_points(win, pts).expect("points inside the window")
}

fn payload(inst: &MagnificationInstance) -> Value {
    serde_json::to_value(inst.to_json()).unwrap_or(Value::Null)
}

fn monotone_instance(f: &MonotoneFamily, seed: u64, i: u64, cyclic: bool) -> Outcome {
    let mut rng = rng_for(seed, if cyclic { 1 } else { 0 }, i);
    let win = Window::square(f.window).map_err(|e| (e.to_string(), Value::Null))?;
    let steps = f.n_max + 1;
    // window mode keeps A + (n_max+1)B inside the window
    let (span_a, span_b) = if cyclic { (f.window, f.window) } else { (f.window / 2, (f.window / 2 / steps).max(1)) };
    let mut size = || rng.gen_range(1..=f.max_size);
    let (sa, sb, sc) = (size(), size(), size());
    let a = random_set(&mut rng, win, span_a, span_a, sa, None);
    let b = random_set(&mut rng, win, span_b, span_b, sb, None);
    let c = random_set(&mut rng, win, span_a, span_a, sc, None);
    let group = if cyclic { Group::Cyclic } else { Group::Window };
    let inst = MagnificationInstance::new(a, b, c, group).map_err(|e| (e.to_string(), Value::Null))?;
    let rep = check_root_monotone(&inst, steps).map_err(|e| (e.to_string(), payload(&inst)))?;
    if rep.violations.is_empty() {
        Ok(Value::Null)
    } else {
        let d: Vec<String> = rep.d.iter().map(format_ratio).collect();
        Err((format!("D_(n+1)^n > D_n^(n+1) at n = {:?}", rep.violations), json!({ "instance": payload(&inst), "d": d })))
    }
}

/// `|A'| > δ|A|` and `|T_k(A')|^k' (1-δ)^k |A|^k <= |T_k'(A)|^k |A'|^k'`, from
/// sumsets computed here rather than the values the search reports.
fn heavy_contract(inst: &MagnificationInstance, a_prime: &PointSet2, kp: usize, k: usize, delta: &Ratio) -> Result<bool> {
    let w = inst.window();
    let t = |x: &PointSet2, n: usize| -> Result<u64> { Ok(truncated_sumset(x, &inst.b, &inst.c, n, w)?.len() as u64) };
    let (na, np) = (inst.a.len() as u64, a_prime.len() as u64);
    if !a_prime.is_subset(&inst.a)? || ratio(np, 1u64) <= delta * ratio(na, 1u64) {
        return Ok(false);
    }
    let x = ratio(t(a_prime, k)?, np);
    let r = ratio(t(&inst.a, kp)?, na);
    Ok(pow(&x, kp as u32) * pow(&(Ratio::one() - delta), k as u32) <= pow(&r, k as u32))
}

fn heavy_instance(f: &HeavyFamily, deltas: &[Ratio], seed: u64, i: u64) -> Outcome {
    let mut rng = rng_for(seed, 2, i);
    let win = Window::square(f.window).map_err(|e| (e.to_string(), Value::Null))?;
    let k = rng.gen_range(2..=f.k_max);
    let kp = rng.gen_range(1..k);
    let delta = deltas[rng.gen_range(0..deltas.len())].clone();
    let span_a = f.window / 2;
    let span_b = (f.window / 2 / k).max(1);
    let sa = rng.gen_range(1..=f.max_size);
    let sb = rng.gen_range(1..=f.max_size.min(span_b * span_b));
    let sc = rng.gen_range(0..=f.max_size);
    let a = random_set(&mut rng, win, span_a, span_a, sa, None);
    let b = random_set(&mut rng, win, span_b, span_b, sb, Some((0, 0)));
    let c = random_set(&mut rng, win, span_a, span_a, sc, None);
    let inst = MagnificationInstance::new(a, b, c, Group::Window).map_err(|e| (e.to_string(), Value::Null))?;
    let describe = || json!({ "instance": payload(&inst), "k": k, "k_prime": kp, "delta": format_ratio(&delta) });
    let surd = rational_delta(delta.clone());

    let run = |mode: HeavyMode| -> std::result::Result<bool, (String, Value)> {
        match delta_heavy(&inst, kp, k, &surd, mode) {
            Ok(r) => {
                let ap = r.a_prime_set().map_err(|e| (e.to_string(), describe()))?;
                heavy_contract(&inst, &ap, kp, k, &delta).map_err(|e| (e.to_string(), describe()))
            }
            Err(Error::Contract(_)) => Ok(false),
            Err(e) => Err((format!("{mode:?}: {e}"), describe())),
        }
    };
    let greedy = run(HeavyMode::Greedy)?;
    let compared = inst.a.len() <= f.brute_max;
    let brute = if compared { Some(run(HeavyMode::BruteForce)?) } else { None };
    if !greedy || brute == Some(false) {
        return Err((format!("contract fails (greedy: {greedy}, exhaustive: {brute:?})"), describe()));
    }
    Ok(json!({ "compared": compared }))
}

fn sum1(a: &[bool], b: &[bool]) -> Vec<bool> {
    let mut out = vec![false; a.len()];
    for (i, _) in a.iter().enumerate().filter(|p| *p.1) {
        for (j, _) in b.iter().enumerate().filter(|p| *p.1) {
            if i + j < out.len() {
                out[i + j] = true;
            }
        }
    }
    out
}

fn sigma1(a: &[bool]) -> Ratio {
    let s = PointSet1::from_indices(a.len(), (0..a.len()).filter(|&i| a[i])).expect("indices inside the window");
    schnirelmann_1d(&s)
}

fn schnirelmann_instance(f: &SchnirelmannFamily, seed: u64, i: u64) -> Outcome {
    let mut rng = rng_for(seed, 3, i);
    let k = rng.gen_range(2..=f.k_max);
    let (da, db): (f64, f64) = (rng.gen(), rng.gen::<f64>() * 0.5);
    let a: Vec<bool> = (0..f.len).map(|_| rng.gen_bool(da)).collect();
    let b: Vec<bool> = (0..f.len).map(|j| j == 0 || rng.gen_bool(db)).collect();
    let kb = (0..k).fold((0..f.len).map(|j| j == 0).collect::<Vec<_>>(), |acc, _| sum1(&acc, &b));
    let (s, sa, skb) = (sigma1(&sum1(&a, &b)), sigma1(&a), sigma1(&kb));
    let k32 = k as u32;
    if pow(&s, k32) >= pow(&sa, k32 - 1) * &skb {
        return Ok(Value::Null);
    }
    let idx = |v: &[bool]| (0..v.len()).filter(|&j| v[j]).collect::<Vec<_>>();
    Err((
        "sigma(A+B)^k < sigma(A)^(k-1) sigma(kB)".into(),
        json!({ "a": idx(&a), "b": idx(&b), "k": k, "len": f.len }),
    ))
}

fn cardinality_instance(f: &CardinalityFamily, seed: u64, i: u64) -> Outcome {
    let mut rng = rng_for(seed, 4, i);
    let m = f.modulus;
    let win = Window::square(m).map_err(|e| (e.to_string(), Value::Null))?;
    let k = rng.gen_range(1..=f.k_max);
    let (sa, sb) = (rng.gen_range(1..=f.max_size), rng.gen_range(1..=f.max_size));
    let a = random_set(&mut rng, win, m, m, sa, None);
    let b = random_set(&mut rng, win, m, m, sb, None);
    let err = |e: Error| (e.to_string(), Value::Null);
    let ab = cyclic_sumset(&a, &b).map_err(err)?.len() as u64;
    let kb = cyclic_iterated_sumset(&b, k).map_err(err)?.len() as u64;
    let k32 = k as u32;
    let (na, nab) = (ratio(a.len() as u64, 1u64), ratio(ab, 1u64));
    if pow(&nab, k32) >= pow(&na, k32 - 1) * ratio(kb, 1u64) {
        return Ok(Value::Null);
    }
    Err(("|A+B|^k < |A|^(k-1) |kB|".into(), json!({ "a": a.points(), "b": b.points(), "k": k, "modulus": m })))
}

/// Runs `count` instances in parallel and tallies them in index order,
/// stopping at the first failure.
fn run_family(name: &str, count: u64, f: impl Fn(u64) -> Outcome + Sync) -> (FamilyReport, Option<CampaignFailure>) {
    let outcomes: Vec<Outcome> = (0..count).into_par_iter().map(&f).collect();
    let mut passed = 0;
    let mut compared = 0u64;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => {
                passed += 1;
                compared += v.get("compared").and_then(Value::as_bool).unwrap_or(false) as u64;
            }
            Err((message, payload)) => {
                let report = FamilyReport { name: name.into(), instances: i as u64 + 1, passed, tallies: Value::Null };
                let failure = CampaignFailure { family: name.into(), instance: i as u64, message, payload };
                return (report, Some(failure));
            }
        }
    }
    let tallies = if compared > 0 { json!({ "modes_compared": compared }) } else { Value::Null };
    (FamilyReport { name: name.into(), instances: count, passed, tallies }, None)
}

pub fn verify_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    let seed = cfg.seed;
    let deltas: Vec<Ratio> = match &cfg.heavy {
        Some(h) => h.deltas.iter().map(|d| parse_ratio(d)).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    if let Some(h) = &cfg.heavy {
        if h.count > 0 && (deltas.is_empty() || h.k_max < 2) {
            return Err(Error::InvalidArgument("the δ-heavy family needs deltas and k_max >= 2".into()));
        }
    }
    let mut families = Vec::new();
    let mut failure = None;
    let mut push = |(rep, fail): (FamilyReport, Option<CampaignFailure>)| {
        families.push(rep);
        failure = fail;
        failure.is_none()
    };
    'run: {
        if let Some(f) = &cfg.monotone {
            if !push(run_family("monotone", f.count, |i| monotone_instance(f, seed, i, false)))
                || !push(run_family("monotone-cyclic", f.cyclic_count, |i| monotone_instance(f, seed, i, true)))
            {
                break 'run;
            }
        }
        if let Some(f) = &cfg.heavy {
            if !push(run_family("heavy", f.count, |i| heavy_instance(f, &deltas, seed, i))) {
                break 'run;
            }
        }
        if let Some(f) = &cfg.schnirelmann {
            if !push(run_family("schnirelmann", f.count, |i| schnirelmann_instance(f, seed, i))) {
                break 'run;
            }
        }
        if let Some(f) = &cfg.cardinality {
            push(run_family("cardinality", f.count, |i| cardinality_instance(f, seed, i)));
        }
    }
    Ok(CampaignReport { config_hash: config_hash(cfg), seed, families, failure })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignConfig {
        CampaignConfig {
            seed: 7,
            monotone: Some(MonotoneFamily { count: 30, cyclic_count: 10, max_size: 5, window: 32, n_max: 3 }),
            heavy: Some(HeavyFamily {
                count: 30,
                deltas: vec!["1/4".into(), "1/2".into(), "3/4".into()],
                k_max: 3,
                max_size: 7,
                window: 32,
                brute_max: 7,
            }),
            schnirelmann: Some(SchnirelmannFamily { count: 200, len: 24, k_max: 4 }),
            cardinality: Some(CardinalityFamily { count: 100, modulus: 6, max_size: 8, k_max: 4 }),
        }
    }

    #[test]
    fn small_campaign_passes_and_is_reproducible() {
        let a = verify_campaign(&small()).unwrap();
        assert!(a.ok(), "{:?}", a.failure);
        assert_eq!(a.families.len(), 5);
        assert!(a.families.iter().all(|f| f.passed == f.instances));
        let b = verify_campaign(&small()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn empty_config_gives_an_empty_report() {
        let r = verify_campaign(&CampaignConfig::default()).unwrap();
        assert!(r.families.is_empty());
        assert!(r.ok());
    }

    #[test]
    fn contract_checker_rejects_light_subsets() {
        let w = Window::square(16).unwrap();
        let a = PointSet2::from_points(w, [(0, 0), (3, 0), (6, 0), (9, 0)]).unwrap();
        let b = PointSet2::from_points(w, [(0, 0), (1, 0)]).unwrap();
        let c = PointSet2::empty(w);
        let inst = MagnificationInstance::new(a, b, c, Group::Window).unwrap();
        let one = PointSet2::from_points(w, [(0, 0)]).unwrap();
        // a single point is not more than half of four
        assert!(!heavy_contract(&inst, &one, 1, 2, &ratio(1u64, 2u64)).unwrap());
        assert!(heavy_contract(&inst, &inst.a, 1, 2, &ratio(1u64, 2u64)).unwrap());
    }

    #[test]
    fn failures_stop_the_family() {
        let (rep, fail) = run_family("x", 5, |i| if i == 2 { Err(("bad".into(), json!(i))) } else { Ok(Value::Null) });
        assert_eq!(rep.instances, 3);
        assert_eq!(rep.passed, 2);
        assert_eq!(fail.unwrap().instance, 2);
    }
}
