use std::fs::{self, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use plunnecke_core::density::{schnirelmann_2d, tab_lower_estimate};
use plunnecke_core::experiments::{
    pipeline_replay, resume_cursor, screen_rect_density, search_schnirelmann, verify_campaign, write_jsonl,
    CampaignConfig, PipelineConfig, ScreenConfig, SchnirelmannSearch, Verdict,
};
use plunnecke_core::fractal::{
    default_schedule, generate, perturb_rectangle, rect_density_formula, tab_density_formula, CountMode, FractalCounter,
    FractalSpec, PatternJson, Sides,
};
use plunnecke_core::lattice::{PointSet2, PointSetJson, Window};
use plunnecke_core::plunnecke::{check_root_monotone, delta_heavy, rational_delta, HeavyMode, InstanceJson, MagnificationInstance};
use plunnecke_core::rational::{format_ratio, parse_ratio, Surd};
use plunnecke_core::tableau::TableauRegion;
use plunnecke_core::tiling::{bad_regions, remove_bad, render_svg, staircase, trim_points, SvgLayers, TilingContext};
use plunnecke_core::trimming::{max_alpha, trim, verify_trim, SmaxSearch, WeightedTableau, WeightedTableauJson, DEFAULT_VERIFY_GUARD};
use plunnecke_core::{Error, Result};

/// Sumsets, densities and Plünnecke-type inequalities on N^2.
///
/// Exit codes: 0 all checks pass, 1 usage or input error, 2 violation found
/// (payload on stdout), 3 inconclusive or partial.
#[derive(Parser)]
#[command(name = "plunnecke", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lower density estimates of a point set or fractal.
    Density(DensityArgs),
    /// Exact densities of a fractal pattern, optional rendering and snapping.
    Fractal(FractalArgs),
    /// Magnification ratios D_n and their root-monotonicity.
    Magnify(MagnifyArgs),
    /// A δ-heavy subset for the truncated Plünnecke bound.
    Heavy(HeavyArgs),
    /// Trim a weighted tableau to its least measurable density.
    Trim(TrimArgs),
    /// Build the Q^2-tiling of a tableau region, with optional point overlays.
    Tile(TileArgs),
    /// Replay the density argument on one instance.
    Pipeline(PipelineArgs),
    /// Counterexample searches.
    #[command(subcommand)]
    Search(SearchCmd),
    /// Write a point set as a PGM image.
    Render(RenderArgs),
    /// Seeded verification campaign.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DensityArgs {
    /// Point set as JSON `{"w","h","points"}`.
    #[arg(long, conflicts_with = "pattern")]
    input: Option<PathBuf>,
    /// Fractal pattern as JSON `{"n","points","schedule"?}`; counted analytically.
    #[arg(long)]
    pattern: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Largest number of boxes per region.
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// Corners must exceed this.
    #[arg(long, default_value_t = 0)]
    r: u64,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// `W,H`; defaults to the set's extent.
    #[arg(long, value_parser = parse_pair)]
    extent: Option<(u64, u64)>,
    /// Also report σ_{N,M} for `N,M` (point sets only).
    #[arg(long, value_parser = parse_pair)]
    schnirelmann: Option<(u64, u64)>,
}

#[derive(Args)]
struct FractalArgs {
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Render the set to a PGM file.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Snap the rectangle `W,H` at scale `--k`.
    #[arg(long, value_parser = parse_pair)]
    perturb: Option<(u64, u64)>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Snap against the top layer only instead of the whole set.
    #[arg(long)]
    layer: bool,
}

#[derive(Args)]
struct MagnifyArgs {
    /// Instance as JSON `{"a","b","c"?,"cyclic"?}`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 3)]
    n_max: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Greedy,
    BruteForce,
}

impl From<ModeArg> for HeavyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Greedy => HeavyMode::Greedy,
            ModeArg::BruteForce => HeavyMode::BruteForce,
        }
    }
}

#[derive(Args)]
struct HeavyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    k_prime: usize,
    /// `δ` as a rational, or `isqrt:Q` for `Q^(-1/2)`.
    #[arg(long)]
    delta: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    mode: ModeArg,
}

#[derive(Args)]
struct TrimArgs {
    /// Weighted tableau as JSON `{"profile","mu","rho"}`.
    #[arg(long)]
    input: PathBuf,
    /// Trimming level; defaults to the least measurable density.
    #[arg(long)]
    alpha: Option<String>,
}

#[derive(Args)]
struct TileArgs {
    /// Corners `W,H;W,H;...`.
    #[arg(long, value_parser = parse_corners)]
    corners: Corners,
    #[arg(long)]
    q: u64,
    /// Points to trim, clean and pick a staircase from.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write the tiling context as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Append the trace to this JSON-lines file instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SearchCmd {
    /// σ_{N,M}(A+k'B) >= σ(A)^(1-k'/k) σ(kB)^(k'/k) over a box.
    Schnirelmann {
        #[arg(long)]
        config: PathBuf,
        /// Instances to test in this run.
        #[arg(long)]
        budget: Option<u64>,
        /// JSON-lines report; an existing one is resumed.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Leave wall-clock time out of the report.
        #[arg(long)]
        no_timing: bool,
    },
    /// Finite-window screen of the rectangle-density inequality.
    Screen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    pgm: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(u64, u64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `A,B`, got {s:?}"))?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

#[derive(Clone)]
struct Corners(Vec<(u64, u64)>);

fn parse_corners(s: &str) -> std::result::Result<Corners, String> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(parse_pair).collect::<std::result::Result<_, _>>().map(Corners)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    let stdout = io::stdout();
    write_jsonl(&mut stdout.lock(), v)
}

/// Appends to `path` when given, otherwise prints.
fn emit<T: Serialize>(v: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let f = OpenOptions::new().create(true).append(true).open(p)?;
            let mut w = BufWriter::new(f);
            write_jsonl(&mut w, v)?;
            w.flush()?;
            Ok(())
        }
        None => print(v),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

const PASS: u8 = 0;
const VIOLATION: u8 = 2;

fn density(a: &DensityArgs) -> Result<u8> {
    if let Some(p) = &a.pattern {
        let pat: PatternJson = read_json(p)?;
        let spec = FractalSpec::from_json(&pat, a.depth)?;
        let counter = FractalCounter::new(&spec, a.depth)?;
        print(&tab_lower_estimate(&counter, a.r, a.l, a.stride, a.extent)?)?;
        return Ok(PASS);
    }
    let path = a.input.as_ref().ok_or_else(|| Error::InvalidArgument("give --input or --pattern".into()))?;
    let set = PointSet2::from_json(&read_json::<PointSetJson>(path)?)?;
    let est = tab_lower_estimate(&set, a.r, a.l, a.stride, a.extent)?;
    match a.schnirelmann {
        Some((n, m)) => {
            let s = schnirelmann_2d(&set, n as usize, m as usize)?;
            print(&json!({ "tab_estimate": est, "schnirelmann": format_ratio(&s) }))?
        }
        None => print(&est)?,
    }
    Ok(PASS)
}

fn fractal(a: &FractalArgs) -> Result<u8> {
    let pat: PatternJson = read_json(&a.pattern)?;
    let spec = FractalSpec::from_json(&pat, a.depth)?;
    let pts = spec.pattern.clone();
    let (rect, rect_box) = rect_density_formula(&pts, spec.n);
    let (tab, tab_shape) = tab_density_formula(&pts, spec.n, spec.n)?;
    print(&json!({
        "schedule": spec.schedule,
        "default_schedule": default_schedule(spec.n, a.depth)?,
        "side": spec.side(a.depth),
        "rect_density": format_ratio(&rect),
        "rect_minimizer": rect_box,
        "tab_density": format_ratio(&tab),
        "tab_minimizer": tab_shape.profile(),
    }))?;
    if let Some(out) = &a.pgm {
        let side = spec.side(a.depth) as usize;
        let set = generate(&spec, a.depth, Window::square(side)?)?;
        let mut buf = Vec::new();
        set.write_pgm(&mut buf)?;
        write_file(out, &buf)?;
    }
    if let Some((w, h)) = a.perturb {
        let mode = if a.layer { CountMode::Layer } else { CountMode::Fractal };
        print(&perturb_rectangle(&spec, a.depth, w, h, a.k, Sides::Both, mode)?)?;
    }
    Ok(PASS)
}

fn magnify(a: &MagnifyArgs) -> Result<u8> {
    let inst = MagnificationInstance::from_json(&read_json::<InstanceJson>(&a.instance)?)?;
    let rep = check_root_monotone(&inst, a.n_max)?;
    print(&rep)?;
    Ok(if rep.violations.is_empty() { PASS } else { VIOLATION })
}

fn parse_delta(s: &str) -> Result<Surd> {
    match s.strip_prefix("isqrt:") {
        Some(q) => {
            let d = Surd::inv_sqrt(q.parse().map_err(|_| Error::Parse(format!("bad Q in {s:?}")))?);
            Ok(d.to_rational().map(rational_delta).unwrap_or(d))
        }
        None => Ok(rational_delta(parse_ratio(s)?)),
    }
}

fn heavy(a: &HeavyArgs) -> Result<u8> {
    let inst = MagnificationInstance::from_json(&read_json::<InstanceJson>(&a.instance)?)?;
    match delta_heavy(&inst, a.k_prime, a.k, &parse_delta(&a.delta)?, a.mode.into()) {
        Ok(r) => {
            print(&r)?;
            Ok(PASS)
        }
        Err(Error::Contract(msg)) => {
            print(&json!({ "violation": msg, "instance": inst.to_json() }))?;
            Ok(VIOLATION)
        }
        Err(e) => Err(e),
    }
}

fn trim_cmd(a: &TrimArgs) -> Result<u8> {
    let wt = WeightedTableau::from_json(&read_json::<WeightedTableauJson>(&a.input)?)?;
    let alpha = match &a.alpha {
        Some(s) => parse_ratio(s)?,
        None => max_alpha(&wt)?,
    };
    let out = trim(&wt, &alpha, SmaxSearch::Dp)?;
    let check = verify_trim(&wt, &alpha, &out, DEFAULT_VERIFY_GUARD)?;
    let rho: Vec<String> = out.rho_prime.iter().map(format_ratio).collect();
    print(&json!({ "alpha": format_ratio(&alpha), "rho_prime": rho, "s_max_trace": out.s_max_trace, "check": check }))?;
    Ok(if check.ok() { PASS } else { VIOLATION })
}

fn tile(a: &TileArgs) -> Result<u8> {
    let region = TableauRegion::new(a.corners.0.iter().copied());
    let ctx = TilingContext::build(&region, a.q)?;
    if let Some(p) = &a.json {
        write_file(p, ctx.to_json()?.as_bytes())?;
    }
    let mut summary = json!({
        "corners": region.corners(),
        "q": a.q,
        "coarse_cells": ctx.cells0.len(),
        "cells": ctx.cells.len(),
        "index_profile": ctx.index_tableau.profile(),
    });
    let Some(pp) = &a.points else {
        if let Some(svg) = &a.svg {
            write_file(svg, render_svg(&ctx, &SvgLayers::default()).as_bytes())?;
        }
        print(&summary)?;
        return Ok(PASS);
    };
    let set = PointSet2::from_json(&read_json::<PointSetJson>(pp)?)?;
    let set = set.intersection(&region.to_pointset(set.window()))?;
    let trimmed = trim_points(&ctx, &set, DEFAULT_VERIFY_GUARD)?;
    let a_prime = trimmed.set()?;
    let bad = bad_regions(&ctx)?;
    let a0 = remove_bad(&ctx, &a_prime, &bad)?;
    summary["alpha"] = json!(format_ratio(&trimmed.alpha));
    summary["trimmed"] = json!(a_prime.len());
    summary["after_bad_removal"] = json!(a0.len());
    let st = if a0.is_empty() { None } else { Some(staircase(&ctx, &a0)?) };
    if let Some(st) = &st {
        summary["staircase"] = json!(st.points);
        summary["upper_set"] = json!(st.s_measure);
        summary["hull"] = json!(st.hull.measure);
        summary["g"] = json!(st.g_measure);
    }
    if let Some(svg) = &a.svg {
        let g = st.as_ref().map(|s| s.g_rects());
        let layers = SvgLayers {
            upper_set_below: st.as_ref().map(|s| &s.below),
            hull: st.as_ref().map(|s| &s.hull),
            g: g.as_deref(),
            bad: Some(&bad),
            points: Some(&a0),
        };
        write_file(svg, render_svg(&ctx, &layers).as_bytes())?;
    }
    print(&summary)?;
    Ok(PASS)
}

fn pipeline(a: &PipelineArgs) -> Result<u8> {
    let cfg: PipelineConfig = read_json(&a.config)?;
    let trace = pipeline_replay(&cfg.input()?)?;
    emit(&trace, a.report.as_deref())?;
    if trace.ok() {
        return Ok(PASS);
    }
    if a.report.is_some() {
        let failed: Vec<_> = trace.failures().collect();
        print(&json!({ "failed_steps": failed, "stopped": trace.stopped }))?;
    }
    Ok(VIOLATION)
}

fn search(cmd: &SearchCmd) -> Result<u8> {
    match cmd {
        SearchCmd::Schnirelmann { config, budget, report, no_timing } => {
            let s: SchnirelmannSearch = read_json(config)?;
            let cursor = match report {
                Some(p) if p.exists() => resume_cursor(&fs::read_to_string(p)?, &s)?,
                _ => 0,
            };
            let r = search_schnirelmann(&s, cursor, *budget, !no_timing)?;
            emit(&r, report.as_deref())?;
            if r.verdict == Verdict::Violation && report.is_some() {
                print(&json!({ "violation_count": r.violation_count, "violations": r.violations }))?;
            }
            Ok(r.verdict.exit_code() as u8)
        }
        SearchCmd::Screen { config, report } => {
            let cfg: ScreenConfig = read_json(config)?;
            let r = screen_rect_density(&cfg)?;
            emit(&r, report.as_deref())?;
            Ok(r.verdict.exit_code() as u8)
        }
    }
}

fn render(a: &RenderArgs) -> Result<u8> {
    let set = PointSet2::from_json(&read_json::<PointSetJson>(&a.input)?)?;
    let mut buf = Vec::new();
    set.write_pgm(&mut buf)?;
    write_file(&a.pgm, &buf)?;
    Ok(PASS)
}

fn verify(a: &VerifyArgs) -> Result<u8> {
    let cfg: CampaignConfig = read_json(&a.config)?;
    let r = verify_campaign(&cfg)?;
    emit(&r, a.report.as_deref())?;
    match &r.failure {
        None => Ok(PASS),
        Some(f) => {
            if a.report.is_some() {
                print(f)?;
            }
            Ok(VIOLATION)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is taken by violations here
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match &cli.cmd {
        Cmd::Density(a) => density(a),
        Cmd::Fractal(a) => fractal(a),
        Cmd::Magnify(a) => magnify(a),
        Cmd::Heavy(a) => heavy(a),
        Cmd::Trim(a) => trim_cmd(a),
        Cmd::Tile(a) => tile(a),
        Cmd::Pipeline(a) => pipeline(a),
        Cmd::Search(c) => search(c),
        Cmd::Render(a) => render(a),
        Cmd::Verify(a) => verify(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
