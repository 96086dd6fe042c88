use plunnecke_core::experiments::{pipeline_replay, PipelineInput, StepKind};
use plunnecke_core::fractal::{generate, FractalSpec};
use plunnecke_core::lattice::{PointSet2, Window};
use plunnecke_core::tableau::TableauRegion;

/// The depth-3 diagonal fractal, cut to `w`.
fn diagonal_fractal(w: Window) -> PointSet2 {
    let spec = FractalSpec::with_default_schedule(1, [(0, 0), (1, 1)], 3).unwrap();
    generate(&spec, 3, Window::square(324).unwrap()).unwrap().with_window(w)
}

#[test]
fn diagonal_fractal_trace_passes() {
    let w = Window::square(324).unwrap();
    let a = diagonal_fractal(w);
    let b = PointSet2::from_points(w, [(0, 0), (1, 0), (0, 1)]).unwrap();
    let f = TableauRegion::new([(192, 320), (320, 192)]);
    let t = pipeline_replay(&PipelineInput::new(a, b, 1, 2, 2, 8, f)).unwrap();
    assert!(t.ok(), "{:?}", t.failures().collect::<Vec<_>>());
    // Q = 8 is below 4(L+1)/alpha here, which the trace reports without failing
    assert!(!t.step("q-large").unwrap().holds);
    assert!(t.steps.iter().any(|s| s.kind == StepKind::Checked));
}

#[test]
fn axes_basis_ratio_is_exactly_one() {
    let w = Window::square(64).unwrap();
    let a = diagonal_fractal(w);
    let b = PointSet2::from_predicate(w, |x, y| x == 0 || y == 0);
    let t = pipeline_replay(&PipelineInput::new(a, b, 1, 2, 2, 8, TableauRegion::rect(64, 64))).unwrap();
    assert!(t.basis_case);
    let s = t.step("basis-identity").unwrap();
    assert!(s.holds);
    assert_eq!(s.lhs, "1");
    assert!(t.ok());
}
