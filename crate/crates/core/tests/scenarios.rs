use std::sync::Arc;

use hycat_core::{
    simulate, Execution, Graph, GraphMap, HDSMorphism, HyPhMorphism, HybridPhaseSpace,
    HybridSystem, Region, Relation, SimulateOptions, SimulationStatus, SmoothMap, VectorField,
};
use indexmap::IndexMap;

fn loop_system(
    region: Region,
    field: &[&str],
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
) -> Arc<HybridSystem> {
    let graph = Arc::new(Graph::from_strs(&["*"], &[("gamma", "*", "*")]).unwrap());
    let rel = Relation::finite(region.clone(), region.clone(), pairs).unwrap();
    let phase = HybridPhaseSpace::new(
        graph,
        [("*".into(), region.clone())].into(),
        [("gamma".into(), rel)].into(),
    )
    .unwrap();
    let field = VectorField::parse(region, field).unwrap();
    Arc::new(HybridSystem::new(Arc::new(phase), [("*".into(), field)].into()).unwrap())
}

fn sawtooth() -> Arc<HybridSystem> {
    loop_system(Region::unit(1), &["1"], vec![(vec![0.0], vec![1.0])])
}

fn square() -> Arc<HybridSystem> {
    loop_system(
        Region::unit(2),
        &["1", "1"],
        vec![(vec![0.0, 0.0], vec![1.0, 1.0])],
    )
}

fn diagonal(src: &Arc<HybridSystem>, tgt: &Arc<HybridSystem>) -> HDSMorphism {
    let alpha = SmoothMap::parse(Region::unit(1), Region::unit(2), &["x1", "x1"]).unwrap();
    let base = HyPhMorphism::new(
        src.phase_space().clone(),
        tgt.phase_space().clone(),
        GraphMap::identity(src.graph().clone()),
        [("*".into(), alpha)].into(),
    )
    .unwrap();
    HDSMorphism::new(src.clone(), tgt.clone(), base).unwrap()
}

#[test]
fn square_system_jumps_on_the_diagonal() {
    let sys = square();
    let runs = simulate(
        &sys,
        &SimulateOptions::new("*", vec![0.0, 0.0], 0.0, 2.5, 1e-3),
    )
    .unwrap();
    let e = &runs[0].execution;
    assert_eq!(e.jump_times().len(), 2);
    assert!((e.jump_times()[0] - 1.0).abs() < 1e-6);
    let first = &e.curves()[0];
    assert!(first.end().iter().all(|v| (v - 1.0).abs() < 1e-6));
    assert_eq!(e.curves()[1].start(), &[0.0, 0.0]);
    assert!(e.validate(&sys, 1e-6).unwrap().is_valid());
}

#[test]
fn empty_guards_give_one_branch_to_the_horizon() {
    let sys = loop_system(Region::interval(0.0, 10.0).unwrap(), &["1"], vec![]);
    let runs = simulate(&sys, &SimulateOptions::new("*", vec![0.0], 0.0, 3.0, 1e-2)).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].status, SimulationStatus::Completed);
    assert_eq!(runs[0].execution.segment_count(), 1);
    assert_eq!(runs[0].execution.curves()[0].t1(), 3.0);
}

#[test]
fn unit_speed_hit_time() {
    let sys = sawtooth();
    for x0 in [0.0, 0.123456789, 0.5, 0.9999] {
        let runs = simulate(&sys, &SimulateOptions::new("*", vec![x0], 0.0, 1.5, 1e-3)).unwrap();
        let t = runs[0].execution.jump_times()[0];
        assert!((t - (1.0 - x0)).abs() <= 1e-8, "{x0}: {t}");
    }
}

#[test]
fn sawtooth_pushes_to_the_diagonal() {
    let (src, tgt) = (sawtooth(), square());
    let m = diagonal(&src, &tgt);
    assert!(m.verify(1e-6).unwrap().is_verified());
    let e = &simulate(&src, &SimulateOptions::new("*", vec![0.0], 0.0, 3.5, 1e-3)).unwrap()[0]
        .execution;
    let pushed = e.pushforward(&m).unwrap();
    assert!(pushed.validate(&tgt, 1e-6).unwrap().is_valid());
    for (i, curve) in pushed.curves().iter().enumerate() {
        let t0 = curve.t0();
        for (t, y) in curve.samples() {
            let want = t - t0;
            assert!(
                (y[0] - want).abs() < 1e-6 && (y[1] - want).abs() < 1e-6,
                "segment {i} at {t}"
            );
        }
    }
}

#[test]
fn pushforward_is_functorial() {
    let (src, tgt) = (sawtooth(), square());
    let m = diagonal(&src, &tgt);
    // Swap the square's coordinates; the diagonal flow and reset are symmetric.
    let swap = SmoothMap::parse(Region::unit(2), Region::unit(2), &["x2", "x1"]).unwrap();
    let base = HyPhMorphism::new(
        tgt.phase_space().clone(),
        tgt.phase_space().clone(),
        GraphMap::identity(tgt.graph().clone()),
        [("*".into(), swap)].into(),
    )
    .unwrap();
    let n = HDSMorphism::new(tgt.clone(), tgt.clone(), base).unwrap();
    assert!(n.verify(1e-6).unwrap().is_verified());
    let e = &simulate(&src, &SimulateOptions::new("*", vec![0.3], 0.0, 2.7, 1e-3)).unwrap()[0]
        .execution;
    let twice = e.pushforward(&m).unwrap().pushforward(&n).unwrap();
    let once = e
        .pushforward(&HDSMorphism::compose(&n, &m).unwrap())
        .unwrap();
    assert!(once.distance(&twice).unwrap() <= 1e-9);
}

#[test]
fn guard_reset_system_simulates_and_validates() {
    let graph = Arc::new(
        Graph::from_strs(
            &["on", "off"],
            &[("down", "on", "off"), ("up", "off", "on")],
        )
        .unwrap(),
    );
    let r = Region::interval(18.0, 22.0).unwrap();
    let rel = |at: f64| {
        let guard = Region::interval(at, at).unwrap();
        let reset = SmoothMap::parse(guard.clone(), r.clone(), &["x1"]).unwrap();
        Relation::guard_reset(r.clone(), r.clone(), guard, reset).unwrap()
    };
    let phase = HybridPhaseSpace::new(
        graph,
        [("on".into(), r.clone()), ("off".into(), r.clone())].into(),
        [("down".into(), rel(22.0)), ("up".into(), rel(18.0))].into(),
    )
    .unwrap();
    let fields: IndexMap<String, VectorField> = [
        (
            "on".to_string(),
            VectorField::parse(r.clone(), &["0.5*(25 - x1)"]).unwrap(),
        ),
        (
            "off".to_string(),
            VectorField::parse(r.clone(), &["-0.5*(x1 - 15)"]).unwrap(),
        ),
    ]
    .into();
    let sys = HybridSystem::new(Arc::new(phase), fields).unwrap();
    assert!(sys.validate(1e-9).is_empty());
    let runs = simulate(
        &sys,
        &SimulateOptions::new("on", vec![20.0], 0.0, 10.0, 1e-3),
    )
    .unwrap();
    let e = &runs[0].execution;
    assert_eq!(e.nodes()[..3], ["on", "off", "on"]);
    // on: x(t) = 25 - 5 e^{-t/2} reaches 22 at t = 2 ln(5/3).
    assert!((e.jump_times()[0] - 2.0 * (5.0f64 / 3.0).ln()).abs() < 1e-6);
    assert!(e.validate(&sys, 1e-6).unwrap().is_valid());
    let back = Execution::from_csv(&e.to_csv(), &sys, 1e-6).unwrap();
    assert_eq!(back.edges(), e.edges());
}
