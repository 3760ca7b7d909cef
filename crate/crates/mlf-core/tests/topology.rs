use mlf_core::complexification::ComplexificationMap;
use mlf_core::fibration::{FibrationMap, LyapunovKind};
use mlf_core::geometry::scenario;
use mlf_core::rearrangement::{blend, CutoffPair, SlopeFunction};
use mlf_core::topology::*;
use proptest::prelude::*;

fn curve(name: &str, slope: (i32, i32), offset: f64) -> SurfaceCurve {
    SurfaceCurve { name: name.into(), piece: 0, slope, offset }
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

#[test]
fn genus_one_curves_meet_once() {
    let sys = SurfaceCurveSystem::standard(1);
    let m = intersect_curves(&sys).unwrap();
    assert_eq!(m.entries, vec![vec![Crossings { count: 1, algebraic: 1 }]]);
    assert!(m.warnings.is_empty());
}

#[test]
fn parallel_curves_warn() {
    let (c, w) = intersect_pair(&curve("a", (1, 0), 0.2), &curve("b", (1, 0), 0.7)).unwrap();
    assert_eq!(c.count, 0);
    assert!(w.unwrap().contains("parallel"));
    let sys = SurfaceCurveSystem {
        genus: 1,
        alpha: vec![curve("alpha1", (1, 0), 0.2)],
        beta: vec![curve("beta1", (-1, 0), 0.7)],
    };
    let m = intersect_curves(&sys).unwrap();
    assert_eq!(m.entries[0][0].count, 0);
    assert_eq!(m.warnings.len(), 1);
}

#[test]
fn genus_two_matrix_is_the_identity() {
    let m = intersect_curves(&SurfaceCurveSystem::standard(2)).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(m.entries[i][j].count, usize::from(i == j));
        }
    }
}

#[test]
fn tangencies_and_bad_curves_are_rejected() {
    let a = curve("a", (1, 0), 0.5);
    assert!(matches!(intersect_pair(&a, &curve("b", (1, 0), 0.5)), Err(TopologyError::Tangency(..))));
    // the vertical curve passes through a vertex of the horizontal one
    assert!(matches!(intersect_pair(&curve("a", (1, 1), 0.0), &curve("b", (0, 1), 0.0)), Err(TopologyError::Tangency(..))));
    let mut sys = SurfaceCurveSystem::standard(1);
    sys.alpha[0].slope = (2, 2);
    assert!(matches!(sys.validate(), Err(TopologyError::InvalidCurve(..))));
    sys.alpha[0].slope = (0, 0);
    assert!(sys.validate().is_err());
    let mut sys = SurfaceCurveSystem::standard(2);
    sys.alpha.pop();
    assert!(matches!(sys.validate(), Err(TopologyError::Inconsistent(_))));
}

#[test]
fn handle_diagrams() {
    for g in 0..=3usize {
        let d = build_handle_diagram(&SurfaceCurveSystem::standard(g)).unwrap();
        assert_eq!(d.handles.len(), 4 * g);
        assert_eq!(d.records.len(), 2 + 2 * g);
        assert!(d.handles.iter().all(|h| h.framing == 0 && h.label.starts_with("SN*")));
        let e = euler_check(&d).unwrap();
        assert_eq!(e.chi_f, 2 + 2 * g as i64);
        assert_eq!(e.chi_tm, 0);
        assert!(e.pass && e.records_partition_handles);
        if g > 0 {
            assert!(attaching_curve_separation(&d, 64) > 0.0);
        }
    }
    let d = build_handle_diagram(&SurfaceCurveSystem::standard(1)).unwrap();
    let labels: Vec<&str> = d.handles.iter().map(|h| h.label.as_str()).collect();
    assert_eq!(labels, ["SN*alpha1+", "SN*alpha1-", "SN*beta1+", "SN*beta1-"]);
    let idx: Vec<usize> = d.records.iter().map(|r| r.index).collect();
    assert_eq!(idx, [0, 1, 2, 3]);
    let text = diagram_text(&d);
    assert_eq!(text.lines().filter(|l| l.starts_with("handle ")).count(), 4);
    assert_eq!(text, diagram_text(&d));
    let svg = diagram_svg(&SurfaceCurveSystem::standard(2));
    assert!(svg.starts_with("<svg") && svg.matches("<rect").count() == 2);
}

#[test]
fn double_of_the_fiber() {
    let ms = scenario("sphere2-height").unwrap();
    let cm = ComplexificationMap::new(ms.clone());
    let sf = SlopeFunction::for_scenario(&ms).unwrap();
    let al = blend(&cm, &sf, &CutoffPair { delta: 0.1375, epsilon: 0.0171875, c: 32.0 }).unwrap();
    let fm = FibrationMap { ms, kind: LyapunovKind::Assembled(al) };
    let rep = double_check(&fm, 2.0, 500, 1).unwrap();
    assert!(rep.samples > 400);
    assert!(rep.max_g_ratio < 1e-8, "{rep:?}");
    assert!(rep.single_signed);
    assert_eq!(rep.max_roots_per_ray, 1);
    // with C = 32 the level u = 2 reaches below r = δ
    assert!(!rep.homogeneous && rep.min_radius < al.cutoff.delta);
    assert!(double_check(&fm, 0.5, 10, 1).is_err());
    assert!(double_check(&FibrationMap::coarse(fm.ms.clone()), 2.0, 10, 1).is_err());
}

proptest! {
    #[test]
    fn crossings_match_the_determinant(
        p in -4i32..=4, q in -4i32..=4, r in -4i32..=4, s in -4i32..=4,
        o1 in 0.0f64..1.0, o2 in 0.0f64..1.0,
    ) {
        prop_assume!(gcd(p, q) == 1 && gcd(r, s) == 1);
        let det = (p * s - q * r) as i64;
        prop_assume!(det != 0);
        match intersect_pair(&curve("a", (p, q), o1), &curve("b", (r, s), o2)) {
            Ok((c, w)) => {
                prop_assert_eq!(c.count as i64, det.abs());
                prop_assert_eq!(c.algebraic, det);
                prop_assert!(w.is_none());
            }
            Err(TopologyError::Tangency(..)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
