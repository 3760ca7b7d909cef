use mlf_core::complexification::*;
use mlf_core::geometry::*;
use mlf_core::sampling::{rng, unit_vector};
use proptest::prelude::*;
use rand::Rng;

fn pt(q: &[f64], p: &[f64]) -> PhasePoint<f64> {
    PhasePoint::new(q.to_vec(), p.to_vec())
}

fn cmap(name: &str) -> ComplexificationMap {
    ComplexificationMap::new(scenario(name).unwrap())
}

fn fd_along<F: Fn(&PhasePoint<f64>) -> f64>(f: F, x: &PhasePoint<f64>, v: &PhaseVector<f64>) -> f64 {
    let h = 1e-5;
    let s = x.to_state();
    let d = v.to_state();
    let a: Vec<f64> = s.iter().zip(&d).map(|(s, d)| s + h * d).collect();
    let b: Vec<f64> = s.iter().zip(&d).map(|(s, d)| s - h * d).collect();
    (f(&PhasePoint::from_state(&a, x.chart)) - f(&PhasePoint::from_state(&b, x.chart))) / (2.0 * h)
}

#[test]
fn h0_examples() {
    let cm = cmap("quadric-n2-k1");
    let h = eval_h0(&pt(&[0.0, 1.0], &[1.0, 0.0]), &cm);
    assert!((h.re - 2.0).abs() < 1e-14 && h.im.abs() < 1e-14);
    let cm1 = ComplexificationMap::new(MorseSystem::quadric(vec![1]));
    let h = eval_h0(&pt(&[0.0], &[1.0]), &cm1);
    assert!((h.re + 1.0).abs() < 1e-14 && h.im.abs() < 1e-14);

    // zero section
    for name in ["sphere2-height", "torus-tilted", "quadric-n3"] {
        let cm = cmap(name);
        let n = cm.ms.dim();
        let q: Vec<f64> = (0..n).map(|j| 0.3 - 0.2 * j as f64).collect();
        let h = eval_h0(&pt(&q, &vec![0.0; n]), &cm);
        assert_eq!(h.re, cm.ms.phi(ChartId(0), &q));
        assert_eq!(h.im, 0.0);
    }

    // Σ ε (q + ip)² in a chart
    let mut r = rng(5, 0);
    for _ in 0..100 {
        let q: Vec<f64> = (0..2).map(|_| r.gen_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..2).map(|_| r.gen_range(-2.0..2.0)).collect();
        let h = eval_h0(&pt(&q, &p), &cm);
        let z: num_complex::Complex<f64> = [-1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(j, e)| num_complex::Complex::new(q[j], p[j]).powi(2) * e)
            .sum();
        assert!((h - z).norm() < 1e-12);
    }
}

#[test]
fn h0_critical_points_are_the_critical_points_of_phi() {
    let rep = verify_h0_critical(&cmap("sphere2-height"), 0.25, 200, 3);
    assert!(rep.pass, "{rep:?}");
    assert_eq!(rep.found, vec![0, 1]);
    let rep = verify_h0_critical(&cmap("quadric-n2-k1"), 1.0, 200, 3);
    assert!(rep.pass, "{rep:?}");
    assert_eq!(rep.found, vec![0]);
    assert!(rep.hessian_error < 1e-12);
    let rep = verify_h0_critical(&cmap("torus-tilted"), 0.1, 200, 3);
    assert!(rep.pass, "{rep:?}");
    assert_eq!(rep.found.len(), 4);
}

#[test]
fn chart_identity_for_the_hamiltonian_lift() {
    for name in ["quadric-n2-k1", "quadric-n3", "sphere2-height", "torus-upright"] {
        let e = lyapunov_chart_identity(&cmap(name), 200, 1);
        assert!(e < 1e-10, "{name}: {e}");
    }
}

#[test]
fn contact_derivative_examples() {
    let cm = cmap("quadric-n2-k1");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = pt(&[0.0, 0.0], &[s, s]);
    let v = contact_lift(&x, &cm.ms).unwrap();
    let f0 = cm.f0();
    let exact = phase_directional(&f0, &cm.ms, &x, &v);
    let fd = fd_along(|y| eval_h0(y, &cm).re, &x, &v);
    assert!((exact - 4.0).abs() < 1e-12);
    assert!((fd - 4.0).abs() < 1e-7);

    let u = nu_bar_dot_upsilon(&x, &cm.ms).unwrap();
    let fd = fd_along(|y| upsilon(y, &cm.ms).unwrap(), &x, &v);
    assert!((u - 8.0).abs() < 1e-12);
    assert!((fd - 8.0).abs() < 1e-6);

    // outside every chart
    let ms = scenario("sphere2-height").unwrap();
    assert!(nu_bar_dot_upsilon(&pt(&[1.0, 0.0], &[0.3, 0.1]), &ms).is_err());
}

#[test]
fn contact_derivatives_vanish_on_the_critical_spheres() {
    for name in ["quadric-n2-k1", "quadric-n3-k1", "sphere2-height", "torus-upright"] {
        let cm = cmap(name);
        let ms = &cm.ms;
        for a in 0..ms.critical_points.len() {
            for sign in [1i8, -1] {
                for x in sample_c_sphere(ms, a, sign, 0.1, 20, 9) {
                    let v = contact_lift(&x, ms).unwrap();
                    assert!(phase_directional(&cm.f0(), ms, &x, &v).abs() < 1e-12);
                    assert!(nu_bar_dot_upsilon(&x, ms).unwrap().abs() < 1e-12);
                    assert!(v.norm() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn nu_bar_dot_upsilon_is_non_negative() {
    for name in ["quadric-n2-k1", "quadric-n3-k2", "sphere2-height"] {
        let ms = scenario(name).unwrap();
        let mut r = rng(17, 2);
        let mut worst = f64::INFINITY;
        for i in 0..10_000 {
            let a = i % ms.critical_points.len();
            let n = ms.dim();
            let rad = 0.9 * ms.critical_points[a].chart_radius.min(ms.sample_radius);
            let qm: Vec<f64> = unit_vector(&mut r, n).iter().map(|v| v * rad * r.gen::<f64>()).collect();
            let pm: Vec<f64> = unit_vector(&mut r, n).iter().map(|v| v * r.gen_range(0.01..3.0)).collect();
            let x = ms.from_morse(a, &qm, &pm);
            worst = worst.min(nu_bar_dot_upsilon(&x, &ms).unwrap());
        }
        assert!(worst >= -1e-10, "{name}: {worst}");
    }
}

#[test]
fn critical_values_on_the_sphere_bundle() {
    let ms = scenario("sphere2-height").unwrap();
    let cm = ComplexificationMap::new(ms.clone());
    for r in [0.05, 0.1, 0.3] {
        for sv in critical_values_f0r(&ms, r) {
            let pts = sample_c_sphere(&ms, sv.point, sv.sign, r, 10, 4);
            assert_eq!(pts.is_empty(), sv.sphere_dim < 0);
            for x in pts {
                assert!((eval_h0(&x, &cm).re - sv.value).abs() < 1e-12);
            }
        }
    }
    let vals = critical_values_f0r(&ms, 1e-9);
    for sv in vals {
        assert!((sv.value - ms.critical_points[sv.point].value).abs() < 1e-15);
    }
    let q = cmap("quadric-n3-k1");
    for sv in critical_values_f0r(&q.ms, 0.5) {
        for x in sample_c_sphere(&q.ms, sv.point, sv.sign, 0.5, 10, 4) {
            assert!((eval_h0(&x, &q).re - sv.value).abs() < 1e-12);
        }
        assert_eq!(sv.sphere_dim, if sv.sign > 0 { 0 } else { 1 });
    }
}

#[test]
fn delta_scan_accepts() {
    for name in ["quadric-n2-k1", "sphere2-height", "torus-tilted"] {
        let rep = scan_delta(&cmap(name), 10_000, 2).unwrap();
        assert!(rep.delta > 0.0, "{name}");
        assert!(rep.min_margin_interior > 0.0 && rep.min_margin_sphere > 0.0, "{name}: {rep:?}");
    }
}

#[test]
fn c1_gap_shrinks_near_the_zero_section() {
    let cm = cmap("sphere2-height");
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for k in 0..5 {
        let r = 0.2 / 2f64.powi(k);
        let (g0, g1) = c1_gap(&cm, r, 2000, 6);
        let slopes = (g0 / r, g1 / r);
        assert!(slopes.0 < prev.0 && slopes.1 <= prev.1 * (1.0 + 1e-9), "r = {r}: {slopes:?} after {prev:?}");
        prev = slopes;
    }
}

#[test]
fn lagrange_detectors_agree() {
    for name in ["quadric-n2-k1", "sphere2-height", "torus-tilted"] {
        let cm = cmap(name);
        let ms = &cm.ms;
        for a in 0..ms.critical_points.len() {
            for sign in [1i8, -1] {
                for x in sample_c_sphere(ms, a, sign, 0.1, 5, 1) {
                    assert!(vr_projected_gradient(&cm, &x) < 1e-8);
                    assert!(contact_lift_norm(ms, &x).unwrap() < 1e-8);
                }
            }
        }
        let halton = mlf_core::sampling::Halton::new(phase_sample_dim(ms), 8);
        for i in 0..500 {
            let x = sample_phase(ms, &halton.point(i), 0.1, 0.1);
            let a = vr_projected_gradient(&cm, &x) < 1e-8;
            let b = contact_lift_norm(ms, &x).unwrap() < 1e-8;
            assert_eq!(a, b, "{name}: {x:?}");
        }
    }
}

proptest! {
    #[test]
    fn antipodal_symmetry(q in prop::collection::vec(-3.0f64..3.0, 2), p in prop::collection::vec(-3.0f64..3.0, 2)) {
        for name in ["torus-tilted", "sphere2-height", "quadric-n2-k1"] {
            let cm = cmap(name);
            let h = eval_h0(&pt(&q, &p), &cm);
            let m: Vec<f64> = p.iter().map(|v| -v).collect();
            let hm = eval_h0(&pt(&q, &m), &cm);
            prop_assert_eq!(h.re, hm.re);
            prop_assert_eq!(h.im, -hm.im);
        }
    }
}
