use std::f64::consts::{PI, TAU};

use mlf_core::linalg::{dot, gram_schmidt, Mat};
use mlf_core::local_model::*;
use mlf_core::ode::OdeConfig;
use mlf_core::sampling::{normal, rng};
use num_complex::Complex;
use proptest::prelude::*;
use rand::Rng;

type Cx = Complex<f64>;

fn c(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

fn tight() -> OdeConfig {
    OdeConfig::default().with_tol(1e-12)
}

fn random_orthogonal(n: usize, seed: u64) -> Mat<f64> {
    let mut r = rng(seed, 1);
    let vs: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| normal(&mut r)).collect()).collect();
    gram_schmidt(&vs, 1e-12)
}

fn apply(a: &Mat<f64>, z: &[Cx]) -> Vec<Cx> {
    a.iter().map(|row| row.iter().zip(z).map(|(&m, &v)| v * m).sum()).collect()
}

#[test]
fn plane_transport_examples() {
    let (a, b) = transport_plane_closed(c(1.0, 0.0), c(1.0, 0.0), PI).unwrap();
    assert!((a - c(0.0, 1.0)).norm() < 1e-15 && (b - c(0.0, 1.0)).norm() < 1e-15);
    assert!((a * b + 1.0).norm() < 1e-15);

    let (a, b) = transport_plane_closed(c(1.0, 0.0), c(0.0, 2.0), PI / 3.0).unwrap();
    let ea = Cx::from_polar(1.0, 4.0 * PI / 15.0);
    let eb = c(0.0, 2.0) * Cx::from_polar(1.0, PI / 15.0);
    assert!((a - ea).norm() < 1e-14 && (b - eb).norm() < 1e-14);
    let f = transport_plane_flow(c(1.0, 0.0), c(0.0, 2.0), PI / 3.0, &tight()).unwrap();
    assert!((f.z1 - ea).norm() < 1e-9 && (f.z2 - eb).norm() < 1e-9);
    assert!(f.integral_drift < 1e-8);

    assert_eq!(transport_plane_closed(c(0.0, 0.0), c(0.0, 0.0), 1.0), Err(LocalModelError::BothZero));
}

#[test]
fn plane_frame_identity() {
    let f = PlaneFrame::<f64>::new(&[1.0, 2.0, -0.5], &[0.3, 0.0, 1.0]).unwrap();
    assert!(dot(&f.e1, &f.e2).abs() < 1e-14);
    assert!((dot(&f.e1, &f.e1) - 1.0).abs() < 1e-14);
    assert!(f.identity_residual(100, 3) < 1e-10);
    let z = f.from_special(c(0.4, -1.0), c(2.0, 0.3));
    let (a, b) = f.special(&z);
    assert!((a - c(0.4, -1.0)).norm() < 1e-14 && (b - c(2.0, 0.3)).norm() < 1e-14);
    assert!(f.distance(&z) < 1e-14);
}

#[test]
fn annulus_twist_conjugates_transport() {
    let a = annulus_twist(AnnulusCoord { r: 1.0, theta: 0.0 }, TAU);
    assert!((a.theta - PI).abs() < 1e-15 && a.r == 1.0);
    for r in [8.0, 10.0, 50.0] {
        assert!(annulus_twist(AnnulusCoord { r, theta: 0.0 }, TAU).theta < 2e-3);
    }
    let mut g = rng(5, 0);
    for _ in 0..100 {
        let r: f64 = g.gen_range(0.2..5.0);
        let theta: f64 = g.gen_range(-PI..PI);
        let alpha: f64 = g.gen_range(-TAU..TAU);
        let w = Cx::from_polar(g.gen_range(0.3..3.0), g.gen_range(-PI..PI));
        let (z1, z2) = psi(w, AnnulusCoord { r, theta });
        assert!((z1 * z2 - w).norm() < 1e-12);
        let (t1, _) = transport_plane_closed(z1, z2, alpha).unwrap();
        let got = psi_inv(w * Cx::from_polar(1.0, alpha), t1);
        let want = annulus_twist(AnnulusCoord { r, theta }, alpha);
        assert!((got.r - want.r).abs() < 1e-12);
        let d = (got.theta - want.theta).rem_euclid(TAU);
        assert!(d.min(TAU - d) < 1e-11);
    }
}

#[test]
fn unit_circle_is_the_vanishing_cycle() {
    let w = c(2.5, 0.0);
    let f = PlaneFrame::new(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    for k in 0..16 {
        let (a, b) = psi(w, AnnulusCoord { r: 1.0, theta: k as f64 * TAU / 16.0 });
        let z = f.from_special(a, b);
        assert!(z.iter().all(|v| v.im.abs() < 1e-12));
        assert!((norm2(&z) - 2.5).abs() < 1e-12);
    }
}

#[test]
fn monodromy_is_the_annulus_twist() {
    let w = c(1.0, 0.0);
    let f = PlaneFrame::new(&[1.0, 0.0, 0.0], &[0.0, 0.6, 0.8]).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..13 {
        let r = 0.3 + 0.2 * i as f64;
        let (a, b) = psi(w, AnnulusCoord { r, theta: 0.4 });
        let z = f.from_special(a, b);
        let t = transport_flow_cn(&z, TAU, &tight()).unwrap();
        assert!(t.fiber_error < 1e-7);
        let (a2, _) = f.special(&t.z);
        let got = psi_inv(w, a2);
        let want = annulus_twist(AnnulusCoord { r, theta: 0.4 }, TAU);
        let d = (got.theta - want.theta).rem_euclid(TAU);
        worst = worst.max(d.min(TAU - d)).max((got.r - r).abs());
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn cotangent_sphere_examples() {
    let z = [c(1.0, 0.0), c(0.0, 0.0)];
    let x = quadric_to_cotangent_sphere(&z, 1.0, 1e-12).unwrap();
    assert_eq!(x.q, vec![1.0, 0.0]);
    assert!(x.p.iter().all(|v| *v == 0.0));

    let z = [c(5f64.sqrt(), 0.0), c(0.0, 2.0)];
    let x = quadric_to_cotangent_sphere(&z, 1.0, 1e-12).unwrap();
    assert!((x.q[0] - 1.0).abs() < 1e-15 && x.q[1].abs() < 1e-15);
    assert!(x.p[0].abs() < 1e-15 && (x.p[1] + 2.0 * 5f64.sqrt()).abs() < 1e-14);
    assert!(dot(&x.p, &x.q).abs() < 1e-14);

    assert!(quadric_to_cotangent_sphere(&[c(0.0, 1.0), c(0.0, 0.0)], 1.0, 1e-9).is_err());
    assert!(quadric_to_cotangent_sphere(&[c(0.0, 0.0), c(0.0, 0.0)], 0.0, 1e-9).is_err());
    assert!(quadric_to_cotangent_sphere(&[c(1.0, 1.0), c(0.0, 0.0)], 1.0, 1e-9).is_err());
}

#[test]
fn cotangent_sphere_map_pulls_back_the_liouville_form() {
    let u: f64 = 1.7;
    let mut g = rng(9, 0);
    for _ in 0..50 {
        // point of F_u: x = cosh(t) √u a, y = sinh(t) √u b with a ⟂ b unit
        let v: Vec<f64> = (0..3).map(|_| normal(&mut g)).collect();
        let w: Vec<f64> = (0..3).map(|_| normal(&mut g)).collect();
        let b = gram_schmidt(&[v, w], 1e-12);
        let t: f64 = g.gen_range(-1.5..1.5);
        let z: Vec<Cx> = (0..3)
            .map(|j| c(t.cosh() * u.sqrt() * b[0][j], t.sinh() * u.sqrt() * b[1][j]))
            .collect();
        let x = quadric_to_cotangent_sphere(&z, u, 1e-10).unwrap();
        assert!((dot(&x.q, &x.q) - 1.0).abs() < 1e-12);
        assert!(dot(&x.p, &x.q).abs() < 1e-10);
        for tv in fiber_tangent_basis(&z) {
            let eps = 1e-6;
            let shift = |s: f64| -> Vec<Cx> { (0..3).map(|j| z[j] + c(s * tv[j], s * tv[3 + j])).collect() };
            let (zp, zm) = (shift(eps), shift(-eps));
            let lift = |z: &[Cx]| {
                let x: Vec<f64> = z.iter().map(|v| v.re).collect();
                let nx = dot(&x, &x).sqrt();
                x.iter().map(|v| v / nx).collect::<Vec<f64>>()
            };
            let dq: Vec<f64> = lift(&zp).iter().zip(lift(&zm)).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let pull = dot(&x.p, &dq);
            let lam0 = -(0..3).map(|j| z[j].im * tv[j]).sum::<f64>();
            assert!((pull - lam0).abs() < 1e-7, "{pull} vs {lam0}");
        }
    }
}

#[test]
fn real_form_examples() {
    let z = [c(0.3, 0.5), c(-1.2, 0.7), c(0.4, -0.2)];
    let d0 = RealFormData { k: 0, u: 0.0 };
    let v = real_form_eval(&d0, &z).unwrap();
    assert!((v.phi_k - (0.09 + 1.44 + 0.16)).abs() < 1e-14);
    assert!(real_form_eval(&RealFormData { k: 4, u: 0.0 }, &z).is_err());
    complex_differential_self_test().unwrap();

    let mut g = rng(11, 0);
    for k in 0..=3 {
        let d = RealFormData { k, u: 0.0 };
        for _ in 0..20 {
            // M_k: x' = 0, y'' = 0
            let m: Vec<Cx> = (0..3)
                .map(|j| if j < k { c(0.0, normal(&mut g)) } else { c(normal(&mut g), 0.0) })
                .collect();
            let v = real_form_eval(&d, &m).unwrap();
            assert!(v.lambda_k.iter().all(|x| x.abs() < 1e-15));
            assert!((v.phi_k - h_value(&m).re).abs() < 1e-12 && h_value(&m).im.abs() < 1e-12);

            // dλ_k = Σ dx∧dy by central differences of λ_k(v) along u
            let p: Vec<Cx> = (0..3).map(|_| c(normal(&mut g), normal(&mut g))).collect();
            let uu: Vec<f64> = (0..6).map(|_| normal(&mut g)).collect();
            let vv: Vec<f64> = (0..6).map(|_| normal(&mut g)).collect();
            let lam_at = |s: f64, dir: &[f64], arg: &[f64]| {
                let q: Vec<Cx> = (0..3).map(|j| p[j] + c(s * dir[j], s * dir[3 + j])).collect();
                dot(&real_form_eval(&d, &q).unwrap().lambda_k, arg)
            };
            let e = 1e-5;
            let du = (lam_at(e, &uu, &vv) - lam_at(-e, &uu, &vv)) / (2.0 * e);
            let dv = (lam_at(e, &vv, &uu) - lam_at(-e, &vv, &uu)) / (2.0 * e);
            let std: f64 = (0..3).map(|j| uu[j] * vv[3 + j] - uu[3 + j] * vv[j]).sum();
            assert!((du - dv - std).abs() < 1e-8);
        }
    }
}

#[test]
fn lambda_vanishes_on_the_vanishing_cycle() {
    let u: f64 = 2.0;
    let mut g = rng(13, 0);
    for k in 0..=3 {
        let d = RealFormData { k, u };
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| normal(&mut g)).collect();
            let na = dot(&a, &a).sqrt();
            let z: Vec<Cx> = a.iter().map(|v| c(u.sqrt() * v / na, 0.0)).collect();
            let lam = real_form_eval(&d, &z).unwrap().lambda_k;
            // tangent vectors of the real sphere: (t, 0) with t ⟂ x
            let mut t: Vec<f64> = (0..3).map(|_| normal(&mut g)).collect();
            let s = dot(&t, &a) / (na * na);
            for (ti, ai) in t.iter_mut().zip(&a) {
                *ti -= s * ai;
            }
            let mut tv = t.clone();
            tv.extend([0.0; 3]);
            assert!(dot(&lam, &tv).abs() < 1e-10);
        }
    }
}

#[test]
fn critical_classifier_examples() {
    let comps = rho_kw_critical_classifier(&RealFormData { k: 1, u: 0.0 }, 2, c(0.0, 1.0)).unwrap();
    let present: Vec<_> = comps.iter().filter(|c| c.present).map(|c| c.kind).collect();
    assert_eq!(present, vec![ComponentKind::LeadingSphere, ComponentKind::TrailingSphere]);

    let comps = rho_kw_critical_classifier(&RealFormData { k: 0, u: 1.0 }, 3, c(1.0, 0.0)).unwrap();
    assert!(!comps[0].present);
    assert_eq!(comps[1].topology, "S^2");
    assert_eq!(comps[2].topology, "S^2");

    let comps = rho_kw_critical_classifier(&RealFormData { k: 1, u: -1.0 }, 3, c(-1.0, 0.0)).unwrap();
    let topo: Vec<_> = comps.iter().map(|c| c.topology.as_str()).collect();
    assert_eq!(topo, vec!["S^0", "S^1", "S^0×R^2"]);
    for comp in comps.iter().filter(|c| c.present) {
        assert!(comp.gradient_residual < 1e-8);
        let z = comp.witness.as_ref().unwrap();
        assert!((h_value(z) - c(-1.0, 0.0)).norm() < 1e-12);
    }

    assert_eq!(
        rho_kw_critical_classifier(&RealFormData { k: 1, u: 0.0 }, 2, c(0.0, 0.0)),
        Err(LocalModelError::NodalFiber)
    );
}

fn classify(k: usize, z: &[Cx]) -> Option<ComponentKind> {
    let tol = 1e-7;
    if z[k..].iter().all(|v| v.norm() < tol) {
        Some(ComponentKind::LeadingSphere)
    } else if z[..k].iter().all(|v| v.norm() < tol) {
        Some(ComponentKind::TrailingSphere)
    } else if z[..k].iter().all(|v| v.re.abs() < tol) && z[k..].iter().all(|v| v.im.abs() < tol) {
        Some(ComponentKind::RealLevel)
    } else {
        None
    }
}

#[test]
fn newton_roots_land_in_classified_components() {
    let mut g = rng(21, 0);
    for (k, n, w) in [(1, 3, c(-1.0, 0.0)), (1, 2, c(0.0, 1.0)), (2, 3, c(0.7, 0.0)), (1, 3, c(0.5, -0.8))] {
        let comps = rho_kw_critical_classifier(&RealFormData { k, u: w.re }, n, w).unwrap();
        let mut roots = 0;
        for _ in 0..200 {
            let seed: Vec<Cx> = (0..n).map(|_| c(normal(&mut g), normal(&mut g))).collect();
            if let Some(z) = refine_critical_point(k, w, &seed, 60) {
                roots += 1;
                assert!(norm2_grad(k, &z) < 1e-8);
                let kind = classify(k, &z).unwrap_or_else(|| panic!("unclassified critical point {z:?}"));
                assert!(comps.iter().any(|c| c.kind == kind && c.present));
            }
        }
        assert!(roots > 20, "only {roots} roots for k={k} n={n}");
    }
}

fn norm2_grad(k: usize, z: &[Cx]) -> f64 {
    dot(&fiberwise_gradient_rho(k, z), &fiberwise_gradient_rho(k, z)).sqrt()
}

#[test]
fn surgery_template() {
    let frame = PlaneFrame::new(&[1.0, 0.0, 0.0], &[0.0, 0.6, 0.8]).unwrap();
    let grid: Vec<f64> = (0..25).map(|i| 0.2 + 0.2 * i as f64).collect();
    let closed = surgery_compare(1, 1.3, &frame, TransportMethod::Closed, &grid).unwrap();
    assert!(closed.max_deviation < 1e-6);
    assert!((closed.crossing_radius - 1.0).abs() < 1e-9);
    assert!((closed.crossing_shift - PI / 2.0).abs() < 1e-8);
    let ode = surgery_compare(1, 1.3, &frame, TransportMethod::Ode(tight()), &grid).unwrap();
    assert!(ode.max_deviation < 1e-4, "{}", ode.max_deviation);

    let bad = PlaneFrame::new(&[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
    assert_eq!(
        surgery_compare(1, 1.0, &bad, TransportMethod::Closed, &grid).unwrap_err(),
        LocalModelError::PlaneMissesLevel
    );
}

#[test]
fn sharp_system_examples() {
    let cfg = SharpConfig { delta: 0.2, c: 1.0 };
    for r in [0.2, 0.3, 0.4] {
        let z = sharp_solution(&cfg, 1, &[0.8], &[-0.5], r, 1.0);
        let rep = sharp_system_check(&cfg, 1, &z);
        assert!(rep.in_shell);
        assert!(rep.max_residual < 1e-14);
        assert!((rep.im_h - 2.0 * 2f64.sqrt() / 3.0 * rep.norm2).abs() < 1e-14);
    }

    let cfg = SharpConfig::default();
    let mut g = rng(31, 0);
    for _ in 0..20 {
        let xp: Vec<f64> = (0..2).map(|_| normal(&mut g)).collect();
        let ypp: Vec<f64> = (0..2).map(|_| normal(&mut g)).collect();
        let r = g.gen_range(cfg.delta..2.0 * cfg.delta);
        let z = sharp_solution(&cfg, 2, &xp, &ypp, r, -1.0);
        let rep = sharp_system_check(&cfg, 2, &z);
        let mu = -((1.0 + cfg.c) / cfg.c).sqrt();
        assert!(rep.max_residual < 1e-13);
        assert!((rep.im_h - 2.0 * mu * rep.norm2 / (1.0 + mu * mu)).abs() < 1e-13);
        assert!(rep.im_h.abs() > 0.0);
    }

    // real z: the tangency equations other than the mixed real one hold, and h is real
    let z = [c(0.12, 0.0), c(-0.1, 0.0), c(0.05, 0.0)];
    let rep = sharp_system_check(&cfg, 1, &z);
    assert!(rep.in_shell);
    assert!(rep.residuals[0] == 0.0 && rep.residuals[1] == 0.0 && rep.residuals[3] == 0.0);
    assert!(rep.im_h == 0.0);

    let z = [c(0.1, 0.07), c(0.09, -0.05)];
    let rep = sharp_system_check(&cfg, 1, &z);
    assert!(rep.residuals[2] > 1e-3);
}

#[test]
fn sharp_profile_and_pseudoconvexity() {
    let cfg = SharpConfig::default();
    let d2 = cfg.delta * cfg.delta;
    for i in 0..=40 {
        let t = 4.0 * d2 * i as f64 / 40.0;
        assert!((cfg.sigma_prime(t) - 1.0).abs() < 1e-14);
        assert!((cfg.sigma(t) - t).abs() < 1e-15);
    }
    for i in 0..=20 {
        let t = 9.0 * d2 * (1.0 + i as f64 / 10.0);
        assert_eq!(cfg.sigma(t), 0.0);
    }
    for k in 0..=3 {
        assert!(sharp_pseudoconvexity(&cfg, k, 3, 400, 7) > 0.0);
    }
    // radial Levi eigenvalue is 1/4 + (c/2)(tσ')' and (tσ')' dips to about −10
    let large = SharpConfig { delta: 0.1, c: 0.1 };
    assert!(sharp_pseudoconvexity(&large, 1, 2, 400, 7) < 0.0);
    // the Levi form of ρ_k alone is a quarter of the identity
    let flat = SharpConfig { delta: 0.1, c: 0.0 };
    assert!((sharp_pseudoconvexity(&flat, 1, 2, 10, 1) - 0.25).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transport_rotates_h(a in -3.0..3.0f64, b in -3.0..3.0f64, cc in -3.0..3.0f64, d in -3.0..3.0f64, alpha in -7.0..7.0f64) {
        prop_assume!(a * a + b * b + cc * cc + d * d > 1e-2);
        let (z1, z2) = (c(a, b), c(cc, d));
        let (t1, t2) = transport_plane_closed(z1, z2, alpha).unwrap();
        prop_assert!((t1 * t2 - Cx::from_polar(1.0, alpha) * z1 * z2).norm() < 1e-12);
        let f = transport_plane_flow(z1, z2, alpha, &tight()).unwrap();
        prop_assert!((f.z1 * f.z2 - Cx::from_polar(1.0, alpha) * z1 * z2).norm() < 1e-7);
        prop_assert!((f.z1 - t1).norm() < 1e-7 && (f.z2 - t2).norm() < 1e-7);
        prop_assert!(f.integral_drift < 1e-8);
    }

    #[test]
    fn transport_is_orthogonally_equivariant(seed in 0u64..1000, alpha in -3.0..3.0f64) {
        let mut g = rng(seed, 2);
        let z: Vec<Cx> = (0..3).map(|_| c(normal(&mut g), normal(&mut g))).collect();
        let a = random_orthogonal(3, seed);
        let lhs = transport_closed_cn(&apply(&a, &z), alpha).unwrap();
        let rhs = apply(&a, &transport_closed_cn(&z, alpha).unwrap());
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).norm() < 1e-7);
        }
        let flow = transport_flow_cn(&apply(&a, &z), alpha, &tight()).unwrap();
        prop_assert!(flow.fiber_error < 1e-7);
        for (x, y) in flow.z.iter().zip(&rhs) {
            prop_assert!((x - y).norm() < 1e-7);
        }
    }

    #[test]
    fn closed_and_flow_transport_agree_in_cn(seed in 0u64..1000, alpha in -6.3..6.3f64) {
        let mut g = rng(seed, 3);
        let z: Vec<Cx> = (0..4).map(|_| c(normal(&mut g), normal(&mut g))).collect();
        prop_assume!(h_value(&z).norm() > 0.05);
        let a = transport_closed_cn(&z, alpha).unwrap();
        let b = transport_flow_cn(&z, alpha, &tight()).unwrap();
        prop_assert!((h_value(&a) - Cx::from_polar(1.0, alpha) * h_value(&z)).norm() < 1e-12 * (1.0 + norm2(&z)));
        for (x, y) in a.iter().zip(&b.z) {
            prop_assert!((x - y).norm() < 1e-6);
        }
    }
}
