use mlf_core::geometry::*;
use mlf_core::ode::{OdeConfig, Terminal};
use mlf_core::sampling::{rng, unit_vector, Halton};
use proptest::prelude::*;
use rand::Rng;

fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-5 * (1.0 + nx);
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn pt(q: &[f64], p: &[f64]) -> PhasePoint<f64> {
    PhasePoint::new(q.to_vec(), p.to_vec())
}

#[test]
fn pairing_examples() {
    let ms = MorseSystem::quadric(vec![-1, 1]);
    assert_eq!(eval_g(&pt(&[0.3, 0.2], &[0.0, 0.0]), &ms).unwrap(), 0.0);
    // oracle: 2 Σ ε p q
    let g = eval_g(&pt(&[0.0, 1.0], &[1.0, 0.0]), &ms).unwrap();
    assert!(g.abs() < 1e-15);
    let m1 = MorseSystem::quadric(vec![1]);
    assert!((eval_g(&pt(&[1.0], &[1.0]), &m1).unwrap() - 2.0).abs() < 1e-15);
    assert!(eval_g(&pt(&[1.0, 2.0], &[1.0]), &ms).is_err());
}

#[test]
fn hamiltonian_lift_matches_finite_differences_and_chart_form() {
    let ms = MorseSystem::quadric(vec![-1, 1]);
    let x = pt(&[3.0, 4.0], &[1.0, 2.0]);
    let v = hamiltonian_lift(&x, &ms).unwrap();
    assert_eq!(v.dq, vec![-6.0, 8.0]);
    assert_eq!(v.dp, vec![2.0, -4.0]);
    let state = x.to_state();
    let d = fd_grad(|y| eval_g(&PhasePoint::from_state(y, ChartId(0)), &ms).unwrap(), &state);
    for j in 0..2 {
        assert!((v.dq[j] - d[2 + j]).abs() < 1e-8);
        assert!((v.dp[j] + d[j]).abs() < 1e-8);
    }
    // general scenario
    let ms = MorseSystem::torus(0.3);
    let x = pt(&[1.1, -2.0], &[0.4, -0.7]);
    let v = hamiltonian_lift(&x, &ms).unwrap();
    let d = fd_grad(|y| eval_g(&PhasePoint::from_state(y, ChartId(0)), &ms).unwrap(), &x.to_state());
    for j in 0..2 {
        assert!((v.dq[j] - d[2 + j]).abs() < 1e-7);
        assert!((v.dp[j] + d[j]).abs() < 1e-7);
    }
}

#[test]
fn hamiltonian_lift_vanishes_on_critical_zero_section() {
    for name in ["sphere2-height", "torus-upright", "quadric-n3-k1"] {
        let ms = scenario(name).unwrap();
        for cp in &ms.critical_points {
            let x = PhasePoint::in_chart(cp.location.clone(), vec![0.0; ms.dim()], cp.chart);
            assert!(hamiltonian_lift(&x, &ms).unwrap().norm() < 1e-14);
        }
    }
}

#[test]
fn fiber_linearization_is_negative_transpose() {
    let ms = scenario("sphere2-height").unwrap();
    for cp in &ms.critical_points {
        let a = &cp.location;
        // −Dν(a)ᵀ by finite differences of ν
        let dnu: Vec<Vec<f64>> = (0..2).map(|i| fd_grad(|q| ms.nu(cp.chart, q)[i], a)).collect();
        for k in 0..2 {
            let lin = fd_grad(|p| hamiltonian_lift(&PhasePoint::in_chart(a.clone(), p.to_vec(), cp.chart), &ms).unwrap().dp[k], &[0.0, 0.0]);
            for j in 0..2 {
                assert!((lin[j] + dnu[j][k]).abs() < 1e-6, "{lin:?} {dnu:?}");
            }
        }
    }
}

#[test]
fn phi_gradients_match_finite_differences() {
    for name in SCENARIO_NAMES {
        let ms = scenario(name).unwrap();
        let h = Halton::new(ms.base_sample_dim(), 3);
        for i in 0..1000 {
            let (chart, q) = ms.sample_base(&h.point(i));
            let (_, d) = ms.dphi(chart, &q);
            let fd = fd_grad(|y| ms.phi(chart, y), &q);
            let scale = 1.0 + d.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (a, b) in d.iter().zip(&fd) {
                assert!((a - b).abs() / scale < 1e-6, "{name} {q:?} {d:?} {fd:?}");
            }
        }
    }
}

#[test]
fn metric_is_positive_definite() {
    for name in ["sphere2-height", "sphere3-height", "torus-tilted"] {
        let ms = scenario(name).unwrap();
        let h = Halton::new(ms.base_sample_dim(), 5);
        for i in 0..500 {
            let (chart, q) = ms.sample_base(&h.point(i));
            let (vals, _) = mlf_core::linalg::sym_eigen(&ms.manifold.metric(chart, &q));
            assert!(vals[0] > 0.0);
        }
    }
}

#[test]
fn upsilon_anchor_values() {
    let ms = MorseSystem::quadric(vec![-1, 1]);
    assert!((upsilon(&pt(&[0.0, 0.0], &[1.0, 0.0]), &ms).unwrap() - 2.0).abs() < 1e-14);
    assert!((upsilon(&pt(&[0.0, 0.0], &[0.0, 1.0]), &ms).unwrap() + 2.0).abs() < 1e-14);
    assert_eq!(upsilon(&pt(&[0.2, 0.0], &[0.0, 0.0]), &ms), Err(GeometryError::ZeroCovector));
    assert!(contact_lift(&pt(&[0.2, 0.0], &[0.0, 0.0]), &ms).is_err());
}

#[test]
fn upsilon_equals_negative_normalized_covariant_hessian() {
    let ms = scenario("sphere2-height").unwrap();
    let h = Halton::new(4, 11);
    for i in 0..300 {
        let u = h.point(i);
        let (chart, q) = ms.sample_base(&u[..2]);
        let p = vec![(u[2] - 0.5) * 3.0, (u[3] - 0.5) * 3.0 + 0.01];
        let x = PhasePoint::in_chart(q.clone(), p.clone(), chart);
        let ups = upsilon(&x, &ms).unwrap();
        let norm2 = ms.manifold.covector_norm2(chart, &q, &p);
        let model = -ms.cov_hess_pp(chart, &q, &p) / norm2;
        assert!((ups - model).abs() < 1e-9 * (1.0 + model.abs()), "{ups} {model}");
    }
}

#[test]
fn contact_lift_zero_on_spheres_and_tangent_to_rho_levels() {
    let ms = MorseSystem::quadric(vec![-1, 1]);
    for p in [[1.0, 0.0], [-0.5, 0.0], [0.0, 2.0]] {
        assert!(contact_lift(&pt(&[0.0, 0.0], &p), &ms).unwrap().norm() < 1e-14);
    }
    let ms = scenario("sphere2-height").unwrap();
    let mut r = rng(7, 1);
    for _ in 0..100 {
        let (chart, q) = ms.sample_base(&[r.gen(), r.gen()]);
        let p = unit_vector(&mut r, 2);
        let x = PhasePoint::in_chart(q, p, chart);
        let v = contact_lift(&x, &ms).unwrap();
        let drho = phase_directional(&RhoFn, &ms, &x, &v);
        assert!(drho.abs() < 1e-12);
        // regular base point: ν̄ keeps the nonzero base component ν
        if ms.nearest_critical(chart, &x.q).1 > 0.05 {
            assert!(v.norm() > 1e-6);
        }
    }
}

#[test]
fn flow_from_equilibrium_stays_fixed() {
    let ms = scenario("sphere2-height").unwrap();
    let x = PhasePoint::in_chart(vec![0.0, 0.0], vec![0.0, 0.0], ChartId(1));
    let r = flow(&ms, FlowField::Hamiltonian, &x, 5.0, &OdeConfig::default()).unwrap();
    assert_eq!(r.terminal, Terminal::Completed);
    assert!(r.last().q.iter().chain(&r.last().p).all(|v: &f64| v.abs() < 1e-15));
}

#[test]
fn first_integrals_are_conserved() {
    let ms = scenario("sphere2-height").unwrap();
    let cfg = OdeConfig::default().with_tol(1e-12);
    // start near the minimum so that |p| stays moderate on the way to the
    // maximum, where the fiber directions expand like e^{2t}
    let x = PhasePoint::in_chart(vec![1e-3, 5e-4], vec![0.3, 0.8], ChartId(1));
    let r = flow(&ms, FlowField::Hamiltonian, &x, 10.0, &cfg).unwrap();
    assert_eq!(r.terminal, Terminal::Completed);
    assert!(r.drift < 1e-8, "g drift {}", r.drift);
    assert!(r.samples.windows(2).all(|w| w[1].0 > w[0].0));
    assert!(r.samples.iter().any(|s| s.1.chart == ChartId(0)));
    let r = flow(&ms, FlowField::Contact, &x, 10.0, &cfg).unwrap();
    assert_eq!(r.terminal, Terminal::Completed);
    assert!(r.drift < 1e-8, "rho drift {}", r.drift);
}

#[test]
fn hamiltonian_flow_preserves_liouville_form() {
    let ms = scenario("torus-tilted").unwrap();
    let cfg = OdeConfig::default().with_tol(1e-13);
    let mut r = rng(3, 2);
    for _ in 0..5 {
        let q: Vec<f64> = (0..2).map(|_| r.gen_range(-3.0..3.0)).collect();
        let p: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x0 = PhasePoint::new(q, p);
        let h = 1e-5;
        let shifted = |s: f64| {
            let y: Vec<f64> = x0.to_state().iter().zip(&w).map(|(a, b)| a + s * b).collect();
            flow(&ms, FlowField::Hamiltonian, &PhasePoint::from_state(&y, ChartId(0)), 1.0, &cfg)
                .unwrap()
                .last()
                .clone()
        };
        let (a, b) = (shifted(h), shifted(-h));
        let c = shifted(0.0);
        let dq: Vec<f64> = ms
            .manifold
            .chart_difference(&a.q, &b.q)
            .iter()
            .map(|v| v / (2.0 * h))
            .collect();
        let lam_t: f64 = c.p.iter().zip(&dq).map(|(p, v)| p * v).sum();
        let lam_0: f64 = x0.p.iter().zip(&w[..2]).map(|(p, v)| p * v).sum();
        assert!((lam_t - lam_0).abs() < 1e-5 * (1.0 + lam_0.abs()), "{lam_t} {lam_0}");
    }
}

#[test]
fn conormal_of_stable_manifold_flows_into_saddle() {
    let ms = scenario("torus-upright").unwrap();
    let a = 1; // (0, π), ε = (−1, +1)
    let cfg = OdeConfig::default();
    for (t, s) in [(0.05, 0.03), (-0.08, 0.01), (0.1, -0.05)] {
        let x = ms.from_morse(a, &[t, 0.0], &[0.0, s]);
        let r = flow(&ms, FlowField::Hamiltonian, &x, 20.0, &cfg).unwrap();
        let y = ms.morse_coords(a, r.last()).unwrap();
        let d: f64 = y.q.iter().chain(&y.p).map(|v| v * v).sum::<f64>().sqrt();
        assert!(d < 1e-4, "{d}");
    }
}

#[test]
fn adapted_gradient_checks() {
    let s2 = scenario("sphere2-height").unwrap();
    let rep = check_adapted_gradient(&s2, 4000, 1);
    assert!(rep.pass && rep.min_margin > 0.0, "{rep:?}");
    let neg = check_adapted_gradient(&s2.negated(), 4000, 1);
    assert!(!neg.pass);
    assert_eq!(neg.violations, neg.regular_samples);
    for name in ["torus-upright", "torus-tilted", "sphere3-height", "quadric-n3-k1"] {
        let rep = check_adapted_gradient(&scenario(name).unwrap(), 4000, 1);
        assert!(rep.pass, "{name} {rep:?}");
    }
}

proptest! {
    #[test]
    fn g_is_odd_in_p(q in prop::array::uniform2(-3.0f64..3.0), p in prop::array::uniform2(-2.0f64..2.0)) {
        let ms = MorseSystem::torus(0.3);
        let a = eval_g(&pt(&q, &p), &ms).unwrap();
        let b = eval_g(&pt(&q, &[-p[0], -p[1]]), &ms).unwrap();
        prop_assert_eq!(a, -b);
    }

    #[test]
    fn upsilon_is_zero_homogeneous(q in prop::array::uniform2(-3.0f64..3.0), p in prop::array::uniform2(0.1f64..2.0), t in 0.1f64..10.0) {
        let ms = MorseSystem::torus(0.0);
        let a = upsilon(&pt(&q, &p), &ms).unwrap();
        let b = upsilon(&pt(&q, &[t * p[0], t * p[1]]), &ms).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn upsilon_in_chart_range(q in prop::array::uniform3(-0.15f64..0.15), p in prop::array::uniform3(-1.0f64..1.0), k in 0usize..=3) {
        prop_assume!(p.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let ms = MorseSystem::quadric((0..3).map(|j| if j < k { -1 } else { 1 }).collect());
        let u = upsilon(&pt(&q, &p), &ms).unwrap();
        prop_assert!((-2.0 - 1e-12..=2.0 + 1e-12).contains(&u));
    }
}
