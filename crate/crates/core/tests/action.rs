use approx::assert_abs_diff_eq;
use magorb_core::action::*;
use magorb_core::loopspace::*;
use magorb_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

fn larmor(n: usize) -> TimedLoop {
    TimedLoop::new(make_circle_loop(Vec2::zeros(), 1.0, Orientation::Ccw, n).unwrap(), TAU).unwrap()
}

fn constant(t: f64) -> TimedLoop {
    TimedLoop::new(DiscreteLoop::new(vec![Vec2::new(0.4, 1.1); 16], FreeHomotopyClass::TRIVIAL).unwrap(), t).unwrap()
}

/// A wobbly loop around a random centre; nontrivial classes get a straight
/// lift plus the same wobble.
fn random_loop(model: &SurfaceModel, class: FreeHomotopyClass, rng: &mut ChaCha8Rng) -> TimedLoop {
    let n = rng.random_range(8..48);
    let base = if class.is_trivial() {
        let c = match model.kind() {
            ModelKind::HyperbolicHalfplane => Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(1.0..2.0)),
            _ => Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        };
        make_circle_loop(c, rng.random_range(0.1..0.6), Orientation::Ccw, n).unwrap()
    } else {
        make_class_loop(model, class, n).unwrap()
    };
    let pts = base
        .points()
        .iter()
        .map(|p| p + Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    TimedLoop::new(DiscreteLoop::new(pts, class).unwrap(), rng.random_range(0.5..4.0)).unwrap()
}

#[test]
fn larmor_circle_action() {
    let m = SurfaceModel::flat_torus(1.0);
    let r = action_s(&m, &larmor(512), 0.5).unwrap();
    assert!((r.flux - PI).abs() < 1e-3);
    assert!((r.kinetic - PI).abs() < 1e-3);
    assert_abs_diff_eq!(r.period_term, PI, epsilon = 1e-15);
    assert!((r.total - PI).abs() < 2e-3);
    assert_eq!(r.total, r.kinetic + r.period_term - r.flux);
    let cw = TimedLoop::new(make_circle_loop(Vec2::zeros(), 1.0, Orientation::Cw, 512).unwrap(), TAU).unwrap();
    assert!((flux(&m, &cw.curve).unwrap() + PI).abs() < 1e-3);
}

#[test]
fn flux_ignores_the_lift() {
    let m = SurfaceModel::flat_torus(1.0);
    let c = make_circle_loop(Vec2::new(0.1, 0.2), 0.4, Orientation::Ccw, 64).unwrap();
    let shifted = c.mapped(&m.deck_map(FreeHomotopyClass::new(1, 1)).unwrap());
    assert!((flux(&m, &c).unwrap() - flux(&m, &shifted).unwrap()).abs() < 1e-12);
    let h = SurfaceModel::hyperbolic(1.0, Some(3.0)).unwrap();
    let c = make_geodesic_circle(&h, Vec2::new(0.0, 1.0), 0.5, Orientation::Ccw, 64).unwrap();
    let f0 = flux(&h, &c).unwrap();
    for class in [FreeHomotopyClass::new(1, 0), FreeHomotopyClass::new(-2, 0)] {
        let lifted = c.mapped(&h.deck_map(class).unwrap());
        assert!((flux(&h, &lifted).unwrap() - f0).abs() < 1e-10);
    }
}

#[test]
fn small_loops_have_quadratically_small_flux() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let models = [SurfaceModel::flat_torus(1.0), SurfaceModel::exact_torus(0.1), SurfaceModel::hyperbolic(1.0, None).unwrap()];
    for m in &models {
        let mut beta: f64 = 0.0;
        for _ in 0..50 {
            let c = m.origin() + Vec2::new(rng.random_range(-0.5..0.5), 0.0);
            let pts: Vec<Vec2> = (0..32)
                .map(|i| {
                    let a = TAU * i as f64 / 32.0;
                    c + Vec2::new(a.cos(), a.sin()) * rng.random_range(0.02..0.1)
                })
                .collect();
            let l = DiscreteLoop::new(pts, FreeHomotopyClass::TRIVIAL).unwrap();
            beta = beta.max(flux(m, &l).unwrap().abs() / loop_length(m, &l).unwrap().powi(2));
        }
        eprintln!("{:?}: |flux| / length^2 <= {beta:.4}", m.kind());
        assert!(beta.is_finite() && beta < 1.0);
    }
}

#[test]
fn elementary_values() {
    let m = SurfaceModel::flat_torus(1.0);
    assert_eq!(action_s(&m, &constant(2.0), 0.5).unwrap().total, 1.0);
    let flat = SurfaceModel::flat_torus(0.0);
    let line = TimedLoop::new(make_class_loop(&flat, FreeHomotopyClass::new(1, 0), 16).unwrap(), 1.0).unwrap();
    assert_abs_diff_eq!(action_s(&flat, &line, 0.5).unwrap().total, 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(ds_dt(&flat, &line, 0.5).unwrap(), 0.0, epsilon = 1e-14);
    assert_eq!(ds_dt(&m, &constant(3.0), 0.25).unwrap(), 0.25);
}

#[test]
fn larmor_period_derivative_vanishes_at_the_critical_period() {
    // chords are 2 sin(π/N), so the discrete kinetic term is 2N²sin²(π/N)/T
    // and the residual at T = 2π is k·π²/(3N²) to leading order
    let m = SurfaceModel::flat_torus(1.0);
    let n = 1024.0f64;
    let expected = 0.5 - 2.0 * (n * (PI / n).sin()).powi(2) / (TAU * TAU);
    let got = ds_dt(&m, &larmor(1024), 0.5).unwrap();
    assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    assert_abs_diff_eq!(got, 0.5 * PI * PI / (3.0 * n * n), epsilon = 1e-11);
    assert!(got.abs() < 2e-6);
}

#[test]
fn nontrivial_flux_needs_an_invariant_primitive() {
    let m = SurfaceModel::flat_torus(1.0);
    let line = make_class_loop(&m, FreeHomotopyClass::new(1, 0), 16).unwrap();
    assert!(matches!(flux(&m, &line), Err(Error::FluxUndefined(_))));
    let t = TimedLoop::new(line, 1.0).unwrap();
    assert!(action_s(&m, &t, 0.5).is_err());
    assert!(grad_s(&m, &t, 0.5, GradientMetric::H1).is_err());
    let e = SurfaceModel::exact_torus(0.1);
    let line = make_class_loop(&e, FreeHomotopyClass::new(1, 0), 16).unwrap();
    assert_abs_diff_eq!(flux(&e, &line).unwrap(), 0.0, epsilon = 1e-12);
}

#[test]
fn fixed_time_action() {
    let m = SurfaceModel::flat_torus(0.0);
    let path = vec![Vec2::new(0.1, 0.1); 5];
    let times = [0.0, 0.5, 1.0, 2.0, 3.0];
    assert_abs_diff_eq!(action_a(&m, &path, &times, 0.7).unwrap(), 2.1, epsilon = 1e-14);
    let path: Vec<Vec2> = (0..11).map(|i| Vec2::new(0.3 * i as f64, 0.4 * i as f64)).collect();
    let times: Vec<f64> = (0..11).map(|i| 0.2 * i as f64).collect();
    assert_abs_diff_eq!(action_a(&m, &path, &times, 0.5).unwrap(), 25.0 / 4.0 + 1.0, epsilon = 1e-12);
    assert!(action_a(&m, &path[..1], &times[..1], 0.5).is_err());
    assert!(action_a(&m, &path[..3], &[0.0, 1.0, 1.0], 0.5).is_err());

    // closing up a contractible loop reproduces S_k
    let b1 = SurfaceModel::flat_torus(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let x = random_loop(&b1, FreeHomotopyClass::TRIVIAL, &mut rng);
        let n = x.len();
        let mut path = x.points().to_vec();
        path.push(path[0]);
        let times: Vec<f64> = (0..=n).map(|i| x.period() * i as f64 / n as f64).collect();
        let a = action_a(&b1, &path, &times, 0.3).unwrap();
        let s = action_value(&b1, &x, 0.3).unwrap();
        assert!((a - s).abs() < 1e-10, "{a} vs {s}");
    }
}

fn fd_check(model: &SurfaceModel, x: &TimedLoop, k: f64, rng: &mut ChaCha8Rng) {
    let g = grad_s(model, x, k, GradientMetric::L2).unwrap();
    let n = x.len();
    for _ in 0..20 {
        let u = LoopTangent {
            xi: (0..n).map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
            psi: rng.random_range(-1.0..1.0),
        };
        let h = 1e-5;
        let sp = action_value(model, &x.step(&u, h).unwrap(), k).unwrap();
        let sm = action_value(model, &x.step(&u, -h).unwrap(), k).unwrap();
        let fd = (sp - sm) / (2.0 * h);
        let exact = g.dot(&u);
        let err = (fd - exact).abs() / exact.abs().max(1.0);
        assert!(err < 1e-6, "{:?}: fd {fd} vs {exact}", model.kind());
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cases = [
        (SurfaceModel::flat_torus(1.0), FreeHomotopyClass::TRIVIAL),
        (SurfaceModel::exact_torus(0.1), FreeHomotopyClass::new(1, 0)),
        (SurfaceModel::hyperbolic(1.0, None).unwrap(), FreeHomotopyClass::TRIVIAL),
        (SurfaceModel::hyperbolic(0.5, Some(2.0)).unwrap(), FreeHomotopyClass::new(1, 0)),
    ];
    for (m, class) in &cases {
        for _ in 0..50 {
            let x = random_loop(m, *class, &mut rng);
            fd_check(m, &x, 0.4, &mut rng);
        }
    }
}

#[test]
fn sobolev_and_coordinate_gradients_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let h = SurfaceModel::hyperbolic(1.0, None).unwrap();
    for m in [SurfaceModel::flat_torus(1.0), h] {
        for _ in 0..10 {
            let x = random_loop(&m, FreeHomotopyClass::TRIVIAL, &mut rng);
            let gl = grad_s(&m, &x, 0.5, GradientMetric::L2).unwrap();
            let gh = grad_s(&m, &x, 0.5, GradientMetric::H1).unwrap();
            let u = LoopTangent {
                xi: (0..x.len()).map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
                psi: rng.random_range(-1.0..1.0),
            };
            let lhs = h1_inner(&m, &x.curve, &gh, &u).unwrap();
            assert!((lhs - gl.dot(&u)).abs() < 1e-8);
        }
    }
}

#[test]
fn constant_loop_gradient() {
    let m = SurfaceModel::flat_torus(1.0);
    for metric in [GradientMetric::L2, GradientMetric::H1] {
        let g = grad_s(&m, &constant(1.5), 0.3, metric).unwrap();
        assert!(g.xi.iter().all(|v| v.norm() == 0.0));
        assert_eq!(g.psi, 0.3);
    }
}

#[test]
fn larmor_circle_is_nearly_critical() {
    let m = SurfaceModel::flat_torus(1.0);
    let x = larmor(1024);
    let g = grad_s(&m, &x, 0.5, GradientMetric::L2).unwrap();
    assert!(g.l2_norm() < 1e-3, "{}", g.l2_norm());
    assert_eq!(g.psi, ds_dt(&m, &x, 0.5).unwrap());
}

#[test]
fn action_is_increasing_in_k_with_slope_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let m = SurfaceModel::hyperbolic(1.0, None).unwrap();
    for _ in 0..20 {
        let x = random_loop(&m, FreeHomotopyClass::TRIVIAL, &mut rng);
        let (k0, k1) = (0.25, 0.75);
        let a = action_s(&m, &x, k0).unwrap();
        let b = action_s(&m, &x, k1).unwrap();
        assert_eq!((a.kinetic, a.flux), (b.kinetic, b.flux));
        assert!((b.total - a.total - (k1 - k0) * x.period()).abs() <= 1e-14 * a.total.abs().max(1.0));
        assert!(b.total > a.total);
    }
}
