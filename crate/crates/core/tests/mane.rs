use magorb_core::action;
use magorb_core::mane::*;
use magorb_core::*;

fn hyperbolic() -> SurfaceModel {
    SurfaceModel::hyperbolic(1.0, None).unwrap()
}

#[test]
fn negative_loops_certify_subcritical_energies() {
    let budget = SearchBudget::default();
    let t = SurfaceModel::flat_torus(1.0);
    let l = negative_loop_search(&t, 5.0, &budget).unwrap().unwrap();
    assert!(l.class().is_trivial());
    assert!(action::action_s(&t, &l, 5.0).unwrap().total < -1e-6);
    assert!(negative_loop_search(&SurfaceModel::flat_torus(0.0), 0.3, &budget).unwrap().is_none());
    assert!(negative_loop_search(&SurfaceModel::exact_torus(0.0), 0.01, &budget).unwrap().is_none());
    let h = hyperbolic();
    let l = negative_loop_search(&h, 0.45, &budget).unwrap().unwrap();
    assert!(action::action_s(&h, &l, 0.45).unwrap().total < -1e-6);
    assert!(negative_loop_search(&h, 0.6, &budget).unwrap().is_none());
}

#[test]
fn minimax_upper_estimates() {
    let zero = critical_value_upper(&SurfaceModel::flat_torus(0.0), 1.0, 16).unwrap();
    assert!(!zero.infinite);
    assert!(zero.value.abs() < 1e-12);
    let h = critical_value_upper(&hyperbolic(), 2.0, 32).unwrap();
    assert!(!h.infinite);
    assert!(h.value <= 0.5 + 1e-3, "{}", h.value);
    let t = critical_value_upper(&SurfaceModel::flat_torus(1.0), 1.0, 16).unwrap();
    assert!(t.infinite);
    assert_eq!(t.value, f64::INFINITY);
    let e = t.estimates.iter().map(|x| x.value).collect::<Vec<_>>();
    assert!(e[1] > 1.5 * e[0] && e[2] > 1.5 * e[1], "{e:?}");
    assert!(critical_value_upper(&hyperbolic(), 2.0, 8).is_err());
}

#[test]
fn richer_grids_do_not_raise_the_minimax() {
    let m = SurfaceModel::exact_torus(0.2);
    let coarse = minimax_on_domain(&m, 1.0, 16).unwrap().value;
    let fine = minimax_on_domain(&m, 1.0, 32).unwrap().value;
    assert!(fine <= coarse + 1e-4, "{coarse} -> {fine}");
}

#[test]
fn brackets() {
    let h = hyperbolic();
    let b = critical_value_bracket(&h, 2.0, 0.02, &BracketOptions::for_model(&h)).unwrap();
    assert!(b.contains(0.5, 1e-3), "[{}, {}]", b.lower, b.upper);
    assert!(b.width() <= 0.1);
    assert!(!b.inconsistent && !b.upper_infinite);
    let cert = b.certificate.as_ref().unwrap();
    assert!(action::action_value(&h, cert, b.lower).unwrap() < 0.0);

    let t = SurfaceModel::flat_torus(1.0);
    let b = critical_value_bracket(&t, 5.0, 0.02, &BracketOptions::for_model(&t)).unwrap();
    assert!(b.upper_infinite);
    assert_eq!(b.lower, 5.0);

    let z = SurfaceModel::flat_torus(0.0);
    let b = critical_value_bracket(&z, 1.0, 0.02, &BracketOptions::for_model(&z)).unwrap();
    assert!(b.lower == 0.0 && b.upper.abs() <= 0.02);
    assert!(critical_value_bracket(&z, 0.0, 0.02, &BracketOptions::for_model(&z)).is_err());
}

#[test]
fn free_potential_is_distance_times_speed() {
    let m = SurfaceModel::flat_torus(0.0);
    let p = mane_potential(&m, Vec2::zeros(), Vec2::new(1.0, 0.0), 0.5, &PotentialOptions::default()).unwrap();
    assert!(!p.unbounded && !p.unconverged);
    assert!((p.value - 1.0).abs() < 1e-4, "{}", p.value);
}

#[test]
fn potential_vanishes_on_the_diagonal() {
    let h = hyperbolic();
    let q = Vec2::new(0.3, 1.2);
    let p = mane_potential(&h, q, q, 0.8, &PotentialOptions::default()).unwrap();
    assert!(!p.unbounded);
    assert!(p.value.abs() < 1e-4, "{}", p.value);
}

#[test]
fn torus_potential_is_unbounded() {
    let t = SurfaceModel::flat_torus(1.0);
    let p = mane_potential(&t, Vec2::zeros(), Vec2::zeros(), 0.5, &PotentialOptions::default()).unwrap();
    assert!(p.unbounded);
    assert_eq!(p.value, f64::NEG_INFINITY);
    let json = serde_json::to_value(&p).unwrap();
    assert_eq!(json["value"], "-inf");
}

#[test]
fn potential_is_monotone_and_satisfies_the_triangle_inequality() {
    let h = hyperbolic();
    let opts = PotentialOptions::default();
    let pts = [Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), Vec2::new(0.5, 2.0)];
    let mut table = Vec::new();
    for k in [0.8, 1.0] {
        let mut mk = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let p = mane_potential(&h, pts[i], pts[j], k, &opts).unwrap();
                    assert!(!p.unbounded && !p.unconverged);
                    mk[i][j] = p.value;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    if i != j && j != l && i != l {
                        assert!(mk[i][l] <= mk[i][j] + mk[j][l] + 1e-3);
                    }
                }
            }
        }
        table.push(mk);
    }
    for i in 0..3 {
        for j in 0..3 {
            assert!(table[0][i][j] <= table[1][i][j] + 1e-4);
        }
    }
}

#[test]
fn potential_input_checks() {
    let h = hyperbolic();
    let opts = PotentialOptions::default();
    assert!(mane_potential(&h, Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0), 0.8, &opts).is_err());
    assert!(mane_potential(&h, Vec2::new(0.0, 1.0), Vec2::new(0.0, 2.0), 0.0, &opts).is_err());
}
