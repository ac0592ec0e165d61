//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use magorb_core::action::{self, GradientMetric};
use magorb_core::dynamics::{self, IntegrateOptions, PhaseState};
use magorb_core::loopspace::{self, DiscreteLoop, LoopTangent, Orientation, TimedLoop};
use magorb_core::mane::{self, BracketOptions, PotentialOptions, SearchBudget};
use magorb_core::solvers::{self, PSDiagnostics, SolverConfig};
use magorb_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEVEL_REL_TOL: f64 = 0.02;
const CLOSURE_GAP_TOL: f64 = 1e-3;
const MEAN_ENERGY_TOL: f64 = 1e-3;
const LARMOR_TIME_LIMIT: Duration = Duration::from_secs(60);
const SWEEP_TIME_LIMIT: Duration = Duration::from_secs(600);
const MINIMIZER_TOL: f64 = 1e-3;
const MINIMIZER_RESIDUAL_TOL: f64 = 1e-4;
const MINIMIZER_TIME_LIMIT: Duration = Duration::from_secs(30);
const BRACKET_WIDTH: f64 = 0.1;
const BRACKET_TIME_LIMIT: Duration = Duration::from_secs(300);
const GRADIENT_REL_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const DRIFT_TOL: f64 = 1e-7;
const HALVING_RATIO: (f64, f64) = (8.0, 32.0);
const LARMOR_RETURN_TOL: f64 = 1e-8;
const POTENTIAL_TOL: f64 = 1e-3;
const FLUX_LIFT_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Cauchy–Schwarz over every recorded iterate, with relative rounding slack.
fn cauchy_schwarz_ok(diag: &PSDiagnostics) -> bool {
    diag.records
        .iter()
        .all(|r| r.l * r.l <= 2.0 * r.period * r.e * (1.0 + 1e-12) + 1e-12)
}

#[derive(Default)]
struct Runs {
    diagnostics: Vec<PSDiagnostics>,
}

fn larmor(runs: &mut Runs) -> Outcome {
    let m = SurfaceModel::flat_torus(1.0);
    let k = 0.5;
    let cfg = SolverConfig { n_points: 512, path_segments: 16, ..SolverConfig::default() };
    let t0 = Instant::now();
    let r = match solvers::mountain_pass(&m, k, &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("solver error: {e}")),
    };
    let elapsed = t0.elapsed();
    let Some(v) = r.verification else {
        return outcome(false, "no closure check".into());
    };
    let (mu_err, t_err) = (rel(r.mu_estimate, PI), rel(r.period(), TAU));
    let pass = r.converged
        && mu_err < LEVEL_REL_TOL
        && t_err < LEVEL_REL_TOL
        && v.position_gap < CLOSURE_GAP_TOL
        && v.energy_error < MEAN_ENERGY_TOL
        && elapsed < LARMOR_TIME_LIMIT;
    runs.diagnostics.push(r.diagnostics.clone());
    outcome(
        pass,
        format!(
            "S={:.6} (rel {mu_err:.1e}), T={:.6} (rel {t_err:.1e}), gap {:.1e} < {CLOSURE_GAP_TOL:.0e}, |<E>-k| {:.1e} < {MEAN_ENERGY_TOL:.0e}, {:.2?}",
            r.mu_estimate,
            r.period(),
            v.position_gap,
            v.energy_error,
            elapsed
        ),
    )
}

fn sweep_config() -> SolverConfig {
    SolverConfig { n_points: 512, path_segments: 16, seed: 7, ..SolverConfig::default() }
}

fn sweep_energies() -> Vec<f64> {
    (1..=10).map(|i| 0.1 * i as f64).collect()
}

fn sweep(runs: &mut Runs) -> Outcome {
    let m = SurfaceModel::flat_torus(1.0);
    let t0 = Instant::now();
    let s = match solvers::energy_sweep(&m, &sweep_energies(), &sweep_config()) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sweep error: {e}")),
    };
    let elapsed = t0.elapsed();
    let mus: Vec<Option<f64>> = s.entries.iter().map(|e| e.mu()).collect();
    let worst = s
        .entries
        .iter()
        .zip(&mus)
        .map(|(e, mu)| mu.map_or(f64::INFINITY, |mu| rel(mu, TAU * e.k)))
        .fold(0.0, f64::max);
    let monotone = mus.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b >= a));
    for e in &s.entries {
        if let Ok(r) = &e.result {
            runs.diagnostics.push(r.diagnostics.clone());
        }
    }
    let pass = worst < LEVEL_REL_TOL && monotone && s.converged_fraction() == 1.0 && elapsed < SWEEP_TIME_LIMIT;
    outcome(
        pass,
        format!(
            "10 energies, worst rel error {worst:.1e}, non-decreasing: {monotone}, converged {:.0}%, {:.2?}",
            100.0 * s.converged_fraction(),
            elapsed
        ),
    )
}

fn minimizer(runs: &mut Runs) -> Outcome {
    let m = SurfaceModel::flat_torus(0.0);
    let cfg = SolverConfig::default();
    let class = FreeHomotopyClass::new(1, 0);
    let line = loopspace::make_class_loop(&m, class, 64).expect("valid class");
    let wobbly: Vec<Vec2> = line
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| p + Vec2::new(0.0, 0.1 * (TAU * 3.0 * i as f64 / 64.0).sin()))
        .collect();
    let far = TimedLoop::new(DiscreteLoop::new(wobbly, class).expect("valid loop"), 0.3).expect("positive period");
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, init) in [("line seed", None), ("wobbly seed at T=0.3", Some(far))] {
        let r = match solvers::minimize(&m, 0.5, class, init, &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{label}: solver error: {e}")),
        };
        let residual = r.closure.map_or(f64::INFINITY, |c| c.max_component());
        let t_min = r.diagnostics.min_period();
        pass &= r.converged
            && (r.action.total - 1.0).abs() < MINIMIZER_TOL
            && (r.minimizer.period() - 1.0).abs() < MINIMIZER_TOL
            && residual < MINIMIZER_RESIDUAL_TOL
            && t_min > cfg.t_floor;
        parts.push(format!(
            "{label}: S={:.6}, T={:.6}, residual {residual:.1e}, min T over iterates {t_min:.4}",
            r.action.total,
            r.minimizer.period()
        ));
        runs.diagnostics.push(r.diagnostics.clone());
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < MINIMIZER_TIME_LIMIT;
    outcome(pass, format!("{} (floor {}), {:.2?}", parts.join("; "), cfg.t_floor, elapsed))
}

fn brackets() -> Outcome {
    let t0 = Instant::now();
    let h = SurfaceModel::hyperbolic(1.0, None).expect("valid model");
    let hb = match mane::critical_value_bracket(&h, 2.0, 0.02, &BracketOptions::for_model(&h)) {
        Ok(b) => b,
        Err(e) => return outcome(false, format!("hyperbolic bracket error: {e}")),
    };
    let t = SurfaceModel::flat_torus(1.0);
    let tb = match mane::critical_value_bracket(&t, 5.0, 0.02, &BracketOptions::for_model(&t)) {
        Ok(b) => b,
        Err(e) => return outcome(false, format!("torus bracket error: {e}")),
    };
    let tested = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
    let budget = SearchBudget::default();
    let all_negative = tested.iter().all(|k| {
        mane::negative_loop_search(&t, *k, &budget)
            .ok()
            .flatten()
            .is_some_and(|l| action::action_value(&t, &l, *k).is_ok_and(|s| s < 0.0))
    });
    let elapsed = t0.elapsed();
    let pass = hb.contains(0.5, 0.0)
        && hb.width() <= BRACKET_WIDTH
        && tb.upper_infinite
        && tb.lower == 5.0
        && all_negative
        && elapsed < BRACKET_TIME_LIMIT;
    outcome(
        pass,
        format!(
            "half-plane [{:.4}, {:.4}] width {:.4}; torus upper {}, lower {}, negative loops at k={tested:?}: {all_negative}, {:.2?}",
            hb.lower,
            hb.upper,
            hb.width(),
            if tb.upper_infinite { "inf".to_string() } else { tb.upper.to_string() },
            tb.lower,
            elapsed
        ),
    )
}

fn random_loop(model: &SurfaceModel, class: FreeHomotopyClass, rng: &mut ChaCha8Rng) -> TimedLoop {
    let n = rng.random_range(8..64);
    let base = if class.is_trivial() {
        let c = model.origin() + Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2));
        loopspace::make_circle_loop(c, rng.random_range(0.1..0.5), Orientation::Ccw, n).expect("valid circle")
    } else {
        loopspace::make_class_loop(model, class, n).expect("valid class")
    };
    let pts = base
        .points()
        .iter()
        .map(|p| p + Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    TimedLoop::new(DiscreteLoop::new(pts, class).expect("valid loop"), rng.random_range(0.5..4.0)).expect("positive period")
}

fn random_tangent(n: usize, rng: &mut ChaCha8Rng) -> LoopTangent {
    LoopTangent {
        xi: (0..n).map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        psi: rng.random_range(-1.0..1.0),
    }
}

fn gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = [
        ("flat_torus", SurfaceModel::flat_torus(1.0), FreeHomotopyClass::TRIVIAL),
        ("exact_torus", SurfaceModel::exact_torus(0.1), FreeHomotopyClass::new(1, 0)),
        ("hyperbolic", SurfaceModel::hyperbolic(1.0, None).expect("valid model"), FreeHomotopyClass::TRIVIAL),
    ];
    let k = 0.4;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, m, class) in &cases {
        let mut model_worst: f64 = 0.0;
        for _ in 0..50 {
            let x = random_loop(m, *class, &mut rng);
            let Ok(g) = action::grad_s(m, &x, k, GradientMetric::L2) else {
                return outcome(false, format!("{name}: gradient failed"));
            };
            for _ in 0..5 {
                let u = random_tangent(x.len(), &mut rng);
                let eval = |s: f64| x.step(&u, s).and_then(|y| action::action_value(m, &y, k));
                let (Ok(sp), Ok(sm)) = (eval(FD_STEP), eval(-FD_STEP)) else {
                    return outcome(false, format!("{name}: evaluation failed"));
                };
                let fd = (sp - sm) / (2.0 * FD_STEP);
                let exact = g.dot(&u);
                model_worst = model_worst.max((fd - exact).abs() / exact.abs().max(1.0));
            }
        }
        parts.push(format!("{name} {model_worst:.1e}"));
        worst = worst.max(model_worst);
    }
    outcome(worst < GRADIENT_REL_TOL, format!("max relative error {} (< {GRADIENT_REL_TOL:.0e})", parts.join(", ")))
}

fn integrator() -> Outcome {
    let opts = IntegrateOptions::default();
    let mut drift: f64 = 0.0;
    let models = [SurfaceModel::flat_torus(1.0), SurfaceModel::exact_torus(0.1), SurfaceModel::hyperbolic(1.0, None).expect("valid model")];
    for m in &models {
        let s = PhaseState::new(Vec2::new(0.1, 1.0), Vec2::new(0.6, -0.3));
        match dynamics::integrate(m, &s, 10.0, &opts) {
            Ok(o) => drift = drift.max(o.energy_drift),
            Err(e) => return outcome(false, format!("integration error: {e}")),
        }
    }
    let t = SurfaceModel::flat_torus(1.0);
    let s0 = PhaseState::new(Vec2::zeros(), Vec2::new(1.0, 0.0));
    let dur: f64 = 5.0;
    let exact = Vec2::new(dur.sin(), 1.0 - dur.cos());
    let fixed = |h: f64| IntegrateOptions { max_step: h, adaptive: false, ..IntegrateOptions::default() };
    let err = |h: f64| dynamics::integrate(&t, &s0, dur, &fixed(h)).map(|o| (o.last().state.q - exact).norm());
    let (Ok(e1), Ok(e2)) = (err(0.05), err(0.025)) else {
        return outcome(false, "integration error".into());
    };
    let ratio = e1 / e2;
    let ret = match dynamics::integrate(&t, &s0, TAU, &opts) {
        Ok(o) => (o.last().state.q - s0.q).norm(),
        Err(e) => return outcome(false, format!("integration error: {e}")),
    };
    let pass = drift < DRIFT_TOL && (HALVING_RATIO.0..=HALVING_RATIO.1).contains(&ratio) && ret < LARMOR_RETURN_TOL;
    outcome(
        pass,
        format!("drift over t=10 {drift:.1e} < {DRIFT_TOL:.0e}, halving ratio {ratio:.2} in {HALVING_RATIO:?}, Larmor return {ret:.1e} < {LARMOR_RETURN_TOL:.0e}"),
    )
}

fn invariants(runs: &Runs) -> Outcome {
    let iterates: usize = runs.diagnostics.iter().map(|d| d.records.len()).sum();
    let cs = runs.diagnostics.iter().all(cauchy_schwarz_ok);

    let h = SurfaceModel::hyperbolic(1.0, None).expect("valid model");
    let opts = PotentialOptions::default();
    let pts = [Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0), Vec2::new(0.5, 2.0)];
    let energies = [0.8, 1.0];
    let mut table = [[[0.0; 3]; 3]; 2];
    for (ki, k) in energies.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                match mane::mane_potential(&h, pts[i], pts[j], *k, &opts) {
                    Ok(p) if !p.unbounded => table[ki][i][j] = p.value,
                    Ok(_) => return outcome(false, "potential unexpectedly unbounded".into()),
                    Err(e) => return outcome(false, format!("potential error: {e}")),
                }
            }
        }
    }
    let mut monotone_gap: f64 = f64::NEG_INFINITY;
    let mut triangle_gap: f64 = f64::NEG_INFINITY;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            monotone_gap = monotone_gap.max(table[0][i][j] - table[1][i][j]);
            for (l, mk) in (0..3).filter(|l| *l != i && *l != j).zip(table.iter().cycle()) {
                let _ = mk;
                for t in &table {
                    triangle_gap = triangle_gap.max(t[i][l] - t[i][j] - t[j][l]);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut lift_gap: f64 = 0.0;
    let mut slope_ok = true;
    let models = [SurfaceModel::flat_torus(1.0), SurfaceModel::hyperbolic(1.0, Some(2.0)).expect("valid model")];
    for m in &models {
        let deck = m.deck_generators()[0];
        for _ in 0..20 {
            let x = random_loop(m, FreeHomotopyClass::TRIVIAL, &mut rng);
            let (Ok(f0), Ok(f1)) = (action::flux(m, &x.curve), action::flux(m, &x.curve.mapped(&deck))) else {
                return outcome(false, "flux failed".into());
            };
            lift_gap = lift_gap.max((f0 - f1).abs());
            let (k0, k1) = (0.2, 0.9);
            let (Ok(a), Ok(b)) = (action::action_s(m, &x, k0), action::action_s(m, &x, k1)) else {
                return outcome(false, "action failed".into());
            };
            // the k-independent terms agree bitwise; the total differs only by rounding of the final sum
            let d = b.total - a.total - (k1 - k0) * x.period();
            slope_ok &= a.kinetic == b.kinetic && a.flux == b.flux && d.abs() <= 4.0 * f64::EPSILON * b.total.abs().max(1.0);
        }
    }
    let pass = cs && iterates > 0 && monotone_gap <= POTENTIAL_TOL && triangle_gap <= POTENTIAL_TOL && lift_gap < FLUX_LIFT_TOL && slope_ok;
    outcome(
        pass,
        format!(
            "Cauchy-Schwarz on {iterates} iterates: {cs}; potential monotonicity excess {monotone_gap:.1e}, triangle excess {triangle_gap:.1e} (<= {POTENTIAL_TOL:.0e}); flux lift gap {lift_gap:.1e}; S_k' - S_k = (k'-k)T: {slope_ok}"
        ),
    )
}

fn sweep_outputs() -> Result<(String, String)> {
    let m = SurfaceModel::flat_torus(1.0);
    let s = solvers::energy_sweep(&m, &sweep_energies(), &sweep_config())?;
    let json = serde_json::to_string(&s)?;
    Ok((json, io::sweep_csv(&s)))
}

fn determinism() -> Outcome {
    match (sweep_outputs(), sweep_outputs()) {
        (Ok((j1, c1)), Ok((j2, c2))) => outcome(
            j1 == j2 && c1 == c2,
            format!("two sweeps: JSON {} bytes identical: {}, CSV {} bytes identical: {}", j1.len(), j1 == j2, c1.len(), c1 == c2),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("sweep error: {e}")),
    }
}

fn main() -> ExitCode {
    let mut runs = Runs::default();
    let results = [
        ("1 Larmor mountain pass", larmor(&mut runs)),
        ("2 energy sweep", sweep(&mut runs)),
        ("3 supercritical minimizer", minimizer(&mut runs)),
        ("4 critical value brackets", brackets()),
        ("5 gradient fidelity", gradient_fidelity()),
        ("6 flow integrator", integrator()),
        ("7 invariant suite", invariants(&runs)),
        ("8 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
