//! End-to-end acceptance suite. Each test prints one pass/fail line.
//!
//! Heavy runs are shared through lazily initialized statics and serialized
//! by a global mutex so that the timed run is never slowed down by a
//! concurrently executing sibling.

use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;

use cmflow::continuation::{continuation_run, ContinuationOutcome, ContinuationParams};
use cmflow::diagnostics::conserved_quantity;
use cmflow::flow::{recenter, run_flow, FlowEngine, FlowOutcome, FlowParams};
use cmflow::grid::{build_grid, sphere_area, Geometry, Grid, ScalarField};
use cmflow::testdata::{
    amp_for_margin, degenerate_prescription, forward_map, gen_body, BodySpec,
};
use std::sync::Arc;

static COMPUTE: Mutex<()> = Mutex::new(());

fn compute_lock() -> MutexGuard<'static, ()> {
    COMPUTE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(num: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {num:02} {name}: {verdict} ({detail})");
    assert!(pass, "criterion {num:02} {name}: FAIL ({detail})");
}

fn s2(nt: usize, np: usize) -> Arc<Grid> {
    build_grid(Geometry::FullS2, 2, nt, np).unwrap()
}

fn params(k: usize, tol: f64) -> FlowParams {
    let mut p = FlowParams::new(k);
    p.residual_tol = tol;
    p
}

fn sup_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// φ ≡ 2 rounding run at a given resolution.
fn rounding_run(nt: usize, np: usize) -> (FlowOutcome, f64, Duration) {
    let g = s2(nt, np);
    let s0 = gen_body(
        &BodySpec::Ellipsoid { semi_axes: vec![1.3, 1.0, 0.8] },
        g.clone(),
    )
    .unwrap();
    let phi = ScalarField::constant(g, 2.0);
    let r_pred = (conserved_quantity(&s0, 1).unwrap() / (2.0 * sphere_area(2))).sqrt();
    let start = Instant::now();
    let out = run_flow(&s0, &phi, &params(1, 1e-3)).unwrap();
    let wall = start.elapsed();
    (out, r_pred, wall)
}

static ROUND_COARSE: Lazy<(FlowOutcome, f64, Duration)> = Lazy::new(|| rounding_run(96, 192));
static ROUND_FINE: Lazy<(FlowOutcome, f64, Duration)> = Lazy::new(|| rounding_run(192, 384));

/// k = n = 2 recovery target and the two runs used for uniqueness.
struct Recovery {
    target: ScalarField,
    from_sphere: FlowOutcome,
    from_shifted: FlowOutcome,
}

static MINKOWSKI: Lazy<Recovery> = Lazy::new(|| {
    let g = s2(48, 96);
    let target = gen_body(
        &BodySpec::Ellipsoid { semi_axes: vec![1.2, 1.0, 0.9] },
        g.clone(),
    )
    .unwrap();
    let phi = forward_map(&target, 2).unwrap();
    let p = params(2, 1e-4);
    let from_sphere =
        run_flow(&ScalarField::constant(g.clone(), 1.0), &phi, &p).unwrap();
    let shifted = gen_body(
        &BodySpec::TranslatedSphere { r: 1.1, z: vec![0.1, -0.05, 0.2] },
        g,
    )
    .unwrap();
    let from_shifted = run_flow(&shifted, &phi, &p).unwrap();
    Recovery {
        target,
        from_sphere,
        from_shifted,
    }
});

static CHRISTOFFEL: Lazy<(ScalarField, FlowOutcome)> = Lazy::new(|| {
    let g = s2(48, 96);
    let amp = amp_for_margin(1.0, 3, g.clone(), 0.1).unwrap();
    let target = gen_body(
        &BodySpec::HarmonicPerturbed { base: 1.0, ell: 3, amp },
        g.clone(),
    )
    .unwrap();
    let phi = forward_map(&target, 1).unwrap();
    let out = run_flow(&ScalarField::constant(g, 1.0), &phi, &params(1, 1e-4)).unwrap();
    (target, out)
});

static AXISYM: Lazy<(ScalarField, FlowOutcome)> = Lazy::new(|| {
    let g = build_grid(Geometry::Axisym, 3, 96, 0).unwrap();
    let target = gen_body(
        &BodySpec::AxisymProfile { coeffs: vec![1.0, 0.0, 0.12, 0.04] },
        g.clone(),
    )
    .unwrap();
    let phi = forward_map(&target, 2).unwrap();
    let out = run_flow(&ScalarField::constant(g, 1.0), &phi, &params(2, 1e-4)).unwrap();
    (target, out)
});

static WEAK: Lazy<(ScalarField, f64, ContinuationOutcome)> = Lazy::new(|| {
    let g = s2(48, 96);
    let weak = degenerate_prescription(g, 1, 1e-3).unwrap();
    let out = continuation_run(&weak.phi, &ContinuationParams::new(1)).unwrap();
    (weak.phi, weak.margin, out)
});

/// Every flow outcome retained by the suite, for the global monotonicity
/// and pinching criteria.
fn all_outcomes() -> Vec<(&'static str, &'static FlowOutcome)> {
    vec![
        ("round coarse", &ROUND_COARSE.0),
        ("round fine", &ROUND_FINE.0),
        ("minkowski from sphere", &MINKOWSKI.from_sphere),
        ("minkowski from shifted", &MINKOWSKI.from_shifted),
        ("christoffel", &CHRISTOFFEL.1),
        ("axisym", &AXISYM.1),
    ]
}

#[test]
fn criterion_01_round_fixed_point() {
    let _g = compute_lock();
    let (out, r_pred, wall) = &*ROUND_COARSE;
    let dev = out
        .state
        .s
        .values
        .iter()
        .fold(0.0f64, |m, s| m.max((s / r_pred - 1.0).abs()));
    let pass = out.residual <= 1e-3 && dev <= 1e-3 && *wall <= Duration::from_secs(300);
    report(
        1,
        "round fixed point",
        pass,
        &format!(
            "residual {:.3e}, radius deviation {:.3e}, wall {:.1} s",
            out.residual,
            dev,
            wall.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_conservation() {
    let _g = compute_lock();
    let drift = |o: &FlowOutcome| {
        (o.conserved_final - o.conserved_initial).abs() / o.conserved_initial.abs()
    };
    let coarse = drift(&ROUND_COARSE.0);
    let fine = drift(&ROUND_FINE.0);
    let shrink = coarse / fine;
    let pass = coarse <= 1e-4 && shrink >= 3.5;
    report(
        2,
        "conservation drift",
        pass,
        &format!("coarse {coarse:.3e}, fine {fine:.3e}, shrink {shrink:.2}x"),
    );
}

#[test]
fn criterion_03_monotonicity() {
    let _g = compute_lock();
    let mut worst = f64::NEG_INFINITY;
    let mut where_ = "";
    for (name, o) in all_outcomes() {
        if o.max_monotone_increase > worst {
            worst = o.max_monotone_increase;
            where_ = name;
        }
    }
    let pass = worst <= 1e-10;
    report(
        3,
        "weighted mean monotone",
        pass,
        &format!("max relative increase {worst:.3e} ({where_})"),
    );
}

#[test]
fn criterion_04_minkowski_recovery() {
    let _g = compute_lock();
    let rec = &*MINKOWSKI;
    let err = sup_diff(&rec.from_sphere.solution, &rec.target);
    let pass = err <= 5e-3;
    report(
        4,
        "minkowski recovery (k = n = 2)",
        pass,
        &format!("sup error {err:.3e}, residual {:.3e}", rec.from_sphere.residual),
    );
}

#[test]
fn criterion_05_christoffel_recovery() {
    let _g = compute_lock();
    let (target, out) = &*CHRISTOFFEL;
    let (target_c, _) = recenter(target).unwrap();
    let err = sup_diff(&out.solution, &target_c);
    let pass = err <= 5e-3;
    report(
        5,
        "christoffel recovery (k = 1)",
        pass,
        &format!("sup error {err:.3e}, residual {:.3e}", out.residual),
    );
}

#[test]
fn criterion_06_intermediate_axisym() {
    let _g = compute_lock();
    let (target, out) = &*AXISYM;
    let (target_c, _) = recenter(target).unwrap();
    let err = sup_diff(&out.solution, &target_c);
    let pass = err <= 1e-2;
    report(
        6,
        "axisymmetric recovery (n = 3, k = 2)",
        pass,
        &format!("sup error {err:.3e}, residual {:.3e}", out.residual),
    );
}

#[test]
fn criterion_07_pinching() {
    let _g = compute_lock();
    let mut worst = f64::INFINITY;
    let mut where_ = "";
    for (name, o) in all_outcomes() {
        if o.min_pinch_margin < worst {
            worst = o.min_pinch_margin;
            where_ = name;
        }
    }
    let pass = worst >= -1e-6;
    report(
        7,
        "pinching margin",
        pass,
        &format!("min (kappa_min - eps0 H)/H = {worst:.3e} ({where_})"),
    );
}

#[test]
fn criterion_08_global_term_limit() {
    let _g = compute_lock();
    let mut worst = 0.0f64;
    let mut where_ = "";
    for (name, o) in all_outcomes() {
        let k = o.state.k as f64;
        let dev = (o.mu_final - o.gamma.powf(-1.0 / k)).abs();
        if dev > worst {
            worst = dev;
            where_ = name;
        }
    }
    let pass = worst <= 1e-4;
    report(
        8,
        "global term limit",
        pass,
        &format!("max |mu - gamma^(-1/k)| = {worst:.3e} ({where_})"),
    );
}

#[test]
fn criterion_09_uniqueness() {
    let _g = compute_lock();
    let rec = &*MINKOWSKI;
    let err = sup_diff(&rec.from_sphere.solution, &rec.from_shifted.solution);
    let pass = err <= 1e-3;
    report(
        9,
        "uniqueness up to translation",
        pass,
        &format!("sup difference of normalized limits {err:.3e}"),
    );
}

#[test]
fn criterion_10_weak_prescription() {
    let _g = compute_lock();
    let (_phi, margin, out) = &*WEAK;
    let z_max = out
        .stages
        .iter()
        .fold(0.0f64, |m, st| m.max(st.z_norm));
    let z_last = out.stages.last().unwrap().z_norm;
    let tau_last = out.stages.last().unwrap().tau;
    let pass = *margin <= 1e-3
        && (tau_last - (1.0 - 1e-3)).abs() < 1e-12
        && z_max <= out.z_bound
        && z_last <= 1e-2
        && out.final_residual <= 1e-2;
    report(
        10,
        "weak case continuation",
        pass,
        &format!(
            "margin {margin:.3e}, stages {}, |z| max {z_max:.3e} (bound {:.3e}), \
             |z| final {z_last:.3e}, residual vs target {:.3e}",
            out.stages.len(),
            out.z_bound,
            out.final_residual
        ),
    );
}

#[test]
fn criterion_11_translation_equivariance() {
    let _g = compute_lock();
    let g = s2(32, 64);
    let s0 = gen_body(
        &BodySpec::Ellipsoid { semi_axes: vec![1.2, 1.0, 0.9] },
        g.clone(),
    )
    .unwrap();
    let z = [0.12, -0.07, 0.18];
    let shifted = ScalarField::from_fn(g.clone(), |u| {
        // same body translated by z
        0.0 + u[0] * z[0] + u[1] * z[1] + u[2] * z[2]
    });
    let s0_shifted = ScalarField {
        grid: g.clone(),
        values: s0
            .values
            .iter()
            .zip(&shifted.values)
            .map(|(a, b)| a + b)
            .collect(),
    };
    let phi = ScalarField::constant(g, 2.0);
    let mut p = params(1, 1e-12);
    p.max_steps = u64::MAX;
    let mut ea = FlowEngine::new(&s0, &phi, p.clone()).unwrap();
    let mut eb = FlowEngine::new(&s0_shifted, &phi, p).unwrap();
    for _ in 0..100 {
        ea.step().unwrap();
        eb.step().unwrap();
    }
    let worst = ea
        .state()
        .s
        .values
        .iter()
        .zip(&eb.state().s.values)
        .zip(&shifted.values)
        .fold(0.0f64, |m, ((a, b), l)| m.max((b - l - a).abs()));
    let pass = worst <= 1e-10;
    report(
        11,
        "translation equivariance",
        pass,
        &format!("sup deviation after 100 steps {worst:.3e}"),
    );
}
