//! Homotopy driver for weakly admissible prescriptions.
//!
//! When `r(φ^{-1/k}) = ∇̄²φ^{-1/k} + φ^{-1/k} ḡ` is only positive
//! *semi*-definite the flow's a-priori estimates degenerate. The cure is a
//! family `φ_τ = (1 − τ + τ φ^{-1/k} − ⟨u, z_τ⟩)^{-k}` which is strictly
//! admissible for every τ < 1: `r` of a linear function vanishes, so the
//! margin of `φ_τ^{-1/k}` is `(1 − τ) + τ · (margin of φ^{-1/k}) > 0`.
//! The shift `z_τ` restores the solvability condition `∫ u φ_τ dω = 0`;
//! it is the unique interior minimizer of an entropy functional and is
//! computed here by a damped Newton iteration on the stationarity system
//! `∫ u (h − ⟨u,z⟩)^{-k} dω = 0`. The driver walks a geometric schedule
//! `τ_j = 1 − (1−τ₀) ρ^j` up to `τ_end = 1 − δ`, warm-starting each flow
//! from the previous stage's solution.

use nalgebra::{DMatrix, DVector};

use crate::convexity::convexity_margin;
use crate::diagnostics::residual;
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowParams};
use crate::grid::{Geometry, ScalarField};

/// Admissibility classes of a prescription.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissibilityClass {
    Strict,
    Weak,
    Inadmissible,
}

impl std::fmt::Display for AdmissibilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdmissibilityClass::Strict => write!(f, "strict"),
            AdmissibilityClass::Weak => write!(f, "weak"),
            AdmissibilityClass::Inadmissible => write!(f, "inadmissible"),
        }
    }
}

/// Outcome of `admissibility_check`.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub class: AdmissibilityClass,
    /// min eigenvalue of r(φ^{-1/k}) over all nodes.
    pub margin: f64,
    /// Threshold separating discretization noise from degeneracy.
    pub conv_tol: f64,
    /// |∫ u φ dω| / ∫ φ dω.
    pub integral_defect: f64,
    pub int_tol: f64,
}

/// Classifies a prescription: strict if the convexity margin of φ^{-1/k}
/// clears `conv_tol = 1e-8 · mean(φ^{-1/k})` and the first-moment defect is
/// below `int_tol = 1e-8`; weak if the margin sits within ±conv_tol;
/// inadmissible otherwise.
pub fn admissibility_check(phi: &ScalarField, k: usize) -> Result<AdmissibilityReport> {
    let n = phi.grid.n;
    if k == 0 || k > n {
        return Err(Error::Config(format!("degree k = {k} outside 1..={n}")));
    }
    if phi.min() <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "prescription must be positive, min = {}",
            phi.min()
        )));
    }
    let grid = phi.grid.clone();
    let inv_k = -1.0 / k as f64;
    let f = ScalarField {
        grid: grid.clone(),
        values: phi.values.iter().map(|p| p.powf(inv_k)).collect(),
    };
    let margin = convexity_margin(&f)?;
    let conv_tol = 1e-8 * f.mean();

    let mut mom = vec![0.0; n + 1];
    let mut total = 0.0;
    let mut u = vec![0.0; n + 1];
    for idx in 0..grid.node_count() {
        grid.unit_normal(idx, &mut u);
        let wp = grid.weights[idx] * phi.values[idx];
        total += wp;
        match grid.geometry {
            Geometry::FullS2 => {
                for c in 0..=n {
                    mom[c] += wp * u[c];
                }
            }
            Geometry::Axisym => mom[n] += wp * u[n],
        }
    }
    let integral_defect = mom.iter().map(|m| m * m).sum::<f64>().sqrt() / total;
    let int_tol = 1e-8;

    let class = if margin.abs() <= conv_tol {
        AdmissibilityClass::Weak
    } else if margin > conv_tol && integral_defect <= int_tol {
        AdmissibilityClass::Strict
    } else {
        AdmissibilityClass::Inadmissible
    };
    Ok(AdmissibilityReport {
        class,
        margin,
        conv_tol,
        integral_defect,
        int_tol,
    })
}

/// φ_τ = (1 − τ + τ φ^{-1/k}(u) − ⟨u, z⟩)^{-k}.
pub fn make_phi_tau(phi: &ScalarField, k: usize, tau: f64, z: &[f64]) -> Result<ScalarField> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Config(format!("tau = {tau} outside [0, 1)")));
    }
    let grid = phi.grid.clone();
    let n = grid.n;
    if z.len() != n + 1 {
        return Err(Error::Config(format!(
            "translation has {} components, expected {}",
            z.len(),
            n + 1
        )));
    }
    let inv_k = -1.0 / k as f64;
    let mut u = vec![0.0; n + 1];
    let mut values = Vec::with_capacity(grid.node_count());
    for idx in 0..grid.node_count() {
        grid.unit_normal(idx, &mut u);
        let dot: f64 = u.iter().zip(z).map(|(a, b)| a * b).sum();
        let base = (1.0 - tau) + tau * phi.values[idx].powf(inv_k) - dot;
        if base <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "translation leaves the body: base = {base:.3e} at node {idx}"
            )));
        }
        values.push(base.powi(-(k as i32)));
    }
    Ok(ScalarField { grid, values })
}

/// Newton iteration for the interior point z with
/// `∫ u (s_L − ⟨u,z⟩)^{-k} dω = 0` (the entropy-minimizing translation).
///
/// Damped so that `min (s_L − ⟨u,z⟩)` never drops below 0.1 of its previous
/// value; the Jacobian `k ∫ u⊗u (s_L − ⟨u,z⟩)^{-k-1} dω` is positive
/// definite on the interior. For axisymmetric grids only the axis component
/// is active (the others vanish identically by symmetry).
pub fn solve_translation(s_l: &ScalarField, k: usize) -> Result<Vec<f64>> {
    let grid = s_l.grid.clone();
    let n = grid.n;
    if s_l.min() <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "body does not contain the origin: min support {}",
            s_l.min()
        )));
    }
    let active: Vec<usize> = match grid.geometry {
        Geometry::FullS2 => (0..=n).collect(),
        Geometry::Axisym => vec![n],
    };
    let na = active.len();

    // node direction table restricted to active components
    let nn = grid.node_count();
    let mut dirs = vec![0.0; nn * na];
    let mut u = vec![0.0; n + 1];
    for idx in 0..nn {
        grid.unit_normal(idx, &mut u);
        for (a, &c) in active.iter().enumerate() {
            dirs[idx * na + a] = u[c];
        }
    }

    let base_at = |z: &DVector<f64>, idx: usize| -> f64 {
        let mut dot = 0.0;
        for a in 0..na {
            dot += dirs[idx * na + a] * z[a];
        }
        s_l.values[idx] - dot
    };
    let min_base = |z: &DVector<f64>| -> f64 {
        (0..nn).fold(f64::INFINITY, |m, idx| m.min(base_at(z, idx)))
    };

    let mut z = DVector::zeros(na);
    let mut prev_min = min_base(&z);
    let kf = k as f64;
    for _ in 0..100 {
        let mut g = DVector::zeros(na);
        let mut jac = DMatrix::zeros(na, na);
        let mut scale = 0.0;
        for idx in 0..nn {
            let b = base_at(&z, idx);
            let w = grid.weights[idx];
            let bk = b.powf(-kf);
            scale += w * bk;
            let bk1 = bk / b;
            for a in 0..na {
                let ua = dirs[idx * na + a];
                g[a] += w * ua * bk;
                for bcol in 0..na {
                    jac[(a, bcol)] += kf * w * ua * dirs[idx * na + bcol] * bk1;
                }
            }
        }
        if g.norm() <= 1e-10 * scale {
            return Ok(embed(&z, &active, n));
        }
        let delta = jac
            .clone()
            .lu()
            .solve(&(-&g))
            .ok_or_else(|| Error::NonConvergence("singular translation Jacobian".into()))?;
        let mut alpha = 1.0;
        loop {
            let trial = &z + alpha * &delta;
            if min_base(&trial) >= 0.1 * prev_min {
                z = trial;
                prev_min = min_base(&z);
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(Error::NonConvergence(
                    "translation line search exits the body".into(),
                ));
            }
        }
    }
    Err(Error::NonConvergence(
        "translation solve: no convergence in 100 iterations".into(),
    ))
}

fn embed(z: &DVector<f64>, active: &[usize], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (a, &c) in active.iter().enumerate() {
        out[c] = z[a];
    }
    out
}

/// Parameters of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationParams {
    pub k: usize,
    /// First homotopy parameter (default 0.5).
    pub tau0: f64,
    /// Geometric refinement ratio of 1−τ (default 0.5).
    pub rho: f64,
    /// Terminal gap: stop at τ_end = 1 − delta (default 1e-3).
    pub delta: f64,
    /// Flow settings reused at every stage.
    pub flow: FlowParams,
}

impl ContinuationParams {
    pub fn new(k: usize) -> Self {
        ContinuationParams {
            k,
            tau0: 0.5,
            rho: 0.5,
            delta: 1e-3,
            flow: FlowParams::new(k),
        }
    }

    /// The geometric schedule τ_j = 1 − (1−τ₀) ρ^j, ending exactly at τ_end.
    pub fn schedule(&self) -> Vec<f64> {
        let tau_end = 1.0 - self.delta;
        let mut taus = Vec::new();
        let mut gap = 1.0 - self.tau0;
        while 1.0 - gap < tau_end {
            taus.push(1.0 - gap);
            gap *= self.rho;
        }
        taus.push(tau_end);
        taus
    }
}

/// Per-stage summary of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationStage {
    pub tau: f64,
    pub z: Vec<f64>,
    pub z_norm: f64,
    /// Residual of the stage flow against its own φ_τ.
    pub residual: f64,
    pub gamma: f64,
    pub accepted_steps: u64,
}

/// Result of a completed continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub stages: Vec<ContinuationStage>,
    /// Recentered support function of the final stage.
    pub solution: ScalarField,
    /// Final-stage solution normalized to solve p_k = φ_τ directly.
    pub normalized: ScalarField,
    /// sup |p_k/(γφ) − 1| of the final solution measured against φ itself.
    pub final_residual: f64,
    /// Lemma-style a-priori bound 1 + max φ^{-1/k} that every |z_τ| obeys.
    pub z_bound: f64,
}

/// Walks the homotopy to τ_end, solving a strictly admissible flow problem
/// at every stage and warm-starting from the previous solution.
pub fn continuation_run(phi: &ScalarField, params: &ContinuationParams) -> Result<ContinuationOutcome> {
    let grid = phi.grid.clone();
    let k = params.k;
    if phi.min() <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "prescription must be positive, min = {}",
            phi.min()
        )));
    }
    let inv_k = -1.0 / k as f64;
    let f: Vec<f64> = phi.values.iter().map(|p| p.powf(inv_k)).collect();
    let z_bound = 1.0 + f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut warm = ScalarField::constant(grid.clone(), 1.0);
    let mut stages = Vec::new();
    let mut last_norm: Option<ScalarField> = None;

    for tau in params.schedule() {
        let stage = |e: Error| Error::ContinuationStage {
            tau,
            source: Box::new(e),
        };
        let h = ScalarField {
            grid: grid.clone(),
            values: f.iter().map(|fi| (1.0 - tau) + tau * fi).collect(),
        };
        let z = solve_translation(&h, k).map_err(stage)?;
        let z_norm = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        if z_norm > z_bound {
            return Err(stage(Error::NonConvergence(format!(
                "|z| = {z_norm:.3e} exceeds the a-priori bound {z_bound:.3e}"
            ))));
        }
        let phi_tau = make_phi_tau(phi, k, tau, &z).map_err(stage)?;
        let out = run_flow(&warm, &phi_tau, &params.flow).map_err(stage)?;
        warm = out.state.s.clone();
        stages.push(ContinuationStage {
            tau,
            z,
            z_norm,
            residual: out.residual,
            gamma: out.gamma,
            accepted_steps: out.accepted_steps,
        });
        last_norm = Some(out.solution);
    }

    let final_residual = residual(&warm, phi, k)?;
    Ok(ContinuationOutcome {
        stages,
        normalized: last_norm.expect("schedule is never empty"),
        solution: warm,
        final_residual,
        z_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::recenter;
    use crate::grid::{build_grid, Geometry};
    use crate::testdata::{degenerate_prescription, forward_map, gen_body, BodySpec};
    use std::sync::Arc;

    fn s2(nt: usize, np: usize) -> Arc<crate::grid::Grid> {
        build_grid(Geometry::FullS2, 2, nt, np).unwrap()
    }

    #[test]
    fn phi_tau_limits() {
        let g = s2(12, 24);
        let phi = ScalarField::from_fn(g.clone(), |u| 2.0 + 0.3 * u[2] * u[2]);
        let z = [0.0; 3];
        let p0 = make_phi_tau(&phi, 1, 0.0, &z).unwrap();
        for v in &p0.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let p9 = make_phi_tau(&phi, 1, 0.999, &z).unwrap();
        for (a, b) in p9.values.iter().zip(&phi.values) {
            assert!((a / b - 1.0).abs() < 5e-3);
        }
        // origin symmetry is preserved
        let pm = make_phi_tau(&phi, 2, 0.7, &z).unwrap();
        for idx in 0..g.node_count() {
            let anti = g.antipode(idx);
            assert!((pm.values[idx] - pm.values[anti]).abs() < 1e-13);
        }
        // z far outside the body must fail
        assert!(make_phi_tau(&phi, 1, 0.5, &[0.0, 0.0, 5.0]).is_err());
    }

    #[test]
    fn translation_solver_exact_cases() {
        let g = s2(16, 32);
        // origin-symmetric body → z = 0
        let sym = ScalarField::from_fn(g.clone(), |u| 1.0 + 0.2 * u[2] * u[2]);
        for k in [1usize, 2] {
            let z = solve_translation(&sym, k).unwrap();
            let zn: f64 = z.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(zn < 1e-10, "k={k} |z|={zn:.3e}");
        }
        // s = 1 + ⟨u, z0⟩ recovers z0 exactly
        let z0 = [0.3, -0.2, 0.25];
        let shifted =
            ScalarField::from_fn(g, |u| 1.0 + u[0] * z0[0] + u[1] * z0[1] + u[2] * z0[2]);
        for k in [1usize, 2] {
            let z = solve_translation(&shifted, k).unwrap();
            for c in 0..3 {
                assert!((z[c] - z0[c]).abs() < 1e-9, "k={k} z={z:?}");
            }
        }
    }

    #[test]
    fn admissibility_classification() {
        let g = s2(16, 32);
        // constant prescriptions are strict with an exact integral condition
        let report = admissibility_check(&ScalarField::constant(g.clone(), 3.0), 2).unwrap();
        assert_eq!(report.class, AdmissibilityClass::Strict);
        assert!(report.integral_defect < 1e-14);

        // an uncompensated first moment is inadmissible
        let lopsided = ScalarField::from_fn(g.clone(), |u| 2.0 * (1.0 + 0.5 * u[2]));
        let report = admissibility_check(&lopsided, 1).unwrap();
        assert_eq!(report.class, AdmissibilityClass::Inadmissible);
        assert!((report.integral_defect - 1.0 / 6.0).abs() < 1e-12);

        // a prescription tuned to zero margin on this grid is weak; the
        // margin min_i (1 + amp·e_i) is piecewise linear in amp, so bisect
        let leg4 = |x: f64| (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0;
        let margin_at = |amp: f64| {
            let f = ScalarField::from_fn(g.clone(), |u| 1.0 + amp * leg4(u[2]));
            crate::convexity::convexity_margin(&f).unwrap()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while margin_at(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if margin_at(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let phi = ScalarField::from_fn(g, |u| (1.0 + lo * leg4(u[2])).recip());
        let report = admissibility_check(&phi, 1).unwrap();
        assert_eq!(report.class, AdmissibilityClass::Weak);
    }

    #[test]
    fn single_stage_matches_direct_solve() {
        let g = s2(16, 32);
        let body = gen_body(
            &BodySpec::Ellipsoid { semi_axes: vec![1.05, 1.0, 0.97] },
            g.clone(),
        )
        .unwrap();
        let phi = forward_map(&body, 1).unwrap();
        let mut tight = FlowParams::new(1);
        tight.residual_tol = 1e-6;
        let direct = run_flow(&ScalarField::constant(g.clone(), 1.0), &phi, &tight).unwrap();
        let mut params = ContinuationParams::new(1);
        params.flow.residual_tol = 1e-6;
        params.tau0 = 0.99;
        params.delta = 0.01; // single stage at τ = 0.99
        let cont = continuation_run(&phi, &params).unwrap();
        assert_eq!(cont.stages.len(), 1);
        let (d, _) = recenter(&direct.state.s).unwrap();
        let (c, _) = recenter(&cont.solution).unwrap();
        // both solve p_1 = γφ with the same conserved normalization only up
        // to their own γ; compare shapes after normalizing the mean radius
        let scale = d.mean() / c.mean();
        let worst = d
            .values
            .iter()
            .zip(&c.values)
            .fold(0.0f64, |a, (x, y)| a.max((x - y * scale).abs()));
        assert!(worst < 1e-3, "direct vs continuation {worst:.3e}");
    }

    #[test]
    fn weak_prescription_continuation_mini() {
        let g = s2(24, 48);
        let weak = degenerate_prescription(g, 1, 1e-9).unwrap();
        let params = ContinuationParams::new(1);
        let out = continuation_run(&weak.phi, &params).unwrap();
        assert!(out.stages.len() >= 8);
        for st in &out.stages {
            assert!(st.z_norm <= out.z_bound);
        }
        let zn_last = out.stages.last().unwrap().z_norm;
        assert!(zn_last <= 1e-2, "final |z| = {zn_last:.3e}");
        assert!(
            out.final_residual <= 1e-2,
            "final residual {:.3e}",
            out.final_residual
        );
    }
}
