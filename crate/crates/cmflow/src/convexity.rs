//! The radii form r = ∇̄²s + s ḡ, its spectrum, and symmetric functions.
//!
//! The eigenvalues of r relative to the round metric are the principal
//! radii of curvature of the boundary; their elementary symmetric
//! polynomials p_k are the curvature data the whole solver runs on.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid, ScalarField};

/// Per-node components of r = ∇̄²s + s ḡ.
#[derive(Debug, Clone)]
pub struct RadiiForm {
    pub grid: Arc<Grid>,
    pub data: RadiiFormData,
}

#[derive(Debug, Clone)]
pub enum RadiiFormData {
    /// Coordinate components in the (θ, φ) frame; the metric there is
    /// diag(1, sin²θ).
    FullS2 {
        rtt: Vec<f64>,
        rtp: Vec<f64>,
        rpp: Vec<f64>,
    },
    /// Rotationally symmetric reduction: radial eigenvalue s'' + s and
    /// tangential eigenvalue s' cot θ + s (multiplicity n-1).
    Axisym { lam_rad: Vec<f64>, lam_tan: Vec<f64> },
}

/// Sorted (ascending) eigenvalues of r relative to ḡ, n per node, flat.
#[derive(Debug, Clone)]
pub struct RadiiSpectrum {
    pub grid: Arc<Grid>,
    pub n: usize,
    pub lambda: Vec<f64>,
}

/// Principal curvatures κ = 1/λ, mean curvature trace H and the speed
/// function F = (σ_n/σ_{n-k})^{1/k} = p_k(λ)^{-1/k}.
#[derive(Debug, Clone)]
pub struct CurvatureView {
    pub grid: Arc<Grid>,
    pub n: usize,
    /// κ per node, sorted descending (duals of ascending λ), flat.
    pub kappa: Vec<f64>,
    pub h_trace: Vec<f64>,
    pub f_speed: Vec<f64>,
}

/// Eigenvalues of a symmetric 2x2 matrix [[a, c], [c, b]], ascending.
#[inline]
pub fn eigen2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + b);
    let d = 0.5 * (a - b);
    let disc = (d * d + c * c).sqrt();
    (mean - disc, mean + disc)
}

/// Elementary symmetric polynomial p_k of a spectrum (p_0 = 1).
pub fn elem_sym_of(lambda: &[f64], k: usize) -> f64 {
    // e[j] after processing each value; n <= 3 in practice so this is cheap.
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for &l in lambda {
        for j in (1..=k.min(e.len() - 1)).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e[k]
}

/// Computes r = ∇̄²s + s ḡ per node.
pub fn radii_form(s: &ScalarField) -> Result<RadiiForm> {
    let grid = s.grid.clone();
    let d = grid.covariant_hessian(s)?;
    let data = match grid.geometry {
        Geometry::FullS2 => {
            let nn = grid.node_count();
            let mut rtt = vec![0.0; nn];
            let mut rtp = vec![0.0; nn];
            let mut rpp = vec![0.0; nn];
            for i in 0..grid.ntheta {
                let st = grid.sin_theta(i);
                let s2 = st * st;
                for j in 0..grid.nphi {
                    let idx = grid.node_index(i, j);
                    rtt[idx] = d.hess_tt[idx] + s.values[idx];
                    rtp[idx] = d.hess_tp[idx];
                    rpp[idx] = d.hess_pp[idx] + s.values[idx] * s2;
                }
            }
            RadiiFormData::FullS2 { rtt, rtp, rpp }
        }
        Geometry::Axisym => {
            let nn = grid.node_count();
            let mut lam_rad = vec![0.0; nn];
            let mut lam_tan = vec![0.0; nn];
            for i in 0..grid.ntheta {
                let cot = grid.cos_theta(i) / grid.sin_theta(i);
                lam_rad[i] = d.hess_tt[i] + s.values[i];
                lam_tan[i] = d.grad_theta[i] * cot + s.values[i];
            }
            RadiiFormData::Axisym { lam_rad, lam_tan }
        }
    };
    Ok(RadiiForm { grid, data })
}

/// Generalized eigenvalues of (r, ḡ), sorted ascending per node.
pub fn radii_spectrum(r: &RadiiForm) -> RadiiSpectrum {
    let grid = r.grid.clone();
    let n = grid.n;
    let nn = grid.node_count();
    let mut lambda = vec![0.0; nn * n];
    match &r.data {
        RadiiFormData::FullS2 { rtt, rtp, rpp } => {
            for i in 0..grid.ntheta {
                let st = grid.sin_theta(i);
                for j in 0..grid.nphi {
                    let idx = grid.node_index(i, j);
                    // ḡ-orthonormal frame: divide mixed component by sin θ.
                    let (l1, l2) = eigen2(rtt[idx], rpp[idx] / (st * st), rtp[idx] / st);
                    lambda[idx * 2] = l1;
                    lambda[idx * 2 + 1] = l2;
                }
            }
        }
        RadiiFormData::Axisym { lam_rad, lam_tan } => {
            for idx in 0..nn {
                let mut ls = vec![lam_tan[idx]; n];
                ls[0] = lam_rad[idx];
                ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
                lambda[idx * n..(idx + 1) * n].copy_from_slice(&ls);
            }
        }
    }
    RadiiSpectrum { grid, n, lambda }
}

impl RadiiSpectrum {
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.lambda[idx * self.n..(idx + 1) * self.n]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.grid.node_count())
            .map(|i| self.lambda[i * self.n])
            .fold(f64::INFINITY, f64::min)
    }
}

/// p_k per node as a scalar field.
pub fn elem_sym(spec: &RadiiSpectrum, k: usize) -> Result<ScalarField> {
    if k == 0 || k > spec.n {
        return Err(Error::Config(format!(
            "elementary symmetric index k = {k} out of range 1..={}",
            spec.n
        )));
    }
    let nn = spec.grid.node_count();
    let mut values = vec![0.0; nn];
    for idx in 0..nn {
        values[idx] = elem_sym_of(spec.node(idx), k);
    }
    Ok(ScalarField {
        grid: spec.grid.clone(),
        values,
    })
}

/// Curvature view κ = 1/λ, H = Σκ, F = p_k^{-1/k}; requires λ > 0.
pub fn curvature_view(spec: &RadiiSpectrum, k: usize) -> Result<CurvatureView> {
    if k == 0 || k > spec.n {
        return Err(Error::Config(format!(
            "curvature index k = {k} out of range 1..={}",
            spec.n
        )));
    }
    let nn = spec.grid.node_count();
    let mut kappa = vec![0.0; nn * spec.n];
    let mut h_trace = vec![0.0; nn];
    let mut f_speed = vec![0.0; nn];
    for idx in 0..nn {
        let ls = spec.node(idx);
        if ls[0] <= 0.0 {
            return Err(Error::ConvexityLost(format!(
                "non-positive principal radius {} at node {idx}",
                ls[0]
            )));
        }
        let mut h = 0.0;
        for (j, &l) in ls.iter().enumerate() {
            let kap = 1.0 / l;
            kappa[idx * spec.n + j] = kap;
            h += kap;
        }
        h_trace[idx] = h;
        f_speed[idx] = elem_sym_of(ls, k).powf(-1.0 / k as f64);
    }
    Ok(CurvatureView {
        grid: spec.grid.clone(),
        n: spec.n,
        kappa,
        h_trace,
        f_speed,
    })
}

/// Minimum over nodes of the smallest eigenvalue of r.
pub fn convexity_margin(s: &ScalarField) -> Result<f64> {
    let r = radii_form(s)?;
    Ok(radii_spectrum(&r).min_eigenvalue())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, sphere_area};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn s2(ntheta: usize, nphi: usize) -> Arc<Grid> {
        build_grid(Geometry::FullS2, 2, ntheta, nphi).unwrap()
    }

    fn binom(n: usize, k: usize) -> f64 {
        let mut r = 1.0;
        for i in 0..k {
            r = r * (n - i) as f64 / (i + 1) as f64;
        }
        r
    }

    #[test]
    fn sphere_radii_form_is_metric_multiple() {
        let g = s2(12, 24);
        let s = ScalarField::constant(g.clone(), 2.5);
        let r = radii_form(&s).unwrap();
        let spec = radii_spectrum(&r);
        for idx in 0..g.node_count() {
            for &l in spec.node(idx) {
                assert!((l - 2.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn translation_leaves_radii_form_unchanged() {
        let g = s2(12, 24);
        let s = ScalarField::from_fn(g.clone(), |u| 2.0 + 0.3 * u[0] - 0.2 * u[2]);
        let spec = radii_spectrum(&radii_form(&s).unwrap());
        for idx in 0..g.node_count() {
            for &l in spec.node(idx) {
                assert!((l - 2.0).abs() < 1e-10, "node {idx}: {l}");
            }
        }
    }

    #[test]
    fn translated_ball_axisym_spectrum() {
        let g = build_grid(Geometry::Axisym, 2, 24, 0).unwrap();
        let s = ScalarField::from_fn(g.clone(), |u| 1.5 + 0.4 * u[2]);
        let spec = radii_spectrum(&radii_form(&s).unwrap());
        for idx in 0..g.node_count() {
            for &l in spec.node(idx) {
                assert!((l - 1.5).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn axisym_matches_full_backend_on_axisymmetric_data() {
        let nt = 32;
        let gf = s2(nt, 64);
        let ga = build_grid(Geometry::Axisym, 2, nt, 0).unwrap();
        let f = |x: f64| 1.0 + 0.2 * (0.5 * (3.0 * x * x - 1.0)); // l=2 zonal
        let sf = ScalarField::from_fn(gf.clone(), |u| f(u[2]));
        let sa = ScalarField::from_fn(ga.clone(), |u| f(u[2]));
        let spec_f = radii_spectrum(&radii_form(&sf).unwrap());
        let spec_a = radii_spectrum(&radii_form(&sa).unwrap());
        // both geometries use the same midpoint theta nodes
        for i in 0..nt {
            let full = spec_f.node(gf.node_index(i, 0));
            let axi = spec_a.node(i);
            for (a, b) in full.iter().zip(axi) {
                assert!((a - b).abs() < 1e-9, "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ellipsoid_p2_matches_closed_form() {
        // phi = (abc)^2 / s^4 for k = n = 2; validated at two resolutions.
        let (a, b, c) = (1.2f64, 1.0, 0.9);
        let err = |ntheta: usize| {
            let g = s2(ntheta, 2 * ntheta);
            let s = ScalarField::from_fn(g.clone(), |u| {
                (a * a * u[0] * u[0] + b * b * u[1] * u[1] + c * c * u[2] * u[2]).sqrt()
            });
            let spec = radii_spectrum(&radii_form(&s).unwrap());
            let p2 = elem_sym(&spec, 2).unwrap();
            let mut worst = 0.0f64;
            for (idx, &v) in p2.values.iter().enumerate() {
                let exact = (a * b * c).powi(2) / s.values[idx].powi(4);
                worst = worst.max((v - exact).abs() / exact);
            }
            worst
        };
        let e1 = err(24);
        let e2 = err(48);
        assert!(e2 < 2e-3, "fine-grid error {e2}");
        assert!(e1 / e2 > 3.5, "convergence ratio {}", e1 / e2);
    }

    #[test]
    fn elem_sym_small_cases() {
        let l = [1.0, 2.0, 3.0];
        assert_eq!(elem_sym_of(&l, 1), 6.0);
        assert_eq!(elem_sym_of(&l, 2), 11.0);
        assert_eq!(elem_sym_of(&l, 3), 6.0);
    }

    #[test]
    fn sphere_pk_binomial() {
        for n in [2usize, 3] {
            let r = 1.7f64;
            let l = vec![r; n];
            for k in 1..=n {
                let expect = binom(n, k) * r.powi(k as i32);
                assert!((elem_sym_of(&l, k) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn curvature_view_identities() {
        let g = s2(8, 16);
        let spec = RadiiSpectrum {
            grid: g.clone(),
            n: 2,
            lambda: [1.0, 2.0]
                .iter()
                .copied()
                .cycle()
                .take(g.node_count() * 2)
                .collect(),
        };
        let cv = curvature_view(&spec, 2).unwrap();
        for idx in 0..g.node_count() {
            assert!((cv.kappa[idx * 2] - 1.0).abs() < 1e-14);
            assert!((cv.kappa[idx * 2 + 1] - 0.5).abs() < 1e-14);
            assert!((cv.h_trace[idx] - 1.5).abs() < 1e-14);
            assert!((cv.f_speed[idx] - (1.0f64 * 2.0).powf(-0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn curvature_view_rejects_nonconvex() {
        let g = s2(8, 16);
        let mut lambda = vec![1.0; g.node_count() * 2];
        lambda[0] = -0.1;
        lambda[1] = 1.0;
        let spec = RadiiSpectrum { grid: g, n: 2, lambda };
        assert!(matches!(
            curvature_view(&spec, 1),
            Err(Error::ConvexityLost(_))
        ));
    }

    #[test]
    fn convexity_margin_examples() {
        let g = s2(16, 32);
        let s = ScalarField::constant(g.clone(), 2.0);
        assert!((convexity_margin(&s).unwrap() - 2.0).abs() < 1e-10);

        // point body: margin 0 up to round-off of the exact stencils
        let p = ScalarField::from_fn(g, |u| 0.3 * u[0] + 0.1 * u[2]);
        assert!(convexity_margin(&p).unwrap().abs() < 1e-10);
    }

    #[test]
    fn conserved_equals_quermassintegral_scaling() {
        // integral of s p_n over a ball of radius R: |S^n| C(n,n) R^{n+1}
        let g = build_grid(Geometry::Axisym, 3, 24, 0).unwrap();
        let r = 1.3f64;
        let s = ScalarField::constant(g.clone(), r);
        let spec = radii_spectrum(&radii_form(&s).unwrap());
        let p3 = elem_sym(&spec, 3).unwrap();
        let total: f64 = s
            .values
            .iter()
            .zip(&p3.values)
            .zip(&g.weights)
            .map(|((s, p), w)| s * p * w)
            .sum();
        let expect = sphere_area(3) * r.powi(4);
        assert!((total - expect).abs() < 1e-9 * expect);
    }

    proptest! {
        #[test]
        fn newton_maclaurin_chain(l1 in 0.1f64..5.0, l2 in 0.1f64..5.0, l3 in 0.1f64..5.0) {
            let l = [l1, l2, l3];
            let n = 3usize;
            let mut prev = f64::INFINITY;
            for k in 1..=n {
                let v = (elem_sym_of(&l, k) / binom(n, k)).powf(1.0 / k as f64);
                prop_assert!(v <= prev * (1.0 + 1e-12));
                prev = v;
            }
        }

        #[test]
        fn homogeneity_of_elem_sym(l1 in 0.1f64..5.0, l2 in 0.1f64..5.0, c in 0.2f64..3.0) {
            let l = [l1, l2];
            let lc = [c * l1, c * l2];
            for k in 1..=2usize {
                let lhs = elem_sym_of(&lc, k);
                let rhs = c.powi(k as i32) * elem_sym_of(&l, k);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn kappa_lambda_duality(l1 in 0.1f64..5.0, l2 in 0.1f64..5.0, l3 in 0.1f64..5.0) {
            // p_k(lambda) = sigma_{n-k}(kappa)/sigma_n(kappa)
            let l = [l1, l2, l3];
            let kap = [1.0 / l1, 1.0 / l2, 1.0 / l3];
            for k in 1..=3usize {
                let lhs = elem_sym_of(&l, k);
                let rhs = elem_sym_of(&kap, 3 - k) / elem_sym_of(&kap, 3);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn scaled_support_function_scales_pk() {
        let g = s2(16, 32);
        let c = 1.7f64;
        let s = ScalarField::from_fn(g.clone(), |u| 1.0 + 0.1 * u[2] * u[2]);
        let sc = ScalarField::new(g.clone(), s.values.iter().map(|v| c * v).collect()).unwrap();
        for k in 1..=2usize {
            let p = elem_sym(&radii_spectrum(&radii_form(&s).unwrap()), k).unwrap();
            let pc = elem_sym(&radii_spectrum(&radii_form(&sc).unwrap()), k).unwrap();
            for (a, b) in pc.values.iter().zip(&p.values) {
                assert!((a - c.powi(k as i32) * b).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sphere_curvature_view() {
        let g = s2(8, 16);
        let r = 2.0f64;
        let s = ScalarField::constant(g.clone(), r);
        let spec = radii_spectrum(&radii_form(&s).unwrap());
        let cv = curvature_view(&spec, 1).unwrap();
        for idx in 0..g.node_count() {
            assert!((cv.h_trace[idx] - 2.0 / r).abs() < 1e-10);
            assert!((cv.f_speed[idx] - 1.0 / (2.0 * r)).abs() < 1e-10);
        }
        let _ = PI; // silence unused in some cfg combinations
    }
}
