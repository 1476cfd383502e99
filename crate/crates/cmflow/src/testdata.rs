//! Closed-form convex bodies, the brute-force forward map, and the
//! degenerate-prescription constructor used as independent oracles in the
//! test suite.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convexity::{convexity_margin, elem_sym, radii_form, radii_spectrum};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Geometry, Grid, ScalarField};

/// Closed-form convex body, given by its support function.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    Sphere { r: f64 },
    TranslatedSphere { r: f64, z: Vec<f64> },
    /// Semi-axes a_1..a_{n+1}; s(u) = sqrt(Σ a_i² u_i²).
    Ellipsoid { semi_axes: Vec<f64> },
    /// s(u) = base + amp · P_ell(u_{n+1}) (zonal Legendre perturbation).
    HarmonicPerturbed { base: f64, ell: usize, amp: f64 },
    /// s(u) = Σ_l coeffs[l] · P_l(u_{n+1}) (axisymmetric profile).
    AxisymProfile { coeffs: Vec<f64> },
}

/// Legendre polynomial P_l(x) by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => {
            let mut pm = 1.0;
            let mut p = x;
            for m in 1..l {
                let mf = m as f64;
                let next = ((2.0 * mf + 1.0) * x * p - mf * pm) / (mf + 1.0);
                pm = p;
                p = next;
            }
            p
        }
    }
}

impl BodySpec {
    /// Closed-form support function value at a unit direction u.
    pub fn support(&self, u: &[f64]) -> f64 {
        match self {
            BodySpec::Sphere { r } => *r,
            BodySpec::TranslatedSphere { r, z } => {
                r + u.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            }
            BodySpec::Ellipsoid { semi_axes } => semi_axes
                .iter()
                .zip(u)
                .map(|(a, c)| a * a * c * c)
                .sum::<f64>()
                .sqrt(),
            BodySpec::HarmonicPerturbed { base, ell, amp } => {
                base + amp * legendre(*ell, u[u.len() - 1])
            }
            BodySpec::AxisymProfile { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(l, c)| c * legendre(l, u[u.len() - 1]))
                .sum(),
        }
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        let dim = grid.n + 1;
        match self {
            BodySpec::Sphere { r } => {
                if *r <= 0.0 {
                    return Err(Error::Config(format!("sphere radius {r} must be positive")));
                }
            }
            BodySpec::TranslatedSphere { r, z } => {
                if *r <= 0.0 {
                    return Err(Error::Config(format!("sphere radius {r} must be positive")));
                }
                if z.len() != dim {
                    return Err(Error::Config(format!(
                        "translation has {} components, expected {dim}",
                        z.len()
                    )));
                }
                if grid.geometry == Geometry::Axisym && z[..grid.n].iter().any(|&c| c != 0.0) {
                    return Err(Error::Config(
                        "axisymmetric grids only support translations along the symmetry axis"
                            .into(),
                    ));
                }
            }
            BodySpec::Ellipsoid { semi_axes } => {
                if semi_axes.len() != dim {
                    return Err(Error::Config(format!(
                        "ellipsoid has {} semi-axes, expected {dim}",
                        semi_axes.len()
                    )));
                }
                if semi_axes.iter().any(|&a| a <= 0.0) {
                    return Err(Error::Config("ellipsoid semi-axes must be positive".into()));
                }
                if grid.geometry == Geometry::Axisym
                    && semi_axes[..grid.n].windows(2).any(|w| w[0] != w[1])
                {
                    return Err(Error::Config(
                        "axisymmetric grids require equal equatorial semi-axes".into(),
                    ));
                }
            }
            BodySpec::HarmonicPerturbed { base, .. } => {
                if *base <= 0.0 {
                    return Err(Error::Config(format!("base radius {base} must be positive")));
                }
            }
            BodySpec::AxisymProfile { coeffs } => {
                if coeffs.is_empty() || coeffs[0] <= 0.0 {
                    return Err(Error::Config(
                        "axisym profile needs a positive mean term".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Samples a body spec on a grid and verifies strict convexity.
pub fn gen_body(spec: &BodySpec, grid: Arc<Grid>) -> Result<ScalarField> {
    spec.validate(&grid)?;
    let s = ScalarField::from_fn(grid, |u| spec.support(u));
    let margin = convexity_margin(&s)?;
    if margin <= 0.0 {
        return Err(Error::ConvexityLost(format!(
            "generated body is not strictly convex (margin {margin:e})"
        )));
    }
    Ok(s)
}

/// Brute-force forward map: φ = p_k(∇̄²s + s ḡ).
pub fn forward_map(s: &ScalarField, k: usize) -> Result<ScalarField> {
    let spec = radii_spectrum(&radii_form(s)?);
    if spec.min_eigenvalue() <= 0.0 {
        return Err(Error::ConvexityLost(format!(
            "forward map input is not strictly convex (margin {:e})",
            spec.min_eigenvalue()
        )));
    }
    elem_sym(&spec, k)
}

/// Largest perturbation amplitude for which a harmonic-perturbed sphere
/// keeps convexity margin ≥ `target_margin`, found by bisection.
pub fn amp_for_margin(
    base: f64,
    ell: usize,
    grid: Arc<Grid>,
    target_margin: f64,
) -> Result<f64> {
    if target_margin <= 0.0 || target_margin >= base {
        return Err(Error::Config(format!(
            "target margin {target_margin} out of range (0, {base})"
        )));
    }
    let margin_at = |amp: f64| -> Result<f64> {
        let spec = BodySpec::HarmonicPerturbed { base, ell, amp };
        let s = ScalarField::from_fn(grid.clone(), |u| spec.support(u));
        convexity_margin(&s)
    };
    // margin(amp) is concave piecewise linear in amp, margin(0) = base.
    let mut lo = 0.0f64;
    let mut hi = base;
    while margin_at(hi)? > target_margin {
        hi *= 2.0;
        if hi > 1e6 * base {
            return Err(Error::NonConvergence(
                "could not bracket the margin target".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if margin_at(mid)? > target_margin {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * base {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A weakly admissible prescription together with its construction data.
#[derive(Debug, Clone)]
pub struct DegeneratePrescription {
    /// φ = f^{-k} with f = 1 + amp·P_4(u_{n+1}), sampled on the target grid.
    pub phi: ScalarField,
    pub amp: f64,
    /// min eig of ∇̄²f + f ḡ measured on the 2× construction grid.
    pub margin: f64,
}

/// Constructs a prescription whose convexity margin (of f = φ^{-1/k})
/// sits in [0, margin_cap], i.e. on the boundary of admissibility.
///
/// The construction runs on a grid at twice the target resolution so that
/// the reported margin is decoupled from the solver grid; the zonal, even
/// profile makes ∫ u φ dω vanish by symmetry.
pub fn degenerate_prescription(
    grid: Arc<Grid>,
    k: usize,
    margin_cap: f64,
) -> Result<DegeneratePrescription> {
    if k >= grid.n {
        return Err(Error::Config(format!(
            "degenerate prescriptions require k < n (got k = {k}, n = {})",
            grid.n
        )));
    }
    let fine = build_grid(
        grid.geometry,
        grid.n,
        2 * grid.ntheta,
        if grid.geometry == Geometry::FullS2 { 2 * grid.nphi } else { 0 },
    )?;
    let margin_at = |amp: f64| -> Result<f64> {
        let f = ScalarField::from_fn(fine.clone(), |u| {
            1.0 + amp * legendre(4, u[u.len() - 1])
        });
        convexity_margin(&f)
    };
    // margin(amp) = min over nodes of (1 + amp·eig) is concave piecewise
    // linear with margin(0) = 1; bisect the root from above.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while margin_at(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NonConvergence(
                "could not bracket the degeneracy point".into(),
            ));
        }
    }
    let mut amp = 0.0;
    let mut margin = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = margin_at(mid)?;
        if m >= 0.0 {
            lo = mid;
            amp = mid;
            margin = m;
            if m <= margin_cap {
                break;
            }
        } else {
            hi = mid;
        }
    }
    if !(0.0..=margin_cap).contains(&margin) {
        return Err(Error::NonConvergence(format!(
            "bisection stalled at margin {margin:e} (cap {margin_cap:e})"
        )));
    }
    let phi = ScalarField::from_fn(grid, |u| {
        (1.0 + amp * legendre(4, u[u.len() - 1])).powi(-(k as i32))
    });
    Ok(DegeneratePrescription { phi, amp, margin })
}
