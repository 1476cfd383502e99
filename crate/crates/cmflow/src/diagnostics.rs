//! Monitored quantities along the flow: conserved integral, weighted mean,
//! γ, residual, curvature pinching, widths and volume.

use serde::{Deserialize, Serialize};

use crate::convexity::{curvature_view, elem_sym, radii_form, radii_spectrum, RadiiSpectrum};
use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// One row of the diagnostics time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mu: f64,
    /// ∫ s p_k dω — invariant along the flow.
    pub conserved: f64,
    /// ∫ s̃ φ dω on the recentered body — nonincreasing along the flow.
    pub weighted_mean: f64,
    pub gamma: f64,
    /// sup |p_k/(γφ) − 1|.
    pub residual_linf: f64,
    /// min over nodes of (κ_min − ε₀ H)/H.
    pub pinch_margin: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub w_minus: f64,
    pub w_plus: f64,
    pub volume: f64,
    pub centroid: Vec<f64>,
}

fn spectrum_of(s: &ScalarField) -> Result<RadiiSpectrum> {
    Ok(radii_spectrum(&radii_form(s)?))
}

/// ∫ s p_k dω (translation invariant, constant along the flow).
pub fn conserved_quantity(s: &ScalarField, k: usize) -> Result<f64> {
    let pk = elem_sym(&spectrum_of(s)?, k)?;
    Ok(s
        .values
        .iter()
        .zip(&pk.values)
        .zip(&s.grid.weights)
        .map(|((a, b), w)| a * b * w)
        .sum())
}

/// ∫ s φ dω; monotone along the flow when evaluated on the recentered body.
pub fn weighted_mean(s: &ScalarField, phi: &ScalarField) -> Result<f64> {
    if !s.same_grid(phi) {
        return Err(Error::GridMismatch {
            expected: s.grid.shape_string(),
            got: phi.grid.shape_string(),
        });
    }
    Ok(s
        .values
        .iter()
        .zip(&phi.values)
        .zip(&s.grid.weights)
        .map(|((a, b), w)| a * b * w)
        .sum())
}

/// γ = ∫ s p_k dω / ∫ s φ dω.
pub fn gamma_value(s: &ScalarField, phi: &ScalarField, k: usize) -> Result<f64> {
    Ok(conserved_quantity(s, k)? / weighted_mean(s, phi)?)
}

/// sup |p_k/(γφ) − 1| with γ from `gamma_value`.
pub fn residual(s: &ScalarField, phi: &ScalarField, k: usize) -> Result<f64> {
    let pk = elem_sym(&spectrum_of(s)?, k)?;
    let gamma = conserved_quantity_with(&pk, s) / weighted_mean(s, phi)?;
    Ok(pk
        .values
        .iter()
        .zip(&phi.values)
        .map(|(p, f)| (p / (gamma * f) - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Same as `conserved_quantity` with p_k already at hand.
pub(crate) fn conserved_quantity_with(pk: &ScalarField, s: &ScalarField) -> f64 {
    s.values
        .iter()
        .zip(&pk.values)
        .zip(&s.grid.weights)
        .map(|((a, b), w)| a * b * w)
        .sum()
}

/// min over nodes of (κ_min − ε₀ H)/H; nonnegative means the pinching cone
/// κ_min ≥ ε₀ H is respected.
pub fn pinching_margin(s: &ScalarField, eps0: f64) -> Result<f64> {
    let spec = spectrum_of(s)?;
    let cv = curvature_view(&spec, 1)?;
    let n = spec.n;
    let mut worst = f64::INFINITY;
    for idx in 0..s.grid.node_count() {
        // λ sorted ascending ⇒ κ = 1/λ descending; κ_min is the last entry.
        let kmin = cv.kappa[idx * n + n - 1];
        let h = cv.h_trace[idx];
        worst = worst.min((kmin - eps0 * h) / h);
    }
    Ok(worst)
}

/// Extreme principal curvatures over all nodes: (κ_min, κ_max).
pub fn curvature_range(s: &ScalarField) -> Result<(f64, f64)> {
    let spec = spectrum_of(s)?;
    let cv = curvature_view(&spec, 1)?;
    let kmin = cv.kappa.iter().cloned().fold(f64::INFINITY, f64::min);
    let kmax = cv.kappa.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((kmin, kmax))
}

/// Pinching constant ε₀ from the initial body and f = φ^{−1/k}:
/// ε₀ = min(0.99·min(κ_min/H at t = 0), 0.9·α/(n(1 + β/min f))) with
/// α = 1 + min(min-eig ∇̄²f / f) and β = max(1e−12, max max-eig ∇̄²f).
pub fn epsilon0_recipe(s0: &ScalarField, f: &ScalarField) -> Result<f64> {
    if !s0.same_grid(f) {
        return Err(Error::GridMismatch {
            expected: s0.grid.shape_string(),
            got: f.grid.shape_string(),
        });
    }
    let n = s0.grid.n as f64;

    // eig(∇̄²f) relative to ḡ equals eig(∇̄²f + f ḡ) − f.
    let fspec = spectrum_of(f)?;
    let nn = f.grid.node_count();
    let mut alpha = f64::INFINITY;
    let mut beta = 1e-12f64;
    let mut admissible_margin = f64::INFINITY;
    for idx in 0..nn {
        let ls = fspec.node(idx);
        let fv = f.values[idx];
        admissible_margin = admissible_margin.min(ls[0]);
        alpha = alpha.min(1.0 + (ls[0] - fv) / fv);
        beta = beta.max(ls[ls.len() - 1] - fv);
    }
    if admissible_margin <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "prescription is not strictly admissible (margin {admissible_margin:e})"
        )));
    }

    let spec0 = spectrum_of(s0)?;
    let cv0 = curvature_view(&spec0, 1)?;
    let dim = spec0.n;
    let mut pinch0 = f64::INFINITY;
    for idx in 0..nn {
        pinch0 = pinch0.min(cv0.kappa[idx * dim + dim - 1] / cv0.h_trace[idx]);
    }

    let fmin = f.min();
    Ok((0.99 * pinch0).min(0.9 * alpha / (n * (1.0 + beta / fmin))))
}

/// Body widths (w₋, w₊) from s(u) + s(−u); the antipode is an exact node
/// mapping on these grids, so no interpolation is involved.
pub fn widths(s: &ScalarField) -> (f64, f64) {
    let g = &s.grid;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for idx in 0..g.node_count() {
        let w = s.values[idx] + s.values[g.antipode(idx)];
        lo = lo.min(w);
        hi = hi.max(w);
    }
    (lo, hi)
}

/// V = (1/(n+1)) ∫ s p_n dω.
pub fn volume(s: &ScalarField) -> Result<f64> {
    let n = s.grid.n;
    Ok(conserved_quantity(s, n)? / (n as f64 + 1.0))
}
