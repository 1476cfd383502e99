//! Spherical grids with quadrature and covariant differential operators.
//!
//! Two discretizations are supported:
//!
//! * `FullS2` — a full latitude/longitude grid on the 2-sphere. Colatitude
//!   nodes are uniform midpoints `θ_i = (i+1/2)π/nθ` (no nodes at the
//!   poles) with Fejér-type weights that integrate `cos(mθ) sin θ dθ`
//!   exactly for `m < nθ`; longitude is uniform with trapezoidal weights.
//! * `Axisym` — a colatitude profile for rotationally symmetric functions
//!   on `S^n`, same midpoint nodes with weights exact for the measure
//!   `sin^{n-1} θ dθ`.
//!
//! Colatitude stencils are 5-point collocation stencils built on the local
//! basis `{1, cos θ, sin θ, cos 2θ, sin 2θ}` instead of polynomials, and
//! the uniform longitude stencils are rescaled to be exact on
//! `{1, cos φ, sin φ}`. With this choice the discrete bilinear form
//! `∇̄²s + s ḡ` annihilates linear functions `⟨u, z⟩` to round-off, which
//! makes translation equivariance of the flow exact rather than `O(h²)`,
//! and the `cot θ` terms in the covariant Hessian stay accurate at the
//! pole rows, where a 3-point stencil would degrade to first order.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix5, Vector5};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Grid geometry selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Full latitude/longitude grid on S².
    FullS2,
    /// Axisymmetric colatitude profile on S^n.
    Axisym,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::FullS2 => write!(f, "full_s2"),
            Geometry::Axisym => write!(f, "axisym"),
        }
    }
}

/// Total solid angle |S^n|.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        3 => 2.0 * PI * PI,
        4 => 8.0 * PI * PI / 3.0,
        _ => panic!("sphere_area: unsupported dimension {n}"),
    }
}

/// Spherical discretization: nodes, quadrature weights and stencil data.
#[derive(Debug)]
pub struct Grid {
    pub geometry: Geometry,
    /// Sphere dimension n (the flow lives on S^n ⊂ R^{n+1}).
    pub n: usize,
    pub ntheta: usize,
    /// Longitude count; 1 for axisymmetric grids.
    pub nphi: usize,
    /// Colatitude nodes, ascending, strictly inside (0, π).
    pub theta: Vec<f64>,
    /// Longitude nodes (FullS2 only), `phi_j = 2π j / nphi`.
    pub phi: Vec<f64>,
    /// Quadrature weight per node (solid angle).
    pub weights: Vec<f64>,
    sin_t: Vec<f64>,
    cos_t: Vec<f64>,
    /// Per-row 5-point first/second derivative weights in θ.
    st1: Vec<[f64; 5]>,
    st2: Vec<[f64; 5]>,
    /// φ first-derivative side weight: D¹f_j = dp1 (f_{j+1} - f_{j-1}).
    dp1: f64,
    /// φ second-derivative side weight: D²f_j = dp2 (f_{j+1} - 2 f_j + f_{j-1}).
    dp2: f64,
    dphi: f64,
}

/// Samples of a scalar function on a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

/// Per-node covariant derivatives of a scalar in the round metric.
///
/// For `FullS2` the Hessian components are in the (θ, φ) coordinate frame:
/// `(∇̄²s)_θθ = s_θθ`, `(∇̄²s)_θφ = s_θφ − cot θ s_φ`,
/// `(∇̄²s)_φφ = s_φφ + sin θ cos θ s_θ`.
/// For `Axisym` only the θ entries are populated (`grad_theta = s'`,
/// `hess_tt = s''`).
#[derive(Debug, Clone)]
pub struct CovariantDerivatives {
    pub grad_theta: Vec<f64>,
    pub grad_phi: Vec<f64>,
    pub hess_tt: Vec<f64>,
    pub hess_tp: Vec<f64>,
    pub hess_pp: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch {
                expected: format!("{} values", grid.node_count()),
                got: format!("{} values", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite field value {v}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let values = vec![value; grid.node_count()];
        ScalarField { grid, values }
    }

    /// Sample a function of the unit normal u ∈ S^n ⊂ R^{n+1}.
    ///
    /// For axisymmetric grids the closure receives the profile direction
    /// `u = (sin θ, 0, …, 0, cos θ)`.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        let mut u = vec![0.0; grid.n + 1];
        for idx in 0..grid.node_count() {
            grid.unit_normal(idx, &mut u);
            values.push(f(&u));
        }
        ScalarField { grid, values }
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        self.grid.same_shape(&other.grid)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.grid.integrate_values(&self.values) / sphere_area(self.grid.n)
    }
}

/// Builds a grid.
///
/// `FullS2` requires `ntheta >= 4`, `nphi >= 8` even (the half-period shift
/// used for pole continuation and antipodal evaluation must be exact).
/// `Axisym` requires `ntheta >= 4` and `2 <= n <= 4`.
pub fn build_grid(geometry: Geometry, n: usize, ntheta: usize, nphi: usize) -> Result<Arc<Grid>> {
    match geometry {
        Geometry::FullS2 => {
            if n != 2 {
                return Err(Error::Config(format!("FullS2 requires n = 2, got n = {n}")));
            }
            if ntheta < 4 {
                return Err(Error::Config(format!("ntheta = {ntheta} < 4")));
            }
            if nphi < 8 || nphi % 2 != 0 {
                return Err(Error::Config(format!("nphi = {nphi} must be even and >= 8")));
            }
        }
        Geometry::Axisym => {
            if !(2..=4).contains(&n) {
                return Err(Error::Config(format!("Axisym supports 2 <= n <= 4, got {n}")));
            }
            if ntheta < 4 {
                return Err(Error::Config(format!("ntheta = {ntheta} < 4")));
            }
        }
    }

    // Colatitude measure sin^{alpha_n - 1} θ dθ; FullS2 is the n = 2 case.
    let alpha_n = if geometry == Geometry::FullS2 { 2 } else { n };
    let (theta, wtheta) = colatitude_rule(ntheta, alpha_n);

    let (nphi, phi, ring_factor) = match geometry {
        Geometry::FullS2 => {
            let dphi = 2.0 * PI / nphi as f64;
            let phi: Vec<f64> = (0..nphi).map(|j| j as f64 * dphi).collect();
            (nphi, phi, dphi)
        }
        Geometry::Axisym => (1, Vec::new(), sphere_area(n - 1)),
    };

    let mut weights = Vec::with_capacity(ntheta * nphi);
    for wt in &wtheta {
        for _ in 0..nphi {
            weights.push(wt * ring_factor);
        }
    }

    let sin_t: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
    let cos_t: Vec<f64> = theta.iter().map(|t| t.cos()).collect();

    // Trigonometric collocation stencils in θ (5 points, exact on
    // {1, cos θ, sin θ, cos 2θ, sin 2θ}), with pole ghosts at the reflected
    // coordinates -θ_i and 2π - θ_i. The extra order matters at the pole
    // rows, where cot θ amplifies the stencil error by 1/θ.
    let ghost_coord = |r: isize| -> f64 {
        if r < 0 {
            -theta[(-r - 1) as usize]
        } else if (r as usize) < ntheta {
            theta[r as usize]
        } else {
            2.0 * PI - theta[2 * ntheta - 1 - r as usize]
        }
    };
    let mut st1 = Vec::with_capacity(ntheta);
    let mut st2 = Vec::with_capacity(ntheta);
    for i in 0..ntheta {
        let c: Vec<f64> = (-2..=2).map(|o| ghost_coord(i as isize + o)).collect();
        let t = theta[i];
        #[rustfmt::skip]
        let a = Matrix5::new(
            1.0, 1.0, 1.0, 1.0, 1.0,
            c[0].cos(), c[1].cos(), c[2].cos(), c[3].cos(), c[4].cos(),
            c[0].sin(), c[1].sin(), c[2].sin(), c[3].sin(), c[4].sin(),
            (2.0 * c[0]).cos(), (2.0 * c[1]).cos(), (2.0 * c[2]).cos(), (2.0 * c[3]).cos(), (2.0 * c[4]).cos(),
            (2.0 * c[0]).sin(), (2.0 * c[1]).sin(), (2.0 * c[2]).sin(), (2.0 * c[3]).sin(), (2.0 * c[4]).sin(),
        );
        let lu = a.lu();
        let w1 = lu
            .solve(&Vector5::new(
                0.0,
                -t.sin(),
                t.cos(),
                -2.0 * (2.0 * t).sin(),
                2.0 * (2.0 * t).cos(),
            ))
            .ok_or_else(|| Error::Config("degenerate theta stencil".into()))?;
        let w2 = lu
            .solve(&Vector5::new(
                0.0,
                -t.cos(),
                -t.sin(),
                -4.0 * (2.0 * t).cos(),
                -4.0 * (2.0 * t).sin(),
            ))
            .ok_or_else(|| Error::Config("degenerate theta stencil".into()))?;
        st1.push([w1[0], w1[1], w1[2], w1[3], w1[4]]);
        st2.push([w2[0], w2[1], w2[2], w2[3], w2[4]]);
    }

    let dphi = if geometry == Geometry::FullS2 { 2.0 * PI / nphi as f64 } else { 0.0 };
    let (dp1, dp2) = if geometry == Geometry::FullS2 {
        (0.5 / dphi.sin(), 0.5 / (1.0 - dphi.cos()))
    } else {
        (0.0, 0.0)
    };

    Ok(Arc::new(Grid {
        geometry,
        n,
        ntheta,
        nphi,
        theta,
        phi,
        weights,
        sin_t,
        cos_t,
        st1,
        st2,
        dp1,
        dp2,
        dphi,
    }))
}

impl Grid {
    pub fn node_count(&self) -> usize {
        self.ntheta * self.nphi
    }

    pub fn node_index(&self, itheta: usize, iphi: usize) -> usize {
        itheta * self.nphi + iphi
    }

    pub fn sin_theta(&self, itheta: usize) -> f64 {
        self.sin_t[itheta]
    }

    pub fn cos_theta(&self, itheta: usize) -> f64 {
        self.cos_t[itheta]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.geometry == other.geometry
            && self.n == other.n
            && self.ntheta == other.ntheta
            && self.nphi == other.nphi
    }

    pub fn shape_string(&self) -> String {
        format!("{} n={} {}x{}", self.geometry, self.n, self.ntheta, self.nphi)
    }

    /// Unit normal u ∈ R^{n+1} at a node. Axisym uses (sin θ, 0…, cos θ).
    pub fn unit_normal(&self, idx: usize, out: &mut [f64]) {
        let it = idx / self.nphi;
        match self.geometry {
            Geometry::FullS2 => {
                let ip = idx % self.nphi;
                out[0] = self.sin_t[it] * self.phi[ip].cos();
                out[1] = self.sin_t[it] * self.phi[ip].sin();
                out[2] = self.cos_t[it];
            }
            Geometry::Axisym => {
                out[0] = self.sin_t[it];
                for v in out.iter_mut().take(self.n).skip(1) {
                    *v = 0.0;
                }
                out[self.n] = self.cos_t[it];
            }
        }
    }

    /// Node index of the antipodal direction -u. Exact on this grid:
    /// θ → π−θ maps the midpoint node set onto itself and the φ half-period
    /// shift is an integer shift since nphi is even.
    pub fn antipode(&self, idx: usize) -> usize {
        let it = idx / self.nphi;
        let ip = idx % self.nphi;
        let it2 = self.ntheta - 1 - it;
        let ip2 = if self.geometry == Geometry::FullS2 {
            (ip + self.nphi / 2) % self.nphi
        } else {
            0
        };
        self.node_index(it2, ip2)
    }

    pub fn integrate(&self, field: &ScalarField) -> Result<f64> {
        if !self.same_shape(&field.grid) {
            return Err(Error::GridMismatch {
                expected: self.shape_string(),
                got: field.grid.shape_string(),
            });
        }
        Ok(self.integrate_values(&field.values))
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.node_count());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Value at (row, col) with pole continuation: rows below 0 or at/above
    /// ntheta are reflections across the poles (value taken from the φ+π
    /// column). Reflection is exact: the ghost coordinate (-θ, φ) names the
    /// same sphere point as (θ, φ+π).
    #[inline]
    fn value_at(&self, values: &[f64], row: isize, col: usize) -> f64 {
        let (r, c) = if row < 0 {
            ((-row - 1) as usize, self.shift_half(col))
        } else if row as usize >= self.ntheta {
            (2 * self.ntheta - 1 - row as usize, self.shift_half(col))
        } else {
            (row as usize, col)
        };
        values[r * self.nphi + c]
    }

    #[inline]
    fn shift_half(&self, col: usize) -> usize {
        if self.geometry == Geometry::FullS2 {
            (col + self.nphi / 2) % self.nphi
        } else {
            col
        }
    }

    /// First θ-derivative of all nodes.
    pub fn dtheta(&self, values: &[f64], out: &mut [f64]) {
        self.dtheta_stencil(&self.st1, values, out);
    }

    /// Second θ-derivative of all nodes.
    pub fn dtheta2(&self, values: &[f64], out: &mut [f64]) {
        self.dtheta_stencil(&self.st2, values, out);
    }

    fn dtheta_stencil(&self, st: &[[f64; 5]], values: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(self.nphi).enumerate().for_each(|(i, orow)| {
            let w = &st[i];
            if i >= 2 && i + 2 < self.ntheta {
                // interior rows: no ghost lookups
                let base = (i - 2) * self.nphi;
                for (j, o) in orow.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (oi, wo) in w.iter().enumerate() {
                        acc += wo * values[base + oi * self.nphi + j];
                    }
                    *o = acc;
                }
            } else {
                for (j, o) in orow.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (oi, wo) in w.iter().enumerate() {
                        acc += wo * self.value_at(values, i as isize + oi as isize - 2, j);
                    }
                    *o = acc;
                }
            }
        });
    }

    /// First φ-derivative (FullS2); zero for axisym grids.
    pub fn dphi(&self, values: &[f64], out: &mut [f64]) {
        if self.geometry == Geometry::Axisym {
            out.fill(0.0);
            return;
        }
        let np = self.nphi;
        out.par_chunks_mut(np).enumerate().for_each(|(i, oring)| {
            let ring = &values[i * np..(i + 1) * np];
            for (j, o) in oring.iter_mut().enumerate() {
                let jp = (j + 1) % np;
                let jm = (j + np - 1) % np;
                *o = self.dp1 * (ring[jp] - ring[jm]);
            }
        });
    }

    /// Second φ-derivative (FullS2); zero for axisym grids.
    pub fn dphi2(&self, values: &[f64], out: &mut [f64]) {
        if self.geometry == Geometry::Axisym {
            out.fill(0.0);
            return;
        }
        let np = self.nphi;
        out.par_chunks_mut(np).enumerate().for_each(|(i, oring)| {
            let ring = &values[i * np..(i + 1) * np];
            for (j, o) in oring.iter_mut().enumerate() {
                let jp = (j + 1) % np;
                let jm = (j + np - 1) % np;
                *o = self.dp2 * (ring[jp] - 2.0 * ring[j] + ring[jm]);
            }
        });
    }

    /// Gradient part of the covariant derivatives.
    pub fn covariant_gradient(&self, field: &ScalarField) -> Result<CovariantDerivatives> {
        let d = self.covariant_hessian(field)?;
        Ok(d)
    }

    /// Gradient and Hessian of a scalar field in the round metric.
    pub fn covariant_hessian(&self, field: &ScalarField) -> Result<CovariantDerivatives> {
        if !self.same_shape(&field.grid) {
            return Err(Error::GridMismatch {
                expected: self.shape_string(),
                got: field.grid.shape_string(),
            });
        }
        let nn = self.node_count();
        let v = &field.values;
        let mut grad_theta = vec![0.0; nn];
        let mut hess_tt = vec![0.0; nn];
        self.dtheta(v, &mut grad_theta);
        self.dtheta2(v, &mut hess_tt);

        if self.geometry == Geometry::Axisym {
            return Ok(CovariantDerivatives {
                grad_theta,
                grad_phi: Vec::new(),
                hess_tt,
                hess_tp: Vec::new(),
                hess_pp: Vec::new(),
            });
        }

        let mut grad_phi = vec![0.0; nn];
        let mut spp = vec![0.0; nn];
        let mut stp = vec![0.0; nn];
        self.dphi(v, &mut grad_phi);
        self.dphi2(v, &mut spp);
        self.dtheta(&grad_phi, &mut stp);

        let mut hess_tp = vec![0.0; nn];
        let mut hess_pp = vec![0.0; nn];
        for i in 0..self.ntheta {
            let cot = self.cos_t[i] / self.sin_t[i];
            let sc = self.sin_t[i] * self.cos_t[i];
            for j in 0..self.nphi {
                let idx = self.node_index(i, j);
                hess_tp[idx] = stp[idx] - cot * grad_phi[idx];
                hess_pp[idx] = spp[idx] + sc * grad_theta[idx];
            }
        }
        Ok(CovariantDerivatives {
            grad_theta,
            grad_phi,
            hess_tt,
            hess_tp,
            hess_pp,
        })
    }

    /// |∇̄s|²_ḡ per node.
    pub fn grad_norm_sq(&self, d: &CovariantDerivatives) -> Vec<f64> {
        let nn = self.node_count();
        let mut out = vec![0.0; nn];
        for i in 0..self.ntheta {
            for j in 0..self.nphi {
                let idx = self.node_index(i, j);
                let mut g2 = d.grad_theta[idx] * d.grad_theta[idx];
                if self.geometry == Geometry::FullS2 {
                    let gp = d.grad_phi[idx] / self.sin_t[i];
                    g2 += gp * gp;
                }
                out[idx] = g2;
            }
        }
        out
    }

    /// tr_ḡ ∇̄²s per node (Laplace–Beltrami).
    pub fn laplace_beltrami(&self, d: &CovariantDerivatives) -> Vec<f64> {
        let nn = self.node_count();
        let mut out = vec![0.0; nn];
        for i in 0..self.ntheta {
            let s2 = self.sin_t[i] * self.sin_t[i];
            let cot = self.cos_t[i] / self.sin_t[i];
            for j in 0..self.nphi {
                let idx = self.node_index(i, j);
                out[idx] = match self.geometry {
                    Geometry::FullS2 => d.hess_tt[idx] + d.hess_pp[idx] / s2,
                    Geometry::Axisym => {
                        d.hess_tt[idx] + (self.n as f64 - 1.0) * cot * d.grad_theta[idx]
                    }
                };
            }
        }
        out
    }

    /// Embedding point x(u) = s(u)·u + ∇̄s(u) of the boundary, per node.
    /// `out` has n+1 components per node.
    pub fn boundary_points(&self, s: &[f64], d: &CovariantDerivatives, out: &mut [f64]) {
        let dim = self.n + 1;
        match self.geometry {
            Geometry::FullS2 => {
                for i in 0..self.ntheta {
                    let (st, ct) = (self.sin_t[i], self.cos_t[i]);
                    for j in 0..self.nphi {
                        let idx = self.node_index(i, j);
                        let (sp, cp) = (self.phi[j].sin(), self.phi[j].cos());
                        // frame: e_theta, e_phi/sin(theta)
                        let gt = d.grad_theta[idx];
                        let gp = d.grad_phi[idx] / st;
                        let sv = s[idx];
                        out[idx * dim] = sv * st * cp + gt * ct * cp - gp * sp;
                        out[idx * dim + 1] = sv * st * sp + gt * ct * sp + gp * cp;
                        out[idx * dim + 2] = sv * ct - gt * st;
                    }
                }
            }
            Geometry::Axisym => {
                for i in 0..self.ntheta {
                    let (st, ct) = (self.sin_t[i], self.cos_t[i]);
                    let gt = d.grad_theta[i];
                    out[i * dim] = s[i] * st + gt * ct;
                    for c in 1..self.n {
                        out[i * dim + c] = 0.0;
                    }
                    out[i * dim + self.n] = s[i] * ct - gt * st;
                }
            }
        }
    }

    /// Largest absolute row sums of the θ stencils; used for step control.
    pub fn theta_operator_norms(&self) -> (f64, f64) {
        let max_abs = |st: &[[f64; 5]]| {
            st.iter()
                .map(|w| w.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0f64, f64::max)
        };
        (max_abs(&self.st1), max_abs(&self.st2))
    }

    /// Side weight of the 3-point φ second-derivative stencil:
    /// `D²f_j = w (f_{j+1} - 2 f_j + f_{j-1})`. Zero for axisym grids.
    pub fn dphi2_side_weight(&self) -> f64 {
        if self.geometry == Geometry::Axisym {
            0.0
        } else {
            self.dp2
        }
    }

    /// Symbol of the φ second-derivative stencil on azimuthal mode m.
    pub fn dphi2_symbol(&self, m: usize) -> f64 {
        if self.geometry == Geometry::Axisym {
            return 0.0;
        }
        (1.0 - (m as f64 * self.dphi).cos()) / (1.0 - self.dphi.cos())
    }
}

/// Uniform midpoint colatitude rule for the measure `sin^{n-1} θ dθ`.
///
/// Nodes `θ_i = (i + 1/2) π / len`; weights chosen so that `cos(mθ)` is
/// integrated exactly for `m < len` (equivalently, polynomials in `cos θ`
/// up to degree `len - 1`). This is the Fejér first rule generalized to the
/// `sin^{n-1}` measure; the weights are positive and symmetric about the
/// equator, and the uniform spacing keeps the colatitude stencils
/// symmetric at the pole rows.
fn colatitude_rule(len: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = PI / len as f64;
    let theta: Vec<f64> = (0..len).map(|i| (i as f64 + 0.5) * h).collect();
    let mut w = vec![0.0; len];
    for (i, &t) in theta.iter().enumerate() {
        let mut acc = cos_moment(0, n);
        for m in (2..len).step_by(2) {
            let a = cos_moment(m, n);
            if a != 0.0 {
                acc += 2.0 * a * (m as f64 * t).cos();
            }
        }
        w[i] = acc / len as f64;
    }
    (theta, w)
}

/// `∫_0^π cos(mθ) sin^{n-1} θ dθ` in closed form (zero for odd m).
fn cos_moment(m: usize, n: usize) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    let m2 = (m * m) as f64;
    match n {
        2 => 2.0 / (1.0 - m2),
        3 => match m {
            0 => PI / 2.0,
            2 => -PI / 4.0,
            _ => 0.0,
        },
        // sin^3 θ = (3 sin θ - sin 3θ)/4
        4 => (6.0 / (1.0 - m2) - 6.0 / (9.0 - m2)) / 4.0,
        _ => panic!("cos_moment: unsupported dimension {n}"),
    }
}
