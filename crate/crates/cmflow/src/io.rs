//! Artifacts of a run: diagnostics CSV, restartable snapshots, mesh export.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convexity::convexity_margin;
use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grid::{build_grid, Geometry, Grid, ScalarField};

/// Formats a float with 17 significant digits (lossless round-trip).
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV header for dimension n.
pub fn diagnostics_header(n: usize) -> String {
    let mut h = String::from(
        "t,mu,conserved,weighted_mean,gamma,residual_linf,pinch_margin,kappa_min,kappa_max,w_minus,w_plus,volume",
    );
    for c in 1..=n + 1 {
        h.push_str(&format!(",centroid_{c}"));
    }
    h
}

/// Writes the diagnostics time series as CSV with full double precision.
pub fn write_diagnostics(series: &[DiagnosticsRecord], n: usize, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&diagnostics_header(n));
    out.push('\n');
    for r in series {
        let mut cols = vec![
            fmt17(r.t),
            fmt17(r.mu),
            fmt17(r.conserved),
            fmt17(r.weighted_mean),
            fmt17(r.gamma),
            fmt17(r.residual_linf),
            fmt17(r.pinch_margin),
            fmt17(r.kappa_min),
            fmt17(r.kappa_max),
            fmt17(r.w_minus),
            fmt17(r.w_plus),
            fmt17(r.volume),
        ];
        for c in 0..=n {
            cols.push(fmt17(*r.centroid.get(c).unwrap_or(&0.0)));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a diagnostics CSV produced by `write_diagnostics`.
pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty diagnostics file".into()))?;
    let ncols = header.split(',').count();
    if ncols < 13 {
        return Err(Error::Parse(format!("diagnostics header has {ncols} columns")));
    }
    let n = ncols - 12 - 1;
    let mut series = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != ncols {
            return Err(Error::Parse(format!(
                "line {}: {} columns, expected {ncols}",
                lineno + 2,
                vals.len()
            )));
        }
        series.push(DiagnosticsRecord {
            t: vals[0],
            mu: vals[1],
            conserved: vals[2],
            weighted_mean: vals[3],
            gamma: vals[4],
            residual_linf: vals[5],
            pinch_margin: vals[6],
            kappa_min: vals[7],
            kappa_max: vals[8],
            w_minus: vals[9],
            w_plus: vals[10],
            volume: vals[11],
            centroid: vals[12..12 + n + 1].to_vec(),
        });
    }
    Ok(series)
}

/// Self-describing snapshot document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    version: u32,
    geometry: Geometry,
    n: usize,
    k: usize,
    ntheta: usize,
    nphi: usize,
    t: f64,
    step_index: u64,
    last_mu: f64,
    /// Step size in force when saved; enables bit-exact resume.
    dt: Option<f64>,
    /// Support function values in node order.
    s: Vec<f64>,
}

const SNAPSHOT_VERSION: u32 = 1;

/// A loaded snapshot: the flow state plus the saved step size.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: FlowState,
    pub dt: Option<f64>,
}

/// Saves a flow state (and optionally the current step size) as JSON.
pub fn write_snapshot(state: &FlowState, dt: Option<f64>, path: &Path) -> Result<()> {
    let grid = &state.s.grid;
    let doc = SnapshotDoc {
        version: SNAPSHOT_VERSION,
        geometry: grid.geometry,
        n: grid.n,
        k: state.k,
        ntheta: grid.ntheta,
        nphi: grid.nphi,
        t: state.t,
        step_index: state.step_index,
        last_mu: state.last_mu,
        dt,
        s: state.s.values.clone(),
    };
    let mut f = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Parse(format!("snapshot encode: {e}")))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Loads a snapshot, rebuilding its grid from the stored parameters.
pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let text = std::fs::read_to_string(path)?;
    let doc: SnapshotDoc = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if doc.version != SNAPSHOT_VERSION {
        return Err(Error::SnapshotMismatch(format!(
            "version {} (supported: {SNAPSHOT_VERSION})",
            doc.version
        )));
    }
    let grid = build_grid(doc.geometry, doc.n, doc.ntheta, doc.nphi)?;
    if doc.s.len() != grid.node_count() {
        return Err(Error::SnapshotMismatch(format!(
            "{} values for a grid with {} nodes",
            doc.s.len(),
            grid.node_count()
        )));
    }
    Ok(Snapshot {
        state: FlowState {
            s: ScalarField {
                grid,
                values: doc.s,
            },
            t: doc.t,
            step_index: doc.step_index,
            last_mu: doc.last_mu,
            k: doc.k,
            n: doc.n,
        },
        dt: doc.dt,
    })
}

/// Loads a snapshot and checks it lives on `expected` (shape and geometry).
pub fn load_snapshot_on(path: &Path, expected: &Arc<Grid>) -> Result<Snapshot> {
    let snap = load_snapshot(path)?;
    let g = &snap.state.s.grid;
    if !g.same_shape(expected) {
        return Err(Error::SnapshotMismatch(format!(
            "snapshot grid {} differs from configured grid {}",
            g.shape_string(),
            expected.shape_string()
        )));
    }
    Ok(snap)
}

/// Exports the body boundary x(u) = s(u)·u + ∇̄s(u) as a triangulated OBJ
/// mesh: one vertex per grid node plus two pole apices, quads between
/// neighboring (θ, φ) nodes split into triangles, and two pole fans.
pub fn export_mesh(s: &ScalarField, path: &Path) -> Result<()> {
    let grid = s.grid.clone();
    if grid.geometry != Geometry::FullS2 {
        return Err(Error::Config(
            "mesh export requires a full spherical grid".into(),
        ));
    }
    let margin = convexity_margin(s)?;
    if margin <= 0.0 {
        return Err(Error::ConvexityLost(format!(
            "refusing to export a non-convex body (margin {margin:.3e})"
        )));
    }
    let (nt, np) = (grid.ntheta, grid.nphi);
    let d = grid.covariant_gradient(s)?;
    let mut x = vec![0.0; grid.node_count() * 3];
    grid.boundary_points(&s.values, &d, &mut x);

    let mut out = String::with_capacity(64 * (grid.node_count() + 2));
    for idx in 0..grid.node_count() {
        out.push_str(&format!(
            "v {} {} {}\n",
            fmt17(x[idx * 3]),
            fmt17(x[idx * 3 + 1]),
            fmt17(x[idx * 3 + 2])
        ));
    }
    // pole apices: the ring average of the boundary point is an even,
    // smooth function of colatitude, so Richardson extrapolation from the
    // first two rings reaches the pole value to O(h⁴)
    let ring_mean = |i: usize| -> [f64; 3] {
        let mut m = [0.0; 3];
        for j in 0..np {
            let idx = grid.node_index(i, j);
            for c in 0..3 {
                m[c] += x[idx * 3 + c];
            }
        }
        m.map(|v| v / np as f64)
    };
    let extrap = |m0: [f64; 3], m1: [f64; 3], a: f64, b: f64| -> [f64; 3] {
        let den = b * b - a * a;
        [
            (b * b * m0[0] - a * a * m1[0]) / den,
            (b * b * m0[1] - a * a * m1[1]) / den,
            (b * b * m0[2] - a * a * m1[2]) / den,
        ]
    };
    let north = extrap(ring_mean(0), ring_mean(1), grid.theta[0], grid.theta[1]);
    let pi = std::f64::consts::PI;
    let south = extrap(
        ring_mean(nt - 1),
        ring_mean(nt - 2),
        pi - grid.theta[nt - 1],
        pi - grid.theta[nt - 2],
    );
    for apex in [north, south] {
        out.push_str(&format!(
            "v {} {} {}\n",
            fmt17(apex[0]),
            fmt17(apex[1]),
            fmt17(apex[2])
        ));
    }
    let vn = grid.node_count() + 1; // OBJ is 1-indexed
    let vs = grid.node_count() + 2;

    // interior quads, split along one diagonal
    for i in 0..nt - 1 {
        for j in 0..np {
            let jn = (j + 1) % np;
            let a = grid.node_index(i, j) + 1;
            let b = grid.node_index(i, jn) + 1;
            let c = grid.node_index(i + 1, jn) + 1;
            let e = grid.node_index(i + 1, j) + 1;
            out.push_str(&format!("f {a} {b} {c}\n"));
            out.push_str(&format!("f {a} {c} {e}\n"));
        }
    }
    // pole fans
    for j in 0..np {
        let jn = (j + 1) % np;
        let a = grid.node_index(0, j) + 1;
        let b = grid.node_index(0, jn) + 1;
        out.push_str(&format!("f {vn} {b} {a}\n"));
        let c = grid.node_index(nt - 1, j) + 1;
        let e = grid.node_index(nt - 1, jn) + 1;
        out.push_str(&format!("f {vs} {c} {e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
