//! Run configuration: a TOML document with dotted sections, strictly
//! validated (unknown keys rejected, errors name the offending key).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::grid::{build_grid, Geometry, Grid, ScalarField};
use crate::testdata::{forward_map, gen_body, legendre, BodySpec};

/// Complete description of a solver run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    /// Sphere dimension n.
    pub n: usize,
    /// Curvature degree k (1 ≤ k ≤ n).
    pub k: usize,
    pub grid: GridConfig,
    pub prescription: Prescription,
    /// Initial body.
    pub initial: BodySpec,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub recentering: RecenteringConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub ntheta: usize,
    /// Longitude count; ignored for axisymmetric grids (default 0).
    #[serde(default)]
    pub nphi: usize,
}

/// How the prescription φ is specified.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prescription {
    /// φ ≡ value.
    Constant { value: f64 },
    /// φ = p_k of a reference body (guarantees solvability).
    FromBody { body: BodySpec },
    /// Node-ordered samples, one float per line (snapshot node ordering).
    Samples { path: PathBuf },
    /// Zonal harmonic series φ(u) = base + Σ amp_ℓ P_ℓ(u_{n+1}).
    Harmonic { base: f64, terms: Vec<HarmonicTerm> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub ell: usize,
    pub amp: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    /// Initial step size; `None` means the CFL limit is used.
    pub dt0: Option<f64>,
    pub cfl_safety: f64,
    pub t_max: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt0: None,
            cfl_safety: 0.5,
            t_max: 50.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopConfig {
    pub residual_tol: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { residual_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecenteringConfig {
    /// "diagnostic" (track only) or "periodic" (recenter every N steps).
    pub mode: RecenteringMode,
    /// Period N for the periodic mode.
    pub every: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecenteringMode {
    Diagnostic,
    Periodic,
}

impl Default for RecenteringConfig {
    fn default() -> Self {
        RecenteringConfig {
            mode: RecenteringMode::Diagnostic,
            every: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    pub enabled: bool,
    pub tau0: f64,
    pub rho: f64,
    pub delta: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            enabled: false,
            tau0: 0.5,
            rho: 0.5,
            delta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Diagnostics cadence in accepted steps.
    pub every_steps: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            every_steps: 200,
        }
    }
}

impl RunConfig {
    /// Validates cross-field invariants; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::Config(format!(
                "\"k\": must satisfy 1 <= k <= n (got k = {}, n = {})",
                self.k, self.n
            )));
        }
        if self.geometry == Geometry::FullS2 && self.n != 2 {
            return Err(Error::Config(format!(
                "\"geometry\": full_s2 requires n = 2 (got n = {})",
                self.n
            )));
        }
        if let Some(dt0) = self.time.dt0 {
            if dt0 <= 0.0 {
                return Err(Error::Config("\"time.dt0\": must be > 0".into()));
            }
        }
        if self.time.cfl_safety <= 0.0 {
            return Err(Error::Config("\"time.cfl_safety\": must be > 0".into()));
        }
        if self.time.t_max <= 0.0 {
            return Err(Error::Config("\"time.t_max\": must be > 0".into()));
        }
        if self.stop.residual_tol <= 0.0 {
            return Err(Error::Config("\"stop.residual_tol\": must be > 0".into()));
        }
        if self.recentering.mode == RecenteringMode::Periodic
            && self.recentering.every.map_or(true, |n| n == 0)
        {
            return Err(Error::Config(
                "\"recentering.every\": periodic mode needs a period >= 1".into(),
            ));
        }
        if !(0.0 < self.continuation.tau0 && self.continuation.tau0 < 1.0) {
            return Err(Error::Config("\"continuation.tau0\": must lie in (0, 1)".into()));
        }
        if !(0.0 < self.continuation.rho && self.continuation.rho < 1.0) {
            return Err(Error::Config("\"continuation.rho\": must lie in (0, 1)".into()));
        }
        if !(0.0 < self.continuation.delta && self.continuation.delta < 1.0) {
            return Err(Error::Config("\"continuation.delta\": must lie in (0, 1)".into()));
        }
        if self.output.every_steps == 0 {
            return Err(Error::Config("\"output.every_steps\": must be >= 1".into()));
        }
        Ok(())
    }

    /// Builds the grid described by the config.
    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        build_grid(self.geometry, self.n, self.grid.ntheta, self.grid.nphi)
    }

    /// Materializes the prescription on `grid`.
    pub fn build_prescription(&self, grid: Arc<Grid>) -> Result<ScalarField> {
        match &self.prescription {
            Prescription::Constant { value } => {
                if *value <= 0.0 {
                    return Err(Error::Config(
                        "\"prescription.value\": must be > 0".into(),
                    ));
                }
                Ok(ScalarField::constant(grid, *value))
            }
            Prescription::FromBody { body } => {
                let s = gen_body(body, grid)?;
                forward_map(&s, self.k)
            }
            Prescription::Samples { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
                })?;
                let mut values = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    let t = line.trim();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    values.push(t.parse::<f64>().map_err(|e| {
                        Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1))
                    })?);
                }
                if values.len() != grid.node_count() {
                    return Err(Error::Config(format!(
                        "\"prescription.path\": {} samples, grid has {} nodes",
                        values.len(),
                        grid.node_count()
                    )));
                }
                if values.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Config(
                        "\"prescription.path\": all samples must be > 0".into(),
                    ));
                }
                Ok(ScalarField { grid, values })
            }
            Prescription::Harmonic { base, terms } => {
                let terms = terms.clone();
                let base = *base;
                let n = grid.n;
                let phi = ScalarField::from_fn(grid, |u| {
                    base + terms
                        .iter()
                        .map(|t| t.amp * legendre(t.ell, u[n]))
                        .sum::<f64>()
                });
                if phi.min() <= 0.0 {
                    return Err(Error::Config(
                        "\"prescription.terms\": series is not positive".into(),
                    ));
                }
                Ok(phi)
            }
        }
    }

    /// Flow parameters implied by the config.
    pub fn flow_params(&self) -> FlowParams {
        let mut p = FlowParams::new(self.k);
        p.dt_init = self.time.dt0;
        p.cfl_safety = self.time.cfl_safety;
        p.t_max = self.time.t_max;
        p.residual_tol = self.stop.residual_tol;
        p.record_every = self.output.every_steps;
        p.recenter_every = match self.recentering.mode {
            RecenteringMode::Diagnostic => None,
            RecenteringMode::Periodic => self.recentering.every,
        };
        p
    }

    /// Output directory after applying the `CMFLOW_OUTPUT_DIR` override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os("CMFLOW_OUTPUT_DIR") {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }
}

/// Parses and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        geometry = "full_s2"
        n = 2
        k = 1
        [grid]
        ntheta = 16
        nphi = 32
        [prescription]
        kind = "constant"
        value = 2.0
        [initial]
        kind = "sphere"
        r = 1.0
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.time.dt0, None);
        assert_eq!(cfg.stop.residual_tol, 1e-3);
        assert_eq!(cfg.output.every_steps, 200);
        assert_eq!(cfg.recentering.mode, RecenteringMode::Diagnostic);
        assert!(!cfg.continuation.enabled);
        let g = cfg.build_grid().unwrap();
        let phi = cfg.build_prescription(g).unwrap();
        assert_eq!(phi.values[0], 2.0);
    }

    #[test]
    fn invalid_configs_name_the_key() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.k = 3;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("\"k\""), "{err}");

        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.n = 3;
        cfg.k = 2;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("\"geometry\""), "{err}");

        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.stop.residual_tol = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("residual_tol"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[mystery]\nx = 1\n");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }
}
