//! JSON run configuration with closed-form selectors for the potential,
//! the initial state, the targets and the source.
//!
//! ```json
//! {
//!   "problem": {
//!     "n_x": 40, "horizon": 10.0, "n_t": 200,
//!     "alpha1": -0.003, "alpha2": 0.0,
//!     "bounds": { "lower": 0.0, "upper": 1.0 },
//!     "b2": { "kind": "bump", "amplitude": 16.0 },
//!     "psi0": { "kind": "ground_state" },
//!     "psi_d": { "kind": "reference", "control": 0.5, "phase": 0.8 },
//!     "psi_dt": { "kind": "reference", "control": 0.5, "phase": 0.8 }
//!   },
//!   "solver": { "grad_tol": 1e-6 },
//!   "analysis": { "n_probes": 100 }
//! }
//! ```
//!
//! Unknown keys are rejected everywhere. The free-form `notes` list is kept
//! for annotations.

use std::path::Path;

use num_complex::Complex;

use crate::analysis::AnalysisOptions;
use crate::dynamics::{propagate_forward, Control, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::field::{dirichlet_mode, ComplexField, Potential, SpatialGrid};
use crate::optimizer::SolverOptions;
use crate::problem::{Bounds, ProblemSpec, SourceTerm, TargetTerm};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub notes: Vec<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverOptions<f64>,
    #[serde(default)]
    pub analysis: AnalysisOptions<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    pub n_x: usize,
    pub horizon: f64,
    pub n_t: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub bounds: Bounds<f64>,
    pub b2: PotentialConfig,
    pub psi0: FieldConfig,
    pub psi_d: FieldConfig,
    pub psi_dt: FieldConfig,
    /// Static source `f`; absent means `f = 0`.
    #[serde(default)]
    pub source: Option<FieldConfig>,
}

fn default_domain() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// Number of multistart runs in `solve`.
    pub n_starts: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            n_starts: 1,
        }
    }
}

/// Potential `b2` on the domain, with `s = (x - x_lo) / L`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero {},
    /// `a s^2 (1 - s)^2`; vanishes with its derivative at the boundary.
    Bump { amplitude: f64 },
    /// `a sin(pi s)`; its derivative does not vanish at the boundary.
    Sine { amplitude: f64 },
    /// Interior-node samples; derivatives by central differences.
    Samples { values: Vec<f64> },
}

/// Complex field on the grid. `Reference` is only meaningful for the
/// targets: `e^{i phase}` times the state driven by the constant control.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Zero {},
    /// Normalized first Dirichlet mode times `e^{i phase}`.
    GroundState {
        #[serde(default)]
        phase: f64,
    },
    /// Normalized `k`-th Dirichlet mode times `e^{i phase}`.
    Mode {
        k: usize,
        #[serde(default)]
        phase: f64,
    },
    /// Normalized `exp(-(x - center)^2 / (2 width^2) + i wavenumber x)`.
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default)]
        wavenumber: f64,
    },
    Samples {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
    Reference { control: f64, phase: f64 },
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.output.n_starts == 0 {
            return Err(config_error("output.n_starts", "must be at least 1"));
        }
        if !(self.analysis.eps_lambda_rel >= 0.0) {
            return Err(config_error("analysis.eps_lambda_rel", "must be nonnegative"));
        }
        if matches!(self.problem.psi0, FieldConfig::Reference { .. }) {
            return Err(config_error("problem.psi0", "`reference` is only valid for targets"));
        }
        if matches!(self.problem.source, Some(FieldConfig::Reference { .. })) {
            return Err(config_error("problem.source", "`reference` is only valid for targets"));
        }
        Ok(())
    }

    /// Configuration with `n_t` multiplied by `factor`. A configured initial
    /// control is repeated accordingly.
    pub fn refined_in_time(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidProblem("refinement factor must be positive".into()));
        }
        let mut out = self.clone();
        out.problem.n_t *= factor;
        if let Some(u0) = &self.solver.initial {
            out.solver.initial = Some(u0.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect());
        }
        Ok(out)
    }

    /// Warnings about admissible but questionable choices.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if matches!(self.problem.b2, PotentialConfig::Sine { .. }) {
            w.push("b2 = sine does not vanish to first order at the boundary".into());
        }
        if self.problem.alpha2 > 0.0 {
            w.push("alpha2 > 0: the Goh transform and the R checks are skipped".into());
        }
        w
    }
}

fn config_error(path: &str, message: &str) -> Error {
    Error::Config {
        path: path.into(),
        line: 0,
        column: 0,
        message: message.into(),
    }
}

impl ProblemConfig {
    pub fn grid(&self) -> Result<SpatialGrid<f64>> {
        SpatialGrid::new(self.domain[0], self.domain[1], self.n_x)
    }

    pub fn potential(&self, grid: SpatialGrid<f64>) -> Result<Potential<f64>> {
        let lo = grid.x_lo();
        let len = grid.x_hi() - lo;
        Ok(match &self.b2 {
            PotentialConfig::Zero {} => Potential::zero(grid),
            &PotentialConfig::Bump { amplitude: a } => Potential::from_fns(
                grid,
                |x| {
                    let s = (x - lo) / len;
                    a * s * s * (1.0 - s) * (1.0 - s)
                },
                |x| {
                    let s = (x - lo) / len;
                    2.0 * a * s * (1.0 - s) * (1.0 - 2.0 * s) / len
                },
                |x| {
                    let s = (x - lo) / len;
                    2.0 * a * (1.0 - 6.0 * s + 6.0 * s * s) / (len * len)
                },
            ),
            &PotentialConfig::Sine { amplitude: a } => {
                let k = std::f64::consts::PI / len;
                Potential::from_fns(
                    grid,
                    |x| a * (k * (x - lo)).sin(),
                    |x| a * k * (k * (x - lo)).cos(),
                    |x| -a * k * k * (k * (x - lo)).sin(),
                )
            }
            PotentialConfig::Samples { values } => Potential::from_samples(grid, values.clone())?,
        })
    }

    fn field(&self, grid: SpatialGrid<f64>, cfg: &FieldConfig, what: &str) -> Result<ComplexField<f64>> {
        let phase = |f: ComplexField<f64>, p: f64| f.scale(Complex::from_polar(1.0, p));
        match cfg {
            FieldConfig::Zero {} => Ok(ComplexField::zeros(grid)),
            &FieldConfig::GroundState { phase: p } => Ok(phase(dirichlet_mode(grid, 1), p)),
            &FieldConfig::Mode { k, phase: p } => {
                if k == 0 {
                    return Err(config_error(what, "mode index starts at 1"));
                }
                Ok(phase(dirichlet_mode(grid, k), p))
            }
            &FieldConfig::Gaussian {
                center,
                width,
                wavenumber,
            } => {
                if !(width > 0.0) {
                    return Err(config_error(what, "gaussian width must be positive"));
                }
                let f = ComplexField::from_fn(grid, |x| {
                    let r = (x - center) / width;
                    Complex::from_polar((-0.5 * r * r).exp(), wavenumber * x)
                });
                let n = f.norm();
                if n == 0.0 {
                    return Err(config_error(what, "gaussian vanishes on the grid"));
                }
                Ok(f.scale_real(1.0 / n))
            }
            FieldConfig::Samples { re, im } => {
                let im = if im.is_empty() { vec![0.0; re.len()] } else { im.clone() };
                if im.len() != re.len() {
                    return Err(config_error(what, "re and im sample counts differ"));
                }
                ComplexField::new(
                    grid,
                    re.iter().zip(&im).map(|(&a, &b)| Complex::new(a, b)).collect(),
                )
                .map_err(|e| config_error(what, &e.to_string()))
            }
            FieldConfig::Reference { .. } => Err(config_error(what, "`reference` is only valid for targets")),
        }
    }

    /// Builds and validates the problem instance.
    pub fn build(&self) -> Result<ProblemSpec<f64>> {
        let grid = self.grid()?;
        let time = TimeGrid::new(self.horizon, self.n_t)?;
        let bounds = Bounds::new(self.bounds.lower, self.bounds.upper)?;
        let potential = self.potential(grid)?;
        let psi0 = self.field(grid, &self.psi0, "problem.psi0")?;
        let source = match &self.source {
            None | Some(FieldConfig::Zero {}) => SourceTerm::Zero,
            Some(f) => SourceTerm::Static(self.field(grid, f, "problem.source")?),
        };
        let mut spec = ProblemSpec {
            grid,
            time,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            bounds,
            potential,
            source,
            psi_d: TargetTerm::Static(ComplexField::zeros(grid)),
            psi_dt: ComplexField::zeros(grid),
            psi0,
        };
        let mut reference: Option<((f64, f64), Trajectory<f64>)> = None;
        let mut reference_for = |control: f64, phase: f64| -> Result<Trajectory<f64>> {
            if let Some((key, traj)) = &reference {
                if *key == (control, phase) {
                    return Ok(traj.clone());
                }
            }
            let traj = propagate_forward(&spec, &Control::constant(control, self.n_t))?;
            let rot = Complex::from_polar(1.0, phase);
            let states = traj.states().iter().map(|s| s.scale(rot)).collect();
            let traj = Trajectory::new(time, states)?;
            reference = Some(((control, phase), traj.clone()));
            Ok(traj)
        };
        let psi_d = match &self.psi_d {
            &FieldConfig::Reference { control, phase } => {
                TargetTerm::Nodes(reference_for(control, phase)?.states().to_vec())
            }
            f => TargetTerm::Static(self.field(grid, f, "problem.psi_d")?),
        };
        let psi_dt = match &self.psi_dt {
            &FieldConfig::Reference { control, phase } => reference_for(control, phase)?.terminal().clone(),
            f => self.field(grid, f, "problem.psi_dt")?,
        };
        spec.psi_d = psi_d;
        spec.psi_dt = psi_dt;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {
            "n_x": 20, "horizon": 1.0, "n_t": 10,
            "alpha1": 0.0, "alpha2": 0.1,
            "bounds": { "lower": -1.0, "upper": 1.0 },
            "b2": { "kind": "zero" },
            "psi0": { "kind": "ground_state" },
            "psi_d": { "kind": "ground_state", "phase": 0.5 },
            "psi_dt": { "kind": "zero" }
        }
    }"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        let spec = cfg.problem.build().unwrap();
        assert_eq!(spec.n_t(), 10);
        assert_eq!(spec.grid.len(), 19);
        assert_eq!(cfg.output.n_starts, 1);
        assert!((spec.psi0.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_key_reports_path() {
        let bad = MINIMAL.replace("\"alpha2\"", "\"alpha_2\"");
        match RunConfig::from_json_str(&bad) {
            Err(Error::Config { path, line, .. }) => {
                assert!(path.contains("problem"), "{path}");
                assert!(line > 0);
            }
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"kind\": \"zero\" }", "\"kind\": \"zero\", \"x\": 1 }");
        assert!(matches!(RunConfig::from_json_str(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        let mut p = cfg.problem.clone();
        p.domain = [-1.0, 2.0];
        p.b2 = PotentialConfig::Bump { amplitude: 16.0 };
        let g = SpatialGrid::new(-1.0, 2.0, 400).unwrap();
        let pot = p.potential(g).unwrap();
        let b = pot.b2();
        let h = g.step();
        for j in 1..b.len() - 1 {
            let d1 = (b[j + 1] - b[j - 1]) / (2.0 * h);
            let d2 = (b[j + 1] - 2.0 * b[j] + b[j - 1]) / (h * h);
            assert!((d1 - pot.grad_b2()[j]).abs() < 1e-3);
            assert!((d2 - pot.lap_b2()[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn reference_target_is_rotated_trajectory() {
        let mut cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        cfg.problem.b2 = PotentialConfig::Bump { amplitude: 16.0 };
        cfg.problem.psi_d = FieldConfig::Reference { control: 0.5, phase: 0.3 };
        cfg.problem.psi_dt = FieldConfig::Reference { control: 0.5, phase: 0.3 };
        let spec = cfg.problem.build().unwrap();
        let traj = propagate_forward(&spec, &Control::constant(0.5, 10)).unwrap();
        let rot = Complex::from_polar(1.0, 0.3);
        for k in 0..=10 {
            assert!((spec.psi_d.at_node(k) - &traj.state(k).scale(rot)).norm() < 1e-15);
        }
        assert!((&spec.psi_dt - &traj.terminal().scale(rot)).norm() < 1e-15);
        cfg.problem.psi0 = FieldConfig::Reference { control: 0.5, phase: 0.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn time_refinement_repeats_initial_control() {
        let mut cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        cfg.solver.initial = Some((0..10).map(|k| k as f64 / 10.0).collect());
        let r = cfg.refined_in_time(2).unwrap();
        assert_eq!(r.problem.n_t, 20);
        let u = r.solver.initial.unwrap();
        assert_eq!(u.len(), 20);
        assert_eq!((u[2], u[3]), (0.1, 0.1));
    }
}
