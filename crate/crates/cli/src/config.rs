//! Run configuration: a JSON file with every field optional, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use hypogeo::stability::{EigenOptions, PoincareOptions};
use hypogeo::{Frame, Grid, NonlinearSystem, NormKind, SolveOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_BOX_RADIUS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in frame name or path to a custom frame JSON file.
    pub frame: String,
    pub grid: GridConfig,
    pub system: SystemConfig,
    pub boundary: BoundaryConfig,
    /// Raw-field sidecar of an existing solution; skips solving.
    pub input: Option<PathBuf>,
    pub solver: SolveOptions,
    pub verify: VerifyConfig,
    pub stability: EigenOptions,
    pub poincare: PoincareConfig,
    pub hamiltonian: HamiltonianConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            frame: "grushin2d".into(),
            grid: GridConfig::default(),
            system: SystemConfig::default(),
            boundary: BoundaryConfig::default(),
            input: None,
            solver: SolveOptions::default(),
            verify: VerifyConfig::default(),
            stability: EigenOptions::default(),
            poincare: PoincareConfig::default(),
            hamiltonian: HamiltonianConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            output: PathBuf::from("hypogeo-out"),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis.
    pub nodes: Vec<usize>,
    /// `lo, hi` per axis; empty means the box around the radius-8 ball of
    /// the frame's homogeneous norm (`[-8, 8] × [-64, 64]` on Grushin).
    #[serde(rename = "box")]
    pub bounds: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nodes: vec![129, 129],
            bounds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// `allen-cahn`, `gradient-coupled`, `zero`.
    pub preset: String,
    pub beta: f64,
    /// System JSON file; overrides the preset.
    pub file: Option<PathBuf>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            preset: "allen-cahn".into(),
            beta: 0.0,
            file: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    /// Discrete one-dimensional solution along `x`, extended constantly.
    Profile,
    /// `tanh(x/√2)` in every component.
    Tanh,
    /// `tanh(x/√2) + amplitude / (1 + |p|²)`.
    Decaying,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub kind: BoundaryKind,
    pub amplitude: f64,
    pub value: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            kind: BoundaryKind::Profile,
            amplitude: 0.5,
            value: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Frames to check; empty means the run's frame.
    pub frames: Vec<String>,
    pub degree: u32,
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            frames: Vec::new(),
            degree: 4,
            samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    /// Cutoff radii; empty picks radii whose cutoff fits the box.
    pub radii: Vec<f64>,
    /// Accepted negative gap, relative to the right side.
    pub rel_tol: f64,
    pub grad_floor: f64,
    /// Largest residual accepted for the solution being tested.
    pub solution_tol: f64,
}

impl PoincareConfig {
    pub fn options(&self) -> PoincareOptions {
        PoincareOptions {
            grad_floor: self.grad_floor,
            solution_tol: self.solution_tol,
        }
    }
}

impl Default for PoincareConfig {
    fn default() -> Self {
        PoincareConfig {
            radii: Vec::new(),
            rel_tol: 1e-5,
            grad_floor: PoincareOptions::default().grad_floor,
            solution_tol: PoincareOptions::default().solution_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianConfig {
    /// Rows `y = const`; empty picks five rows across the middle half.
    pub slices: Vec<f64>,
    /// Accepted drift relative to `max(1, |slice values|)`.
    pub tol: f64,
    /// Also solve on the box doubled about its center (same spacing).
    pub doubling: bool,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        HamiltonianConfig {
            slices: Vec::new(),
            tol: 1e-6,
            doubling: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Ball radii; empty picks radii whose balls fit the box.
    pub radii: Vec<f64>,
    pub levels: Vec<f64>,
    /// Energy shift `a`; empty means 1 in every component.
    pub shift: Vec<f64>,
    pub grad_floor: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            radii: Vec::new(),
            levels: vec![-0.5, 0.0, 0.5],
            shift: Vec::new(),
            grad_floor: hypogeo::calculus::DEFAULT_GRAD_FLOOR,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn frame(&self) -> Result<Frame, CliError> {
        frame_by_name_or_file(&self.frame)
    }

    pub fn system(&self) -> Result<NonlinearSystem, CliError> {
        match &self.system.file {
            Some(path) => {
                require_file(path)?;
                NonlinearSystem::from_json_file(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
            None => NonlinearSystem::preset(&self.system.preset, self.system.beta).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    pub fn grid(&self, frame: &Frame) -> Result<Grid, CliError> {
        let dim = frame.dim();
        let nodes = &self.grid.nodes;
        if nodes.len() != dim {
            return Err(CliError::Config(format!("grid has {} axes, frame needs {dim}", nodes.len())));
        }
        let bounds: Vec<f64> = if self.grid.bounds.is_empty() {
            NormKind::for_frame(frame)
                .ball_extent(DEFAULT_BOX_RADIUS, dim)
                .iter()
                .flat_map(|e| [-e, *e])
                .collect()
        } else {
            self.grid.bounds.clone()
        };
        if bounds.len() != 2 * dim {
            return Err(CliError::Config(format!("box needs {} numbers, got {}", 2 * dim, bounds.len())));
        }
        let lo: Vec<f64> = bounds.iter().step_by(2).copied().collect();
        let hi: Vec<f64> = bounds.iter().skip(1).step_by(2).copied().collect();
        Grid::new(&lo, &hi, nodes).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks referenced files and numeric ranges.
    pub fn validate(&self) -> Result<(), CliError> {
        self.frame()?;
        self.system()?;
        if let Some(p) = &self.input {
            require_file(p)?;
        }
        for name in &self.verify.frames {
            frame_by_name_or_file(name)?;
        }
        let s = &self.solver;
        let positive = [
            ("solver.tol", s.tol),
            ("solver.flow_step", s.flow_step),
            ("solver.min_step", s.min_step),
            ("solver.divergence_factor", s.divergence_factor),
            ("stability.rel_tol", self.stability.rel_tol),
            ("stability.bracket_rel", self.stability.bracket_rel),
            ("poincare.rel_tol", self.poincare.rel_tol),
            ("poincare.solution_tol", self.poincare.solution_tol),
            ("poincare.grad_floor", self.poincare.grad_floor),
            ("hamiltonian.tol", self.hamiltonian.tol),
            ("diagnostics.grad_floor", self.diagnostics.grad_floor),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(CliError::Config(format!("{name} must be positive, got {v}")));
        }
        if s.max_iter == 0 || self.stability.max_iter == 0 {
            return Err(CliError::Config("iteration limits must be positive".into()));
        }
        if self.stability.margin < 0.0 {
            return Err(CliError::Config("stability.margin must be nonnegative".into()));
        }
        if self.verify.samples == 0 {
            return Err(CliError::Config("verify.samples must be positive".into()));
        }
        for (name, list) in [("poincare.radii", &self.poincare.radii), ("diagnostics.radii", &self.diagnostics.radii)] {
            if list.iter().any(|r| !(*r > 0.0)) || list.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CliError::Config(format!("{name} must be positive and increasing")));
            }
        }
        Ok(())
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("file not found: {}", path.display())))
    }
}

pub fn frame_by_name_or_file(name: &str) -> Result<Frame, CliError> {
    if let Ok(f) = Frame::by_name(name) {
        return Ok(f);
    }
    let path = Path::new(name);
    if name.ends_with(".json") || path.is_file() {
        require_file(path)?;
        return Frame::from_json_file(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    Err(CliError::Config(format!("unknown frame '{name}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"grid": {"nodez": [3]}}"#).is_err());
    }

    #[test]
    fn box_and_nodes() {
        let c: RunConfig = serde_json::from_str(r#"{"grid": {"nodes": [5, 9], "box": [0, 1, -2, 2]}}"#).unwrap();
        let g = c.grid(&Frame::grushin2d()).unwrap();
        assert_eq!(g.lo(), &[0.0, -2.0]);
        assert_eq!(g.nodes(), &[5, 9]);
        assert!(c.grid(&Frame::heisenberg3d()).is_err());
        let d = RunConfig::default().grid(&Frame::grushin2d()).unwrap();
        assert_eq!((d.lo(), d.hi()), (&[-8.0, -64.0][..], &[8.0, 64.0][..]));
    }

    #[test]
    fn missing_files_are_config_errors() {
        let c = RunConfig {
            input: Some("does/not/exist.json".into()),
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        assert!(matches!(frame_by_name_or_file("nowhere.json"), Err(CliError::Config(_))));
    }
}
