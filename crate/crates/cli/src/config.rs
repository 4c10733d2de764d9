//! Run configuration, read from a TOML file with five sections.
//!
//! ```toml
//! [geometry]
//! nx = 64
//! ny = 64
//! nz = 1
//! voxel = 1.0
//! beam = "fan"                # or "parallel"
//! views = 60
//! detectors = 96
//! detector_spacing = 2.0
//! source_to_center = 200.0    # fan only
//! source_to_detector = 400.0  # fan only
//!
//! [phantom]
//! preset = "desk"             # or list [[phantom.primitive]] tables
//! background = 0.0
//!
//! [simulation]
//! incident = 1e5
//! seed = 1
//! noise = true
//!
//! [solver]
//! algorithm = "both"          # "am", "wam" or "both"
//! am_iterations = 100
//! wam_iterations = 300
//! levels = 3
//! expansions = [64, 128, 256]
//! threshold = 0.1
//! init = 0.0
//!
//! [output]
//! directory = "runs/default"
//! formats = ["pgm", "raw"]
//! log_every = 1
//! ```
//!
//! A primitive table has `shape = "ellipse"` with `semi_axes = [a, b]`, or
//! `shape = "rectangle"` with `half_extents = [a, b]`, plus `center`,
//! optional `rotation` (radians) and `value`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wamct::{
    ExpansionSchedule, ImageGrid, IncidentCounts, PhantomSpec, Primitive, ScanGeometry, Shape,
    SimulationSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub phantom: PhantomConfig,
    pub simulation: SimulationConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamKind {
    Fan,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub nz: usize,
    pub voxel: f64,
    pub beam: BeamKind,
    pub views: usize,
    pub detectors: usize,
    pub detector_spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_to_center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_to_detector: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomPreset {
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveConfig {
    pub shape: ShapeKind,
    pub center: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extents: Option<[f64; 2]>,
    #[serde(default)]
    pub rotation: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PhantomPreset>,
    #[serde(default)]
    pub background: f64,
    #[serde(default, rename = "primitive", skip_serializing_if = "Vec::is_empty")]
    pub primitives: Vec<PrimitiveConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub incident: f64,
    pub seed: u64,
    #[serde(default = "yes")]
    pub noise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Am,
    Wam,
    Both,
}

impl Algorithm {
    pub fn runs_am(self) -> bool {
        matches!(self, Algorithm::Am | Algorithm::Both)
    }

    pub fn runs_wam(self) -> bool {
        matches!(self, Algorithm::Wam | Algorithm::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    #[serde(default = "am_iterations")]
    pub am_iterations: usize,
    #[serde(default = "wam_iterations")]
    pub wam_iterations: usize,
    #[serde(default = "levels")]
    pub levels: usize,
    #[serde(default = "expansions")]
    pub expansions: Vec<usize>,
    #[serde(default = "threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub init: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_cache: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Pgm,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "formats")]
    pub formats: Vec<ImageFormat>,
    #[serde(default = "one")]
    pub log_every: usize,
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn am_iterations() -> usize {
    100
}
fn wam_iterations() -> usize {
    300
}
fn levels() -> usize {
    3
}
fn expansions() -> Vec<usize> {
    ExpansionSchedule::default().at
}
fn threshold() -> f64 {
    ExpansionSchedule::default().threshold_factor
}
fn formats() -> Vec<ImageFormat> {
    vec![ImageFormat::Pgm, ImageFormat::Raw]
}

impl Default for RunConfig {
    /// 64x64 fan-beam comparison of both solvers on the desk phantom.
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig {
                nx: 64,
                ny: 64,
                nz: 1,
                voxel: 1.0,
                beam: BeamKind::Fan,
                views: 60,
                detectors: 96,
                detector_spacing: 2.0,
                source_to_center: Some(200.0),
                source_to_detector: Some(400.0),
            },
            phantom: PhantomConfig {
                preset: Some(PhantomPreset::Desk),
                background: 0.0,
                primitives: Vec::new(),
            },
            simulation: SimulationConfig {
                incident: 1e5,
                seed: 1,
                noise: true,
            },
            solver: SolverConfig {
                algorithm: Algorithm::Both,
                am_iterations: am_iterations(),
                wam_iterations: wam_iterations(),
                levels: levels(),
                expansions: expansions(),
                threshold: threshold(),
                init: 0.0,
                column_cache: None,
            },
            output: OutputConfig {
                directory: PathBuf::from("runs/default"),
                formats: formats(),
                log_every: 1,
            },
        }
    }
}

impl RunConfig {
    /// Parse and validate. Syntax errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.nx == 0 || g.ny == 0 || g.nz == 0 {
            bail!("geometry.nx, geometry.ny and geometry.nz must be positive");
        }
        if !positive(g.voxel) {
            bail!("geometry.voxel must be positive and finite");
        }
        if g.views == 0 {
            bail!("geometry.views must be positive");
        }
        if g.detectors == 0 {
            bail!("geometry.detectors must be positive");
        }
        if !positive(g.detector_spacing) {
            bail!("geometry.detector_spacing must be positive");
        }
        if g.beam == BeamKind::Fan
            && (g.source_to_center.is_none() || g.source_to_detector.is_none())
        {
            bail!("geometry.source_to_center and geometry.source_to_detector are required for a fan beam");
        }
        let p = &self.phantom;
        if p.preset.is_some() && !p.primitives.is_empty() {
            bail!("phantom.preset and phantom.primitive are mutually exclusive");
        }
        for (k, prim) in p.primitives.iter().enumerate() {
            let axes = match prim.shape {
                ShapeKind::Ellipse => prim.semi_axes.map(|a| ("semi_axes", a)),
                ShapeKind::Rectangle => prim.half_extents.map(|a| ("half_extents", a)),
            };
            match axes {
                None => bail!(
                    "phantom.primitive[{k}] is missing its extent (semi_axes or half_extents)"
                ),
                Some((key, [a, b])) if !(positive(a) && positive(b)) => {
                    bail!("phantom.primitive[{k}].{key} must be positive")
                }
                _ => {}
            }
        }
        if !positive(self.simulation.incident) {
            bail!("simulation.incident must be positive and finite");
        }
        let s = &self.solver;
        if s.algorithm.runs_am() && s.am_iterations == 0 {
            bail!("solver.am_iterations must be at least 1");
        }
        if s.algorithm.runs_wam() && s.wam_iterations == 0 {
            bail!("solver.wam_iterations must be at least 1");
        }
        if s.expansions.contains(&0) {
            bail!("solver.expansions entries must be positive");
        }
        if s.threshold.is_nan() || s.threshold < 0.0 {
            bail!("solver.threshold must be non-negative");
        }
        if !s.init.is_finite() {
            bail!("solver.init must be finite");
        }
        if self.solver.algorithm.runs_wam() {
            let block = 1usize << s.levels;
            if !g.nx.is_multiple_of(block) || !g.ny.is_multiple_of(block) {
                bail!(
                    "solver.levels = {} needs geometry.nx and geometry.ny divisible by {block}",
                    s.levels
                );
            }
        }
        if self.output.log_every == 0 {
            bail!("output.log_every must be at least 1");
        }
        self.scan_geometry()?;
        Ok(())
    }

    pub fn scan_geometry(&self) -> Result<ScanGeometry> {
        let g = &self.geometry;
        let grid = ImageGrid::new(g.nx, g.ny, g.nz, g.voxel);
        let geometry = match g.beam {
            BeamKind::Parallel => {
                ScanGeometry::parallel(grid, g.views, g.detectors, g.detector_spacing)
            }
            BeamKind::Fan => ScanGeometry::fan(
                grid,
                g.views,
                g.detectors,
                g.detector_spacing,
                g.source_to_center.unwrap_or_default(),
                g.source_to_detector.unwrap_or_default(),
            ),
        };
        geometry.validate().context("geometry")?;
        Ok(geometry)
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        if let Some(PhantomPreset::Desk) = self.phantom.preset {
            let mut spec = PhantomSpec::default_desk();
            spec.background = self.phantom.background;
            return spec;
        }
        let primitives = self
            .phantom
            .primitives
            .iter()
            .map(|p| {
                let center = (p.center[0], p.center[1]);
                let shape = match p.shape {
                    ShapeKind::Ellipse => {
                        let [a, b] = p.semi_axes.unwrap_or_default();
                        Shape::Ellipse {
                            center,
                            semi_axes: (a, b),
                            rotation: p.rotation,
                        }
                    }
                    ShapeKind::Rectangle => {
                        let [a, b] = p.half_extents.unwrap_or_default();
                        Shape::Rectangle {
                            center,
                            half_extents: (a, b),
                            rotation: p.rotation,
                        }
                    }
                };
                Primitive {
                    shape,
                    value: p.value,
                }
            })
            .collect();
        PhantomSpec {
            background: self.phantom.background,
            primitives,
        }
    }

    pub fn simulation_spec(&self) -> SimulationSpec {
        SimulationSpec {
            incident: IncidentCounts::Uniform(self.simulation.incident),
            seed: self.simulation.seed,
            noise: self.simulation.noise,
        }
    }

    pub fn schedule(&self) -> ExpansionSchedule {
        ExpansionSchedule {
            at: self.solver.expansions.clone(),
            threshold_factor: self.solver.threshold,
        }
    }
}
