use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{Channel, PathLossFit};
use crate::error::{Error, Result};
use crate::geometry::{LinkMode, Node, NodeId, NodeLayout, Point, VoxelGrid};
use crate::harness::PipelineConfig;
use crate::measurement_model::MeasurementModelParams;
use crate::simulator::{perimeter_layout, FadeOffsets, ScenarioSpec, Trajectory};
use crate::spatial_model::EllipseModelParams;

use super::{load_with, text, with_path, write_bytes};

/// Upper bound on generated or listed scenario nodes.
pub const MAX_SCENARIO_NODES: usize = 10_000;

fn from_toml<T: DeserializeOwned>(src: &str) -> Result<T> {
    toml::from_str(src).map_err(|e| {
        let line = e.span().map_or(0, |s| src[..s.start.min(src.len())].matches('\n').count() + 1);
        Error::parse(line, e.message().trim().to_string())
    })
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::param("toml", e.to_string()))
}

pub fn parse_ellipse_params(src: &str) -> Result<EllipseModelParams> {
    let p: EllipseModelParams = from_toml(src)?;
    p.validate()?;
    Ok(p)
}

pub fn format_ellipse_params(p: &EllipseModelParams) -> Result<String> {
    to_toml(p)
}

pub fn parse_measurement_params(src: &str) -> Result<MeasurementModelParams> {
    let p: MeasurementModelParams = from_toml(src)?;
    p.validate()?;
    Ok(p)
}

pub fn format_measurement_params(p: &MeasurementModelParams) -> Result<String> {
    to_toml(p)
}

/// Pipeline configuration: top-level pipeline keys plus optional
/// `[calibration]`, `[ellipse]`, `[measurement]`, `[reconstruction]`,
/// `[kalman]` and `[grid]` tables.
pub fn parse_config(src: &str) -> Result<PipelineConfig> {
    let config: PipelineConfig = from_toml(src)?;
    if let Some(g) = config.grid {
        VoxelGrid::new(g.origin, g.voxel_width, g.nx, g.ny)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn format_config(config: &PipelineConfig) -> Result<String> {
    to_toml(config)
}

fn default_calibration_frames() -> usize {
    100
}
fn default_noise_sigma() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_sign_slope() -> f64 {
    0.5
}
fn default_path_loss() -> PathLossFit {
    PathLossFit { eta: 2.0, p0: 40.0, d0: 1.0 }
}
fn default_fade_std() -> f64 {
    5.0
}
fn zero() -> f64 {
    0.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    seed: u64,
    channels: Vec<Channel>,
    #[serde(default = "default_calibration_frames")]
    calibration_frames: usize,
    #[serde(default = "default_noise_sigma")]
    noise_sigma: f64,
    #[serde(default = "default_true")]
    quantize: bool,
    #[serde(default)]
    drop_probability: f64,
    #[serde(default = "default_sign_slope")]
    sign_slope: f64,
    #[serde(default)]
    links: LinkMode,
    #[serde(default = "default_path_loss")]
    path_loss: PathLossFit,
    layout: LayoutSection,
    #[serde(default)]
    fade_offsets: FadeSection,
    #[serde(default)]
    trajectory: TrajectorySection,
    #[serde(default)]
    ellipse: EllipseModelParams,
    #[serde(default)]
    measurement: MeasurementModelParams,
}

/// Exactly one of the three sources.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perimeter: Option<Perimeter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<(NodeId, f64, f64)>>,
    /// Layout file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Perimeter {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    width: f64,
    height: f64,
    nodes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum FadeSection {
    Gaussian {
        #[serde(default = "zero")]
        mean: f64,
        #[serde(default = "default_fade_std")]
        std: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        values: Vec<(NodeId, NodeId, Channel, f64)>,
    },
}

impl Default for FadeSection {
    fn default() -> Self {
        FadeSection::Gaussian { mean: 0.0, std: default_fade_std(), seed: 0 }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum TrajectorySection {
    #[default]
    Empty,
    Stationary {
        x: f64,
        y: f64,
        frames: usize,
    },
    Waypoints {
        points: Vec<(u64, f64, f64)>,
    },
}

fn scenario_layout(section: LayoutSection, base_dir: Option<&Path>) -> Result<NodeLayout> {
    let bad = |m: &str| Err(Error::InvalidScenario(m.into()));
    match (section.perimeter, section.nodes, section.file) {
        (Some(p), None, None) => {
            if p.nodes > MAX_SCENARIO_NODES {
                return bad("too many perimeter nodes");
            }
            perimeter_layout(Point::new(p.x, p.y), p.width, p.height, p.nodes)
        }
        (None, Some(nodes), None) => {
            if nodes.len() > MAX_SCENARIO_NODES {
                return bad("too many nodes");
            }
            NodeLayout::new(nodes.into_iter().map(|(id, x, y)| Node { id, pos: Point::new(x, y) }).collect())
        }
        (None, None, Some(file)) => {
            let Some(dir) = base_dir else {
                return bad("layout.file needs the scenario's directory");
            };
            text::load_layout(dir.join(file))
        }
        _ => bad("[layout] needs exactly one of `perimeter`, `nodes` or `file`"),
    }
}

/// `base_dir` resolves a `layout.file` reference; without it such
/// references are rejected.
pub fn parse_scenario(src: &str, base_dir: Option<&Path>) -> Result<ScenarioSpec> {
    let f: ScenarioFile = from_toml(src)?;
    let layout = scenario_layout(f.layout, base_dir)?;
    let fade_offsets = match f.fade_offsets {
        FadeSection::Gaussian { mean, std, seed } => FadeOffsets::Gaussian { mean, std, seed },
        FadeSection::Explicit { values } => FadeOffsets::Explicit(values),
    };
    let trajectory = match f.trajectory {
        TrajectorySection::Empty => Trajectory::Empty,
        TrajectorySection::Stationary { x, y, frames } => Trajectory::Stationary { position: Point::new(x, y), frames },
        TrajectorySection::Waypoints { points } => {
            Trajectory::Waypoints(points.into_iter().map(|(k, x, y)| (k, Point::new(x, y))).collect())
        }
    };
    Ok(ScenarioSpec {
        layout,
        links: f.links,
        channels: f.channels,
        path_loss: f.path_loss,
        fade_offsets,
        trajectory,
        calibration_frames: f.calibration_frames,
        noise_sigma: f.noise_sigma,
        quantize: f.quantize,
        drop_probability: f.drop_probability,
        sign_slope: f.sign_slope,
        ellipse: f.ellipse,
        measurement: f.measurement,
        seed: f.seed,
    })
}

/// The layout is always written inline as a node list.
pub fn format_scenario(spec: &ScenarioSpec) -> Result<String> {
    let file = ScenarioFile {
        seed: spec.seed,
        channels: spec.channels.clone(),
        calibration_frames: spec.calibration_frames,
        noise_sigma: spec.noise_sigma,
        quantize: spec.quantize,
        drop_probability: spec.drop_probability,
        sign_slope: spec.sign_slope,
        links: spec.links.clone(),
        path_loss: spec.path_loss,
        layout: LayoutSection {
            nodes: Some(spec.layout.nodes().iter().map(|n| (n.id, n.pos.x, n.pos.y)).collect()),
            ..Default::default()
        },
        fade_offsets: match &spec.fade_offsets {
            FadeOffsets::Gaussian { mean, std, seed } => FadeSection::Gaussian { mean: *mean, std: *std, seed: *seed },
            FadeOffsets::Explicit(values) => FadeSection::Explicit { values: values.clone() },
        },
        trajectory: match &spec.trajectory {
            Trajectory::Empty => TrajectorySection::Empty,
            Trajectory::Stationary { position, frames } => {
                TrajectorySection::Stationary { x: position.x, y: position.y, frames: *frames }
            }
            Trajectory::Waypoints(points) => {
                TrajectorySection::Waypoints { points: points.iter().map(|(k, p)| (*k, p.x, p.y)).collect() }
            }
        },
        ellipse: spec.ellipse,
        measurement: spec.measurement,
    };
    to_toml(&file)
}

pub fn load_ellipse_params(path: impl AsRef<Path>) -> Result<EllipseModelParams> {
    load_with(path.as_ref(), parse_ellipse_params)
}

pub fn load_measurement_params(path: impl AsRef<Path>) -> Result<MeasurementModelParams> {
    load_with(path.as_ref(), parse_measurement_params)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    load_with(path.as_ref(), parse_config)
}

pub fn save_config(path: impl AsRef<Path>, config: &PipelineConfig) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_config(config))?)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_with(path, |src| parse_scenario(src, Some(&dir)))
}

pub fn save_scenario(path: impl AsRef<Path>, spec: &ScenarioSpec) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_scenario(spec))?)
}
