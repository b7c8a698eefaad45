//! Synthetic multi-channel RSS traces with ground truth.
//!
//! The forward model is deliberately simple and exists to exercise the
//! pipeline end to end:
//!
//! * the empty-room mean of each (link, channel) is the log-distance
//!   prediction plus a per-pair fade offset;
//! * with a person present, each pair independently picks a direction of
//!   change (attenuation with probability `1 / (1 + exp(-s F))`). If the
//!   person's excess path length is inside that direction's ellipse, the
//!   change magnitude is exponential with the measurement model's rate;
//!   otherwise the change is zero;
//! * zero-mean Gaussian noise is added everywhere, then values are
//!   optionally rounded to whole dB.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::calibration::{Channel, PairKey, PathLossFit, RssFrame};
use crate::error::{Error, Result};
use crate::geometry::{enumerate_links, LinkMode, LinkTable, Node, NodeLayout, Point};
use crate::measurement_model::MeasurementModelParams;
use crate::spatial_model::{lambda_for, Direction, EllipseModelParams};

#[derive(Debug, Clone, PartialEq)]
pub enum FadeOffsets {
    /// Independent Gaussian draws, then made orthogonal to the path-loss
    /// regressors so that a noiseless calibration recovers them exactly.
    Gaussian { mean: f64, std: f64, seed: u64 },
    /// Offsets keyed by `(tx, rx, channel)`; unlisted pairs get 0 dB.
    Explicit(Vec<(u32, u32, Channel, f64)>),
}

impl Default for FadeOffsets {
    fn default() -> Self {
        FadeOffsets::Gaussian { mean: 0.0, std: 5.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// Calibration segment only.
    Empty,
    /// Person standing at one point for `frames` frames after calibration.
    Stationary { position: Point, frames: usize },
    /// Piecewise-linear path through `(k, position)` waypoints; `k` is the
    /// absolute frame index and must start at or after calibration.
    Waypoints(Vec<(u64, Point)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub layout: NodeLayout,
    pub links: LinkMode,
    pub channels: Vec<Channel>,
    pub path_loss: PathLossFit,
    pub fade_offsets: FadeOffsets,
    pub trajectory: Trajectory,
    pub calibration_frames: usize,
    pub noise_sigma: f64,
    pub quantize: bool,
    /// Probability that any single sample is dropped.
    pub drop_probability: f64,
    /// Slope of the attenuation probability in the fade level, 1/dB.
    pub sign_slope: f64,
    pub ellipse: EllipseModelParams,
    pub measurement: MeasurementModelParams,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(layout: NodeLayout, channels: Vec<Channel>) -> Self {
        ScenarioSpec {
            layout,
            links: LinkMode::AllPairs,
            channels,
            path_loss: PathLossFit { eta: 2.0, p0: 40.0, d0: 1.0 },
            fade_offsets: FadeOffsets::default(),
            trajectory: Trajectory::Empty,
            calibration_frames: 100,
            noise_sigma: 0.5,
            quantize: true,
            drop_probability: 0.0,
            sign_slope: 0.5,
            ellipse: EllipseModelParams::default(),
            measurement: MeasurementModelParams::default(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.calibration_frames == 0 {
            return bad("calibration_frames must be >= 1".into());
        }
        if self.channels.is_empty() {
            return bad("no channels".into());
        }
        let mut chans = self.channels.clone();
        chans.sort_unstable();
        chans.dedup();
        if chans.len() != self.channels.len() {
            return bad("duplicate channel".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return bad(format!("drop_probability must be in [0, 1), got {}", self.drop_probability));
        }
        if !self.sign_slope.is_finite() {
            return bad("sign_slope must be finite".into());
        }
        if !(self.path_loss.d0 > 0.0) || !self.path_loss.eta.is_finite() || !self.path_loss.p0.is_finite() {
            return bad("invalid path-loss parameters".into());
        }
        if let FadeOffsets::Gaussian { mean, std, .. } = self.fade_offsets {
            if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
                return bad("fade offset distribution must be finite with std >= 0".into());
            }
        }
        match &self.trajectory {
            Trajectory::Empty => {}
            Trajectory::Stationary { position, .. } => {
                if !position.x.is_finite() || !position.y.is_finite() {
                    return bad("non-finite position".into());
                }
            }
            Trajectory::Waypoints(points) => {
                if points.is_empty() {
                    return bad("empty waypoint list".into());
                }
                if points[0].0 < self.calibration_frames as u64 {
                    return bad("waypoints must start after the calibration segment".into());
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("waypoint times must be strictly increasing".into());
                }
                if points.iter().any(|(_, p)| !p.x.is_finite() || !p.y.is_finite()) {
                    return bad("non-finite waypoint".into());
                }
            }
        }
        self.ellipse.validate()?;
        self.measurement.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub links: LinkTable,
    pub frames: Vec<RssFrame>,
    /// Person position for every frame in which a person is present.
    pub truth: BTreeMap<u64, Point>,
    /// Fade offset used for each (link, channel).
    pub fade_offsets: BTreeMap<PairKey, f64>,
    pub calibration_frames: usize,
}

impl SyntheticTrace {
    pub fn calibration(&self) -> &[RssFrame] {
        &self.frames[..self.calibration_frames]
    }

    pub fn person_frames(&self) -> &[RssFrame] {
        &self.frames[self.calibration_frames..]
    }
}

/// `n` nodes spaced evenly along the perimeter of a `width x height`
/// rectangle with its lower-left corner at `origin`, ids from 1.
pub fn perimeter_layout(origin: Point, width: f64, height: f64, n: usize) -> Result<NodeLayout> {
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::InvalidLayout("perimeter needs positive width and height".into()));
    }
    let perimeter = 2.0 * (width + height);
    let step = perimeter / n as f64;
    let nodes = (0..n)
        .map(|i| {
            let s = i as f64 * step;
            let pos = if s < width {
                Point::new(origin.x + s, origin.y)
            } else if s < width + height {
                Point::new(origin.x + width, origin.y + s - width)
            } else if s < 2.0 * width + height {
                Point::new(origin.x + 2.0 * width + height - s, origin.y + height)
            } else {
                Point::new(origin.x, origin.y + perimeter - s)
            };
            Node { id: i as u32 + 1, pos }
        })
        .collect();
    NodeLayout::new(nodes)
}

fn regressor(d: f64, d0: f64) -> f64 {
    -10.0 * (d / d0).log10()
}

fn gaussian_offsets(
    links: &LinkTable,
    channels: &[Channel],
    d0: f64,
    mean: f64,
    std: f64,
    seed: u64,
) -> BTreeMap<PairKey, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(mean, std).expect("std validated");
    let mut draws: Vec<(PairKey, f64, f64)> = Vec::with_capacity(links.len() * channels.len());
    for (l, link) in links.links().iter().enumerate() {
        for &c in channels {
            draws.push((PairKey::new(l, c), regressor(link.distance, d0), normal.sample(&mut rng)));
        }
    }
    let n = draws.len() as f64;
    let mx = draws.iter().map(|d| d.1).sum::<f64>() / n;
    let mo = draws.iter().map(|d| d.2).sum::<f64>() / n;
    let sxx: f64 = draws.iter().map(|d| (d.1 - mx).powi(2)).sum();
    let sxo: f64 = draws.iter().map(|d| (d.1 - mx) * (d.2 - mo)).sum();
    let slope = if sxx > 1e-12 * n { sxo / sxx } else { 0.0 };
    draws
        .into_iter()
        .map(|(key, x, o)| (key, o - mo - slope * (x - mx)))
        .collect()
}

fn position_at(trajectory: &Trajectory, calibration_frames: u64, k: u64) -> Option<Point> {
    match trajectory {
        Trajectory::Empty => None,
        Trajectory::Stationary { position, frames } => {
            (k >= calibration_frames && k < calibration_frames + *frames as u64).then_some(*position)
        }
        Trajectory::Waypoints(points) => {
            let first = points.first()?;
            if k < first.0 {
                return None;
            }
            let i = points.partition_point(|p| p.0 <= k);
            if i == points.len() {
                let last = points[points.len() - 1];
                return (k == last.0).then_some(last.1);
            }
            let (k0, a) = points[i - 1];
            let (k1, b) = points[i];
            let t = (k - k0) as f64 / (k1 - k0) as f64;
            Some(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
        }
    }
}

fn last_frame(spec: &ScenarioSpec) -> u64 {
    let cal = spec.calibration_frames as u64;
    match &spec.trajectory {
        Trajectory::Empty => cal,
        Trajectory::Stationary { frames, .. } => cal + *frames as u64,
        Trajectory::Waypoints(points) => points[points.len() - 1].0 + 1,
    }
}

pub fn generate_trace(spec: &ScenarioSpec) -> Result<SyntheticTrace> {
    spec.validate()?;
    let links = enumerate_links(&spec.layout, &spec.links)?;
    let mut channels = spec.channels.clone();
    channels.sort_unstable();

    let fade_offsets = match &spec.fade_offsets {
        FadeOffsets::Gaussian { mean, std, seed } => {
            gaussian_offsets(&links, &channels, spec.path_loss.d0, *mean, *std, *seed)
        }
        FadeOffsets::Explicit(list) => {
            let mut map: BTreeMap<PairKey, f64> = (0..links.len())
                .flat_map(|l| channels.iter().map(move |&c| (PairKey::new(l, c), 0.0)))
                .collect();
            for &(tx, rx, c, offset) in list {
                let l = links
                    .find(tx, rx)
                    .ok_or_else(|| Error::InvalidScenario(format!("fade offset for unknown link {tx}-{rx}")))?;
                let slot = map
                    .get_mut(&PairKey::new(l, c))
                    .ok_or_else(|| Error::InvalidScenario(format!("fade offset on unused channel {c}")))?;
                *slot = offset;
            }
            map
        }
    };

    let means: BTreeMap<PairKey, f64> = fade_offsets
        .iter()
        .map(|(&key, &offset)| {
            let d = links.links()[key.link].distance;
            (key, spec.path_loss.predict(d, key.channel) + offset)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let cal = spec.calibration_frames as u64;
    let mut frames = Vec::new();
    let mut truth = BTreeMap::new();

    for k in 0..last_frame(spec) {
        let person = if k < cal { None } else { position_at(&spec.trajectory, cal, k) };
        if let Some(p) = person {
            truth.insert(k, p);
        }
        let mut frame = RssFrame::new(k);
        for (&key, &mean) in &means {
            let change = match person {
                None => 0.0,
                Some(p) => {
                    let fade = fade_offsets[&key];
                    let attenuate = 1.0 / (1.0 + (-spec.sign_slope * fade).exp());
                    let direction = if rng.random::<f64>() < attenuate { Direction::Minus } else { Direction::Plus };
                    let lambda = lambda_for(fade, direction, &spec.ellipse);
                    let excess = links.links()[key.link].excess_path_length(p);
                    if excess < lambda {
                        let rate = spec.measurement.beta(direction, fade);
                        let magnitude = Exp::new(rate).expect("rate validated").sample(&mut rng);
                        match direction {
                            Direction::Minus => -magnitude,
                            Direction::Plus => magnitude,
                        }
                    } else {
                        0.0
                    }
                }
            };
            let mut rss = mean + change + noise.sample(&mut rng);
            if spec.quantize {
                rss = rss.round();
            }
            let dropped = spec.drop_probability > 0.0 && rng.random::<f64>() < spec.drop_probability;
            frame.values.insert(key, (!dropped).then_some(rss));
        }
        frames.push(frame);
    }

    Ok(SyntheticTrace { links, frames, truth, fade_offsets, calibration_frames: spec.calibration_frames })
}
