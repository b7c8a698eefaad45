//! End-to-end pipelines for the four estimator variants, the benchmark
//! loop, and the published-anchor cross-check.
//!
//! Variants differ only in the weight matrix and measurement vector:
//!
//! | variant | rows                         | measurement              |
//! |---------|------------------------------|--------------------------|
//! | `rti`   | one per link, one channel    | attenuation `-Δr`        |
//! | `cdrti` | one per (channel, link)      | attenuation `-Δr`        |
//! | `flrti` | one per link                 | `-Δr` averaged over the link's `m` most anti-fade channels |
//! | `msrti` | one per (channel, link, ±)   | inside probability       |
//!
//! The classic variants image attenuation so that a person shows up as a
//! positive peak, matching the sign of the probability image.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationConfig, Channel, FadeLevelTable, PairKey, RssFrame};
use crate::error::{Error, Result};
use crate::geometry::{enumerate_links, LinkMode, LinkTable, NodeLayout, Point, VoxelGrid};
use crate::measurement_model::{assemble_measurement, inside_probability, MeasurementModelParams, RssChangeTracker};
use crate::reconstruction::{
    build_operator_with_prior, reconstruct_batch, PriorPrecision, ReconstructionOperator, ReconstructionParams,
};
use crate::simulator::{generate_trace, FadeOffsets, ScenarioSpec};
use crate::spatial_model::{
    build_classic_weights, build_classic_weights_per_channel, build_multiscale_weights, lambda_for, Direction,
    EllipseModelParams, RowKey, WeightMatrix,
};
use crate::tracking::{error_summary, localization_error, localize, track_positions, ErrorSummary, KalmanConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rti,
    Cdrti,
    Flrti,
    Msrti,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Rti, Variant::Cdrti, Variant::Flrti, Variant::Msrti];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rti => "rti",
            Variant::Cdrti => "cdrti",
            Variant::Flrti => "flrti",
            Variant::Msrti => "msrti",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param("variant", format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frames with `k` below this form the empty-room segment.
    pub calibration_frames: usize,
    /// Links to image with; must match the trace.
    pub links: LinkMode,
    /// Channel used by `rti`; may be omitted when the trace has only one.
    pub rti_channel: Option<Channel>,
    /// Number of most anti-fade channels averaged per link by `flrti`.
    pub flrti_channels: usize,
    /// Excess path length of the fixed ellipse used by the classic variants, m.
    pub classic_lambda: f64,
    /// Smooth the argmax positions with the Kalman filter.
    pub tracking: bool,
    /// Voxel grid; defaults to one covering the layout.
    pub grid: Option<VoxelGrid>,
    pub calibration: CalibrationConfig,
    pub ellipse: EllipseModelParams,
    pub measurement: MeasurementModelParams,
    pub reconstruction: ReconstructionParams,
    pub kalman: KalmanConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            calibration_frames: 100,
            links: LinkMode::AllPairs,
            rti_channel: None,
            flrti_channels: 3,
            classic_lambda: 0.02,
            tracking: true,
            grid: None,
            calibration: CalibrationConfig::default(),
            ellipse: EllipseModelParams::default(),
            measurement: MeasurementModelParams::default(),
            reconstruction: ReconstructionParams::default(),
            kalman: KalmanConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.calibration_frames == 0 {
            return Err(Error::param("calibration_frames", "must be >= 1"));
        }
        if self.flrti_channels == 0 {
            return Err(Error::param("flrti_channels", "must be >= 1"));
        }
        if !(self.classic_lambda >= 0.0 && self.classic_lambda.is_finite()) {
            return Err(Error::param("classic_lambda", "must be finite and >= 0"));
        }
        self.ellipse.validate()?;
        self.measurement.validate()?;
        self.reconstruction.validate()
    }

    pub fn grid_for(&self, layout: &NodeLayout) -> Result<VoxelGrid> {
        match self.grid {
            Some(grid) => Ok(grid),
            None => VoxelGrid::covering(layout, self.reconstruction.voxel_width),
        }
    }
}

/// Weight matrix and reconstruction operator for one variant, ready to
/// turn RSS frames into position estimates.
#[derive(Debug, Clone)]
pub struct PreparedPipeline {
    variant: Variant,
    config: PipelineConfig,
    grid: VoxelGrid,
    fades: FadeLevelTable,
    rti_channel: Option<Channel>,
    flrti_selection: Vec<Vec<Channel>>,
    weights: WeightMatrix,
    operator: ReconstructionOperator,
}

impl PreparedPipeline {
    /// `prior` must have been built for `grid`; pass the same one to
    /// several pipelines to avoid refactorizing the prior covariance.
    pub fn prepare(
        variant: Variant,
        config: &PipelineConfig,
        links: &LinkTable,
        fades: &FadeLevelTable,
        prior: &PriorPrecision,
    ) -> Result<Self> {
        config.validate()?;
        let grid = *prior.grid();
        let mut rti_channel = None;
        let mut flrti_selection = Vec::new();
        let weights = match variant {
            Variant::Rti => {
                rti_channel = Some(resolve_rti_channel(config.rti_channel, fades)?);
                build_classic_weights(links, &grid, config.classic_lambda)?
            }
            Variant::Cdrti => build_classic_weights_per_channel(links, &grid, config.classic_lambda, fades)?,
            Variant::Flrti => {
                flrti_selection = rank_anti_fade(links.len(), fades, config.flrti_channels);
                build_classic_weights(links, &grid, config.classic_lambda)?
            }
            Variant::Msrti => build_multiscale_weights(links, &grid, fades, &config.ellipse)?,
        };
        let operator = build_operator_with_prior(&weights, prior)?;
        Ok(PreparedPipeline {
            variant,
            config: config.clone(),
            grid,
            fades: fades.clone(),
            rti_channel,
            flrti_selection,
            weights,
            operator,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn operator(&self) -> &ReconstructionOperator {
        &self.operator
    }

    /// Channels averaged by `flrti` for each link, most anti-fade first.
    pub fn flrti_selection(&self) -> &[Vec<Channel>] {
        &self.flrti_selection
    }

    /// One measurement vector per frame, in frame order. Dropped samples
    /// are bridged according to the measurement model's missing policy.
    pub fn measurements(&self, frames: &[RssFrame]) -> Result<Vec<Vec<f64>>> {
        let mut tracker = RssChangeTracker::new(&self.config.measurement);
        frames
            .iter()
            .map(|frame| {
                let changes = tracker.update(frame, &self.fades);
                self.measurement(&changes)
            })
            .collect()
    }

    fn measurement(&self, changes: &BTreeMap<PairKey, f64>) -> Result<Vec<f64>> {
        let attenuation = |key: PairKey| changes.get(&key).map_or(0.0, |dr| -dr);
        match self.variant {
            Variant::Msrti => {
                Ok(assemble_measurement(changes, &self.fades, &self.config.measurement, &self.weights)?.values)
            }
            Variant::Rti => {
                let channel = self.rti_channel.expect("resolved in prepare");
                Ok(self.weights.row_keys().iter().map(|k| attenuation(PairKey::new(k.link(), channel))).collect())
            }
            Variant::Cdrti => Ok(self
                .weights
                .row_keys()
                .iter()
                .map(|k| match *k {
                    RowKey::Channel { channel, link } => attenuation(PairKey::new(link, channel)),
                    _ => unreachable!("per-channel weights"),
                })
                .collect()),
            Variant::Flrti => Ok(self
                .weights
                .row_keys()
                .iter()
                .map(|k| {
                    let available: Vec<f64> = self.flrti_selection[k.link()]
                        .iter()
                        .filter_map(|&c| changes.get(&PairKey::new(k.link(), c)))
                        .map(|dr| -dr)
                        .collect();
                    if available.is_empty() {
                        0.0
                    } else {
                        available.iter().sum::<f64>() / available.len() as f64
                    }
                })
                .collect()),
        }
    }

    /// Argmax position of every frame's image, optionally Kalman-smoothed.
    pub fn estimate(&self, frames: &[RssFrame]) -> Result<Vec<(u64, Point)>> {
        let ys = self.measurements(frames)?;
        let images = reconstruct_batch(&self.operator, &ys)?;
        let estimates = frames
            .iter()
            .zip(&images)
            .map(|(frame, image)| localize(frame.k, image, &self.grid))
            .collect::<Result<Vec<_>>>()?;
        if self.config.tracking && !estimates.is_empty() {
            let track = track_positions(&estimates, &self.config.kalman, self.grid.voxel_width)?;
            Ok(track.iter().map(|t| (t.k, t.position())).collect())
        } else {
            Ok(estimates.iter().map(|e| (e.k, e.position)).collect())
        }
    }
}

fn resolve_rti_channel(requested: Option<Channel>, fades: &FadeLevelTable) -> Result<Channel> {
    match requested {
        Some(c) if fades.channels().contains(&c) => Ok(c),
        Some(c) => Err(Error::Variant { variant: "rti".into(), reason: format!("channel {c} is not in the trace") }),
        None => match fades.channels() {
            [only] => Ok(*only),
            _ => Err(Error::Variant {
                variant: "rti".into(),
                reason: "the trace has several channels; configure rti_channel".into(),
            }),
        },
    }
}

/// Per link, the calibrated channels sorted by descending fade level
/// (ties to the lower channel), truncated to `m`.
fn rank_anti_fade(nlinks: usize, fades: &FadeLevelTable, m: usize) -> Vec<Vec<Channel>> {
    (0..nlinks)
        .map(|l| {
            let mut ranked: Vec<(Channel, f64)> = fades
                .channels()
                .iter()
                .filter_map(|&c| fades.fade_level(PairKey::new(l, c)).map(|f| (c, f)))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.into_iter().take(m).map(|(c, _)| c).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub k: u64,
    pub estimate: Point,
    pub truth: Option<Point>,
}

impl TrackRow {
    pub fn error(&self) -> Option<f64> {
        self.truth.map(|t| localization_error(self.estimate, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub variant: Variant,
    pub fades: FadeLevelTable,
    pub rows: Vec<TrackRow>,
    /// Present when at least one frame has ground truth.
    pub summary: Option<ErrorSummary>,
}

/// Splits `frames` at `k = calibration_frames`.
pub fn split_calibration(frames: &[RssFrame], calibration_frames: usize) -> Result<(&[RssFrame], &[RssFrame])> {
    if frames.windows(2).any(|w| w[1].k <= w[0].k) {
        return Err(Error::param("trace", "frame indices must be strictly increasing"));
    }
    let split = frames.partition_point(|f| f.k < calibration_frames as u64);
    if split == 0 {
        return Err(Error::EmptyInput("calibration segment"));
    }
    Ok(frames.split_at(split))
}

/// Calibrates on the trace's empty-room segment, then estimates a position
/// for every later frame.
pub fn run_pipeline(
    variant: Variant,
    frames: &[RssFrame],
    layout: &NodeLayout,
    truth: &BTreeMap<u64, Point>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let table = enumerate_links(layout, &config.links)?;
    let (calibration, person) = split_calibration(frames, config.calibration_frames)?;
    let fades = calibrate(calibration, &table, &config.calibration)?;
    let prior = PriorPrecision::new(&config.grid_for(layout)?, &config.reconstruction)?;
    let pipeline = PreparedPipeline::prepare(variant, config, &table, &fades, &prior)?;
    let rows = track_rows(&pipeline.estimate(person)?, truth);
    let summary = summarize(&rows)?;
    Ok(PipelineOutput { variant, fades, rows, summary })
}

fn track_rows(estimates: &[(u64, Point)], truth: &BTreeMap<u64, Point>) -> Vec<TrackRow> {
    estimates
        .iter()
        .map(|&(k, estimate)| TrackRow { k, estimate, truth: truth.get(&k).copied() })
        .collect()
}

fn summarize(rows: &[TrackRow]) -> Result<Option<ErrorSummary>> {
    let errors: Vec<f64> = rows.iter().filter_map(TrackRow::error).collect();
    if errors.is_empty() {
        Ok(None)
    } else {
        error_summary(&errors).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub variant: Variant,
    pub scenario: String,
    pub seed: u64,
    pub summary: ErrorSummary,
}

/// Runs every variant on every scenario once per seed. For each seed the
/// scenario's noise seed is replaced by `seed`, and a Gaussian fade-offset
/// seed is offset by it, so seeds give independent scenes. All variants
/// see the same trace for a given (scenario, seed).
pub fn benchmark(
    scenarios: &[(String, ScenarioSpec)],
    variants: &[Variant],
    seeds: &[u64],
    config: &PipelineConfig,
) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (name, base) in scenarios {
        if base.calibration_frames != config.calibration_frames {
            return Err(Error::InvalidScenario(format!(
                "scenario {name} has {} calibration frames but the pipeline expects {}",
                base.calibration_frames, config.calibration_frames
            )));
        }
        if base.links != config.links {
            return Err(Error::InvalidScenario(format!("scenario {name} uses a different link set than the pipeline")));
        }
        let prior = PriorPrecision::new(&config.grid_for(&base.layout)?, &config.reconstruction)?;
        for &seed in seeds {
            let spec = reseed(base, seed);
            let trace = generate_trace(&spec)?;
            let fades = calibrate(trace.calibration(), &trace.links, &config.calibration)?;
            for &variant in variants {
                let pipeline = PreparedPipeline::prepare(variant, config, &trace.links, &fades, &prior)?;
                let track = track_rows(&pipeline.estimate(trace.person_frames())?, &trace.truth);
                let summary = summarize(&track)?
                    .ok_or_else(|| Error::InvalidScenario(format!("scenario {name} has no person frames")))?;
                log::info!("{name} seed {seed} {variant}: mean error {:.3} m", summary.mean);
                rows.push(BenchmarkRow { variant, scenario: name.clone(), seed, summary });
            }
        }
    }
    Ok(rows)
}

pub fn reseed(spec: &ScenarioSpec, seed: u64) -> ScenarioSpec {
    let mut spec = spec.clone();
    spec.seed = seed;
    if let FadeOffsets::Gaussian { seed: fade_seed, .. } = &mut spec.fade_offsets {
        *fade_seed = fade_seed.wrapping_add(seed);
    }
    spec
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorCheck {
    pub name: &'static str,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl AnchorCheck {
    pub fn passed(&self) -> bool {
        (self.computed - self.expected).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosscheckReport {
    pub anchors: Vec<AnchorCheck>,
}

impl CrosscheckReport {
    pub fn passed(&self) -> bool {
        self.anchors.iter().all(AnchorCheck::passed)
    }
}

impl fmt::Display for CrosscheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.anchors {
            writeln!(
                f,
                "{} {:<24} computed {:.4} expected {:.4} ± {}",
                if a.passed() { "PASS" } else { "FAIL" },
                a.name,
                a.computed,
                a.expected,
                a.tolerance
            )?;
        }
        Ok(())
    }
}

/// Evaluates the published ellipse sizes and inside probabilities.
pub fn crosscheck_models(ellipse: &EllipseModelParams, measurement: &MeasurementModelParams) -> CrosscheckReport {
    let p = |dr: f64, f: f64| inside_probability(dr, f, measurement).1;
    let anchors = vec![
        AnchorCheck {
            name: "lambda-(F=+8)",
            computed: lambda_for(8.0, Direction::Minus, ellipse),
            expected: 0.0530,
            tolerance: 0.0005,
        },
        AnchorCheck {
            name: "lambda-(F=-8)",
            computed: lambda_for(-8.0, Direction::Minus, ellipse),
            expected: 0.8413,
            tolerance: 0.0010,
        },
        AnchorCheck { name: "p(dr=-10, F=+8)", computed: p(-10.0, 8.0), expected: 0.69, tolerance: 0.01 },
        AnchorCheck { name: "p(dr=+10, F=+8)", computed: p(10.0, 8.0), expected: 0.97, tolerance: 0.01 },
        AnchorCheck { name: "p(dr=+10, F=-8)", computed: p(10.0, -8.0), expected: 0.63, tolerance: 0.01 },
    ];
    CrosscheckReport { anchors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::simulator::{perimeter_layout, Trajectory};

    fn ch(c: i64) -> Channel {
        Channel::new(c).unwrap()
    }

    fn scenario() -> ScenarioSpec {
        let layout = perimeter_layout(Point::new(0.0, 0.0), 3.0, 3.0, 12).unwrap();
        let mut s = ScenarioSpec::new(layout, vec![ch(11), ch(16), ch(21), ch(26)]);
        s.calibration_frames = 60;
        s.seed = 5;
        s.fade_offsets = FadeOffsets::Gaussian { mean: 0.0, std: 5.0, seed: 9 };
        s.trajectory = Trajectory::Stationary { position: Point::new(1.2, 1.7), frames: 30 };
        s
    }

    fn config() -> PipelineConfig {
        PipelineConfig {
            calibration_frames: 60,
            rti_channel: Some(ch(16)),
            reconstruction: ReconstructionParams { voxel_width: 0.25, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("MSRTI".parse::<Variant>().unwrap(), Variant::Msrti);
        assert!("tomography".parse::<Variant>().is_err());
    }

    #[test]
    fn default_crosscheck_passes() {
        let report = crosscheck_models(&EllipseModelParams::default(), &MeasurementModelParams::default());
        assert!(report.passed(), "{report}");
        assert_eq!(report.anchors.len(), 5);
        assert_eq!(report.to_string().lines().count(), 5);
    }

    #[test]
    fn perturbed_lambda_fails_crosscheck() {
        let mut ellipse = EllipseModelParams::default();
        ellipse.b_lambda_minus *= 1.1;
        let report = crosscheck_models(&ellipse, &MeasurementModelParams::default());
        assert!(!report.anchors[0].passed());
        assert!(!report.anchors[1].passed());
        assert!(report.anchors[2..].iter().all(AnchorCheck::passed));
        assert!(!report.passed());
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = scenario();
        let trace = generate_trace(&spec).unwrap();
        let run = || {
            run_pipeline(Variant::Msrti, &trace.frames, &spec.layout, &trace.truth, &config()).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.rows.len(), 30);
        assert_eq!(a.summary.as_ref().unwrap().count, 30);
    }

    #[test]
    fn every_variant_runs() {
        let spec = scenario();
        let trace = generate_trace(&spec).unwrap();
        for v in Variant::ALL {
            let out = run_pipeline(v, &trace.frames, &spec.layout, &trace.truth, &config()).unwrap();
            assert_eq!(out.rows.len(), 30, "{v}");
            assert!(out.rows.iter().all(|r| r.estimate.x.is_finite()));
        }
    }

    #[test]
    fn rti_channel_must_be_resolvable() {
        let spec = scenario();
        let trace = generate_trace(&spec).unwrap();
        let mut cfg = config();
        cfg.rti_channel = None;
        let err = run_pipeline(Variant::Rti, &trace.frames, &spec.layout, &trace.truth, &cfg);
        assert!(matches!(err, Err(Error::Variant { .. })));
        cfg.rti_channel = Some(ch(12));
        let err = run_pipeline(Variant::Rti, &trace.frames, &spec.layout, &trace.truth, &cfg);
        assert!(matches!(err, Err(Error::Variant { .. })));
    }

    #[test]
    fn missing_calibration_segment_is_an_error() {
        let spec = scenario();
        let trace = generate_trace(&spec).unwrap();
        let err = run_pipeline(
            Variant::Msrti,
            &trace.frames[spec.calibration_frames..],
            &spec.layout,
            &trace.truth,
            &config(),
        );
        assert!(matches!(err, Err(Error::EmptyInput(_))));
    }

    fn setup(offsets: Vec<(u32, u32, Channel, f64)>) -> (crate::simulator::SyntheticTrace, FadeLevelTable, PriorPrecision, PipelineConfig) {
        let mut spec = scenario();
        spec.fade_offsets = FadeOffsets::Explicit(offsets);
        let trace = generate_trace(&spec).unwrap();
        let cfg = config();
        let fades = calibrate(trace.calibration(), &trace.links, &cfg.calibration).unwrap();
        let prior = PriorPrecision::new(&cfg.grid_for(&spec.layout).unwrap(), &cfg.reconstruction).unwrap();
        (trace, fades, prior, cfg)
    }

    #[test]
    fn flrti_with_all_channels_averages_everything() {
        let (trace, fades, prior, mut cfg) = setup(vec![]);
        cfg.flrti_channels = 4;
        let fl = PreparedPipeline::prepare(Variant::Flrti, &cfg, &trace.links, &fades, &prior).unwrap();
        assert!(fl.flrti_selection().iter().all(|s| s.len() == 4));
        let ys = fl.measurements(trace.person_frames()).unwrap();
        for (frame, y) in trace.person_frames().iter().zip(&ys) {
            let changes = crate::measurement_model::rss_change(frame, &fades);
            for (l, &v) in y.iter().enumerate() {
                let mean = -fades.channels().iter().map(|&c| changes[&PairKey::new(l, c)]).sum::<f64>() / 4.0;
                assert!((v - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flrti_top_one_equals_rti_on_shared_best_channel() {
        // channel 21 sits 12 dB above the others on every link
        let layout = scenario().layout;
        let links = enumerate_links(&layout, &LinkMode::AllPairs).unwrap();
        let boost = links.links().iter().map(|l| (l.tx, l.rx, ch(21), 12.0)).collect();
        let (trace, fades, prior, mut cfg) = setup(boost);
        cfg.flrti_channels = 1;
        cfg.rti_channel = Some(ch(21));
        let fl = PreparedPipeline::prepare(Variant::Flrti, &cfg, &trace.links, &fades, &prior).unwrap();
        assert!(fl.flrti_selection().iter().all(|s| s == &vec![ch(21)]));
        let rti = PreparedPipeline::prepare(Variant::Rti, &cfg, &trace.links, &fades, &prior).unwrap();
        let frames = trace.person_frames();
        assert_eq!(fl.measurements(frames).unwrap(), rti.measurements(frames).unwrap());
        assert_eq!(fl.estimate(frames).unwrap(), rti.estimate(frames).unwrap());
    }

    #[test]
    fn flrti_ranks_by_descending_fade_level() {
        let links = enumerate_links(
            &perimeter_layout(Point::new(0.0, 0.0), 2.0, 2.0, 4).unwrap(),
            &LinkMode::Explicit(vec![(1, 3)]),
        )
        .unwrap();
        let fit = crate::calibration::PathLossFit { eta: 2.0, p0: 40.0, d0: 1.0 };
        let d = links.links()[0].distance;
        let means = [(11, 3.0), (16, -2.0), (21, 7.0), (26, 3.0)]
            .into_iter()
            .map(|(c, f)| (PairKey::new(0, ch(c)), (fit.predict(d, ch(c)) + f, 10)))
            .collect();
        let fades = FadeLevelTable::from_means(fit, vec![], means, &links).unwrap();
        assert_eq!(rank_anti_fade(1, &fades, 3), vec![vec![ch(21), ch(11), ch(26)]]);
    }

    #[test]
    fn benchmark_emits_one_row_per_variant_and_seed() {
        let rows = benchmark(&[("small".into(), scenario())], &[Variant::Cdrti, Variant::Msrti], &[1, 2], &config())
            .unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].variant, Variant::Cdrti);
        assert_eq!(rows[3].seed, 2);
        assert!(rows.iter().all(|r| r.summary.count == 30));
    }
}
