use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msrti::calibration::{calibrate, Channel, RssFrame};
use msrti::geometry::{enumerate_links, LinkTable, NodeLayout};
use msrti::harness::{
    benchmark, crosscheck_models, run_pipeline, split_calibration, PipelineConfig, PreparedPipeline, Variant,
};
use msrti::ingest::{self, BenchmarkRecord};
use msrti::reconstruction::{reconstruct_batch, PriorPrecision};
use msrti::simulator::generate_trace;

#[derive(Parser)]
#[command(name = "msrti", version, about = "RSS-based device-free localization with multi-scale radio tomographic imaging")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the path-loss model on the empty-room segment and write fade levels.
    Calibrate {
        #[command(flatten)]
        inputs: Inputs,
        /// Fade table to write.
        #[arg(long, default_value = "fades.txt")]
        out: PathBuf,
    },
    /// Write the reconstructed image of every frame after calibration.
    Reconstruct {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_enum, default_value_t = ImageFormat::Text)]
        format: ImageFormat,
        /// Only frames with `first <= k <= last`, given as `first:last`.
        #[arg(long)]
        frames: Option<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Localize and track the person in every frame after calibration.
    Track {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Ground truth (`k x y`); adds error columns and a summary.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate a synthetic trace, ground truth and layout from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run estimator variants on seeded synthetic scenarios and report errors.
    Benchmark {
        /// Scenario files; each becomes one scenario named after its file stem.
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Empty-room frames per scenario; must match every scenario.
        #[arg(long)]
        calibration_frames: Option<usize>,
        /// Variants to compare.
        #[arg(long, value_delimiter = ',', default_value = "rti,cdrti,flrti,msrti")]
        variants: Vec<Variant>,
        /// Number of seeds, starting at `--first-seed`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check the model parameters against the published anchor values.
    Crosscheck {
        /// Ellipse model parameter file; defaults to the published values.
        #[arg(long)]
        ellipse: Option<PathBuf>,
        /// Measurement model parameter file; defaults to the published values.
        #[arg(long)]
        measurement: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Inputs {
    /// Node layout, one `id x y` per line.
    #[arg(long)]
    layout: PathBuf,
    /// RSS trace, one `k tx rx channel rss` per line.
    #[arg(long)]
    trace: PathBuf,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep only these channels.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<i64>,
    /// Frames with k below this are the empty-room segment.
    #[arg(long)]
    calibration_frames: Option<usize>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value = "msrti")]
    variant: Variant,
    /// Channel used by the rti variant.
    #[arg(long)]
    rti_channel: Option<i64>,
    /// Report raw argmax positions instead of Kalman-filtered ones.
    #[arg(long)]
    no_tracking: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageFormat {
    Text,
    Binary,
    Csv,
}

struct Loaded {
    layout: NodeLayout,
    links: LinkTable,
    frames: Vec<RssFrame>,
    config: PipelineConfig,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => ingest::load_config(p)?,
        None => PipelineConfig::default(),
    })
}

fn load_inputs(inputs: &Inputs, pipeline: Option<&PipelineArgs>) -> Result<Loaded> {
    let mut config = load_config(inputs.config.as_deref())?;
    if let Some(n) = inputs.calibration_frames {
        config.calibration_frames = n;
    }
    if let Some(p) = pipeline {
        if let Some(c) = p.rti_channel {
            config.rti_channel = Some(Channel::new(c)?);
        }
        if p.no_tracking {
            config.tracking = false;
        }
    }
    config.validate()?;
    let layout = ingest::load_layout(&inputs.layout)?;
    let links = enumerate_links(&layout, &config.links)?;
    let mut frames = ingest::load_trace(&inputs.trace, &links)?;
    if !inputs.channels.is_empty() {
        let keep = inputs.channels.iter().map(|&c| Channel::new(c)).collect::<msrti::Result<Vec<_>>>()?;
        for frame in &mut frames {
            frame.values.retain(|key, _| keep.contains(&key.channel));
        }
    }
    log::info!("{} frames over {} links", frames.len(), links.len());
    Ok(Loaded { layout, links, frames, config })
}

fn parse_range(spec: &str) -> Result<(u64, u64)> {
    let (a, b) = spec.split_once(':').context("expected `first:last`")?;
    let (a, b) = (a.trim().parse()?, b.trim().parse()?);
    if a > b {
        bail!("empty frame range {spec}");
    }
    Ok((a, b))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Calibrate { inputs, out } => {
            let d = load_inputs(&inputs, None)?;
            let (calibration, _) = split_calibration(&d.frames, d.config.calibration_frames)?;
            let fades = calibrate(calibration, &d.links, &d.config.calibration)?;
            ingest::save_fade_table(&out, &fades, &d.links)?;
            let fit = fades.fit();
            println!(
                "eta = {:.4}, P0 = {:.4} dB; {} pairs calibrated, {} without samples",
                fit.eta,
                fit.p0,
                fades.len(),
                fades.uncalibrated().len()
            );
        }
        Command::Reconstruct { inputs, pipeline, format, frames, out_dir } => {
            let d = load_inputs(&inputs, Some(&pipeline))?;
            let (calibration, person) = split_calibration(&d.frames, d.config.calibration_frames)?;
            let range = frames.as_deref().map(parse_range).transpose()?;
            let selected: Vec<RssFrame> = person
                .iter()
                .filter(|f| range.is_none_or(|(a, b)| (a..=b).contains(&f.k)))
                .cloned()
                .collect();
            let fades = calibrate(calibration, &d.links, &d.config.calibration)?;
            let prior = PriorPrecision::new(&d.config.grid_for(&d.layout)?, &d.config.reconstruction)?;
            let prepared = PreparedPipeline::prepare(pipeline.variant, &d.config, &d.links, &fades, &prior)?;
            // measurements over every person frame keep the hold buffer
            // identical to a full run
            let ys = prepared.measurements(person)?;
            let ys: Vec<Vec<f64>> =
                person.iter().zip(ys).filter(|(f, _)| selected.iter().any(|s| s.k == f.k)).map(|(_, y)| y).collect();
            let images = reconstruct_batch(prepared.operator(), &ys)?;
            create_dir(&out_dir)?;
            let grid = prepared.grid();
            for (frame, image) in selected.iter().zip(&images) {
                let stem = out_dir.join(format!("image_{:06}", frame.k));
                match format {
                    ImageFormat::Text => ingest::save_image_text(stem.with_extension("txt"), grid, image)?,
                    ImageFormat::Binary => ingest::save_image_binary(stem.with_extension("bin"), grid, image)?,
                    ImageFormat::Csv => ingest::save_image_csv(stem.with_extension("csv"), grid, image)?,
                }
            }
            println!("wrote {} {} images to {}", images.len(), pipeline.variant, out_dir.display());
        }
        Command::Track { inputs, pipeline, truth, out_dir } => {
            let d = load_inputs(&inputs, Some(&pipeline))?;
            let truth = match truth {
                Some(p) => ingest::load_ground_truth(p)?,
                None => BTreeMap::new(),
            };
            let out = run_pipeline(pipeline.variant, &d.frames, &d.layout, &truth, &d.config)?;
            create_dir(&out_dir)?;
            ingest::save_track_csv(out_dir.join("track.csv"), &out.rows)?;
            match &out.summary {
                Some(s) => {
                    ingest::save_cdf_csv(out_dir.join("error_cdf.csv"), s)?;
                    println!(
                        "{}: {} frames, mean {:.3} m, median {:.3} m, p95 {:.3} m, max {:.3} m",
                        out.variant, s.count, s.mean, s.median, s.p95, s.max
                    );
                }
                None => println!("{}: {} frames tracked", out.variant, out.rows.len()),
            }
        }
        Command::Simulate { scenario, out_dir } => {
            let spec = ingest::load_scenario(&scenario)?;
            let trace = generate_trace(&spec)?;
            create_dir(&out_dir)?;
            ingest::save_layout(out_dir.join("layout.txt"), &spec.layout)?;
            ingest::save_trace(out_dir.join("trace.txt"), &trace.frames, &trace.links)?;
            ingest::save_ground_truth(out_dir.join("truth.txt"), &trace.truth)?;
            println!(
                "{} frames ({} calibration) over {} links, {} with a person present",
                trace.frames.len(),
                trace.calibration_frames,
                trace.links.len(),
                trace.truth.len()
            );
        }
        Command::Benchmark { scenario, config, calibration_frames, variants, seeds, first_seed, out_dir } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(n) = calibration_frames {
                config.calibration_frames = n;
            }
            let scenarios = scenario
                .iter()
                .map(|p| {
                    let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into());
                    Ok((name, ingest::load_scenario(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let seeds: Vec<u64> = (first_seed..first_seed + seeds).collect();
            let rows = benchmark(&scenarios, &variants, &seeds, &config)?;
            let records: Vec<BenchmarkRecord> = rows.iter().map(BenchmarkRecord::from).collect();
            create_dir(&out_dir)?;
            ingest::save_benchmark_csv(out_dir.join("benchmark.csv"), &records)?;
            for v in &variants {
                let means: Vec<f64> = records.iter().filter(|r| r.variant == *v).map(|r| r.mean).collect();
                println!("{v}: mean error {:.3} m over {} runs", means.iter().sum::<f64>() / means.len() as f64, means.len());
            }
        }
        Command::Crosscheck { ellipse, measurement } => {
            let ellipse = ellipse.map(ingest::load_ellipse_params).transpose()?.unwrap_or_default();
            let measurement = measurement.map(ingest::load_measurement_params).transpose()?.unwrap_or_default();
            let report = crosscheck_models(&ellipse, &measurement);
            print!("{report}");
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
