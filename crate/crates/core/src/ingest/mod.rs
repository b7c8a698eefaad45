//! Reading and writing every file format the toolkit uses.
//!
//! Whitespace text formats (`#` starts a comment, commas also separate):
//!
//! * layout — `id x y`
//! * trace — `k tx rx channel rss`, with `NA` for a dropped packet
//! * ground truth — `k x y`, strictly increasing `k`
//! * fade table — `fit eta p0 d0`, `channels c...`, then
//!   `tx rx channel mean_rss fade_level samples`
//! * image — `grid nx ny p origin_x origin_y` followed by `ny` rows of `nx`
//!   values, lowest `y` first
//!
//! Parameter, pipeline configuration and scenario files are TOML. Images
//! also have a binary form, and tracks and benchmark reports are CSV.
//!
//! Each `parse_*`/`decode_*` function works on in-memory data; the matching
//! `load_*` reads a file and attaches its path to any error. Numbers are
//! parsed and printed with `.` as the decimal separator regardless of
//! locale, and printed floats round-trip exactly.

mod image;
mod params;
mod tables;
mod text;

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use self::image::{
    decode_image_binary, encode_image_binary, format_image_csv, format_image_text, load_image_binary,
    load_image_text, parse_image_text, save_image_binary, save_image_csv, save_image_text,
};
pub use self::params::{
    format_config, format_ellipse_params, format_measurement_params, format_scenario, load_config,
    load_ellipse_params, load_measurement_params, load_scenario, parse_config, parse_ellipse_params,
    parse_measurement_params, parse_scenario, save_config, save_scenario, MAX_SCENARIO_NODES,
};
pub use self::tables::{
    format_benchmark_csv, format_cdf_csv, format_track_csv, load_benchmark_csv, load_track_csv,
    parse_benchmark_csv, parse_track_csv, save_benchmark_csv, save_cdf_csv, save_track_csv, BenchmarkRecord,
};
pub use self::text::{
    format_fade_table, format_ground_truth, format_layout, format_trace, load_fade_table, load_ground_truth,
    load_layout, load_trace, parse_fade_table, parse_ground_truth, parse_layout, parse_trace, save_fade_table,
    save_ground_truth, save_layout, save_trace,
};

fn with_path<T>(path: &Path, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::File { path: path.to_path_buf(), source: Box::new(e) })
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error {
    let path = PathBuf::from(path);
    move |source| Error::Io { path, source }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_error(path))
}

fn write_bytes(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_error(path))
}

/// Parses a text file with `parse`, tagging errors with the path.
fn load_with<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    let text = read_text(path)?;
    with_path(path, parse(&text))
}
