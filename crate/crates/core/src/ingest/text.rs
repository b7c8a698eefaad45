use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::calibration::{Channel, FadeLevelTable, PairKey, PathLossFit, RssFrame};
use crate::error::{Error, Result};
use crate::geometry::{LinkTable, Node, NodeId, NodeLayout, Point};

use super::{load_with, write_bytes};

/// Stored fade levels may be rounded; anything further off than this from
/// the value implied by the fit and mean is rejected.
const FADE_LEVEL_SLACK_DB: f64 = 5e-3;

/// Non-empty records as `(line number, fields)`.
pub(super) fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> =
            body.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

pub(super) fn arity(line: usize, fields: &[&str], n: usize, format: &str) -> Result<()> {
    if fields.len() == n {
        Ok(())
    } else {
        Err(Error::parse(line, format!("expected {n} fields ({format}), found {}", fields.len())))
    }
}

pub(super) fn num<T: FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::parse(line, format!("invalid {what} {field:?}")))
}

pub(super) fn real(line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = num(line, field, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(line, format!("{what} must be finite, got {field:?}")))
    }
}

fn channel(line: usize, field: &str) -> Result<Channel> {
    Channel::new(num(line, field, "channel")?).map_err(|e| Error::parse(line, e.to_string()))
}

pub fn parse_layout(text: &str) -> Result<NodeLayout> {
    let mut nodes = Vec::new();
    for (line, f) in records(text) {
        arity(line, &f, 3, "id x y")?;
        let id = num(line, f[0], "node id")?;
        let pos = Point::new(real(line, f[1], "x")?, real(line, f[2], "y")?);
        nodes.push(Node { id, pos });
    }
    NodeLayout::new(nodes)
}

pub fn format_layout(layout: &NodeLayout) -> String {
    let mut out = String::from("# id x y\n");
    for n in layout.nodes() {
        let _ = writeln!(out, "{} {} {}", n.id, n.pos.x, n.pos.y);
    }
    out
}

/// Records are grouped into frames by ascending `k`. Both directions of a
/// link map to the same pair; when both are present in a frame their
/// values are averaged. A repeated `(k, tx, rx, channel)` keeps the last
/// value and logs a warning.
pub fn parse_trace(text: &str, links: &LinkTable) -> Result<Vec<RssFrame>> {
    let nodes: HashSet<NodeId> = links.links().iter().flat_map(|l| [l.tx, l.rx]).collect();
    // (k, pair) -> direction -> sample
    type Samples = BTreeMap<(u64, PairKey), BTreeMap<(NodeId, NodeId), Option<f64>>>;
    let mut samples = Samples::new();
    for (line, f) in records(text) {
        arity(line, &f, 5, "k tx rx channel rss")?;
        let k: u64 = num(line, f[0], "frame index")?;
        let tx: NodeId = num(line, f[1], "node id")?;
        let rx: NodeId = num(line, f[2], "node id")?;
        let c = channel(line, f[3])?;
        let rss = match f[4] {
            "NA" => None,
            v => Some(real(line, v, "rss")?),
        };
        for id in [tx, rx] {
            if !nodes.contains(&id) {
                return Err(Error::parse(line, format!("unknown node id {id}")));
            }
        }
        let link = links.find(tx, rx).ok_or_else(|| Error::parse(line, format!("no link between {tx} and {rx}")))?;
        let slot = samples.entry((k, PairKey::new(link, c))).or_default();
        if slot.insert((tx, rx), rss).is_some() {
            log::warn!("line {line}: repeated record for k={k} {tx}->{rx} channel {c}, keeping the last");
        }
    }

    let mut frames: Vec<RssFrame> = Vec::new();
    for ((k, key), directions) in samples {
        let present: Vec<f64> = directions.values().flatten().copied().collect();
        let value = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        match frames.last_mut() {
            Some(frame) if frame.k == k => {
                frame.values.insert(key, value);
            }
            _ => {
                let mut frame = RssFrame::new(k);
                frame.values.insert(key, value);
                frames.push(frame);
            }
        }
    }
    Ok(frames)
}

pub fn format_trace(frames: &[RssFrame], links: &LinkTable) -> Result<String> {
    let mut out = String::from("# k tx rx channel rss\n");
    for frame in frames {
        for (key, value) in &frame.values {
            let link = links
                .get(key.link)
                .ok_or_else(|| Error::InvalidLinks(format!("link index {} out of range", key.link)))?;
            let _ = write!(out, "{} {} {} {} ", frame.k, link.tx, link.rx, key.channel);
            let _ = match value {
                Some(v) => writeln!(out, "{v}"),
                None => writeln!(out, "NA"),
            };
        }
    }
    Ok(out)
}

/// Accepts an optional leading `k x_true y_true` header.
pub fn parse_ground_truth(text: &str) -> Result<BTreeMap<u64, Point>> {
    let mut truth = BTreeMap::new();
    let mut last: Option<u64> = None;
    for (i, (line, f)) in records(text).enumerate() {
        if i == 0 && f[0] == "k" {
            continue;
        }
        arity(line, &f, 3, "k x y")?;
        let k: u64 = num(line, f[0], "frame index")?;
        if last.is_some_and(|prev| k <= prev) {
            return Err(Error::parse(line, format!("frame index {k} is not increasing")));
        }
        last = Some(k);
        truth.insert(k, Point::new(real(line, f[1], "x")?, real(line, f[2], "y")?));
    }
    Ok(truth)
}

pub fn format_ground_truth(truth: &BTreeMap<u64, Point>) -> String {
    let mut out = String::from("# k x_true y_true\n");
    for (k, p) in truth {
        let _ = writeln!(out, "{k} {} {}", p.x, p.y);
    }
    out
}

pub fn parse_fade_table(text: &str, links: &LinkTable) -> Result<FadeLevelTable> {
    let mut fit = None;
    let mut channels = Vec::new();
    let mut means = BTreeMap::new();
    let mut stated = Vec::new();
    for (line, f) in records(text) {
        match f[0] {
            "fit" => {
                arity(line, &f, 4, "fit eta p0 d0")?;
                if fit.is_some() {
                    return Err(Error::parse(line, "second fit line"));
                }
                let d0 = real(line, f[3], "d0")?;
                if !(d0 > 0.0) {
                    return Err(Error::parse(line, "d0 must be positive"));
                }
                fit = Some(PathLossFit { eta: real(line, f[1], "eta")?, p0: real(line, f[2], "p0")?, d0 });
            }
            "channels" => {
                for field in &f[1..] {
                    channels.push(channel(line, field)?);
                }
            }
            _ => {
                arity(line, &f, 6, "tx rx channel mean_rss fade_level samples")?;
                let tx: NodeId = num(line, f[0], "node id")?;
                let rx: NodeId = num(line, f[1], "node id")?;
                let link =
                    links.find(tx, rx).ok_or_else(|| Error::parse(line, format!("no link between {tx} and {rx}")))?;
                let key = PairKey::new(link, channel(line, f[2])?);
                let mean = real(line, f[3], "mean rss")?;
                let fade = real(line, f[4], "fade level")?;
                let samples: usize = num(line, f[5], "sample count")?;
                if means.insert(key, (mean, samples)).is_some() {
                    return Err(Error::parse(line, format!("repeated entry for {tx}-{rx} channel {}", key.channel)));
                }
                stated.push((line, key, fade));
            }
        }
    }
    let fit = fit.ok_or_else(|| Error::parse(0, "missing `fit eta p0 d0` line"))?;
    let table = FadeLevelTable::from_means(fit, channels, means, links)?;
    for (line, key, fade) in stated {
        let derived = table.fade_level(key).expect("entry inserted above");
        if !((derived - fade).abs() <= FADE_LEVEL_SLACK_DB) {
            return Err(Error::parse(line, format!("fade level {fade} disagrees with fit and mean ({derived})")));
        }
    }
    Ok(table)
}

pub fn format_fade_table(table: &FadeLevelTable, links: &LinkTable) -> Result<String> {
    let fit = table.fit();
    let mut out = String::from("# path-loss fit: eta p0 d0\n");
    let _ = writeln!(out, "fit {} {} {}", fit.eta, fit.p0, fit.d0);
    out.push_str("channels");
    for c in table.channels() {
        let _ = write!(out, " {c}");
    }
    out.push_str("\n# tx rx channel mean_rss fade_level samples\n");
    for (key, entry) in table.entries() {
        let link = links
            .get(key.link)
            .ok_or_else(|| Error::InvalidLinks(format!("link index {} out of range", key.link)))?;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            link.tx, link.rx, key.channel, entry.mean_rss, entry.fade_level, entry.samples
        );
    }
    Ok(out)
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<NodeLayout> {
    load_with(path.as_ref(), parse_layout)
}

pub fn save_layout(path: impl AsRef<Path>, layout: &NodeLayout) -> Result<()> {
    write_bytes(path.as_ref(), format_layout(layout))
}

pub fn load_trace(path: impl AsRef<Path>, links: &LinkTable) -> Result<Vec<RssFrame>> {
    load_with(path.as_ref(), |t| parse_trace(t, links))
}

pub fn save_trace(path: impl AsRef<Path>, frames: &[RssFrame], links: &LinkTable) -> Result<()> {
    write_bytes(path.as_ref(), format_trace(frames, links)?)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<BTreeMap<u64, Point>> {
    load_with(path.as_ref(), parse_ground_truth)
}

pub fn save_ground_truth(path: impl AsRef<Path>, truth: &BTreeMap<u64, Point>) -> Result<()> {
    write_bytes(path.as_ref(), format_ground_truth(truth))
}

pub fn load_fade_table(path: impl AsRef<Path>, links: &LinkTable) -> Result<FadeLevelTable> {
    load_with(path.as_ref(), |t| parse_fade_table(t, links))
}

pub fn save_fade_table(path: impl AsRef<Path>, table: &FadeLevelTable, links: &LinkTable) -> Result<()> {
    write_bytes(path.as_ref(), format_fade_table(table, links)?)
}
