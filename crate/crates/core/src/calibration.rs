//! Empty-room calibration: mean RSS per (link, channel), a pooled
//! log-distance path-loss fit normalized by per-channel transmit power,
//! and the resulting fade levels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LinkTable;

/// IEEE 802.15.4 channel in the 2.4 GHz band, 11 through 26.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Channel(u8);

impl Channel {
    pub const MIN: u8 = 11;
    pub const MAX: u8 = 26;

    pub fn new(c: i64) -> Result<Self> {
        if (Self::MIN as i64..=Self::MAX as i64).contains(&c) {
            Ok(Channel(c as u8))
        } else {
            Err(Error::ChannelOutOfRange(c))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Carrier frequency in MHz.
    pub fn frequency_mhz(self) -> u32 {
        2405 + 5 * (self.0 as u32 - 11)
    }

    /// Transmit power of the radio on this channel relative to its nominal
    /// setting, in dB. Lower channels come out weaker on the CC2531 dongle.
    pub fn normalized_tx_power(self) -> f64 {
        0.1452 * self.0 as f64 + 1.7332
    }

    pub fn all() -> impl Iterator<Item = Channel> {
        (Self::MIN..=Self::MAX).map(Channel)
    }
}

impl TryFrom<i64> for Channel {
    type Error = Error;

    fn try_from(c: i64) -> Result<Self> {
        Channel::new(c)
    }
}

impl From<Channel> for u8 {
    fn from(c: Channel) -> u8 {
        c.0
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn channel_frequency(c: i64) -> Result<u32> {
    Channel::new(c).map(Channel::frequency_mhz)
}

pub fn normalized_tx_power(c: i64) -> Result<f64> {
    Channel::new(c).map(Channel::normalized_tx_power)
}

/// A single (link, channel) measurement stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    pub link: usize,
    pub channel: Channel,
}

impl PairKey {
    pub fn new(link: usize, channel: Channel) -> Self {
        PairKey { link, channel }
    }
}

/// One synchronized snapshot. `None` marks a dropped packet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RssFrame {
    pub k: u64,
    pub values: BTreeMap<PairKey, Option<f64>>,
}

impl RssFrame {
    pub fn new(k: u64) -> Self {
        RssFrame { k, values: BTreeMap::new() }
    }

    pub fn get(&self, key: PairKey) -> Option<f64> {
        self.values.get(&key).copied().flatten()
    }

    pub fn channels(&self) -> BTreeSet<Channel> {
        self.values.keys().map(|k| k.channel).collect()
    }
}

/// Pooled path-loss parameters shared by every link and channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossFit {
    /// Path-loss exponent.
    pub eta: f64,
    /// Reference loss at `d0`, dB.
    pub p0: f64,
    /// Reference distance, meters.
    pub d0: f64,
}

impl PathLossFit {
    /// Predicted RSS at distance `d` on channel `c`.
    pub fn predict(&self, d: f64, c: Channel) -> f64 {
        c.normalized_tx_power() - self.p0 - 10.0 * self.eta * (d / self.d0).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadeEntry {
    pub mean_rss: f64,
    pub fade_level: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadeLevelTable {
    fit: PathLossFit,
    channels: Vec<Channel>,
    entries: BTreeMap<PairKey, FadeEntry>,
    uncalibrated: Vec<PairKey>,
}

impl FadeLevelTable {
    /// Builds the table from per-pair means; fade levels are derived so
    /// that `F = mean - P(d, c)` holds exactly.
    pub fn from_means(
        fit: PathLossFit,
        channels: Vec<Channel>,
        means: BTreeMap<PairKey, (f64, usize)>,
        links: &LinkTable,
    ) -> Result<Self> {
        if !(fit.d0 > 0.0) || !fit.eta.is_finite() || !fit.p0.is_finite() {
            return Err(Error::param("path_loss", format!("invalid fit {fit:?}")));
        }
        let mut channels = channels;
        channels.sort_unstable();
        channels.dedup();
        let mut entries = BTreeMap::new();
        for (key, (mean_rss, samples)) in means {
            let link = links
                .get(key.link)
                .ok_or_else(|| Error::InvalidLinks(format!("link index {} out of range", key.link)))?;
            if !channels.contains(&key.channel) {
                channels.push(key.channel);
                channels.sort_unstable();
            }
            let fade_level = mean_rss - fit.predict(link.distance, key.channel);
            entries.insert(key, FadeEntry { mean_rss, fade_level, samples });
        }
        let mut uncalibrated = Vec::new();
        for link in 0..links.len() {
            for &channel in &channels {
                let key = PairKey::new(link, channel);
                if !entries.contains_key(&key) {
                    uncalibrated.push(key);
                }
            }
        }
        Ok(FadeLevelTable { fit, channels, entries, uncalibrated })
    }

    pub fn fit(&self) -> PathLossFit {
        self.fit
    }

    /// Channels seen during calibration, ascending.
    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn get(&self, key: PairKey) -> Option<&FadeEntry> {
        self.entries.get(&key)
    }

    pub fn fade_level(&self, key: PairKey) -> Option<f64> {
        self.entries.get(&key).map(|e| e.fade_level)
    }

    pub fn mean_rss(&self, key: PairKey) -> Option<f64> {
        self.entries.get(&key).map(|e| e.mean_rss)
    }

    pub fn entries(&self) -> impl Iterator<Item = (PairKey, &FadeEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pairs on a calibrated channel that never produced a sample.
    pub fn uncalibrated(&self) -> &[PairKey] {
        &self.uncalibrated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub d0: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { d0: 1.0 }
    }
}

/// Ordinary least squares `y = a + b x`, returning `(a, b)`.
fn ols(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 calibrated pairs, got {n}")));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= 1e-12 * nf {
        return Err(Error::DegenerateFit("all links have the same length".into()));
    }
    let slope = sxy / sxx;
    Ok((mean_y - slope * mean_x, slope))
}

pub fn calibrate(
    frames: &[RssFrame],
    links: &LinkTable,
    config: &CalibrationConfig,
) -> Result<FadeLevelTable> {
    if !(config.d0 > 0.0 && config.d0.is_finite()) {
        return Err(Error::param("d0", "reference distance must be > 0"));
    }
    let mut channels = BTreeSet::new();
    let mut sums: BTreeMap<PairKey, (f64, usize)> = BTreeMap::new();
    for frame in frames {
        for (&key, &value) in &frame.values {
            if key.link >= links.len() {
                return Err(Error::InvalidLinks(format!("link index {} out of range", key.link)));
            }
            channels.insert(key.channel);
            if let Some(rss) = value {
                let acc = sums.entry(key).or_insert((0.0, 0));
                acc.0 += rss;
                acc.1 += 1;
            }
        }
    }
    let means: BTreeMap<PairKey, (f64, usize)> = sums
        .into_iter()
        .map(|(key, (sum, n))| (key, (sum / n as f64, n)))
        .collect();

    let points: Vec<(f64, f64)> = means
        .iter()
        .map(|(key, &(mean, _))| {
            let d = links.links()[key.link].distance;
            (-10.0 * (d / config.d0).log10(), mean - key.channel.normalized_tx_power())
        })
        .collect();
    let (intercept, slope) = ols(&points)?;
    let fit = PathLossFit { eta: slope, p0: -intercept, d0: config.d0 };

    let table = FadeLevelTable::from_means(fit, channels.into_iter().collect(), means, links)?;
    for key in table.uncalibrated() {
        log::warn!("link {} channel {} has no samples; excluded", key.link, key.channel);
    }
    Ok(table)
}
