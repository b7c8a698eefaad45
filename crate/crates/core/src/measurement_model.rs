//! Maps RSS changes to the probability that the person is inside the
//! ellipse of the matching direction, and stacks those probabilities in
//! the row order of a multi-scale weight matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{FadeLevelTable, PairKey, RssFrame};
use crate::error::{Error, Result};
use crate::spatial_model::{Direction, RowKey, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Repeat the last change for up to `hold_frames` frames.
    Hold,
    /// Treat a missing sample as no change.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementModelParams {
    /// Decay rate for decreases, 1/dB.
    pub beta_minus: f64,
    pub k_beta_plus: f64,
    pub b_beta_plus: f64,
    pub missing: MissingPolicy,
    pub hold_frames: usize,
    /// Changes with magnitude at or below this are treated as zero.
    pub dead_zone_db: f64,
}

impl Default for MeasurementModelParams {
    fn default() -> Self {
        MeasurementModelParams {
            beta_minus: 0.1172,
            k_beta_plus: 13.0018,
            b_beta_plus: 0.1839,
            missing: MissingPolicy::Hold,
            hold_frames: 5,
            dead_zone_db: 0.0,
        }
    }
}

impl MeasurementModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_minus", self.beta_minus),
            ("k_beta_plus", self.k_beta_plus),
            ("b_beta_plus", self.b_beta_plus),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.dead_zone_db >= 0.0 && self.dead_zone_db.is_finite()) {
            return Err(Error::param("dead_zone_db", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn beta(&self, direction: Direction, fade_level: f64) -> f64 {
        match direction {
            Direction::Minus => self.beta_minus,
            Direction::Plus => beta_plus(fade_level, self),
        }
    }
}

pub fn beta_plus(fade_level: f64, params: &MeasurementModelParams) -> f64 {
    params.b_beta_plus * (fade_level / params.k_beta_plus).exp()
}

const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Direction of the change and the probability that the person is inside
/// that direction's ellipse. A zero change reports `Minus` with `p = 0`.
/// Large changes saturate at the largest double below one.
pub fn inside_probability(delta_rss: f64, fade_level: f64, params: &MeasurementModelParams) -> (Direction, f64) {
    if !(delta_rss.abs() > params.dead_zone_db) {
        return (Direction::Minus, 0.0);
    }
    let direction = if delta_rss > 0.0 { Direction::Plus } else { Direction::Minus };
    let beta = params.beta(direction, fade_level);
    (direction, (-(-beta * delta_rss.abs()).exp_m1()).min(P_MAX))
}

/// RSS change for every calibrated pair with a sample in `frame`.
pub fn rss_change(frame: &RssFrame, fades: &FadeLevelTable) -> BTreeMap<PairKey, f64> {
    frame
        .values
        .iter()
        .filter_map(|(&key, &value)| {
            let rss = value?;
            let mean = fades.mean_rss(key)?;
            Some((key, rss - mean))
        })
        .collect()
}

/// Per-pipeline RSS change state that bridges dropped packets.
#[derive(Debug, Clone)]
pub struct RssChangeTracker {
    policy: MissingPolicy,
    hold_frames: usize,
    last: BTreeMap<PairKey, (f64, usize)>,
}

impl RssChangeTracker {
    pub fn new(params: &MeasurementModelParams) -> Self {
        RssChangeTracker { policy: params.missing, hold_frames: params.hold_frames, last: BTreeMap::new() }
    }

    /// Changes for this frame, with held values filled in for pairs that
    /// dropped out within the last `hold_frames` frames.
    pub fn update(&mut self, frame: &RssFrame, fades: &FadeLevelTable) -> BTreeMap<PairKey, f64> {
        let fresh = rss_change(frame, fades);
        if self.policy == MissingPolicy::Zero {
            return fresh;
        }
        let hold = self.hold_frames;
        self.last.retain(|key, (_, age)| {
            if fresh.contains_key(key) {
                return true;
            }
            *age += 1;
            *age <= hold
        });
        for (&key, &dr) in &fresh {
            self.last.insert(key, (dr, 0));
        }
        self.last.iter().map(|(&k, &(dr, _))| (k, dr)).collect()
    }
}

/// Probability-valued measurements, ordered like the rows of the weight
/// matrix they were assembled against.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fills the `(channel, link, direction)` slots of `weights`. Pairs with no
/// change available leave both slots at zero.
pub fn assemble_measurement(
    changes: &BTreeMap<PairKey, f64>,
    fades: &FadeLevelTable,
    params: &MeasurementModelParams,
    weights: &WeightMatrix,
) -> Result<MeasurementVector> {
    let mut values = Vec::with_capacity(weights.nrows());
    for key in weights.row_keys() {
        let RowKey::Directional { channel, link, direction } = *key else {
            return Err(Error::param("weights", "probability measurements need a multi-scale weight matrix"));
        };
        let pair = PairKey::new(link, channel);
        let p = match (changes.get(&pair), fades.fade_level(pair)) {
            (Some(&dr), Some(f)) => {
                let (dir, p) = inside_probability(dr, f, params);
                if dir == direction {
                    p
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        values.push(p);
    }
    Ok(MeasurementVector { values })
}
