//! Ellipse weight models.
//!
//! The classic model gives every link the same excess path length and a
//! weight of `1/sqrt(d)` inside its ellipse. The multi-scale model sizes
//! each (channel, link, direction) ellipse from the link's fade level and
//! weights it by the inverse of the ellipse area.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::{Channel, FadeLevelTable, PairKey};
use crate::error::{Error, Result};
use crate::geometry::{LinkTable, VoxelGrid};

/// Direction of an RSS change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// RSS increased.
    Plus,
    /// RSS decreased (attenuation).
    Minus,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Plus => "+",
            Direction::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipseModelParams {
    pub k_lambda_minus: f64,
    pub b_lambda_minus: f64,
    pub k_lambda_plus: f64,
    pub b_lambda_plus: f64,
    /// Upper bound on any excess path length, meters.
    pub lambda_max: f64,
}

impl Default for EllipseModelParams {
    fn default() -> Self {
        EllipseModelParams {
            k_lambda_minus: -5.7874,
            b_lambda_minus: 0.2112,
            k_lambda_plus: 102.7284,
            b_lambda_plus: 0.5016,
            lambda_max: 3.0,
        }
    }
}

impl EllipseModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.k_lambda_minus,
            self.b_lambda_minus,
            self.k_lambda_plus,
            self.b_lambda_plus,
            self.lambda_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("ellipse", "non-finite value"));
        }
        if !(self.b_lambda_minus > 0.0) {
            return Err(Error::param("b_lambda_minus", "must be > 0"));
        }
        if !(self.b_lambda_plus > 0.0) {
            return Err(Error::param("b_lambda_plus", "must be > 0"));
        }
        if !(self.k_lambda_minus < 0.0) {
            return Err(Error::param("k_lambda_minus", "must be < 0"));
        }
        if !(self.k_lambda_plus > 0.0) {
            return Err(Error::param("k_lambda_plus", "must be > 0"));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::param("lambda_max", "must be > 0"));
        }
        Ok(())
    }

    /// Excess path length before clamping.
    pub fn lambda_unclamped(&self, fade_level: f64, direction: Direction) -> f64 {
        let (k, b) = match direction {
            Direction::Minus => (self.k_lambda_minus, self.b_lambda_minus),
            Direction::Plus => (self.k_lambda_plus, self.b_lambda_plus),
        };
        b * (fade_level / k).exp()
    }
}

/// Ellipse excess path length for a link with the given fade level and
/// direction of RSS change, clamped to `lambda_max`.
pub fn lambda_for(fade_level: f64, direction: Direction, params: &EllipseModelParams) -> f64 {
    params.lambda_unclamped(fade_level, direction).min(params.lambda_max)
}

/// What a weight-matrix row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowKey {
    Link { link: usize },
    Channel { channel: Channel, link: usize },
    Directional { channel: Channel, link: usize, direction: Direction },
}

impl RowKey {
    pub fn link(&self) -> usize {
        match *self {
            RowKey::Link { link } | RowKey::Channel { link, .. } | RowKey::Directional { link, .. } => link,
        }
    }

    pub fn channel(&self) -> Option<Channel> {
        match *self {
            RowKey::Link { .. } => None,
            RowKey::Channel { channel, .. } | RowKey::Directional { channel, .. } => Some(channel),
        }
    }
}

/// Sparse row-major weight operator with one labeled row per measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    keys: Vec<RowKey>,
    skipped: Vec<PairKey>,
}

impl WeightMatrix {
    fn with_cols(ncols: usize) -> Self {
        WeightMatrix {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            keys: Vec::new(),
            skipped: Vec::new(),
        }
    }

    fn push_row(&mut self, key: RowKey, members: &[usize], value: f64) {
        self.cols.extend_from_slice(members);
        self.vals.extend(std::iter::repeat_n(value, members.len()));
        self.row_ptr.push(self.cols.len());
        self.keys.push(key);
    }

    /// Builds a matrix from explicit rows; used by tests and file loaders.
    pub fn from_rows(ncols: usize, rows: Vec<(RowKey, Vec<(usize, f64)>)>) -> Result<Self> {
        let mut m = WeightMatrix::with_cols(ncols);
        for (key, mut entries) in rows {
            entries.sort_by_key(|e| e.0);
            for w in entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::param("weights", format!("duplicate column {}", w[0].0)));
                }
            }
            for &(c, v) in &entries {
                if c >= ncols {
                    return Err(Error::param("weights", format!("column {c} out of range")));
                }
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::param("weights", format!("weight {v} must be finite and >= 0")));
                }
                m.cols.push(c);
                m.vals.push(v);
            }
            m.row_ptr.push(m.cols.len());
            m.keys.push(key);
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.keys.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn row_of(&self, key: RowKey) -> Option<usize> {
        self.keys.iter().position(|k| *k == key)
    }

    /// (link, channel) pairs left out because they have no calibration.
    pub fn skipped(&self) -> &[PairKey] {
        &self.skipped
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|r| {
                let mut row = vec![0.0; self.ncols];
                let (c, v) = self.row(r);
                for (&j, &w) in c.iter().zip(v) {
                    row[j] = w;
                }
                row
            })
            .collect()
    }
}

fn classic_row_value(distance: f64) -> f64 {
    1.0 / distance.sqrt()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("must be finite and >= 0, got {lambda}")))
    }
}

/// Fixed-λ ellipse model, one row per link.
pub fn build_classic_weights(links: &LinkTable, grid: &VoxelGrid, lambda: f64) -> Result<WeightMatrix> {
    check_lambda(lambda)?;
    let mut m = WeightMatrix::with_cols(grid.len());
    for (l, link) in links.links().iter().enumerate() {
        let members = grid.ellipse_membership(link, lambda);
        m.push_row(RowKey::Link { link: l }, &members, classic_row_value(link.distance));
    }
    Ok(m)
}

/// Fixed-λ ellipse model with every calibrated (channel, link) pair as its
/// own row: channels ascending, links in table order.
pub fn build_classic_weights_per_channel(
    links: &LinkTable,
    grid: &VoxelGrid,
    lambda: f64,
    fades: &FadeLevelTable,
) -> Result<WeightMatrix> {
    check_lambda(lambda)?;
    let memberships: Vec<Vec<usize>> =
        links.links().iter().map(|link| grid.ellipse_membership(link, lambda)).collect();
    let mut m = WeightMatrix::with_cols(grid.len());
    for &channel in fades.channels() {
        for (l, link) in links.links().iter().enumerate() {
            let key = PairKey::new(l, channel);
            if fades.get(key).is_none() {
                m.skipped.push(key);
                continue;
            }
            m.push_row(RowKey::Channel { channel, link: l }, &memberships[l], classic_row_value(link.distance));
        }
    }
    Ok(m)
}

/// Multi-scale model: for each channel (ascending) a block of `+` rows then
/// a block of `-` rows, links in table order within each block. Each row is
/// `1/(n_j p^2)` on its `n_j` member voxels.
pub fn build_multiscale_weights(
    links: &LinkTable,
    grid: &VoxelGrid,
    fades: &FadeLevelTable,
    params: &EllipseModelParams,
) -> Result<WeightMatrix> {
    params.validate()?;
    let voxel_area = grid.voxel_width * grid.voxel_width;
    let mut m = WeightMatrix::with_cols(grid.len());
    for &channel in fades.channels() {
        for direction in [Direction::Plus, Direction::Minus] {
            for (l, link) in links.links().iter().enumerate() {
                let key = PairKey::new(l, channel);
                let Some(fade) = fades.fade_level(key) else {
                    if direction == Direction::Plus {
                        m.skipped.push(key);
                    }
                    continue;
                };
                let lambda = lambda_for(fade, direction, params);
                let members = grid.ellipse_membership(link, lambda);
                let value = if members.is_empty() {
                    0.0
                } else {
                    1.0 / (members.len() as f64 * voxel_area)
                };
                m.push_row(RowKey::Directional { channel, link: l, direction }, &members, value);
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::PathLossFit;
    use crate::geometry::{enumerate_links, LinkMode, Node, NodeLayout, Point};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn net(points: &[(f64, f64)]) -> (NodeLayout, LinkTable) {
        let layout = NodeLayout::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Node { id: i as u32, pos: Point::new(x, y) })
                .collect(),
        )
        .unwrap();
        let links = enumerate_links(&layout, &LinkMode::AllPairs).unwrap();
        (layout, links)
    }

    fn fades_with(links: &LinkTable, channels: &[i64], fade: impl Fn(usize, Channel) -> Option<f64>) -> FadeLevelTable {
        let fit = PathLossFit { eta: 2.0, p0: 40.0, d0: 1.0 };
        let channels: Vec<Channel> = channels.iter().map(|&c| Channel::new(c).unwrap()).collect();
        let mut means = BTreeMap::new();
        for (l, link) in links.links().iter().enumerate() {
            for &c in &channels {
                if let Some(f) = fade(l, c) {
                    means.insert(PairKey::new(l, c), (fit.predict(link.distance, c) + f, 10));
                }
            }
        }
        FadeLevelTable::from_means(fit, channels, means, links).unwrap()
    }

    #[test]
    fn lambda_anchors() {
        let p = EllipseModelParams::default();
        assert!((lambda_for(8.0, Direction::Minus, &p) - 0.0530).abs() < 5e-4);
        assert!((lambda_for(-8.0, Direction::Minus, &p) - 0.8413).abs() < 1e-3);
        assert_eq!(lambda_for(0.0, Direction::Plus, &p), 0.5016);
        assert!((lambda_for(8.0, Direction::Plus, &p) - 0.5422).abs() < 1e-4);
    }

    #[test]
    fn lambda_clamped() {
        let p = EllipseModelParams::default();
        assert!(p.lambda_unclamped(-20.0, Direction::Minus) > 6.0);
        assert_eq!(lambda_for(-20.0, Direction::Minus, &p), 3.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = EllipseModelParams::default();
        p.k_lambda_minus = 1.0;
        assert!(p.validate().is_err());
        let mut p = EllipseModelParams::default();
        p.b_lambda_plus = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn classic_weights_value_and_shape() {
        let (_, links) = net(&[(0.0, 0.5), (4.0, 0.5)]);
        let grid = VoxelGrid::new(Point::new(0.0, 0.0), 0.25, 16, 4).unwrap();
        let a = build_classic_weights(&links, &grid, 0.3).unwrap();
        assert_eq!(a.nrows(), 1);
        let (cols, vals) = a.row(0);
        assert!(!cols.is_empty());
        assert!(vals.iter().all(|&v| v == 0.5));
        let a0 = build_classic_weights(&links, &grid, 0.0).unwrap();
        assert!(a0.nnz() <= 1);
        assert!(build_classic_weights(&links, &grid, -1.0).is_err());
    }

    #[test]
    fn classic_weights_match_brute_force() {
        let pts = [(0.0, 0.0), (3.0, 0.2), (3.1, 2.9), (0.1, 3.0), (1.5, -0.1), (3.2, 1.4), (1.4, 3.1), (-0.2, 1.6)];
        let (_, links) = net(&pts);
        let grid = VoxelGrid::new(Point::new(-0.2, -0.2), 0.34, 10, 10).unwrap();
        let lambda = 0.2;
        let dense = build_classic_weights(&links, &grid, lambda).unwrap().to_dense();
        for (l, link) in links.links().iter().enumerate() {
            for j in 0..grid.len() {
                let (cx, cy) = (
                    -0.2 + ((j % 10) as f64 + 0.5) * 0.34,
                    -0.2 + ((j / 10) as f64 + 0.5) * 0.34,
                );
                let dt = ((cx - link.tx_pos.x).powi(2) + (cy - link.tx_pos.y).powi(2)).sqrt();
                let dr = ((cx - link.rx_pos.x).powi(2) + (cy - link.rx_pos.y).powi(2)).sqrt();
                let expect = if dt + dr < link.distance + lambda { 1.0 / link.distance.sqrt() } else { 0.0 };
                assert_eq!(dense[l][j], expect, "link {l} voxel {j}");
            }
        }
    }

    #[test]
    fn multiscale_row_value() {
        // n_j = 50 at p = 0.1524
        let v = 1.0 / (50.0 * 0.1524f64.powi(2));
        assert!((v - 0.8611).abs() < 1e-4);
    }

    #[test]
    fn multiscale_layout_and_ordering() {
        let (_, links) = net(&[(0.0, 0.0), (4.0, 0.0), (2.0, 3.0)]);
        let grid = VoxelGrid::new(Point::new(-0.5, -0.5), 0.1524, 34, 27).unwrap();
        let fades = fades_with(&links, &[22, 11], |l, _| Some(l as f64 * 4.0 - 4.0));
        let w = build_multiscale_weights(&links, &grid, &fades, &EllipseModelParams::default()).unwrap();
        assert_eq!(w.nrows(), 2 * links.len() * 2);
        let c11 = Channel::new(11).unwrap();
        let c22 = Channel::new(22).unwrap();
        let expected: Vec<RowKey> = [c11, c22]
            .iter()
            .flat_map(|&channel| {
                [Direction::Plus, Direction::Minus].into_iter().flat_map(move |direction| {
                    (0..3).map(move |link| RowKey::Directional { channel, link, direction })
                })
            })
            .collect();
        assert_eq!(w.row_keys(), expected.as_slice());
    }

    #[test]
    fn anti_fade_minus_ellipse_is_smaller() {
        let (_, links) = net(&[(0.0, 0.0), (5.0, 0.0)]);
        let grid = VoxelGrid::new(Point::new(-1.0, -2.0), 0.1524, 50, 27).unwrap();
        let fades = fades_with(&links, &[15], |_, _| Some(8.0));
        let w = build_multiscale_weights(&links, &grid, &fades, &EllipseModelParams::default()).unwrap();
        let c = Channel::new(15).unwrap();
        let plus = w.row(w.row_of(RowKey::Directional { channel: c, link: 0, direction: Direction::Plus }).unwrap());
        let minus = w.row(w.row_of(RowKey::Directional { channel: c, link: 0, direction: Direction::Minus }).unwrap());
        assert!(minus.0.len() <= plus.0.len());
        assert!(!minus.0.is_empty());
    }

    #[test]
    fn uncalibrated_pairs_skipped() {
        let (_, links) = net(&[(0.0, 0.0), (4.0, 0.0), (2.0, 3.0)]);
        let grid = VoxelGrid::new(Point::new(-0.5, -0.5), 0.2, 25, 20).unwrap();
        let fades = fades_with(&links, &[11, 26], |l, c| (l != 1 || c.number() != 26).then_some(0.0));
        let w = build_multiscale_weights(&links, &grid, &fades, &EllipseModelParams::default()).unwrap();
        assert_eq!(w.nrows(), 2 * 5);
        assert_eq!(w.skipped(), &[PairKey::new(1, Channel::new(26).unwrap())]);
        let a = build_classic_weights_per_channel(&links, &grid, 0.02, &fades).unwrap();
        assert_eq!(a.nrows(), 5);
        assert_eq!(a.skipped(), w.skipped());
    }

    #[test]
    fn empty_ellipse_gives_zero_row() {
        // link far outside the grid
        let (_, links) = net(&[(100.0, 100.0), (104.0, 100.0)]);
        let grid = VoxelGrid::new(Point::new(0.0, 0.0), 0.2, 5, 5).unwrap();
        let fades = fades_with(&links, &[11, 12], |_, c| Some(c.number() as f64));
        let w = build_multiscale_weights(&links, &grid, &fades, &EllipseModelParams::default()).unwrap();
        assert_eq!(w.nrows(), 4);
        assert_eq!(w.nnz(), 0);
    }

    proptest! {
        #[test]
        fn lambda_monotone(f1 in -30.0f64..30.0, df in 0.01f64..10.0) {
            let p = EllipseModelParams::default();
            prop_assert!(p.lambda_unclamped(f1 + df, Direction::Minus) < p.lambda_unclamped(f1, Direction::Minus));
            prop_assert!(p.lambda_unclamped(f1 + df, Direction::Plus) > p.lambda_unclamped(f1, Direction::Plus));
        }

        #[test]
        fn multiscale_rows_constant_on_support(
            pts in prop::collection::vec((0.0f64..4.0, 0.0f64..4.0), 3..6),
            fade_seed in prop::collection::vec(-15.0f64..15.0, 40),
        ) {
            let (_, links) = net(&pts);
            let grid = VoxelGrid::new(Point::new(-0.2, -0.2), 0.2, 22, 22).unwrap();
            let fades = fades_with(&links, &[11, 20], |l, c| Some(fade_seed[(l * 2 + c.number() as usize) % 40]));
            let w = build_multiscale_weights(&links, &grid, &fades, &EllipseModelParams::default()).unwrap();
            let area = grid.voxel_width * grid.voxel_width;
            for (r, key) in w.row_keys().iter().enumerate() {
                let RowKey::Directional { channel, link, direction } = *key else { unreachable!() };
                let f = fades.fade_level(PairKey::new(link, channel)).unwrap();
                let lambda = lambda_for(f, direction, &EllipseModelParams::default());
                let members = grid.ellipse_membership(&links.links()[link], lambda);
                let (cols, vals) = w.row(r);
                prop_assert_eq!(cols, members.as_slice());
                if !cols.is_empty() {
                    let expect = 1.0 / (cols.len() as f64 * area);
                    prop_assert!(vals.iter().all(|&v| v == expect && v >= 0.0));
                    let sum: f64 = vals.iter().sum();
                    prop_assert!((sum - 1.0 / area).abs() < 1e-9 * sum);
                }
            }
        }
    }
}
