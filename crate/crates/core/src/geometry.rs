//! Node layout, link enumeration and the voxel grid.
//!
//! Everything here is planar: node heights are ignored and voxels are
//! square cells of width `p` laid out row-major from the grid origin.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
}

/// Static node deployment. Ids are unique and coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLayout {
    nodes: Vec<Node>,
    by_id: HashMap<NodeId, usize>,
}

impl NodeLayout {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidLayout(format!(
                "need at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.pos.x.is_finite() || !n.pos.y.is_finite() {
                return Err(Error::InvalidLayout(format!("node {} has non-finite coordinates", n.id)));
            }
            if by_id.insert(n.id, i).is_some() {
                return Err(Error::InvalidLayout(format!("duplicate node id {}", n.id)));
            }
        }
        Ok(NodeLayout { nodes, by_id })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, id: NodeId) -> Option<Point> {
        self.by_id.get(&id).map(|&i| self.nodes[i].pos)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for n in &self.nodes {
            lo.x = lo.x.min(n.pos.x);
            lo.y = lo.y.min(n.pos.y);
            hi.x = hi.x.max(n.pos.x);
            hi.y = hi.y.max(n.pos.y);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tx: NodeId,
    pub rx: NodeId,
    pub tx_pos: Point,
    pub rx_pos: Point,
    /// Transmitter-receiver distance, always > 0.
    pub distance: f64,
}

impl Link {
    /// Focal sum minus link length: zero on the link segment, growing
    /// with distance from it.
    pub fn excess_path_length(&self, point: Point) -> f64 {
        let excess = point.distance(self.tx_pos) + point.distance(self.rx_pos) - self.distance;
        excess.max(0.0)
    }

    pub fn midpoint(&self) -> Point {
        Point::new(
            0.5 * (self.tx_pos.x + self.rx_pos.x),
            0.5 * (self.tx_pos.y + self.rx_pos.y),
        )
    }
}

/// In configuration files: `links = "all"` or `links = [[1, 2], [1, 3]]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "LinkSpec", into = "LinkSpec")]
pub enum LinkMode {
    #[default]
    /// One undirected link per unordered node pair.
    AllPairs,
    /// Caller-supplied `(tx, rx)` pairs, kept in the given order.
    Explicit(Vec<(NodeId, NodeId)>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LinkSpec {
    Keyword(String),
    Pairs(Vec<(NodeId, NodeId)>),
}

impl TryFrom<LinkSpec> for LinkMode {
    type Error = String;

    fn try_from(spec: LinkSpec) -> std::result::Result<Self, String> {
        match spec {
            LinkSpec::Keyword(k) if k == "all" => Ok(LinkMode::AllPairs),
            LinkSpec::Keyword(k) => Err(format!("expected \"all\" or a list of node pairs, got {k:?}")),
            LinkSpec::Pairs(p) => Ok(LinkMode::Explicit(p)),
        }
    }
}

impl From<LinkMode> for LinkSpec {
    fn from(mode: LinkMode) -> Self {
        match mode {
            LinkMode::AllPairs => LinkSpec::Keyword("all".into()),
            LinkMode::Explicit(p) => LinkSpec::Pairs(p),
        }
    }
}

/// Ordered set of undirected links. Records for `(a, b)` and `(b, a)`
/// resolve to the same link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTable {
    links: Vec<Link>,
    by_pair: HashMap<(NodeId, NodeId), usize>,
}

fn unordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LinkTable {
    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Link> {
        self.links.get(index)
    }

    /// Index of the link joining `a` and `b`, in either direction.
    pub fn find(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.by_pair.get(&unordered(a, b)).copied()
    }
}

pub fn enumerate_links(layout: &NodeLayout, mode: &LinkMode) -> Result<LinkTable> {
    if layout.len() < 2 {
        return Err(Error::InvalidLinks("fewer than 2 nodes".into()));
    }
    let pairs: Vec<(NodeId, NodeId)> = match mode {
        LinkMode::AllPairs => {
            let mut ids: Vec<NodeId> = layout.nodes().iter().map(|n| n.id).collect();
            ids.sort_unstable();
            let mut pairs = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    pairs.push((a, b));
                }
            }
            pairs
        }
        LinkMode::Explicit(list) => list.clone(),
    };

    let mut links = Vec::with_capacity(pairs.len());
    let mut by_pair = HashMap::with_capacity(pairs.len());
    let mut seen = HashSet::with_capacity(pairs.len());
    for (tx, rx) in pairs {
        if tx == rx {
            return Err(Error::InvalidLinks(format!("self-link on node {tx}")));
        }
        if !seen.insert(unordered(tx, rx)) {
            return Err(Error::InvalidLinks(format!("duplicate link {tx}-{rx}")));
        }
        let tx_pos = layout
            .position(tx)
            .ok_or_else(|| Error::InvalidLinks(format!("unknown node id {tx}")))?;
        let rx_pos = layout
            .position(rx)
            .ok_or_else(|| Error::InvalidLinks(format!("unknown node id {rx}")))?;
        let distance = tx_pos.distance(rx_pos);
        if distance <= 0.0 {
            return Err(Error::InvalidLinks(format!("nodes {tx} and {rx} are co-located")));
        }
        by_pair.insert(unordered(tx, rx), links.len());
        links.push(Link { tx, rx, tx_pos, rx_pos, distance });
    }
    Ok(LinkTable { links, by_pair })
}

/// Row-major square-voxel grid. Voxel `j` sits at column `j % nx`,
/// row `j / nx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: Point,
    pub voxel_width: f64,
    pub nx: usize,
    pub ny: usize,
}

impl VoxelGrid {
    pub fn new(origin: Point, voxel_width: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(voxel_width > 0.0 && voxel_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("voxel width must be > 0, got {voxel_width}")));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!("grid must be non-empty, got {nx}x{ny}")));
        }
        if nx.checked_mul(ny).is_none_or(|n| n > isize::MAX as usize / 8) {
            return Err(Error::InvalidGrid(format!("grid {nx}x{ny} is too large")));
        }
        if !origin.x.is_finite() || !origin.y.is_finite() {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        Ok(VoxelGrid { origin, voxel_width, nx, ny })
    }

    /// Bounding box of the nodes padded by one voxel on each side.
    pub fn covering(layout: &NodeLayout, voxel_width: f64) -> Result<Self> {
        if !(voxel_width > 0.0 && voxel_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("voxel width must be > 0, got {voxel_width}")));
        }
        let (lo, hi) = layout.bounds();
        let origin = Point::new(lo.x - voxel_width, lo.y - voxel_width);
        let span = |a: f64, b: f64| ((b - a) / voxel_width).ceil() as usize + 2;
        VoxelGrid::new(origin, voxel_width, span(lo.x, hi.x), span(lo.y, hi.y))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    pub fn cell(&self, j: usize) -> (usize, usize) {
        (j % self.nx, j / self.nx)
    }

    pub fn center(&self, j: usize) -> Point {
        let (ix, iy) = self.cell(j);
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.voxel_width,
            self.origin.y + (iy as f64 + 0.5) * self.voxel_width,
        )
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |j| self.center(j))
    }

    /// Voxels whose centers satisfy `d_tx + d_rx < d + lambda`, ascending.
    pub fn ellipse_membership(&self, link: &Link, lambda: f64) -> Vec<usize> {
        let mut members = Vec::new();
        if !(lambda >= 0.0) {
            return members;
        }
        let bound = link.distance + lambda;
        let mid = link.midpoint();
        let half_major = 0.5 * bound;
        let p = self.voxel_width;

        // index window covering the circumscribing circle, with one cell of slack
        let range = |c: f64, o: f64, n: usize| {
            let lo = ((c - half_major - o) / p - 0.5).floor() - 1.0;
            let hi = ((c + half_major - o) / p - 0.5).ceil() + 1.0;
            let lo = lo.max(0.0) as usize;
            let hi = if hi < 0.0 { 0 } else { (hi as usize).min(n.saturating_sub(1)) };
            (lo, hi)
        };
        let (x0, x1) = range(mid.x, self.origin.x, self.nx);
        let (y0, y1) = range(mid.y, self.origin.y, self.ny);
        if x0 > x1 || y0 > y1 {
            return members;
        }
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let j = self.index(ix, iy);
                let c = self.center(j);
                if c.distance(link.tx_pos) + c.distance(link.rx_pos) < bound {
                    members.push(j);
                }
            }
        }
        members
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(points: &[(f64, f64)]) -> NodeLayout {
        NodeLayout::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Node { id: i as NodeId + 1, pos: Point::new(x, y) })
                .collect(),
        )
        .unwrap()
    }

    fn brute_force(grid: &VoxelGrid, link: &Link, lambda: f64) -> Vec<usize> {
        (0..grid.nx * grid.ny)
            .filter(|&j| {
                let cx = grid.origin.x + ((j % grid.nx) as f64 + 0.5) * grid.voxel_width;
                let cy = grid.origin.y + ((j / grid.nx) as f64 + 0.5) * grid.voxel_width;
                let dt = ((cx - link.tx_pos.x).powi(2) + (cy - link.tx_pos.y).powi(2)).sqrt();
                let dr = ((cx - link.rx_pos.x).powi(2) + (cy - link.rx_pos.y).powi(2)).sqrt();
                dt + dr < link.distance + lambda
            })
            .collect()
    }

    #[test]
    fn all_pairs_counts() {
        let three = layout(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(enumerate_links(&three, &LinkMode::AllPairs).unwrap().len(), 3);

        let thirty: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, (i * i % 7) as f64)).collect();
        let table = enumerate_links(&layout(&thirty), &LinkMode::AllPairs).unwrap();
        assert_eq!(table.len(), 435);
    }

    #[test]
    fn all_pairs_ordering_is_by_min_then_max_id() {
        let nodes = vec![
            Node { id: 9, pos: Point::new(0.0, 0.0) },
            Node { id: 2, pos: Point::new(1.0, 0.0) },
            Node { id: 5, pos: Point::new(0.0, 1.0) },
        ];
        let table = enumerate_links(&NodeLayout::new(nodes).unwrap(), &LinkMode::AllPairs).unwrap();
        let pairs: Vec<_> = table.links().iter().map(|l| (l.tx, l.rx)).collect();
        assert_eq!(pairs, vec![(2, 5), (2, 9), (5, 9)]);
        assert_eq!(table.find(9, 5), Some(2));
        assert_eq!(table.find(5, 9), Some(2));
    }

    #[test]
    fn duplicate_node_id_rejected() {
        let nodes = vec![
            Node { id: 1, pos: Point::new(0.0, 0.0) },
            Node { id: 1, pos: Point::new(1.0, 0.0) },
            Node { id: 2, pos: Point::new(2.0, 0.0) },
        ];
        assert!(matches!(NodeLayout::new(nodes), Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn layout_needs_two_nodes_and_finite_coords() {
        assert!(NodeLayout::new(vec![Node { id: 1, pos: Point::new(0.0, 0.0) }]).is_err());
        let nodes = vec![
            Node { id: 1, pos: Point::new(0.0, f64::NAN) },
            Node { id: 2, pos: Point::new(1.0, 0.0) },
        ];
        assert!(NodeLayout::new(nodes).is_err());
    }

    #[test]
    fn explicit_links_validated() {
        let l = layout(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(enumerate_links(&l, &LinkMode::Explicit(vec![(1, 1)])).is_err());
        assert!(enumerate_links(&l, &LinkMode::Explicit(vec![(1, 7)])).is_err());
        assert!(enumerate_links(&l, &LinkMode::Explicit(vec![(1, 2), (2, 1)])).is_err());
        let t = enumerate_links(&l, &LinkMode::Explicit(vec![(3, 1)])).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.links()[0].distance, 2.0);
    }

    #[test]
    fn co_located_nodes_rejected() {
        let l = layout(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert!(enumerate_links(&l, &LinkMode::AllPairs).is_err());
    }

    #[test]
    fn excess_path_length_examples() {
        let l = layout(&[(0.0, 0.0), (4.0, 0.0)]);
        let link = enumerate_links(&l, &LinkMode::AllPairs).unwrap().links()[0];
        assert_eq!(link.excess_path_length(Point::new(2.0, 0.0)), 0.0);
        assert_eq!(link.excess_path_length(Point::new(0.0, 0.0)), 0.0);
        let expected = 2.0 * 5f64.sqrt() - 4.0;
        assert!((link.excess_path_length(Point::new(2.0, 1.0)) - expected).abs() < 1e-12);
        assert!((expected - 0.4721).abs() < 1e-4);
    }

    #[test]
    fn membership_at_zero_lambda_is_empty() {
        let l = layout(&[(0.0, 0.05), (1.0, 0.05)]);
        let link = enumerate_links(&l, &LinkMode::AllPairs).unwrap().links()[0];
        let grid = VoxelGrid::new(Point::new(0.0, 0.0), 0.1, 10, 10).unwrap();
        assert!(grid.ellipse_membership(&link, 0.0).is_empty());
    }

    #[test]
    fn large_lambda_covers_grid() {
        let l = layout(&[(0.0, 0.0), (1.0, 1.0)]);
        let link = enumerate_links(&l, &LinkMode::AllPairs).unwrap().links()[0];
        let grid = VoxelGrid::new(Point::new(0.0, 0.0), 0.1, 10, 10).unwrap();
        let all = grid.ellipse_membership(&link, 10.0);
        assert_eq!(all, brute_force(&grid, &link, 10.0));
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn covering_grid_pads_one_voxel() {
        let l = layout(&[(0.0, 0.0), (3.0, 0.0), (0.0, 2.0)]);
        let g = VoxelGrid::covering(&l, 0.5).unwrap();
        assert_eq!(g.origin, Point::new(-0.5, -0.5));
        assert_eq!((g.nx, g.ny), (8, 6));
        assert!(VoxelGrid::covering(&l, 0.0).is_err());
    }

    fn arb_geometry() -> impl Strategy<Value = (Vec<(f64, f64)>, f64, f64)> {
        (
            prop::collection::vec((-1.0f64..5.0, -1.0f64..5.0), 2..6),
            0.05f64..0.5,
            0.0f64..3.0,
        )
    }

    proptest! {
        #[test]
        fn membership_matches_brute_force((pts, p, lambda) in arb_geometry()) {
            let l = layout(&pts);
            let Ok(table) = enumerate_links(&l, &LinkMode::AllPairs) else { return Ok(()) };
            let grid = VoxelGrid::new(Point::new(-0.3, 0.1), p, 12, 9).unwrap();
            for link in table.links() {
                prop_assert_eq!(grid.ellipse_membership(link, lambda), brute_force(&grid, link, lambda));
            }
        }

        #[test]
        fn membership_monotone_in_lambda((pts, p, lambda) in arb_geometry(), extra in 0.0f64..2.0) {
            let l = layout(&pts);
            let Ok(table) = enumerate_links(&l, &LinkMode::AllPairs) else { return Ok(()) };
            let grid = VoxelGrid::covering(&l, p).unwrap();
            for link in table.links() {
                let small: HashSet<usize> = grid.ellipse_membership(link, lambda).into_iter().collect();
                let large: HashSet<usize> = grid.ellipse_membership(link, lambda + extra).into_iter().collect();
                prop_assert!(small.is_subset(&large));
            }
        }

        #[test]
        fn excess_path_length_nonnegative(
            (pts, _, _) in arb_geometry(),
            px in -5.0f64..10.0,
            py in -5.0f64..10.0,
            t in 0.0f64..=1.0,
        ) {
            let l = layout(&pts);
            let Ok(table) = enumerate_links(&l, &LinkMode::AllPairs) else { return Ok(()) };
            for link in table.links() {
                prop_assert!(link.excess_path_length(Point::new(px, py)) >= 0.0);
                let on = Point::new(
                    link.tx_pos.x + t * (link.rx_pos.x - link.tx_pos.x),
                    link.tx_pos.y + t * (link.rx_pos.y - link.tx_pos.y),
                );
                prop_assert!(link.excess_path_length(on) < 1e-9);
            }
        }

        #[test]
        fn voxel_index_round_trip(nx in 1usize..40, ny in 1usize..40, seed in any::<usize>()) {
            let grid = VoxelGrid::new(Point::new(0.0, 0.0), 0.2, nx, ny).unwrap();
            let j = seed % grid.len();
            let (ix, iy) = grid.cell(j);
            prop_assert_eq!(grid.index(ix, iy), j);
            let c = grid.center(j);
            prop_assert!(((c.x / 0.2) - 0.5 - ix as f64).abs() < 1e-9);
            prop_assert!(((c.y / 0.2) - 0.5 - iy as f64).abs() < 1e-9);
        }
    }
}
