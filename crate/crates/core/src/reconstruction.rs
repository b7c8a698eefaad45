//! Regularized least-squares image reconstruction.
//!
//! The operator `Pi = (W'W + sigma_N^2 C^-1)^-1 W'` is formed once per
//! weight matrix with two Cholesky factorizations; every frame afterwards
//! costs a single matrix-vector product.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{ColRef, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::measurement_model::MeasurementVector;
use crate::spatial_model::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionParams {
    /// Voxel width p, meters.
    pub voxel_width: f64,
    /// Prior voxel standard deviation, dB.
    pub sigma_x: f64,
    /// Noise standard deviation, dB.
    pub sigma_n: f64,
    /// Correlation distance of the prior, meters.
    pub correlation_distance: f64,
}

impl Default for ReconstructionParams {
    // σ_N is the published 1.4142, not a stand-in for √2
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        ReconstructionParams { voxel_width: 0.1524, sigma_x: 0.0316, sigma_n: 1.4142, correlation_distance: 4.0 }
    }
}

impl ReconstructionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("voxel_width", self.voxel_width),
            ("sigma_x", self.sigma_x),
            ("sigma_n", self.sigma_n),
            ("correlation_distance", self.correlation_distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Exponentially decaying prior covariance between voxel centers.
pub fn prior_covariance(grid: &VoxelGrid, params: &ReconstructionParams) -> Result<Mat<f64>> {
    params.validate()?;
    let var = params.sigma_x * params.sigma_x;
    let n = grid.len();
    let centers: Vec<_> = grid.centers().collect();
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            var
        } else {
            var * (-centers[i].distance(centers[j]) / params.correlation_distance).exp()
        }
    }))
}

/// `sigma_N^2 C^-1`, shared by every operator built on the same grid.
#[derive(Debug, Clone)]
pub struct PriorPrecision {
    grid: VoxelGrid,
    precision: Mat<f64>,
}

impl PriorPrecision {
    pub fn new(grid: &VoxelGrid, params: &ReconstructionParams) -> Result<Self> {
        let cov = prior_covariance(grid, params)?;
        let llt = cov.llt(Side::Lower).map_err(|e| Error::Factorization {
            what: "prior covariance",
            diagnostics: format!("{e:?}; {}", diagonal_summary(cov.as_ref())),
        })?;
        let mut precision = llt.inverse();
        let noise_var = params.sigma_n * params.sigma_n;
        for j in 0..precision.ncols() {
            for v in precision.col_mut(j).iter_mut() {
                *v *= noise_var;
            }
        }
        Ok(PriorPrecision { grid: *grid, precision })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.precision.as_ref()
    }
}

fn diagonal_summary(m: MatRef<'_, f64>) -> String {
    let n = m.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        lo = lo.min(m[(i, i)]);
        hi = hi.max(m[(i, i)]);
    }
    format!("n = {n}, diagonal in [{lo:e}, {hi:e}], ratio {:e}", hi / lo)
}

/// Dense `N x rows` linear map from measurements to images.
#[derive(Debug, Clone)]
pub struct ReconstructionOperator {
    pi: Mat<f64>,
}

impl ReconstructionOperator {
    pub fn nvoxels(&self) -> usize {
        self.pi.nrows()
    }

    pub fn nrows(&self) -> usize {
        self.pi.ncols()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.pi.as_ref()
    }

    pub fn entry(&self, voxel: usize, row: usize) -> f64 {
        self.pi[(voxel, row)]
    }
}

pub fn build_operator(
    weights: &WeightMatrix,
    grid: &VoxelGrid,
    params: &ReconstructionParams,
) -> Result<ReconstructionOperator> {
    let prior = PriorPrecision::new(grid, params)?;
    build_operator_with_prior(weights, &prior)
}

pub fn build_operator_with_prior(weights: &WeightMatrix, prior: &PriorPrecision) -> Result<ReconstructionOperator> {
    let n = prior.grid.len();
    if weights.ncols() != n {
        return Err(Error::LengthMismatch { expected: n, actual: weights.ncols() });
    }
    let rows = weights.nrows();

    // lower triangle of W'W + sigma_N^2 C^-1; each sparse row contributes
    // an outer product over its (ascending) support
    let mut normal = prior.precision.clone();
    for r in 0..rows {
        let (cols, vals) = weights.row(r);
        for b in 0..cols.len() {
            let mut col = normal.col_mut(cols[b]);
            let vb = vals[b];
            for a in b..cols.len() {
                col[cols[a]] += vals[a] * vb;
            }
        }
    }

    let llt = normal.llt(Side::Lower).map_err(|e| Error::Factorization {
        what: "regularized normal matrix",
        diagnostics: format!("{e:?}; {}", diagonal_summary(normal.as_ref())),
    })?;
    drop(normal);

    let mut pi = Mat::<f64>::zeros(n, rows);
    for r in 0..rows {
        let (cols, vals) = weights.row(r);
        let mut col = pi.col_mut(r);
        for (&j, &v) in cols.iter().zip(vals) {
            col[j] = v;
        }
    }
    llt.solve_in_place(pi.as_mut());
    Ok(ReconstructionOperator { pi })
}

/// Voxel attenuation-change estimate, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub values: Vec<f64>,
}

impl Image {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn reconstruct(op: &ReconstructionOperator, y: &MeasurementVector) -> Result<Image> {
    reconstruct_values(op, &y.values)
}

pub fn reconstruct_values(op: &ReconstructionOperator, y: &[f64]) -> Result<Image> {
    if y.len() != op.nrows() {
        return Err(Error::LengthMismatch { expected: op.nrows(), actual: y.len() });
    }
    let x = &op.pi * ColRef::from_slice(y);
    Ok(Image { values: x.iter().copied().collect() })
}

/// Reconstructs many frames with one matrix product.
pub fn reconstruct_batch(op: &ReconstructionOperator, ys: &[Vec<f64>]) -> Result<Vec<Image>> {
    let rows = op.nrows();
    if let Some(bad) = ys.iter().find(|y| y.len() != rows) {
        return Err(Error::LengthMismatch { expected: rows, actual: bad.len() });
    }
    let stacked = Mat::from_fn(rows, ys.len(), |i, t| ys[t][i]);
    let out = &op.pi * &stacked;
    Ok((0..ys.len())
        .map(|t| Image { values: out.col(t).iter().copied().collect() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_links, LinkMode, Node, NodeLayout, Point};
    use crate::spatial_model::{build_classic_weights, RowKey};
    use nalgebra::DMatrix;

    fn small_setup() -> (VoxelGrid, WeightMatrix) {
        let pts = [(0.0, 0.0), (1.5, -0.05), (1.55, 1.5), (0.0, 1.5), (0.75, 0.0), (1.5, 0.7), (0.7, 1.55), (-0.05, 0.8)];
        let layout = NodeLayout::new(
            pts.iter()
                .enumerate()
                .map(|(i, &(x, y))| Node { id: i as u32, pos: Point::new(x, y) })
                .collect(),
        )
        .unwrap();
        let links = enumerate_links(&layout, &LinkMode::AllPairs).unwrap();
        let grid = VoxelGrid::new(Point::new(-0.05, -0.05), 0.16, 10, 10).unwrap();
        let w = build_classic_weights(&links, &grid, 0.1).unwrap();
        (grid, w)
    }

    #[test]
    fn covariance_entries() {
        let grid = VoxelGrid::new(Point::new(0.0, 0.0), 4.0, 3, 3).unwrap();
        let p = ReconstructionParams::default();
        let c = prior_covariance(&grid, &p).unwrap();
        assert!((c[(0, 0)] - 9.986e-4).abs() < 1e-6);
        // neighbours at exactly the correlation distance
        assert!((c[(0, 1)] - p.sigma_x.powi(2) / std::f64::consts::E).abs() < 1e-15);
        for i in 0..9 {
            for j in 0..9 {
                let (xi, yi) = ((i % 3) as f64 * 4.0, (i / 3) as f64 * 4.0);
                let (xj, yj) = ((j % 3) as f64 * 4.0, (j / 3) as f64 * 4.0);
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                let expect = p.sigma_x.powi(2) * (-d / 4.0).exp();
                assert!((c[(i, j)] - expect).abs() < 1e-18);
                assert_eq!(c[(i, j)], c[(j, i)]);
            }
        }
    }

    #[test]
    fn covariance_positive_definite() {
        for (nx, ny, pw) in [(3, 3, 0.1524), (5, 4, 0.5), (6, 6, 1.0)] {
            let grid = VoxelGrid::new(Point::new(0.0, 0.0), pw, nx, ny).unwrap();
            let c = prior_covariance(&grid, &ReconstructionParams::default()).unwrap();
            let n = grid.len();
            let m = DMatrix::from_fn(n, n, |i, j| c[(i, j)]);
            let min = m.symmetric_eigenvalues().min();
            assert!(min > 0.0, "{nx}x{ny}: {min}");
        }
    }

    #[test]
    fn operator_matches_dense_closed_form() {
        let (grid, w) = small_setup();
        let params = ReconstructionParams::default();
        let op = build_operator(&w, &grid, &params).unwrap();

        let n = grid.len();
        let a = DMatrix::from_fn(w.nrows(), n, |r, j| w.to_dense()[r][j]);
        let c = DMatrix::from_fn(n, n, |i, j| {
            let (ci, cj) = (grid.center(i), grid.center(j));
            let d = ((ci.x - cj.x).powi(2) + (ci.y - cj.y).powi(2)).sqrt();
            params.sigma_x.powi(2) * (-d / params.correlation_distance).exp()
        });
        let cinv = c.try_inverse().unwrap();
        let h = a.transpose() * &a + cinv * params.sigma_n.powi(2);
        let expected = h.try_inverse().unwrap() * a.transpose();
        let mut max = 0.0f64;
        for i in 0..n {
            for r in 0..w.nrows() {
                max = max.max((op.entry(i, r) - expected[(i, r)]).abs());
            }
        }
        assert!(max <= 1e-8, "max abs difference {max}");
    }

    #[test]
    fn zero_weights_give_zero_operator() {
        let grid = VoxelGrid::new(Point::new(0.0, 0.0), 0.2, 4, 4).unwrap();
        let w = WeightMatrix::from_rows(16, vec![(RowKey::Link { link: 0 }, vec![]); 3]).unwrap();
        let op = build_operator(&w, &grid, &ReconstructionParams::default()).unwrap();
        assert!(op.matrix().col_iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn heavy_regularization_shrinks_operator() {
        let (grid, w) = small_setup();
        let loose = build_operator(&w, &grid, &ReconstructionParams::default()).unwrap();
        let tight = build_operator(&w, &grid, &ReconstructionParams { sigma_n: 1e6, ..Default::default() }).unwrap();
        let max = |op: &ReconstructionOperator| {
            op.matrix().col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).fold(0.0f64, |m, v| m.max(v.abs()))
        };
        assert!(max(&tight) < 1e-9 * max(&loose).max(1.0));
    }

    #[test]
    fn reconstruction_is_linear() {
        let (grid, w) = small_setup();
        let op = build_operator(&w, &grid, &ReconstructionParams::default()).unwrap();
        let y1: Vec<f64> = (0..w.nrows()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y2: Vec<f64> = (0..w.nrows()).map(|i| ((i * 13) % 7) as f64 * 0.3).collect();
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let twice: Vec<f64> = y1.iter().map(|a| 2.0 * a).collect();
        let x1 = reconstruct_values(&op, &y1).unwrap();
        let x2 = reconstruct_values(&op, &y2).unwrap();
        let xs = reconstruct_values(&op, &sum).unwrap();
        let x2y = reconstruct_values(&op, &twice).unwrap();
        for j in 0..grid.len() {
            assert!((xs.values[j] - x1.values[j] - x2.values[j]).abs() <= 1e-12);
            assert!((x2y.values[j] - 2.0 * x1.values[j]).abs() <= 1e-12);
        }
        let zero = reconstruct_values(&op, &vec![0.0; w.nrows()]).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let batch = reconstruct_batch(&op, &[y1.clone(), y2.clone()]).unwrap();
        for j in 0..grid.len() {
            assert!((batch[0].values[j] - x1.values[j]).abs() <= 1e-12);
            assert!((batch[1].values[j] - x2.values[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let (grid, w) = small_setup();
        let op = build_operator(&w, &grid, &ReconstructionParams::default()).unwrap();
        assert!(matches!(
            reconstruct_values(&op, &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        let other = VoxelGrid::new(Point::new(0.0, 0.0), 0.2, 3, 3).unwrap();
        assert!(build_operator(&w, &other, &ReconstructionParams::default()).is_err());
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let (grid, w) = small_setup();
        let a = build_operator(&w, &grid, &ReconstructionParams::default()).unwrap();
        let b = build_operator(&w, &grid, &ReconstructionParams::default()).unwrap();
        assert!(a.matrix() == b.matrix());
    }
}
