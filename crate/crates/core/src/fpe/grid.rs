use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Uniform tensor grid over a rectangle of joint angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid2D {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Nodes per dimension, boundaries included.
    pub points: usize,
}

impl Default for Grid2D {
    /// 31 x 31 nodes over `[-0.75, 0.75]^2`, spacing 0.05 rad.
    fn default() -> Self {
        Self {
            lower: [-0.75, -0.75],
            upper: [0.75, 0.75],
            points: 31,
        }
    }
}

impl Grid2D {
    pub fn new(lower: [f64; 2], upper: [f64; 2], points: usize) -> Result<Self> {
        let grid = Self { lower, upper, points };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 3 {
            return Err(Error::invalid(format!(
                "grid needs at least 3 points per dimension (got {})",
                self.points
            )));
        }
        for d in 0..2 {
            if !(self.lower[d].is_finite() && self.upper[d].is_finite())
                || self.upper[d] <= self.lower[d]
            {
                return Err(Error::invalid(format!(
                    "grid bounds must satisfy lower < upper in dimension {d}"
                )));
            }
        }
        Ok(())
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn spacing(&self, dim: usize) -> f64 {
        (self.upper[dim] - self.lower[dim]) / (self.points - 1) as f64
    }

    pub fn coordinate(&self, dim: usize, k: usize) -> f64 {
        self.lower[dim] + k as f64 * self.spacing(dim)
    }

    /// Flat index of node `(i, j)`; `i` runs along `q1`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.points + j
    }

    #[inline]
    pub fn unravel(&self, k: usize) -> (usize, usize) {
        (k / self.points, k % self.points)
    }

    pub fn node(&self, k: usize) -> Vector2<f64> {
        let (i, j) = self.unravel(k);
        Vector2::new(self.coordinate(0, i), self.coordinate(1, j))
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vector2<f64>> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }

    /// One-dimensional trapezoid weight of index `k` along `dim`.
    #[inline]
    pub fn weight(&self, dim: usize, k: usize) -> f64 {
        let h = self.spacing(dim);
        if k == 0 || k + 1 == self.points {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid weight of every node (the dual-cell area).
    pub fn volumes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (i, j) = self.unravel(k);
                self.weight(0, i) * self.weight(1, j)
            })
            .collect()
    }

    pub fn contains(&self, q: &Vector2<f64>) -> bool {
        (0..2).all(|d| q[d] >= self.lower[d] && q[d] <= self.upper[d])
    }

    fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Nonnegative density sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPdf {
    grid: Grid2D,
    values: Vec<f64>,
}

impl GridPdf {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} density values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("density values must be finite and >= 0 (got {v})")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Trapezoidal integral of the density.
    pub fn mass(&self) -> f64 {
        trapezoid_mass(&self.grid, &self.values)
    }

    /// Rescales to unit trapezoidal mass.
    pub fn normalized(mut self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::Numeric("cannot normalize a density with zero mass".into()));
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(self)
    }
}

pub(crate) fn trapezoid_mass(grid: &Grid2D, values: &[f64]) -> f64 {
    let n = grid.points;
    let mut total = 0.0;
    for i in 0..n {
        let wi = grid.weight(0, i);
        let row: f64 = (0..n).map(|j| grid.weight(1, j) * values[grid.index(i, j)]).sum();
        total += wi * row;
    }
    total
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Product-of-Gaussians density at every node, without renormalization.
pub fn gaussian_samples(grid: &Grid2D, mu: [f64; 2], sigma: [f64; 2]) -> Vec<f64> {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma[0] * sigma[1]);
    grid.nodes()
        .map(|q| {
            let z0 = (q[0] - mu[0]) / sigma[0];
            let z1 = (q[1] - mu[1]) / sigma[1];
            norm * (-0.5 * (z0 * z0 + z1 * z1)).exp()
        })
        .collect()
}

/// Gaussian density on the grid renormalized to unit discrete mass.
///
/// Rejects references whose analytic mass inside the grid is below one half.
pub fn gaussian_pdf(grid: &Grid2D, mu: [f64; 2], sigma: [f64; 2]) -> Result<GridPdf> {
    grid.validate()?;
    for d in 0..2 {
        if !(sigma[d].is_finite() && sigma[d] > 0.0) {
            return Err(Error::invalid(format!("sigma[{d}] must be > 0 (got {})", sigma[d])));
        }
        if !(mu[d] >= grid.lower[d] && mu[d] <= grid.upper[d]) {
            return Err(Error::invalid(format!(
                "mu[{d}] = {} lies outside the grid [{}, {}]",
                mu[d], grid.lower[d], grid.upper[d]
            )));
        }
    }
    let inside: f64 = (0..2)
        .map(|d| {
            normal_cdf((grid.upper[d] - mu[d]) / sigma[d])
                - normal_cdf((grid.lower[d] - mu[d]) / sigma[d])
        })
        .product();
    if inside < 0.5 {
        return Err(Error::invalid(format!(
            "only {:.1}% of the Gaussian mass lies inside the grid",
            100.0 * inside
        )));
    }
    GridPdf::new(*grid, gaussian_samples(grid, mu, sigma))?.normalized()
}

/// Trapezoidal mean and covariance.
pub fn moments(p: &GridPdf) -> (Vector2<f64>, Matrix2<f64>) {
    let grid = p.grid();
    let volumes = grid.volumes();
    let mass = p.mass();
    let mut mean = Vector2::zeros();
    for (k, (&v, &w)) in p.values().iter().zip(&volumes).enumerate() {
        mean += grid.node(k) * (v * w);
    }
    mean /= mass;
    let mut cov = Matrix2::zeros();
    for (k, (&v, &w)) in p.values().iter().zip(&volumes).enumerate() {
        let d = grid.node(k) - mean;
        cov += d * d.transpose() * (v * w);
    }
    (mean, cov / mass)
}

/// Plain sum of squared nodewise differences, with no quadrature weight.
pub fn l2_distance(p: &GridPdf, reference: &GridPdf) -> Result<f64> {
    p.grid().ensure_same(reference.grid())?;
    Ok(p.values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}
