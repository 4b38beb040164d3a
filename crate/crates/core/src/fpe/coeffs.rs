//! Face coefficients of the conservative flux form.
//!
//! The flux along dimension `d` is `P^d = sum_j C^{d,j} dp/dx_j + B^d p` with
//! `C = a / 2` and `B^d = 1/2 sum_j da_{dj}/dx_j - f_d`. Diagonal parts are
//! discretized with the Chang-Cooper weight `delta(w)`, `w = h B / C`.

use nalgebra::{Matrix2, Vector2};

use super::grid::Grid2D;
use crate::error::{Error, Result};

const SERIES_CUTOFF: f64 = 1e-4;

/// Chang-Cooper interpolation weight `1/w - 1/(exp(w) - 1)`.
///
/// Continuous at `w = 0` (value 1/2) and finite for any finite `w`.
pub fn chang_cooper_delta(w: f64) -> f64 {
    if w.abs() < SERIES_CUTOFF {
        return 0.5 - w / 12.0 + w * w * w / 720.0;
    }
    if w > 700.0 {
        return 1.0 / w;
    }
    1.0 / w - 1.0 / w.exp_m1()
}

/// Bernoulli function `w / (exp(w) - 1)`.
pub fn bernoulli(w: f64) -> f64 {
    if w.abs() < SERIES_CUTOFF {
        return 1.0 - 0.5 * w + w * w / 12.0;
    }
    if w > 700.0 {
        return w * (-w).exp();
    }
    w / w.exp_m1()
}

/// Coefficients on the interior faces of a grid.
///
/// Faces normal to `q1` join nodes `(i, j)` and `(i + 1, j)` and are stored at
/// `i * n + j`; faces normal to `q2` join `(i, j)` and `(i, j + 1)` and are
/// stored at `i * (n - 1) + j`.
#[derive(Debug, Clone)]
pub struct FluxCoefficients {
    pub grid: Grid2D,
    pub b: [Vec<f64>; 2],
    pub c_diag: [Vec<f64>; 2],
    pub delta: [Vec<f64>; 2],
    /// Off-diagonal `C^{1,2} = a_12 / 2` at the nodes.
    pub c_cross: Vec<f64>,
    /// Faces with zero diffusion, where delta falls back to the upwind limit.
    pub degenerate_faces: usize,
}

impl FluxCoefficients {
    pub fn face_count(&self, dim: usize) -> usize {
        self.b[dim].len()
    }

    /// Face index and the two node indices it joins (lower, upper).
    pub fn face_nodes(&self, dim: usize, face: usize) -> (usize, usize) {
        let n = self.grid.points;
        if dim == 0 {
            let (i, j) = (face / n, face % n);
            (self.grid.index(i, j), self.grid.index(i + 1, j))
        } else {
            let (i, j) = (face / (n - 1), face % (n - 1));
            (self.grid.index(i, j), self.grid.index(i, j + 1))
        }
    }

    /// Weights `(upper, lower)` of the face flux
    /// `P = upper * p_hi - lower * p_lo`, where
    /// `upper = (1 - delta) B + C / h` and `lower = C / h - delta B`.
    ///
    /// Evaluated through the Bernoulli function so both stay nonnegative.
    pub fn face_weights(&self, dim: usize, face: usize) -> (f64, f64) {
        let b = self.b[dim][face];
        let c = self.c_diag[dim][face];
        if c > 0.0 {
            let h = self.grid.spacing(dim);
            let w = h * b / c;
            let g = c / h;
            (g * bernoulli(-w), g * bernoulli(w))
        } else {
            (b.max(0.0), (-b).max(0.0))
        }
    }
}

fn derivative(grid: &Grid2D, values: &[f64], dim: usize, k: usize) -> f64 {
    let n = grid.points;
    let (i, j) = grid.unravel(k);
    let pos = if dim == 0 { i } else { j };
    let at = |p: usize| {
        if dim == 0 {
            values[grid.index(p, j)]
        } else {
            values[grid.index(i, p)]
        }
    };
    let h = grid.spacing(dim);
    if pos == 0 {
        (at(1) - at(0)) / h
    } else if pos == n - 1 {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(pos + 1) - at(pos - 1)) / (2.0 * h)
    }
}

/// Central-difference derivative of a nodal field (one-sided at the edges).
pub fn nodal_derivative(grid: &Grid2D, values: &[f64], dim: usize) -> Vec<f64> {
    (0..grid.len()).map(|k| derivative(grid, values, dim, k)).collect()
}

/// Builds face coefficients from drift and diffusion evaluated at every node.
pub fn flux_coefficients(
    grid: &Grid2D,
    drift: &[Vector2<f64>],
    diffusion: &[Matrix2<f64>],
) -> Result<FluxCoefficients> {
    grid.validate()?;
    let len = grid.len();
    if drift.len() != len || diffusion.len() != len {
        return Err(Error::invalid(format!(
            "fields must have one entry per node ({len}); got drift {} and diffusion {}",
            drift.len(),
            diffusion.len()
        )));
    }
    if drift.iter().any(|f| !f.iter().all(|v| v.is_finite()))
        || diffusion.iter().any(|a| !a.iter().all(|v| v.is_finite()))
    {
        return Err(Error::Numeric("non-finite drift or diffusion field".into()));
    }

    let component = |r: usize, c: usize| -> Vec<f64> { diffusion.iter().map(|a| a[(r, c)]).collect() };
    let a00 = component(0, 0);
    let a01 = component(0, 1);
    let a10 = component(1, 0);
    let a11 = component(1, 1);

    let d_a00 = nodal_derivative(grid, &a00, 0);
    let d_a01 = nodal_derivative(grid, &a01, 1);
    let d_a10 = nodal_derivative(grid, &a10, 0);
    let d_a11 = nodal_derivative(grid, &a11, 1);

    let node_b: [Vec<f64>; 2] = [
        (0..len).map(|k| 0.5 * (d_a00[k] + d_a01[k]) - drift[k][0]).collect(),
        (0..len).map(|k| 0.5 * (d_a10[k] + d_a11[k]) - drift[k][1]).collect(),
    ];
    let node_c = [&a00, &a11];

    let n = grid.points;
    let mut out = FluxCoefficients {
        grid: *grid,
        b: [Vec::new(), Vec::new()],
        c_diag: [Vec::new(), Vec::new()],
        delta: [Vec::new(), Vec::new()],
        c_cross: (0..len).map(|k| 0.25 * (a01[k] + a10[k])).collect(),
        degenerate_faces: 0,
    };
    for dim in 0..2 {
        let faces = (n - 1) * n;
        let h = grid.spacing(dim);
        let mut b = Vec::with_capacity(faces);
        let mut c = Vec::with_capacity(faces);
        let mut delta = Vec::with_capacity(faces);
        for face in 0..faces {
            let (lo, hi) = if dim == 0 {
                (grid.index(face / n, face % n), grid.index(face / n + 1, face % n))
            } else {
                (grid.index(face / (n - 1), face % (n - 1)), grid.index(face / (n - 1), face % (n - 1) + 1))
            };
            let bf = 0.5 * (node_b[dim][lo] + node_b[dim][hi]);
            let cf = 0.25 * (node_c[dim][lo] + node_c[dim][hi]);
            if cf < 0.0 {
                return Err(Error::invalid("diffusion diagonal must be nonnegative"));
            }
            let d = if cf > 0.0 {
                chang_cooper_delta(h * bf / cf)
            } else {
                out.degenerate_faces += 1;
                if bf > 0.0 {
                    0.0
                } else if bf < 0.0 {
                    1.0
                } else {
                    0.5
                }
            };
            b.push(bf);
            c.push(cf);
            delta.push(d);
        }
        out.b[dim] = b;
        out.c_diag[dim] = c;
        out.delta[dim] = delta;
    }
    if out.degenerate_faces > 0 {
        log::debug!("{} faces without diffusion use the upwind limit", out.degenerate_faces);
    }
    Ok(out)
}
