use nalgebra::{Matrix2, Vector2};

use super::banded::BandMatrix;
use super::coeffs::{flux_coefficients, nodal_derivative, FluxCoefficients};
use super::grid::{trapezoid_mass, GridPdf};
use crate::error::{Error, Result};

/// Values in `[-NEGATIVE_TOLERANCE, 0)` are clamped to zero after a solve;
/// anything lower is a positivity violation.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Largest accepted change of total mass over one step, before renormalization.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Implicit system for one time step.
///
/// Each node carries a dual cell of area `volumes[k]` (the trapezoid weight).
/// `flux` maps nodal densities to the net face flux into each cell, so its
/// column sums vanish and the trapezoidal mass is conserved. The step solves
/// `matrix * p_next = rhs` with `matrix = alpha * diag(volumes) - flux`.
#[derive(Debug, Clone)]
pub struct StepSystem {
    pub matrix: BandMatrix,
    pub rhs: Vec<f64>,
    pub volumes: Vec<f64>,
    /// True when the three-level BDF2 formula was used.
    pub bdf2: bool,
}

impl StepSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn solve(self) -> Result<Vec<f64>> {
        self.matrix.solve(&self.rhs)
    }
}

/// Net flux of the diagonal (implicit) part into every cell.
pub fn flux_operator(coeffs: &FluxCoefficients) -> BandMatrix {
    let mut flux = BandMatrix::zeros(coeffs.grid.len(), coeffs.grid.points);
    add_flux(coeffs, &mut flux, 1.0);
    flux
}

/// Adds `sign` times the flux operator to `target`.
fn add_flux(coeffs: &FluxCoefficients, target: &mut BandMatrix, sign: f64) {
    let grid = &coeffs.grid;
    for dim in 0..2 {
        let other = 1 - dim;
        for face in 0..coeffs.face_count(dim) {
            let (lo, hi) = coeffs.face_nodes(dim, face);
            let (i, j) = grid.unravel(lo);
            let length = sign * grid.weight(other, if dim == 0 { j } else { i });
            let (upper, lower) = coeffs.face_weights(dim, face);
            // P = upper * p_hi - lower * p_lo enters `lo` with + and `hi` with -
            target.add(lo, hi, length * upper);
            target.add(lo, lo, -length * lower);
            target.add(hi, hi, -length * upper);
            target.add(hi, lo, length * lower);
        }
    }
}

/// Net explicit cross-diffusion flux `C^{12} dp/dx_2` (and its transpose
/// counterpart) into every cell, evaluated on `p`.
pub fn cross_flux(coeffs: &FluxCoefficients, p: &[f64]) -> Vec<f64> {
    let grid = &coeffs.grid;
    let mut out = vec![0.0; grid.len()];
    if coeffs.c_cross.iter().all(|c| *c == 0.0) {
        return out;
    }
    let dp = [nodal_derivative(grid, p, 0), nodal_derivative(grid, p, 1)];
    for dim in 0..2 {
        let other = 1 - dim;
        for face in 0..coeffs.face_count(dim) {
            let (lo, hi) = coeffs.face_nodes(dim, face);
            let (i, j) = grid.unravel(lo);
            let length = grid.weight(other, if dim == 0 { j } else { i });
            let c = 0.5 * (coeffs.c_cross[lo] + coeffs.c_cross[hi]);
            let grad = 0.5 * (dp[other][lo] + dp[other][hi]);
            let flux = length * c * grad;
            out[lo] += flux;
            out[hi] -= flux;
        }
    }
    out
}

/// Assembles the implicit system producing `p[k+1]`.
///
/// With a previous level the BDF2 formula `(3 p[k+1] - 4 p[k] + p[k-1]) / (2 dt)`
/// is used; without one, backward Euler.
pub fn assemble_step_system(
    p_k: &GridPdf,
    p_km1: Option<&GridPdf>,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<StepSystem> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive (got {dt})")));
    }
    let grid = p_k.grid();
    if *grid != coeffs.grid {
        return Err(Error::GridMismatch("coefficients built on a different grid".into()));
    }
    if let Some(prev) = p_km1 {
        if prev.grid() != grid {
            return Err(Error::GridMismatch("history level on a different grid".into()));
        }
    }
    let volumes = grid.volumes();
    let mut matrix = BandMatrix::zeros(grid.len(), grid.points);
    add_flux(coeffs, &mut matrix, -1.0);
    let alpha = if p_km1.is_some() { 1.5 / dt } else { 1.0 / dt };
    for (r, v) in volumes.iter().enumerate() {
        matrix.add(r, r, alpha * v);
    }
    let cross = cross_flux(coeffs, p_k.values());
    let rhs = match p_km1 {
        Some(prev) => p_k
            .values()
            .iter()
            .zip(prev.values())
            .zip(&volumes)
            .zip(&cross)
            .map(|(((pk, pm), v), x)| v * (4.0 * pk - pm) / (2.0 * dt) + x)
            .collect(),
        None => p_k
            .values()
            .iter()
            .zip(&volumes)
            .zip(&cross)
            .map(|((pk, v), x)| v * pk / dt + x)
            .collect(),
    };
    Ok(StepSystem {
        matrix,
        rhs,
        volumes,
        bdf2: p_km1.is_some(),
    })
}

/// Result of one solver step with the diagnostics observed before clean-up.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub pdf: GridPdf,
    /// Trapezoidal mass of the raw solution.
    pub mass_before: f64,
    /// Smallest raw nodal value before clamping.
    pub min_before_clamp: f64,
    /// Time order actually used: 2 for BDF2, 1 for backward Euler.
    pub order: u8,
}

impl StepOutcome {
    pub fn mass_drift(&self, previous_mass: f64) -> f64 {
        (self.mass_before - previous_mass).abs()
    }
}

/// Solves one step and checks the raw solution for positivity.
/// Returns the unclamped values and their minimum.
fn solve_checked(
    p_k: &GridPdf,
    p_km1: Option<&GridPdf>,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<(Vec<f64>, f64)> {
    let system = assemble_step_system(p_k, p_km1, coeffs, dt)?;
    let values = system.solve()?;
    let (node, min_value) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    if !min_value.is_finite() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite density after solve".into()));
    }
    if min_value < -NEGATIVE_TOLERANCE {
        return Err(Error::SchemeViolation { min_value, node });
    }
    Ok((values, min_value))
}

/// Advances with precomputed coefficients.
///
/// A BDF2 step whose solution dips below `-NEGATIVE_TOLERANCE` is redone
/// with backward Euler from `p_k` alone. This happens when the density moves
/// by more than about one width per step, where `4 p_k - p_km1` turns
/// negative behind the moving peak.
pub fn step_with_coefficients(
    p_k: &GridPdf,
    p_km1: Option<&GridPdf>,
    coeffs: &FluxCoefficients,
    dt: f64,
) -> Result<StepOutcome> {
    let (mut values, min_value, order) = match p_km1 {
        Some(prev) => match solve_checked(p_k, Some(prev), coeffs, dt) {
            Ok((v, m)) => (v, m, 2),
            Err(Error::SchemeViolation { min_value, node }) => {
                log::debug!("BDF2 step negative ({min_value:e} at node {node}), using backward Euler");
                let (v, m) = solve_checked(p_k, None, coeffs, dt)?;
                (v, m, 1)
            }
            Err(e) => return Err(e),
        },
        None => {
            let (v, m) = solve_checked(p_k, None, coeffs, dt)?;
            (v, m, 1)
        }
    };
    let grid = *p_k.grid();
    values.iter_mut().for_each(|v| *v = v.max(0.0));

    let mass_before = trapezoid_mass(&grid, &values);
    let drift = (mass_before - p_k.mass()).abs();
    log::trace!("step mass drift {drift:e}");
    if drift > MASS_TOLERANCE {
        return Err(Error::MassDrift { drift });
    }
    let pdf = GridPdf::new(grid, values)?.normalized()?;
    Ok(StepOutcome {
        pdf,
        mass_before,
        min_before_clamp: min_value,
        order,
    })
}

/// Advances the density by one step under nodal drift and diffusion fields.
pub fn step(
    p_k: &GridPdf,
    p_km1: Option<&GridPdf>,
    drift: &[Vector2<f64>],
    diffusion: &[Matrix2<f64>],
    dt: f64,
) -> Result<StepOutcome> {
    let coeffs = flux_coefficients(p_k.grid(), drift, diffusion)?;
    step_with_coefficients(p_k, p_km1, &coeffs, dt)
}
