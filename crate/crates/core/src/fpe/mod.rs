//! Density evolution on a uniform 2-D joint-angle grid.
//!
//! Time is discretized with BDF2 (backward Euler on the first step), space
//! with Chang-Cooper fluxes and zero flux through the domain edge.

mod assemble;
pub mod banded;
mod coeffs;
mod grid;

pub use assemble::{
    assemble_step_system, cross_flux, flux_operator, step, step_with_coefficients, StepOutcome,
    StepSystem, MASS_TOLERANCE, NEGATIVE_TOLERANCE,
};
pub use coeffs::{bernoulli, chang_cooper_delta, flux_coefficients, nodal_derivative, FluxCoefficients};
pub use grid::{gaussian_pdf, gaussian_samples, l2_distance, moments, Grid2D, GridPdf};
