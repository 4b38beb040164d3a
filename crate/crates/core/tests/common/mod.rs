//! Analytic references shared by the oracle and acceptance tests.
#![allow(dead_code)]

use fpe_mpc::finger::{median_params, NominalState};
use fpe_mpc::fpe::{gaussian_pdf, moments, step};
use fpe_mpc::{FingerGeometry, Grid2D, GridPdf, ShapeTable, TendonInput};
use nalgebra::{Matrix2, Vector2};

/// Variance of `N(mu, s^2)` restricted to `[lo, hi]`, by composite Simpson
/// quadrature on `n` (even) intervals.
pub fn truncated_variance(mu: f64, s: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let x = lo + h * k as f64;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let g = w * (-0.5 * ((x - mu) / s).powi(2)).exp();
        m0 += g;
        m1 += g * x;
        m2 += g * x * x;
    }
    let mean = m1 / m0;
    m2 / m0 - mean * mean
}

/// Runs `steps` solver steps under fixed nodal fields.
pub fn evolve(
    p0: GridPdf,
    drift: &[Vector2<f64>],
    diffusion: &[Matrix2<f64>],
    dt: f64,
    steps: usize,
) -> GridPdf {
    let mut prev: Option<GridPdf> = None;
    let mut cur = p0;
    for _ in 0..steps {
        let next = step(&cur, prev.as_ref(), drift, diffusion, dt).unwrap().pdf;
        prev = Some(std::mem::replace(&mut cur, next));
    }
    cur
}

pub struct HeatResult {
    pub variance: [f64; 2],
    pub expected: [f64; 2],
}

impl HeatResult {
    pub fn worst_relative_error(&self) -> f64 {
        (0..2)
            .map(|d| (self.variance[d] / self.expected[d] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Pure diffusion `a I` from a centered Gaussian of width `sigma` for `time` seconds.
pub fn heat_kernel(a: f64, sigma: f64, time: f64, dt: f64) -> HeatResult {
    let g = Grid2D::new([-0.15, -0.15], [0.15, 0.15], 21).unwrap();
    let p0 = gaussian_pdf(&g, [0.0, 0.0], [sigma, sigma]).unwrap();
    let steps = (time / dt).round() as usize;
    let p = evolve(
        p0,
        &vec![Vector2::zeros(); g.len()],
        &vec![Matrix2::identity() * a; g.len()],
        dt,
        steps,
    );
    let (_, cov) = moments(&p);
    let s = (sigma * sigma + a * time).sqrt();
    let expected = [0, 1].map(|d| truncated_variance(0.0, s, g.lower[d], g.upper[d], 20_000));
    HeatResult {
        variance: [cov[(0, 0)], cov[(1, 1)]],
        expected,
    }
}

pub const OU_THETA: f64 = 2.0;
/// Diffusion giving a stationary width of 0.05 rad.
pub const OU_A: f64 = 2.0 * OU_THETA * 0.05 * 0.05;
pub const OU_MU0: [f64; 2] = [0.1, -0.05];
pub const OU_SIGMA0: f64 = 0.08;

fn ou_fields(g: &Grid2D) -> (Vec<Vector2<f64>>, Vec<Matrix2<f64>>) {
    (
        g.nodes().map(|q| -q * OU_THETA).collect(),
        vec![Matrix2::identity() * OU_A; g.len()],
    )
}

/// Exact OU density at `t` sampled on the grid, renormalized like the initial condition.
pub fn ou_exact(g: &Grid2D, t: f64) -> GridPdf {
    let decay = (-OU_THETA * t).exp();
    let stationary = OU_A / (2.0 * OU_THETA);
    let var = stationary + (OU_SIGMA0 * OU_SIGMA0 - stationary) * decay * decay;
    let s = var.sqrt();
    gaussian_pdf(g, [OU_MU0[0] * decay, OU_MU0[1] * decay], [s, s]).unwrap()
}

pub fn ou_run(g: &Grid2D, dt: f64, time: f64) -> GridPdf {
    let (f, a) = ou_fields(g);
    let p0 = gaussian_pdf(g, OU_MU0, [OU_SIGMA0, OU_SIGMA0]).unwrap();
    evolve(p0, &f, &a, dt, (time / dt).round() as usize)
}

/// Volume-weighted L2 distance, a consistent norm across grid resolutions.
pub fn weighted_l2(p: &GridPdf, q: &GridPdf) -> f64 {
    p.grid()
        .volumes()
        .iter()
        .zip(p.values().iter().zip(q.values()))
        .map(|(v, (a, b))| v * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub struct OuResult {
    pub stationary_variance: [f64; 2],
    pub expected_variance: f64,
    pub coarse_error: f64,
    pub fine_error: f64,
}

impl OuResult {
    pub fn worst_variance_error(&self) -> f64 {
        self.stationary_variance
            .iter()
            .map(|v| (v / self.expected_variance - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn refinement_ratio(&self) -> f64 {
        self.coarse_error / self.fine_error
    }
}

pub fn ornstein_uhlenbeck() -> OuResult {
    let g = Grid2D::new([-0.4, -0.4], [0.4, 0.4], 41).unwrap();
    let (_, cov) = moments(&ou_run(&g, 0.05, 4.0));

    let horizon = 0.5;
    let coarse = Grid2D::new([-0.4, -0.4], [0.4, 0.4], 21).unwrap();
    let fine = Grid2D::new([-0.4, -0.4], [0.4, 0.4], 41).unwrap();
    let coarse_error = weighted_l2(&ou_run(&coarse, 0.05, horizon), &ou_exact(&coarse, horizon));
    let fine_error = weighted_l2(&ou_run(&fine, 0.025, horizon), &ou_exact(&fine, horizon));
    OuResult {
        stationary_variance: [cov[(0, 0)], cov[(1, 1)]],
        expected_variance: OU_A / (2.0 * OU_THETA),
        coarse_error,
        fine_error,
    }
}

/// A bounded input trace that pushes both joints in turn.
pub fn input_trace(steps: usize) -> Vec<TendonInput> {
    (0..steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            TendonInput::new([5.0 * (1.0 - t), 2.5 * t, 1.0 + 3.0 * t])
        })
        .collect()
}

/// Full-model state under a constant input, started from rest.
pub fn settle(u: &TendonInput, duration: f64) -> NominalState {
    NominalState::default()
        .advance(
            &FingerGeometry::default(),
            u,
            &median_params(&ShapeTable::default()),
            duration,
            1e-4,
        )
        .unwrap()
}
