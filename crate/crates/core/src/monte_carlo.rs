//! Monte-Carlo validation of an open-loop input sequence.
//!
//! Each sample draws one set of viscoelastic parameters from the log-normal
//! shapes, holds it fixed, and integrates the full model from rest under the
//! recorded inputs. The final joint angles are then compared against the
//! reference's 95% band.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finger::{
    rk4_step, state_derivative, substeps, FingerGeometry, FingerState, ShapeTable, TendonInput,
    ViscoelasticParams, N_PARAMS,
};
use crate::mpc::ReferenceSpec;

/// Largest accepted share of diverged samples.
pub const MAX_DIVERGED_FRACTION: f64 = 0.05;

/// Generator for sample `index` of an ensemble seeded with `seed`.
/// Streams are independent, so parallel evaluation order does not matter.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `exp(N(mu, sigma^2))` per parameter.
pub fn draw_parameters<R: Rng + ?Sized>(shapes: &ShapeTable, rng: &mut R) -> ViscoelasticParams {
    let mut p = [0.0; N_PARAMS];
    for (value, shape) in p.iter_mut().zip(shapes.to_array()) {
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        *value = (shape.mu + shape.sigma * z).exp();
    }
    ViscoelasticParams::from_array(p)
}

pub fn sample_parameters(shapes: &ShapeTable, seed: u64) -> Result<ViscoelasticParams> {
    shapes.validate()?;
    Ok(draw_parameters(shapes, &mut sample_rng(seed, 0)))
}

/// States at control resolution. `states[0]` is the rest state; a diverged
/// trajectory stops at the last finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<FingerState>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_q(&self) -> Option<Vector2<f64>> {
        if self.diverged {
            None
        } else {
            self.states.last().map(|s| s.q)
        }
    }
}

/// RK4 integration from rest with inputs held over each control step.
pub fn simulate_trajectory(
    geometry: &FingerGeometry,
    params: &ViscoelasticParams,
    inputs: &[TendonInput],
    dt: f64,
    dt_fine: f64,
) -> Result<Trajectory> {
    geometry.validate()?;
    params.validate()?;
    let n = substeps(dt, dt_fine)?;
    if n == 0 {
        return Err(Error::invalid("control step must be positive"));
    }
    let h = dt / n as f64;
    let mut x = FingerState::default();
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x);
    for u in inputs {
        let mut v = x.to_vector();
        for _ in 0..n {
            v = match rk4_step(&v, h, |y| {
                state_derivative(geometry, &FingerState::from_vector(y), u, params)
            }) {
                Ok(next) if next.iter().all(|c| c.is_finite()) => next,
                _ => return Ok(Trajectory { states, diverged: true }),
            };
        }
        x = FingerState::from_vector(&v);
        states.push(x);
    }
    Ok(Trajectory { states, diverged: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledEnsemble {
    pub seed: u64,
    pub samples: Vec<ViscoelasticParams>,
    pub trajectories: Vec<Trajectory>,
}

impl SampledEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn diverged(&self) -> usize {
        self.trajectories.iter().filter(|t| t.diverged).count()
    }
}

/// Samples and simulates `size` trajectories in parallel.
pub fn run_ensemble(
    geometry: &FingerGeometry,
    shapes: &ShapeTable,
    inputs: &[TendonInput],
    dt: f64,
    dt_fine: f64,
    size: usize,
    seed: u64,
) -> Result<SampledEnsemble> {
    if size == 0 {
        return Err(Error::EmptyEnsemble);
    }
    shapes.validate()?;
    let runs: Vec<(ViscoelasticParams, Trajectory)> = (0..size as u64)
        .into_par_iter()
        .map(|i| {
            let params = draw_parameters(shapes, &mut sample_rng(seed, i));
            let trajectory = simulate_trajectory(geometry, &params, inputs, dt, dt_fine)?;
            Ok((params, trajectory))
        })
        .collect::<Result<_>>()?;
    let (samples, trajectories) = runs.into_iter().unzip();
    Ok(SampledEnsemble {
        seed,
        samples,
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    /// `mu +- 1.96 sigma` per joint.
    pub band: [(f64, f64); 2],
    /// Share of non-diverged finals inside the band, per joint.
    pub fraction_inside: [f64; 2],
    /// Final joint angles, `None` for diverged samples.
    pub finals: Vec<Option<Vector2<f64>>>,
    pub diverged: usize,
}

impl ConfidenceReport {
    pub fn total(&self) -> usize {
        self.finals.len()
    }

    pub fn diverged_fraction(&self) -> f64 {
        self.diverged as f64 / self.total() as f64
    }

    pub fn inside(&self, q: &Vector2<f64>) -> [bool; 2] {
        [0, 1].map(|d| self.band[d].0 <= q[d] && q[d] <= self.band[d].1)
    }

    /// Fails when more than [`MAX_DIVERGED_FRACTION`] of the samples blew up.
    pub fn check_divergence(&self) -> Result<()> {
        if self.diverged_fraction() > MAX_DIVERGED_FRACTION {
            return Err(Error::Numeric(format!(
                "{} of {} samples diverged",
                self.diverged,
                self.total()
            )));
        }
        Ok(())
    }
}

pub fn confidence_report(ensemble: &SampledEnsemble, spec: &ReferenceSpec) -> Result<ConfidenceReport> {
    if ensemble.trajectories.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let finals: Vec<Option<Vector2<f64>>> =
        ensemble.trajectories.iter().map(Trajectory::final_q).collect();
    let mut report = ConfidenceReport {
        band: spec.band(),
        fraction_inside: [0.0; 2],
        diverged: ensemble.diverged(),
        finals,
    };
    let valid: Vec<Vector2<f64>> = report.finals.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Numeric("every sample diverged".into()));
    }
    for d in 0..2 {
        let inside = valid.iter().filter(|q| report.inside(q)[d]).count();
        report.fraction_inside[d] = inside as f64 / valid.len() as f64;
    }
    Ok(report)
}
