//! One-step-horizon model predictive control of the joint-angle density.
//!
//! At every control step the controller predicts the density one step ahead
//! for a candidate tension vector, scores it with the unweighted squared
//! distance to a Gaussian reference, and keeps the best candidate found by a
//! box-projected multi-start Nelder-Mead search. Only median parameters are
//! known to the controller, so the resulting input sequence is purely
//! feedforward.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finger::{
    median_params, FingerGeometry, FingerState, NominalState, ReducedField, ShapeTable,
    TendonInput, ViscoelasticParams,
};
use crate::fpe::{
    flux_coefficients, gaussian_pdf, l2_distance, step_with_coefficients, Grid2D, GridPdf,
    StepOutcome,
};

/// Controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Control and density time step, seconds.
    pub dt: f64,
    /// Prediction and control horizon in steps. Only 1 is supported.
    pub horizon_steps: usize,
    /// Episode length, seconds.
    pub total_time: f64,
    pub input_lower: f64,
    pub input_upper: f64,
    /// Number of Nelder-Mead starts per control step.
    pub optimizer_restarts: usize,
    /// Relative objective tolerance for convergence and tie detection.
    pub optimizer_tolerance: f64,
    /// Evaluation budget of one Nelder-Mead run.
    pub optimizer_max_evals: usize,
    /// RK4 step for the nominal full-model propagation, seconds.
    pub dt_fine: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon_steps: 1,
            total_time: 10.0,
            input_lower: 0.0,
            input_upper: 5.0,
            optimizer_restarts: 4,
            optimizer_tolerance: 1e-10,
            optimizer_max_evals: 300,
            dt_fine: 1e-3,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive (got {})", self.dt)));
        }
        if self.horizon_steps != 1 {
            return Err(Error::invalid(format!(
                "only a one-step horizon is supported (got {})",
                self.horizon_steps
            )));
        }
        if !(self.total_time >= 0.0 && self.total_time.is_finite()) {
            return Err(Error::invalid(format!(
                "total_time must be >= 0 (got {})",
                self.total_time
            )));
        }
        if !(self.input_lower >= 0.0 && self.input_lower < self.input_upper)
            || !self.input_upper.is_finite()
        {
            return Err(Error::invalid(format!(
                "input bounds must satisfy 0 <= lower < upper (got {}, {})",
                self.input_lower, self.input_upper
            )));
        }
        if self.optimizer_restarts == 0 || self.optimizer_max_evals < 4 {
            return Err(Error::invalid("optimizer needs at least one start and four evaluations"));
        }
        if !(self.optimizer_tolerance >= 0.0) {
            return Err(Error::invalid("optimizer_tolerance must be >= 0"));
        }
        crate::finger::substeps(self.dt, self.dt_fine)?;
        self.steps()?;
        Ok(())
    }

    /// Number of control steps in an episode.
    pub fn steps(&self) -> Result<usize> {
        crate::finger::substeps(self.total_time, self.dt)
    }

    fn ties(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.optimizer_tolerance * a.abs().max(b.abs()).max(1.0)
    }
}

/// Mean and standard deviation of a product-Gaussian density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

impl ReferenceSpec {
    pub fn new(mu: [f64; 2], sigma: [f64; 2]) -> Self {
        Self { mu, sigma }
    }

    /// Initial density used throughout the case studies.
    pub fn initial() -> Self {
        Self::new([0.0, 0.0], [0.05, 0.05])
    }

    /// Interval `mu +- 1.96 sigma` per joint.
    pub fn band(&self) -> [(f64, f64); 2] {
        [0, 1].map(|d| (self.mu[d] - 1.96 * self.sigma[d], self.mu[d] + 1.96 * self.sigma[d]))
    }
}

pub fn build_reference(grid: &Grid2D, spec: &ReferenceSpec) -> Result<GridPdf> {
    gaussian_pdf(grid, spec.mu, spec.sigma)
}

/// What the controller knows about the finger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerModel {
    pub geometry: FingerGeometry,
    pub shapes: ShapeTable,
}

impl ControllerModel {
    pub fn new(geometry: FingerGeometry, shapes: ShapeTable) -> Self {
        Self { geometry, shapes }
    }

    pub fn nominal(&self) -> ViscoelasticParams {
        median_params(&self.shapes)
    }

    /// Reduced drift and diffusion at every node for a candidate input.
    pub fn fields(
        &self,
        grid: &Grid2D,
        u: &TendonInput,
        eta: &Vector2<f64>,
    ) -> (Vec<Vector2<f64>>, Vec<Matrix2<f64>>) {
        let field = ReducedField::new(&self.geometry, u, *eta, &self.shapes);
        grid.nodes().map(|q| (field.drift(&q), field.diffusion(&q))).unzip()
    }
}

/// Density history plus the nominal full-model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub current: GridPdf,
    pub previous: Option<GridPdf>,
    pub nominal: NominalState,
}

impl ControllerState {
    pub fn new(initial: GridPdf) -> Self {
        Self {
            current: initial,
            previous: None,
            nominal: NominalState::default(),
        }
    }
}

/// Density one step ahead under `u`.
pub fn predict(
    model: &ControllerModel,
    state: &ControllerState,
    u: &TendonInput,
    dt: f64,
) -> Result<StepOutcome> {
    let grid = state.current.grid();
    let (drift, diffusion) = model.fields(grid, u, &state.nominal.eta);
    let coeffs = flux_coefficients(grid, &drift, &diffusion)?;
    step_with_coefficients(&state.current, state.previous.as_ref(), &coeffs, dt)
}

/// Squared distance between the one-step prediction and the reference.
pub fn predict_objective(
    model: &ControllerModel,
    state: &ControllerState,
    u: &TendonInput,
    reference: &GridPdf,
    dt: f64,
) -> Result<f64> {
    let next = predict(model, state, u, dt)?;
    l2_distance(&next.pdf, reference)
}

/// Everything a single control decision needs.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub model: &'a ControllerModel,
    pub state: &'a ControllerState,
    pub reference: &'a GridPdf,
    pub config: &'a MpcConfig,
    /// Input applied on the previous step, used as the first start.
    pub warm_start: Option<TendonInput>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSolution {
    pub input: TendonInput,
    pub objective: f64,
    pub evaluations: usize,
}

impl StepContext<'_> {
    fn objective(&self, u: &Vector3<f64>) -> f64 {
        let u = TendonInput(*u);
        match predict_objective(self.model, self.state, &u, self.reference, self.config.dt) {
            Ok(j) => j,
            Err(e) => {
                log::trace!("candidate {:?} rejected: {e}", u.as_array());
                f64::INFINITY
            }
        }
    }

    fn starts(&self) -> Vec<Vector3<f64>> {
        let (lo, hi) = (self.config.input_lower, self.config.input_upper);
        let mid = 0.5 * (lo + hi);
        let mut starts = Vec::new();
        if let Some(w) = self.warm_start {
            starts.push(w.clamped(lo, hi).0);
        }
        starts.push(Vector3::repeat(lo));
        starts.push(Vector3::repeat(mid));
        for corner in 1..8u8 {
            starts.push(Vector3::from_fn(|k, _| if corner & (1 << k) != 0 { hi } else { lo }));
        }
        let mut unique: Vec<Vector3<f64>> = Vec::new();
        for s in starts {
            if !unique.contains(&s) {
                unique.push(s);
            }
        }
        unique.truncate(self.config.optimizer_restarts);
        unique
    }
}

/// Box-constrained minimizer of [`predict_objective`].
///
/// Among near-equal optima the smallest tension vector wins; the torque
/// null space of the antagonistic pair is collapsed toward minimal norm.
pub fn solve_step(ctx: &StepContext) -> Result<StepSolution> {
    let cfg = ctx.config;
    let (lo, hi) = (cfg.input_lower, cfg.input_upper);
    let span = hi - lo;

    let runs: Vec<SearchResult> = ctx
        .starts()
        .par_iter()
        .map(|x0| {
            nelder_mead(
                |u| ctx.objective(u),
                *x0,
                0.1 * span,
                lo,
                hi,
                cfg.optimizer_max_evals,
                cfg.optimizer_tolerance,
            )
        })
        .collect();
    let mut evaluations: usize = runs.iter().map(|r| r.evaluations).sum();

    let best = runs
        .iter()
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::Controller(
            "no start produced a valid prediction".into(),
        ));
    }
    let mut chosen = runs
        .iter()
        .filter(|r| cfg.ties(r.value, best))
        .min_by(|a, b| a.point.norm().total_cmp(&b.point.norm()))
        .copied()
        .expect("best run exists");

    let slid = minimal_norm_along(&ctx.model.geometry.coupling_kernel(), &chosen.point, lo, hi);
    if slid != chosen.point {
        let value = ctx.objective(&slid);
        evaluations += 1;
        if value <= chosen.value || cfg.ties(value, chosen.value) {
            chosen = SearchResult { point: slid, value, evaluations: 0 };
        }
    }

    let input = TendonInput(chosen.point.map(|v| v.clamp(lo, hi)));
    Ok(StepSolution {
        input,
        objective: chosen.value,
        evaluations,
    })
}

/// Smallest-norm point on the line `u + t k` that stays inside the box.
fn minimal_norm_along(kernel: &Vector3<f64>, u: &Vector3<f64>, lo: f64, hi: f64) -> Vector3<f64> {
    let kk = kernel.norm_squared();
    if kk == 0.0 {
        return *u;
    }
    let (mut t_min, mut t_max) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if kernel[k] != 0.0 {
            let a = (lo - u[k]) / kernel[k];
            let b = (hi - u[k]) / kernel[k];
            t_min = t_min.max(a.min(b));
            t_max = t_max.min(a.max(b));
        }
    }
    let t = (-u.dot(kernel) / kk).clamp(t_min, t_max);
    (u + kernel * t).map(|v| v.clamp(lo, hi))
}

#[derive(Debug, Clone, Copy)]
struct SearchResult {
    point: Vector3<f64>,
    value: f64,
    evaluations: usize,
}

/// Nelder-Mead with every trial point projected onto `[lo, hi]^3`.
fn nelder_mead(
    mut f: impl FnMut(&Vector3<f64>) -> f64,
    x0: Vector3<f64>,
    step: f64,
    lo: f64,
    hi: f64,
    max_evals: usize,
    ftol: f64,
) -> SearchResult {
    let project = |x: Vector3<f64>| x.map(|v| v.clamp(lo, hi));
    let x0 = project(x0);
    let mut simplex: Vec<(Vector3<f64>, f64)> = Vec::with_capacity(4);
    let mut evals = 0;
    let mut eval = |x: &Vector3<f64>, evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    simplex.push((x0, eval(&x0, &mut evals)));
    for k in 0..3 {
        let mut x = x0;
        // step inward when the start sits on the upper face
        x[k] += if x0[k] + step <= hi { step } else { -step };
        let x = project(x);
        simplex.push((x, eval(&x, &mut evals)));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| (x - simplex[0].0).amax())
            .fold(0.0, f64::max);
        if (best.is_finite() && (worst - best).abs() <= ftol * best.abs().max(1.0) && diameter < 1e-4)
            || diameter < 1e-9
        {
            break;
        }
        let centroid = (simplex[0].0 + simplex[1].0 + simplex[2].0) / 3.0;
        let xw = simplex[3].0;
        let xr = project(centroid + (centroid - xw));
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = project(centroid + (centroid - xw) * 2.0);
            let fe = eval(&xe, &mut evals);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[3].1 {
                let xc = project(centroid + (xr - centroid) * 0.5);
                (xc, eval(&xc, &mut evals))
            } else {
                let xc = project(centroid + (xw - centroid) * 0.5);
                (xc, eval(&xc, &mut evals))
            };
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let x_best = simplex[0].0;
                for vertex in simplex.iter_mut().skip(1) {
                    let x = project(x_best + (vertex.0 - x_best) * 0.5);
                    *vertex = (x, eval(&x, &mut evals));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    SearchResult {
        point: simplex[0].0,
        value: simplex[0].1,
        evaluations: evals,
    }
}

/// Complete description of one open-loop episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpec {
    pub grid: Grid2D,
    pub geometry: FingerGeometry,
    pub shapes: ShapeTable,
    pub config: MpcConfig,
    pub reference: ReferenceSpec,
    pub initial: ReferenceSpec,
}

impl EpisodeSpec {
    /// Default case-study setup with the given reference.
    pub fn with_reference(reference: ReferenceSpec) -> Self {
        Self {
            grid: Grid2D::default(),
            geometry: FingerGeometry::default(),
            shapes: ShapeTable::default(),
            config: MpcConfig::default(),
            reference,
            initial: ReferenceSpec::initial(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.geometry.validate()?;
        self.shapes.validate()?;
        self.config.validate()
    }
}

/// Traces of one episode. Index `k` of each per-step trace refers to the
/// step from `t = k dt` to `t = (k + 1) dt`; snapshot and state traces hold
/// the initial value at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub inputs: Vec<TendonInput>,
    pub pdf_snapshots: Vec<GridPdf>,
    pub objective_trace: Vec<f64>,
    pub nominal_state_trace: Vec<FingerState>,
    pub eta_trace: Vec<Vector2<f64>>,
    /// Mass of each raw step solution before renormalization.
    pub mass_trace: Vec<f64>,
    /// Smallest raw nodal value of each step before clamping.
    pub min_value_trace: Vec<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
}

impl EpisodeResult {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn final_pdf(&self) -> &GridPdf {
        self.pdf_snapshots.last().expect("initial snapshot is always present")
    }
}

/// Runs the controller for `total_time / dt` steps from the initial density.
pub fn run_episode(spec: &EpisodeSpec) -> Result<EpisodeResult> {
    spec.validate()?;
    let cfg = &spec.config;
    let steps = cfg.steps()?;
    let model = ControllerModel::new(spec.geometry, spec.shapes);
    let nominal_params = model.nominal();
    let reference = build_reference(&spec.grid, &spec.reference)?;
    let initial = build_reference(&spec.grid, &spec.initial)?;
    let initial_objective = l2_distance(&initial, &reference)?;

    let mut state = ControllerState::new(initial.clone());
    let mut result = EpisodeResult {
        inputs: Vec::with_capacity(steps),
        pdf_snapshots: vec![initial],
        objective_trace: Vec::with_capacity(steps),
        nominal_state_trace: vec![state.nominal.finger],
        eta_trace: vec![state.nominal.eta],
        mass_trace: Vec::with_capacity(steps),
        min_value_trace: Vec::with_capacity(steps),
        initial_objective,
        final_objective: initial_objective,
    };

    let mut warm = None;
    for k in 0..steps {
        let ctx = StepContext {
            model: &model,
            state: &state,
            reference: &reference,
            config: cfg,
            warm_start: warm,
        };
        let solution = solve_step(&ctx)?;
        let u = solution.input;
        let outcome = predict(&model, &state, &u, cfg.dt)?;
        let objective = l2_distance(&outcome.pdf, &reference)?;
        let nominal = state
            .nominal
            .advance(&spec.geometry, &u, &nominal_params, cfg.dt, cfg.dt_fine)?;
        if !nominal.finger.is_finite() {
            return Err(Error::Numeric(format!("nominal state diverged at step {k}")));
        }
        log::debug!(
            "step {k}: u = {:?}, J = {objective:.6e}, evals = {}",
            u.as_array(),
            solution.evaluations
        );

        result.inputs.push(u);
        result.objective_trace.push(objective);
        result.mass_trace.push(outcome.mass_before);
        result.min_value_trace.push(outcome.min_before_clamp);
        result.pdf_snapshots.push(outcome.pdf.clone());
        result.nominal_state_trace.push(nominal.finger);
        result.eta_trace.push(nominal.eta);
        result.final_objective = objective;

        state = ControllerState {
            previous: Some(std::mem::replace(&mut state.current, outcome.pdf)),
            current: state.current,
            nominal,
        };
        warm = Some(u);
    }
    Ok(result)
}

/// Final objective of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub mu: [f64; 2],
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Default reference means of the reachability sweep, per joint.
pub const SWEEP_MU_VALUES: [f64; 5] = [-0.5, -0.3, 0.0, 0.3, 0.5];

/// Runs one episode per `(mu1, mu2)` pair, keeping the base spec's sigma.
/// Cells are returned in row-major order of `mu_values x mu_values`.
pub fn reachability_sweep(base: &EpisodeSpec, mu_values: &[f64]) -> Result<Vec<SweepCell>> {
    let cells: Vec<[f64; 2]> = mu_values
        .iter()
        .flat_map(|&a| mu_values.iter().map(move |&b| [a, b]))
        .collect();
    cells.par_iter().map(|mu| sweep_cell(base, *mu)).collect()
}

pub fn sweep_cell(base: &EpisodeSpec, mu: [f64; 2]) -> Result<SweepCell> {
    let mut spec = *base;
    spec.reference.mu = mu;
    let result = run_episode(&spec)?;
    Ok(SweepCell {
        mu,
        initial_objective: result.initial_objective,
        final_objective: result.final_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_box_minimum() {
        let target = Vector3::new(1.0, 6.0, -2.0);
        let r = nelder_mead(|x| (x - target).norm_squared(), Vector3::repeat(2.5), 0.5, 0.0, 5.0, 500, 1e-12);
        assert!((r.point - Vector3::new(1.0, 5.0, 0.0)).norm() < 1e-3, "{:?}", r.point);
        assert!(r.point.iter().all(|v| (0.0..=5.0).contains(v)));
    }

    #[test]
    fn minimal_norm_slide_respects_box() {
        let k = Vector3::new(0.0, 8.0, 5.0);
        let u = Vector3::new(1.0, 3.0, 4.0);
        let s = minimal_norm_along(&k, &u, 0.0, 5.0);
        assert!(s.norm() < u.norm());
        // moved along the kernel only
        let d = s - u;
        assert!((d.cross(&k)).norm() < 1e-12);
        assert!(s.iter().all(|v| (0.0..=5.0).contains(v)));
        assert!(s[1] == 0.0 || s[2] == 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = MpcConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.steps().unwrap(), 100);
        c.input_upper = 0.0;
        assert!(c.validate().is_err());
        c = MpcConfig { horizon_steps: 2, ..MpcConfig::default() };
        assert!(c.validate().is_err());
        c = MpcConfig { dt_fine: 0.03, ..MpcConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn starts_are_unique_and_bounded() {
        let model = ControllerModel::new(FingerGeometry::default(), ShapeTable::default());
        let grid = Grid2D::default();
        let pdf = build_reference(&grid, &ReferenceSpec::initial()).unwrap();
        let state = ControllerState::new(pdf.clone());
        let cfg = MpcConfig { optimizer_restarts: 20, ..MpcConfig::default() };
        let ctx = StepContext {
            model: &model,
            state: &state,
            reference: &pdf,
            config: &cfg,
            warm_start: Some(TendonInput::zero()),
        };
        let starts = ctx.starts();
        assert_eq!(starts.len(), 9);
        assert_eq!(starts[0], Vector3::zeros());
    }

    #[test]
    fn band_is_196_sigma() {
        let b = ReferenceSpec::new([0.3, -0.5], [0.05, 0.05]).band();
        assert!((b[0].0 - 0.202).abs() < 1e-12 && (b[1].1 + 0.402).abs() < 1e-12);
    }
}
