//! Two-link, three-tendon soft finger with three-element viscoelastic joints.
//!
//! The full model has the state `x = [q, q_dot, tau_joint]` and obeys
//!
//! ```text
//! M(q) q_ddot + h(q, q_dot) + tau = P(q) u
//! A q_dot + B q = C tau + D ∫tau dt
//! ```
//!
//! with diagonal `A, B, C, D` whose entries are `c_p k_v`, `c_v c_p`,
//! `c_v + c_p` and `k_v` per joint. The second line is used in differentiated
//! form for the state derivative. A quasi-static reduction (inertia dropped,
//! `tau = P u`) gives the first-order joint-angle drift consumed by the
//! density solver; parameter uncertainty enters that reduction as diffusion
//! through its log-parameter Jacobian.

use nalgebra::{Matrix2, Matrix2x3, SMatrix, SVector, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of joints.
pub const N_JOINTS: usize = 2;
/// Number of tendons.
pub const N_TENDONS: usize = 3;
/// Number of viscoelastic parameters (`k_v`, `c_v`, `c_p` for each joint).
pub const N_PARAMS: usize = 6;

/// Log-space step used by the central-difference parameter Jacobians.
pub const PARAM_FD_STEP: f64 = 1e-6;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix2x6 = SMatrix<f64, 2, 6>;

/// Kinematic and inertial description of the finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FingerGeometry {
    /// Rigid link length in meters.
    pub link_length: f64,
    /// Soft joint length in meters.
    pub joint_length: f64,
    /// Distance of each tendon from the finger center line, meters.
    pub tendon_offsets: [f64; N_TENDONS],
    /// Mass of one segment (link plus joint), kg.
    pub link_mass: f64,
    /// Inertia of one segment about its proximal joint, kg m^2. Derived from a
    /// uniform slender rod when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_inertia: Option<f64>,
}

impl Default for FingerGeometry {
    fn default() -> Self {
        Self {
            link_length: 30e-3,
            joint_length: 15e-3,
            tendon_offsets: [8e-3, 5e-3, 8e-3],
            link_mass: 0.5,
            link_inertia: None,
        }
    }
}

impl FingerGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive (got {v})")))
            }
        };
        positive("link_length", self.link_length)?;
        positive("joint_length", self.joint_length)?;
        for (i, r) in self.tendon_offsets.iter().enumerate() {
            positive(&format!("tendon_offsets[{i}]"), *r)?;
        }
        positive("link_mass", self.link_mass)?;
        if let Some(inertia) = self.link_inertia {
            positive("link_inertia", inertia)?;
        }
        Ok(())
    }

    /// Joint-to-joint distance of one segment.
    pub fn segment_length(&self) -> f64 {
        self.link_length + self.joint_length
    }

    /// Segment inertia about its proximal end.
    pub fn end_inertia(&self) -> f64 {
        self.link_inertia.unwrap_or_else(|| {
            let l = self.segment_length();
            self.link_mass * l * l / 3.0
        })
    }

    /// Tension-to-torque map. Tendon 1 acts on joint 1 only; tendons 2 and 3
    /// form an antagonistic pair spanning both joints. Moment arms are the
    /// tendon offsets and do not depend on `q`.
    pub fn coupling_matrix(&self, _q: &Vector2<f64>) -> Matrix2x3<f64> {
        let [r1, r2, r3] = self.tendon_offsets;
        Matrix2x3::new(r1, -r2, r3, 0.0, -r2, r3)
    }

    /// Direction of the torque null space of [`coupling_matrix`](Self::coupling_matrix).
    pub fn coupling_kernel(&self) -> Vector3<f64> {
        let [_, r2, r3] = self.tendon_offsets;
        Vector3::new(0.0, r3, r2)
    }

    fn coupling_terms(&self) -> (f64, f64, f64) {
        let l = self.segment_length();
        let m = self.link_mass;
        let lc = 0.5 * l;
        (self.end_inertia(), m * l * l, m * l * lc)
    }

    /// Planar two-link inertia matrix.
    pub fn mass_matrix(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        let (inertia, m_l2, m_l_lc) = self.coupling_terms();
        let c2 = q[1].cos();
        let m11 = 2.0 * inertia + m_l2 + 2.0 * m_l_lc * c2;
        let m12 = inertia + m_l_lc * c2;
        Matrix2::new(m11, m12, m12, inertia)
    }

    /// Coriolis factorization `C(q, q_dot)` with `h = C q_dot`.
    pub fn coriolis_matrix(&self, q: &Vector2<f64>, q_dot: &Vector2<f64>) -> Matrix2<f64> {
        let (_, _, m_l_lc) = self.coupling_terms();
        let hc = m_l_lc * q[1].sin();
        Matrix2::new(
            -hc * q_dot[1],
            -hc * (q_dot[0] + q_dot[1]),
            hc * q_dot[0],
            0.0,
        )
    }

    /// Coriolis and centrifugal torques. The finger moves in a horizontal
    /// plane, so there is no gravity term.
    pub fn nonlinear_term(&self, q: &Vector2<f64>, q_dot: &Vector2<f64>) -> Vector2<f64> {
        let (_, _, m_l_lc) = self.coupling_terms();
        let hc = m_l_lc * q[1].sin();
        Vector2::new(
            -hc * (2.0 * q_dot[0] * q_dot[1] + q_dot[1] * q_dot[1]),
            hc * q_dot[0] * q_dot[0],
        )
    }
}

/// Shape parameters of a log-normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalShape {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalShape {
    pub const fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::invalid(format!(
                "log-normal shape needs finite mu and sigma >= 0 (got mu={}, sigma={})",
                self.mu, self.sigma
            )));
        }
        Ok(())
    }
}

/// Log-normal shapes of all six viscoelastic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeTable {
    pub k_v: [LogNormalShape; N_JOINTS],
    pub c_v: [LogNormalShape; N_JOINTS],
    pub c_p: [LogNormalShape; N_JOINTS],
}

impl Default for ShapeTable {
    fn default() -> Self {
        Self {
            k_v: [LogNormalShape::new(-2.81, 0.0918), LogNormalShape::new(-2.62, 0.115)],
            c_v: [LogNormalShape::new(-4.20, 0.648), LogNormalShape::new(-4.27, 0.492)],
            c_p: [LogNormalShape::new(2.13, 0.706), LogNormalShape::new(2.72, 0.912)],
        }
    }
}

impl ShapeTable {
    /// Shapes in parameter-vector order `[k_v1, k_v2, c_v1, c_v2, c_p1, c_p2]`.
    pub fn to_array(&self) -> [LogNormalShape; N_PARAMS] {
        [self.k_v[0], self.k_v[1], self.c_v[0], self.c_v[1], self.c_p[0], self.c_p[1]]
    }

    pub fn sigmas(&self) -> [f64; N_PARAMS] {
        self.to_array().map(|s| s.sigma)
    }

    /// Same medians, zero spread.
    pub fn deterministic(&self) -> Self {
        let zero = |s: [LogNormalShape; 2]| s.map(|s| LogNormalShape::new(s.mu, 0.0));
        Self {
            k_v: zero(self.k_v),
            c_v: zero(self.c_v),
            c_p: zero(self.c_p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.to_array().iter().try_for_each(LogNormalShape::validate)
    }
}

/// Viscoelastic parameters of both joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscoelasticParams {
    /// Series stiffness per joint.
    pub k_v: [f64; N_JOINTS],
    /// Series damping per joint.
    pub c_v: [f64; N_JOINTS],
    /// Parallel damping per joint.
    pub c_p: [f64; N_JOINTS],
}

/// Diagonals of the matrices `A`, `B`, `C`, `D` of the joint law.
#[derive(Debug, Clone, Copy)]
pub struct JointLaw {
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
    pub c: Vector2<f64>,
    pub d: Vector2<f64>,
}

impl ViscoelasticParams {
    pub fn from_array(p: [f64; N_PARAMS]) -> Self {
        Self {
            k_v: [p[0], p[1]],
            c_v: [p[2], p[3]],
            c_p: [p[4], p[5]],
        }
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.k_v[0], self.k_v[1], self.c_v[0], self.c_v[1], self.c_p[0], self.c_p[1]]
    }

    pub fn validate(&self) -> Result<()> {
        match self.to_array().iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            Some(v) => Err(Error::invalid(format!(
                "viscoelastic parameters must be positive (got {v})"
            ))),
            None => Ok(()),
        }
    }

    pub fn joint_law(&self) -> JointLaw {
        let kv = Vector2::from(self.k_v);
        let cv = Vector2::from(self.c_v);
        let cp = Vector2::from(self.c_p);
        JointLaw {
            a: cp.component_mul(&kv),
            b: cv.component_mul(&cp),
            c: cv + cp,
            d: kv,
        }
    }
}

/// Medians `exp(mu)` of every parameter distribution.
pub fn median_params(shapes: &ShapeTable) -> ViscoelasticParams {
    ViscoelasticParams::from_array(shapes.to_array().map(|s| s.median()))
}

/// Full state of the stochastic finger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FingerState {
    pub q: Vector2<f64>,
    pub q_dot: Vector2<f64>,
    pub tau: Vector2<f64>,
}

impl FingerState {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.q[0], self.q[1], self.q_dot[0], self.q_dot[1], self.tau[0], self.tau[1],
        )
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            q: Vector2::new(x[0], x[1]),
            q_dot: Vector2::new(x[2], x[3]),
            tau: Vector2::new(x[4], x[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Cable tensions in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TendonInput(pub Vector3<f64>);

impl TendonInput {
    pub fn new(u: [f64; N_TENDONS]) -> Self {
        Self(Vector3::from(u))
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_array(&self) -> [f64; N_TENDONS] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn is_within(&self, lower: f64, upper: f64) -> bool {
        self.0.iter().all(|&v| v >= lower && v <= upper)
    }

    pub fn clamped(&self, lower: f64, upper: f64) -> Self {
        Self(self.0.map(|v| v.clamp(lower, upper)))
    }
}

/// Second-order solve of the inertia matrix; returns `M^-1 rhs`.
fn solve_mass(m: &Matrix2<f64>, rhs: &Vector2<f64>) -> Result<Vector2<f64>> {
    m.cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or_else(|| Error::Numeric("inertia matrix is not positive definite".into()))
}

/// Joint accelerations and torque rates from the full model.
fn accelerations(
    geometry: &FingerGeometry,
    x: &FingerState,
    u: &TendonInput,
    law: &JointLaw,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let m = geometry.mass_matrix(&x.q);
    let h = geometry.nonlinear_term(&x.q, &x.q_dot);
    let drive = geometry.coupling_matrix(&x.q) * u.0;
    let q_ddot = solve_mass(&m, &(drive - h - x.tau))?;
    let tau_dot = (law.a.component_mul(&q_ddot) + law.b.component_mul(&x.q_dot)
        - law.d.component_mul(&x.tau))
    .component_div(&law.c);
    Ok((q_ddot, tau_dot))
}

/// Time derivative of the full state.
pub fn state_derivative(
    geometry: &FingerGeometry,
    x: &FingerState,
    u: &TendonInput,
    params: &ViscoelasticParams,
) -> Result<Vector6<f64>> {
    let (q_ddot, tau_dot) = accelerations(geometry, x, u, &params.joint_law())?;
    Ok(Vector6::new(
        x.q_dot[0], x.q_dot[1], q_ddot[0], q_ddot[1], tau_dot[0], tau_dot[1],
    ))
}

/// Central differences of `f` with respect to `ln p`, one column per parameter.
pub fn log_param_jacobian<const R: usize>(
    params: &ViscoelasticParams,
    step: f64,
    mut f: impl FnMut(&ViscoelasticParams) -> Result<SVector<f64, R>>,
) -> Result<SMatrix<f64, R, N_PARAMS>> {
    let base = params.to_array();
    let mut jac = SMatrix::<f64, R, N_PARAMS>::zeros();
    let (up, down) = (step.exp(), (-step).exp());
    for k in 0..N_PARAMS {
        let mut plus = base;
        let mut minus = base;
        plus[k] *= up;
        minus[k] *= down;
        let fp = f(&ViscoelasticParams::from_array(plus))?;
        let fm = f(&ViscoelasticParams::from_array(minus))?;
        let col = (fp - fm) / (2.0 * step);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite dynamics while differentiating parameter {k}"
            )));
        }
        jac.set_column(k, &col);
    }
    Ok(jac)
}

/// Sensitivity of the full state derivative to the log-parameters.
pub fn param_jacobian(
    geometry: &FingerGeometry,
    x: &FingerState,
    u: &TendonInput,
    nominal: &ViscoelasticParams,
) -> Result<Matrix6> {
    param_jacobian_with_step(geometry, x, u, nominal, PARAM_FD_STEP)
}

pub fn param_jacobian_with_step(
    geometry: &FingerGeometry,
    x: &FingerState,
    u: &TendonInput,
    nominal: &ViscoelasticParams,
    step: f64,
) -> Result<Matrix6> {
    nominal.validate()?;
    log_param_jacobian(nominal, step, |p| state_derivative(geometry, x, u, p))
}

/// Quasi-static joint velocity `A^-1 (C tau + D eta - B q)` for a given joint torque.
pub fn reduced_velocity(
    q: &Vector2<f64>,
    tau: &Vector2<f64>,
    eta: &Vector2<f64>,
    params: &ViscoelasticParams,
) -> Vector2<f64> {
    let law = params.joint_law();
    (law.c.component_mul(tau) + law.d.component_mul(eta) - law.b.component_mul(q))
        .component_div(&law.a)
}

/// Reduced drift with inertia neglected, so the joint torque equals `P u`.
/// `eta` is the running integral of the joint torque along the nominal trajectory.
pub fn reduced_advection(
    geometry: &FingerGeometry,
    q: &Vector2<f64>,
    u: &TendonInput,
    eta: &Vector2<f64>,
    params: &ViscoelasticParams,
) -> Vector2<f64> {
    let tau = geometry.coupling_matrix(q) * u.0;
    reduced_velocity(q, &tau, eta, params)
}

/// Drift and diffusion of the reduced joint-angle SDE for a fixed input and
/// integral state. Parameter uncertainty is mapped to noise through the
/// log-parameter Jacobian scaled by the shape sigmas: `a = S S^T`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedField {
    pub tau: Vector2<f64>,
    pub eta: Vector2<f64>,
    pub nominal: ViscoelasticParams,
    pub sigmas: [f64; N_PARAMS],
}

impl ReducedField {
    pub fn new(
        geometry: &FingerGeometry,
        u: &TendonInput,
        eta: Vector2<f64>,
        shapes: &ShapeTable,
    ) -> Self {
        Self {
            tau: geometry.coupling_matrix(&Vector2::zeros()) * u.0,
            eta,
            nominal: median_params(shapes),
            sigmas: shapes.sigmas(),
        }
    }

    pub fn drift(&self, q: &Vector2<f64>) -> Vector2<f64> {
        reduced_velocity(q, &self.tau, &self.eta, &self.nominal)
    }

    /// Log-parameter Jacobian of the drift, 2 x 6.
    pub fn jacobian(&self, q: &Vector2<f64>) -> Matrix2x6 {
        // reduced_velocity is finite for positive parameters, so this cannot fail
        log_param_jacobian(&self.nominal, PARAM_FD_STEP, |p| {
            Ok(reduced_velocity(q, &self.tau, &self.eta, p))
        })
        .expect("reduced drift is finite for positive parameters")
    }

    pub fn diffusion(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        let mut s = self.jacobian(q);
        for (k, sigma) in self.sigmas.iter().enumerate() {
            s.column_mut(k).scale_mut(*sigma);
        }
        let a = s * s.transpose();
        // exact symmetry
        Matrix2::new(a[(0, 0)], a[(0, 1)], a[(0, 1)], a[(1, 1)])
    }
}

/// Diffusion matrix of the reduced model at one grid point.
pub fn diffusion_matrix(
    geometry: &FingerGeometry,
    q: &Vector2<f64>,
    u: &TendonInput,
    eta: &Vector2<f64>,
    shapes: &ShapeTable,
) -> Matrix2<f64> {
    ReducedField::new(geometry, u, *eta, shapes).diffusion(q)
}

/// One classical Runge-Kutta step.
pub fn rk4_step<const N: usize>(
    x: &SVector<f64, N>,
    dt: f64,
    mut f: impl FnMut(&SVector<f64, N>) -> Result<SVector<f64, N>>,
) -> Result<SVector<f64, N>> {
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (0.5 * dt)))?;
    let k3 = f(&(x + k2 * (0.5 * dt)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// Full state augmented with the torque integral `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NominalState {
    pub finger: FingerState,
    pub eta: Vector2<f64>,
}

impl NominalState {
    /// Integrate over `duration` with a constant input using RK4 steps of at most `dt_fine`.
    pub fn advance(
        &self,
        geometry: &FingerGeometry,
        u: &TendonInput,
        params: &ViscoelasticParams,
        duration: f64,
        dt_fine: f64,
    ) -> Result<Self> {
        let steps = substeps(duration, dt_fine)?;
        let h = duration / steps as f64;
        let law = params.joint_law();
        let mut x = SVector::<f64, 8>::from_iterator(
            self.finger.to_vector().iter().chain(self.eta.iter()).copied(),
        );
        for _ in 0..steps {
            x = rk4_step(&x, h, |y| {
                let s = FingerState::from_vector(&y.fixed_rows::<6>(0).into_owned());
                let (q_ddot, tau_dot) = accelerations(geometry, &s, u, &law)?;
                Ok(SVector::<f64, 8>::from([
                    s.q_dot[0], s.q_dot[1], q_ddot[0], q_ddot[1], tau_dot[0], tau_dot[1],
                    s.tau[0], s.tau[1],
                ]))
            })?;
        }
        Ok(Self {
            finger: FingerState::from_vector(&x.fixed_rows::<6>(0).into_owned()),
            eta: Vector2::new(x[6], x[7]),
        })
    }
}

/// Number of fine steps covering `duration`; `dt_fine` must divide it.
pub fn substeps(duration: f64, dt_fine: f64) -> Result<usize> {
    if !(dt_fine > 0.0) || !(duration >= 0.0) {
        return Err(Error::invalid(format!(
            "need dt_fine > 0 and duration >= 0 (got {dt_fine}, {duration})"
        )));
    }
    let ratio = duration / dt_fine;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::invalid(format!(
            "dt_fine {dt_fine} does not divide the step {duration}"
        )));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geometry() -> FingerGeometry {
        FingerGeometry::default()
    }

    #[test]
    fn median_params_follow_table() {
        let p = median_params(&ShapeTable::default());
        assert_relative_eq!(p.k_v[0], 0.060205, epsilon = 1e-6);
        assert_relative_eq!(p.c_p[1], 15.180, epsilon = 1e-3);
        assert_eq!(LogNormalShape::new(0.0, 0.3).median(), 1.0);
    }

    #[test]
    fn coupling_structure() {
        let g = geometry();
        let p = g.coupling_matrix(&Vector2::new(0.3, -0.2));
        assert_eq!(p, Matrix2x3::new(0.008, -0.005, 0.008, 0.0, -0.005, 0.008));
        assert_eq!(p[(1, 0)], 0.0);
        for row in 0..2 {
            assert!(p[(row, 1)] * p[(row, 2)] < 0.0);
        }
        assert_eq!(p * Vector3::zeros(), Vector2::zeros());
        let t = 1.7;
        let null = Vector3::new(0.0, t, t * 0.005 / 0.008);
        assert!((p * null).norm() < 1e-15);
        assert!((p * g.coupling_kernel()).norm() < 1e-18);
    }

    #[test]
    fn mass_matrix_extension_maximizes_inertia() {
        let g = geometry();
        let straight = g.mass_matrix(&Vector2::new(0.1, 0.0));
        let bent = g.mass_matrix(&Vector2::new(0.1, std::f64::consts::FRAC_PI_2));
        assert!(straight[(0, 0)] >= bent[(0, 0)]);
    }

    #[test]
    fn nonlinear_term_is_quadratic() {
        let g = geometry();
        let q = Vector2::new(0.2, 0.7);
        let qd = Vector2::new(0.4, -1.1);
        assert_eq!(g.nonlinear_term(&q, &Vector2::zeros()), Vector2::zeros());
        let h1 = g.nonlinear_term(&q, &qd);
        let h2 = g.nonlinear_term(&q, &(qd * 2.0));
        assert_relative_eq!(h2, h1 * 4.0, epsilon = 1e-15);
        assert_relative_eq!(g.coriolis_matrix(&q, &qd) * qd, h1, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_at_rest() {
        let p = median_params(&ShapeTable::default());
        let dx = state_derivative(&geometry(), &FingerState::default(), &TendonInput::zero(), &p)
            .unwrap();
        assert_eq!(dx, Vector6::zeros());
    }

    #[test]
    fn q_block_of_param_jacobian_is_zero() {
        let x = FingerState {
            q: Vector2::new(0.1, -0.2),
            q_dot: Vector2::new(0.3, 0.1),
            tau: Vector2::new(0.002, -0.001),
        };
        let p = median_params(&ShapeTable::default());
        let j = param_jacobian(&geometry(), &x, &TendonInput::new([1.0, 0.5, 2.0]), &p).unwrap();
        assert!(j.fixed_rows::<2>(0).iter().all(|v| *v == 0.0));
        assert!(j.fixed_rows::<4>(2).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn reduced_advection_signs() {
        let g = geometry();
        let p = median_params(&ShapeTable::default());
        let zero = reduced_advection(&g, &Vector2::zeros(), &TendonInput::zero(), &Vector2::zeros(), &p);
        assert_eq!(zero, Vector2::zeros());
        let v = reduced_advection(
            &g,
            &Vector2::zeros(),
            &TendonInput::new([1.0, 0.0, 0.0]),
            &Vector2::zeros(),
            &p,
        );
        assert!(v[0] > 0.0);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn diffusion_vanishes_without_spread_or_drive() {
        let g = geometry();
        let shapes = ShapeTable::default();
        let q = Vector2::new(0.3, -0.4);
        let u = TendonInput::new([1.0, 2.0, 0.5]);
        let eta = Vector2::new(0.01, -0.02);
        assert_eq!(diffusion_matrix(&g, &q, &u, &eta, &shapes.deterministic()), Matrix2::zeros());
        let origin = diffusion_matrix(&g, &Vector2::zeros(), &TendonInput::zero(), &Vector2::zeros(), &shapes);
        assert_eq!(origin, Matrix2::zeros());
    }

    #[test]
    fn substeps_require_divisor() {
        assert_eq!(substeps(0.1, 1e-3).unwrap(), 100);
        assert!(substeps(0.1, 0.03).is_err());
        assert!(substeps(0.1, 0.0).is_err());
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut g = geometry();
        g.tendon_offsets[1] = 0.0;
        assert!(g.validate().is_err());
        g = geometry();
        g.link_inertia = Some(-1.0);
        assert!(g.validate().is_err());
    }
}
