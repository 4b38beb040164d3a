//! Randomized invariants of the model, the density solver and the controller.

use fpe_mpc::finger::{
    median_params, param_jacobian, reduced_advection, state_derivative, ReducedField,
};
use fpe_mpc::fpe::{bernoulli, chang_cooper_delta, gaussian_pdf, l2_distance, step};
use fpe_mpc::monte_carlo::sample_parameters;
use fpe_mpc::{FingerGeometry, FingerState, Grid2D, ShapeTable, TendonInput, ViscoelasticParams};
use nalgebra::{Matrix2, Vector2, Vector3};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -std::f64::consts::PI..std::f64::consts::PI
}

fn vec2(range: std::ops::Range<f64>) -> impl Strategy<Value = Vector2<f64>> {
    (range.clone(), range).prop_map(|(a, b)| Vector2::new(a, b))
}

fn input() -> impl Strategy<Value = TendonInput> {
    (0.0..=5.0, 0.0..=5.0, 0.0..=5.0).prop_map(|(a, b, c)| TendonInput::new([a, b, c]))
}

fn params() -> impl Strategy<Value = ViscoelasticParams> {
    proptest::array::uniform6(-1.5..1.5f64).prop_map(|z| {
        let medians = median_params(&ShapeTable::default()).to_array();
        let mut p = [0.0; 6];
        for k in 0..6 {
            p[k] = medians[k] * z[k].exp();
        }
        ViscoelasticParams::from_array(p)
    })
}

proptest! {
    #[test]
    fn delta_is_a_weight(w in -800.0..800.0f64) {
        let d = chang_cooper_delta(w);
        prop_assert!(d > 0.0 && d < 1.0, "delta({w}) = {d}");
        prop_assert!((d + chang_cooper_delta(-w) - 1.0).abs() < 1e-12);
        prop_assert!(bernoulli(w) >= 0.0);
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(q2 in angle(), q1 in angle()) {
        let m = FingerGeometry::default().mass_matrix(&Vector2::new(q1, q2));
        prop_assert_eq!(m[(0, 1)], m[(1, 0)]);
        let eig = m.symmetric_eigenvalues();
        prop_assert!(eig.min() > 0.0);
    }

    #[test]
    fn coriolis_factorization_is_passive(q in vec2(-3.0..3.0), v in vec2(-5.0..5.0)) {
        let g = FingerGeometry::default();
        let eps = 1e-6;
        let m_dot = (g.mass_matrix(&(q + v * eps)) - g.mass_matrix(&(q - v * eps))) / (2.0 * eps);
        let s = v.dot(&((m_dot - 2.0 * g.coriolis_matrix(&q, &v)) * v));
        let scale = v.norm_squared() * m_dot.norm().max(g.mass_matrix(&q).norm());
        prop_assert!(s.abs() <= 1e-6 * scale, "{s} vs {scale}");
        let h = g.nonlinear_term(&q, &v);
        prop_assert!((h - g.coriolis_matrix(&q, &v) * v).norm() <= 1e-12 * (1.0 + h.norm()));
    }

    #[test]
    fn state_derivative_satisfies_both_model_lines(
        q in vec2(-1.0..1.0),
        qd in vec2(-2.0..2.0),
        tau in vec2(-0.05..0.05),
        u in input(),
        p in params(),
    ) {
        let g = FingerGeometry::default();
        let x = FingerState { q, q_dot: qd, tau };
        let dx = state_derivative(&g, &x, &u, &p).unwrap();
        let q_ddot = Vector2::new(dx[2], dx[3]);
        let tau_dot = Vector2::new(dx[4], dx[5]);
        prop_assert_eq!(Vector2::new(dx[0], dx[1]), qd);

        let drive = g.coupling_matrix(&q) * u.0;
        let motion = g.mass_matrix(&q) * q_ddot + g.nonlinear_term(&q, &qd) + tau - drive;
        let scale = 1.0 + drive.norm() + tau.norm();
        prop_assert!(motion.norm() < 1e-12 * scale, "motion residual {}", motion.norm());

        let law = p.joint_law();
        let joint = law.a.component_mul(&q_ddot) + law.b.component_mul(&qd)
            - law.c.component_mul(&tau_dot) - law.d.component_mul(&tau);
        let scale = 1.0 + law.a.component_mul(&q_ddot).norm() + law.b.component_mul(&qd).norm();
        prop_assert!(joint.norm() < 1e-12 * scale, "joint residual {}", joint.norm());
    }

    #[test]
    fn coupling_is_configuration_free_and_antagonistic(q in vec2(-3.0..3.0)) {
        let p = FingerGeometry::default().coupling_matrix(&q);
        prop_assert_eq!(p[(1, 0)], 0.0);
        for row in 0..2 {
            prop_assert!(p[(row, 1)] * p[(row, 2)] < 0.0);
        }
    }

    #[test]
    fn jacobian_q_block_is_zero(
        q in vec2(-1.0..1.0), qd in vec2(-1.0..1.0), u in input(), p in params()
    ) {
        let x = FingerState { q, q_dot: qd, tau: Vector2::new(0.01, -0.02) };
        let j = param_jacobian(&FingerGeometry::default(), &x, &u, &p).unwrap();
        prop_assert!(j.fixed_rows::<2>(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diffusion_is_symmetric_psd(q in vec2(-0.75..0.75), u in input(), eta in vec2(-0.2..0.2)) {
        let field = ReducedField::new(&FingerGeometry::default(), &u, eta, &ShapeTable::default());
        let a = field.diffusion(&q);
        prop_assert_eq!(a[(0, 1)], a[(1, 0)]);
        let eig = a.symmetric_eigenvalues();
        prop_assert!(eig.min() >= -1e-15 * (1.0 + eig.max()));
    }

    #[test]
    fn reduced_advection_is_affine_in_u(
        q in vec2(-0.5..0.5), eta in vec2(-0.1..0.1), a in input(), b in input(), t in 0.0..1.0f64
    ) {
        let g = FingerGeometry::default();
        let p = median_params(&ShapeTable::default());
        let mix = TendonInput(a.0 * t + b.0 * (1.0 - t));
        let lhs = reduced_advection(&g, &q, &mix, &eta, &p);
        let rhs = reduced_advection(&g, &q, &a, &eta, &p) * t
            + reduced_advection(&g, &q, &b, &eta, &p) * (1.0 - t);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn clamped_inputs_stay_in_bounds(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
        let u = TendonInput(Vector3::new(a, b, c)).clamped(0.0, 5.0);
        prop_assert!(u.is_within(0.0, 5.0));
    }

    #[test]
    fn sampled_parameters_are_positive(seed in any::<u64>()) {
        let p = sample_parameters(&ShapeTable::default(), seed).unwrap();
        prop_assert!(p.to_array().iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn l2_is_a_symmetric_square_distance(
        m1 in vec2(-0.05..0.05), m2 in vec2(-0.05..0.05), s in 0.02..0.06f64
    ) {
        let g = Grid2D::new([-0.15, -0.15], [0.15, 0.15], 21).unwrap();
        let p = gaussian_pdf(&g, [m1[0], m1[1]], [s, s]).unwrap();
        let q = gaussian_pdf(&g, [m2[0], m2[1]], [s, s]).unwrap();
        let d = l2_distance(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, l2_distance(&q, &p).unwrap());
        prop_assert_eq!(l2_distance(&p, &p).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_preserve_positivity_and_mass(
        mu in vec2(-0.3..0.3),
        sigma in 0.06..0.15f64,
        v0 in vec2(-0.5..0.5),
        rate in 0.0..1.0f64,
        d1 in 1e-5..5e-3f64,
        d2 in 1e-5..5e-3f64,
        dt in 0.02..0.2f64,
    ) {
        let g = Grid2D::new([-0.75, -0.75], [0.75, 0.75], 21).unwrap();
        let p0 = gaussian_pdf(&g, [mu[0], mu[1]], [sigma, sigma]).unwrap();
        let drift: Vec<Vector2<f64>> = g.nodes().map(|q| v0 - q * rate).collect();
        let diffusion = vec![Matrix2::new(d1, 0.0, 0.0, d2); g.len()];
        let first = step(&p0, None, &drift, &diffusion, dt).unwrap();
        prop_assert!(first.mass_drift(1.0) <= 1e-6);
        let second = step(&first.pdf, Some(&p0), &drift, &diffusion, dt).unwrap();
        prop_assert!(second.mass_drift(1.0) <= 1e-6);
        prop_assert!(second.min_before_clamp >= -1e-12);
        prop_assert!(second.pdf.values().iter().all(|v| *v >= 0.0));
        prop_assert!((second.pdf.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_fields_keep_a_stationary_history(mu in vec2(-0.3..0.3), sigma in 0.05..0.2f64) {
        let g = Grid2D::new([-0.75, -0.75], [0.75, 0.75], 21).unwrap();
        let p = gaussian_pdf(&g, [mu[0], mu[1]], [sigma, sigma]).unwrap();
        let out = step(&p, Some(&p), &vec![Vector2::zeros(); g.len()], &vec![Matrix2::zeros(); g.len()], 0.1).unwrap();
        for (a, b) in out.pdf.values().iter().zip(p.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
        }
    }
}
