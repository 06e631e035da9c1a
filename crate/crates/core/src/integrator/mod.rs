//! Implicit Runge–Kutta stepping for `ẏ = J ∇H(y)`, in the full `k`-stage
//! form and in the reduced `s`-coefficient γ form.

mod step;
mod study;
mod system;

pub use step::{
    gamma_step, rk_step, rk_step_signed, GammaSolver, GammaState, JacobianSource, SolverConfig,
    SolverMode, StepOutcome, Stepper,
};
pub use study::{
    convergence_order, energy_drift, fine_reference, integrate, EnergyDrift, OrderStudy,
    Trajectory, ERROR_FLOOR,
};
pub use system::{canonical_structure, Hamiltonian, HamiltonianSystem};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use crate::tableau::{hbvm_tableau, HbvmSpec};
    use crate::HbvmError;
    use approx::assert_abs_diff_eq;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn midpoint_on_harmonic_is_cayley_map() {
        let sys = problems::harmonic().system;
        let tab = hbvm_tableau(&HbvmSpec::gauss(1, 1).unwrap()).unwrap();
        let h = 0.1;
        let out = rk_step(&tab, &sys, &[1.0, 0.0], h, &SolverConfig::default()).unwrap();
        // f(y) = (p, -q); (I - hJ/2)^{-1}(I + hJ/2) applied to (1, 0).
        let a = h / 2.0;
        let d = 1.0 + a * a;
        let expected = [(1.0 - a * a) / d, -2.0 * a / d];
        assert!(max_diff(&out.y1, &expected) <= 1e-12);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let sys = problems::pendulum().system;
        let tab = hbvm_tableau(&HbvmSpec::gauss(4, 2).unwrap()).unwrap();
        let out = rk_step(&tab, &sys, &[0.0, 0.0], 0.3, &SolverConfig::default()).unwrap();
        assert_eq!(out.y1, vec![0.0, 0.0]);
        let (out, _) = gamma_step(
            &HbvmSpec::gauss(4, 2).unwrap(),
            &sys,
            &[0.0, 0.0],
            0.3,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.y1, vec![0.0, 0.0]);
    }

    #[test]
    fn sextic_energy_single_step() {
        let p = problems::sextic();
        let spec = HbvmSpec::gauss(6, 2).unwrap();
        let tab = hbvm_tableau(&spec).unwrap();
        let out = rk_step(
            &tab,
            &p.system,
            &p.default_y0,
            0.1,
            &SolverConfig::default(),
        )
        .unwrap();
        let h0 = p.system.energy(&p.default_y0);
        assert!((p.system.energy(&out.y1) - h0).abs() <= 1e-12 * h0.abs());
    }

    #[test]
    fn gamma_matches_rk_on_sextic() {
        let p = problems::sextic();
        let spec = HbvmSpec::gauss(6, 2).unwrap();
        let cfg = SolverConfig::default();
        let rk = rk_step(
            &hbvm_tableau(&spec).unwrap(),
            &p.system,
            &p.default_y0,
            0.1,
            &cfg,
        )
        .unwrap();
        let (g, state) = gamma_step(&spec, &p.system, &p.default_y0, 0.1, &cfg).unwrap();
        assert!(max_diff(&rk.y1, &g.y1) <= 10.0 * cfg.tol);
        assert_eq!(state.gamma.len(), 2);
        assert_eq!(state.stage_values.len(), 6);
    }

    #[test]
    fn gamma_single_coefficient() {
        let p = problems::pendulum();
        let spec = HbvmSpec::gauss(3, 1).unwrap();
        let h = 0.2;
        let (out, state) =
            gamma_step(&spec, &p.system, &p.default_y0, h, &SolverConfig::default()).unwrap();
        let mut expected = vec![0.0; 2];
        let mut scratch = vec![0.0; 2];
        let mut f = vec![0.0; 2];
        for (l, stage) in state.stage_values.iter().enumerate() {
            p.system.vector_field(stage, &mut scratch, &mut f);
            for i in 0..2 {
                expected[i] += spec.system().omega()[l] * f[i];
            }
        }
        assert!(max_diff(&state.gamma[0], &expected) <= 1e-12);
        for i in 0..2 {
            assert_abs_diff_eq!(
                out.y1[i] - p.default_y0[i],
                h * state.gamma[0][i],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn gamma_state_stage_relation() {
        let p = problems::henon_heiles();
        let spec = HbvmSpec::lobatto(5, 2).unwrap();
        let h = 0.1;
        let (_, state) =
            gamma_step(&spec, &p.system, &p.default_y0, h, &SolverConfig::default()).unwrap();
        let basis = spec.basis();
        for (l, stage) in state.stage_values.iter().enumerate() {
            for (i, (&x, &y0)) in stage.iter().zip(&p.default_y0).enumerate() {
                let v: f64 = y0
                    + h * (0..2)
                        .map(|j| basis.i_s[(l, j)] * state.gamma[j][i])
                        .sum::<f64>();
                assert_abs_diff_eq!(x, v, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pendulum_practical_conservation() {
        let p = problems::pendulum();
        let spec = HbvmSpec::gauss(8, 2).unwrap();
        let (out, _) = gamma_step(
            &spec,
            &p.system,
            &p.default_y0,
            0.1,
            &SolverConfig::default(),
        )
        .unwrap();
        let drift = (p.system.energy(&out.y1) - p.system.energy(&p.default_y0)).abs();
        assert!(drift <= 1e-10, "{drift:e}");
    }

    #[test]
    fn newton_agrees_with_fixed_point() {
        for p in problems::catalog() {
            let spec = HbvmSpec::gauss(4, 2).unwrap();
            let tab = hbvm_tableau(&spec).unwrap();
            let fp = SolverConfig::default();
            let nt = SolverConfig::newton();
            let user = SolverConfig {
                jacobian: JacobianSource::UserSupplied,
                ..nt
            };
            let a = rk_step(&tab, &p.system, &p.default_y0, 0.05, &fp).unwrap();
            let b = rk_step(&tab, &p.system, &p.default_y0, 0.05, &nt).unwrap();
            let c = rk_step(&tab, &p.system, &p.default_y0, 0.05, &user).unwrap();
            assert!(max_diff(&a.y1, &b.y1) <= 10.0 * fp.tol, "{}", p.name);
            assert!(max_diff(&a.y1, &c.y1) <= 10.0 * fp.tol, "{}", p.name);
            let (g, _) = gamma_step(&spec, &p.system, &p.default_y0, 0.05, &nt).unwrap();
            assert!(max_diff(&a.y1, &g.y1) <= 10.0 * fp.tol, "{}", p.name);
        }
    }

    #[test]
    fn fixed_point_divergence_is_reported() {
        let p = problems::harmonic();
        let tab = hbvm_tableau(&HbvmSpec::gauss(2, 2).unwrap()).unwrap();
        let err = rk_step(
            &tab,
            &p.system,
            &p.default_y0,
            20.0,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, HbvmError::FixedPointDiverged { .. }), "{err}");
        // Newton handles the linear problem regardless of h.
        assert!(rk_step(
            &tab,
            &p.system,
            &p.default_y0,
            20.0,
            &SolverConfig::newton()
        )
        .is_ok());
    }

    #[test]
    fn non_convergence_carries_residual() {
        let p = problems::kepler(0.6);
        let tab = hbvm_tableau(&HbvmSpec::gauss(2, 2).unwrap()).unwrap();
        let cfg = SolverConfig {
            max_iter: 2,
            ..SolverConfig::default()
        };
        match rk_step(&tab, &p.system, &p.default_y0, 0.1, &cfg) {
            Err(HbvmError::SolverNotConverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > cfg.tol);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_inputs() {
        let p = problems::harmonic();
        let tab = hbvm_tableau(&HbvmSpec::gauss(1, 1).unwrap()).unwrap();
        let cfg = SolverConfig::default();
        assert!(rk_step(&tab, &p.system, &[1.0, 0.0], -0.1, &cfg).is_err());
        assert!(rk_step(&tab, &p.system, &[1.0, 0.0, 0.0], 0.1, &cfg).is_err());
        assert!(rk_step(&tab, &p.system, &[1.0, 0.0], 0.1, &cfg.with_tol(0.0)).is_err());
        let stepper = Stepper::Rk(tab);
        assert!(integrate(&stepper, &p.system, &[1.0, 0.0], 0.1, 0, &cfg).is_err());
    }

    #[test]
    fn step_failure_reports_index() {
        let p = problems::harmonic();
        let stepper = Stepper::rk(&HbvmSpec::gauss(2, 2).unwrap()).unwrap();
        let err = integrate(
            &stepper,
            &p.system,
            &p.default_y0,
            20.0,
            3,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, HbvmError::StepFailed { step: 1, .. }));
    }

    #[test]
    fn equilibrium_trajectory_is_constant() {
        let p = problems::henon_heiles();
        let stepper = Stepper::gamma(&HbvmSpec::gauss(3, 2).unwrap());
        let traj = integrate(
            &stepper,
            &p.system,
            &[0.0; 4],
            0.1,
            50,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(traj.states.iter().all(|y| y == &[0.0; 4]));
        let d = energy_drift(&traj);
        assert_eq!((d.max_abs, d.final_abs), (0.0, 0.0));
        assert_eq!(traj.len(), 51);
        assert_abs_diff_eq!(traj.times[50], 5.0, epsilon = 1e-12);
    }
}
