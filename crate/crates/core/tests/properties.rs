//! Property tests over randomized parameters.

use proptest::prelude::*;
use stefan_core::controller::{ControlGains, SystemMatrices};
use stefan_core::model::{
    min_setpoint_second, validate_initial, InitialData, Order, PhysicalParams, Relaxations,
    TempProfile,
};
use stefan_core::solver::{self, ControlMode, FluxSchedule, SolverConfig};

fn params_with(eps: f64) -> PhysicalParams {
    PhysicalParams {
        alpha: 4.532e-5,
        beta: 1.577e-7,
        k_cond: 116.0,
        t_melt: 420.0,
        length: 0.5,
        relaxations: Relaxations::Second { eps },
    }
}

fn linear_data(s0: f64, v0: f64, t0_bar: f64) -> InitialData {
    InitialData {
        s0,
        v0,
        a0: None,
        profile: TempProfile::Linear { t0_bar },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_setpoint_never_below_s0(
        s0 in 0.01f64..0.4,
        v0 in 0.0f64..0.01,
        t0_bar in 0.0f64..50.0,
        eps in 0.1f64..100.0,
    ) {
        let sr = min_setpoint_second(&linear_data(s0, v0, t0_bar), &params_with(eps)).unwrap();
        prop_assert!(sr >= s0);
    }

    #[test]
    fn min_setpoint_monotone(
        s0 in 0.01f64..0.4,
        v0 in 0.0f64..0.01,
        t0_bar in 0.0f64..50.0,
        eps in 0.1f64..100.0,
        dv in 1e-6f64..0.01,
        dt0 in 1e-3f64..50.0,
        deps in 1e-3f64..100.0,
    ) {
        let base = min_setpoint_second(&linear_data(s0, v0, t0_bar), &params_with(eps)).unwrap();
        let more_v = min_setpoint_second(&linear_data(s0, v0 + dv, t0_bar), &params_with(eps)).unwrap();
        let more_t = min_setpoint_second(&linear_data(s0, v0, t0_bar + dt0), &params_with(eps)).unwrap();
        let more_e = min_setpoint_second(&linear_data(s0, v0, t0_bar), &params_with(eps + deps)).unwrap();
        prop_assert!(more_v >= base);
        prop_assert!(more_t >= base);
        prop_assert!(more_e >= base);
    }

    #[test]
    fn gain_vector_contraction_identity(
        c1 in 0.01f64..2.0,
        c2 in 0.01f64..2.0,
        c3 in 0.01f64..2.0,
        beta in 1e-8f64..1.0,
        eps1 in 0.1f64..50.0,
        eps2 in 0.1f64..50.0,
    ) {
        // K^T B equals -c2 (second order) / -c3 (third order).
        let p2 = PhysicalParams { beta, relaxations: Relaxations::Second { eps: eps1 }, ..params_with(1.0) };
        let g2 = ControlGains::second(c1, c2, 0.2);
        let k2 = g2.gain_vector(&p2).unwrap();
        let b2 = SystemMatrices::new(&p2).b;
        prop_assert!((k2.dot(&b2) + c2).abs() <= 1e-12 * c2.max(1.0));

        let p3 = PhysicalParams { beta, relaxations: Relaxations::Third { eps1, eps2 }, ..params_with(1.0) };
        let g3 = ControlGains::third(c1, c2, c3, 0.2);
        let k3 = g3.gain_vector(&p3).unwrap();
        let b3 = SystemMatrices::new(&p3).b;
        prop_assert!((k3.dot(&b3) + c3).abs() <= 1e-12 * c3.max(1.0));
    }

    #[test]
    fn closed_loop_hurwitz_for_positive_gains(
        c1 in 0.001f64..5.0,
        c2 in 0.001f64..5.0,
        eps in 0.1f64..100.0,
    ) {
        let p = params_with(eps);
        let g = ControlGains::second(c1, c2, 0.2);
        let sys = SystemMatrices::new(&p);
        let acl = sys.closed_loop(&g.gain_vector(&p).unwrap());
        prop_assert!(SystemMatrices::is_hurwitz(&acl));
    }

    #[test]
    fn validation_is_deterministic(
        s0 in -0.1f64..0.6,
        v0 in -0.01f64..0.01,
        t0_bar in -5.0f64..20.0,
    ) {
        let p = params_with(20.0);
        let d = linear_data(s0, v0, t0_bar);
        let a = validate_initial(&d, &p, Order::Second);
        let b = validate_initial(&d, &p, Order::Second);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn open_loop_relaxation_matches_closed_form(
        s0 in 0.02f64..0.1,
        v0 in 0.0f64..0.02,
        eps in 1.0f64..50.0,
        dt in 0.05f64..2.0,
    ) {
        // qc = 0 and T = T_m: the interface advance is exact regardless of dt.
        let p = params_with(eps);
        let d = linear_data(s0, v0, 0.0);
        // Keep the interface inside the domain over the horizon.
        prop_assume!(s0 + eps * v0 < 0.45);
        let cfg = SolverConfig::new(32, dt, 20.0 * dt);
        let traj = solver::simulate(
            &d, &p, None, &cfg, Order::Second,
            &ControlMode::OpenLoop(FluxSchedule::constant(0.0)),
        ).unwrap();
        for r in &traj.records {
            let exact = s0 + eps * v0 * (1.0 - (-r.t / eps).exp());
            prop_assert!((r.s - exact).abs() <= 1e-9 * exact.max(1e-9));
        }
    }
}
