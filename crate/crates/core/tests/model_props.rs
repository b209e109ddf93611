use proptest::prelude::*;
use wentzell::discretize::{build_grid, Spacing};
use wentzell::model::{
    regulation_transform, steady_profile, BoundaryConstants, ContinuousState, ControlParams, PhysicalParams,
    TransformDirection,
};

fn bc(q1: f64, gamma1: f64, f1: f64, f2: f64) -> BoundaryConstants {
    BoundaryConstants { beta1: 20.0, mu1: 12.0, q1, gamma1, f1, f2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip(
        n in 100usize..160,
        amp in 0.0f64..2.0,
        q in 0.0f64..0.05,
        f in -1.0f64..1.0,
        v1_ref in -1.0f64..1.0,
        alpha2 in prop_oneof![Just(0.0), 1.0f64..200.0],
        t in 0.0f64..100.0,
        seed in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        let grid = build_grid(n, &Spacing::Uniform).unwrap();
        let x = grid.nodes();
        let a: Vec<f64> = x.iter().map(|x| 1.0 + amp * x * x).collect();
        let params = PhysicalParams::new(a, vec![q; n + 1], vec![f; n + 1], bc(q, q, 0.3, -0.2)).unwrap();
        let ctrl = ControlParams { kp: 5.0, alpha2, v1_ref };
        let u: Vec<f64> = x.iter().map(|x| seed[0] + seed[1] * (3.0 * x).sin()).collect();
        let udot: Vec<f64> = x.iter().map(|x| seed[2] * x + seed[3]).collect();
        let state = ContinuousState::new(u, udot, Some(seed[0] - seed[3]), t);
        let there = regulation_transform(&state, &params, &ctrl, &grid, TransformDirection::Forward).unwrap();
        let back = regulation_transform(&there, &params, &ctrl, &grid, TransformDirection::Inverse).unwrap();
        let scale = state.u.iter().chain(&state.udot).fold(1.0_f64, |m, v| m.max(v.abs()));
        for (p, r) in state.u.iter().zip(&back.u).chain(state.udot.iter().zip(&back.udot)) {
            prop_assert!((p - r).abs() <= 1e-8 * scale);
        }
        prop_assert!((state.eta2.unwrap() - back.eta2.unwrap()).abs() <= 1e-8 * scale);
    }

    #[test]
    fn steady_identity_constant_a(a in 0.1f64..5.0, alpha2 in 0.5f64..500.0, u_star in -10.0f64..10.0, n in 4usize..300) {
        let grid = build_grid(n, &Spacing::Uniform).unwrap();
        let params = PhysicalParams::constant(n + 1, a, 0.01, 0.0, bc(0.01, 0.01, 0.0, 0.0)).unwrap();
        let s = steady_profile(&params, alpha2, u_star, &grid).unwrap();
        prop_assert!(s.level_defect(u_star).abs() <= 1e-12 * u_star.abs().max(1.0));
        prop_assert!(s.profile[0] == 0.0);
    }

    #[test]
    fn steady_identity_varying_a(amp in 0.0f64..3.0, alpha2 in 0.5f64..500.0, u_star in -10.0f64..10.0, n in 4usize..300) {
        let grid = build_grid(n, &Spacing::Uniform).unwrap();
        let a: Vec<f64> = grid.nodes().iter().map(|x| 1.0 + amp * (2.0 * x).sin().powi(2)).collect();
        let params = PhysicalParams::new(a, vec![0.01; n + 1], vec![0.0; n + 1], bc(0.01, 0.01, 0.0, 0.0)).unwrap();
        let s = steady_profile(&params, alpha2, u_star, &grid).unwrap();
        prop_assert!(s.level_defect(u_star).abs() <= 1e-8 * u_star.abs().max(1.0));
    }
}

#[test]
fn hypotheses_are_enforced() {
    let ok = bc(0.01, 0.01, 0.0, 0.0);
    assert!(PhysicalParams::constant(5, 0.0, 0.01, 0.0, ok).is_err());
    assert!(PhysicalParams::constant(5, 1.0, -0.01, 0.0, ok).is_err());
    assert!(PhysicalParams::constant(5, 1.0, 0.01, 0.0, BoundaryConstants { beta1: 0.0, ..ok }).is_err());
    assert!(PhysicalParams::constant(5, 1.0, 0.01, 0.0, BoundaryConstants { mu1: -1.0, ..ok }).is_err());
    assert!(PhysicalParams::constant(5, 1.0, 0.01, 0.0, BoundaryConstants { gamma1: -1.0, ..ok }).is_err());
    assert!(PhysicalParams::constant(5, 1.0, 0.01, 0.0, BoundaryConstants { q1: -1.0, ..ok }).is_ok());
    assert!(PhysicalParams::constant(5, 1.0, f64::NAN, 0.0, ok).is_err());
    assert!(PhysicalParams::new(vec![1.0; 4], vec![0.0; 5], vec![0.0; 5], ok).is_err());
}
