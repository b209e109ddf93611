use nalgebra::DMatrix;
use proptest::prelude::*;
use wentzell::discretize::{build_grid, DiscreteSystem, Spacing, SymBand};
use wentzell::integrate::{symplectic_step, SimState};
use wentzell::model::{BoundaryConstants, PhysicalParams, VariantKind};
use wentzell::scenario::{parse_config, run, RunOptions};

fn undamped(n: usize, kind: VariantKind) -> DiscreteSystem {
    let grid = build_grid(n, &Spacing::Uniform).unwrap();
    let bc = BoundaryConstants { beta1: 20.0, mu1: 20.0, q1: 0.0, gamma1: 0.0, f1: 0.0, f2: 0.0 };
    let a: Vec<f64> = grid.nodes().iter().map(|x| 1.0 + x).collect();
    let params = PhysicalParams::new(a, vec![0.0; n + 1], vec![0.0; n + 1], bc).unwrap();
    DiscreteSystem::build(&grid, &params, kind).unwrap()
}

#[test]
fn undamped_step_map_has_unit_determinant() {
    for n in [2, 5, 10] {
        for kind in [VariantKind::W2W1, VariantKind::W2D] {
            let sys = undamped(n, kind);
            let m = sys.dim();
            let dt = 0.3 / n as f64;
            let mut map = DMatrix::<f64>::zeros(2 * m, 2 * m);
            for j in 0..2 * m {
                let mut s = SimState::zeros(m);
                if j < m {
                    s.u[j] = 1.0;
                } else {
                    s.udot[j - m] = 1.0;
                }
                let next = symplectic_step(&sys, &s, 0.0, dt).unwrap();
                for i in 0..m {
                    map[(i, j)] = next.u[i];
                    map[(m + i, j)] = next.udot[i];
                }
            }
            let det = map.determinant();
            assert!((det - 1.0).abs() <= 1e-10, "n = {n}, {kind}: det = {det}");
        }
    }
}

proptest! {
    #[test]
    fn implicit_damping_never_amplifies(
        r in proptest::collection::vec(0.0f64..100.0, 6),
        v in proptest::collection::vec(-10.0f64..10.0, 6),
        dt in 1e-6f64..1e3,
    ) {
        let mut sys = undamped(5, VariantKind::W2W1);
        sys.k = SymBand::zeros(6);
        sys.r = r;
        sys.f_d = vec![0.0; 6];
        let s = SimState::new(vec![0.0; 6], v.clone());
        let next = symplectic_step(&sys, &s, 0.0, dt).unwrap();
        for (a, b) in next.udot.iter().zip(&v) {
            prop_assert!(a.abs() <= b.abs());
        }
    }
}

#[test]
fn no_secular_energy_drift() {
    let cfg = parse_config("preset = \"1a\"\ndt = 2.512562814070352e-4\nt_end = 50.0\n", "test").unwrap();
    assert!((2.512562814070352e-4_f64 - 0.05 / 199.0).abs() < 1e-18);
    let r = run(&cfg, &RunOptions::default()).unwrap().report;
    assert!(r.energy_drift_slope.abs() * 50.0 <= 0.01, "slope {}", r.energy_drift_slope);
}

#[test]
fn refinement_changes_shrink() {
    let y = |n: usize| {
        let cfg = parse_config(&format!("preset = \"2b\"\nn = {n}\nt_end = 20.0\n"), "test").unwrap();
        run(&cfg, &RunOptions::default()).unwrap().report.y_final
    };
    let ys: Vec<f64> = [50, 100, 200, 400].into_iter().map(y).collect();
    for w in ys.windows(3) {
        let (d1, d2) = ((w[1] - w[0]).abs(), (w[2] - w[1]).abs());
        assert!(d2 <= 2.0 * d1, "{ys:?}");
    }
}

#[test]
fn conservation_with_sources_and_varying_coefficients() {
    let a: Vec<String> = (0..=80).map(|i| format!("{:?}", 1.0 + 0.3 * (i as f64 / 80.0))).collect();
    let text = format!(
        "preset = \"3b\"\nn = 80\nt_end = 30.0\n[physical]\na = [{}]\nf = 0.1\nf1 = 0.2\nf2 = -0.1\n[initial]\neta = 0.4\n",
        a.join(", ")
    );
    let r = run(&parse_config(&text, "test").unwrap(), &RunOptions::default()).unwrap().report;
    assert!(r.conservation_residual.unwrap() <= 1e-6, "{:?}", r.conservation_residual);
}

#[test]
fn every_preset_completes_at_default_dt() {
    for cfg in wentzell::scenario::presets() {
        let r = run(&cfg, &RunOptions::default()).unwrap().report;
        assert!(r.t_final >= cfg.horizon() - 1e-9);
        assert!(r.y_final.is_finite());
    }
}
