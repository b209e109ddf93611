//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wentzell::discretize::{assemble_stiffness, build_grid, hessian_oracle, Spacing};
use wentzell::integrate::spectrum;
use wentzell::lyapunov::{certify_forms, energy, sup_bound, sup_deviation, DiscreteLyapunov};
use wentzell::model::{BoundaryConstants, ContinuousState, PhysicalParams, VariantKind};
use wentzell::scenario::{parse_config, preset, resolvent_check, run, scenario_ell, RunOptions, RunReport, Scenario};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Outcome;

fn random_params(rng: &mut ChaCha8Rng, n_nodes: usize) -> PhysicalParams {
    let a: Vec<f64> = (0..n_nodes).map(|_| rng.random_range(0.2..3.0)).collect();
    let q: Vec<f64> = (0..n_nodes).map(|_| rng.random_range(0.0..0.1)).collect();
    let bc = BoundaryConstants { beta1: rng.random_range(1.0..30.0), mu1: rng.random_range(1.0..30.0), q1: 0.01, gamma1: 0.01, f1: 0.0, f2: 0.0 };
    PhysicalParams::new(a, q, vec![0.0; n_nodes], bc).unwrap()
}

fn stiffness_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for n in [4, 6, 10] {
        let grid = build_grid(n, &Spacing::Uniform).unwrap();
        for _ in 0..5 {
            let params = random_params(&mut rng, n + 1);
            let k = assemble_stiffness(&grid, &params).unwrap().to_dense();
            let h = hessian_oracle(&grid, &params, 1e-4).unwrap();
            worst = worst.max((k - h).abs().max());
        }
    }
    let elapsed = start.elapsed();
    outcome(worst <= 1e-6 && elapsed < Duration::from_secs(1), format!("max|K - H| = {worst:.2e}, {elapsed:.2?}"))
}

fn undamped_spectrum() -> Outcome {
    let start = Instant::now();
    let sc = Scenario::resolve(&preset("1a").unwrap()).unwrap();
    let ev = spectrum(&sc.system).unwrap();
    let max_re = ev.iter().fold(0.0_f64, |m, l| m.max(l.re.abs()));
    let zeros = ev.iter().filter(|l| l.norm() < 1e-4).count();
    let k = sc.system.k.to_dense();
    let kev = k.symmetric_eigenvalues();
    let scale = kev.amax();
    let kernel = kev.iter().filter(|l| l.abs() <= 1e-10 * scale).count();
    let elapsed = start.elapsed();
    let pass = max_re <= 1e-10 && zeros == 2 * kernel && kernel == 1 && elapsed < Duration::from_secs(30);
    outcome(pass, format!("max|Re| = {max_re:.1e}, zero eigenvalues {zeros} (kernel dim {kernel}), {elapsed:.2?}"))
}

fn symplectic_conservation() -> Outcome {
    let start = Instant::now();
    let cfg = preset("1a").unwrap();
    let r = run(&cfg, &RunOptions::default()).unwrap().report;
    let elapsed = start.elapsed();
    let dx = 1.0 / cfg.n as f64;
    let pass = (r.dt - 0.1 * dx).abs() < 1e-15
        && r.t_final >= 50.0 - 1e-9
        && r.energy_drift <= 0.05
        && r.energy_drift_slope.abs() <= 1e-4
        && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "max|dH|/H0 = {:.2e}, slope = {:.2e}/H0 per unit time, {elapsed:.2?}",
            r.energy_drift, r.energy_drift_slope
        ),
    )
}

fn run_preset(name: &str) -> RunReport {
    run(&preset(name).unwrap(), &RunOptions::default()).unwrap().report
}

fn regulation() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["1b", "2b", "3b"] {
        let r = run_preset(name);
        let err = (r.y_final - 0.5).abs();
        let cons = r.conservation_residual.unwrap();
        pass &= r.t_final >= 200.0 - 1e-9 && err <= 0.02 && cons <= 1e-6;
        parts.push(format!("{name}: |y-0.5| = {err:.1e}, residual = {cons:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

fn lyapunov_decay() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["2b", "3b"] {
        let r = run_preset(name);
        let fit = r.decay.unwrap();
        let sup = r.sup_decay.unwrap();
        pass &= r.v_max_step_increase <= 1e-6 && fit.rho > 0.0 && fit.r_squared >= 0.9 && sup.rho >= fit.rho / 2.0;
        parts.push(format!(
            "{name}: dV/V0 <= {:.1e}, rho = {:.4}, r2 = {:.4}, sup rate = {:.4}",
            r.v_max_step_increase, fit.rho, fit.r_squared, sup.rho
        ));
    }
    outcome(pass, parts.join("; "))
}

fn variant_config(kind: VariantKind, n: usize) -> String {
    let (alpha2, v_ref, eta) = match kind {
        VariantKind::W2W1 => (100.0, 0.5, 0.0),
        VariantKind::W2D => (100.0, 0.0, -1.0),
        VariantKind::W1D | VariantKind::W1W1 => (0.0, 0.0, 0.0),
    };
    format!(
        "preset = \"3b\"\nvariant = \"{kind}\"\nn = {n}\n[control]\nalpha2 = {alpha2:?}\nv1_ref = {v_ref:?}\n[initial]\neta = {eta:?}\n"
    )
}

fn certification() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in VariantKind::ALL {
        let cfg = parse_config(&variant_config(kind, 50), "acceptance").unwrap();
        let sc = Scenario::resolve(&cfg).unwrap();
        let ell = scenario_ell(&sc);
        let lyap = DiscreteLyapunov::new(&sc.system, &sc.grid, &sc.variant, ell).unwrap();
        let rep = certify_forms(&lyap, sc.grid.intervals()).unwrap();
        let mut violations = 0;
        for _ in 0..1000 {
            let w: Vec<f64> = (0..sc.system.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..sc.system.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (val, g) = (lyap.v_value(&w, &v), lyap.gamma_value(&w, &v));
            let slack = 1e-12 * g;
            if rep.c * g > val + slack || val > rep.big_c * g + slack {
                violations += 1;
            }
        }
        pass &= rep.c > 0.0 && rep.big_c >= rep.c && rep.rho_formal > 0.0 && violations == 0;
        parts.push(format!(
            "{kind}: ell = {ell:.5}, c = {:.3e}, C = {:.3}, rho = {:.2e}, violations {violations}",
            rep.c, rep.big_c, rep.rho_formal
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    parts.push(format!("{elapsed:.2?}"));
    outcome(pass, parts.join("; "))
}

fn variant_decay() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [VariantKind::W1D, VariantKind::W2D, VariantKind::W1W1] {
        let cfg = parse_config(&variant_config(kind, 199), "acceptance").unwrap();
        let r = run(&cfg, &RunOptions::default()).unwrap().report;
        let fit = r.decay.unwrap();
        pass &= r.t_final >= 200.0 - 1e-9 && fit.rho > 0.0 && fit.r_squared >= 0.9;
        let mut line = format!("{kind}: rho = {:.4}, r2 = {:.4}", fit.rho, fit.r_squared);
        if kind == VariantKind::W2D {
            let s = r.steady_check.unwrap();
            pass &= s.max_error <= 1e-2 && s.identity_defect.abs() <= 1e-8;
            line.push_str(&format!(", profile error {:.2e}, identity defect {:.1e}", s.max_error, s.identity_defect));
        }
        parts.push(line);
    }
    outcome(pass, parts.join("; "))
}

fn resolvent_and_pairing() -> Outcome {
    let nodes: Vec<String> = (0..=199).map(|i| {
        let x = i as f64 / 199.0;
        format!("{:?}", 1.0 + 0.5 * x * x)
    }).collect();
    let text = format!("preset = \"3b\"\n[physical]\na = [{}]\n", nodes.join(", "));
    let sc = Scenario::resolve(&parse_config(&text, "acceptance").unwrap()).unwrap();
    let rc = resolvent_check(&sc).unwrap();
    let ratios_ok = rc.residual_ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let pass = rc.constant_case_error <= 1e-10
        && ratios_ok
        && rc.states == 100
        && rc.pairing_min >= -1e-10
        && rc.pairing_max_deviation <= 1e-4;
    let ratios: Vec<String> = rc.residual_ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(
        pass,
        format!(
            "constant case {:.1e}, residual ratios [{}], pairing min {:.3e}, max rel deviation {:.1e}",
            rc.constant_case_error,
            ratios.join(", "),
            rc.pairing_min,
            rc.pairing_max_deviation
        ),
    )
}

fn sup_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(4..80);
        let grid = build_grid(n, &Spacing::Uniform).unwrap();
        let params = random_params(&mut rng, n + 1);
        let u: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let still = rng.random_bool(0.5);
        let udot: Vec<f64> = (0..=n).map(|_| if still { 0.0 } else { rng.random_range(-2.0..2.0) }).collect();
        let u_star = rng.random_range(-2.0..2.0);
        let eta2 = u[n] - u_star;
        let state = ContinuousState::new(u.clone(), udot, Some(eta2), 0.0);
        let e_u = energy(&state, &grid, &params).unwrap();
        let lhs = sup_deviation(&u, u_star).powi(2);
        worst = worst.max(lhs - sup_bound(e_u, eta2, params.a_lower));
    }
    outcome(worst <= 1e-9, format!("max(sup_dev^2 - bound) = {worst:.3e}"))
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("stiffness oracle equivalence", stiffness_oracle),
        ("undamped spectrum on the imaginary axis", undamped_spectrum),
        ("symplectic energy conservation (1a)", symplectic_conservation),
        ("regulation (1b, 2b, 3b)", regulation),
        ("Lyapunov decay (2b, 3b)", lyapunov_decay),
        ("certification, all variants at N = 50", certification),
        ("variant decay and W2D steady state", variant_decay),
        ("resolvent, convergence and pairing identity", resolvent_and_pairing),
        ("sup-deviation inequality", sup_inequality),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
