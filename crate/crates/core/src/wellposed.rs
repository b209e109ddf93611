//! Resolvent of the monotone part `G` of the generator, its inner product
//! and the pairing `<z, G z>`.
//!
//! ```text
//! G z = ( -z2, -(a z1')' + z2 + z1, beta1 z1'(1), 0, -mu1 z1'(0) )
//! ```
//!
//! on states with `z2(1) = z3`, `z2(0) = z5`. The second-order operator is
//! discretized by finite volumes on the dual cells (half cells at the ends),
//! with the end fluxes `z1'(0)`, `z1'(1)` entering explicitly. Summation by
//! parts then carries over exactly, so `<z, G z>` equals the trapezoid
//! integral of `z2^2` for every admissible discrete state.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::{build_grid, Grid, Spacing};
use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;
use crate::model::{BoundaryConstants, PhysicalParams};
use crate::quad::trapezoid_weights;

/// Tolerance on the domain conditions accepted by [`monotonicity_pairing`].
pub const DOMAIN_TOLERANCE: f64 = 1e-8;

/// Element `(z1, z2, z3, z4, z5)` of the energy space, nodal in the first
/// two components.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorState {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: f64,
    pub z4: f64,
    pub z5: f64,
}

impl GeneratorState {
    pub fn zeros(n_nodes: usize) -> Self {
        GeneratorState { z1: vec![0.0; n_nodes], z2: vec![0.0; n_nodes], z3: 0.0, z4: 0.0, z5: 0.0 }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        let n = grid.n_nodes();
        for (what, len) in [("z1 vs grid", self.z1.len()), ("z2 vs grid", self.z2.len())] {
            if len != n {
                return Err(Error::Dimension { what, expected: n, got: len });
            }
        }
        let finite = self.z1.iter().chain(&self.z2).chain([&self.z3, &self.z4, &self.z5]).all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("z", "non-finite entry"));
        }
        Ok(())
    }

    /// `(|z2[N] - z3|, |z2[0] - z5|)`.
    pub fn domain_defect(&self) -> (f64, f64) {
        let n = self.z2.len() - 1;
        ((self.z2[n] - self.z3).abs(), (self.z2[0] - self.z5).abs())
    }
}

/// Resolvent output together with the end slopes `z1'(0)`, `z1'(1)` fixed
/// by the Robin conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolvent {
    pub z: GeneratorState,
    pub slope_left: f64,
    pub slope_right: f64,
}

fn a_mid(params: &PhysicalParams, i: usize) -> f64 {
    0.5 * (params.a[i - 1] + params.a[i])
}

/// `-(a z')'` on dual cells with prescribed end slopes, divided by the dual
/// cell length.
fn flux_operator(z: &[f64], grid: &Grid, params: &PhysicalParams, slope_left: f64, slope_right: f64) -> Vec<f64> {
    let n = grid.intervals();
    let h = trapezoid_weights(grid.nodes());
    let flux: Vec<f64> = (1..=n).map(|i| a_mid(params, i) * (z[i] - z[i - 1]) / grid.dx(i)).collect();
    (0..=n)
        .map(|i| {
            let right = if i == n { params.a_right() * slope_right } else { flux[i] };
            let left = if i == 0 { params.a_left() * slope_left } else { flux[i - 1] };
            -(right - left) / h[i]
        })
        .collect()
}

/// Solves `(I + G) z = y`.
///
/// Eliminating `z2 = z1 - y1` leaves `3 z1 - (a z1')' = 2 y1 + y2` with
/// `beta1 z1'(1) + z1(1) = y3 + y1(1)` and `-mu1 z1'(0) + z1(0) = y5 + y1(0)`,
/// a tridiagonal system once the end slopes are expressed through the
/// Robin conditions. Then `z3 = y3 - beta1 z1'(1)`, `z4 = y4` and
/// `z5 = y5 + mu1 z1'(0)`, so `z2(1) = z3` and `z2(0) = z5` hold exactly.
pub fn resolvent_solve(y: &GeneratorState, params: &PhysicalParams, grid: &Grid) -> Result<Resolvent> {
    y.check(grid)?;
    params.check_grid(grid)?;
    let n = grid.intervals();
    let h = trapezoid_weights(grid.nodes());
    let (b1, m1) = (params.beta1, params.mu1);
    let (a0, a1) = (params.a_left(), params.a_right());
    let mut lower = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut upper = vec![0.0; n + 1];
    let mut rhs: Vec<f64> = (0..=n).map(|i| 2.0 * y.z1[i] + y.z2[i]).collect();
    for i in 0..=n {
        diag[i] = 3.0;
        if i > 0 {
            let c = a_mid(params, i) / grid.dx(i) / h[i];
            diag[i] += c;
            lower[i] = -c;
        }
        if i < n {
            let c = a_mid(params, i + 1) / grid.dx(i + 1) / h[i];
            diag[i] += c;
            upper[i] = -c;
        }
    }
    // slope_right = (y3 + y1[N] - z[N]) / beta1
    let gr = y.z3 + y.z1[n];
    diag[n] += a1 / (b1 * h[n]);
    rhs[n] += a1 * gr / (b1 * h[n]);
    // slope_left = (z[0] - y5 - y1[0]) / mu1
    let gl = y.z5 + y.z1[0];
    diag[0] += a0 / (m1 * h[0]);
    rhs[0] += a0 * gl / (m1 * h[0]);

    let z1 = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let slope_right = (gr - z1[n]) / b1;
    let slope_left = (z1[0] - gl) / m1;
    let z2: Vec<f64> = z1.iter().zip(&y.z1).map(|(z, y)| z - y).collect();
    Ok(Resolvent {
        z: GeneratorState {
            z1,
            z2,
            z3: y.z3 - b1 * slope_right,
            z4: y.z4,
            z5: y.z5 + m1 * slope_left,
        },
        slope_left,
        slope_right,
    })
}

/// Nodal residual of `3 z1 - (a z1')' - 2 y1 - y2` with the resolvent's end
/// slopes.
pub fn stationary_residual(y: &GeneratorState, sol: &Resolvent, params: &PhysicalParams, grid: &Grid) -> Result<Vec<f64>> {
    y.check(grid)?;
    sol.z.check(grid)?;
    let l = flux_operator(&sol.z.z1, grid, params, sol.slope_left, sol.slope_right);
    Ok((0..grid.n_nodes()).map(|i| 3.0 * sol.z.z1[i] + l[i] - 2.0 * y.z1[i] - y.z2[i]).collect())
}

/// `int z1 q1 + int z2 q2 + int a z1' q1' + a(1)/beta1 z3 q3 + z4 q4 +
/// a(0)/mu1 z5 q5`.
pub fn inner_product(z: &GeneratorState, q: &GeneratorState, params: &PhysicalParams, grid: &Grid) -> Result<f64> {
    z.check(grid)?;
    q.check(grid)?;
    params.check_grid(grid)?;
    let h = trapezoid_weights(grid.nodes());
    let mut s: f64 = (0..grid.n_nodes()).map(|i| h[i] * (z.z1[i] * q.z1[i] + z.z2[i] * q.z2[i])).sum();
    for i in 1..grid.n_nodes() {
        s += a_mid(params, i) * (z.z1[i] - z.z1[i - 1]) * (q.z1[i] - q.z1[i - 1]) / grid.dx(i);
    }
    s += params.a_right() / params.beta1 * z.z3 * q.z3 + z.z4 * q.z4 + params.a_left() / params.mu1 * z.z5 * q.z5;
    Ok(s)
}

/// Second-order one-sided slopes `(z'(0), z'(1))`.
pub fn end_slopes(z: &[f64], grid: &Grid) -> (f64, f64) {
    let n = grid.intervals();
    let (h1, h2) = (grid.dx(1), grid.dx(2));
    let left = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * z[0] + (h1 + h2) / (h1 * h2) * z[1] - h1 / (h2 * (h1 + h2)) * z[2];
    let (h1, h2) = (grid.dx(n), grid.dx(n - 1));
    let right = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * z[n] - (h1 + h2) / (h1 * h2) * z[n - 1] + h1 / (h2 * (h1 + h2)) * z[n - 2];
    (left, right)
}

/// `G z` with given end slopes of `z1`.
pub fn apply_generator_with_slopes(
    z: &GeneratorState,
    params: &PhysicalParams,
    grid: &Grid,
    slope_left: f64,
    slope_right: f64,
) -> Result<GeneratorState> {
    z.check(grid)?;
    params.check_grid(grid)?;
    let l = flux_operator(&z.z1, grid, params, slope_left, slope_right);
    Ok(GeneratorState {
        z1: z.z2.iter().map(|v| -v).collect(),
        z2: (0..grid.n_nodes()).map(|i| l[i] + z.z2[i] + z.z1[i]).collect(),
        z3: params.beta1 * slope_right,
        z4: 0.0,
        z5: -params.mu1 * slope_left,
    })
}

/// `G z` with end slopes from [`end_slopes`].
pub fn apply_generator(z: &GeneratorState, params: &PhysicalParams, grid: &Grid) -> Result<GeneratorState> {
    z.check(grid)?;
    let (sl, sr) = end_slopes(&z.z1, grid);
    apply_generator_with_slopes(z, params, grid, sl, sr)
}

/// `(<z, G z>, int z2^2)`; the two agree on admissible states.
pub fn monotonicity_pairing(z: &GeneratorState, params: &PhysicalParams, grid: &Grid) -> Result<(f64, f64)> {
    z.check(grid)?;
    let scale = 1.0 + z.z2.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (right, left) = z.domain_defect();
    if right > DOMAIN_TOLERANCE * scale || left > DOMAIN_TOLERANCE * scale {
        return Err(Error::param(
            "z",
            format!("domain conditions violated: |z2(1) - z3| = {right:e}, |z2(0) - z5| = {left:e}"),
        ));
    }
    let gz = apply_generator(z, params, grid)?;
    let pairing = inner_product(z, &gz, params, grid)?;
    let h = trapezoid_weights(grid.nodes());
    let reference = z.z2.iter().zip(&h).map(|(v, w)| w * v * v).sum();
    Ok((pairing, reference))
}

/// CSV with `x, y1, y2, z1, z2, residual` per node.
pub fn write_csv<W: Write>(
    mut w: W,
    grid: &Grid,
    y: &GeneratorState,
    sol: &Resolvent,
    params: &PhysicalParams,
) -> Result<()> {
    let res = stationary_residual(y, sol, params, grid)?;
    writeln!(w, "x,y1,y2,z1,z2,residual")?;
    for (i, (x, r)) in grid.nodes().iter().zip(&res).enumerate() {
        writeln!(
            w,
            "{x:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{r:.16e}",
            y.z1[i],
            y.z2[i],
            sol.z.z1[i],
            sol.z.z2[i]
        )?;
    }
    Ok(())
}

/// One refinement level of [`convergence_study`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Max interior truncation residual of the exact solution.
    pub residual: f64,
    /// Max nodal error of the computed `z1`.
    pub error: f64,
}

fn manufactured(x: f64) -> (f64, f64, f64) {
    let z = (1.3 * x).cos() + 0.4 * x.powi(3);
    let dz = -1.3 * (1.3 * x).sin() + 1.2 * x * x;
    let d2z = -1.69 * (1.3 * x).cos() + 2.4 * x;
    (z, dz, d2z)
}

/// Resolvent solve against the exact solution `z1 = cos(1.3x) + 0.4x^3`
/// with `a = 1 + x^2/2`, `y1 = sin 2x`, on uniform grids of `ns` intervals.
pub fn convergence_study(beta1: f64, mu1: f64, ns: &[usize]) -> Result<Vec<ConvergenceRow>> {
    let bc = BoundaryConstants { beta1, mu1, q1: 0.0, gamma1: 0.0, f1: 0.0, f2: 0.0 };
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = build_grid(n, &Spacing::Uniform)?;
        let x = grid.nodes();
        let a: Vec<f64> = x.iter().map(|x| 1.0 + 0.5 * x * x).collect();
        let params = PhysicalParams::new(a, vec![0.0; n + 1], vec![0.0; n + 1], bc)?;
        let exact: Vec<f64> = x.iter().map(|x| manufactured(*x).0).collect();
        let y1: Vec<f64> = x.iter().map(|x| (2.0 * x).sin()).collect();
        let y2: Vec<f64> = x
            .iter()
            .zip(&y1)
            .map(|(x, y1)| {
                let (z, dz, d2z) = manufactured(*x);
                3.0 * z - (x * dz + (1.0 + 0.5 * x * x) * d2z) - 2.0 * y1
            })
            .collect();
        let (z1e, dz1e, _) = manufactured(1.0);
        let (z0e, dz0e, _) = manufactured(0.0);
        let y = GeneratorState {
            z3: beta1 * dz1e + z1e - y1[n],
            z5: -mu1 * dz0e + z0e - y1[0],
            z4: 0.0,
            z1: y1,
            z2: y2,
        };
        let sol = resolvent_solve(&y, &params, &grid)?;
        let l = flux_operator(&exact, &grid, &params, dz0e, dz1e);
        let residual = (1..n)
            .map(|i| (3.0 * exact[i] + l[i] - 2.0 * y.z1[i] - y.z2[i]).abs())
            .fold(0.0, f64::max);
        let error = sol.z.z1.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rows.push(ConvergenceRow { n, residual, error });
    }
    Ok(rows)
}

/// Random smooth state with `z2(1) = z3` and `z2(0) = z5`.
pub fn smooth_admissible_state<R: Rng + ?Sized>(grid: &Grid, rng: &mut R) -> GeneratorState {
    let series = |rng: &mut R| {
        let terms: Vec<(f64, f64, f64)> = (1..=4)
            .map(|k| (rng.random_range(-1.0..1.0) / k as f64, k as f64 * std::f64::consts::PI, rng.random_range(0.0..6.3)))
            .collect();
        let c = rng.random_range(-1.0..1.0);
        grid.nodes()
            .iter()
            .map(|x| c + terms.iter().map(|(amp, w, ph)| amp * (w * x + ph).sin()).sum::<f64>())
            .collect::<Vec<f64>>()
    };
    let z1 = series(rng);
    let z2 = series(rng);
    let n = z2.len() - 1;
    GeneratorState { z3: z2[n], z5: z2[0], z4: rng.random_range(-1.0..1.0), z1, z2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (Grid, PhysicalParams) {
        let g = build_grid(n, &Spacing::Uniform).unwrap();
        let a: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.5 * x * x).collect();
        let bc = BoundaryConstants { beta1: 20.0, mu1: 20.0, q1: 0.0, gamma1: 0.0, f1: 0.0, f2: 0.0 };
        let p = PhysicalParams::new(a, vec![0.0; n + 1], vec![0.0; n + 1], bc).unwrap();
        (g, p)
    }

    #[test]
    fn zero_and_constant_data() {
        let (g, p) = setup(40);
        let sol = resolvent_solve(&GeneratorState::zeros(41), &p, &g).unwrap();
        assert!(sol.z.z1.iter().chain(&sol.z.z2).all(|v| *v == 0.0));
        let c = 1.7;
        let y = GeneratorState { z1: vec![c; 41], z2: vec![c; 41], z3: 0.0, z4: -3.0, z5: 0.0 };
        let sol = resolvent_solve(&y, &p, &g).unwrap();
        assert!(sol.z.z1.iter().all(|v| (v - c).abs() < 1e-10));
        assert!(sol.z.z2.iter().all(|v| v.abs() < 1e-10));
        assert!(sol.z.z3.abs() < 1e-10 && sol.z.z5.abs() < 1e-10);
        assert_eq!(sol.z.z4, -3.0);
    }

    #[test]
    fn domain_conditions_hold_exactly() {
        let (g, p) = setup(50);
        let y = GeneratorState {
            z1: g.nodes().iter().map(|x| (2.0 * x).sin()).collect(),
            z2: g.nodes().iter().map(|x| x * x).collect(),
            z3: 0.3,
            z4: 1.0,
            z5: -0.2,
        };
        let sol = resolvent_solve(&y, &p, &g).unwrap();
        let (r, l) = sol.z.domain_defect();
        assert!(r < 1e-13 && l < 1e-13);
        let res = stationary_residual(&y, &sol, &p, &g).unwrap();
        assert!(res.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn inner_product_axioms() {
        let (g, p) = setup(10);
        let mut z = GeneratorState::zeros(11);
        z.z4 = 2.0;
        assert_eq!(inner_product(&z, &z, &p, &g).unwrap(), 4.0);
        let w = GeneratorState {
            z1: g.nodes().iter().map(|x| x.cos()).collect(),
            z2: g.nodes().iter().map(|x| 1.0 - x).collect(),
            z3: 0.1,
            z4: -1.0,
            z5: 2.0,
        };
        let zw = inner_product(&z, &w, &p, &g).unwrap();
        let wz = inner_product(&w, &z, &p, &g).unwrap();
        assert!((zw - wz).abs() < 1e-13);
        assert!(inner_product(&w, &w, &p, &g).unwrap() > 0.0);
    }

    #[test]
    fn pairing_rejects_inadmissible_states() {
        let (g, p) = setup(10);
        let mut z = GeneratorState::zeros(11);
        z.z3 = 1.0;
        assert!(monotonicity_pairing(&z, &p, &g).is_err());
        let mut z = GeneratorState::zeros(11);
        z.z1 = g.nodes().iter().map(|x| x * x).collect();
        let (pair, reference) = monotonicity_pairing(&z, &p, &g).unwrap();
        assert!(pair.abs() < 1e-10 && reference == 0.0);
    }

    #[test]
    fn second_order_on_manufactured_solution() {
        let rows = convergence_study(20.0, 20.0, &[25, 50, 100]).unwrap();
        for w in rows.windows(2) {
            let r = w[0].residual / w[1].residual;
            let e = w[0].error / w[1].error;
            assert!((3.5..=4.5).contains(&r), "residual ratio {r}");
            assert!((3.5..=4.5).contains(&e), "error ratio {e}");
        }
    }

    #[test]
    fn one_sided_slopes_are_exact_for_quadratics() {
        let g = build_grid(0, &Spacing::Nodes(vec![0.0, 0.1, 0.35, 0.7, 1.0])).unwrap();
        let z: Vec<f64> = g.nodes().iter().map(|x| 2.0 * x * x - x + 3.0).collect();
        let (l, r) = end_slopes(&z, &g);
        assert!((l + 1.0).abs() < 1e-12);
        assert!((r - 3.0).abs() < 1e-12);
    }
}
