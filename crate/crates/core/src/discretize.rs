//! Space discretization from the Simpson-weighted discrete Lagrangian.
//!
//! The discrete potential is
//!
//! ```text
//! P(u) = 1/2 sum_{i=1}^{N-1} Dx[i] * [ a[i-1]/12 ((u[i]-u[i-1])/Dx[i])^2
//!                                    + a[i]/3   ((u[i+1]-u[i-1])/(Dx[i]+Dx[i+1]))^2
//!                                    + a[i+1]/12 ((u[i+1]-u[i])/Dx[i+1])^2 ]
//! ```
//!
//! and the kinetic energy puts `Dx[i]` on interior nodes and the boundary
//! masses `a(1)/beta1`, `a(0)/mu1` on the end nodes. Euler-Lagrange gives
//! `E u'' = -K u`; dissipation `R`, input `b` and source `f_d` are scaled so
//! that dividing the end rows by their mass recovers the boundary ODEs'
//! damping, control and source coefficients.
//!
//! The three Simpson weights sum to `1/2`, so on smooth profiles `P` is half
//! of `1/2 int a u_x^2`: the semi-discrete model is a consistent
//! approximation of the continuum model with `a`, `beta1` and `mu1` all
//! scaled by [`LAGRANGIAN_STIFFNESS_FACTOR`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use crate::linalg::SymBand;
use crate::model::{PhysicalParams, VariantKind};

/// Ratio between the discrete potential and the continuum elastic energy on
/// smooth profiles.
pub const LAGRANGIAN_STIFFNESS_FACTOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum Spacing {
    Uniform,
    /// Explicit node list; must start at 0, end at 1 and increase strictly.
    Nodes(Vec<f64>),
}

/// Nodes `x[0] = 0 < x[1] < ... < x[N] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    x: Vec<f64>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.spacing.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    /// `Dx[i] = x[i] - x[i-1]` for `i = 1..=N`.
    pub fn dx(&self, i: usize) -> f64 {
        self.spacing[i - 1]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_dx(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn build_grid(n: usize, spacing: &Spacing) -> Result<Grid> {
    let x = match spacing {
        Spacing::Uniform => {
            if n < 2 {
                return Err(Error::InvalidGrid(format!("need N >= 2 intervals, got {n}")));
            }
            let mut x: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            x[n] = 1.0;
            x
        }
        Spacing::Nodes(x) => {
            if x.len() < 3 {
                return Err(Error::InvalidGrid("need at least 3 nodes".into()));
            }
            if x[0] != 0.0 || x[x.len() - 1] != 1.0 {
                return Err(Error::InvalidGrid("nodes must start at 0 and end at 1".into()));
            }
            if let Some(w) = x.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidGrid(format!("nodes not strictly increasing at index {}", w + 1)));
            }
            x.clone()
        }
    };
    let spacing = x.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(Grid { x, spacing })
}

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension { what, expected: n, got: v.len() });
    }
    Ok(())
}

/// Discrete potential energy `P(u)`.
pub fn potential_energy(u: &[f64], grid: &Grid, params: &PhysicalParams) -> Result<f64> {
    params.check_grid(grid)?;
    check_len("displacement vs grid", u, grid.n_nodes())?;
    let a = &params.a;
    let n = grid.intervals();
    let mut p = 0.0;
    for i in 1..n {
        let (dl, dr) = (grid.dx(i), grid.dx(i + 1));
        let left = (u[i] - u[i - 1]) / dl;
        let mid = (u[i + 1] - u[i - 1]) / (dl + dr);
        let right = (u[i + 1] - u[i]) / dr;
        p += dl * (a[i - 1] / 12.0 * left * left + a[i] / 3.0 * mid * mid + a[i + 1] / 12.0 * right * right);
    }
    Ok(0.5 * p)
}

/// Exact Hessian of [`potential_energy`], accumulated term by term.
pub fn assemble_stiffness(grid: &Grid, params: &PhysicalParams) -> Result<SymBand> {
    params.check_grid(grid)?;
    let a = &params.a;
    let n = grid.intervals();
    let mut k = SymBand::zeros(n + 1);
    for i in 1..n {
        let (dl, dr) = (grid.dx(i), grid.dx(i + 1));
        k.add_pair(i - 1, i, dl * a[i - 1] / (12.0 * dl * dl));
        k.add_pair(i - 1, i + 1, dl * a[i] / (3.0 * (dl + dr) * (dl + dr)));
        k.add_pair(i, i + 1, dl * a[i + 1] / (12.0 * dr * dr));
    }
    Ok(k)
}

/// Second-difference Hessian of `P` at `u = 0` with step `h`.
///
/// Independent of [`assemble_stiffness`]: it only calls `potential_energy`.
pub fn hessian_oracle(grid: &Grid, params: &PhysicalParams, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::param("h", "finite-difference step must be positive"));
    }
    let n = grid.n_nodes();
    let zero = vec![0.0; n];
    let p0 = potential_energy(&zero, grid, params)?;
    let mut single = Vec::with_capacity(n);
    for i in 0..n {
        let mut u = zero.clone();
        u[i] = h;
        single.push(potential_energy(&u, grid, params)?);
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut u = zero.clone();
            u[i] += h;
            u[j] += h;
            let pij = potential_energy(&u, grid, params)?;
            out[(i, j)] = (pij - single[i] - single[j] + p0) / (h * h);
        }
    }
    Ok(out)
}

/// Diagonal generalized mass.
///
/// Interior nodes carry `Dx[i]`; the end nodes carry `a(1)/beta1` and
/// `a(0)/mu1`. For Dirichlet variants node 0 is later eliminated.
pub fn assemble_mass(grid: &Grid, params: &PhysicalParams, _kind: VariantKind) -> Result<Vec<f64>> {
    params.check_grid(grid)?;
    let n = grid.intervals();
    let mut e: Vec<f64> = (0..=n).map(|i| if i == 0 || i == n { 0.0 } else { grid.dx(i) }).collect();
    e[n] = params.a_right() / params.beta1;
    e[0] = params.a_left() / params.mu1;
    Ok(e)
}

/// Diagonal dissipation: `q[i] Dx[i]` inside, `(a(1)/beta1) q1` and
/// `(a(0)/mu1) gamma1` at the ends.
pub fn assemble_dissipation(grid: &Grid, params: &PhysicalParams, _kind: VariantKind) -> Result<Vec<f64>> {
    params.check_grid(grid)?;
    if let Some(i) = params.q.iter().position(|q| *q < 0.0) {
        return Err(Error::param("q", format!("negative damping sample q[{i}]")));
    }
    let n = grid.intervals();
    let mut r: Vec<f64> = (0..=n)
        .map(|i| if i == 0 || i == n { 0.0 } else { params.q[i] * grid.dx(i) })
        .collect();
    r[n] = params.a_right() / params.beta1 * params.q1;
    r[0] = params.a_left() / params.mu1 * params.gamma1;
    Ok(r)
}

/// Input vector, collocated output vector and source vector.
#[derive(Clone, Debug, PartialEq)]
pub struct IoVectors {
    pub b: Vec<f64>,
    pub c_out: Vec<f64>,
    pub f_d: Vec<f64>,
}

pub fn assemble_io(grid: &Grid, params: &PhysicalParams, _kind: VariantKind) -> Result<IoVectors> {
    params.check_grid(grid)?;
    let n = grid.intervals();
    let mut b = vec![0.0; n + 1];
    b[n] = params.a_right() / params.beta1;
    let mut c_out = vec![0.0; n + 1];
    c_out[n] = 1.0;
    let mut f_d: Vec<f64> = (0..=n)
        .map(|i| if i == 0 || i == n { 0.0 } else { params.f[i] * grid.dx(i) })
        .collect();
    f_d[n] = params.a_right() / params.beta1 * params.f1;
    f_d[0] = params.a_left() / params.mu1 * params.f2;
    Ok(IoVectors { b, c_out, f_d })
}

/// Assembled second-order system `E u'' = -K u - R u' + b U + f_d`,
/// `y = c_out^T u'`.
///
/// Vectors are indexed by degree of freedom; `first_node` is the grid index
/// of dof 0 (1 once the Dirichlet node has been eliminated).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSystem {
    pub e: Vec<f64>,
    pub k: SymBand,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
    pub c_out: Vec<f64>,
    pub f_d: Vec<f64>,
    pub kind: VariantKind,
    pub dirichlet: Vec<usize>,
    pub first_node: usize,
    pub n_nodes: usize,
}

impl DiscreteSystem {
    /// Full system on all nodes, before any Dirichlet elimination.
    pub fn assemble(grid: &Grid, params: &PhysicalParams, kind: VariantKind) -> Result<Self> {
        let io = assemble_io(grid, params, kind)?;
        Ok(DiscreteSystem {
            e: assemble_mass(grid, params, kind)?,
            k: assemble_stiffness(grid, params)?,
            r: assemble_dissipation(grid, params, kind)?,
            b: io.b,
            c_out: io.c_out,
            f_d: io.f_d,
            kind,
            dirichlet: if kind.dirichlet_left() { vec![0] } else { Vec::new() },
            first_node: 0,
            n_nodes: grid.n_nodes(),
        })
    }

    /// Assembles and, for Dirichlet variants, eliminates node 0.
    pub fn build(grid: &Grid, params: &PhysicalParams, kind: VariantKind) -> Result<Self> {
        let sys = Self::assemble(grid, params, kind)?;
        if kind.dirichlet_left() {
            apply_dirichlet(&sys)
        } else {
            Ok(sys)
        }
    }

    pub fn dim(&self) -> usize {
        self.e.len()
    }

    /// Dof index of the actuated node `x = 1`.
    pub fn last(&self) -> usize {
        self.dim() - 1
    }

    /// Dof index of node 0 when it is not constrained.
    pub fn left_dof(&self) -> Option<usize> {
        (self.first_node == 0).then_some(0)
    }

    /// Full nodal vector from dof values (constrained nodes set to 0).
    pub fn embed(&self, dofs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        out[self.first_node..].copy_from_slice(dofs);
        out
    }

    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        nodal[self.first_node..].to_vec()
    }

    /// `1/2 v^T E v + 1/2 u^T K u`.
    pub fn hamiltonian(&self, u: &[f64], v: &[f64]) -> f64 {
        let kin: f64 = v.iter().zip(&self.e).map(|(v, e)| e * v * v).sum();
        0.5 * kin + 0.5 * self.k.bilinear(u, u)
    }

    /// `R` plus the proportional feedback `kp b c^T` (diagonal because the
    /// loop is collocated).
    pub fn closed_loop_damping(&self, kp: f64) -> Vec<f64> {
        let mut r = self.r.clone();
        let n = self.last();
        r[n] += kp * self.b[n] * self.c_out[n];
        r
    }

    /// `K` plus the integral feedback acting as a spring on the last dof.
    ///
    /// With the integrator locked to `u[N] - u_*`, the integral action is
    /// exactly a grounded spring of stiffness `alpha2 b[N]`.
    pub fn closed_loop_stiffness(&self, alpha2: f64) -> SymBand {
        let mut k = self.k.clone();
        let n = self.last();
        k.diag[n] += alpha2 * self.b[n];
        k
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.e))
    }

    /// Writes `(row, col, value)` triplets for the upper band of `K` and the
    /// diagonals of `E` and `R` as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "matrix,row,col,value")?;
        for (i, j, v) in self.k.triplets() {
            writeln!(w, "K,{i},{j},{v:.16e}")?;
        }
        for (i, v) in self.e.iter().enumerate() {
            writeln!(w, "E,{i},{i},{v:.16e}")?;
        }
        for (i, v) in self.r.iter().enumerate() {
            writeln!(w, "R,{i},{i},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Eliminates node 0 (`u(t, 0) = 0`) from every operator.
pub fn apply_dirichlet(sys: &DiscreteSystem) -> Result<DiscreteSystem> {
    if !sys.kind.dirichlet_left() {
        return Err(Error::Variant {
            variant: sys.kind.to_string(),
            reason: "no Dirichlet node to eliminate".into(),
        });
    }
    if sys.first_node != 0 {
        return Err(Error::Variant {
            variant: sys.kind.to_string(),
            reason: "Dirichlet node already eliminated".into(),
        });
    }
    Ok(DiscreteSystem {
        e: sys.e[1..].to_vec(),
        k: sys.k.without_first(),
        r: sys.r[1..].to_vec(),
        b: sys.b[1..].to_vec(),
        c_out: sys.c_out[1..].to_vec(),
        f_d: sys.f_d[1..].to_vec(),
        kind: sys.kind,
        dirichlet: sys.dirichlet.clone(),
        first_node: 1,
        n_nodes: sys.n_nodes,
    })
}

/// Exact discrete counterpart of the regulation change of variables.
///
/// Under constant velocity `v1_ref` and the integral action balancing the
/// damping and sources, the physical state is `v = u + t v1_ref 1 + profile`
/// with `K profile = f_d - v1_ref R 1 + b u_force` and `profile[0] = 0`.
/// The integrator is shifted by `u_force / alpha2` so that the shifted state
/// solves the same closed loop with zero setpoint and zero sources.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteShift {
    pub profile: Vec<f64>,
    pub u_force: f64,
    pub integrator_shift: f64,
}

pub fn discrete_regulation_shift(sys: &DiscreteSystem, v1_ref: f64, alpha2: f64) -> Result<DiscreteShift> {
    if sys.first_node != 0 {
        return Err(Error::Variant {
            variant: sys.kind.to_string(),
            reason: "regulation shift needs a free left end".into(),
        });
    }
    let n = sys.dim();
    let last = sys.last();
    let load: Vec<f64> = (0..n).map(|i| sys.f_d[i] - v1_ref * sys.r[i]).collect();
    let total: f64 = load.iter().sum();
    if total.abs() > 0.0 && !(alpha2 > 0.0) {
        return Err(Error::param("alpha2", "steady regulation against damping or sources needs integral action"));
    }
    let u_force = -total / sys.b[last];
    let mut rhs = load.clone();
    rhs[last] += sys.b[last] * u_force;
    let kd = sys.k.to_dense();
    let kr = kd.view((1, 1), (n - 1, n - 1)).into_owned();
    let chol = kr
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("stiffness with one pinned node".into()))?;
    let sol = chol.solve(&DVector::from_column_slice(&rhs[1..]));
    let mut profile = vec![0.0];
    profile.extend(sol.iter());
    let integrator_shift = if alpha2 > 0.0 { u_force / alpha2 } else { 0.0 };
    Ok(DiscreteShift { profile, u_force, integrator_shift })
}

/// Equilibrium displacement of a closed loop with integral action when the
/// integrator is anchored at level `u_star` (`eta2 = u[N] - u_star`).
///
/// Solves `K_cl u = f_d + alpha2 b[N] u_star e_N` on the free dofs.
pub fn integral_equilibrium(sys: &DiscreteSystem, alpha2: f64, u_star: f64) -> Result<Vec<f64>> {
    let kcl = sys.closed_loop_stiffness(alpha2).to_dense();
    let mut rhs = DVector::from_column_slice(&sys.f_d);
    rhs[sys.last()] += alpha2 * sys.b[sys.last()] * u_star;
    let chol = kcl
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("closed-loop stiffness".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundaryConstants;

    fn params(n_nodes: usize, a: f64, q: f64) -> PhysicalParams {
        let bc = BoundaryConstants { beta1: 20.0, mu1: 20.0, q1: q, gamma1: q, f1: 0.0, f2: 0.0 };
        PhysicalParams::constant(n_nodes, a, q, 0.0, bc).unwrap()
    }

    #[test]
    fn uniform_and_explicit_grids() {
        let g = build_grid(4, &Spacing::Uniform).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g.spacings().iter().all(|d| (*d - 0.25).abs() < 1e-15));
        let g = build_grid(199, &Spacing::Uniform).unwrap();
        assert_eq!(g.n_nodes(), 200);
        assert!(g.spacings().iter().all(|d| (*d - 1.0 / 199.0).abs() < 1e-15));
        assert!((g.spacings().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let g = build_grid(0, &Spacing::Nodes(vec![0.0, 0.5, 1.0])).unwrap();
        assert_eq!(g.spacings(), &[0.5, 0.5]);
        assert!(build_grid(0, &Spacing::Nodes(vec![0.0, 0.6, 0.5, 1.0])).is_err());
        assert!(build_grid(0, &Spacing::Nodes(vec![0.1, 0.5, 1.0])).is_err());
        assert!(build_grid(1, &Spacing::Uniform).is_err());
    }

    #[test]
    fn potential_of_constant_and_linear() {
        let g = build_grid(4, &Spacing::Uniform).unwrap();
        let p = params(5, 1.0, 0.0);
        assert_eq!(potential_energy(&[3.0; 5], &g, &p).unwrap(), 0.0);
        let lin = potential_energy(g.nodes(), &g, &p).unwrap();
        assert!((lin - 0.1875).abs() < 1e-15);
        assert!(potential_energy(&[0.0; 4], &g, &p).is_err());
    }

    #[test]
    fn mass_dissipation_io_for_reference_values() {
        let g = build_grid(199, &Spacing::Uniform).unwrap();
        let p = params(200, 1.0, 0.005);
        let e = assemble_mass(&g, &p, VariantKind::W2W1).unwrap();
        assert_eq!(e[0], 0.05);
        assert_eq!(e[199], 0.05);
        assert!((e[1] - 1.0 / 199.0).abs() < 1e-15);
        let r = assemble_dissipation(&g, &p, VariantKind::W2W1).unwrap();
        assert!((r[0] - 2.5e-4).abs() < 1e-18 && (r[199] - 2.5e-4).abs() < 1e-18);
        assert!((r[7] - 0.005 / 199.0).abs() < 1e-18);
        let io = assemble_io(&g, &p, VariantKind::W2W1).unwrap();
        assert_eq!(io.b[199], 0.05);
        assert!(io.b[..199].iter().all(|v| *v == 0.0));
        assert!(io.f_d.iter().all(|v| *v == 0.0));
        let mut v = vec![0.0; 200];
        v[199] = 1.0;
        assert_eq!(crate::linalg::dot(&io.c_out, &v), 1.0);

        let bc = BoundaryConstants { beta1: 1.0, mu1: 1.0, q1: 0.0, gamma1: 0.0, f1: 0.0, f2: 0.0 };
        let g4 = build_grid(4, &Spacing::Uniform).unwrap();
        let p2 = PhysicalParams::new(vec![1.0, 1.0, 1.0, 1.0, 2.0], vec![1.0; 5], vec![0.0; 5], bc).unwrap();
        assert_eq!(assemble_mass(&g4, &p2, VariantKind::W1W1).unwrap()[4], 2.0);
        let r4 = assemble_dissipation(&g4, &p2, VariantKind::W1W1).unwrap();
        assert!(r4[1..4].iter().all(|v| (*v - 0.25).abs() < 1e-15));
        let p0 = params(200, 1.0, 0.0);
        assert!(assemble_dissipation(&g, &p0, VariantKind::W2W1).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dirichlet_elimination() {
        let g = build_grid(4, &Spacing::Uniform).unwrap();
        let p = params(5, 1.0, 0.0);
        let full = DiscreteSystem::assemble(&g, &p, VariantKind::W1D).unwrap();
        let red = apply_dirichlet(&full).unwrap();
        assert_eq!(red.dim(), 4);
        assert!(apply_dirichlet(&red).is_err());
        let w = DiscreteSystem::assemble(&g, &p, VariantKind::W2W1).unwrap();
        assert!(apply_dirichlet(&w).is_err());
        let ev = red.k.to_dense().symmetric_eigenvalues();
        assert!(ev.min() > 1e-6);
        assert!(red.k.mul(&[1.0; 4]).iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = build_grid(3, &Spacing::Uniform).unwrap();
        let sys = DiscreteSystem::assemble(&g, &params(4, 1.0, 0.1), VariantKind::W2W1).unwrap();
        let mut buf = Vec::new();
        sys.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("matrix,row,col,value\n"));
        assert_eq!(s.lines().filter(|l| l.starts_with("E,")).count(), 4);
    }
}
