//! Energy, Lyapunov and distance functionals, decay fits and certification.
//!
//! Two families live here. The quadrature functionals (`energy`,
//! `f_functional`, `w_functional`, ...) evaluate the continuum expressions
//! on nodal data: trapezoid rule for pointwise integrands, per-interval
//! differences for `u_x`. [`DiscreteLyapunov`] instead builds `F`, `W` and
//! `V` from the assembled operators `E`, `K`, `R` of the semi-discrete
//! model, so that its rate of change along that model is an exact quadratic
//! form; this is what [`certify`] works with.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretize::{DiscreteSystem, Grid, SymBand};
use crate::error::{Error, Result};
use crate::linalg::generalized_eigenvalues;
use crate::model::{BoundaryVariant, ContinuousState, PhysicalParams, SteadyProfile, VariantKind};
use crate::quad::trapezoid_weights;

/// Functional values recorded at one sample time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub t: f64,
    pub e_u: f64,
    pub f: f64,
    pub w: f64,
    pub v: f64,
    pub gamma: f64,
    pub sup_dev: f64,
}

fn check_state(state: &ContinuousState, grid: &Grid) -> Result<()> {
    let n = grid.n_nodes();
    for (what, len) in [("displacement vs grid", state.u.len()), ("velocity vs grid", state.udot.len())] {
        if len != n {
            return Err(Error::Dimension { what, expected: n, got: len });
        }
    }
    Ok(())
}

fn trap(grid: &Grid, f: impl Fn(usize) -> f64) -> f64 {
    trapezoid_weights(grid.nodes()).iter().enumerate().map(|(i, w)| w * f(i)).sum()
}

/// `sum_i weight(i) (u[i] - u[i-1])^2 / Dx[i]`, i.e. `int weight u_x^2` with
/// a piecewise-constant gradient.
fn gradient_sq(u: &[f64], grid: &Grid, weight: impl Fn(usize) -> f64) -> f64 {
    (1..grid.n_nodes())
        .map(|i| {
            let d = u[i] - u[i - 1];
            weight(i) * d * d / grid.dx(i)
        })
        .sum()
}

/// `E_u = 1/2 int (u_t^2 + a u_x^2)`.
pub fn energy(state: &ContinuousState, grid: &Grid, params: &PhysicalParams) -> Result<f64> {
    check_state(state, grid)?;
    params.check_grid(grid)?;
    let a = &params.a;
    let kin = trap(grid, |i| state.udot[i] * state.udot[i]);
    let pot = gradient_sq(&state.u, grid, |i| 0.5 * (a[i - 1] + a[i]));
    Ok(0.5 * (kin + pot))
}

/// `E_u + a(1)/(2 beta1) eta1^2 + a(0)/(2 mu1) xi1^2`; the `xi1` term is
/// absent when `x = 0` is clamped.
pub fn f_functional(state: &ContinuousState, grid: &Grid, params: &PhysicalParams, kind: VariantKind) -> Result<f64> {
    let mut f = energy(state, grid, params)? + params.a_right() / (2.0 * params.beta1) * state.eta1 * state.eta1;
    if !kind.dirichlet_left() {
        let xi1 = state.xi1.unwrap_or(state.udot[0]);
        f += params.a_left() / (2.0 * params.mu1) * xi1 * xi1;
    }
    Ok(f)
}

/// Cross functional `W` with `eta2 = u[N] - u_*` and `xi2 = u[0] - u_*`.
pub fn w_functional(
    state: &ContinuousState,
    grid: &Grid,
    params: &PhysicalParams,
    variant: &BoundaryVariant,
    u_star: f64,
) -> Result<f64> {
    check_state(state, grid)?;
    params.check_grid(grid)?;
    let n = grid.n_nodes() - 1;
    let cross = trap(grid, |i| (state.u[i] - u_star) * state.udot[i]);
    let damp = trap(grid, |i| 0.5 * params.q[i] * (state.u[i] - u_star).powi(2));
    let eta2 = state.u[n] - u_star;
    let mut w = cross + damp + params.a_right() / params.beta1 * (0.5 * variant.alpha1() * eta2 * eta2 + eta2 * state.eta1);
    if let Some(gamma1) = variant.gamma1() {
        let xi2 = state.u[0] - u_star;
        let xi1 = state.xi1.unwrap_or(state.udot[0]);
        w += params.a_left() / params.mu1 * (0.5 * gamma1 * xi2 * xi2 + xi2 * xi1);
    }
    Ok(w)
}

/// `V = F + a(1) alpha2/(2 beta1) eta2^2 + ell W`.
pub fn v_functional(
    state: &ContinuousState,
    grid: &Grid,
    params: &PhysicalParams,
    variant: &BoundaryVariant,
    ell: f64,
    u_star: f64,
) -> Result<f64> {
    let eta2 = state.u[state.u.len() - 1] - u_star;
    let f = f_functional(state, grid, params, variant.kind())?;
    let w = w_functional(state, grid, params, variant, u_star)?;
    Ok(f + params.a_right() * variant.alpha2() / (2.0 * params.beta1) * eta2 * eta2 + ell * w)
}

/// `G_u = int (u - u(1)) u_t - a(0) xi1 (u(1) - u(0)) / mu1`.
pub fn g_u_functional(state: &ContinuousState, grid: &Grid, params: &PhysicalParams) -> Result<f64> {
    check_state(state, grid)?;
    let n = grid.n_nodes() - 1;
    let un = state.u[n];
    let xi1 = state.xi1.unwrap_or(state.udot[0]);
    Ok(trap(grid, |i| (state.u[i] - un) * state.udot[i]) - params.a_left() * xi1 * (un - state.u[0]) / params.mu1)
}

/// Distance to the attractor of `kind`, with unit weights.
///
/// `W2D` measures the deviation `w = u - v` from the steady profile and
/// needs `steady`; its integrator deviation is `eta2 + eta2_offset`.
pub fn gamma(state: &ContinuousState, grid: &Grid, kind: VariantKind, steady: Option<&SteadyProfile>) -> Result<f64> {
    check_state(state, grid)?;
    let n = grid.n_nodes() - 1;
    let kin = trap(grid, |i| state.udot[i] * state.udot[i]);
    let eta1 = state.eta1;
    let xi1 = state.xi1.unwrap_or(state.udot[0]);
    let need_eta2 = || {
        state.eta2.ok_or_else(|| Error::Variant {
            variant: kind.to_string(),
            reason: "integrator state eta2 missing".into(),
        })
    };
    Ok(match kind {
        VariantKind::W2W1 => {
            let eta2 = need_eta2()?;
            kin + gradient_sq(&state.u, grid, |_| 1.0) + eta1 * eta1 + eta2 * eta2 + xi1 * xi1
        }
        VariantKind::W1D => kin + gradient_sq(&state.u, grid, |_| 1.0) + eta1 * eta1,
        VariantKind::W2D => {
            let s = steady.ok_or_else(|| Error::Variant {
                variant: kind.to_string(),
                reason: "steady profile required".into(),
            })?;
            if s.profile.len() != n + 1 {
                return Err(Error::Dimension { what: "steady profile vs grid", expected: n + 1, got: s.profile.len() });
            }
            let w: Vec<f64> = state.u.iter().zip(&s.profile).map(|(u, v)| u - v).collect();
            let eta2_bar = need_eta2()? + s.eta2_offset;
            kin + gradient_sq(&w, grid, |_| 1.0) + trap(grid, |i| w[i] * w[i]) + eta1 * eta1 + eta2_bar * eta2_bar
        }
        VariantKind::W1W1 => kin + gradient_sq(&state.u, grid, |_| 1.0) + eta1 * eta1 + xi1 * xi1,
    })
}

/// Per-variant data for [`variant_v`].
#[derive(Clone, Debug, Default)]
pub struct VariantExtras<'a> {
    /// Level `u_*` (W2W1 only).
    pub u_star: f64,
    /// Steady profile (W2D only).
    pub steady: Option<&'a SteadyProfile>,
}

/// Lyapunov candidate of each variant, by quadrature.
///
/// W2W1 is [`v_functional`]; W1D uses `u` itself (the clamp fixes the
/// level); W2D evaluates the same expression on `w = u - v` with the shifted
/// integrator; W1W1 is `F + ell G_u`.
pub fn variant_v(
    state: &ContinuousState,
    grid: &Grid,
    params: &PhysicalParams,
    variant: &BoundaryVariant,
    ell: f64,
    extras: &VariantExtras<'_>,
) -> Result<f64> {
    match variant.kind() {
        VariantKind::W2W1 => v_functional(state, grid, params, variant, ell, extras.u_star),
        VariantKind::W1D => v_functional(state, grid, params, variant, ell, 0.0),
        VariantKind::W2D => {
            let s = extras.steady.ok_or_else(|| Error::Variant {
                variant: "W2D".into(),
                reason: "steady profile required".into(),
            })?;
            if s.profile.len() != state.u.len() {
                return Err(Error::Dimension { what: "steady profile vs state", expected: state.u.len(), got: s.profile.len() });
            }
            let mut shifted = state.clone();
            shifted.u = state.u.iter().zip(&s.profile).map(|(u, v)| u - v).collect();
            v_functional(&shifted, grid, params, variant, ell, 0.0)
        }
        VariantKind::W1W1 => {
            Ok(f_functional(state, grid, params, VariantKind::W1W1)? + ell * g_u_functional(state, grid, params)?)
        }
    }
}

/// `ell = 0.5 min(q_lower/2, alpha1, gamma1, sqrt(2 q_lower))`, `gamma1`
/// entering only when `x = 0` is dynamic.
pub fn choose_ell(params: &PhysicalParams, variant: &BoundaryVariant) -> Result<f64> {
    params.require_decay_hypotheses()?;
    let q = params.q_lower;
    let mut m = (q / 2.0).min(variant.alpha1()).min((2.0 * q).sqrt());
    if let Some(g) = variant.gamma1() {
        m = m.min(g);
    }
    if !(m > 0.0) {
        return Err(Error::param("ell", format!("no admissible ell for variant {}", variant.kind())));
    }
    Ok(0.5 * m)
}

/// `max_i |u[i] - u_*|`.
pub fn sup_deviation(u: &[f64], u_star: f64) -> f64 {
    u.iter().fold(0.0, |m, v| m.max((v - u_star).abs()))
}

/// Right-hand side `(4/a_lower) E_u + 2 eta2^2` that dominates
/// `sup_deviation^2`.
pub fn sup_bound(e_u: f64, eta2: f64, a_lower: f64) -> f64 {
    4.0 / a_lower * e_u + 2.0 * eta2 * eta2
}

/// Running maximum from the right: `env[i] = max_{j >= i} values[j]`.
pub fn envelope(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "M")]
    pub m: f64,
    pub rho: f64,
    pub r_squared: f64,
    pub t_window: (f64, f64),
    pub samples_used: usize,
}

/// Options for [`fit_decay`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FitOptions {
    /// Restrict to `t` in this closed interval.
    pub window: Option<(f64, f64)>,
    /// Drop samples with `value <= floor * value(0)`; keeps round-off
    /// plateaus out of the log-linear fit.
    pub relative_floor: f64,
}

/// Least-squares fit of `ln value = ln(M value(0)) - rho t`.
///
/// `M` is the smallest constant, at least 1 and at least the fitted
/// intercept, for which at most 1% of the window's samples exceed
/// `M value(0) exp(-rho t)`.
pub fn fit_decay(t: &[f64], values: &[f64], opts: FitOptions) -> Result<DecayFit> {
    if t.len() != values.len() {
        return Err(Error::Dimension { what: "fit times vs values", expected: t.len(), got: values.len() });
    }
    let g0 = *values.first().ok_or_else(|| Error::Fit("empty series".into()))?;
    if !(g0 > 0.0) {
        return Err(Error::Fit(format!("initial value {g0} is not positive")));
    }
    let (lo, hi) = opts.window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let floor = opts.relative_floor * g0;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(values)
        .filter(|(ti, g)| **ti >= lo && **ti <= hi && g.is_finite() && **g > floor && **g > 0.0)
        .map(|(ti, g)| (*ti, *g))
        .collect();
    if pts.len() < 10 {
        return Err(Error::Fit(format!("{} usable samples, need at least 10", pts.len())));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (ti, g) in &pts {
        let (dt, dl) = (ti - mt, g.ln() - ml);
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    if stt == 0.0 {
        return Err(Error::Fit("all samples at the same time".into()));
    }
    let slope = stl / stt;
    let intercept = ml - slope * mt;
    let r_squared = if sll == 0.0 { 1.0 } else { stl * stl / (stt * sll) };
    let rho = -slope;
    let mut ratios: Vec<f64> = pts.iter().map(|(ti, g)| g * (rho * ti).exp() / g0).collect();
    ratios.sort_by(f64::total_cmp);
    let idx = ((0.99 * ratios.len() as f64).ceil() as usize).clamp(1, ratios.len()) - 1;
    let m = 1.0_f64.max(intercept.exp() / g0).max(ratios[idx]);
    Ok(DecayFit {
        m,
        rho,
        r_squared,
        t_window: (pts[0].0, pts[pts.len() - 1].0),
        samples_used: pts.len(),
    })
}

/// Lyapunov functionals assembled from the semi-discrete operators.
///
/// With `w = u - u_eq` (dofs), `K_cl = K + alpha2 b[N] e_N e_N^T` and
/// `R_cl = R + kp b c^T`:
///
/// ```text
/// F = 1/2 v^T E v + 1/2 w^T K w
/// W = w^T E v + 1/2 w^T R_cl w          (W1W1: (u - u[N] 1)^T E v)
/// V = F + 1/2 alpha2 b[N] w[N]^2 + ell W
/// ```
///
/// In coordinates `z = (w, v)` (W1W1: `w[i] = u[i] - u[N]`, `i < N`, so
/// constants are quotiented out) `V = z^T Q_V z`, `Gamma = z^T Q_G z` and
/// `dV/dt = -z^T Q_D z` along the semi-discrete closed loop.
#[derive(Clone, Debug)]
pub struct DiscreteLyapunov {
    kind: VariantKind,
    ell: f64,
    e: Vec<f64>,
    k: SymBand,
    kcl: SymBand,
    rcl: Vec<f64>,
    quotient: bool,
    qv: DMatrix<f64>,
    qg: DMatrix<f64>,
    generator: DMatrix<f64>,
}

impl DiscreteLyapunov {
    pub fn new(sys: &DiscreteSystem, grid: &Grid, variant: &BoundaryVariant, ell: f64) -> Result<Self> {
        let kind = variant.kind();
        if sys.kind != kind {
            return Err(Error::Variant {
                variant: kind.to_string(),
                reason: format!("system assembled for {}", sys.kind),
            });
        }
        if kind.dirichlet_left() != (sys.first_node == 1) {
            return Err(Error::Variant {
                variant: kind.to_string(),
                reason: "Dirichlet elimination does not match the variant".into(),
            });
        }
        if sys.n_nodes != grid.n_nodes() {
            return Err(Error::Dimension { what: "system vs grid", expected: grid.n_nodes(), got: sys.n_nodes });
        }
        if !(ell >= 0.0) {
            return Err(Error::param("ell", "must be non-negative"));
        }
        let n = sys.dim();
        let last = sys.last();
        let kcl = sys.closed_loop_stiffness(variant.alpha2());
        let mut rcl = sys.r.clone();
        rcl[last] = sys.b[last] * variant.alpha1();
        let quotient = kind == VariantKind::W1W1;

        let e_m = DMatrix::from_diagonal(&DVector::from_column_slice(&sys.e));
        let r_m = DMatrix::from_diagonal(&DVector::from_column_slice(&rcl));
        let kcl_m = kcl.to_dense();
        let mut qv_x = DMatrix::zeros(2 * n, 2 * n);
        let top = if quotient { sys.k.to_dense() } else { &kcl_m + &r_m * ell };
        qv_x.view_mut((0, 0), (n, n)).copy_from(&(top * 0.5));
        qv_x.view_mut((0, n), (n, n)).copy_from(&(&e_m * (0.5 * ell)));
        qv_x.view_mut((n, 0), (n, n)).copy_from(&(&e_m * (0.5 * ell)));
        qv_x.view_mut((n, n), (n, n)).copy_from(&(&e_m * 0.5));

        let qg_x = gamma_matrix(sys, grid, kind);

        let mut a_x = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a_x[(i, n + i)] = 1.0;
            a_x[(n + i, n + i)] = -rcl[i] / sys.e[i];
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                a_x[(n + i, j)] = -kcl_m[(i, j)] / sys.e[i];
            }
        }

        let (qv, qg, generator) = if quotient {
            // lift: w -> u with u[N] = 0; restrict: u -> u - u[N] 1
            let dz = 2 * n - 1;
            let mut lift = DMatrix::zeros(2 * n, dz);
            let mut restrict = DMatrix::zeros(dz, 2 * n);
            for i in 0..n - 1 {
                lift[(i, i)] = 1.0;
                restrict[(i, i)] = 1.0;
                restrict[(i, last)] = -1.0;
            }
            for i in 0..n {
                lift[(n + i, n - 1 + i)] = 1.0;
                restrict[(n - 1 + i, n + i)] = 1.0;
            }
            let lt = lift.transpose();
            (&lt * &qv_x * &lift, &lt * &qg_x * &lift, &restrict * &a_x * &lift)
        } else {
            (qv_x, qg_x, a_x)
        };

        Ok(DiscreteLyapunov {
            kind,
            ell,
            e: sys.e.clone(),
            k: sys.k.clone(),
            kcl,
            rcl,
            quotient,
            qv: symmetrize(qv),
            qg: symmetrize(qg),
            generator,
        })
    }

    pub fn kind(&self) -> VariantKind {
        self.kind
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Coordinates `z` of a dof-indexed deviation `w` and velocity `v`.
    pub fn coords(&self, w: &[f64], v: &[f64]) -> DVector<f64> {
        if self.quotient {
            let last = w.len() - 1;
            DVector::from_iterator(2 * w.len() - 1, w[..last].iter().map(|x| x - w[last]).chain(v.iter().copied()))
        } else {
            DVector::from_iterator(2 * w.len(), w.iter().chain(v).copied())
        }
    }

    pub fn dim(&self) -> usize {
        self.qv.nrows()
    }

    pub fn q_v(&self) -> &DMatrix<f64> {
        &self.qv
    }

    pub fn q_gamma(&self) -> &DMatrix<f64> {
        &self.qg
    }

    /// First-order generator in `z` coordinates.
    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// `Q_D = -(Q_V A + A^T Q_V)`.
    pub fn q_dissipation(&self) -> DMatrix<f64> {
        let p = &self.qv * &self.generator;
        symmetrize(-(&p + p.transpose()))
    }

    /// `Q_D` written out directly: `ell K_cl` on `w`, `R_cl - ell E` on `v`.
    /// Not available for W1W1, whose cross term carries no damping part.
    pub fn closed_form_dissipation(&self) -> Option<DMatrix<f64>> {
        if self.quotient {
            return None;
        }
        let n = self.e.len();
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        q.view_mut((0, 0), (n, n)).copy_from(&(self.kcl.to_dense() * self.ell));
        for i in 0..n {
            q[(n + i, n + i)] = self.rcl[i] - self.ell * self.e[i];
        }
        Some(q)
    }

    fn kinetic(&self, v: &[f64]) -> f64 {
        0.5 * v.iter().zip(&self.e).map(|(v, e)| e * v * v).sum::<f64>()
    }

    /// `1/2 v^T E v + 1/2 w^T K w`.
    pub fn f_value(&self, w: &[f64], v: &[f64]) -> f64 {
        self.kinetic(v) + 0.5 * self.k.bilinear(w, w)
    }

    pub fn w_value(&self, w: &[f64], v: &[f64]) -> f64 {
        if self.quotient {
            let wn = w[w.len() - 1];
            w.iter().zip(v).zip(&self.e).map(|((w, v), e)| e * (w - wn) * v).sum()
        } else {
            let ev: f64 = w.iter().zip(v).zip(&self.e).map(|((w, v), e)| e * w * v).sum();
            let rw: f64 = w.iter().zip(&self.rcl).map(|(w, r)| r * w * w).sum();
            ev + 0.5 * rw
        }
    }

    /// Energy stored in the integrator, `1/2 alpha2 b[N] w[N]^2`.
    pub fn integrator_energy(&self, w: &[f64]) -> f64 {
        let last = w.len() - 1;
        0.5 * (self.kcl.diag[last] - self.k.diag[last]) * w[last] * w[last]
    }

    pub fn v_value(&self, w: &[f64], v: &[f64]) -> f64 {
        self.f_value(w, v) + self.integrator_energy(w) + self.ell * self.w_value(w, v)
    }

    /// `V - dt/2 w^T K_cl v`: the value seen by the symplectic Euler map,
    /// whose conserved energy is shifted by that term.
    pub fn v_staggered(&self, w: &[f64], v: &[f64], dt: f64) -> f64 {
        self.v_value(w, v) - 0.5 * dt * self.kcl.bilinear(w, v)
    }

    pub fn gamma_value(&self, w: &[f64], v: &[f64]) -> f64 {
        let z = self.coords(w, v);
        z.dot(&(&self.qg * &z))
    }

    /// `-dV/dt` along the semi-discrete closed loop.
    pub fn dissipation_rate(&self, w: &[f64], v: &[f64]) -> f64 {
        let z = self.coords(w, v);
        z.dot(&(self.q_dissipation() * &z))
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `Gamma` as a matrix on `(w, v)` dofs; matches [`gamma`] on embedded
/// states with the W2D profile subtracted.
fn gamma_matrix(sys: &DiscreteSystem, grid: &Grid, kind: VariantKind) -> DMatrix<f64> {
    let n = sys.dim();
    let off = sys.first_node;
    let nn = grid.n_nodes() - 1;
    let dof = |node: usize| node.checked_sub(off);
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    let tw = trapezoid_weights(grid.nodes());
    for (node, w) in tw.iter().enumerate() {
        if let Some(d) = dof(node) {
            q[(n + d, n + d)] += w;
            if kind == VariantKind::W2D {
                q[(d, d)] += w;
            }
        }
    }
    for i in 1..=nn {
        let c = 1.0 / grid.dx(i);
        let (l, r) = (dof(i - 1), dof(i));
        if let Some(l) = l {
            q[(l, l)] += c;
        }
        if let Some(r) = r {
            q[(r, r)] += c;
        }
        if let (Some(l), Some(r)) = (l, r) {
            q[(l, r)] -= c;
            q[(r, l)] -= c;
        }
    }
    let last = n - 1;
    q[(n + last, n + last)] += 1.0;
    if kind.has_integrator() {
        q[(last, last)] += 1.0;
    }
    if !kind.dirichlet_left() {
        q[(n, n)] += 1.0;
    }
    q
}

/// Equilibrium displacement (dofs) the variant converges to.
///
/// W2W1 and W2D: `K_cl u = f_d + alpha2 b[N] u_* e_N` (for W2W1 without
/// sources this is `u_* 1`). W1D: `K u = f_d`. W1W1: the sources must
/// balance; the level is arbitrary and pinned at `u[N] = 0`.
pub fn discrete_equilibrium(sys: &DiscreteSystem, variant: &BoundaryVariant, u_star: f64) -> Result<Vec<f64>> {
    match variant.kind() {
        VariantKind::W2W1 | VariantKind::W2D => crate::discretize::integral_equilibrium(sys, variant.alpha2(), u_star),
        VariantKind::W1D => {
            let chol = sys
                .k
                .to_dense()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("clamped stiffness".into()))?;
            Ok(chol.solve(&DVector::from_column_slice(&sys.f_d)).iter().copied().collect())
        }
        VariantKind::W1W1 => {
            let total: f64 = sys.f_d.iter().sum();
            let scale: f64 = sys.f_d.iter().map(|f| f.abs()).sum();
            if total.abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::Variant {
                    variant: "W1W1".into(),
                    reason: "sources do not balance; no equilibrium".into(),
                });
            }
            let n = sys.dim();
            let kd = sys.k.to_dense();
            let chol = kd
                .view((0, 0), (n - 1, n - 1))
                .into_owned()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("pinned stiffness".into()))?;
            let mut u: Vec<f64> = chol.solve(&DVector::from_column_slice(&sys.f_d[..n - 1])).iter().copied().collect();
            u.push(0.0);
            Ok(u)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub variant: VariantKind,
    pub ell: f64,
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub rho_formal: f64,
    /// Number of grid intervals.
    pub n_used: usize,
    /// Dimension of the certified quadratic forms.
    pub dim: usize,
}

impl CertificationReport {
    pub fn is_certified(&self) -> bool {
        self.c > 0.0 && self.big_c >= self.c && self.rho_formal > 0.0
    }
}

/// Sandwich constants `c Gamma <= V <= C Gamma` and the rate
/// `dV/dt <= -rho_formal V`, all as generalized symmetric eigenvalues.
///
/// A non-positive `c` is reported as is, with `rho_formal = NaN`.
pub fn certify(sys: &DiscreteSystem, grid: &Grid, variant: &BoundaryVariant, ell: f64) -> Result<CertificationReport> {
    let lyap = DiscreteLyapunov::new(sys, grid, variant, ell)?;
    certify_forms(&lyap, grid.intervals())
}

pub fn certify_forms(lyap: &DiscreteLyapunov, n_used: usize) -> Result<CertificationReport> {
    let sandwich = generalized_eigenvalues(lyap.q_v(), lyap.q_gamma())
        .map_err(|e| Error::NotPositiveDefinite(format!("Gamma form: {e}")))?;
    let c = sandwich[0];
    let big_c = sandwich[sandwich.len() - 1];
    let rho_formal = if c > 0.0 {
        generalized_eigenvalues(&lyap.q_dissipation(), lyap.q_v())?[0]
    } else {
        f64::NAN
    };
    Ok(CertificationReport {
        variant: lyap.kind(),
        ell: lyap.ell(),
        c,
        big_c,
        rho_formal,
        n_used,
        dim: lyap.dim(),
    })
}
