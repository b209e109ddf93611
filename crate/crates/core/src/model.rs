//! Physical and control parameters, boundary-condition variants, and the
//! change of variables that turns velocity regulation into stabilization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discretize::Grid;
use crate::error::{Error, Result};
use crate::quad::cumulative_trapezoid;

/// Scalar constants of the two dynamic boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConstants {
    pub beta1: f64,
    pub mu1: f64,
    pub q1: f64,
    pub gamma1: f64,
    pub f1: f64,
    pub f2: f64,
}

/// Spatially varying coefficients sampled at grid nodes plus boundary
/// constants.
///
/// Construction enforces `a > 0`, `q >= 0`, `beta1, mu1 > 0` and
/// `gamma1 >= 0`. Decay certification additionally needs `q_lower > 0` and
/// `gamma1 > 0`, see [`PhysicalParams::require_decay_hypotheses`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    pub a: Vec<f64>,
    pub q: Vec<f64>,
    pub f: Vec<f64>,
    pub beta1: f64,
    pub mu1: f64,
    pub q1: f64,
    pub gamma1: f64,
    pub f1: f64,
    pub f2: f64,
    pub a_lower: f64,
    pub a_upper: f64,
    pub q_lower: f64,
    pub q_upper: f64,
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl PhysicalParams {
    pub fn new(a: Vec<f64>, q: Vec<f64>, f: Vec<f64>, bc: BoundaryConstants) -> Result<Self> {
        if a.len() != q.len() || a.len() != f.len() {
            return Err(Error::Dimension {
                what: "coefficient samples a/q/f",
                expected: a.len(),
                got: q.len().min(f.len()),
            });
        }
        if a.len() < 3 {
            return Err(Error::param("a", "need at least 3 nodal samples"));
        }
        if let Some(i) = a.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param(
                "a",
                format!("h1 violated: a[{i}] = {} must be positive", a[i]),
            ));
        }
        if let Some(i) = q.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param(
                "q",
                format!("h2 violated: q[{i}] = {} must be nonnegative", q[i]),
            ));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("f", "source samples must be finite"));
        }
        for (name, v) in [("beta1", bc.beta1), ("mu1", bc.mu1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("h3 violated: {name} = {v} must be positive")));
            }
        }
        if !(bc.gamma1.is_finite() && bc.gamma1 >= 0.0) {
            return Err(Error::param(
                "gamma1",
                format!("h3 violated: gamma1 = {} must be nonnegative", bc.gamma1),
            ));
        }
        for (name, v) in [("q1", bc.q1), ("f1", bc.f1), ("f2", bc.f2)] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        let (a_lower, a_upper) = bounds(&a);
        let (q_lower, q_upper) = bounds(&q);
        Ok(PhysicalParams {
            a,
            q,
            f,
            beta1: bc.beta1,
            mu1: bc.mu1,
            q1: bc.q1,
            gamma1: bc.gamma1,
            f1: bc.f1,
            f2: bc.f2,
            a_lower,
            a_upper,
            q_lower,
            q_upper,
        })
    }

    /// Constant coefficients on `n_nodes` nodes.
    pub fn constant(n_nodes: usize, a: f64, q: f64, f: f64, bc: BoundaryConstants) -> Result<Self> {
        Self::new(vec![a; n_nodes], vec![q; n_nodes], vec![f; n_nodes], bc)
    }

    pub fn boundary_constants(&self) -> BoundaryConstants {
        BoundaryConstants {
            beta1: self.beta1,
            mu1: self.mu1,
            q1: self.q1,
            gamma1: self.gamma1,
            f1: self.f1,
            f2: self.f2,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.a.len()
    }

    pub fn a_left(&self) -> f64 {
        self.a[0]
    }

    pub fn a_right(&self) -> f64 {
        self.a[self.a.len() - 1]
    }

    /// Hypotheses needed for exponential decay: `q_lower > 0` (h2).
    pub fn require_decay_hypotheses(&self) -> Result<()> {
        if self.q_lower > 0.0 {
            Ok(())
        } else {
            Err(Error::param(
                "q",
                "h2 violated: decay certification needs q bounded below by a positive constant",
            ))
        }
    }

    /// Same parameters with `a`, `beta1` and `mu1` multiplied by `s`.
    ///
    /// Boundary masses `a/beta1`, `a/mu1` are unchanged, so this rescales the
    /// elastic part of the model only.
    pub fn with_stiffness_scale(&self, s: f64) -> Result<Self> {
        let mut bc = self.boundary_constants();
        bc.beta1 *= s;
        bc.mu1 *= s;
        Self::new(self.a.iter().map(|v| v * s).collect(), self.q.clone(), self.f.clone(), bc)
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.n_nodes() != self.n_nodes() {
            return Err(Error::Dimension {
                what: "parameter samples vs grid nodes",
                expected: grid.n_nodes(),
                got: self.n_nodes(),
            });
        }
        Ok(())
    }
}

/// PI gains and the boundary velocity setpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub kp: f64,
    pub alpha2: f64,
    pub v1_ref: f64,
}

impl ControlParams {
    /// Boundary damping of the closed loop, `kp + q1`.
    pub fn alpha1(&self, params: &PhysicalParams) -> f64 {
        self.kp + params.q1
    }
}

/// Which boundary conditions are active, without their constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    /// PI-controlled dynamic condition at `x = 1`, dynamic condition at `x = 0`.
    W2W1,
    /// Proportional dynamic condition at `x = 1`, Dirichlet at `x = 0`.
    W1D,
    /// PI-controlled dynamic condition at `x = 1`, Dirichlet at `x = 0`.
    W2D,
    /// Proportional dynamic conditions at both ends.
    W1W1,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [VariantKind::W2W1, VariantKind::W1D, VariantKind::W2D, VariantKind::W1W1];

    pub fn dirichlet_left(self) -> bool {
        matches!(self, VariantKind::W1D | VariantKind::W2D)
    }

    pub fn has_integrator(self) -> bool {
        matches!(self, VariantKind::W2W1 | VariantKind::W2D)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariantKind::W2W1 => "W2W1",
            VariantKind::W1D => "W1D",
            VariantKind::W2D => "W2D",
            VariantKind::W1W1 => "W1W1",
        };
        f.write_str(s)
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "W2W1" => Ok(VariantKind::W2W1),
            "W1D" => Ok(VariantKind::W1D),
            "W2D" => Ok(VariantKind::W2D),
            "W1W1" => Ok(VariantKind::W1W1),
            _ => Err(Error::param("variant", format!("unknown variant `{s}`"))),
        }
    }
}

/// A boundary-condition variant together with the constants it carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryVariant {
    W2W1 { alpha1: f64, alpha2: f64, beta1: f64, gamma1: f64, mu1: f64 },
    W1D { alpha1: f64, beta1: f64 },
    W2D { alpha1: f64, alpha2: f64, beta1: f64 },
    W1W1 { alpha1: f64, beta1: f64, gamma1: f64, mu1: f64 },
}

impl BoundaryVariant {
    /// Collects the constants of `kind` from the physical and control
    /// parameters. No positivity is enforced here; see [`Self::validate`].
    pub fn from_parts(kind: VariantKind, params: &PhysicalParams, ctrl: &ControlParams) -> Self {
        let alpha1 = ctrl.alpha1(params);
        let (beta1, mu1, gamma1, alpha2) = (params.beta1, params.mu1, params.gamma1, ctrl.alpha2);
        match kind {
            VariantKind::W2W1 => BoundaryVariant::W2W1 { alpha1, alpha2, beta1, gamma1, mu1 },
            VariantKind::W1D => BoundaryVariant::W1D { alpha1, beta1 },
            VariantKind::W2D => BoundaryVariant::W2D { alpha1, alpha2, beta1 },
            VariantKind::W1W1 => BoundaryVariant::W1W1 { alpha1, beta1, gamma1, mu1 },
        }
    }

    pub fn kind(&self) -> VariantKind {
        match self {
            BoundaryVariant::W2W1 { .. } => VariantKind::W2W1,
            BoundaryVariant::W1D { .. } => VariantKind::W1D,
            BoundaryVariant::W2D { .. } => VariantKind::W2D,
            BoundaryVariant::W1W1 { .. } => VariantKind::W1W1,
        }
    }

    pub fn alpha1(&self) -> f64 {
        match *self {
            BoundaryVariant::W2W1 { alpha1, .. }
            | BoundaryVariant::W1D { alpha1, .. }
            | BoundaryVariant::W2D { alpha1, .. }
            | BoundaryVariant::W1W1 { alpha1, .. } => alpha1,
        }
    }

    /// Integral gain; zero for the variants without an integrator.
    pub fn alpha2(&self) -> f64 {
        match *self {
            BoundaryVariant::W2W1 { alpha2, .. } | BoundaryVariant::W2D { alpha2, .. } => alpha2,
            _ => 0.0,
        }
    }

    /// Damping at `x = 0` when that end is dynamic.
    pub fn gamma1(&self) -> Option<f64> {
        match *self {
            BoundaryVariant::W2W1 { gamma1, .. } | BoundaryVariant::W1W1 { gamma1, .. } => Some(gamma1),
            _ => None,
        }
    }

    /// Every constant carried by the variant must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        let named: Vec<(&str, f64)> = match *self {
            BoundaryVariant::W2W1 { alpha1, alpha2, beta1, gamma1, mu1 } => vec![
                ("alpha1", alpha1),
                ("alpha2", alpha2),
                ("beta1", beta1),
                ("gamma1", gamma1),
                ("mu1", mu1),
            ],
            BoundaryVariant::W1D { alpha1, beta1 } => vec![("alpha1", alpha1), ("beta1", beta1)],
            BoundaryVariant::W2D { alpha1, alpha2, beta1 } => {
                vec![("alpha1", alpha1), ("alpha2", alpha2), ("beta1", beta1)]
            }
            BoundaryVariant::W1W1 { alpha1, beta1, gamma1, mu1 } => {
                vec![("alpha1", alpha1), ("beta1", beta1), ("gamma1", gamma1), ("mu1", mu1)]
            }
        };
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(
                    name,
                    format!("variant {} needs {name} > 0, got {v}", self.kind()),
                ));
            }
        }
        Ok(())
    }
}

/// Nodal state of the continuous model: displacement, velocity and the
/// finite-dimensional boundary states.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousState {
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    /// Velocity at `x = 1`.
    pub eta1: f64,
    /// Integrator state (variants with integral action).
    pub eta2: Option<f64>,
    /// Velocity at `x = 0` (variants with a dynamic left end).
    pub xi1: Option<f64>,
    pub t: f64,
}

impl ContinuousState {
    pub fn new(u: Vec<f64>, udot: Vec<f64>, eta2: Option<f64>, t: f64) -> Self {
        let eta1 = *udot.last().expect("nonempty state");
        let xi1 = Some(udot[0]);
        ContinuousState { u, udot, eta1, eta2, xi1, t }
    }

    /// Largest violation of `udot[N] = eta1`, `udot[0] = xi1`.
    pub fn compatibility_defect(&self) -> f64 {
        let right = (self.udot[self.udot.len() - 1] - self.eta1).abs();
        let left = self.xi1.map_or(0.0, |x| (self.udot[0] - x).abs());
        right.max(left)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformDirection {
    /// Physical `v` coordinates to shifted `u` coordinates.
    Forward,
    Inverse,
}

/// Static part of the change of variables: the profile added to `v - t v1_ref`
/// and the constant subtracted from the integrator.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulationShift {
    pub profile: Vec<f64>,
    pub integrator_shift: Option<f64>,
}

/// Computes the profile `int_0^x (1/a) int_0^s g + (a(0)/mu1)(f2 - gamma1 v1_ref) int_0^x 1/a`
/// with `g = f - v1_ref q`, and the integrator offset (only when `alpha2 > 0`).
pub fn regulation_shift(params: &PhysicalParams, ctrl: &ControlParams, grid: &Grid) -> Result<RegulationShift> {
    params.check_grid(grid)?;
    let x = grid.nodes();
    let vr = ctrl.v1_ref;
    let g: Vec<f64> = params.q.iter().zip(&params.f).map(|(q, f)| -vr * q + f).collect();
    let inner = cumulative_trapezoid(x, &g);
    let inv_a: Vec<f64> = params.a.iter().map(|a| 1.0 / a).collect();
    let weighted: Vec<f64> = inner.iter().zip(&inv_a).map(|(i, ia)| i * ia).collect();
    let outer = cumulative_trapezoid(x, &weighted);
    let flex = cumulative_trapezoid(x, &inv_a);
    let left = params.a_left() / params.mu1 * (-params.gamma1 * vr + params.f2);
    let profile: Vec<f64> = outer.iter().zip(&flex).map(|(o, c)| o + left * c).collect();

    let integrator_shift = (ctrl.alpha2 > 0.0).then(|| {
        let a1 = params.a_right();
        let total_g = inner[inner.len() - 1];
        params.beta1 / (ctrl.alpha2 * a1) * total_g
            + params.beta1 * params.a_left() / (ctrl.alpha2 * params.mu1 * a1) * (-params.gamma1 * vr + params.f2)
            - (params.q1 * vr - params.f1) / ctrl.alpha2
    });
    Ok(RegulationShift { profile, integrator_shift })
}

/// Maps a state between the physical (`v`) and shifted (`u`) coordinates.
///
/// In `v` coordinates the `eta2` slot holds the controller integrator
/// `eta_v`; it is shifted only when `alpha2 > 0`.
pub fn regulation_transform(
    state: &ContinuousState,
    params: &PhysicalParams,
    ctrl: &ControlParams,
    grid: &Grid,
    direction: TransformDirection,
) -> Result<ContinuousState> {
    let shift = regulation_shift(params, ctrl, grid)?;
    if state.u.len() != grid.n_nodes() || state.udot.len() != grid.n_nodes() {
        return Err(Error::Dimension {
            what: "state vs grid",
            expected: grid.n_nodes(),
            got: state.u.len(),
        });
    }
    let sign = match direction {
        TransformDirection::Forward => 1.0,
        TransformDirection::Inverse => -1.0,
    };
    let drift = state.t * ctrl.v1_ref;
    let u: Vec<f64> = state
        .u
        .iter()
        .zip(&shift.profile)
        .map(|(v, p)| v + sign * (p - drift))
        .collect();
    let udot: Vec<f64> = state.udot.iter().map(|v| v - sign * ctrl.v1_ref).collect();
    let eta2 = match (state.eta2, shift.integrator_shift) {
        (Some(e), Some(s)) => Some(e - sign * s),
        (e, _) => e,
    };
    let mut out = ContinuousState::new(u, udot, eta2, state.t);
    if state.xi1.is_none() {
        out.xi1 = None;
    }
    Ok(out)
}

/// Level the displacement settles at: `u_* = u_0(1) - eta_2(0)`.
pub fn u_star(u0_at_1: f64, eta2_0: f64) -> f64 {
    u0_at_1 - eta2_0
}

/// Steady state of the PI-controlled, Dirichlet-at-zero variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyProfile {
    pub profile: Vec<f64>,
    pub c2: f64,
    pub eta2_offset: f64,
}

impl SteadyProfile {
    /// `u_*(1) - profile(1) - eta2_offset`, zero up to quadrature error.
    pub fn level_defect(&self, u_star_1: f64) -> f64 {
        u_star_1 - self.profile[self.profile.len() - 1] - self.eta2_offset
    }
}

/// `v(x) = C2 int_0^x ds/a(s)` with
/// `C2 = a(1) alpha2 u_*(1) / (a(1) alpha2 int_0^1 ds/a + beta1)`.
pub fn steady_profile(params: &PhysicalParams, alpha2: f64, u_star_1: f64, grid: &Grid) -> Result<SteadyProfile> {
    params.check_grid(grid)?;
    if !(alpha2 > 0.0) {
        return Err(Error::param("alpha2", "steady profile needs alpha2 > 0"));
    }
    let inv_a: Vec<f64> = params.a.iter().map(|a| 1.0 / a).collect();
    let flex = cumulative_trapezoid(grid.nodes(), &inv_a);
    let total = flex[flex.len() - 1];
    let a1 = params.a_right();
    let c2 = a1 * alpha2 * u_star_1 / (a1 * alpha2 * total + params.beta1);
    Ok(SteadyProfile {
        profile: flex.iter().map(|c| c2 * c).collect(),
        c2,
        eta2_offset: params.beta1 * c2 / (a1 * alpha2),
    })
}
