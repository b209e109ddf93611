//! PI boundary control and the semi-implicit symplectic Euler scheme.
//!
//! One step reads `y = c^T u'`, evaluates `U = -kp (y - y_ref) - ki eta`,
//! updates the velocity implicitly in the (diagonal) damping and explicitly
//! in the stiffness, moves the displacement with the new velocity and then
//! advances the integrator with the new output. Advancing the integrator
//! with the same velocity that moved `u[N]` keeps `u[N] - t y_ref - eta`
//! constant to round-off.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::discretize::{DiscreteSystem, Grid};
use crate::error::{Error, Result};
use crate::linalg::generalized_eigenvalues;
use crate::lyapunov::FunctionalSample;
use crate::model::PhysicalParams;

/// Threshold on `max(|u|, |u'|)` beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiController {
    pub kp: f64,
    /// Integral gain `alpha2`.
    pub ki: f64,
    pub y_ref: f64,
    pub eta: f64,
    pub saturation: Option<f64>,
}

impl PiController {
    pub fn new(kp: f64, ki: f64, y_ref: f64) -> Self {
        PiController { kp, ki, y_ref, eta: 0.0, saturation: None }
    }

    pub fn with_saturation(mut self, bound: f64) -> Self {
        self.saturation = Some(bound.abs());
        self
    }

    pub fn output(&self, y: f64) -> f64 {
        let u = -self.kp * (y - self.y_ref) - self.ki * self.eta;
        match self.saturation {
            Some(s) => u.clamp(-s, s),
            None => u,
        }
    }

    pub fn advance(&mut self, y: f64, dt: f64) {
        self.eta += dt * (y - self.y_ref);
    }
}

pub fn pi_output(ctrl: &PiController, y: f64) -> f64 {
    ctrl.output(y)
}

pub fn pi_advance(ctrl: &PiController, y: f64, dt: f64) -> Result<PiController> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "time step must be positive"));
    }
    let mut next = ctrl.clone();
    next.advance(y, dt);
    Ok(next)
}

/// Dof-indexed displacement and velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub t: f64,
    pub step: u64,
}

impl SimState {
    pub fn new(u: Vec<f64>, udot: Vec<f64>) -> Self {
        SimState { u, udot, t: 0.0, step: 0 }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n], vec![0.0; n])
    }

    pub fn norm_inf(&self) -> f64 {
        self.u.iter().chain(&self.udot).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `0.1 min(Dx) / sqrt(a_upper)`.
pub fn default_dt(grid: &Grid, params: &PhysicalParams) -> f64 {
    0.1 * grid.min_dx() / params.a_upper.sqrt()
}

fn check_system(sys: &DiscreteSystem, state: &SimState) -> Result<()> {
    let n = sys.dim();
    for (what, len) in [("displacement vs dofs", state.u.len()), ("velocity vs dofs", state.udot.len())] {
        if len != n {
            return Err(Error::Dimension { what, expected: n, got: len });
        }
    }
    if let Some(i) = sys.e.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!("mass entry {i} is {}", sys.e[i])));
    }
    Ok(())
}

fn step_denominators(sys: &DiscreteSystem, dt: f64) -> Result<Vec<f64>> {
    let mut den = Vec::with_capacity(sys.dim());
    for (i, (r, e)) in sys.r.iter().zip(&sys.e).enumerate() {
        let d = 1.0 + dt * r / e;
        if !(d > 0.0) {
            return Err(Error::StepUndefined { node: i + sys.first_node, dt_bound: -e / r });
        }
        den.push(d);
    }
    Ok(den)
}

/// One semi-implicit symplectic Euler step with a fixed input `u_in`.
pub fn symplectic_step(sys: &DiscreteSystem, state: &SimState, u_in: f64, dt: f64) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "time step must be positive"));
    }
    check_system(sys, state)?;
    let den = step_denominators(sys, dt)?;
    let mut next = state.clone();
    let mut ku = vec![0.0; sys.dim()];
    advance(sys, &den, &mut next, u_in, dt, &mut ku);
    check_finite(&next, state.t)?;
    Ok(next)
}

fn advance(sys: &DiscreteSystem, den: &[f64], s: &mut SimState, u_in: f64, dt: f64, ku: &mut [f64]) {
    sys.k.mul_into(&s.u, ku);
    for i in 0..s.u.len() {
        let force = -ku[i] + sys.b[i] * u_in + sys.f_d[i];
        s.udot[i] = (s.udot[i] + dt * force / sys.e[i]) / den[i];
        s.u[i] += dt * s.udot[i];
    }
    s.step += 1;
    s.t = s.step as f64 * dt;
}

fn check_finite(s: &SimState, last_valid_t: f64) -> Result<()> {
    let norm = s.norm_inf();
    if !norm.is_finite() || norm > DIVERGENCE_BOUND {
        return Err(Error::Divergence { t: s.t, norm, last_valid_t });
    }
    Ok(())
}

/// Closed-loop time stepper that owns its state and scratch space.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    sys: &'a DiscreteSystem,
    ctrl: Option<PiController>,
    state: SimState,
    dt: f64,
    den: Vec<f64>,
    scratch: Vec<f64>,
    last_input: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a DiscreteSystem, ctrl: Option<PiController>, initial: SimState, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", "time step must be positive and finite"));
        }
        check_system(sys, &initial)?;
        check_finite(&initial, initial.t)?;
        let den = step_denominators(sys, dt)?;
        let mut s = Stepper {
            sys,
            ctrl,
            state: initial,
            dt,
            den,
            scratch: vec![0.0; sys.dim()],
            last_input: 0.0,
        };
        s.last_input = s.input();
        Ok(s)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn system(&self) -> &DiscreteSystem {
        self.sys
    }

    pub fn controller(&self) -> Option<&PiController> {
        self.ctrl.as_ref()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Collocated output `c^T u'`.
    pub fn output(&self) -> f64 {
        crate::linalg::dot(&self.sys.c_out, &self.state.udot)
    }

    pub fn eta(&self) -> f64 {
        self.ctrl.as_ref().map_or(0.0, |c| c.eta)
    }

    /// Input that the next step will apply.
    pub fn input(&self) -> f64 {
        self.ctrl.as_ref().map_or(0.0, |c| c.output(self.output()))
    }

    /// Input applied by the most recent step (or the pending one before the
    /// first step).
    pub fn last_input(&self) -> f64 {
        self.last_input
    }

    pub fn step(&mut self) -> Result<()> {
        let u_in = self.input();
        let t_prev = self.state.t;
        advance(self.sys, &self.den, &mut self.state, u_in, self.dt, &mut self.scratch);
        check_finite(&self.state, t_prev)?;
        let y = self.output();
        if let Some(c) = self.ctrl.as_mut() {
            c.advance(y, self.dt);
        }
        self.last_input = u_in;
        Ok(())
    }

    pub fn into_state(self) -> SimState {
        self.state
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    /// Full nodal displacement per sample (constrained nodes included).
    pub u_samples: Vec<Vec<f64>>,
    pub udot_samples: Vec<Vec<f64>>,
    pub y_series: Vec<f64>,
    pub u_series: Vec<f64>,
    pub eta_series: Vec<f64>,
    pub functional_series: Vec<FunctionalSample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    fn record(&mut self, st: &Stepper<'_>) {
        let s = st.state();
        self.sample_times.push(s.t);
        self.u_samples.push(st.system().embed(&s.u));
        self.udot_samples.push(st.system().embed(&s.udot));
        self.y_series.push(st.output());
        self.u_series.push(st.input());
        self.eta_series.push(st.eta());
    }
}

/// Number of steps used to reach `t_end`.
pub fn step_count(dt: f64, t_end: f64) -> u64 {
    (t_end / dt * (1.0 - 1e-9)).ceil().max(0.0) as u64
}

/// Runs `ceil(t_end/dt)` steps, sampling every `stride` steps and at the end.
pub fn simulate(
    sys: &DiscreteSystem,
    ctrl: Option<PiController>,
    ic: SimState,
    dt: f64,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory> {
    simulate_observed(sys, ctrl, ic, dt, t_end, stride, |_, _| Ok(None))
}

/// Like [`simulate`], calling `observer` after every step (and once before
/// the first). `sampled` tells the observer whether the step is recorded; a
/// returned sample is pushed onto `functional_series`.
pub fn simulate_observed<F>(
    sys: &DiscreteSystem,
    ctrl: Option<PiController>,
    ic: SimState,
    dt: f64,
    t_end: f64,
    stride: usize,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&Stepper<'_>, bool) -> Result<Option<FunctionalSample>>,
{
    if !(t_end > 0.0) {
        return Err(Error::param("t_end", "horizon must be positive"));
    }
    if stride == 0 {
        return Err(Error::param("sample_stride", "must be at least 1"));
    }
    let mut st = Stepper::new(sys, ctrl, ic, dt)?;
    let n_steps = step_count(dt, t_end);
    let mut traj = Trajectory::default();
    traj.record(&st);
    if let Some(f) = observer(&st, true)? {
        traj.functional_series.push(f);
    }
    for k in 1..=n_steps {
        st.step()?;
        let sampled = k % stride as u64 == 0 || k == n_steps;
        if sampled {
            traj.record(&st);
        }
        if let Some(f) = observer(&st, sampled)? {
            if sampled {
                traj.functional_series.push(f);
            }
        }
    }
    Ok(traj)
}

fn sort_spectrum(v: &mut [Complex<f64>]) {
    v.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
}

/// First-order eigenvalues of `E u'' = -K u - R u'`.
///
/// With `R = 0` the generalized symmetric problem `(K, E)` is solved and
/// `+-i sqrt(lambda)` returned, so the real parts vanish by construction.
/// Otherwise the companion matrix is diagonalised.
pub fn spectrum(sys: &DiscreteSystem) -> Result<Vec<Complex<f64>>> {
    let n = sys.dim();
    if let Some(i) = sys.e.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!("mass entry {i}")));
    }
    if sys.r.iter().all(|r| *r == 0.0) {
        let lam = generalized_eigenvalues(&sys.k.to_dense(), &sys.mass_matrix())?;
        let scale = lam.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut out = Vec::with_capacity(2 * n);
        for l in lam {
            if l < -1e-10 * scale.max(1.0) {
                return Err(Error::NotPositiveDefinite(format!("stiffness eigenvalue {l:e}")));
            }
            let w = l.max(0.0).sqrt();
            out.push(Complex::new(0.0, w));
            out.push(Complex::new(0.0, -w));
        }
        sort_spectrum(&mut out);
        return Ok(out);
    }
    companion_spectrum(sys, &sys.r, None)
}

/// Spectrum of the closed loop with the PI law, the integrator appended as
/// one extra state when `ki != 0`.
pub fn closed_loop_spectrum(sys: &DiscreteSystem, kp: f64, ki: f64) -> Result<Vec<Complex<f64>>> {
    let r = sys.closed_loop_damping(kp);
    companion_spectrum(sys, &r, (ki != 0.0).then_some(ki))
}

fn companion_spectrum(sys: &DiscreteSystem, r: &[f64], ki: Option<f64>) -> Result<Vec<Complex<f64>>> {
    let n = sys.dim();
    let m = 2 * n + usize::from(ki.is_some());
    let k = sys.k.to_dense();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        a[(n + i, n + i)] = -r[i] / sys.e[i];
        for j in i.saturating_sub(2)..(i + 3).min(n) {
            a[(n + i, j)] = -k[(i, j)] / sys.e[i];
        }
    }
    if let Some(ki) = ki {
        let last = sys.last();
        a[(2 * n, n + last)] = 1.0;
        a[(n + last, 2 * n)] = -sys.b[last] * ki / sys.e[last];
    }
    let mut ev: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    sort_spectrum(&mut ev);
    Ok(ev)
}
