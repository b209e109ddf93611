//! Run configuration, the nine built-in presets and the batch driver.
//!
//! A run is described by a TOML document. An optional `preset` key names a
//! built-in configuration that the document's explicit keys override,
//! table by table.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretize::{build_grid, DiscreteSystem, Grid, Spacing};
use crate::error::{Error, Result};
use crate::integrate::{default_dt, PiController, SimState};
use crate::model::{BoundaryConstants, BoundaryVariant, ControlParams, PhysicalParams, VariantKind};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WENTZELL_OUT";

/// A scalar applied to every node or an explicit nodal array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodalValue {
    Constant(f64),
    Nodes(Vec<f64>),
}

impl Default for NodalValue {
    fn default() -> Self {
        NodalValue::Constant(0.0)
    }
}

impl NodalValue {
    pub fn expand(&self, n_nodes: usize, path: &str) -> Result<Vec<f64>> {
        match self {
            NodalValue::Constant(c) => Ok(vec![*c; n_nodes]),
            NodalValue::Nodes(v) if v.len() == n_nodes => Ok(v.clone()),
            NodalValue::Nodes(v) => Err(config_err(path, format!("expected {n_nodes} nodal values, got {}", v.len()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeStepSetting {
    Fixed(f64),
    Keyword(String),
}

impl Default for TimeStepSetting {
    fn default() -> Self {
        TimeStepSetting::Keyword("auto".into())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryQuantity {
    #[default]
    Velocity,
    Displacement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub a: NodalValue,
    #[serde(default)]
    pub q: NodalValue,
    #[serde(default)]
    pub f: NodalValue,
    pub beta1: f64,
    pub mu1: f64,
    #[serde(default)]
    pub q1: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub f1: f64,
    #[serde(default)]
    pub f2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default)]
    pub kp: f64,
    #[serde(default)]
    pub alpha2: f64,
    #[serde(default)]
    pub v1_ref: f64,
    /// Defaults to on when either gain is nonzero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub u: NodalValue,
    #[serde(default)]
    pub udot: NodalValue,
    /// Overrides the velocity of the node at `x = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udot_at_1: Option<f64>,
    /// Initial controller integrator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub trajectory: TrajectoryQuantity,
}

fn default_fit_start() -> f64 {
    0.25
}

fn default_fit_floor() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Lyapunov weight; chosen by `choose_ell` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    /// Decay fits use `t >= fit_start * t_end`.
    #[serde(default = "default_fit_start")]
    pub fit_start: f64,
    /// Samples below `fit_floor * Gamma(0)` are left out of decay fits.
    #[serde(default = "default_fit_floor")]
    pub fit_floor: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { ell: None, fit_start: default_fit_start(), fit_floor: default_fit_floor() }
    }
}

fn default_n() -> usize {
    199
}

fn default_stride() -> usize {
    10
}

fn default_variant() -> VariantKind {
    VariantKind::W2W1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_variant")]
    pub variant: VariantKind,
    /// Number of grid intervals.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub dt: TimeStepSetting,
    /// Horizon; 50 open loop, 200 closed loop when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default)]
    pub seed: u64,
    pub physical: PhysicalSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

/// Names of the built-in presets, `1a` through `3c`.
pub fn preset_names() -> Vec<String> {
    let mut out = Vec::with_capacity(9);
    for set in ['1', '2', '3'] {
        for gains in ['a', 'b', 'c'] {
            out.push(format!("{set}{gains}"));
        }
    }
    out
}

fn preset_toml(name: &str) -> Option<String> {
    let mut chars = name.chars();
    let (set, gains) = (chars.next()?, chars.next()?);
    if chars.next().is_some() {
        return None;
    }
    let damping = match set {
        '1' => 0.0,
        '2' => 0.001,
        '3' => 0.005,
        _ => return None,
    };
    let (kp, alpha2, v1_ref, enabled, t_end) = match gains {
        'a' => (0.0, 0.0, 0.0, false, 50.0),
        'b' => (10.0, 100.0, 0.5, true, 200.0),
        'c' => (1000.0, 10.0, 0.5, true, 200.0),
        _ => return None,
    };
    Some(format!(
        r#"preset = "{name}"
variant = "W2W1"
n = 199
dt = "auto"
t_end = {t_end:?}
sample_stride = 100
seed = 0

[physical]
a = 1.0
q = {damping:?}
f = 0.0
beta1 = 20.0
mu1 = 20.0
q1 = {damping:?}
gamma1 = {damping:?}
f1 = 0.0
f2 = 0.0

[control]
kp = {kp:?}
alpha2 = {alpha2:?}
v1_ref = {v1_ref:?}
enabled = {enabled}

[initial]
u = 0.0
udot = 0.0
udot_at_1 = 1.0
"#
    ))
}

fn preset_value(name: &str) -> Result<toml::Value> {
    let text = preset_toml(name).ok_or_else(|| {
        config_err("preset", format!("unknown preset `{name}`; expected one of {}", preset_names().join(", ")))
    })?;
    toml::from_str(&text).map_err(|e| config_err("preset", e.to_string()))
}

/// The built-in configuration `name` (`1a` ... `3c`).
pub fn preset(name: &str) -> Result<RunConfig> {
    from_value(preset_value(name)?, "preset")
}

pub fn presets() -> Vec<RunConfig> {
    preset_names().iter().map(|n| preset(n).expect("built-in preset parses")).collect()
}

/// Recursive table merge; `overlay` wins on conflicts.
fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn from_value(value: toml::Value, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| config_err(origin, e.message()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a configuration document, expanding `preset` if present.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    let value: toml::Value = toml::from_str(text).map_err(|e| config_err(origin, e.to_string()))?;
    let merged = match value.get("preset") {
        Some(toml::Value::String(name)) => {
            let mut base = preset_value(name)?;
            merge(&mut base, value);
            base
        }
        Some(_) => return Err(config_err("preset", "must be a string")),
        None => value,
    };
    from_value(merged, origin)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
    parse_config(&text, &path.display().to_string())
}

/// A config file path, or else a preset name.
pub fn resolve_target(target: &str) -> Result<RunConfig> {
    let p = Path::new(target);
    if p.is_file() {
        load_config(p)
    } else if preset_toml(target).is_some() {
        preset(target)
    } else {
        Err(config_err(target, "neither a readable config file nor a preset name"))
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<serialize>", e.to_string()))
    }

    pub fn control_enabled(&self) -> bool {
        self.control.enabled.unwrap_or(self.control.kp != 0.0 || self.control.alpha2 != 0.0)
    }

    pub fn horizon(&self) -> f64 {
        self.t_end.unwrap_or(if self.control_enabled() { 200.0 } else { 50.0 })
    }

    /// Checks everything that can be checked without building the model.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(config_err("n", "need at least 2 intervals"));
        }
        if self.sample_stride == 0 {
            return Err(config_err("sample_stride", "must be at least 1"));
        }
        match &self.dt {
            TimeStepSetting::Fixed(dt) if !(*dt > 0.0 && dt.is_finite()) => {
                return Err(config_err("dt", "must be positive or \"auto\""));
            }
            TimeStepSetting::Keyword(k) if k != "auto" => {
                return Err(config_err("dt", format!("unknown keyword `{k}`; use a number or \"auto\"")));
            }
            _ => {}
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_err("t_end", "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.analysis.fit_start) {
            return Err(config_err("analysis.fit_start", "must lie in [0, 1)"));
        }
        if let Some(ell) = self.analysis.ell {
            if !(ell >= 0.0) {
                return Err(config_err("analysis.ell", "must be non-negative"));
            }
        }
        if self.control_enabled() && self.control.v1_ref != 0.0 && self.variant != VariantKind::W2W1 {
            return Err(config_err(
                "control.v1_ref",
                format!("variant {} is a stabilization problem; v1_ref must be 0", self.variant),
            ));
        }
        if self.variant == VariantKind::W2D && self.control_enabled() && !(self.control.alpha2 > 0.0) {
            return Err(config_err("control.alpha2", "W2D needs alpha2 > 0"));
        }
        if !self.variant.has_integrator() && self.control.alpha2 != 0.0 {
            return Err(config_err(
                "control.alpha2",
                format!("variant {} has no integral action; alpha2 must be 0", self.variant),
            ));
        }
        let n_nodes = self.n + 1;
        self.physical.a.expand(n_nodes, "physical.a")?;
        self.physical.q.expand(n_nodes, "physical.q")?;
        self.physical.f.expand(n_nodes, "physical.f")?;
        self.initial.u.expand(n_nodes, "initial.u")?;
        self.initial.udot.expand(n_nodes, "initial.udot")?;
        self.physical_params().map(|_| ())
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.n, &Spacing::Uniform)
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        let n = self.n + 1;
        let p = &self.physical;
        let bc = BoundaryConstants { beta1: p.beta1, mu1: p.mu1, q1: p.q1, gamma1: p.gamma1, f1: p.f1, f2: p.f2 };
        PhysicalParams::new(
            p.a.expand(n, "physical.a")?,
            p.q.expand(n, "physical.q")?,
            p.f.expand(n, "physical.f")?,
            bc,
        )
        .map_err(|e| match e {
            Error::InvalidParameter { field, reason } => config_err(&format!("physical.{field}"), reason),
            other => other,
        })
    }

    /// Effective control parameters (all zero when control is off).
    pub fn control_params(&self) -> ControlParams {
        if self.control_enabled() {
            ControlParams { kp: self.control.kp, alpha2: self.control.alpha2, v1_ref: self.control.v1_ref }
        } else {
            ControlParams { kp: 0.0, alpha2: 0.0, v1_ref: 0.0 }
        }
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        if let Some(d) = override_dir {
            return d.to_path_buf();
        }
        if let Some(d) = &self.output.dir {
            return PathBuf::from(d);
        }
        let base = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
        base.join(self.preset.clone().unwrap_or_else(|| "run".into()))
    }
}

/// A configuration resolved into the objects the simulation needs.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: RunConfig,
    pub grid: Grid,
    pub params: PhysicalParams,
    pub control: ControlParams,
    pub variant: BoundaryVariant,
    pub system: DiscreteSystem,
    pub dt: f64,
    pub t_end: f64,
    /// Initial state on the free dofs.
    pub initial: SimState,
    pub controller: Option<PiController>,
}

impl Scenario {
    pub fn resolve(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let params = config.physical_params()?;
        let control = config.control_params();
        let kind = config.variant;
        let variant = BoundaryVariant::from_parts(kind, &params, &control);
        let system = DiscreteSystem::build(&grid, &params, kind)?;
        let n_nodes = grid.n_nodes();
        let u = config.initial.u.expand(n_nodes, "initial.u")?;
        let mut udot = config.initial.udot.expand(n_nodes, "initial.udot")?;
        if let Some(v) = config.initial.udot_at_1 {
            udot[n_nodes - 1] = v;
        }
        if kind.dirichlet_left() && (u[0] != 0.0 || udot[0] != 0.0) {
            return Err(config_err("initial.u", "clamped end needs u(0) = udot(0) = 0"));
        }
        let dt = match config.dt {
            TimeStepSetting::Fixed(dt) => dt,
            TimeStepSetting::Keyword(_) => default_dt(&grid, &params),
        };
        let controller = config.control_enabled().then(|| {
            let mut c = PiController::new(control.kp, control.alpha2, control.v1_ref);
            if let Some(s) = config.control.saturation {
                c = c.with_saturation(s);
            }
            c.eta = config.initial.eta.unwrap_or(0.0);
            c
        });
        if controller.is_none() && config.initial.eta.is_some() {
            return Err(config_err("initial.eta", "integrator state given but control is off"));
        }
        Ok(Scenario {
            initial: SimState::new(system.restrict(&u), system.restrict(&udot)),
            config: config.clone(),
            grid,
            params,
            control,
            variant,
            system,
            dt,
            t_end: config.horizon(),
            controller,
        })
    }
}

/// Maps simulated states to deviations from the attractor the run should
/// converge to.
///
/// With integral action the free-end problem is first moved to zero
/// setpoint and zero sources by the exact discrete regulation shift; the
/// level `u_*` then follows from the conserved `u[N] - eta`. Without
/// integral action and with a free left end, `1^T E v + 1^T R_cl u` is
/// conserved and fixes the final level.
#[derive(Clone, Debug)]
pub struct Reference {
    pub v_ref: f64,
    /// Regulation profile on the dofs (zero without a shift).
    pub profile: Vec<f64>,
    pub integrator_shift: f64,
    /// Equilibrium of the shifted problem on the dofs.
    pub u_eq: Vec<f64>,
    pub u_star: Option<f64>,
}

impl Reference {
    pub fn new(sc: &Scenario) -> Result<Self> {
        let sys = &sc.system;
        let n = sys.dim();
        let kind = sc.variant.kind();
        let integral = sc.controller.as_ref().is_some_and(|c| c.ki != 0.0) && kind.has_integrator();
        let eta0 = sc.controller.as_ref().map_or(0.0, |c| c.eta);
        let v_ref = sc.control.v1_ref;
        let (profile, integrator_shift) = if kind == VariantKind::W2W1 {
            let s = crate::discretize::discrete_regulation_shift(sys, v_ref, sc.control.alpha2)?;
            (s.profile, s.integrator_shift)
        } else {
            (vec![0.0; n], 0.0)
        };
        let u0: Vec<f64> = sc.initial.u.iter().zip(&profile).map(|(u, p)| u - p).collect();
        let v0: Vec<f64> = sc.initial.udot.iter().map(|v| v - v_ref).collect();
        let last = sys.last();
        if integral {
            let u_star = u0[last] - (eta0 + integrator_shift);
            let u_eq = if kind == VariantKind::W2W1 {
                vec![u_star; n]
            } else {
                crate::lyapunov::discrete_equilibrium(sys, &sc.variant, u_star)?
            };
            return Ok(Reference { v_ref, profile, integrator_shift, u_eq, u_star: Some(u_star) });
        }
        let u_eq = match kind {
            VariantKind::W1D | VariantKind::W2D => crate::lyapunov::discrete_equilibrium(sys, &sc.variant, 0.0)?,
            VariantKind::W2W1 | VariantKind::W1W1 => {
                let pinned = if kind == VariantKind::W1W1 {
                    crate::lyapunov::discrete_equilibrium(sys, &sc.variant, 0.0)?
                } else {
                    vec![0.0; n]
                };
                let r_cl = sys.closed_loop_damping(sc.control.kp);
                let total_r: f64 = r_cl.iter().sum();
                let level = if total_r > 0.0 {
                    let q0: f64 = (0..n).map(|i| sys.e[i] * v0[i] + r_cl[i] * (u0[i] - pinned[i])).sum();
                    q0 / total_r
                } else {
                    let m: f64 = sys.e.iter().sum();
                    (0..n).map(|i| sys.e[i] * (u0[i] - pinned[i])).sum::<f64>() / m
                };
                pinned.iter().map(|p| p + level).collect()
            }
        };
        Ok(Reference { v_ref, profile, integrator_shift, u_eq, u_star: None })
    }

    /// Shifted displacement and velocity.
    pub fn shifted(&self, s: &SimState) -> (Vec<f64>, Vec<f64>) {
        let u = s.u.iter().zip(&self.profile).map(|(u, p)| u - s.t * self.v_ref - p).collect();
        let v = s.udot.iter().map(|v| v - self.v_ref).collect();
        (u, v)
    }

    /// `(w, v)` with `w = shifted u - u_eq`.
    pub fn deviation(&self, s: &SimState) -> (Vec<f64>, Vec<f64>) {
        let (u, v) = self.shifted(s);
        (u.iter().zip(&self.u_eq).map(|(u, e)| u - e).collect(), v)
    }

    pub fn shifted_eta(&self, eta: f64) -> f64 {
        eta + self.integrator_shift
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub certify: bool,
    pub resolvent_check: bool,
    /// Write CSVs and the report here (nothing is written when `None`).
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventCheck {
    pub constant_case_error: f64,
    pub convergence: Vec<crate::wellposed::ConvergenceRow>,
    pub residual_ratios: Vec<f64>,
    pub error_ratios: Vec<f64>,
    pub states: usize,
    pub pairing_min: f64,
    /// `max |pairing - int z2^2| / int z2^2`.
    pub pairing_max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyCheck {
    /// Against the profile of the model with the discrete Lagrangian's
    /// effective stiffness (`a`, `beta1` halved).
    pub max_error: f64,
    pub max_error_unscaled: f64,
    pub max_error_discrete_equilibrium: f64,
    /// `u_* - profile(1) - eta2_offset`.
    pub identity_defect: f64,
    pub u_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub dt: f64,
    pub steps: u64,
    pub t_final: f64,
    pub samples: usize,
    pub ell: f64,
    pub u_star: Option<f64>,
    pub y_final: f64,
    /// `|y(T) - v1_ref|` when control is on.
    pub y_error: Option<f64>,
    /// `max |u[N] - eta - u_*| / max(1, |u_*|)` in shifted variables.
    pub conservation_residual: Option<f64>,
    /// `max |H - H(0)| / H(0)` over samples, `H` the discrete Hamiltonian.
    pub energy_drift: f64,
    /// Least-squares slope of `H / H(0)` against time.
    pub energy_drift_slope: f64,
    /// Largest single-step increase of the time-consistent `V`, over `V(0)`.
    pub v_max_step_increase: f64,
    pub decay: Option<crate::lyapunov::DecayFit>,
    /// Same fit over every sample, for comparison.
    pub decay_full_window: Option<crate::lyapunov::DecayFit>,
    pub sup_decay: Option<crate::lyapunov::DecayFit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub certification: Option<crate::lyapunov::CertificationReport>,
    pub resolvent_check: Option<ResolventCheck>,
    pub steady_check: Option<SteadyCheck>,
}

/// A finished run: the report plus the sampled series.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub functionals: Vec<crate::lyapunov::FunctionalSample>,
    pub y: Vec<f64>,
    pub input: Vec<f64>,
    pub eta: Vec<f64>,
    pub final_state: SimState,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

struct CsvSinks {
    trajectory: BufWriter<fs::File>,
    functionals: BufWriter<fs::File>,
}

impl CsvSinks {
    fn create(dir: &Path, n_nodes: usize) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut trajectory = BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?);
        let mut functionals = BufWriter::new(fs::File::create(dir.join("functionals.csv"))?);
        let mut header = String::from("t");
        for i in 0..n_nodes {
            header.push_str(&format!(",node_{i}"));
        }
        writeln!(trajectory, "{header}")?;
        writeln!(functionals, "t,E_u,F,W,V,Gamma,sup_dev,y,U,eta")?;
        Ok(CsvSinks { trajectory, functionals })
    }
}

fn regression_slope(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    if t.len() < 2 {
        return 0.0;
    }
    let mt = t.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut stt, mut stv) = (0.0, 0.0);
    for (a, b) in t.iter().zip(v) {
        stt += (a - mt) * (a - mt);
        stv += (a - mt) * (b - mv);
    }
    if stt == 0.0 {
        0.0
    } else {
        stv / stt
    }
}

/// Lyapunov weight for the scenario: the configured one, else
/// `choose_ell`, else 0 when the decay hypotheses fail.
pub fn scenario_ell(sc: &Scenario) -> f64 {
    sc.config
        .analysis
        .ell
        .unwrap_or_else(|| crate::lyapunov::choose_ell(&sc.params, &sc.variant).unwrap_or(0.0))
}

pub fn run(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    use crate::integrate::{step_count, Stepper};
    use crate::lyapunov::{energy, envelope, fit_decay, DiscreteLyapunov, FitOptions, FunctionalSample};
    use crate::model::ContinuousState;

    let sc = Scenario::resolve(config)?;
    let reference = Reference::new(&sc)?;
    let ell = scenario_ell(&sc);
    let lyap = DiscreteLyapunov::new(&sc.system, &sc.grid, &sc.variant, ell)?;
    let sys = &sc.system;
    let last = sys.last();
    let dt = sc.dt;
    let steps = step_count(dt, sc.t_end);
    let stride = config.sample_stride as u64;
    let mut sinks = match &opts.out_dir {
        Some(dir) => Some(CsvSinks::create(dir, sc.grid.n_nodes())?),
        None => None,
    };
    let displacement = config.output.trajectory == TrajectoryQuantity::Displacement;

    let mut st = Stepper::new(sys, sc.controller.clone(), sc.initial.clone(), dt)?;
    let mut out = RunOutcome {
        report: RunReport {
            config: config.clone(),
            dt,
            steps,
            t_final: 0.0,
            samples: 0,
            ell,
            u_star: reference.u_star,
            y_final: 0.0,
            y_error: None,
            conservation_residual: None,
            energy_drift: 0.0,
            energy_drift_slope: 0.0,
            v_max_step_increase: f64::NEG_INFINITY,
            decay: None,
            decay_full_window: None,
            sup_decay: None,
            notes: Vec::new(),
            certification: None,
            resolvent_check: None,
            steady_check: None,
        },
        functionals: Vec::new(),
        y: Vec::new(),
        input: Vec::new(),
        eta: Vec::new(),
        final_state: sc.initial.clone(),
    };
    let mut h_series = Vec::new();
    let mut v_prev = 0.0;
    let mut v0 = 0.0;
    let mut cons = 0.0_f64;

    for k in 0..=steps {
        if k > 0 {
            st.step()?;
        }
        let s = st.state();
        let (w, v) = reference.deviation(s);
        let v_stag = lyap.v_staggered(&w, &v, dt);
        if k == 0 {
            v0 = v_stag;
        } else {
            out.report.v_max_step_increase = out.report.v_max_step_increase.max(v_stag - v_prev);
        }
        v_prev = v_stag;
        if let Some(u_star) = reference.u_star {
            let (u_sh, _) = reference.shifted(s);
            cons = cons.max((u_sh[last] - reference.shifted_eta(st.eta()) - u_star).abs());
        }
        if k % stride != 0 && k != steps {
            continue;
        }
        let (u_sh, v_sh) = reference.shifted(s);
        let state = ContinuousState::new(sys.embed(&u_sh), sys.embed(&v_sh), None, s.t);
        let sample = FunctionalSample {
            t: s.t,
            e_u: energy(&state, &sc.grid, &sc.params)?,
            f: lyap.f_value(&w, &v),
            w: lyap.w_value(&w, &v),
            v: lyap.v_value(&w, &v),
            gamma: lyap.gamma_value(&w, &v),
            sup_dev: w.iter().fold(0.0, |m, x| m.max(x.abs())),
        };
        let (y, u_in, eta) = (st.output(), st.input(), st.eta());
        h_series.push(sys.hamiltonian(&s.u, &s.udot));
        if let Some(sinks) = sinks.as_mut() {
            let nodal = sys.embed(if displacement { &s.u } else { &s.udot });
            let mut line = fmt17(s.t);
            for x in nodal {
                line.push(',');
                line.push_str(&fmt17(x));
            }
            writeln!(sinks.trajectory, "{line}")?;
            let vals = [
                sample.t, sample.e_u, sample.f, sample.w, sample.v, sample.gamma, sample.sup_dev, y, u_in, eta,
            ];
            writeln!(sinks.functionals, "{}", vals.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(","))?;
        }
        out.functionals.push(sample);
        out.y.push(y);
        out.input.push(u_in);
        out.eta.push(eta);
    }
    if let Some(mut sinks) = sinks {
        sinks.trajectory.flush()?;
        sinks.functionals.flush()?;
    }

    let r = &mut out.report;
    r.t_final = st.state().t;
    r.samples = out.functionals.len();
    r.y_final = st.output();
    if sc.controller.is_some() {
        r.y_error = Some((r.y_final - sc.control.v1_ref).abs());
    }
    if let Some(u_star) = reference.u_star {
        r.conservation_residual = Some(cons / u_star.abs().max(1.0));
    }
    if v0 > 0.0 {
        r.v_max_step_increase /= v0;
    }
    if steps == 0 {
        r.v_max_step_increase = 0.0;
    }
    let h0 = h_series[0];
    let times: Vec<f64> = out.functionals.iter().map(|f| f.t).collect();
    if h0 > 0.0 {
        r.energy_drift = h_series.iter().fold(0.0, |m, h| m.max((h - h0).abs() / h0));
        let rel: Vec<f64> = h_series.iter().map(|h| h / h0).collect();
        r.energy_drift_slope = regression_slope(&times, &rel);
    }

    let gammas: Vec<f64> = out.functionals.iter().map(|f| f.gamma).collect();
    let sups: Vec<f64> = out.functionals.iter().map(|f| f.sup_dev).collect();
    let fit_opts = FitOptions {
        window: Some((config.analysis.fit_start * sc.t_end, f64::INFINITY)),
        relative_floor: config.analysis.fit_floor,
    };
    let full_opts = FitOptions { window: None, relative_floor: config.analysis.fit_floor };
    let env_g = envelope(&gammas);
    match fit_decay(&times, &env_g, fit_opts) {
        Ok(f) => r.decay = Some(f),
        Err(e) => r.notes.push(format!("Gamma decay fit: {e}")),
    }
    match fit_decay(&times, &env_g, full_opts) {
        Ok(f) => r.decay_full_window = Some(f),
        Err(e) => r.notes.push(format!("Gamma full-window fit: {e}")),
    }
    match fit_decay(&times, &envelope(&sups), fit_opts) {
        Ok(f) => r.sup_decay = Some(f),
        Err(e) => r.notes.push(format!("sup deviation fit: {e}")),
    }

    if opts.certify {
        r.certification = Some(crate::lyapunov::certify_forms(&lyap, sc.grid.intervals())?);
    }
    if opts.resolvent_check {
        r.resolvent_check = Some(resolvent_check(&sc)?);
    }
    if sc.variant.kind() == VariantKind::W2D {
        if let Some(u_star) = reference.u_star {
            r.steady_check = Some(steady_check(&sc, &reference, st.state(), u_star)?);
        }
    }
    out.final_state = st.into_state();

    if let Some(dir) = &opts.out_dir {
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report).map_err(std::io::Error::other)?)?;
        fs::write(dir.join("config.toml"), config.to_toml()?)?;
    }
    Ok(out)
}

fn steady_check(sc: &Scenario, reference: &Reference, s: &SimState, u_star: f64) -> Result<SteadyCheck> {
    use crate::discretize::LAGRANGIAN_STIFFNESS_FACTOR;
    use crate::model::steady_profile;
    let alpha2 = sc.control.alpha2;
    let half = steady_profile(&sc.params.with_stiffness_scale(LAGRANGIAN_STIFFNESS_FACTOR)?, alpha2, u_star, &sc.grid)?;
    let full = steady_profile(&sc.params, alpha2, u_star, &sc.grid)?;
    let u = sc.system.embed(&s.u);
    let eq = sc.system.embed(&reference.u_eq);
    let err = |p: &[f64]| u.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(SteadyCheck {
        max_error: err(&half.profile),
        max_error_unscaled: err(&full.profile),
        max_error_discrete_equilibrium: err(&eq),
        identity_defect: half.level_defect(u_star),
        u_star,
    })
}

/// Constant-solution case, grid convergence and the pairing identity on
/// seeded random admissible states over the scenario's grid.
pub fn resolvent_check(sc: &Scenario) -> Result<ResolventCheck> {
    use crate::wellposed::{convergence_study, monotonicity_pairing, resolvent_solve, smooth_admissible_state, GeneratorState};
    use rand::SeedableRng;

    let n_nodes = sc.grid.n_nodes();
    let c = 1.25;
    let y = GeneratorState { z1: vec![c; n_nodes], z2: vec![c; n_nodes], z3: 0.0, z4: 0.5, z5: 0.0 };
    let sol = resolvent_solve(&y, &sc.params, &sc.grid)?;
    let constant_case_error = sol
        .z
        .z1
        .iter()
        .map(|z| (z - c).abs())
        .chain(sol.z.z2.iter().map(|z| z.abs()))
        .chain([sol.z.z3.abs(), sol.z.z5.abs(), (sol.z.z4 - 0.5).abs()])
        .fold(0.0, f64::max);

    let convergence = convergence_study(sc.params.beta1, sc.params.mu1, &[50, 100, 200, 400])?;
    let ratios = |f: fn(&crate::wellposed::ConvergenceRow) -> f64| {
        convergence.windows(2).map(|w| f(&w[0]) / f(&w[1])).collect::<Vec<f64>>()
    };
    let residual_ratios = ratios(|r| r.residual);
    let error_ratios = ratios(|r| r.error);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sc.config.seed);
    let states = 100;
    let (mut pairing_min, mut pairing_max_deviation) = (f64::INFINITY, 0.0_f64);
    for _ in 0..states {
        let z = smooth_admissible_state(&sc.grid, &mut rng);
        let (p, reference) = monotonicity_pairing(&z, &sc.params, &sc.grid)?;
        pairing_min = pairing_min.min(p);
        pairing_max_deviation = pairing_max_deviation.max((p - reference).abs() / reference.max(f64::MIN_POSITIVE));
    }
    Ok(ResolventCheck {
        constant_case_error,
        convergence,
        residual_ratios,
        error_ratios,
        states,
        pairing_min,
        pairing_max_deviation,
    })
}

/// Certification of the scenario's closed loop for each `ell`.
pub fn sweep(config: &RunConfig, ells: &[f64]) -> Result<Vec<crate::lyapunov::CertificationReport>> {
    let sc = Scenario::resolve(config)?;
    ells.iter()
        .map(|&ell| crate::lyapunov::certify(&sc.system, &sc.grid, &sc.variant, ell))
        .collect()
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || config_err("ell", format!("expected a:b:n, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
    }
}

/// Spectrum of the scenario's (closed-loop, if control is on) dynamics.
pub fn spectrum_of(config: &RunConfig) -> Result<Vec<nalgebra::Complex<f64>>> {
    let sc = Scenario::resolve(config)?;
    match &sc.controller {
        Some(c) => crate::integrate::closed_loop_spectrum(&sc.system, c.kp, c.ki),
        None => crate::integrate::spectrum(&sc.system),
    }
}

/// Runs configurations concurrently, each into `base/<name>`.
pub fn batch(configs: &[(String, RunConfig)], base: &Path, opts: &RunOptions) -> Vec<(String, Result<RunReport>)> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(name, cfg)| {
                let o = RunOptions { out_dir: Some(base.join(name)), ..opts.clone() };
                scope.spawn(move || (name.clone(), run(cfg, &o).map(|r| r.report)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    })
}
