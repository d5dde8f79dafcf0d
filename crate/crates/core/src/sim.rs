//! Two-rate deterministic simulation: the plant is integrated with RK4 at a
//! fine step while the controller runs at the control rate and its output is
//! held between ticks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControllerState, Gains, NominalFeedback, NominalModel};
use crate::dynamics::{JointState, ManipulatorModel, Matrix, ModelError, Vector};
use crate::environment::{apply_payload_event, human_force, validate_payload_events, wall_force, ForceProfile, PayloadEvent, Wall};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("simulation diverged at t = {time:.4} s ({reason})")]
    Diverged { time: f64, reason: String, trace: Box<Trace> },
}

impl SimError {
    fn invalid(e: impl std::fmt::Display) -> Self {
        SimError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Standard,
    Passive,
    PassiveTask,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Standard => "standard",
            ControllerKind::Passive => "passive",
            ControllerKind::PassiveTask => "passive-task",
        }
    }

    pub fn port(self) -> Port {
        match self {
            ControllerKind::PassiveTask => Port::Task,
            _ => Port::Joint,
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(ControllerKind::Standard),
            "passive" => Ok(ControllerKind::Passive),
            "passive-task" => Ok(ControllerKind::PassiveTask),
            other => Err(format!("unknown controller kind `{other}` (expected standard, passive or passive-task)")),
        }
    }
}

/// Coordinates in which the human force, walls and nominal model live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    Joint,
    Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub nominal: NominalModel,
    pub gains: Gains,
    pub saturation: Option<Vector>,
    /// Permits D_n < 0. Only for negative-control experiments.
    pub allow_active_damping: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt_physics: f64,
    pub dt_control: f64,
    pub duration: f64,
    pub initial_q: Vector,
    pub initial_qdot: Vector,
}

impl SimConfig {
    pub const DEFAULT_DT_PHYSICS: f64 = 1e-4;
    pub const DEFAULT_DT_CONTROL: f64 = 2e-3;

    pub fn new(duration: f64, initial: JointState) -> Self {
        Self {
            dt_physics: Self::DEFAULT_DT_PHYSICS,
            dt_control: Self::DEFAULT_DT_CONTROL,
            duration,
            initial_q: initial.q,
            initial_qdot: initial.qdot,
        }
    }

    fn ticks(&self) -> Result<(usize, usize), SimError> {
        if !(self.dt_physics > 0.0 && self.dt_control > 0.0 && self.duration > 0.0) {
            return Err(SimError::invalid("dt_physics, dt_control and duration must be > 0"));
        }
        let sub = (self.dt_control / self.dt_physics).round();
        if sub < 1.0 || (sub * self.dt_physics - self.dt_control).abs() > 1e-9 * self.dt_control {
            return Err(SimError::invalid("dt_control must be an integer multiple of dt_physics"));
        }
        let ticks = (self.duration / self.dt_control).round();
        if (ticks * self.dt_control - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
            return Err(SimError::invalid("duration must be an integer multiple of dt_control"));
        }
        Ok((ticks as usize, sub as usize))
    }
}

/// Zero-mean uniform noise on the velocity fed to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityNoise {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: ManipulatorModel,
    pub controller: ControllerConfig,
    pub walls: Vec<Wall>,
    pub payload_events: Vec<PayloadEvent>,
    pub human: ForceProfile,
    pub sim: SimConfig,
    pub noise: Option<VelocityNoise>,
}

impl Scenario {
    pub fn port(&self) -> Port {
        self.controller.kind.port()
    }

    pub fn port_dim(&self) -> usize {
        match self.port() {
            Port::Joint => self.model.dof(),
            Port::Task => self.model.task_dim(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.name.chars().any(char::is_control) {
            return Err(SimError::invalid("scenario name must not contain control characters"));
        }
        self.model.validate().map_err(SimError::invalid)?;
        let dof = self.model.dof();
        let dim = self.port_dim();
        let c = &self.controller;
        match (c.kind, c.nominal.is_task()) {
            (ControllerKind::PassiveTask, false) => {
                return Err(SimError::invalid("passive-task controller needs a task-space nominal model"))
            }
            (ControllerKind::Standard | ControllerKind::Passive, true) => {
                return Err(SimError::invalid("joint-space controller needs a joint-space nominal model"))
            }
            _ => {}
        }
        c.nominal.validate(c.allow_active_damping).map_err(SimError::invalid)?;
        if c.nominal.dim() != dim || c.gains.dim() != dim {
            return Err(SimError::invalid(format!(
                "controller dimension mismatch: port has {dim} axes, nominal {} and gains {}",
                c.nominal.dim(),
                c.gains.dim()
            )));
        }
        if let Some(s) = &c.saturation {
            if s.len() != dim || s.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(SimError::invalid("saturation must have one positive entry per axis"));
            }
        }
        let task_dim = self.model.task_dim();
        for w in &self.walls {
            w.validate(task_dim).map_err(SimError::invalid)?;
        }
        self.human.validate(dim).map_err(SimError::invalid)?;
        validate_payload_events(&self.model, &self.payload_events).map_err(SimError::invalid)?;
        if let Some(e) = self.payload_events.iter().find(|e| e.time > self.sim.duration) {
            return Err(SimError::invalid(format!("payload event at t = {} s is after the end of the run", e.time)));
        }
        JointState::new(self.sim.initial_q.clone(), self.sim.initial_qdot.clone()).map_err(SimError::invalid)?;
        if self.sim.initial_q.len() != dof {
            return Err(SimError::invalid(format!("initial state has {} entries, plant has {dof}", self.sim.initial_q.len())));
        }
        if let Some(n) = self.noise {
            if !(n.amplitude.is_finite() && n.amplitude >= 0.0) {
                return Err(SimError::invalid("noise amplitude must be >= 0"));
            }
        }
        self.sim.ticks()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Energies {
    /// ½q̇ᵀMq̇ + U(q)
    pub plant: f64,
    /// ½q̇_nᵀ(K M_n)q̇_n: the nominal model scaled by K.
    pub nominal: f64,
    /// ½e_nrᵀ K K_P e_nr
    pub spring: f64,
}

impl Energies {
    pub fn storage(&self) -> f64 {
        self.plant + self.nominal + self.spring
    }
}

/// Cumulative energy flows since t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Work {
    /// Human port: ∫τ_hᵀq̇ + ∫(Kτ_h)ᵀq̇_n
    pub human: f64,
    /// Into the environment: ∫(−τ_e)ᵀq̇
    pub environment: f64,
    /// Storage jumps caused by payload attach/detach.
    pub events: f64,
}

/// One control-tick record. Vectors are in port coordinates except
/// `tau_f`, which is always joint friction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub q_n: Vec<f64>,
    pub qdot_n: Vec<f64>,
    pub tau_h: Vec<f64>,
    pub tau_a_raw: Vec<f64>,
    pub tau_a: Vec<f64>,
    pub tau_e: Vec<f64>,
    pub tau_f: Vec<f64>,
    pub e_nr: Vec<f64>,
    pub energy: Energies,
    pub work: Work,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub controller: ControllerKind,
    pub port: Port,
    pub dim: usize,
    pub joint_dof: usize,
    pub dt_control: f64,
    pub k: Vec<f64>,
    pub kp: Vec<f64>,
    pub nominal_damping: Vec<f64>,
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

/// Forces acting on the plant at one instant, with the instantaneous power
/// of the human and environment ports.
struct PlantInputs {
    tau_ext: Vector,
    human_power: f64,
    environment_power: f64,
}

struct Plant<'a> {
    model: ManipulatorModel,
    port: Port,
    walls: &'a [Wall],
    human: &'a ForceProfile,
    dim: usize,
}

impl Plant<'_> {
    /// Port position/velocity and the Jacobian from joint to port coordinates.
    fn port_state(&self, s: &JointState) -> (Vector, Vector, Matrix) {
        match self.port {
            Port::Joint => (s.q.clone(), s.qdot.clone(), Matrix::identity(s.dof(), s.dof())),
            Port::Task => {
                let ts = self.model.task_state(s);
                (ts.p, ts.pdot, ts.jacobian)
            }
        }
    }

    /// Task-space contact force from all walls.
    fn contact_force(&self, s: &JointState) -> (Vector, Matrix) {
        let ts = self.model.task_state(s);
        let mut f = Vector::zeros(self.model.task_dim());
        for w in self.walls {
            f[w.axis] += wall_force(w, ts.p[w.axis], ts.pdot[w.axis]);
        }
        (f, ts.jacobian)
    }

    fn inputs(&self, t: f64, s: &JointState, tau_a: &Vector) -> PlantInputs {
        let f_h = human_force(self.human, self.dim, t);
        let tau_h = match self.port {
            Port::Joint => f_h,
            Port::Task => self.model.jacobian(&s.q).transpose() * f_h,
        };
        let (f_e, jac) = self.contact_force(s);
        let tau_e = jac.transpose() * f_e;
        PlantInputs {
            human_power: tau_h.dot(&s.qdot),
            environment_power: -tau_e.dot(&s.qdot),
            tau_ext: tau_a + tau_h + tau_e,
        }
    }

    fn derivative(&self, t: f64, s: &JointState, tau_a: &Vector) -> Result<(Vector, PlantInputs), ModelError> {
        let inputs = self.inputs(t, s, tau_a);
        let qddot = self.model.forward_dynamics(s, &inputs.tau_ext)?;
        Ok((qddot, inputs))
    }

    /// One classical RK4 step with the work integrals carried as extra states.
    fn rk4(&self, t: f64, dt: f64, s: &JointState, tau_a: &Vector) -> Result<(JointState, f64, f64), ModelError> {
        let stage = |q: Vector, qd: Vector| JointState { q, qdot: qd };
        let (a1, p1) = self.derivative(t, s, tau_a)?;
        let s2 = stage(&s.q + &s.qdot * (dt / 2.0), &s.qdot + &a1 * (dt / 2.0));
        let (a2, p2) = self.derivative(t + dt / 2.0, &s2, tau_a)?;
        let s3 = stage(&s.q + &s2.qdot * (dt / 2.0), &s.qdot + &a2 * (dt / 2.0));
        let (a3, p3) = self.derivative(t + dt / 2.0, &s3, tau_a)?;
        let s4 = stage(&s.q + &s3.qdot * dt, &s.qdot + &a3 * dt);
        let (a4, p4) = self.derivative(t + dt, &s4, tau_a)?;
        let q = &s.q + (&s.qdot + &s2.qdot * 2.0 + &s3.qdot * 2.0 + &s4.qdot) * (dt / 6.0);
        let qdot = &s.qdot + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
        let w = |f: fn(&PlantInputs) -> f64| (f(&p1) + 2.0 * f(&p2) + 2.0 * f(&p3) + f(&p4)) * dt / 6.0;
        Ok((JointState { q, qdot }, w(|p| p.human_power), w(|p| p.environment_power)))
    }

    fn energy(&self, s: &JointState) -> f64 {
        self.model.kinetic_energy(s) + self.model.potential_energy(&s.q)
    }
}

/// Integrates a plant with no controller for `steps` RK4 steps of `dt`,
/// returning the final state and the human-port work. Used to check the
/// integrator against the work–energy theorem.
pub fn integrate_open_loop(
    model: &ManipulatorModel,
    human: &ForceProfile,
    initial: JointState,
    dt: f64,
    steps: usize,
) -> Result<(JointState, f64), ModelError> {
    let plant = Plant { model: *model, port: Port::Joint, walls: &[], human, dim: model.dof() };
    let zero = Vector::zeros(model.dof());
    let mut s = initial;
    let mut work = 0.0;
    for i in 0..steps {
        let (next, wh, _) = plant.rk4(i as f64 * dt, dt, &s, &zero)?;
        s = next;
        work += wh;
    }
    Ok((s, work))
}

fn nominal_energy(nominal: &NominalModel, gains: &Gains, q_joint: &Vector, qdot_n: &Vector) -> f64 {
    let m_n = nominal.mass_matrix(q_joint);
    let k = Matrix::from_diagonal(gains.k());
    let weighted = (&k * &m_n + &m_n * &k) * 0.5;
    0.5 * qdot_n.dot(&(weighted * qdot_n))
}

fn spring_energy(gains: &Gains, e: &Vector) -> f64 {
    0.5 * e.iter().zip(gains.k().iter().zip(gains.kp().iter())).map(|(e, (k, kp))| k * kp * e * e).sum::<f64>()
}

fn diverged(s: &JointState) -> Option<String> {
    if s.q.iter().chain(s.qdot.iter()).any(|v| !v.is_finite()) {
        Some("non-finite state".into())
    } else if s.qdot.amax() > 1e6 || s.q.amax() > 1e9 {
        Some("state magnitude exceeded bounds".into())
    } else {
        None
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace, SimError> {
    scenario.validate()?;
    let (n_ticks, substeps) = scenario.sim.ticks()?;
    let cfg = &scenario.controller;
    let port = scenario.port();
    let dim = scenario.port_dim();
    let dt_c = scenario.sim.dt_control;
    let dt_p = dt_c / substeps as f64;
    let feedback = match cfg.kind {
        ControllerKind::Standard => NominalFeedback::Open,
        _ => NominalFeedback::Passive,
    };

    let mut plant = Plant { model: scenario.model, port, walls: &scenario.walls, human: &scenario.human, dim };
    let mut state = JointState::new(scenario.sim.initial_q.clone(), scenario.sim.initial_qdot.clone())
        .map_err(SimError::invalid)?;
    let (x0, xd0, _) = plant.port_state(&state);
    let mut ctrl = ControllerState::new(x0, xd0, cfg.saturation.clone()).map_err(SimError::invalid)?;
    let mut rng = scenario.noise.map(|n| (n.amplitude, ChaCha8Rng::seed_from_u64(n.seed)));

    let meta = TraceMeta {
        scenario: scenario.name.clone(),
        controller: cfg.kind,
        port,
        dim,
        joint_dof: scenario.model.dof(),
        dt_control: dt_c,
        k: cfg.gains.k().iter().copied().collect(),
        kp: cfg.gains.kp().iter().copied().collect(),
        nominal_damping: cfg.nominal.damping().iter().copied().collect(),
        eps: cfg.gains.eps(),
    };
    let mut trace = Trace { meta, samples: Vec::with_capacity(n_ticks + 1) };
    let mut work = Work::default();
    let mut events = scenario.payload_events.iter().peekable();

    for k in 0..=n_ticks {
        let t = k as f64 * dt_c;

        while let Some(ev) = events.next_if(|e| (e.time / dt_c).round() as usize <= k) {
            let before = plant.energy(&state);
            plant.model = apply_payload_event(&plant.model, ev).map_err(SimError::invalid)?;
            work.events += plant.energy(&state) - before;
        }

        let (x, xdot, jac) = plant.port_state(&state);
        let xdot_meas = match rng.as_mut() {
            Some((a, r)) if *a > 0.0 => xdot.map(|v| v + r.random_range(-*a..=*a)),
            _ => xdot.clone(),
        };
        let f_h = human_force(&scenario.human, dim, t);

        if k > 0 {
            let v_before = ctrl.qdot_n.clone();
            ctrl.advance_nominal(&cfg.nominal, &cfg.gains, &f_h, &x, &xdot_meas, dt_c, feedback);
            let v_mid = (&v_before + &ctrl.qdot_n) * 0.5;
            work.human += dt_c * cfg.gains.k().component_mul(&f_h).dot(&v_mid);
        }
        let out = ctrl.command(&cfg.gains, &x, &xdot_meas);
        let tau_a_joint = match port {
            Port::Joint => out.applied.clone(),
            Port::Task => jac.transpose() * &out.applied,
        };

        let (f_e, task_jac) = plant.contact_force(&state);
        let tau_e_port = match port {
            Port::Joint => task_jac.transpose() * &f_e,
            Port::Task => f_e,
        };
        let inputs = plant.inputs(t, &state, &tau_a_joint);
        let (_, tau_f) = plant
            .model
            .forward_dynamics_with_friction(&state, &inputs.tau_ext)
            .map_err(SimError::invalid)?;
        let e_nr = ctrl.e_nr(&x);
        let energy = Energies {
            plant: plant.energy(&state),
            nominal: nominal_energy(&cfg.nominal, &cfg.gains, &x, &ctrl.qdot_n),
            spring: spring_energy(&cfg.gains, &e_nr),
        };
        let v = |x: &Vector| x.iter().copied().collect::<Vec<_>>();
        trace.samples.push(Sample {
            t,
            q: v(&x),
            qdot: v(&xdot),
            q_n: v(&ctrl.q_n),
            qdot_n: v(&ctrl.qdot_n),
            tau_h: v(&f_h),
            tau_a_raw: v(&out.raw),
            tau_a: v(&out.applied),
            tau_e: v(&tau_e_port),
            tau_f: v(&tau_f),
            e_nr: v(&e_nr),
            energy,
            work,
        });

        if k == n_ticks {
            break;
        }
        for i in 0..substeps {
            let ts = t + i as f64 * dt_p;
            let (next, wh, we) = plant.rk4(ts, dt_p, &state, &tau_a_joint).map_err(|e| SimError::Diverged {
                time: ts,
                reason: e.to_string(),
                trace: Box::new(trace.clone()),
            })?;
            state = next;
            work.human += wh;
            work.environment += we;
            if let Some(reason) = diverged(&state) {
                return Err(SimError::Diverged { time: ts + dt_p, reason, trace: Box::new(trace) });
            }
        }
    }
    Ok(trace)
}

fn trapezoid(trace: &Trace, f: impl Fn(&Sample) -> f64) -> f64 {
    trace.samples.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1]))).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-port energy flows reconstructed from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// ∫τ_hᵀq̇ (trapezoidal)
    pub human_to_plant: f64,
    /// ∫(Kτ_h)ᵀq̇_n (trapezoidal)
    pub human_to_nominal: f64,
    /// ∫(−τ_e)ᵀq̇, exact from the integrator.
    pub to_environment: f64,
    /// Storage jumps from payload events.
    pub events: f64,
    /// Human work plus event jumps, exact from the integrator.
    pub injected: f64,
    /// S(T) − S(0)
    pub stored: f64,
    /// ∫ ė_nrᵀKė_nr + q̇_nᵀK D_n q̇_n + friction (joint ports), trapezoidal.
    pub dissipated: f64,
    /// injected − stored − to_environment − dissipated; ≥ 0 up to
    /// quadrature error, with wall damping and task-port friction included.
    pub residual: f64,
    /// max over t of S(t) − S(0) − injected(t). Dissipativity requires ≤ 0.
    pub max_storage_excess: f64,
}

pub fn energy_ledger(trace: &Trace) -> EnergyLedger {
    let Some(first) = trace.samples.first() else {
        return EnergyLedger::default();
    };
    let last = trace.samples.last().expect("non-empty");
    let m = &trace.meta;
    let s0 = first.energy.storage();
    let injected_at = |s: &Sample| s.work.human + s.work.events;
    let human_to_plant = trapezoid(trace, |s| dot(&s.tau_h, &s.qdot));
    let human_to_nominal = trapezoid(trace, |s| s.tau_h.iter().zip(&s.qdot_n).zip(&m.k).map(|((f, v), k)| k * f * v).sum());
    let edot_sq = |s: &Sample| -> f64 {
        s.qdot_n.iter().zip(&s.qdot).zip(&m.k).map(|((vn, v), k)| k * (vn - v) * (vn - v)).sum()
    };
    let nominal_damping = |s: &Sample| -> f64 {
        s.qdot_n.iter().zip(&m.nominal_damping).zip(&m.k).map(|((v, d), k)| k * d * v * v).sum()
    };
    let friction = |s: &Sample| if m.port == Port::Joint { -dot(&s.tau_f, &s.qdot) } else { 0.0 };
    let dissipated = trapezoid(trace, |s| edot_sq(s) + nominal_damping(s) + friction(s));
    let stored = last.energy.storage() - s0;
    let injected = injected_at(last);
    let max_storage_excess = trace
        .samples
        .iter()
        .map(|s| s.energy.storage() - s0 - injected_at(s))
        .fold(f64::NEG_INFINITY, f64::max);
    EnergyLedger {
        human_to_plant,
        human_to_nominal,
        to_environment: last.work.environment,
        events: last.work.events,
        injected,
        stored,
        dissipated,
        residual: injected - stored - last.work.environment - dissipated,
        max_storage_excess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Segment, SegmentShape};
    use approx::assert_abs_diff_eq;

    fn one(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn scenario_1dof(kind: ControllerKind, human: ForceProfile, duration: f64) -> Scenario {
        Scenario {
            name: "test".into(),
            model: ManipulatorModel::point_mass(5.0),
            controller: ControllerConfig {
                kind,
                nominal: NominalModel::joint_constant(one(1.0), one(2.0)),
                gains: Gains::from_eps(0.05, one(10.0)).unwrap(),
                saturation: None,
                allow_active_damping: false,
            },
            walls: vec![],
            payload_events: vec![],
            human,
            sim: SimConfig::new(duration, JointState::zeros(1)),
            noise: None,
        }
    }

    fn pulse(amplitude: f64, start: f64, end: f64) -> ForceProfile {
        ForceProfile::new(vec![Segment {
            axis: 0,
            start,
            end,
            shape: SegmentShape::Sinusoid { amplitude, frequency_hz: 0.5 / (end - start), phase: 0.0 },
        }])
    }

    #[test]
    fn zero_force_at_rest_gives_zero_trace() {
        let trace = run_scenario(&scenario_1dof(ControllerKind::Passive, ForceProfile::zero(), 1.0)).unwrap();
        assert_eq!(trace.len(), 501);
        for s in &trace.samples {
            assert!(s.q.iter().chain(&s.qdot).chain(&s.q_n).chain(&s.tau_a).chain(&s.e_nr).all(|v| *v == 0.0));
            assert_eq!(s.energy.storage(), 0.0);
        }
        let ledger = energy_ledger(&trace);
        assert_eq!(ledger, EnergyLedger { max_storage_excess: 0.0, ..Default::default() });
    }

    #[test]
    fn runs_are_deterministic() {
        let mut sc = scenario_1dof(ControllerKind::Passive, pulse(5.0, 0.1, 1.0), 2.0);
        sc.noise = Some(VelocityNoise { amplitude: 1e-3, seed: 7 });
        assert_eq!(run_scenario(&sc).unwrap(), run_scenario(&sc).unwrap());
    }

    #[test]
    fn control_output_is_held_between_ticks() {
        // Record count and uniform spacing of the control grid.
        let trace = run_scenario(&scenario_1dof(ControllerKind::Passive, pulse(5.0, 0.1, 1.0), 1.0)).unwrap();
        for w in trace.samples.windows(2) {
            assert_abs_diff_eq!(w[1].t - w[0].t, 0.002, epsilon = 1e-12);
        }
    }

    #[test]
    fn work_energy_theorem_for_free_plant() {
        let model = ManipulatorModel::point_mass(3.0);
        let (s, w) = integrate_open_loop(&model, &pulse(8.0, 0.0, 0.5), JointState::zeros(1), 1e-4, 10_000).unwrap();
        assert_abs_diff_eq!(w, model.kinetic_energy(&s), epsilon = 1e-6);
    }

    #[test]
    fn passive_trace_is_dissipative() {
        let trace = run_scenario(&scenario_1dof(ControllerKind::Passive, pulse(10.0, 0.2, 1.2), 4.0)).unwrap();
        let ledger = energy_ledger(&trace);
        assert!(ledger.max_storage_excess <= 1e-4, "{ledger:?}");
        assert!(ledger.residual > -1e-3 * ledger.injected, "{ledger:?}");
    }

    #[test]
    fn invalid_timing_rejected() {
        let mut sc = scenario_1dof(ControllerKind::Passive, ForceProfile::zero(), 1.0);
        sc.sim.dt_control = 2.5e-4 * 3.3;
        assert!(matches!(run_scenario(&sc), Err(SimError::Validation(_))));
        let mut sc = scenario_1dof(ControllerKind::PassiveTask, ForceProfile::zero(), 1.0);
        sc.sim.duration = 1.0;
        assert!(matches!(run_scenario(&sc), Err(SimError::Validation(_))));
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let mut sc = scenario_1dof(ControllerKind::Passive, pulse(5.0, 0.0, 1.0), 5.0);
        // Absurd gain for the control period: the sampled loop is unstable.
        sc.controller.gains = Gains::from_eps(1e-6, one(10.0)).unwrap();
        match run_scenario(&sc) {
            Err(SimError::Diverged { trace, time, .. }) => {
                assert!(!trace.is_empty());
                assert!(time < 5.0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
