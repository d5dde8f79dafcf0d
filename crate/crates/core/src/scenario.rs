//! `.scenario` files: TOML with units in the key names.
//!
//! ```toml
//! name = "demo"
//!
//! [plant]
//! kind = "point-mass"
//! mass_kg = 6.0
//!
//! [controller]
//! kind = "passive"
//! nominal_inertia = 2.0
//! nominal_damping = 10.0
//! eps = 0.067
//! kp_per_s = 10.0
//!
//! [[human.segments]]
//! kind = "sinusoid"
//! start_s = 0.0
//! end_s = 6.0
//! amplitude = 10.0
//! frequency_hz = 0.5
//!
//! [sim]
//! duration_s = 6.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{Gains, NominalInertia, NominalModel};
use crate::dynamics::{ManipulatorModel, Matrix, PlanarArm2R, PointMass1D, Vector};
use crate::environment::{ForceProfile, PayloadAction, PayloadEvent, Segment, SegmentShape, Wall, WallSide};
use crate::sim::{ControllerConfig, ControllerKind, Port, Scenario, SimConfig, SimError, VelocityNoise};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown sweep parameter `{0}` (expected eps, K, K_P, M_n or wall.stiffness)")]
    UnknownParam(String),
}

impl From<SimError> for ScenarioError {
    fn from(e: SimError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

/// A scalar broadcast to every axis, or one value per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axes {
    One(f64),
    Many(Vec<f64>),
}

impl Axes {
    fn resolve(&self, dim: usize, what: &str) -> Result<Vector, ScenarioError> {
        match self {
            Axes::One(x) => Ok(Vector::from_element(dim, *x)),
            Axes::Many(v) if v.len() == dim => Ok(Vector::from_column_slice(v)),
            Axes::Many(v) => Err(ScenarioError::Invalid(format!("{what}: expected {dim} values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum PlantSection {
    #[serde(rename = "point-mass")]
    PointMass {
        mass_kg: f64,
        #[serde(default)]
        viscous_n_s_per_m: f64,
        #[serde(default)]
        coulomb_n: f64,
        #[serde(default)]
        stiction_n: f64,
        #[serde(default)]
        payload_kg: f64,
    },
    #[serde(rename = "planar-2r")]
    Planar2R {
        link_mass_kg: [f64; 2],
        link_length_m: [f64; 2],
        /// Defaults to mid-link.
        com_offset_m: Option<[f64; 2]>,
        #[serde(default)]
        link_inertia_kg_m2: [f64; 2],
        #[serde(default)]
        viscous_n_m_s_per_rad: [f64; 2],
        #[serde(default)]
        coulomb_n_m: [f64; 2],
        #[serde(default)]
        stiction_n_m: [f64; 2],
        #[serde(default = "default_gravity")]
        gravity_m_per_s2: f64,
        #[serde(default)]
        payload_kg: f64,
    },
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    /// Diagonal of M_n (kg or kg·m²) or of Λ_n (kg) for task-space control.
    pub nominal_inertia: Axes,
    /// Diagonal of D_n.
    pub nominal_damping: Axes,
    /// K = I/eps. Exactly one of `eps` and `gain_k` must be given.
    pub eps: Option<f64>,
    pub gain_k: Option<Axes>,
    pub kp_per_s: Axes,
    pub saturation: Option<Axes>,
    #[serde(default)]
    pub allow_negative_damping: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSection {
    #[serde(default)]
    pub axis: usize,
    pub position_m: f64,
    #[serde(default = "default_stiffness")]
    pub stiffness_n_per_m: f64,
    #[serde(default = "default_damping")]
    pub damping_n_s_per_m: f64,
    pub side: WallSide,
}

fn default_stiffness() -> f64 {
    Wall::DEFAULT_STIFFNESS
}

fn default_damping() -> f64 {
    Wall::DEFAULT_DAMPING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSection {
    pub time_s: f64,
    pub action: PayloadAction,
    /// Required for attach; a detach drops whatever is attached.
    pub mass_kg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default)]
    pub walls: Vec<WallSection>,
    #[serde(default)]
    pub payload_events: Vec<PayloadSection>,
}

/// Force (N) or torque (N·m) segments in port coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SegmentSection {
    Sinusoid {
        #[serde(default)]
        axis: usize,
        start_s: f64,
        end_s: f64,
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    Constant {
        #[serde(default)]
        axis: usize,
        start_s: f64,
        end_s: f64,
        value: f64,
    },
    Ramp {
        #[serde(default)]
        axis: usize,
        start_s: f64,
        end_s: f64,
        from: f64,
        to: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSection {
    #[serde(default)]
    pub segments: Vec<SegmentSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Half-width of uniform noise on measured velocity.
    pub velocity_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: f64,
    #[serde(default = "default_dt_physics")]
    pub dt_physics_s: f64,
    #[serde(default = "default_dt_control")]
    pub dt_control_s: f64,
    pub initial_q: Option<Vec<f64>>,
    pub initial_qdot: Option<Vec<f64>>,
    pub noise: Option<NoiseSection>,
}

fn default_dt_physics() -> f64 {
    SimConfig::DEFAULT_DT_PHYSICS
}

fn default_dt_control() -> f64 {
    SimConfig::DEFAULT_DT_CONTROL
}

/// File names relative to the output directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub trace: Option<String>,
    pub report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub human: HumanSection,
    pub sim: SimSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

/// A validated scenario plus where its outputs should go.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub outputs: OutputsSection,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    fn model(&self) -> ManipulatorModel {
        let model = match &self.plant {
            PlantSection::PointMass { mass_kg, viscous_n_s_per_m, coulomb_n, stiction_n, .. } => {
                ManipulatorModel { kind: crate::dynamics::PlantKind::PointMass1D(PointMass1D {
                    mass: *mass_kg,
                    viscous: *viscous_n_s_per_m,
                    coulomb: *coulomb_n,
                    stiction: *stiction_n,
                }), payload: None }
            }
            PlantSection::Planar2R {
                link_mass_kg,
                link_length_m,
                com_offset_m,
                link_inertia_kg_m2,
                viscous_n_m_s_per_rad,
                coulomb_n_m,
                stiction_n_m,
                gravity_m_per_s2,
                ..
            } => ManipulatorModel::planar_arm(PlanarArm2R {
                link_mass: *link_mass_kg,
                link_length: *link_length_m,
                com_offset: com_offset_m.unwrap_or([link_length_m[0] / 2.0, link_length_m[1] / 2.0]),
                link_inertia: *link_inertia_kg_m2,
                viscous: *viscous_n_m_s_per_rad,
                coulomb: *coulomb_n_m,
                stiction: *stiction_n_m,
                gravity: *gravity_m_per_s2,
            }),
        };
        let payload = match &self.plant {
            PlantSection::PointMass { payload_kg, .. } | PlantSection::Planar2R { payload_kg, .. } => *payload_kg,
        };
        if payload != 0.0 {
            model.with_payload(payload)
        } else {
            model
        }
    }

    pub fn build(&self) -> Result<LoadedScenario, ScenarioError> {
        let model = self.model();
        model.validate().map_err(|e| ScenarioError::Invalid(format!("plant: {e}")))?;
        let c = &self.controller;
        let dim = match c.kind.port() {
            Port::Joint => model.dof(),
            Port::Task => model.task_dim(),
        };
        let kp = c.kp_per_s.resolve(dim, "kp_per_s")?;
        let gains = match (c.eps, &c.gain_k) {
            (Some(eps), None) => Gains::from_eps(eps, kp),
            (None, Some(k)) => Gains::new(k.resolve(dim, "gain_k")?, kp),
            _ => return Err(ScenarioError::Invalid("controller: give exactly one of `eps` and `gain_k`".into())),
        }
        .map_err(|e| ScenarioError::Invalid(format!("controller: {e}")))?;
        let inertia = c.nominal_inertia.resolve(dim, "nominal_inertia")?;
        let damping = c.nominal_damping.resolve(dim, "nominal_damping")?;
        let nominal = match c.kind.port() {
            Port::Joint => NominalModel::joint_constant(inertia, damping),
            Port::Task => NominalModel::task(inertia, damping),
        };
        let saturation = c.saturation.as_ref().map(|s| s.resolve(dim, "saturation")).transpose()?;

        let walls = self
            .environment
            .walls
            .iter()
            .map(|w| Wall {
                axis: w.axis,
                position: w.position_m,
                stiffness: w.stiffness_n_per_m,
                damping: w.damping_n_s_per_m,
                side: w.side,
            })
            .collect();

        let mut attached = model.payload.map(|p| p.mass);
        let mut payload_events = Vec::new();
        for e in &self.environment.payload_events {
            let mass = match (e.action, e.mass_kg) {
                (PayloadAction::Attach, Some(m)) => {
                    attached = Some(m);
                    m
                }
                (PayloadAction::Attach, None) => {
                    return Err(ScenarioError::Invalid(format!("payload attach at t = {} s needs mass_kg", e.time_s)))
                }
                (PayloadAction::Detach, m) => m.or(attached.take()).unwrap_or(0.0),
            };
            payload_events.push(PayloadEvent { time: e.time_s, action: e.action, mass });
        }

        let segments = self
            .human
            .segments
            .iter()
            .map(|s| match *s {
                SegmentSection::Sinusoid { axis, start_s, end_s, amplitude, frequency_hz, phase_rad } => Segment {
                    axis,
                    start: start_s,
                    end: end_s,
                    shape: SegmentShape::Sinusoid { amplitude, frequency_hz, phase: phase_rad },
                },
                SegmentSection::Constant { axis, start_s, end_s, value } => {
                    Segment { axis, start: start_s, end: end_s, shape: SegmentShape::Constant { value } }
                }
                SegmentSection::Ramp { axis, start_s, end_s, from, to } => {
                    Segment { axis, start: start_s, end: end_s, shape: SegmentShape::Ramp { from, to } }
                }
            })
            .collect();

        let dof = model.dof();
        let vec_or_zero = |v: &Option<Vec<f64>>, what: &str| match v {
            None => Ok(Vector::zeros(dof)),
            Some(v) if v.len() == dof => Ok(Vector::from_column_slice(v)),
            Some(v) => Err(ScenarioError::Invalid(format!("sim.{what}: expected {dof} values, got {}", v.len()))),
        };
        let sim = SimConfig {
            dt_physics: self.sim.dt_physics_s,
            dt_control: self.sim.dt_control_s,
            duration: self.sim.duration_s,
            initial_q: vec_or_zero(&self.sim.initial_q, "initial_q")?,
            initial_qdot: vec_or_zero(&self.sim.initial_qdot, "initial_qdot")?,
        };
        let scenario = Scenario {
            name: self.name.clone(),
            model,
            controller: ControllerConfig {
                kind: c.kind,
                nominal,
                gains,
                saturation,
                allow_active_damping: c.allow_negative_damping,
            },
            walls,
            payload_events,
            human: ForceProfile::new(segments),
            sim,
            noise: self.sim.noise.as_ref().map(|n| VelocityNoise { amplitude: n.velocity_amplitude, seed: n.seed }),
        };
        scenario.validate()?;
        Ok(LoadedScenario { scenario, outputs: self.outputs.clone() })
    }
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario, ScenarioError> {
    ScenarioFile::parse(text)?.build()
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eps,
    K,
    Kp,
    NominalInertia,
    WallStiffness,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eps => "eps",
            SweepParam::K => "K",
            SweepParam::Kp => "K_P",
            SweepParam::NominalInertia => "M_n",
            SweepParam::WallStiffness => "wall.stiffness",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eps" => Ok(SweepParam::Eps),
            "K" => Ok(SweepParam::K),
            "K_P" => Ok(SweepParam::Kp),
            "M_n" => Ok(SweepParam::NominalInertia),
            "wall.stiffness" => Ok(SweepParam::WallStiffness),
            other => Err(ScenarioError::UnknownParam(other.to_string())),
        }
    }
}

/// Sets one parameter on every axis (or every wall), then revalidates.
pub fn set_param(scenario: &Scenario, param: SweepParam, value: f64) -> Result<Scenario, ScenarioError> {
    let mut out = scenario.clone();
    let c = &mut out.controller;
    let dim = c.gains.dim();
    let invalid = |e: crate::control::ControlError| ScenarioError::Invalid(e.to_string());
    match param {
        SweepParam::Eps => c.gains = Gains::from_eps(value, c.gains.kp().clone()).map_err(invalid)?,
        SweepParam::K => c.gains = Gains::new(Vector::from_element(dim, value), c.gains.kp().clone()).map_err(invalid)?,
        SweepParam::Kp => {
            let kp = Vector::from_element(dim, value);
            c.gains = match c.gains.eps() {
                Some(eps) => Gains::from_eps(eps, kp),
                None => Gains::new(c.gains.k().clone(), kp),
            }
            .map_err(invalid)?;
        }
        SweepParam::NominalInertia => {
            let diag = Vector::from_element(dim, value);
            c.nominal = match &c.nominal {
                NominalModel::Task { damping, .. } => NominalModel::task(diag, damping.clone()),
                NominalModel::Joint { damping, .. } => NominalModel::Joint {
                    inertia: NominalInertia::Constant(Matrix::from_diagonal(&diag)),
                    damping: damping.clone(),
                },
            };
        }
        SweepParam::WallStiffness => {
            if out.walls.is_empty() {
                return Err(ScenarioError::Invalid("wall.stiffness sweep on a scenario without walls".into()));
            }
            for w in &mut out.walls {
                w.stiffness = value;
            }
        }
    }
    out.validate()?;
    Ok(out)
}

/// Same scenario under a different controller kind. Switching between
/// joint and task ports is rejected.
pub fn with_controller(scenario: &Scenario, kind: ControllerKind) -> Result<Scenario, ScenarioError> {
    let mut out = scenario.clone();
    out.controller.kind = kind;
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
name = "demo"

[plant]
kind = "point-mass"
mass_kg = 1.0
payload_kg = 5.0

[controller]
kind = "passive"
nominal_inertia = 2.0
nominal_damping = 10.0
eps = 0.067
kp_per_s = 10.0

[[environment.walls]]
position_m = 0.5
side = "above"

[[human.segments]]
kind = "sinusoid"
start_s = 0.0
end_s = 6.0
amplitude = 10.0
frequency_hz = 0.5

[sim]
duration_s = 6.0
"#;

    #[test]
    fn parses_demo() {
        let s = parse_scenario(DEMO).unwrap().scenario;
        assert_eq!(s.model.payload_mass(), 5.0);
        assert_eq!(s.controller.gains.eps(), Some(0.067));
        assert_eq!(s.walls[0].stiffness, 1e5);
        assert_eq!(s.sim.dt_control, 2e-3);
        assert_eq!(s.human.segments.len(), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        for (from, to) in [
            ("mass_kg = 1.0", "mass_kg = 1.0\ncolour = 3"),
            ("kp_per_s = 10.0", "kp_per_s = 10.0\nkd = 1.0"),
            ("frequency_hz = 0.5", "frequency_hz = 0.5\nduty = 1"),
            ("duration_s = 6.0", "duration_s = 6.0\nsolver = \"rk45\""),
        ] {
            let text = DEMO.replace(from, to);
            assert!(matches!(parse_scenario(&text), Err(ScenarioError::Parse(_))), "{to}");
        }
    }

    #[test]
    fn parse_error_has_location() {
        let err = parse_scenario("name = \"x\"\n[plant\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn gain_spec_must_be_unique() {
        let text = DEMO.replace("eps = 0.067", "eps = 0.067\ngain_k = 15.0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
        let text = DEMO.replace("eps = 0.067", "");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn validation_errors_surface() {
        let text = DEMO.replace("mass_kg = 1.0", "mass_kg = -1.0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
        let text = DEMO.replace("nominal_damping = 10.0", "nominal_damping = -1.0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
        let text = DEMO.replace("nominal_damping = 10.0", "nominal_damping = -1.0\nallow_negative_damping = true");
        assert!(parse_scenario(&text).is_ok());
    }

    #[test]
    fn sweep_params() {
        let s = parse_scenario(DEMO).unwrap().scenario;
        let e = set_param(&s, "eps".parse().unwrap(), 0.033).unwrap();
        assert!((e.controller.gains.k()[0] - 1.0 / 0.033).abs() < 1e-9);
        let kp = set_param(&s, "K_P".parse().unwrap(), 20.0).unwrap();
        assert_eq!(kp.controller.gains.eps(), Some(0.067));
        assert_eq!(kp.controller.gains.kp()[0], 20.0);
        let m = set_param(&s, "M_n".parse().unwrap(), 0.1).unwrap();
        assert_eq!(m.controller.nominal.mass_matrix(&Vector::zeros(1))[(0, 0)], 0.1);
        let w = set_param(&s, "wall.stiffness".parse().unwrap(), 2e4).unwrap();
        assert_eq!(w.walls[0].stiffness, 2e4);
        assert!(set_param(&s, SweepParam::Eps, -1.0).is_err());
        assert!("zeta".parse::<SweepParam>().is_err());
    }

    #[test]
    fn detach_mass_is_inferred() {
        let text = DEMO.replace(
            "[[human.segments]]",
            "[[environment.payload_events]]\ntime_s = 1.0\naction = \"detach\"\n\n[[human.segments]]",
        );
        let s = parse_scenario(&text).unwrap().scenario;
        assert_eq!(s.payload_events[0].mass, 5.0);
    }
}
