//! Exogenous ports: unilateral walls, scripted human forces and payload
//! attach/detach events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ManipulatorModel, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("wall: {0}")]
    Wall(String),
    #[error("force profile: {0}")]
    Profile(String),
    #[error("payload event at t = {time} s: {reason}")]
    Payload { time: f64, reason: String },
}

/// Which side of `position` the wall occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallSide {
    /// The wall fills p > position and pushes in the −p direction.
    Above,
    /// The wall fills p < position and pushes in the +p direction.
    Below,
}

impl WallSide {
    fn sign(self) -> f64 {
        match self {
            WallSide::Above => 1.0,
            WallSide::Below => -1.0,
        }
    }
}

/// Unilateral Kelvin–Voigt wall acting on one coordinate of the interaction
/// port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub axis: usize,
    pub position: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub side: WallSide,
}

impl Wall {
    pub const DEFAULT_STIFFNESS: f64 = 1e5;
    pub const DEFAULT_DAMPING: f64 = 500.0;

    pub fn validate(&self, dim: usize) -> Result<(), EnvironmentError> {
        if self.axis >= dim {
            return Err(EnvironmentError::Wall(format!("axis {} out of range for dimension {dim}", self.axis)));
        }
        if !(self.stiffness.is_finite() && self.stiffness > 0.0) {
            return Err(EnvironmentError::Wall("stiffness must be > 0".into()));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(EnvironmentError::Wall("damping must be >= 0".into()));
        }
        if !self.position.is_finite() {
            return Err(EnvironmentError::Wall("position must be finite".into()));
        }
        Ok(())
    }

    pub fn penetration(&self, p: f64) -> f64 {
        (self.side.sign() * (p - self.position)).max(0.0)
    }

    /// Elastic energy ½kδ² currently stored in the contact.
    pub fn elastic_energy(&self, p: f64) -> f64 {
        let d = self.penetration(p);
        0.5 * self.stiffness * d * d
    }
}

/// Contact force on the body along the wall axis. The wall never pulls.
pub fn wall_force(wall: &Wall, p: f64, pdot: f64) -> f64 {
    let s = wall.side.sign();
    let delta = wall.penetration(p);
    if delta <= 0.0 {
        return 0.0;
    }
    // Magnitude along the penetration direction; only compressive values act.
    let push = wall.stiffness * delta + wall.damping * s * pdot;
    -s * push.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SegmentShape {
    /// amplitude · sin(2π f (t − t_start) + phase)
    Sinusoid { amplitude: f64, frequency_hz: f64, phase: f64 },
    Constant { value: f64 },
    /// Linear from `from` at t_start to `to` at t_end.
    Ramp { from: f64, to: f64 },
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub axis: usize,
    pub start: f64,
    pub end: f64,
    pub shape: SegmentShape,
}

impl Segment {
    fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    fn value(&self, t: f64) -> f64 {
        let tau = t - self.start;
        match self.shape {
            SegmentShape::Sinusoid { amplitude, frequency_hz, phase } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency_hz * tau + phase).sin()
            }
            SegmentShape::Constant { value } => value,
            SegmentShape::Ramp { from, to } => from + (to - from) * tau / (self.end - self.start),
            SegmentShape::Zero => 0.0,
        }
    }
}

/// Piecewise scripted human force, per axis, zero outside all segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceProfile {
    pub segments: Vec<Segment>,
}

impl ForceProfile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn validate(&self, dim: usize) -> Result<(), EnvironmentError> {
        for s in &self.segments {
            if s.axis >= dim {
                return Err(EnvironmentError::Profile(format!("axis {} out of range for dimension {dim}", s.axis)));
            }
            if !(s.start.is_finite() && s.end.is_finite() && s.start >= 0.0 && s.end > s.start) {
                return Err(EnvironmentError::Profile(format!(
                    "segment [{}, {}) must satisfy 0 <= start < end",
                    s.start, s.end
                )));
            }
            let finite = match s.shape {
                SegmentShape::Sinusoid { amplitude, frequency_hz, phase } => {
                    amplitude.is_finite() && frequency_hz.is_finite() && phase.is_finite()
                }
                SegmentShape::Constant { value } => value.is_finite(),
                SegmentShape::Ramp { from, to } => from.is_finite() && to.is_finite(),
                SegmentShape::Zero => true,
            };
            if !finite {
                return Err(EnvironmentError::Profile("segment parameters must be finite".into()));
            }
        }
        for (i, a) in self.segments.iter().enumerate() {
            for b in &self.segments[i + 1..] {
                if a.axis == b.axis && a.start < b.end && b.start < a.end {
                    return Err(EnvironmentError::Profile(format!(
                        "segments [{}, {}) and [{}, {}) overlap on axis {}",
                        a.start, a.end, b.start, b.end, a.axis
                    )));
                }
            }
        }
        Ok(())
    }

    /// Time after which the profile is identically zero.
    pub fn support_end(&self) -> f64 {
        self.segments.iter().map(|s| s.end).fold(0.0, f64::max)
    }
}

pub fn human_force(profile: &ForceProfile, dim: usize, t: f64) -> Vector {
    let mut f = Vector::zeros(dim);
    for s in profile.segments.iter().filter(|s| s.contains(t)) {
        f[s.axis] += s.value(t);
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadAction {
    Attach,
    Detach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadEvent {
    pub time: f64,
    pub action: PayloadAction,
    pub mass: f64,
}

/// Mass jump at the end effector. Velocity continuity is the caller's
/// concern: the joint state is left untouched.
pub fn apply_payload_event(model: &ManipulatorModel, event: &PayloadEvent) -> Result<ManipulatorModel, EnvironmentError> {
    let err = |reason: &str| EnvironmentError::Payload { time: event.time, reason: reason.into() };
    if !(event.mass.is_finite() && event.mass > 0.0) {
        return Err(err("mass must be > 0"));
    }
    let mut out = *model;
    match event.action {
        PayloadAction::Attach => {
            if model.payload.is_some() {
                return Err(err("attach while a payload is already attached"));
            }
            out.payload = Some(crate::dynamics::Payload { mass: event.mass });
        }
        PayloadAction::Detach => {
            if model.payload.is_none() {
                return Err(err("detach without an attached payload"));
            }
            out.payload = None;
        }
    }
    Ok(out)
}

/// Checks a whole event list against an initial model: time-ordered,
/// alternating attach/detach.
pub fn validate_payload_events(model: &ManipulatorModel, events: &[PayloadEvent]) -> Result<(), EnvironmentError> {
    let mut m = *model;
    let mut last = f64::NEG_INFINITY;
    for e in events {
        if !(e.time.is_finite() && e.time >= 0.0) {
            return Err(EnvironmentError::Payload { time: e.time, reason: "time must be >= 0".into() });
        }
        if e.time < last {
            return Err(EnvironmentError::Payload { time: e.time, reason: "events are not time-ordered".into() });
        }
        last = e.time;
        m = apply_payload_event(&m, e)?;
    }
    Ok(())
}
