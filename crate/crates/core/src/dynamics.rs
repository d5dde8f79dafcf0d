//! Rigid-body plant models: inertia, Coriolis (Christoffel construction),
//! gravity, friction and forward dynamics for a 1-DoF point mass and a
//! planar two-link arm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Velocity deadband below which a joint is treated as stuck by the
/// stiction model (units of q̇).
pub const STICTION_VELOCITY_EPS: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0} must be > 0 (got {1})")]
    NonPositive(&'static str, f64),
    #[error("{0} must be >= 0 (got {1})")]
    Negative(&'static str, f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("state dimension {got} does not match model dof {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("inertia matrix is singular")]
    SingularInertia,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: Vector,
    pub qdot: Vector,
}

impl JointState {
    pub fn new(q: Vector, qdot: Vector) -> Result<Self, ModelError> {
        if q.len() != qdot.len() {
            return Err(ModelError::Dimension { expected: q.len(), got: qdot.len() });
        }
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("joint state"));
        }
        Ok(Self { q, qdot })
    }

    pub fn zeros(dof: usize) -> Self {
        Self { q: Vector::zeros(dof), qdot: Vector::zeros(dof) }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// End-effector position, velocity and Jacobian at a joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub p: Vector,
    pub pdot: Vector,
    pub jacobian: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass1D {
    /// kg
    pub mass: f64,
    /// N·s/m
    pub viscous: f64,
    /// N
    pub coulomb: f64,
    /// Breakaway threshold, N.
    pub stiction: f64,
}

/// Planar two-link arm with point-mass links at configurable CoM offsets
/// plus a rotational inertia per link. Gravity acts along -y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm2R {
    pub link_mass: [f64; 2],
    pub link_length: [f64; 2],
    pub com_offset: [f64; 2],
    pub link_inertia: [f64; 2],
    pub viscous: [f64; 2],
    pub coulomb: [f64; 2],
    pub stiction: [f64; 2],
    pub gravity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlantKind {
    PointMass1D(PointMass1D),
    PlanarArm2R(PlanarArm2R),
}

/// A point mass rigidly attached at the end effector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorModel {
    pub kind: PlantKind,
    pub payload: Option<Payload>,
}

fn check_pos(name: &'static str, v: f64) -> Result<(), ModelError> {
    if !v.is_finite() {
        Err(ModelError::NonFinite(name))
    } else if v <= 0.0 {
        Err(ModelError::NonPositive(name, v))
    } else {
        Ok(())
    }
}

fn check_nonneg(name: &'static str, v: f64) -> Result<(), ModelError> {
    if !v.is_finite() {
        Err(ModelError::NonFinite(name))
    } else if v < 0.0 {
        Err(ModelError::Negative(name, v))
    } else {
        Ok(())
    }
}

impl ManipulatorModel {
    pub fn point_mass(mass: f64) -> Self {
        Self {
            kind: PlantKind::PointMass1D(PointMass1D { mass, viscous: 0.0, coulomb: 0.0, stiction: 0.0 }),
            payload: None,
        }
    }

    pub fn planar_arm(params: PlanarArm2R) -> Self {
        Self { kind: PlantKind::PlanarArm2R(params), payload: None }
    }

    pub fn with_payload(mut self, mass: f64) -> Self {
        self.payload = Some(Payload { mass });
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match &self.kind {
            PlantKind::PointMass1D(p) => {
                check_pos("mass", p.mass)?;
                check_nonneg("viscous friction", p.viscous)?;
                check_nonneg("coulomb friction", p.coulomb)?;
                check_nonneg("stiction threshold", p.stiction)?;
            }
            PlantKind::PlanarArm2R(a) => {
                for i in 0..2 {
                    check_pos("link mass", a.link_mass[i])?;
                    check_pos("link length", a.link_length[i])?;
                    check_pos("com offset", a.com_offset[i])?;
                    check_nonneg("link inertia", a.link_inertia[i])?;
                    check_nonneg("joint viscous friction", a.viscous[i])?;
                    check_nonneg("joint coulomb friction", a.coulomb[i])?;
                    check_nonneg("joint stiction threshold", a.stiction[i])?;
                }
                check_nonneg("gravity", a.gravity)?;
            }
        }
        if let Some(p) = self.payload {
            check_nonneg("payload mass", p.mass)?;
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        match self.kind {
            PlantKind::PointMass1D(_) => 1,
            PlantKind::PlanarArm2R(_) => 2,
        }
    }

    /// Dimension of the end-effector coordinate.
    pub fn task_dim(&self) -> usize {
        self.dof()
    }

    pub fn payload_mass(&self) -> f64 {
        self.payload.map_or(0.0, |p| p.mass)
    }

    fn check_dim(&self, v: &Vector) {
        assert_eq!(v.len(), self.dof(), "vector dimension does not match model dof");
    }

    pub fn mass_matrix(&self, q: &Vector) -> Matrix {
        self.check_dim(q);
        let mp = self.payload_mass();
        match &self.kind {
            PlantKind::PointMass1D(p) => Matrix::from_element(1, 1, p.mass + mp),
            PlantKind::PlanarArm2R(a) => {
                let (m1, m2) = (a.link_mass[0], a.link_mass[1]);
                let (l1, l2) = (a.link_length[0], a.link_length[1]);
                let (r1, r2) = (a.com_offset[0], a.com_offset[1]);
                let (i1, i2) = (a.link_inertia[0], a.link_inertia[1]);
                let c2 = q[1].cos();
                let b = m2 * l1 * r2 + mp * l1 * l2;
                let m22 = i2 + m2 * r2 * r2 + mp * l2 * l2;
                let m11 = i1 + m1 * r1 * r1 + m2 * l1 * l1 + mp * l1 * l1 + m22 + 2.0 * b * c2;
                let m12 = m22 + b * c2;
                Matrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
            }
        }
    }

    /// ∂M/∂q_k for each joint k.
    pub fn mass_matrix_partials(&self, q: &Vector) -> Vec<Matrix> {
        self.check_dim(q);
        match &self.kind {
            PlantKind::PointMass1D(_) => vec![Matrix::zeros(1, 1)],
            PlantKind::PlanarArm2R(a) => {
                let b = a.link_mass[1] * a.link_length[0] * a.com_offset[1]
                    + self.payload_mass() * a.link_length[0] * a.link_length[1];
                let d = -b * q[1].sin();
                vec![Matrix::zeros(2, 2), Matrix::from_row_slice(2, 2, &[2.0 * d, d, d, 0.0])]
            }
        }
    }

    /// Ṁ along the velocity q̇.
    pub fn mass_matrix_rate(&self, q: &Vector, qdot: &Vector) -> Matrix {
        let n = self.dof();
        self.mass_matrix_partials(q)
            .iter()
            .zip(qdot.iter())
            .fold(Matrix::zeros(n, n), |acc, (dm, v)| acc + dm * *v)
    }

    /// Coriolis/centrifugal matrix from Christoffel symbols of the first kind,
    /// so that Ṁ − 2C is skew-symmetric.
    pub fn coriolis_matrix(&self, q: &Vector, qdot: &Vector) -> Matrix {
        self.check_dim(qdot);
        let n = self.dof();
        let dm = self.mass_matrix_partials(q);
        let mut c = Matrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * qdot[i];
                }
                c[(k, j)] = s;
            }
        }
        c
    }

    pub fn potential_energy(&self, q: &Vector) -> f64 {
        self.check_dim(q);
        match &self.kind {
            PlantKind::PointMass1D(_) => 0.0,
            PlantKind::PlanarArm2R(a) => {
                let mp = self.payload_mass();
                let (s1, s12) = (q[0].sin(), (q[0] + q[1]).sin());
                let h1 = a.link_mass[0] * a.com_offset[0] + (a.link_mass[1] + mp) * a.link_length[0];
                let h2 = a.link_mass[1] * a.com_offset[1] + mp * a.link_length[1];
                a.gravity * (h1 * s1 + h2 * s12)
            }
        }
    }

    /// g(q) = ∂U/∂q. Enters the equations of motion with a minus sign.
    pub fn gravity_torque(&self, q: &Vector) -> Vector {
        self.check_dim(q);
        match &self.kind {
            PlantKind::PointMass1D(_) => Vector::zeros(1),
            PlantKind::PlanarArm2R(a) => {
                let mp = self.payload_mass();
                let (c1, c12) = (q[0].cos(), (q[0] + q[1]).cos());
                let h1 = a.link_mass[0] * a.com_offset[0] + (a.link_mass[1] + mp) * a.link_length[0];
                let h2 = a.link_mass[1] * a.com_offset[1] + mp * a.link_length[1];
                Vector::from_vec(vec![a.gravity * (h1 * c1 + h2 * c12), a.gravity * h2 * c12])
            }
        }
    }

    fn friction_params(&self, i: usize) -> (f64, f64, f64) {
        match &self.kind {
            PlantKind::PointMass1D(p) => (p.viscous, p.coulomb, p.stiction),
            PlantKind::PlanarArm2R(a) => (a.viscous[i], a.coulomb[i], a.stiction[i]),
        }
    }

    /// Viscous + Coulomb friction for moving joints; for joints inside the
    /// velocity deadband the stiction clamp cancels `tau_net` up to the
    /// breakaway threshold.
    pub fn friction_torque(&self, qdot: &Vector, tau_net: &Vector) -> Vector {
        self.check_dim(qdot);
        self.check_dim(tau_net);
        Vector::from_fn(self.dof(), |i, _| {
            let (b, fc, fs) = self.friction_params(i);
            let v = qdot[i];
            if v.abs() < STICTION_VELOCITY_EPS {
                -tau_net[i].clamp(-fs, fs) - b * v
            } else {
                -b * v - fc * v.signum()
            }
        })
    }

    /// Joint acceleration for the total external torque τ_a + τ_h + τ_e.
    /// Friction and gravity are added internally.
    pub fn forward_dynamics(&self, state: &JointState, tau_total: &Vector) -> Result<Vector, ModelError> {
        Ok(self.forward_dynamics_with_friction(state, tau_total)?.0)
    }

    /// As [`forward_dynamics`](Self::forward_dynamics), also returning τ_f.
    pub fn forward_dynamics_with_friction(
        &self,
        state: &JointState,
        tau_total: &Vector,
    ) -> Result<(Vector, Vector), ModelError> {
        self.check_dim(tau_total);
        let m = self.mass_matrix(&state.q);
        let bias = self.coriolis_matrix(&state.q, &state.qdot) * &state.qdot + self.gravity_torque(&state.q);
        let tau_net = tau_total - &bias;
        let tau_f = self.friction_torque(&state.qdot, &tau_net);
        let rhs = tau_net + &tau_f;
        let qddot = m.cholesky().ok_or(ModelError::SingularInertia)?.solve(&rhs);
        Ok((qddot, tau_f))
    }

    pub fn kinetic_energy(&self, state: &JointState) -> f64 {
        0.5 * state.qdot.dot(&(self.mass_matrix(&state.q) * &state.qdot))
    }

    pub fn task_position(&self, q: &Vector) -> Vector {
        self.check_dim(q);
        match &self.kind {
            PlantKind::PointMass1D(_) => q.clone(),
            PlantKind::PlanarArm2R(a) => {
                let (l1, l2) = (a.link_length[0], a.link_length[1]);
                let q12 = q[0] + q[1];
                Vector::from_vec(vec![l1 * q[0].cos() + l2 * q12.cos(), l1 * q[0].sin() + l2 * q12.sin()])
            }
        }
    }

    pub fn jacobian(&self, q: &Vector) -> Matrix {
        self.check_dim(q);
        match &self.kind {
            PlantKind::PointMass1D(_) => Matrix::identity(1, 1),
            PlantKind::PlanarArm2R(a) => {
                let (l1, l2) = (a.link_length[0], a.link_length[1]);
                let (s1, c1) = q[0].sin_cos();
                let (s12, c12) = (q[0] + q[1]).sin_cos();
                Matrix::from_row_slice(2, 2, &[-l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12])
            }
        }
    }

    pub fn task_state(&self, state: &JointState) -> TaskState {
        let jacobian = self.jacobian(&state.q);
        TaskState { p: self.task_position(&state.q), pdot: &jacobian * &state.qdot, jacobian }
    }
}
