//! Admittance controllers: the standard (open nominal) scheme, the passive
//! scheme that feeds K⁻¹τ_a back into the nominal model, and its task-space
//! form. Also the effective-disturbance diagnostic.

mod transfer;

pub use transfer::{admittance_tf_passive, admittance_tf_standard, passive_port_tf, nominal_admittance, LinearParams, TfError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{JointState, ManipulatorModel, Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("gain {0} must have strictly positive entries")]
    NonPositiveGain(&'static str),
    #[error("eps must be finite and > 0 (got {0})")]
    InvalidEps(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("nominal model: {0}")]
    Nominal(String),
    #[error("saturation limits must be > 0")]
    InvalidSaturation,
}

/// Diagonal controller gains K and K_P. When built from `eps`, K = (1/eps)·I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    k: Vector,
    kp: Vector,
    eps: Option<f64>,
}

fn all_positive(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite() && *x > 0.0)
}

impl Gains {
    pub fn new(k: Vector, kp: Vector) -> Result<Self, ControlError> {
        if k.len() != kp.len() {
            return Err(ControlError::Dimension(format!("K has {} entries, K_P has {}", k.len(), kp.len())));
        }
        if !all_positive(&k) {
            return Err(ControlError::NonPositiveGain("K"));
        }
        if !all_positive(&kp) {
            return Err(ControlError::NonPositiveGain("K_P"));
        }
        Ok(Self { k, kp, eps: None })
    }

    pub fn from_eps(eps: f64, kp: Vector) -> Result<Self, ControlError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(ControlError::InvalidEps(eps));
        }
        let mut g = Self::new(Vector::from_element(kp.len(), 1.0 / eps), kp)?;
        g.eps = Some(eps);
        Ok(g)
    }

    pub fn k(&self) -> &Vector {
        &self.k
    }

    pub fn kp(&self) -> &Vector {
        &self.kp
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn k_min(&self) -> f64 {
        self.k.min()
    }

    /// K⁻¹ applied component-wise.
    pub fn k_inv_mul(&self, v: &Vector) -> Vector {
        v.component_div(&self.k)
    }
}

/// Inertia of the joint-space nominal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NominalInertia {
    /// Constant M_n with C_n = 0.
    Constant(Matrix),
    /// M_n(q), C_n(q, q̇) taken from a rigid-body model (gravity ignored).
    Model(ManipulatorModel),
}

/// User-defined dynamics the closed loop should imitate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NominalModel {
    /// M_n(q) q̈ + (C_n + D_n) q̇ = τ_h
    Joint { inertia: NominalInertia, damping: Vector },
    /// Λ_n p̈ + D_n ṗ = f_h with constant diagonal Λ_n, D_n.
    Task { inertia: Vector, damping: Vector },
}

impl NominalModel {
    pub fn joint_constant(mass_diag: Vector, damping: Vector) -> Self {
        NominalModel::Joint { inertia: NominalInertia::Constant(Matrix::from_diagonal(&mass_diag)), damping }
    }

    pub fn task(inertia: Vector, damping: Vector) -> Self {
        NominalModel::Task { inertia, damping }
    }

    pub fn dim(&self) -> usize {
        self.damping().len()
    }

    pub fn damping(&self) -> &Vector {
        match self {
            NominalModel::Joint { damping, .. } | NominalModel::Task { damping, .. } => damping,
        }
    }

    pub fn is_task(&self) -> bool {
        matches!(self, NominalModel::Task { .. })
    }

    /// Checks M_n > 0 and D_n ≥ 0. `allow_active_damping` skips the damping
    /// sign check (negative-control experiments only).
    pub fn validate(&self, allow_active_damping: bool) -> Result<(), ControlError> {
        let n = self.dim();
        if !allow_active_damping && self.damping().iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(ControlError::Nominal("damping must be finite and >= 0".into()));
        }
        match self {
            NominalModel::Task { inertia, .. } => {
                if inertia.len() != n {
                    return Err(ControlError::Dimension("nominal inertia/damping".into()));
                }
                if !all_positive(inertia) {
                    return Err(ControlError::Nominal("inertia must be > 0".into()));
                }
            }
            NominalModel::Joint { inertia: NominalInertia::Constant(m), .. } => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(ControlError::Dimension("nominal inertia/damping".into()));
                }
                let asym = (m - m.transpose()).abs().max();
                if asym > 1e-12 || m.clone().cholesky().is_none() {
                    return Err(ControlError::Nominal("inertia must be symmetric positive definite".into()));
                }
            }
            NominalModel::Joint { inertia: NominalInertia::Model(model), .. } => {
                model.validate().map_err(|e| ControlError::Nominal(e.to_string()))?;
                if model.dof() != n {
                    return Err(ControlError::Dimension("nominal inertia/damping".into()));
                }
            }
        }
        Ok(())
    }

    /// M_n at configuration `q` (ignored for constant inertias).
    pub fn mass_matrix(&self, q: &Vector) -> Matrix {
        match self {
            NominalModel::Joint { inertia: NominalInertia::Constant(m), .. } => m.clone(),
            NominalModel::Joint { inertia: NominalInertia::Model(model), .. } => model.mass_matrix(q),
            NominalModel::Task { inertia, .. } => Matrix::from_diagonal(inertia),
        }
    }

    pub fn coriolis_matrix(&self, q: &Vector, qdot: &Vector) -> Matrix {
        match self {
            NominalModel::Joint { inertia: NominalInertia::Model(model), .. } => model.coriolis_matrix(q, qdot),
            _ => Matrix::zeros(self.dim(), self.dim()),
        }
    }
}

/// PI output before and after saturation.
#[derive(Debug, Clone, PartialEq)]
pub struct PiOutput {
    pub raw: Vector,
    pub applied: Vector,
}

/// τ_a = K(ė_nr + K_P e_nr), clamped component-wise to ±saturation.
pub fn pi_torque(gains: &Gains, e_nr: &Vector, edot_nr: &Vector, saturation: Option<&Vector>) -> PiOutput {
    let raw = (edot_nr + gains.kp().component_mul(e_nr)).component_mul(gains.k());
    let applied = match saturation {
        Some(limit) => raw.zip_map(limit, |v, l| v.clamp(-l, l)),
        None => raw.clone(),
    };
    PiOutput { raw, applied }
}

/// Whether K⁻¹τ_a is fed back into the nominal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NominalFeedback {
    /// Standard admittance control: the nominal model only sees τ_h.
    Open,
    /// Passive admittance control.
    Passive,
}

/// Internal state of an admittance controller: the nominal trajectory and
/// the last issued (saturated) command.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub q_n: Vector,
    pub qdot_n: Vector,
    pub tau_a_prev: Vector,
    pub saturation: Option<Vector>,
}

impl ControllerState {
    /// Starts the nominal trajectory at the measured state, so e_nr(0) = 0.
    pub fn new(q0: Vector, qdot0: Vector, saturation: Option<Vector>) -> Result<Self, ControlError> {
        if q0.len() != qdot0.len() {
            return Err(ControlError::Dimension("initial position/velocity".into()));
        }
        if let Some(s) = &saturation {
            if s.len() != q0.len() {
                return Err(ControlError::Dimension("saturation".into()));
            }
            if !all_positive(s) {
                return Err(ControlError::InvalidSaturation);
            }
        }
        let n = q0.len();
        Ok(Self { q_n: q0, qdot_n: qdot0, tau_a_prev: Vector::zeros(n), saturation })
    }

    pub fn e_nr(&self, q: &Vector) -> Vector {
        &self.q_n - q
    }

    /// Nominal acceleration M_n⁻¹(−(C_n + D_n) q̇_n + τ_h − [K⁻¹τ_a]).
    fn nominal_acceleration(
        &self,
        nominal: &NominalModel,
        gains: &Gains,
        tau_h: &Vector,
        q: &Vector,
        qdot: &Vector,
        feedback: NominalFeedback,
    ) -> Vector {
        let m_n = nominal.mass_matrix(q);
        let c_n = nominal.coriolis_matrix(q, qdot);
        let mut rhs = tau_h - (c_n * &self.qdot_n + nominal.damping().component_mul(&self.qdot_n));
        if feedback == NominalFeedback::Passive {
            rhs -= gains.k_inv_mul(&self.tau_a_prev);
        }
        match m_n.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => m_n.lu().solve(&rhs).expect("nominal inertia is positive definite by validation"),
        }
    }

    /// Step 1 of the control tick: semi-implicit Euler update of the nominal
    /// model over `dt`, using the previous tick's command for feedback.
    #[allow(clippy::too_many_arguments)]
    pub fn advance_nominal(
        &mut self,
        nominal: &NominalModel,
        gains: &Gains,
        tau_h: &Vector,
        q: &Vector,
        qdot: &Vector,
        dt: f64,
        feedback: NominalFeedback,
    ) {
        let acc = self.nominal_acceleration(nominal, gains, tau_h, q, qdot, feedback);
        self.qdot_n += acc * dt;
        self.q_n += &self.qdot_n * dt;
    }

    /// Step 2: the PI law on the current error. Stores the applied command.
    pub fn command(&mut self, gains: &Gains, q: &Vector, qdot: &Vector) -> PiOutput {
        let out = pi_torque(gains, &(&self.q_n - q), &(&self.qdot_n - qdot), self.saturation.as_ref());
        self.tau_a_prev = out.applied.clone();
        out
    }

    /// Standard admittance controller: open nominal model, then PI.
    pub fn standard_step(
        &mut self,
        nominal: &NominalModel,
        gains: &Gains,
        tau_h: &Vector,
        q: &Vector,
        qdot: &Vector,
        dt: f64,
    ) -> PiOutput {
        self.advance_nominal(nominal, gains, tau_h, q, qdot, dt, NominalFeedback::Open);
        self.command(gains, q, qdot)
    }

    /// Passive admittance controller: nominal model driven by τ_h − K⁻¹τ_a,
    /// then PI.
    pub fn passive_step(
        &mut self,
        nominal: &NominalModel,
        gains: &Gains,
        tau_h: &Vector,
        q: &Vector,
        qdot: &Vector,
        dt: f64,
    ) -> PiOutput {
        self.advance_nominal(nominal, gains, tau_h, q, qdot, dt, NominalFeedback::Passive);
        self.command(gains, q, qdot)
    }

    /// Task-space passive controller. Here q_n/q̇_n hold p_n/ṗ_n. Returns the
    /// Cartesian command and its joint-space image Jᵀf_a.
    #[allow(clippy::too_many_arguments)]
    pub fn task_space_passive_step(
        &mut self,
        nominal: &NominalModel,
        gains: &Gains,
        f_h: &Vector,
        p: &Vector,
        pdot: &Vector,
        jacobian: &Matrix,
        dt: f64,
    ) -> (PiOutput, Vector) {
        debug_assert!(nominal.is_task());
        let out = self.passive_step(nominal, gains, f_h, p, pdot, dt);
        let tau = jacobian.transpose() * &out.applied;
        (out, tau)
    }
}

/// Lumped disturbance the passive controller cancels in the high-gain limit.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDisturbance {
    pub tau_ed: Vector,
}

/// τ_ed = M M_n⁻¹ ( M̃ M⁻¹(−C q̇ + τ_h + τ_d) + C̃ q̇ − D_n q̇ − τ_d ), with
/// M̃ = M − M_n and C̃ = C − C_n. `tau_d` is τ_f + τ_e − g at the same state.
pub fn effective_disturbance(
    model: &ManipulatorModel,
    nominal: &NominalModel,
    state: &JointState,
    tau_h: &Vector,
    tau_d: &Vector,
) -> Result<EffectiveDisturbance, ControlError> {
    if nominal.is_task() {
        return Err(ControlError::Nominal("effective disturbance is defined for joint-space nominal models".into()));
    }
    let (q, qdot) = (&state.q, &state.qdot);
    let m = model.mass_matrix(q);
    let c = model.coriolis_matrix(q, qdot);
    let m_n = nominal.mass_matrix(q);
    let c_n = nominal.coriolis_matrix(q, qdot);
    let m_inv = m.clone().try_inverse().ok_or_else(|| ControlError::Nominal("singular plant inertia".into()))?;
    let m_n_inv = m_n.clone().try_inverse().ok_or_else(|| ControlError::Nominal("singular nominal inertia".into()))?;
    let m_tilde = &m - &m_n;
    let c_tilde = &c - &c_n;
    let inner = &m_tilde * &m_inv * (-(&c * qdot) + tau_h + tau_d) + &c_tilde * qdot
        - nominal.damping().component_mul(qdot)
        - tau_d;
    Ok(EffectiveDisturbance { tau_ed: m * m_n_inv * inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn pi_examples() {
        let g = Gains::new(v(&[10.0]), v(&[10.0])).unwrap();
        assert_eq!(pi_torque(&g, &v(&[0.0]), &v(&[0.0]), None).applied[0], 0.0);
        assert_abs_diff_eq!(pi_torque(&g, &v(&[0.01]), &v(&[0.1]), None).applied[0], 2.0, epsilon = 1e-12);
        let out = pi_torque(&g, &v(&[0.3]), &v(&[1.0]), Some(&v(&[12.5])));
        assert_abs_diff_eq!(out.raw[0], 40.0, epsilon = 1e-12);
        assert_eq!(out.applied[0], 12.5);
        let out = pi_torque(&g, &v(&[-0.3]), &v(&[-1.0]), Some(&v(&[12.5])));
        assert_eq!(out.applied[0], -12.5);
    }

    #[test]
    fn gains_from_eps() {
        let g = Gains::from_eps(0.004, v(&[20.0, 20.0])).unwrap();
        for k in g.k().iter() {
            assert_abs_diff_eq!(k * 0.004, 1.0, epsilon = 1e-12);
        }
        assert!(Gains::from_eps(0.0, v(&[1.0])).is_err());
        assert!(Gains::new(v(&[1.0]), v(&[-1.0])).is_err());
        assert!(Gains::new(v(&[1.0, 2.0]), v(&[1.0])).is_err());
    }

    #[test]
    fn rest_stays_at_rest() {
        let nominal = NominalModel::joint_constant(v(&[1.0]), v(&[1.0]));
        let g = Gains::new(v(&[10.0]), v(&[10.0])).unwrap();
        let mut std_ctrl = ControllerState::new(v(&[0.2]), v(&[0.0]), None).unwrap();
        let mut pas_ctrl = std_ctrl.clone();
        for _ in 0..100 {
            let a = std_ctrl.standard_step(&nominal, &g, &v(&[0.0]), &v(&[0.2]), &v(&[0.0]), 0.002);
            let b = pas_ctrl.passive_step(&nominal, &g, &v(&[0.0]), &v(&[0.2]), &v(&[0.0]), 0.002);
            assert_eq!(a.applied[0], 0.0);
            assert_eq!(b.applied[0], 0.0);
        }
        assert_eq!(std_ctrl.q_n[0], 0.2);
        assert_eq!(pas_ctrl.q_n[0], 0.2);
    }

    #[test]
    fn standard_nominal_drifts_against_a_wall() {
        let nominal = NominalModel::joint_constant(v(&[5.0]), v(&[5.0]));
        let g = Gains::new(v(&[30.0]), v(&[10.0])).unwrap();
        let mut ctrl = ControllerState::new(v(&[0.5]), v(&[0.0]), Some(v(&[12.5]))).unwrap();
        let (q, qd) = (v(&[0.5]), v(&[0.0]));
        let mut prev = 0.0;
        for k in 0..5000 {
            ctrl.standard_step(&nominal, &g, &v(&[5.0]), &q, &qd, 0.002);
            if k % 500 == 499 {
                assert!(ctrl.q_n[0] - 0.5 > prev);
                prev = ctrl.q_n[0] - 0.5;
            }
        }
        // q̇_n approaches τ_h / D_n = 1 m/s while q_n keeps increasing.
        assert_abs_diff_eq!(ctrl.qdot_n[0], 1.0, epsilon = 1e-3);
    }

    #[test]
    fn passive_nominal_settles_against_a_wall() {
        // q pinned at q_e = 0.5, τ_h = 5, K_P = 10: q_n → q_e + τ_h / K_P.
        let nominal = NominalModel::joint_constant(v(&[1.0]), v(&[1.0]));
        let g = Gains::new(v(&[30.0]), v(&[10.0])).unwrap();
        let mut ctrl = ControllerState::new(v(&[0.5]), v(&[0.0]), None).unwrap();
        for _ in 0..10_000 {
            ctrl.passive_step(&nominal, &g, &v(&[5.0]), &v(&[0.5]), &v(&[0.0]), 0.002);
        }
        assert!((ctrl.q_n[0] - 1.0).abs() < 0.02);
        let pi = pi_torque(&g, &ctrl.e_nr(&v(&[0.5])), &ctrl.qdot_n, None);
        assert_abs_diff_eq!(g.k_inv_mul(&pi.raw)[0], 5.0, epsilon = 1e-6);
    }

    #[test]
    fn open_feedback_reproduces_standard_step() {
        let nominal = NominalModel::joint_constant(v(&[2.0]), v(&[3.0]));
        let g = Gains::new(v(&[15.0]), v(&[10.0])).unwrap();
        let mut a = ControllerState::new(v(&[0.0]), v(&[0.0]), None).unwrap();
        let mut b = a.clone();
        for k in 0..300 {
            let t = k as f64 * 0.002;
            let tau_h = v(&[4.0 * (3.0 * t).sin()]);
            let q = v(&[0.1 * t]);
            let qd = v(&[0.1]);
            let out_a = a.standard_step(&nominal, &g, &tau_h, &q, &qd, 0.002);
            b.advance_nominal(&nominal, &g, &tau_h, &q, &qd, 0.002, NominalFeedback::Open);
            let out_b = b.command(&g, &q, &qd);
            assert_eq!(out_a, out_b);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn task_step_with_identity_jacobian_matches_joint_step() {
        let joint = NominalModel::joint_constant(v(&[5.0]), v(&[20.0]));
        let task = NominalModel::task(v(&[5.0]), v(&[20.0]));
        let g = Gains::from_eps(0.01, v(&[20.0])).unwrap();
        let mut a = ControllerState::new(v(&[0.0]), v(&[0.0]), None).unwrap();
        let mut b = a.clone();
        let j = Matrix::identity(1, 1);
        for k in 0..500 {
            let t = k as f64 * 0.002;
            let f = v(&[10.0 * t.sin()]);
            let p = v(&[0.05 * t * t]);
            let pd = v(&[0.1 * t]);
            let ja = a.passive_step(&joint, &g, &f, &p, &pd, 0.002);
            let (fb, tau) = b.task_space_passive_step(&task, &g, &f, &p, &pd, &j, 0.002);
            assert_eq!(ja.applied, fb.applied);
            assert_eq!(tau, fb.applied);
        }
    }

    #[test]
    fn matched_model_disturbance_is_nominal_damping() {
        let model = ManipulatorModel::point_mass(3.0);
        let nominal = NominalModel::joint_constant(v(&[3.0]), v(&[2.0]));
        let state = JointState::new(v(&[0.1]), v(&[0.7])).unwrap();
        let ed = effective_disturbance(&model, &nominal, &state, &v(&[4.0]), &v(&[0.0])).unwrap();
        assert_abs_diff_eq!(ed.tau_ed[0], -2.0 * 0.7, epsilon = 1e-12);
    }
}
