//! Metrics over simulated traces and the structural identity checks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    admittance_tf_passive, admittance_tf_standard, effective_disturbance, nominal_admittance, Gains, LinearParams,
    NominalModel, TfError,
};
use crate::control::NominalInertia;
use crate::dynamics::{JointState, ManipulatorModel, Matrix, PlantKind, Vector};
use crate::environment::{Wall, WallSide};
use crate::sim::{energy_ledger, ControllerKind, EnergyLedger, Port, Scenario, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("scaling fit needs at least 2 points with distinct positive eps and positive errors")]
    ScalingPoints,
    #[error("zero input energy: L2 gain is undefined")]
    ZeroInput,
    #[error("no wall contact found in trace")]
    NoContact,
    #[error("no force reversal after contact")]
    NoReversal,
    #[error("{0}")]
    Unsupported(String),
    #[error("riccati check: {0}")]
    Riccati(String),
    #[error(transparent)]
    Tf(#[from] TfError),
}

/// sup_t |e_nr[axis](t)|
pub fn inf_norm_error(trace: &Trace, axis: usize) -> f64 {
    inf_norm_error_between(trace, axis, f64::NEG_INFINITY, f64::INFINITY)
}

/// sup |e_nr[axis]| over samples with t0 ≤ t ≤ t1.
pub fn inf_norm_error_between(trace: &Trace, axis: usize, t0: f64, t1: f64) -> f64 {
    trace
        .samples
        .iter()
        .filter(|s| s.t >= t0 && s.t <= t1)
        .map(|s| s.e_nr[axis].abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// err_i / err_{i+1}, in the order the points were given.
    pub ratios: Vec<f64>,
    /// Least-squares slope of log(err) against log(eps).
    pub slope: f64,
}

pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit, AnalysisError> {
    if points.len() < 2 || points.iter().any(|&(e, r)| !(e > 0.0 && r > 0.0 && e.is_finite() && r.is_finite())) {
        return Err(AnalysisError::ScalingPoints);
    }
    let mut eps: Vec<f64> = points.iter().map(|p| p.0).collect();
    eps.sort_by(f64::total_cmp);
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(AnalysisError::ScalingPoints);
    }
    let ratios = points.windows(2).map(|w| w[0].1 / w[1].1).collect();
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ScalingFit { ratios, slope: sxy / sxx })
}

fn trapezoid(trace: &Trace, t_end: f64, f: impl Fn(&crate::sim::Sample) -> f64) -> f64 {
    trace
        .samples
        .windows(2)
        .take_while(|w| w[1].t <= t_end + 1e-12)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1])))
        .sum()
}

fn l2_ratio_until(trace: &Trace, t_end: f64) -> Result<f64, AnalysisError> {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let input = trapezoid(trace, t_end, |s| sq(&s.tau_h));
    if input.is_nan() || input <= 0.0 {
        return Err(AnalysisError::ZeroInput);
    }
    let output = trapezoid(trace, t_end, |s| sq(&s.qdot) + sq(&s.qdot_n));
    Ok(output / input)
}

/// ∫‖v‖² / ∫‖τ_h‖² with v = [q̇; q̇_n].
pub fn l2_gain_estimate(trace: &Trace) -> Result<f64, AnalysisError> {
    l2_ratio_until(trace, f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2GainCheck {
    pub ratio: f64,
    /// Same ratio over the first half of the trace.
    pub ratio_half: f64,
    /// The ratio keeps growing after the input has ended, which a finite
    /// L2 gain rules out.
    pub growing: bool,
}

/// L2 gain plus a growth test. Meaningful when the input has ended before
/// the trace midpoint.
pub fn l2_gain_check(trace: &Trace) -> Result<L2GainCheck, AnalysisError> {
    let ratio = l2_gain_estimate(trace)?;
    let ratio_half = l2_ratio_until(trace, 0.5 * trace.duration())?;
    let growing = !ratio.is_finite() || ratio > 1.5 * ratio_half;
    Ok(L2GainCheck { ratio, ratio_half, growing })
}

/// ∫τ_aᵀė_nr − K_min ∫ė_nrᵀė_nr. Non-negative (up to quadrature) when e_nr(0) = 0.
pub fn pi_passivity_margin(trace: &Trace) -> f64 {
    let k_min = trace.meta.k.iter().copied().fold(f64::INFINITY, f64::min);
    let edot = |s: &crate::sim::Sample| -> Vec<f64> { s.qdot_n.iter().zip(&s.qdot).map(|(a, b)| a - b).collect() };
    let supplied = trapezoid(trace, f64::INFINITY, |s| s.tau_a.iter().zip(edot(s)).map(|(t, e)| t * e).sum());
    let output = trapezoid(trace, f64::INFINITY, |s| edot(s).iter().map(|e| e * e).sum());
    supplied - k_min * output
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayer {
    /// First time after which ‖τ_a − τ_ed‖ stays within 5% of ‖τ_ed‖_∞.
    /// `None` if it never does.
    pub settling_time: Option<f64>,
    /// sup over t ≥ skip of ‖τ_a − τ_ed‖ / ‖τ_ed‖_∞.
    pub residual: f64,
    pub tau_ed_inf: f64,
}

pub const BOUNDARY_LAYER_BAND: f64 = 0.05;

/// Compares the applied command with the effective disturbance along a
/// joint-port trace. `model` must be the plant the trace was run on.
/// Fixed residual window start, so residuals at different eps compare.
pub const BOUNDARY_LAYER_SKIP: f64 = 0.05;

pub fn boundary_layer_check(
    trace: &Trace,
    model: &ManipulatorModel,
    nominal: &NominalModel,
    skip: f64,
) -> Result<BoundaryLayer, AnalysisError> {
    if trace.meta.port != Port::Joint {
        return Err(AnalysisError::Unsupported("boundary-layer check needs a joint-port trace".into()));
    }
    let v = |x: &[f64]| Vector::from_row_slice(x);
    let mut errs = Vec::with_capacity(trace.len());
    let mut tau_ed_inf: f64 = 0.0;
    for s in &trace.samples {
        let state = JointState { q: v(&s.q), qdot: v(&s.qdot) };
        let tau_d = v(&s.tau_f) + v(&s.tau_e) - model.gravity_torque(&state.q);
        let ed = effective_disturbance(model, nominal, &state, &v(&s.tau_h), &tau_d)
            .map_err(|e| AnalysisError::Unsupported(e.to_string()))?;
        tau_ed_inf = tau_ed_inf.max(ed.tau_ed.amax());
        errs.push((s.t, (v(&s.tau_a) - ed.tau_ed).amax()));
    }
    if tau_ed_inf == 0.0 {
        let residual = errs.iter().filter(|e| e.0 >= skip).map(|e| e.1).fold(0.0, f64::max);
        return Ok(BoundaryLayer { settling_time: Some(0.0), residual, tau_ed_inf });
    }
    let band = BOUNDARY_LAYER_BAND * tau_ed_inf;
    let settling_time = match errs.iter().rposition(|e| e.1 > band) {
        None => Some(errs.first().map_or(0.0, |e| e.0)),
        Some(i) if i + 1 < errs.len() => Some(errs[i + 1].0),
        Some(_) => None,
    };
    let residual = errs.iter().filter(|e| e.0 >= skip).map(|e| e.1).fold(0.0, f64::max) / tau_ed_inf;
    Ok(BoundaryLayer { settling_time, residual, tau_ed_inf })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickingMetrics {
    pub contact_start: f64,
    pub reversal_time: f64,
    /// max |q_n − q| on the wall axis between first contact and reversal.
    pub max_drift: f64,
    /// Time from reversal until the plant is `RELEASE_CLEARANCE` clear of
    /// the wall. Infinite if it never gets clear.
    pub release_delay: f64,
    /// q_n on the wall axis at the last sample before reversal.
    pub qn_steady: f64,
    /// Plant position on the wall axis at the same sample.
    pub q_contact: f64,
    /// Drift at reversal exceeds 1.5× the drift halfway through the hold.
    pub drift_growing: bool,
}

pub const RELEASE_CLEARANCE: f64 = 1e-3;

/// Contact episodes closer than this are merged (impact bounces).
pub const CONTACT_MERGE_GAP: f64 = 0.2;

/// Contact is plant penetration. The hold is the longest contact episode;
/// reversal is the first sample after the human starts pushing where the human force on
/// the wall axis points away from the wall.
pub fn sticking_metrics(trace: &Trace, wall: &Wall) -> Result<StickingMetrics, AnalysisError> {
    if trace.meta.port == Port::Joint && trace.meta.joint_dof != 1 {
        return Err(AnalysisError::Unsupported("sticking metrics need task coordinates or a 1-DoF plant".into()));
    }
    let a = wall.axis;
    if a >= trace.meta.dim {
        return Err(AnalysisError::Unsupported(format!("wall axis {a} out of range")));
    }
    // +1 when the wall pushes toward −p.
    let into = match wall.side {
        WallSide::Above => 1.0,
        WallSide::Below => -1.0,
    };
    let samples = &trace.samples;
    let mut episodes: Vec<(usize, usize)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if wall.penetration(s.q[a]) <= 0.0 {
            continue;
        }
        match episodes.last_mut() {
            Some(last) if s.t - samples[last.1].t <= CONTACT_MERGE_GAP => last.1 = i,
            _ => episodes.push((i, i)),
        }
    }
    let &(start, end) = episodes
        .iter()
        .max_by(|x, y| (samples[x.1].t - samples[x.0].t).total_cmp(&(samples[y.1].t - samples[y.0].t)))
        .ok_or(AnalysisError::NoContact)?;
    let push = samples[start..=end].iter().position(|s| s.tau_h[a] * into > 0.0).ok_or(AnalysisError::NoReversal)? + start;
    let rev = samples[push..]
        .iter()
        .position(|s| s.tau_h[a] * into < 0.0)
        .map(|i| i + push)
        .filter(|&i| i <= end + 1)
        .ok_or(AnalysisError::NoReversal)?;
    let max_drift = samples[start..rev].iter().map(|s| (s.q_n[a] - s.q[a]).abs()).fold(0.0, f64::max);
    let hold = &samples[rev.saturating_sub(1).max(start)];
    let drift = |s: &crate::sim::Sample| (s.q_n[a] - s.q[a]).abs();
    let drift_growing = drift(hold) > 1.5 * drift(&samples[(start + rev) / 2]);
    let release_delay = samples[rev..]
        .iter()
        .find(|s| into * (wall.position - s.q[a]) >= RELEASE_CLEARANCE)
        .map_or(f64::INFINITY, |s| s.t - samples[rev].t);
    Ok(StickingMetrics {
        contact_start: samples[start].t,
        reversal_time: samples[rev].t,
        max_drift,
        release_delay,
        qn_steady: hold.q_n[a],
        q_contact: hold.q[a],
        drift_growing,
    })
}

/// x_nr = [e_nr; ė_nr] quadratic form matrices for the performance bound.
fn riccati_parts(
    model: &ManipulatorModel,
    nominal: &NominalModel,
    gains: &Gains,
    q: &Vector,
    qdot: &Vector,
) -> Result<(Matrix, Matrix, Matrix, Matrix, Matrix, f64), AnalysisError> {
    let n = model.dof();
    if nominal.is_task() || nominal.dim() != n || gains.dim() != n || q.len() != n || qdot.len() != n {
        return Err(AnalysisError::Riccati("needs a joint-space nominal model and gains matching the plant".into()));
    }
    let eps = gains.eps().ok_or_else(|| AnalysisError::Riccati("gains must be built from eps".into()))?;
    if gains.kp().iter().any(|&k| k <= 1.0) {
        return Err(AnalysisError::Riccati("requires K_P > I".into()));
    }
    let m = model.mass_matrix(q);
    let c = model.coriolis_matrix(q, qdot);
    let m_dot = &c + c.transpose();
    let kp = Matrix::from_diagonal(gains.kp());
    let d = Matrix::from_diagonal(nominal.damping());
    let m_inv = m.clone().cholesky().ok_or_else(|| AnalysisError::Riccati("singular inertia".into()))?.inverse();
    let cd = &c + &d;
    let eye = Matrix::identity(n, n);

    let block = |a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix| {
        let mut out = Matrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(a);
        out.view_mut((0, n), (n, n)).copy_from(b);
        out.view_mut((n, 0), (n, n)).copy_from(c);
        out.view_mut((n, n), (n, n)).copy_from(d);
        out
    };
    let zero = Matrix::zeros(n, n);
    let p = block(&(&kp * &m * &kp + &kp / eps), &(&kp * &m), &(&m * &kp), &m);
    let p_dot = block(&(&kp * &m_dot * &kp), &(&kp * &m_dot), &(&m_dot * &kp), &m_dot);
    let a = block(&zero, &eye, &(-(&m_inv * &cd * &kp)), &(-(&m_inv * &cd) - &kp));
    let mut b = Matrix::zeros(2 * n, n);
    b.view_mut((n, 0), (n, n)).copy_from(&m_inv);
    let qm = block(&(&kp * &kp / eps), &zero, &zero, &(&eye / eps));
    Ok((p, p_dot, a, b, qm, eps))
}

/// Ṗ + AᵀP + PA − (1/ε)PBBᵀP + Q at one state. Equals −2ΦᵀD_nΦ with
/// Φ = [K_P  I], so it vanishes exactly when D_n = 0.
pub fn riccati_lhs(
    model: &ManipulatorModel,
    nominal: &NominalModel,
    gains: &Gains,
    q: &Vector,
    qdot: &Vector,
) -> Result<Matrix, AnalysisError> {
    riccati_lhs_with_q_scale(model, nominal, gains, q, qdot, 1.0)
}

/// As `riccati_lhs` with Q multiplied by `q_scale`, for negative controls.
pub fn riccati_lhs_with_q_scale(
    model: &ManipulatorModel,
    nominal: &NominalModel,
    gains: &Gains,
    q: &Vector,
    qdot: &Vector,
    q_scale: f64,
) -> Result<Matrix, AnalysisError> {
    let (p, p_dot, a, b, qm, eps) = riccati_parts(model, nominal, gains, q, qdot)?;
    let pb = &p * &b;
    Ok(p_dot + a.transpose() * &p + &p * a - &pb * pb.transpose() / eps + qm * q_scale)
}

/// Frobenius norm of `riccati_lhs`.
pub fn riccati_residual(
    model: &ManipulatorModel,
    nominal: &NominalModel,
    gains: &Gains,
    q: &Vector,
    qdot: &Vector,
) -> Result<f64, AnalysisError> {
    Ok(riccati_lhs(model, nominal, gains, q, qdot)?.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TfKind {
    Standard,
    Passive,
}

pub fn admittance_tf(kind: TfKind, params: &LinearParams, s: Complex64) -> Result<Complex64, TfError> {
    match kind {
        TfKind::Standard => admittance_tf_standard(params, s),
        TfKind::Passive => admittance_tf_passive(params, s),
    }
}

/// sup over `omegas` of |TF(jω; K) − 1/N(jω)|, one entry per K.
pub fn tf_deviation(kind: TfKind, params: &LinearParams, ks: &[f64], omegas: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    ks.iter()
        .map(|&k| {
            let p = params.with_k(k);
            omegas.iter().try_fold(0.0f64, |acc, &w| {
                let s = Complex64::new(0.0, w);
                Ok(acc.max((admittance_tf(kind, &p, s)? - nominal_admittance(&p, s)?).norm()))
            })
        })
        .collect()
}

/// Empirical q̇/τ_h at `omega` by correlating both signals with e^{−jωt}
/// over the whole number of periods that fit after `settle`.
pub fn frequency_response(trace: &Trace, axis: usize, omega: f64, settle: f64) -> Result<Complex64, AnalysisError> {
    let period = std::f64::consts::TAU / omega;
    let periods = ((trace.duration() - settle) / period).floor();
    if periods < 1.0 {
        return Err(AnalysisError::Unsupported("trace too short for one full period after settling".into()));
    }
    let t_end = settle + periods * period;
    let window: Vec<_> = trace.samples.iter().filter(|s| s.t >= settle && s.t < t_end).collect();
    let mut out = Complex64::new(0.0, 0.0);
    let mut inp = Complex64::new(0.0, 0.0);
    for s in window {
        let ph = Complex64::from_polar(1.0, -omega * s.t);
        out += ph * s.qdot[axis];
        inp += ph * s.tau_h[axis];
    }
    if inp.norm() == 0.0 {
        return Err(AnalysisError::ZeroInput);
    }
    Ok(out / inp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AnalysisReport {
    pub scenario: String,
    pub controller: String,
    pub inf_norm_e: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub scaling_ratios: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scaling_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l2_gain_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l2_gain_growing: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub boundary_layer: Option<BoundaryLayer>,
    /// Fraction of ticks where saturation clipped the command.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub saturated_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sticking: Vec<StickingMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub riccati_residual: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tf_deviation: Vec<f64>,
    pub energy: EnergyLedger,
}

impl AnalysisReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are plain numbers and strings")
    }
}

/// Everything that can be read off a single trace. Sticking metrics are
/// computed for each wall the trace actually touched.
pub fn analyze_trace(trace: &Trace, walls: &[Wall]) -> AnalysisReport {
    let l2 = l2_gain_check(trace).ok();
    AnalysisReport {
        scenario: trace.meta.scenario.clone(),
        controller: trace.meta.controller.name().to_string(),
        inf_norm_e: (0..trace.meta.dim).map(|i| inf_norm_error(trace, i)).collect(),
        l2_gain_ratio: l2.map(|c| c.ratio),
        l2_gain_growing: l2.map(|c| c.growing),
        sticking: walls.iter().filter_map(|w| sticking_metrics(trace, w).ok()).collect(),
        energy: energy_ledger(trace),
        ..Default::default()
    }
}

/// Fraction of samples where any axis of the command was clipped.
pub fn saturated_fraction(trace: &Trace) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let clipped = trace.samples.iter().filter(|s| s.tau_a_raw.iter().zip(&s.tau_a).any(|(r, a)| r != a)).count();
    clipped as f64 / trace.len() as f64
}

/// Trace metrics plus the ones that need the scenario: sticking per wall,
/// saturation, the boundary layer for joint-port passive runs and the
/// linear model-shaping deviation for frictionless point masses.
pub fn scenario_report(scenario: &Scenario, trace: &Trace) -> AnalysisReport {
    let mut report = analyze_trace(trace, &scenario.walls);
    let c = &scenario.controller;
    if c.saturation.is_some() {
        report.saturated_fraction = Some(saturated_fraction(trace));
    }
    if c.kind == ControllerKind::Passive && scenario.payload_events.is_empty() && c.gains.eps().is_some() {
        let skip = BOUNDARY_LAYER_SKIP.min(0.5 * trace.duration());
        report.boundary_layer = boundary_layer_check(trace, &scenario.model, &c.nominal, skip).ok();
    }
    if let (PlantKind::PointMass1D(pm), NominalModel::Joint { inertia: NominalInertia::Constant(m_n), damping }) =
        (scenario.model.kind, &c.nominal)
    {
        if pm.viscous == 0.0 && pm.coulomb == 0.0 && pm.stiction == 0.0 && scenario.walls.is_empty() {
            let kind = if c.kind == ControllerKind::Standard { TfKind::Standard } else { TfKind::Passive };
            let params = LinearParams {
                plant_mass: scenario.model.mass_matrix(&Vector::zeros(1))[(0, 0)],
                nominal_mass: m_n[(0, 0)],
                nominal_damping: damping[0],
                k: c.gains.k()[0],
                kp: c.gains.kp()[0],
            };
            let omegas: Vec<f64> = (0..=40).map(|i| 10f64.powf(-1.0 + i as f64 / 20.0)).collect();
            report.tf_deviation = tf_deviation(kind, &params, &[params.k], &omegas).unwrap_or_default();
        }
    }
    report
}
