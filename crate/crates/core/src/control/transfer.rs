//! Linear 1-DoF admittance transfer functions from τ_h to q̇.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TfError {
    #[error("transfer function evaluated at a pole (s = {0})")]
    Pole(Complex64),
}

/// Scalar plant/nominal/gain parameters: plant mass M, nominal N(s) = M_n s + D_n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub plant_mass: f64,
    pub nominal_mass: f64,
    pub nominal_damping: f64,
    pub k: f64,
    pub kp: f64,
}

impl LinearParams {
    pub fn with_k(self, k: f64) -> Self {
        Self { k, ..self }
    }

    fn nominal(&self, s: Complex64) -> Complex64 {
        s * self.nominal_mass + self.nominal_damping
    }
}

fn ratio(num: Complex64, den: Complex64, scale: f64, s: Complex64) -> Result<Complex64, TfError> {
    if den.norm() <= 1e-14 * scale.max(1.0) {
        return Err(TfError::Pole(s));
    }
    Ok(num / den)
}

/// 1/N(s), the target admittance.
pub fn nominal_admittance(p: &LinearParams, s: Complex64) -> Result<Complex64, TfError> {
    let n = p.nominal(s);
    ratio(Complex64::new(1.0, 0.0), n, 1.0, s)
}

/// Standard admittance control (nominal model without τ_a feedback):
/// (N s + K s + K K_P) / (M N s² + K N s + K K_P N).
pub fn admittance_tf_standard(p: &LinearParams, s: Complex64) -> Result<Complex64, TfError> {
    let n = p.nominal(s);
    let (m, k, kp) = (p.plant_mass, p.k, p.kp);
    let num = n * s + s * k + k * kp;
    let den = n * s * s * m + n * s * k + n * k * kp;
    let scale = m.abs() * n.norm() * s.norm_sqr() + k.abs() * n.norm() * (s.norm() + kp.abs());
    ratio(num, den, scale, s)
}

/// Passive admittance control, with K⁻¹τ_a = (s + K_P)E fed into the
/// nominal model:
/// (N s + (K + 1) s + K K_P + K_P) / (M N s² + M s² + K N s + M K_P s + K K_P N).
pub fn admittance_tf_passive(p: &LinearParams, s: Complex64) -> Result<Complex64, TfError> {
    let n = p.nominal(s);
    let (m, k, kp) = (p.plant_mass, p.k, p.kp);
    let num = n * s + s * (k + 1.0) + k * kp + kp;
    let den = n * s * s * m + s * s * m + n * s * k + s * m * kp + n * k * kp;
    let scale = m.abs() * (n.norm() + 1.0) * s.norm_sqr() + k.abs() * n.norm() * (s.norm() + kp.abs())
        + m.abs() * kp.abs() * s.norm();
    ratio(num, den, scale, s)
}

/// Passive controller seen from the port that its storage function pairs
/// with τ_h: τ_h → q̇ + K q̇_n. Unlike τ_h → q̇ this map is positive real.
/// (N s + K M s² + (K + 1)²(s + K_P)) / (M N s² + M s (s + K_P) + K N (s + K_P)).
pub fn passive_port_tf(p: &LinearParams, s: Complex64) -> Result<Complex64, TfError> {
    let n = p.nominal(s);
    let (m, k, kp) = (p.plant_mass, p.k, p.kp);
    let a = s + kp;
    let num = n * s + s * s * (k * m) + a * ((k + 1.0) * (k + 1.0));
    let den = n * s * s * m + s * a * m + n * a * k;
    let scale = m.abs() * n.norm() * s.norm_sqr() + m.abs() * s.norm() * a.norm() + k.abs() * n.norm() * a.norm();
    ratio(num, den, scale, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(w: f64) -> Complex64 {
        Complex64::new(0.0, w)
    }

    /// Closed loop solved directly from the block diagram in the Laplace
    /// domain: plant M s² Q = K(s + K_P)(Q_n − Q) + T, nominal
    /// N s Q_n = T − f·(s + K_P)(Q_n − Q) with f = 0 (standard) or 1 (passive).
    fn block_diagram_oracle(p: &LinearParams, s: Complex64, feedback: f64) -> Complex64 {
        let n = s * p.nominal_mass + p.nominal_damping;
        let a = s + p.kp;
        // [ M s² + K a      −K a        ] [Q  ]   [1]
        // [ −f a            N s + f a   ] [Q_n] = [1]
        let a11 = s * s * p.plant_mass + a * p.k;
        let a12 = -a * p.k;
        let a21 = -a * feedback;
        let a22 = n * s + a * feedback;
        let det = a11 * a22 - a12 * a21;
        let q = (a22 - a12) / det;
        q * s
    }

    #[test]
    fn standard_matches_block_diagram() {
        let p = LinearParams { plant_mass: 2.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 10.0, kp: 5.0 };
        for w in [0.1, 0.5, 1.0, 2.0, 7.0] {
            let tf = admittance_tf_standard(&p, j(w)).unwrap();
            assert!((tf - block_diagram_oracle(&p, j(w), 0.0)).norm() < 1e-12);
        }
        // Frozen from the oracle at s = j.
        let tf = admittance_tf_standard(&p, j(1.0)).unwrap();
        assert!((tf - Complex64::new(0.5199667221297837, -0.5041597337770383)).norm() < 1e-12);
    }

    #[test]
    fn passive_matches_block_diagram() {
        for d_n in [0.5, 1.0, 2.0] {
            let p = LinearParams { plant_mass: 5.0, nominal_mass: 1.0, nominal_damping: d_n, k: 30.0, kp: 10.0 };
            for w in [0.1, 0.5, 1.0, 2.0, 7.0] {
                let tf = admittance_tf_passive(&p, j(w)).unwrap();
                assert!((tf - block_diagram_oracle(&p, j(w), 1.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_gain_is_the_bare_plant() {
        let p = LinearParams { plant_mass: 2.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 0.0, kp: 5.0 };
        for w in [0.3, 1.0, 4.0] {
            let plant = Complex64::new(1.0, 0.0) / (j(w) * 2.0);
            assert!((admittance_tf_standard(&p, j(w)).unwrap() - plant).norm() < 1e-12);
            assert!((admittance_tf_passive(&p, j(w)).unwrap() - plant).norm() < 1e-12);
        }
    }

    #[test]
    fn high_gain_limit_is_nominal() {
        let p = LinearParams { plant_mass: 1.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 1e6, kp: 10.0 };
        let target = Complex64::new(1.0, 0.0) / Complex64::new(1.0, 1.0);
        assert!((admittance_tf_standard(&p, j(1.0)).unwrap() - target).norm() < 1e-4);
        assert!((admittance_tf_passive(&p, j(1.0)).unwrap() - target).norm() < 1e-4);
    }

    /// With D_n = 1 the passive numerator reduces to the form
    /// N s + (K + D_n) s + K K_P + K_P.
    #[test]
    fn passive_numerator_unit_damping_form() {
        let p = LinearParams { plant_mass: 5.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 30.0, kp: 10.0 };
        let s = j(1.3);
        let n = s * p.nominal_mass + p.nominal_damping;
        let num = n * s + s * (p.k + p.nominal_damping) + p.k * p.kp + p.kp;
        let den = n * s * s * p.plant_mass + s * s * p.plant_mass + n * s * p.k + s * p.plant_mass * p.kp
            + n * p.k * p.kp;
        assert!((admittance_tf_passive(&p, s).unwrap() - num / den).norm() < 1e-14);
    }

    #[test]
    fn port_map_is_positive_real_on_samples() {
        let p = LinearParams { plant_mass: 5.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 30.0, kp: 10.0 };
        for i in 0..=400 {
            let w = 10f64.powf(-2.0 + 4.0 * i as f64 / 400.0);
            assert!(passive_port_tf(&p, j(w)).unwrap().re >= 0.0, "w = {w}");
        }
    }

    #[test]
    fn port_map_matches_block_diagram() {
        let p = LinearParams { plant_mass: 5.0, nominal_mass: 1.0, nominal_damping: 0.7, k: 30.0, kp: 10.0 };
        for w in [0.1, 1.0, 8.7] {
            let s = j(w);
            let n = s * p.nominal_mass + p.nominal_damping;
            let a = s + p.kp;
            let (a11, a12, a21, a22) = (s * s * p.plant_mass + a * p.k, -a * p.k, -a, n * s + a);
            let det = a11 * a22 - a12 * a21;
            let oracle = s * ((a22 - a12) + (a11 - a21) * p.k) / det;
            assert!((passive_port_tf(&p, s).unwrap() - oracle).norm() < 1e-12);
        }
    }

    /// τ_h → q̇ alone is not positive real for these parameters; only the
    /// K-weighted port above is. Frozen from a 4001-point numpy sweep.
    #[test]
    fn plant_velocity_map_is_not_positive_real() {
        let p = LinearParams { plant_mass: 5.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 30.0, kp: 10.0 };
        let tf = admittance_tf_passive(&p, j(8.729713683881121)).unwrap();
        assert!((tf - Complex64::new(-0.0854020850212083, -0.1013623781507909)).norm() < 1e-12);
    }

    #[test]
    fn pole_is_signalled() {
        let p = LinearParams { plant_mass: 1.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 0.0, kp: 1.0 };
        assert!(admittance_tf_standard(&p, Complex64::new(0.0, 0.0)).is_err());
        assert!(nominal_admittance(&p, Complex64::new(-1.0, 0.0)).is_err());
    }
}
