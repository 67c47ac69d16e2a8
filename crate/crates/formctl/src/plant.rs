//! Continuous-time agent and leader dynamics: the planar two-link arm in
//! joint space and the self-oscillating leader.
//!
//! Arm model (point masses at the link ends, `c2 = cos q2`, `s2 = sin q2`,
//! `c1 = cos q1`, `c12 = cos(q1 + q2)`):
//!
//! ```text
//! M = [ (m1+m2) r1^2 + m2 r2^2 + 2 m2 r1 r2 c2    m2 r2^2 + m2 r1 r2 c2 ]
//!     [ m2 r2^2 + m2 r1 r2 c2                     m2 r2^2              ]
//! V = [ -m2 r1 r2 s2 qd2    -m2 r1 r2 s2 (qd1 + qd2) ]
//!     [  m2 r1 r2 s2 qd1     0                       ]
//! G = [ ((m1+m2) r1 c1 + m2 r2 c12) g,   m2 r2 c12 g ]
//! ```
//!
//! which satisfies `M = M^T > 0` and the skew symmetry of `dM/dt - 2V`.
//! The joint equation is `M(q) qdd + V(q, qd) qd + G(q) + w = tau`, i.e. the
//! disturbance enters pre-multiplied by `M^-1` in the acceleration.

use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("inertia matrix is numerically singular (condition number {cond:.3e})")]
    NumericalSingularity { cond: f64 },
    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Position/velocity pair of one agent (joint angles and rates for the arm).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

impl AgentState {
    pub fn new(p: DVector<f64>, v: DVector<f64>) -> Self {
        assert_eq!(p.len(), v.len(), "position/velocity dimension mismatch");
        Self { p, v }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// Leader position/velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderState {
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

impl LeaderState {
    pub fn new(p: DVector<f64>, v: DVector<f64>) -> Self {
        assert_eq!(p.len(), v.len(), "position/velocity dimension mismatch");
        Self { p, v }
    }
}

/// Physical constants of one arm. Masses and lengths are strictly positive;
/// gravity may be zero (used by the energy-conservation checks).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLinkArmParams {
    pub m1_kg: f64,
    pub m2_kg: f64,
    pub r1_m: f64,
    pub r2_m: f64,
    pub g_mps2: f64,
}

impl TwoLinkArmParams {
    pub fn new(m1_kg: f64, m2_kg: f64, r1_m: f64, r2_m: f64, g_mps2: f64) -> Result<Self, String> {
        if !(m1_kg > 0.0 && m2_kg > 0.0 && r1_m > 0.0 && r2_m > 0.0) {
            return Err("arm masses and lengths must be strictly positive".into());
        }
        if !g_mps2.is_finite() || g_mps2 < 0.0 {
            return Err("gravity must be finite and non-negative".into());
        }
        Ok(Self { m1_kg, m2_kg, r1_m, r2_m, g_mps2 })
    }

    /// Parameters used by the bundled five-arm scenario.
    pub fn standard() -> Self {
        Self { m1_kg: 0.8, m2_kg: 1.7, r1_m: 1.0, r2_m: 1.0, g_mps2: 9.8 }
    }
}

/// Inertia, Coriolis/centripetal and gravity terms at `(q, qdot)`.
pub fn arm_matrices(
    params: &TwoLinkArmParams,
    q: &Vector2<f64>,
    qdot: &Vector2<f64>,
) -> (Matrix2<f64>, Matrix2<f64>, Vector2<f64>) {
    let TwoLinkArmParams { m1_kg: m1, m2_kg: m2, r1_m: r1, r2_m: r2, g_mps2: g } = *params;
    let c2 = q[1].cos();
    let s2 = q[1].sin();
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    let h = m2 * r1 * r2;

    let m12 = m2 * r2 * r2 + h * c2;
    let m = Matrix2::new(
        (m1 + m2) * r1 * r1 + m2 * r2 * r2 + 2.0 * h * c2,
        m12,
        m12,
        m2 * r2 * r2,
    );
    let v = Matrix2::new(-h * s2 * qdot[1], -h * s2 * (qdot[0] + qdot[1]), h * s2 * qdot[0], 0.0);
    let grav = Vector2::new(((m1 + m2) * r1 * c1 + m2 * r2 * c12) * g, m2 * r2 * c12 * g);
    (m, v, grav)
}

/// Joint accelerations of the arm under torque `u` and disturbance `w`:
/// `pdot = v`, `vdot = M^-1 (u - V v - G - w)`.
pub fn agent_derivative(
    params: &TwoLinkArmParams,
    s: &AgentState,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), PlantError> {
    if s.dim() != 2 {
        return Err(PlantError::ShapeMismatch { expected: 2, got: s.dim() });
    }
    if u.len() != 2 || w.len() != 2 {
        return Err(PlantError::ShapeMismatch { expected: 2, got: u.len().max(w.len()) });
    }
    let q = Vector2::new(s.p[0], s.p[1]);
    let qd = Vector2::new(s.v[0], s.v[1]);
    let (m, v, grav) = arm_matrices(params, &q, &qd);

    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let fro2 = m.norm_squared();
    // cond(M) in Frobenius scale: |M| |M^-1| = fro2 / |det| for 2x2.
    let cond = fro2 / det.abs();
    if !cond.is_finite() || cond > 1e12 {
        return Err(PlantError::NumericalSingularity { cond });
    }

    let rhs = Vector2::new(u[0], u[1]) - v * qd - grav - Vector2::new(w[0], w[1]);
    let acc = Vector2::new(
        (m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det,
        (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det,
    );
    Ok((s.v.clone(), DVector::from_vec(vec![acc[0], acc[1]])))
}

/// Bounded sinusoidal joint disturbance shared by all arms.
pub fn disturbance(t: f64) -> Vector2<f64> {
    Vector2::new(-0.12 * t.cos(), 0.1 * t.sin())
}

/// Leader dynamics: two decoupled Van der Pol oscillators,
/// `vdot = [-p1 + 0.2 (1 - p1^2) v1, -p2 + 0.3 (1 - p2^2) v2]`.
pub fn leader_derivative(s: &LeaderState) -> (DVector<f64>, DVector<f64>) {
    assert_eq!(s.p.len(), 2, "leader model is two-dimensional");
    let (p1, p2) = (s.p[0], s.p[1]);
    let (v1, v2) = (s.v[0], s.v[1]);
    (
        s.v.clone(),
        DVector::from_vec(vec![
            -p1 + 0.2 * (1.0 - p1 * p1) * v1,
            -p2 + 0.3 * (1.0 - p2 * p2) * v2,
        ]),
    )
}
