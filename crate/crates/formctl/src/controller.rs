//! Distributed per-agent control law.
//!
//! Each agent regulates the auxiliary error `zeta_i = delta_i + k1 e_i`,
//! where `e_i` and `delta_i` are the neighborhood position and velocity
//! errors. The control input is kept in integrated form
//!
//! ```text
//! u_i(t) = -(k3+k4) zeta_i(t) + (k3+k4) zeta_i(0)
//!          - int_0^t ( N1_hat_i + k2 (k3+k4) zeta_i + kappa_i sgn(zeta_i) ) ds
//! ```
//!
//! with the time-varying robust gain in closed form
//! `kappa_i(t) = |zeta_i(t)|_1 - |zeta_i(0)|_1 + k2 int_0^t |zeta_i(s)|_1 ds`,
//! so no acceleration measurements are needed. Inside the dead zone
//! `|zeta_i|_1 < b` the sgn term is zeroed and the kappa update is frozen,
//! which stops gain wind-up and control chattering together.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::graph::WeightedDigraph;
use crate::nn::{norm1, ThreeLayerNn};
use crate::plant::{AgentState, LeaderState};

/// Desired offsets `d_i` of each agent relative to the leader. Pairwise
/// offsets `d_ij = d_i - d_j` are always derived, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    offsets: Vec<DVector<f64>>,
}

impl FormationSpec {
    pub fn new(offsets: Vec<DVector<f64>>) -> Result<Self, String> {
        if offsets.is_empty() {
            return Err("formation needs at least one offset".into());
        }
        let dim = offsets[0].len();
        for (i, d) in offsets.iter().enumerate() {
            if d.len() != dim {
                return Err(format!("offset {i} has dimension {}, expected {dim}", d.len()));
            }
            if d.iter().any(|x| !x.is_finite()) {
                return Err(format!("offset {i} has a non-finite entry"));
            }
        }
        Ok(Self { offsets })
    }

    pub fn n_agents(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets[0].len()
    }

    pub fn offset(&self, i: usize) -> &DVector<f64> {
        &self.offsets[i]
    }

    pub fn relative_offset(&self, i: usize, j: usize) -> DVector<f64> {
        &self.offsets[i] - &self.offsets[j]
    }
}

/// Control gains plus dead-zone size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub deadzone_b: f64,
}

impl ControllerGains {
    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64, deadzone_b: f64) -> Result<Self, String> {
        if !(k1 > 0.0 && k2 > 0.0 && k3 > 0.0 && k4 > 0.0) {
            return Err(format!("gains must be strictly positive, got ({k1}, {k2}, {k3}, {k4})"));
        }
        if !deadzone_b.is_finite() || deadzone_b < 0.0 {
            return Err(format!("dead-zone size must be finite and non-negative, got {deadzone_b}"));
        }
        Ok(Self { k1, k2, k3, k4, deadzone_b })
    }
}

/// Neighborhood errors of agent `i`:
/// `e_i = sum_j a_ij (p_i - p_j - d_i + d_j) + b_i (p_i - p_l - d_i)` and
/// `delta_i = sum_j a_ij (v_i - v_j) + b_i (v_i - v_l)`.
///
/// Only neighbors with `a_ij > 0` are read, and the leader only when
/// `b_i > 0` (distributed-information contract).
pub fn formation_error(
    i: usize,
    states: &[AgentState],
    leader: &LeaderState,
    g: &WeightedDigraph,
    spec: &FormationSpec,
) -> (DVector<f64>, DVector<f64>) {
    let dim = states[i].p.len();
    let mut e = DVector::zeros(dim);
    let mut delta = DVector::zeros(dim);
    for j in 0..g.n_agents() {
        let a = g.weight(i, j);
        if a > 0.0 {
            e += (&states[i].p - &states[j].p - spec.relative_offset(i, j)) * a;
            delta += (&states[i].v - &states[j].v) * a;
        }
    }
    let b = g.leader_weights()[i];
    if b > 0.0 {
        e += (&states[i].p - &leader.p - spec.offset(i)) * b;
        delta += (&states[i].v - &leader.v) * b;
    }
    (e, delta)
}

/// Auxiliary error `zeta_i = delta_i + k1 e_i`.
pub fn zeta(e: &DVector<f64>, delta: &DVector<f64>, k1: f64) -> DVector<f64> {
    delta + e * k1
}

/// Componentwise sign with `sgn(0) = 0`, zeroed entirely inside the dead
/// zone `|zeta|_1 < b`.
pub fn sgn_deadzone(zeta: &DVector<f64>, deadzone_b: f64) -> DVector<f64> {
    if norm1(zeta) < deadzone_b {
        return DVector::zeros(zeta.len());
    }
    zeta.map(|x| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

/// NN input vector of one agent:
/// `X = [1, p^T, v^T, zeta^T, |V_hat|_F, |Z_hat|_F, |W_hat|_F, kappa]^T`
/// of length `3n + 5` including the leading augmentation 1.
pub fn nn_input(
    state: &AgentState,
    zeta_i: &DVector<f64>,
    nn: &ThreeLayerNn,
    kappa_i: f64,
) -> DVector<f64> {
    let n = state.p.len();
    let mut x = DVector::zeros(3 * n + 5);
    x[0] = 1.0;
    x.rows_mut(1, n).copy_from(&state.p);
    x.rows_mut(1 + n, n).copy_from(&state.v);
    x.rows_mut(1 + 2 * n, n).copy_from(zeta_i);
    x[1 + 3 * n] = nn.v_fro();
    x[2 + 3 * n] = nn.z_fro();
    x[3 + 3 * n] = nn.w_fro();
    x[4 + 3 * n] = kappa_i;
    x
}

/// Integral accumulators and bookkeeping of one agent's control law.
///
/// `u` is always reconstructable as
/// `-(k3+k4) zeta(t) + (k3+k4) zeta0 - u_integral`.
#[derive(Debug, Clone)]
pub struct ControllerState {
    /// Control input as of the last step.
    pub u: DVector<f64>,
    /// Running integral of `N1_hat + k2 (k3+k4) zeta + kappa sgn(zeta)`.
    pub u_integral: DVector<f64>,
    /// Robust gain as of the last step (frozen inside the dead zone).
    pub kappa: f64,
    /// Running integral `k2 int |zeta|_1 ds` (frozen inside the dead zone).
    pub kappa_integral: f64,
    /// Stored initial auxiliary error `zeta(0)`.
    pub zeta0: DVector<f64>,
    pub zeta0_norm1: f64,
    // Trapezoid endpoints for the standalone stepping API.
    prev_u_integrand: DVector<f64>,
    prev_zeta_norm1: f64,
}

impl ControllerState {
    /// Initializes at `t = 0` with the initial auxiliary error and the
    /// initial NN output (zero for a zero-initialized output layer). The
    /// initial control is exactly zero.
    pub fn new(zeta0: DVector<f64>, nn_output0: &DVector<f64>, gains: &ControllerGains) -> Self {
        let dim = zeta0.len();
        let zeta0_norm1 = norm1(&zeta0);
        // kappa(0) = 0, so the sgn term contributes nothing at t = 0.
        let prev_u_integrand = nn_output0 + &zeta0 * (gains.k2 * (gains.k3 + gains.k4));
        Self {
            u: DVector::zeros(dim),
            u_integral: DVector::zeros(dim),
            kappa: 0.0,
            kappa_integral: 0.0,
            zeta0,
            zeta0_norm1,
            prev_u_integrand,
            prev_zeta_norm1: zeta0_norm1,
        }
    }

    /// Advances the robust gain to the next sample by trapezoidal quadrature
    /// of `k2 |zeta|_1` and evaluates the closed form
    /// `kappa = |zeta(t)|_1 - |zeta(0)|_1 + kappa_integral`. While
    /// `|zeta(t)|_1 < b` both the accumulator and the instantaneous term are
    /// frozen and the previous `kappa` is returned.
    pub fn kappa_update(
        &mut self,
        zeta_t: &DVector<f64>,
        k2: f64,
        deadzone_b: f64,
        dt: f64,
    ) -> f64 {
        let zn = norm1(zeta_t);
        if zn < deadzone_b {
            self.prev_zeta_norm1 = zn;
            return self.kappa;
        }
        self.kappa_integral += k2 * 0.5 * dt * (self.prev_zeta_norm1 + zn);
        self.prev_zeta_norm1 = zn;
        self.kappa = zn - self.zeta0_norm1 + self.kappa_integral;
        self.kappa
    }

    /// Advances the control integral by trapezoidal quadrature of
    /// `N1_hat + k2 (k3+k4) zeta + kappa sgn(zeta)` and returns
    /// `u(t) = -(k3+k4) zeta(t) + (k3+k4) zeta(0) - u_integral`.
    pub fn control_step(
        &mut self,
        zeta_t: &DVector<f64>,
        nn_output: &DVector<f64>,
        kappa_t: f64,
        gains: &ControllerGains,
        dt: f64,
    ) -> DVector<f64> {
        let k34 = gains.k3 + gains.k4;
        let integrand = nn_output
            + zeta_t * (gains.k2 * k34)
            + sgn_deadzone(zeta_t, gains.deadzone_b) * kappa_t;
        self.u_integral += (&self.prev_u_integrand + &integrand) * (0.5 * dt);
        self.prev_u_integrand = integrand;
        self.u = self.reconstruct_u(zeta_t, gains);
        self.u.clone()
    }

    /// The bookkeeping identity for the current control input.
    pub fn reconstruct_u(&self, zeta_t: &DVector<f64>, gains: &ControllerGains) -> DVector<f64> {
        let k34 = gains.k3 + gains.k4;
        (&self.zeta0 - zeta_t) * k34 - &self.u_integral
    }

    /// Overwrites the accumulators from an external integrator and refreshes
    /// the derived quantities consistently (dead-zone rule included).
    pub fn sync_from_integrals(
        &mut self,
        u_integral: DVector<f64>,
        kappa_integral: f64,
        zeta_t: &DVector<f64>,
        nn_output: &DVector<f64>,
        gains: &ControllerGains,
    ) {
        self.u_integral = u_integral;
        self.kappa_integral = kappa_integral;
        let zn = norm1(zeta_t);
        if zn >= gains.deadzone_b {
            self.kappa = zn - self.zeta0_norm1 + self.kappa_integral;
        }
        self.prev_zeta_norm1 = zn;
        self.u = self.reconstruct_u(zeta_t, gains);
        self.prev_u_integrand = nn_output
            + zeta_t * (gains.k2 * (gains.k3 + gains.k4))
            + sgn_deadzone(zeta_t, gains.deadzone_b) * self.kappa;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::pentagon_graph;
    use nalgebra::{DMatrix, dvector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gains() -> ControllerGains {
        ControllerGains::new(4.0, 37.5, 380.0, 2.0, 0.005).unwrap()
    }

    fn pentagon_formation() -> FormationSpec {
        let s = |x: f64| x.sin();
        let c = |x: f64| x.cos();
        let a2 = 2.0 * std::f64::consts::PI / 5.0;
        let a1 = std::f64::consts::PI / 5.0;
        FormationSpec::new(vec![
            dvector![0.0, 1.0],
            dvector![-s(a2), c(a2)],
            dvector![-s(a1), -c(a1)],
            dvector![s(a1), -c(a1)],
            dvector![s(a2), c(a2)],
        ])
        .unwrap()
    }

    fn scenario_states() -> (Vec<AgentState>, LeaderState) {
        let ps = [[2.1, 0.0], [0.0, 2.5], [-1.1, 2.0], [-1.8, 0.7], [-1.0, -1.7]];
        let states = ps
            .iter()
            .map(|p| AgentState::new(dvector![p[0], p[1]], dvector![0.0, 0.0]))
            .collect();
        (states, LeaderState::new(dvector![1.0, -1.0], dvector![0.0, 0.0]))
    }

    #[test]
    fn on_formation_errors_vanish() {
        let g = pentagon_graph();
        let spec = pentagon_formation();
        let leader = LeaderState::new(dvector![0.3, -0.8], dvector![0.4, 0.2]);
        let states: Vec<AgentState> = (0..5)
            .map(|i| AgentState::new(&leader.p + spec.offset(i), leader.v.clone()))
            .collect();
        for i in 0..5 {
            let (e, d) = formation_error(i, &states, &leader, &g, &spec);
            assert!(e.amax() < 1e-14);
            assert!(d.amax() < 1e-14);
        }
    }

    #[test]
    fn single_agent_leader_only_error() {
        let g = WeightedDigraph::new(DMatrix::zeros(1, 1), dvector![1.0]).unwrap();
        let spec = FormationSpec::new(vec![dvector![0.5, -0.25]]).unwrap();
        let leader = LeaderState::new(dvector![1.0, 1.0], dvector![0.1, 0.0]);
        let states = vec![AgentState::new(dvector![2.0, 0.0], dvector![0.0, 0.3])];
        let (e, d) = formation_error(0, &states, &leader, &g, &spec);
        assert_eq!(e, dvector![2.0 - 1.0 - 0.5, 0.0 - 1.0 + 0.25]);
        assert_eq!(d, dvector![-0.1, 0.3]);
    }

    /// Stacked oracle: e = ((L+B) kron I_n)(x1 - 1 kron p_l - d), same for
    /// velocities without the offset.
    #[allow(clippy::needless_range_loop)]
    fn stacked_errors(
        states: &[AgentState],
        leader: &LeaderState,
        g: &WeightedDigraph,
        spec: &FormationSpec,
    ) -> (DVector<f64>, DVector<f64>) {
        let n = states[0].p.len();
        let big = g.l_plus_b().kronecker(&DMatrix::identity(n, n));
        let na = states.len();
        let mut pos = DVector::zeros(na * n);
        let mut vel = DVector::zeros(na * n);
        for (i, s) in states.iter().enumerate() {
            for k in 0..n {
                pos[i * n + k] = s.p[k] - leader.p[k] - spec.offset(i)[k];
                vel[i * n + k] = s.v[k] - leader.v[k];
            }
        }
        (&big * pos, &big * vel)
    }

    #[test]
    fn per_agent_errors_match_stacked_oracle() {
        let g = pentagon_graph();
        let spec = pentagon_formation();
        let (states, leader) = scenario_states();
        let (e_stack, d_stack) = stacked_errors(&states, &leader, &g, &spec);
        for i in 0..5 {
            let (e, d) = formation_error(i, &states, &leader, &g, &spec);
            for k in 0..2 {
                assert!((e[k] - e_stack[i * 2 + k]).abs() < 1e-12);
                assert!((d[k] - d_stack[i * 2 + k]).abs() < 1e-12);
            }
        }
        // zeta(0) composition: velocities are zero, so zeta = k1 e.
        let (e0, d0) = formation_error(0, &states, &leader, &g, &spec);
        let z0 = zeta(&e0, &d0, 4.0);
        for k in 0..2 {
            assert!((z0[k] - 4.0 * e0[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn zeta_scaling() {
        assert_eq!(zeta(&dvector![0.0], &dvector![0.0], 3.0), dvector![0.0]);
        assert_eq!(zeta(&dvector![1.0, -1.0], &dvector![0.0, 0.0], 4.0), dvector![4.0, -4.0]);
    }

    #[test]
    fn sgn_deadzone_behaviour() {
        assert_eq!(sgn_deadzone(&dvector![3.0, -0.5, 0.0], 0.0), dvector![1.0, -1.0, 0.0]);
        // |zeta|_1 = 0.004 < b = 0.005: fully zeroed
        assert_eq!(sgn_deadzone(&dvector![0.003, -0.001], 0.005), dvector![0.0, 0.0]);
    }

    #[test]
    fn nn_input_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nn = ThreeLayerNn::for_agent(2, &mut rng);
        let s = AgentState::new(dvector![1.0, 2.0], dvector![3.0, 4.0]);
        let x = nn_input(&s, &dvector![5.0, 6.0], &nn, 7.5);
        assert_eq!(x.len(), 11);
        assert_eq!(x[0], 1.0);
        assert_eq!((x[1], x[2], x[3], x[4]), (1.0, 2.0, 3.0, 4.0));
        assert_eq!((x[5], x[6]), (5.0, 6.0));
        assert_eq!(x[7], nn.v_fro());
        assert_eq!(x[8], nn.z_fro());
        assert_eq!(x[9], 0.0); // zero-initialized output layer
        assert_eq!(x[10], 7.5);

        let zero_nn = ThreeLayerNn::zeros(10, 10, 22, 2);
        let zs = AgentState::new(dvector![0.0, 0.0], dvector![0.0, 0.0]);
        let zx = nn_input(&zs, &dvector![0.0, 0.0], &zero_nn, 0.0);
        assert_eq!(zx[0], 1.0);
        assert_eq!(zx.rows(1, 10).amax(), 0.0);
    }

    #[test]
    fn control_starts_at_zero() {
        let z0 = dvector![2.0, -1.0];
        let cs = ControllerState::new(z0.clone(), &DVector::zeros(2), &gains());
        assert_eq!(cs.u, dvector![0.0, 0.0]);
        assert_eq!(cs.reconstruct_u(&z0, &gains()), dvector![0.0, 0.0]);
        assert_eq!(cs.kappa, 0.0);
    }

    #[test]
    fn kappa_constant_zeta() {
        // zeta held at zeta(0): kappa(t) = k2 t |zeta(0)|_1.
        let z0 = dvector![1.0, -0.5];
        let g = ControllerGains::new(1.0, 2.0, 3.0, 1.0, 0.0).unwrap();
        let mut cs = ControllerState::new(z0.clone(), &DVector::zeros(2), &g);
        let dt = 1e-3;
        let steps = 1000;
        let mut kappa = 0.0;
        for _ in 0..steps {
            kappa = cs.kappa_update(&z0, g.k2, g.deadzone_b, dt);
        }
        let t = dt * steps as f64;
        assert!((kappa - g.k2 * t * 1.5).abs() < 1e-9, "kappa {kappa}");
    }

    #[test]
    fn kappa_exact_cancellation_on_decaying_zeta() {
        // zeta(t) = zeta(0) e^{-k2 t} componentwise keeps kappa at zero.
        let z0 = dvector![0.8, -1.2];
        let k2 = 2.0;
        let g = ControllerGains::new(1.0, k2, 3.0, 1.0, 0.0).unwrap();
        let mut cs = ControllerState::new(z0.clone(), &DVector::zeros(2), &g);
        let dt = 1e-4;
        let mut worst = 0.0f64;
        for step in 1..=50_000 {
            let t = dt * step as f64;
            let zt = &z0 * (-k2 * t).exp();
            let kappa = cs.kappa_update(&zt, k2, g.deadzone_b, dt);
            worst = worst.max(kappa.abs());
        }
        assert!(worst <= 1e-6, "max |kappa| {worst}");
    }

    /// Richardson-refined trapezoid quadrature of `f` on [0, t] (two levels).
    fn refined_quadrature(f: impl Fn(f64) -> f64, t: f64, base_steps: usize) -> f64 {
        let trap = |steps: usize| {
            let h = t / steps as f64;
            let mut acc = 0.5 * (f(0.0) + f(t));
            for k in 1..steps {
                acc += f(h * k as f64);
            }
            acc * h
        };
        let coarse = trap(base_steps);
        let fine = trap(2 * base_steps);
        fine + (fine - coarse) / 3.0
    }

    #[test]
    fn kappa_matches_quadrature_oracle_on_sinusoid() {
        // Smooth positive components keep |zeta|_1 smooth.
        let k2 = 2.0;
        let g = ControllerGains::new(1.0, k2, 3.0, 1.0, 0.0).unwrap();
        let zf = |t: f64| dvector![2.0 + (1.3 * t).sin(), 1.5 + 0.5 * (0.7 * t).cos()];
        let z0 = zf(0.0);
        let z0n = norm1(&z0);
        let mut cs = ControllerState::new(z0, &DVector::zeros(2), &g);
        let dt: f64 = 1e-4;
        let t_end = 5.0;
        let steps = (t_end / dt).round() as usize;
        let mut kappa = 0.0;
        for step in 1..=steps {
            kappa = cs.kappa_update(&zf(dt * step as f64), k2, g.deadzone_b, dt);
        }
        let integral = refined_quadrature(|s| norm1(&zf(s)), t_end, 40_000);
        let expected = norm1(&zf(t_end)) - z0n + k2 * integral;
        assert!((kappa - expected).abs() <= 1e-6, "kappa {kappa} vs {expected}");
    }

    #[test]
    fn kappa_closed_form_equals_integral_of_kappadot_on_sign_constant_segment() {
        // On a segment where no component changes sign,
        // d/dt kappa = (zetadot + k2 zeta)^T sgn(zeta).
        let k2 = 1.5;
        let g = ControllerGains::new(1.0, k2, 3.0, 1.0, 0.0).unwrap();
        let zf = |t: f64| dvector![1.0 + 0.3 * (t).sin(), -2.0 + 0.4 * (0.9 * t).cos()];
        let zdotf = |t: f64| dvector![0.3 * (t).cos(), -0.36 * (0.9 * t).sin()];
        let z0 = zf(0.0);
        let mut cs = ControllerState::new(z0, &DVector::zeros(2), &g);
        let dt: f64 = 1e-4;
        let t_end = 3.0;
        let steps = (t_end / dt).round() as usize;
        let mut kappa = 0.0;
        for step in 1..=steps {
            kappa = cs.kappa_update(&zf(dt * step as f64), k2, g.deadzone_b, dt);
        }
        let integrand = |s: f64| {
            let z = zf(s);
            let sg = sgn_deadzone(&z, 0.0);
            (zdotf(s) + &z * k2).dot(&sg)
        };
        let expected = refined_quadrature(integrand, t_end, 30_000);
        assert!((kappa - expected).abs() < 1e-6, "kappa {kappa} vs {expected}");
    }

    #[test]
    fn kappa_frozen_in_dead_zone() {
        let g = ControllerGains::new(1.0, 2.0, 3.0, 1.0, 0.005).unwrap();
        let z0 = dvector![1.0, 0.0];
        let mut cs = ControllerState::new(z0.clone(), &DVector::zeros(2), &g);
        let k1 = cs.kappa_update(&dvector![0.5, 0.0], g.k2, g.deadzone_b, 1e-3);
        let inside = cs.kappa_update(&dvector![0.001, 0.0], g.k2, g.deadzone_b, 1e-3);
        assert_eq!(k1, inside);
        let integral_before = cs.kappa_integral;
        cs.kappa_update(&dvector![0.0005, 0.0], g.k2, g.deadzone_b, 1e-3);
        assert_eq!(cs.kappa_integral, integral_before);
    }

    #[test]
    fn control_step_single_euler_matches_hand_quadrature() {
        // One dt with known endpoint integrands: trapezoid by hand.
        let g = ControllerGains::new(1.0, 2.0, 3.0, 1.0, 0.0).unwrap();
        let z0 = dvector![1.0, -2.0];
        let nn0 = dvector![0.0, 0.0];
        let mut cs = ControllerState::new(z0.clone(), &nn0, &g);
        let dt = 1e-3;
        let z1 = dvector![0.9, -1.9];
        let nn1 = dvector![0.2, -0.1];
        let kappa1 = 0.05;
        let u = cs.control_step(&z1, &nn1, kappa1, &g, dt);

        let k34 = g.k3 + g.k4;
        let f0 = &nn0 + &z0 * (g.k2 * k34); // kappa(0) = 0
        let f1 = &nn1 + &z1 * (g.k2 * k34) + sgn_deadzone(&z1, 0.0) * kappa1;
        let integral = (&f0 + &f1) * (0.5 * dt);
        let expected = (&z0 - &z1) * k34 - integral;
        assert!((u - expected).amax() < 1e-14);
    }

    #[test]
    fn control_reduces_to_pi_law_without_nn_and_kappa() {
        // N1 = 0, kappa = 0: u = -(k3+k4)(zeta - zeta0) - k2(k3+k4) int zeta.
        let g = ControllerGains::new(1.0, 2.0, 3.0, 1.0, 0.0).unwrap();
        let zf = |t: f64| dvector![(0.8 * t).cos(), 0.5 * (1.1 * t).sin() - 0.3];
        let z0 = zf(0.0);
        let zero = DVector::zeros(2);
        let mut cs = ControllerState::new(z0.clone(), &zero, &g);
        let dt: f64 = 1e-4;
        let t_end = 2.0;
        let steps = (t_end / dt).round() as usize;
        let mut u = DVector::zeros(2);
        for step in 1..=steps {
            u = cs.control_step(&zf(dt * step as f64), &zero, 0.0, &g, dt);
        }
        let k34 = g.k3 + g.k4;
        for k in 0..2 {
            let integral = refined_quadrature(|s| zf(s)[k], t_end, 40_000);
            let expected = -k34 * (zf(t_end)[k] - z0[k]) - g.k2 * k34 * integral;
            assert!((u[k] - expected).abs() < 1e-6, "u[{k}] = {} vs {}", u[k], expected);
        }
    }

    #[test]
    fn u_reconstruction_identity_after_every_step() {
        let g = gains();
        let zf = |t: f64| dvector![(2.0 * t).cos() * 0.4, -0.2 + 0.1 * (3.0 * t).sin()];
        let mut cs = ControllerState::new(zf(0.0), &DVector::zeros(2), &g);
        let dt = 1e-3;
        for step in 1..=2000 {
            let t = dt * step as f64;
            let zt = zf(t);
            let kappa = cs.kappa_update(&zt, g.k2, g.deadzone_b, dt);
            let u = cs.control_step(&zt, &dvector![0.1 * t.sin(), 0.0], kappa, &g, dt);
            let rebuilt = cs.reconstruct_u(&zt, &g);
            assert!((u - rebuilt).amax() < 1e-12);
        }
    }

    proptest! {
        /// Agent i's errors ignore agents it does not listen to, and the
        /// leader unless pinned.
        #[test]
        fn distributed_information_contract(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = pentagon_graph();
            let spec = pentagon_formation();
            let (mut states, mut leader) = scenario_states();
            for s in &mut states {
                for k in 0..2 {
                    s.p[k] = rng.gen_range(-3.0..3.0);
                    s.v[k] = rng.gen_range(-2.0..2.0);
                }
            }
            let i = rng.gen_range(0..5);
            let (e_before, d_before) = formation_error(i, &states, &leader, &g, &spec);

            // fuzz every non-neighbor
            for (j, s) in states.iter_mut().enumerate() {
                if j != i && g.weight(i, j) == 0.0 {
                    for k in 0..2 {
                        s.p[k] = rng.gen_range(-50.0..50.0);
                        s.v[k] = rng.gen_range(-50.0..50.0);
                    }
                }
            }
            if g.leader_weights()[i] == 0.0 {
                leader = LeaderState::new(
                    dvector![rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)],
                    dvector![rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)],
                );
            }
            let (e_after, d_after) = formation_error(i, &states, &leader, &g, &spec);
            prop_assert_eq!(e_before, e_after);
            prop_assert_eq!(d_before, d_after);
        }

        /// Stacked equivalence on random states.
        #[test]
        fn stacked_equivalence(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = pentagon_graph();
            let spec = pentagon_formation();
            let (mut states, _) = scenario_states();
            for s in &mut states {
                for k in 0..2 {
                    s.p[k] = rng.gen_range(-5.0..5.0);
                    s.v[k] = rng.gen_range(-5.0..5.0);
                }
            }
            let leader = LeaderState::new(
                dvector![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                dvector![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
            );
            let (e_stack, d_stack) = stacked_errors(&states, &leader, &g, &spec);
            for i in 0..5 {
                let (e, d) = formation_error(i, &states, &leader, &g, &spec);
                for k in 0..2 {
                    prop_assert!((e[k] - e_stack[i * 2 + k]).abs() < 1e-12);
                    prop_assert!((d[k] - d_stack[i * 2 + k]).abs() < 1e-12);
                }
            }
        }
    }
}
