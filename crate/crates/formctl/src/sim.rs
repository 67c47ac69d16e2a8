//! Closed-loop fixed-step simulation: agents, leader, NN weights, robust-gain
//! and control integrals advance together as one joint ODE under classical
//! RK4. Discontinuous sign terms are evaluated at every stage with the
//! dead-zone rule; the NN input entries that would otherwise be algebraically
//! circular (weight norms and kappa) are taken from the previous step.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config;
use crate::controller::{
    formation_error, nn_input, sgn_deadzone, zeta, ControllerGains, ControllerState, FormationSpec,
};
use crate::graph::{GraphError, WeightedDigraph};
use crate::nn::{norm1, NnError, ThreeLayerNn, TuningGains, WeightSnapshot};
use crate::plant::{
    agent_derivative, disturbance, leader_derivative, AgentState, LeaderState, PlantError,
    TwoLinkArmParams,
};
use crate::rk4::rk4_step;
use crate::trajectory::{fnv1a64, RunMetadata, TrajectoryLog};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {variable} at t = {time}")]
    NonFiniteState { variable: String, time: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("plant error at t = {time}: {source}")]
    Plant { time: f64, source: PlantError },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Agent dynamics selection. The two-link arm is the production model; the
/// double integrator (`f = 0`, `g = I`) exists for integrator and
/// equilibrium checks.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    TwoLinkArm(Vec<TwoLinkArmParams>),
    DoubleIntegrator,
}

/// Complete scenario description.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub name: String,
    pub graph: WeightedDigraph,
    pub formation: FormationSpec,
    pub gains: ControllerGains,
    pub nn_gains: Vec<TuningGains>,
    pub plant: PlantModel,
    pub leader0: LeaderState,
    pub agents0: Vec<AgentState>,
    pub dt: f64,
    pub duration: f64,
    pub rng_seed: u64,
    pub log_stride: usize,
    pub control_enabled: bool,
    pub disturbance_enabled: bool,
    /// Optional Frobenius-norm safety clamp applied to every weight matrix
    /// after each step. Off by default.
    pub weight_clamp: Option<f64>,
}

impl SimConfig {
    pub fn n_agents(&self) -> usize {
        self.graph.n_agents()
    }

    pub fn state_dim(&self) -> usize {
        self.formation.dim()
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let na = self.graph.n_agents();
        let n = self.formation.dim();
        let fail = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.formation.n_agents() != na {
            return fail(format!(
                "formation has {} offsets for {na} agents",
                self.formation.n_agents()
            ));
        }
        if self.nn_gains.len() != na {
            return fail(format!("{} tuning-gain sets for {na} agents", self.nn_gains.len()));
        }
        if self.agents0.len() != na {
            return fail(format!("{} initial states for {na} agents", self.agents0.len()));
        }
        for (i, s) in self.agents0.iter().enumerate() {
            if s.dim() != n {
                return fail(format!("agent {} initial state has dimension {}", i + 1, s.dim()));
            }
            if s.p.iter().chain(s.v.iter()).any(|x| !x.is_finite()) {
                return fail(format!("agent {} initial state is not finite", i + 1));
            }
        }
        if self.leader0.p.len() != n {
            return fail(format!("leader state has dimension {}", self.leader0.p.len()));
        }
        match &self.plant {
            PlantModel::TwoLinkArm(params) => {
                if n != 2 {
                    return fail("two-link arm plant requires 2-dimensional states".into());
                }
                if params.len() != na {
                    return fail(format!("{} arm parameter sets for {na} agents", params.len()));
                }
            }
            PlantModel::DoubleIntegrator => {}
        }
        if self.disturbance_enabled && n != 2 {
            return fail("the disturbance model is two-dimensional".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return fail(format!("duration must be non-negative, got {}", self.duration));
        }
        if self.log_stride == 0 {
            return fail("log_stride must be at least 1".into());
        }
        if let Some(c) = self.weight_clamp {
            if !c.is_finite() || c <= 0.0 {
                return fail(format!("weight clamp must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Mutable simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub t: f64,
    pub leader: LeaderState,
    pub agents: Vec<AgentState>,
    pub nns: Vec<ThreeLayerNn>,
    pub ctrl: Vec<ControllerState>,
}

/// One-step-lagged NN input feedbacks (weight norms and kappa).
#[derive(Debug, Clone, Copy)]
struct InputLag {
    v_fro: f64,
    z_fro: f64,
    w_fro: f64,
    kappa: f64,
}

/// Flat-vector layout of the joint ODE state.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    na: usize,
    v_len: usize,
    z_len: usize,
    w_len: usize,
    off_vel: usize,
    off_leader: usize,
    off_uint: usize,
    off_kint: usize,
    off_weights: usize,
    total: usize,
}

impl Layout {
    fn new(n: usize, na: usize, nn: &ThreeLayerNn) -> Self {
        let (n1, m1, m2, n2) = nn.dims();
        let v_len = (n1 + 1) * m1;
        let z_len = (m1 + 1) * m2;
        let w_len = (m2 + 1) * n2;
        let off_vel = na * n;
        let off_leader = 2 * na * n;
        let off_uint = off_leader + 2 * n;
        let off_kint = off_uint + na * n;
        let off_weights = off_kint + na;
        let total = off_weights + na * (v_len + z_len + w_len);
        Self { n, na, v_len, z_len, w_len, off_vel, off_leader, off_uint, off_kint, off_weights, total }
    }

    fn weights_base(&self, agent: usize) -> usize {
        self.off_weights + agent * (self.v_len + self.z_len + self.w_len)
    }

    /// Human-readable name of a flat-state index, for error reports.
    fn describe(&self, idx: usize) -> String {
        let n = self.n;
        if idx < self.off_vel {
            return format!("agent {} position component {}", idx / n + 1, idx % n + 1);
        }
        if idx < self.off_leader {
            let k = idx - self.off_vel;
            return format!("agent {} velocity component {}", k / n + 1, k % n + 1);
        }
        if idx < self.off_uint {
            let k = idx - self.off_leader;
            return if k < n {
                format!("leader position component {}", k + 1)
            } else {
                format!("leader velocity component {}", k - n + 1)
            };
        }
        if idx < self.off_kint {
            let k = idx - self.off_uint;
            return format!("agent {} control integral component {}", k / n + 1, k % n + 1);
        }
        if idx < self.off_weights {
            return format!("agent {} kappa integral", idx - self.off_kint + 1);
        }
        let k = idx - self.off_weights;
        let per = self.v_len + self.z_len + self.w_len;
        let agent = k / per;
        let r = k % per;
        let which = if r < self.v_len {
            "V"
        } else if r < self.v_len + self.z_len {
            "Z"
        } else {
            "W"
        };
        format!("agent {} NN weight matrix {which}", agent + 1)
    }
}

pub struct Simulator {
    config: SimConfig,
    layout: Layout,
    world: World,
    /// Non-fatal findings from the upfront certificate/gain checks.
    pub warnings: Vec<String>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let na = config.n_agents();
        let n = config.state_dim();

        let mut warnings = Vec::new();
        match config.graph.certify() {
            Ok(certs) => {
                if !certs.strongly_connected {
                    warnings.push(
                        "interaction graph is not strongly connected (leader-rooted only); \
                         the gain conditions are certified numerically"
                            .to_string(),
                    );
                }
                let th = certs.gain_thresholds();
                let g = &config.gains;
                let check = th.check(g.k1, g.k2, g.k3, g.k4);
                if !check.all_ok() {
                    warnings.push(format!(
                        "gains fail the certified thresholds \
                         (k1 > {:.6}: {}, k2 > {:.6}: {}, k3 > {:.6}: {}, k4 > {:.6}: {}); \
                         continuing anyway",
                        th.k1_min,
                        check.k1_ok,
                        th.k2_min,
                        check.k2_ok,
                        th.k3_min(g.k2),
                        check.k3_ok,
                        th.k4_min,
                        check.k4_ok,
                    ));
                }
            }
            Err(e) => warnings.push(format!("graph certification failed: {e}; continuing anyway")),
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut nns: Vec<ThreeLayerNn> =
            (0..na).map(|_| ThreeLayerNn::for_agent(n, &mut rng)).collect();
        if let Some(c) = config.weight_clamp {
            for nn in &mut nns {
                nn.clamp_frobenius(c);
            }
        }
        let layout = Layout::new(n, na, &nns[0]);

        let leader = config.leader0.clone();
        let agents = config.agents0.clone();
        let mut ctrl = Vec::with_capacity(na);
        for i in 0..na {
            let (e, d) = formation_error(i, &agents, &leader, &config.graph, &config.formation);
            let z0 = zeta(&e, &d, config.gains.k1);
            let x0 = nn_input(&agents[i], &z0, &nns[i], 0.0);
            let (y0, _) = nns[i].forward_augmented(&x0)?;
            ctrl.push(ControllerState::new(z0, &y0, &config.gains));
        }

        let world = World { t: 0.0, leader, agents, nns, ctrl };
        Ok(Self { config, layout, world, warnings })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    fn pack(&self) -> DVector<f64> {
        let l = &self.layout;
        let mut y = DVector::zeros(l.total);
        for (i, a) in self.world.agents.iter().enumerate() {
            for k in 0..l.n {
                y[i * l.n + k] = a.p[k];
                y[l.off_vel + i * l.n + k] = a.v[k];
            }
        }
        for k in 0..l.n {
            y[l.off_leader + k] = self.world.leader.p[k];
            y[l.off_leader + l.n + k] = self.world.leader.v[k];
        }
        for (i, c) in self.world.ctrl.iter().enumerate() {
            for k in 0..l.n {
                y[l.off_uint + i * l.n + k] = c.u_integral[k];
            }
            y[l.off_kint + i] = c.kappa_integral;
        }
        for (i, nn) in self.world.nns.iter().enumerate() {
            let base = l.weights_base(i);
            let s = y.as_mut_slice();
            s[base..base + l.v_len].copy_from_slice(nn.v_hat.as_slice());
            s[base + l.v_len..base + l.v_len + l.z_len].copy_from_slice(nn.z_hat.as_slice());
            s[base + l.v_len + l.z_len..base + l.v_len + l.z_len + l.w_len]
                .copy_from_slice(nn.w_hat.as_slice());
        }
        y
    }

    fn nn_at<'a>(&self, y: &'a DVector<f64>, agent: usize) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let l = &self.layout;
        let base = l.weights_base(agent);
        let s = y.as_slice();
        (
            &s[base..base + l.v_len],
            &s[base + l.v_len..base + l.v_len + l.z_len],
            &s[base + l.v_len + l.z_len..base + l.v_len + l.z_len + l.w_len],
        )
    }

    /// Joint ODE right-hand side at a stage state.
    fn derivative(&self, t: f64, y: &DVector<f64>, lag: &[InputLag]) -> Result<DVector<f64>, SimError> {
        let l = self.layout;
        let cfg = &self.config;
        let g = &cfg.gains;
        let k34 = g.k3 + g.k4;
        let mut dy = DVector::zeros(l.total);

        let agents: Vec<AgentState> = (0..l.na)
            .map(|i| {
                AgentState::new(
                    DVector::from_fn(l.n, |k, _| y[i * l.n + k]),
                    DVector::from_fn(l.n, |k, _| y[l.off_vel + i * l.n + k]),
                )
            })
            .collect();
        let leader = LeaderState::new(
            DVector::from_fn(l.n, |k, _| y[l.off_leader + k]),
            DVector::from_fn(l.n, |k, _| y[l.off_leader + l.n + k]),
        );
        // Plant states go non-finite first when the step is too coarse;
        // catch them at the stage so the abort names the real culprit.
        for (i, a) in agents.iter().enumerate() {
            for k in 0..l.n {
                if !a.p[k].is_finite() || !a.v[k].is_finite() {
                    return Err(SimError::NonFiniteState {
                        variable: format!("agent {} state component {}", i + 1, k + 1),
                        time: t,
                    });
                }
            }
        }

        // positions and leader
        for i in 0..l.na {
            for k in 0..l.n {
                dy[i * l.n + k] = agents[i].v[k];
            }
        }
        let (lp_dot, lv_dot) = leader_derivative(&leader);
        for k in 0..l.n {
            dy[l.off_leader + k] = lp_dot[k];
            dy[l.off_leader + l.n + k] = lv_dot[k];
        }

        let w_t: DVector<f64> = if cfg.disturbance_enabled {
            let w = disturbance(t);
            DVector::from_vec(vec![w[0], w[1]])
        } else {
            DVector::zeros(l.n)
        };

        for i in 0..l.na {
            let (e, d) = formation_error(i, &agents, &leader, &cfg.graph, &cfg.formation);
            let z = zeta(&e, &d, g.k1);
            let zn = norm1(&z);

            let mut u = DVector::zeros(l.n);
            if cfg.control_enabled {
                let u_int = DVector::from_fn(l.n, |k, _| y[l.off_uint + i * l.n + k]);
                u = (&self.world.ctrl[i].zeta0 - &z) * k34 - u_int;

                let (vs, zs, ws) = self.nn_at(y, i);
                let nn = ThreeLayerNn::from_column_slices(
                    self.world.nns[i].dims(),
                    vs,
                    zs,
                    ws,
                )?;
                let mut x = nn_input(&agents[i], &z, &nn, lag[i].kappa);
                // one-step lag on the norm feedback entries
                let nbase = 1 + 3 * l.n;
                x[nbase] = lag[i].v_fro;
                x[nbase + 1] = lag[i].z_fro;
                x[nbase + 2] = lag[i].w_fro;
                let (y_nn, bundle) = nn.forward_augmented(&x)?;
                let (dw, dz, dv) = nn.tuning_derivatives(&bundle, &x, &z, g.k2, &cfg.nn_gains[i])?;

                let base = l.weights_base(i);
                let s = dy.as_mut_slice();
                s[base..base + l.v_len].copy_from_slice(dv.as_slice());
                s[base + l.v_len..base + l.v_len + l.z_len].copy_from_slice(dz.as_slice());
                s[base + l.v_len + l.z_len..base + l.v_len + l.z_len + l.w_len]
                    .copy_from_slice(dw.as_slice());

                let kappa_stage = zn - self.world.ctrl[i].zeta0_norm1 + y[l.off_kint + i];
                let du_int = &y_nn + &z * (g.k2 * k34) + sgn_deadzone(&z, g.deadzone_b) * kappa_stage;
                for k in 0..l.n {
                    dy[l.off_uint + i * l.n + k] = du_int[k];
                }
                dy[l.off_kint + i] = if zn < g.deadzone_b { 0.0 } else { g.k2 * zn };
            }

            let (pd, vd) = match &cfg.plant {
                PlantModel::TwoLinkArm(params) => {
                    agent_derivative(&params[i], &agents[i], &u, &w_t)
                        .map_err(|source| SimError::Plant { time: t, source })?
                }
                PlantModel::DoubleIntegrator => (agents[i].v.clone(), &u + &w_t),
            };
            for k in 0..l.n {
                dy[i * l.n + k] = pd[k];
                dy[l.off_vel + i * l.n + k] = vd[k];
            }
        }
        Ok(dy)
    }

    /// Advances the world by one `dt`.
    pub fn step(&mut self) -> Result<(), SimError> {
        let lag: Vec<InputLag> = (0..self.layout.na)
            .map(|i| InputLag {
                v_fro: self.world.nns[i].v_fro(),
                z_fro: self.world.nns[i].z_fro(),
                w_fro: self.world.nns[i].w_fro(),
                kappa: self.world.ctrl[i].kappa,
            })
            .collect();

        let y = self.pack();
        let mut stage_error: Option<SimError> = None;
        let next = {
            let mut f = |t: f64, y: &DVector<f64>| -> DVector<f64> {
                match self.derivative(t, y, &lag) {
                    Ok(dy) => dy,
                    Err(e) => {
                        if stage_error.is_none() {
                            stage_error = Some(e);
                        }
                        DVector::zeros(y.len())
                    }
                }
            };
            rk4_step(&mut f, self.world.t, self.config.dt, &y)
        };
        if let Some(e) = stage_error {
            return Err(e);
        }

        let t_next = self.world.t + self.config.dt;
        if let Some(idx) = next.iter().position(|x| !x.is_finite()) {
            return Err(SimError::NonFiniteState {
                variable: self.layout.describe(idx),
                time: t_next,
            });
        }

        // write back
        let l = self.layout;
        for i in 0..l.na {
            for k in 0..l.n {
                self.world.agents[i].p[k] = next[i * l.n + k];
                self.world.agents[i].v[k] = next[l.off_vel + i * l.n + k];
            }
        }
        for k in 0..l.n {
            self.world.leader.p[k] = next[l.off_leader + k];
            self.world.leader.v[k] = next[l.off_leader + l.n + k];
        }
        for i in 0..l.na {
            let (vs, zs, ws) = self.nn_at(&next, i);
            self.world.nns[i] =
                ThreeLayerNn::from_column_slices(self.world.nns[i].dims(), vs, zs, ws)?;
            if let Some(c) = self.config.weight_clamp {
                self.world.nns[i].clamp_frobenius(c);
            }
        }
        self.world.t = t_next;

        // controller bookkeeping at the new time
        for i in 0..l.na {
            let (e, d) = formation_error(
                i,
                &self.world.agents,
                &self.world.leader,
                &self.config.graph,
                &self.config.formation,
            );
            let z = zeta(&e, &d, self.config.gains.k1);
            let u_int = DVector::from_fn(l.n, |k, _| next[l.off_uint + i * l.n + k]);
            let kap_int = next[l.off_kint + i];
            let x = nn_input(&self.world.agents[i], &z, &self.world.nns[i], self.world.ctrl[i].kappa);
            let (y_nn, _) = self.world.nns[i].forward_augmented(&x)?;
            self.world.ctrl[i].sync_from_integrals(u_int, kap_int, &z, &y_nn, &self.config.gains);
            if !self.config.control_enabled {
                self.world.ctrl[i].u = DVector::zeros(l.n);
            }
        }
        Ok(())
    }

    /// Current log row: state, controller signals and cost indices.
    fn sample(&self) -> Vec<f64> {
        let l = self.layout;
        let cfg = &self.config;
        let mut row = Vec::with_capacity(1 + l.na * (6 * l.n + 4) + 2 * l.n + 2);
        row.push(self.world.t);
        let mut nu = 0.0;
        let mut vartheta = 0.0;
        for i in 0..l.na {
            let (e, d) = formation_error(
                i,
                &self.world.agents,
                &self.world.leader,
                &cfg.graph,
                &cfg.formation,
            );
            let z = zeta(&e, &d, cfg.gains.k1);
            let u = &self.world.ctrl[i].u;
            nu += u.dot(u);
            vartheta += norm1(&e);
            row.extend(self.world.agents[i].p.iter());
            row.extend(self.world.agents[i].v.iter());
            row.extend(u.iter());
            row.extend(e.iter());
            row.extend(d.iter());
            row.extend(z.iter());
            row.push(self.world.ctrl[i].kappa);
            row.push(self.world.nns[i].v_fro());
            row.push(self.world.nns[i].z_fro());
            row.push(self.world.nns[i].w_fro());
        }
        row.extend(self.world.leader.p.iter());
        row.extend(self.world.leader.v.iter());
        let scale = 1.0 / (2.0 * l.na as f64);
        row.push(nu * scale);
        row.push(vartheta * scale);
        row
    }

    pub fn weight_snapshots(&self) -> Vec<WeightSnapshot> {
        self.world.nns.iter().map(|nn| nn.snapshot()).collect()
    }
}

/// A completed run: trajectory, upfront-check warnings, reproducibility
/// metadata and the final NN weights.
#[derive(Debug)]
pub struct SimRun {
    pub log: TrajectoryLog,
    pub warnings: Vec<String>,
    pub metadata: RunMetadata,
    pub weight_snapshots: Vec<WeightSnapshot>,
}

/// Runs a scenario to completion. Deterministic: the same configuration and
/// seed produce identical logs.
pub fn run(config: SimConfig) -> Result<SimRun, SimError> {
    let n_steps = {
        config.validate()?;
        config.n_steps()
    };
    let hash = format!("{:016x}", fnv1a64(config::canonical_toml(&config).as_bytes()));
    let mut sim = Simulator::new(config)?;
    let mut log = TrajectoryLog::new(sim.layout.na, sim.layout.n);
    log.push_row(sim.sample());
    for step_idx in 1..=n_steps {
        sim.step()?;
        if step_idx % sim.config.log_stride == 0 {
            log.push_row(sim.sample());
        }
    }
    let rows = log.rows.len();
    let metadata = RunMetadata {
        scenario: sim.config.name.clone(),
        config_hash: hash,
        rng_seed: sim.config.rng_seed,
        dt: sim.config.dt,
        duration: sim.config.duration,
        log_stride: sim.config.log_stride,
        n_steps,
        rows_logged: rows,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(SimRun {
        log,
        warnings: sim.warnings.clone(),
        metadata,
        weight_snapshots: sim.weight_snapshots(),
    })
}

/// Average control-effort and formation-error cost series
/// `nu(t) = (1/2N) sum_i |u_i|^2` and `vartheta(t) = (1/2N) sum_i |e_i|_1`.
pub fn metrics(log: &TrajectoryLog) -> (Vec<f64>, Vec<f64>) {
    let nu = log.series("nu").unwrap_or_default();
    let vartheta = log.series("vartheta").unwrap_or_default();
    (nu, vartheta)
}

/// The bundled five-arm experiment: unit-weight graph pinned at agent 1,
/// unit-circumradius pentagon offsets, the published gains and initial
/// conditions. The step size is 2.5e-4 s: the loop's fastest modes
/// (~5e3 1/s near a straight elbow) put the published-gain system outside
/// the RK4 stability region for steps above ~5e-4 s.
pub fn pentagon_scenario() -> SimConfig {
    use std::f64::consts::PI;
    let graph = crate::graph::pentagon_graph();
    let s2 = (2.0 * PI / 5.0).sin();
    let c2 = (2.0 * PI / 5.0).cos();
    let s1 = (PI / 5.0).sin();
    let c1 = (PI / 5.0).cos();
    let d = 1.0;
    let formation = FormationSpec::new(vec![
        DVector::from_vec(vec![0.0, d]),
        DVector::from_vec(vec![-d * s2, d * c2]),
        DVector::from_vec(vec![-d * s1, -d * c1]),
        DVector::from_vec(vec![d * s1, -d * c1]),
        DVector::from_vec(vec![d * s2, d * c2]),
    ])
    .expect("static offsets are well-formed");
    let gains = ControllerGains::new(4.0, 37.5, 380.0, 2.0, 0.005).expect("static gains");
    let tuning = TuningGains::new(0.05, 0.05, 0.05).expect("static tuning gains");
    let positions = [[2.1, 0.0], [0.0, 2.5], [-1.1, 2.0], [-1.8, 0.7], [-1.0, -1.7]];
    let agents0 = positions
        .iter()
        .map(|p| AgentState::new(DVector::from_vec(vec![p[0], p[1]]), DVector::zeros(2)))
        .collect();
    SimConfig {
        name: "pentagon".to_string(),
        graph,
        formation,
        gains,
        nn_gains: vec![tuning; 5],
        plant: PlantModel::TwoLinkArm(vec![TwoLinkArmParams::standard(); 5]),
        leader0: LeaderState::new(DVector::from_vec(vec![1.0, -1.0]), DVector::zeros(2)),
        agents0,
        dt: 2.5e-4,
        duration: 40.0,
        rng_seed: crate::DEFAULT_SEED,
        log_stride: 10,
        control_enabled: true,
        disturbance_enabled: true,
        weight_clamp: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn tiny_double_integrator(duration: f64) -> SimConfig {
        let mut cfg = pentagon_scenario();
        cfg.name = "equilibrium".into();
        cfg.plant = PlantModel::DoubleIntegrator;
        cfg.control_enabled = false;
        cfg.disturbance_enabled = false;
        cfg.duration = duration;
        cfg.dt = 1e-3;
        // leader at its rest point, agents exactly on formation
        cfg.leader0 = LeaderState::new(dvector![0.0, 0.0], dvector![0.0, 0.0]);
        cfg.agents0 = (0..5)
            .map(|i| AgentState::new(cfg.formation.offset(i).clone(), DVector::zeros(2)))
            .collect();
        cfg
    }

    #[test]
    fn equilibrium_is_preserved() {
        let cfg = tiny_double_integrator(0.5);
        let run = run(cfg.clone()).unwrap();
        let last = run.log.last_row().unwrap().clone();
        let p0 = cfg.formation.offset(0);
        let i_p1 = run.log.col("a1_p1").unwrap();
        assert!((last[i_p1] - p0[0]).abs() < 1e-14);
        for i in 0..5 {
            let v1 = run.log.series(&format!("a{}_v1", i + 1)).unwrap();
            let v2 = run.log.series(&format!("a{}_v2", i + 1)).unwrap();
            assert!(v1.iter().chain(v2.iter()).all(|&x| x.abs() < 1e-14));
        }
        let (nu, vartheta) = metrics(&run.log);
        assert!(nu.iter().all(|&x| x == 0.0));
        assert!(vartheta.iter().all(|&x| x.abs() < 1e-13));
    }

    #[test]
    fn zero_duration_logs_initial_state_only() {
        let mut cfg = pentagon_scenario();
        cfg.duration = 0.0;
        let run = run(cfg).unwrap();
        assert_eq!(run.log.rows.len(), 1);
        assert_eq!(run.log.rows[0][0], 0.0);
        // u(0) = 0 for every agent
        for i in 0..5 {
            let u1 = run.log.col(&format!("a{}_u1", i + 1)).unwrap();
            let u2 = run.log.col(&format!("a{}_u2", i + 1)).unwrap();
            assert_eq!(run.log.rows[0][u1], 0.0);
            assert_eq!(run.log.rows[0][u2], 0.0);
        }
        let nu = run.log.col("nu").unwrap();
        assert_eq!(run.log.rows[0][nu], 0.0);
    }

    #[test]
    fn leader_alone_rk4_self_convergence() {
        // Integrating only the leader: halving from 1e-3 to 1e-4 moves the
        // 1 s state by less than 1e-8.
        let integrate = |h: f64| {
            let mut s = LeaderState::new(dvector![1.0, -1.0], dvector![0.0, 0.0]);
            let mut y = DVector::from_vec(vec![s.p[0], s.p[1], s.v[0], s.v[1]]);
            let mut f = |_t: f64, y: &DVector<f64>| {
                let st = LeaderState::new(dvector![y[0], y[1]], dvector![y[2], y[3]]);
                let (pd, vd) = leader_derivative(&st);
                DVector::from_vec(vec![pd[0], pd[1], vd[0], vd[1]])
            };
            let steps = (1.0 / h).round() as usize;
            let mut t = 0.0;
            for _ in 0..steps {
                y = crate::rk4::rk4_step(&mut f, t, h, &y);
                t += h;
            }
            s.p[0] = y[0];
            s.p[1] = y[1];
            s.v[0] = y[2];
            s.v[1] = y[3];
            s
        };
        let a = integrate(1e-3);
        let b = integrate(1e-4);
        let diff = (a.p - b.p).amax().max((a.v - b.v).amax());
        assert!(diff < 1e-8, "diff {diff}");
    }

    #[test]
    fn pentagon_first_step_is_finite_and_logged() {
        let mut cfg = pentagon_scenario();
        cfg.duration = cfg.dt;
        cfg.log_stride = 1;
        let run = run(cfg).unwrap();
        assert_eq!(run.log.rows.len(), 2);
        assert!(run.log.rows[1].iter().all(|x| x.is_finite()));
        // warnings mention the rooted-only topology
        assert!(run.warnings.iter().any(|w| w.contains("strongly connected")));
    }

    #[test]
    fn determinism_same_seed_same_rows() {
        let mut cfg = pentagon_scenario();
        cfg.duration = 0.05;
        let a = run(cfg.clone()).unwrap();
        let b = run(cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.metadata.config_hash, b.metadata.config_hash);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = pentagon_scenario();
        cfg.dt = 0.0;
        assert!(matches!(run(cfg), Err(SimError::InvalidConfig(_))));

        let mut cfg = pentagon_scenario();
        cfg.nn_gains.pop();
        assert!(matches!(run(cfg), Err(SimError::InvalidConfig(_))));

        let mut cfg = pentagon_scenario();
        cfg.agents0[0] = AgentState::new(dvector![f64::NAN, 0.0], dvector![0.0, 0.0]);
        assert!(matches!(run(cfg), Err(SimError::InvalidConfig(_))));
    }
}
