//! Scenario files: a TOML schema mirroring [`SimConfig`], used by the CLI
//! and for deterministic configuration fingerprints.
//!
//! Agent indices in the file are 1-based. An edge `{ from = 5, to = 1 }`
//! means information flows from agent 5 to agent 1, i.e. agent 1 listens to
//! agent 5.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::controller::{ControllerGains, FormationSpec};
use crate::graph::WeightedDigraph;
use crate::nn::TuningGains;
use crate::plant::{AgentState, LeaderState, TwoLinkArmParams};
use crate::sim::{PlantModel, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("TOML parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub scenario: ScenarioSection,
    pub graph: GraphSection,
    pub gains: GainsSection,
    pub nn: NnSection,
    pub formation: FormationSection,
    pub plant: PlantSection,
    pub leader: LeaderSection,
    pub agents: Vec<AgentSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub name: String,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub log_stride: usize,
    #[serde(default = "default_true")]
    pub control_enabled: bool,
    #[serde(default = "default_true")]
    pub disturbance_enabled: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    pub n_agents: usize,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub pinned: Vec<PinSpec>,
}

/// Directed edge `from -> to` (information flow), 1-based agents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinSpec {
    pub agent: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainsSection {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub deadzone: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Optional per-agent overrides; when present must cover every agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_agent: Option<Vec<TuningGains>>,
    /// Optional Frobenius-norm safety clamp on the weight matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_clamp: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormationSection {
    pub offsets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantSection {
    /// `two_link_arm` or `double_integrator`.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<TwoLinkArmParams>,
    /// Per-agent parameter overrides (1-based agent index).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agent_overrides: Vec<PlantOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantOverride {
    pub agent: usize,
    #[serde(flatten)]
    pub params: TwoLinkArmParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderSection {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSection {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl ScenarioFile {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialization cannot fail")
    }

    /// Builds the runnable configuration, validating every cross-reference.
    pub fn build(&self) -> Result<SimConfig, ConfigError> {
        let na = self.graph.n_agents;
        if na == 0 {
            return Err(invalid("n_agents must be at least 1"));
        }
        let mut adjacency = DMatrix::zeros(na, na);
        for e in &self.graph.edges {
            if e.from == 0 || e.from > na || e.to == 0 || e.to > na {
                return Err(invalid(format!("edge {} -> {} out of range", e.from, e.to)));
            }
            if adjacency[(e.to - 1, e.from - 1)] != 0.0 {
                return Err(invalid(format!("duplicate edge {} -> {}", e.from, e.to)));
            }
            adjacency[(e.to - 1, e.from - 1)] = e.weight;
        }
        let mut pins = DVector::zeros(na);
        for p in &self.graph.pinned {
            if p.agent == 0 || p.agent > na {
                return Err(invalid(format!("pinned agent {} out of range", p.agent)));
            }
            pins[p.agent - 1] = p.weight;
        }
        let graph = WeightedDigraph::new(adjacency, pins).map_err(|e| invalid(e.to_string()))?;

        let offsets = self
            .formation
            .offsets
            .iter()
            .map(|d| DVector::from_vec(d.clone()))
            .collect();
        let formation = FormationSpec::new(offsets).map_err(invalid)?;

        let g = &self.gains;
        let gains =
            ControllerGains::new(g.k1, g.k2, g.k3, g.k4, g.deadzone).map_err(invalid)?;

        let nn_gains: Vec<TuningGains> = match &self.nn.per_agent {
            Some(list) => {
                if list.len() != na {
                    return Err(invalid(format!(
                        "nn.per_agent has {} entries for {na} agents",
                        list.len()
                    )));
                }
                for t in list {
                    TuningGains::new(t.alpha, t.beta, t.gamma).map_err(invalid)?;
                }
                list.clone()
            }
            None => {
                let t = TuningGains::new(self.nn.alpha, self.nn.beta, self.nn.gamma)
                    .map_err(invalid)?;
                vec![t; na]
            }
        };

        let plant = match self.plant.model.as_str() {
            "two_link_arm" => {
                let base = self.plant.params.unwrap_or_else(TwoLinkArmParams::standard);
                TwoLinkArmParams::new(base.m1_kg, base.m2_kg, base.r1_m, base.r2_m, base.g_mps2)
                    .map_err(invalid)?;
                let mut per_agent = vec![base; na];
                for o in &self.plant.agent_overrides {
                    if o.agent == 0 || o.agent > na {
                        return Err(invalid(format!("plant override agent {} out of range", o.agent)));
                    }
                    TwoLinkArmParams::new(
                        o.params.m1_kg,
                        o.params.m2_kg,
                        o.params.r1_m,
                        o.params.r2_m,
                        o.params.g_mps2,
                    )
                    .map_err(invalid)?;
                    per_agent[o.agent - 1] = o.params;
                }
                PlantModel::TwoLinkArm(per_agent)
            }
            "double_integrator" => PlantModel::DoubleIntegrator,
            other => return Err(invalid(format!("unknown plant model {other:?}"))),
        };

        let leader0 = LeaderState::new(
            DVector::from_vec(self.leader.position.clone()),
            DVector::from_vec(self.leader.velocity.clone()),
        );
        if self.agents.len() != na {
            return Err(invalid(format!("{} agent sections for {na} agents", self.agents.len())));
        }
        let agents0 = self
            .agents
            .iter()
            .map(|a| {
                AgentState::new(
                    DVector::from_vec(a.position.clone()),
                    DVector::from_vec(a.velocity.clone()),
                )
            })
            .collect();

        let cfg = SimConfig {
            name: self.scenario.name.clone(),
            graph,
            formation,
            gains,
            nn_gains,
            plant,
            leader0,
            agents0,
            dt: self.scenario.dt,
            duration: self.scenario.duration,
            rng_seed: self.scenario.seed,
            log_stride: self.scenario.log_stride,
            control_enabled: self.scenario.control_enabled,
            disturbance_enabled: self.scenario.disturbance_enabled,
            weight_clamp: self.nn.weight_clamp,
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Mirrors a runnable configuration back into the file schema
    /// (full-precision floats, so emit/parse round-trips bit-exactly).
    pub fn from_config(cfg: &SimConfig) -> Self {
        let na = cfg.n_agents();
        let mut edges = Vec::new();
        for i in 0..na {
            for j in 0..na {
                let w = cfg.graph.weight(i, j);
                if w > 0.0 {
                    edges.push(EdgeSpec { from: j + 1, to: i + 1, weight: w });
                }
            }
        }
        let pinned = (0..na)
            .filter(|&i| cfg.graph.leader_weights()[i] > 0.0)
            .map(|i| PinSpec { agent: i + 1, weight: cfg.graph.leader_weights()[i] })
            .collect();
        let (model, params, agent_overrides) = match &cfg.plant {
            PlantModel::TwoLinkArm(per_agent) => {
                let base = per_agent[0];
                let overrides = per_agent
                    .iter()
                    .enumerate()
                    .skip(1)
                    .filter(|(_, p)| **p != base)
                    .map(|(i, p)| PlantOverride { agent: i + 1, params: *p })
                    .collect();
                ("two_link_arm".to_string(), Some(base), overrides)
            }
            PlantModel::DoubleIntegrator => ("double_integrator".to_string(), None, Vec::new()),
        };
        let uniform = cfg.nn_gains.windows(2).all(|w| w[0] == w[1]);
        ScenarioFile {
            scenario: ScenarioSection {
                name: cfg.name.clone(),
                dt: cfg.dt,
                duration: cfg.duration,
                seed: cfg.rng_seed,
                log_stride: cfg.log_stride,
                control_enabled: cfg.control_enabled,
                disturbance_enabled: cfg.disturbance_enabled,
            },
            graph: GraphSection { n_agents: na, edges, pinned },
            gains: GainsSection {
                k1: cfg.gains.k1,
                k2: cfg.gains.k2,
                k3: cfg.gains.k3,
                k4: cfg.gains.k4,
                deadzone: cfg.gains.deadzone_b,
            },
            nn: NnSection {
                alpha: cfg.nn_gains[0].alpha,
                beta: cfg.nn_gains[0].beta,
                gamma: cfg.nn_gains[0].gamma,
                per_agent: if uniform { None } else { Some(cfg.nn_gains.clone()) },
                weight_clamp: cfg.weight_clamp,
            },
            formation: FormationSection {
                offsets: (0..na)
                    .map(|i| cfg.formation.offset(i).iter().copied().collect())
                    .collect(),
            },
            plant: PlantSection { model, params, agent_overrides },
            leader: LeaderSection {
                position: cfg.leader0.p.iter().copied().collect(),
                velocity: cfg.leader0.v.iter().copied().collect(),
            },
            agents: cfg
                .agents0
                .iter()
                .map(|a| AgentSection {
                    position: a.p.iter().copied().collect(),
                    velocity: a.v.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Loads and builds a scenario in one call.
pub fn load(path: &Path) -> Result<SimConfig, ConfigError> {
    ScenarioFile::from_path(path)?.build()
}

/// Canonical TOML used to fingerprint a configuration.
pub fn canonical_toml(cfg: &SimConfig) -> String {
    ScenarioFile::from_config(cfg).to_toml_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::pentagon_scenario;

    #[test]
    fn pentagon_round_trips_bit_exactly() {
        let cfg = pentagon_scenario();
        let emitted = ScenarioFile::from_config(&cfg).to_toml_string();
        let rebuilt = ScenarioFile::from_toml_str(&emitted).unwrap().build().unwrap();
        assert_eq!(rebuilt.graph, cfg.graph);
        assert_eq!(rebuilt.formation, cfg.formation);
        assert_eq!(rebuilt.gains, cfg.gains);
        assert_eq!(rebuilt.agents0, cfg.agents0);
        assert_eq!(rebuilt.leader0, cfg.leader0);
        assert_eq!(rebuilt.dt, cfg.dt);
        assert_eq!(canonical_toml(&rebuilt), emitted);
    }

    #[test]
    fn rejects_bad_edges_and_counts() {
        let cfg = pentagon_scenario();
        let mut file = ScenarioFile::from_config(&cfg);
        file.graph.edges.push(EdgeSpec { from: 9, to: 1, weight: 1.0 });
        assert!(matches!(file.build(), Err(ConfigError::Invalid(_))));

        let mut file = ScenarioFile::from_config(&cfg);
        file.agents.pop();
        assert!(matches!(file.build(), Err(ConfigError::Invalid(_))));

        let mut file = ScenarioFile::from_config(&cfg);
        file.plant.model = "hovercraft".into();
        assert!(matches!(file.build(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn per_agent_overrides_apply() {
        let cfg = pentagon_scenario();
        let mut file = ScenarioFile::from_config(&cfg);
        file.plant.agent_overrides.push(PlantOverride {
            agent: 3,
            params: TwoLinkArmParams { m1_kg: 0.9, ..TwoLinkArmParams::standard() },
        });
        file.nn.per_agent = Some(
            (0..5)
                .map(|i| TuningGains::new(0.05 + 0.01 * i as f64, 0.05, 0.05).unwrap())
                .collect(),
        );
        let built = file.build().unwrap();
        match &built.plant {
            PlantModel::TwoLinkArm(p) => {
                assert_eq!(p[2].m1_kg, 0.9);
                assert_eq!(p[0].m1_kg, 0.8);
            }
            _ => panic!("expected arm model"),
        }
        assert!((built.nn_gains[4].alpha - 0.09).abs() < 1e-15);
    }
}
