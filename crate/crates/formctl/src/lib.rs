//! Leader-following formation control of second-order nonlinear multi-agent
//! systems: interaction-graph certificates, an online-tuned three-layer
//! neural network combined with robust integral-of-sign-of-error feedback,
//! two-link arm plant models, and a deterministic fixed-step closed-loop
//! simulator with CSV trajectory export.

pub mod config;
pub mod controller;
pub mod graph;
pub mod nn;
pub mod plant;
pub mod rk4;
pub mod sim;
pub mod trajectory;

pub use nalgebra;

pub use config::{ConfigError, ScenarioFile};
pub use controller::{ControllerGains, ControllerState, FormationSpec};
pub use graph::{GainThresholds, GraphCertificates, GraphError, WeightedDigraph};
pub use nn::{neuron_counts, ThreeLayerNn, TuningGains};
pub use plant::{AgentState, LeaderState, TwoLinkArmParams};
pub use sim::{pentagon_scenario, PlantModel, SimConfig, SimError, SimRun};
pub use trajectory::{RunMetadata, TrajectoryLog};

/// Seed used when a scenario or CLI invocation does not specify one.
pub const DEFAULT_SEED: u64 = 42;
