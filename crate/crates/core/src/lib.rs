//! Interactive continual learning for a home-assistant robot: cluster-based
//! category memory with power-law forgetting, a short-term buffer that
//! consolidates repeated encounters, conceptual-space context maps, and a
//! simulated home in which the robot fetches objects.

pub mod cluster;
pub mod context;
pub mod decay;
pub mod engine;
pub mod error;
pub mod feature;
pub mod harness;
pub mod home;
pub mod memory;
pub mod report;
pub mod scenario;

pub use cluster::{ActivationReport, CategoryNetwork, Cluster, LearnOutcome, NetworkConfig};
pub use decay::DecayConfig;
pub use engine::{Engine, EngineConfig};
pub use error::{Error, Result};
pub use feature::FeatureVector;
pub use memory::{MemoryConfig, MemoryKind, MemoryStore};
pub use harness::{run_joint_baseline, run_scenario, RunReport};
pub use scenario::ScenarioScript;
