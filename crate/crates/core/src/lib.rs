//! Online distributed optimization over fixed and switching directed
//! networks: weighted dual averaging with adaptive link weights, consensus
//! diagnostics, regret bounds and a sensor-estimation testbed.

pub mod doa;
pub mod dwda;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod stochastic;
pub mod switching;

pub use doa::{assemble_comm_matrix, AllocatorState, NeighborhoodDistribution};
pub use dwda::{dwda_step, evaluate, project, AgentState, FeasibleSet, LossOracle, StepSchedule};
pub use error::{Error, Result};
pub use graph::{generate, GraphFamily, GraphFamilySpec, WeightedDigraph};
pub use linalg::Matrix;
pub use metrics::{BoundInputs, Normalization, RegretSeries};
pub use scenario::{EstimationOracle, NoiseFamily, ScenarioParams, SensorModel};
pub use stochastic::{BackwardProduct, CommMatrix, WeightingVector};
pub use switching::{ScheduleMode, TopologySchedule};
