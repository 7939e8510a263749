//! Deterministic tick-driven network of simulated nodes.

mod engine;
mod invariants;
pub mod lightweight;
pub mod message;
pub mod node;
pub mod report;
pub mod scenario;

pub use engine::{run, run_with_seed, SimError, Simulation};
pub use report::{ReportFile, SimulationOutcome, SimulationReport};
pub use scenario::{AdversaryAction, ForgeStyle, Invariant, Scenario, ScenarioError};
