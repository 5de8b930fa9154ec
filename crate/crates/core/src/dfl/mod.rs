//! Decentralized learning over lossy links, driven by a power-control policy.

mod bound;
mod sim;
mod task;

pub use bound::{participation_sum, convergence_bound, BoundTerms};
pub use sim::{average_model, local_sgd, DflRun, DflState, LinkMode, MetricsRow, SimOptions, Simulator, SlotRecord};
pub use task::{LearnConsts, LearningTask, TaskKind, TaskSpec};
