//! Scheduling and power control for decentralized federated learning over
//! energy-harvesting wireless devices.
//!
//! The exact model is a finite-horizon multi-device MDP ([`mdp`]) whose
//! state is every link's fading level plus every battery. [`localized`]
//! builds per-device policies that only look at a κ-hop neighbourhood,
//! [`dfl`] trains a model with gossip SGD under a schedule, and
//! [`harness`] ties it together from a TOML file.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod boundlab;
pub mod channel;
pub mod dfl;
pub mod energy;
pub mod error;
pub mod harness;
pub mod localized;
pub mod mdp;
pub mod rng;
pub mod topology;

pub use baselines::{myopic_central, BaselineKind, Greedy};
pub use channel::{ChannelChain, GainLevels, RadioParams};
pub use dfl::{DflRun, LearnConsts, LearningTask, LinkMode, SimOptions, Simulator, TaskKind, TaskSpec};
pub use energy::{EnergyParams, HarvestModel};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, Loaded, PolicyKind};
pub use localized::{synthesize, Init, LocalizedOptions, LocalizedPolicy, Schedule};
pub use mdp::{backward_induction, evaluate_exact, evaluate_mc, InitialState, Mdp, MdpParts, Policy, SolveOptions};
pub use topology::{Topology, TopologyKind};
