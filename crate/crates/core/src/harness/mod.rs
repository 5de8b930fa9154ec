//! Configuration, experiment orchestration and the self-check suite.

mod config;
mod experiment;
mod verify;

pub use config::{
    output_dir, ChannelModel, ChannelSpec, EvalMethod, EvalSpec, ExperimentConfig, GammaChoice, GammaName, GapSweep,
    HarvestSpec, Loaded, LocalizedSpec, PolicyKind, RadioSpec, SolverSpec, SweepSpec, TopologySpec, TrainSpec,
};
pub use experiment::*;
pub use verify::{run_verify, verify, Check, Status, VerifyReport};
