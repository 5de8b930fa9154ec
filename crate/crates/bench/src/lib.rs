//! Instances shared by the benchmarks.

use std::path::PathBuf;

use ehdfl::{ExperimentConfig, Mdp};

/// Loads a shipped scenario by file name and builds its MDP.
pub fn scenario(name: &str) -> (ExperimentConfig, Mdp) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let loaded = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mdp = loaded.config.mdp().expect("scenario builds");
    (loaded.config, mdp)
}

pub const TINY: [&str; 3] = ["tiny_line3.toml", "tiny_complete3.toml", "tiny_ring4.toml"];
