//! Experiment configuration: one TOML file, validated on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundlab::{gamma_cap, normalized_q_bound};
use crate::channel::{ChannelChain, GainLevels, RadioParams};
use crate::dfl::{LinkMode, TaskSpec};
use crate::energy::{solar_harvest, EnergyParams, HarvestModel};
use crate::error::{Error, Result};
use crate::localized::{ExtensionDefaults, Init, LocalizedOptions, Schedule, DEFAULT_MAX_LOCAL_ENTRIES};
use crate::mdp::{Mdp, MdpParts, DEFAULT_MAX_ENTRIES};
use crate::topology::{Topology, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    CentralizedPi,
    DecentralizedPi,
    MyopicCentral,
    Greedy,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::CentralizedPi,
        PolicyKind::DecentralizedPi,
        PolicyKind::MyopicCentral,
        PolicyKind::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::CentralizedPi => "centralized_pi",
            PolicyKind::DecentralizedPi => "decentralized_pi",
            PolicyKind::MyopicCentral => "myopic_central",
            PolicyKind::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    #[serde(flatten)]
    pub kind: TopologyKind,
    pub m: usize,
    /// Seed for random graphs.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum ChannelModel {
    /// Equiprobable quantization of Rayleigh fading.
    Rayleigh {
        levels: usize,
        mean_gain: f64,
        doppler_hz: f64,
        /// Slot duration (s).
        slot_s: f64,
    },
    /// Tridiagonal chain from crossing rates; `crossing[0]` is unused.
    Crossing {
        gains: Vec<f64>,
        steady: Vec<f64>,
        crossing: Vec<f64>,
        slot_s: f64,
    },
    Matrix {
        gains: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    /// Gains never change.
    Static { gains: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// One chain per undirected link, shared by both directions.
    #[serde(default = "yes")]
    pub reciprocal: bool,
    #[serde(flatten)]
    pub model: ChannelModel,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSpec {
    /// Waterfall threshold.
    pub phi: f64,
    /// Receiver noise variance, shared by all devices.
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum HarvestSpec {
    /// Harvested joules per slot and their probabilities.
    Discrete { support: Vec<f64>, probs: Vec<f64> },
    /// Irradiance levels (W/m²) on a 25 cm², 20 %-efficient panel.
    Solar {
        irradiance: Vec<f64>,
        probs: Vec<f64>,
        slot_s: f64,
    },
}

impl HarvestSpec {
    pub fn model(&self) -> HarvestModel {
        match self {
            HarvestSpec::Discrete { support, probs } => HarvestModel {
                support: support.clone(),
                probs: probs.clone(),
            },
            HarvestSpec::Solar { irradiance, probs, slot_s } => solar_harvest(irradiance, probs, *slot_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedSpec {
    pub gamma: f64,
    pub rounds: usize,
    #[serde(default = "two")]
    pub kappa: usize,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub defaults: ExtensionDefaults,
    #[serde(default = "local_budget")]
    pub max_local_entries: u128,
}

fn two() -> usize {
    2
}

fn local_budget() -> u128 {
    DEFAULT_MAX_LOCAL_ENTRIES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "global_budget")]
    pub max_entries: u128,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            max_entries: DEFAULT_MAX_ENTRIES,
        }
    }
}

fn global_budget() -> u128 {
    DEFAULT_MAX_ENTRIES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    /// Learning rate; the convergence-bound prescription when absent.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub links: LinkMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Exact when the solver budget allows it, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    #[serde(default)]
    pub method: EvalMethod,
    #[serde(default = "mc_samples")]
    pub mc_samples: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            method: EvalMethod::Auto,
            mc_samples: mc_samples(),
        }
    }
}

fn mc_samples() -> usize {
    4000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaChoice {
    Value(f64),
    /// `"cap"`: the largest temperature covered by the decay guarantee.
    Named(GammaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaName {
    Cap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSweep {
    pub gammas: Vec<GammaChoice>,
    pub kappas: Vec<usize>,
    pub r_max: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Improvement rounds for the final-metric-vs-R curve.
    #[serde(default)]
    pub rounds: Vec<usize>,
    /// Battery level counts at a fixed quantum.
    #[serde(default)]
    pub battery_levels: Vec<usize>,
    /// Devices for the battery sweep, when smaller than the main network.
    #[serde(default)]
    pub battery_m: Option<usize>,
    #[serde(default)]
    pub kappas: Vec<usize>,
    #[serde(default)]
    pub gap: Option<GapSweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    /// Slots per episode `T`.
    pub horizon: usize,
    pub policies: Vec<PolicyKind>,
    pub topology: TopologySpec,
    pub channel: ChannelSpec,
    pub radio: RadioSpec,
    /// Transmit power levels (W), starting at 0.
    pub powers: Vec<f64>,
    pub energy: EnergyParams,
    pub harvest: HarvestSpec,
    #[serde(default = "unit")]
    pub cost_scale: f64,
    pub localized: LocalizedSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub task: TaskSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub evaluation: EvalSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn unit() -> f64 {
    1.0
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            eta: None,
            links: LinkMode::Physical,
        }
    }
}

/// A validated configuration with its canonical hash and advisory notes.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub hash: String,
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Loaded> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)?.validated()
    }

    /// SHA-256 of the canonical JSON form (fields in declaration order).
    pub fn canonical_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::build(self.topology.kind, self.topology.m, self.topology.seed)
    }

    pub fn chain(&self) -> Result<ChannelChain> {
        match &self.channel.model {
            ChannelModel::Rayleigh {
                levels,
                mean_gain,
                doppler_hz,
                slot_s,
            } => ChannelChain::rayleigh(*levels, *mean_gain, *doppler_hz, *slot_s),
            ChannelModel::Crossing {
                gains,
                steady,
                crossing,
                slot_s,
            } => {
                if crossing.len() != gains.len() {
                    return Err(Error::arg("channel.crossing needs one rate per gain level"));
                }
                ChannelChain::from_crossing(GainLevels::new(gains.clone())?, |k| crossing[k], steady, *slot_s)
            }
            ChannelModel::Matrix { gains, transition } => {
                ChannelChain::from_matrix(GainLevels::new(gains.clone())?, transition.concat())
            }
            ChannelModel::Static { gains } => Ok(ChannelChain::identity(GainLevels::new(gains.clone())?)),
        }
    }

    /// The MDP of the configured network.
    pub fn mdp(&self) -> Result<Mdp> {
        self.mdp_with(self.topology()?, self.energy.levels)
    }

    /// Same physics on another network and battery grid. The battery quantum
    /// is kept, so `b_max` scales with `levels`.
    pub fn mdp_with(&self, topology: Topology, levels: usize) -> Result<Mdp> {
        let m = topology.m();
        let quantum = self.energy.quantum();
        let energy = EnergyParams {
            levels,
            b_max: quantum * levels.saturating_sub(1) as f64,
            ..self.energy.clone()
        };
        Mdp::new(MdpParts {
            topology,
            chains: vec![self.chain()?],
            reciprocal: self.channel.reciprocal,
            radio: RadioParams::uniform(self.radio.phi, self.radio.sigma2, self.energy.tau, m),
            powers: self.powers.clone(),
            energy: vec![energy],
            harvest: vec![self.harvest.model()],
            cost_scale: self.cost_scale,
        })
    }

    pub fn localized_options(&self, kappa: usize, rounds: usize) -> LocalizedOptions {
        let l = &self.localized;
        LocalizedOptions {
            kappa,
            gamma: l.gamma,
            rounds,
            horizon: self.horizon,
            defaults: l.defaults,
            schedule: l.schedule,
            init: l.init,
            max_local_entries: l.max_local_entries,
        }
    }

    /// Itemized validation; returns the hash and advisory warnings on success.
    pub fn validated(self) -> Result<Loaded> {
        let mut bad = Vec::new();
        let mut warnings = Vec::new();
        if self.seeds.is_empty() {
            bad.push("seeds must not be empty".to_string());
        }
        if self.policies.is_empty() {
            bad.push("policies must not be empty".to_string());
        }
        if let Err(e) = self.energy.validate() {
            bad.push(format!("energy: {e}"));
        }
        if let Err(e) = self.harvest.model().validate() {
            bad.push(format!("harvest: {e}"));
        }
        if self.energy.levels >= 2 && self.energy.b_max > 0.0 {
            let q = self.energy.quantum();
            for (k, u) in self.harvest.model().support.iter().enumerate() {
                let r = u / q;
                if (r - r.round()).abs() > 1e-6 {
                    warnings.push(format!(
                        "harvest amount {k} ({u:e} J) is not a multiple of the battery quantum; snapped to {} quanta",
                        (r + 0.5).floor()
                    ));
                }
            }
        }
        if !(self.localized.gamma > 0.0) || !self.localized.gamma.is_finite() {
            bad.push("localized.gamma must be positive and finite".into());
        }
        if self.localized.kappa > 3 {
            bad.push("localized.kappa must be at most 3".into());
        }
        if let Some(sw) = &self.sweep.gap {
            if sw.kappas.iter().any(|&k| k > 3) {
                bad.push("sweep.gap.kappas must be at most 3".into());
            }
            if sw.gammas.iter().any(|g| matches!(g, GammaChoice::Value(v) if !(*v > 0.0))) {
                bad.push("sweep.gap.gammas must be positive".into());
            }
        }
        if self.sweep.kappas.iter().any(|&k| k > 3) {
            bad.push("sweep.kappas must be at most 3".into());
        }
        if self.sweep.battery_levels.iter().any(|&l| l < 2) {
            bad.push("sweep.battery_levels entries must be at least 2".into());
        }
        if matches!(self.train.eta, Some(e) if !(e >= 0.0)) {
            bad.push("train.eta must be nonnegative".into());
        }
        if self.evaluation.mc_samples < 2 {
            bad.push("evaluation.mc_samples must be at least 2".into());
        }
        bad.extend(self.task.validate());
        if let Err(e) = self.topology() {
            bad.push(format!("topology: {e}"));
        } else if bad.is_empty() {
            match self.mdp() {
                Err(e) => bad.push(format!("model: {e}")),
                Ok(mdp) => {
                    let q = normalized_q_bound(&mdp, self.horizon);
                    let cap = gamma_cap(mdp.m(), mdp.n_joint_actions(), q);
                    if self.localized.gamma > cap {
                        warnings.push(format!(
                            "localized.gamma = {} exceeds the decay-guarantee cap {cap:.3e}",
                            self.localized.gamma
                        ));
                    }
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        let hash = self.canonical_hash();
        Ok(Loaded {
            config: self,
            hash,
            warnings,
        })
    }
}

/// Resolves relative output directories against the working directory.
pub fn output_dir(arg: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    arg.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const TINY: &str = r#"
name = "tiny"
seeds = [1, 2]
horizon = 3
policies = ["centralized_pi", "decentralized_pi", "myopic_central", "greedy"]
powers = [0.0, 0.5]

[topology]
kind = "line"
m = 3

[channel]
model = "matrix"
gains = [0.4, 1.5]
transition = [[0.7, 0.3], [0.4, 0.6]]

[radio]
phi = 0.3
sigma2 = 0.2

[energy]
k_steps = 1
cpu_hz = 1.0
cycles_per_sample = 0.5
batch = 1
tau = 1.0
b_max = 1.0
levels = 2

[harvest]
model = "discrete"
support = [0.0, 1.0]
probs = [0.6, 0.4]

[localized]
gamma = 20.0
rounds = 5
kappa = 1

[task]
kind = "quadratic"
dim = 3
samples = 20
heterogeneity = 0.5
grad_noise = 0.1

[train]
eta = 0.05
"#;

    #[test]
    fn parses_and_hashes_stably() {
        let a = ExperimentConfig::from_toml(TINY).unwrap().validated().unwrap();
        let b = ExperimentConfig::from_toml(&TINY.replace("[radio]", "# comment\n[radio]")).unwrap().validated().unwrap();
        assert_eq!(a.hash, b.hash);
        let c = ExperimentConfig::from_toml(&TINY.replace("phi = 0.3", "phi = 0.31")).unwrap().validated().unwrap();
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.config.mdp().unwrap().n_states(), 4 * 8);
        assert!(a.warnings.iter().any(|w| w.contains("gamma")));
    }

    #[test]
    fn validation_is_itemized() {
        let text = TINY
            .replace("seeds = [1, 2]", "seeds = []")
            .replace("gamma = 20.0", "gamma = -1.0")
            .replace("dim = 3", "dim = 0");
        match ExperimentConfig::from_toml(&text).unwrap().validated() {
            Err(Error::Validation(items)) => assert_eq!(items.len(), 3, "{items:?}"),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_toml(&TINY.replace("[radio]", "[radio]\nbogus = 1")).is_err());
    }

    #[test]
    fn battery_grid_keeps_quantum() {
        let cfg = ExperimentConfig::from_toml(TINY).unwrap();
        let mdp = cfg.mdp_with(cfg.topology().unwrap(), 4).unwrap();
        assert_eq!(mdp.battery_levels(), 4);
        assert!((mdp.energy()[0].b_max - 3.0).abs() < 1e-12);
    }
}
