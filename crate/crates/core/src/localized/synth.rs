use serde::{Deserialize, Serialize};

use super::{ExtensionDefaults, Init, Layout, LocalizedModel, Schedule, DEFAULT_MAX_LOCAL_ENTRIES};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizedOptions {
    pub kappa: usize,
    /// Softmax temperature γ.
    pub gamma: f64,
    /// Improvement rounds R per slot.
    pub rounds: usize,
    pub horizon: usize,
    #[serde(default)]
    pub defaults: ExtensionDefaults,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub init: Init,
    #[serde(default = "default_local_budget")]
    pub max_local_entries: u128,
}

fn default_local_budget() -> u128 {
    DEFAULT_MAX_LOCAL_ENTRIES
}

impl LocalizedOptions {
    pub fn new(kappa: usize, gamma: f64, rounds: usize, horizon: usize) -> Self {
        LocalizedOptions {
            kappa,
            gamma,
            rounds,
            horizon,
            defaults: ExtensionDefaults::default(),
            schedule: Schedule::default(),
            init: Init::default(),
            max_local_entries: DEFAULT_MAX_LOCAL_ENTRIES,
        }
    }
}

/// Per-device lookup tables `π_i[t][x·|P| + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTables {
    pub members: Vec<usize>,
    pub(crate) layout: Layout,
    pub tables: Vec<Vec<f64>>,
}

impl DeviceTables {
    pub fn components(&self) -> &[usize] {
        &self.layout.comps
    }

    pub fn radices(&self) -> &[usize] {
        &self.layout.radix
    }

    pub fn n_states(&self) -> usize {
        self.layout.size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedPolicy {
    pub kappa: usize,
    pub gamma: f64,
    pub rounds: usize,
    pub n_actions: usize,
    pub devices: Vec<DeviceTables>,
}

impl LocalizedPolicy {
    pub fn horizon_len(&self) -> usize {
        self.devices.first().map_or(0, |d| d.tables.len())
    }

    /// Device `i`'s action distribution at slot `t` in local state `x`.
    pub fn row(&self, i: usize, t: usize, x: usize) -> &[f64] {
        let na = self.n_actions;
        &self.devices[i].tables[t][x * na..(x + 1) * na]
    }

    pub(crate) fn from_parts(kappa: usize, gamma: f64, rounds: usize, n_actions: usize, devices: Vec<DeviceTables>) -> Self {
        LocalizedPolicy {
            kappa,
            gamma,
            rounds,
            n_actions,
            devices,
        }
    }
}

impl Policy for LocalizedPolicy {
    fn horizon(&self) -> usize {
        self.horizon_len()
    }

    fn marginals(&self, t: usize, _s: usize, comps: &[usize], out: &mut [Vec<f64>]) {
        for (i, row) in out.iter_mut().enumerate() {
            let x = self.devices[i].layout.index(comps);
            row.copy_from_slice(self.row(i, t, x));
        }
    }
}

/// Runs the localized policy iteration backward over the horizon.
pub fn synthesize(mdp: &Mdp, opts: &LocalizedOptions) -> Result<LocalizedPolicy> {
    let model = LocalizedModel::new(mdp, opts.kappa, opts.defaults, opts.max_local_entries)?;
    synthesize_with(mdp, &model, opts)
}

/// As [`synthesize`] with a prebuilt model, for sweeps over γ and R.
/// The model must have been built for `opts.kappa` and `opts.defaults`.
pub fn synthesize_with(mdp: &Mdp, model: &LocalizedModel, opts: &LocalizedOptions) -> Result<LocalizedPolicy> {
    let (gamma, rounds, horizon) = (opts.gamma, opts.rounds, opts.horizon);
    use rayon::prelude::*;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::arg("temperature must be positive and finite"));
    }
    let m = model.m();
    let mut tables: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); horizon]; m];
    let mut next: Option<Vec<Vec<f64>>> = None;
    for t in (0..horizon).rev() {
        let mut q: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| model.backward_step(mdp, i, next.as_ref().map(|n| n[i].as_slice())))
            .collect();
        let mut pi = model.initial_policy(&q, gamma, opts.init);
        for _ in 0..rounds {
            q = model.average(&q);
            pi = model.improve(&q, &pi, gamma, opts.schedule);
        }
        for (i, p) in pi.into_iter().enumerate() {
            tables[i][t] = p;
        }
        next = Some(q);
    }
    let devices = model
        .scopes
        .iter()
        .zip(tables)
        .map(|(sc, tables)| DeviceTables {
            members: sc.members.clone(),
            layout: sc.layout.clone(),
            tables,
        })
        .collect();
    Ok(LocalizedPolicy::from_parts(model.kappa, gamma, rounds, model.n_act, devices))
}

/// Largest total-variation distance over local states, per device and slot.
pub fn policy_distance(a: &LocalizedPolicy, b: &LocalizedPolicy) -> Result<Vec<Vec<f64>>> {
    let shape = |p: &LocalizedPolicy| -> Vec<(usize, Vec<usize>)> {
        p.devices.iter().map(|d| (d.n_states(), d.tables.iter().map(Vec::len).collect())).collect()
    };
    if a.n_actions != b.n_actions || shape(a) != shape(b) {
        return Err(Error::arg("policies have different shapes"));
    }
    let na = a.n_actions;
    Ok(a.devices
        .iter()
        .zip(&b.devices)
        .map(|(da, db)| {
            da.tables
                .iter()
                .zip(&db.tables)
                .map(|(ta, tb)| {
                    ta.chunks(na)
                        .zip(tb.chunks(na))
                        .map(|(ra, rb)| 0.5 * ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum::<f64>())
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect())
}
