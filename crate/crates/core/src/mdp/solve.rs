use rayon::prelude::*;

use super::{contract_backward, Mdp, DEFAULT_MAX_ENTRIES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Cap on `|S|·|P|`.
    pub max_entries: u128,
    /// Keep the full Q tables (every joint action, infeasible ones included).
    pub store_q: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_entries: DEFAULT_MAX_ENTRIES,
            store_q: false,
        }
    }
}

/// Time-indexed map from global state to joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPolicy {
    pub n_states: usize,
    /// `actions[t][s]`, `t` counted from 0.
    pub actions: Vec<Vec<u32>>,
}

impl DeterministicPolicy {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn stationary(layer: Vec<u32>, horizon: usize) -> Self {
        DeterministicPolicy {
            n_states: layer.len(),
            actions: vec![layer; horizon],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub policy: DeterministicPolicy,
    /// `values[t][s] = min_a Q_t(s, a)`.
    pub values: Vec<Vec<f64>>,
    /// `q[t][s·|P| + a]` when requested. Unaffordable actions use the
    /// post-decision battery `max(b - e, 0)` so every entry stays finite.
    pub q: Option<Vec<Vec<f64>>>,
}

impl Solution {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }
}

/// Affordable joint actions per battery configuration, ascending, with the
/// battery-index offset each one subtracts.
pub(crate) fn feasible_lists(mdp: &Mdp) -> Vec<Vec<(u32, u32)>> {
    let k = mdp.n_slots();
    let h = mdp.n_gain_states();
    (0..mdp.n_battery_states())
        .map(|bb| {
            let batts = mdp.decode_state(bb * h)[k..].to_vec();
            (0..mdp.n_joint_actions())
                .filter_map(|a| mdp.battery_offset(&batts, a).map(|off| (a as u32, off as u32)))
                .collect()
        })
        .collect()
}

pub(crate) fn check_budget(mdp: &Mdp, max_entries: u128) -> Result<()> {
    let entries = mdp.n_states() as u128 * mdp.n_joint_actions() as u128;
    if entries > max_entries {
        return Err(Error::TooLarge {
            what: "|S|·|P|".into(),
            entries,
            budget: max_entries,
        });
    }
    Ok(())
}

/// Exact finite-horizon dynamic programming. Ties go to the lowest joint
/// action index.
pub fn backward_induction(mdp: &Mdp, horizon: usize, opts: SolveOptions) -> Result<Solution> {
    check_budget(mdp, opts.max_entries)?;
    let ns = mdp.n_states();
    let na = mdp.n_joint_actions();
    let h = mdp.n_gain_states();
    let cost = mdp.cost_table();
    let feasible = feasible_lists(mdp);
    let axes = mdp.global_axes();

    let mut values = vec![Vec::new(); horizon];
    let mut actions = vec![Vec::new(); horizon];
    let mut qs = if opts.store_q { Some(vec![Vec::new(); horizon]) } else { None };
    let mut cont = vec![0.0; ns];
    for t in (0..horizon).rev() {
        if t + 1 < horizon {
            cont.clone_from(&values[t + 1]);
            contract_backward(&mut cont, &axes);
        }
        let w = &cont;
        let (v, act): (Vec<f64>, Vec<u32>) = (0..ns)
            .into_par_iter()
            .map(|s| {
                let (g, bb) = (s % h, s / h);
                let row = &cost[g * na..(g + 1) * na];
                let mut best = f64::INFINITY;
                let mut arg = 0;
                for &(a, off) in &feasible[bb] {
                    let q = row[a as usize] + w[g + h * (bb - off as usize)];
                    if q < best {
                        best = q;
                        arg = a;
                    }
                }
                (best, arg)
            })
            .unzip();
        if let Some(qs) = qs.as_mut() {
            let k = mdp.n_slots();
            let cost = &cost;
            qs[t] = (0..ns)
                .into_par_iter()
                .flat_map_iter(|s| {
                    let comps = mdp.decode_state(s);
                    let g = s % h;
                    (0..na).map(move |a| {
                        let acts = mdp.decode_action(a);
                        let mut post = 0;
                        let mut stride = 1;
                        for (i, &ai) in acts.iter().enumerate() {
                            post += comps[k + i].saturating_sub(mdp.energy_quanta(i, ai)) * stride;
                            stride *= mdp.battery_levels();
                        }
                        cost[g * na + a] + w[g + h * post]
                    })
                })
                .collect();
        }
        values[t] = v;
        actions[t] = act;
    }
    Ok(Solution {
        policy: DeterministicPolicy { n_states: ns, actions },
        values,
        q: qs,
    })
}
