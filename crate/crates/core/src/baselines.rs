//! Myopic benchmark schedulers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mdp::solve::feasible_lists;
use crate::mdp::{DeterministicPolicy, Mdp, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    MyopicCentral,
    #[serde(alias = "uncoordinated_greedy")]
    Greedy,
}

/// Per-state minimizer of the instantaneous cost over affordable joint
/// actions, repeated for `horizon` slots. Ties go to the lowest total power,
/// then the lowest joint index.
pub fn myopic_central(mdp: &Mdp, horizon: usize) -> DeterministicPolicy {
    let na = mdp.n_joint_actions();
    let h = mdp.n_gain_states();
    let cost = mdp.cost_table();
    let feasible = feasible_lists(mdp);
    let total_power: Vec<f64> = (0..na)
        .map(|a| mdp.decode_action(a).iter().map(|&k| mdp.powers()[k]).sum())
        .collect();
    let layer: Vec<u32> = (0..mdp.n_states())
        .into_par_iter()
        .map(|s| {
            let (g, bb) = (s % h, s / h);
            let row = &cost[g * na..(g + 1) * na];
            let mut best = (f64::INFINITY, f64::INFINITY, 0u32);
            for &(a, _) in &feasible[bb] {
                let key = (row[a as usize], total_power[a as usize]);
                if key.0 < best.0 || (key.0 == best.0 && key.1 < best.1) {
                    best = (key.0, key.1, a);
                }
            }
            best.2
        })
        .collect();
    DeterministicPolicy::stationary(layer, horizon)
}

/// Every device spends as much as its battery allows on its own.
#[derive(Debug, Clone)]
pub struct Greedy {
    horizon: usize,
    n_slots: usize,
    e_q: Vec<Vec<usize>>,
}

impl Greedy {
    pub fn new(mdp: &Mdp, horizon: usize) -> Self {
        Greedy {
            horizon,
            n_slots: mdp.n_slots(),
            e_q: (0..mdp.m())
                .map(|i| (0..mdp.n_actions()).map(|a| mdp.energy_quanta(i, a)).collect())
                .collect(),
        }
    }

    /// Highest power level device `i` can afford at battery level `b`.
    pub fn act(&self, i: usize, b: usize) -> usize {
        self.e_q[i].iter().rposition(|&e| e <= b).unwrap_or(0)
    }
}

impl Policy for Greedy {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn marginals(&self, _t: usize, _s: usize, comps: &[usize], out: &mut [Vec<f64>]) {
        for (i, row) in out.iter_mut().enumerate() {
            row.fill(0.0);
            row[self.act(i, comps[self.n_slots + i])] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::feasible_actions;
    use crate::mdp::testutil::tiny;
    use crate::mdp::{backward_induction, evaluate_exact, InitialState, SolveOptions};
    use crate::topology::TopologyKind;

    #[test]
    fn horizon_one_matches_optimal() {
        let mdp = tiny(TopologyKind::Line, 3, 3, false);
        let my = myopic_central(&mdp, 1);
        let opt = backward_induction(&mdp, 1, SolveOptions::default()).unwrap();
        assert_eq!(my.actions, opt.policy.actions);
    }

    #[test]
    fn myopic_is_exhaustive_argmin() {
        let mdp = tiny(TopologyKind::Complete, 3, 2, false);
        let my = myopic_central(&mdp, 1);
        for s in 0..mdp.n_states() {
            let c = mdp.one_step_cost(s, my.actions[0][s] as usize).unwrap();
            for a in 0..mdp.n_joint_actions() {
                if let Ok(other) = mdp.one_step_cost(s, a) {
                    assert!(c <= other);
                }
            }
        }
        let empty = mdp.encode_state(&[1, 0, 1, 0, 0, 0]).unwrap();
        assert_eq!(my.actions[0][empty], 0);
    }

    #[test]
    fn greedy_takes_highest_affordable_level() {
        let mdp = tiny(TopologyKind::Line, 2, 3, false);
        let g = Greedy::new(&mdp, 1);
        for b in 0..3 {
            let best = *feasible_actions(b, mdp.powers(), &mdp.energy()[0]).last().unwrap();
            assert_eq!(g.act(0, b), best);
        }
        assert_eq!(g.act(0, 0), 0);
    }

    #[test]
    fn optimum_beats_baselines() {
        for (kind, m, levels) in [(TopologyKind::Line, 2, 3), (TopologyKind::Complete, 3, 2), (TopologyKind::Line, 3, 2)] {
            let mdp = tiny(kind, m, levels, false);
            let init = InitialState::Distribution(mdp.steady_uniform_init());
            let opt = backward_induction(&mdp, 3, SolveOptions::default()).unwrap();
            let j_star = evaluate_exact(&mdp, &opt.policy, &init).unwrap();
            let j_my = evaluate_exact(&mdp, &myopic_central(&mdp, 3), &init).unwrap();
            let j_g = evaluate_exact(&mdp, &Greedy::new(&mdp, 3), &init).unwrap();
            assert!(j_star <= j_my + 1e-12 && j_star <= j_g + 1e-12);
        }
    }
}
