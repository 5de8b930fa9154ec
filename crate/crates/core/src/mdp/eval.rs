use rayon::prelude::*;

use super::{push_forward, DeterministicPolicy, Mdp};
use crate::channel::sample_index;
use crate::error::{Error, Result};
use crate::rng::{stream, Role};

/// Anything that maps `(slot, global state)` to independent per-device
/// action distributions.
pub trait Policy: Sync {
    fn horizon(&self) -> usize;

    /// Fills `out[i]` (length `|P|`) with device `i`'s action distribution at
    /// slot `t` (from 0) in state `s`, whose components are `comps`.
    fn marginals(&self, t: usize, s: usize, comps: &[usize], out: &mut [Vec<f64>]);
}

impl Policy for DeterministicPolicy {
    fn horizon(&self) -> usize {
        self.actions.len()
    }

    fn marginals(&self, t: usize, s: usize, _comps: &[usize], out: &mut [Vec<f64>]) {
        let mut a = self.actions[t][s] as usize;
        for row in out.iter_mut() {
            let n = row.len();
            row.fill(0.0);
            row[a % n] = 1.0;
            a /= n;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    State(usize),
    Distribution(Vec<f64>),
}

impl InitialState {
    fn distribution(&self, ns: usize) -> Result<Vec<f64>> {
        match self {
            InitialState::State(s) if *s < ns => {
                let mut mu = vec![0.0; ns];
                mu[*s] = 1.0;
                Ok(mu)
            }
            InitialState::State(s) => Err(Error::arg(format!("initial state {s} out of range"))),
            InitialState::Distribution(mu) if mu.len() == ns => {
                if mu.iter().any(|&p| p < 0.0) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::arg("initial distribution must be a probability vector"));
                }
                Ok(mu.clone())
            }
            InitialState::Distribution(mu) => Err(Error::ShapeMismatch(format!(
                "initial distribution has {} entries, expected {ns}",
                mu.len()
            ))),
        }
    }
}

/// Work split for the exact pass; depends only on the state count so sums
/// happen in the same order for any thread pool.
fn chunk_len(ns: usize) -> usize {
    let chunks = ((1usize << 24) / ns.max(1)).clamp(1, 64);
    ns.div_ceil(chunks).max(1)
}

/// Collects the support of each device's marginal, rejecting unaffordable mass.
fn supports(
    mdp: &Mdp,
    t: usize,
    s: usize,
    comps: &[usize],
    marg: &[Vec<f64>],
    sup: &mut [Vec<(usize, f64)>],
) -> Result<()> {
    let k = mdp.n_slots();
    for (i, row) in marg.iter().enumerate() {
        sup[i].clear();
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 {
                if mdp.energy_quanta(i, a) > comps[k + i] {
                    return Err(Error::PolicyInfeasible {
                        slot: t,
                        state: s,
                        device: i,
                    });
                }
                sup[i].push((a, p));
            }
        }
    }
    Ok(())
}

/// Exact expected cumulative cost by propagating the state distribution.
pub fn evaluate_exact(mdp: &Mdp, policy: &dyn Policy, init: &InitialState) -> Result<f64> {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let nja = mdp.n_joint_actions();
    let h = mdp.n_gain_states();
    let m = mdp.m();
    let nb = mdp.battery_levels();
    let cost = mdp.cost_table();
    let axes = mdp.global_axes();
    let mut mu = init.distribution(ns)?;
    let mut total = 0.0;
    let chunk = chunk_len(ns);
    for t in 0..policy.horizon() {
        let parts: Vec<Result<(f64, Vec<f64>)>> = mu
            .par_chunks(chunk)
            .enumerate()
            .map(|(ci, block)| {
                let mut comps = vec![0; mdp.n_components()];
                let mut marg = vec![vec![0.0; na]; m];
                let mut sup = vec![Vec::new(); m];
                let mut j = 0.0;
                let mut nu = vec![0.0; ns];
                for (off, &w) in block.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = ci * chunk + off;
                    mdp.decode_state_into(s, &mut comps);
                    policy.marginals(t, s, &comps, &mut marg);
                    supports(mdp, t, s, &comps, &marg, &mut sup)?;
                    let (g, bb) = (s % h, s / h);
                    let row = &cost[g * nja..(g + 1) * nja];
                    enumerate_joint(mdp, &sup, nb, |a, e_off, p| {
                        let wp = w * p;
                        j += wp * row[a];
                        nu[g + h * (bb - e_off)] += wp;
                    });
                }
                Ok((j, nu))
            })
            .collect();
        let mut next = vec![0.0; ns];
        for part in parts {
            let (j, nu) = part?;
            total += j;
            for (x, p) in next.iter_mut().zip(nu) {
                *x += p;
            }
        }
        push_forward(&mut next, &axes);
        mu = next;
    }
    Ok(total)
}

/// Visits every joint action in the product of supports with its probability
/// and battery-index offset.
fn enumerate_joint(mdp: &Mdp, sup: &[Vec<(usize, f64)>], nb: usize, mut f: impl FnMut(usize, usize, f64)) {
    let m = sup.len();
    let na = mdp.n_actions();
    let mut idx = vec![0usize; m];
    loop {
        let (mut a, mut off, mut p) = (0, 0, 1.0);
        let (mut sa, mut sb) = (1, 1);
        for i in 0..m {
            let (ai, pi) = sup[i][idx[i]];
            a += ai * sa;
            off += mdp.energy_quanta(i, ai) * sb;
            p *= pi;
            sa *= na;
            sb *= nb;
        }
        f(a, off, p);
        let mut i = 0;
        loop {
            if i == m {
                return;
            }
            idx[i] += 1;
            if idx[i] < sup[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Monte Carlo estimate from `n` independent trajectories.
pub fn evaluate_mc(mdp: &Mdp, policy: &dyn Policy, init: &InitialState, n: usize, seed: u64) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::arg("need at least two trajectories"));
    }
    let mu = init.distribution(mdp.n_states())?;
    let k = mdp.n_slots();
    let m = mdp.m();
    let nb = mdp.battery_levels();
    let costs: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Role::Evaluation, r as u64, 0);
            let mut s = sample_index(&mu, &mut rng);
            let mut comps = vec![0; mdp.n_components()];
            let mut marg = vec![vec![0.0; mdp.n_actions()]; m];
            let mut acts = vec![0; m];
            let mut total = 0.0;
            for t in 0..policy.horizon() {
                mdp.decode_state_into(s, &mut comps);
                policy.marginals(t, s, &comps, &mut marg);
                for i in 0..m {
                    acts[i] = sample_index(&marg[i], &mut rng);
                    if mdp.energy_quanta(i, acts[i]) > comps[k + i] {
                        return Err(Error::PolicyInfeasible {
                            slot: t,
                            state: s,
                            device: i,
                        });
                    }
                }
                total += mdp.cost_of(&comps[..k], &acts);
                for c in 0..k {
                    comps[c] = mdp.chains()[c].sample_next(comps[c], &mut rng);
                }
                for i in 0..m {
                    let y = comps[k + i] - mdp.energy_quanta(i, acts[i]);
                    comps[k + i] = (y + mdp.harvest()[i].sample(&mut rng)).min(nb - 1);
                }
                s = mdp.encode_state(&comps)?;
            }
            Ok(total)
        })
        .collect();
    let costs = costs.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean = costs.iter().sum::<f64>() / n as f64;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Greedy;
    use crate::mdp::testutil::tiny;
    use crate::mdp::{backward_induction, SolveOptions};
    use crate::topology::TopologyKind;

    #[test]
    fn exact_matches_value_table() {
        let mdp = tiny(TopologyKind::Line, 3, 2, false);
        let sol = backward_induction(&mdp, 4, SolveOptions::default()).unwrap();
        for s in [0, 5, 17, mdp.n_states() - 1] {
            let j = evaluate_exact(&mdp, &sol.policy, &InitialState::State(s)).unwrap();
            assert!((j - sol.values[0][s]).abs() < 1e-10);
        }
        let mu = mdp.steady_uniform_init();
        let expect: f64 = mu.iter().zip(&sol.values[0]).map(|(p, v)| p * v).sum();
        let j = evaluate_exact(&mdp, &sol.policy, &InitialState::Distribution(mu)).unwrap();
        assert!((j - expect).abs() < 1e-10);
    }

    #[test]
    fn single_slot_cost() {
        let mdp = tiny(TopologyKind::Line, 2, 3, false);
        let g = Greedy::new(&mdp, 1);
        let s = mdp.encode_state(&[1, 2, 0]).unwrap();
        let j = evaluate_exact(&mdp, &g, &InitialState::State(s)).unwrap();
        let a = mdp.encode_action(&[1, 0]).unwrap();
        assert_eq!(j, mdp.one_step_cost(s, a).unwrap());
    }

    #[test]
    fn mc_agrees_with_exact() {
        let mdp = tiny(TopologyKind::Ring, 3, 3, false);
        let g = Greedy::new(&mdp, 5);
        let init = InitialState::Distribution(mdp.steady_uniform_init());
        let exact = evaluate_exact(&mdp, &g, &init).unwrap();
        let mc = evaluate_mc(&mdp, &g, &init, 20_000, 7).unwrap();
        assert!((mc.mean - exact).abs() < 3.0 * mc.stderr, "{exact} vs {mc:?}");
    }

    #[test]
    fn infeasible_policy_is_reported() {
        let mdp = tiny(TopologyKind::Line, 2, 2, false);
        let always_on = DeterministicPolicy::stationary(vec![3; mdp.n_states()], 2);
        let s = mdp.encode_state(&[0, 1, 0]).unwrap();
        let err = evaluate_exact(&mdp, &always_on, &InitialState::State(s)).unwrap_err();
        assert!(matches!(err, Error::PolicyInfeasible { slot: 0, device: 1, .. }));
    }
}
