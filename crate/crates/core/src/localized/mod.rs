//! κ-hop localized costs, Q tables and softmax policy iteration.
//!
//! Device `i` sees the scope `D_i` (devices within κ hops). Its local state
//! holds every channel slot owned by a scope member plus the members'
//! batteries, encoded like the global state restricted to those components.
//! Its local action is the members' power levels. Anything outside the scope
//! is filled from [`ExtensionDefaults`].

mod io;
mod synth;

pub use io::{load_policy, save_policy};
pub use synth::{policy_distance, synthesize, synthesize_with, DeviceTables, LocalizedOptions, LocalizedPolicy};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{contract_backward, Axis, Mdp};

/// Default cap on `|X_i|·|A_i|` for any device.
pub const DEFAULT_MAX_LOCAL_ENTRIES: u128 = 1 << 20;

/// Order in which devices refresh their policies within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every device answers the previous round's policies.
    Simultaneous,
    /// Devices update in index order, each answering the freshest policies.
    #[default]
    Sequential,
}

/// How the first-round policies are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Softmax of the device's own Q row with every other member at the default action.
    DefaultNeighbors,
    /// Softmax over own actions of the scope-averaged Q, minimized over the
    /// other members' affordable actions.
    #[default]
    Optimistic,
}

/// Fillers used for components outside a device's scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ExtensionDefaults {
    pub gain: usize,
    pub battery: usize,
    pub action: usize,
}

/// Mixed-radix encoding over a subset of global state components.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub comps: Vec<usize>,
    pub radix: Vec<usize>,
    pub stride: Vec<usize>,
    pub size: usize,
}

impl Layout {
    pub fn new(comps: Vec<usize>, radix: Vec<usize>) -> Self {
        let mut stride = Vec::with_capacity(comps.len());
        let mut size = 1usize;
        for &r in &radix {
            stride.push(size);
            size = size.saturating_mul(r);
        }
        Layout {
            comps,
            radix,
            stride,
            size,
        }
    }

    #[inline]
    pub fn index(&self, global: &[usize]) -> usize {
        self.comps.iter().zip(&self.stride).map(|(&c, &s)| global[c] * s).sum()
    }

    /// Writes the components of local index `x` into a global vector.
    #[inline]
    pub fn scatter(&self, mut x: usize, global: &mut [usize]) {
        for (&c, &r) in self.comps.iter().zip(&self.radix) {
            global[c] = x % r;
            x /= r;
        }
    }
}

/// Everything device `i` needs: scope, encodings, maps into neighbours'
/// tables and its localized cost.
#[derive(Debug, Clone)]
pub struct Scope {
    pub device: usize,
    /// Sorted scope members.
    pub members: Vec<usize>,
    pub(crate) layout: Layout,
    /// Number of local channel configurations; `x = h + n_gain·b`.
    pub n_gain: usize,
    pub n_actions: usize,
    pub(crate) own_pos: usize,
    /// `state_maps[k][x]`: index in member `k`'s table of the extension of `x`.
    pub(crate) state_maps: Vec<Vec<u32>>,
    pub(crate) action_maps: Vec<Vec<u32>>,
    /// `cost[x·n_actions + a]`.
    pub(crate) cost: Vec<f64>,
    /// Per `(battery part, action)`: post-decision battery part (saturating)
    /// and whether every member can afford its action.
    pub(crate) post: Vec<(u32, bool)>,
}

impl Scope {
    pub fn n_states(&self) -> usize {
        self.layout.size
    }

    pub fn entries(&self) -> usize {
        self.n_states() * self.n_actions
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Local state of the device given the global components.
    #[inline]
    pub fn project(&self, global: &[usize]) -> usize {
        self.layout.index(global)
    }
}

/// The per-device scopes of one MDP at a given κ.
#[derive(Debug, Clone)]
pub struct LocalizedModel {
    pub kappa: usize,
    pub defaults: ExtensionDefaults,
    pub(crate) n_act: usize,
    pub scopes: Vec<Scope>,
}

impl LocalizedModel {
    pub fn new(mdp: &Mdp, kappa: usize, defaults: ExtensionDefaults, max_local_entries: u128) -> Result<Self> {
        if defaults.gain >= mdp.gain_levels() || defaults.battery >= mdp.battery_levels() || defaults.action >= mdp.n_actions() {
            return Err(Error::arg("extension defaults out of range"));
        }
        let m = mdp.m();
        let k = mdp.n_slots();
        let na = mdp.n_actions();
        let nb = mdp.battery_levels();
        let map = mdp.channel_map();
        let mut bases = Vec::with_capacity(m);
        for i in 0..m {
            let members = mdp.topology().ball(i, kappa)?;
            let mut comps: Vec<usize> = members.iter().flat_map(|&j| map.device_slots(j).iter().copied()).collect();
            comps.sort_unstable();
            comps.dedup();
            let n_slot_comps = comps.len();
            comps.extend(members.iter().map(|&j| k + j));
            let radix: Vec<usize> = comps.iter().map(|&c| mdp.component_radix(c)).collect();
            let n_gain = radix[..n_slot_comps].iter().product::<usize>();
            let layout = Layout::new(comps, radix);
            let n_actions = (0..members.len()).try_fold(1usize, |acc, _| acc.checked_mul(na)).unwrap_or(usize::MAX);
            let entries = layout.size as u128 * n_actions as u128;
            if entries > max_local_entries {
                return Err(Error::TooLarge {
                    what: format!("localized table of device {i} at {kappa} hops"),
                    entries,
                    budget: max_local_entries,
                });
            }
            let own_pos = members.iter().position(|&j| j == i).expect("device in own scope");
            bases.push((members, layout, n_gain, n_actions, own_pos));
        }
        let default_global: Vec<usize> = (0..mdp.n_components())
            .map(|c| if c < k { defaults.gain } else { defaults.battery })
            .collect();
        let scopes = bases
            .par_iter()
            .enumerate()
            .map(|(i, (members, layout, n_gain, n_actions, own_pos))| {
                let mut global = default_global.clone();
                let mut acts = vec![defaults.action; m];
                let state_maps = members
                    .iter()
                    .map(|&j| {
                        let target = &bases[j].1;
                        (0..layout.size)
                            .map(|x| {
                                layout.scatter(x, &mut global);
                                target.index(&global) as u32
                            })
                            .collect()
                    })
                    .collect();
                let action_maps = members
                    .iter()
                    .map(|&j| {
                        let target = &bases[j].0;
                        (0..*n_actions)
                            .map(|a| {
                                scatter_actions(members, a, na, &mut acts);
                                target.iter().rev().fold(0, |acc, &d| acc * na + acts[d]) as u32
                            })
                            .collect()
                    })
                    .collect();
                let mut global = default_global.clone();
                let mut cost = vec![0.0; layout.size * n_actions];
                for x in 0..layout.size {
                    layout.scatter(x, &mut global);
                    for a in 0..*n_actions {
                        scatter_actions(members, a, na, &mut acts);
                        cost[x * n_actions + a] = mdp.device_cost(i, &global[..k], &acts);
                    }
                }
                let n_batt = layout.size / n_gain;
                let mut post = Vec::with_capacity(n_batt * n_actions);
                for bl in 0..n_batt {
                    for a in 0..*n_actions {
                        let (mut rb, mut ra) = (bl, a);
                        let (mut y, mut stride, mut ok) = (0, 1, true);
                        for &j in members {
                            let (b, act) = (rb % nb, ra % na);
                            rb /= nb;
                            ra /= na;
                            let e = mdp.energy_quanta(j, act);
                            ok &= e <= b;
                            y += b.saturating_sub(e) * stride;
                            stride *= nb;
                        }
                        post.push((y as u32, ok));
                    }
                }
                Scope {
                    device: i,
                    members: members.clone(),
                    layout: layout.clone(),
                    n_gain: *n_gain,
                    n_actions: *n_actions,
                    own_pos: *own_pos,
                    state_maps,
                    action_maps,
                    cost,
                    post,
                }
            })
            .collect();
        Ok(LocalizedModel {
            kappa,
            defaults,
            n_act: na,
            scopes,
        })
    }

    pub fn m(&self) -> usize {
        self.scopes.len()
    }

    /// Localized cost of device `i` at global state components `comps` and
    /// joint action levels `acts` (restricted to its scope).
    pub fn local_cost(&self, i: usize, comps: &[usize], acts: &[usize]) -> f64 {
        let sc = &self.scopes[i];
        let x = sc.project(comps);
        let a = sc.members.iter().rev().fold(0, |acc, &d| acc * self.n_act + acts[d]);
        sc.cost[x * sc.n_actions + a]
    }

    /// `Q_{i,t}` before any averaging: localized cost plus the expected
    /// optimal continuation under `next` (`Q_{i,t+1}`, absent at the horizon).
    pub fn backward_step(&self, mdp: &Mdp, i: usize, next: Option<&[f64]>) -> Vec<f64> {
        let sc = &self.scopes[i];
        let na = sc.n_actions;
        let ng = sc.n_gain;
        let Some(next) = next else {
            return sc.cost.clone();
        };
        let mut w: Vec<f64> = (0..sc.n_states())
            .map(|x| {
                let bl = x / ng;
                (0..na)
                    .filter(|&a| sc.post[bl * na + a].1)
                    .map(|a| next[x * na + a])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let axes: Vec<Axis> = sc
            .layout
            .comps
            .iter()
            .enumerate()
            .map(|(p, &c)| Axis {
                stride: sc.layout.stride[p],
                n: sc.layout.radix[p],
                matrix: mdp.component_matrix(c),
            })
            .collect();
        contract_backward(&mut w, &axes);
        let mut q = sc.cost.clone();
        for x in 0..sc.n_states() {
            let (h, bl) = (x % ng, x / ng);
            for a in 0..na {
                let y = sc.post[bl * na + a].0 as usize;
                q[x * na + a] += w[h + ng * y];
            }
        }
        q
    }

    /// Neighbour averaging: `Q_i ← mean over j ∈ D_i of Q_j` at the extended indices.
    pub fn average(&self, q: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.scopes
            .par_iter()
            .map(|sc| {
                let inv = 1.0 / sc.members.len() as f64;
                let na = sc.n_actions;
                let mut out = vec![0.0; sc.entries()];
                for (k, &j) in sc.members.iter().enumerate() {
                    let (smap, amap) = (&sc.state_maps[k], &sc.action_maps[k]);
                    let naj = self.scopes[j].n_actions;
                    let qj = &q[j];
                    for x in 0..sc.n_states() {
                        let base = smap[x] as usize * naj;
                        for a in 0..na {
                            out[x * na + a] += qj[base + amap[a] as usize];
                        }
                    }
                }
                out.iter_mut().for_each(|v| *v *= inv);
                out
            })
            .collect()
    }

    /// Starting policies for the improvement rounds; see [`Init`].
    pub fn initial_policy(&self, q: &[Vec<f64>], gamma: f64, init: Init) -> Vec<Vec<f64>> {
        let averaged;
        let table = match init {
            Init::DefaultNeighbors => q,
            Init::Optimistic => {
                averaged = self.average(q);
                &averaged[..]
            }
        };
        self.scopes
            .par_iter()
            .map(|sc| {
                let na = self.n_act;
                let a_loc = sc.n_actions;
                let own_stride = na.pow(sc.own_pos as u32);
                let mut base_a = 0;
                let mut stride = 1;
                for p in 0..sc.members.len() {
                    if p != sc.own_pos {
                        base_a += self.defaults.action * stride;
                    }
                    stride *= na;
                }
                let mut out = vec![0.0; sc.n_states() * na];
                let mut scores = vec![0.0; na];
                for x in 0..sc.n_states() {
                    let row = &table[sc.device][x * a_loc..(x + 1) * a_loc];
                    match init {
                        Init::DefaultNeighbors => {
                            for (ai, s) in scores.iter_mut().enumerate() {
                                *s = row[base_a + ai * own_stride];
                            }
                        }
                        Init::Optimistic => {
                            scores.fill(f64::INFINITY);
                            let base = (x / sc.n_gain) * a_loc;
                            for (a, &v) in row.iter().enumerate() {
                                let ai = (a / own_stride) % na;
                                // Others must afford their part; the own part is masked later.
                                if sc.post[base + a - ai * own_stride].1 {
                                    scores[ai] = scores[ai].min(v);
                                }
                            }
                        }
                    }
                    self.softmax_into(sc, x, &scores, gamma, &mut out[x * na..(x + 1) * na]);
                }
                out
            })
            .collect()
    }

    /// One policy-improvement step: softmax of the expected `q` row, the
    /// expectation taken over the other members' current policies.
    ///
    /// [`Schedule::Simultaneous`] reads only the previous round's policies.
    /// [`Schedule::Sequential`] sweeps devices in index order and lets each
    /// one see the rows already updated in this round.
    pub fn improve(&self, q: &[Vec<f64>], pi: &[Vec<f64>], gamma: f64, schedule: Schedule) -> Vec<Vec<f64>> {
        match schedule {
            Schedule::Simultaneous => self
                .scopes
                .par_iter()
                .map(|sc| self.improve_device(sc, q, |j| &pi[j], gamma))
                .collect(),
            Schedule::Sequential => {
                let mut next = pi.to_vec();
                for sc in &self.scopes {
                    let row = self.improve_device(sc, q, |j| &next[j], gamma);
                    next[sc.device] = row;
                }
                next
            }
        }
    }

    fn improve_device<'p>(&self, sc: &Scope, q: &[Vec<f64>], pi: impl Fn(usize) -> &'p [f64], gamma: f64) -> Vec<f64> {
        let na = self.n_act;
        let nm = sc.members.len();
        let own_stride = na.pow(sc.own_pos as u32);
        let mut out = vec![0.0; sc.n_states() * na];
        let mut scores = vec![0.0; na];
        let mut sup: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nm];
        for x in 0..sc.n_states() {
            for (k, &j) in sc.members.iter().enumerate() {
                sup[k].clear();
                if k == sc.own_pos {
                    continue;
                }
                let xj = sc.state_maps[k][x] as usize;
                let row = &pi(j)[xj * na..(xj + 1) * na];
                sup[k].extend(row.iter().enumerate().filter(|x| *x.1 > 0.0).map(|(a, &p)| (a, p)));
            }
            scores.fill(0.0);
            let qrow = &q[sc.device][x * sc.n_actions..(x + 1) * sc.n_actions];
            expect_over_others(&sup, sc.own_pos, na, |a_others, p| {
                for (ai, s) in scores.iter_mut().enumerate() {
                    *s += p * qrow[a_others + ai * own_stride];
                }
            });
            self.softmax_into(sc, x, &scores, gamma, &mut out[x * na..(x + 1) * na]);
        }
        out
    }

    /// Masked, max-shifted softmax of `-γ·scores` over the affordable own actions.
    fn softmax_into(&self, sc: &Scope, x: usize, scores: &[f64], gamma: f64, out: &mut [f64]) {
        // Others at action 0 cost nothing, so this row checks the own battery only.
        let base = (x / sc.n_gain) * sc.n_actions;
        let own_stride = self.n_act.pow(sc.own_pos as u32);
        let feasible = |ai: usize| sc.post[base + ai * own_stride].1;
        let best = (0..scores.len())
            .filter(|&ai| feasible(ai))
            .map(|ai| scores[ai])
            .fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (ai, o) in out.iter_mut().enumerate() {
            *o = if feasible(ai) { (-gamma * (scores[ai] - best)).exp() } else { 0.0 };
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }
}

fn scatter_actions(members: &[usize], mut a: usize, na: usize, acts: &mut [usize]) {
    for &j in members {
        acts[j] = a % na;
        a /= na;
    }
}

/// Calls `f(partial joint index without the own position, probability)` for
/// every combination of the other members' supported actions.
fn expect_over_others(sup: &[Vec<(usize, f64)>], own: usize, na: usize, mut f: impl FnMut(usize, f64)) {
    let nm = sup.len();
    let others: Vec<usize> = (0..nm).filter(|&k| k != own).collect();
    let mut idx = vec![0usize; others.len()];
    loop {
        let (mut a, mut p) = (0, 1.0);
        for (o, &k) in others.iter().enumerate() {
            let (ak, pk) = sup[k][idx[o]];
            a += ak * na.pow(k as u32);
            p *= pk;
        }
        f(a, p);
        let mut o = 0;
        loop {
            if o == others.len() {
                return;
            }
            idx[o] += 1;
            if idx[o] < sup[others[o]].len() {
                break;
            }
            idx[o] = 0;
            o += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::testutil::tiny;
    use crate::topology::TopologyKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(mdp: &Mdp, kappa: usize) -> LocalizedModel {
        LocalizedModel::new(mdp, kappa, ExtensionDefaults::default(), DEFAULT_MAX_LOCAL_ENTRIES).unwrap()
    }

    #[test]
    fn decomposition_matches_global_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (kind, m) in [(TopologyKind::Line, 3), (TopologyKind::Ring, 5), (TopologyKind::Complete, 3)] {
            let mdp = tiny(kind, m, 2, false);
            for kappa in 0..3 {
                let lm = model(&mdp, kappa);
                for _ in 0..50 {
                    let s = rng.random_range(0..mdp.n_states());
                    let comps = mdp.decode_state(s);
                    let acts: Vec<usize> = (0..m).map(|_| rng.random_range(0..2)).collect();
                    let global = mdp.cost_of(&comps[..mdp.n_slots()], &acts);
                    let local: f64 = (0..m).map(|i| lm.local_cost(i, &comps, &acts)).sum();
                    // Scopes of one hop already contain every receiver's slots, but
                    // interferers two hops out fall back to the default action.
                    if kappa >= 2 {
                        assert!((global - local).abs() < 1e-12);
                    }
                    if acts.iter().all(|&a| a == 0) {
                        for i in 0..m {
                            let expect: f64 = mdp.topology().neighbors(i).iter().map(|&j| mdp.topology().weight(j, i)).sum();
                            assert!((lm.local_cost(i, &comps, &acts) - expect).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extension_round_trip() {
        let mdp = tiny(TopologyKind::Ring, 5, 2, false);
        let lm = model(&mdp, 1);
        for sc in &lm.scopes {
            let own = sc.own_pos;
            for x in 0..sc.n_states() {
                assert_eq!(sc.state_maps[own][x] as usize, x);
            }
            let mut global = vec![0; mdp.n_components()];
            for x in 0..sc.n_states() {
                sc.layout.scatter(x, &mut global);
                assert_eq!(sc.project(&global), x);
            }
        }
    }

    #[test]
    fn full_scope_step_sums_to_global_q() {
        use crate::mdp::{backward_induction, SolveOptions};
        let mdp = tiny(TopologyKind::Complete, 2, 2, false);
        let lm = model(&mdp, 1);
        let sol = backward_induction(&mdp, 2, SolveOptions { store_q: true, ..Default::default() }).unwrap();
        let q = sol.q.unwrap();
        let last: Vec<Vec<f64>> = (0..2).map(|i| lm.backward_step(&mdp, i, None)).collect();
        let avg = lm.average(&last);
        let first: Vec<Vec<f64>> = (0..2).map(|i| lm.backward_step(&mdp, i, Some(&avg[i]))).collect();
        for (t, layer) in [(1, &last), (0, &first)] {
            for (idx, &v) in q[t].iter().enumerate() {
                assert!((layer[0][idx] + layer[1][idx] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_limits() {
        let mdp = tiny(TopologyKind::Line, 3, 3, false);
        let lm = model(&mdp, 2);
        let q: Vec<Vec<f64>> = (0..3).map(|i| lm.backward_step(&mdp, i, None)).collect();
        let flat = lm.initial_policy(&q, 1e-12, Init::DefaultNeighbors);
        let sharp = lm.initial_policy(&q, 1e6, Init::Optimistic);
        for (i, sc) in lm.scopes.iter().enumerate() {
            let mut global = vec![0; mdp.n_components()];
            for x in 0..sc.n_states() {
                sc.layout.scatter(x, &mut global);
                let b = global[mdp.n_slots() + i];
                let feasible: Vec<usize> = (0..2).filter(|&a| mdp.energy_quanta(i, a) <= b).collect();
                let row = &flat[i][x * 2..x * 2 + 2];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for a in 0..2 {
                    let expect = if feasible.contains(&a) { 1.0 / feasible.len() as f64 } else { 0.0 };
                    assert!((row[a] - expect).abs() < 1e-9);
                }
                let srow = &sharp[i][x * 2..x * 2 + 2];
                let mode = (0..2).max_by(|&a, &b| srow[a].total_cmp(&srow[b]).then(b.cmp(&a))).unwrap();
                assert!(feasible.contains(&mode));
            }
        }
    }

    #[test]
    fn improvement_matches_direct_formula() {
        let mdp = tiny(TopologyKind::Line, 3, 2, false);
        let lm = model(&mdp, 1);
        let q: Vec<Vec<f64>> = (0..3).map(|i| lm.backward_step(&mdp, i, None)).collect();
        let gamma = 2.5;
        let pi1 = lm.initial_policy(&q, gamma, Init::DefaultNeighbors);
        let q2 = lm.average(&q);
        let pi2 = lm.improve(&q2, &pi1, gamma, Schedule::Simultaneous);
        let k = mdp.n_slots();
        // Straight-line reimplementation over global states.
        for s in 0..mdp.n_states() {
            let comps = mdp.decode_state(s);
            for i in 0..3 {
                let sc = &lm.scopes[i];
                let x = sc.project(&comps);
                let mut scores = [0.0f64; 2];
                for ai in 0..2 {
                    // Enumerate full joint actions of the scope.
                    for a in 0..sc.n_actions {
                        let mut acts = vec![0; 3];
                        scatter_actions(&sc.members, a, 2, &mut acts);
                        if acts[i] != ai {
                            continue;
                        }
                        let mut p = 1.0;
                        for &j in &sc.members {
                            if j == i {
                                continue;
                            }
                            // Neighbour j's view of the extended state.
                            let mut ext = vec![0; mdp.n_components()];
                            sc.layout.scatter(x, &mut ext);
                            let xj = lm.scopes[j].project(&ext);
                            p *= pi1[j][xj * 2 + acts[j]];
                        }
                        let mut avg = 0.0;
                        for &j in &sc.members {
                            let mut ext = vec![0; mdp.n_components()];
                            sc.layout.scatter(x, &mut ext);
                            let mut ext_acts = vec![0; 3];
                            for &d in &sc.members {
                                ext_acts[d] = acts[d];
                            }
                            avg += lm.local_cost_from(j, &ext, &ext_acts);
                        }
                        scores[ai] += p * avg / sc.members.len() as f64;
                    }
                }
                let b = comps[k + i];
                let feasible: Vec<usize> = (0..2).filter(|&a| mdp.energy_quanta(i, a) <= b).collect();
                let best = feasible.iter().map(|&a| scores[a]).fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = (0..2)
                    .map(|a| if feasible.contains(&a) { (-gamma * (scores[a] - best)).exp() } else { 0.0 })
                    .collect();
                let z: f64 = w.iter().sum();
                for a in 0..2 {
                    assert!((pi2[i][x * 2 + a] - w[a] / z).abs() < 1e-12);
                }
            }
        }
    }

    impl LocalizedModel {
        fn local_cost_from(&self, j: usize, ext: &[usize], acts: &[usize]) -> f64 {
            let sc = &self.scopes[j];
            let mut g = ext.to_vec();
            // Components outside j's scope read as defaults.
            let mut defaulted = vec![0; g.len()];
            let x = sc.project(&g);
            sc.layout.scatter(x, &mut defaulted);
            g = defaulted;
            let mut a = vec![0; acts.len()];
            for &d in &sc.members {
                a[d] = acts[d];
            }
            self.local_cost(j, &g, &a)
        }
    }

    #[test]
    fn oversize_scope_rejected() {
        let mdp = tiny(TopologyKind::Ring, 5, 2, false);
        let r = LocalizedModel::new(&mdp, 2, ExtensionDefaults::default(), 100);
        assert!(matches!(r, Err(Error::TooLarge { .. })));
    }
}
