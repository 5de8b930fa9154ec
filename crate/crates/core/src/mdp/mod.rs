//! Exact multi-device finite-horizon MDP.
//!
//! A global state is the gain level of every channel slot plus every battery
//! level. It is flattened as `h + H·b` where `h` is the mixed-radix index of
//! the slots (radix `N_h`, slot 0 fastest) and `b` the index of the batteries
//! (radix `|B|`, device 0 fastest). Joint actions are `Σ a_i·|P|^i`.

mod eval;
pub(crate) mod solve;
pub mod table_io;

pub use eval::{evaluate_exact, evaluate_mc, InitialState, McEstimate, Policy};
pub use solve::{backward_induction, DeterministicPolicy, Solution, SolveOptions};

use crate::channel::{error_rate, ChannelChain, ChannelMap, RadioParams};
use crate::energy::{EnergyParams, HarvestModel, QuantHarvest};
use crate::error::{Error, Result};
use crate::topology::Topology;

/// Default cap on `|S|·|P|` for exact solves.
pub const DEFAULT_MAX_ENTRIES: u128 = 10_000_000;

/// Inputs for [`Mdp::new`].
#[derive(Debug, Clone)]
pub struct MdpParts {
    pub topology: Topology,
    /// One chain per slot of the channel map (or a single chain shared by all).
    pub chains: Vec<ChannelChain>,
    pub reciprocal: bool,
    pub radio: RadioParams,
    /// Transmit power levels shared by every device, ascending, starting at 0.
    pub powers: Vec<f64>,
    /// Per-device energy constants (or a single entry shared by all).
    pub energy: Vec<EnergyParams>,
    /// Per-device harvest laws (or a single entry shared by all).
    pub harvest: Vec<HarvestModel>,
    /// Multiplier on every cost; 1 gives normalized costs.
    pub cost_scale: f64,
}

#[derive(Debug, Clone)]
pub struct Mdp {
    topo: Topology,
    map: ChannelMap,
    chains: Vec<ChannelChain>,
    radio: RadioParams,
    powers: Vec<f64>,
    energy: Vec<EnergyParams>,
    harvest: Vec<QuantHarvest>,
    cost_scale: f64,
    n_h: usize,
    nb: usize,
    n_gain: usize,
    n_batt: usize,
    /// `e_q[i][a]`: quanta drawn by device `i` at action `a`.
    e_q: Vec<Vec<usize>>,
    batt_matrices: Vec<Vec<f64>>,
}

fn broadcast<T: Clone>(v: Vec<T>, n: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); n]),
        k if k == n => Ok(v),
        k => Err(Error::ShapeMismatch(format!("{k} {what} entries, expected 1 or {n}"))),
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

impl Mdp {
    pub fn new(parts: MdpParts) -> Result<Self> {
        let topo = parts.topology;
        let m = topo.m();
        let map = ChannelMap::new(&topo, parts.reciprocal);
        let chains = broadcast(parts.chains, map.slot_count(), "channel chain")?;
        let n_h = chains.first().map_or(2, |c| c.n());
        if chains.iter().any(|c| c.n() != n_h) {
            return Err(Error::arg("all channel chains need the same number of levels"));
        }
        parts.radio.validate(m)?;
        if parts.powers.len() < 2 || parts.powers[0] != 0.0 {
            return Err(Error::arg("power levels must start at 0 and have at least two entries"));
        }
        if parts.powers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("power levels must be strictly increasing"));
        }
        let energy = broadcast(parts.energy, m, "energy")?;
        for e in &energy {
            e.validate()?;
        }
        let nb = energy[0].levels;
        if energy.iter().any(|e| e.levels != nb) {
            return Err(Error::arg("all devices need the same number of battery levels"));
        }
        let harvest_models = broadcast(parts.harvest, m, "harvest")?;
        let harvest = harvest_models
            .iter()
            .zip(&energy)
            .map(|(h, e)| h.quantize(e))
            .collect::<Result<Vec<_>>>()?;
        if !(parts.cost_scale > 0.0) {
            return Err(Error::arg("cost scale must be positive"));
        }
        let n_gain = checked_pow(n_h, map.slot_count())
            .ok_or_else(|| Error::TooLarge { what: "channel state space".into(), entries: u128::MAX, budget: usize::MAX as u128 })?;
        let n_batt = checked_pow(nb, m)
            .ok_or_else(|| Error::TooLarge { what: "battery state space".into(), entries: u128::MAX, budget: usize::MAX as u128 })?;
        n_gain
            .checked_mul(n_batt)
            .ok_or_else(|| Error::TooLarge { what: "state space".into(), entries: u128::MAX, budget: usize::MAX as u128 })?;
        checked_pow(parts.powers.len(), m)
            .ok_or_else(|| Error::TooLarge { what: "action space".into(), entries: u128::MAX, budget: usize::MAX as u128 })?;
        let e_q = energy
            .iter()
            .map(|e| parts.powers.iter().map(|&p| e.consumed_quanta(p)).collect())
            .collect();
        let batt_matrices = harvest.iter().map(|h| h.kernel_matrix()).collect();
        Ok(Mdp {
            topo,
            map,
            chains,
            radio: parts.radio,
            powers: parts.powers,
            energy,
            harvest,
            cost_scale: parts.cost_scale,
            n_h,
            nb,
            n_gain,
            n_batt,
            e_q,
            batt_matrices,
        })
    }

    pub fn m(&self) -> usize {
        self.topo.m()
    }
    pub fn topology(&self) -> &Topology {
        &self.topo
    }
    pub fn channel_map(&self) -> &ChannelMap {
        &self.map
    }
    pub fn chains(&self) -> &[ChannelChain] {
        &self.chains
    }
    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }
    pub fn energy(&self) -> &[EnergyParams] {
        &self.energy
    }
    pub fn harvest(&self) -> &[QuantHarvest] {
        &self.harvest
    }
    pub fn cost_scale(&self) -> f64 {
        self.cost_scale
    }
    pub fn n_slots(&self) -> usize {
        self.map.slot_count()
    }
    pub fn gain_levels(&self) -> usize {
        self.n_h
    }
    pub fn battery_levels(&self) -> usize {
        self.nb
    }
    pub fn n_actions(&self) -> usize {
        self.powers.len()
    }
    /// Number of joint channel configurations `H`.
    pub fn n_gain_states(&self) -> usize {
        self.n_gain
    }
    pub fn n_battery_states(&self) -> usize {
        self.n_batt
    }
    pub fn n_states(&self) -> usize {
        self.n_gain * self.n_batt
    }
    pub fn n_joint_actions(&self) -> usize {
        self.n_actions().pow(self.m() as u32)
    }
    /// Battery quanta drawn by device `i` at action level `a`.
    #[inline]
    pub fn energy_quanta(&self, i: usize, a: usize) -> usize {
        self.e_q[i][a]
    }

    /// Number of state components: slots then batteries.
    pub fn n_components(&self) -> usize {
        self.n_slots() + self.m()
    }

    #[inline]
    pub fn component_radix(&self, c: usize) -> usize {
        if c < self.n_slots() {
            self.n_h
        } else {
            self.nb
        }
    }

    /// Transition matrix of state component `c`; battery rows are indexed by
    /// post-decision level.
    pub(crate) fn component_matrix(&self, c: usize) -> &[f64] {
        let k = self.n_slots();
        if c < k {
            self.chains[c].matrix()
        } else {
            &self.batt_matrices[c - k]
        }
    }

    pub fn decode_state(&self, s: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_components()];
        self.decode_state_into(s, &mut out);
        out
    }

    pub fn decode_state_into(&self, mut s: usize, out: &mut [usize]) {
        for (c, v) in out.iter_mut().enumerate() {
            let r = self.component_radix(c);
            *v = s % r;
            s /= r;
        }
    }

    pub fn encode_state(&self, comps: &[usize]) -> Result<usize> {
        if comps.len() != self.n_components() {
            return Err(Error::ShapeMismatch(format!(
                "{} state components, expected {}",
                comps.len(),
                self.n_components()
            )));
        }
        let mut s = 0;
        for c in (0..comps.len()).rev() {
            let r = self.component_radix(c);
            if comps[c] >= r {
                return Err(Error::arg(format!("component {c} value {} out of range", comps[c])));
            }
            s = s * r + comps[c];
        }
        Ok(s)
    }

    pub fn decode_action(&self, mut a: usize) -> Vec<usize> {
        let n = self.n_actions();
        (0..self.m())
            .map(|_| {
                let v = a % n;
                a /= n;
                v
            })
            .collect()
    }

    pub fn encode_action(&self, acts: &[usize]) -> Result<usize> {
        if acts.len() != self.m() || acts.iter().any(|&a| a >= self.n_actions()) {
            return Err(Error::arg("joint action has wrong length or out-of-range level"));
        }
        Ok(acts.iter().rev().fold(0, |acc, &a| acc * self.n_actions() + a))
    }

    pub fn is_feasible(&self, comps: &[usize], acts: &[usize]) -> bool {
        let k = self.n_slots();
        acts.iter()
            .enumerate()
            .all(|(i, &a)| self.e_q[i][a] <= comps[k + i])
    }

    /// Cost of device `i`'s outgoing links given slot gain levels and actions.
    ///
    /// Every slot and action entry is read, so callers may pass a partially
    /// defaulted view.
    pub fn device_cost(&self, i: usize, gains: &[usize], acts: &[usize]) -> f64 {
        let p_i = self.powers[acts[i]];
        let mut total = 0.0;
        for &j in self.topo.neighbors(i) {
            let own = self.map.slot(j, i).expect("link slot");
            let interference: f64 = self
                .topo
                .neighbors(j)
                .iter()
                .filter(|&&k| k != i)
                .map(|&k| {
                    let sk = self.map.slot(j, k).expect("link slot");
                    self.powers[acts[k]] * self.chains[sk].gain(gains[sk])
                })
                .sum();
            let q = error_rate(
                self.radio.phi,
                self.radio.sigma2[j],
                p_i,
                self.chains[own].gain(gains[own]),
                interference,
            );
            total += self.topo.weight(j, i) * q;
        }
        self.cost_scale * total
    }

    /// Cost from gains and actions alone (batteries do not enter).
    pub fn cost_of(&self, gains: &[usize], acts: &[usize]) -> f64 {
        (0..self.m()).map(|i| self.device_cost(i, gains, acts)).sum()
    }

    /// One-step cost of joint action `a` in global state `s`.
    pub fn one_step_cost(&self, s: usize, a: usize) -> Result<f64> {
        let comps = self.decode_state(s);
        let acts = self.decode_action(a);
        if !self.is_feasible(&comps, &acts) {
            return Err(Error::arg(format!("joint action {a} is not affordable in state {s}")));
        }
        Ok(self.cost_of(&comps[..self.n_slots()], &acts))
    }

    /// `c[h·|P| + a]` for every channel configuration and joint action.
    pub fn cost_table(&self) -> Vec<f64> {
        use rayon::prelude::*;
        let na = self.n_joint_actions();
        let k = self.n_slots();
        let mut table = vec![0.0; self.n_gain * na];
        table.par_chunks_mut(na).enumerate().for_each(|(h, row)| {
            let mut gains = vec![0; k];
            let mut rest = h;
            for g in gains.iter_mut() {
                *g = rest % self.n_h;
                rest /= self.n_h;
            }
            for (a, c) in row.iter_mut().enumerate() {
                *c = self.cost_of(&gains, &self.decode_action(a));
            }
        });
        table
    }

    /// Offset subtracted from the battery part of a state index when joint
    /// action `a` is taken, or `None` if some device cannot afford it at the
    /// given battery levels.
    pub(crate) fn battery_offset(&self, batts: &[usize], a: usize) -> Option<usize> {
        let n = self.n_actions();
        let (mut rest, mut off, mut stride) = (a, 0, 1);
        for (i, &b) in batts.iter().enumerate() {
            let e = self.e_q[i][rest % n];
            if e > b {
                return None;
            }
            off += e * stride;
            rest /= n;
            stride *= self.nb;
        }
        Some(off)
    }

    /// Explicit next-state distribution by enumerating the product of factors.
    pub fn transition(&self, s: usize, a: usize) -> Result<Vec<(usize, f64)>> {
        let comps = self.decode_state(s);
        let acts = self.decode_action(a);
        if !self.is_feasible(&comps, &acts) {
            return Err(Error::arg(format!("joint action {a} is not affordable in state {s}")));
        }
        let k = self.n_slots();
        let factors: Vec<Vec<(usize, f64)>> = (0..self.n_components())
            .map(|c| {
                let row: Vec<f64> = if c < k {
                    self.chains[c].row(comps[c]).to_vec()
                } else {
                    let i = c - k;
                    self.harvest[i].kernel_from(comps[c] - self.e_q[i][acts[i]])
                };
                row.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect()
            })
            .collect();
        let mut out = vec![(0usize, 1.0f64)];
        let mut stride = 1;
        for (c, f) in factors.iter().enumerate() {
            out = out
                .iter()
                .flat_map(|&(idx, p)| f.iter().map(move |&(v, q)| (idx + v * stride, p * q)))
                .collect();
            stride *= self.component_radix(c);
        }
        out.sort_unstable_by_key(|&(idx, _)| idx);
        Ok(out)
    }

    /// Stationary channels with uniformly random batteries.
    pub fn steady_uniform_init(&self) -> Vec<f64> {
        let k = self.n_slots();
        let mut mu = vec![0.0; self.n_states()];
        let mut comps = vec![0; self.n_components()];
        let pb = 1.0 / self.n_batt as f64;
        for (s, v) in mu.iter_mut().enumerate() {
            self.decode_state_into(s, &mut comps);
            *v = pb * (0..k).map(|c| self.chains[c].steady()[comps[c]]).product::<f64>();
        }
        mu
    }
}

/// One axis of a mixed-radix tensor and the stochastic matrix acting on it.
pub(crate) struct Axis<'a> {
    pub stride: usize,
    pub n: usize,
    pub matrix: &'a [f64],
}

/// `out[..x..] = Σ_y M[x][y] · data[..y..]` along each axis in turn.
pub(crate) fn contract_backward(data: &mut Vec<f64>, axes: &[Axis]) {
    apply_axes(data, axes, false)
}

/// `out[..y..] = Σ_x data[..x..] · M[x][y]` along each axis in turn.
pub(crate) fn push_forward(data: &mut Vec<f64>, axes: &[Axis]) {
    apply_axes(data, axes, true)
}

fn apply_axes(data: &mut Vec<f64>, axes: &[Axis], forward: bool) {
    let mut out = vec![0.0; data.len()];
    let mut buf = Vec::new();
    for ax in axes {
        if is_identity(ax) {
            continue;
        }
        let (stride, n) = (ax.stride, ax.n);
        let block = stride * n;
        buf.resize(n, 0.0);
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (y, b) in buf.iter_mut().enumerate() {
                    *b = data[base + y * stride];
                }
                for x in 0..n {
                    let mut acc = 0.0;
                    if forward {
                        for (y, &b) in buf.iter().enumerate() {
                            acc += b * ax.matrix[y * n + x];
                        }
                    } else {
                        for (y, &b) in buf.iter().enumerate() {
                            acc += ax.matrix[x * n + y] * b;
                        }
                    }
                    out[base + x * stride] = acc;
                }
            }
        }
        std::mem::swap(data, &mut out);
    }
}

fn is_identity(ax: &Axis) -> bool {
    let n = ax.n;
    (0..n).all(|x| (0..n).all(|y| ax.matrix[x * n + y] == if x == y { 1.0 } else { 0.0 }))
}

impl Mdp {
    pub(crate) fn global_axes(&self) -> Vec<Axis<'_>> {
        let mut stride = 1;
        (0..self.n_components())
            .map(|c| {
                let n = self.component_radix(c);
                let ax = Axis {
                    stride,
                    n,
                    matrix: self.component_matrix(c),
                };
                stride *= n;
                ax
            })
            .collect()
    }
}
