//! Decentralized training driven by a scheduling policy.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::task::LearningTask;
use crate::channel::{packet_error_rate, sample_index, success_from_uniform};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};
use crate::rng::{stream, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Packet errors from the waterfall model.
    #[default]
    Physical,
    /// Every transmitted packet arrives.
    Lossless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub eta: f64,
    pub links: LinkMode,
    /// Initial state components (slot gains then batteries). Drawn from the
    /// stationary channel law and uniform batteries when absent.
    pub initial: Option<Vec<usize>>,
    /// Every device starts here; zeros when absent.
    pub w_init: Option<DVector<f64>>,
    /// Keep every device model after every slot.
    pub keep_models: bool,
}

impl SimOptions {
    pub fn new(eta: f64) -> Self {
        SimOptions {
            eta,
            links: LinkMode::Physical,
            initial: None,
            w_init: None,
            keep_models: false,
        }
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// Power level index per device.
    pub actions: Vec<usize>,
    pub beta: Vec<bool>,
    /// `q[i·m + j]`: error rate from `j` to `i` (1 off the graph and on the diagonal).
    pub q: Vec<f64>,
    /// `zeta[i·m + j]`: whether `i` applied `j`'s update (diagonal always true).
    pub zeta: Vec<bool>,
    pub energy_joules: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub slot: usize,
    pub grad_norm_sq_avg_model: f64,
    pub consensus: f64,
    pub global_loss: f64,
    pub opt_gap: Option<f64>,
    pub energy_spent_total: f64,
    pub packets_sent: usize,
    pub packets_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct DflRun {
    /// Row `t` describes the models entering slot `t + 1`; the last row is after the final slot.
    pub metrics: Vec<MetricsRow>,
    pub trace: Vec<SlotRecord>,
    pub models: Vec<DVector<f64>>,
    /// `history[t][i]` when requested, including the initial models.
    pub history: Vec<Vec<DVector<f64>>>,
}

impl DflRun {
    pub fn final_metrics(&self) -> &MetricsRow {
        self.metrics.last().expect("at least the initial row")
    }

    /// Time average of `‖∇F(w̄_t)‖²` over the slots that were run.
    pub fn mean_grad_norm_sq(&self) -> f64 {
        let t = self.trace.len();
        if t == 0 {
            return self.metrics[0].grad_norm_sq_avg_model;
        }
        self.metrics[..t].iter().map(|r| r.grad_norm_sq_avg_model).sum::<f64>() / t as f64
    }
}

pub fn average_model(models: &[DVector<f64>]) -> DVector<f64> {
    let mut avg = DVector::zeros(models[0].len());
    for w in models {
        avg += w;
    }
    avg / models.len() as f64
}

/// `K` steps of SGD from `w`; returns the final model and every stochastic gradient.
pub fn local_sgd<R: Rng + ?Sized>(
    task: &LearningTask,
    i: usize,
    w: &DVector<f64>,
    k_steps: usize,
    eta: f64,
    rng: &mut R,
) -> (DVector<f64>, Vec<DVector<f64>>) {
    let mut w = w.clone();
    let mut grads = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        let g = task.stochastic_grad(i, &w, rng);
        w -= &g * eta;
        grads.push(g);
    }
    (w, grads)
}

/// Physical state of the network plus every device's model.
#[derive(Debug, Clone)]
pub struct DflState {
    pub slot: usize,
    /// Slot gain indices followed by battery levels, as in [`Mdp::decode_state`].
    pub comps: Vec<usize>,
    pub models: Vec<DVector<f64>>,
}

pub struct Simulator<'a> {
    pub mdp: &'a Mdp,
    pub task: &'a LearningTask,
    pub opts: SimOptions,
    pub seed: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(mdp: &'a Mdp, task: &'a LearningTask, opts: SimOptions, seed: u64) -> Result<Self> {
        if task.m() != mdp.m() {
            return Err(Error::ShapeMismatch(format!("task has {} devices, network has {}", task.m(), mdp.m())));
        }
        if let Some(w) = &opts.w_init {
            if w.len() != task.dim() {
                return Err(Error::ShapeMismatch("initial model has the wrong dimension".into()));
            }
        }
        if !(opts.eta >= 0.0) {
            return Err(Error::arg("learning rate must be nonnegative"));
        }
        Ok(Simulator { mdp, task, opts, seed })
    }

    pub fn initial_state(&self) -> Result<DflState> {
        let mdp = self.mdp;
        let k = mdp.n_slots();
        let comps = match &self.opts.initial {
            Some(c) => {
                mdp.encode_state(c)?;
                c.clone()
            }
            None => {
                let mut rng = stream(self.seed, Role::Init, 0, 0);
                let mut c: Vec<usize> = mdp.chains().iter().map(|ch| sample_index(ch.steady(), &mut rng)).collect();
                c.extend((0..mdp.m()).map(|_| rng.random_range(0..mdp.battery_levels())));
                debug_assert_eq!(c.len(), k + mdp.m());
                c
            }
        };
        let w0 = self.opts.w_init.clone().unwrap_or_else(|| DVector::zeros(self.task.dim()));
        Ok(DflState {
            slot: 0,
            comps,
            models: vec![w0; mdp.m()],
        })
    }

    /// Applies one slot with the given power levels. Rejects unaffordable
    /// actions before touching the state.
    pub fn slot_update(&self, state: &mut DflState, actions: &[usize]) -> Result<SlotRecord> {
        let mdp = self.mdp;
        let m = mdp.m();
        let k = mdp.n_slots();
        let t = state.slot;
        if actions.len() != m || actions.iter().any(|&a| a >= mdp.n_actions()) {
            return Err(Error::ShapeMismatch("one valid power level per device expected".into()));
        }
        for (i, &a) in actions.iter().enumerate() {
            let e = mdp.energy_quanta(i, a);
            if e > state.comps[k + i] {
                return Err(Error::CausalityViolation {
                    consumed: e,
                    battery: state.comps[k + i],
                });
            }
        }
        let topo = mdp.topology();
        let powers: Vec<f64> = actions.iter().map(|&a| mdp.powers()[a]).collect();
        let beta: Vec<bool> = powers.iter().map(|&p| p > 0.0).collect();

        let deltas: Vec<Option<DVector<f64>>> = (0..m)
            .map(|j| {
                beta[j].then(|| {
                    let mut rng = stream(self.seed, Role::Sgd, j as u64, t as u64);
                    let k_steps = mdp.energy()[j].k_steps;
                    let (w, _) = local_sgd(self.task, j, &state.models[j], k_steps, self.opts.eta, &mut rng);
                    w - &state.models[j]
                })
            })
            .collect();

        let gains = &state.comps[..k];
        let gain = |slot: usize| mdp.chains()[slot].gain(gains[slot]);
        let mut q = vec![1.0; m * m];
        let mut zeta = vec![false; m * m];
        let mut rng = stream(self.seed, Role::Success, t as u64, 0);
        for i in 0..m {
            zeta[i * m + i] = true;
            for &j in topo.neighbors(i) {
                let u: f64 = rng.random();
                let qij = match self.opts.links {
                    LinkMode::Physical => packet_error_rate(topo, mdp.channel_map(), mdp.radio(), &powers, gain, i, j)?,
                    LinkMode::Lossless => 0.0,
                };
                q[i * m + j] = qij;
                zeta[i * m + j] = beta[j] && success_from_uniform(qij, u);
            }
        }

        let next: Vec<DVector<f64>> = (0..m)
            .map(|i| {
                let mut w = state.models[i].clone();
                for (j, d) in deltas.iter().enumerate() {
                    if let Some(d) = d {
                        if zeta[i * m + j] {
                            w += d * topo.weight(i, j);
                        }
                    }
                }
                w
            })
            .collect();

        let mut energy_joules = 0.0;
        let mut rng_h = stream(self.seed, Role::Harvest, t as u64, 0);
        let mut rng_c = stream(self.seed, Role::Channel, t as u64, 0);
        let nb = mdp.battery_levels();
        for (i, &a) in actions.iter().enumerate() {
            let e = mdp.energy_quanta(i, a);
            energy_joules += e as f64 * mdp.energy()[i].quantum();
            let u = mdp.harvest()[i].sample(&mut rng_h);
            state.comps[k + i] = (state.comps[k + i] - e + u).min(nb - 1);
        }
        for c in 0..k {
            state.comps[c] = mdp.chains()[c].sample_next(state.comps[c], &mut rng_c);
        }
        state.models = next;
        state.slot += 1;
        Ok(SlotRecord {
            actions: actions.to_vec(),
            beta,
            q,
            zeta,
            energy_joules,
        })
    }

    fn metrics(&self, state: &DflState, energy_total: f64, packets: (usize, usize)) -> MetricsRow {
        let avg = average_model(&state.models);
        let loss = self.task.loss(&avg);
        MetricsRow {
            slot: state.slot,
            grad_norm_sq_avg_model: self.task.grad(&avg).norm_squared(),
            consensus: state.models.iter().map(|w| (w - &avg).norm_squared()).sum(),
            global_loss: loss,
            opt_gap: self.task.optimal_loss().map(|f| loss - f),
            energy_spent_total: energy_total,
            packets_sent: packets.0,
            packets_dropped: packets.1,
        }
    }

    /// Runs `horizon` slots, sampling actions from `policy`.
    pub fn run(&self, policy: &dyn Policy, horizon: usize) -> Result<DflRun> {
        if policy.horizon() < horizon {
            return Err(Error::arg(format!(
                "policy covers {} slots, run needs {horizon}",
                policy.horizon()
            )));
        }
        let mdp = self.mdp;
        let m = mdp.m();
        let mut state = self.initial_state()?;
        let mut metrics = vec![self.metrics(&state, 0.0, (0, 0))];
        let mut history = Vec::new();
        if self.opts.keep_models {
            history.push(state.models.clone());
        }
        let mut trace = Vec::with_capacity(horizon);
        let mut marg = vec![vec![0.0; mdp.n_actions()]; m];
        let mut energy_total = 0.0;
        for t in 0..horizon {
            let s = mdp.encode_state(&state.comps)?;
            policy.marginals(t, s, &state.comps, &mut marg);
            let mut rng = stream(self.seed, Role::Policy, t as u64, 0);
            let actions: Vec<usize> = marg.iter().map(|row| sample_index(row, &mut rng)).collect();
            let rec = self.slot_update(&mut state, &actions)?;
            energy_total += rec.energy_joules;
            let mut sent = 0;
            let mut dropped = 0;
            for j in (0..m).filter(|&j| rec.beta[j]) {
                for &i in mdp.topology().neighbors(j) {
                    sent += 1;
                    dropped += usize::from(!rec.zeta[i * m + j]);
                }
            }
            metrics.push(self.metrics(&state, energy_total, (sent, dropped)));
            if self.opts.keep_models {
                history.push(state.models.clone());
            }
            trace.push(rec);
        }
        Ok(DflRun {
            metrics,
            trace,
            models: state.models,
            history,
        })
    }
}
