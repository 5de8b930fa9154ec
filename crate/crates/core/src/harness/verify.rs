//! Oracle and invariant checks run against a configured instance.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::config::{Loaded, PolicyKind};
use super::experiment::{build_default, initial_state, learning_rate, write_csv};
use crate::channel::packet_error_rate;
use crate::dfl::{convergence_bound, LearnConsts, LearningTask, SimOptions, Simulator};
use crate::error::{Error, Result};
use crate::mdp::{backward_induction, evaluate_exact, Mdp, SolveOptions};
use crate::rng::{stream, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check: &'static str,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(check: &'static str, ok: bool, detail: String) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Check { check, status, detail }
    }

    fn skip(check: &'static str, detail: impl Into<String>) -> Self {
        Check {
            check,
            status: Status::Skip,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", c.status, c.check, c.detail)?;
        }
        Ok(())
    }
}

const PAIRS: usize = 1000;

fn kernel_rows(mdp: &Mdp, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Role::Oracle, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..PAIRS.min(mdp.n_states() * mdp.n_joint_actions()) {
        let s = rng.random_range(0..mdp.n_states());
        let comps = mdp.decode_state(s);
        let a = rng.random_range(0..mdp.n_joint_actions());
        if !mdp.is_feasible(&comps, &mdp.decode_action(a)) {
            continue;
        }
        let total: f64 = mdp.transition(s, a)?.iter().map(|&(_, p)| p).sum();
        worst = worst.max((total - 1.0).abs());
    }
    for c in mdp.chains() {
        for row in c.matrix().chunks(c.n()) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok(Check::new("kernel_rows", worst <= 1e-10, format!("max row-sum error {worst:.3e}")))
}

/// Per-transmitter costs against the receiver-side sum of `a_ij q_ij`.
fn cost_decomposition(mdp: &Mdp, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Role::Oracle, 1, 0);
    let k = mdp.n_slots();
    let topo = mdp.topology();
    let mut worst: f64 = 0.0;
    for _ in 0..PAIRS {
        let comps = mdp.decode_state(rng.random_range(0..mdp.n_states()));
        let acts = mdp.decode_action(rng.random_range(0..mdp.n_joint_actions()));
        let powers: Vec<f64> = acts.iter().map(|&a| mdp.powers()[a]).collect();
        let gain = |slot: usize| mdp.chains()[slot].gain(comps[slot]);
        let mut global = 0.0;
        for i in 0..mdp.m() {
            for &j in topo.neighbors(i) {
                let q = packet_error_rate(topo, mdp.channel_map(), mdp.radio(), &powers, gain, i, j)?;
                global += topo.weight(i, j) * q;
            }
        }
        let parts: f64 = (0..mdp.m()).map(|i| mdp.device_cost(i, &comps[..k], &acts)).sum();
        worst = worst.max((parts - mdp.cost_scale() * global).abs());
    }
    Ok(Check::new(
        "cost_decomposition",
        worst <= 1e-12,
        format!("max |Σc_i − c| {worst:.3e} over {PAIRS} pairs"),
    ))
}

/// Exact optimum against every other configured policy, plus the value-table identity.
fn optimality(loaded: &Loaded, mdp: &Mdp) -> Result<Vec<Check>> {
    let cfg = &loaded.config;
    let opts = SolveOptions {
        max_entries: cfg.solver.max_entries,
        store_q: false,
    };
    let sol = match backward_induction(mdp, cfg.horizon, opts) {
        Err(Error::TooLarge { entries, .. }) => {
            let why = format!("exact solve needs {entries} entries");
            return Ok(vec![Check::skip("value_identity", why.clone()), Check::skip("optimal_dominates", why)]);
        }
        other => other?,
    };
    let init = initial_state(mdp);
    let j_star = evaluate_exact(mdp, &sol.policy, &init)?;
    let from_values: f64 = sol
        .values
        .first()
        .map_or(0.0, |v| mdp.steady_uniform_init().iter().zip(v).map(|(p, v)| p * v).sum());
    let diff = (j_star - from_values).abs();
    let mut out = vec![Check::new(
        "value_identity",
        diff <= 1e-9 * j_star.abs().max(1.0),
        format!("J(π*) {j_star:.9} vs Σμ·V₁ {from_values:.9}"),
    )];
    let mut worst = f64::INFINITY;
    let mut detail = Vec::new();
    for &kind in cfg.policies.iter().filter(|&&k| k != PolicyKind::CentralizedPi) {
        let p = build_default(cfg, mdp, kind)?;
        let j = evaluate_exact(mdp, p.as_policy(), &init)?;
        worst = worst.min(j - j_star);
        detail.push(format!("{} {:.6}", kind.name(), j - j_star));
    }
    if detail.is_empty() {
        out.push(Check::skip("optimal_dominates", "no other policy configured"));
    } else {
        out.push(Check::new("optimal_dominates", worst >= -1e-9, format!("gaps: {}", detail.join(", "))));
    }
    Ok(out)
}

/// Same seed twice gives the same run.
fn simulator(loaded: &Loaded, mdp: &Mdp) -> Result<Check> {
    let cfg = &loaded.config;
    let seed = cfg.seeds[0];
    let task = LearningTask::generate(&cfg.task, mdp.m(), seed)?;
    let greedy = build_default(cfg, mdp, PolicyKind::Greedy)?;
    let mut opts = SimOptions::new(learning_rate(cfg, mdp, &task));
    opts.links = cfg.train.links;
    let sim = Simulator::new(mdp, &task, opts, seed)?;
    let a = sim.run(greedy.as_policy(), cfg.horizon)?;
    let b = sim.run(greedy.as_policy(), cfg.horizon)?;
    let same = a.metrics == b.metrics && a.models == b.models;
    Ok(Check::new(
        "simulator_replay",
        same,
        format!("{} slots replayed with seed {seed}", cfg.horizon),
    ))
}

/// Time-averaged gradient norm against the bound, at the bound's own step size.
fn bound(loaded: &Loaded, mdp: &Mdp) -> Result<Check> {
    let cfg = &loaded.config;
    if cfg.horizon == 0 || mdp.m() < 2 {
        return Ok(Check::skip("convergence_bound", "needs two devices and one slot"));
    }
    let k = mdp.energy()[0].k_steps;
    let policy = build_default(cfg, mdp, PolicyKind::Greedy)?;
    let mut worst = f64::INFINITY;
    for &seed in &cfg.seeds {
        let task = LearningTask::generate(&cfg.task, mdp.m(), seed)?;
        let eta = LearnConsts::bound_eta(task.smoothness(), mdp.m(), k, cfg.horizon);
        let w0 = nalgebra::DVector::zeros(task.dim());
        let consts = LearnConsts::certify(&task, &w0, k, eta, 2.0)?;
        let mut opts = SimOptions::new(eta);
        opts.links = cfg.train.links;
        let run = Simulator::new(mdp, &task, opts, seed)?.run(policy.as_policy(), cfg.horizon)?;
        let f0 = task.loss(&w0);
        let gap0 = task.optimal_loss().map_or(f0, |f| f0 - f);
        let b = convergence_bound(&consts, mdp.topology(), gap0, &run.trace)?;
        worst = worst.min(b.total() - run.mean_grad_norm_sq());
    }
    Ok(Check::new(
        "convergence_bound",
        worst >= 0.0,
        format!("min slack {worst:.4e} over {} seeds", cfg.seeds.len()),
    ))
}

pub fn verify(loaded: &Loaded) -> Result<VerifyReport> {
    let mdp = loaded.config.mdp()?;
    let seed = loaded.config.seeds[0];
    let mut checks = vec![kernel_rows(&mdp, seed)?, cost_decomposition(&mdp, seed)?];
    checks.extend(optimality(loaded, &mdp)?);
    checks.push(simulator(loaded, &mdp)?);
    checks.push(bound(loaded, &mdp)?);
    Ok(VerifyReport { checks })
}

/// Runs the suite and writes `verify.csv`.
pub fn run_verify(loaded: &Loaded, out: &Path) -> Result<VerifyReport> {
    let report = verify(loaded)?;
    write_csv(&out.join("verify.csv"), &loaded.hash, &["check", "status", "detail"], &report.checks)?;
    Ok(report)
}
