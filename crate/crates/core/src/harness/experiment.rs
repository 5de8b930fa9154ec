//! Policy building, evaluation, training runs, sweeps and their CSV outputs.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::statistics::Statistics;

use super::config::{EvalMethod, ExperimentConfig, GammaChoice, Loaded, PolicyKind};
use crate::baselines::{myopic_central, Greedy};
use crate::boundlab::{d_analytic, fit_rate, gamma_cap, gap_curve, normalized_q_bound};
use crate::dfl::{DflRun, LearnConsts, LearningTask, SimOptions, Simulator};
use crate::error::{Error, Result};
use crate::localized::{save_policy, synthesize, LocalizedPolicy};
use crate::mdp::table_io::{Payload, Table, TableKind};
use crate::mdp::{
    backward_induction, evaluate_exact, evaluate_mc, DeterministicPolicy, InitialState, Mdp, Policy, SolveOptions,
};
use crate::topology::Topology;

/// A synthesized scheduler of any kind.
#[derive(Debug, Clone)]
pub enum BuiltPolicy {
    Table(DeterministicPolicy),
    Localized(LocalizedPolicy),
    Greedy(Greedy),
}

impl BuiltPolicy {
    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            BuiltPolicy::Table(p) => p,
            BuiltPolicy::Localized(p) => p,
            BuiltPolicy::Greedy(p) => p,
        }
    }

    /// Writes the policy tables under `dir`. Greedy has no tables.
    pub fn save(&self, dir: &Path, topology_hash: &str, config_hash: &str) -> Result<()> {
        match self {
            BuiltPolicy::Table(p) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Table {
                    kind: TableKind::JointActions,
                    horizon: p.horizon() as u32,
                    dims: vec![p.n_states as u64],
                    payload: Payload::U32(p.actions.concat()),
                }
                .save(&dir.join("actions.bin"))
            }
            BuiltPolicy::Localized(p) => save_policy(p, dir, topology_hash, config_hash),
            BuiltPolicy::Greedy(_) => Ok(()),
        }
    }
}

fn solve_opts(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        max_entries: cfg.solver.max_entries,
        store_q: false,
    }
}

/// Builds `kind` on `mdp`; the localized policy uses `kappa` and `rounds`.
pub fn build_policy(cfg: &ExperimentConfig, mdp: &Mdp, kind: PolicyKind, kappa: usize, rounds: usize) -> Result<BuiltPolicy> {
    let t = cfg.horizon;
    Ok(match kind {
        PolicyKind::CentralizedPi => BuiltPolicy::Table(backward_induction(mdp, t, solve_opts(cfg))?.policy),
        PolicyKind::DecentralizedPi => BuiltPolicy::Localized(synthesize(mdp, &cfg.localized_options(kappa, rounds))?),
        PolicyKind::MyopicCentral => BuiltPolicy::Table(myopic_central(mdp, t)),
        PolicyKind::Greedy => BuiltPolicy::Greedy(Greedy::new(mdp, t)),
    })
}

/// Builds `kind` with the configured κ and R.
pub fn build_default(cfg: &ExperimentConfig, mdp: &Mdp, kind: PolicyKind) -> Result<BuiltPolicy> {
    build_policy(cfg, mdp, kind, cfg.localized.kappa, cfg.localized.rounds)
}

/// Stationary channels, uniform batteries.
pub fn initial_state(mdp: &Mdp) -> InitialState {
    InitialState::Distribution(mdp.steady_uniform_init())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JEstimate {
    pub method: &'static str,
    pub j: f64,
    /// Zero for exact evaluation.
    pub stderr: f64,
}

/// Expected cumulative cost of `policy` from the steady/uniform start.
pub fn evaluate(cfg: &ExperimentConfig, mdp: &Mdp, policy: &dyn Policy) -> Result<JEstimate> {
    let init = initial_state(mdp);
    let exact = match cfg.evaluation.method {
        EvalMethod::Exact => true,
        EvalMethod::MonteCarlo => false,
        EvalMethod::Auto => mdp.n_states() as u128 * mdp.n_joint_actions() as u128 <= cfg.solver.max_entries,
    };
    if exact {
        Ok(JEstimate {
            method: "exact",
            j: evaluate_exact(mdp, policy, &init)?,
            stderr: 0.0,
        })
    } else {
        let est = evaluate_mc(mdp, policy, &init, cfg.evaluation.mc_samples, cfg.seeds[0])?;
        Ok(JEstimate {
            method: "monte_carlo",
            j: est.mean,
            stderr: est.stderr,
        })
    }
}

/// Step size used for training: configured, or the bound's prescription.
pub fn learning_rate(cfg: &ExperimentConfig, mdp: &Mdp, task: &LearningTask) -> f64 {
    cfg.train
        .eta
        .unwrap_or_else(|| LearnConsts::bound_eta(task.smoothness(), mdp.m(), mdp.energy()[0].k_steps, cfg.horizon))
}

/// One DFL run of `policy`; the task and every random stream derive from `seed`.
pub fn train(cfg: &ExperimentConfig, mdp: &Mdp, policy: &dyn Policy, seed: u64) -> Result<DflRun> {
    let task = LearningTask::generate(&cfg.task, mdp.m(), seed)?;
    let mut opts = SimOptions::new(learning_rate(cfg, mdp, &task));
    opts.links = cfg.train.links;
    Simulator::new(mdp, &task, opts, seed)?.run(policy, cfg.horizon)
}

/// Trains once per seed, in parallel, results in seed order.
pub fn train_seeds(cfg: &ExperimentConfig, mdp: &Mdp, policy: &dyn Policy) -> Result<Vec<DflRun>> {
    cfg.seeds.par_iter().map(|&s| train(cfg, mdp, policy, s)).collect()
}

/// Mean and standard error; the error is 0 for a single sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (xs[0], 0.0),
        n => (xs.mean(), xs.std_dev() / (n as f64).sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: &'static str,
    pub j_method: &'static str,
    pub j: f64,
    pub j_stderr: f64,
    pub seeds: usize,
    pub final_loss_mean: f64,
    pub final_loss_stderr: f64,
    pub final_loss_ci95: f64,
    pub mean_grad_norm_sq: f64,
    pub mean_grad_norm_sq_stderr: f64,
    pub final_consensus_mean: f64,
    pub energy_mean: f64,
    pub drop_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRow {
    pub policy: &'static str,
    pub slot: usize,
    pub loss_mean: f64,
    pub loss_stderr: f64,
    pub grad_norm_sq_mean: f64,
    pub consensus_mean: f64,
    pub energy_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SeedRow {
    seed: u64,
    slot: usize,
    grad_norm_sq_avg_model: f64,
    consensus: f64,
    global_loss: f64,
    opt_gap: Option<f64>,
    energy_spent_total: f64,
    packets_sent: usize,
    packets_dropped: usize,
}

/// Everything measured for one policy.
#[derive(Debug, Clone)]
pub struct PolicyResult {
    pub kind: PolicyKind,
    pub policy: BuiltPolicy,
    pub j: JEstimate,
    pub runs: Vec<DflRun>,
}

impl PolicyResult {
    pub fn final_losses(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.final_metrics().global_loss).collect()
    }

    pub fn summary(&self) -> SummaryRow {
        let (loss, loss_se) = mean_stderr(&self.final_losses());
        let grads: Vec<f64> = self.runs.iter().map(DflRun::mean_grad_norm_sq).collect();
        let (grad, grad_se) = mean_stderr(&grads);
        let fin = |f: fn(&DflRun) -> f64| mean_stderr(&self.runs.iter().map(f).collect::<Vec<_>>()).0;
        let (sent, dropped) = self.runs.iter().fold((0, 0), |(s, d), r| {
            r.metrics.iter().fold((s, d), |(s, d), row| (s + row.packets_sent, d + row.packets_dropped))
        });
        SummaryRow {
            policy: self.kind.name(),
            j_method: self.j.method,
            j: self.j.j,
            j_stderr: self.j.stderr,
            seeds: self.runs.len(),
            final_loss_mean: loss,
            final_loss_stderr: loss_se,
            final_loss_ci95: 1.96 * loss_se,
            mean_grad_norm_sq: grad,
            mean_grad_norm_sq_stderr: grad_se,
            final_consensus_mean: fin(|r| r.final_metrics().consensus),
            energy_mean: fin(|r| r.final_metrics().energy_spent_total),
            drop_rate: if sent == 0 { 0.0 } else { dropped as f64 / sent as f64 },
        }
    }

    pub fn slot_rows(&self) -> Vec<SlotRow> {
        let rows = self.runs.first().map_or(0, |r| r.metrics.len());
        (0..rows)
            .map(|t| {
                let col = |f: fn(&crate::dfl::MetricsRow) -> f64| -> Vec<f64> {
                    self.runs.iter().map(|r| f(&r.metrics[t])).collect()
                };
                let (loss, loss_se) = mean_stderr(&col(|r| r.global_loss));
                SlotRow {
                    policy: self.kind.name(),
                    slot: t,
                    loss_mean: loss,
                    loss_stderr: loss_se,
                    grad_norm_sq_mean: mean_stderr(&col(|r| r.grad_norm_sq_avg_model)).0,
                    consensus_mean: mean_stderr(&col(|r| r.consensus)).0,
                    energy_mean: mean_stderr(&col(|r| r.energy_spent_total)).0,
                }
            })
            .collect()
    }
}

/// Paired-seed comparison: every policy sees the same tasks and random streams.
pub fn compare_policies(cfg: &ExperimentConfig, mdp: &Mdp, kinds: &[PolicyKind]) -> Result<Vec<PolicyResult>> {
    kinds
        .iter()
        .map(|&kind| {
            let policy = build_default(cfg, mdp, kind)?;
            let j = evaluate(cfg, mdp, policy.as_policy())?;
            let runs = train_seeds(cfg, mdp, policy.as_policy())?;
            Ok(PolicyResult { kind, policy, j, runs })
        })
        .collect()
}

/// Writes `rows` as CSV after a `# config_hash=` line. Headers are written
/// even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, hash: &str, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        if rows.is_empty() {
            w.write_record(header).map_err(|e| csv_err(path, e))?;
        }
        for r in rows {
            w.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub const SUMMARY_HEADER: &[&str] = &[
    "policy",
    "j_method",
    "j",
    "j_stderr",
    "seeds",
    "final_loss_mean",
    "final_loss_stderr",
    "final_loss_ci95",
    "mean_grad_norm_sq",
    "mean_grad_norm_sq_stderr",
    "final_consensus_mean",
    "energy_mean",
    "drop_rate",
];
const SLOT_HEADER: &[&str] = &[
    "policy",
    "slot",
    "loss_mean",
    "loss_stderr",
    "grad_norm_sq_mean",
    "consensus_mean",
    "energy_mean",
];
const SEED_HEADER: &[&str] = &[
    "seed",
    "slot",
    "grad_norm_sq_avg_model",
    "consensus",
    "global_loss",
    "opt_gap",
    "energy_spent_total",
    "packets_sent",
    "packets_dropped",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SolveRow {
    policy: &'static str,
    horizon: usize,
    table_entries: u64,
}

/// Synthesizes `kinds` and writes them under `out/policies`.
pub fn run_solve(loaded: &Loaded, mdp: &Mdp, kinds: &[PolicyKind], out: &Path) -> Result<()> {
    let cfg = &loaded.config;
    let topo_hash = mdp.topology().hash();
    let mut rows = Vec::new();
    for &kind in kinds {
        let p = build_default(cfg, mdp, kind)?;
        p.save(&out.join("policies").join(kind.name()), &topo_hash, &loaded.hash)?;
        let entries = match &p {
            BuiltPolicy::Table(t) => (t.n_states * t.horizon()) as u64,
            BuiltPolicy::Localized(l) => l.devices.iter().map(|d| d.tables.iter().map(Vec::len).sum::<usize>() as u64).sum(),
            BuiltPolicy::Greedy(_) => 0,
        };
        rows.push(SolveRow {
            policy: kind.name(),
            horizon: cfg.horizon,
            table_entries: entries,
        });
    }
    write_csv(&out.join("solve.csv"), &loaded.hash, &["policy", "horizon", "table_entries"], &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EvalRow {
    policy: &'static str,
    method: &'static str,
    j: f64,
    stderr: f64,
}

pub fn run_evaluate(loaded: &Loaded, mdp: &Mdp, kinds: &[PolicyKind], out: &Path) -> Result<Vec<(PolicyKind, JEstimate)>> {
    let cfg = &loaded.config;
    let mut res = Vec::new();
    for &kind in kinds {
        let p = build_default(cfg, mdp, kind)?;
        res.push((kind, evaluate(cfg, mdp, p.as_policy())?));
    }
    let rows: Vec<EvalRow> = res
        .iter()
        .map(|(k, e)| EvalRow {
            policy: k.name(),
            method: e.method,
            j: e.j,
            stderr: e.stderr,
        })
        .collect();
    write_csv(&out.join("evaluate.csv"), &loaded.hash, &["policy", "method", "j", "stderr"], &rows)?;
    Ok(res)
}

/// Policy comparison with per-seed metrics, per-slot aggregates and a summary.
pub fn run_train(loaded: &Loaded, mdp: &Mdp, kinds: &[PolicyKind], out: &Path) -> Result<Vec<SummaryRow>> {
    let cfg = &loaded.config;
    let results = compare_policies(cfg, mdp, kinds)?;
    let mut slots = Vec::new();
    for r in &results {
        for (seed, run) in cfg.seeds.iter().zip(&r.runs) {
            let rows: Vec<SeedRow> = run
                .metrics
                .iter()
                .map(|m| SeedRow {
                    seed: *seed,
                    slot: m.slot,
                    grad_norm_sq_avg_model: m.grad_norm_sq_avg_model,
                    consensus: m.consensus,
                    global_loss: m.global_loss,
                    opt_gap: m.opt_gap,
                    energy_spent_total: m.energy_spent_total,
                    packets_sent: m.packets_sent,
                    packets_dropped: m.packets_dropped,
                })
                .collect();
            let path = out.join("runs").join(r.kind.name()).join(format!("seed_{seed}.csv"));
            write_csv(&path, &loaded.hash, SEED_HEADER, &rows)?;
        }
        slots.extend(r.slot_rows());
    }
    let summary: Vec<SummaryRow> = results.iter().map(PolicyResult::summary).collect();
    write_csv(&out.join("slots.csv"), &loaded.hash, SLOT_HEADER, &slots)?;
    write_csv(&out.join("summary.csv"), &loaded.hash, SUMMARY_HEADER, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundsRow {
    pub rounds: usize,
    pub j: f64,
    pub j_stderr: f64,
    pub final_loss_mean: f64,
    pub final_loss_stderr: f64,
}

/// Localized policy at each configured R.
pub fn sweep_rounds(cfg: &ExperimentConfig, mdp: &Mdp) -> Result<Vec<RoundsRow>> {
    cfg.sweep
        .rounds
        .iter()
        .map(|&r| {
            let p = build_policy(cfg, mdp, PolicyKind::DecentralizedPi, cfg.localized.kappa, r)?;
            let j = evaluate(cfg, mdp, p.as_policy())?;
            let losses: Vec<f64> = train_seeds(cfg, mdp, p.as_policy())?
                .iter()
                .map(|x| x.final_metrics().global_loss)
                .collect();
            let (loss, se) = mean_stderr(&losses);
            Ok(RoundsRow {
                rounds: r,
                j: j.j,
                j_stderr: j.stderr,
                final_loss_mean: loss,
                final_loss_stderr: se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryRow {
    pub policy: &'static str,
    pub levels: usize,
    pub b_max: f64,
    pub j: f64,
    pub j_stderr: f64,
    pub final_loss_mean: f64,
    pub final_loss_stderr: f64,
}

/// Every configured policy on a battery grid of growing size with a fixed quantum.
pub fn sweep_battery(cfg: &ExperimentConfig) -> Result<Vec<BatteryRow>> {
    let m = cfg.sweep.battery_m.unwrap_or(cfg.topology.m);
    let mut rows = Vec::new();
    for &levels in &cfg.sweep.battery_levels {
        let topo = Topology::build(cfg.topology.kind, m, cfg.topology.seed)?;
        let mdp = cfg.mdp_with(topo, levels)?;
        for &kind in &cfg.policies {
            let p = build_default(cfg, &mdp, kind)?;
            let j = evaluate(cfg, &mdp, p.as_policy())?;
            let losses: Vec<f64> = train_seeds(cfg, &mdp, p.as_policy())?
                .iter()
                .map(|x| x.final_metrics().global_loss)
                .collect();
            let (loss, se) = mean_stderr(&losses);
            rows.push(BatteryRow {
                policy: kind.name(),
                levels,
                b_max: mdp.energy()[0].b_max,
                j: j.j,
                j_stderr: j.stderr,
                final_loss_mean: loss,
                final_loss_stderr: se,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaRow {
    pub kappa: usize,
    /// `ok`, or `skipped_too_large` when a scope exceeds the local budget.
    pub status: &'static str,
    pub j: Option<f64>,
    pub j_stderr: Option<f64>,
    pub final_loss_mean: Option<f64>,
    pub final_loss_stderr: Option<f64>,
}

pub fn sweep_kappa(cfg: &ExperimentConfig, mdp: &Mdp) -> Result<Vec<KappaRow>> {
    cfg.sweep
        .kappas
        .iter()
        .map(|&kappa| {
            let p = match build_policy(cfg, mdp, PolicyKind::DecentralizedPi, kappa, cfg.localized.rounds) {
                Err(Error::TooLarge { .. }) => {
                    return Ok(KappaRow {
                        kappa,
                        status: "skipped_too_large",
                        j: None,
                        j_stderr: None,
                        final_loss_mean: None,
                        final_loss_stderr: None,
                    })
                }
                other => other?,
            };
            let j = evaluate(cfg, mdp, p.as_policy())?;
            let losses: Vec<f64> = train_seeds(cfg, mdp, p.as_policy())?
                .iter()
                .map(|x| x.final_metrics().global_loss)
                .collect();
            let (loss, se) = mean_stderr(&losses);
            Ok(KappaRow {
                kappa,
                status: "ok",
                j: Some(j.j),
                j_stderr: Some(j.stderr),
                final_loss_mean: Some(loss),
                final_loss_stderr: Some(se),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub gamma: f64,
    pub kappa: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub gap: f64,
    #[serde(rename = "D_analytic")]
    pub d_analytic: f64,
    /// NaN when too few positive gaps remain for a fit.
    #[serde(rename = "D_fit")]
    pub d_fit: f64,
    pub r2: f64,
}

/// Resolves a γ choice against the normalized Q bound of `mdp`.
pub fn resolve_gamma(choice: GammaChoice, mdp: &Mdp, horizon: usize) -> f64 {
    match choice {
        GammaChoice::Value(g) => g,
        GammaChoice::Named(_) => gamma_cap(mdp.m(), mdp.n_joint_actions(), normalized_q_bound(mdp, horizon)),
    }
}

/// Exact gap curves on the configured network over the (γ, κ) grid.
/// The rate is fitted over `R ≥ 1`.
pub fn sweep_gap(cfg: &ExperimentConfig, mdp: &Mdp) -> Result<Vec<GapRow>> {
    let Some(spec) = &cfg.sweep.gap else {
        return Ok(Vec::new());
    };
    let init = initial_state(mdp);
    let q = normalized_q_bound(mdp, cfg.horizon);
    let mut rows = Vec::new();
    for &choice in &spec.gammas {
        let gamma = resolve_gamma(choice, mdp, cfg.horizon);
        for &kappa in &spec.kappas {
            let mut opts = cfg.localized_options(kappa, 0);
            opts.gamma = gamma;
            let curve = gap_curve(mdp, &opts, &init, spec.r_max)?;
            let (d_fit, r2) = match fit_rate(&curve[1.min(curve.len())..]) {
                Ok(f) => (f.d_hat, f.r2),
                Err(Error::InsufficientData(_)) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            let d = d_analytic(gamma, mdp.m(), mdp.n_joint_actions(), q);
            rows.extend(curve.into_iter().map(|(r, gap)| GapRow {
                gamma,
                kappa,
                r,
                gap,
                d_analytic: d,
                d_fit,
                r2,
            }));
        }
    }
    Ok(rows)
}

/// Runs every configured sweep and writes its CSV. Sweeps that are not
/// configured still get a headers-only file.
pub fn run_sweep(loaded: &Loaded, mdp: &Mdp, out: &Path) -> Result<()> {
    let cfg = &loaded.config;
    let h = &loaded.hash;
    write_csv(
        &out.join("rounds.csv"),
        h,
        &["rounds", "j", "j_stderr", "final_loss_mean", "final_loss_stderr"],
        &sweep_rounds(cfg, mdp)?,
    )?;
    write_csv(
        &out.join("battery.csv"),
        h,
        &["policy", "levels", "b_max", "j", "j_stderr", "final_loss_mean", "final_loss_stderr"],
        &sweep_battery(cfg)?,
    )?;
    write_csv(
        &out.join("kappa.csv"),
        h,
        &["kappa", "status", "j", "j_stderr", "final_loss_mean", "final_loss_stderr"],
        &sweep_kappa(cfg, mdp)?,
    )?;
    write_csv(
        &out.join("gap.csv"),
        h,
        &["gamma", "kappa", "R", "gap", "D_analytic", "D_fit", "r2"],
        &sweep_gap(cfg, mdp)?,
    )
}

/// Solve, evaluate, train and sweep into one directory.
pub fn run_experiment(loaded: &Loaded, out: &Path) -> Result<()> {
    let mdp = loaded.config.mdp()?;
    let kinds = loaded.config.policies.clone();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_path = out.join("config.json");
    let json = serde_json::to_string_pretty(&loaded.config).expect("config serializes");
    fs::write(&cfg_path, json + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    run_solve(loaded, &mdp, &kinds, out)?;
    run_evaluate(loaded, &mdp, &kinds, out)?;
    run_train(loaded, &mdp, &kinds, out)?;
    run_sweep(loaded, &mdp, out)
}

#[cfg(test)]
mod tests {
    use super::super::config::tests::TINY;
    use super::*;

    fn loaded(text: &str) -> Loaded {
        ExperimentConfig::from_toml(text).unwrap().validated().unwrap()
    }

    #[test]
    fn centralized_beats_decentralized_on_tiny() {
        let l = loaded(TINY);
        let mdp = l.config.mdp().unwrap();
        let res = compare_policies(&l.config, &mdp, &[PolicyKind::CentralizedPi, PolicyKind::DecentralizedPi]).unwrap();
        assert!(res[0].j.j <= res[1].j.j + 1e-9);
        assert_eq!(res[0].runs.len(), 2);
        assert_eq!(res[0].summary().seeds, 2);
    }

    #[test]
    fn zero_horizon_gives_headers_only() {
        let l = loaded(&TINY.replace("seeds = [1, 2]", "seeds = [1]").replace("horizon = 3", "horizon = 0"));
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&l, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("gap.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("# config_hash="));
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2 + 4);
    }

    #[test]
    fn outputs_are_reproducible() {
        let text = format!("{TINY}\n[sweep]\nrounds = [0, 2]\nkappas = [0, 1, 2]\nbattery_levels = [2, 3]\n");
        let l = loaded(&text);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&l, a.path()).unwrap();
        run_experiment(&l, b.path()).unwrap();
        for f in ["summary.csv", "slots.csv", "rounds.csv", "kappa.csv", "battery.csv", "runs/greedy/seed_2.csv"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let kappa = std::fs::read_to_string(a.path().join("kappa.csv")).unwrap();
        assert_eq!(kappa.lines().count(), 2 + 3);
    }

    #[test]
    fn mean_stderr_edge_cases() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
