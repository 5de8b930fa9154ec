use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ehdfl::harness::{self, ExperimentConfig, Loaded, PolicyKind};
use ehdfl::Error;

#[derive(Parser, Debug)]
#[command(name = "ehdfl", version, about = "Energy-harvesting decentralized FL: scheduling, training and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Replace the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: runs/<name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Restrict to these policies (repeatable).
    #[arg(long, global = true, value_parser = parse_policy)]
    policy: Vec<PolicyKind>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Synthesize policies and write their tables.
    Solve,
    /// Expected cumulative cost of each policy.
    Evaluate,
    /// DFL training runs under each policy, one per seed.
    Train,
    /// Rounds, battery, κ and gap sweeps.
    Sweep,
    /// Oracle and invariant checks.
    Verify,
    /// Solve, evaluate, train and sweep.
    Run,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    PolicyKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = PolicyKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown policy `{s}` (expected one of {})", names.join(", "))
    })
}

fn load(cli: &Cli) -> Result<Loaded, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Validation(vec!["--config is required".into()]))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(vec![format!("{}: {e}", path.display())]))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validated()
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let loaded = load(cli)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let cfg = &loaded.config;
    let out = harness::output_dir(cli.out.as_deref(), cfg);
    let kinds = if cli.policy.is_empty() {
        cfg.policies.clone()
    } else {
        cli.policy.clone()
    };
    match cli.command {
        Command::Solve => harness::run_solve(&loaded, &cfg.mdp()?, &kinds, &out)?,
        Command::Evaluate => {
            for (k, j) in harness::run_evaluate(&loaded, &cfg.mdp()?, &kinds, &out)? {
                println!("{:<18} J = {:.6} ± {:.6} ({})", k.name(), j.j, j.stderr, j.method);
            }
        }
        Command::Train => {
            for r in harness::run_train(&loaded, &cfg.mdp()?, &kinds, &out)? {
                println!(
                    "{:<18} J = {:.6}  final loss = {:.6} ± {:.6}",
                    r.policy, r.j, r.final_loss_mean, r.final_loss_ci95
                );
            }
        }
        Command::Sweep => harness::run_sweep(&loaded, &cfg.mdp()?, &out)?,
        Command::Verify => {
            let report = harness::run_verify(&loaded, &out)?;
            print!("{report}");
            return Ok(report.passed());
        }
        Command::Run => harness::run_experiment(&loaded, &out)?,
    }
    eprintln!("wrote {}", out.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Validation(_) | Error::InvalidParameters(_) => 2,
                Error::TooLarge { .. } => 3,
                _ => 1,
            })
        }
    }
}
