use std::path::PathBuf;

use ehdfl::baselines::Greedy;
use ehdfl::energy::{battery_step, feasible_actions};
use ehdfl::mdp::Policy;
use ehdfl::{
    backward_induction, evaluate_exact, evaluate_mc, myopic_central, synthesize, ExperimentConfig, InitialState,
    LocalizedOptions, Mdp, SolveOptions, Topology, TopologyKind,
};
use proptest::prelude::*;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn tiny(name: &str) -> (ExperimentConfig, Mdp) {
    let loaded = ExperimentConfig::load(&scenario(name)).unwrap();
    let mdp = loaded.config.mdp().unwrap();
    (loaded.config, mdp)
}

fn kind(k: u8) -> TopologyKind {
    match k {
        0 => TopologyKind::Ring,
        1 => TopologyKind::Complete,
        2 => TopologyKind::Line,
        _ => TopologyKind::RandomGeometric { radius: None },
    }
}

fn marginals(p: &dyn Policy, mdp: &Mdp, t: usize, s: usize) -> Vec<Vec<f64>> {
    let comps = mdp.decode_state(s);
    let mut out = vec![vec![0.0; mdp.n_actions()]; mdp.m()];
    p.marginals(t, s, &comps, &mut out);
    out
}

#[test]
fn shipped_scenarios_load() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let loaded = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(loaded.hash, loaded.config.canonical_hash());
            assert_eq!(loaded.hash.len(), 64);
            loaded.config.mdp().unwrap();
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::load(&scenario("tiny_line3.toml")).unwrap();
    let b = ExperimentConfig::load(&scenario("tiny_line3.toml")).unwrap();
    assert_eq!(a.hash, b.hash);
    let mut c = a.config.clone();
    c.horizon += 1;
    assert_ne!(c.canonical_hash(), a.hash);
}

#[test]
fn unit_horizon_optimum_is_myopic() {
    let (_, mdp) = tiny("tiny_ring4.toml");
    let sol = backward_induction(&mdp, 1, SolveOptions::default()).unwrap();
    let myopic = myopic_central(&mdp, 1);
    let init = InitialState::Distribution(mdp.steady_uniform_init());
    let a = evaluate_exact(&mdp, &sol.policy, &init).unwrap();
    let b = evaluate_exact(&mdp, &myopic, &init).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn optimum_dominates_baselines_everywhere() {
    for name in ["tiny_line3.toml", "tiny_complete3.toml", "tiny_ring4.toml"] {
        let (cfg, mdp) = tiny(name);
        let t = cfg.horizon;
        let sol = backward_induction(&mdp, t, SolveOptions::default()).unwrap();
        let greedy = Greedy::new(&mdp, t);
        let myopic = myopic_central(&mdp, t);
        let loc = synthesize(&mdp, &LocalizedOptions::new(1, 5.0, 2, t)).unwrap();
        for s in 0..mdp.n_states() {
            let init = InitialState::State(s);
            let star = evaluate_exact(&mdp, &sol.policy, &init).unwrap();
            assert!((star - sol.values[0][s]).abs() < 1e-9);
            for p in [&greedy as &dyn Policy, &myopic, &loc] {
                assert!(evaluate_exact(&mdp, p, &init).unwrap() >= star - 1e-9, "{name} s={s}");
            }
        }
    }
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let (cfg, mdp) = tiny("tiny_line3.toml");
    let loc = synthesize(&mdp, &LocalizedOptions::new(1, 2.0, 3, cfg.horizon)).unwrap();
    let init = InitialState::Distribution(mdp.steady_uniform_init());
    let exact = evaluate_exact(&mdp, &loc, &init).unwrap();
    let mc = evaluate_mc(&mdp, &loc, &init, 20_000, 7).unwrap();
    assert!((mc.mean - exact).abs() < 5.0 * mc.stderr, "{} ± {} vs {exact}", mc.mean, mc.stderr);
}

#[test]
fn localized_rows_are_feasible_distributions() {
    for name in ["tiny_line3.toml", "tiny_ring4.toml"] {
        let (cfg, mdp) = tiny(name);
        let loc = synthesize(&mdp, &LocalizedOptions::new(1, 3.0, 2, cfg.horizon)).unwrap();
        let k = mdp.n_slots();
        for t in 0..cfg.horizon {
            for s in 0..mdp.n_states() {
                let comps = mdp.decode_state(s);
                for (i, row) in marginals(&loc, &mdp, t, s).iter().enumerate() {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    let ok = feasible_actions(comps[k + i], mdp.powers(), &mdp.energy()[i]);
                    for (a, &p) in row.iter().enumerate() {
                        assert!(p >= 0.0);
                        if !ok.contains(&a) {
                            assert_eq!(p, 0.0, "{name} t={t} s={s} i={i} a={a}");
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metropolis_weights_are_doubly_stochastic(m in 2usize..12, seed in 0u64..1000, k in 0u8..4) {
        let t = Topology::build(kind(k), m, seed).unwrap();
        for i in 0..m {
            let row: f64 = (0..m).map(|j| t.weight(i, j)).sum();
            let col: f64 = (0..m).map(|j| t.weight(j, i)).sum();
            prop_assert!((row - 1.0).abs() < 1e-12 && (col - 1.0).abs() < 1e-12);
            for j in 0..m {
                prop_assert_eq!(t.weight(i, j), t.weight(j, i));
                prop_assert!(t.weight(i, j) >= 0.0);
            }
        }
        prop_assert!((0.0..1.0).contains(&t.lambda()));
        prop_assert_eq!(t.ball(0, t.diameter()).unwrap().len(), m);
    }

    #[test]
    fn battery_stays_in_range(levels in 2usize..10, b in 0usize..10, u in 0usize..12, e in 0usize..10) {
        let b = b % levels;
        let e = e.min(b);
        let next = battery_step(b, u, e, levels).unwrap();
        prop_assert!(next < levels);
        prop_assert_eq!(next, (b - e + u).min(levels - 1));
    }

    #[test]
    fn kernel_rows_sum_to_one(s in 0usize..10_000, a in 0usize..64) {
        let (_, mdp) = tiny("tiny_line3.toml");
        let s = s % mdp.n_states();
        let a = a % mdp.n_joint_actions();
        let comps = mdp.decode_state(s);
        let acts = mdp.decode_action(a);
        prop_assume!(mdp.is_feasible(&comps, &acts));
        let row = mdp.transition(s, a).unwrap();
        prop_assert!((row.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(row.iter().all(|&(n, p)| n < mdp.n_states() && p > 0.0));
    }

    #[test]
    fn all_idle_cost_is_the_off_diagonal_mass(s in 0usize..10_000) {
        let (cfg, mdp) = tiny("tiny_complete3.toml");
        let s = s % mdp.n_states();
        let idle = mdp.encode_action(&vec![0; mdp.m()]).unwrap();
        let topo = mdp.topology();
        let expect: f64 = (0..mdp.m()).map(|j| 1.0 - topo.weight(j, j)).sum::<f64>() * cfg.cost_scale;
        prop_assert!((mdp.one_step_cost(s, idle).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn greedy_spends_what_it_can(b in 0usize..3) {
        let (cfg, mdp) = tiny("tiny_line3.toml");
        let g = Greedy::new(&mdp, cfg.horizon);
        let ok = feasible_actions(b, mdp.powers(), &mdp.energy()[0]);
        prop_assert_eq!(g.act(0, b), *ok.iter().max().unwrap());
    }
}
