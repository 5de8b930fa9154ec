use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ehdfl::{backward_induction, evaluate_exact, synthesize, InitialState, LocalizedOptions, SolveOptions};
use ehdfl_bench::{scenario, TINY};

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    for name in TINY {
        let (cfg, mdp) = scenario(name);
        let t = cfg.horizon;
        g.bench_with_input(BenchmarkId::new("backward_induction", name), &mdp, |b, mdp| {
            b.iter(|| backward_induction(mdp, t, SolveOptions::default()).unwrap())
        });
        let opts = LocalizedOptions::new(1, 20.0, 5, t);
        g.bench_with_input(BenchmarkId::new("synthesize_k1_r5", name), &mdp, |b, mdp| {
            b.iter(|| synthesize(mdp, &opts).unwrap())
        });
        let pol = synthesize(&mdp, &opts).unwrap();
        let init = InitialState::Distribution(mdp.steady_uniform_init());
        g.bench_with_input(BenchmarkId::new("evaluate_exact", name), &mdp, |b, mdp| {
            b.iter(|| evaluate_exact(mdp, &pol, &init).unwrap())
        });
    }
    g.finish();
}

fn ring8(c: &mut Criterion) {
    let (cfg, mdp) = scenario("ring8.toml");
    let opts = LocalizedOptions::new(2, cfg.localized.gamma, 2, cfg.horizon);
    let mut g = c.benchmark_group("ring8");
    g.sample_size(10);
    g.bench_function("synthesize_k2_r2", |b| b.iter(|| synthesize(&mdp, &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, solvers, ring8);
criterion_main!(benches);
