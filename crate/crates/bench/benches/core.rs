use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use seatrial::cmaes::OptimizerState;
use seatrial::env::{run_episode, scripted_policy, Env, EnvConfig, ScriptedKind};
use seatrial::falsification::simulate_scenario;
use seatrial::harness::generate_test_set;

fn rules(c: &mut Criterion) {
    let cfg = EnvConfig::default();
    let mut env = Env::new(cfg).unwrap();
    let scenario = generate_test_set(1, 3, &Default::default(), cfg.steps, 0.3).unwrap().remove(0);
    let mut policy = scripted_policy(ScriptedKind::GiveWayReference, 0);
    let ep = run_episode(&mut env, &scenario, policy.as_mut()).unwrap();
    let ctx = env.context_handle().clone();
    c.bench_function("rule verdict on one episode", |b| b.iter(|| ctx.evaluate(black_box(&ep.signal)).unwrap()));
}

fn cmaes(c: &mut Criterion) {
    let dim = 200;
    c.bench_function("cma-es ask/tell, dim 200", |b| {
        b.iter_batched(
            || OptimizerState::new(dim, &vec![0.0; dim], 0.5, 10, 1).unwrap(),
            |mut state| {
                let batch = state.ask();
                let fitness: Vec<f64> = batch.candidates.iter().map(|x| x.norm_squared()).collect();
                state.tell(batch, &fitness).unwrap();
                state
            },
            BatchSize::SmallInput,
        )
    });
}

fn simulation(c: &mut Criterion) {
    let cfg = EnvConfig::default();
    let mut env = Env::new(cfg).unwrap();
    let scenario = generate_test_set(1, 5, &Default::default(), cfg.steps, 0.3).unwrap().remove(0);
    let mut policy = scripted_policy(ScriptedKind::GiveWayReference, 0);
    c.bench_function("simulate one scenario", |b| {
        b.iter(|| simulate_scenario(&mut env, black_box(&scenario), policy.as_mut()).unwrap())
    });
}

criterion_group!(benches, rules, cmaes, simulation);
criterion_main!(benches);
