use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vnf_orch_bench::instance;
use vnf_orch_core::baselines::greedy_nearest;
use vnf_orch_core::learning::{continue_training, net_shapes};
use vnf_orch_core::env::encoding::Side;
use vnf_orch_core::nn::BranchNet;
use vnf_orch_core::{exact_solve, validate, ExactLimits, HyperParams, Scales, TrainedModel};

fn validator(c: &mut Criterion) {
    let (net, cat, reqs) = instance(20, 5, 20, 1);
    let sol = greedy_nearest(&reqs, &net, &cat);
    c.bench_function("validate 20 requests on 20 nodes", |b| {
        b.iter(|| validate(black_box(&sol.deployments), &reqs, &net, &cat).unwrap())
    });
}

fn exact(c: &mut Criterion) {
    let (net, cat, reqs) = instance(6, 3, 2, 2);
    let mut g = c.benchmark_group("exact");
    g.sample_size(10);
    g.bench_function("2 requests on 6 nodes", |b| {
        b.iter(|| exact_solve(black_box(&reqs), &net, &cat, Scales::default(), &ExactLimits::default()).unwrap())
    });
    g.finish();
}

fn network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (actor_shape, _) = net_shapes(Side::Routing, 20, 10, 4);
    let actor = BranchNet::new(actor_shape, &mut rng);
    let x = ndarray::Array2::from_shape_fn((32, actor.input_len()), |_| rng.random_range(-1.0..1.0));
    let d = ndarray::Array2::from_elem((32, actor_shape.output_len), 1.0);
    c.bench_function("actor forward, batch 32", |b| b.iter(|| actor.forward(black_box(&x)).unwrap()));
    c.bench_function("actor forward+backward, batch 32", |b| {
        b.iter(|| {
            let (_, tape) = actor.forward_tape(black_box(&x)).unwrap();
            actor.backward(&tape, &d)
        })
    });
}

fn epoch(c: &mut Criterion) {
    let (net, cat, reqs) = instance(6, 3, 2, 4);
    let model = TrainedModel::for_instance(&reqs, &net, &cat, HyperParams::toy(), Scales::default(), 0).unwrap();
    let mut g = c.benchmark_group("training");
    g.sample_size(20);
    g.bench_function("one epoch, 2 agents on 6 nodes", |b| {
        b.iter_batched(
            || model.clone(),
            |mut m| continue_training(&mut m, &reqs, &net, &cat, 0, 1).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, validator, exact, network, epoch);
criterion_main!(benches);
