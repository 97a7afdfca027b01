use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frontier_nav::eval::{run_episode, EvalOptions, Policy};
use frontier_nav::geom::Box3;
use frontier_nav::memory::box_iou;
use frontier_nav::par;
use frontier_nav::scene::{generate_episodes, generate_scene, EpisodeGenParams, EpisodeSpec, SceneGenParams};

fn boxes(n: usize, seed: u64) -> Vec<Box3> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = [r.random_range(0.0..10.0), r.random_range(0.0..10.0), r.random_range(0.0..1.0)];
            let s = [r.random_range(0.2..2.0), r.random_range(0.2..2.0), r.random_range(0.2..2.0)];
            Box3::new(c, s)
        })
        .collect()
}

fn episodes(n: usize) -> Vec<EpisodeSpec> {
    let p = EpisodeGenParams {
        count: 2,
        ..EpisodeGenParams::default()
    };
    (0..n.div_ceil(2) as u64)
        .flat_map(|s| {
            let sc = Arc::new(generate_scene(&SceneGenParams::default(), s).expect("scene"));
            generate_episodes(&sc, &p, s).expect("episodes")
        })
        .take(n)
        .collect()
}

fn iou_rows(c: &mut Criterion) {
    let locals = boxes(256, 1);
    let globals = boxes(512, 2);
    let row = |a: &Box3| globals.iter().map(|b| box_iou(a, b)).collect::<Vec<f64>>();
    let mut g = c.benchmark_group("iou_matrix_256x512");
    g.bench_function("parallel", |b| b.iter(|| par::map(&locals, row)));
    g.bench_function("sequential", |b| b.iter(|| par::map_seq(&locals, row)));
    g.finish();
}

fn episode_batch(c: &mut Criterion) {
    let opts = EvalOptions::default();
    let mut g = c.benchmark_group("heuristic_episodes");
    g.sample_size(10);
    for n in [4, 16] {
        let eps = episodes(n);
        let job = |e: &EpisodeSpec| run_episode(e, Policy::Heuristic, &opts, 7).success;
        g.bench_with_input(BenchmarkId::new("parallel", n), &eps, |b, eps| b.iter(|| par::map(eps, job)));
        g.bench_with_input(BenchmarkId::new("sequential", n), &eps, |b, eps| b.iter(|| par::map_seq(eps, job)));
    }
    g.finish();
}

criterion_group!(benches, iou_rows, episode_batch);
criterion_main!(benches);
