use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use typedkb::env::desk_bank;
use typedkb::exec::{run_bank, run_episode};
use typedkb::fixtures::{open_goal_recep_diff, pick_without_open_kb, solved_kb};
use typedkb::{apply_diff, canonical_serialize, parse_kb};

fn executor(c: &mut Criterion) {
    let kb = solved_kb();
    let bank = desk_bank();
    c.bench_function("run_episode/pick", |b| {
        b.iter(|| run_episode(black_box(&kb), &bank.tasks[0], 50).unwrap())
    });
    c.bench_function("run_bank/desk", |b| {
        b.iter(|| run_bank(black_box(&kb), &bank, 50).unwrap())
    });
}

fn applier(c: &mut Criterion) {
    let kb = pick_without_open_kb();
    let diff = open_goal_recep_diff();
    c.bench_function("apply_diff/add_rule", |b| {
        b.iter(|| apply_diff(black_box(&kb), &diff).unwrap())
    });
    let text = canonical_serialize(&solved_kb());
    c.bench_function("parse_kb/solved", |b| {
        b.iter(|| parse_kb(black_box(&text)).unwrap())
    });
}

criterion_group!(benches, executor, applier);
criterion_main!(benches);
