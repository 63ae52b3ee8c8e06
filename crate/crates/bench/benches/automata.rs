use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use haarlab_core::diffusion::{example_automaton, rank_trajectory};
use haarlab_core::lca::{char_power, lca_power_coeffs, make_lca};
use haarlab_core::measures::{make_measure, measure_fourier, MarkovChainSpec, Kernel, MeasureSpec};
use haarlab_core::{Character, Configuration, Endo, Group, Lca, Site};

fn z(n: u64) -> Group {
    Group::cyclic(n).unwrap()
}

fn lind() -> Lca {
    make_lca(z(2), 1, [(Site::new1(-1), Endo::Scalar(1)), (Site::new1(1), Endo::Scalar(1))]).unwrap()
}

fn point_character(g: &Group) -> Character {
    Character::new(g.clone(), 1, [(Site::new1(0), g.element_at(1))]).unwrap()
}

fn apply_lca(c: &mut Criterion) {
    let g = z(6);
    let f = make_lca(g.clone(), 1, [(Site::new1(-1), Endo::Scalar(1)), (Site::new1(0), Endo::Scalar(5)), (Site::new1(2), Endo::Scalar(1))])
        .unwrap();
    let mut group = c.benchmark_group("apply_lca");
    for len in [1usize << 10, 1 << 16] {
        let cfg = Configuration::from_fn(g.clone(), 1, &[len], |s| g.element_at((s.x() * 7 % 6) as usize)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(len), &cfg, |b, cfg| b.iter(|| f.apply(black_box(cfg)).unwrap()));
    }
    group.finish();
}

fn powers(c: &mut Criterion) {
    let chi = point_character(&z(2));
    let f = lind();
    c.bench_function("char_power lind N=2^16-1", |b| b.iter(|| char_power(black_box(&chi), &f, (1 << 16) - 1).unwrap()));
    let ex = example_automaton(3).unwrap();
    c.bench_function("lca_power_coeffs example p=3 N=729", |b| b.iter(|| lca_power_coeffs(black_box(&ex), 729)));
}

fn trajectory(c: &mut Criterion) {
    let chi = point_character(&z(2));
    let f = lind();
    c.bench_function("rank_trajectory lind n_max=1024", |b| b.iter(|| rank_trajectory(black_box(&chi), &f, 1024).unwrap()));
}

fn fourier(c: &mut Criterion) {
    let g = z(2);
    let q = Kernel::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
    let mu = make_measure(MeasureSpec::Markov(MarkovChainSpec { group: g.clone(), transitions: vec![q], initial: vec![0.5, 0.5], origin: 0 }))
        .unwrap();
    let chi = Character::new(g.clone(), 1, (0..64).step_by(3).map(|i| (Site::new1(i), g.element_at(1)))).unwrap();
    c.bench_function("measure_fourier markov rank 22", |b| b.iter(|| measure_fourier(&mu, black_box(&chi)).unwrap()));
}

criterion_group!(benches, apply_lca, powers, trajectory, fourier);
criterion_main!(benches);
