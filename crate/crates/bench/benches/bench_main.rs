use std::hint::black_box;

use contactkit::dynamics::{self, FlowOptions};
use contactkit::sandwich::{Phi1, Phi2};
use contactkit::scenarios::{self, Potential};
use criterion::{criterion_group, criterion_main, Criterion};

const Y: [f64; 5] = [0.3, -0.4, 0.2, 0.5, -0.1];
const U: [f64; 4] = [-0.4, 0.2, 0.5, -0.1];

fn contact(c: &mut Criterion) {
    let s = scenarios::dissipative(1.0, Potential::Cubic).unwrap();
    c.bench_function("reeb", |b| b.iter(|| s.system.reeb(black_box(&Y)).unwrap()));
    c.bench_function("hamiltonian_field", |b| b.iter(|| s.system.hamiltonian_field(black_box(&Y)).unwrap()));
    let field = s.system.hamiltonian_vector_field();
    let options = FlowOptions::default();
    c.bench_function("flow_map_t1", |b| b.iter(|| dynamics::flow_map(&field, black_box(&Y), 1.0, &options).unwrap()));
}

fn zero_set(c: &mut Criterion) {
    let s = scenarios::dissipative(1.0, Potential::Harmonic).unwrap();
    c.bench_function("solve_surface", |b| b.iter(|| s.surface.solve_surface(black_box(&U)).unwrap()));
    c.bench_function("induced_structure", |b| b.iter(|| s.surface.induced(black_box(&U)).unwrap()));
}

fn sandwich(c: &mut Criterion) {
    let s = scenarios::dissipative(1.0, Potential::Linear).unwrap();
    let phi1 = Phi1::new(&s.surface, FlowOptions::default(), 3).unwrap();
    let phi2 = Phi2::new(&s.surface, s.sigma.clone().unwrap(), FlowOptions::default(), &[0.0; 4], 3).unwrap();
    c.bench_function("phi1_map", |b| b.iter(|| phi1.map(black_box(&Y)).unwrap()));
    c.bench_function("phi2_map", |b| b.iter(|| phi2.map(black_box(&U)).unwrap()));
    c.bench_function("phi2_pullback_residual", |b| b.iter(|| phi2.pullback_residual(black_box(&U)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = contact, zero_set, sandwich
}
criterion_main!(benches);
