use criterion::{criterion_group, criterion_main, Criterion};
use fibidx_bench::{fedosov_pair, poly_pair, symbol_pair};
use fibidx_core::connecting::{chern_simons_family, radul_index, winding_symbol, CsPath, SuspensionFamily};
use fibidx_core::forms::ConnectionSpec;
use fibidx_core::oracle::index_idempotent_pairing;
use fibidx_core::xcomplex::SuperModel;
use fibidx_core::zeta::{trace_defect_identity, zeta_finite_part};
use fibidx_core::PolyhomSymbol;
use std::hint::black_box;

fn trig(c: &mut Criterion) {
    let (f, g) = poly_pair(12);
    c.bench_function("trigpoly/mul 12x12 terms", |b| b.iter(|| black_box(&f).mul(black_box(&g))));
}

fn symbols(c: &mut Criterion) {
    let (a, s) = symbol_pair();
    c.bench_function("symbol/compose J=4", |b| b.iter(|| PolyhomSymbol::compose_auto(black_box(&a), black_box(&s), 4).unwrap()));
    c.bench_function("zeta/finite part of D", |b| b.iter(|| zeta_finite_part(black_box(&PolyhomSymbol::dspec(1, 1))).unwrap()));
    c.bench_function("zeta/trace defect J=4", |b| b.iter(|| trace_defect_identity(black_box(&a), black_box(&s), 4).unwrap()));
}

fn pairings(c: &mut Criterion) {
    let q = winding_symbol(2, -1);
    c.bench_function("pairing/radul J=4", |b| b.iter(|| radul_index(black_box(&q), 4).unwrap()));
    c.bench_function("oracle/idempotent N=128", |b| b.iter(|| index_idempotent_pairing(black_box(&q), 128, 4).unwrap()));
    let fam = SuspensionFamily::qwz().symbol();
    let flat = ConnectionSpec::flat(2);
    let mut g = c.benchmark_group("family");
    g.sample_size(10);
    g.bench_function("chern-simons grid 8", |b| b.iter(|| chern_simons_family(&flat, black_box(&fam), 8, 1, CsPath::Dim2).unwrap()));
    g.finish();
}

fn algebra(c: &mut Criterion) {
    let (x, y) = fedosov_pair();
    c.bench_function("fedosov/product on T2", |b| b.iter(|| black_box(&x).fedosov_product(black_box(&y)).unwrap()));
    let sm = SuperModel::full(2);
    c.bench_function("xcomplex/transgression n=3", |b| b.iter(|| sm.transgression_trials(3, 1, 5).unwrap()));
}

criterion_group!(kernels, trig, symbols, pairings, algebra);
criterion_main!(kernels);
