use criterion::{criterion_group, criterion_main, Criterion};
use radlung_bench::phantom;
use radlung_core::filterbank::{laplacian_of_gaussian, wavelet_decompose, Boundary};

fn filters(c: &mut Criterion) {
    let v = phantom([64, 64, 40], 2).volume;
    for sigma in [0.5, 2.5, 4.5] {
        c.bench_function(&format!("LoG sigma {sigma} 64x64x40"), |b| {
            b.iter(|| laplacian_of_gaussian(&v, sigma).unwrap())
        });
    }
    c.bench_function("wavelet 8 bands 64x64x40", |b| {
        b.iter(|| wavelet_decompose(&v, Boundary::Symmetric))
    });
}

criterion_group!(benches, filters);
criterion_main!(benches);
