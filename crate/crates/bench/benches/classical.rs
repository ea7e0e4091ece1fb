use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use qtomo::spectral::{dft2d, ComplexField, Direction, Norm};
use qtomo::{build_interp_matrix, fbp_reconstruct, forward_radon, fourier_slice_reconstruct, shepp_logan, InterpolationScheme};

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("dft2d");
    for n in [64usize, 128, 256] {
        let img = shepp_logan(n).unwrap();
        let field = ComplexField::from_real(n, n, img.data()).unwrap();
        group.throughput(Throughput::Elements((n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &field, |b, f| {
            b.iter(|| dft2d(black_box(f), Direction::Forward, Norm::Unnormalized).unwrap())
        });
    }
    group.finish();
}

fn radon(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_radon");
    group.sample_size(10);
    for n in [64usize, 128] {
        let img = shepp_logan(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &img, |b, img| {
            b.iter(|| forward_radon(black_box(img), n, n).unwrap())
        });
    }
    group.finish();
}

fn interp(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_interp_matrix");
    for scheme in InterpolationScheme::ALL {
        group.bench_with_input(BenchmarkId::new(scheme.name(), 128), &scheme, |b, &s| {
            b.iter(|| build_interp_matrix(128, 128, 128, s).unwrap())
        });
    }
    group.finish();
}

fn reconstruct(c: &mut Criterion) {
    let n = 128;
    let sino = forward_radon(&shepp_logan(n).unwrap(), n, n).unwrap();
    let mut group = c.benchmark_group("reconstruct_128");
    group.sample_size(20);
    group.bench_function("fourier_slice", |b| {
        b.iter(|| fourier_slice_reconstruct(black_box(&sino), n, InterpolationScheme::Bilinear, false).unwrap())
    });
    group.bench_function("fbp", |b| b.iter(|| fbp_reconstruct(black_box(&sino), n).unwrap()));
    group.finish();
}

criterion_group!(benches, fft, radon, interp, reconstruct);
criterion_main!(benches);
