use std::time::Duration;

use codedstereo::optics::{make_cubic_mask, OpticalConfig, Provenance, PsfModel, ZernikeBasis, MASK_COEFFICIENTS};
use codedstereo::optimize::{fd_gradient_with, mask_from_coefficients, random_mask};
use codedstereo::par::force_sequential;
use codedstereo::recon::{match_stereo, DEFAULT_BLOCK_RADIUS};
use codedstereo::render::render_pair_with_stack;
use codedstereo::synth::two_plane_scene;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn psf_stack(c: &mut Criterion) {
    let config = OpticalConfig::default();
    let model = PsfModel::new(&config).unwrap();
    let mask = make_cubic_mask(30.0, &config).unwrap();
    let mut group = c.benchmark_group("psf_stack");
    group.sample_size(10);
    for (name, seq) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            force_sequential(seq);
            b.iter(|| model.stack(&mask).unwrap());
        });
    }
    force_sequential(false);
    group.finish();
}

fn render_and_match(c: &mut Criterion) {
    let config = OpticalConfig::default();
    let stack = PsfModel::new(&config)
        .unwrap()
        .stack(&make_cubic_mask(30.0, &config).unwrap())
        .unwrap();
    let scene = two_plane_scene("bench", 96, 256, 38.4, 134.4, 3).unwrap();
    let pair = render_pair_with_stack(&scene, &stack, &config, 0.01, 1, "cubic").unwrap();

    let mut group = c.benchmark_group("render_pair");
    group.sample_size(10);
    for (name, seq) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            force_sequential(seq);
            b.iter(|| render_pair_with_stack(&scene, &stack, &config, 0.01, 1, "cubic").unwrap());
        });
    }
    group.finish();

    let mut group = c.benchmark_group("match_stereo");
    group.sample_size(10);
    for (name, seq) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            force_sequential(seq);
            b.iter(|| match_stereo(&pair.coded_left, &pair.coded_right, &config, DEFAULT_BLOCK_RADIUS, 192).unwrap());
        });
    }
    force_sequential(false);
    group.finish();
}

fn fd_gradient(c: &mut Criterion) {
    let config = OpticalConfig::default();
    let model = PsfModel::new(&config).unwrap();
    let basis = ZernikeBasis::new(config.mask_grid_size, MASK_COEFFICIENTS).unwrap();
    let start = random_mask(&config, 100e-9, 5).unwrap().coefficients;
    // one kernel per evaluation keeps a sample short
    let objective = |coeffs: &[f64]| {
        let mask = mask_from_coefficients(&basis, coeffs, Provenance::Learned);
        let k = model.psf(&mask, 0.0, 1)?;
        Ok(k.iter().map(|v| v * v).sum::<f64>())
    };
    let mut group = c.benchmark_group("fd_gradient");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, seq) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            force_sequential(seq);
            b.iter(|| fd_gradient_with(&start, 20e-9, &[0], objective).unwrap());
        });
    }
    force_sequential(false);
    group.finish();
}

criterion_group! {
    name = benches;
    // the html report needs system fonts for its plots
    config = Criterion::default().without_plots();
    targets = psf_stack, render_and_match, fd_gradient
}
criterion_main!(benches);
