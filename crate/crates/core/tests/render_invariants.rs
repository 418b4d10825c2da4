use codedstereo::optics::{make_cubic_mask, OpticalConfig, PhaseMask, PsfModel, PsfStack};
use codedstereo::optimize::random_mask;
use codedstereo::render::{
    add_noise, quantize_disparity, render_coded_image, render_pair_with_stack, render_stereo_pair, LayerMasks,
};
use codedstereo::synth::{pink_texture, transpose_scene, two_plane_scene, uniform_scene};
use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;

fn stacks() -> Vec<PsfStack> {
    let config = OpticalConfig::default();
    let model = PsfModel::new(&config).unwrap();
    [
        PhaseMask::flat(&config),
        make_cubic_mask(30.0, &config).unwrap(),
        random_mask(&config, 150e-9, 3).unwrap(),
    ]
    .iter()
    .map(|m| model.stack(m).unwrap())
    .collect()
}

fn level_map(h: usize, w: usize, cells: &[usize], config: &OpticalConfig) -> Array2<f64> {
    let levels = config.disparity_levels();
    let side = (cells.len() as f64).sqrt() as usize;
    Array2::from_shape_fn((h, w), |(y, x)| {
        levels[cells[(y * side / h) * side + x * side / w] % levels.len()]
    })
}

fn max_abs_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn constant_texture_is_preserved(cells in prop::collection::vec(0usize..21, 16), value in 0.05f64..0.95) {
        let config = OpticalConfig::default();
        let layers = quantize_disparity(&level_map(48, 80, &cells, &config), &config);
        let flat = Array3::from_elem((3, 48, 80), value);
        for stack in stacks() {
            let out = render_coded_image(&flat, &layers, &stack).unwrap();
            prop_assert!(out.iter().all(|v| (v - value).abs() < 1e-4));
        }
    }

    #[test]
    fn layers_partition_the_frame(cells in prop::collection::vec(0usize..21, 9)) {
        let config = OpticalConfig::default();
        let layers = quantize_disparity(&level_map(30, 45, &cells, &config), &config);
        let mut total = Array2::<f64>::zeros((30, 45));
        for l in 0..layers.num_levels() {
            total += &layers.mask(l);
        }
        prop_assert!(total.iter().all(|&v| v == 1.0));
        prop_assert_eq!(layers.counts().iter().sum::<usize>(), 30 * 45);
    }

    #[test]
    fn rendering_is_linear_in_texture(
        cells in prop::collection::vec(0usize..21, 4),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let config = OpticalConfig::default();
        let layers = quantize_disparity(&level_map(40, 64, &cells, &config), &config);
        let t1 = pink_texture(40, 64, seed);
        let t2 = pink_texture(40, 64, seed + 1);
        let stack = &stacks()[2];
        let mix = render_coded_image(&(&t1 * a + &t2 * b), &layers, stack).unwrap();
        let parts = &render_coded_image(&t1, &layers, stack).unwrap() * a
            + &render_coded_image(&t2, &layers, stack).unwrap() * b;
        prop_assert!(max_abs_diff(&mix, &parts) < 1e-6);
    }

    #[test]
    fn noise_is_reproducible_and_scaled(seed in any::<u64>(), sigma in 0.001f64..0.1) {
        let img = Array3::from_elem((3, 32, 32), 0.5);
        let a = add_noise(&img, sigma, seed).unwrap();
        let b = add_noise(&img, sigma, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let sd = (&a - &img).std(0.0);
        prop_assert!((sd / sigma - 1.0).abs() < 0.1, "measured {sd} for {sigma}");
    }
}

#[test]
fn uniform_scene_renders_as_single_convolution() {
    let config = OpticalConfig::default();
    let stack = &stacks()[1];
    let level = 7;
    let texture = pink_texture(48, 72, 5);
    let layers = LayerMasks::uniform(48, 72, level, config.disparity_levels());
    let out = render_coded_image(&texture, &layers, stack).unwrap();
    for c in 0..3 {
        let direct = codedstereo::fft::convolve_same(texture.index_axis(Axis(0), c), stack.kernel(c, level).view());
        let worst = (&out.index_axis(Axis(0), c) - &direct)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9, "channel {c}: {worst:.2e}");
    }
}

#[test]
fn transposed_scene_with_transposed_mask_renders_transposed() {
    let config = OpticalConfig::default();
    let mask = random_mask(&config, 150e-9, 21).unwrap();
    let transposed =
        PhaseMask::from_height_map(mask.height_map.t().to_owned(), codedstereo::optics::Provenance::Loaded).unwrap();
    let scene = two_plane_scene("t", 64, 96, 19.2, 124.8, 8).unwrap();
    let a = render_stereo_pair(&scene, &mask, &config, 0.0, 1).unwrap();
    let b = render_stereo_pair(&transpose_scene(&scene), &transposed, &config, 0.0, 1).unwrap();
    let back = a.coded_left.clone().permuted_axes([0, 2, 1]);
    let worst = back
        .iter()
        .zip(b.coded_left.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(worst < 1e-9, "{worst:.2e}");
}

#[test]
fn in_focus_flat_lens_blurs_far_less_than_defocus() {
    let config = OpticalConfig::default();
    let stack = &stacks()[0];
    let rmse = |level: usize| {
        let scene = uniform_scene("focus", 48, 96, config.disparity_level(level), 2).unwrap();
        let pair = render_pair_with_stack(&scene, stack, &config, 0.0, 0, "flat").unwrap();
        ((&pair.coded_left - &scene.texture_left).mapv(|v| v * v).mean().unwrap()).sqrt()
    };
    let (focus, far) = (rmse(10), rmse(20));
    assert!(focus < 0.5 * far, "in focus {focus:.4}, level 20 {far:.4}");
}

#[test]
fn views_get_independent_noise() {
    let config = OpticalConfig::default();
    let scene = uniform_scene("n", 32, 64, 0.0, 2).unwrap();
    let mut same = scene.clone();
    same.texture_right = same.texture_left.clone();
    same.disparity_right = same.disparity_left.clone();
    let pair = render_pair_with_stack(&same, &stacks()[0], &config, 0.05, 11, "flat").unwrap();
    assert_ne!(pair.coded_left, pair.coded_right);
}
