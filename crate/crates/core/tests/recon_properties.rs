use codedstereo::fft::convolve_same;
use codedstereo::optics::OpticalConfig;
use codedstereo::recon::{
    combine, epe, match_stereo, psnr, ssim, ssim_channel, wiener_channel, LossWeights, DEFAULT_BLOCK_RADIUS,
};
use codedstereo::synth::{pink_texture, two_plane_scene};
use ndarray::{s, Array2, Array3, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian_kernel(size: usize, sigma: f64) -> Array2<f64> {
    let c = (size / 2) as f64;
    let k = Array2::from_shape_fn((size, size), |(i, j)| {
        let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
        (-r2 / (2.0 * sigma * sigma)).exp()
    });
    let total = k.sum();
    k / total
}

#[test]
fn wiener_inverts_a_zero_free_kernel() {
    let image = pink_texture(96, 128, 4).index_axis(Axis(0), 1).to_owned();
    let kernel = gaussian_kernel(15, 0.8);
    let blurred = convolve_same(image.view(), kernel.view());
    let restored = wiener_channel(blurred.view(), kernel.view(), 1e-12).unwrap();
    let b = 7;
    let inner = |a: &Array2<f64>| a.slice(s![b..96 - b, b..128 - b]).to_owned();
    let worst = (&inner(&restored) - &inner(&image))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-3, "max-norm {worst:.2e}");
}

#[test]
fn stereo_is_shift_equivariant() {
    let config = OpticalConfig::default();
    let scene = two_plane_scene("eq", 48, 320, 20.0, 60.0, 6).unwrap();
    let shift = 13;
    let pad = |img: &Array3<f64>| {
        let (c, h, w) = img.dim();
        Array3::from_shape_fn((c, h, w), |(k, y, x)| img[[k, y, x.saturating_sub(shift)]])
    };
    let max_disp = 80;
    let r = DEFAULT_BLOCK_RADIUS;
    let a = match_stereo(&scene.texture_left, &scene.texture_right, &config, r, max_disp).unwrap();
    let b = match_stereo(
        &pad(&scene.texture_left),
        &pad(&scene.texture_right),
        &config,
        r,
        max_disp,
    )
    .unwrap();
    let (h, w) = a.disparity.dim();
    let mut compared = 0;
    for y in r..h - r {
        // both windows and every candidate match lie inside both frames
        for x in (max_disp + 2 * r + shift)..(w - shift - r - 2) {
            if a.confidence[[y, x]] > 0.0 && b.confidence[[y, x + shift]] > 0.0 {
                let (da, db) = (a.disparity[[y, x]], b.disparity[[y, x + shift]]);
                assert!((da - db).abs() < 1e-6, "({y}, {x}): {da} vs {db}");
                compared += 1;
            }
        }
    }
    assert!(compared > 1000, "only {compared} pixels compared");
}

#[test]
fn ssim_of_identical_images_is_exactly_one() {
    let img = pink_texture(40, 52, 8);
    assert_eq!(ssim(&img, &img).unwrap(), 1.0);
    assert_eq!(
        ssim_channel(img.index_axis(Axis(0), 0), img.index_axis(Axis(0), 0)).unwrap(),
        1.0
    );
}

fn permute<T: Clone>(values: &[T], seed: u64) -> Vec<T> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.into_iter().map(|i| values[i].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psnr_and_epe_ignore_pixel_order(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 12..200),
        seed in any::<u64>(),
    ) {
        let n = pairs.len();
        let shuffled = permute(&pairs, seed);
        let as_grid = |p: &[(f64, f64)], first: bool| {
            Array2::from_shape_vec((1, n), p.iter().map(|v| if first { v.0 } else { v.1 }).collect()).unwrap()
        };
        let (a, b) = (as_grid(&pairs, true), as_grid(&pairs, false));
        let (pa, pb) = (as_grid(&shuffled, true), as_grid(&shuffled, false));
        let p1 = psnr(&a, &b).unwrap();
        let p2 = psnr(&pa, &pb).unwrap();
        prop_assert!((p1 - p2).abs() <= 1e-9 * p1.abs().max(1.0));
        let e1 = epe(&(&a * 192.0), &(&b * 192.0)).unwrap();
        let e2 = epe(&(&pa * 192.0), &(&pb * 192.0)).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0));
    }

    #[test]
    fn loss_is_monotone_in_each_term(
        base in prop::collection::vec(0.0f64..5.0, 5),
        which in 0usize..5,
        bump in 1e-6f64..1.0,
        gamma in 0.01f64..2.0,
    ) {
        let weights = LossWeights::default().with_gamma(gamma);
        let terms = |v: &[f64]| combine([v[0], v[1], v[2]], v[3], v[4], &weights).total;
        let mut bumped = base.clone();
        bumped[which] += bump;
        prop_assert!(terms(&bumped) > terms(&base));
    }

    #[test]
    fn stereo_output_stays_in_range(seed in 0u64..500, bg in 0.0f64..60.0, fg in 0.0f64..60.0) {
        let config = OpticalConfig::default();
        let scene = two_plane_scene("r", 32, 128, bg, fg, seed).unwrap();
        let st = match_stereo(&scene.texture_left, &scene.texture_right, &config, DEFAULT_BLOCK_RADIUS, 64).unwrap();
        let (lo, hi) = (config.disparity_min - 1.0, config.disparity_max + 1.0);
        prop_assert!(st.disparity.iter().all(|&d| d >= lo && d <= hi));
        prop_assert!(st.confidence.iter().all(|&c| (0.0..=1.0).contains(&c)));
    }
}
