//! Procedural stereo scenes: 1/f textures on fronto-parallel planes.
//!
//! A plane at disparity `d` shows texture column `x` at left pixel `x` and
//! at right pixel `x - d`, so the right view samples the texture at
//! `x_r + d` (linear interpolation for fractional `d`).

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::optics::OpticalConfig;
use crate::render::Scene;

/// Mean and standard deviation of generated textures before clipping.
pub const TEXTURE_MEAN: f64 = 0.5;
pub const TEXTURE_STD: f64 = 0.18;

/// Zero-mean, unit-variance Gaussian field with a `1/f` amplitude spectrum.
pub fn pink_noise(height: usize, width: usize, seed: u64, stream: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut field = Array2::from_shape_simple_fn((height, width), || {
        let v: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(v, 0.0)
    });
    fft2(&mut field, FftDirection::Forward);
    for ((y, x), v) in field.indexed_iter_mut() {
        let fy = y.min(height - y) as f64 / height as f64;
        let fx = x.min(width - x) as f64 / width as f64;
        let f = (fx * fx + fy * fy).sqrt();
        *v = if f == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            *v / f.max(1.0 / 64.0)
        };
    }
    fft2(&mut field, FftDirection::Inverse);
    let real = field.mapv(|v| v.re);
    let mean = real.mean().unwrap_or(0.0);
    let std = real.std(0.0);
    if std == 0.0 {
        return Array2::zeros((height, width));
    }
    real.mapv(|v| (v - mean) / std)
}

/// Colored `1/f` texture in [0, 1], `(3, H, W)`: a shared luminance field
/// with weaker per-channel variation.
pub fn pink_texture(height: usize, width: usize, seed: u64) -> Array3<f64> {
    let base = pink_noise(height, width, seed, 0);
    let mut out = Array3::zeros((3, height, width));
    for c in 0..3 {
        let tint = pink_noise(height, width, seed, 1 + c as u64);
        let mut ch = out.index_axis_mut(Axis(0), c);
        ch.assign(&(&base * 0.9 + &tint * 0.4));
        let std = ch.std(0.0).max(1e-12);
        let mean = ch.mean().unwrap_or(0.0);
        ch.mapv_inplace(|v| (TEXTURE_MEAN + TEXTURE_STD * (v - mean) / std).clamp(0.0, 1.0));
    }
    out
}

/// Sample `texture` at column `x + offset` (linear interpolation, edge clamp).
fn sample_shifted(texture: &Array3<f64>, c: usize, y: usize, x: f64) -> f64 {
    let w = texture.dim().2;
    let x = x.clamp(0.0, (w - 1) as f64);
    let x0 = x.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let t = x - x0 as f64;
    texture[[c, y, x0]] * (1.0 - t) + texture[[c, y, x1]] * t
}

/// A textured region of a scene at constant disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub disparity: f64,
    pub seed: u64,
    /// Inclusive-exclusive rectangle `(top, left, bottom, right)` in left-view
    /// coordinates; `None` fills the whole frame.
    pub rect: Option<(usize, usize, usize, usize)>,
}

/// Render fronto-parallel planes, later entries in front of earlier ones.
pub fn plane_scene(id: &str, height: usize, width: usize, planes: &[Plane]) -> Result<Scene> {
    if planes.is_empty() || height == 0 || width == 0 {
        return Err(Error::usage("a scene needs a size and at least one plane"));
    }
    let max_d = planes
        .iter()
        .map(|p| p.disparity.abs().ceil() as usize)
        .max()
        .unwrap_or(0);
    let textures: Vec<Array3<f64>> = planes
        .iter()
        .map(|p| pink_texture(height, width + max_d + 2, p.seed))
        .collect();
    let inside = |p: &Plane, y: usize, x: f64| match p.rect {
        None => true,
        Some((t, l, b, r)) => y >= t && y < b && x >= l as f64 && x < r as f64,
    };
    let mut scene = Scene {
        id: id.to_string(),
        texture_left: Array3::zeros((3, height, width)),
        texture_right: Array3::zeros((3, height, width)),
        disparity_left: Array2::zeros((height, width)),
        disparity_right: Array2::zeros((height, width)),
    };
    for y in 0..height {
        for x in 0..width {
            // left view: pixel x sees texture column x
            if let Some(i) = (0..planes.len()).rev().find(|&i| inside(&planes[i], y, x as f64)) {
                scene.disparity_left[[y, x]] = planes[i].disparity;
                for c in 0..3 {
                    scene.texture_left[[c, y, x]] = textures[i][[c, y, x]];
                }
            }
            // right view: pixel x sees left column x + d of whichever plane is in front
            let xr = x as f64;
            if let Some(i) = (0..planes.len())
                .rev()
                .find(|&i| inside(&planes[i], y, xr + planes[i].disparity))
            {
                let d = planes[i].disparity;
                scene.disparity_right[[y, x]] = d;
                for c in 0..3 {
                    scene.texture_right[[c, y, x]] = sample_shifted(&textures[i], c, y, xr + d);
                }
            }
        }
    }
    Ok(scene)
}

/// Uniform plane at `disparity`.
pub fn uniform_scene(id: &str, height: usize, width: usize, disparity: f64, seed: u64) -> Result<Scene> {
    plane_scene(
        id,
        height,
        width,
        &[Plane {
            disparity,
            seed,
            rect: None,
        }],
    )
}

/// Background plane with a rectangular foreground plane in the middle.
pub fn two_plane_scene(
    id: &str,
    height: usize,
    width: usize,
    background: f64,
    foreground: f64,
    seed: u64,
) -> Result<Scene> {
    let rect = (height / 4, width / 3, height - height / 4, width - width / 6);
    plane_scene(
        id,
        height,
        width,
        &[
            Plane {
                disparity: background,
                seed,
                rect: None,
            },
            Plane {
                disparity: foreground,
                seed: seed.wrapping_add(0x5851_F42D),
                rect: Some(rect),
            },
        ],
    )
}

/// One uniform-plane scene per disparity level.
pub fn level_planes(height: usize, width: usize, config: &OpticalConfig, seed: u64) -> Result<Vec<Scene>> {
    config
        .disparity_levels()
        .iter()
        .enumerate()
        .map(|(i, &d)| uniform_scene(&format!("plane{i:02}"), height, width, d, seed.wrapping_add(i as u64)))
        .collect()
}

/// Two-plane scenes whose depths spread over the disparity range.
pub fn toy_scene_set(
    count: usize,
    height: usize,
    width: usize,
    config: &OpticalConfig,
    seed: u64,
) -> Result<Vec<Scene>> {
    let levels = config.disparity_levels();
    let n = levels.len();
    (0..count)
        .map(|i| {
            // alternate near/far backgrounds with foregrounds across the range
            let bg = levels[(i * 7 + 2) % n];
            let fg = levels[(i * 11 + n / 2 + 3) % n];
            two_plane_scene(
                &format!("toy{i}"),
                height,
                width,
                bg,
                fg,
                seed.wrapping_add(1000 * i as u64),
            )
        })
        .collect()
}

/// Left/right mirror of a scene: swaps the views and flips columns, which
/// keeps disparities positive.
pub fn mirror_scene(scene: &Scene) -> Scene {
    let flip3 = |a: &Array3<f64>| a.slice(ndarray::s![.., .., ..;-1]).to_owned();
    let flip2 = |a: &Array2<f64>| a.slice(ndarray::s![.., ..;-1]).to_owned();
    Scene {
        id: format!("{}-mirrored", scene.id),
        texture_left: flip3(&scene.texture_right),
        texture_right: flip3(&scene.texture_left),
        disparity_left: flip2(&scene.disparity_right),
        disparity_right: flip2(&scene.disparity_left),
    }
}

/// Transpose of a scene's images (rows and columns swapped). Disparity maps
/// are carried along unchanged; the result is a valid layered-rendering
/// input, though not a rectified pair.
pub fn transpose_scene(scene: &Scene) -> Scene {
    let t3 = |a: &Array3<f64>| a.clone().permuted_axes([0, 2, 1]).as_standard_layout().to_owned();
    let t2 = |a: &Array2<f64>| a.t().as_standard_layout().to_owned();
    Scene {
        id: format!("{}-transposed", scene.id),
        texture_left: t3(&scene.texture_left),
        texture_right: t3(&scene.texture_right),
        disparity_left: t2(&scene.disparity_left),
        disparity_right: t2(&scene.disparity_right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_normalized() {
        let t = pink_texture(64, 96, 3);
        assert!(t.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((t.mean().unwrap() - TEXTURE_MEAN).abs() < 0.02);
        assert_eq!(t, pink_texture(64, 96, 3));
        assert_ne!(t, pink_texture(64, 96, 4));
    }

    #[test]
    fn integer_plane_is_a_shift() {
        let s = uniform_scene("p", 8, 40, 5.0, 1).unwrap();
        for y in 0..8 {
            for x in 0..35 {
                assert_eq!(s.texture_right[[0, y, x]], s.texture_left[[0, y, x + 5]]);
            }
        }
        assert!(s.disparity_left.iter().all(|&d| d == 5.0));
    }

    #[test]
    fn foreground_occludes() {
        let s = two_plane_scene("t", 16, 60, 2.0, 10.0, 9).unwrap();
        let fg = s.disparity_left.iter().filter(|&&d| d == 10.0).count();
        let fg_r = s.disparity_right.iter().filter(|&&d| d == 10.0).count();
        assert!(fg > 0);
        assert_eq!(fg, fg_r);
        assert_eq!(s.disparity_right[[8, 60 - 60 / 6 - 10 - 1]], 10.0);
        assert_eq!(s.disparity_right[[8, 60 - 60 / 6 - 10]], 2.0);
    }

    #[test]
    fn mirror_twice_is_identity() {
        let s = two_plane_scene("m", 12, 30, 1.0, 4.0, 2).unwrap();
        let back = mirror_scene(&mirror_scene(&s));
        assert_eq!(back.texture_left, s.texture_left);
        assert_eq!(back.disparity_right, s.disparity_right);
    }
}
