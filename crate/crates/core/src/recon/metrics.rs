//! Texture and disparity error metrics.

use ndarray::{s, Array, Array2, Array3, ArrayView2, Axis, Dimension};

use crate::error::{Error, Result};

/// Reported PSNR when the estimate is exact.
pub const PSNR_CAP_DB: f64 = 99.0;
/// SSIM window size and Gaussian width.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
/// Disparity error threshold of the bad-pixel rate.
pub const BAD_THRESHOLD_PX: f64 = 3.0;

fn same_shape<D: Dimension>(a: &Array<f64, D>, b: &Array<f64, D>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::usage(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// PSNR of a mean squared error on [0, 1] data, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn mse<D: Dimension>(estimate: &Array<f64, D>, truth: &Array<f64, D>) -> Result<f64> {
    same_shape(estimate, truth)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / truth.len() as f64)
}

pub fn psnr<D: Dimension>(estimate: &Array<f64, D>, truth: &Array<f64, D>) -> Result<f64> {
    Ok(psnr_from_mse(mse(estimate, truth)?))
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Separable "valid" filtering with a 1-D window along both axes.
fn filter_valid(img: &Array2<f64>, win: &[f64]) -> Array2<f64> {
    let k = win.len();
    let (h, w) = img.dim();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let rows = Array2::from_shape_fn((h, ow), |(y, x)| {
        win.iter().enumerate().map(|(i, c)| c * img[[y, x + i]]).sum::<f64>()
    });
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        win.iter().enumerate().map(|(i, c)| c * rows[[y + i, x]]).sum::<f64>()
    })
}

/// Mean SSIM of one channel over the valid region of the Gaussian window.
pub fn ssim_channel(estimate: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::usage(format!(
            "shape mismatch: {:?} vs {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let (h, w) = truth.dim();
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    if size == 0 {
        return Err(Error::usage("SSIM needs a non-empty image"));
    }
    let win = gaussian_window(size, SSIM_SIGMA);
    let x = estimate.to_owned();
    let y = truth.to_owned();
    let mx = filter_valid(&x, &win);
    let my = filter_valid(&y, &win);
    let sxx = filter_valid(&(&x * &x), &win);
    let syy = filter_valid(&(&y * &y), &win);
    let sxy = filter_valid(&(&x * &y), &win);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (a, b) = (mx.as_slice().unwrap()[i], my.as_slice().unwrap()[i]);
        let vx = sxx.as_slice().unwrap()[i] - a * a;
        let vy = syy.as_slice().unwrap()[i] - b * b;
        let cxy = sxy.as_slice().unwrap()[i] - a * b;
        total += ((2.0 * a * b + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((a * a + b * b + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mx.len() as f64)
}

/// SSIM averaged over channels of channel-first images.
pub fn ssim(estimate: &Array3<f64>, truth: &Array3<f64>) -> Result<f64> {
    same_shape(estimate, truth)?;
    let nc = truth.dim().0;
    let mut acc = 0.0;
    for c in 0..nc {
        acc += ssim_channel(estimate.index_axis(Axis(0), c), truth.index_axis(Axis(0), c))?;
    }
    Ok(acc / nc as f64)
}

/// Mean absolute disparity error.
pub fn epe(d_est: &Array2<f64>, d_true: &Array2<f64>) -> Result<f64> {
    same_shape(d_est, d_true)?;
    Ok(masked_disparity_errors(d_est, d_true, None)?.epe)
}

/// Percentage of pixels whose disparity error exceeds 3 px.
pub fn bad3(d_est: &Array2<f64>, d_true: &Array2<f64>) -> Result<f64> {
    same_shape(d_est, d_true)?;
    Ok(masked_disparity_errors(d_est, d_true, None)?.bad3_pct)
}

/// EPE and bad-pixel rate over the pixels selected by `mask`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityErrors {
    pub epe: f64,
    pub bad3_pct: f64,
    pub count: usize,
}

pub fn masked_disparity_errors(
    d_est: &Array2<f64>,
    d_true: &Array2<f64>,
    mask: Option<&Array2<bool>>,
) -> Result<DisparityErrors> {
    same_shape(d_est, d_true)?;
    if let Some(m) = mask {
        if m.dim() != d_true.dim() {
            return Err(Error::usage("mask shape does not match the disparity maps"));
        }
    }
    let (mut sum, mut bad, mut n) = (0.0, 0usize, 0usize);
    for ((idx, &e), &t) in d_est.indexed_iter().zip(d_true.iter()) {
        if mask.is_some_and(|m| !m[idx]) {
            continue;
        }
        let err = (e - t).abs();
        sum += err;
        bad += usize::from(err > BAD_THRESHOLD_PX);
        n += 1;
    }
    if n == 0 {
        return Ok(DisparityErrors {
            epe: 0.0,
            bad3_pct: 0.0,
            count: 0,
        });
    }
    Ok(DisparityErrors {
        epe: sum / n as f64,
        bad3_pct: 100.0 * bad as f64 / n as f64,
        count: n,
    })
}

/// Pixels of a left-view map whose true match lies inside the right image.
pub fn matchable_mask(d_true: &Array2<f64>) -> Array2<bool> {
    Array2::from_shape_fn(d_true.dim(), |(y, x)| x as f64 - d_true[[y, x]] >= 0.0)
}

/// Crop `margin` pixels from every side of a grid.
pub fn crop_border(grid: &Array2<f64>, margin: usize) -> Array2<f64> {
    let (h, w) = grid.dim();
    grid.slice(s![margin..h - margin, margin..w - margin]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_estimates() {
        let img = Array3::from_shape_fn((3, 16, 20), |(c, y, x)| ((c + y * x) % 9) as f64 / 9.0);
        assert_eq!(psnr(&img, &img).unwrap(), PSNR_CAP_DB);
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
        let d = Array2::from_shape_fn((5, 5), |(y, x)| (y + x) as f64);
        assert_eq!(epe(&d, &d).unwrap(), 0.0);
        assert_eq!(bad3(&d, &d).unwrap(), 0.0);
    }

    #[test]
    fn offset_examples() {
        let img = Array3::from_elem((3, 8, 8), 0.5);
        let off = img.mapv(|v| v + 0.01);
        assert!((psnr(&off, &img).unwrap() - 40.0).abs() < 1e-9);
        let d = Array2::zeros((4, 4));
        let d4 = d.mapv(|v: f64| v + 4.0);
        assert_eq!(epe(&d4, &d).unwrap(), 4.0);
        assert_eq!(bad3(&d4, &d).unwrap(), 100.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = Array2::zeros((2, 2));
        let b = Array2::zeros((2, 3));
        assert!(matches!(epe(&a, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn ssim_drops_with_noise() {
        let img = Array2::from_shape_fn((20, 20), |(y, x)| ((y * 3 + x * 5) % 11) as f64 / 11.0);
        let noisy = img.mapv(|v| 1.0 - v);
        let s = ssim_channel(noisy.view(), img.view()).unwrap();
        assert!((-1.0..0.5).contains(&s));
    }
}
