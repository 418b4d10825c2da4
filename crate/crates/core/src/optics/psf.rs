//! Disparity- and wavelength-dependent PSFs by Fourier optics.
//!
//! The pupil `A exp(i (phi_mask + phi_defocus))` is resampled at a pitch `q`
//! chosen so that the DFT of an `M = fov * oversample` grid lands exactly on
//! a raster of `pixel_pitch / oversample`:
//!
//! ```text
//! lambda * f / (M * q) = pixel_pitch / oversample   =>   q = lambda * f / (fov * pixel_pitch)
//! ```
//!
//! The mask is piecewise constant over its cells (nearest-cell lookup), the
//! aperture edge and the defocus term are evaluated at the resampled points,
//! and the intensity is integrated over `oversample x oversample` sub-samples
//! per sensor pixel before the kernel is normalized to unit sum.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::FftDirection;

use super::config::OpticalConfig;
use super::mask::PhaseMask;
use super::zernike::disk_mask;
use crate::error::{Error, Result};
use crate::fft::plan;
use crate::par;

/// Phase curvature of the defocus term: `phi = coefficient * (x^2 + y^2)`
/// with mask-plane coordinates in meters.
///
/// Disparity is converted to sensor meters (`d * pixel_pitch`) so that
/// `k / (2 f b) * (d - d0) * r^2` is dimensionless.
pub fn defocus_coefficient(d: f64, config: &OpticalConfig, wavelength: f64) -> f64 {
    let k = 2.0 * PI / wavelength;
    k / (2.0 * config.focal_length * config.baseline) * ((d - config.d0()) * config.sensor_pixel_pitch)
}

/// Defocus phase sampled at the mask cell centers.
pub fn defocus_phase(d: f64, config: &OpticalConfig, wavelength: f64) -> Result<Array2<f64>> {
    config.check_disparity(d)?;
    let coeff = defocus_coefficient(d, config, wavelength);
    let g = config.mask_grid_size;
    let c = (g as f64 - 1.0) / 2.0;
    let pitch = config.mask_pitch;
    Ok(Array2::from_shape_fn((g, g), |(row, col)| {
        let x = (col as f64 - c) * pitch;
        let y = (row as f64 - c) * pitch;
        coeff * (x * x + y * y)
    }))
}

/// One in-aperture pupil sample.
#[derive(Debug, Clone, Copy)]
struct PupilSample {
    row: usize,
    col: usize,
    /// Flat index of the mask cell under this sample.
    cell: usize,
    r2: f64,
    /// Sub-sample centering phase.
    shift: f64,
}

/// Pupil resampling for one wavelength.
#[derive(Debug, Clone)]
struct PupilGrid {
    wavelength: f64,
    /// Samples per side of the (odd) pupil window.
    span: usize,
    fft_size: usize,
    samples: Vec<PupilSample>,
}

impl PupilGrid {
    fn new(config: &OpticalConfig, wavelength: f64) -> Result<Self> {
        let fov = 2 * config.psf_kernel_size;
        let s = config.psf_oversample;
        let fft_size = fov * s;
        let q = wavelength * config.focal_length / (fov as f64 * config.sensor_pixel_pitch);
        if q > config.mask_pitch {
            let required = wavelength * config.focal_length / (config.mask_pitch * config.sensor_pixel_pitch);
            return Err(Error::config(format!(
                "PSF field of {fov} px undersamples the {:.1} um mask cells at {:.0} nm; \
                 a field of at least {:.1} px (kernel size >= {:.1}) is required",
                config.mask_pitch * 1e6,
                wavelength * 1e9,
                required,
                required / 2.0
            )));
        }
        let radius = config.pupil_radius();
        let half = (radius / q).floor() as usize;
        let span = 2 * half + 1;
        if span > fft_size {
            return Err(Error::config(format!(
                "pupil needs {span} samples but the DFT grid has {fft_size}; \
                 increase psf_oversample to at least {}",
                span.div_ceil(fov)
            )));
        }
        // Even oversampling puts the optical axis between sub-samples: shift by half a sample.
        let delta = if s.is_multiple_of(2) { -0.5 } else { 0.0 };
        let g = config.mask_grid_size;
        let gc = (g as f64 - 1.0) / 2.0;
        // the rim follows the mask's own disk cells, so a uniform height
        // offset is a uniform phase over the whole pupil
        let disk = disk_mask(g);
        let mut samples = Vec::new();
        for row in 0..span {
            let ny = row as isize - half as isize;
            let y = ny as f64 * q;
            for col in 0..span {
                let nx = col as isize - half as isize;
                let x = nx as f64 * q;
                let r2 = x * x + y * y;
                if r2 > radius * radius {
                    continue;
                }
                let cy = (y / config.mask_pitch + gc).round().clamp(0.0, (g - 1) as f64) as usize;
                let cx = (x / config.mask_pitch + gc).round().clamp(0.0, (g - 1) as f64) as usize;
                if !disk[[cy, cx]] {
                    continue;
                }
                samples.push(PupilSample {
                    row,
                    col,
                    cell: cy * g + cx,
                    r2,
                    shift: 2.0 * PI * delta * (nx + ny) as f64 / fft_size as f64,
                });
            }
        }
        Ok(Self {
            wavelength,
            span,
            fft_size,
            samples,
        })
    }
}

/// Sub-pixel sampled optical PSF before pixel integration.
#[derive(Debug, Clone)]
pub struct OpticalPsf {
    /// Intensity on a raster of `1 / samples_per_pixel` sensor pixels.
    pub intensity: Array2<f64>,
    pub samples_per_pixel: usize,
    /// Fractional (row, col) index of the optical axis in `intensity`.
    pub axis: f64,
}

/// Kernels for every (wavelength, disparity level) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfStack {
    kernels: Vec<Array2<f64>>,
    levels: Vec<f64>,
    num_wavelengths: usize,
}

impl PsfStack {
    /// Assemble a stack from kernels ordered wavelength-major.
    pub fn from_kernels(kernels: Vec<Array2<f64>>, levels: Vec<f64>, num_wavelengths: usize) -> Result<Self> {
        if kernels.len() != levels.len() * num_wavelengths {
            return Err(Error::config(format!(
                "{} kernels for {} wavelengths x {} levels",
                kernels.len(),
                num_wavelengths,
                levels.len()
            )));
        }
        if let Some(first) = kernels.first() {
            if kernels.iter().any(|k| k.dim() != first.dim()) {
                return Err(Error::config("kernels differ in size"));
            }
        }
        Ok(Self {
            kernels,
            levels,
            num_wavelengths,
        })
    }

    /// Identity kernels at every level.
    pub fn delta(config: &OpticalConfig) -> Self {
        let k = config.psf_kernel_size;
        let mut kernel = Array2::zeros((k, k));
        kernel[[k / 2, k / 2]] = 1.0;
        let levels = config.disparity_levels();
        Self {
            kernels: vec![kernel; 3 * levels.len()],
            levels,
            num_wavelengths: 3,
        }
    }

    pub fn kernel(&self, wavelength: usize, level: usize) -> &Array2<f64> {
        &self.kernels[wavelength * self.levels.len() + level]
    }

    pub fn kernels(&self) -> &[Array2<f64>] {
        &self.kernels
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn num_wavelengths(&self) -> usize {
        self.num_wavelengths
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.first().map_or(0, |k| k.nrows())
    }

    /// Mean kernel over all disparity levels for one wavelength.
    pub fn mean_kernel(&self, wavelength: usize) -> Array2<f64> {
        let n = self.num_levels();
        let mut acc = Array2::zeros(self.kernel(wavelength, 0).dim());
        for l in 0..n {
            acc += self.kernel(wavelength, l);
        }
        acc / n as f64
    }
}

/// Precomputed pupil sampling for a configuration; evaluates PSFs for any mask.
#[derive(Debug, Clone)]
pub struct PsfModel {
    config: OpticalConfig,
    pupils: Vec<PupilGrid>,
}

impl PsfModel {
    pub fn new(config: &OpticalConfig) -> Result<Self> {
        config.validate()?;
        let pupils = config
            .wavelengths
            .iter()
            .map(|&wl| PupilGrid::new(config, wl))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            pupils,
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.config
    }

    /// DFT grid size used at each wavelength.
    pub fn fft_sizes(&self) -> Vec<usize> {
        self.pupils.iter().map(|p| p.fft_size).collect()
    }

    /// Pixel-integrated, unit-sum kernel at disparity `d` for channel `wavelength`.
    pub fn psf(&self, mask: &PhaseMask, d: f64, wavelength: usize) -> Result<Array2<f64>> {
        mask.check_grid(&self.config)?;
        self.config.check_disparity(d)?;
        let s = self.config.psf_oversample;
        let k = self.config.psf_kernel_size;
        let fine = self.field_intensity(mask, d, wavelength, s);
        let mut kernel = Array2::<f64>::zeros((k, k));
        for ((i, j), v) in kernel.indexed_iter_mut() {
            let mut acc = 0.0;
            for a in 0..s {
                for b in 0..s {
                    acc += fine[[i * s + a, j * s + b]];
                }
            }
            *v = acc;
        }
        let total: f64 = kernel.sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical(format!(
                "PSF at d = {d} carries no energy inside the {k}x{k} window"
            )));
        }
        kernel /= total;
        Ok(kernel)
    }

    /// Optical intensity on the sub-pixel raster, normalized to unit sum.
    pub fn optical_psf(&self, mask: &PhaseMask, d: f64, wavelength: usize) -> Result<OpticalPsf> {
        mask.check_grid(&self.config)?;
        self.config.check_disparity(d)?;
        let s = self.config.psf_oversample;
        let mut intensity = self.field_intensity(mask, d, wavelength, s);
        let total = intensity.sum();
        intensity /= total;
        // sample index i sits at (i - k s / 2 - floor(s/2) - delta) / s pixels from the axis
        let k = self.config.psf_kernel_size;
        let delta = if s.is_multiple_of(2) { -0.5 } else { 0.0 };
        let axis = (k * s / 2 + s / 2) as f64 + delta;
        Ok(OpticalPsf {
            intensity,
            samples_per_pixel: s,
            axis,
        })
    }

    /// |DFT(pupil)|^2 on the `k s x k s` window centered on the axis.
    fn field_intensity(&self, mask: &PhaseMask, d: f64, wavelength: usize, s: usize) -> Array2<f64> {
        let pupil = &self.pupils[wavelength];
        let cfg = &self.config;
        let m = pupil.fft_size;
        let span = pupil.span;
        let half = span / 2;
        let k_mask = 2.0 * PI / pupil.wavelength * (cfg.refractive_index - 1.0);
        let k_df = defocus_coefficient(d, cfg, pupil.wavelength);
        let standard = mask.height_map.as_standard_layout();
        let heights = standard.as_slice().expect("standard layout is contiguous");

        let mut field = Array2::<Complex64>::zeros((span, span));
        for smp in &pupil.samples {
            let phase = k_mask * heights[smp.cell] + k_df * smp.r2 + smp.shift;
            field[[smp.row, smp.col]] = Complex64::from_polar(1.0, phase);
        }

        // Output index k(i) for window index i in 0..n.
        let n = cfg.psf_kernel_size * s;
        let offset = (cfg.psf_kernel_size / 2 * s + s / 2) as isize;
        let out_index: Vec<usize> = (0..n)
            .map(|i| (i as isize - offset).rem_euclid(m as isize) as usize)
            .collect();

        // Row transforms, keeping only the window columns.
        let fft = plan(m, FftDirection::Forward);
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); m];
        let mut rows = Array2::<Complex64>::zeros((span, n));
        for r in 0..span {
            line.iter_mut().for_each(|v| *v = Complex64::default());
            let mut any = false;
            for c in 0..span {
                let v = field[[r, c]];
                if v != Complex64::default() {
                    any = true;
                }
                let idx = (c as isize - half as isize).rem_euclid(m as isize) as usize;
                line[idx] = v;
            }
            if !any {
                continue;
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (o, &idx) in out_index.iter().enumerate() {
                rows[[r, o]] = line[idx];
            }
        }

        // Column transforms over the window columns.
        let mut out = Array2::<f64>::zeros((n, n));
        for o in 0..n {
            line.iter_mut().for_each(|v| *v = Complex64::default());
            for r in 0..span {
                let idx = (r as isize - half as isize).rem_euclid(m as isize) as usize;
                line[idx] = rows[[r, o]];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (i, &idx) in out_index.iter().enumerate() {
                out[[i, o]] = line[idx].norm_sqr();
            }
        }
        out
    }

    /// All `3 x num_disparity_levels` kernels.
    pub fn stack(&self, mask: &PhaseMask) -> Result<PsfStack> {
        let levels = self.config.disparity_levels();
        let nl = levels.len();
        let nw = self.pupils.len();
        let kernels = par::map_range(nw * nl, |i| self.psf(mask, levels[i % nl], i / nl))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        PsfStack::from_kernels(kernels, levels, nw)
    }
}

/// Single PSF, building the pupil sampling on the fly.
pub fn compute_psf(mask: &PhaseMask, d: f64, wavelength: usize, config: &OpticalConfig) -> Result<Array2<f64>> {
    PsfModel::new(config)?.psf(mask, d, wavelength)
}

pub fn compute_psf_stack(mask: &PhaseMask, config: &OpticalConfig) -> Result<PsfStack> {
    PsfModel::new(config)?.stack(mask)
}

/// Centroid `(row, col)` and second central moment (mean squared radius, px^2).
pub fn second_moment(kernel: &Array2<f64>) -> ((f64, f64), f64) {
    let total = kernel.sum();
    let (mut cy, mut cx) = (0.0, 0.0);
    for ((i, j), &v) in kernel.indexed_iter() {
        cy += i as f64 * v;
        cx += j as f64 * v;
    }
    cy /= total;
    cx /= total;
    let mut m2 = 0.0;
    for ((i, j), &v) in kernel.indexed_iter() {
        let dy = i as f64 - cy;
        let dx = j as f64 - cx;
        m2 += (dx * dx + dy * dy) * v;
    }
    ((cy, cx), m2 / total)
}

/// Regularizer in the Fisher-information objective.
pub const FISHER_EPSILON: f64 = 1e-6;

/// Depth sensitivity of a stack: `sum (dPSF/dd)^2 / (PSF + eps)` over pixels,
/// levels and wavelengths. Derivatives are central differences between
/// neighboring levels (one-sided at the two ends).
pub fn fisher_objective(stack: &PsfStack) -> Result<f64> {
    let nl = stack.num_levels();
    if nl < 2 {
        return Err(Error::config("Fisher objective needs at least two disparity levels"));
    }
    let levels = stack.levels();
    let mut total = 0.0;
    for w in 0..stack.num_wavelengths() {
        for l in 0..nl {
            let (lo, hi) = (l.saturating_sub(1), (l + 1).min(nl - 1));
            let span = levels[hi] - levels[lo];
            let center = stack.kernel(w, l);
            Zip::from(stack.kernel(w, hi))
                .and(stack.kernel(w, lo))
                .and(center)
                .for_each(|&a, &b, &p| {
                    let deriv = (a - b) / span;
                    total += deriv * deriv / (p + FISHER_EPSILON);
                });
        }
    }
    Ok(total)
}

/// Normalized cross-correlation of two kernels about their means.
pub fn kernel_correlation(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    Zip::from(a).and(b).for_each(|&x, &y| {
        let (x, y) = (x - ma, y - mb);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    });
    ab / (aa * bb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::config::GREEN;

    #[test]
    fn defocus_vanishes_in_focus() {
        let c = OpticalConfig::default();
        let p = defocus_phase(c.d0(), &c, 530e-9).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn defocus_out_of_range() {
        let c = OpticalConfig::default();
        assert!(matches!(defocus_phase(200.0, &c, 530e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn kernels_are_normalized() {
        let c = OpticalConfig::default();
        let model = PsfModel::new(&c).unwrap();
        let mask = PhaseMask::flat(&c);
        for d in [0.0, 95.0, 150.0] {
            let k = model.psf(&mask, d, GREEN).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-9);
            assert!(k.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn undersampled_field_is_rejected() {
        let c = OpticalConfig {
            psf_kernel_size: 16,
            ..Default::default()
        };
        match PsfModel::new(&c) {
            Err(Error::Config(msg)) => assert!(msg.contains("required"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn fisher_of_constant_stack_is_zero() {
        let c = OpticalConfig::default();
        let stack = PsfStack::delta(&c);
        assert_eq!(fisher_objective(&stack).unwrap(), 0.0);
    }

    #[test]
    fn moment_of_point() {
        let mut k = Array2::zeros((5, 5));
        k[[2, 3]] = 1.0;
        let ((cy, cx), m2) = second_moment(&k);
        assert_eq!((cy, cx, m2), (2.0, 3.0, 0.0));
    }
}
