//! Layered rendering of coded stereo pairs.
//!
//! Each view is split into disparity layers; every layer is blurred with its
//! own PSF and the layers are composited with normalized matting weights
//! (the blurred layer masks), then sensor noise is added.

mod layers;
mod noise;

use ndarray::{s, Array2, Array3, Axis, Zip};
use num_complex::Complex64;

pub use layers::{nearest_level, quantize_disparity, LayerMasks};
pub use noise::{add_noise, add_noise_stream, noise_sigma_for, NoiseReference};

use crate::error::{Error, Result};
use crate::fft::ConvGeometry;
use crate::optics::{OpticalConfig, PhaseMask, PsfModel, PsfStack};
use crate::par;

/// Floor of the matting-weight denominator.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Ground-truth stereo scene. Textures are channel-first `(3, H, W)` arrays
/// in [0, 1]; disparities are in the pre-shifted convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub texture_left: Array3<f64>,
    pub texture_right: Array3<f64>,
    pub disparity_left: Array2<f64>,
    pub disparity_right: Array2<f64>,
}

/// Outcome of validating a scene against a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampReport {
    pub clamped: usize,
    pub fraction: f64,
}

impl Scene {
    pub fn dim(&self) -> (usize, usize) {
        self.disparity_left.dim()
    }

    /// Check shapes and clamp disparities into the configured range.
    pub fn validate(&mut self, config: &OpticalConfig) -> Result<ClampReport> {
        let (h, w) = self.disparity_left.dim();
        let shapes_ok = self.texture_left.dim() == (3, h, w)
            && self.texture_right.dim() == (3, h, w)
            && self.disparity_right.dim() == (h, w);
        if !shapes_ok {
            return Err(Error::Data(format!(
                "scene {}: textures {:?}/{:?} and disparities {:?}/{:?} disagree",
                self.id,
                self.texture_left.dim(),
                self.texture_right.dim(),
                self.disparity_left.dim(),
                self.disparity_right.dim()
            )));
        }
        let (lo, hi) = (config.disparity_min, config.disparity_max);
        let mut clamped = 0;
        for d in self.disparity_left.iter_mut().chain(self.disparity_right.iter_mut()) {
            if !(*d >= lo && *d <= hi) {
                clamped += 1;
                *d = if d.is_nan() { lo } else { d.clamp(lo, hi) };
            }
        }
        Ok(ClampReport {
            clamped,
            fraction: clamped as f64 / (2 * h * w) as f64,
        })
    }
}

/// Rendered, noisy coded stereo pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPair {
    pub coded_left: Array3<f64>,
    pub coded_right: Array3<f64>,
    pub noise_sigma: f64,
    pub mask_id: String,
    pub scene_id: String,
}

/// Kernel spectra for a fixed canvas geometry, keyed by (channel, level).
pub struct KernelSpectra {
    geometry: ConvGeometry,
    num_levels: usize,
    spectra: Vec<Option<Array2<Complex64>>>,
}

impl KernelSpectra {
    /// Transform the kernels of `levels` (all three channels) for `geometry`.
    pub fn new(stack: &PsfStack, geometry: ConvGeometry, levels: &[usize]) -> Self {
        let nl = stack.num_levels();
        let nw = stack.num_wavelengths();
        let jobs: Vec<(usize, usize)> = (0..nw).flat_map(|c| levels.iter().map(move |&l| (c, l))).collect();
        let pairs: Vec<&[(usize, usize)]> = jobs.chunks(2).collect();
        let computed = par::map_slice(&pairs, |&pair| match *pair {
            [(c0, l0), (c1, l1)] => {
                let (a, b) = geometry.kernel_spectrum_pair(stack.kernel(c0, l0).view(), stack.kernel(c1, l1).view());
                vec![a, b]
            }
            _ => pair
                .iter()
                .map(|&(c, l)| geometry.kernel_spectrum(stack.kernel(c, l).view()))
                .collect(),
        });
        let mut spectra = vec![None; nw * nl];
        for ((c, l), spec) in jobs.into_iter().zip(computed.into_iter().flatten()) {
            spectra[c * nl + l] = Some(spec);
        }
        Self {
            geometry,
            num_levels: nl,
            spectra,
        }
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geometry
    }

    pub fn get(&self, channel: usize, level: usize) -> Option<&Array2<Complex64>> {
        self.spectra[channel * self.num_levels + level].as_ref()
    }
}

fn check_levels(layers: &LayerMasks, stack: &PsfStack) -> Result<()> {
    let same = layers.levels().len() == stack.levels().len()
        && layers
            .levels()
            .iter()
            .zip(stack.levels())
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    if !same {
        return Err(Error::config(format!(
            "layer levels ({}) do not match PSF stack levels ({})",
            layers.num_levels(),
            stack.num_levels()
        )));
    }
    Ok(())
}

/// Layered coded image: per channel,
/// `sum_d (M_d I) * PSF_d / max(sum_d M_d * PSF_d, floor)`.
pub fn render_coded_image(texture: &Array3<f64>, layers: &LayerMasks, stack: &PsfStack) -> Result<Array3<f64>> {
    check_levels(layers, stack)?;
    let (_, h, w) = texture.dim();
    let geometry = ConvGeometry::new(h, w, stack.kernel_size());
    let spectra = KernelSpectra::new(stack, geometry, &layers.occupied());
    render_with_spectra(texture, layers, &spectra)
}

/// [`render_coded_image`] with precomputed kernel spectra.
pub fn render_with_spectra(texture: &Array3<f64>, layers: &LayerMasks, spectra: &KernelSpectra) -> Result<Array3<f64>> {
    let (nc, h, w) = texture.dim();
    if layers.dim() != (h, w) {
        return Err(Error::usage(format!(
            "texture {h}x{w} and layer map {:?} differ",
            layers.dim()
        )));
    }
    let geo = *spectra.geometry();
    if (geo.height, geo.width) != (h, w) {
        return Err(Error::usage("kernel spectra were built for another image size"));
    }
    let occupied = layers.occupied();
    for &l in &occupied {
        for c in 0..nc {
            if spectra.get(c, l).is_none() {
                return Err(Error::usage(format!("no kernel spectrum for channel {c}, level {l}")));
            }
        }
    }
    let labels = geo.pad_labels(layers.labels().view());
    let channels = par::map_range(nc, |c| {
        let padded = geo.pad(texture.index_axis(Axis(0), c));
        let mut acc = Array2::<Complex64>::zeros((geo.padded_height, geo.padded_width));
        for &l in &occupied {
            let layer = labels.mapv(|v| if v as usize == l { 1.0 } else { 0.0 });
            let masked = &padded * &layer;
            let mut spec = geo.packed_spectrum(masked.view(), layer.view());
            spec *= spectra.get(c, l).expect("checked above");
            acc += &spec;
        }
        let blurred = geo.crop_inverse(acc);
        blurred.mapv(|v| v.re / v.im.max(WEIGHT_FLOOR))
    });
    let mut out = Array3::zeros((nc, h, w));
    for (c, ch) in channels.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), c).assign(&ch);
    }
    Ok(out)
}

/// Translate a grid `shift` pixels to the right, replicating the left edge.
pub fn shift_right(grid: &Array2<f64>, shift: usize) -> Array2<f64> {
    let (h, w) = grid.dim();
    Array2::from_shape_fn((h, w), |(y, x)| grid[[y, x.saturating_sub(shift)]])
}

fn checked_preshift(width: usize, config: &OpticalConfig) -> Result<usize> {
    let shift = config.preshift.round() as usize;
    if width <= shift {
        return Err(Error::domain(format!(
            "image width {width} does not exceed the pre-shift of {shift} px"
        )));
    }
    Ok(shift)
}

/// Pre-shift a right-view image (each channel) to the right by `config.preshift`.
pub fn preshift_right(image: &Array3<f64>, config: &OpticalConfig) -> Result<Array3<f64>> {
    let shift = checked_preshift(image.dim().2, config)?;
    let mut out = image.clone();
    for (mut dst, src) in out.outer_iter_mut().zip(image.outer_iter()) {
        dst.assign(&shift_right(&src.to_owned(), shift));
    }
    Ok(out)
}

/// Pre-shift a right-view disparity map: translated like the image and
/// reduced by the pre-shift.
pub fn preshift_right_disparity(disp: &Array2<f64>, config: &OpticalConfig) -> Result<Array2<f64>> {
    let shift = checked_preshift(disp.ncols(), config)?;
    Ok(shift_right(disp, shift).mapv(|d| d - config.preshift))
}

/// Raw disparity to the reduced, pre-shifted convention.
pub fn reduce_disparity(raw: f64, config: &OpticalConfig) -> f64 {
    raw - config.preshift
}

/// Render both views of a scene with a precomputed PSF stack.
pub fn render_pair_with_stack(
    scene: &Scene,
    stack: &PsfStack,
    config: &OpticalConfig,
    sigma: f64,
    seed: u64,
    mask_id: &str,
) -> Result<CodedPair> {
    let layers_left = quantize_disparity(&scene.disparity_left, config);
    let layers_right = quantize_disparity(&scene.disparity_right, config);
    check_levels(&layers_left, stack)?;
    let (h, w) = scene.dim();
    let geometry = ConvGeometry::new(h, w, stack.kernel_size());
    let mut needed = layers_left.occupied();
    needed.extend(layers_right.occupied());
    needed.sort_unstable();
    needed.dedup();
    let spectra = KernelSpectra::new(stack, geometry, &needed);
    let clean_left = render_with_spectra(&scene.texture_left, &layers_left, &spectra)?;
    let clean_right = render_with_spectra(&scene.texture_right, &layers_right, &spectra)?;
    Ok(CodedPair {
        coded_left: add_noise_stream(&clean_left, sigma, seed, 0)?,
        coded_right: add_noise_stream(&clean_right, sigma, seed, 1)?,
        noise_sigma: sigma,
        mask_id: mask_id.to_string(),
        scene_id: scene.id.clone(),
    })
}

/// Simulate the coded stereo pair seen through `mask`.
pub fn render_stereo_pair(
    scene: &Scene,
    mask: &PhaseMask,
    config: &OpticalConfig,
    sigma: f64,
    seed: u64,
) -> Result<CodedPair> {
    let stack = PsfModel::new(config)?.stack(mask)?;
    render_pair_with_stack(scene, &stack, config, sigma, seed, mask.provenance.as_str())
}

/// Mean over all samples of a channel-first image.
pub fn mean_brightness(image: &Array3<f64>) -> f64 {
    image.mean().unwrap_or(0.0)
}

/// Interior window of a channel-first image, `margin` pixels from each edge.
pub fn interior(image: &Array3<f64>, margin: usize) -> Array3<f64> {
    let (_, h, w) = image.dim();
    image.slice(s![.., margin..h - margin, margin..w - margin]).to_owned()
}

/// Matting weights `M_d * PSF_d` for one channel, normalized per pixel.
pub fn matting_weights(layers: &LayerMasks, stack: &PsfStack, channel: usize) -> Vec<(usize, Array2<f64>)> {
    let (h, w) = layers.dim();
    let geo = ConvGeometry::new(h, w, stack.kernel_size());
    let labels = geo.pad_labels(layers.labels().view());
    let raw: Vec<(usize, Array2<f64>)> = layers
        .occupied()
        .into_iter()
        .map(|l| {
            let layer = labels.mapv(|v| if v as usize == l { 1.0 } else { 0.0 });
            let mut spec = geo.spectrum(layer.view());
            spec *= &geo.kernel_spectrum(stack.kernel(channel, l).view());
            (l, geo.crop_inverse(spec).mapv(|v| v.re))
        })
        .collect();
    let mut total = Array2::<f64>::zeros((h, w));
    for (_, wgt) in &raw {
        total += wgt;
    }
    raw.into_iter()
        .map(|(l, mut wgt)| {
            Zip::from(&mut wgt)
                .and(&total)
                .for_each(|v, &t| *v /= t.max(WEIGHT_FLOOR));
            (l, wgt)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preshift_examples() {
        let c = OpticalConfig::default();
        assert_eq!(reduce_disparity(326.0, &c), 192.0);
        assert_eq!(reduce_disparity(134.0, &c), 0.0);
        let g = Array2::from_shape_fn((2, 6), |(y, x)| (y * 10 + x) as f64);
        assert_eq!(shift_right(&g, 0), g);
        let s = shift_right(&g, 2);
        assert_eq!(s.row(0).to_vec(), vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn preshift_needs_width() {
        let c = OpticalConfig::default();
        let narrow = Array3::zeros((3, 4, 100));
        assert!(matches!(preshift_right(&narrow, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn delta_stack_is_identity() {
        let c = OpticalConfig::default();
        let stack = PsfStack::delta(&c);
        let tex = Array3::from_shape_fn((3, 20, 30), |(ch, y, x)| ((ch * 7 + y * 3 + x * 5) % 13) as f64 / 13.0);
        let disp = Array2::from_shape_fn((20, 30), |(_, x)| if x < 15 { 10.0 } else { 150.0 });
        let layers = quantize_disparity(&disp, &c);
        let out = render_coded_image(&tex, &layers, &stack).unwrap();
        for (a, b) in out.iter().zip(tex.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn level_mismatch_rejected() {
        let c = OpticalConfig::default();
        let other = OpticalConfig {
            num_disparity_levels: 11,
            ..Default::default()
        };
        let layers = quantize_disparity(&Array2::zeros((4, 4)), &other);
        let stack = PsfStack::delta(&c);
        let tex = Array3::zeros((3, 4, 4));
        assert!(matches!(
            render_coded_image(&tex, &layers, &stack),
            Err(Error::Config(_))
        ));
    }
}
