//! Frequency-domain Wiener deconvolution and EDOF texture recovery.

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{split_packed, ConvGeometry};
use crate::optics::OpticalConfig;
use crate::optics::PsfStack;
use crate::par;
use crate::render::{quantize_disparity, CodedPair, KernelSpectra};

/// Lower bound of the automatically estimated noise-to-signal ratio.
pub const NSR_FLOOR: f64 = 1e-6;

/// `sigma^2 / (var(image) - sigma^2)`, floored at [`NSR_FLOOR`].
pub fn estimate_nsr(image: &Array3<f64>, sigma: f64) -> f64 {
    let noise = sigma * sigma;
    if noise == 0.0 {
        return NSR_FLOOR;
    }
    let signal = (image.var(0.0) - noise).max(noise * NSR_FLOOR);
    (noise / signal).max(NSR_FLOOR)
}

/// Apply `conj(H) / (|H|^2 + nsr)` to an image spectrum in place.
fn apply_filter(spec: &mut Array2<Complex64>, kernel: &Array2<Complex64>, nsr: f64) {
    Zip::from(spec).and(kernel).for_each(|s, k| {
        let denom = k.norm_sqr() + nsr;
        *s = if denom > 0.0 {
            *s * k.conj() / denom
        } else {
            Complex64::new(0.0, 0.0)
        };
    });
}

fn check_nsr(nsr: f64) -> Result<()> {
    if !(nsr >= 0.0) || nsr.is_infinite() {
        return Err(Error::domain(format!("nsr must be finite and non-negative, got {nsr}")));
    }
    Ok(())
}

/// Unclipped Wiener deconvolution of one channel.
pub fn wiener_channel(image: ArrayView2<f64>, kernel: ArrayView2<f64>, nsr: f64) -> Result<Array2<f64>> {
    check_nsr(nsr)?;
    let (h, w) = image.dim();
    let geo = ConvGeometry::new(h, w, kernel.nrows());
    let mut spec = geo.spectrum(geo.pad(image).view());
    apply_filter(&mut spec, &geo.kernel_spectrum(kernel), nsr);
    Ok(geo.crop_inverse(spec).mapv(|v| v.re))
}

/// Per-channel Wiener deconvolution, output clipped to [0, 1].
///
/// `kernels` holds either one kernel shared by all channels or one per channel.
pub fn wiener_deconvolve(coded: &Array3<f64>, kernels: &[Array2<f64>], nsr: f64) -> Result<Array3<f64>> {
    let nc = coded.dim().0;
    if kernels.len() != 1 && kernels.len() != nc {
        return Err(Error::usage(format!(
            "{} kernels for a {nc}-channel image",
            kernels.len()
        )));
    }
    check_nsr(nsr)?;
    let channels = par::map_range(nc, |c| {
        let k = &kernels[if kernels.len() == 1 { 0 } else { c }];
        wiener_channel(coded.index_axis(Axis(0), c), k.view(), nsr)
    });
    let mut out = Array3::zeros(coded.dim());
    for (c, ch) in channels.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), c).assign(&ch?.mapv(|v| v.clamp(0.0, 1.0)));
    }
    Ok(out)
}

/// How EDOF texture is recovered from a coded view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdofMode {
    /// One deconvolution per channel with the level-averaged kernel.
    Single,
    /// One deconvolution per disparity level, composited by a disparity hint.
    Layered,
}

impl std::str::FromStr for EdofMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(EdofMode::Single),
            "layered" => Ok(EdofMode::Layered),
            other => Err(Error::usage(format!(
                "unknown EDOF mode `{other}` (expected single or layered)"
            ))),
        }
    }
}

/// Disparity maps of both views guiding layered reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct DisparityHint<'a> {
    pub left: &'a Array2<f64>,
    pub right: &'a Array2<f64>,
}

/// Recover all-in-focus textures of both views.
///
/// `nsr = None` estimates it per view from the pair's noise level.
pub fn edof_reconstruct(
    pair: &CodedPair,
    stack: &PsfStack,
    config: &OpticalConfig,
    mode: EdofMode,
    hint: Option<DisparityHint<'_>>,
    nsr: Option<f64>,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let nsr_l = nsr.unwrap_or_else(|| estimate_nsr(&pair.coded_left, pair.noise_sigma));
    let nsr_r = nsr.unwrap_or_else(|| estimate_nsr(&pair.coded_right, pair.noise_sigma));
    match mode {
        EdofMode::Single => {
            let kernels: Vec<Array2<f64>> = (0..stack.num_wavelengths()).map(|c| stack.mean_kernel(c)).collect();
            Ok((
                wiener_deconvolve(&pair.coded_left, &kernels, nsr_l)?,
                wiener_deconvolve(&pair.coded_right, &kernels, nsr_r)?,
            ))
        }
        EdofMode::Layered => {
            let hint = hint.ok_or_else(|| Error::usage("layered EDOF needs a disparity hint"))?;
            let (_, h, w) = pair.coded_left.dim();
            let geo = ConvGeometry::new(h, w, stack.kernel_size());
            let all: Vec<usize> = (0..stack.num_levels()).collect();
            let spectra = KernelSpectra::new(stack, geo, &all);
            layered_with_spectra(pair, &spectra, config, hint, (nsr_l, nsr_r))
        }
    }
}

/// Layered reconstruction with precomputed kernel spectra for every level.
pub fn layered_with_spectra(
    pair: &CodedPair,
    spectra: &KernelSpectra,
    config: &OpticalConfig,
    hint: DisparityHint<'_>,
    nsr: (f64, f64),
) -> Result<(Array3<f64>, Array3<f64>)> {
    check_nsr(nsr.0)?;
    check_nsr(nsr.1)?;
    let (nc, h, w) = pair.coded_left.dim();
    if pair.coded_right.dim() != (nc, h, w) {
        return Err(Error::usage("coded views differ in shape"));
    }
    for d in [hint.left, hint.right] {
        if d.dim() != (h, w) {
            return Err(Error::usage(format!(
                "disparity hint {:?} does not match image {h}x{w}",
                d.dim()
            )));
        }
    }
    let geo = *spectra.geometry();
    if (geo.height, geo.width) != (h, w) {
        return Err(Error::usage("kernel spectra were built for another image size"));
    }
    let layers = [
        quantize_disparity(hint.left, config),
        quantize_disparity(hint.right, config),
    ];
    let mut levels: Vec<usize> = layers.iter().flat_map(|l| l.occupied()).collect();
    levels.sort_unstable();
    levels.dedup();
    let channels = par::map_range(nc, |c| -> Result<(Array2<f64>, Array2<f64>)> {
        // both views share one transform: X = A + iB with A, B the real spectra
        let packed = geo.packed_spectrum(
            geo.pad(pair.coded_left.index_axis(Axis(0), c)).view(),
            geo.pad(pair.coded_right.index_axis(Axis(0), c)).view(),
        );
        let (ph, pw) = packed.dim();
        let (a, b) = split_packed(&packed);
        let mut out_l = Array2::zeros((h, w));
        let mut out_r = Array2::zeros((h, w));
        for &l in &levels {
            let kernel = spectra
                .get(c, l)
                .ok_or_else(|| Error::usage(format!("no kernel spectrum for channel {c}, level {l}")))?;
            let mut spec = Array2::<Complex64>::zeros((ph, pw));
            Zip::from(&mut spec).and(kernel).and(&a).and(&b).for_each(|s, k, a, b| {
                let n = k.norm_sqr();
                let gl = if n + nsr.0 > 0.0 { (n + nsr.0).recip() } else { 0.0 };
                let gr = if n + nsr.1 > 0.0 { (n + nsr.1).recip() } else { 0.0 };
                let kc = k.conj();
                *s = kc * (a * gl + Complex64::i() * b * gr);
            });
            let layer = geo.crop_inverse(spec);
            let label = l as u16;
            Zip::from(&mut out_l)
                .and(layers[0].labels())
                .and(&layer)
                .for_each(|o, &lab, v| {
                    if lab == label {
                        *o = v.re.clamp(0.0, 1.0);
                    }
                });
            Zip::from(&mut out_r)
                .and(layers[1].labels())
                .and(&layer)
                .for_each(|o, &lab, v| {
                    if lab == label {
                        *o = v.im.clamp(0.0, 1.0);
                    }
                });
        }
        Ok((out_l, out_r))
    });
    let mut left = Array3::zeros((nc, h, w));
    let mut right = Array3::zeros((nc, h, w));
    for (c, ch) in channels.into_iter().enumerate() {
        let (l, r) = ch?;
        left.index_axis_mut(Axis(0), c).assign(&l);
        right.index_axis_mut(Axis(0), c).assign(&r);
    }
    Ok((left, right))
}
