use ndarray::{Array, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Add i.i.d. Gaussian noise of standard deviation `sigma` and clip to [0, 1].
///
/// The generator is ChaCha8 seeded with `seed`; `stream` selects an
/// independent sequence for the same seed (the two views of a pair use
/// streams 0 and 1).
pub fn add_noise_stream<D: Dimension>(
    image: &Array<f64, D>,
    sigma: f64,
    seed: u64,
    stream: u64,
) -> Result<Array<f64, D>> {
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.mapv(|v| v.clamp(0.0, 1.0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut out = image.to_owned();
    for v in out.iter_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(out)
}

pub fn add_noise<D: Dimension>(image: &Array<f64, D>, sigma: f64, seed: u64) -> Result<Array<f64, D>> {
    add_noise_stream(image, sigma, seed, 0)
}

/// Noise level at another exposure setting, anchored at a reference point.
///
/// Collected light scales as `T L / F#^2`, so the noise fraction scales as
/// `(F# / F#_ref)^2 (T_ref L_ref) / (T L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReference {
    pub f_number: f64,
    pub exposure: f64,
    pub light_level: f64,
    pub sigma: f64,
}

impl Default for NoiseReference {
    fn default() -> Self {
        Self {
            f_number: 8.0,
            exposure: 1.0,
            light_level: 1.0,
            sigma: 0.02,
        }
    }
}

pub fn noise_sigma_for(f_number: f64, exposure: f64, light_level: f64, reference: &NoiseReference) -> Result<f64> {
    for (name, v) in [
        ("f_number", f_number),
        ("exposure", exposure),
        ("light_level", light_level),
    ] {
        if !(v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let aperture = (f_number / reference.f_number).powi(2);
    let light = (reference.exposure * reference.light_level) / (exposure * light_level);
    Ok(reference.sigma * aperture * light)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn zero_sigma_is_identity() {
        let img = Array2::from_shape_fn((4, 4), |(i, j)| (i + j) as f64 / 8.0);
        assert_eq!(add_noise(&img, 0.0, 7).unwrap(), img);
    }

    #[test]
    fn same_seed_same_noise() {
        let img = Array2::from_elem((16, 16), 0.5);
        let a = add_noise(&img, 0.05, 3).unwrap();
        let b = add_noise(&img, 0.05, 3).unwrap();
        let c = add_noise_stream(&img, 0.05, 3, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sigma_scaling() {
        let r = NoiseReference::default();
        assert_eq!(noise_sigma_for(8.0, 1.0, 1.0, &r).unwrap(), 0.02);
        assert!((noise_sigma_for(32.0, 1.0, 1.0, &r).unwrap() - 0.32).abs() < 1e-15);
        assert!((noise_sigma_for(32.0, 16.0, 1.0, &r).unwrap() - 0.02).abs() < 1e-15);
        assert!(noise_sigma_for(8.0, 0.0, 1.0, &r).is_err());
    }
}
