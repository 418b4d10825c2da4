use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};

use super::config::{OpticalConfig, GREEN};
use super::zernike::{disk_mask, unit_coords, ZernikeBasis};
use crate::error::{Error, Result};

/// Number of Zernike coefficients parameterizing a learned mask.
pub const MASK_COEFFICIENTS: usize = 55;

/// Where a mask's height map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Learned,
    Cubic,
    Fisher,
    Flat,
    Loaded,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Learned => "learned",
            Provenance::Cubic => "cubic",
            Provenance::Fisher => "fisher",
            Provenance::Flat => "flat",
            Provenance::Loaded => "loaded",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Provenance::Learned),
            "cubic" => Ok(Provenance::Cubic),
            "fisher" => Ok(Provenance::Fisher),
            "flat" => Ok(Provenance::Flat),
            "loaded" => Ok(Provenance::Loaded),
            other => Err(Error::Data(format!("unknown mask provenance {other:?}"))),
        }
    }
}

/// A phase mask: surface height over the mask grid, optionally with the
/// Zernike coefficients (meters per unit mode value) it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    pub coefficients: Vec<f64>,
    pub height_map: Array2<f64>,
    pub provenance: Provenance,
}

impl PhaseMask {
    pub fn flat(config: &OpticalConfig) -> Self {
        let g = config.mask_grid_size;
        Self {
            coefficients: vec![0.0; MASK_COEFFICIENTS],
            height_map: Array2::zeros((g, g)),
            provenance: Provenance::Flat,
        }
    }

    pub fn from_coefficients(basis: &ZernikeBasis, coefficients: Vec<f64>, provenance: Provenance) -> Self {
        let height_map = basis.combine(&coefficients);
        Self {
            coefficients,
            height_map,
            provenance,
        }
    }

    /// Height-map-native mask; values outside the aperture disk are zeroed.
    pub fn from_height_map(height_map: Array2<f64>, provenance: Provenance) -> Result<Self> {
        let (r, c) = height_map.dim();
        if r != c || r % 2 == 0 {
            return Err(Error::Data(format!(
                "mask height map must be square with odd size, got {r}x{c}"
            )));
        }
        let disk = disk_mask(r);
        let mut height_map = height_map;
        Zip::from(&mut height_map).and(&disk).for_each(|h, &inside| {
            if !inside {
                *h = 0.0;
            }
        });
        Ok(Self {
            coefficients: Vec::new(),
            height_map,
            provenance,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.height_map.nrows()
    }

    pub fn check_grid(&self, config: &OpticalConfig) -> Result<()> {
        if self.grid_size() != config.mask_grid_size || self.height_map.ncols() != self.grid_size() {
            return Err(Error::config(format!(
                "mask grid {}x{} does not match configured {}",
                self.height_map.nrows(),
                self.height_map.ncols(),
                config.mask_grid_size
            )));
        }
        Ok(())
    }

    /// Peak-to-valley height over the aperture disk.
    pub fn peak_to_valley(&self) -> f64 {
        let disk = disk_mask(self.grid_size());
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        Zip::from(&self.height_map).and(&disk).for_each(|&h, &inside| {
            if inside {
                lo = lo.min(h);
                hi = hi.max(h);
            }
        });
        hi - lo
    }
}

/// Phase delay `(2 pi / lambda) (n - 1) h` of a height map.
pub fn height_to_phase(height_map: &Array2<f64>, wavelength: f64, refractive_index: f64) -> Result<Array2<f64>> {
    if !(wavelength > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength}")));
    }
    if !(refractive_index > 1.0) {
        return Err(Error::domain(format!(
            "refractive index must exceed 1, got {refractive_index}"
        )));
    }
    let k = 2.0 * PI / wavelength * (refractive_index - 1.0);
    Ok(height_map.mapv(|h| k * h))
}

/// Cubic wavefront-coding mask with phase `alpha (x^3 + y^3)` at the green
/// wavelength (unit-disk coordinates), i.e. `2 alpha` radians peak to valley.
pub fn make_cubic_mask(alpha: f64, config: &OpticalConfig) -> Result<PhaseMask> {
    if !(alpha >= 0.0) {
        return Err(Error::domain(format!("cubic strength must be >= 0, got {alpha}")));
    }
    let g = config.mask_grid_size;
    let to_height = config.wavelengths[GREEN] / (2.0 * PI * (config.refractive_index - 1.0));
    let height = Array2::from_shape_fn((g, g), |(row, col)| {
        let (x, y) = unit_coords(g, row, col);
        if x * x + y * y <= 1.0 {
            alpha * (x * x * x + y * y * y) * to_height
        } else {
            0.0
        }
    });
    let mut mask = PhaseMask::from_height_map(height, Provenance::Cubic)?;
    if alpha == 0.0 {
        mask.provenance = Provenance::Flat;
    }
    Ok(mask)
}

/// Snap heights to a fabrication lattice of `levels` steps of size `step`.
///
/// The in-aperture minimum is shifted to zero first (a global offset leaves
/// the PSF unchanged); the region outside the aperture stays at zero.
pub fn quantize_height(mask: &PhaseMask, step: f64, levels: usize) -> Result<PhaseMask> {
    if !(step > 0.0) {
        return Err(Error::domain(format!("height step must be positive, got {step}")));
    }
    if levels < 2 {
        return Err(Error::domain("need at least two height levels"));
    }
    let disk = disk_mask(mask.grid_size());
    let mut min = f64::INFINITY;
    Zip::from(&mask.height_map).and(&disk).for_each(|&h, &inside| {
        if inside {
            min = min.min(h);
        }
    });
    let top = (levels - 1) as f64;
    let mut out = mask.height_map.clone();
    Zip::from(&mut out).and(&disk).for_each(|h, &inside| {
        *h = if inside {
            ((*h - min) / step).round().clamp(0.0, top) * step
        } else {
            0.0
        };
    });
    Ok(PhaseMask {
        coefficients: Vec::new(),
        height_map: out,
        provenance: mask.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_of_one_wave() {
        let lambda = 530e-9;
        let h = Array2::from_elem((3, 3), lambda / 0.5);
        let p = height_to_phase(&h, lambda, 1.5).unwrap();
        assert!(p.iter().all(|v| (v - 2.0 * PI).abs() < 1e-12));
        let z = height_to_phase(&Array2::zeros((3, 3)), lambda, 1.5).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phase_hand_value() {
        let h = Array2::from_elem((1, 1), 1e-6);
        let p = height_to_phase(&h, 530e-9, 1.5).unwrap();
        assert!((p[[0, 0]] - 5.9275).abs() < 1e-4, "{}", p[[0, 0]]);
    }

    #[test]
    fn phase_rejects_bad_inputs() {
        let h = Array2::zeros((1, 1));
        assert!(height_to_phase(&h, 0.0, 1.5).is_err());
        assert!(height_to_phase(&h, 530e-9, 1.0).is_err());
    }

    #[test]
    fn cubic_zero_is_flat() {
        let c = OpticalConfig::default();
        let m = make_cubic_mask(0.0, &c).unwrap();
        assert!(m.height_map.iter().all(|&h| h == 0.0));
        assert_eq!(m.provenance, Provenance::Flat);
    }

    #[test]
    fn cubic_is_odd() {
        let c = OpticalConfig::default();
        let m = make_cubic_mask(30.0, &c).unwrap();
        let g = c.mask_grid_size;
        for r in 0..g {
            for col in 0..g {
                let a = m.height_map[[r, col]];
                let b = m.height_map[[g - 1 - r, g - 1 - col]];
                assert!((a + b).abs() < 1e-20);
            }
        }
        // peak-to-valley phase is 2 alpha up to disk sampling
        let pv = m.peak_to_valley() * 2.0 * PI * 0.5 / c.wavelengths[GREEN];
        assert!(pv <= 60.0 + 1e-9 && pv > 55.0, "{pv}");
    }

    #[test]
    fn quantize_lattice_values() {
        let c = OpticalConfig::default();
        let m = make_cubic_mask(10.0, &c).unwrap();
        let q = quantize_height(&m, 200e-9, 10).unwrap();
        let disk = disk_mask(c.mask_grid_size);
        for (h, inside) in q.height_map.iter().zip(disk.iter()) {
            let k = h / 200e-9;
            assert!((k - k.round()).abs() < 1e-9);
            assert!((0.0..=9.0 + 1e-9).contains(&k));
            if !inside {
                assert_eq!(*h, 0.0);
            }
        }
        assert!(q.coefficients.is_empty());
        assert_eq!(q.provenance, Provenance::Cubic);
    }
}
