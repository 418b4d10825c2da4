use crate::error::{Error, Result};

/// Index of each color channel's representative wavelength.
pub const RED: usize = 0;
pub const GREEN: usize = 1;
pub const BLUE: usize = 2;

/// Physical parameters of the stereo rig and its simulation grids.
///
/// Lengths are in meters, disparities in pixels of the pre-shifted
/// (reduced) convention.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConfig {
    pub focal_length: f64,
    pub f_number: f64,
    pub baseline: f64,
    pub sensor_pixel_pitch: f64,
    pub focus_distance: f64,
    /// Representative wavelengths of the R, G and B channels.
    pub wavelengths: [f64; 3],
    pub mask_grid_size: usize,
    pub mask_pitch: f64,
    pub refractive_index: f64,
    pub disparity_min: f64,
    pub disparity_max: f64,
    pub num_disparity_levels: usize,
    pub preshift: f64,
    pub psf_kernel_size: usize,
    /// Sub-samples per sensor pixel (per axis) used when integrating the PSF
    /// over the pixel area.
    pub psf_oversample: usize,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            focal_length: 0.050,
            f_number: 8.0,
            baseline: 0.022,
            sensor_pixel_pitch: 4.8e-6,
            focus_distance: 1.0,
            wavelengths: [610e-9, 530e-9, 470e-9],
            mask_grid_size: 71,
            mask_pitch: 88e-6,
            refractive_index: 1.5,
            disparity_min: 0.0,
            disparity_max: 192.0,
            num_disparity_levels: 21,
            preshift: 134.0,
            psf_kernel_size: 64,
            psf_oversample: 4,
        }
    }
}

impl OpticalConfig {
    /// Conventional lens at another f-number, everything else unchanged.
    pub fn with_f_number(&self, f_number: f64) -> Self {
        Self {
            f_number,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("focal_length", self.focal_length),
            ("baseline", self.baseline),
            ("sensor_pixel_pitch", self.sensor_pixel_pitch),
            ("focus_distance", self.focus_distance),
            ("mask_pitch", self.mask_pitch),
            ("wavelengths[0]", self.wavelengths[0]),
            ("wavelengths[1]", self.wavelengths[1]),
            ("wavelengths[2]", self.wavelengths[2]),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.f_number >= 1.0) {
            return Err(Error::config(format!("f_number must be >= 1, got {}", self.f_number)));
        }
        if !(self.refractive_index > 1.0) {
            return Err(Error::config(format!(
                "refractive_index must exceed 1, got {}",
                self.refractive_index
            )));
        }
        if self.mask_grid_size < 3 || self.mask_grid_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "mask_grid_size must be odd and >= 3, got {}",
                self.mask_grid_size
            )));
        }
        if self.num_disparity_levels < 2 {
            return Err(Error::config("num_disparity_levels must be >= 2"));
        }
        if !(self.disparity_min < self.disparity_max) {
            return Err(Error::config("disparity_min must be below disparity_max"));
        }
        if self.preshift < 0.0 {
            return Err(Error::config("preshift must be nonnegative"));
        }
        if self.psf_kernel_size < 2 || !self.psf_kernel_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "psf_kernel_size must be even, got {}",
                self.psf_kernel_size
            )));
        }
        if self.psf_oversample == 0 {
            return Err(Error::config("psf_oversample must be >= 1"));
        }
        if self.focus_distance <= self.focal_length {
            return Err(Error::config("focus_distance must exceed focal_length"));
        }
        let d0 = self.d0();
        if d0 < self.disparity_min || d0 > self.disparity_max {
            return Err(Error::config(format!(
                "in-focus disparity {d0} lies outside [{}, {}]",
                self.disparity_min, self.disparity_max
            )));
        }
        Ok(())
    }

    /// In-focus disparity after the pre-shift, rounded to whole pixels
    /// (95 px for the defaults).
    pub fn d0(&self) -> f64 {
        let raw = self.focal_length * self.baseline / (self.focus_distance * self.sensor_pixel_pitch);
        raw.round() - self.preshift
    }

    pub fn level_spacing(&self) -> f64 {
        (self.disparity_max - self.disparity_min) / (self.num_disparity_levels - 1) as f64
    }

    pub fn disparity_level(&self, i: usize) -> f64 {
        if i + 1 == self.num_disparity_levels {
            self.disparity_max
        } else {
            self.disparity_min + i as f64 * self.level_spacing()
        }
    }

    /// Evenly spaced disparity levels, both endpoints included.
    pub fn disparity_levels(&self) -> Vec<f64> {
        (0..self.num_disparity_levels)
            .map(|i| self.disparity_level(i))
            .collect()
    }

    /// Clear aperture diameter f/F#.
    pub fn aperture_diameter(&self) -> f64 {
        self.focal_length / self.f_number
    }

    /// Radius of the disk inscribed in the mask grid.
    pub fn mask_radius(&self) -> f64 {
        0.5 * self.mask_grid_size as f64 * self.mask_pitch
    }

    /// Radius of the hard-edged pupil: the lens stop, limited by the mask disk.
    pub fn pupil_radius(&self) -> f64 {
        (0.5 * self.aperture_diameter()).min(self.mask_radius())
    }

    pub fn check_disparity(&self, d: f64) -> Result<()> {
        if !(d >= self.disparity_min && d <= self.disparity_max) {
            return Err(Error::domain(format!(
                "disparity {d} outside [{}, {}]",
                self.disparity_min, self.disparity_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = OpticalConfig::default();
        c.validate().unwrap();
        assert_eq!(c.d0(), 95.0);
        let levels = c.disparity_levels();
        assert_eq!(levels.len(), 21);
        assert_eq!(levels[0], 0.0);
        assert_eq!(levels[20], 192.0);
        assert!((levels[1] - 9.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_even_mask_grid() {
        let c = OpticalConfig {
            mask_grid_size: 70,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_focus_outside_range() {
        let c = OpticalConfig {
            focus_distance: 3.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn f8_aperture_fills_mask() {
        let c = OpticalConfig::default();
        assert!((c.aperture_diameter() - 6.25e-3).abs() < 1e-12);
        assert!((c.pupil_radius() - c.mask_radius()).abs() < 1e-12);
        let f32 = c.with_f_number(32.0);
        assert!((f32.pupil_radius() - 0.78125e-3).abs() < 1e-12);
    }
}
