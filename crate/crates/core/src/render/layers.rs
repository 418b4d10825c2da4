use ndarray::Array2;

use crate::optics::OpticalConfig;

/// Disparity map quantized onto the configured levels.
///
/// Stored as one level index per pixel; the binary layer masks are derived
/// on demand, so they partition the image by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMasks {
    labels: Array2<u16>,
    levels: Vec<f64>,
    clamped: usize,
}

impl LayerMasks {
    pub fn labels(&self) -> &Array2<u16> {
        &self.labels
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Pixels whose disparity fell outside the range and were clamped.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn clamped_fraction(&self) -> f64 {
        self.clamped as f64 / self.labels.len().max(1) as f64
    }

    /// Binary mask of layer `level`.
    pub fn mask(&self, level: usize) -> Array2<f64> {
        self.labels.mapv(|l| if l as usize == level { 1.0 } else { 0.0 })
    }

    /// Pixel count per layer.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.levels.len()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Indices of the layers that contain at least one pixel.
    pub fn occupied(&self) -> Vec<usize> {
        self.counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Single-layer labelling at `level`.
    pub fn uniform(height: usize, width: usize, level: usize, levels: Vec<f64>) -> Self {
        Self {
            labels: Array2::from_elem((height, width), level as u16),
            levels,
            clamped: 0,
        }
    }
}

/// Nearest configured level for disparity `d` (ties go to the smaller level),
/// with out-of-range values clamped. Returns `(index, clamped)`.
pub fn nearest_level(d: f64, config: &OpticalConfig) -> (usize, bool) {
    let n = config.num_disparity_levels;
    if !(d > config.disparity_min) {
        return (0, d < config.disparity_min || d.is_nan());
    }
    if d >= config.disparity_max {
        return (n - 1, d > config.disparity_max);
    }
    let step = config.level_spacing();
    let below = (((d - config.disparity_min) / step).floor() as usize).min(n - 2);
    let lo = config.disparity_level(below);
    let hi = config.disparity_level(below + 1);
    // tolerance absorbs the rounding of user-computed midpoints
    let tie = 1e-9 * step;
    if d - lo <= hi - d + tie {
        (below, false)
    } else {
        (below + 1, false)
    }
}

/// Assign every pixel to its nearest disparity level.
pub fn quantize_disparity(disp: &Array2<f64>, config: &OpticalConfig) -> LayerMasks {
    let mut clamped = 0;
    let labels = disp.mapv(|d| {
        let (idx, c) = nearest_level(d, config);
        clamped += c as usize;
        idx as u16
    });
    LayerMasks {
        labels,
        levels: config.disparity_levels(),
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_disparity_single_layer() {
        let c = OpticalConfig::default();
        let l = quantize_disparity(&Array2::from_elem((4, 5), 96.0), &c);
        assert_eq!(l.occupied(), vec![10]);
    }

    #[test]
    fn midpoint_goes_down() {
        let c = OpticalConfig::default();
        for i in 0..20 {
            let mid = 0.5 * (c.disparity_level(i) + c.disparity_level(i + 1));
            assert_eq!(nearest_level(mid, &c).0, i, "midpoint after level {i}");
        }
        assert_eq!(nearest_level(4.8, &c), (0, false));
        assert_eq!(nearest_level(4.81, &c), (1, false));
    }

    #[test]
    fn out_of_range_clamped_and_counted() {
        let c = OpticalConfig::default();
        let d = Array2::from_shape_vec((1, 4), vec![-3.0, 10.0, 192.0, 250.0]).unwrap();
        let l = quantize_disparity(&d, &c);
        assert_eq!(l.clamped(), 2);
        assert_eq!(l.labels().as_slice().unwrap(), &[0, 1, 20, 20]);
    }
}
