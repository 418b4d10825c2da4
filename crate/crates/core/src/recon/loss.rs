//! Combined texture and multi-scale disparity loss.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Number of disparity pyramid levels in the loss.
pub const PYRAMID_LEVELS: usize = 3;

/// Weights of the disparity pyramid terms and of the RGB term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: [f64; PYRAMID_LEVELS],
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: [1.0, 0.5, 0.25],
            gamma: 0.5,
        }
    }
}

impl LossWeights {
    /// Texture-only weighting: no disparity terms, unit RGB weight.
    pub fn rgb_only() -> Self {
        Self {
            alpha: [0.0; PYRAMID_LEVELS],
            gamma: 1.0,
        }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.alpha.iter().chain(std::iter::once(&self.gamma));
        if all.clone().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(format!(
                "loss weights must be finite and non-negative: alpha {:?}, gamma {}",
                self.alpha, self.gamma
            )));
        }
        if all.clone().all(|&v| v == 0.0) {
            return Err(Error::config("at least one loss weight must be nonzero"));
        }
        Ok(())
    }
}

/// Terms of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// `sum_i alpha_i * rmse_disparity[i]`.
    pub disparity: f64,
    /// `gamma * (rmse_left + rmse_right)`.
    pub rgb: f64,
    pub rmse_disparity: [f64; PYRAMID_LEVELS],
    pub rmse_left: f64,
    pub rmse_right: f64,
}

/// Root mean squared error over all samples.
pub fn rmse(estimate: &Array3<f64>, truth: &Array3<f64>) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(Error::usage(format!(
            "shape mismatch: {:?} vs {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let n = truth.len().max(1) as f64;
    let sum: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / n).sqrt())
}

/// 2x average pooling restricted to valid pixels; a cell is valid when any
/// of its inputs is.
pub fn pool_masked(grid: &Array2<f64>, valid: &Array2<bool>) -> (Array2<f64>, Array2<bool>) {
    let (h, w) = grid.dim();
    let (ph, pw) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Array2::zeros((ph, pw));
    let mut ok = Array2::from_elem((ph, pw), false);
    for y in 0..ph {
        for x in 0..pw {
            let (mut s, mut n) = (0.0, 0usize);
            for yy in 2 * y..(2 * y + 2).min(h) {
                for xx in 2 * x..(2 * x + 2).min(w) {
                    if valid[[yy, xx]] {
                        s += grid[[yy, xx]];
                        n += 1;
                    }
                }
            }
            if n > 0 {
                out[[y, x]] = s / n as f64;
                ok[[y, x]] = true;
            }
        }
    }
    (out, ok)
}

fn masked_rmse(a: &Array2<f64>, b: &Array2<f64>, valid: &Array2<bool>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for ((idx, &x), &y) in a.indexed_iter().zip(b.iter()) {
        if valid[idx] {
            s += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Disparity RMSE at full, 1/2 and 1/4 resolution over `valid` pixels.
pub fn disparity_pyramid_rmse(
    d_est: &Array2<f64>,
    d_true: &Array2<f64>,
    valid: Option<&Array2<bool>>,
) -> Result<[f64; PYRAMID_LEVELS]> {
    if d_est.dim() != d_true.dim() || valid.is_some_and(|v| v.dim() != d_true.dim()) {
        return Err(Error::usage("disparity maps and mask differ in shape"));
    }
    let mut est = d_est.clone();
    let mut tru = d_true.clone();
    let mut ok = valid.cloned().unwrap_or_else(|| Array2::from_elem(d_true.dim(), true));
    let mut out = [0.0; PYRAMID_LEVELS];
    for (i, slot) in out.iter_mut().enumerate() {
        if i > 0 {
            let (e, _) = pool_masked(&est, &ok);
            let (t, m) = pool_masked(&tru, &ok);
            est = e;
            tru = t;
            ok = m;
        }
        *slot = masked_rmse(&est, &tru, &ok);
    }
    Ok(out)
}

/// Weighted sum of disparity-pyramid and texture RMSE terms.
pub fn combined_loss(
    edof: (&Array3<f64>, &Array3<f64>),
    truth: (&Array3<f64>, &Array3<f64>),
    d_est: &Array2<f64>,
    d_true: &Array2<f64>,
    valid: Option<&Array2<bool>>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let rmse_disparity = disparity_pyramid_rmse(d_est, d_true, valid)?;
    Ok(combine(
        rmse_disparity,
        rmse(edof.0, truth.0)?,
        rmse(edof.1, truth.1)?,
        weights,
    ))
}

/// Assemble a breakdown from precomputed RMSE terms.
pub fn combine(
    rmse_disparity: [f64; PYRAMID_LEVELS],
    rmse_left: f64,
    rmse_right: f64,
    weights: &LossWeights,
) -> LossBreakdown {
    let disparity: f64 = weights.alpha.iter().zip(&rmse_disparity).map(|(a, r)| a * r).sum();
    let rgb = weights.gamma * (rmse_left + rmse_right);
    LossBreakdown {
        total: disparity + rgb,
        disparity,
        rgb,
        rmse_disparity,
        rmse_left,
        rmse_right,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rmse_example() {
        let w = LossWeights {
            alpha: [1.0, 0.0, 0.0],
            gamma: 0.5,
        };
        let b = combine([1.0, 1.0, 1.0], 1.0, 1.0, &w);
        assert_eq!(b.total, 2.0);
    }

    #[test]
    fn perfect_is_zero() {
        let t = Array3::from_elem((3, 8, 8), 0.4);
        let d = Array2::from_shape_fn((8, 8), |(y, x)| (y * x) as f64);
        let b = combined_loss((&t, &t), (&t, &t), &d, &d, None, &LossWeights::default()).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn constant_offset_survives_pooling() {
        let d = Array2::zeros((9, 7));
        let e = d.mapv(|v: f64| v + 2.0);
        let r = disparity_pyramid_rmse(&e, &d, None).unwrap();
        assert!(r.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights::rgb_only().validate().is_ok());
        let zero = LossWeights {
            alpha: [0.0; 3],
            gamma: 0.0,
        };
        assert!(zero.validate().is_err());
        assert!(LossWeights::default().with_gamma(-1.0).validate().is_err());
    }
}
