//! Classical reconstruction: Wiener EDOF texture recovery, ZNCC stereo
//! matching, evaluation metrics and the combined training loss.

mod loss;
mod metrics;
mod stereo;
mod wiener;

use std::fmt::Write as _;

use ndarray::{Array2, Array3};

pub use loss::{
    combine, combined_loss, disparity_pyramid_rmse, pool_masked, rmse, LossBreakdown, LossWeights, PYRAMID_LEVELS,
};
pub use metrics::{
    bad3, crop_border, epe, masked_disparity_errors, matchable_mask, mse, psnr, psnr_from_mse, ssim, ssim_channel,
    DisparityErrors, BAD_THRESHOLD_PX, PSNR_CAP_DB, SSIM_SIGMA, SSIM_WINDOW,
};
pub use stereo::{luminance, match_stereo, StereoResult, DEFAULT_BLOCK_RADIUS, LR_TOLERANCE};
pub use wiener::{
    edof_reconstruct, estimate_nsr, layered_with_spectra, wiener_channel, wiener_deconvolve, DisparityHint, EdofMode,
    NSR_FLOOR,
};

use crate::error::{Error, Result};
use crate::geometry::depth_from_disparity;
use crate::optics::{OpticalConfig, PsfStack};
use crate::render::{quantize_disparity, CodedPair};

/// Default PSNR threshold for depth-of-field spans.
pub const DOF_THRESHOLD_DB: f64 = 30.0;

/// Textures and disparity recovered from a coded pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub edof_left: Array3<f64>,
    pub edof_right: Array3<f64>,
    /// Left-view disparity, reduced convention.
    pub disparity: Array2<f64>,
    pub disparity_right: Array2<f64>,
    pub confidence: Array2<f64>,
}

/// Settings of the classical reconstruction pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconOptions {
    pub block_radius: usize,
    /// Search range; `None` uses the configured maximum disparity.
    pub max_disp: Option<usize>,
    pub mode: EdofMode,
    pub nsr: Option<f64>,
}

impl Default for ReconOptions {
    fn default() -> Self {
        Self {
            block_radius: DEFAULT_BLOCK_RADIUS,
            max_disp: None,
            mode: EdofMode::Layered,
            nsr: None,
        }
    }
}

impl ReconOptions {
    pub fn search_range(&self, config: &OpticalConfig) -> usize {
        self.max_disp
            .unwrap_or_else(|| config.disparity_max.ceil().max(0.0) as usize)
    }
}

/// Stereo matching followed by EDOF reconstruction guided by the estimate.
pub fn reconstruct(
    pair: &CodedPair,
    stack: &PsfStack,
    config: &OpticalConfig,
    options: &ReconOptions,
) -> Result<ReconResult> {
    let st = match_stereo(
        &pair.coded_left,
        &pair.coded_right,
        config,
        options.block_radius,
        options.search_range(config),
    )?;
    let hint = DisparityHint {
        left: &st.disparity,
        right: &st.disparity_right,
    };
    let (edof_left, edof_right) = edof_reconstruct(pair, stack, config, options.mode, Some(hint), options.nsr)?;
    Ok(ReconResult {
        edof_left,
        edof_right,
        disparity: st.disparity,
        disparity_right: st.disparity_right,
        confidence: st.confidence,
    })
}

/// Texture and disparity metrics with per-disparity-level curves.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// PSNR averaged over both views and all scenes.
    pub psnr_db: f64,
    pub psnr_left_db: f64,
    pub psnr_right_db: f64,
    pub ssim: f64,
    pub epe_px: f64,
    pub bad3_pct: f64,
    pub levels: Vec<f64>,
    /// NaN at levels without ground-truth pixels.
    pub per_disparity_psnr: Vec<f64>,
    pub per_disparity_epe: Vec<f64>,
}

impl MetricReport {
    /// Flat `key = value` listing.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "psnr_db = {}", self.psnr_db);
        let _ = writeln!(s, "psnr_left_db = {}", self.psnr_left_db);
        let _ = writeln!(s, "psnr_right_db = {}", self.psnr_right_db);
        let _ = writeln!(s, "ssim = {}", self.ssim);
        let _ = writeln!(s, "epe_px = {}", self.epe_px);
        let _ = writeln!(s, "bad3_pct = {}", self.bad3_pct);
        s
    }

    /// Per-level curves as CSV.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("level,disparity,psnr_db,epe_px\n");
        for (i, d) in self.levels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{d},{},{}",
                self.per_disparity_psnr[i], self.per_disparity_epe[i]
            );
        }
        s
    }
}

/// Pools metrics over scenes.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    config: OpticalConfig,
    levels: Vec<f64>,
    psnr_left: Vec<f64>,
    psnr_right: Vec<f64>,
    ssim: Vec<f64>,
    err_sum: f64,
    bad: usize,
    disp_count: usize,
    level_se: Vec<f64>,
    level_samples: Vec<usize>,
    level_err: Vec<f64>,
    level_pixels: Vec<usize>,
}

/// One scene's reconstruction paired with its ground truth.
pub struct SceneEstimate<'a> {
    pub edof_left: &'a Array3<f64>,
    pub edof_right: &'a Array3<f64>,
    pub truth_left: &'a Array3<f64>,
    pub truth_right: &'a Array3<f64>,
    pub disparity: &'a Array2<f64>,
    pub truth_disparity_left: &'a Array2<f64>,
    pub truth_disparity_right: &'a Array2<f64>,
    /// Left pixels counted in the disparity metrics.
    pub valid: Option<&'a Array2<bool>>,
}

impl MetricAccumulator {
    pub fn new(config: &OpticalConfig) -> Self {
        let levels = config.disparity_levels();
        let n = levels.len();
        Self {
            config: config.clone(),
            levels,
            psnr_left: Vec::new(),
            psnr_right: Vec::new(),
            ssim: Vec::new(),
            err_sum: 0.0,
            bad: 0,
            disp_count: 0,
            level_se: vec![0.0; n],
            level_samples: vec![0; n],
            level_err: vec![0.0; n],
            level_pixels: vec![0; n],
        }
    }

    pub fn add(&mut self, e: &SceneEstimate<'_>) -> Result<()> {
        self.psnr_left.push(psnr(e.edof_left, e.truth_left)?);
        self.psnr_right.push(psnr(e.edof_right, e.truth_right)?);
        self.ssim
            .push(0.5 * (ssim(e.edof_left, e.truth_left)? + ssim(e.edof_right, e.truth_right)?));
        let errs = masked_disparity_errors(e.disparity, e.truth_disparity_left, e.valid)?;
        self.err_sum += errs.epe * errs.count as f64;
        self.bad += (errs.bad3_pct * errs.count as f64 / 100.0).round() as usize;
        self.disp_count += errs.count;

        for (est, truth, disp) in [
            (e.edof_left, e.truth_left, e.truth_disparity_left),
            (e.edof_right, e.truth_right, e.truth_disparity_right),
        ] {
            let labels = quantize_disparity(disp, &self.config);
            for ((c, y, x), &v) in est.indexed_iter() {
                let l = labels.labels()[[y, x]] as usize;
                let d = v - truth[[c, y, x]];
                self.level_se[l] += d * d;
                self.level_samples[l] += 1;
            }
        }
        let labels = quantize_disparity(e.truth_disparity_left, &self.config);
        for ((idx, &d), &t) in e.disparity.indexed_iter().zip(e.truth_disparity_left.iter()) {
            if e.valid.is_some_and(|m| !m[idx]) {
                continue;
            }
            let l = labels.labels()[idx] as usize;
            self.level_err[l] += (d - t).abs();
            self.level_pixels[l] += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> MetricReport {
        let mean = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let (pl, pr) = (mean(&self.psnr_left), mean(&self.psnr_right));
        let n = self.disp_count.max(1) as f64;
        MetricReport {
            psnr_db: 0.5 * (pl + pr),
            psnr_left_db: pl,
            psnr_right_db: pr,
            ssim: mean(&self.ssim),
            epe_px: self.err_sum / n,
            bad3_pct: 100.0 * self.bad as f64 / n,
            levels: self.levels.clone(),
            per_disparity_psnr: self
                .level_se
                .iter()
                .zip(&self.level_samples)
                .map(|(&se, &k)| if k == 0 { f64::NAN } else { psnr_from_mse(se / k as f64) })
                .collect(),
            per_disparity_epe: self
                .level_err
                .iter()
                .zip(&self.level_pixels)
                .map(|(&s, &k)| if k == 0 { f64::NAN } else { s / k as f64 })
                .collect(),
        }
    }
}

/// Largest contiguous disparity span whose PSNR clears a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofSpan {
    /// First and last level of the span; `None` when no level qualifies.
    pub levels: Option<(usize, usize)>,
    pub disparity_low: f64,
    pub disparity_high: f64,
    pub disparity_span: f64,
    /// Depths bounding the span (far end first) and their difference.
    pub depth_far: f64,
    pub depth_near: f64,
    pub depth_span: f64,
}

/// Depth-of-field span of a per-level PSNR curve. Each level covers half a
/// level spacing on either side, clipped to the configured disparity range.
pub fn dof_from_curve(per_disparity_psnr: &[f64], threshold_db: f64, config: &OpticalConfig) -> Result<DofSpan> {
    let levels = config.disparity_levels();
    if per_disparity_psnr.len() != levels.len() {
        return Err(Error::usage(format!(
            "curve has {} points for {} disparity levels",
            per_disparity_psnr.len(),
            levels.len()
        )));
    }
    let half = 0.5 * config.level_spacing();
    let (lo_d, hi_d) = (config.disparity_min, config.disparity_max);
    let mut best: Option<(usize, usize, f64)> = None;
    let mut start = None;
    for i in 0..=levels.len() {
        let ok = i < levels.len() && per_disparity_psnr[i] >= threshold_db;
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let a = (levels[s] - half).max(lo_d);
                let b = (levels[i - 1] + half).min(hi_d);
                if best.is_none_or(|(_, _, span)| b - a > span) {
                    best = Some((s, i - 1, b - a));
                }
                start = None;
            }
            _ => {}
        }
    }
    match best {
        None => Ok(DofSpan {
            levels: None,
            disparity_low: f64::NAN,
            disparity_high: f64::NAN,
            disparity_span: 0.0,
            depth_far: f64::NAN,
            depth_near: f64::NAN,
            depth_span: 0.0,
        }),
        Some((s, e, span)) => {
            let a = (levels[s] - half).max(lo_d);
            let b = (levels[e] + half).min(hi_d);
            let far = depth_from_disparity(a, config)?;
            let near = depth_from_disparity(b, config)?;
            Ok(DofSpan {
                levels: Some((s, e)),
                disparity_low: a,
                disparity_high: b,
                disparity_span: span,
                depth_far: far,
                depth_near: near,
                depth_span: far - near,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_full_and_empty() {
        let c = OpticalConfig::default();
        let full = dof_from_curve(&[40.0; 21], 30.0, &c).unwrap();
        assert_eq!(full.levels, Some((0, 20)));
        assert_eq!(full.disparity_low, 0.0);
        assert_eq!(full.disparity_high, 192.0);
        assert!((full.depth_far - 1.71).abs() < 0.01);
        assert!((full.depth_near - 0.703).abs() < 0.01);
        let none = dof_from_curve(&[10.0; 21], 30.0, &c).unwrap();
        assert_eq!(none.disparity_span, 0.0);
        assert_eq!(none.depth_span, 0.0);
    }

    #[test]
    fn dof_picks_longest_run() {
        let c = OpticalConfig::default();
        let mut curve = vec![20.0; 21];
        curve[2] = 35.0;
        for v in &mut curve[8..13] {
            *v = 31.0;
        }
        let s = dof_from_curve(&curve, 30.0, &c).unwrap();
        assert_eq!(s.levels, Some((8, 12)));
        assert!((s.disparity_span - 5.0 * c.level_spacing()).abs() < 1e-9);
    }
}
