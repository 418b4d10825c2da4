//! Mask comparison tables, depth-of-field curves and loss-weight ablation.

use std::fmt::Write as _;

use super::{evaluate_stack, optimize_mask, AdamSettings, EvalSettings, Evaluation};
use crate::error::{Error, Result};
use crate::optics::{OpticalConfig, PhaseMask, PsfModel, PsfStack};
use crate::par;
use crate::recon::{
    dof_from_curve, edof_reconstruct, psnr, DofSpan, EdofMode, LossWeights, MetricReport, DOF_THRESHOLD_DB,
};
use crate::render::{interior, nearest_level, noise_sigma_for, render_pair_with_stack, NoiseReference, Scene};

/// Per-level PSNR of single-kernel EDOF reconstruction over uniform planes.
/// Each plane contributes to the level of its disparity; `margin` pixels at
/// each border are excluded.
pub fn edof_single_curve(
    stack: &PsfStack,
    planes: &[Scene],
    config: &OpticalConfig,
    sigma: f64,
    seed: u64,
    margin: usize,
) -> Result<Vec<f64>> {
    let indexed: Vec<(usize, &Scene)> = planes.iter().enumerate().collect();
    let scored = par::map_slice(&indexed, |&(i, scene)| -> Result<(usize, f64)> {
        let pair = render_pair_with_stack(scene, stack, config, sigma, super::scene_seed(seed, i), "")?;
        let (l, r) = edof_reconstruct(&pair, stack, config, EdofMode::Single, None, None)?;
        let score = 0.5
            * (psnr(&interior(&l, margin), &interior(&scene.texture_left, margin))?
                + psnr(&interior(&r, margin), &interior(&scene.texture_right, margin))?);
        let (level, _) = nearest_level(scene.disparity_left[[0, 0]], config);
        Ok((level, score))
    });
    let n = config.num_disparity_levels;
    let (mut sum, mut count) = (vec![0.0; n], vec![0usize; n]);
    for s in scored {
        let (l, v) = s?;
        sum[l] += v;
        count[l] += 1;
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect())
}

/// Mean of the finite values of several curves: a threshold that splits
/// the pooled PSNR range of the systems being compared.
pub fn calibrated_threshold(curves: &[&[f64]]) -> f64 {
    let vals: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    if vals.is_empty() {
        return DOF_THRESHOLD_DB;
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Comparison options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareSettings {
    pub eval: EvalSettings,
    /// PSNR threshold of the DOF spans; `None` calibrates it from the curves.
    pub threshold_db: Option<f64>,
}

/// One evaluated system.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub f_number: f64,
    pub sigma: f64,
    pub evaluation: Evaluation,
    /// Per-level PSNR used for the DOF span.
    pub curve: Vec<f64>,
    pub dof: DofSpan,
}

/// Rows of a comparison plus the threshold their DOF spans use.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub threshold_db: f64,
    pub levels: Vec<f64>,
}

pub const FLAT_F8: &str = "flat-F8";
pub const FLAT_F32: &str = "flat-F32";

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Depth span of a row relative to the flat F8 lens.
    pub fn dof_ratio(&self, name: &str) -> Option<f64> {
        let base = self.row(FLAT_F8)?.dof.depth_span;
        let span = self.row(name)?.dof.depth_span;
        Some(if base > 0.0 {
            span / base
        } else if span > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        })
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<16} {:>5} {:>7} {:>8} {:>6} {:>7} {:>7} {:>8} {:>7} {:>6}\n",
            "mask", "F#", "sigma", "PSNR", "SSIM", "EPE", "3px%", "loss", "DOF_m", "ratio"
        );
        for r in &self.rows {
            let m = &r.evaluation.report;
            let _ = writeln!(
                s,
                "{:<16} {:>5.1} {:>7.4} {:>8.2} {:>6.3} {:>7.3} {:>7.2} {:>8.4} {:>7.4} {:>6.2}",
                r.name,
                r.f_number,
                r.sigma,
                m.psnr_db,
                m.ssim,
                m.epe_px,
                m.bad3_pct,
                r.evaluation.loss.total,
                r.dof.depth_span,
                self.dof_ratio(&r.name).unwrap_or(f64::NAN)
            );
        }
        let _ = writeln!(s, "DOF threshold: {:.2} dB", self.threshold_db);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("mask,f_number,sigma,psnr_db,ssim,epe_px,bad3_pct,loss,dof_m,dof_ratio,threshold_db\n");
        for r in &self.rows {
            let m = &r.evaluation.report;
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.name,
                r.f_number,
                r.sigma,
                m.psnr_db,
                m.ssim,
                m.epe_px,
                m.bad3_pct,
                r.evaluation.loss.total,
                r.dof.depth_span,
                self.dof_ratio(&r.name).unwrap_or(f64::NAN),
                self.threshold_db
            );
        }
        s
    }

    /// Per-level PSNR and EPE curves of every row.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("level,disparity");
        for r in &self.rows {
            let _ = write!(s, ",{0}_psnr_db,{0}_epe_px", r.name);
        }
        s.push('\n');
        for (i, d) in self.levels.iter().enumerate() {
            let _ = write!(s, "{i},{d:?}");
            for r in &self.rows {
                let _ = write!(s, ",{:?},{:?}", r.curve[i], r.evaluation.report.per_disparity_epe[i]);
            }
            s.push('\n');
        }
        s
    }
}

/// Evaluate named masks plus conventional flat lenses at F8 and F32 (the
/// latter with noise scaled for equal exposure). When `curve_scenes` is
/// non-empty the DOF curves come from them, otherwise from `scenes`.
pub fn compare_masks(
    masks: &[(String, PhaseMask)],
    scenes: &[Scene],
    curve_scenes: &[Scene],
    config: &OpticalConfig,
    settings: &CompareSettings,
) -> Result<Comparison> {
    if masks.is_empty() && scenes.is_empty() {
        return Err(Error::usage("nothing to compare"));
    }
    let reference = NoiseReference {
        f_number: config.f_number,
        sigma: settings.eval.sigma,
        ..Default::default()
    };
    let mut systems: Vec<(String, PhaseMask, OpticalConfig)> = masks
        .iter()
        .map(|(n, m)| (n.clone(), m.clone(), config.clone()))
        .collect();
    for (name, f) in [(FLAT_F8, 8.0), (FLAT_F32, 32.0)] {
        systems.push((name.to_string(), PhaseMask::flat(config), config.with_f_number(f)));
    }
    let mut rows = Vec::with_capacity(systems.len());
    for (name, mask, cfg) in systems {
        let sigma = noise_sigma_for(cfg.f_number, 1.0, 1.0, &reference)?;
        let eval = EvalSettings { sigma, ..settings.eval };
        let stack = PsfModel::new(&cfg)?.stack(&mask)?;
        let evaluation = evaluate_stack(&stack, &name, scenes, &cfg, &eval)?;
        let curve = if curve_scenes.is_empty() {
            evaluation.report.per_disparity_psnr.clone()
        } else {
            evaluate_stack(&stack, &name, curve_scenes, &cfg, &eval)?
                .report
                .per_disparity_psnr
        };
        rows.push((name, cfg.f_number, sigma, evaluation, curve));
    }
    let threshold_db = settings
        .threshold_db
        .unwrap_or_else(|| calibrated_threshold(&rows.iter().map(|r| r.4.as_slice()).collect::<Vec<_>>()));
    let rows = rows
        .into_iter()
        .map(|(name, f_number, sigma, evaluation, curve)| {
            let dof = dof_from_curve(&curve, threshold_db, config)?;
            Ok(ComparisonRow {
                name,
                f_number,
                sigma,
                evaluation,
                curve,
                dof,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        rows,
        threshold_db,
        levels: config.disparity_levels(),
    })
}

/// One column of the loss-weight ablation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSetting {
    Gamma(f64),
    /// Texture loss only (all disparity weights zero).
    RgbOnly,
}

impl std::str::FromStr for GammaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rgb-only" | "inf" => Ok(GammaSetting::RgbOnly),
            other => match other.parse::<f64>() {
                Ok(g) if g >= 0.0 && g.is_finite() => Ok(GammaSetting::Gamma(g)),
                _ => Err(Error::usage(format!("gamma must be >= 0 or `rgb-only`, got `{other}`"))),
            },
        }
    }
}

impl std::fmt::Display for GammaSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaSetting::Gamma(g) => write!(f, "{g}"),
            GammaSetting::RgbOnly => f.write_str("rgb-only"),
        }
    }
}

impl GammaSetting {
    pub fn weights(&self, base: &LossWeights) -> LossWeights {
        match *self {
            GammaSetting::Gamma(g) => base.with_gamma(g),
            GammaSetting::RgbOnly => LossWeights::rgb_only(),
        }
    }
}

/// Metrics of the mask optimized under one weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: GammaSetting,
    pub weights: LossWeights,
    pub mask: PhaseMask,
    pub report: MetricReport,
}

/// Optimize one mask per weighting and evaluate each on `eval_scenes`.
pub fn gamma_ablation(
    gammas: &[GammaSetting],
    init: &PhaseMask,
    train_scenes: &[Scene],
    eval_scenes: &[Scene],
    config: &OpticalConfig,
    eval: &EvalSettings,
    adam: &AdamSettings,
) -> Result<Vec<AblationRow>> {
    if gammas.is_empty() {
        return Err(Error::usage("ablation needs at least one gamma"));
    }
    gammas
        .iter()
        .map(|&setting| {
            let weights = setting.weights(&eval.weights);
            let train = EvalSettings { weights, ..*eval };
            let report = optimize_mask(init, train_scenes, config, &train, adam)?;
            let stack = PsfModel::new(config)?.stack(&report.final_mask)?;
            let e = evaluate_stack(&stack, "learned", eval_scenes, config, &train)?;
            Ok(AblationRow {
                setting,
                weights,
                mask: report.final_mask,
                report: e.report,
            })
        })
        .collect()
}

/// Aligned text table of an ablation.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<10} {:>8} {:>6} {:>7} {:>7}\n",
        "gamma", "PSNR", "SSIM", "EPE", "3px%"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>8.2} {:>6.3} {:>7.3} {:>7.2}",
            r.setting.to_string(),
            r.report.psnr_db,
            r.report.ssim,
            r.report.epe_px,
            r.report.bad3_pct
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_parsing() {
        assert_eq!("rgb-only".parse::<GammaSetting>().unwrap(), GammaSetting::RgbOnly);
        assert_eq!("0.5".parse::<GammaSetting>().unwrap(), GammaSetting::Gamma(0.5));
        assert!("-1".parse::<GammaSetting>().is_err());
        let w = GammaSetting::RgbOnly.weights(&LossWeights::default());
        assert_eq!(w.alpha, [0.0; 3]);
    }

    #[test]
    fn threshold_is_pooled_mean() {
        let a = [30.0, f64::NAN, 20.0];
        let b = [40.0];
        assert_eq!(calibrated_threshold(&[&a, &b]), 30.0);
        assert_eq!(calibrated_threshold(&[]), DOF_THRESHOLD_DB);
    }
}
