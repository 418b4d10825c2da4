//! Phase-mask optimization: full-pipeline loss evaluation, finite-difference
//! gradients, Adam, baseline masks and comparison tables.

mod adam;
mod compare;

use std::collections::HashMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use crate::recon::LossWeights;
pub use adam::{
    make_fisher_mask, optimize_coefficients, optimize_mask, AdamSettings, IterationLog, OptimizeReport, Sample,
    REPORT_HEADER,
};
pub use compare::{
    ablation_table, calibrated_threshold, compare_masks, edof_single_curve, gamma_ablation, AblationRow,
    CompareSettings, Comparison, ComparisonRow, GammaSetting, FLAT_F32, FLAT_F8,
};

use crate::error::{Error, Result};
use crate::fft::ConvGeometry;
use crate::optics::{OpticalConfig, PhaseMask, Provenance, PsfModel, PsfStack, ZernikeBasis, MASK_COEFFICIENTS};
use crate::par;
use crate::recon::{
    combined_loss, estimate_nsr, layered_with_spectra, match_stereo, matchable_mask, DisparityHint, LossBreakdown,
    MetricAccumulator, MetricReport, ReconOptions, SceneEstimate,
};
use crate::render::{add_noise_stream, quantize_disparity, render_with_spectra, CodedPair, KernelSpectra, Scene};

/// Default finite-difference step (m per coefficient).
pub const DEFAULT_FD_STEP: f64 = 20e-9;
/// Default Adam learning rate (m per coefficient).
pub const DEFAULT_LEARNING_RATE: f64 = 50e-9;

/// Everything but the mask that a loss evaluation depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub weights: LossWeights,
    pub sigma: f64,
    pub seed: u64,
    pub recon: ReconOptions,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            sigma: 0.02,
            seed: 0,
            recon: ReconOptions::default(),
        }
    }
}

/// Scene-averaged loss terms and pooled metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub report: MetricReport,
}

/// Noise seed of the `index`-th scene of an evaluation.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Render both views of a scene from precomputed spectra of every level.
pub fn render_pair_with_spectra(
    scene: &Scene,
    spectra: &KernelSpectra,
    config: &OpticalConfig,
    sigma: f64,
    seed: u64,
    mask_id: &str,
) -> Result<CodedPair> {
    let left = render_with_spectra(
        &scene.texture_left,
        &quantize_disparity(&scene.disparity_left, config),
        spectra,
    )?;
    let right = render_with_spectra(
        &scene.texture_right,
        &quantize_disparity(&scene.disparity_right, config),
        spectra,
    )?;
    Ok(CodedPair {
        coded_left: add_noise_stream(&left, sigma, seed, 0)?,
        coded_right: add_noise_stream(&right, sigma, seed, 1)?,
        noise_sigma: sigma,
        mask_id: mask_id.to_string(),
        scene_id: scene.id.clone(),
    })
}

struct SceneOutcome {
    loss: LossBreakdown,
    edof_left: ndarray::Array3<f64>,
    edof_right: ndarray::Array3<f64>,
    disparity: Array2<f64>,
    valid: Array2<bool>,
}

/// Evaluate a PSF stack: render, match, reconstruct and score every scene.
pub fn evaluate_stack(
    stack: &PsfStack,
    mask_id: &str,
    scenes: &[Scene],
    config: &OpticalConfig,
    settings: &EvalSettings,
) -> Result<Evaluation> {
    if scenes.is_empty() {
        return Err(Error::usage("evaluation needs at least one scene"));
    }
    settings.weights.validate()?;
    let all_levels: Vec<usize> = (0..stack.num_levels()).collect();
    let mut sizes: Vec<(usize, usize)> = scenes.iter().map(Scene::dim).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let spectra: HashMap<(usize, usize), KernelSpectra> = sizes
        .into_iter()
        .map(|(h, w)| {
            let geo = ConvGeometry::new(h, w, stack.kernel_size());
            ((h, w), KernelSpectra::new(stack, geo, &all_levels))
        })
        .collect();
    let indexed: Vec<(usize, &Scene)> = scenes.iter().enumerate().collect();
    let outcomes = par::map_slice(&indexed, |&(i, scene)| -> Result<SceneOutcome> {
        let sp = &spectra[&scene.dim()];
        let pair = render_pair_with_spectra(scene, sp, config, settings.sigma, scene_seed(settings.seed, i), mask_id)?;
        let st = match_stereo(
            &pair.coded_left,
            &pair.coded_right,
            config,
            settings.recon.block_radius,
            settings.recon.search_range(config),
        )?;
        let nsr = match settings.recon.nsr {
            Some(v) => (v, v),
            None => (
                estimate_nsr(&pair.coded_left, pair.noise_sigma),
                estimate_nsr(&pair.coded_right, pair.noise_sigma),
            ),
        };
        let hint = DisparityHint {
            left: &st.disparity,
            right: &st.disparity_right,
        };
        let (edof_left, edof_right) = layered_with_spectra(&pair, sp, config, hint, nsr)?;
        let valid = matchable_mask(&scene.disparity_left);
        let loss = combined_loss(
            (&edof_left, &edof_right),
            (&scene.texture_left, &scene.texture_right),
            &st.disparity,
            &scene.disparity_left,
            Some(&valid),
            &settings.weights,
        )?;
        Ok(SceneOutcome {
            loss,
            edof_left,
            edof_right,
            disparity: st.disparity,
            valid,
        })
    });
    let mut acc = MetricAccumulator::new(config);
    let mut sum = LossBreakdown::default();
    for (outcome, scene) in outcomes.into_iter().zip(scenes) {
        let o = outcome?;
        acc.add(&SceneEstimate {
            edof_left: &o.edof_left,
            edof_right: &o.edof_right,
            truth_left: &scene.texture_left,
            truth_right: &scene.texture_right,
            disparity: &o.disparity,
            truth_disparity_left: &scene.disparity_left,
            truth_disparity_right: &scene.disparity_right,
            valid: Some(&o.valid),
        })?;
        sum.disparity += o.loss.disparity;
        sum.rgb += o.loss.rgb;
        sum.rmse_left += o.loss.rmse_left;
        sum.rmse_right += o.loss.rmse_right;
        for (s, v) in sum.rmse_disparity.iter_mut().zip(o.loss.rmse_disparity) {
            *s += v;
        }
    }
    let n = scenes.len() as f64;
    let mut loss = LossBreakdown {
        total: 0.0,
        disparity: sum.disparity / n,
        rgb: sum.rgb / n,
        rmse_disparity: sum.rmse_disparity.map(|v| v / n),
        rmse_left: sum.rmse_left / n,
        rmse_right: sum.rmse_right / n,
    };
    loss.total = loss.disparity + loss.rgb;
    if !loss.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss for mask {mask_id}")));
    }
    Ok(Evaluation {
        loss,
        report: acc.finish(),
    })
}

/// Full-pipeline loss and metrics of a mask.
pub fn evaluate_mask(
    mask: &PhaseMask,
    scenes: &[Scene],
    config: &OpticalConfig,
    settings: &EvalSettings,
) -> Result<Evaluation> {
    let stack = PsfModel::new(config)?.stack(mask)?;
    evaluate_stack(&stack, mask.provenance.as_str(), scenes, config, settings)
}

/// Central-difference gradient of `objective`; coefficients listed in
/// `frozen` get exactly zero. The evaluations run in parallel.
pub fn fd_gradient_with<F>(coefficients: &[f64], step: f64, frozen: &[usize], objective: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let active: Vec<usize> = (0..coefficients.len()).filter(|j| !frozen.contains(j)).collect();
    let values = par::map_range(2 * active.len(), |k| {
        let j = active[k / 2];
        let mut c = coefficients.to_vec();
        c[j] += if k % 2 == 0 { step } else { -step };
        objective(&c)
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let mut grad = vec![0.0; coefficients.len()];
    for (i, &j) in active.iter().enumerate() {
        grad[j] = (values[2 * i] - values[2 * i + 1]) / (2.0 * step);
    }
    Ok(grad)
}

/// Mask built from Zernike coefficients.
pub fn mask_from_coefficients(basis: &ZernikeBasis, coefficients: &[f64], provenance: Provenance) -> PhaseMask {
    PhaseMask::from_coefficients(basis, coefficients.to_vec(), provenance)
}

/// Coefficients of a mask, projecting height-map-native masks onto the
/// basis when no coefficients are stored.
pub fn mask_coefficients(mask: &PhaseMask, basis: &ZernikeBasis) -> Vec<f64> {
    if mask.coefficients.len() == basis.count() {
        return mask.coefficients.clone();
    }
    let inside = basis.disk().iter().filter(|&&d| d).count().max(1) as f64;
    basis
        .maps()
        .iter()
        .map(|z| {
            let mut acc = 0.0;
            for ((h, z), &d) in mask.height_map.iter().zip(z.iter()).zip(basis.disk().iter()) {
                if d {
                    acc += h * z;
                }
            }
            acc / inside
        })
        .collect()
}

/// Finite-difference gradient of the full-pipeline loss with respect to the
/// mask's Zernike coefficients (piston frozen at zero gradient).
pub fn fd_gradient(
    mask: &PhaseMask,
    step: f64,
    scenes: &[Scene],
    config: &OpticalConfig,
    settings: &EvalSettings,
) -> Result<Vec<f64>> {
    let basis = ZernikeBasis::new(config.mask_grid_size, MASK_COEFFICIENTS)?;
    let model = PsfModel::new(config)?;
    let coeffs = mask_coefficients(mask, &basis);
    fd_gradient_with(&coeffs, step, &[0], |c| {
        let m = mask_from_coefficients(&basis, c, Provenance::Learned);
        let stack = model.stack(&m)?;
        Ok(evaluate_stack(&stack, "learned", scenes, config, settings)?.loss.total)
    })
}

/// Mask with Gaussian random coefficients of standard deviation `scale`
/// (piston left at zero).
pub fn random_mask(config: &OpticalConfig, scale: f64, seed: u64) -> Result<PhaseMask> {
    let basis = ZernikeBasis::new(config.mask_grid_size, MASK_COEFFICIENTS)?;
    let normal = Normal::new(0.0, scale).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c: Vec<f64> = (0..MASK_COEFFICIENTS).map(|_| normal.sample(&mut rng)).collect();
    c[0] = 0.0;
    Ok(mask_from_coefficients(&basis, &c, Provenance::Learned))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_quadratic_is_exact() {
        let g = fd_gradient_with(&[1.0, 2.0, -3.0], 0.1, &[0], |c| {
            Ok(c.iter().map(|v| v * v).sum::<f64>())
        })
        .unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 4.0).abs() < 1e-12);
        assert!((g[2] + 6.0).abs() < 1e-12);
        assert!(fd_gradient_with(&[1.0], 0.0, &[], |_| Ok(0.0)).is_err());
    }

    #[test]
    fn scene_seeds_differ() {
        assert_ne!(scene_seed(1, 0), scene_seed(1, 1));
        assert_eq!(scene_seed(5, 3), scene_seed(5, 3));
    }
}
