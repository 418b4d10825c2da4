//! Adam over Zernike coefficients with finite-difference gradients.

use std::fmt::Write as _;

use super::{evaluate_stack, fd_gradient_with, mask_coefficients, mask_from_coefficients, EvalSettings};
use crate::error::{Error, Result};
use crate::optics::{
    fisher_objective, OpticalConfig, PhaseMask, Provenance, PsfModel, ZernikeBasis, MASK_COEFFICIENTS,
};
use crate::recon::LossWeights;
use crate::render::Scene;

/// Coefficients whose gradient is forced to zero (piston).
const FROZEN: &[usize] = &[0];

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub iters: usize,
    /// Peak step size, meters per coefficient.
    pub lr: f64,
    pub fd_step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Cosine decay of the learning rate over the run.
    pub cosine_decay: bool,
    /// Scenes per iteration, cycled round-robin; 0 uses every scene.
    pub batch_size: usize,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            iters: 50,
            lr: super::DEFAULT_LEARNING_RATE,
            fd_step: super::DEFAULT_FD_STEP,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            cosine_decay: true,
            batch_size: 0,
        }
    }
}

impl AdamSettings {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::config("iters must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::config(format!("fd step must be positive, got {}", self.fd_step)));
        }
        Ok(())
    }

    /// Learning rate at iteration `t`.
    pub fn lr_at(&self, t: usize) -> f64 {
        if self.cosine_decay {
            0.5 * self.lr * (1.0 + (std::f64::consts::PI * t as f64 / self.iters as f64).cos())
        } else {
            self.lr
        }
    }
}

/// Objective value with its logged breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub loss: f64,
    pub loss_disp: f64,
    pub loss_rgb: f64,
    pub psnr_db: f64,
    pub epe_px: f64,
}

/// One logged optimizer iteration (values measured before the update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    pub loss: f64,
    pub loss_disp: f64,
    pub loss_rgb: f64,
    pub psnr_db: f64,
    pub epe_px: f64,
    /// L2 norm of the coefficient update (m).
    pub step_l2: f64,
    pub lr: f64,
}

pub const REPORT_HEADER: &str = "iter,loss,loss_disp,loss_rgb,psnr_db,epe_px,step_l2_m,lr_m";

/// Outcome of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub iterations: Vec<IterationLog>,
    /// Best mask seen, including the point reached after the last update.
    pub final_mask: PhaseMask,
    pub best_loss: f64,
    /// Iteration whose starting point was best; `iters` means the end point.
    pub best_iteration: usize,
    pub initial_loss: f64,
    pub end_loss: f64,
    pub config: OpticalConfig,
    pub weights: LossWeights,
    pub seed: u64,
}

impl OptimizeReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for it in &self.iterations {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                it.iter, it.loss, it.loss_disp, it.loss_rgb, it.psnr_db, it.epe_px, it.step_l2, it.lr
            );
        }
        s
    }
}

/// Result of [`optimize_coefficients`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRun {
    pub iterations: Vec<IterationLog>,
    pub best: Vec<f64>,
    pub best_loss: f64,
    pub best_iteration: usize,
    pub end: Vec<f64>,
    pub end_loss: f64,
}

fn check_sample(t: usize, c: &[f64], s: &Sample) -> Result<()> {
    if s.loss.is_finite() {
        return Ok(());
    }
    Err(Error::Numerical(format!(
        "iteration {t}: loss {} at coefficients {c:?}",
        s.loss
    )))
}

/// Minimize an objective with Adam on central-difference gradients.
///
/// `eval(None, c)` is the full objective, logged once per iteration and used
/// to pick the best point. `eval(Some(t), c)` is the (possibly mini-batch)
/// objective whose gradient drives iteration `t`; every evaluation within an
/// iteration sees the same `t`, so stochastic objectives can share noise.
pub fn optimize_coefficients<E>(init: &[f64], settings: &AdamSettings, eval: E) -> Result<CoefficientRun>
where
    E: Fn(Option<usize>, &[f64]) -> Result<Sample> + Sync + Send,
{
    settings.validate()?;
    let n = init.len();
    let mut c = init.to_vec();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut logs = Vec::with_capacity(settings.iters);
    let mut best = (f64::INFINITY, c.clone(), 0);
    for t in 0..settings.iters {
        let sample = eval(None, &c)?;
        check_sample(t, &c, &sample)?;
        if sample.loss < best.0 {
            best = (sample.loss, c.clone(), t);
        }
        let lr = settings.lr_at(t);
        let mut step_l2 = 0.0;
        if lr > 0.0 {
            let g = fd_gradient_with(&c, settings.fd_step, FROZEN, |x| eval(Some(t), x).map(|s| s.loss))?;
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "iteration {t}: non-finite gradient in coefficient {j} at {c:?}"
                )));
            }
            let k = (t + 1) as i32;
            let (b1t, b2t) = (1.0 - settings.beta1.powi(k), 1.0 - settings.beta2.powi(k));
            let mut sq = 0.0;
            for j in 0..n {
                if FROZEN.contains(&j) {
                    continue;
                }
                m[j] = settings.beta1 * m[j] + (1.0 - settings.beta1) * g[j];
                v[j] = settings.beta2 * v[j] + (1.0 - settings.beta2) * g[j] * g[j];
                let step = lr * (m[j] / b1t) / ((v[j] / b2t).sqrt() + settings.eps);
                c[j] -= step;
                sq += step * step;
            }
            step_l2 = sq.sqrt();
        }
        logs.push(IterationLog {
            iter: t,
            loss: sample.loss,
            loss_disp: sample.loss_disp,
            loss_rgb: sample.loss_rgb,
            psnr_db: sample.psnr_db,
            epe_px: sample.epe_px,
            step_l2,
            lr,
        });
    }
    let end = eval(None, &c)?;
    check_sample(settings.iters, &c, &end)?;
    if end.loss < best.0 {
        best = (end.loss, c.clone(), settings.iters);
    }
    Ok(CoefficientRun {
        iterations: logs,
        best: best.1,
        best_loss: best.0,
        best_iteration: best.2,
        end: c,
        end_loss: end.loss,
    })
}

/// Scenes whose gradient drives iteration `t`.
fn batch(scenes: &[Scene], batch_size: usize, t: usize) -> Vec<Scene> {
    let n = scenes.len();
    if batch_size == 0 || batch_size >= n {
        return scenes.to_vec();
    }
    (0..batch_size)
        .map(|k| scenes[(t * batch_size + k) % n].clone())
        .collect()
}

/// Optimize a mask's Zernike coefficients against the full-pipeline loss.
pub fn optimize_mask(
    init: &PhaseMask,
    scenes: &[Scene],
    config: &OpticalConfig,
    eval_settings: &EvalSettings,
    adam: &AdamSettings,
) -> Result<OptimizeReport> {
    if scenes.is_empty() {
        return Err(Error::usage("optimization needs at least one scene"));
    }
    init.check_grid(config)?;
    let basis = ZernikeBasis::new(config.mask_grid_size, MASK_COEFFICIENTS)?;
    let model = PsfModel::new(config)?;
    let start = mask_coefficients(init, &basis);
    let batches: Vec<Vec<Scene>> = (0..adam.iters).map(|t| batch(scenes, adam.batch_size, t)).collect();
    let run = optimize_coefficients(&start, adam, |t, c| {
        let mask = if c == start.as_slice() {
            init.clone()
        } else {
            mask_from_coefficients(&basis, c, Provenance::Learned)
        };
        let stack = model.stack(&mask)?;
        let set = t.map_or(scenes, |t| batches[t].as_slice());
        let e = evaluate_stack(&stack, "learned", set, config, eval_settings)?;
        Ok(Sample {
            loss: e.loss.total,
            loss_disp: e.loss.disparity,
            loss_rgb: e.loss.rgb,
            psnr_db: e.report.psnr_db,
            epe_px: e.report.epe_px,
        })
    })?;
    let final_mask = if run.best == start {
        init.clone()
    } else {
        mask_from_coefficients(&basis, &run.best, Provenance::Learned)
    };
    Ok(OptimizeReport {
        initial_loss: run.iterations[0].loss,
        iterations: run.iterations,
        final_mask,
        best_loss: run.best_loss,
        best_iteration: run.best_iteration,
        end_loss: run.end_loss,
        config: config.clone(),
        weights: eval_settings.weights,
        seed: eval_settings.seed,
    })
}

/// Mask maximizing the depth sensitivity of its PSF stack, found with the
/// same Adam loop (no imaging pipeline involved).
pub fn make_fisher_mask(config: &OpticalConfig, adam: &AdamSettings, init: Option<&PhaseMask>) -> Result<PhaseMask> {
    let basis = ZernikeBasis::new(config.mask_grid_size, MASK_COEFFICIENTS)?;
    let model = PsfModel::new(config)?;
    let start = match init {
        Some(m) => mask_coefficients(m, &basis),
        None => vec![0.0; MASK_COEFFICIENTS],
    };
    let run = optimize_coefficients(&start, adam, |_, c| {
        let mask = mask_from_coefficients(&basis, c, Provenance::Fisher);
        let f = fisher_objective(&model.stack(&mask)?)?;
        Ok(Sample {
            loss: -f,
            loss_disp: -f,
            loss_rgb: 0.0,
            psnr_db: f64::NAN,
            epe_px: f64::NAN,
        })
    })?;
    Ok(mask_from_coefficients(&basis, &run.best, Provenance::Fisher))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(_: Option<usize>, c: &[f64]) -> Result<Sample> {
        let loss = c.iter().skip(1).map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>();
        Ok(Sample {
            loss,
            loss_disp: loss,
            loss_rgb: 0.0,
            psnr_db: 0.0,
            epe_px: 0.0,
        })
    }

    #[test]
    fn descends_a_bowl() {
        let s = AdamSettings {
            iters: 200,
            lr: 0.05,
            fd_step: 1e-3,
            cosine_decay: false,
            ..Default::default()
        };
        let run = optimize_coefficients(&[5.0, 0.0, 3.0], &s, bowl).unwrap();
        assert_eq!(run.iterations.len(), 200);
        assert_eq!(run.best[0], 5.0);
        assert!(run.best_loss < 0.01, "{}", run.best_loss);
    }

    #[test]
    fn zero_lr_keeps_start() {
        let s = AdamSettings {
            iters: 3,
            lr: 0.0,
            ..Default::default()
        };
        let run = optimize_coefficients(&[0.0, 2.0], &s, bowl).unwrap();
        assert_eq!(run.end, vec![0.0, 2.0]);
        assert_eq!(run.best, vec![0.0, 2.0]);
    }

    #[test]
    fn non_finite_aborts() {
        let s = AdamSettings {
            iters: 2,
            ..Default::default()
        };
        let err = optimize_coefficients(&[0.0], &s, |_, _| {
            Ok(Sample {
                loss: f64::NAN,
                loss_disp: 0.0,
                loss_rgb: 0.0,
                psnr_db: 0.0,
                epe_px: 0.0,
            })
        })
        .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("iteration 0"));
    }

    #[test]
    fn cosine_schedule() {
        let s = AdamSettings {
            iters: 4,
            lr: 1.0,
            ..Default::default()
        };
        assert_eq!(s.lr_at(0), 1.0);
        assert!((s.lr_at(2) - 0.5).abs() < 1e-12);
    }
}
