//! Depth/disparity conversion and the SNR versus depth-of-field tradeoff.

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;

/// SNR of the reference exposure (F8, T = 1, L = 1, sigma = 1).
pub const REFERENCE_SNR_DB: f64 = 50.0;
/// F-number of the reference exposure.
pub const REFERENCE_F_NUMBER: f64 = 8.0;

/// Reduced disparity (pixels) of a point at depth `z`.
pub fn disparity_from_depth(z: f64, config: &OpticalConfig) -> Result<f64> {
    Ok(raw_disparity(z, config)? - config.preshift)
}

/// Disparity before the pre-shift, `f b / (z p)`.
pub fn raw_disparity(z: f64, config: &OpticalConfig) -> Result<f64> {
    if !(z > config.focal_length) {
        return Err(Error::domain(format!(
            "depth {z} m must exceed the focal length {} m",
            config.focal_length
        )));
    }
    Ok(config.focal_length * config.baseline / (z * config.sensor_pixel_pitch))
}

/// Depth (meters) of a reduced disparity.
pub fn depth_from_disparity(d_reduced: f64, config: &OpticalConfig) -> Result<f64> {
    let raw = d_reduced + config.preshift;
    if !(raw > 0.0) {
        return Err(Error::domain(format!("raw disparity {raw} px must be positive")));
    }
    Ok(config.focal_length * config.baseline / (raw * config.sensor_pixel_pitch))
}

/// Image SNR in dB: `20 log10(K L T f^2 / (sigma F#^2))`, with `K` fixed so
/// the reference exposure gives [`REFERENCE_SNR_DB`].
pub fn snr_db(light: f64, exposure: f64, f_number: f64, sigma_tot: f64, config: &OpticalConfig) -> Result<f64> {
    for (name, v) in [
        ("light", light),
        ("exposure", exposure),
        ("f_number", f_number),
        ("sigma_tot", sigma_tot),
    ] {
        if !(v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let f2 = config.focal_length * config.focal_length;
    let k = 10f64.powf(REFERENCE_SNR_DB / 20.0) * REFERENCE_F_NUMBER * REFERENCE_F_NUMBER / f2;
    // grouped so that (c^2 T, c F#) cancels to the last bit for power-of-two c
    let throughput = exposure / (f_number * f_number);
    Ok(20.0 * (k * light * f2 * throughput / sigma_tot).log10())
}

/// Depth-of-field limits for a circle of confusion `coc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthOfField {
    pub near: f64,
    /// `f64::INFINITY` beyond the hyperfocal distance.
    pub far: f64,
    pub dof: f64,
    /// `2 z0^2 F# c / f^2`.
    pub approx: f64,
}

/// Thin-lens depth of field at the configured focus distance and f-number:
/// `z_{n,f} = z0 f^2 / (f^2 +- F# c (z0 - f))`.
pub fn depth_of_field(config: &OpticalConfig, coc: f64) -> Result<DepthOfField> {
    depth_of_field_at(config, config.f_number, coc)
}

pub fn depth_of_field_at(config: &OpticalConfig, f_number: f64, coc: f64) -> Result<DepthOfField> {
    if !(coc > 0.0) {
        return Err(Error::domain(format!(
            "circle of confusion must be positive, got {coc}"
        )));
    }
    let f = config.focal_length;
    let z0 = config.focus_distance;
    let f2 = f * f;
    let spread = f_number * coc * (z0 - f);
    let near = z0 * f2 / (f2 + spread);
    let far = if f2 > spread {
        z0 * f2 / (f2 - spread)
    } else {
        f64::INFINITY
    };
    Ok(DepthOfField {
        near,
        far,
        dof: far - near,
        approx: approx_depth_of_field(z0, f_number, coc, f),
    })
}

/// `2 z0^2 F# c / f^2`.
pub fn approx_depth_of_field(z0: f64, f_number: f64, coc: f64, focal_length: f64) -> f64 {
    2.0 * z0 * z0 * f_number * coc / (focal_length * focal_length)
}

/// One sample of an equal-SNR curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub exposure: f64,
    pub f_number: f64,
    pub snr_db: f64,
    pub dof_near: f64,
    pub dof_far: f64,
    pub dof: f64,
    pub dof_approx: f64,
}

/// F-number that reaches `snr_target` at exposure `t` (unit light and noise).
pub fn f_number_for_snr(snr_target: f64, exposure: f64, config: &OpticalConfig) -> Result<f64> {
    if !(exposure > 0.0) {
        return Err(Error::domain(format!("exposure must be positive, got {exposure}")));
    }
    // snr_db is affine in 20 log10(T / F#^2)
    let at_ref = snr_db(1.0, 1.0, REFERENCE_F_NUMBER, 1.0, config)?;
    let gain = 10f64.powf((at_ref - snr_target) / 20.0);
    Ok(REFERENCE_F_NUMBER * (exposure * gain).sqrt())
}

/// Equal-SNR curve over `exposures`: F# grows as the square root of T.
pub fn tradeoff_curve(
    config: &OpticalConfig,
    snr_target: f64,
    exposures: &[f64],
    coc: f64,
) -> Result<Vec<TradeoffPoint>> {
    if exposures.is_empty() {
        return Err(Error::usage("tradeoff curve needs at least one exposure"));
    }
    exposures
        .iter()
        .map(|&t| {
            let f_number = f_number_for_snr(snr_target, t, config)?;
            let dof = depth_of_field_at(config, f_number, coc)?;
            Ok(TradeoffPoint {
                exposure: t,
                f_number,
                snr_db: snr_db(1.0, t, f_number, 1.0, config)?,
                dof_near: dof.near,
                dof_far: dof.far,
                dof: dof.dof,
                dof_approx: dof.approx,
            })
        })
        .collect()
}

/// CSV header of [`tradeoff_csv`].
pub const TRADEOFF_HEADER: &str = "exposure_s,f_number,snr_db,dof_near_m,dof_far_m,dof_m,dof_approx_m";

pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from(TRADEOFF_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.exposure, p.f_number, p.snr_db, p.dof_near, p.dof_far, p.dof, p.dof_approx
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focus_disparity() {
        let c = OpticalConfig::default();
        let d = disparity_from_depth(1.0, &c).unwrap();
        assert!((d + 134.0 - 229.1667).abs() < 1e-3);
        assert!((d - 95.1667).abs() < 1e-3);
    }

    #[test]
    fn inverse_endpoints() {
        let c = OpticalConfig::default();
        let raw = 0.05 * 0.022 / 4.8e-6;
        assert!((depth_from_disparity(0.0, &c).unwrap() - raw / 134.0).abs() < 1e-12);
        assert!((depth_from_disparity(192.0, &c).unwrap() - raw / 326.0).abs() < 1e-12);
        assert!(depth_from_disparity(-134.0, &c).is_err());
        assert!(disparity_from_depth(0.04, &c).is_err());
    }

    #[test]
    fn snr_reference_and_steps() {
        let c = OpticalConfig::default();
        let r = snr_db(1.0, 1.0, 8.0, 1.0, &c).unwrap();
        assert!((r - 50.0).abs() < 1e-12);
        let doubled = snr_db(1.0, 1.0, 16.0, 1.0, &c).unwrap();
        assert!((doubled - r + 12.0412).abs() < 1e-4);
        let longer = snr_db(1.0, 4.0, 8.0, 1.0, &c).unwrap();
        assert!((longer - r - 12.0412).abs() < 1e-4);
    }

    #[test]
    fn hyperfocal_reports_infinity() {
        let c = OpticalConfig::default();
        let d = depth_of_field_at(&c, 32.0, 1e-3).unwrap();
        assert!(d.far.is_infinite());
        assert!(depth_of_field(&c, 0.0).is_err());
    }

    #[test]
    fn empty_curve_rejected() {
        assert!(tradeoff_curve(&OpticalConfig::default(), 50.0, &[], 4.8e-6).is_err());
    }
}
