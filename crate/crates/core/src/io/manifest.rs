//! Scene manifests: one scene per line as `key=value` tokens.
//!
//! ```text
//! # id is optional
//! id=street left_rgb=l.png right_rgb=r.png left_disp=l.pfm right_disp=r.pfm disp_scale=1 disp_offset=-134
//! ```
//!
//! Disparities become `raw * disp_scale + disp_offset`. A negative offset is
//! a pre-shift: the right view (texture and disparity map) is translated
//! right by `-disp_offset` pixels so that reduced disparities pair pixels of
//! the shifted images.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pfm::read_disparity_pfm;
use super::png::{read_gray_raw, read_rgb};
use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::par;
use crate::render::{shift_right, Scene};

/// Training patch size used by the optional crop.
pub const PATCH_SIZE: (usize, usize) = (384, 768);
/// Scenes with a larger fraction of out-of-range disparities are rejected.
pub const MAX_CLAMP_FRACTION: f64 = 0.5;

/// One manifest line.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub left_rgb: PathBuf,
    pub right_rgb: PathBuf,
    pub left_disp: PathBuf,
    pub right_disp: PathBuf,
    pub disp_scale: f64,
    pub disp_offset: f64,
}

/// Cropping applied while loading.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// `(height, width)` of the crop; `None` keeps full frames.
    pub crop: Option<(usize, usize)>,
    /// Seed of per-scene crop offsets; `None` crops the center.
    pub crop_seed: Option<u64>,
}

/// Parse manifest text; relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut id = None;
        let mut paths: [Option<PathBuf>; 4] = Default::default();
        let (mut scale, mut offset) = (1.0, 0.0);
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("manifest line {line_no}: expected key=value, got `{tok}`")))?;
            let number = || {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Data(format!("manifest line {line_no}: `{k}` needs a number, got `{v}`")))
            };
            let slot = match k {
                "id" => {
                    id = Some(v.to_string());
                    continue;
                }
                "disp_scale" => {
                    scale = number()?;
                    continue;
                }
                "disp_offset" => {
                    offset = number()?;
                    continue;
                }
                "left_rgb" => 0,
                "right_rgb" => 1,
                "left_disp" => 2,
                "right_disp" => 3,
                other => {
                    return Err(Error::Data(format!("manifest line {line_no}: unknown key `{other}`")));
                }
            };
            let p = PathBuf::from(v);
            paths[slot] = Some(if p.is_relative() { base.join(p) } else { p });
        }
        let names = ["left_rgb", "right_rgb", "left_disp", "right_disp"];
        let mut resolved = Vec::with_capacity(4);
        for (p, name) in paths.into_iter().zip(names) {
            resolved.push(p.ok_or_else(|| Error::Data(format!("manifest line {line_no}: missing `{name}`")))?);
        }
        let mut it = resolved.into_iter();
        entries.push(ManifestEntry {
            id: id.unwrap_or_else(|| format!("scene{}", entries.len())),
            left_rgb: it.next().unwrap(),
            right_rgb: it.next().unwrap(),
            left_disp: it.next().unwrap(),
            right_disp: it.next().unwrap(),
            disp_scale: scale,
            disp_offset: offset,
        });
    }
    Ok(entries)
}

fn read_disparity(path: &Path, scale: f64, offset: f64) -> Result<Array2<f64>> {
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    let raw = if is_pfm {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        read_disparity_pfm(&bytes).map_err(|e| match e {
            Error::Parse { offset, message } => Error::Data(format!("{}: byte {offset}: {message}", path.display())),
            other => other,
        })?
    } else {
        read_gray_raw(path)?
    };
    Ok(raw.mapv(|v| v * scale + offset))
}

fn crop_window(h: usize, w: usize, crop: (usize, usize), seed: Option<u64>, index: usize) -> Result<(usize, usize)> {
    let (ch, cw) = crop;
    if ch > h || cw > w {
        return Err(Error::Data(format!("crop {ch}x{cw} exceeds the {h}x{w} frame")));
    }
    Ok(match seed {
        None => ((h - ch) / 2, (w - cw) / 2),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            (rng.random_range(0..=h - ch), rng.random_range(0..=w - cw))
        }
    })
}

/// Load one manifest entry into a validated scene.
pub fn load_entry(entry: &ManifestEntry, index: usize, config: &OpticalConfig, options: &LoadOptions) -> Result<Scene> {
    let texture_left = read_rgb(&entry.left_rgb)?;
    let mut texture_right = read_rgb(&entry.right_rgb)?;
    let disparity_left = read_disparity(&entry.left_disp, entry.disp_scale, entry.disp_offset)?;
    let mut disparity_right = read_disparity(&entry.right_disp, entry.disp_scale, entry.disp_offset)?;
    if entry.disp_offset < 0.0 {
        let shift = (-entry.disp_offset).round() as usize;
        if shift >= texture_right.dim().2 {
            return Err(Error::Data(format!(
                "scene {}: pre-shift {shift} px exceeds the image width",
                entry.id
            )));
        }
        for mut ch in texture_right.axis_iter_mut(Axis(0)) {
            let shifted = shift_right(&ch.to_owned(), shift);
            ch.assign(&shifted);
        }
        disparity_right = shift_right(&disparity_right, shift);
    }
    let mut scene = Scene {
        id: entry.id.clone(),
        texture_left,
        texture_right,
        disparity_left,
        disparity_right,
    };
    if let Some(crop) = options.crop {
        let (h, w) = scene.disparity_left.dim();
        let shapes_ok = scene.texture_left.dim() == (3, h, w)
            && scene.texture_right.dim() == (3, h, w)
            && scene.disparity_right.dim() == (h, w);
        if !shapes_ok {
            return Err(Error::Data(format!(
                "rejected scene {}: view shapes disagree",
                entry.id
            )));
        }
        let (y, x) = crop_window(h, w, crop, options.crop_seed, index)
            .map_err(|e| Error::Data(format!("scene {}: {e}", entry.id)))?;
        let (ch, cw) = crop;
        let tex = |t: &Array3<f64>| t.slice(s![.., y..y + ch, x..x + cw]).to_owned();
        let grid = |g: &Array2<f64>| g.slice(s![y..y + ch, x..x + cw]).to_owned();
        scene.texture_left = tex(&scene.texture_left);
        scene.texture_right = tex(&scene.texture_right);
        scene.disparity_left = grid(&scene.disparity_left);
        scene.disparity_right = grid(&scene.disparity_right);
    }
    let report = scene
        .validate(config)
        .map_err(|e| Error::Data(format!("rejected scene {}: {e}", entry.id)))?;
    if report.fraction > MAX_CLAMP_FRACTION {
        return Err(Error::Data(format!(
            "rejected scene {}: {:.1}% of disparities fall outside [{}, {}]",
            entry.id,
            100.0 * report.fraction,
            config.disparity_min,
            config.disparity_max
        )));
    }
    Ok(scene)
}

/// Load every scene of a manifest. All referenced files are checked before
/// any image is decoded.
pub fn load_scene_manifest(path: &Path, config: &OpticalConfig, options: &LoadOptions) -> Result<Vec<Scene>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))?;
    if entries.is_empty() {
        return Err(Error::Data(format!("manifest {} lists no scenes", path.display())));
    }
    for e in &entries {
        for p in [&e.left_rgb, &e.right_rgb, &e.left_disp, &e.right_disp] {
            if !p.is_file() {
                return Err(Error::Data(format!("scene {}: missing file {}", e.id, p.display())));
            }
        }
    }
    let indexed: Vec<(usize, &ManifestEntry)> = entries.iter().enumerate().collect();
    par::map_slice(&indexed, |&(i, e)| load_entry(e, i, config, options))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries() {
        let text =
            "# comment\nid=a left_rgb=l.png right_rgb=r.png left_disp=l.pfm right_disp=r.pfm disp_offset=-134\n\n\
                    left_rgb=/x/l.png right_rgb=r.png left_disp=l.png right_disp=r.png disp_scale=0.25\n";
        let e = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].id, "a");
        assert_eq!(e[0].left_rgb, PathBuf::from("/data/l.png"));
        assert_eq!(e[0].disp_offset, -134.0);
        assert_eq!(e[1].id, "scene1");
        assert_eq!(e[1].left_rgb, PathBuf::from("/x/l.png"));
        assert_eq!(e[1].disp_scale, 0.25);
    }

    #[test]
    fn rejects_incomplete_lines() {
        assert!(parse_manifest("left_rgb=a.png", Path::new(".")).is_err());
        assert!(parse_manifest("foo=1", Path::new(".")).is_err());
        assert!(parse_manifest(
            "left_rgb=a right_rgb=b left_disp=c right_disp=d disp_scale=x",
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn crop_windows() {
        assert_eq!(crop_window(10, 20, (4, 8), None, 0).unwrap(), (3, 6));
        let a = crop_window(100, 200, (10, 10), Some(3), 1).unwrap();
        assert_eq!(a, crop_window(100, 200, (10, 10), Some(3), 1).unwrap());
        assert!(crop_window(5, 5, (6, 5), None, 0).is_err());
    }
}
