//! `key = value` run configuration with `[optical]`, `[loss]` and `[run]`
//! sections.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::recon::LossWeights;

/// Default sensor noise level (fraction of full scale).
pub const DEFAULT_SIGMA: f64 = 0.02;

/// Everything a run needs besides its subcommand flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optical: OpticalConfig,
    pub weights: LossWeights,
    pub sigma: f64,
    pub seed: u64,
    pub scene_manifest: Option<PathBuf>,
    pub mask_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            optical: OpticalConfig::default(),
            weights: LossWeights::default(),
            sigma: DEFAULT_SIGMA,
            seed: 0,
            scene_manifest: None,
            mask_file: None,
            output_dir: None,
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Real,
    Count,
    Triple,
    Seed,
    Path,
}

const KEYS: &[(&str, &str, Kind)] = &[
    ("optical", "focal_length", Kind::Real),
    ("optical", "f_number", Kind::Real),
    ("optical", "baseline", Kind::Real),
    ("optical", "sensor_pixel_pitch", Kind::Real),
    ("optical", "focus_distance", Kind::Real),
    ("optical", "wavelengths", Kind::Triple),
    ("optical", "mask_grid_size", Kind::Count),
    ("optical", "mask_pitch", Kind::Real),
    ("optical", "refractive_index", Kind::Real),
    ("optical", "disparity_min", Kind::Real),
    ("optical", "disparity_max", Kind::Real),
    ("optical", "num_disparity_levels", Kind::Count),
    ("optical", "preshift", Kind::Real),
    ("optical", "psf_kernel_size", Kind::Count),
    ("optical", "psf_oversample", Kind::Count),
    ("loss", "alpha", Kind::Triple),
    ("loss", "gamma", Kind::Real),
    ("run", "sigma", Kind::Real),
    ("run", "seed", Kind::Seed),
    ("run", "scene_manifest", Kind::Path),
    ("run", "mask_file", Kind::Path),
    ("run", "output_dir", Kind::Path),
];

const SECTIONS: &[&str] = &["optical", "loss", "run"];

enum Value {
    Real(f64),
    Count(usize),
    Triple([f64; 3]),
    Seed(u64),
    Path(PathBuf),
}

fn parse_value(kind: Kind, raw: &str, line: usize, key: &str) -> Result<Value> {
    let bad = |what: &str| Error::config(format!("line {line}: `{key}` expects {what}, got `{raw}`"));
    match kind {
        Kind::Real => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Real)
            .ok_or_else(|| bad("a finite number")),
        Kind::Count => raw
            .parse::<usize>()
            .map(Value::Count)
            .map_err(|_| bad("a non-negative integer")),
        Kind::Seed => raw
            .parse::<u64>()
            .map(Value::Seed)
            .map_err(|_| bad("an unsigned integer")),
        Kind::Triple => {
            let parts: Vec<&str> = raw
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let vals: Option<Vec<f64>> = parts
                .iter()
                .map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            match vals {
                Some(v) if v.len() == 3 => Ok(Value::Triple([v[0], v[1], v[2]])),
                _ => Err(bad("three numbers")),
            }
        }
        Kind::Path => {
            let p = raw.trim_matches('"');
            if p.is_empty() {
                Err(bad("a path"))
            } else {
                Ok(Value::Path(PathBuf::from(p)))
            }
        }
    }
}

fn apply(cfg: &mut RunConfig, key: &str, value: Value) {
    let o = &mut cfg.optical;
    match (key, value) {
        ("focal_length", Value::Real(v)) => o.focal_length = v,
        ("f_number", Value::Real(v)) => o.f_number = v,
        ("baseline", Value::Real(v)) => o.baseline = v,
        ("sensor_pixel_pitch", Value::Real(v)) => o.sensor_pixel_pitch = v,
        ("focus_distance", Value::Real(v)) => o.focus_distance = v,
        ("wavelengths", Value::Triple(v)) => o.wavelengths = v,
        ("mask_grid_size", Value::Count(v)) => o.mask_grid_size = v,
        ("mask_pitch", Value::Real(v)) => o.mask_pitch = v,
        ("refractive_index", Value::Real(v)) => o.refractive_index = v,
        ("disparity_min", Value::Real(v)) => o.disparity_min = v,
        ("disparity_max", Value::Real(v)) => o.disparity_max = v,
        ("num_disparity_levels", Value::Count(v)) => o.num_disparity_levels = v,
        ("preshift", Value::Real(v)) => o.preshift = v,
        ("psf_kernel_size", Value::Count(v)) => o.psf_kernel_size = v,
        ("psf_oversample", Value::Count(v)) => o.psf_oversample = v,
        ("alpha", Value::Triple(v)) => cfg.weights.alpha = v,
        ("gamma", Value::Real(v)) => cfg.weights.gamma = v,
        ("sigma", Value::Real(v)) => cfg.sigma = v,
        ("seed", Value::Seed(v)) => cfg.seed = v,
        ("scene_manifest", Value::Path(p)) => cfg.scene_manifest = Some(p),
        ("mask_file", Value::Path(p)) => cfg.mask_file = Some(p),
        ("output_dir", Value::Path(p)) => cfg.output_dir = Some(p),
        _ => unreachable!("key table and apply disagree"),
    }
}

fn suggestion(key: &str) -> String {
    KEYS.iter()
        .map(|(_, k, _)| (strsim::levenshtein(key, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3)
        .map(|(_, k)| format!(" (did you mean `{k}`?)"))
        .unwrap_or_default()
}

/// Parse configuration text. Keys before any section header are looked up
/// in every section.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section: Option<&str> = None;
    let mut seen = HashSet::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            section = Some(
                SECTIONS
                    .iter()
                    .find(|s| **s == name)
                    .copied()
                    .ok_or_else(|| Error::config(format!("line {line_no}: unknown section [{name}]")))?,
            );
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {line_no}: expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let entry = KEYS
            .iter()
            .find(|(s, k, _)| *k == key && section.is_none_or(|sec| sec == *s));
        let Some(&(sec, _, kind)) = entry else {
            let where_ = section.map(|s| format!(" in [{s}]")).unwrap_or_default();
            return Err(Error::config(format!(
                "line {line_no}: unknown key `{key}`{where_}{}",
                suggestion(key)
            )));
        };
        if !seen.insert(key) {
            return Err(Error::config(format!(
                "line {line_no}: duplicate key `{key}` in [{sec}]"
            )));
        }
        apply(&mut cfg, key, parse_value(kind, value, line_no, key)?);
    }
    cfg.optical.validate()?;
    cfg.weights.validate()?;
    if !(cfg.sigma >= 0.0) {
        return Err(Error::config(format!("sigma must be non-negative, got {}", cfg.sigma)));
    }
    Ok(cfg)
}

/// Normalized dump listing every key; parses back to an equal config.
pub fn dump_config(cfg: &RunConfig) -> String {
    let o = &cfg.optical;
    let mut s = String::from("[optical]\n");
    let triple = |v: &[f64; 3]| format!("{:?}, {:?}, {:?}", v[0], v[1], v[2]);
    let _ = writeln!(s, "focal_length = {:?}", o.focal_length);
    let _ = writeln!(s, "f_number = {:?}", o.f_number);
    let _ = writeln!(s, "baseline = {:?}", o.baseline);
    let _ = writeln!(s, "sensor_pixel_pitch = {:?}", o.sensor_pixel_pitch);
    let _ = writeln!(s, "focus_distance = {:?}", o.focus_distance);
    let _ = writeln!(s, "wavelengths = {}", triple(&o.wavelengths));
    let _ = writeln!(s, "mask_grid_size = {}", o.mask_grid_size);
    let _ = writeln!(s, "mask_pitch = {:?}", o.mask_pitch);
    let _ = writeln!(s, "refractive_index = {:?}", o.refractive_index);
    let _ = writeln!(s, "disparity_min = {:?}", o.disparity_min);
    let _ = writeln!(s, "disparity_max = {:?}", o.disparity_max);
    let _ = writeln!(s, "num_disparity_levels = {}", o.num_disparity_levels);
    let _ = writeln!(s, "preshift = {:?}", o.preshift);
    let _ = writeln!(s, "psf_kernel_size = {}", o.psf_kernel_size);
    let _ = writeln!(s, "psf_oversample = {}", o.psf_oversample);
    s.push_str("\n[loss]\n");
    let _ = writeln!(s, "alpha = {}", triple(&cfg.weights.alpha));
    let _ = writeln!(s, "gamma = {:?}", cfg.weights.gamma);
    s.push_str("\n[run]\n");
    let _ = writeln!(s, "sigma = {:?}", cfg.sigma);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    for (key, path) in [
        ("scene_manifest", &cfg.scene_manifest),
        ("mask_file", &cfg.mask_file),
        ("output_dir", &cfg.output_dir),
    ] {
        if let Some(p) = path {
            let _ = writeln!(s, "{key} = {}", p.display());
        }
    }
    s
}

impl RunConfig {
    /// Resolve relative paths against `base` and require input files to exist.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        for p in [&mut self.scene_manifest, &mut self.mask_file, &mut self.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for (key, p) in [("scene_manifest", &self.scene_manifest), ("mask_file", &self.mask_file)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Data(format!("{key} {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Read, parse and path-check a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn override_and_sections() {
        let c = parse_config("f_number = 32\n[loss]\ngamma = 0\nalpha = 1, 0 0\n[run]\nseed = 7\n").unwrap();
        assert_eq!(c.optical.f_number, 32.0);
        assert_eq!(c.weights.gamma, 0.0);
        assert_eq!(c.weights.alpha, [1.0, 0.0, 0.0]);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn unknown_key_suggests() {
        let err = parse_config("focal_lenght = 0.05").unwrap_err().to_string();
        assert!(err.contains("focal_length"), "{err}");
        assert!(parse_config("[run]\nf_number = 8").is_err());
        assert!(parse_config("[lens]\n").is_err());
    }

    #[test]
    fn duplicate_and_type_errors() {
        assert!(parse_config("seed = 1\nseed = 2").is_err());
        assert!(parse_config("seed = x").is_err());
        assert!(parse_config("mask_grid_size = 7.5").is_err());
        assert!(parse_config("wavelengths = 1e-7 2e-7").is_err());
        assert!(parse_config("mask_grid_size = 70").is_err());
    }

    #[test]
    fn dump_reparses() {
        let mut c = RunConfig::default();
        c.optical.f_number = 11.5;
        c.sigma = 0.005;
        c.output_dir = Some(PathBuf::from("out/run 1"));
        assert_eq!(parse_config(&dump_config(&c)).unwrap(), c);
    }
}
