//! File formats: PFM, mask files, PNG, run configuration, scene manifests,
//! PSF atlases and plots.

pub mod config;
pub mod manifest;
pub mod maskfile;
pub mod pfm;
pub mod plot;
pub mod png;

use std::fmt::Write as _;
use std::path::Path;

pub use config::{dump_config, load_config, parse_config, RunConfig, DEFAULT_SIGMA};
pub use manifest::{load_scene_manifest, parse_manifest, LoadOptions, ManifestEntry, PATCH_SIZE};
pub use maskfile::{read_mask, write_mask};
pub use pfm::{read_disparity_pfm, read_pfm, write_disparity_pfm, write_pfm, Pfm};
pub use plot::{line_plot, Labels, Series};
pub use png::{read_gray_raw, read_rgb, write_gray16, write_rgb, BitDepth};

use crate::error::{Error, Result};
use crate::optics::{second_moment, OpticalConfig, PsfStack};

/// Load a mask file from disk.
pub fn load_mask(path: &Path) -> Result<crate::optics::PhaseMask> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_mask(&text).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Data(format!("{}: byte {offset}: {message}", path.display())),
        other => other,
    })
}

/// Header of the PSF moments table.
pub const MOMENTS_HEADER: &str = "channel,wavelength_m,level,disparity_px,sum,centroid_x,centroid_y,rms_radius_px";

/// Kernel sums, centroids and RMS radii of every kernel in a stack.
pub fn moments_csv(stack: &PsfStack, config: &OpticalConfig) -> String {
    let mut s = String::from(MOMENTS_HEADER);
    s.push('\n');
    for c in 0..stack.num_wavelengths() {
        for (l, d) in stack.levels().iter().enumerate() {
            let k = stack.kernel(c, l);
            let ((cy, cx), m2) = second_moment(k);
            let _ = writeln!(
                s,
                "{c},{:?},{l},{d:?},{:?},{cx:?},{cy:?},{:?}",
                config.wavelengths[c],
                k.sum(),
                m2.sqrt()
            );
        }
    }
    s
}

/// Write one max-normalized 16-bit PNG per kernel plus `moments.csv`.
/// Returns the number of kernel images written.
pub fn export_psf_atlas(stack: &PsfStack, config: &OpticalConfig, dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut count = 0;
    for c in 0..stack.num_wavelengths() {
        for l in 0..stack.num_levels() {
            let k = stack.kernel(c, l);
            let peak = k.iter().cloned().fold(0.0, f64::max);
            let scaled = if peak > 0.0 { k / peak } else { k.clone() };
            write_gray16(&dir.join(format!("psf_c{c}_l{l:02}.png")), &scaled)?;
            count += 1;
        }
    }
    let path = dir.join("moments.csv");
    std::fs::write(&path, moments_csv(stack, config)).map_err(|e| Error::io(&path, e))?;
    Ok(count)
}
