//! Pupil functions, phase masks and PSF synthesis.

pub mod config;
pub mod mask;
pub mod psf;
pub mod zernike;

pub use config::{OpticalConfig, BLUE, GREEN, RED};
pub use mask::{height_to_phase, make_cubic_mask, quantize_height, PhaseMask, Provenance, MASK_COEFFICIENTS};
pub use psf::{
    compute_psf, compute_psf_stack, defocus_coefficient, defocus_phase, fisher_objective, kernel_correlation,
    second_moment, OpticalPsf, PsfModel, PsfStack,
};
pub use zernike::{noll_to_nm, zernike, ZernikeBasis};
