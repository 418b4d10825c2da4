//! Simulation and phase-mask optimization for coded-aperture stereo.
//!
//! A stereo pair shares one phase mask in its aperture. [`optics`] turns the
//! mask into disparity-dependent PSFs, [`render`] produces the coded image
//! pair, [`recon`] recovers all-in-focus texture and disparity with classical
//! algorithms, and [`optimize`] tunes the mask's Zernike coefficients against
//! the combined texture and disparity loss. [`geometry`] covers the
//! SNR/depth-of-field tradeoff and [`io`] the file formats.

// `!(x > 0.0)` style checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fft;
pub mod geometry;
pub mod io;
pub mod optics;
pub mod optimize;
pub mod par;
pub mod recon;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
