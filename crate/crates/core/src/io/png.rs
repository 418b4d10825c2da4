//! PNG textures and grayscale maps.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))
}

fn is_16bit(img: &DynamicImage) -> bool {
    matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    )
}

/// Read an 8- or 16-bit PNG as a `(3, H, W)` array in [0, 1]. Gray images
/// are replicated over the channels; alpha is dropped.
pub fn read_rgb(path: &Path) -> Result<Array3<f64>> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if is_16bit(&img) {
        let buf = img.to_rgb16();
        Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            buf.get_pixel(x as u32, y as u32)[c] as f64 / 65535.0
        }))
    } else {
        let buf = img.to_rgb8();
        Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            buf.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
        }))
    }
}

/// Read a grayscale PNG as raw integer sample values.
pub fn read_gray_raw(path: &Path) -> Result<Array2<f64>> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if is_16bit(&img) {
        let buf = img.to_luma16();
        Ok(Array2::from_shape_fn((h, w), |(y, x)| {
            buf.get_pixel(x as u32, y as u32)[0] as f64
        }))
    } else {
        let buf = img.to_luma8();
        Ok(Array2::from_shape_fn((h, w), |(y, x)| {
            buf.get_pixel(x as u32, y as u32)[0] as f64
        }))
    }
}

/// Sample depth of written PNGs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

fn encode(raw: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(Cursor::new(&mut out))
        .write_image(raw, w as u32, h as u32, color)
        .map_err(|e| Error::Image {
            path: Default::default(),
            message: e.to_string(),
        })?;
    Ok(out)
}

/// Encode a `(3, H, W)` image in [0, 1] (clipped) as PNG bytes.
pub fn encode_rgb(image: &Array3<f64>, depth: BitDepth) -> Result<Vec<u8>> {
    let (nc, h, w) = image.dim();
    if nc != 3 {
        return Err(Error::usage(format!("expected 3 channels, got {nc}")));
    }
    match depth {
        BitDepth::Eight => {
            let mut raw = Vec::with_capacity(3 * h * w);
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        raw.push(quantize(image[[c, y, x]], 255.0) as u8);
                    }
                }
            }
            encode(&raw, w, h, ExtendedColorType::Rgb8)
        }
        BitDepth::Sixteen => {
            let mut raw = Vec::with_capacity(6 * h * w);
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        raw.extend_from_slice(&(quantize(image[[c, y, x]], 65535.0) as u16).to_ne_bytes());
                    }
                }
            }
            encode(&raw, w, h, ExtendedColorType::Rgb16)
        }
    }
}

/// Encode a grid in [0, 1] (clipped) as a 16-bit grayscale PNG.
pub fn encode_gray16(grid: &Array2<f64>) -> Result<Vec<u8>> {
    let (h, w) = grid.dim();
    let mut raw = Vec::with_capacity(2 * h * w);
    for &v in grid.iter() {
        raw.extend_from_slice(&(quantize(v, 65535.0) as u16).to_ne_bytes());
    }
    encode(&raw, w, h, ExtendedColorType::L16)
}

/// Encode raw 16-bit sample values (rounded, saturated) as grayscale PNG.
pub fn encode_gray16_raw(grid: &Array2<f64>) -> Result<Vec<u8>> {
    let (h, w) = grid.dim();
    let mut raw = Vec::with_capacity(2 * h * w);
    for &v in grid.iter() {
        raw.extend_from_slice(&(v.round().clamp(0.0, 65535.0) as u16).to_ne_bytes());
    }
    encode(&raw, w, h, ExtendedColorType::L16)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_rgb(path: &Path, image: &Array3<f64>, depth: BitDepth) -> Result<()> {
    write_bytes(path, &encode_rgb(image, depth)?)
}

pub fn write_gray16(path: &Path, grid: &Array2<f64>) -> Result<()> {
    write_bytes(path, &encode_gray16(grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Array3::from_shape_fn((3, 5, 7), |(c, y, x)| ((c * 35 + y * 7 + x) as f64) / 104.0);
        let p = dir.path().join("t.png");
        write_rgb(&p, &img, BitDepth::Sixteen).unwrap();
        let back = read_rgb(&p).unwrap();
        for (a, b) in back.iter().zip(img.iter()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        let p8 = dir.path().join("t8.png");
        write_rgb(&p8, &img, BitDepth::Eight).unwrap();
        let back = read_rgb(&p8).unwrap();
        for (a, b) in back.iter().zip(img.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn gray_raw_values() {
        let dir = tempfile::tempdir().unwrap();
        let g = Array2::from_shape_fn((3, 4), |(y, x)| (y * 1000 + x) as f64);
        let p = dir.path().join("d.png");
        write_bytes(&p, &encode_gray16_raw(&g).unwrap()).unwrap();
        assert_eq!(read_gray_raw(&p).unwrap(), g);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_rgb(Path::new("/nonexistent/x.png")),
            Err(Error::Io { .. })
        ));
    }
}
