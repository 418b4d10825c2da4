//! Portable float map (PFM) reading and writing.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A decoded PFM image. Samples are stored row-major, top row first,
/// channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    /// Header scale; its sign selects the byte order (negative = little-endian).
    pub scale: f32,
    pub data: Vec<f32>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next whitespace-delimited header token and its offset.
    fn token(&mut self) -> Result<(usize, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "unexpected end of header"));
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, "header is not ASCII"))?;
        Ok((start, tok))
    }

    /// Consume the single whitespace byte ending the header.
    fn end_header(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::parse(self.pos, "missing newline after scale")),
        }
    }
}

fn dimension(offset: usize, tok: &str, what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::parse(offset, format!("invalid {what} `{tok}`"))),
    }
}

/// Decode PFM bytes.
pub fn read_pfm(bytes: &[u8]) -> Result<Pfm> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (off, magic) = cur.token()?;
    let channels = match magic {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::parse(off, format!("bad magic `{other}`"))),
    };
    let (off, tok) = cur.token()?;
    let width = dimension(off, tok, "width")?;
    let (off, tok) = cur.token()?;
    let height = dimension(off, tok, "height")?;
    let (off, tok) = cur.token()?;
    let scale: f32 = tok
        .parse()
        .ok()
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::parse(off, format!("invalid scale `{tok}`")))?;
    cur.end_header()?;
    let start = cur.pos;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(off, "image dimensions overflow"))?;
    let need = count * 4;
    if bytes.len() - start < need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", bytes.len() - start),
        ));
    }
    if bytes.len() - start > need {
        return Err(Error::parse(start + need, "trailing bytes after payload"));
    }
    let little = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0.0f32; count];
    for (i, chunk) in bytes[start..].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(Error::parse(start + 4 * i, format!("non-finite sample {v}")));
        }
        // file rows run bottom to top
        let (file_row, col) = (i / row_len, i % row_len);
        data[(height - 1 - file_row) * row_len + col] = v;
    }
    Ok(Pfm {
        width,
        height,
        channels,
        scale,
        data,
    })
}

/// Encode a PFM image.
pub fn write_pfm(pfm: &Pfm) -> Result<Vec<u8>> {
    if !matches!(pfm.channels, 1 | 3) || pfm.width == 0 || pfm.height == 0 {
        return Err(Error::usage(format!(
            "cannot write a {}x{}x{} PFM",
            pfm.width, pfm.height, pfm.channels
        )));
    }
    if pfm.data.len() != pfm.width * pfm.height * pfm.channels {
        return Err(Error::usage("PFM sample count does not match its dimensions"));
    }
    if !(pfm.scale.is_finite() && pfm.scale != 0.0) {
        return Err(Error::usage(format!("invalid PFM scale {}", pfm.scale)));
    }
    let magic = if pfm.channels == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{} {}\n{:?}\n", pfm.width, pfm.height, pfm.scale).into_bytes();
    out.reserve(pfm.data.len() * 4);
    let little = pfm.scale < 0.0;
    let row_len = pfm.width * pfm.channels;
    for row in pfm.data.chunks_exact(row_len).rev() {
        for &v in row {
            out.extend_from_slice(&if little { v.to_le_bytes() } else { v.to_be_bytes() });
        }
    }
    Ok(out)
}

/// Decode a single-channel PFM as a disparity grid.
pub fn read_disparity_pfm(bytes: &[u8]) -> Result<Array2<f64>> {
    let pfm = read_pfm(bytes)?;
    if pfm.channels != 1 {
        return Err(Error::parse(0, "disparity maps must be single-channel (`Pf`)"));
    }
    Ok(
        Array2::from_shape_vec((pfm.height, pfm.width), pfm.data.into_iter().map(f64::from).collect())
            .expect("shape checked"),
    )
}

/// Encode a grid as a little-endian single-channel PFM (scale -1).
pub fn write_disparity_pfm(grid: &Array2<f64>) -> Result<Vec<u8>> {
    let (height, width) = grid.dim();
    write_pfm(&Pfm {
        width,
        height,
        channels: 1,
        scale: -1.0,
        data: grid.iter().map(|&v| v as f32).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let pfm = Pfm {
            width: 2,
            height: 1,
            channels: 1,
            scale: -1.0,
            data: vec![1.0, 2.0],
        };
        let bytes = write_pfm(&pfm).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 1\n-1.0\n"));
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(read_pfm(&bytes).unwrap(), pfm);
    }

    #[test]
    fn bottom_row_first_big_endian() {
        let pfm = Pfm {
            width: 1,
            height: 2,
            channels: 1,
            scale: 1.0,
            data: vec![3.0, 4.0],
        };
        let bytes = write_pfm(&pfm).unwrap();
        let h = b"Pf\n1 2\n1.0\n".len();
        assert_eq!(&bytes[h..h + 4], &4.0f32.to_be_bytes());
        assert_eq!(read_pfm(&bytes).unwrap(), pfm);
    }

    #[test]
    fn errors_carry_offsets() {
        let mut bytes = write_pfm(&Pfm {
            width: 2,
            height: 2,
            channels: 1,
            scale: -1.0,
            data: vec![0.0; 4],
        })
        .unwrap();
        let h = bytes.len() - 16;
        bytes[h + 8..h + 12].copy_from_slice(&f32::NAN.to_le_bytes());
        match read_pfm(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, h + 8),
            other => panic!("{other:?}"),
        }
        bytes.truncate(h + 5);
        assert!(matches!(read_pfm(&bytes), Err(Error::Parse { .. })));
        assert!(matches!(read_pfm(b"P6\n1 1\n1\n"), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn color_rejected_as_disparity() {
        let bytes = write_pfm(&Pfm {
            width: 1,
            height: 1,
            channels: 3,
            scale: -1.0,
            data: vec![0.0; 3],
        })
        .unwrap();
        assert!(read_disparity_pfm(&bytes).is_err());
    }
}
