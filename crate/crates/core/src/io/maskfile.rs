//! Plain-text mask file: header, provenance, height rows in micrometers and
//! an optional Zernike coefficient block.
//!
//! Heights are written by shifting the decimal exponent of the shortest
//! round-trip representation in meters, so reading a written file restores
//! every value bit for bit.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::optics::{PhaseMask, Provenance};

const MAGIC: &str = "mask-height";
const VERSION: &str = "v1";
const COEFFS_MARKER: &str = "coeffs:";

/// Format meters as micrometers without any rounding.
pub fn format_micrometers(meters: f64) -> String {
    if meters == 0.0 {
        return if meters.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let repr = format!("{meters:e}");
    let (mantissa, exp) = repr.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    match exp + 6 {
        0 => mantissa.to_string(),
        e => format!("{mantissa}e{e}"),
    }
}

/// Parse a micrometer token into meters by exponent shifting.
pub fn parse_micrometers(token: &str) -> Option<f64> {
    let shifted = match token.split_once(['e', 'E']) {
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().ok()?;
            format!("{mantissa}e{}", exp.checked_sub(6)?)
        }
        None => format!("{token}e-6"),
    };
    shifted.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Serialize a mask.
pub fn write_mask(mask: &PhaseMask) -> String {
    let g = mask.grid_size();
    let mut out = format!("{MAGIC} {VERSION} {g}\n{}\n", mask.provenance);
    for row in mask.height_map.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_micrometers(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    if !mask.coefficients.is_empty() {
        out.push_str(COEFFS_MARKER);
        out.push('\n');
        let line: Vec<String> = mask.coefficients.iter().map(|&v| format_micrometers(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with its byte offset.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.text.len() {
            let start = self.pos;
            let end = self.text[start..].find('\n').map_or(self.text.len(), |i| start + i);
            self.pos = end + 1;
            let line = self.text[start..end].trim_end_matches('\r');
            if !line.trim().is_empty() {
                return Some((start, line));
            }
        }
        None
    }
}

fn values(offset: usize, line: &str) -> Result<Vec<f64>> {
    let base = line.as_ptr() as usize;
    line.split_whitespace()
        .map(|tok| {
            let at = offset + (tok.as_ptr() as usize - base);
            parse_micrometers(tok).ok_or_else(|| Error::parse(at, format!("invalid height `{tok}`")))
        })
        .collect()
}

/// Parse a mask file.
pub fn read_mask(text: &str) -> Result<PhaseMask> {
    let mut lines = Lines { text, pos: 0 };
    let (off, header) = lines.next().ok_or_else(|| Error::parse(0, "empty mask file"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != MAGIC || parts[1] != VERSION {
        return Err(Error::parse(
            off,
            format!("expected `{MAGIC} {VERSION} <size>`, got `{header}`"),
        ));
    }
    let g: usize = parts[2]
        .parse()
        .ok()
        .filter(|&g: &usize| g > 0 && g % 2 == 1)
        .ok_or_else(|| Error::parse(off, format!("invalid grid size `{}`", parts[2])))?;
    let (off, prov) = lines
        .next()
        .ok_or_else(|| Error::parse(text.len(), "missing provenance line"))?;
    let provenance: Provenance = prov
        .trim()
        .parse()
        .map_err(|_| Error::parse(off, format!("unknown provenance `{}`", prov.trim())))?;
    let mut heights = Vec::with_capacity(g * g);
    for row in 0..g {
        let (off, line) = lines
            .next()
            .ok_or_else(|| Error::parse(text.len(), format!("missing height row {row}")))?;
        let vals = values(off, line)?;
        if vals.len() != g {
            return Err(Error::parse(
                off,
                format!("row {row} has {} values, expected {g}", vals.len()),
            ));
        }
        heights.extend(vals);
    }
    let mut coefficients = Vec::new();
    if let Some((off, line)) = lines.next() {
        if line.trim() != COEFFS_MARKER {
            return Err(Error::parse(off, format!("unexpected content `{line}`")));
        }
        let (off, line) = lines
            .next()
            .ok_or_else(|| Error::parse(text.len(), "missing coefficient values"))?;
        coefficients = values(off, line)?;
        if let Some((off, _)) = lines.next() {
            return Err(Error::parse(off, "trailing content after coefficients"));
        }
    }
    let height_map = Array2::from_shape_vec((g, g), heights).expect("row count checked");
    let mut mask = PhaseMask::from_height_map(height_map, provenance)?;
    mask.coefficients = coefficients;
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micrometer_tokens() {
        assert_eq!(format_micrometers(1.5e-6), "1.5");
        assert_eq!(format_micrometers(2.0e-7), "2e-1");
        assert_eq!(format_micrometers(-3.25e-9), "-3.25e-3");
        assert_eq!(format_micrometers(0.0), "0");
        assert_eq!(parse_micrometers("0.2"), Some(2e-7));
        assert_eq!(parse_micrometers("2e-1"), Some(2e-7));
        assert_eq!(parse_micrometers("x"), None);
        assert_eq!(parse_micrometers("inf"), None);
        for v in [1e-7, 0.1 + 0.2, -7.123456789e-8, f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(
                parse_micrometers(&format_micrometers(v)).unwrap().to_bits(),
                v.to_bits()
            );
        }
    }

    #[test]
    fn bad_rows_report_offset() {
        let text = "mask-height v1 3\nflat\n0 0 0\n0 zz 0\n0 0 0\n";
        match read_mask(text) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, text.find("zz").unwrap()),
            other => panic!("{other:?}"),
        }
        assert!(read_mask("mask-height v1 3\nflat\n0 0 0\n").is_err());
        assert!(read_mask("mask-height v2 3\nflat\n").is_err());
    }

    #[test]
    fn small_round_trip() {
        let hm = Array2::from_shape_fn((3, 3), |(y, x)| if (y, x) == (1, 1) { 1.23e-7 } else { 0.0 });
        let mut mask = PhaseMask::from_height_map(hm, Provenance::Learned).unwrap();
        mask.coefficients = vec![1e-8, -2e-9];
        let back = read_mask(&write_mask(&mask)).unwrap();
        assert_eq!(back, mask);
    }
}
