//! Zernike polynomials on the unit disk inscribed in a square grid.
//!
//! Ordering and normalization follow Noll: `j = 1` is piston, `2`/`3` are the
//! x/y tilts, `4` is defocus, and every mode has unit mean square over the
//! disk. Grid column maps to x and grid row to y; the disk touches the outer
//! edges of the border cells.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

/// Radial order `n` and azimuthal order `m` of Noll index `j` (1-based).
pub fn noll_to_nm(j: usize) -> (usize, usize) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    let p = j - n * (n + 1) / 2 - 1;
    let m = if n % 2 == 0 { 2 * p.div_ceil(2) } else { 2 * (p / 2) + 1 };
    (n, m)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn radial(n: usize, m: usize, r: f64) -> f64 {
    (0..=(n - m) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - k) / (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k))
                * r.powi((n - 2 * k) as i32)
        })
        .sum()
}

/// Value of Noll mode `j` at unit-disk point `(x, y)`; zero outside the disk.
pub fn zernike(j: usize, x: f64, y: f64) -> f64 {
    let r = x.hypot(y);
    if r > 1.0 {
        return 0.0;
    }
    let (n, m) = noll_to_nm(j);
    let rad = radial(n, m, r);
    if m == 0 {
        return (n as f64 + 1.0).sqrt() * rad;
    }
    let theta = y.atan2(x);
    let norm = (2.0 * (n as f64 + 1.0)).sqrt();
    if j.is_multiple_of(2) {
        norm * rad * (m as f64 * theta).cos()
    } else {
        norm * rad * (m as f64 * theta).sin()
    }
}

/// Sampled Zernike modes, Noll order starting at piston.
#[derive(Debug, Clone)]
pub struct ZernikeBasis {
    grid_size: usize,
    maps: Vec<Array2<f64>>,
    disk: Array2<bool>,
}

impl ZernikeBasis {
    pub fn new(grid_size: usize, count: usize) -> Result<Self> {
        if grid_size < 3 || grid_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "Zernike grid size must be odd and >= 3, got {grid_size}"
            )));
        }
        if count == 0 {
            return Err(Error::config("Zernike basis needs at least one mode"));
        }
        let disk = disk_mask(grid_size);
        let maps = (1..=count)
            .map(|j| {
                Array2::from_shape_fn((grid_size, grid_size), |(row, col)| {
                    let (x, y) = unit_coords(grid_size, row, col);
                    if disk[[row, col]] {
                        zernike(j, x, y)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Ok(Self { grid_size, maps, disk })
    }

    pub fn count(&self) -> usize {
        self.maps.len()
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Map of Noll mode `j` (1-based).
    pub fn map(&self, j: usize) -> &Array2<f64> {
        &self.maps[j - 1]
    }

    pub fn maps(&self) -> &[Array2<f64>] {
        &self.maps
    }

    pub fn disk(&self) -> &Array2<bool> {
        &self.disk
    }

    /// Weighted sum of the modes; `coeffs[0]` multiplies piston.
    pub fn combine(&self, coeffs: &[f64]) -> Array2<f64> {
        assert!(
            coeffs.len() <= self.maps.len(),
            "{} coefficients for a {}-mode basis",
            coeffs.len(),
            self.maps.len()
        );
        let mut out = Array2::zeros((self.grid_size, self.grid_size));
        for (c, map) in coeffs.iter().zip(&self.maps) {
            if *c != 0.0 {
                Zip::from(&mut out).and(map).for_each(|o, &z| *o += c * z);
            }
        }
        out
    }

    /// Mean of `Z_a * Z_b` over the in-disk samples (1-based indices).
    pub fn inner(&self, a: usize, b: usize) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        Zip::from(self.map(a))
            .and(self.map(b))
            .and(&self.disk)
            .for_each(|&za, &zb, &inside| {
                if inside {
                    acc += za * zb;
                    count += 1;
                }
            });
        acc / count as f64
    }
}

/// Unit-disk coordinates of a grid cell center.
pub fn unit_coords(grid_size: usize, row: usize, col: usize) -> (f64, f64) {
    let c = (grid_size as f64 - 1.0) / 2.0;
    let r = grid_size as f64 / 2.0;
    ((col as f64 - c) / r, (row as f64 - c) / r)
}

/// Cells whose centers lie inside the inscribed disk.
pub fn disk_mask(grid_size: usize) -> Array2<bool> {
    Array2::from_shape_fn((grid_size, grid_size), |(row, col)| {
        let (x, y) = unit_coords(grid_size, row, col);
        x * x + y * y <= 1.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noll_table() {
        let expected = [
            (0, 0),
            (1, 1),
            (1, 1),
            (2, 0),
            (2, 2),
            (2, 2),
            (3, 1),
            (3, 1),
            (3, 3),
            (3, 3),
            (4, 0),
            (4, 2),
            (4, 2),
            (4, 4),
            (4, 4),
        ];
        for (j, nm) in expected.iter().enumerate() {
            assert_eq!(noll_to_nm(j + 1), *nm, "j = {}", j + 1);
        }
        assert_eq!(noll_to_nm(55), (9, 9));
    }

    #[test]
    fn piston_is_indicator() {
        let b = ZernikeBasis::new(71, 1).unwrap();
        for ((r, c), &v) in b.map(1).indexed_iter() {
            let want = if b.disk()[[r, c]] { 1.0 } else { 0.0 };
            assert_eq!(v, want);
        }
    }

    #[test]
    fn defocus_point_symmetric() {
        let b = ZernikeBasis::new(71, 4).unwrap();
        let z = b.map(4);
        for r in 0..71 {
            for c in 0..71 {
                assert_eq!(z[[r, c]], z[[70 - r, 70 - c]]);
            }
        }
    }

    #[test]
    fn tilt_and_defocus_closed_forms() {
        // Z2 = 2x, Z3 = 2y, Z4 = sqrt(3)(2r^2 - 1)
        let (x, y) = (0.3, -0.4);
        assert!((zernike(2, x, y) - 2.0 * x).abs() < 1e-12);
        assert!((zernike(3, x, y) - 2.0 * y).abs() < 1e-12);
        let r2 = x * x + y * y;
        assert!((zernike(4, x, y) - 3f64.sqrt() * (2.0 * r2 - 1.0)).abs() < 1e-12);
        assert_eq!(zernike(4, 0.9, 0.9), 0.0);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(ZernikeBasis::new(70, 5).is_err());
        assert!(ZernikeBasis::new(71, 0).is_err());
    }
}
