//! Zero-mean NCC block matching with sub-pixel refinement and a
//! left-right consistency check.

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::par;

/// Default half-width of the matching window (9x9 windows).
pub const DEFAULT_BLOCK_RADIUS: usize = 4;
/// Maximum left/right disagreement (px) for a pixel to count as consistent.
pub const LR_TOLERANCE: f64 = 1.0;
/// Per-pixel intensity variance below which a window counts as textureless.
const TEXTURE_VARIANCE: f64 = 1e-10;

/// Disparity maps of both views with the left view's confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoResult {
    pub disparity: Array2<f64>,
    pub disparity_right: Array2<f64>,
    /// Best ZNCC score at consistent pixels, 0 elsewhere.
    pub confidence: Array2<f64>,
}

/// Luminance (channel mean) of a channel-first image.
pub fn luminance(image: &Array3<f64>) -> Array2<f64> {
    image.mean_axis(Axis(0)).expect("image has channels")
}

/// Summed-area table with a zero first row and column.
struct Integral {
    data: Vec<f64>,
    stride: usize,
}

impl Integral {
    fn new(img: &[f64], w: usize) -> Self {
        let h = img.len() / w;
        let stride = w + 1;
        let mut data = vec![0.0; (h + 1) * stride];
        for y in 0..h {
            let mut run = 0.0;
            for x in 0..w {
                run += img[y * w + x];
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + run;
            }
        }
        Self { data, stride }
    }

    /// Sum over rows `r0..=r1`, cols `c0..=c1`.
    #[inline]
    fn sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let (d, s) = (&self.data, self.stride);
        d[(r1 + 1) * s + c1 + 1] - d[r0 * s + c1 + 1] - d[(r1 + 1) * s + c0] + d[r0 * s + c0]
    }
}

/// Per-pixel window sum and inverse standard deviation (0 when textureless)
/// of unclipped-in-x windows.
struct WindowStats {
    sum: Vec<f64>,
    inv_sd: Vec<f64>,
    count: Vec<f64>,
}

impl WindowStats {
    fn new(i: &Integral, i2: &Integral, h: usize, w: usize, r: usize) -> Self {
        let mut out = Self {
            sum: vec![0.0; h * w],
            inv_sd: vec![0.0; h * w],
            count: vec![0.0; h * w],
        };
        for y in 0..h {
            let (ry0, ry1) = (y.saturating_sub(r), (y + r).min(h - 1));
            for x in 0..w {
                let (c0, c1) = (x.saturating_sub(r), (x + r).min(w - 1));
                let n = ((ry1 - ry0 + 1) * (c1 - c0 + 1)) as f64;
                let s = i.sum(ry0, ry1, c0, c1);
                let var = i2.sum(ry0, ry1, c0, c1) - s * s / n;
                let k = y * w + x;
                out.sum[k] = s;
                out.count[k] = n;
                out.inv_sd[k] = if var > TEXTURE_VARIANCE * n {
                    var.sqrt().recip()
                } else {
                    0.0
                };
            }
        }
        out
    }
}

/// Running arg-max of one pixel with the neighboring scores needed for the
/// parabola fit.
#[derive(Clone, Copy)]
struct Cell {
    best: f64,
    minus: f64,
    plus: f64,
    prev: f64,
    best_d: u32,
    pending: bool,
    textured: bool,
}

impl Cell {
    const EMPTY: Cell = Cell {
        best: f64::NEG_INFINITY,
        minus: f64::NAN,
        plus: f64::NAN,
        prev: f64::NAN,
        best_d: 0,
        pending: false,
        textured: false,
    };

    #[inline]
    fn visit(&mut self, d: usize, score: f64, textured: bool) {
        self.textured |= textured;
        if self.pending {
            self.plus = score;
            self.pending = false;
        }
        if score > self.best {
            self.best = score;
            self.best_d = d as u32;
            self.minus = self.prev;
            self.plus = f64::NAN;
            self.pending = true;
        }
        self.prev = score;
    }

    /// Marks a disparity with no valid correspondence.
    #[inline]
    fn skip(&mut self) {
        self.pending = false;
        self.prev = f64::NAN;
    }

    fn refined(&self) -> f64 {
        let d = self.best_d as f64;
        let (m, s0, p) = (self.minus, self.best, self.plus);
        if !(m.is_finite() && p.is_finite()) {
            return d;
        }
        let denom = m - 2.0 * s0 + p;
        if denom >= 0.0 {
            return d;
        }
        d + ((m - p) / (2.0 * denom)).clamp(-1.0, 1.0)
    }
}

struct BlockOut {
    left: Vec<Cell>,
    right: Vec<Cell>,
}

/// Match a rectified coded pair; disparity `d` pairs left `x` with right `x - d`.
pub fn match_stereo(
    left: &Array3<f64>,
    right: &Array3<f64>,
    config: &OpticalConfig,
    block_radius: usize,
    max_disp: usize,
) -> Result<StereoResult> {
    if left.dim() != right.dim() {
        return Err(Error::usage(format!(
            "left {:?} and right {:?} images differ in shape",
            left.dim(),
            right.dim()
        )));
    }
    let (_, h, w) = left.dim();
    if max_disp >= w {
        return Err(Error::config(format!(
            "max disparity {max_disp} must be below the image width {w}"
        )));
    }
    let lum_l = luminance(left).as_standard_layout().into_owned();
    let lum_r = luminance(right).as_standard_layout().into_owned();
    let ll = lum_l.as_slice().expect("standard layout");
    let lr = lum_r.as_slice().expect("standard layout");
    let il = Integral::new(ll, w);
    let ill = Integral::new(&ll.iter().map(|v| v * v).collect::<Vec<_>>(), w);
    let ir = Integral::new(lr, w);
    let irr = Integral::new(&lr.iter().map(|v| v * v).collect::<Vec<_>>(), w);
    let r = block_radius;
    let left_stats = WindowStats::new(&il, &ill, h, w, r);
    let right_stats = WindowStats::new(&ir, &irr, h, w, r);

    const BLOCK: usize = 16;
    let blocks = h.div_ceil(BLOCK);
    let outs = par::map_range(blocks, |b| {
        let y0 = b * BLOCK;
        let y1 = ((b + 1) * BLOCK).min(h);
        let h0 = y0.saturating_sub(r);
        let h1 = (y1 + r).min(h);
        let rows = y1 - y0;
        let mut left_t = vec![Cell::EMPTY; rows * w];
        let mut right_t = vec![Cell::EMPTY; rows * w];
        let stride = w + 1;
        let mut ip = Integral {
            data: vec![0.0; (h1 - h0 + 1) * stride],
            stride,
        };
        for d in 0..=max_disp {
            // summed-area table of lum_l(x) * lum_r(x - d) over the block's rows
            for y in h0..h1 {
                let (above, rest) = ip.data.split_at_mut((y - h0 + 1) * stride);
                let above = &above[(y - h0) * stride..];
                let row = &mut rest[..stride];
                let (lrow, rrow) = (&ll[y * w..(y + 1) * w], &lr[y * w..(y + 1) * w]);
                let mut run = 0.0;
                for x in 0..w {
                    if x >= d {
                        run += lrow[x] * rrow[x - d];
                    }
                    row[x + 1] = above[x + 1] + run;
                }
            }
            for y in y0..y1 {
                let ry0 = y.saturating_sub(r);
                let ry1 = (y + r).min(h - 1);
                let base = (y - y0) * w;
                for x in 0..d.min(w) {
                    left_t[base + x].skip();
                }
                // windows away from the x >= d bound and the right border have
                // disparity-independent sums, precomputed per pixel
                let fast = (d + r).min(w)..w.saturating_sub(r).max((d + r).min(w));
                for x in (d..fast.start).chain(fast.end..w) {
                    let c0 = x.saturating_sub(r).max(d);
                    let c1 = (x + r).min(w - 1);
                    let n = ((ry1 - ry0 + 1) * (c1 - c0 + 1)) as f64;
                    let sl = il.sum(ry0, ry1, c0, c1);
                    let sll = ill.sum(ry0, ry1, c0, c1);
                    let sr = ir.sum(ry0, ry1, c0 - d, c1 - d);
                    let srr = irr.sum(ry0, ry1, c0 - d, c1 - d);
                    let slr = ip.sum(ry0 - h0, ry1 - h0, c0, c1);
                    let var_l = sll - sl * sl / n;
                    let var_r = srr - sr * sr / n;
                    let floor = TEXTURE_VARIANCE * n;
                    let textured = var_l > floor && var_r > floor;
                    let score = if textured {
                        ((slr - sl * sr / n) / (var_l * var_r).sqrt()).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    };
                    left_t[base + x].visit(d, score, textured);
                    right_t[base + x - d].visit(d, score, textured);
                }
                let row = y * w;
                for x in fast {
                    let (li, ri) = (row + x, row + x - d);
                    let slr = ip.sum(ry0 - h0, ry1 - h0, x - r, x + r);
                    let n = left_stats.count[li];
                    let inv = left_stats.inv_sd[li] * right_stats.inv_sd[ri];
                    let textured = inv > 0.0;
                    let score = if textured {
                        ((slr - left_stats.sum[li] * right_stats.sum[ri] / n) * inv).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    };
                    left_t[base + x].visit(d, score, textured);
                    right_t[base + x - d].visit(d, score, textured);
                }
                // right pixels with no left partner at this d
                for xr in w - d..w {
                    right_t[base + xr].skip();
                }
            }
        }
        BlockOut {
            left: left_t,
            right: right_t,
        }
    });

    let mut disp_l = Array2::<f64>::zeros((h, w));
    let mut disp_r = Array2::<f64>::zeros((h, w));
    let mut score_l = Array2::<f64>::zeros((h, w));
    let mut tex_l = Array2::<bool>::from_elem((h, w), false);
    let mut tex_r = Array2::<bool>::from_elem((h, w), false);
    for (b, out) in outs.iter().enumerate() {
        let y0 = b * BLOCK;
        let rows = out.left.len() / w;
        for dy in 0..rows {
            for x in 0..w {
                let i = dy * w + x;
                let (l, r) = (&out.left[i], &out.right[i]);
                disp_l[[y0 + dy, x]] = l.refined();
                disp_r[[y0 + dy, x]] = r.refined();
                score_l[[y0 + dy, x]] = l.best;
                tex_l[[y0 + dy, x]] = l.textured;
                tex_r[[y0 + dy, x]] = r.textured;
            }
        }
    }

    let valid_l = Array2::from_shape_fn((h, w), |(y, x)| {
        if !tex_l[[y, x]] {
            return false;
        }
        let d = disp_l[[y, x]];
        let xr = x as isize - d.round() as isize;
        xr >= 0 && xr < w as isize && (d - disp_r[[y, xr as usize]]).abs() <= LR_TOLERANCE
    });
    let valid_r = Array2::from_shape_fn((h, w), |(y, xr)| {
        if !tex_r[[y, xr]] {
            return false;
        }
        let d = disp_r[[y, xr]];
        let x = xr as isize + d.round() as isize;
        x >= 0 && x < w as isize && (d - disp_l[[y, x as usize]]).abs() <= LR_TOLERANCE
    });
    let confidence = Array2::from_shape_fn((h, w), |(y, x)| {
        if valid_l[[y, x]] {
            score_l[[y, x]].clamp(0.0, 1.0)
        } else {
            0.0
        }
    });
    fill_invalid(&mut disp_l, &valid_l, FillFrom::Left);
    fill_invalid(&mut disp_r, &valid_r, FillFrom::Right);
    let lo = config.disparity_min - 1.0;
    let hi = (max_disp as f64).max(config.disparity_max) + 1.0;
    disp_l.mapv_inplace(|d| d.clamp(lo, hi));
    disp_r.mapv_inplace(|d| d.clamp(lo, hi));
    Ok(StereoResult {
        disparity: disp_l,
        disparity_right: disp_r,
        confidence,
    })
}

#[derive(Clone, Copy)]
enum FillFrom {
    Left,
    Right,
}

/// Replace inconsistent pixels with the nearest valid value along the row,
/// preferring the background side; rows without any valid pixel become 0.
fn fill_invalid(disp: &mut Array2<f64>, valid: &Array2<bool>, from: FillFrom) {
    let (h, w) = disp.dim();
    for y in 0..h {
        let cols: Vec<usize> = match from {
            FillFrom::Left => (0..w).collect(),
            FillFrom::Right => (0..w).rev().collect(),
        };
        let mut last: Option<f64> = None;
        let mut missing = Vec::new();
        for &x in &cols {
            if valid[[y, x]] {
                last = Some(disp[[y, x]]);
            } else if let Some(v) = last {
                disp[[y, x]] = v;
            } else {
                missing.push(x);
            }
        }
        // leading invalid run: take the first valid value on the other side
        let first = cols.iter().find(|&&x| valid[[y, x]]).map(|&x| disp[[y, x]]);
        for x in missing {
            disp[[y, x]] = first.unwrap_or(0.0);
        }
    }
}
