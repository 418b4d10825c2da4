//! Two-dimensional FFT plumbing and FFT-based linear convolution.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// A cached 1-D plan from the thread-local planner.
pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Smallest `n' >= n` whose only prime factors are 2, 3 and 5.
pub fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// In-place 2-D transform of a row-major array. The inverse is scaled by 1/(rows*cols).
pub fn fft2(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (rows, cols) = data.dim();
    transform_rows(data, 0..rows, direction);
    transform_columns(data, direction);
    if direction == FftDirection::Inverse {
        let scale = 1.0 / (rows * cols) as f64;
        data.mapv_inplace(|v| v * scale);
    }
}

fn transform_rows(data: &mut Array2<Complex64>, rows: std::ops::Range<usize>, direction: FftDirection) {
    let cols = data.ncols();
    let plan = plan(cols, direction);
    let slice = data.as_slice_mut().expect("fft2 requires a standard-layout array");
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(&mut slice[rows.start * cols..rows.end * cols], &mut scratch);
}

/// Column transforms through a transposed copy, so rustfft sees contiguous batches.
fn transform_columns(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (rows, cols) = data.dim();
    let plan = plan(rows, direction);
    let mut t = vec![Complex64::default(); rows * cols];
    {
        let src = data.as_slice().expect("fft2 requires a standard-layout array");
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = src[r * cols + c];
            }
        }
    }
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(&mut t, &mut scratch);
    let dst = data.as_slice_mut().expect("fft2 requires a standard-layout array");
    for c in 0..cols {
        for r in 0..rows {
            dst[r * cols + c] = t[c * rows + r];
        }
    }
}

/// Geometry of a "same"-size linear convolution done with FFTs on an
/// edge-replicated padded canvas.
///
/// Kernels are `k x k` with their origin at `(k/2, k/2)`; the canvas is padded
/// by `k/2` on every side (more on the bottom/right to reach a fast FFT size),
/// which is enough for the circular product to equal the linear one inside
/// the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub padded_height: usize,
    pub padded_width: usize,
}

impl ConvGeometry {
    pub fn new(height: usize, width: usize, kernel: usize) -> Self {
        let margin = kernel / 2;
        Self {
            height,
            width,
            kernel,
            padded_height: good_size(height + 2 * margin),
            padded_width: good_size(width + 2 * margin),
        }
    }

    pub fn margin(&self) -> usize {
        self.kernel / 2
    }

    /// Edge-replicate `img` onto the padded canvas.
    pub fn pad(&self, img: ArrayView2<f64>) -> Array2<f64> {
        let m = self.margin() as isize;
        let (h, w) = (self.height as isize, self.width as isize);
        Array2::from_shape_fn((self.padded_height, self.padded_width), |(y, x)| {
            let sy = (y as isize - m).clamp(0, h - 1) as usize;
            let sx = (x as isize - m).clamp(0, w - 1) as usize;
            img[[sy, sx]]
        })
    }

    /// Edge-replicate an index map (used for layer labels).
    pub fn pad_labels(&self, labels: ArrayView2<u16>) -> Array2<u16> {
        let m = self.margin() as isize;
        let (h, w) = (self.height as isize, self.width as isize);
        Array2::from_shape_fn((self.padded_height, self.padded_width), |(y, x)| {
            let sy = (y as isize - m).clamp(0, h - 1) as usize;
            let sx = (x as isize - m).clamp(0, w - 1) as usize;
            labels[[sy, sx]]
        })
    }

    /// Forward spectrum of a kernel wrapped around the canvas origin.
    pub fn kernel_spectrum(&self, kernel: ArrayView2<f64>) -> Array2<Complex64> {
        let mut buf = Array2::<Complex64>::zeros((self.padded_height, self.padded_width));
        self.wrap_kernel(&mut buf, kernel, Complex64::new(1.0, 0.0));
        self.kernel_transform(&mut buf);
        buf
    }

    /// Spectra of two kernels computed with one complex transform.
    pub fn kernel_spectrum_pair(
        &self,
        first: ArrayView2<f64>,
        second: ArrayView2<f64>,
    ) -> (Array2<Complex64>, Array2<Complex64>) {
        let mut buf = Array2::<Complex64>::zeros((self.padded_height, self.padded_width));
        self.wrap_kernel(&mut buf, first, Complex64::new(1.0, 0.0));
        self.wrap_kernel(&mut buf, second, Complex64::new(0.0, 1.0));
        self.kernel_transform(&mut buf);
        split_packed(&buf)
    }

    fn wrap_kernel(&self, buf: &mut Array2<Complex64>, kernel: ArrayView2<f64>, unit: Complex64) {
        let (kh, kw) = kernel.dim();
        assert_eq!((kh, kw), (self.kernel, self.kernel), "kernel size mismatch");
        let c = (self.kernel / 2) as isize;
        let (ph, pw) = (self.padded_height as isize, self.padded_width as isize);
        for ((i, j), &v) in kernel.indexed_iter() {
            let y = (i as isize - c).rem_euclid(ph) as usize;
            let x = (j as isize - c).rem_euclid(pw) as usize;
            buf[[y, x]] += unit * v;
        }
    }

    /// Forward transform of a wrapped kernel; only rows the kernel touches
    /// need the first pass.
    fn kernel_transform(&self, buf: &mut Array2<Complex64>) {
        let ph = self.padded_height;
        let c = self.kernel / 2;
        let below = self.kernel - c;
        if below + c >= ph {
            transform_rows(buf, 0..ph, FftDirection::Forward);
        } else {
            transform_rows(buf, 0..below, FftDirection::Forward);
            transform_rows(buf, ph - c..ph, FftDirection::Forward);
        }
        transform_columns(buf, FftDirection::Forward);
    }

    /// Forward spectrum of a real padded canvas.
    pub fn spectrum(&self, padded: ArrayView2<f64>) -> Array2<Complex64> {
        let mut buf = padded.mapv(|v| Complex64::new(v, 0.0));
        fft2(&mut buf, FftDirection::Forward);
        buf
    }

    /// Forward spectrum of `re + i*im`, two real canvases packed in one transform.
    pub fn packed_spectrum(&self, re: ArrayView2<f64>, im: ArrayView2<f64>) -> Array2<Complex64> {
        let mut buf = Array2::<Complex64>::zeros(re.dim());
        Zip::from(&mut buf)
            .and(&re)
            .and(&im)
            .for_each(|b, &r, &i| *b = Complex64::new(r, i));
        fft2(&mut buf, FftDirection::Forward);
        buf
    }

    /// Inverse-transform a spectrum and crop the image window. Rows outside
    /// the window skip the second pass.
    pub fn crop_inverse(&self, mut spectrum: Array2<Complex64>) -> Array2<Complex64> {
        let m = self.margin();
        transform_columns(&mut spectrum, FftDirection::Inverse);
        transform_rows(&mut spectrum, m..m + self.height, FftDirection::Inverse);
        let scale = 1.0 / (self.padded_height * self.padded_width) as f64;
        spectrum
            .slice(s![m..m + self.height, m..m + self.width])
            .mapv(|v| v * scale)
    }
}

/// Split the spectrum of `a + i*b` (both real) into the spectra of `a` and `b`.
pub fn split_packed(packed: &Array2<Complex64>) -> (Array2<Complex64>, Array2<Complex64>) {
    let (ph, pw) = packed.dim();
    let src = packed.as_slice().expect("standard layout");
    let mut a = vec![Complex64::default(); ph * pw];
    let mut b = vec![Complex64::default(); ph * pw];
    let minus_half_i = Complex64::new(0.0, -0.5);
    for y in 0..ph {
        let my = (ph - y) % ph;
        let row = &src[y * pw..(y + 1) * pw];
        let mirror_row = &src[my * pw..(my + 1) * pw];
        for x in 0..pw {
            let v = row[x];
            let m = mirror_row[(pw - x) % pw].conj();
            a[y * pw + x] = (v + m) * 0.5;
            b[y * pw + x] = (v - m) * minus_half_i;
        }
    }
    (
        Array2::from_shape_vec((ph, pw), a).expect("shape"),
        Array2::from_shape_vec((ph, pw), b).expect("shape"),
    )
}

/// Linear "same" convolution with edge-replicate boundary handling.
pub fn convolve_same(img: ArrayView2<f64>, kernel: ArrayView2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let geo = ConvGeometry::new(h, w, kernel.nrows());
    let mut spec = geo.spectrum(geo.pad(img).view());
    spec *= &geo.kernel_spectrum(kernel);
    geo.crop_inverse(spec).mapv(|v| v.re)
}
