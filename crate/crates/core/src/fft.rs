//! Two-dimensional complex FFTs over row-major `ndarray` grids.
//!
//! Forward transforms are unnormalized; inverse transforms divide by the
//! number of elements, so `inverse(forward(x)) == x`.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Zip};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type Spectrum = Array2<Complex64>;

#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn forward_real(&self, input: ArrayView2<f64>) -> Spectrum {
        let mut out = input.mapv(|v| Complex64::new(v, 0.0));
        self.forward(&mut out);
        out
    }

    pub fn forward(&self, data: &mut Spectrum) {
        self.transform(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut Spectrum) {
        self.transform(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.mapv_inplace(|v| v * scale);
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, spectrum: &Spectrum) -> Array2<f64> {
        let mut tmp = spectrum.clone();
        self.inverse(&mut tmp);
        tmp.mapv(|v| v.re)
    }

    fn transform(&self, data: &mut Spectrum, row_plan: &Arc<dyn Fft<f64>>, col_plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.rows, self.cols), "spectrum shape mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let (rows, cols) = (self.rows, self.cols);
        let scratch_len = row_plan
            .get_inplace_scratch_len()
            .max(col_plan.get_inplace_scratch_len());
        BUFFERS.with(|cell| {
            let (scratch, transposed) = &mut *cell.borrow_mut();
            let zero = Complex64::new(0.0, 0.0);
            scratch.resize(scratch_len.max(scratch.len()), zero);
            transposed.resize(rows * cols, zero);
            let flat = data.as_slice_mut().expect("standard layout");
            row_plan.process_with_scratch(flat, &mut scratch[..scratch_len]);
            for r in 0..rows {
                for c in 0..cols {
                    transposed[c * rows + r] = flat[r * cols + c];
                }
            }
            col_plan.process_with_scratch(&mut transposed[..rows * cols], &mut scratch[..scratch_len]);
            for c in 0..cols {
                for r in 0..rows {
                    flat[r * cols + c] = transposed[c * rows + r];
                }
            }
        });
    }
}

thread_local! {
    /// FFT scratch and transpose buffers, reused across calls on a thread.
    static BUFFERS: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

pub fn squared_norm(a: &Spectrum) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// `Σ conj(a) ⊙ b`, the complex inner product used by the dual updates.
pub fn real_inner(a: &Spectrum, b: &Spectrum) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|x, y| acc += (x.conj() * y).re);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(x: &Array2<f64>) -> Spectrum {
        let (h, w) = x.dim();
        Array2::from_shape_fn((h, w), |(u, v)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let phase = -2.0 * std::f64::consts::PI
                        * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    acc += Complex64::from_polar(x[[r, c]], phase);
                }
            }
            acc
        })
    }

    #[test]
    fn matches_naive_dft_on_odd_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((5, 7), |_| rng.gen_range(-1.0..1.0));
        let fft = Fft2::new(5, 7);
        let got = fft.forward_real(x.view());
        let want = naive_dft(&x);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
        let back = fft.inverse_real(&got);
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
