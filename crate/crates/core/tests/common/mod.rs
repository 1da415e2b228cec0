//! Oracles and fixtures shared by the integration suites. Nothing here calls
//! into the Fourier-domain code paths it is used to check.

#![allow(dead_code)]

use dmdcf::depth_mask::Region;
use dmdcf::features::ChannelKind;
use dmdcf::{FeatureStack, Mask};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn single_channel(x: &Array2<f64>) -> FeatureStack {
    let (r, c) = x.dim();
    FeatureStack {
        data: x.clone().into_shape_with_order((1, r, c)).unwrap(),
        cell_size: 1,
        labels: vec![ChannelKind::Gray],
    }
}

pub fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

pub fn random_stack(rng: &mut ChaCha8Rng, c: usize, rows: usize, cols: usize) -> FeatureStack {
    FeatureStack {
        data: Array3::from_shape_fn((c, rows, cols), |_| rng.gen_range(-1.0..1.0)),
        cell_size: 1,
        labels: vec![ChannelKind::Gray; c],
    }
}

/// Mask with each cell active with probability `p`, never empty.
pub fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Mask {
    let mut values = Array2::from_shape_fn((rows, cols), |_| rng.gen_bool(p));
    if !values.iter().any(|&v| v) {
        values[[rows / 2, cols / 2]] = true;
    }
    Mask::new(values, Region::new(0, 0, rows, cols))
}

/// Circular cross-correlation `r[τ] = Σ_n h[n] x[n + τ]`, by direct summation.
pub fn spatial_correlation(h: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = h.dim();
    Array2::from_shape_fn((rows, cols), |(tr, tc)| {
        let mut acc = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                acc += h[[r, c]] * x[[(r + tr) % rows, (c + tc) % cols]];
            }
        }
        acc
    })
}

/// Dense solve of `min ½ Σ_j (y_j − (M ⊙ h)ᵀ x(τ_j))² + λ/2 ‖h‖²` restricted to
/// the active cells. Returns the full spatial filter (zero off-support).
pub fn dense_masked_ridge(x: &Array2<f64>, y: &Array2<f64>, mask: &Array2<bool>, lambda: f64) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let d = rows * cols;
    let support: Vec<(usize, usize)> = mask.indexed_iter().filter(|(_, &v)| v).map(|(i, _)| i).collect();
    let a = DMatrix::from_fn(d, support.len(), |j, s| {
        let (jr, jc) = (j / cols, j % cols);
        let (nr, nc) = support[s];
        x[[(nr + jr) % rows, (nc + jc) % cols]]
    });
    let b = DVector::from_fn(d, |j, _| y[[j / cols, j % cols]]);
    let lhs = a.transpose() * &a + DMatrix::identity(support.len(), support.len()) * lambda;
    let sol = lhs.cholesky().expect("ridge system is positive definite").solve(&(a.transpose() * b));
    let mut h = Array2::zeros((rows, cols));
    for (s, &(r, c)) in support.iter().enumerate() {
        h[[r, c]] = sol[s];
    }
    h
}

pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}

/// Otsu by brute force: for every split of a 256-bin histogram over the value
/// range, recompute both class moments from the pixels and keep the first
/// split with the largest between-class variance. Returns the upper edge of
/// the lower class.
pub fn exhaustive_otsu(image: &Array2<f64>) -> f64 {
    let lo = image.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = image.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / 256.0;
    let bin = |v: f64| (((v - lo) / width).floor() as usize).min(255);
    let center = |k: usize| lo + (k as f64 + 0.5) * width;
    let mut best = (0, f64::NEG_INFINITY);
    for split in 0..255 {
        let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
        for &v in image.iter() {
            let k = bin(v);
            if k <= split {
                n0 += 1.0;
                s0 += center(k);
            } else {
                n1 += 1.0;
                s1 += center(k);
            }
        }
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let d = s0 / n0 - s1 / n1;
        let between = n0 * n1 * d * d;
        if between > best.1 {
            best = (split, between);
        }
    }
    lo + (best.0 + 1) as f64 * width
}
