//! 31-channel HOG: 18 contrast-sensitive orientations, 9 contrast-insensitive
//! orientations and 4 texture-energy channels per cell.

use ndarray::{Array3, ArrayView3};

const SENSITIVE_BINS: usize = 18;
const INSENSITIVE_BINS: usize = 9;
pub const HOG_CHANNELS: usize = SENSITIVE_BINS + INSENSITIVE_BINS + 4;

const TRUNCATION: f64 = 0.2;
const EPS: f64 = 1e-4;
const TEXTURE_WEIGHT: f64 = 0.2357;

/// `pixels` is `rows x cols x 3`; output is `31 x rows/cell x cols/cell`.
/// The caller guarantees divisibility.
pub(crate) fn hog_cells(pixels: ArrayView3<f64>, cell: usize) -> Array3<f64> {
    let (rows, cols, _) = pixels.dim();
    let hc = rows / cell;
    let wc = cols / cell;
    let hist = orientation_histograms(pixels, cell, hc, wc);

    let mut energy = vec![0.0; hc * wc];
    for (i, e) in energy.iter_mut().enumerate() {
        let h = &hist[i * SENSITIVE_BINS..(i + 1) * SENSITIVE_BINS];
        *e = (0..INSENSITIVE_BINS).map(|o| (h[o] + h[o + INSENSITIVE_BINS]).powi(2)).sum();
    }
    let energy_at = |y: isize, x: isize| {
        let y = y.clamp(0, hc as isize - 1) as usize;
        let x = x.clamp(0, wc as isize - 1) as usize;
        energy[y * wc + x]
    };

    let mut out = Array3::<f64>::zeros((HOG_CHANNELS, hc, wc));
    for y in 0..hc {
        for x in 0..wc {
            let (yi, xi) = (y as isize, x as isize);
            let mut norms = [0.0; 4];
            for (k, (dy, dx)) in [(-1, -1), (-1, 0), (0, -1), (0, 0)].into_iter().enumerate() {
                let block = energy_at(yi + dy, xi + dx)
                    + energy_at(yi + dy, xi + dx + 1)
                    + energy_at(yi + dy + 1, xi + dx)
                    + energy_at(yi + dy + 1, xi + dx + 1);
                norms[k] = 1.0 / (block + EPS).sqrt();
            }

            let h = &hist[(y * wc + x) * SENSITIVE_BINS..(y * wc + x + 1) * SENSITIVE_BINS];
            let mut texture = [0.0; 4];
            for o in 0..SENSITIVE_BINS {
                let mut acc = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let v = (h[o] * n).min(TRUNCATION);
                    acc += v;
                    texture[k] += v;
                }
                out[[o, y, x]] = 0.5 * acc;
            }
            for o in 0..INSENSITIVE_BINS {
                let sum = h[o] + h[o + INSENSITIVE_BINS];
                let acc: f64 = norms.iter().map(|n| (sum * n).min(TRUNCATION)).sum();
                out[[SENSITIVE_BINS + o, y, x]] = 0.5 * acc;
            }
            for (k, t) in texture.iter().enumerate() {
                out[[SENSITIVE_BINS + INSENSITIVE_BINS + k, y, x]] = TEXTURE_WEIGHT * t;
            }
        }
    }
    out
}

/// Per-cell 18-bin gradient histograms, flattened `[cell][bin]`. Each pixel
/// votes its gradient magnitude into the nearest orientation bin, spread
/// bilinearly over the four surrounding cell centers.
fn orientation_histograms(pixels: ArrayView3<f64>, cell: usize, hc: usize, wc: usize) -> Vec<f64> {
    let (rows, cols, _) = pixels.dim();
    let mut unit = [(0.0, 0.0); INSENSITIVE_BINS];
    for (o, u) in unit.iter_mut().enumerate() {
        let a = o as f64 * std::f64::consts::PI / INSENSITIVE_BINS as f64;
        *u = (a.cos(), a.sin());
    }

    let pixels = pixels.as_standard_layout();
    let px = pixels.as_slice().expect("standard layout");
    let at = |r: usize, c: usize, ch: usize| px[(r * cols + c) * 3 + ch];
    let mut hist = vec![0.0; hc * wc * SENSITIVE_BINS];
    let inv_cell = 1.0 / cell as f64;
    for r in 0..rows {
        let up = r.saturating_sub(1);
        let down = (r + 1).min(rows - 1);
        let yp = (r as f64 + 0.5) * inv_cell - 0.5;
        let iy = yp.floor();
        let vy1 = yp - iy;
        let iy = iy as isize;
        for c in 0..cols {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(cols - 1);

            let mut best = (0.0, 0.0, -1.0);
            for ch in 0..3 {
                let dx = (at(r, right, ch) - at(r, left, ch)) / 255.0;
                let dy = (at(down, c, ch) - at(up, c, ch)) / 255.0;
                let m2 = dx * dx + dy * dy;
                if m2 > best.2 {
                    best = (dx, dy, m2);
                }
            }
            let (dx, dy, m2) = best;
            if m2 <= 0.0 {
                continue;
            }
            let mag = m2.sqrt();

            let mut bin = 0;
            let mut best_dot = 0.0;
            for (o, &(ux, uy)) in unit.iter().enumerate() {
                let dot = ux * dx + uy * dy;
                if dot > best_dot {
                    best_dot = dot;
                    bin = o;
                } else if -dot > best_dot {
                    best_dot = -dot;
                    bin = o + INSENSITIVE_BINS;
                }
            }

            let xp = (c as f64 + 0.5) * inv_cell - 0.5;
            let ix = xp.floor();
            let vx1 = xp - ix;
            let ix = ix as isize;
            for (cy, wy) in [(iy, 1.0 - vy1), (iy + 1, vy1)] {
                if cy < 0 || cy >= hc as isize || wy == 0.0 {
                    continue;
                }
                for (cx, wx) in [(ix, 1.0 - vx1), (ix + 1, vx1)] {
                    if cx < 0 || cx >= wc as isize || wx == 0.0 {
                        continue;
                    }
                    hist[(cy as usize * wc + cx as usize) * SENSITIVE_BINS + bin] += wy * wx * mag;
                }
            }
        }
    }
    hist
}
