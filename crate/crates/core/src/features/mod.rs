//! Patch to multi-channel feature conversion: HOG, Color Names and grayscale,
//! all at cell resolution and Hann-windowed before correlation.

mod color_names;
mod hog;

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{concatenate, Array1, Array2, Array3, Axis};

use crate::imaging::Patch;
use crate::{Error, Result};

pub use color_names::{ColorNamesTable, COLOR_NAMES, COLOR_NAME_CHANNELS};
pub use hog::HOG_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Hog,
    ColorNames,
    Gray,
}

/// Channel-major feature tensor, `channels x rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub data: Array3<f64>,
    pub cell_size: usize,
    pub labels: Vec<ChannelKind>,
}

impl FeatureStack {
    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn rows(&self) -> usize {
        self.data.dim().1
    }

    pub fn cols(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    /// Multiplies every channel by the separable Hann window.
    pub fn apply_window(&mut self, window: &Array2<f64>) {
        for mut channel in self.data.outer_iter_mut() {
            channel *= window;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub hog: bool,
    pub color_names: bool,
    pub gray: bool,
    pub cell_size: usize,
    /// Overrides the shipped Color Names table.
    pub color_names_table: Option<PathBuf>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            hog: true,
            color_names: true,
            gray: true,
            cell_size: 4,
            color_names_table: None,
        }
    }
}

impl FeatureConfig {
    pub fn channel_count(&self) -> usize {
        let mut c = 0;
        if self.hog {
            c += HOG_CHANNELS;
        }
        if self.color_names {
            c += COLOR_NAME_CHANNELS;
        }
        if self.gray {
            c += 1;
        }
        c
    }
}

/// Configured feature pipeline with its lookup table loaded.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    table: Arc<ColorNamesTable>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        if config.cell_size == 0 {
            return Err(Error::Configuration("cell size must be positive".into()));
        }
        if config.channel_count() == 0 {
            return Err(Error::Configuration("no feature channels selected".into()));
        }
        let table = match &config.color_names_table {
            Some(path) if config.color_names => ColorNamesTable::load(path)?,
            _ => ColorNamesTable::builtin(),
        };
        Ok(Self {
            config,
            table: Arc::new(table),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Concatenated, Hann-windowed features for `patch`.
    pub fn compose(&self, patch: &Patch) -> Result<FeatureStack> {
        let mut stack = self.compose_unwindowed(patch)?;
        let window = hann_window(stack.rows(), stack.cols());
        stack.apply_window(&window);
        Ok(stack)
    }

    /// Concatenated features without the cosine window; used when features
    /// for a large area are computed once and windowed per sub-window.
    pub fn compose_unwindowed(&self, patch: &Patch) -> Result<FeatureStack> {
        let cell = self.config.cell_size;
        let mut parts = Vec::new();
        if self.config.hog {
            parts.push(extract_hog(patch, cell)?);
        }
        if self.config.color_names {
            parts.push(extract_color_names(patch, &self.table, cell)?);
        }
        if self.config.gray {
            parts.push(extract_gray(patch, cell)?);
        }
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        let data = concatenate(Axis(0), &views).expect("feature blocks share a cell grid");
        let labels = parts.into_iter().flat_map(|p| p.labels).collect();
        Ok(FeatureStack {
            data,
            cell_size: cell,
            labels,
        })
    }
}

fn check_cells(patch: &Patch, cell: usize) -> Result<(usize, usize)> {
    let (rows, cols) = (patch.rows(), patch.cols());
    if cell == 0 || rows % cell != 0 || cols % cell != 0 || rows < cell || cols < cell {
        return Err(Error::InvalidGeometry(format!(
            "patch {cols}x{rows} is not divisible into {cell}-pixel cells"
        )));
    }
    Ok((rows / cell, cols / cell))
}

pub fn extract_hog(patch: &Patch, cell: usize) -> Result<FeatureStack> {
    check_cells(patch, cell)?;
    Ok(FeatureStack {
        data: hog::hog_cells(patch.pixels.view(), cell),
        cell_size: cell,
        labels: vec![ChannelKind::Hog; HOG_CHANNELS],
    })
}

pub fn extract_color_names(patch: &Patch, table: &ColorNamesTable, cell: usize) -> Result<FeatureStack> {
    let (hc, wc) = check_cells(patch, cell)?;
    let cols = patch.cols();
    let pixels = patch.pixels.as_standard_layout();
    let flat = pixels.as_slice().expect("standard layout");
    let quantize = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    // Cell-major accumulator, channels innermost.
    let mut acc = vec![0.0f64; hc * wc * COLOR_NAME_CHANNELS];
    for (i, px) in flat.chunks_exact(3).enumerate() {
        let (r, c) = (i / cols, i % cols);
        let entry = table.lookup(quantize(px[0]), quantize(px[1]), quantize(px[2]));
        let base = ((r / cell) * wc + c / cell) * COLOR_NAME_CHANNELS;
        for (slot, &p) in acc[base..base + COLOR_NAME_CHANNELS].iter_mut().zip(entry) {
            *slot += p as f64;
        }
    }
    let norm = 1.0 / (cell * cell) as f64;
    let data = Array3::from_shape_fn((COLOR_NAME_CHANNELS, hc, wc), |(k, r, c)| {
        acc[(r * wc + c) * COLOR_NAME_CHANNELS + k] * norm
    });
    Ok(FeatureStack {
        data,
        cell_size: cell,
        labels: vec![ChannelKind::ColorNames; COLOR_NAME_CHANNELS],
    })
}

/// Per-cell mean luminance, zero-centered into `[-0.5, 0.5]`.
pub fn extract_gray(patch: &Patch, cell: usize) -> Result<FeatureStack> {
    let (hc, wc) = check_cells(patch, cell)?;
    let cols = patch.cols();
    let pixels = patch.pixels.as_standard_layout();
    let flat = pixels.as_slice().expect("standard layout");
    let mut data = Array3::<f64>::zeros((1, hc, wc));
    {
        let acc = data.as_slice_mut().expect("fresh array");
        for (i, px) in flat.chunks_exact(3).enumerate() {
            let (r, c) = (i / cols, i % cols);
            acc[(r / cell) * wc + c / cell] += luminance(px[0], px[1], px[2]);
        }
    }
    data.mapv_inplace(|v| v / (255.0 * (cell * cell) as f64) - 0.5);
    Ok(FeatureStack {
        data,
        cell_size: cell,
        labels: vec![ChannelKind::Gray],
    })
}

pub(crate) fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn hann(n: usize) -> Array1<f64> {
    if n < 2 {
        return Array1::ones(n);
    }
    Array1::from_shape_fn(n, |i| {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
    })
}

/// Separable 2D Hann window, zero on the outer rows and columns.
pub fn hann_window(rows: usize, cols: usize) -> Array2<f64> {
    let wr = hann(rows);
    let wc = hann(cols);
    Array2::from_shape_fn((rows, cols), |(r, c)| wr[r] * wc[c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::BoundingBox;
    use ndarray::Array2 as A2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patch_from(pixels: Array3<f64>) -> Patch {
        let (h, w, _) = pixels.dim();
        Patch {
            pixels,
            depth: A2::zeros((h, w)),
            origin: BoundingBox::new(0.0, 0.0, w as f64, h as f64).unwrap(),
        }
    }

    fn constant_patch(rows: usize, cols: usize, rgb: [f64; 3]) -> Patch {
        patch_from(Array3::from_shape_fn((rows, cols, 3), |(_, _, c)| rgb[c]))
    }

    #[test]
    fn hog_of_constant_patch_is_zero() {
        let f = extract_hog(&constant_patch(32, 24, [90.0, 120.0, 33.0]), 4).unwrap();
        assert_eq!(f.data.dim(), (31, 8, 6));
        assert!(f.data.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn hog_vertical_edge_votes_horizontal_gradient() {
        let pixels = Array3::from_shape_fn((32, 32, 3), |(_, c, _)| if c < 16 { 20.0 } else { 230.0 });
        let f = extract_hog(&patch_from(pixels), 4).unwrap();
        // Gradient points along +x: orientation 0 of the 9 contrast-insensitive
        // bins, which start at channel 18.
        let energy: Vec<f64> = (0..9).map(|o| f.data.index_axis(Axis(0), 18 + o).sum()).collect();
        let argmax = (0..9).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert_eq!(argmax, 0);
        assert!(energy[0] > 10.0 * energy[1..].iter().sum::<f64>());
    }

    #[test]
    fn hog_values_lie_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pixels = Array3::from_shape_fn((40, 48, 3), |_| rng.gen_range(0.0..255.0));
        let f = extract_hog(&patch_from(pixels), 4).unwrap();
        assert!(f.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn indivisible_patch_is_rejected() {
        let p = constant_patch(30, 32, [0.0; 3]);
        assert!(matches!(extract_hog(&p, 4), Err(Error::InvalidGeometry(_))));
        assert!(matches!(extract_gray(&p, 4), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn gray_extremes_and_checkerboard() {
        let black = extract_gray(&constant_patch(8, 8, [0.0; 3]), 4).unwrap();
        assert!(black.data.iter().all(|&v| (v + 0.5).abs() < 1e-12));
        let white = extract_gray(&constant_patch(8, 8, [255.0; 3]), 4).unwrap();
        assert!(white.data.iter().all(|&v| (v - 0.5).abs() < 1e-12));

        let board = Array3::from_shape_fn((16, 16, 3), |(r, c, _)| {
            if (r / 4 + c / 4) % 2 == 0 { 255.0 } else { 0.0 }
        });
        let g = extract_gray(&patch_from(board), 4).unwrap();
        for ((_, r, c), &v) in g.data.indexed_iter() {
            let want = if (r + c) % 2 == 0 { 0.5 } else { -0.5 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn color_names_red_and_two_tone() {
        let table = ColorNamesTable::builtin();
        let red = extract_color_names(&constant_patch(8, 8, [255.0, 0.0, 0.0]), &table, 4).unwrap();
        let red_row = table.lookup(255, 0, 0);
        let red_idx = (0..10).max_by(|&a, &b| red_row[a].total_cmp(&red_row[b])).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let cellv: Vec<f64> = (0..10).map(|k| red.data[[k, r, c]]).collect();
                let arg = (0..10).max_by(|&a, &b| cellv[a].total_cmp(&cellv[b])).unwrap();
                assert_eq!(arg, red_idx);
            }
        }

        // One cell: 12 pixels of blue, 4 of yellow.
        let pixels = Array3::from_shape_fn((4, 4, 3), |(r, _, c)| {
            if r < 3 { [20.0, 40.0, 210.0][c] } else { [250.0, 230.0, 30.0][c] }
        });
        let cn = extract_color_names(&patch_from(pixels), &table, 4).unwrap();
        let a = table.lookup(20, 40, 210);
        let b = table.lookup(250, 230, 30);
        for k in 0..10 {
            let want = (12.0 * a[k] as f64 + 4.0 * b[k] as f64) / 16.0;
            assert!((cn.data[[k, 0, 0]] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_channel_counts_and_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let patch = patch_from(Array3::from_shape_fn((48, 64, 3), |_| rng.gen_range(0.0..255.0)));
        let full = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let f = full.compose(&patch).unwrap();
        assert_eq!(f.data.dim(), (42, 12, 16));
        assert_eq!(f.labels.iter().filter(|&&k| k == ChannelKind::Hog).count(), 31);
        for ch in f.data.outer_iter() {
            for c in 0..16 {
                assert!(ch[[0, c]].abs() < 1e-6 && ch[[11, c]].abs() < 1e-6);
            }
            for r in 0..12 {
                assert!(ch[[r, 0]].abs() < 1e-6 && ch[[r, 15]].abs() < 1e-6);
            }
        }
        assert_eq!(f, full.compose(&patch).unwrap());

        let gray_only = FeatureExtractor::new(FeatureConfig {
            hog: false,
            color_names: false,
            ..FeatureConfig::default()
        })
        .unwrap();
        assert_eq!(gray_only.compose(&patch).unwrap().channels(), 1);
    }
}
