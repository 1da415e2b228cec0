//! Foreground/background depth distributions and the binary spatial mask
//! derived from them.
//!
//! Each pixel of the search patch gets the log ratio of the foreground and
//! background Gaussian densities at its depth. The ratio image is thresholded
//! adaptively (Otsu), then reduced to the filter's cell grid by majority vote.

use ndarray::Array2;

use crate::imaging::Patch;
use crate::{Error, Result};

/// Half-open rectangle `[r0, r1) x [c0, c1)` on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Region {
    pub fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        Self { r0, c0, r1, c1 }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.r0 && r < self.r1 && c >= self.c0 && c < self.c1
    }

    pub fn area(&self) -> usize {
        self.r1.saturating_sub(self.r0) * self.c1.saturating_sub(self.c0)
    }

    /// Cells of size `cell` whose centers fall inside this pixel region.
    pub fn to_cells(&self, cell: usize, grid: (usize, usize)) -> Region {
        let first = |p: usize| (p + cell / 2) / cell;
        let r0 = first(self.r0).min(grid.0);
        let c0 = first(self.c0).min(grid.1);
        let r1 = first(self.r1).clamp(r0, grid.0);
        let c1 = first(self.c1).clamp(c0, grid.1);
        if r1 > r0 && c1 > c0 {
            return Region::new(r0, c0, r1, c1);
        }
        // Boxes smaller than a cell still own the cell under their center.
        let rc = ((self.r0 + self.r1) / 2 / cell).min(grid.0 - 1);
        let cc = ((self.c0 + self.c1) / 2 / cell).min(grid.1 - 1);
        Region::new(rc, cc, rc + 1, cc + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthParams {
    /// Mean update rate.
    pub theta: f64,
    /// Standard deviation update rate.
    pub gamma: f64,
    /// Floor on both standard deviations, in millimeters.
    pub sigma_min: f64,
    /// Fixed likelihood-ratio threshold; `None` selects Otsu.
    pub omega: Option<f64>,
    /// Lower bound on the adaptive log-ratio threshold. A pixel is only
    /// foreground if its log ratio also exceeds this.
    pub min_log_ratio: f64,
    /// Foreground pixels must also lie within this many foreground standard
    /// deviations of the foreground mean.
    pub fg_gate: f64,
}

impl Default for DepthParams {
    fn default() -> Self {
        Self {
            theta: 0.95,
            gamma: 0.20,
            sigma_min: 20.0,
            omega: None,
            min_log_ratio: 0.0,
            fg_gate: 4.0,
        }
    }
}

impl DepthParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta", self.theta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Configuration(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.sigma_min > 0.0) {
            return Err(Error::Configuration("sigma_min must be positive".into()));
        }
        if !(self.fg_gate > 0.0) {
            return Err(Error::Configuration("fg_gate must be positive".into()));
        }
        if let Some(omega) = self.omega {
            if !(omega > 0.0) {
                return Err(Error::Configuration("omega must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthModel {
    pub mu_fg: f64,
    pub sigma_fg: f64,
    pub mu_bg: f64,
    pub sigma_bg: f64,
    pub theta: f64,
    pub gamma: f64,
    pub sigma_min: f64,
    pub fg_gate: f64,
}

/// Binary cell mask; `true` marks active filter support.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub values: Array2<bool>,
    /// Fraction of cells inside `box_cells` that are active.
    pub support_fraction: f64,
    pub box_cells: Region,
}

impl Mask {
    pub fn new(values: Array2<bool>, box_cells: Region) -> Self {
        let support_fraction = support_fraction(&values, box_cells);
        Self {
            values,
            support_fraction,
            box_cells,
        }
    }

    pub fn ones(shape: (usize, usize), box_cells: Region) -> Self {
        Self::new(Array2::from_elem(shape, true), box_cells)
    }

    /// Mask active exactly on `box_cells`.
    pub fn rectangle(shape: (usize, usize), box_cells: Region) -> Self {
        Self::new(Array2::from_shape_fn(shape, |(r, c)| box_cells.contains(r, c)), box_cells)
    }

    pub fn active_cells(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.values.mapv(|v| if v { 1.0 } else { 0.0 })
    }
}

fn support_fraction(values: &Array2<bool>, region: Region) -> f64 {
    let area = region.area();
    if area == 0 {
        return 0.0;
    }
    let mut on = 0;
    for r in region.r0..region.r1 {
        for c in region.c0..region.c1 {
            if values[[r, c]] {
                on += 1;
            }
        }
    }
    on as f64 / area as f64
}

/// Population mean and standard deviation.
fn moments(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Builds the initial distributions: foreground from valid depths inside
/// `box_region` (patch pixels), background from valid depths outside it.
pub fn init_model(patch: &Patch, box_region: Region, params: &DepthParams) -> Result<DepthModel> {
    params.validate()?;
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for ((r, c), &d) in patch.depth.indexed_iter() {
        if d == 0 {
            continue;
        }
        if box_region.contains(r, c) {
            fg.push(d as f64);
        } else {
            bg.push(d as f64);
        }
    }
    let (mu_fg, sigma_fg) = moments(&fg)
        .ok_or_else(|| Error::Initialization("no valid depth inside the initial box".into()))?;
    // Without any background measurement, park the background far behind
    // the target with a wide spread.
    let (mu_bg, sigma_bg) = moments(&bg).unwrap_or((2.0 * mu_fg + 1000.0, mu_fg.max(1000.0)));
    Ok(DepthModel {
        mu_fg,
        sigma_fg: sigma_fg.max(params.sigma_min),
        mu_bg,
        sigma_bg: sigma_bg.max(params.sigma_min),
        theta: params.theta,
        gamma: params.gamma,
        sigma_min: params.sigma_min,
        fg_gate: params.fg_gate,
    })
}

fn log_gaussian(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl DepthModel {
    pub fn log_ratio(&self, depth: u16) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        let d = depth as f64;
        log_gaussian(d, self.mu_fg, self.sigma_fg) - log_gaussian(d, self.mu_bg, self.sigma_bg)
    }

    /// Whether `depth` is close enough to the foreground mean to be target.
    /// Single Gaussians otherwise rank anything nearer than the target as
    /// foreground when the background sits far behind it.
    pub fn within_gate(&self, depth: u16) -> bool {
        depth != 0 && (depth as f64 - self.mu_fg).abs() <= self.fg_gate * self.sigma_fg
    }
}

/// Per-pixel `log P_fg(d) − log P_bg(d)`; missing depth maps to 0.
pub fn probability_ratio_image(patch: &Patch, model: &DepthModel) -> Array2<f64> {
    patch.depth.mapv(|d| model.log_ratio(d))
}

const OTSU_BINS: usize = 256;

/// Threshold maximizing between-class variance over a 256-bin histogram of
/// the value range. The returned value is the upper edge of the last bin in
/// the lower class.
pub fn otsu_threshold(image: &Array2<f64>) -> Result<f64> {
    let (lo, hi) = image
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi - lo >= 1e-6) {
        return Err(Error::DegenerateInput(format!("value range [{lo}, {hi}] is too narrow")));
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let hist = histogram(image, lo, width);

    let total: f64 = hist.iter().sum();
    let centers: Vec<f64> = (0..OTSU_BINS).map(|k| lo + (k as f64 + 0.5) * width).collect();
    let grand: f64 = hist.iter().zip(&centers).map(|(n, c)| n * c).sum();

    let mut best = (0usize, f64::NEG_INFINITY);
    let mut w0 = 0.0;
    let mut s0 = 0.0;
    for k in 0..OTSU_BINS - 1 {
        w0 += hist[k];
        s0 += hist[k] * centers[k];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = s0 / w0 - (grand - s0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best.1 {
            best = (k, between);
        }
    }
    Ok(lo + (best.0 + 1) as f64 * width)
}

pub(crate) fn histogram(image: &Array2<f64>, lo: f64, width: f64) -> Vec<f64> {
    let mut hist = vec![0.0; OTSU_BINS];
    for &v in image.iter() {
        let k = (((v - lo) / width).floor() as usize).min(OTSU_BINS - 1);
        hist[k] += 1.0;
    }
    hist
}

/// Pixel-level foreground decision on the ratio image.
pub fn threshold_ratio_image(ratio: &Array2<f64>, params: &DepthParams) -> Array2<bool> {
    let threshold = match params.omega {
        Some(omega) => omega.ln(),
        None => otsu_threshold(ratio).unwrap_or(0.0).max(params.min_log_ratio),
    };
    ratio.mapv(|v| v > threshold)
}

/// Reduces a pixel mask to `cell`-sized cells by strict majority vote.
pub fn majority_cells(pixels: &Array2<bool>, cell: usize) -> Array2<bool> {
    let (rows, cols) = pixels.dim();
    let (hc, wc) = (rows / cell, cols / cell);
    let mut counts = Array2::<usize>::zeros((hc, wc));
    for ((r, c), &v) in pixels.indexed_iter() {
        if v && r / cell < hc && c / cell < wc {
            counts[[r / cell, c / cell]] += 1;
        }
    }
    let half = cell * cell;
    counts.mapv(|n| 2 * n > half)
}

pub fn build_mask(patch: &Patch, model: &DepthModel, box_cells: Region, cell: usize, params: &DepthParams) -> Mask {
    let ratio = probability_ratio_image(patch, model);
    let mut pixels = threshold_ratio_image(&ratio, params);
    pixels.zip_mut_with(&patch.depth, |p, &d| *p = *p && model.within_gate(d));
    Mask::new(majority_cells(&pixels, cell), box_cells)
}

/// Blends the statistics of masked-in (foreground) and masked-out
/// (background) valid depths into the model. Masked-in depths outside the
/// foreground gate count as background. Returns the model unchanged
/// when the mask selects no valid foreground depth.
pub fn update_model(model: &DepthModel, patch: &Patch, mask: &Mask, cell: usize) -> DepthModel {
    let (hc, wc) = mask.values.dim();
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for ((r, c), &d) in patch.depth.indexed_iter() {
        if d == 0 || r / cell >= hc || c / cell >= wc {
            continue;
        }
        if mask.values[[r / cell, c / cell]] && model.within_gate(d) {
            fg.push(d as f64);
        } else {
            bg.push(d as f64);
        }
    }
    let Some((mu_f, sd_f)) = moments(&fg) else {
        return *model;
    };
    let mut next = *model;
    next.mu_fg = blend(mu_f, model.mu_fg, model.theta);
    next.sigma_fg = blend(sd_f, model.sigma_fg, model.gamma).max(model.sigma_min);
    if let Some((mu_b, sd_b)) = moments(&bg) {
        next.mu_bg = blend(mu_b, model.mu_bg, model.theta);
        next.sigma_bg = blend(sd_b, model.sigma_bg, model.gamma).max(model.sigma_min);
    }
    next
}

/// `current · rate + previous · (1 − rate)`
fn blend(current: f64, previous: f64, rate: f64) -> f64 {
    current * rate + previous * (1.0 - rate)
}
