//! Patch-level filter evaluation shared by tracking, scale search and
//! re-detection.

use ndarray::Array2;

use crate::dcf::{respond, FilterBank, ResponseMap};
use crate::depth_mask::Region;
use crate::features::{hann_window, FeatureExtractor, FeatureStack};
use crate::fft::Fft2;
use crate::imaging::{extract_patch, Frame, Patch, Point, Size};
use crate::{Error, Result};

/// Fixed template geometry for one tracked target.
#[derive(Debug, Clone)]
pub struct Search {
    pub extractor: FeatureExtractor,
    pub fft: Fft2,
    pub window: Array2<f64>,
    /// Template size in pixels, `(cols, rows)`.
    pub template: (usize, usize),
    pub padding: f64,
    pub weights: Vec<f64>,
}

/// Evaluation of the filter on one search patch.
#[derive(Debug, Clone)]
pub struct Probe {
    pub patch: Patch,
    pub features: FeatureStack,
    pub response: ResponseMap,
    /// Target center implied by the response peak, frame coordinates.
    pub position: Point,
}

/// Template side lengths for a target of `size`: the padded region is scaled
/// so its longer side is `template_side` pixels, and each side is rounded to
/// an even number of cells.
pub fn template_for(size: Size, padding: f64, template_side: f64, cell: usize) -> Result<(usize, usize)> {
    let pw = size.w * padding;
    let ph = size.h * padding;
    if !(pw > 0.0 && ph > 0.0) {
        return Err(Error::InvalidGeometry("target size must be positive".into()));
    }
    let scale = template_side / pw.max(ph);
    let step = 2 * cell;
    let round = |v: f64| (((v / step as f64).round() as usize).max(2)) * step;
    Ok((round(pw * scale), round(ph * scale)))
}

impl Search {
    pub fn new(extractor: FeatureExtractor, template: (usize, usize), padding: f64, weights: Vec<f64>) -> Result<Self> {
        let cell = extractor.config().cell_size;
        if !template.0.is_multiple_of(cell) || !template.1.is_multiple_of(cell) {
            return Err(Error::InvalidGeometry(format!(
                "template {template:?} is not a multiple of the {cell}-pixel cell"
            )));
        }
        let rows = template.1 / cell;
        let cols = template.0 / cell;
        if weights.len() != extractor.config().channel_count() {
            return Err(Error::Configuration(format!(
                "{} channel weights for {} channels",
                weights.len(),
                extractor.config().channel_count()
            )));
        }
        Ok(Self {
            extractor,
            fft: Fft2::new(rows, cols),
            window: hann_window(rows, cols),
            template,
            padding,
            weights,
        })
    }

    pub fn cell(&self) -> usize {
        self.extractor.config().cell_size
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.template.1 / self.cell(), self.template.0 / self.cell())
    }

    pub fn patch(&self, frame: &Frame, center: Point, size: Size) -> Result<Patch> {
        extract_patch(frame, center, size, self.padding, self.template)
    }

    pub fn features(&self, patch: &Patch) -> Result<FeatureStack> {
        let mut f = self.extractor.compose_unwindowed(patch)?;
        f.apply_window(&self.window);
        Ok(f)
    }

    /// Pixel rectangle of the un-padded target inside a patch.
    pub fn box_region(&self) -> Region {
        let (tw, th) = self.template;
        let bw = (tw as f64 / self.padding).round() as usize;
        let bh = (th as f64 / self.padding).round() as usize;
        let c0 = (tw - bw.min(tw)) / 2;
        let r0 = (th - bh.min(th)) / 2;
        Region::new(r0, c0, r0 + bh.min(th), c0 + bw.min(tw))
    }

    pub fn box_cells(&self) -> Region {
        self.box_region().to_cells(self.cell(), self.grid())
    }

    /// Runs `filter` on the patch around `center` sized for a target of `size`.
    pub fn probe(&self, frame: &Frame, filter: &FilterBank, center: Point, size: Size) -> Result<Probe> {
        let patch = self.patch(frame, center, size)?;
        let features = self.features(&patch)?;
        let response = respond(filter, &features, &self.weights, &self.fft)?;
        let (dy, dx) = response.displacement();
        let px_per_cell_x = size.w * self.padding / self.template.0 as f64 * self.cell() as f64;
        let px_per_cell_y = size.h * self.padding / self.template.1 as f64 * self.cell() as f64;
        let position = Point::new(center.x + dx * px_per_cell_x, center.y + dy * px_per_cell_y);
        Ok(Probe {
            patch,
            features,
            response,
            position,
        })
    }
}
