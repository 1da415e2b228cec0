//! Frame-by-frame tracker: scale search, depth mask, masked filter update and
//! the occlusion state machine.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::dcf::{self, FilterBank};
use crate::depth_mask::{self, DepthModel, DepthParams, Mask};
use crate::features::{FeatureConfig, FeatureExtractor, FeatureStack};
use crate::fft::Spectrum;
use crate::imaging::{BoundingBox, Frame, Patch, Point, Size};
use crate::masked_filter::{solve_masked, AdmmConfig};
use crate::occlusion::{self, OcclusionConfig, OcclusionState, ResponseHistory};
use crate::search::{template_for, Probe, Search};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Filter learning rate.
    pub psi: f64,
    /// Ridge regularization.
    pub lambda: f64,
    /// Search region side relative to the target box.
    pub padding: f64,
    /// Longer side of the template, in pixels.
    pub template_side: f64,
    pub scale_factors: Vec<f64>,
    /// Multiplies the peak of every scale other than 1.
    pub scale_penalty: f64,
    pub features: FeatureConfig,
    /// Per-channel response weights; uniform when absent.
    pub channel_weights: Option<Vec<f64>>,
    pub depth: DepthParams,
    pub admm: AdmmConfig,
    pub occlusion: OcclusionConfig,
    /// Train on the depth mask. When off the filter is the unconstrained
    /// closed form.
    pub use_depth_mask: bool,
    pub warm_start: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            psi: 0.03,
            lambda: 0.01,
            padding: 2.0,
            template_side: 200.0,
            scale_factors: vec![0.985, 1.0, 1.015],
            scale_penalty: 0.99,
            features: FeatureConfig::default(),
            channel_weights: None,
            depth: DepthParams::default(),
            admm: AdmmConfig::default(),
            occlusion: OcclusionConfig::default(),
            use_depth_mask: true,
            warm_start: true,
        }
    }
}

impl TrackerConfig {
    /// Baseline with depth masking and occlusion handling switched off.
    pub fn baseline() -> Self {
        Self {
            use_depth_mask: false,
            occlusion: OcclusionConfig {
                enabled: false,
                ..OcclusionConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi > 0.0 && self.psi <= 1.0) {
            return Err(Error::Configuration(format!("psi = {} outside (0, 1]", self.psi)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Configuration(format!("lambda = {} must be positive", self.lambda)));
        }
        if !(self.padding >= 1.0) {
            return Err(Error::Configuration(format!("padding = {} below 1", self.padding)));
        }
        if !(self.template_side > 0.0) {
            return Err(Error::Configuration("template side must be positive".into()));
        }
        if self.scale_factors.is_empty() || self.scale_factors.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::Configuration("scale factors must be positive and non-empty".into()));
        }
        if !(self.scale_penalty > 0.0 && self.scale_penalty <= 1.0) {
            return Err(Error::Configuration(format!(
                "scale penalty = {} outside (0, 1]",
                self.scale_penalty
            )));
        }
        self.depth.validate()?;
        self.admm.validate()?;
        self.occlusion.validate()
    }
}

/// Per-frame result.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub index: usize,
    pub bbox: BoundingBox,
    pub occluded: bool,
    pub r_max: f64,
    pub scale: f64,
    pub support_fraction: f64,
    /// Set when the frame could not be processed; the state is unchanged.
    pub error: Option<String>,
}

/// Everything that evolves between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub position: Point,
    pub size: Size,
    pub filter: FilterBank,
    pub depth_model: Option<DepthModel>,
    pub mask: Mask,
    pub history: ResponseHistory,
    pub occlusion: OcclusionState,
    pub last_index: usize,
}

impl TrackerState {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.position.x - self.size.w / 2.0,
            y: self.position.y - self.size.h / 2.0,
            w: self.size.w,
            h: self.size.h,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    search: Search,
    y_hat: Spectrum,
    /// `(width, height)` of the init frame; every later frame must match.
    frame_size: (usize, usize),
    state: TrackerState,
}

impl Tracker {
    pub fn init(frame: &Frame, bbox: BoundingBox, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if !(bbox.w > 0.0 && bbox.h > 0.0) {
            return Err(Error::InvalidGeometry(format!("degenerate box {bbox:?}")));
        }
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        if bbox.right() <= 0.0 || bbox.bottom() <= 0.0 || bbox.x >= fw || bbox.y >= fh {
            return Err(Error::InvalidGeometry(format!("box {bbox:?} lies outside the frame")));
        }
        let extractor = FeatureExtractor::new(config.features.clone())?;
        let template = template_for(
            bbox.size(),
            config.padding,
            config.template_side,
            config.features.cell_size,
        )?;
        let channels = config.features.channel_count();
        let weights = config
            .channel_weights
            .clone()
            .unwrap_or_else(|| dcf::uniform_weights(channels));
        let search = Search::new(extractor, template, config.padding, weights)?;
        let grid = search.grid();
        let sigma = dcf::desired_output_sigma(grid.0, grid.1);
        let y_hat = dcf::make_desired_output(grid, sigma, &search.fft)?;

        let position = bbox.center();
        let size = bbox.size();
        let patch = search.patch(frame, position, size)?;
        let features = search.features(&patch)?;
        let box_cells = search.box_cells();

        let depth_model = depth_mask::init_model(&patch, search.box_region(), &config.depth).ok();
        let mask = match &depth_model {
            Some(model) => {
                let m = depth_mask::build_mask(&patch, model, box_cells, search.cell(), &config.depth);
                if m.active_cells() == 0 {
                    Mask::rectangle(grid, box_cells)
                } else {
                    m
                }
            }
            None => Mask::ones(grid, box_cells),
        };

        let mut tracker = Self {
            frame_size: (frame.width(), frame.height()),
            search,
            y_hat,
            state: TrackerState {
                position,
                size,
                filter: FilterBank {
                    h_hat: Vec::new(),
                    y_hat: Spectrum::zeros(grid),
                    lambda: config.lambda,
                },
                depth_model,
                mask,
                history: ResponseHistory::new(config.occlusion.history_len),
                occlusion: OcclusionState::default(),
                last_index: frame.index,
            },
            config,
        };
        let filter = tracker.train(&features, &tracker.state.mask, None)?;
        let response = dcf::respond(&filter, &features, &tracker.search.weights, &tracker.search.fft)?;
        tracker.state.history.record(response.peak.value)?;
        tracker.state.filter = filter;
        Ok(tracker)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn search(&self) -> &Search {
        &self.search
    }

    pub fn bbox(&self) -> BoundingBox {
        self.state.bbox()
    }

    pub fn is_occluded(&self) -> bool {
        self.state.occlusion.occluded
    }

    /// Hash of the learned model (filter and depth distributions). Constant
    /// while the target is occluded.
    pub fn model_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for spec in &self.state.filter.h_hat {
            for v in spec.iter() {
                v.re.to_bits().hash(&mut h);
                v.im.to_bits().hash(&mut h);
            }
        }
        if let Some(m) = &self.state.depth_model {
            for v in [m.mu_fg, m.sigma_fg, m.mu_bg, m.sigma_bg] {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    fn train(&self, features: &FeatureStack, mask: &Mask, warm: Option<&FilterBank>) -> Result<FilterBank> {
        if self.config.use_depth_mask {
            solve_masked(
                features,
                &self.y_hat,
                mask,
                self.config.lambda,
                &self.config.admm,
                warm,
                &self.search.fft,
            )
        } else {
            dcf::train_closed_form(features, &self.y_hat, self.config.lambda, &self.search.fft)
        }
    }

    /// Processes one frame. A failure leaves the state untouched and is
    /// reported in the output.
    pub fn track(&mut self, frame: &Frame) -> TrackOutput {
        match self.step(frame) {
            Ok((state, out)) => {
                self.state = state;
                out
            }
            Err(e) => TrackOutput {
                index: frame.index,
                bbox: self.state.bbox(),
                occluded: self.state.occlusion.occluded,
                r_max: f64::NAN,
                scale: 1.0,
                support_fraction: self.state.mask.support_fraction,
                error: Some(e.to_string()),
            },
        }
    }

    fn step(&self, frame: &Frame) -> Result<(TrackerState, TrackOutput)> {
        if frame.index <= self.state.last_index {
            return Err(Error::Ingestion {
                index: frame.index,
                reason: format!("frame index not after {}", self.state.last_index),
            });
        }
        if (frame.width(), frame.height()) != self.frame_size {
            return Err(Error::Ingestion {
                index: frame.index,
                reason: format!(
                    "frame is {}x{}, sequence is {}x{}",
                    frame.width(),
                    frame.height(),
                    self.frame_size.0,
                    self.frame_size.1
                ),
            });
        }
        let mut state = self.state.clone();
        state.last_index = frame.index;
        if state.occlusion.occluded {
            self.step_occluded(frame, state)
        } else {
            self.step_visible(frame, state)
        }
    }

    fn scale_search(&self, frame: &Frame) -> Result<(f64, Probe)> {
        let mut best: Option<(f64, f64, Probe)> = None;
        for &f in &self.config.scale_factors {
            let probe = self
                .search
                .probe(frame, &self.state.filter, self.state.position, self.state.size.scaled(f))?;
            let penalty = if (f - 1.0).abs() < 1e-12 {
                1.0
            } else {
                self.config.scale_penalty
            };
            let score = probe.response.peak.value * penalty;
            if best.as_ref().is_none_or(|b| score > b.1) {
                best = Some((f, score, probe));
            }
        }
        let (f, _, probe) = best.expect("scale factors are non-empty");
        Ok((f, probe))
    }

    fn mask_at(
        &self,
        frame: &Frame,
        position: Point,
        size: Size,
        depth_model: Option<&DepthModel>,
    ) -> Result<(Patch, Mask)> {
        let patch = self.search.patch(frame, position, size)?;
        let grid = self.search.grid();
        let box_cells = self.search.box_cells();
        let mask = match depth_model {
            Some(model) => depth_mask::build_mask(&patch, model, box_cells, self.search.cell(), &self.config.depth),
            None => Mask::ones(grid, box_cells),
        };
        Ok((patch, mask))
    }

    fn step_visible(&self, frame: &Frame, mut state: TrackerState) -> Result<(TrackerState, TrackOutput)> {
        let (scale, probe) = self.scale_search(frame)?;
        let r_max = probe.response.peak.value;
        state.position = probe.position;
        state.size = state.size.scaled(scale);

        let (patch, mask) = self.mask_at(frame, state.position, state.size, state.depth_model.as_ref())?;
        let occluded = self.config.occlusion.enabled
            && occlusion::detect_occlusion(r_max, &state.history, mask.support_fraction, &self.config.occlusion)?;

        let mut out = TrackOutput {
            index: frame.index,
            bbox: state.bbox(),
            occluded,
            r_max,
            scale,
            support_fraction: mask.support_fraction,
            error: None,
        };
        if occluded {
            // Position and size stay at the last trusted estimate.
            let mut frozen = self.state.clone();
            frozen.last_index = frame.index;
            frozen.occlusion.enter();
            out.bbox = frozen.bbox();
            return Ok((frozen, out));
        }

        let features = self.search.features(&patch)?;
        let train_mask = if mask.active_cells() == 0 {
            Mask::rectangle(self.search.grid(), self.search.box_cells())
        } else {
            mask.clone()
        };
        if let Some(model) = &state.depth_model {
            if mask.active_cells() > 0 {
                state.depth_model = Some(depth_mask::update_model(model, &patch, &mask, self.search.cell()));
            }
        }
        let warm = self.config.warm_start.then_some(&state.filter);
        let fresh = self.train(&features, &train_mask, warm)?;
        state.filter = dcf::update_model(&state.filter, &fresh, self.config.psi)?;
        state.history.record(r_max)?;
        state.mask = mask;
        Ok((state, out))
    }

    fn step_occluded(&self, frame: &Frame, mut state: TrackerState) -> Result<(TrackerState, TrackOutput)> {
        let mut candidates =
            occlusion::search_candidates(frame, &state.filter, &self.search, state.size, self.config.occlusion.candidates)?;
        if let Some(model) = &state.depth_model {
            for d in &mut candidates {
                let (_, mask) = self.mask_at(frame, d.position, state.size, Some(model))?;
                d.support_fraction = Some(mask.support_fraction);
            }
        }
        let chosen = candidates
            .iter()
            .position(|d| occlusion::accept(d, &state.history, &self.config.occlusion));
        let accepted = chosen.is_some();
        let detection = candidates[chosen.unwrap_or(0)];
        if accepted {
            state.position = detection.position;
            state.occlusion.clear();
        } else {
            state.occlusion.stay();
        }
        let out = TrackOutput {
            index: frame.index,
            bbox: if accepted { state.bbox() } else { self.state.bbox() },
            occluded: !accepted,
            r_max: detection.r_max,
            scale: 1.0,
            support_fraction: detection.support_fraction.unwrap_or(f64::NAN),
            error: None,
        };
        Ok((state, out))
    }
}
