//! Seeded synthetic RGBD sequences: a textured target moving over a textured
//! background, optionally swept by a nearer occluder band whose position is
//! derived from a per-frame coverage schedule.

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bench::dataset::{load_sequence, Category, Sequence};
use crate::imaging::{BoundingBox, Frame};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    /// Millimeters; must be nearer than the target.
    pub depth: f64,
    /// Band width in pixels. The band spans the full frame height.
    pub width: f64,
    /// Fraction of the target covered in each frame.
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Target size `[w, h]` at frame 0.
    pub target_size: [f64; 2],
    /// Top-left corner at frame 0.
    pub target_start: [f64; 2],
    /// Pixels per frame.
    pub target_velocity: [f64; 2],
    /// Per-frame multiplicative size change.
    pub target_growth: f64,
    /// Explicit top-left corners per frame; overrides start and velocity.
    pub target_path: Option<Vec<[f64; 2]>>,
    pub target_depth: f64,
    pub background_depth: f64,
    pub occluder: Option<OccluderSpec>,
    pub rgb_noise: f64,
    pub depth_noise: f64,
    pub depth_hole_rate: f64,
    /// Frames with at least this coverage are marked absent in the truth.
    pub absent_coverage: f64,
    pub tags: Vec<String>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frames: 30,
            seed: 0,
            target_size: [48.0, 64.0],
            target_start: [120.0, 90.0],
            target_velocity: [0.0, 0.0],
            target_growth: 1.0,
            target_path: None,
            target_depth: 2500.0,
            background_depth: 4500.0,
            occluder: None,
            rgb_noise: 2.0,
            depth_noise: 8.0,
            depth_hole_rate: 0.0,
            absent_coverage: 0.9,
            tags: Vec::new(),
        }
    }
}

impl SyntheticSpec {
    /// 640x480 sequence of 80 frames in which an occluder sweeps across the
    /// moving target, covering at least 90% of it for 20 frames (a quarter
    /// of the sequence).
    pub fn occlusion_sweep(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0cc1);
        let mut coverage = vec![0.0; 80];
        for (i, c) in [0.15, 0.3, 0.45, 0.6, 0.75].into_iter().enumerate() {
            coverage[22 + i] = c;
        }
        for c in &mut coverage[27..47] {
            *c = 1.0;
        }
        coverage[27] = 0.92;
        for (i, c) in [0.75, 0.6, 0.45, 0.3, 0.15].into_iter().enumerate() {
            coverage[47 + i] = c;
        }
        Self {
            width: 640,
            height: 480,
            frames: 80,
            seed,
            target_size: [rng.gen_range(64.0..84.0), rng.gen_range(80.0..104.0)],
            target_start: [rng.gen_range(160.0..240.0), rng.gen_range(150.0..230.0)],
            target_velocity: [rng.gen_range(0.8..1.6), rng.gen_range(-0.6..0.6)],
            target_depth: rng.gen_range(2200.0..2800.0),
            background_depth: 4500.0,
            occluder: Some(OccluderSpec {
                depth: 1200.0,
                width: 140.0,
                coverage,
            }),
            rgb_noise: 3.0,
            depth_noise: 10.0,
            depth_hole_rate: 0.01,
            tags: vec!["rigid".into(), "occlusion".into(), "passive".into()],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.width < 16 || self.height < 16 || self.frames == 0 {
            return fail(format!("canvas {}x{} with {} frames", self.width, self.height, self.frames));
        }
        if !(self.target_size[0] >= 4.0 && self.target_size[1] >= 4.0) {
            return fail("target must be at least 4x4 pixels".into());
        }
        if !(self.target_growth > 0.0) {
            return fail("target growth must be positive".into());
        }
        if let Some(p) = &self.target_path {
            if p.len() != self.frames {
                return fail(format!("target path has {} entries for {} frames", p.len(), self.frames));
            }
        }
        if !(0.0..=1.0).contains(&self.depth_hole_rate) || self.rgb_noise < 0.0 || self.depth_noise < 0.0 {
            return fail("noise levels out of range".into());
        }
        if let Some(occ) = &self.occluder {
            if occ.coverage.len() != self.frames {
                return fail(format!(
                    "coverage schedule has {} entries for {} frames",
                    occ.coverage.len(),
                    self.frames
                ));
            }
            if occ.coverage.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return fail("coverage outside [0, 1]".into());
            }
            let scheduled = occ.coverage.iter().any(|&c| c > 0.0);
            if scheduled && occ.depth >= self.target_depth {
                return fail(format!(
                    "occluder at {} mm is not nearer than the target at {} mm",
                    occ.depth, self.target_depth
                ));
            }
            for (t, &c) in occ.coverage.iter().enumerate() {
                if c <= 0.0 {
                    continue;
                }
                let b = self.target_box(t);
                if occ.width < c * b.w {
                    return fail(format!("frame {t}: band of width {} cannot cover {c} of the target", occ.width));
                }
                let (l, r) = self.band(t).expect("scheduled frame has a band");
                if r <= 0.0 || l >= self.width as f64 || b.right() <= 0.0 || b.x >= self.width as f64 {
                    return fail(format!("frame {t}: occluder off-canvas with coverage {c}"));
                }
            }
        }
        Ok(())
    }

    /// True target box at frame `t`, whether or not it is visible.
    pub fn target_box(&self, t: usize) -> BoundingBox {
        let g = self.target_growth.powi(t as i32);
        let (w, h) = (self.target_size[0] * g, self.target_size[1] * g);
        let [x, y] = match &self.target_path {
            Some(p) => p[t],
            None => {
                // Growth keeps the center on the linear trajectory.
                let cx = self.target_start[0] + self.target_size[0] / 2.0 + self.target_velocity[0] * t as f64;
                let cy = self.target_start[1] + self.target_size[1] / 2.0 + self.target_velocity[1] * t as f64;
                [cx - w / 2.0, cy - h / 2.0]
            }
        };
        BoundingBox { x, y, w, h }
    }

    fn peak_range(&self, coverage: &[f64]) -> (usize, usize) {
        let max = coverage.iter().copied().fold(0.0, f64::max);
        let first = coverage.iter().position(|&c| c == max).unwrap_or(0);
        let last = coverage.iter().rposition(|&c| c == max).unwrap_or(0);
        (first, last)
    }

    /// Horizontal extent `[left, right)` of the occluder band at frame `t`.
    /// The band enters from the left until peak coverage and leaves to the
    /// right afterwards.
    pub fn band(&self, t: usize) -> Option<(f64, f64)> {
        let occ = self.occluder.as_ref()?;
        let c = occ.coverage[t];
        if c <= 0.0 {
            return None;
        }
        let b = self.target_box(t);
        let (_, last) = self.peak_range(&occ.coverage);
        if t <= last {
            let right = b.x + c * b.w;
            Some((right - occ.width, right))
        } else {
            let left = b.x + (1.0 - c) * b.w;
            Some((left, left + occ.width))
        }
    }
}

/// Rendered frames with their ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub spec: SyntheticSpec,
    pub frames: Vec<Frame>,
    /// True box per frame, regardless of visibility.
    pub boxes: Vec<BoundingBox>,
    /// Truth in benchmark form: `None` where coverage reaches
    /// `absent_coverage`.
    pub truth: Vec<Option<BoundingBox>>,
    /// Measured fraction of target pixels hidden by the occluder.
    pub coverage: Vec<f64>,
    pub tags: Vec<Category>,
}

impl SyntheticSequence {
    pub fn init_box(&self) -> BoundingBox {
        self.boxes[0]
    }
}

/// Grainy `tile`-sized color blocks; saturated for targets, muted grays for
/// the background.
fn texture(rng: &mut ChaCha8Rng, w: usize, h: usize, tile: usize, saturated: bool) -> Array3<u8> {
    let tw = w.div_ceil(tile);
    let th = h.div_ceil(tile);
    let colors: Vec<[u8; 3]> = (0..tw * th)
        .map(|_| {
            if saturated {
                let base: [u8; 3] = [rng.gen(), rng.gen(), rng.gen()];
                let k = rng.gen_range(0..3);
                let mut c = base;
                c[k] = if base[k] > 127 { 255 } else { 0 };
                c
            } else {
                let g: u8 = rng.gen_range(70..170);
                [
                    g.saturating_add(rng.gen_range(0..30)),
                    g,
                    g.saturating_add(rng.gen_range(0..30)),
                ]
            }
        })
        .collect();
    // Fixed fine grain, so flat blocks carry structure that frame noise
    // does not overwhelm.
    let grain: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-12.0..12.0)).collect();
    Array3::from_shape_fn((h, w, 3), |(r, c, k)| {
        let v = colors[(r / tile) * tw + c / tile][k] as f64 + grain[r * w + c];
        v.clamp(0.0, 255.0).round() as u8
    })
}

/// Renders `spec` in memory.
pub fn render(spec: &SyntheticSpec) -> Result<SyntheticSequence> {
    spec.validate()?;
    let tags = spec
        .tags
        .iter()
        .map(|t| t.parse::<Category>().map_err(Error::Spec))
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (spec.width, spec.height);
    let mut tex_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = texture(&mut tex_rng, w, h, 24, false);
    let (tw0, th0) = (spec.target_size[0].ceil() as usize, spec.target_size[1].ceil() as usize);
    let target_tex = texture(&mut tex_rng, tw0, th0, 8, true);
    let bg_depth = Array2::from_shape_fn((h, w), |(r, _)| spec.background_depth - 400.0 * r as f64 / h as f64);

    let rgb_noise = Normal::new(0.0, spec.rgb_noise.max(1e-12)).expect("finite sigma");
    let depth_noise = Normal::new(0.0, spec.depth_noise.max(1e-12)).expect("finite sigma");

    let mut frames = Vec::with_capacity(spec.frames);
    let mut boxes = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    let mut coverage = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (t as u64 + 1));
        let b = spec.target_box(t);
        let band = spec.band(t);
        let occ_depth = spec.occluder.as_ref().map_or(0.0, |o| o.depth);
        let mut rgb = background.clone();
        let mut depth = bg_depth.clone();
        let (mut target_px, mut hidden_px) = (0usize, 0usize);
        for r in 0..h {
            let py = r as f64 + 0.5;
            for c in 0..w {
                let px = c as f64 + 0.5;
                let in_band = band.is_some_and(|(l, rr)| px >= l && px < rr);
                let in_target = px >= b.x && px < b.right() && py >= b.y && py < b.bottom();
                if in_target {
                    target_px += 1;
                    if in_band {
                        hidden_px += 1;
                    }
                }
                if in_band {
                    let stripe = if (r / 6) % 2 == 0 { 225 } else { 40 };
                    for k in 0..3 {
                        rgb[[r, c, k]] = stripe;
                    }
                    depth[[r, c]] = occ_depth;
                } else if in_target {
                    let u = (((px - b.x) / b.w) * tw0 as f64).floor().clamp(0.0, tw0 as f64 - 1.0) as usize;
                    let v = (((py - b.y) / b.h) * th0 as f64).floor().clamp(0.0, th0 as f64 - 1.0) as usize;
                    for k in 0..3 {
                        rgb[[r, c, k]] = target_tex[[v, u, k]];
                    }
                    let dx = (px - b.x) / b.w - 0.5;
                    let dy = (py - b.y) / b.h - 0.5;
                    depth[[r, c]] = spec.target_depth - 60.0 * (1.0 - 2.0 * (dx * dx + dy * dy));
                }
            }
        }
        let rgb = rgb.mapv(|v| v as f64);
        let rgb = if spec.rgb_noise > 0.0 {
            rgb.mapv(|v| (v + rgb_noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
        } else {
            rgb.mapv(|v| v as u8)
        };
        let depth = depth.mapv(|d| {
            let noisy = if spec.depth_noise > 0.0 {
                d + depth_noise.sample(&mut rng)
            } else {
                d
            };
            if spec.depth_hole_rate > 0.0 && rng.gen::<f64>() < spec.depth_hole_rate {
                0
            } else {
                noisy.round().clamp(1.0, u16::MAX as f64) as u16
            }
        });
        let cov = if target_px == 0 {
            1.0
        } else {
            hidden_px as f64 / target_px as f64
        };
        frames.push(Frame::new(rgb, depth, t)?);
        boxes.push(b);
        truth.push((cov < spec.absent_coverage).then_some(b));
        coverage.push(cov);
    }
    Ok(SyntheticSequence {
        spec: spec.clone(),
        frames,
        boxes,
        truth,
        coverage,
        tags,
    })
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn xywh_line(b: Option<&BoundingBox>) -> String {
    match b {
        Some(b) => format!("{},{},{},{}\n", b.x, b.y, b.w, b.h),
        None => "NaN,NaN,NaN,NaN\n".to_string(),
    }
}

/// Renders `spec` and writes it to `dir` in the sequence directory layout,
/// plus a `coverage.txt` with the per-frame occlusion fraction.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<Sequence> {
    let seq = render(spec)?;
    for sub in ["rgb", "depth"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    for (t, f) in seq.frames.iter().enumerate() {
        let (h, w) = (f.height() as u32, f.width() as u32);
        let rgb: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(w, h, f.rgb.iter().copied().collect()).expect("rgb buffer size");
        let path = dir.join("rgb").join(format!("r-{}-{t}.png", t * 33));
        rgb.save(&path).map_err(|source| Error::Image { path, source })?;
        let depth: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w, h, f.depth.iter().copied().collect()).expect("depth buffer size");
        let path = dir.join("depth").join(format!("d-{}-{t}.png", t * 33));
        depth.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    write_text(&dir.join("init.txt"), xywh_line(Some(&seq.init_box())))?;
    write_text(
        &dir.join("groundtruth.txt"),
        seq.truth.iter().map(|b| xywh_line(b.as_ref())).collect(),
    )?;
    write_text(
        &dir.join("coverage.txt"),
        seq.coverage.iter().map(|c| format!("{c}\n")).collect(),
    )?;
    write_text(
        &dir.join("tags.txt"),
        seq.tags.iter().map(|t| format!("{t}\n")).collect(),
    )?;
    load_sequence(dir)
}
