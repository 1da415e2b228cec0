//! Occlusion detection from the response history and depth support, and the
//! full-frame re-detection run while the target is considered occluded.

use std::collections::VecDeque;

use rayon::prelude::*;

use ndarray::{s, Array2, Axis, Zip};
use rustfft::num_complex::Complex64;

use crate::dcf::FilterBank;
use crate::fft::{Fft2, Spectrum};
use crate::imaging::{extract_patch, Frame, Point, Size};
use crate::search::Search;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionConfig {
    /// Response must fall below this fraction of the running mean.
    pub response_drop: f64,
    /// Depth support must fall below this fraction of the box cells.
    pub depth_support_min: f64,
    /// Re-detection accepts a peak above `tau` times the mean of the last
    /// `history_len` responses.
    pub tau: f64,
    pub history_len: usize,
    /// Coarse peaks refined and checked per re-detection frame.
    pub candidates: usize,
    pub enabled: bool,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            response_drop: 0.65,
            depth_support_min: 0.10,
            tau: 0.65,
            history_len: 100,
            candidates: 3,
            enabled: true,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("response_drop", self.response_drop),
            ("depth_support_min", self.depth_support_min),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Configuration(format!("{name} = {v} outside (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Configuration(format!("tau = {} outside [0, 1]", self.tau)));
        }
        if self.candidates == 0 {
            return Err(Error::Configuration("at least one re-detection candidate is required".into()));
        }
        if self.history_len == 0 {
            return Err(Error::Configuration("history length must be positive".into()));
        }
        Ok(())
    }
}

/// Peak responses of accepted frames: an incremental mean over all of them
/// plus a ring of the last `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseHistory {
    buffer: VecDeque<f64>,
    capacity: usize,
    running_mean: f64,
    count: usize,
}

impl ResponseHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            running_mean: 0.0,
            count: 0,
        }
    }

    pub fn record(&mut self, r_max: f64) -> Result<()> {
        if !r_max.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: self.count,
                reason: format!("non-finite peak response {r_max}"),
            });
        }
        self.count += 1;
        self.running_mean += (r_max - self.running_mean) / self.count as f64;
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(r_max);
        Ok(())
    }

    pub fn running_mean(&self) -> f64 {
        self.running_mean
    }

    pub fn buffer_mean(&self) -> f64 {
        if self.buffer.is_empty() {
            return 0.0;
        }
        self.buffer.iter().sum::<f64>() / self.buffer.len() as f64
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn recent(&self) -> impl Iterator<Item = &f64> {
        self.buffer.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OcclusionState {
    pub occluded: bool,
    pub frames_occluded: usize,
}

impl OcclusionState {
    pub fn enter(&mut self) {
        self.occluded = true;
        self.frames_occluded = 1;
    }

    pub fn stay(&mut self) {
        self.frames_occluded += 1;
    }

    pub fn clear(&mut self) {
        self.occluded = false;
        self.frames_occluded = 0;
    }
}

/// Both detectors must fire: the response dropped below the configured
/// fraction of the running mean, and depth support inside the box is below
/// its floor.
pub fn detect_occlusion(
    r_max: f64,
    history: &ResponseHistory,
    support_fraction: f64,
    config: &OcclusionConfig,
) -> Result<bool> {
    if history.is_empty() {
        return Err(Error::NotReady);
    }
    let response_dropped = r_max < config.response_drop * history.running_mean();
    let depth_lost = support_fraction < config.depth_support_min;
    Ok(response_dropped && depth_lost)
}

/// Best filter response over the whole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub position: Point,
    pub r_max: f64,
    /// Depth support at the detected position, when a depth model exists.
    pub support_fraction: Option<f64>,
}

/// Smallest length `>= n` with no prime factor above 5.
fn smooth_len(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut v = m;
            for p in [2, 3, 5] {
                while v % p == 0 {
                    v /= p;
                }
            }
            v == 1
        })
        .expect("smooth numbers are unbounded")
}

/// Coarse-to-fine search of the frozen filter over the full frame.
///
/// Features are computed once on the frame resampled to template scale. The
/// filter times the cosine window, correlated densely with the zero-padded
/// feature map, gives at every cell the response a windowed patch centered
/// there would produce at zero displacement. The `k` strongest local peaks
/// at least half a target apart are each refined with two ordinary probes; the
/// result is sorted by refined peak, strongest first.
pub fn search_candidates(
    frame: &Frame,
    filter: &FilterBank,
    search: &Search,
    size: Size,
    k: usize,
) -> Result<Vec<Detection>> {
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    if fw < size.w || fh < size.h {
        return Err(Error::InvalidGeometry(format!(
            "frame {fw}x{fh} is smaller than the {}x{} target",
            size.w, size.h
        )));
    }
    let cell = search.cell();
    let (gr, gc) = search.grid();
    // Template pixels per frame pixel.
    let sx = search.template.0 as f64 / (size.w * search.padding);
    let sy = search.template.1 as f64 / (size.h * search.padding);
    let wt = ((fw * sx / cell as f64).ceil() as usize).max(1) * cell;
    let ht = ((fh * sy / cell as f64).ceil() as usize).max(1) * cell;
    let region = Size::new(wt as f64 / sx, ht as f64 / sy);
    let patch = extract_patch(frame, Point::new(region.w / 2.0, region.h / 2.0), region, 1.0, (wt, ht))?;
    let features = search.extractor.compose_unwindowed(&patch)?;
    let (fr, fc) = features.shape();
    if features.channels() != filter.channels() {
        return Err(Error::InvalidGeometry("filter and feature channels differ".into()));
    }

    let (br, bc) = (smooth_len(fr + gr), smooth_len(fc + gc));
    let big = Fft2::new(br, bc);
    let spatial = filter.spatial(&search.fft);
    let zero = Complex64::new(0.0, 0.0);
    let partial = (0..features.channels())
        .into_par_iter()
        .map(|ch| {
            let mut x = Spectrum::from_elem((br, bc), zero);
            x.slice_mut(s![..fr, ..fc])
                .zip_mut_with(&features.data.index_axis(Axis(0), ch), |d, &v| *d = Complex64::new(v, 0.0));
            big.forward(&mut x);
            let mut h = Spectrum::from_elem((br, bc), zero);
            Zip::from(h.slice_mut(s![..gr, ..gc]))
                .and(&spatial[ch])
                .and(&search.window)
                .for_each(|d, &hv, &w| *d = Complex64::new(hv * w, 0.0));
            big.forward(&mut h);
            let w = search.weights[ch];
            Zip::from(&mut x).and(&h).for_each(|xv, hv| *xv = hv.conj() * *xv * w);
            x
        })
        .reduce(
            || Spectrum::from_elem((br, bc), zero),
            |mut a, b| {
                a += &b;
                a
            },
        );
    let response = big.inverse_real(&partial);

    // Score indexed by target center cell in the feature map.
    let (hr, hc) = (gr / 2, gc / 2);
    let score = Array2::from_shape_fn((fr, fc), |(r, c)| {
        response[[(r + br - hr) % br, (c + bc - hc) % bc]]
    });
    let mut order: Vec<(usize, usize)> = (0..fr).flat_map(|r| (0..fc).map(move |c| (r, c))).collect();
    order.sort_by(|a, b| score[[b.0, b.1]].total_cmp(&score[[a.0, a.1]]));

    let min_dr = (size.h * sy / cell as f64 / 2.0).max(1.0);
    let min_dc = (size.w * sx / cell as f64 / 2.0).max(1.0);
    let mut seeds: Vec<(usize, usize)> = Vec::new();
    for (r, c) in order {
        if seeds.len() >= k.max(1) {
            break;
        }
        let distinct = seeds
            .iter()
            .all(|&(sr, sc)| (r as f64 - sr as f64).abs() > min_dr || (c as f64 - sc as f64).abs() > min_dc);
        if distinct {
            seeds.push((r, c));
        }
    }

    let mut out = seeds
        .into_iter()
        .map(|(r, c)| {
            let p = Point::new((c * cell) as f64 / sx, (r * cell) as f64 / sy);
            // The first probe is off-center by up to half a cell, which
            // attenuates its peak; a second one centered on it reads the
            // peak at full strength.
            let coarse = search.probe(frame, filter, p, size)?;
            let fine = search.probe(frame, filter, coarse.position, size)?;
            let best = if fine.response.peak.value >= coarse.response.peak.value { fine } else { coarse };
            Ok(Detection {
                position: best.position,
                r_max: best.response.peak.value,
                support_fraction: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.r_max.total_cmp(&a.r_max));
    Ok(out)
}

/// Strongest single detection over the full frame.
pub fn search_full_frame(frame: &Frame, filter: &FilterBank, search: &Search, size: Size) -> Result<Detection> {
    Ok(search_candidates(frame, filter, search, size, 1)?.remove(0))
}

/// Full-frame re-detection. Returns the detection only if its peak exceeds
/// `tau` times the mean of the recent response buffer. Depth support is not
/// checked here; see [`accept`].
pub fn redetect(
    frame: &Frame,
    filter: &FilterBank,
    search: &Search,
    size: Size,
    history: &ResponseHistory,
    config: &OcclusionConfig,
) -> Result<Option<Detection>> {
    let detection = search_full_frame(frame, filter, search, size)?;
    Ok(accept(&detection, history, config).then_some(detection))
}

/// The peak must exceed `tau` times the recent response mean and, when the
/// depth support at the detection is known, the target depth must be back
/// above the support floor.
pub fn accept(detection: &Detection, history: &ResponseHistory, config: &OcclusionConfig) -> bool {
    let depth_ok = detection
        .support_fraction
        .is_none_or(|s| s >= config.depth_support_min);
    detection.r_max > config.tau * history.buffer_mean() && depth_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn running_mean_examples() {
        let mut h = ResponseHistory::new(100);
        h.record(0.8).unwrap();
        assert_eq!(h.running_mean(), 0.8);
        let mut h = ResponseHistory::new(100);
        h.record(0.6).unwrap();
        h.record(0.8).unwrap();
        assert!((h.running_mean() - 0.7).abs() < 1e-15);
        assert!(h.record(f64::NAN).is_err());
    }

    #[test]
    fn running_mean_matches_batch_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let samples: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut h = ResponseHistory::new(100);
        for &s in &samples {
            h.record(s).unwrap();
        }
        let batch = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!((h.running_mean() - batch).abs() < 1e-9);
        assert_eq!(h.recent().count(), 100);
        let tail = samples[900..].iter().sum::<f64>() / 100.0;
        assert!((h.buffer_mean() - tail).abs() < 1e-12);
    }

    fn history_with_mean(mean: f64) -> ResponseHistory {
        let mut h = ResponseHistory::new(10);
        h.record(mean).unwrap();
        h
    }

    #[test]
    fn detector_examples() {
        let cfg = OcclusionConfig::default();
        let h = history_with_mean(0.8);
        assert!(!detect_occlusion(0.8, &h, 1.0, &cfg).unwrap());
        assert!(detect_occlusion(0.4, &h, 0.05, &cfg).unwrap());
        assert!(!detect_occlusion(0.4, &h, 0.5, &cfg).unwrap());
        assert!(!detect_occlusion(0.8, &h, 0.0, &cfg).unwrap());
        assert!(matches!(
            detect_occlusion(0.1, &ResponseHistory::new(5), 0.0, &cfg),
            Err(Error::NotReady)
        ));
    }

    #[test]
    fn zero_tau_accepts_any_peak() {
        let cfg = OcclusionConfig {
            tau: 0.0,
            ..OcclusionConfig::default()
        };
        let d = Detection {
            position: Point::new(0.0, 0.0),
            r_max: 1e-6,
            support_fraction: None,
        };
        assert!(accept(&d, &history_with_mean(0.9), &cfg));
    }

    #[test]
    fn acceptance_needs_depth_support() {
        let cfg = OcclusionConfig::default();
        let h = history_with_mean(0.5);
        let mut d = Detection {
            position: Point::new(0.0, 0.0),
            r_max: 0.45,
            support_fraction: Some(0.0),
        };
        assert!(!accept(&d, &h, &cfg));
        d.support_fraction = Some(0.5);
        assert!(accept(&d, &h, &cfg));
        d.r_max = 0.2;
        assert!(!accept(&d, &h, &cfg));
    }

    #[test]
    fn smooth_lengths() {
        assert_eq!(smooth_len(1), 1);
        assert_eq!(smooth_len(7), 8);
        assert_eq!(smooth_len(121), 125);
        assert_eq!(smooth_len(226), 240);
    }

    proptest! {
        #[test]
        fn detector_is_monotone(
            mean in 0.1..1.0f64,
            r in 0.0..1.0f64,
            s in 0.0..1.0f64,
            dr in 0.0..0.5f64,
            ds in 0.0..0.5f64,
        ) {
            let cfg = OcclusionConfig::default();
            let h = history_with_mean(mean);
            let before = detect_occlusion(r, &h, s, &cfg).unwrap();
            let after = detect_occlusion((r - dr).max(0.0), &h, (s - ds).max(0.0), &cfg).unwrap();
            prop_assert!(!before || after);
        }
    }
}
