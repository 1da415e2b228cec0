//! Running a tracker over a sequence and collecting a [`TrackResult`].

use std::time::Instant;

use rayon::prelude::*;

use crate::bench::dataset::Sequence;
use crate::bench::metrics::{evaluate, Metrics};
use crate::bench::results::TrackResult;
use crate::imaging::{BoundingBox, Frame};
use crate::tracker::{TrackOutput, Tracker, TrackerConfig};
use crate::Result;

/// Tracks pre-decoded frames. Timings cover tracking only. Frame 0 reports
/// the initial box.
pub fn run_frames<F>(frames: &[Frame], init: BoundingBox, config: &TrackerConfig, mut on_frame: F) -> Result<TrackResult>
where
    F: FnMut(&Tracker, &TrackOutput),
{
    let mut result = TrackResult::default();
    let Some(first) = frames.first() else {
        return Ok(result);
    };
    let start = Instant::now();
    let mut tracker = Tracker::init(first, init, config.clone())?;
    result.push(Some(init), false, start.elapsed().as_secs_f64() * 1e3);
    for frame in &frames[1..] {
        let start = Instant::now();
        let out = tracker.track(frame);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        on_frame(&tracker, &out);
        result.push((!out.occluded).then_some(out.bbox), out.occluded, ms);
    }
    Ok(result)
}

/// Tracks a sequence from disk, decoding one frame at a time.
pub fn run_sequence<F>(seq: &Sequence, config: &TrackerConfig, mut on_frame: F) -> Result<TrackResult>
where
    F: FnMut(&Tracker, &TrackOutput),
{
    let mut result = TrackResult::default();
    if seq.is_empty() {
        return Ok(result);
    }
    let first = seq.frame(0)?;
    let start = Instant::now();
    let mut tracker = Tracker::init(&first, seq.init_box, config.clone())?;
    result.push(Some(seq.init_box), false, start.elapsed().as_secs_f64() * 1e3);
    for i in 1..seq.len() {
        let frame = seq.frame(i)?;
        let start = Instant::now();
        let out = tracker.track(&frame);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        on_frame(&tracker, &out);
        result.push((!out.occluded).then_some(out.bbox), out.occluded, ms);
    }
    Ok(result)
}

/// Sequence name with its result and, when ground truth exists, its scores.
pub type DatasetOutcome = (String, Result<(TrackResult, Option<Metrics>)>);

/// Tracks every sequence in parallel and evaluates those with ground truth.
pub fn run_dataset(
    sequences: &[Sequence],
    config: &TrackerConfig,
) -> Vec<DatasetOutcome> {
    sequences
        .par_iter()
        .map(|seq| {
            let outcome = run_sequence(seq, config, |_, _| {}).and_then(|r| {
                let m = match &seq.ground_truth {
                    Some(gt) => Some(evaluate(&r.boxes, gt)?),
                    None => None,
                };
                Ok((r, m))
            });
            (seq.name.clone(), outcome)
        })
        .collect()
}
