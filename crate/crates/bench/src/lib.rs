//! Shared inputs for the criterion benchmarks.

use dmdcf::bench::{render, SyntheticSequence, SyntheticSpec};
use dmdcf::{Tracker, TrackerConfig};

/// The 640x480 occlusion sweep used for throughput numbers.
pub fn sweep() -> SyntheticSequence {
    render(&SyntheticSpec::occlusion_sweep(0)).expect("preset spec is valid")
}

/// A tracker initialized on frame 0 of `seq`.
pub fn tracker(seq: &SyntheticSequence, config: TrackerConfig) -> Tracker {
    Tracker::init(&seq.frames[0], seq.init_box(), config).expect("init on preset")
}
