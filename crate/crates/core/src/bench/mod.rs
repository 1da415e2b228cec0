//! Benchmark harness: sequence ingestion, synthetic sequences, result files
//! and IOU evaluation.

pub mod config;
pub mod dataset;
pub mod metrics;
pub mod results;
pub mod run;
pub mod synthetic;

pub use config::{load_config, parse_config};
pub use dataset::{load_sequence, load_sequence_with, Category, DepthEncoding, Sequence};
pub use metrics::{aggregate_by_category, evaluate, Metrics};
pub use results::{parse_boxes, read_result, write_result, TrackResult};
pub use run::{run_dataset, run_frames, run_sequence};
pub use synthetic::{generate_synthetic, render, OccluderSpec, SyntheticSequence, SyntheticSpec};
