//! Color Names lookup: quantized RGB to a 10-way color-name distribution.
//!
//! Table file layout: little-endian `f32`, 32768 rows of 10 values, row index
//! `(r/8) * 1024 + (g/8) * 32 + (b/8)`.

use std::path::Path;

use crate::{Error, Result};

pub const COLOR_NAME_CHANNELS: usize = 10;
const ROWS: usize = 32 * 32 * 32;
const FILE_LEN: usize = ROWS * COLOR_NAME_CHANNELS * 4;

pub const COLOR_NAMES: [&str; COLOR_NAME_CHANNELS] = [
    "black", "blue", "brown", "gray", "green", "orange", "purple", "red", "white", "yellow",
];

static BUILTIN: &[u8] = include_bytes!("../../data/color_names.bin");

#[derive(Debug, Clone, PartialEq)]
pub struct ColorNamesTable {
    lookup: Vec<[f32; COLOR_NAME_CHANNELS]>,
}

impl ColorNamesTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_bytes(BUILTIN).expect("embedded color names table is well-formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| {
            Error::Configuration(format!("cannot read color names table {}: {e}", path.display()))
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != FILE_LEN {
            return Err(Error::Configuration(format!(
                "color names table must be {FILE_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let lookup = bytes
            .chunks_exact(COLOR_NAME_CHANNELS * 4)
            .map(|row| {
                let mut entry = [0f32; COLOR_NAME_CHANNELS];
                for (slot, b) in entry.iter_mut().zip(row.chunks_exact(4)) {
                    *slot = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                }
                entry
            })
            .collect();
        Ok(Self { lookup })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.lookup.iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn lookup(&self, r: u8, g: u8, b: u8) -> &[f32; COLOR_NAME_CHANNELS] {
        let idx = (r as usize / 8) * 1024 + (g as usize / 8) * 32 + b as usize / 8;
        &self.lookup[idx]
    }

    /// Soft assignment of each quantization bin center to a set of color
    /// prototypes; the generator behind `data/color_names.bin`.
    pub fn from_prototypes() -> Self {
        const PROTOTYPES: [[f64; 3]; COLOR_NAME_CHANNELS] = [
            [0.0, 0.0, 0.0],
            [30.0, 60.0, 200.0],
            [130.0, 80.0, 40.0],
            [128.0, 128.0, 128.0],
            [40.0, 160.0, 50.0],
            [245.0, 140.0, 20.0],
            [130.0, 50.0, 160.0],
            [210.0, 25.0, 30.0],
            [255.0, 255.0, 255.0],
            [240.0, 225.0, 40.0],
        ];
        const SPREAD: f64 = 40.0;
        let mut lookup = Vec::with_capacity(ROWS);
        for idx in 0..ROWS {
            let rgb = [
                ((idx / 1024) * 8 + 4) as f64,
                ((idx / 32 % 32) * 8 + 4) as f64,
                ((idx % 32) * 8 + 4) as f64,
            ];
            let logits: Vec<f64> = PROTOTYPES
                .iter()
                .map(|p| {
                    let d2: f64 = p.iter().zip(&rgb).map(|(a, b)| (a - b).powi(2)).sum();
                    -d2 / (2.0 * SPREAD * SPREAD)
                })
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut entry = [0f32; COLOR_NAME_CHANNELS];
            for (slot, w) in entry.iter_mut().zip(&weights) {
                *slot = (w / total) as f32;
            }
            lookup.push(entry);
        }
        Self { lookup }
    }
}
