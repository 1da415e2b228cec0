//! Result files: one `x1,y1,x2,y2` line per frame in integer corners, or
//! `NaN,NaN,NaN,NaN` when the target is reported absent. A `.timing` sidecar
//! holds per-frame milliseconds and occlusion flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::imaging::BoundingBox;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackResult {
    pub boxes: Vec<Option<BoundingBox>>,
    pub occluded: Vec<bool>,
    pub timing_ms: Vec<f64>,
}

impl TrackResult {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn push(&mut self, bbox: Option<BoundingBox>, occluded: bool, ms: f64) {
        self.boxes.push(bbox);
        self.occluded.push(occluded);
        self.timing_ms.push(ms);
    }

    /// Mean frames per second over the recorded timings.
    pub fn fps(&self) -> f64 {
        let total: f64 = self.timing_ms.iter().sum();
        if total > 0.0 {
            1000.0 * self.timing_ms.len() as f64 / total
        } else {
            f64::INFINITY
        }
    }
}

pub fn timing_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".timing");
    PathBuf::from(s)
}

pub fn format_box(bbox: Option<&BoundingBox>) -> String {
    match bbox {
        Some(b) => {
            let x1 = b.x.round() as i64;
            let y1 = b.y.round() as i64;
            let x2 = (b.x + b.w).round() as i64;
            let y2 = (b.y + b.h).round() as i64;
            format!("{x1},{y1},{x2},{y2}")
        }
        None => "NaN,NaN,NaN,NaN".to_string(),
    }
}

pub fn write_result(result: &TrackResult, path: &Path) -> Result<()> {
    let mut boxes = String::new();
    let mut timing = String::new();
    for (i, b) in result.boxes.iter().enumerate() {
        boxes.push_str(&format_box(b.as_ref()));
        boxes.push('\n');
        let ms = result.timing_ms.get(i).copied().unwrap_or(0.0);
        let occ = result.occluded.get(i).copied().unwrap_or(false);
        let _ = writeln!(timing, "{ms},{}", u8::from(occ));
    }
    fs::write(path, boxes).map_err(|e| Error::io(path, e))?;
    let tp = timing_path(path);
    fs::write(&tp, timing).map_err(|e| Error::io(tp, e))
}

fn parse_err(path: &Path, line: usize, reason: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    }
}

/// Parses corner-format lines; extra columns after the fourth are ignored.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
        if fields.len() < 4 {
            return Err(parse_err(path, i + 1, "expected four values"));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[..4]) {
            *slot = f.parse::<f64>().map_err(|e| parse_err(path, i + 1, e))?;
        }
        if v.iter().any(|x| x.is_nan()) {
            out.push(None);
            continue;
        }
        let b = BoundingBox::new(v[0], v[1], v[2] - v[0], v[3] - v[1])
            .map_err(|e| parse_err(path, i + 1, e))?;
        out.push(Some(b));
    }
    Ok(out)
}

/// Reads a result file and, when present, its timing sidecar.
pub fn read_result(path: &Path) -> Result<TrackResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let boxes = parse_boxes(&text, path)?;
    let tp = timing_path(path);
    let (occluded, timing_ms) = if tp.exists() {
        let t = fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?;
        let mut occ = Vec::new();
        let mut ms = Vec::new();
        for (i, line) in t.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| parse_err(&tp, i + 1, "expected `ms,flag`"))?;
            ms.push(a.trim().parse::<f64>().map_err(|e| parse_err(&tp, i + 1, e))?);
            occ.push(b.trim() == "1");
        }
        if occ.len() != boxes.len() {
            return Err(parse_err(&tp, occ.len(), "timing length differs from box count"));
        }
        (occ, ms)
    } else {
        (boxes.iter().map(Option::is_none).collect(), vec![0.0; boxes.len()])
    };
    Ok(TrackResult {
        boxes,
        occluded,
        timing_ms,
    })
}
