//! Sequence directories in the Princeton RGBD layout:
//!
//! ```text
//! <name>/rgb/r-<timestamp>-<index>.png
//! <name>/depth/d-<timestamp>-<index>.png
//! <name>/init.txt          x,y,w,h of the first frame
//! <name>/groundtruth.txt   optional, one x,y,w,h line per frame, NaN when absent
//! <name>/tags.txt          optional, category names
//! ```
//!
//! Frames are paired by the last integer in their file names.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Array3};

use crate::imaging::{BoundingBox, Frame};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Human,
    Animal,
    Rigid,
    Large,
    Small,
    Slow,
    Fast,
    Occlusion,
    NoOcclusion,
    Passive,
    Active,
}

impl Category {
    pub const ALL: [Category; 11] = [
        Category::Human,
        Category::Animal,
        Category::Rigid,
        Category::Large,
        Category::Small,
        Category::Slow,
        Category::Fast,
        Category::Occlusion,
        Category::NoOcclusion,
        Category::Passive,
        Category::Active,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Human => "human",
            Category::Animal => "animal",
            Category::Rigid => "rigid",
            Category::Large => "large",
            Category::Small => "small",
            Category::Slow => "slow",
            Category::Fast => "fast",
            Category::Occlusion => "occlusion",
            Category::NoOcclusion => "no-occlusion",
            Category::Passive => "passive",
            Category::Active => "active",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Category::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// How 16-bit depth PNGs store millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthEncoding {
    #[default]
    Millimeters,
    /// The raw Princeton files: millimeters rotated left by three bits.
    PrincetonRotated,
}

impl DepthEncoding {
    pub fn decode(self, raw: u16) -> u16 {
        match self {
            DepthEncoding::Millimeters => raw,
            DepthEncoding::PrincetonRotated => raw.rotate_right(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<(PathBuf, PathBuf)>,
    pub init_box: BoundingBox,
    pub ground_truth: Option<Vec<Option<BoundingBox>>>,
    pub tags: Vec<Category>,
    pub depth_encoding: DepthEncoding,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Decodes frame `i` (zero-based).
    pub fn frame(&self, i: usize) -> Result<Frame> {
        let (rgb_path, depth_path) = self.frames.get(i).ok_or_else(|| Error::Ingestion {
            index: i + 1,
            reason: format!("sequence has {} frames", self.frames.len()),
        })?;
        let rgb = read_rgb(rgb_path)?;
        let depth = read_depth(depth_path, self.depth_encoding)?;
        Frame::new(rgb, depth, i).map_err(|e| Error::Ingestion {
            index: i + 1,
            reason: e.to_string(),
        })
    }
}

pub fn read_rgb(path: &Path) -> Result<Array3<u8>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw()).expect("rgb buffer size"))
}

pub fn read_depth(path: &Path, encoding: DepthEncoding) -> Result<Array2<u16>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| encoding.decode(v)).collect();
    Ok(Array2::from_shape_vec((h as usize, w as usize), data).expect("depth buffer size"))
}

fn trailing_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        let n = trailing_number(&path).ok_or_else(|| Error::Parse {
            path: path.clone(),
            reason: "frame file name carries no index".into(),
        })?;
        files.push((n, path));
    }
    files.sort();
    Ok(files)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `x,y,w,h` lines; `NaN` entries mark absent frames.
pub fn parse_xywh(text: &str, path: &Path) -> Result<Vec<Option<BoundingBox>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            reason: format!("line {}: {reason}", i + 1),
        };
        if fields.len() < 4 {
            return Err(err("expected x,y,w,h".into()));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[..4]) {
            *slot = f.parse::<f64>().map_err(|e| err(e.to_string()))?;
        }
        if v.iter().any(|x| x.is_nan()) {
            out.push(None);
        } else {
            out.push(Some(BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?));
        }
    }
    Ok(out)
}

pub fn parse_tags(text: &str) -> std::result::Result<Vec<Category>, String> {
    let mut tags: Vec<Category> = text
        .split([',', ' ', '\t', '\n', '\r'])
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()?;
    tags.sort();
    tags.dedup();
    Ok(tags)
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    load_sequence_with(dir, DepthEncoding::Millimeters)
}

pub fn load_sequence_with(dir: &Path, encoding: DepthEncoding) -> Result<Sequence> {
    let rgb = list_frames(&dir.join("rgb"))?;
    let depth = list_frames(&dir.join("depth"))?;
    for (i, pair) in rgb.iter().zip(&depth).enumerate() {
        if pair.0 .0 != pair.1 .0 {
            return Err(Error::Ingestion {
                index: i + 1,
                reason: format!("rgb frame {} paired with depth frame {}", pair.0 .0, pair.1 .0),
            });
        }
    }
    if rgb.len() != depth.len() {
        return Err(Error::Ingestion {
            index: rgb.len().min(depth.len()) + 1,
            reason: format!("{} rgb frames but {} depth frames", rgb.len(), depth.len()),
        });
    }
    if rgb.is_empty() {
        return Err(Error::Ingestion {
            index: 1,
            reason: "no frames".into(),
        });
    }

    let init_path = dir.join("init.txt");
    let init_box = parse_xywh(&read_text(&init_path)?, &init_path)?
        .into_iter()
        .next()
        .flatten()
        .ok_or_else(|| Error::Parse {
            path: init_path.clone(),
            reason: "no initial box".into(),
        })?;

    let gt_path = dir.join("groundtruth.txt");
    let ground_truth = if gt_path.exists() {
        let gt = parse_xywh(&read_text(&gt_path)?, &gt_path)?;
        if gt.len() != rgb.len() {
            return Err(Error::Parse {
                path: gt_path,
                reason: format!("{} boxes for {} frames", gt.len(), rgb.len()),
            });
        }
        Some(gt)
    } else {
        None
    };

    let tags_path = dir.join("tags.txt");
    let tags = if tags_path.exists() {
        parse_tags(&read_text(&tags_path)?).map_err(|reason| Error::Parse {
            path: tags_path,
            reason,
        })?
    } else {
        Vec::new()
    };

    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sequence {
        name,
        frames: rgb.into_iter().zip(depth).map(|(r, d)| (r.1, d.1)).collect(),
        init_box,
        ground_truth,
        tags,
        depth_encoding: encoding,
    })
}

/// Reads `<root>/categories.txt` (`name tag tag ...` per line), if present.
pub fn load_category_file(root: &Path) -> Result<Vec<(String, Vec<Category>)>> {
    let path = root.join("categories.txt");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = read_text(&path)?;
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (name, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let tags = parse_tags(rest).map_err(|reason| Error::Parse {
            path: path.clone(),
            reason,
        })?;
        out.push((name.to_string(), tags));
    }
    Ok(out)
}

/// Every sequence directory directly below `root`, sorted by name. Tags from
/// the root category file replace a sequence's own `tags.txt`.
pub fn load_dataset(root: &Path, encoding: DepthEncoding) -> Result<Vec<Sequence>> {
    let categories = load_category_file(root)?;
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("rgb").is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        let mut seq = load_sequence_with(&d, encoding)?;
        if let Some((_, tags)) = categories.iter().find(|(n, _)| *n == seq.name) {
            seq.tags = tags.clone();
        }
        out.push(seq);
    }
    Ok(out)
}
