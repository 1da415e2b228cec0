//! Frames, box geometry and padded patch extraction.

use ndarray::{Array2, Array3};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Size {
    pub w: f64,
    pub h: f64,
}

impl Size {
    pub fn new(w: f64, h: f64) -> Self {
        Self { w, h }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::new(self.w * factor, self.h * factor)
    }
}

/// Axis-aligned box with a real-valued top-left corner. May extend past the
/// frame borders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "box ({x}, {y}, {w}, {h}) must be finite with positive size"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(center: Point, size: Size) -> Result<Self> {
        Self::new(center.x - size.w / 2.0, center.y - size.h / 2.0, size.w, size.h)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn size(&self) -> Size {
        Size::new(self.w, self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Synchronized RGB + depth pair. Depth is in millimeters, 0 marks a missing
/// measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `height x width x 3`
    pub rgb: Array3<u8>,
    /// `height x width`
    pub depth: Array2<u16>,
    pub index: usize,
}

impl Frame {
    pub fn new(rgb: Array3<u8>, depth: Array2<u16>, index: usize) -> Result<Self> {
        let (h, w, c) = rgb.dim();
        if c != 3 {
            return Err(Error::InvalidGeometry(format!("rgb has {c} channels, expected 3")));
        }
        if depth.dim() != (h, w) {
            return Err(Error::InvalidGeometry(format!(
                "rgb is {w}x{h} but depth is {}x{}",
                depth.dim().1,
                depth.dim().0
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidGeometry("empty frame".into()));
        }
        Ok(Self { rgb, depth, index })
    }

    pub fn width(&self) -> usize {
        self.rgb.dim().1
    }

    pub fn height(&self) -> usize {
        self.rgb.dim().0
    }
}

/// Region cut from a frame and resampled to the template size.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// `rows x cols x 3`, intensities in `[0, 255]`.
    pub pixels: Array3<f64>,
    pub depth: Array2<u16>,
    /// Frame-space region the patch covers, padding included.
    pub origin: BoundingBox,
}

impl Patch {
    pub fn rows(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn cols(&self) -> usize {
        self.pixels.dim().1
    }
}

/// Cuts the region of `padding_factor² · w · h` around `center` and resamples
/// it to `template = (cols, rows)`.
///
/// RGB is sampled bilinearly with border replication; depth is sampled
/// nearest-neighbour and reads 0 outside the frame.
pub fn extract_patch(
    frame: &Frame,
    center: Point,
    size: Size,
    padding_factor: f64,
    template: (usize, usize),
) -> Result<Patch> {
    if !(padding_factor >= 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "padding factor {padding_factor} must be >= 1"
        )));
    }
    let (tw, th) = template;
    if tw == 0 || th == 0 {
        return Err(Error::InvalidGeometry("template size must be positive".into()));
    }
    let region = size.scaled(padding_factor);
    if !(region.w.round() > 0.0 && region.h.round() > 0.0) || !center.x.is_finite() || !center.y.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "degenerate region {}x{} at ({}, {})",
            region.w, region.h, center.x, center.y
        )));
    }
    let origin = BoundingBox::from_center(center, region)?;

    let fw = frame.width();
    let fh = frame.height();
    let sx = region.w / tw as f64;
    let sy = region.h / th as f64;

    let xs: Vec<f64> = (0..tw).map(|u| origin.x + (u as f64 + 0.5) * sx - 0.5).collect();
    let ys: Vec<f64> = (0..th).map(|v| origin.y + (v as f64 + 0.5) * sy - 0.5).collect();

    let mut pixels = Array3::<f64>::zeros((th, tw, 3));
    let mut depth = Array2::<u16>::zeros((th, tw));

    // Bilinear taps per column are shared by every row.
    let col_taps: Vec<(usize, usize, f64)> = xs.iter().map(|&x| bilinear_taps(x, fw)).collect();
    for (v, &y) in ys.iter().enumerate() {
        let (r0, r1, ty) = bilinear_taps(y, fh);
        for (u, &(c0, c1, tx)) in col_taps.iter().enumerate() {
            for ch in 0..3 {
                let p00 = frame.rgb[[r0, c0, ch]] as f64;
                let p01 = frame.rgb[[r0, c1, ch]] as f64;
                let p10 = frame.rgb[[r1, c0, ch]] as f64;
                let p11 = frame.rgb[[r1, c1, ch]] as f64;
                let top = p00 + (p01 - p00) * tx;
                let bot = p10 + (p11 - p10) * tx;
                pixels[[v, u, ch]] = top + (bot - top) * ty;
            }
        }

        let ry = (y + 0.5).floor();
        if ry < 0.0 || ry >= fh as f64 {
            continue;
        }
        for (u, &x) in xs.iter().enumerate() {
            let rx = (x + 0.5).floor();
            if rx >= 0.0 && rx < fw as f64 {
                depth[[v, u]] = frame.depth[[ry as usize, rx as usize]];
            }
        }
    }

    Ok(Patch {
        pixels,
        depth,
        origin,
    })
}

fn bilinear_taps(coord: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let c = coord.clamp(0.0, max);
    let lo = c.floor();
    let hi = (lo + 1.0).min(max);
    (lo as usize, hi as usize, c - lo)
}
