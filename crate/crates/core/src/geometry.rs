//! Integer pixel geometry: points, axis-aligned boxes and the canvas they live on.
//!
//! Coordinates use a top-left origin with `y` growing downward. Overlap ratios
//! are exact rationals so that selection thresholds never depend on float
//! rounding.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Exact ratio in `[0, 1]`.
pub type UnitRatio = Ratio<u64>;

pub const DEFAULT_CANVAS_SIDE: u32 = 512;
pub const MIN_CANVAS_SIDE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned box given by its top-left corner and extent.
///
/// The origin is signed so that boxes proposed outside the canvas (for
/// example by a language model) can be represented and then clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i32,
    pub y: i32,
    pub width: u32,
    pub height: u32,
}

impl BoundingBox {
    pub const fn new(x: i32, y: i32, width: u32, height: u32) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.width >= 1 && self.height >= 1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn right(&self) -> i64 {
        i64::from(self.x) + i64::from(self.width)
    }

    pub fn bottom(&self) -> i64 {
        i64::from(self.y) + i64::from(self.height)
    }

    /// Center rounded toward the top-left: `origin + floor(size / 2)`.
    pub fn center(&self) -> (i64, i64) {
        (
            i64::from(self.x) + i64::from(self.width / 2),
            i64::from(self.y) + i64::from(self.height / 2),
        )
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = self.right().min(other.right()) - i64::from(self.x.max(other.x));
        let h = self.bottom().min(other.bottom()) - i64::from(self.y.max(other.y));
        if w <= 0 || h <= 0 {
            0
        } else {
            (w as u64) * (h as u64)
        }
    }

    /// True when the pixel cell whose top-left corner is `p` lies in the box.
    pub fn contains_point(&self, p: Point) -> bool {
        let (px, py) = (i64::from(p.x), i64::from(p.y));
        px >= i64::from(self.x) && px < self.right() && py >= i64::from(self.y) && py < self.bottom()
    }

    pub fn fits_in(&self, canvas: Canvas) -> bool {
        self.x >= 0
            && self.y >= 0
            && self.right() <= i64::from(canvas.width)
            && self.bottom() <= i64::from(canvas.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn is_valid(&self) -> bool {
        self.width >= MIN_CANVAS_SIDE && self.height >= MIN_CANVAS_SIDE
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x <= self.width && p.y <= self.height
    }

    pub fn max_side(&self) -> u32 {
        self.width.max(self.height)
    }
}

impl Default for Canvas {
    fn default() -> Self {
        Self::new(DEFAULT_CANVAS_SIDE, DEFAULT_CANVAS_SIDE)
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> UnitRatio {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    Ratio::new(inter, union)
}

/// Fraction of `object` covered by `selector`.
pub fn coverage(selector: &BoundingBox, object: &BoundingBox) -> UnitRatio {
    Ratio::new(selector.intersection_area(object), object.area())
}

/// Minimal translation that brings `bbox` fully inside `canvas`.
pub fn clamp_to_canvas(bbox: BoundingBox, canvas: Canvas) -> Result<BoundingBox, GeometryError> {
    if bbox.width > canvas.width || bbox.height > canvas.height {
        return Err(GeometryError::UnplaceableBox { bbox, canvas });
    }
    let max_x = i64::from(canvas.width - bbox.width);
    let max_y = i64::from(canvas.height - bbox.height);
    Ok(BoundingBox {
        x: i64::from(bbox.x).clamp(0, max_x) as i32,
        y: i64::from(bbox.y).clamp(0, max_y) as i32,
        ..bbox
    })
}

/// Centers `bbox` on `target` (same size), then clamps into the canvas.
pub fn move_center_to(
    bbox: BoundingBox,
    target: Point,
    canvas: Canvas,
) -> Result<BoundingBox, GeometryError> {
    if bbox.width > canvas.width || bbox.height > canvas.height {
        return Err(GeometryError::UnplaceableBox { bbox, canvas });
    }
    if !canvas.contains(target) {
        return Err(GeometryError::PointOutsideCanvas {
            point: target,
            canvas,
        });
    }
    let x = i64::from(target.x) - i64::from(bbox.width / 2);
    let y = i64::from(target.y) - i64::from(bbox.height / 2);
    let centered = BoundingBox {
        x: x as i32,
        y: y as i32,
        ..bbox
    };
    clamp_to_canvas(centered, canvas)
}
