//! Box geometry: overlap, suppression, flip augmentation and resize planning.
//!
//! Coordinates are continuous pixels with the origin at the top-left corner
//! of the image. Everything here is a pure function over small `Copy` values.

use std::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::event::EventClass;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): need finite non-negative coordinates with x1 < x2 and y1 < y2")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("box {bbox:?} lies outside a {width}x{height} image")]
    OutsideImage { bbox: BoundingBox, width: u32, height: u32 },
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    InvalidDims { width: u32, height: u32 },
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("scaling {bbox:?} by {scale} collapses it to zero width or height")]
    Degenerate { bbox: BoundingBox, scale: f64 },
    #[error("invalid scale factor {0}")]
    InvalidScale(f64),
}

/// Axis-aligned box in pixel space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let valid = [x1, y1, x2, y2].iter().all(|v| v.is_finite() && *v >= 0.0) && x1 < x2 && y1 < y2;
        if valid {
            Ok(BoundingBox { x1, y1, x2, y2 })
        } else {
            Err(GeometryError::InvalidBox { x1, y1, x2, y2 })
        }
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn fits_within(&self, dims: ImageDims) -> bool {
        self.x2 <= f64::from(dims.width) && self.y2 <= f64::from(dims.height)
    }

    /// Lexicographic order on (x1, y1, x2, y2).
    fn lex_cmp(&self, other: &Self) -> Ordering {
        self.coords()
            .iter()
            .zip(other.coords().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(deserializer)?;
        BoundingBox::new(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

/// A labelled, scored box. Confidence is a fraction in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub label: EventClass,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(bbox: BoundingBox, label: EventClass, confidence: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::InvalidConfidence(confidence));
        }
        Ok(Detection { bbox, label, confidence })
    }
}

impl<'de> Deserialize<'de> for Detection {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            label: EventClass,
            confidence: f64,
            #[serde(rename = "box")]
            bbox: BoundingBox,
        }
        let raw = Raw::deserialize(deserializer)?;
        Detection::new(raw.bbox, raw.label, raw.confidence).map_err(serde::de::Error::custom)
    }
}

/// Descending confidence, ties broken by ascending box coordinates and then
/// by label so that the order is total.
pub fn confidence_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.bbox.lex_cmp(&b.bbox))
        .then_with(|| a.label.cmp(&b.label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDims { width, height });
        }
        Ok(ImageDims { width, height })
    }

    pub fn min_side(&self) -> u32 {
        self.width.min(self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePlan {
    pub scale: f64,
    pub new_dims: ImageDims,
}

/// Intersection over union. Boxes that only share an edge have zero
/// intersection.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy, class-agnostic non-maximum suppression.
///
/// The highest-confidence survivor is kept and every remaining detection
/// whose IoU with it is at least `overlap_threshold` is dropped. Output is in
/// [`confidence_order`].
pub fn nms(dets: &[Detection], overlap_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by(confidence_order);

    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::with_capacity(order.len());
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        keep.push(order[i]);
        for j in (i + 1)..order.len() {
            if !suppressed[j] && iou(&order[i].bbox, &order[j].bbox) >= overlap_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Mirror a box about the vertical centre line of the image.
pub fn horizontal_flip(bbox: &BoundingBox, dims: ImageDims) -> Result<BoundingBox, GeometryError> {
    if !bbox.fits_within(dims) {
        return Err(GeometryError::OutsideImage {
            bbox: *bbox,
            width: dims.width,
            height: dims.height,
        });
    }
    let w = f64::from(dims.width);
    BoundingBox::new(w - bbox.x2, bbox.y1, w - bbox.x1, bbox.y2)
}

/// Scale so that the shorter side becomes exactly `target_min` pixels.
///
/// Each side is rounded half away from zero and the shorter side is then
/// pinned to the target, so square images and exact multiples come out exact.
pub fn resize_min_dim(dims: ImageDims, target_min: u32) -> ScalePlan {
    let target_min = target_min.max(1);
    let scale = f64::from(target_min) / f64::from(dims.min_side());
    let scaled = |side: u32| ((f64::from(side) * scale).round() as u32).max(1);
    let (width, height) = if dims.width <= dims.height {
        (target_min, scaled(dims.height).max(target_min))
    } else {
        (scaled(dims.width).max(target_min), target_min)
    };
    ScalePlan {
        scale,
        new_dims: ImageDims { width, height },
    }
}

/// How scaled coordinates are snapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    Exact,
    /// Round each coordinate to the nearest integer pixel, half away from zero.
    Pixel,
}

/// Carry a box through an image resize.
pub fn scale_box(bbox: &BoundingBox, plan: &ScalePlan, rounding: Rounding) -> Result<BoundingBox, GeometryError> {
    if !(plan.scale.is_finite() && plan.scale > 0.0) {
        return Err(GeometryError::InvalidScale(plan.scale));
    }
    let snap = |v: f64| match rounding {
        Rounding::Exact => v * plan.scale,
        Rounding::Pixel => (v * plan.scale).round(),
    };
    let [x1, y1, x2, y2] = bbox.coords().map(snap);
    if x1 >= x2 || y1 >= y2 {
        return Err(GeometryError::Degenerate {
            bbox: *bbox,
            scale: plan.scale,
        });
    }
    BoundingBox::new(x1, y1, x2, y2)
}
