//! Ground-truth annotation formats.
//!
//! Reads labelImg's Pascal-VOC XML and writes the comma-separated
//! `path,x1,y1,x2,y2,class` interchange used for training (`annotation.txt`,
//! and with a header row, `train.csv` / `test.csv`).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventClass, UnknownLabel};
use crate::geometry::{horizontal_flip, BoundingBox, GeometryError, ImageDims};

pub const CSV_HEADER: &str = "filename,x1,y1,x2,y2,class";
pub const FLIP_SUFFIX: &str = "_hflip";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed XML at line {line}: {message}")]
    Xml { line: u32, message: String },
    #[error("line {line}: {source}")]
    Label {
        line: u32,
        #[source]
        source: UnknownLabel,
    },
    #[error("line {line}: {source}")]
    Geometry {
        line: u32,
        #[source]
        source: GeometryError,
    },
    #[error("line {line}: expected 6 comma-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: coordinate {value:?} is not a number")]
    Coordinate { line: usize, value: String },
    #[error("line {line}: {source}")]
    LineLabel {
        line: usize,
        #[source]
        source: UnknownLabel,
    },
    #[error("line {line}: {source}")]
    LineGeometry {
        line: usize,
        #[source]
        source: GeometryError,
    },
    #[error("image path must not be empty")]
    EmptyPath,
    #[error("{0:?} appears in both the train and the test split")]
    Overlap(String),
    #[error("test fraction {0} is outside [0, 1]")]
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub label: EventClass,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_path: String,
    pub dims: ImageDims,
    pub objects: Vec<AnnotatedObject>,
}

/// One row of `annotation.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationLine {
    pub image_path: String,
    pub bbox: BoundingBox,
    pub label: EventClass,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<AnnotatedImage>,
    pub test: Vec<AnnotatedImage>,
}

fn line_of(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn child<'a, 'i>(
    doc: &roxmltree::Document<'i>,
    parent: roxmltree::Node<'a, 'i>,
    name: &str,
) -> Result<roxmltree::Node<'a, 'i>, AnnotationError> {
    parent
        .children()
        .find(|n| n.has_tag_name(name))
        .ok_or_else(|| AnnotationError::Xml {
            line: line_of(doc, parent),
            message: format!("<{}> has no <{name}> element", parent.tag_name().name()),
        })
}

fn child_text<'a>(
    doc: &roxmltree::Document<'a>,
    parent: roxmltree::Node<'_, 'a>,
    name: &str,
) -> Result<(String, u32), AnnotationError> {
    let node = child(doc, parent, name)?;
    Ok((node.text().unwrap_or("").trim().to_string(), line_of(doc, node)))
}

fn child_number<'a>(doc: &roxmltree::Document<'a>, parent: roxmltree::Node<'_, 'a>, name: &str) -> Result<f64, AnnotationError> {
    let (text, line) = child_text(doc, parent, name)?;
    text.parse::<f64>().map_err(|_| AnnotationError::Xml {
        line,
        message: format!("<{name}> value {text:?} is not a number"),
    })
}

/// Parse one labelImg (Pascal-VOC) XML annotation.
///
/// The image path is taken from `<filename>`; `<path>` is machine-specific in
/// labelImg output and is ignored.
pub fn parse_voc_xml(text: &str) -> Result<AnnotatedImage, AnnotationError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| AnnotationError::Xml {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let root = doc.root_element();

    let (image_path, _) = child_text(&doc, root, "filename")?;
    if image_path.is_empty() {
        return Err(AnnotationError::EmptyPath);
    }

    let size = child(&doc, root, "size")?;
    let width = child_number(&doc, size, "width")?;
    let height = child_number(&doc, size, "height")?;
    let dims = ImageDims::new(width as u32, height as u32).map_err(|source| AnnotationError::Geometry {
        line: line_of(&doc, size),
        source,
    })?;

    let mut objects = Vec::new();
    for obj in root.children().filter(|n| n.has_tag_name("object")) {
        let (name, name_line) = child_text(&doc, obj, "name")?;
        let label = EventClass::parse(&name).map_err(|source| AnnotationError::Label { line: name_line, source })?;
        let bnd = child(&doc, obj, "bndbox")?;
        let line = line_of(&doc, bnd);
        let bbox = BoundingBox::new(
            child_number(&doc, bnd, "xmin")?,
            child_number(&doc, bnd, "ymin")?,
            child_number(&doc, bnd, "xmax")?,
            child_number(&doc, bnd, "ymax")?,
        )
        .map_err(|source| AnnotationError::Geometry { line, source })?;
        if !bbox.fits_within(dims) {
            return Err(AnnotationError::Geometry {
                line,
                source: GeometryError::OutsideImage { bbox, width: dims.width, height: dims.height },
            });
        }
        objects.push(AnnotatedObject { label, bbox });
    }

    Ok(AnnotatedImage { image_path, dims, objects })
}

fn push_row(out: &mut String, path: &str, obj: &AnnotatedObject) {
    let b = obj.bbox;
    out.push_str(&format!(
        "{},{},{},{},{},{}\n",
        path,
        b.x1().floor() as i64,
        b.y1().floor() as i64,
        b.x2().ceil() as i64,
        b.y2().ceil() as i64,
        obj.label
    ));
}

/// `annotation.txt`: one headerless row per object, integer pixels (top-left
/// corner floored, bottom-right corner ceiled), in input order. Images without
/// objects contribute nothing.
pub fn write_annotation_lines(images: &[AnnotatedImage]) -> String {
    let mut out = String::new();
    for img in images {
        for obj in &img.objects {
            push_row(&mut out, &img.image_path, obj);
        }
    }
    out
}

/// Same rows as [`write_annotation_lines`] under a `filename,x1,y1,x2,y2,class` header.
pub fn write_split_csv(images: &[AnnotatedImage]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    out.push_str(&write_annotation_lines(images));
    out
}

/// Inverse of [`write_annotation_lines`]. Blank lines are skipped and a
/// leading CSV header row is tolerated.
pub fn parse_annotation_lines(text: &str) -> Result<Vec<AnnotationLine>, AnnotationError> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || (line == 1 && raw.trim() == CSV_HEADER) {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 6 {
            return Err(AnnotationError::FieldCount { line, found: fields.len() });
        }
        let mut coords = [0.0f64; 4];
        for (slot, value) in coords.iter_mut().zip(&fields[1..5]) {
            *slot = value.trim().parse().map_err(|_| AnnotationError::Coordinate {
                line,
                value: value.to_string(),
            })?;
        }
        let label = EventClass::parse(fields[5]).map_err(|source| AnnotationError::LineLabel { line, source })?;
        let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])
            .map_err(|source| AnnotationError::LineGeometry { line, source })?;
        if fields[0].is_empty() {
            return Err(AnnotationError::EmptyPath);
        }
        rows.push(AnnotationLine {
            image_path: fields[0].to_string(),
            bbox,
            label,
        });
    }
    Ok(rows)
}

/// `frames/a.jpg` -> `frames/a_hflip.jpg`; paths without an extension just
/// get the suffix appended.
pub fn flipped_path(path: &str) -> String {
    let name_start = path.rfind(['/', '\\']).map_or(0, |i| i + 1);
    match path[name_start..].rfind('.') {
        Some(dot) if dot > 0 => {
            let dot = name_start + dot;
            format!("{}{}{}", &path[..dot], FLIP_SUFFIX, &path[dot..])
        }
        _ => format!("{path}{FLIP_SUFFIX}"),
    }
}

/// Interleave each image with its horizontally flipped twin.
pub fn augment_flip(images: &[AnnotatedImage]) -> Result<Vec<AnnotatedImage>, GeometryError> {
    let mut out = Vec::with_capacity(images.len() * 2);
    for img in images {
        let objects = img
            .objects
            .iter()
            .map(|o| {
                Ok(AnnotatedObject {
                    label: o.label,
                    bbox: horizontal_flip(&o.bbox, img.dims)?,
                })
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        out.push(img.clone());
        out.push(AnnotatedImage {
            image_path: flipped_path(&img.image_path),
            dims: img.dims,
            objects,
        });
    }
    Ok(out)
}

impl DatasetSplit {
    /// Split by an explicit list of test image paths; everything else trains.
    pub fn by_test_list(images: Vec<AnnotatedImage>, test_paths: &[&str]) -> Self {
        let test_set: HashSet<&str> = test_paths.iter().copied().collect();
        let (test, train) = images
            .into_iter()
            .partition(|img| test_set.contains(img.image_path.as_str()));
        DatasetSplit { train, test }
    }

    /// Seeded shuffle then cut. The test side gets `round(len * test_fraction)` images.
    pub fn random(mut images: Vec<AnnotatedImage>, test_fraction: f64, seed: u64) -> Result<Self, AnnotationError> {
        if !(0.0..=1.0).contains(&test_fraction) {
            return Err(AnnotationError::Fraction(test_fraction));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        images.shuffle(&mut rng);
        let n_test = (images.len() as f64 * test_fraction).round() as usize;
        let train = images.split_off(n_test);
        let split = DatasetSplit { train, test: images };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        let train: HashSet<&str> = self.train.iter().map(|i| i.image_path.as_str()).collect();
        match self.test.iter().find(|i| train.contains(i.image_path.as_str())) {
            Some(dup) => Err(AnnotationError::Overlap(dup.image_path.clone())),
            None => Ok(()),
        }
    }
}
