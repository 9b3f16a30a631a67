use serde::{Deserialize, Serialize};

use crate::geometry::ImageDims;

/// How a backend wants frames sized before inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSizing {
    /// Shorter side scaled to this many pixels, aspect ratio kept.
    MinDim(u32),
    /// Reshaped to exactly these dimensions.
    Fixed(ImageDims),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub name: String,
    pub box_confidence_threshold: f64,
    pub overlap_threshold: f64,
    pub input: InputSizing,
}

impl BackendProfile {
    fn new(name: &str, box_confidence_threshold: f64, overlap_threshold: f64, input: InputSizing) -> Self {
        BackendProfile {
            name: name.to_string(),
            box_confidence_threshold,
            overlap_threshold,
            input,
        }
    }

    pub fn is_fixture(&self) -> bool {
        self.name == FIXTURE
    }
}

pub const FIXTURE: &str = "fixture";
pub const FRCNN_VGG16: &str = "frcnn-vgg16";
pub const FRCNN_RESNET50: &str = "frcnn-resnet50";
/// ResNet50 variant with the stricter 0.8 box threshold used when scoring the
/// test video.
pub const FRCNN_RESNET50_STRICT: &str = "frcnn-resnet50-strict";

const RPN_OVERLAP: f64 = 0.7;

pub fn builtin_profiles() -> Vec<BackendProfile> {
    let fixed_320 = InputSizing::Fixed(ImageDims { width: 320, height: 320 });
    vec![
        BackendProfile::new(FRCNN_VGG16, 0.9, RPN_OVERLAP, InputSizing::MinDim(300)),
        BackendProfile::new(FRCNN_RESNET50, 0.6, RPN_OVERLAP, fixed_320),
        BackendProfile::new(FRCNN_RESNET50_STRICT, 0.8, RPN_OVERLAP, fixed_320),
        BackendProfile::new(FIXTURE, 0.9, RPN_OVERLAP, InputSizing::MinDim(300)),
    ]
}

pub fn find_profile(name: &str) -> Option<BackendProfile> {
    builtin_profiles().into_iter().find(|p| p.name == name)
}
