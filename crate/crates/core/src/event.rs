use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The closed set of highlight-worthy events the pipeline detects.
///
/// `as_str` returns the canonical spelling used by the metadata file, so
/// "Corner kick" keeps its capital C while the other three are lower case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventClass {
    Foul,
    CornerKick,
    Goal,
    PenaltyKick,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown event label {0:?} (expected foul, corner kick, goal or penalty kick)")]
pub struct UnknownLabel(pub String);

impl EventClass {
    pub const ALL: [EventClass; 4] = [
        EventClass::Foul,
        EventClass::CornerKick,
        EventClass::Goal,
        EventClass::PenaltyKick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::Foul => "foul",
            EventClass::CornerKick => "Corner kick",
            EventClass::Goal => "goal",
            EventClass::PenaltyKick => "penalty kick",
        }
    }

    /// Case-insensitive lookup. Underscores and hyphens count as spaces and
    /// runs of whitespace collapse, so `corner_kick` and `Corner  Kick` both
    /// resolve.
    pub fn parse(label: &str) -> Result<Self, UnknownLabel> {
        let normalized = label
            .replace(['_', '-'], " ")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        match normalized.as_str() {
            "foul" => Ok(EventClass::Foul),
            "corner kick" => Ok(EventClass::CornerKick),
            "goal" => Ok(EventClass::Goal),
            "penalty kick" => Ok(EventClass::PenaltyKick),
            _ => Err(UnknownLabel(label.to_string())),
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventClass::parse(s)
    }
}

impl Serialize for EventClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EventClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        EventClass::parse(&raw).map_err(serde::de::Error::custom)
    }
}
