use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::model::{EntityId, Episode, EntityTrack};

const MASK_TOLERANCE_PX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateEntity { entity: EntityId },
    EmptyTrack { entity: EntityId },
    FrameIndexZero { entity: EntityId },
    NonMonotonicFrames { entity: EntityId, frame: u32, previous: u32 },
    DegenerateBox { entity: EntityId, frame: u32 },
    ConfidenceOutOfRange { entity: EntityId, frame: u32, value: f64 },
    MaskOutsideBox { entity: EntityId, frame: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateEntity { entity } => write!(f, "entity id `{entity}` is not unique"),
            Violation::EmptyTrack { entity } => write!(f, "track `{entity}` has no detections"),
            Violation::FrameIndexZero { entity } => write!(f, "track `{entity}` uses frame index 0"),
            Violation::NonMonotonicFrames { entity, frame, previous } => {
                write!(f, "track `{entity}`: frame {frame} does not follow {previous}")
            }
            Violation::DegenerateBox { entity, frame } => {
                write!(f, "track `{entity}` frame {frame}: box has non-positive size")
            }
            Violation::ConfidenceOutOfRange { entity, frame, value } => {
                write!(f, "track `{entity}` frame {frame}: confidence {value} outside [0,1]")
            }
            Violation::MaskOutsideBox { entity, frame } => {
                write!(f, "track `{entity}` frame {frame}: mask extends beyond box")
            }
        }
    }
}

/// Run of consecutive frames, inside the episode range, where an entity was not detected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OcclusionInterval {
    pub entity: EntityId,
    pub start: u32,
    pub end: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Informational; gaps are allowed and do not make the report non-empty.
    pub occlusions: Vec<OcclusionInterval>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every track/detection invariant and lists detection gaps against the
/// episode's overall frame range.
pub fn validate_episode(episode: &Episode) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for track in &episode.tracks {
        if !seen.insert(&track.id) {
            report.violations.push(Violation::DuplicateEntity { entity: track.id.clone() });
        }
        check_track(track, &mut report.violations);
    }
    if let Some((first, last)) = episode.frame_range() {
        for track in &episode.tracks {
            report.occlusions.extend(gaps(track, first, last));
        }
    }
    report
}

fn check_track(track: &EntityTrack, out: &mut Vec<Violation>) {
    let entity = || track.id.clone();
    if track.frames.is_empty() {
        out.push(Violation::EmptyTrack { entity: entity() });
        return;
    }
    let mut previous: Option<u32> = None;
    for det in &track.frames {
        if det.frame == 0 {
            out.push(Violation::FrameIndexZero { entity: entity() });
        }
        if let Some(p) = previous {
            if det.frame <= p {
                out.push(Violation::NonMonotonicFrames { entity: entity(), frame: det.frame, previous: p });
            }
        }
        previous = Some(det.frame);
        if !det.bbox.is_valid() {
            out.push(Violation::DegenerateBox { entity: entity(), frame: det.frame });
        }
        if !(0.0..=1.0).contains(&det.confidence) {
            out.push(Violation::ConfidenceOutOfRange {
                entity: entity(),
                frame: det.frame,
                value: det.confidence,
            });
        }
        if let Some(mask) = &det.mask {
            let inside = mask.bounding_box().is_none_or(|mb| det.bbox.contains_box(&mb, MASK_TOLERANCE_PX));
            if !inside {
                out.push(Violation::MaskOutsideBox { entity: entity(), frame: det.frame });
            }
        }
    }
}

fn gaps(track: &EntityTrack, first: u32, last: u32) -> Vec<OcclusionInterval> {
    let mut out = Vec::new();
    let mut expected = first;
    let mut push = |start: u32, end: u32| {
        if start <= end {
            out.push(OcclusionInterval { entity: track.id.clone(), start, end });
        }
    };
    for det in &track.frames {
        if det.frame > expected {
            push(expected, det.frame - 1);
        }
        expected = expected.max(det.frame.saturating_add(1));
    }
    if expected <= last {
        push(expected, last);
    }
    out
}
