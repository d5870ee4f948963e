//! Concept texts assembled into the four temporal representations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Concept, DescriptionStore, EntryKey, Payload, VideoEntry};
use crate::error::{Error, Result};

/// Concept family of a representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Objects,
    Activities,
    Verbs,
    ObjCompAct,
}

impl ConceptKind {
    pub const ALL: [ConceptKind; 4] =
        [ConceptKind::Objects, ConceptKind::Activities, ConceptKind::Verbs, ConceptKind::ObjCompAct];

    pub fn as_str(self) -> &'static str {
        match self {
            ConceptKind::Objects => "objects",
            ConceptKind::Activities => "activities",
            ConceptKind::Verbs => "verbs",
            ConceptKind::ObjCompAct => "obj_comp_act",
        }
    }

    /// Store concept holding the per-frame text.
    pub fn concept(self) -> Concept {
        match self {
            ConceptKind::Objects => Concept::Objects,
            ConceptKind::Activities => Concept::Activities,
            ConceptKind::Verbs => Concept::Verbs,
            ConceptKind::ObjCompAct => Concept::ObjCompAct,
        }
    }
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConceptKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ConceptKind::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown concept `{s}` (expected objects, activities, verbs or obj_comp_act)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    MiddleFrame,
    MaxScoreFrame,
    AvgOverFrames,
    SeqOfFrames,
}

impl Temporal {
    pub const ALL: [Temporal; 4] =
        [Temporal::MiddleFrame, Temporal::MaxScoreFrame, Temporal::AvgOverFrames, Temporal::SeqOfFrames];

    pub fn as_str(self) -> &'static str {
        match self {
            Temporal::MiddleFrame => "middle_frame",
            Temporal::MaxScoreFrame => "max_score_frame",
            Temporal::AvgOverFrames => "avg_over_frames",
            Temporal::SeqOfFrames => "seq_of_frames",
        }
    }

    /// Whether the representation is one text per frame.
    pub fn is_per_frame(self) -> bool {
        matches!(self, Temporal::MaxScoreFrame | Temporal::AvgOverFrames)
    }
}

impl fmt::Display for Temporal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Temporal {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Temporal::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            format!("unknown temporal `{s}` (expected middle_frame, max_score_frame, avg_over_frames or seq_of_frames)")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RepresentationSpec {
    pub concept: ConceptKind,
    pub temporal: Temporal,
}

impl RepresentationSpec {
    pub fn new(concept: ConceptKind, temporal: Temporal) -> Self {
        RepresentationSpec { concept, temporal }
    }

    /// All 16 cells, concept-major.
    pub fn grid() -> Vec<RepresentationSpec> {
        ConceptKind::ALL
            .into_iter()
            .flat_map(|c| Temporal::ALL.into_iter().map(move |t| RepresentationSpec::new(c, t)))
            .collect()
    }
}

impl fmt::Display for RepresentationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.concept, self.temporal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepresentationText {
    Single(String),
    PerFrame(Vec<String>),
}

impl RepresentationText {
    /// Texts in frame order; a single text yields one item.
    pub fn texts(&self) -> &[String] {
        match self {
            RepresentationText::Single(t) => std::slice::from_ref(t),
            RepresentationText::PerFrame(ts) => ts,
        }
    }
}

fn missing(video: &str, frame: usize, concept: Concept) -> Error {
    Error::MissingEntry(EntryKey { video_id: video.to_owned(), frame, concept }.to_string())
}

/// Text of one frame: lists joined with ", ", descriptions as-is.
///
/// An empty list renders as a fixed sentence so that downstream embedding
/// never sees an empty input.
pub fn frame_text(store: &DescriptionStore, video: &str, frame: usize, concept: Concept) -> Result<String> {
    match store.get(video, frame, concept) {
        Some(Payload::Text(t)) => Ok(t.clone()),
        Some(Payload::List(items)) if items.is_empty() => Ok(empty_list_text(concept).to_owned()),
        Some(Payload::List(items)) => Ok(items.join(", ")),
        None => Err(missing(video, frame, concept)),
    }
}

fn empty_list_text(concept: Concept) -> &'static str {
    match concept {
        Concept::Objects => NO_OBJECTS,
        _ => crate::annotate::prompts::NO_ACTIVITY,
    }
}

pub const NO_OBJECTS: &str = "No objects are visible.";

pub fn middle_frame(video: &VideoEntry) -> usize {
    video.frames.len() / 2
}

/// `Frame 1: x1 Frame 2: x2 ...` over all frames.
///
/// For obj_comp_act the 15-word summaries are used in place of the full descriptions.
pub fn sequence_of_frames(store: &DescriptionStore, video: &VideoEntry, concept: ConceptKind) -> Result<String> {
    let source = match concept {
        ConceptKind::ObjCompAct => Concept::ObjCompAct15w,
        other => other.concept(),
    };
    let parts = (0..video.frames.len())
        .map(|i| Ok(format!("Frame {}: {}", i + 1, frame_text(store, &video.id, i, source)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.join(" "))
}

pub fn build(store: &DescriptionStore, video: &VideoEntry, spec: RepresentationSpec) -> Result<RepresentationText> {
    let concept = spec.concept.concept();
    Ok(match spec.temporal {
        Temporal::MiddleFrame => {
            RepresentationText::Single(frame_text(store, &video.id, middle_frame(video), concept)?)
        }
        Temporal::SeqOfFrames => RepresentationText::Single(sequence_of_frames(store, video, spec.concept)?),
        Temporal::AvgOverFrames | Temporal::MaxScoreFrame => RepresentationText::PerFrame(
            (0..video.frames.len()).map(|i| frame_text(store, &video.id, i, concept)).collect::<Result<_>>()?,
        ),
    })
}
