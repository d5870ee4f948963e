//! Embedding instructions for zero-shot classification, retrieval and the debiasing panel.

use std::fmt;

use serde::Serialize;

use crate::corpus::Task;
use crate::represent::{ConceptKind, Temporal};

pub const CLS_ACTIONS_SEQ: &str =
    "Given a description of actions visible on the video frames, retrieve the activity depicted in this video.";
pub const CLS_ACTIONS_SINGLE: &str =
    "Given a description of actions visible on the video frame, retrieve the activity depicted in this video.";
pub const CLS_LABEL_SEQ: &str = "Given an activity, retrieve a video description that may depict this activity.";
pub const CLS_LABEL_SINGLE: &str =
    "Given an activity, retrieve a video frame description that may depict this activity.";
pub const CLS_OBJ_COMP_ACT_SEQ: &str =
    "Given descriptions of video frames, retrieve the activity depicted in this video.";
pub const CLS_OBJ_COMP_ACT_SINGLE: &str =
    "Given a video frame description, retrieve the activity depicted in this video.";
pub const CLS_OBJECTS_SEQ: &str =
    "Given lists of objects visible on the video frames, retrieve the activity depicted in this video.";
pub const CLS_OBJECTS_SINGLE: &str =
    "Given a list of objects visible on the video frame, retrieve the activity depicted in this video.";
pub const DEBIAS_CLS_VIDEO_1: &str =
    "Given lists of objects visible on the video frames, retrieve the activity depicted in this video.";
pub const DEBIAS_CLS_VIDEO_2: &str =
    "Using lists of objects seen in video frames, retrieve the activity captured in the video.";
pub const DEBIAS_CLS_VIDEO_3: &str =
    "From lists of objects present in video frames, retrieve the activity that the video shows.";
pub const DEBIAS_RET_QUERY_1: &str = "Given a short video description, retrieve another description of this video.";
pub const DEBIAS_RET_QUERY_2: &str =
    "Use a brief video description as a query to retrieve an alternative description of the same video.";
pub const DEBIAS_RET_QUERY_3: &str = "Given a concise video description, retrieve another description for that video.";
pub const DEBIAS_RET_VIDEO_1: &str =
    "Given lists of objects visible on the video frames, retrieve a short video description.";
pub const DEBIAS_RET_VIDEO_2: &str =
    "Using lists of objects seen in video frames, retrieve a brief description of the video.";
pub const DEBIAS_RET_VIDEO_3: &str =
    "From lists of objects present in video frames, retrieve a concise video description.";
pub const RET_ACTIONS_SEQ: &str =
    "Given a description of actions visible on the video frames, retrieve a short video description.";
pub const RET_ACTIONS_SINGLE: &str =
    "Given a description of actions visible on the video frame, retrieve a short video description.";
pub const RET_CAPTION_SEQ: &str = "Given a short video description, retrieve another description of this video.";
pub const RET_CAPTION_SINGLE: &str =
    "Given a short video description, retrieve a description of a specific frame within that video.";
pub const RET_OBJ_COMP_ACT_SEQ: &str =
    "Given descriptions of video frames, retrieve a short description of the full video.";
pub const RET_OBJ_COMP_ACT_SINGLE: &str =
    "Given a description of a single video frame, retrieve a short description of the full video.";
pub const RET_OBJECTS_SEQ: &str =
    "Given lists of objects visible on the video frames, retrieve a short video description.";
pub const RET_OBJECTS_SINGLE: &str =
    "Given a list of objects visible on the video frame, retrieve a short video description.";

/// Which side of a comparison an instruction embeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Frame descriptions of a video.
    Video,
    /// Class names or captions.
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    SingleFrame,
    Sequence,
}

impl Arity {
    pub fn of(temporal: Temporal) -> Arity {
        match temporal {
            Temporal::SeqOfFrames => Arity::Sequence,
            _ => Arity::SingleFrame,
        }
    }
}

/// An instruction and the configuration it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct InstructionPrompt {
    pub text: &'static str,
    pub side: Side,
    pub task: Task,
    /// Description concept for video-side prompts.
    pub concept: Option<ConceptKind>,
    pub arity: Arity,
    /// 1-based variant for the debiasing panel prompts.
    pub variant: Option<u8>,
}

impl InstructionPrompt {
    /// Stable identifier, e.g. `classification/video/objects/sequence`.
    pub fn id(&self) -> String {
        let task = match self.task {
            Task::Classification => "classification",
            Task::Retrieval => "retrieval",
        };
        let side = match self.side {
            Side::Video => "video",
            Side::Query => "query",
        };
        let arity = match self.arity {
            Arity::SingleFrame => "single_frame",
            Arity::Sequence => "sequence",
        };
        let mut id = format!("{task}/{side}");
        if let Some(c) = self.concept {
            id.push('/');
            id.push_str(c.as_str());
        }
        id.push('/');
        id.push_str(arity);
        if let Some(v) = self.variant {
            id.push_str(&format!("/v{v}"));
        }
        id
    }
}

impl fmt::Display for InstructionPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Instruction for embedding a video's `concept` descriptions.
pub fn video_instruction(task: Task, concept: ConceptKind, temporal: Temporal) -> InstructionPrompt {
    let arity = Arity::of(temporal);
    let seq = arity == Arity::Sequence;
    let text = match (task, concept, seq) {
        (Task::Classification, ConceptKind::ObjCompAct, false) => CLS_OBJ_COMP_ACT_SINGLE,
        (Task::Classification, ConceptKind::ObjCompAct, true) => CLS_OBJ_COMP_ACT_SEQ,
        (Task::Classification, ConceptKind::Objects, false) => CLS_OBJECTS_SINGLE,
        (Task::Classification, ConceptKind::Objects, true) => CLS_OBJECTS_SEQ,
        (Task::Classification, ConceptKind::Activities | ConceptKind::Verbs, false) => CLS_ACTIONS_SINGLE,
        (Task::Classification, ConceptKind::Activities | ConceptKind::Verbs, true) => CLS_ACTIONS_SEQ,
        (Task::Retrieval, ConceptKind::ObjCompAct, false) => RET_OBJ_COMP_ACT_SINGLE,
        (Task::Retrieval, ConceptKind::ObjCompAct, true) => RET_OBJ_COMP_ACT_SEQ,
        (Task::Retrieval, ConceptKind::Objects, false) => RET_OBJECTS_SINGLE,
        (Task::Retrieval, ConceptKind::Objects, true) => RET_OBJECTS_SEQ,
        (Task::Retrieval, ConceptKind::Activities | ConceptKind::Verbs, false) => RET_ACTIONS_SINGLE,
        (Task::Retrieval, ConceptKind::Activities | ConceptKind::Verbs, true) => RET_ACTIONS_SEQ,
    };
    InstructionPrompt { text, side: Side::Video, task, concept: Some(concept), arity, variant: None }
}

/// Instruction for embedding class names (classification) or captions (retrieval).
pub fn query_instruction(task: Task, temporal: Temporal) -> InstructionPrompt {
    let arity = Arity::of(temporal);
    let text = match (task, arity) {
        (Task::Classification, Arity::SingleFrame) => CLS_LABEL_SINGLE,
        (Task::Classification, Arity::Sequence) => CLS_LABEL_SEQ,
        (Task::Retrieval, Arity::SingleFrame) => RET_CAPTION_SINGLE,
        (Task::Retrieval, Arity::Sequence) => RET_CAPTION_SEQ,
    };
    InstructionPrompt { text, side: Side::Query, task, concept: None, arity, variant: None }
}

pub const PANEL_VARIANTS: u8 = 3;

/// Video-side debiasing instruction `variant` (1..=3) for objects in the sequence setup.
pub fn debias_video_instruction(task: Task, variant: u8) -> Option<InstructionPrompt> {
    let text = match (task, variant) {
        (Task::Classification, 1) => DEBIAS_CLS_VIDEO_1,
        (Task::Classification, 2) => DEBIAS_CLS_VIDEO_2,
        (Task::Classification, 3) => DEBIAS_CLS_VIDEO_3,
        (Task::Retrieval, 1) => DEBIAS_RET_VIDEO_1,
        (Task::Retrieval, 2) => DEBIAS_RET_VIDEO_2,
        (Task::Retrieval, 3) => DEBIAS_RET_VIDEO_3,
        _ => return None,
    };
    Some(InstructionPrompt {
        text,
        side: Side::Video,
        task,
        concept: Some(ConceptKind::Objects),
        arity: Arity::Sequence,
        variant: Some(variant),
    })
}

/// Caption-side debiasing instruction `variant` (1..=3); retrieval only.
pub fn debias_query_instruction(variant: u8) -> Option<InstructionPrompt> {
    let text = match variant {
        1 => DEBIAS_RET_QUERY_1,
        2 => DEBIAS_RET_QUERY_2,
        3 => DEBIAS_RET_QUERY_3,
        _ => return None,
    };
    Some(InstructionPrompt {
        text,
        side: Side::Query,
        task: Task::Retrieval,
        concept: None,
        arity: Arity::Sequence,
        variant: Some(variant),
    })
}

/// `Instruct: {instruction}\nQuery: {text}`
pub fn render(instruction: &str, text: &str) -> String {
    format!("Instruct: {instruction}\nQuery: {text}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activities_and_verbs_share_wording() {
        for task in [Task::Classification, Task::Retrieval] {
            for t in Temporal::ALL {
                assert_eq!(
                    video_instruction(task, ConceptKind::Activities, t).text,
                    video_instruction(task, ConceptKind::Verbs, t).text
                );
            }
        }
    }

    #[test]
    fn arity_follows_temporal() {
        assert_eq!(query_instruction(Task::Classification, Temporal::SeqOfFrames).text, CLS_LABEL_SEQ);
        assert_eq!(query_instruction(Task::Classification, Temporal::AvgOverFrames).text, CLS_LABEL_SINGLE);
        assert_eq!(
            video_instruction(Task::Retrieval, ConceptKind::Objects, Temporal::MaxScoreFrame).id(),
            "retrieval/video/objects/single_frame"
        );
    }

    #[test]
    fn first_debias_variant_matches_the_grid_wording() {
        let grid = video_instruction(Task::Classification, ConceptKind::Objects, Temporal::SeqOfFrames);
        assert_eq!(debias_video_instruction(Task::Classification, 1).unwrap().text, grid.text);
        assert_eq!(debias_query_instruction(1).unwrap().text, RET_CAPTION_SEQ);
        assert!(debias_video_instruction(Task::Retrieval, 4).is_none());
    }

    #[test]
    fn template() {
        assert_eq!(render("Do it.", "cat"), "Instruct: Do it.\nQuery: cat");
    }
}
