use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::json;
use super::manifest::DatasetManifest;
use crate::error::{Error, Result, SchemaProblem};

/// Per-frame description kinds stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concept {
    /// Free-text frame description from the vision-language model.
    ObjCompAct,
    Objects,
    Activities,
    Verbs,
    /// 15-word summary of `ObjCompAct`, used only in sequence templates.
    #[serde(rename = "obj_comp_act_15w")]
    ObjCompAct15w,
}

impl Concept {
    pub const ALL: [Concept; 5] =
        [Concept::ObjCompAct, Concept::Objects, Concept::Activities, Concept::Verbs, Concept::ObjCompAct15w];

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::ObjCompAct => "obj_comp_act",
            Concept::Objects => "objects",
            Concept::Activities => "activities",
            Concept::Verbs => "verbs",
            Concept::ObjCompAct15w => "obj_comp_act_15w",
        }
    }

    /// Whether the payload is a list of strings (otherwise free text).
    pub fn is_list(self) -> bool {
        matches!(self, Concept::Objects | Concept::Activities | Concept::Verbs)
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Concept {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Concept::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown concept `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text(String),
    List(Vec<String>),
}

/// Address of one description entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryKey {
    pub video_id: String,
    pub frame: usize,
    pub concept: Concept,
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/frame {}/{}", self.video_id, self.frame, self.concept)
    }
}

/// Per-frame concept texts keyed by (video, frame, concept).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptionStore {
    videos: BTreeMap<String, BTreeMap<Concept, Vec<Option<Payload>>>>,
    /// Unrecognized concept keys seen while loading.
    warnings: Vec<String>,
}

impl DescriptionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, video_id: &str, frame: usize, concept: Concept) -> Option<&Payload> {
        self.videos.get(video_id)?.get(&concept)?.get(frame)?.as_ref()
    }

    pub fn contains(&self, video_id: &str, frame: usize, concept: Concept) -> bool {
        self.get(video_id, frame, concept).is_some()
    }

    /// Inserts after checking the payload kind and that list payloads contain no empty strings.
    pub fn insert(&mut self, video_id: &str, frame: usize, concept: Concept, payload: Payload) -> Result<()> {
        check_payload(video_id, frame, concept, &payload)?;
        let frames = self.videos.entry(video_id.to_owned()).or_default().entry(concept).or_default();
        if frames.len() <= frame {
            frames.resize(frame + 1, None);
        }
        frames[frame] = Some(payload);
        Ok(())
    }

    pub fn remove(&mut self, video_id: &str, frame: usize, concept: Concept) -> Option<Payload> {
        self.videos.get_mut(video_id)?.get_mut(&concept)?.get_mut(frame)?.take()
    }

    /// Number of populated entries.
    pub fn len(&self) -> usize {
        self.videos.values().flat_map(|c| c.values()).map(|frames| frames.iter().filter(|p| p.is_some()).count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_concept(&self, concept: Concept) -> usize {
        self.videos
            .values()
            .filter_map(|c| c.get(&concept))
            .map(|frames| frames.iter().filter(|p| p.is_some()).count())
            .sum()
    }

    pub fn has_concept(&self, concept: Concept) -> bool {
        self.count_concept(concept) > 0
    }

    pub fn concepts(&self) -> Vec<Concept> {
        Concept::ALL.into_iter().filter(|c| self.has_concept(*c)).collect()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        json::write_sorted(path, &self.to_file_layout())
    }

    fn to_file_layout(&self) -> BTreeMap<&str, BTreeMap<&str, &Vec<Option<Payload>>>> {
        self.videos
            .iter()
            .map(|(video, concepts)| {
                let concepts = concepts.iter().map(|(c, frames)| (c.as_str(), frames)).collect();
                (video.as_str(), concepts)
            })
            .collect()
    }
}

fn check_payload(video_id: &str, frame: usize, concept: Concept, payload: &Payload) -> Result<()> {
    let key = || EntryKey { video_id: video_id.to_owned(), frame, concept }.to_string();
    match (concept.is_list(), payload) {
        (true, Payload::List(items)) => {
            if items.iter().any(|s| s.is_empty()) {
                return Err(Error::schema(key(), SchemaProblem::EmptyString));
            }
        }
        (false, Payload::Text(_)) => {}
        _ => return Err(Error::schema(key(), SchemaProblem::PayloadKind(concept.to_string()))),
    }
    Ok(())
}

type RawFile = BTreeMap<String, BTreeMap<String, Vec<Option<Payload>>>>;

/// Loads a descriptions file, checking every key against `manifest`.
///
/// Missing entries (`null` or short arrays) are kept missing; `validate_store`
/// reports them. Unknown concept keys are ignored and recorded as warnings.
pub fn load_descriptions(path: &Path, manifest: &DatasetManifest) -> Result<DescriptionStore> {
    let raw: RawFile = json::read(path)?;
    let index = manifest.video_index();
    let mut store = DescriptionStore::new();
    for (video_id, concepts) in raw {
        let video = index.get(video_id.as_str()).ok_or_else(|| Error::UnknownVideo(video_id.clone()))?;
        for (concept_key, frames) in concepts {
            let Ok(concept) = concept_key.parse::<Concept>() else {
                store.warnings.push(format!("{video_id}: ignored unknown concept `{concept_key}`"));
                continue;
            };
            if frames.len() > video.frame_count() {
                return Err(Error::schema(
                    format!("{video_id}/{concept}"),
                    SchemaProblem::FrameOutOfRange { index: frames.len() - 1, frames: video.frame_count() },
                ));
            }
            for (frame, payload) in frames.into_iter().enumerate() {
                if let Some(payload) = payload {
                    store.insert(&video_id, frame, concept, payload)?;
                }
            }
        }
    }
    Ok(store)
}
