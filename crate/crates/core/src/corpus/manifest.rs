use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::json;
use crate::error::{Error, Result, SchemaProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Retrieval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Test,
}

/// One video and its pre-sampled frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    /// Frame image paths in temporal order. Opaque to everything but `annotate`.
    pub frames: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
    pub split: SplitRole,
}

impl VideoEntry {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

/// A text-to-video retrieval query: one caption of one test video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub video_id: String,
    pub text: String,
}

/// Query ids are `<video id>#<caption index>`.
pub fn query_id(video_id: &str, caption_index: usize) -> String {
    format!("{video_id}#{caption_index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    pub videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.videos.is_empty() {
            return Err(Error::schema(&self.name, SchemaProblem::EmptyDataset));
        }
        if self.task == Task::Classification && self.classes.is_empty() {
            return Err(Error::schema(
                &self.name,
                SchemaProblem::Other("classification manifest declares no classes".into()),
            ));
        }
        if self.task == Task::Retrieval && !self.classes.is_empty() {
            return Err(Error::schema(
                &self.name,
                SchemaProblem::TaskMismatch("retrieval manifest must not declare classes"),
            ));
        }
        let mut seen = HashSet::new();
        for video in &self.videos {
            if !seen.insert(video.id.as_str()) {
                return Err(Error::schema(&video.id, SchemaProblem::DuplicateId));
            }
            if video.frames.is_empty() {
                return Err(Error::schema(&video.id, SchemaProblem::EmptyFrames));
            }
            match self.task {
                Task::Classification => {
                    if video.captions.is_some() {
                        return Err(Error::schema(
                            &video.id,
                            SchemaProblem::TaskMismatch("classification video carries captions"),
                        ));
                    }
                    let index = video
                        .label_index
                        .ok_or_else(|| Error::schema(&video.id, SchemaProblem::TaskMismatch("missing label_index")))?;
                    if index >= self.classes.len() {
                        return Err(Error::schema(
                            &video.id,
                            SchemaProblem::LabelOutOfRange { index, classes: self.classes.len() },
                        ));
                    }
                }
                Task::Retrieval => {
                    if video.label_index.is_some() {
                        return Err(Error::schema(
                            &video.id,
                            SchemaProblem::TaskMismatch("retrieval video carries label_index"),
                        ));
                    }
                    let captions = video
                        .captions
                        .as_ref()
                        .ok_or_else(|| Error::schema(&video.id, SchemaProblem::TaskMismatch("missing captions")))?;
                    if video.split == SplitRole::Test && captions.is_empty() {
                        return Err(Error::schema(&video.id, SchemaProblem::MissingCaptions));
                    }
                    if captions.iter().any(|c| c.trim().is_empty()) {
                        return Err(Error::schema(&video.id, SchemaProblem::EmptyString));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn video(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn video_index(&self) -> BTreeMap<&str, &VideoEntry> {
        self.videos.iter().map(|v| (v.id.as_str(), v)).collect()
    }

    pub fn videos_in(&self, role: SplitRole) -> impl Iterator<Item = &VideoEntry> {
        self.videos.iter().filter(move |v| v.split == role)
    }

    /// Retrieval queries over the test videos, in manifest order.
    pub fn queries(&self) -> Vec<Query> {
        if self.task != Task::Retrieval {
            return Vec::new();
        }
        self.videos_in(SplitRole::Test)
            .flat_map(|v| {
                v.captions.iter().flatten().enumerate().map(move |(k, text)| Query {
                    id: query_id(&v.id, k),
                    video_id: v.id.clone(),
                    text: text.clone(),
                })
            })
            .collect()
    }

    /// Evaluation sample ids: test video ids (classification) or query ids (retrieval).
    pub fn test_sample_ids(&self) -> Vec<String> {
        match self.task {
            Task::Classification => self.videos_in(SplitRole::Test).map(|v| v.id.clone()).collect(),
            Task::Retrieval => self.queries().into_iter().map(|q| q.id).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        json::write_sorted(path, self)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = json::read(path)?;
    manifest.validate()?;
    Ok(manifest)
}
