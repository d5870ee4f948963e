//! Prompt texts for frame description and concept extraction.
//!
//! The templates are kept byte-for-byte in their published form, including
//! the `<s>[INST] ... [/INST]` wrapping and the `<INPUT ...>` placeholders.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::endpoint::{ChatMessage, Role};
use crate::error::{Error, Result};

pub const VLM_DESCRIBE: &str = "Describe the objects relationships in the photo.";
pub const EXTRACT_OBJECTS: &str = "<s>[INST] You are an intelligent chatbot designed to extract requested information from the textual description of an image. I will give you a textual description of the image. List ALL objects visible in the image. An object is anything that has a fixed shape or form, that you can touch or see. Name each object with one noun or a maximum of two words. Skip uncertain objects. The textual description of the image: \"<INPUT TEXTUAL DESCRIPTION>\" DO NOT PROVIDE ANY EXTRA INFORMATION ABOUT OBJECT PROPERTIES OR RELATIONSHIPS TO OTHER OBJECTS IN PARENTHESES. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. [/INST] Comprehensive enumerated list of objects:";
pub const EXTRACT_ACTIVITIES: &str = "<s>[INST] You are an intelligent chatbot designed to extract requested information from the textual description of an image. I will give you a textual description of the image. List all VISIBLE activities in the image. Activity is lively action or movement. Name each activity with a concise phrase SKIP possible or implied activities that are not visible. If no activity is visible, reply \"No activity is visible.\" DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. The textual description of the image: \"<INPUT TEXTUAL DESCRIPTION>\" [/INST] Comprehensive enumerated list of activities:";
pub const DERIVE_VERBS: &str = "<s>[INST] You are an intelligent chatbot designed to extract requested information from the textual description of an image. I will give you a list of visible activities of the image. Your task is to delete information about objects from this description. Replace all objects in this list with \"someone\" or \"something,\" but keep the activity. If you have to, you may delete some details, but delete ALL object information. If the input is \"No activity is visible.\", keep it \"No activity is visible.\" DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. The list of visible activities: \"<INPUT ACTIVITIES DESCRIPTION>\" [/INST] Post-processed enumerated list of activities:";
pub const SUMMARIZE_15W: &str = "<s>[INST] You are an intelligent chatbot designed to extract requested information from the textual description of an image. Summarize the following image description in 15 words: \"<INPUT TEXTUAL DESCRIPTION>\" [/INST] 15-words summary:";

pub const TEXT_PLACEHOLDER: &str = "<INPUT TEXTUAL DESCRIPTION>";
pub const ACTIVITIES_PLACEHOLDER: &str = "<INPUT ACTIVITIES DESCRIPTION>";

/// Reply the activity prompt asks for when nothing is happening.
pub const NO_ACTIVITY: &str = "No activity is visible.";

pub const OBJECT_SHOTS: usize = 3;
pub const ACTIVITY_SHOTS: usize = 3;
pub const VERB_SHOTS: usize = 5;

const DEFAULT_EXEMPLARS: &str = include_str!("../../prompts/exemplars.toml");

/// One in-context example: the prompt input and the expected reply.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Shot {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct ExemplarFile {
    objects: Vec<Shot>,
    activities: Vec<Shot>,
    verbs: Vec<Shot>,
}

/// LLM prompt selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmTask {
    Objects,
    Activities,
    Verbs,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLibrary {
    pub vlm_describe: String,
    pub extract_objects: String,
    pub extract_activities: String,
    pub derive_verbs: String,
    pub summarize_15w: String,
    pub object_shots: Vec<Shot>,
    pub activity_shots: Vec<Shot>,
    pub verb_shots: Vec<Shot>,
}

impl PromptLibrary {
    /// Published prompts with the bundled exemplars.
    pub fn standard() -> Self {
        let shots = parse_exemplars(DEFAULT_EXEMPLARS, "<bundled exemplars>").expect("bundled exemplars are valid");
        Self::with_exemplars(shots)
    }

    /// Published prompts with exemplars read from a TOML file.
    pub fn from_exemplar_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::with_exemplars(parse_exemplars(&text, &path.display().to_string())?))
    }

    fn with_exemplars(shots: ExemplarFile) -> Self {
        PromptLibrary {
            vlm_describe: VLM_DESCRIBE.to_owned(),
            extract_objects: EXTRACT_OBJECTS.to_owned(),
            extract_activities: EXTRACT_ACTIVITIES.to_owned(),
            derive_verbs: DERIVE_VERBS.to_owned(),
            summarize_15w: SUMMARIZE_15W.to_owned(),
            object_shots: shots.objects,
            activity_shots: shots.activities,
            verb_shots: shots.verbs,
        }
    }

    fn template(&self, task: LlmTask) -> (&str, &'static str, &[Shot]) {
        match task {
            LlmTask::Objects => (&self.extract_objects, TEXT_PLACEHOLDER, &self.object_shots),
            LlmTask::Activities => (&self.extract_activities, TEXT_PLACEHOLDER, &self.activity_shots),
            LlmTask::Verbs => (&self.derive_verbs, ACTIVITIES_PLACEHOLDER, &self.verb_shots),
            LlmTask::Summary => (&self.summarize_15w, TEXT_PLACEHOLDER, &[]),
        }
    }

    /// Chat messages for an LLM task: exemplar turns, then the rendered prompt.
    pub fn llm_messages(&self, task: LlmTask, input: &str) -> Vec<ChatMessage> {
        let (template, placeholder, shots) = self.template(task);
        let mut messages = Vec::with_capacity(2 * shots.len() + 1);
        for shot in shots {
            messages.push(ChatMessage::text(Role::User, template.replace(placeholder, &shot.input)));
            messages.push(ChatMessage::text(Role::Assistant, shot.output.clone()));
        }
        messages.push(ChatMessage::text(Role::User, template.replace(placeholder, input)));
        messages
    }

    /// Hash of everything about a task's prompt except its input.
    pub fn prompt_hash(&self, task: Option<LlmTask>) -> String {
        let mut h = Sha256::new();
        match task {
            None => h.update(self.vlm_describe.as_bytes()),
            Some(task) => {
                let (template, _, shots) = self.template(task);
                h.update((template.len() as u64).to_le_bytes());
                h.update(template.as_bytes());
                for shot in shots {
                    for part in [&shot.input, &shot.output] {
                        h.update((part.len() as u64).to_le_bytes());
                        h.update(part.as_bytes());
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::standard()
    }
}

fn parse_exemplars(text: &str, origin: &str) -> Result<ExemplarFile> {
    let file: ExemplarFile = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
    for (name, shots, expected) in [
        ("objects", &file.objects, OBJECT_SHOTS),
        ("activities", &file.activities, ACTIVITY_SHOTS),
        ("verbs", &file.verbs, VERB_SHOTS),
    ] {
        if shots.len() != expected {
            return Err(Error::parse(origin, format!("expected {expected} {name} exemplars, found {}", shots.len())));
        }
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::ContentPart;

    #[test]
    fn bundled_exemplar_counts() {
        let lib = PromptLibrary::standard();
        assert_eq!(lib.object_shots.len(), 3);
        assert_eq!(lib.activity_shots.len(), 3);
        assert_eq!(lib.verb_shots.len(), 5);
    }

    #[test]
    fn wrong_exemplar_count_is_rejected() {
        let text = DEFAULT_EXEMPLARS.replacen("[[verbs]]", "[[objects]]", 1);
        assert!(parse_exemplars(&text, "x").is_err());
    }

    #[test]
    fn messages_interleave_shots_before_input() {
        let lib = PromptLibrary::standard();
        let msgs = lib.llm_messages(LlmTask::Verbs, "1. holding a cup");
        assert_eq!(msgs.len(), 11);
        assert_eq!(msgs[1].role, Role::Assistant);
        let ContentPart::Text(last) = &msgs[10].content[0] else { panic!() };
        assert!(last.contains("The list of visible activities: \"1. holding a cup\" [/INST]"));
        assert!(!last.contains(ACTIVITIES_PLACEHOLDER));
    }

    #[test]
    fn summary_has_no_shots() {
        let msgs = PromptLibrary::standard().llm_messages(LlmTask::Summary, "d");
        assert_eq!(msgs.len(), 1);
    }

    #[test]
    fn prompt_hash_depends_on_exemplars() {
        let a = PromptLibrary::standard();
        let mut b = a.clone();
        b.object_shots[0].output.push('!');
        assert_ne!(a.prompt_hash(Some(LlmTask::Objects)), b.prompt_hash(Some(LlmTask::Objects)));
        assert_eq!(a.prompt_hash(Some(LlmTask::Verbs)), b.prompt_hash(Some(LlmTask::Verbs)));
    }
}
