//! Frame descriptions via a vision-language chat endpoint and concept
//! extraction via a text LLM endpoint, with response caching and resume.

pub mod cache;
pub mod postprocess;
pub mod prompts;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Concept, DatasetManifest, DescriptionStore, EntryKey, Payload};
use crate::endpoint::{ChatEndpoint, ChatMessage, ContentPart, Role};
use crate::error::{Error, Result};

pub use cache::ResponseCache;
pub use postprocess::postprocess_list;
pub use prompts::{LlmTask, PromptLibrary, Shot};

/// Concept to pull out of a frame description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extract {
    Objects,
    Activities,
}

/// A (video, frame, concept) key that could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub key: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct AnnotateOutcome {
    pub store: DescriptionStore,
    pub failures: Vec<Failure>,
}

impl AnnotateOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Bundles the two chat endpoints with prompts and the response cache.
pub struct Annotator<'a> {
    pub vlm: &'a dyn ChatEndpoint,
    pub llm: &'a dyn ChatEndpoint,
    pub prompts: &'a PromptLibrary,
    pub cache: &'a ResponseCache,
    pub max_in_flight: usize,
}

impl<'a> Annotator<'a> {
    /// Detailed frame description, returned verbatim.
    pub fn describe_frame(&self, frame: &Path) -> Result<String> {
        let bytes = fs::read(frame).map_err(|e| Error::Image { path: frame.to_owned(), message: e.to_string() })?;
        let format =
            image::guess_format(&bytes).map_err(|e| Error::Image { path: frame.to_owned(), message: e.to_string() })?;
        let key = cache::cache_key(&cache::content_hash(&bytes), &self.prompts.prompt_hash(None), self.vlm.model_id());
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(hit);
        }
        let message = ChatMessage {
            role: Role::User,
            content: vec![
                ContentPart::Text(self.prompts.vlm_describe.clone()),
                ContentPart::Image { mime: format.to_mime_type().to_owned(), data: bytes },
            ],
        };
        let reply = self.vlm.complete(&[message])?;
        self.cache.insert(&key, self.vlm.model_id(), &reply)?;
        Ok(reply)
    }

    fn llm_call(&self, task: LlmTask, input: &str) -> Result<String> {
        let key = cache::cache_key(
            &cache::content_hash(input.as_bytes()),
            &self.prompts.prompt_hash(Some(task)),
            self.llm.model_id(),
        );
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(hit);
        }
        let reply = self.llm.complete(&self.prompts.llm_messages(task, input))?;
        self.cache.insert(&key, self.llm.model_id(), &reply)?;
        Ok(reply)
    }

    pub fn extract_concept(&self, description: &str, concept: Extract) -> Result<Vec<String>> {
        if description.trim().is_empty() {
            return Err(Error::Precondition("cannot extract concepts from an empty description".into()));
        }
        Ok(match concept {
            Extract::Objects => postprocess_list(&self.llm_call(LlmTask::Objects, description)?),
            Extract::Activities => {
                postprocess::drop_no_activity(postprocess_list(&self.llm_call(LlmTask::Activities, description)?))
            }
        })
    }

    /// Object-free rewrite of an activity list. An empty list needs no call.
    pub fn derive_verbs(&self, activities: &[String]) -> Result<Vec<String>> {
        if activities.is_empty() {
            return Ok(Vec::new());
        }
        let input =
            activities.iter().enumerate().map(|(i, a)| format!("{}. {a}", i + 1)).collect::<Vec<_>>().join("\n");
        Ok(postprocess::drop_no_activity(postprocess_list(&self.llm_call(LlmTask::Verbs, &input)?)))
    }

    pub fn summarize_15w(&self, description: &str) -> Result<String> {
        if description.trim().is_empty() {
            return Err(Error::Precondition("cannot summarize an empty description".into()));
        }
        Ok(self.llm_call(LlmTask::Summary, description)?.trim().to_owned())
    }

    /// Fills `concepts` for every frame of every manifest video.
    ///
    /// Entries already in `existing` are kept and not requested again. Failed
    /// keys are collected in the outcome instead of aborting the run.
    pub fn annotate_dataset(
        &self,
        manifest: &DatasetManifest,
        concepts: &BTreeSet<Concept>,
        existing: Option<DescriptionStore>,
    ) -> Result<AnnotateOutcome> {
        let mut store = existing.unwrap_or_default();
        let available = |c: Concept| concepts.contains(&c) || store.has_concept(c);
        for concept in concepts {
            let dependency = match concept {
                Concept::ObjCompAct => None,
                Concept::Objects | Concept::Activities | Concept::ObjCompAct15w => Some(Concept::ObjCompAct),
                Concept::Verbs => Some(Concept::Activities),
            };
            if let Some(dep) = dependency.filter(|d| !available(*d)) {
                return Err(Error::Precondition(format!(
                    "`{concept}` requires `{dep}` to be requested or already present"
                )));
            }
        }

        let jobs: Vec<(&str, usize, &Path)> = manifest
            .videos
            .iter()
            .flat_map(|v| v.frames.iter().enumerate().map(move |(i, p)| (v.id.as_str(), i, p.as_path())))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_in_flight.max(1))
            .build()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let results: Vec<FrameResult> = pool.install(|| {
            jobs.par_iter()
                .map(|&(video, frame, path)| self.annotate_frame(&store, concepts, video, frame, path))
                .collect()
        });

        let mut failures = Vec::new();
        for result in results {
            for (key, payload) in result.entries {
                store.insert(&key.video_id, key.frame, key.concept, payload)?;
            }
            failures.extend(result.failures);
        }
        Ok(AnnotateOutcome { store, failures })
    }

    fn annotate_frame(
        &self,
        store: &DescriptionStore,
        concepts: &BTreeSet<Concept>,
        video: &str,
        frame: usize,
        path: &Path,
    ) -> FrameResult {
        let mut out = FrameResult::default();
        let key = |concept| EntryKey { video_id: video.to_owned(), frame, concept };
        let wanted = |c: Concept| concepts.contains(&c) && !store.contains(video, frame, c);

        let text_of = |c: Concept| match store.get(video, frame, c) {
            Some(Payload::Text(t)) => Some(t.clone()),
            _ => None,
        };
        let list_of = |c: Concept| match store.get(video, frame, c) {
            Some(Payload::List(l)) => Some(l.clone()),
            _ => None,
        };

        let needs_description = [Concept::ObjCompAct, Concept::Objects, Concept::Activities, Concept::ObjCompAct15w]
            .into_iter()
            .any(wanted);
        let description: std::result::Result<Option<String>, String> = if !needs_description {
            Ok(None)
        } else if let Some(d) = text_of(Concept::ObjCompAct) {
            Ok(Some(d))
        } else if concepts.contains(&Concept::ObjCompAct) {
            match self.describe_frame(path) {
                Ok(d) => {
                    out.entries.push((key(Concept::ObjCompAct), Payload::Text(d.clone())));
                    Ok(Some(d))
                }
                Err(e) => Err(e.to_string()),
            }
        } else {
            Err(Error::MissingEntry(key(Concept::ObjCompAct).to_string()).to_string())
        };
        if let Err(e) = &description {
            for c in [Concept::ObjCompAct, Concept::Objects, Concept::Activities, Concept::ObjCompAct15w] {
                if wanted(c) {
                    out.fail(key(c), e);
                }
            }
        }
        let description = description.ok().flatten();

        if let Some(d) = description.as_deref() {
            if wanted(Concept::Objects) {
                match self.extract_concept(d, Extract::Objects) {
                    Ok(list) => out.entries.push((key(Concept::Objects), Payload::List(list))),
                    Err(e) => out.fail(key(Concept::Objects), &e.to_string()),
                }
            }
            if wanted(Concept::ObjCompAct15w) {
                match self.summarize_15w(d) {
                    Ok(s) => out.entries.push((key(Concept::ObjCompAct15w), Payload::Text(s))),
                    Err(e) => out.fail(key(Concept::ObjCompAct15w), &e.to_string()),
                }
            }
        }

        let needs_activities = wanted(Concept::Activities) || wanted(Concept::Verbs);
        let mut activities = list_of(Concept::Activities);
        if needs_activities && activities.is_none() {
            if let Some(d) = description.as_deref().filter(|_| concepts.contains(&Concept::Activities)) {
                match self.extract_concept(d, Extract::Activities) {
                    Ok(list) => {
                        out.entries.push((key(Concept::Activities), Payload::List(list.clone())));
                        activities = Some(list);
                    }
                    Err(e) => out.fail(key(Concept::Activities), &e.to_string()),
                }
            }
        }

        if wanted(Concept::Verbs) {
            match &activities {
                Some(list) => match self.derive_verbs(list) {
                    Ok(verbs) => out.entries.push((key(Concept::Verbs), Payload::List(verbs))),
                    Err(e) => out.fail(key(Concept::Verbs), &e.to_string()),
                },
                None => out.fail(key(Concept::Verbs), &format!("activities unavailable for {}", key(Concept::Verbs))),
            }
        }
        out
    }
}

#[derive(Default)]
struct FrameResult {
    entries: Vec<(EntryKey, Payload)>,
    failures: Vec<Failure>,
}

impl FrameResult {
    fn fail(&mut self, key: EntryKey, error: &str) {
        self.failures.push(Failure { key: key.to_string(), error: error.to_owned() });
    }
}

/// Frame paths in manifests may be relative to the manifest's directory.
pub fn resolve_frames(manifest: &mut DatasetManifest, base: &Path) {
    for video in &mut manifest.videos {
        for frame in &mut video.frames {
            if frame.is_relative() {
                *frame = base.join(&*frame);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SplitRole, Task, VideoEntry};
    use crate::endpoint::{EchoChat, FixedChat};
    use crate::error::EndpointError;
    use std::path::PathBuf;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// 1x1 transparent PNG.
    const PNG: &[u8] = &[
        0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
        0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4, 0x89, 0x00, 0x00, 0x00,
        0x0d, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x00, 0x01, 0x00, 0x00, 0x05, 0x00, 0x01, 0x0d, 0x0a, 0x2d,
        0xb4, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
    ];

    struct Counting<E> {
        inner: E,
        calls: AtomicUsize,
    }

    impl<E: ChatEndpoint> Counting<E> {
        fn new(inner: E) -> Self {
            Counting { inner, calls: AtomicUsize::new(0) }
        }
        fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl<E: ChatEndpoint> ChatEndpoint for Counting<E> {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }
        fn complete(&self, m: &[ChatMessage]) -> std::result::Result<String, EndpointError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(m)
        }
    }

    struct Failing;
    impl ChatEndpoint for Failing {
        fn model_id(&self) -> &str {
            "down"
        }
        fn complete(&self, _: &[ChatMessage]) -> std::result::Result<String, EndpointError> {
            Err(EndpointError::Transport("unreachable".into()))
        }
    }

    fn fixed(reply: &str) -> FixedChat {
        FixedChat { model: "stub".into(), reply: reply.into() }
    }

    fn annotator<'a>(vlm: &'a dyn ChatEndpoint, llm: &'a dyn ChatEndpoint, cache: &'a ResponseCache) -> Annotator<'a> {
        static LIB: std::sync::OnceLock<PromptLibrary> = std::sync::OnceLock::new();
        Annotator { vlm, llm, prompts: LIB.get_or_init(PromptLibrary::standard), cache, max_in_flight: 4 }
    }

    fn png_frame(dir: &Path, name: &str, salt: u8) -> PathBuf {
        let p = dir.join(name);
        let mut bytes = PNG.to_vec();
        bytes.push(salt);
        fs::write(&p, bytes).unwrap();
        p
    }

    fn manifest(dir: &Path) -> DatasetManifest {
        let videos = (0..2)
            .map(|v| VideoEntry {
                id: format!("v{v}"),
                frames: (0..2).map(|f| png_frame(dir, &format!("v{v}_{f}.png"), (v * 2 + f) as u8)).collect(),
                label_index: Some(0),
                captions: None,
                split: SplitRole::Test,
            })
            .collect();
        DatasetManifest { name: "toy".into(), task: Task::Classification, classes: vec!["a".into()], videos }
    }

    #[test]
    fn describe_passes_reply_through_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let frame = png_frame(dir.path(), "f.png", 0);
        let vlm = Counting::new(fixed("DESC"));
        let llm = fixed("");
        let cache = ResponseCache::in_memory();
        let a = annotator(&vlm, &llm, &cache);
        assert_eq!(a.describe_frame(&frame).unwrap(), "DESC");
        assert_eq!(a.describe_frame(&frame).unwrap(), "DESC");
        assert_eq!(vlm.calls(), 1);
    }

    #[test]
    fn describe_rejects_non_images_and_reports_endpoint_failure() {
        let dir = tempfile::tempdir().unwrap();
        let text = dir.path().join("f.txt");
        fs::write(&text, "hello").unwrap();
        let cache = ResponseCache::in_memory();
        let llm = fixed("");
        let a = annotator(&Failing, &llm, &cache);
        assert!(matches!(a.describe_frame(&text), Err(Error::Image { .. })));
        assert!(matches!(a.describe_frame(&dir.path().join("missing.png")), Err(Error::Image { .. })));
        let frame = png_frame(dir.path(), "f.png", 0);
        assert!(matches!(a.describe_frame(&frame), Err(Error::Endpoint(_))));
    }

    #[test]
    fn extract_objects_and_activity_sentinel() {
        let cache = ResponseCache::in_memory();
        let objects = fixed("1. table (wooden)\n2. lamp");
        let a = annotator(&objects, &objects, &cache);
        assert_eq!(a.extract_concept("a room", Extract::Objects).unwrap(), vec!["table", "lamp"]);
        let none = fixed("No activity is visible.");
        let cache = ResponseCache::in_memory();
        let a = annotator(&none, &none, &cache);
        assert!(a.extract_concept("a room", Extract::Activities).unwrap().is_empty());
        assert!(matches!(a.extract_concept("  ", Extract::Objects), Err(Error::Precondition(_))));
    }

    #[test]
    fn verbs_short_circuit_and_passthrough() {
        let cache = ResponseCache::in_memory();
        let llm = Counting::new(fixed("1. holding something"));
        let a = annotator(&llm, &llm, &cache);
        assert!(a.derive_verbs(&[]).unwrap().is_empty());
        assert_eq!(llm.calls(), 0);
        assert_eq!(a.derive_verbs(&["holding a cup".into()]).unwrap(), vec!["holding something"]);
        let a = annotator(&Failing, &Failing, &cache);
        assert!(matches!(a.derive_verbs(&["jumping".into()]), Err(Error::Endpoint(_))));
    }

    #[test]
    fn summary_is_trimmed() {
        let cache = ResponseCache::in_memory();
        let llm = fixed("  short summary \n");
        let a = annotator(&llm, &llm, &cache);
        assert_eq!(a.summarize_15w("long text").unwrap(), "short summary");
        assert!(matches!(a.summarize_15w(""), Err(Error::Precondition(_))));
    }

    #[test]
    fn dataset_cardinality_and_idempotent_resume() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let vlm = Counting::new(EchoChat::new("vlm"));
        let llm = Counting::new(fixed("1. cup\n2. hand"));
        let all: BTreeSet<Concept> = Concept::ALL.into_iter().collect();
        let cache = ResponseCache::in_memory();
        let a = annotator(&vlm, &llm, &cache);
        let out = a.annotate_dataset(&m, &all, None).unwrap();
        assert!(out.is_complete(), "{:?}", out.failures);
        for c in Concept::ALL {
            assert_eq!(out.store.count_concept(c), 4, "{c}");
        }
        assert_eq!(out.store.len(), 2 * 2 * 5);
        let (v, l) = (vlm.calls(), llm.calls());
        assert_eq!(v, 4);

        // Resume with the finished store and a cold cache: nothing to request.
        let cold = ResponseCache::in_memory();
        let a = annotator(&vlm, &llm, &cold);
        let again = a.annotate_dataset(&m, &all, Some(out.store.clone())).unwrap();
        assert_eq!((vlm.calls(), llm.calls()), (v, l));
        assert_eq!(again.store, out.store);
    }

    #[test]
    fn verbs_need_activities() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let cache = ResponseCache::in_memory();
        let chat = fixed("x");
        let a = annotator(&chat, &chat, &cache);
        let only_verbs: BTreeSet<Concept> = [Concept::ObjCompAct, Concept::Verbs].into_iter().collect();
        assert!(matches!(a.annotate_dataset(&m, &only_verbs, None), Err(Error::Precondition(_))));
    }

    #[test]
    fn endpoint_failures_are_collected_per_key() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let cache = ResponseCache::in_memory();
        let llm = fixed("1. cup");
        let a = annotator(&Failing, &llm, &cache);
        let concepts: BTreeSet<Concept> = [Concept::ObjCompAct, Concept::Objects].into_iter().collect();
        let out = a.annotate_dataset(&m, &concepts, None).unwrap();
        assert_eq!(out.failures.len(), 8);
        assert!(out.store.is_empty());
    }
}
