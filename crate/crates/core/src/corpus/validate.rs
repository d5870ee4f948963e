use std::collections::BTreeMap;

use serde::Serialize;

use super::descriptions::{Concept, DescriptionStore, EntryKey};
use super::manifest::DatasetManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptReport {
    pub total_videos: usize,
    /// Videos with every frame present for this concept.
    pub complete_videos: usize,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub concepts: BTreeMap<Concept, ConceptReport>,
    /// Known concepts with no entries at all (not counted as missing).
    pub absent_concepts: Vec<Concept>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn total_missing(&self) -> usize {
        self.concepts.values().map(|c| c.missing.len()).sum()
    }

    pub fn missing_keys(&self) -> impl Iterator<Item = &str> {
        self.concepts.values().flat_map(|c| c.missing.iter().map(String::as_str))
    }
}

/// Reports completeness of every concept present in the store.
pub fn validate_store(store: &DescriptionStore, manifest: &DatasetManifest) -> ValidationReport {
    validate_concepts(store, manifest, &store.concepts())
}

/// Reports completeness of `concepts` over all manifest videos and frames.
pub fn validate_concepts(
    store: &DescriptionStore,
    manifest: &DatasetManifest,
    concepts: &[Concept],
) -> ValidationReport {
    let mut report = BTreeMap::new();
    for &concept in concepts {
        let mut missing = Vec::new();
        let mut complete_videos = 0;
        for video in &manifest.videos {
            let before = missing.len();
            for frame in 0..video.frame_count() {
                if !store.contains(&video.id, frame, concept) {
                    missing.push(EntryKey { video_id: video.id.clone(), frame, concept }.to_string());
                }
            }
            if missing.len() == before {
                complete_videos += 1;
            }
        }
        report.insert(concept, ConceptReport { total_videos: manifest.videos.len(), complete_videos, missing });
    }
    let absent_concepts =
        Concept::ALL.into_iter().filter(|c| !report.contains_key(c) && !store.has_concept(*c)).collect();
    ValidationReport { concepts: report, absent_concepts, warnings: store.warnings().to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::descriptions::Payload;
    use crate::corpus::manifest::{SplitRole, Task, VideoEntry};

    fn manifest() -> DatasetManifest {
        let video = |id: &str| VideoEntry {
            id: id.into(),
            frames: (0..4).map(|i| format!("{id}_{i}.png").into()).collect(),
            label_index: Some(0),
            captions: None,
            split: SplitRole::Test,
        };
        DatasetManifest {
            name: "toy".into(),
            task: Task::Classification,
            classes: vec!["a".into()],
            videos: vec![video("a"), video("b")],
        }
    }

    fn complete_store(m: &DatasetManifest) -> DescriptionStore {
        let mut s = DescriptionStore::new();
        for v in &m.videos {
            for f in 0..v.frame_count() {
                s.insert(&v.id, f, Concept::Objects, Payload::List(vec!["cup".into()])).unwrap();
                s.insert(&v.id, f, Concept::ObjCompAct, Payload::Text("a cup".into())).unwrap();
            }
        }
        s
    }

    #[test]
    fn complete_store_has_no_missing() {
        let m = manifest();
        let r = validate_store(&complete_store(&m), &m);
        assert_eq!(r.total_missing(), 0);
        assert_eq!(r.concepts[&Concept::Objects].complete_videos, 2);
    }

    #[test]
    fn missing_frame_is_named() {
        let m = manifest();
        let mut s = complete_store(&m);
        s.remove("b", 3, Concept::Objects);
        let r = validate_store(&s, &m);
        assert_eq!(r.total_missing(), 1);
        assert_eq!(r.missing_keys().next(), Some("b/frame 3/objects"));
        assert_eq!(r.concepts[&Concept::Objects].complete_videos, 1);
    }

    #[test]
    fn unknown_extras_are_warnings_only() {
        let m = manifest();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        complete_store(&m).write(&p).unwrap();
        let mut raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        raw["a"]["mood"] = serde_json::json!(["calm", "calm", "calm", "calm"]);
        std::fs::write(&p, raw.to_string()).unwrap();
        let s = crate::corpus::load_descriptions(&p, &m).unwrap();
        let r = validate_store(&s, &m);
        assert_eq!(r.total_missing(), 0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn removing_any_single_entry_gives_exactly_one_missing() {
        let m = manifest();
        let full = complete_store(&m);
        for v in &m.videos {
            for f in 0..v.frame_count() {
                for c in [Concept::Objects, Concept::ObjCompAct] {
                    let mut s = full.clone();
                    s.remove(&v.id, f, c).unwrap();
                    assert_eq!(validate_store(&s, &m).total_missing(), 1);
                }
            }
        }
    }
}
