//! Dataset model and file ingestion/emission: manifests, per-frame
//! descriptions, and debiased split files. All documents are UTF-8 JSON
//! written with sorted keys so identical inputs give identical bytes.

pub mod descriptions;
pub mod json;
pub mod manifest;
pub mod split;
pub mod validate;

pub use descriptions::{load_descriptions, Concept, DescriptionStore, EntryKey, Payload};
pub use manifest::{load_manifest, query_id, DatasetManifest, Query, SplitRole, Task, VideoEntry};
pub use split::{load_split, write_split, PanelInfo, RemovedSample, SplitFile, SplitType, PANEL_SIZE};
pub use validate::{validate_concepts, validate_store, ConceptReport, ValidationReport};
